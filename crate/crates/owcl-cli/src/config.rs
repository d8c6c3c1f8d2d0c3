//! Experiment configuration: a flat `key = value` text format with
//! comments, full defaulting, and validation that reports every violation
//! at once.

use owcl::datagen::GenSpec;
use owcl::memory::BufferPolicy;
use owcl::score::Strategy;
use owcl::train::{TrainConfig, TrainerKind};
use std::fmt;
use std::path::{Path, PathBuf};

/// One trainer/scorer pair of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodSpec {
    pub trainer: TrainerKind,
    pub strategy: Strategy,
}

impl MethodSpec {
    pub fn name(&self) -> String {
        format!("{}+{}", self.trainer.name(), self.strategy.name())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let (t, s) = text
            .split_once('+')
            .ok_or_else(|| format!("method `{text}` must look like trainer+strategy"))?;
        Ok(MethodSpec {
            trainer: TrainerKind::from_name(t.trim()).map_err(|e| e.to_string())?,
            strategy: Strategy::from_name(s.trim()).map_err(|e| e.to_string())?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Load this dataset file instead of generating one.
    pub dataset_path: Option<PathBuf>,
    pub gen: GenSpec,
    pub increments: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodSpec>,
    /// Template; the runner sets `trainer` per method.
    pub train: TrainConfig,
    /// Per-class trailing fraction used as the test split; defaults to the
    /// fraction implied by the generator counts.
    pub test_fraction: f64,
    pub dump_scores: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let gen = GenSpec::default_benchmark();
        let test_fraction = gen.test_fraction();
        ExperimentConfig {
            dataset_path: None,
            gen,
            increments: vec![8, 4, 2],
            seeds: vec![1, 2, 3, 4, 5],
            methods: default_methods(),
            train: TrainConfig::desk_default(TrainerKind::ModalityDistill),
            test_fraction,
            dump_scores: false,
        }
    }
}

/// The default grid: the modality-aware framework plus post-hoc scorers
/// over the replay baselines.
pub fn default_methods() -> Vec<MethodSpec> {
    [
        "modality_distill+adaptive",
        "er+msp",
        "er+max_logit",
        "er+entropy",
        "fused_distill+max_logit",
        "fused_distill+energy",
    ]
    .iter()
    .map(|m| MethodSpec::parse(m).expect("builtin methods parse"))
    .collect()
}

/// The module-ablation preset: full framework, scoring-only ablation,
/// training-only ablation, and plain replay with max-logit.
pub fn ablation_methods() -> Vec<MethodSpec> {
    [
        "modality_distill+adaptive",
        "modality_distill+main_only",
        "er+adaptive",
        "er+max_logit",
    ]
    .iter()
    .map(|m| MethodSpec::parse(m).expect("builtin methods parse"))
    .collect()
}

/// The scoring-strategy preset: one trainer, four combining strategies.
pub fn strategy_methods() -> Vec<MethodSpec> {
    [
        "modality_distill+adaptive",
        "modality_distill+uniform_sum",
        "modality_distill+uniform_average",
        "modality_distill+main_only",
    ]
    .iter()
    .map(|m| MethodSpec::parse(m).expect("builtin methods parse"))
    .collect()
}

/// All validation problems found in a config, reported together.
#[derive(Debug)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problems):", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str, errors: &mut Vec<String>) -> Vec<T> {
    let mut out = Vec::new();
    for item in value.split(',') {
        match item.trim().parse::<T>() {
            Ok(v) => out.push(v),
            Err(_) => errors.push(format!("{key}: invalid entry `{}`", item.trim())),
        }
    }
    out
}

fn parse_scalar<T: std::str::FromStr>(
    value: &str,
    key: &str,
    errors: &mut Vec<String>,
) -> Option<T> {
    match value.trim().parse::<T>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(format!("{key}: invalid value `{}`", value.trim()));
            None
        }
    }
}

/// Parses config text. Unknown keys, type errors and semantic violations
/// are all collected; the error lists every one of them.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut config = ExperimentConfig::default();
    let mut errors = Vec::new();
    let mut test_fraction_set = false;

    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected `key = value`, found `{line}`", no + 1));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "dataset" => config.dataset_path = Some(PathBuf::from(value)),
            "classes" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.gen.num_classes = v;
                }
            }
            "train_per_class" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.gen.train_per_class = v;
                }
            }
            "test_per_class" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.gen.test_per_class = v;
                }
            }
            "modality_dims" => config.gen.modality_dims = parse_list(value, key, &mut errors),
            "informativeness" => config.gen.informativeness = parse_list(value, key, &mut errors),
            "dominance" => config.gen.dominance = parse_list(value, key, &mut errors),
            "spread" => config.gen.spread = parse_list(value, key, &mut errors),
            "mean_scale" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.gen.mean_scale = v;
                }
            }
            "degrade_prob" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.gen.degrade_prob = v;
                }
            }
            "degrade_factor" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.gen.degrade_factor = v;
                }
            }
            "data_seed" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.gen.seed = v;
                }
            }
            "increments" => config.increments = parse_list(value, key, &mut errors),
            "seeds" => config.seeds = parse_list(value, key, &mut errors),
            "methods" => {
                let mut methods = Vec::new();
                for item in value.split(',') {
                    match MethodSpec::parse(item.trim()) {
                        Ok(m) => methods.push(m),
                        Err(e) => errors.push(format!("methods: {e}")),
                    }
                }
                if !methods.is_empty() {
                    config.methods = methods;
                }
            }
            "lambda" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.lambda = v;
                }
            }
            "beta" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.beta = v;
                }
            }
            "epochs" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.epochs = v;
                }
            }
            "batch_size" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.batch_size = v;
                }
            }
            "replay_batch" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.replay_batch = v;
                }
            }
            "learning_rate" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.learning_rate = v;
                }
            }
            "rmsprop_learning_rate" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.rmsprop_learning_rate = v;
                }
            }
            "rmsprop_decay" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.rmsprop_decay = v;
                }
            }
            "rmsprop_epsilon" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.rmsprop_epsilon = v;
                }
            }
            "decay_epochs" => config.train.decay_epochs = parse_list(value, key, &mut errors),
            "decay_factor" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.decay_factor = v;
                }
            }
            "buffer_capacity" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.train.buffer_capacity = v;
                }
            }
            "buffer_policy" => match BufferPolicy::from_name(value) {
                Ok(p) => config.train.buffer_policy = p,
                Err(e) => errors.push(format!("buffer_policy: {e}")),
            },
            "test_fraction" => {
                if let Some(v) = parse_scalar(value, key, &mut errors) {
                    config.test_fraction = v;
                    test_fraction_set = true;
                }
            }
            "dump_scores" => match value {
                "true" | "1" => config.dump_scores = true,
                "false" | "0" => config.dump_scores = false,
                other => errors.push(format!("dump_scores: expected true/false, found `{other}`")),
            },
            other => errors.push(format!("line {}: unknown key `{other}`", no + 1)),
        }
    }

    if !test_fraction_set {
        config.test_fraction = config.gen.test_fraction();
    }

    validate(&config, &mut errors);
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError { errors })
    }
}

fn validate(config: &ExperimentConfig, errors: &mut Vec<String>) {
    if let Err(e) = config.gen.validate() {
        errors.push(format!("dataset spec: {e}"));
    }
    if config.increments.is_empty() {
        errors.push("increments: at least one setting required".into());
    }
    for &inc in &config.increments {
        if inc == 0 || config.gen.num_classes == 0 || !config.gen.num_classes.is_multiple_of(inc) {
            errors.push(format!(
                "increments: {inc} does not divide {} classes",
                config.gen.num_classes
            ));
        }
    }
    if config.seeds.is_empty() {
        errors.push("seeds: at least one seed required".into());
    }
    let mut sorted = config.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != config.seeds.len() {
        errors.push("seeds: entries must be distinct".into());
    }
    if config.methods.is_empty() {
        errors.push("methods: at least one trainer+strategy pair required".into());
    }
    if let Err(e) = config.train.validate() {
        errors.push(format!("training: {e}"));
    }
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        errors.push(format!(
            "test_fraction: {} must lie in (0, 1)",
            config.test_fraction
        ));
    }
}

/// Reads and validates a config file; an empty or missing-keys file yields
/// the full defaults.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        errors: vec![format!("cannot read {}: {e}", path.display())],
    })?;
    parse_config(&text)
}

/// Canonical text form of a resolved config; also the hash input.
pub fn resolved_text(config: &ExperimentConfig) -> String {
    let list = |v: &[f64]| -> String {
        v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
    };
    let ilist = |v: &[usize]| -> String {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
    };
    let mut out = String::new();
    if let Some(p) = &config.dataset_path {
        out.push_str(&format!("dataset = {}\n", p.display()));
    }
    out.push_str(&format!("classes = {}\n", config.gen.num_classes));
    out.push_str(&format!("train_per_class = {}\n", config.gen.train_per_class));
    out.push_str(&format!("test_per_class = {}\n", config.gen.test_per_class));
    out.push_str(&format!("modality_dims = {}\n", ilist(&config.gen.modality_dims)));
    out.push_str(&format!("informativeness = {}\n", list(&config.gen.informativeness)));
    out.push_str(&format!("dominance = {}\n", list(&config.gen.dominance)));
    out.push_str(&format!("spread = {}\n", list(&config.gen.spread)));
    out.push_str(&format!("mean_scale = {}\n", config.gen.mean_scale));
    out.push_str(&format!("degrade_prob = {}\n", config.gen.degrade_prob));
    out.push_str(&format!("degrade_factor = {}\n", config.gen.degrade_factor));
    out.push_str(&format!("data_seed = {}\n", config.gen.seed));
    out.push_str(&format!("increments = {}\n", ilist(&config.increments)));
    out.push_str(&format!(
        "seeds = {}\n",
        config.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
    ));
    out.push_str(&format!(
        "methods = {}\n",
        config.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
    ));
    out.push_str(&format!("lambda = {}\n", config.train.lambda));
    out.push_str(&format!("beta = {}\n", config.train.beta));
    out.push_str(&format!("epochs = {}\n", config.train.epochs));
    out.push_str(&format!("batch_size = {}\n", config.train.batch_size));
    out.push_str(&format!("replay_batch = {}\n", config.train.replay_batch));
    out.push_str(&format!("learning_rate = {}\n", config.train.learning_rate));
    out.push_str(&format!(
        "rmsprop_learning_rate = {}\n",
        config.train.rmsprop_learning_rate
    ));
    out.push_str(&format!("rmsprop_decay = {}\n", config.train.rmsprop_decay));
    out.push_str(&format!("rmsprop_epsilon = {}\n", config.train.rmsprop_epsilon));
    out.push_str(&format!("decay_epochs = {}\n", ilist(&config.train.decay_epochs)));
    out.push_str(&format!("decay_factor = {}\n", config.train.decay_factor));
    out.push_str(&format!("buffer_capacity = {}\n", config.train.buffer_capacity));
    out.push_str(&format!("buffer_policy = {}\n", config.train.buffer_policy.name()));
    out.push_str(&format!("test_fraction = {}\n", config.test_fraction));
    out.push_str(&format!("dump_scores = {}\n", config.dump_scores));
    out
}

/// FNV-1a hash of the resolved config; identifies a run setup.
pub fn config_hash(config: &ExperimentConfig) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in resolved_text(config).bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}
