//! Synthetic multimodal class-incremental benchmarks.
//!
//! Classes are Gaussian clusters per modality. A modality's informativeness
//! is the fraction of class pairs it separates: unseparated pairs share that
//! modality's cluster mean, so those classes can only be told apart through
//! other modalities. A per-modality dominance factor scales feature norms to
//! reproduce one modality drowning out the rest in a fused classifier.

use crate::error::{Error, Result};
use crate::numcore::Rng;
use std::fmt::Write as _;
use std::path::Path;

/// One labeled observation: one feature vector per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSample {
    pub id: u64,
    pub label: usize,
    pub features: Vec<Vec<f64>>,
}

/// Generator parameters. `generate` is a pure function of this value.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub modality_dims: Vec<usize>,
    /// Fraction of class pairs each modality separates, in [0, 1].
    pub informativeness: Vec<f64>,
    /// Per-modality dominance (>= 0): scales the modality's feature norms
    /// and weights its chance of being a sample's guaranteed-clean reading.
    pub dominance: Vec<f64>,
    /// Per-modality isotropic cluster spread (>= 0).
    pub spread: Vec<f64>,
    /// Cluster means share the norm mean_scale * sqrt(dim).
    pub mean_scale: f64,
    /// Chance that a modality reading is degraded for a given sample; one
    /// uniformly chosen modality per sample always stays clean.
    pub degrade_prob: f64,
    /// Degraded readings keep their noise but their class signal is
    /// attenuated by this factor (>= 1), burying it in the noise floor.
    pub degrade_factor: f64,
    pub seed: u64,
}

impl GenSpec {
    /// The desk-scale default: 16 classes over 3 modalities. Modality 0 is
    /// dominant (double feature norm); every modality separates all classes
    /// but any reading may be degraded per sample, so per-sample modality
    /// reliability genuinely varies.
    pub fn default_benchmark() -> Self {
        GenSpec {
            num_classes: 16,
            train_per_class: 400,
            test_per_class: 40,
            modality_dims: vec![16, 8, 8],
            informativeness: vec![1.0, 1.0, 1.0],
            dominance: vec![2.0, 1.0, 1.0],
            spread: vec![1.0, 1.0, 1.0],
            mean_scale: 1.5,
            degrade_prob: 0.5,
            degrade_factor: 5.0,
            seed: 7,
        }
    }

    /// The default benchmark with degradation frequent enough that shared
    /// reliability dips dominate score correlations; used to measure which
    /// modality the main logits track.
    pub fn dominance_probe() -> Self {
        GenSpec {
            degrade_prob: 0.8,
            ..Self::default_benchmark()
        }
    }

    /// Test-split fraction implied by the per-class sample counts.
    pub fn test_fraction(&self) -> f64 {
        self.test_per_class as f64 / (self.train_per_class + self.test_per_class) as f64
    }

    pub fn modality_count(&self) -> usize {
        self.modality_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Spec("need at least 2 classes".into()));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Spec("train and test samples per class must be >= 1".into()));
        }
        if self.modality_dims.is_empty() {
            return Err(Error::Spec("need at least one modality".into()));
        }
        if self.modality_dims.contains(&0) {
            return Err(Error::Spec("modality dims must be >= 1".into()));
        }
        let m = self.modality_count();
        for (name, v) in [
            ("informativeness", &self.informativeness),
            ("dominance", &self.dominance),
            ("spread", &self.spread),
        ] {
            if v.len() != m {
                return Err(Error::Spec(format!(
                    "{name} has {} entries but there are {m} modalities",
                    v.len()
                )));
            }
        }
        if self.informativeness.iter().any(|&i| !(0.0..=1.0).contains(&i)) {
            return Err(Error::Spec("informativeness must lie in [0, 1]".into()));
        }
        if self.dominance.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::Spec("dominance must be >= 0".into()));
        }
        if self.dominance.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Spec("at least one modality needs dominance > 0".into()));
        }
        if self.spread.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::Spec("spread must be >= 0".into()));
        }
        if !(self.mean_scale > 0.0) {
            return Err(Error::Spec("mean_scale must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.degrade_prob) {
            return Err(Error::Spec("degrade_prob must lie in [0, 1]".into()));
        }
        if !(self.degrade_factor >= 1.0) {
            return Err(Error::Spec("degrade_factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// A full generated dataset; exactly the content of the on-disk format.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub modality_dims: Vec<usize>,
    pub samples: Vec<MultimodalSample>,
}

/// One task of a class-incremental stream. Labels inside are stream labels
/// (positions in the learning order), so task t covers the contiguous range
/// `t*increment .. (t+1)*increment`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub classes: Vec<usize>,
    pub train: Vec<MultimodalSample>,
    pub test: Vec<MultimodalSample>,
}

/// Ordered class-incremental partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub increment: usize,
    pub total_classes: usize,
    pub modality_dims: Vec<usize>,
    /// Original class ids in learning order; stream label = index here.
    pub class_order: Vec<usize>,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Number of classes known after finishing task `t` (0-based).
    pub fn classes_after(&self, t: usize) -> usize {
        (t + 1) * self.increment
    }
}

// Stream labels for deriving independent rng sequences from one seed.
const STREAM_GROUPS: u32 = 1;
const STREAM_MEANS: u32 = 2;
const STREAM_NOISE: u32 = 3;
const STREAM_SPLIT: u32 = 4;

fn stream(tag: u32, idx: u32) -> u64 {
    ((tag as u64) << 32) | idx as u64
}

/// Rounds to the 9 significant digits the file format carries, so that
/// save/load round-trips are bitwise lossless.
fn quantize(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float reparses")
}

fn pairs(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Partitions `num_classes` into groups whose internal pair count is as
/// close as possible to `target_unseparated` (exact when a partition with
/// that pair count exists). Returns the class -> group assignment over a
/// seeded class permutation.
fn partition_for_informativeness(
    num_classes: usize,
    informativeness: f64,
    rng: &mut Rng,
) -> Vec<usize> {
    let total = pairs(num_classes);
    let target = ((1.0 - informativeness) * total as f64).round() as usize;

    // dp[n][u]: n classes can form groups with exactly u internal pairs.
    let mut dp = vec![vec![false; total + 1]; num_classes + 1];
    dp[0][0] = true;
    for n in 1..=num_classes {
        for u in 0..=total {
            for s in 1..=n {
                let p = pairs(s);
                if p <= u && dp[n - s][u - p] {
                    dp[n][u] = true;
                    break;
                }
            }
        }
    }
    // Nearest feasible pair count, preferring fewer unseparated pairs.
    let achieved = (0..=total)
        .filter(|&u| dp[num_classes][u])
        .min_by_key(|&u| (u.abs_diff(target), u))
        .expect("u = 0 is always feasible");

    // Reconstruct group sizes, largest feasible group first.
    let mut sizes = Vec::new();
    let (mut n, mut u) = (num_classes, achieved);
    while n > 0 {
        let s = (1..=n)
            .rev()
            .find(|&s| pairs(s) <= u && dp[n - s][u - pairs(s)])
            .expect("dp admits a reconstruction");
        sizes.push(s);
        n -= s;
        u -= pairs(s);
    }

    let mut order: Vec<usize> = (0..num_classes).collect();
    rng.shuffle(&mut order);
    let mut assignment = vec![0usize; num_classes];
    let mut next = 0;
    for (gid, &size) in sizes.iter().enumerate() {
        for &class in &order[next..next + size] {
            assignment[class] = gid;
        }
        next += size;
    }
    assignment
}

/// Class -> group assignment per modality, plus the derived feasibility
/// check that every class pair is separated by at least one modality.
pub fn modality_partitions(spec: &GenSpec) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    let parts: Vec<Vec<usize>> = (0..spec.modality_count())
        .map(|m| {
            let mut rng = Rng::derive(spec.seed, stream(STREAM_GROUPS, m as u32));
            partition_for_informativeness(spec.num_classes, spec.informativeness[m], &mut rng)
        })
        .collect();
    for a in 0..spec.num_classes {
        for b in a + 1..spec.num_classes {
            if parts.iter().all(|p| p[a] == p[b]) {
                return Err(Error::Spec(format!(
                    "classes {a} and {b} are separated by no modality; raise informativeness"
                )));
            }
        }
    }
    Ok(parts)
}

/// Fraction of class pairs a modality's partition separates.
pub fn separated_fraction(partition: &[usize]) -> f64 {
    let n = partition.len();
    let mut sep = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            if partition[a] != partition[b] {
                sep += 1;
            }
        }
    }
    sep as f64 / pairs(n) as f64
}

/// Draws the full dataset. Per class the train samples come first, then the
/// test samples; ids are sequential.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    let partitions = modality_partitions(spec)?;

    // One mean vector per group per modality, all at the common radius
    // mean_scale * sqrt(dim). Directions are orthonormalized (Gram-Schmidt
    // over random Gaussians) while the dimension allows, so distinct groups
    // activate disjoint feature directions; any surplus groups fall back to
    // plain unit directions.
    let group_means: Vec<Vec<Vec<f64>>> = (0..spec.modality_count())
        .map(|m| {
            let mut rng = Rng::derive(spec.seed, stream(STREAM_MEANS, m as u32));
            let groups = partitions[m].iter().max().unwrap() + 1;
            let dim = spec.modality_dims[m];
            let radius = spec.mean_scale * (dim as f64).sqrt();
            let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(groups);
            for g in 0..groups {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.normal(0.0, 1.0)).collect();
                if g < dim {
                    // Remove components along the directions already chosen.
                    for prev in &dirs[..g.min(dim)] {
                        let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                        for (x, p) in v.iter_mut().zip(prev) {
                            *x -= dot * p;
                        }
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                for x in &mut v {
                    *x /= norm;
                }
                dirs.push(v);
            }
            dirs.into_iter()
                .map(|v| v.into_iter().map(|x| x * radius).collect())
                .collect()
        })
        .collect();

    let mut noise = Rng::derive(spec.seed, stream(STREAM_NOISE, 0));
    let mut samples = Vec::with_capacity(spec.num_classes * (spec.train_per_class + spec.test_per_class));
    let mut id = 0u64;
    for class in 0..spec.num_classes {
        for _ in 0..spec.train_per_class + spec.test_per_class {
            // Per-sample modality quality: each modality may be degraded,
            // except one guaranteed-clean modality drawn with probability
            // proportional to dominance, so dominant modalities are the
            // usually-reliable ones.
            let total_dom: f64 = spec.dominance.iter().sum();
            let mut pick = noise.next_f64() * total_dom;
            let mut clean = spec.modality_count() - 1;
            for (m, &d) in spec.dominance.iter().enumerate() {
                if pick < d {
                    clean = m;
                    break;
                }
                pick -= d;
            }
            let degraded: Vec<bool> = (0..spec.modality_count())
                .map(|m| m != clean && noise.next_f64() < spec.degrade_prob)
                .collect();
            let features = (0..spec.modality_count())
                .map(|m| {
                    let mean = &group_means[m][partitions[m][class]];
                    let gain = if degraded[m] { 1.0 / spec.degrade_factor } else { 1.0 };
                    mean.iter()
                        .map(|&mu| {
                            quantize(
                                (mu * gain + spec.spread[m] * noise.normal(0.0, 1.0))
                                    * spec.dominance[m],
                            )
                        })
                        .collect()
                })
                .collect();
            samples.push(MultimodalSample {
                id,
                label: class,
                features,
            });
            id += 1;
        }
    }
    Ok(Dataset {
        num_classes: spec.num_classes,
        modality_dims: spec.modality_dims.clone(),
        samples,
    })
}

/// Splits a dataset into a class-incremental task stream.
///
/// Class order is shuffled by `seed` and chopped into tasks of `increment`
/// new classes. Per class, the trailing `test_fraction` of its samples (in
/// id order) become the test split. Labels are remapped to learning order.
pub fn split_tasks(
    dataset: &Dataset,
    increment: usize,
    seed: u64,
    test_fraction: f64,
) -> Result<TaskStream> {
    if increment == 0 || !dataset.num_classes.is_multiple_of(increment) {
        return Err(Error::Spec(format!(
            "increment {increment} does not divide {} classes",
            dataset.num_classes
        )));
    }
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::Spec(format!(
            "test_fraction {test_fraction} must lie in (0, 1)"
        )));
    }

    let mut class_order: Vec<usize> = (0..dataset.num_classes).collect();
    let mut rng = Rng::derive(seed, stream(STREAM_SPLIT, 0));
    rng.shuffle(&mut class_order);
    let mut stream_label = vec![0usize; dataset.num_classes];
    for (pos, &orig) in class_order.iter().enumerate() {
        stream_label[orig] = pos;
    }

    // Per original class, samples in id order.
    let mut per_class: Vec<Vec<&MultimodalSample>> = vec![Vec::new(); dataset.num_classes];
    for s in &dataset.samples {
        if s.label >= dataset.num_classes {
            return Err(Error::Input(format!(
                "sample {} has label {} outside {} classes",
                s.id, s.label, dataset.num_classes
            )));
        }
        per_class[s.label].push(s);
    }
    if let Some(empty) = per_class.iter().position(Vec::is_empty) {
        return Err(Error::Input(format!("class {empty} has no samples")));
    }

    let num_tasks = dataset.num_classes / increment;
    let mut tasks = Vec::with_capacity(num_tasks);
    for t in 0..num_tasks {
        let orig_classes = &class_order[t * increment..(t + 1) * increment];
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &orig in orig_classes {
            let all = &per_class[orig];
            let n_test = ((all.len() as f64) * test_fraction).round() as usize;
            let n_test = n_test.clamp(1, all.len() - 1);
            let split = all.len() - n_test;
            for (i, s) in all.iter().enumerate() {
                let remapped = MultimodalSample {
                    id: s.id,
                    label: stream_label[s.label],
                    features: s.features.clone(),
                };
                if i < split {
                    train.push(remapped);
                } else {
                    test.push(remapped);
                }
            }
        }
        tasks.push(Task {
            classes: (t * increment..(t + 1) * increment).collect(),
            train,
            test,
        });
    }

    Ok(TaskStream {
        increment,
        total_classes: dataset.num_classes,
        modality_dims: dataset.modality_dims.clone(),
        class_order,
        tasks,
    })
}

fn write_sample_line(out: &mut String, s: &MultimodalSample) {
    write!(out, "id={} label={}", s.id, s.label).unwrap();
    for (m, feat) in s.features.iter().enumerate() {
        write!(out, " | m{m}:").unwrap();
        for v in feat {
            write!(out, " {v:.8e}").unwrap();
        }
    }
    out.push('\n');
}

fn parse_kv<'a>(token: &'a str, key: &str, line: usize) -> Result<&'a str> {
    token
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `{key}=...`, found `{token}`"),
        })
}

fn parse_usize(text: &str, what: &str, line: usize) -> Result<usize> {
    text.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} `{text}`"),
    })
}

fn parse_sample_line(
    text: &str,
    line: usize,
    num_classes: usize,
    modality_dims: &[usize],
) -> Result<MultimodalSample> {
    let mut parts = text.split(" | ");
    let head = parts.next().unwrap_or("");
    let mut head_tokens = head.split_whitespace();
    let id_tok = head_tokens.next().ok_or(Error::Parse {
        line,
        msg: "empty sample line".into(),
    })?;
    let id: u64 = parse_kv(id_tok, "id", line)?.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid id in `{id_tok}`"),
    })?;
    let label_tok = head_tokens.next().ok_or(Error::Parse {
        line,
        msg: "missing label".into(),
    })?;
    let label = parse_usize(parse_kv(label_tok, "label", line)?, "label", line)?;
    if label >= num_classes {
        return Err(Error::Parse {
            line,
            msg: format!("label {label} outside {num_classes} classes"),
        });
    }

    let mut features: Vec<Vec<f64>> = vec![Vec::new(); modality_dims.len()];
    let mut seen = vec![false; modality_dims.len()];
    for part in parts {
        let (tag, values) = part.split_once(':').ok_or(Error::Parse {
            line,
            msg: format!("malformed modality block `{part}`"),
        })?;
        let m: usize = tag
            .trim()
            .strip_prefix('m')
            .and_then(|d| d.parse().ok())
            .ok_or(Error::Parse {
                line,
                msg: format!("malformed modality tag `{tag}`"),
            })?;
        if m >= modality_dims.len() {
            return Err(Error::Parse {
                line,
                msg: format!("unknown modality id m{m} (file declares {})", modality_dims.len()),
            });
        }
        if seen[m] {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate modality m{m}"),
            });
        }
        seen[m] = true;
        let vals: Vec<f64> = values
            .split_whitespace()
            .map(|v| {
                v.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("invalid real `{v}` in m{m}"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != modality_dims[m] {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "modality m{m} has {} values, expected {}",
                    vals.len(),
                    modality_dims[m]
                ),
            });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                msg: format!("non-finite value in m{m}"),
            });
        }
        features[m] = vals;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Parse {
            line,
            msg: format!("missing modality m{missing}"),
        });
    }
    Ok(MultimodalSample { id, label, features })
}

fn parse_dims(text: &str, line: usize) -> Result<Vec<usize>> {
    text.split(',')
        .map(|d| parse_usize(d.trim(), "dimension", line))
        .collect()
}

impl Dataset {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("OWCLDATA v1\n");
        let dims: Vec<String> = self.modality_dims.iter().map(|d| d.to_string()).collect();
        writeln!(
            out,
            "classes={} modalities={} dims={}",
            self.num_classes,
            self.modality_dims.len(),
            dims.join(",")
        )
        .unwrap();
        for s in &self.samples {
            write_sample_line(&mut out, s);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, version) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        if version.trim() != "OWCLDATA v1" {
            return Err(Error::Version {
                expected: "OWCLDATA v1".into(),
                found: version.trim().into(),
            });
        }
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 2,
            msg: "missing header line".into(),
        })?;
        let mut classes = None;
        let mut modalities = None;
        let mut dims = None;
        for token in header.split_whitespace() {
            if let Some(v) = token.strip_prefix("classes=") {
                classes = Some(parse_usize(v, "class count", 2)?);
            } else if let Some(v) = token.strip_prefix("modalities=") {
                modalities = Some(parse_usize(v, "modality count", 2)?);
            } else if let Some(v) = token.strip_prefix("dims=") {
                dims = Some(parse_dims(v, 2)?);
            } else {
                return Err(Error::Parse {
                    line: 2,
                    msg: format!("unexpected header token `{token}`"),
                });
            }
        }
        let num_classes = classes.ok_or(Error::Parse {
            line: 2,
            msg: "missing classes=".into(),
        })?;
        let modalities = modalities.ok_or(Error::Parse {
            line: 2,
            msg: "missing modalities=".into(),
        })?;
        let modality_dims = dims.ok_or(Error::Parse {
            line: 2,
            msg: "missing dims=".into(),
        })?;
        if modality_dims.len() != modalities {
            return Err(Error::Parse {
                line: 2,
                msg: format!(
                    "dims lists {} entries but modalities={modalities}",
                    modality_dims.len()
                ),
            });
        }

        let mut samples = Vec::new();
        for (idx, text) in lines {
            if text.trim().is_empty() {
                continue;
            }
            samples.push(parse_sample_line(text, idx + 1, num_classes, &modality_dims)?);
        }
        Ok(Dataset {
            num_classes,
            modality_dims,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

impl TaskStream {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("OWCLSTREAM v1\n");
        let dims: Vec<String> = self.modality_dims.iter().map(|d| d.to_string()).collect();
        writeln!(
            out,
            "classes={} modalities={} dims={} increment={}",
            self.total_classes,
            self.modality_dims.len(),
            dims.join(","),
            self.increment
        )
        .unwrap();
        let order: Vec<String> = self.class_order.iter().map(|c| c.to_string()).collect();
        writeln!(out, "class_order={}", order.join(",")).unwrap();
        for (t, task) in self.tasks.iter().enumerate() {
            writeln!(out, "task={} train={} test={}", t, task.train.len(), task.test.len()).unwrap();
            for s in task.train.iter().chain(&task.test) {
                write_sample_line(&mut out, s);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let (_, version) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        if version.trim() != "OWCLSTREAM v1" {
            return Err(Error::Version {
                expected: "OWCLSTREAM v1".into(),
                found: version.trim().into(),
            });
        }
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 2,
            msg: "missing header".into(),
        })?;
        let mut classes = None;
        let mut dims = None;
        let mut increment = None;
        for token in header.split_whitespace() {
            if let Some(v) = token.strip_prefix("classes=") {
                classes = Some(parse_usize(v, "class count", 2)?);
            } else if let Some(v) = token.strip_prefix("modalities=") {
                parse_usize(v, "modality count", 2)?;
            } else if let Some(v) = token.strip_prefix("dims=") {
                dims = Some(parse_dims(v, 2)?);
            } else if let Some(v) = token.strip_prefix("increment=") {
                increment = Some(parse_usize(v, "increment", 2)?);
            }
        }
        let total_classes = classes.ok_or(Error::Parse {
            line: 2,
            msg: "missing classes=".into(),
        })?;
        let modality_dims = dims.ok_or(Error::Parse {
            line: 2,
            msg: "missing dims=".into(),
        })?;
        let increment = increment.ok_or(Error::Parse {
            line: 2,
            msg: "missing increment=".into(),
        })?;

        let (order_line_no, order_line) = lines.next().ok_or(Error::Parse {
            line: 3,
            msg: "missing class_order".into(),
        })?;
        let class_order: Vec<usize> = order_line
            .strip_prefix("class_order=")
            .ok_or(Error::Parse {
                line: order_line_no + 1,
                msg: "missing class_order=".into(),
            })?
            .split(',')
            .map(|c| parse_usize(c.trim(), "class id", order_line_no + 1))
            .collect::<Result<_>>()?;

        let mut tasks = Vec::new();
        while let Some((line_no, text)) = lines.next() {
            if text.trim().is_empty() {
                continue;
            }
            let mut train_n = None;
            let mut test_n = None;
            for token in text.split_whitespace() {
                if let Some(v) = token.strip_prefix("train=") {
                    train_n = Some(parse_usize(v, "train count", line_no + 1)?);
                } else if let Some(v) = token.strip_prefix("test=") {
                    test_n = Some(parse_usize(v, "test count", line_no + 1)?);
                } else if token.strip_prefix("task=").is_none() {
                    return Err(Error::Parse {
                        line: line_no + 1,
                        msg: format!("unexpected token `{token}` in task header"),
                    });
                }
            }
            let (train_n, test_n) = match (train_n, test_n) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Parse {
                        line: line_no + 1,
                        msg: "task header needs train= and test=".into(),
                    })
                }
            };
            let t = tasks.len();
            let mut read = |n: usize| -> Result<Vec<MultimodalSample>> {
                (0..n)
                    .map(|_| {
                        let (no, text) = lines.next().ok_or(Error::Parse {
                            line: 0,
                            msg: "file truncated inside task block".into(),
                        })?;
                        parse_sample_line(text, no + 1, total_classes, &modality_dims)
                    })
                    .collect()
            };
            let train = read(train_n)?;
            let test = read(test_n)?;
            tasks.push(Task {
                classes: (t * increment..(t + 1) * increment).collect(),
                train,
                test,
            });
        }

        Ok(TaskStream {
            increment,
            total_classes,
            modality_dims,
            class_order,
            tasks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}


#[cfg(test)]
mod probe_tests {
    use super::*;
    use crate::numcore::{cross_entropy, Activation, DenseLayer, LayerGrads};

    /// A modality with zero informativeness carries no class signal: a
    /// linear probe trained on it alone stays at chance.
    #[test]
    fn uninformative_modality_probe_is_at_chance() {
        let spec = GenSpec {
            num_classes: 4,
            train_per_class: 80,
            test_per_class: 40,
            modality_dims: vec![6, 5],
            informativeness: vec![1.0, 0.0],
            dominance: vec![1.0, 1.0],
            spread: vec![0.8, 0.8],
            mean_scale: 2.0,
            degrade_prob: 0.0,
            degrade_factor: 1.0,
            seed: 21,
        };
        let data = generate(&spec).unwrap();
        let modality = 1usize;

        // Per class: first 80 samples train, last 40 test (generation order).
        let mut train: Vec<&MultimodalSample> = Vec::new();
        let mut test: Vec<&MultimodalSample> = Vec::new();
        let mut seen = vec![0usize; spec.num_classes];
        for s in &data.samples {
            if seen[s.label] < spec.train_per_class {
                train.push(s);
            } else {
                test.push(s);
            }
            seen[s.label] += 1;
        }

        let mut rng = Rng::new(5);
        let mut probe = DenseLayer::new(spec.modality_dims[modality], spec.num_classes, Activation::Identity, &mut rng);
        for _ in 0..200 {
            let mut grads = LayerGrads::zeros_like(&probe);
            for s in &train {
                let (pre, out) = probe.forward_traced(&s.features[modality]).unwrap();
                let (_, d_out) = cross_entropy(&out, s.label).unwrap();
                let scaled: Vec<f64> = d_out.iter().map(|g| g / train.len() as f64).collect();
                probe
                    .backward(&s.features[modality], &pre, &scaled, &mut grads, None)
                    .unwrap();
            }
            for (w, g) in probe.weights.data_mut().iter_mut().zip(grads.d_weights.data()) {
                *w -= 0.5 * g;
            }
            for (b, g) in probe.bias.iter_mut().zip(&grads.d_bias) {
                *b -= 0.5 * g;
            }
        }

        let correct = test
            .iter()
            .filter(|s| {
                let out = probe.forward(&s.features[modality]).unwrap();
                let pred = out
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                pred == s.label
            })
            .count();
        let accuracy = correct as f64 / test.len() as f64;
        let chance = 1.0 / spec.num_classes as f64;
        assert!(
            (accuracy - chance).abs() <= 0.05,
            "probe accuracy {accuracy} vs chance {chance}"
        );
    }
}
