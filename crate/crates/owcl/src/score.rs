//! Novelty scoring.
//!
//! The adaptive strategy estimates how familiar an input looks to each
//! modality head via its energy, normalizes against the replay buffer's
//! energy statistics, softmax-weights the modality logits by the resulting
//! reliabilities, adds them to the main logits and takes the max combined
//! logit as the score. Fixed-weight variants and the usual post-hoc
//! baselines (MSP, MaxLogit, Entropy, Energy) share the same interface.
//!
//! All strategies return scores where higher means "more known", so one ROC
//! routine serves every method.

use crate::datagen::MultimodalSample;
use crate::error::{Error, Result};
use crate::memory::{EnergyStats, STD_FLOOR};
use crate::model::MultimodalNet;
use crate::numcore::{log_sum_exp, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Reliability-weighted modality logits added to the main logits.
    Adaptive,
    /// Main logits only (all modality weights zero).
    MainOnly,
    /// Every modality weighted 1.
    UniformSum,
    /// Every modality weighted 1/|M|.
    UniformAverage,
    /// Max softmax probability of the main logits.
    Msp,
    /// Max raw main logit.
    MaxLogit,
    /// Negative predictive entropy of the main logits.
    Entropy,
    /// Negative energy of the main logits.
    Energy,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Adaptive => "adaptive",
            Strategy::MainOnly => "main_only",
            Strategy::UniformSum => "uniform_sum",
            Strategy::UniformAverage => "uniform_average",
            Strategy::Msp => "msp",
            Strategy::MaxLogit => "max_logit",
            Strategy::Entropy => "entropy",
            Strategy::Energy => "energy",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "adaptive" => Ok(Strategy::Adaptive),
            "main_only" => Ok(Strategy::MainOnly),
            "uniform_sum" => Ok(Strategy::UniformSum),
            "uniform_average" => Ok(Strategy::UniformAverage),
            "msp" => Ok(Strategy::Msp),
            "max_logit" => Ok(Strategy::MaxLogit),
            "entropy" => Ok(Strategy::Entropy),
            "energy" => Ok(Strategy::Energy),
            other => Err(Error::Input(format!("unknown scoring strategy `{other}`"))),
        }
    }

    pub fn all() -> [Strategy; 8] {
        [
            Strategy::Adaptive,
            Strategy::MainOnly,
            Strategy::UniformSum,
            Strategy::UniformAverage,
            Strategy::Msp,
            Strategy::MaxLogit,
            Strategy::Entropy,
            Strategy::Energy,
        ]
    }

    /// Whether the strategy reads the modality heads at all.
    pub fn uses_modality_logits(self) -> bool {
        matches!(
            self,
            Strategy::Adaptive | Strategy::UniformSum | Strategy::UniformAverage
        )
    }
}

/// Frozen scoring inputs: an immutable net snapshot, the buffer's energy
/// statistics (required by the adaptive strategy) and the strategy itself.
#[derive(Debug, Clone, Copy)]
pub struct ScoringContext<'a> {
    pub net: &'a MultimodalNet,
    pub stats: Option<&'a EnergyStats>,
    pub strategy: Strategy,
}

/// A score plus the per-modality diagnostics the adaptive path produced.
#[derive(Debug, Clone)]
pub struct NoveltyScore {
    /// Higher means more known.
    pub s: f64,
    pub energies: Option<Vec<f64>>,
    pub reliabilities: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub combined: Option<Vec<f64>>,
}

/// Energy of a logit vector: -log sum exp(z).
pub fn energy(logits: &[f64]) -> Result<f64> {
    Ok(-log_sum_exp(logits)?)
}

/// Reliability of a modality for one sample: its negated, buffer-normalized
/// energy. Higher means the modality finds the input more familiar.
pub fn reliability(energy: f64, mean: f64, std: f64) -> Result<f64> {
    if !(std >= STD_FLOOR) {
        return Err(Error::Domain(format!(
            "energy std {std} below floor {STD_FLOOR}"
        )));
    }
    Ok(-(energy - mean) / std)
}

/// Modality weights for the combining strategies. Strategies that do not
/// combine modality logits are rejected.
pub fn modality_weights(reliabilities: &[f64], strategy: Strategy) -> Result<Vec<f64>> {
    if reliabilities.is_empty() {
        return Err(Error::Input("no modalities".into()));
    }
    match strategy {
        Strategy::Adaptive => softmax(reliabilities),
        Strategy::MainOnly => Ok(vec![0.0; reliabilities.len()]),
        Strategy::UniformSum => Ok(vec![1.0; reliabilities.len()]),
        Strategy::UniformAverage => Ok(vec![1.0 / reliabilities.len() as f64; reliabilities.len()]),
        other => Err(Error::Input(format!(
            "strategy {} does not define modality weights",
            other.name()
        ))),
    }
}

/// Combined logits: `z_main + sum_m alpha_m * z_m`, elementwise over classes.
pub fn combine_logits(
    main_logits: &[f64],
    modality_logits: &[Vec<f64>],
    alphas: &[f64],
) -> Result<Vec<f64>> {
    if modality_logits.len() != alphas.len() {
        return Err(Error::shape(
            "combine_logits",
            format!("{} modalities", modality_logits.len()),
            format!("{} alphas", alphas.len()),
        ));
    }
    let mut combined = main_logits.to_vec();
    for (z, &a) in modality_logits.iter().zip(alphas) {
        if z.len() != main_logits.len() {
            return Err(Error::shape(
                "combine_logits",
                format!("main len {}", main_logits.len()),
                format!("modality len {}", z.len()),
            ));
        }
        for (c, &v) in combined.iter_mut().zip(z) {
            *c += a * v;
        }
    }
    Ok(combined)
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Scores one sample under the context's strategy.
pub fn score(ctx: &ScoringContext, sample: &MultimodalSample) -> Result<NoveltyScore> {
    let out = ctx.net.forward(sample)?;
    match ctx.strategy {
        Strategy::Msp => {
            let p = softmax(&out.main_logits)?;
            Ok(plain(max_of(&p)))
        }
        Strategy::MaxLogit => Ok(plain(max_of(&out.main_logits))),
        Strategy::Entropy => {
            let p = softmax(&out.main_logits)?;
            let h: f64 = p
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| -v * v.ln())
                .sum();
            Ok(plain(-h))
        }
        Strategy::Energy => Ok(plain(-energy(&out.main_logits)?)),
        Strategy::MainOnly => {
            // Zero weights: the combined logits are exactly the main logits.
            let alphas = vec![0.0; ctx.net.modality_count()];
            Ok(NoveltyScore {
                s: max_of(&out.main_logits),
                energies: None,
                reliabilities: None,
                alphas: Some(alphas),
                combined: Some(out.main_logits.clone()),
            })
        }
        Strategy::UniformSum | Strategy::UniformAverage => {
            let energies: Vec<f64> = out
                .modality_logits
                .iter()
                .map(|z| energy(z))
                .collect::<Result<_>>()?;
            let alphas = modality_weights(&vec![0.0; energies.len()], ctx.strategy)?;
            let combined = combine_logits(&out.main_logits, &out.modality_logits, &alphas)?;
            Ok(NoveltyScore {
                s: max_of(&combined),
                energies: Some(energies),
                reliabilities: None,
                alphas: Some(alphas),
                combined: Some(combined),
            })
        }
        Strategy::Adaptive => {
            let stats = ctx.stats.ok_or_else(|| {
                Error::State("adaptive scoring needs buffer energy statistics".into())
            })?;
            if stats.modality_count() != ctx.net.modality_count() {
                return Err(Error::shape(
                    "score",
                    format!("net modalities {}", ctx.net.modality_count()),
                    format!("stats modalities {}", stats.modality_count()),
                ));
            }
            let energies: Vec<f64> = out
                .modality_logits
                .iter()
                .map(|z| energy(z))
                .collect::<Result<_>>()?;
            let reliabilities: Vec<f64> = energies
                .iter()
                .enumerate()
                .map(|(m, &e)| reliability(e, stats.mean[m], stats.std[m]))
                .collect::<Result<_>>()?;
            let alphas = modality_weights(&reliabilities, Strategy::Adaptive)?;
            let combined = combine_logits(&out.main_logits, &out.modality_logits, &alphas)?;
            Ok(NoveltyScore {
                s: max_of(&combined),
                energies: Some(energies),
                reliabilities: Some(reliabilities),
                alphas: Some(alphas),
                combined: Some(combined),
            })
        }
    }
}

fn plain(s: f64) -> NoveltyScore {
    NoveltyScore {
        s,
        energies: None,
        reliabilities: None,
        alphas: None,
        combined: None,
    }
}

/// Known-class prediction: argmax of the main logits. Novelty weighting is
/// never applied to classification.
pub fn predict(net: &MultimodalNet, sample: &MultimodalSample) -> Result<usize> {
    let out = net.forward(sample)?;
    Ok(out
        .main_logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap())
}
