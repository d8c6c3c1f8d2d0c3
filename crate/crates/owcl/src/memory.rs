//! Capacity-bounded replay buffer.
//!
//! Exemplars carry the modality and fused logits recorded by the net
//! snapshot at insertion time; those stored logits are never rewritten.
//! The buffer also owns the per-modality energy statistics that normalize
//! reliability scores at inference.

use crate::datagen::MultimodalSample;
use crate::error::{Error, Result};
use crate::model::MultimodalNet;
use crate::numcore::Rng;
use crate::score::energy;
use crate::textio::{parse_floats, write_floats};
use std::fmt::Write as _;
use std::path::Path;

pub const DEFAULT_CAPACITY: usize = 320;

/// Floor applied to the per-modality energy standard deviation so the
/// reliability normalization never divides by (near) zero.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Exemplar {
    pub sample: MultimodalSample,
    /// Modality-head logits recorded when the exemplar entered the buffer.
    pub stored_modality_logits: Vec<Vec<f64>>,
    /// Fused logits recorded at the same moment (for fused-logit replay).
    pub stored_fused_logits: Vec<f64>,
    pub insertion_task: usize,
}

/// Per-modality energy mean and (floored) population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: usize,
}

impl EnergyStats {
    /// Two-pass mean / population-std per modality, std floored at
    /// [`STD_FLOOR`].
    pub fn from_energies(energies: &[Vec<f64>]) -> Result<Self> {
        if energies.is_empty() || energies[0].is_empty() {
            return Err(Error::State("no energies to aggregate".into()));
        }
        let n = energies[0].len() as f64;
        let mut mean = Vec::with_capacity(energies.len());
        let mut std = Vec::with_capacity(energies.len());
        for per_modality in energies {
            let mu = per_modality.iter().sum::<f64>() / n;
            let var = per_modality.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / n;
            mean.push(mu);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(EnergyStats {
            mean,
            std,
            count: energies[0].len(),
        })
    }

    pub fn modality_count(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferPolicy {
    RandomBalanced,
    Reservoir,
    Herding,
}

impl BufferPolicy {
    pub fn name(self) -> &'static str {
        match self {
            BufferPolicy::RandomBalanced => "random_balanced",
            BufferPolicy::Reservoir => "reservoir",
            BufferPolicy::Herding => "herding",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "random_balanced" => Ok(BufferPolicy::RandomBalanced),
            "reservoir" => Ok(BufferPolicy::Reservoir),
            "herding" => Ok(BufferPolicy::Herding),
            other => Err(Error::Input(format!("unknown buffer policy `{other}`"))),
        }
    }
}

/// Outcome summary of an `insert_task` call.
#[derive(Debug, Clone)]
pub struct InsertOutcome {
    pub classes_seen: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    pub capacity: usize,
    pub policy: BufferPolicy,
    exemplars: Vec<Exemplar>,
    stats: Option<EnergyStats>,
    /// Total samples streamed past the reservoir policy so far.
    reservoir_seen: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, policy: BufferPolicy) -> Self {
        ReplayBuffer {
            capacity,
            policy,
            exemplars: Vec::new(),
            stats: None,
            reservoir_seen: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn stats(&self) -> Option<&EnergyStats> {
        self.stats.as_ref()
    }

    fn make_exemplar(
        sample: &MultimodalSample,
        snapshot: &MultimodalNet,
        task_index: usize,
    ) -> Result<Exemplar> {
        let out = snapshot.forward(sample)?;
        Ok(Exemplar {
            sample: sample.clone(),
            stored_modality_logits: out.modality_logits,
            stored_fused_logits: out.main_logits,
            insertion_task: task_index,
        })
    }

    /// Folds a task's training data into the buffer.
    ///
    /// Balanced policies rebalance to `capacity / classes_seen` exemplars
    /// per class (first classes get the remainder); the reservoir policy
    /// streams samples through classic reservoir sampling. New exemplars
    /// record the snapshot's logits; surviving exemplars keep theirs.
    pub fn insert_task(
        &mut self,
        train: &[MultimodalSample],
        snapshot: &MultimodalNet,
        task_index: usize,
        rng: &mut Rng,
    ) -> Result<InsertOutcome> {
        if train.is_empty() {
            return Err(Error::Input("insert_task with empty task data".into()));
        }
        let max_label = train.iter().map(|s| s.label).max().unwrap();
        if max_label >= snapshot.current_classes() {
            return Err(Error::Input(format!(
                "snapshot covers {} classes but task has label {max_label}",
                snapshot.current_classes()
            )));
        }

        if self.policy == BufferPolicy::Reservoir {
            for s in train {
                self.reservoir_seen += 1;
                if self.exemplars.len() < self.capacity {
                    self.exemplars.push(Self::make_exemplar(s, snapshot, task_index)?);
                } else {
                    let j = rng.below(self.reservoir_seen) as usize;
                    if j < self.capacity {
                        self.exemplars[j] = Self::make_exemplar(s, snapshot, task_index)?;
                    }
                }
            }
            let classes_seen = self.class_ids().len();
            return Ok(InsertOutcome {
                classes_seen,
                warning: None,
            });
        }

        // Balanced policies: per-class quotas over all classes seen so far.
        let mut classes: Vec<usize> = self.class_ids();
        let mut new_classes: Vec<usize> = train
            .iter()
            .map(|s| s.label)
            .filter(|l| !classes.contains(l))
            .collect();
        new_classes.sort_unstable();
        new_classes.dedup();
        classes.extend(&new_classes);
        classes.sort_unstable();

        let n_classes = classes.len();
        let base = self.capacity / n_classes;
        let extra = self.capacity % n_classes;
        let quota =
            |idx: usize| -> usize { base + usize::from(idx < extra) };

        let warning = if base == 0 {
            Some(format!(
                "capacity {} below classes seen {n_classes}; some classes keep no exemplars",
                self.capacity
            ))
        } else {
            None
        };

        let mut rebuilt: Vec<Exemplar> = Vec::with_capacity(self.capacity);
        for (idx, &class) in classes.iter().enumerate() {
            let q = quota(idx);
            if new_classes.contains(&class) {
                let candidates: Vec<&MultimodalSample> =
                    train.iter().filter(|s| s.label == class).collect();
                let keep = q.min(candidates.len());
                let chosen: Vec<usize> = match self.policy {
                    BufferPolicy::RandomBalanced => {
                        let mut idxs = rng.choose_indices(candidates.len(), keep);
                        idxs.sort_unstable();
                        idxs
                    }
                    BufferPolicy::Herding => herding_order(&candidates, snapshot, keep)?,
                    BufferPolicy::Reservoir => unreachable!(),
                };
                for i in chosen {
                    rebuilt.push(Self::make_exemplar(candidates[i], snapshot, task_index)?);
                }
            } else {
                // Existing class: shrink without touching stored logits.
                let members: Vec<Exemplar> = self
                    .exemplars
                    .iter()
                    .filter(|e| e.sample.label == class)
                    .cloned()
                    .collect();
                let keep = q.min(members.len());
                match self.policy {
                    BufferPolicy::RandomBalanced => {
                        let mut idxs = rng.choose_indices(members.len(), keep);
                        idxs.sort_unstable();
                        for i in idxs {
                            rebuilt.push(members[i].clone());
                        }
                    }
                    // Herding keeps the selection-priority prefix.
                    BufferPolicy::Herding => rebuilt.extend(members.into_iter().take(keep)),
                    BufferPolicy::Reservoir => unreachable!(),
                }
            }
        }
        self.exemplars = rebuilt;
        Ok(InsertOutcome {
            classes_seen: n_classes,
            warning,
        })
    }

    fn class_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.exemplars.iter().map(|e| e.sample.label).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Recomputes per-modality energy statistics over the buffer with the
    /// given snapshot and freezes them on the buffer.
    pub fn refresh_stats(&mut self, snapshot: &MultimodalNet) -> Result<EnergyStats> {
        if self.exemplars.is_empty() {
            return Err(Error::State("refresh_stats on an empty buffer".into()));
        }
        let m_count = snapshot.modality_count();
        let mut energies = vec![Vec::with_capacity(self.exemplars.len()); m_count];
        for e in &self.exemplars {
            let out = snapshot.forward(&e.sample)?;
            for (m, z) in out.modality_logits.iter().enumerate() {
                energies[m].push(energy(z)?);
            }
        }
        let stats = EnergyStats::from_energies(&energies)?;
        self.stats = Some(stats.clone());
        Ok(stats)
    }

    /// Draws `k` exemplars: without replacement when `k <= len`, with
    /// replacement otherwise. An empty buffer yields an empty batch.
    pub fn sample_batch(&self, k: usize, rng: &mut Rng) -> Vec<&Exemplar> {
        if self.exemplars.is_empty() || k == 0 {
            return Vec::new();
        }
        if k <= self.exemplars.len() {
            rng.choose_indices(self.exemplars.len(), k)
                .into_iter()
                .map(|i| &self.exemplars[i])
                .collect()
        } else {
            (0..k)
                .map(|_| &self.exemplars[rng.below(self.exemplars.len() as u64) as usize])
                .collect()
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("OWCLBUF v1\n");
        writeln!(
            out,
            "capacity={} policy={} reservoir_seen={} count={} stats={}",
            self.capacity,
            self.policy.name(),
            self.reservoir_seen,
            self.exemplars.len(),
            usize::from(self.stats.is_some())
        )
        .unwrap();
        if let Some(stats) = &self.stats {
            writeln!(out, "stats_count={}", stats.count).unwrap();
            out.push_str("stats_mean: ");
            write_floats(&mut out, &stats.mean);
            out.push_str("stats_std: ");
            write_floats(&mut out, &stats.std);
        }
        for e in &self.exemplars {
            writeln!(
                out,
                "exemplar id={} label={} task={} modalities={}",
                e.sample.id,
                e.sample.label,
                e.insertion_task,
                e.sample.features.len()
            )
            .unwrap();
            for (m, f) in e.sample.features.iter().enumerate() {
                write!(out, "f{m}: ").unwrap();
                write_floats(&mut out, f);
            }
            for (m, z) in e.stored_modality_logits.iter().enumerate() {
                write!(out, "z{m}: ").unwrap();
                write_floats(&mut out, z);
            }
            out.push_str("zf: ");
            write_floats(&mut out, &e.stored_fused_logits);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, version) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty buffer dump".into(),
        })?;
        if version.trim() != "OWCLBUF v1" {
            return Err(Error::Version {
                expected: "OWCLBUF v1".into(),
                found: version.trim().into(),
            });
        }
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 2,
            msg: "missing buffer header".into(),
        })?;
        let mut capacity = None;
        let mut policy = None;
        let mut seen = None;
        let mut count = None;
        let mut has_stats = false;
        for token in header.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or(Error::Parse {
                line: 2,
                msg: format!("malformed token `{token}`"),
            })?;
            match key {
                "capacity" => capacity = value.parse().ok(),
                "policy" => policy = Some(BufferPolicy::from_name(value)?),
                "reservoir_seen" => seen = value.parse().ok(),
                "count" => count = value.parse().ok(),
                "stats" => has_stats = value == "1",
                other => {
                    return Err(Error::Parse {
                        line: 2,
                        msg: format!("unknown buffer key `{other}`"),
                    })
                }
            }
        }
        let capacity = capacity.ok_or(Error::Parse { line: 2, msg: "missing capacity".into() })?;
        let policy = policy.ok_or(Error::Parse { line: 2, msg: "missing policy".into() })?;
        let reservoir_seen = seen.ok_or(Error::Parse { line: 2, msg: "missing reservoir_seen".into() })?;
        let count: usize = count.ok_or(Error::Parse { line: 2, msg: "missing count".into() })?;

        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(no, t)| (no + 1, t))
                .ok_or(Error::Parse {
                    line: 0,
                    msg: format!("buffer dump truncated before {what}"),
                })
        };

        let stats = if has_stats {
            let (no, t) = next("stats_count")?;
            let stats_count: usize = t
                .strip_prefix("stats_count=")
                .and_then(|v| v.parse().ok())
                .ok_or(Error::Parse { line: no, msg: "bad stats_count".into() })?;
            let (no, t) = next("stats_mean")?;
            let mean_text = t.strip_prefix("stats_mean: ").ok_or(Error::Parse {
                line: no,
                msg: "missing stats_mean".into(),
            })?;
            let mean = mean_text
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse { line: no, msg: format!("bad real `{v}`") }))
                .collect::<Result<Vec<_>>>()?;
            let (no, t) = next("stats_std")?;
            let std_text = t.strip_prefix("stats_std: ").ok_or(Error::Parse {
                line: no,
                msg: "missing stats_std".into(),
            })?;
            let std = parse_floats(std_text, no, mean.len())?;
            Some(EnergyStats {
                mean,
                std,
                count: stats_count,
            })
        } else {
            None
        };

        let mut exemplars = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, t) = next("exemplar header")?;
            let mut id = None;
            let mut label = None;
            let mut task = None;
            let mut modalities = None;
            for token in t.split_whitespace() {
                if token == "exemplar" {
                    continue;
                }
                let (key, value) = token.split_once('=').ok_or(Error::Parse {
                    line: no,
                    msg: format!("malformed token `{token}`"),
                })?;
                match key {
                    "id" => id = value.parse().ok(),
                    "label" => label = value.parse().ok(),
                    "task" => task = value.parse().ok(),
                    "modalities" => modalities = value.parse().ok(),
                    _ => {}
                }
            }
            let m_count: usize =
                modalities.ok_or(Error::Parse { line: no, msg: "missing modalities".into() })?;
            let mut block = |prefix: String| -> Result<Vec<f64>> {
                let (no, t) = next(&prefix)?;
                let body = t.strip_prefix(&format!("{prefix}: ")).ok_or(Error::Parse {
                    line: no,
                    msg: format!("expected `{prefix}:` block"),
                })?;
                body.split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| Error::Parse { line: no, msg: format!("bad real `{v}`") }))
                    .collect()
            };
            let mut features = Vec::with_capacity(m_count);
            for m in 0..m_count {
                features.push(block(format!("f{m}"))?);
            }
            let mut stored = Vec::with_capacity(m_count);
            for m in 0..m_count {
                stored.push(block(format!("z{m}"))?);
            }
            let fused = block("zf".into())?;
            exemplars.push(Exemplar {
                sample: MultimodalSample {
                    id: id.ok_or(Error::Parse { line: no, msg: "missing id".into() })?,
                    label: label.ok_or(Error::Parse { line: no, msg: "missing label".into() })?,
                    features,
                },
                stored_modality_logits: stored,
                stored_fused_logits: fused,
                insertion_task: task.ok_or(Error::Parse { line: no, msg: "missing task".into() })?,
            });
        }
        Ok(ReplayBuffer {
            capacity,
            policy,
            exemplars,
            stats,
            reservoir_seen,
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

/// Greedy mean-matching order: at each step pick the candidate whose
/// inclusion brings the running mean of fused embeddings closest to the
/// class mean. Ties break to the lowest candidate index.
fn herding_order(
    candidates: &[&MultimodalSample],
    snapshot: &MultimodalNet,
    keep: usize,
) -> Result<Vec<usize>> {
    let embeddings: Vec<Vec<f64>> = candidates
        .iter()
        .map(|s| Ok(snapshot.forward(s)?.fused))
        .collect::<Result<_>>()?;
    let dim = embeddings[0].len();
    let mut target = vec![0.0; dim];
    for e in &embeddings {
        for (t, &v) in target.iter_mut().zip(e) {
            *t += v;
        }
    }
    for t in &mut target {
        *t /= embeddings.len() as f64;
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(keep);
    let mut running = vec![0.0; dim];
    while chosen.len() < keep {
        let step = (chosen.len() + 1) as f64;
        let mut best: Option<(f64, usize)> = None;
        for (i, e) in embeddings.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let dist: f64 = target
                .iter()
                .zip(running.iter().zip(e))
                .map(|(&t, (&r, &v))| {
                    let mean = (r + v) / step;
                    (t - mean).powi(2)
                })
                .sum();
            if best.is_none_or(|(d, _)| dist < d) {
                best = Some((dist, i));
            }
        }
        let (_, pick) = best.expect("candidates remain");
        for (r, &v) in running.iter_mut().zip(&embeddings[pick]) {
            *r += v;
        }
        chosen.push(pick);
    }
    Ok(chosen)
}
