//! Evaluation: ROC AUC, FPR at 95% TPR, per-task accuracy and forgetting,
//! rank correlation, significance testing, and the metrics report schema.

mod report;
mod wilcoxon;

pub use report::{metrics_from_csv, metrics_to_csv, significance_to_csv, MetricsRow, SignificanceRow};
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_normal, WilcoxonResult};

use crate::datagen::TaskStream;
use crate::error::{Error, Result};
use crate::memory::EnergyStats;
use crate::model::MultimodalNet;
use crate::score::{predict, score, NoveltyScore, ScoringContext, Strategy};

/// Midranks (1-based) of a slice, ties averaged.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = midrank;
        }
        i = j;
    }
    ranks
}

/// Probability that a random known score exceeds a random novel score, ties
/// counted one half (the Mann-Whitney formulation, computed from ranks).
pub fn auc(known: &[f64], novel: &[f64]) -> Result<f64> {
    if known.is_empty() || novel.is_empty() {
        return Err(Error::Input("auc needs scores on both sides".into()));
    }
    let mut all = Vec::with_capacity(known.len() + novel.len());
    all.extend_from_slice(known);
    all.extend_from_slice(novel);
    let ranks = midranks(&all);
    let known_rank_sum: f64 = ranks[..known.len()].iter().sum();
    let n_k = known.len() as f64;
    let n_n = novel.len() as f64;
    let u = known_rank_sum - n_k * (n_k + 1.0) / 2.0;
    Ok(u / (n_k * n_n))
}

/// False positive rate at the threshold admitting at least 95% of known
/// scores: tau is the largest value with `#known >= tau >= 0.95 * n`, and
/// the result is the fraction of novel scores at or above tau.
pub fn fpr_at_95_tpr(known: &[f64], novel: &[f64]) -> Result<f64> {
    if known.is_empty() || novel.is_empty() {
        return Err(Error::Input("fpr_at_95_tpr needs scores on both sides".into()));
    }
    let mut sorted: Vec<f64> = known.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let need = ((0.95 * known.len() as f64).ceil() as usize).max(1);
    let tau = sorted[need - 1];
    let fp = novel.iter().filter(|&&s| s >= tau).count();
    Ok(fp as f64 / novel.len() as f64)
}

/// Spearman rank correlation (midranks, Pearson over ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Input(format!(
            "spearman needs two equal-length series of >= 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// One scored test sample, with full diagnostics for dumps and plots.
#[derive(Debug, Clone)]
pub struct ScoreRecord {
    pub sample_id: u64,
    pub label: usize,
    pub is_novel: bool,
    pub score: NoveltyScore,
}

/// Result of evaluating one snapshot after task `t`.
#[derive(Debug, Clone)]
pub struct TaskEval {
    /// None when no novel classes remain (the final task).
    pub auc: Option<f64>,
    pub fpr95: Option<f64>,
    /// Accuracy on each task split i <= t.
    pub acc_per_task: Vec<f64>,
    pub records: Vec<ScoreRecord>,
}

/// Scores the known/novel splits for the snapshot after task `t` and
/// measures accuracy on every seen task split. Known = test samples of
/// tasks <= t; novel = test samples of tasks > t.
pub fn evaluate_task(
    net: &MultimodalNet,
    stats: Option<&EnergyStats>,
    stream: &TaskStream,
    t: usize,
    strategy: Strategy,
) -> Result<TaskEval> {
    if t >= stream.num_tasks() {
        return Err(Error::Index {
            index: t,
            len: stream.num_tasks(),
        });
    }
    let ctx = ScoringContext {
        net,
        stats,
        strategy,
    };

    let mut records = Vec::new();
    let mut known_scores = Vec::new();
    let mut novel_scores = Vec::new();
    for (i, task) in stream.tasks.iter().enumerate() {
        for sample in &task.test {
            let s = score(&ctx, sample)?;
            let is_novel = i > t;
            if is_novel {
                novel_scores.push(s.s);
            } else {
                known_scores.push(s.s);
            }
            records.push(ScoreRecord {
                sample_id: sample.id,
                label: sample.label,
                is_novel,
                score: s,
            });
        }
    }

    let (auc_t, fpr_t) = if novel_scores.is_empty() {
        (None, None)
    } else {
        (
            Some(auc(&known_scores, &novel_scores)?),
            Some(fpr_at_95_tpr(&known_scores, &novel_scores)?),
        )
    };

    let mut acc_per_task = Vec::with_capacity(t + 1);
    for task in &stream.tasks[..=t] {
        let mut correct = 0usize;
        for sample in &task.test {
            if predict(net, sample)? == sample.label {
                correct += 1;
            }
        }
        acc_per_task.push(correct as f64 / task.test.len() as f64);
    }

    Ok(TaskEval {
        auc: auc_t,
        fpr95: fpr_t,
        acc_per_task,
        records,
    })
}

/// Lower-triangular accuracy matrix: `a[t][i]` is the accuracy on task i's
/// test split after training task t, for i <= t.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        AccuracyMatrix { rows: Vec::new() }
    }

    pub fn push_row(&mut self, accuracies: Vec<f64>) -> Result<()> {
        if accuracies.len() != self.rows.len() + 1 {
            return Err(Error::shape(
                "accuracy matrix",
                format!("row {} needs {} entries", self.rows.len(), self.rows.len() + 1),
                format!("got {}", accuracies.len()),
            ));
        }
        if accuracies.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::Domain("accuracy outside [0,1]".into()));
        }
        self.rows.push(accuracies);
        Ok(())
    }

    pub fn num_tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.rows[t][i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

impl Default for AccuracyMatrix {
    fn default() -> Self {
        Self::new()
    }
}

/// Aggregates over a full stream run.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Mean per-task AUC over tasks 1..T-1 (the final task has no novel
    /// classes left). None for single-task streams.
    pub auc_t: Option<f64>,
    pub fpr95_t: Option<f64>,
    /// AUC after the last incremental step that still had novel classes.
    pub final_auc: Option<f64>,
    /// Mean accuracy over all task splits after the final task.
    pub acc_t: f64,
    /// Mean over tasks of (best historical accuracy - final accuracy).
    /// None for single-task streams.
    pub fgt_t: Option<f64>,
}

/// Computes the aggregate metrics from per-task novelty metrics and the
/// accuracy matrix.
pub fn aggregate(
    per_task_auc: &[Option<f64>],
    per_task_fpr95: &[Option<f64>],
    acc: &AccuracyMatrix,
) -> Result<Aggregate> {
    let t_count = acc.num_tasks();
    if t_count == 0 || per_task_auc.len() != t_count || per_task_fpr95.len() != t_count {
        return Err(Error::Input(format!(
            "inconsistent aggregate inputs: {} tasks, {} auc, {} fpr",
            t_count,
            per_task_auc.len(),
            per_task_fpr95.len()
        )));
    }

    let mean_of = |values: &[Option<f64>]| -> Option<f64> {
        let defined: Vec<f64> = values.iter().flatten().cloned().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    };
    // Only tasks before the last carry novelty metrics.
    let auc_t = mean_of(&per_task_auc[..t_count - 1]);
    let fpr95_t = mean_of(&per_task_fpr95[..t_count - 1]);
    let final_auc = if t_count >= 2 {
        per_task_auc[t_count - 2]
    } else {
        None
    };

    let last = &acc.rows()[t_count - 1];
    let acc_t = last.iter().sum::<f64>() / last.len() as f64;

    let fgt_t = if t_count < 2 {
        None
    } else {
        let mut total = 0.0;
        for i in 0..t_count - 1 {
            let best = (i..t_count - 1)
                .map(|t| acc.get(t, i))
                .fold(f64::NEG_INFINITY, f64::max);
            total += best - acc.get(t_count - 1, i);
        }
        Some(total / (t_count - 1) as f64)
    };

    Ok(Aggregate {
        auc_t,
        fpr95_t,
        final_auc,
        acc_t,
        fgt_t,
    })
}

/// Sample mean and standard deviation (n-1); std is None for fewer than two
/// values.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}
