//! Experiment grid execution.
//!
//! A grid cell is one (increment, seed, trainer) training run; every
//! method sharing that trainer is evaluated on the same snapshots, so
//! scoring-only method variants are guaranteed identical ACC columns.
//! Cells are independent and may run on several threads; outputs are
//! assembled in a fixed order so reruns produce byte-identical files.

use crate::config::{config_hash, resolved_text, ExperimentConfig, MethodSpec};
use crate::plot::{bin_scores, emit_plot, PlotKind, Series};
use anyhow::{Context, Result};
use owcl::datagen::{generate, split_tasks, Dataset, TaskStream};
use owcl::eval::{
    aggregate, evaluate_task, metrics_to_csv, mean_std, significance_to_csv, wilcoxon_signed_rank,
    Aggregate, AccuracyMatrix, MetricsRow, ScoreRecord, SignificanceRow, TaskEval,
};
use owcl::numcore::Rng;
use owcl::train::{run_stream, StreamRun, TrainConfig, TrainerKind};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// Deterministic rng for one training run, independent of every other
/// (trainer, increment) combination under the same seed.
pub fn cell_rng(seed: u64, trainer: TrainerKind, increment: usize) -> Rng {
    Rng::derive(seed, fnv1a(&format!("{}/inc{increment}", trainer.name())))
}

/// Stream split for one (increment, seed) cell.
pub fn cell_stream(
    data: &Dataset,
    increment: usize,
    seed: u64,
    test_fraction: f64,
) -> owcl::Result<TaskStream> {
    split_tasks(data, increment, seed, test_fraction)
}

/// Trains one grid cell.
pub fn train_cell(
    stream: &TaskStream,
    template: &TrainConfig,
    trainer: TrainerKind,
    seed: u64,
) -> owcl::Result<StreamRun> {
    let mut config = template.clone();
    config.trainer = trainer;
    let mut rng = cell_rng(seed, trainer, stream.increment);
    run_stream(stream, &config, &mut rng)
}

/// Per-method evaluation over every task of a finished run.
#[derive(Debug, Clone)]
pub struct MethodEval {
    pub method: MethodSpec,
    pub per_task_auc: Vec<Option<f64>>,
    pub per_task_fpr95: Vec<Option<f64>>,
    /// Mean accuracy over the splits seen so far, after each task.
    pub running_acc: Vec<f64>,
    pub aggregate: Aggregate,
    /// Score records of the evaluation after each task.
    pub records: Vec<Vec<ScoreRecord>>,
}

pub fn evaluate_method(
    run: &StreamRun,
    stream: &TaskStream,
    method: MethodSpec,
    keep_records: bool,
) -> owcl::Result<MethodEval> {
    let mut acc_matrix = AccuracyMatrix::new();
    let mut per_task_auc = Vec::new();
    let mut per_task_fpr95 = Vec::new();
    let mut running_acc = Vec::new();
    let mut records = Vec::new();
    for (t, artifacts) in run.per_task.iter().enumerate() {
        let TaskEval {
            auc,
            fpr95,
            acc_per_task,
            records: task_records,
        } = evaluate_task(
            &artifacts.snapshot,
            Some(&artifacts.stats),
            stream,
            t,
            method.strategy,
        )?;
        running_acc.push(acc_per_task.iter().sum::<f64>() / acc_per_task.len() as f64);
        acc_matrix.push_row(acc_per_task)?;
        per_task_auc.push(auc);
        per_task_fpr95.push(fpr95);
        records.push(if keep_records { task_records } else { Vec::new() });
    }
    let aggregate = aggregate(&per_task_auc, &per_task_fpr95, &acc_matrix)?;
    Ok(MethodEval {
        method,
        per_task_auc,
        per_task_fpr95,
        running_acc,
        aggregate,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub increment: usize,
    pub seed: u64,
    pub trainer_idx: usize,
}

struct CellResult {
    key: CellKey,
    evals: Vec<MethodEval>,
    loss_rows: Vec<String>,
    warnings: Vec<String>,
}

/// Everything a finished experiment leaves behind.
pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub metrics_csv: String,
    pub significance_csv: String,
    pub metrics_rows: Vec<MetricsRow>,
    pub warnings: Vec<String>,
}

fn run_cell(
    data: &Dataset,
    config: &ExperimentConfig,
    key: CellKey,
    trainers: &[TrainerKind],
    dump_scores: bool,
) -> Result<CellResult> {
    let trainer = trainers[key.trainer_idx];
    let cell_tag = format!("inc{} seed{} {}", key.increment, key.seed, trainer.name());
    let stream = cell_stream(data, key.increment, key.seed, config.test_fraction)
        .with_context(|| format!("splitting stream ({cell_tag})"))?;
    let run = train_cell(&stream, &config.train, trainer, key.seed)
        .with_context(|| format!("training ({cell_tag})"))?;

    let mut evals = Vec::new();
    for &method in config.methods.iter().filter(|m| m.trainer == trainer) {
        evals.push(evaluate_method(&run, &stream, method, dump_scores).context("evaluating")?);
    }

    let run_id = format!("inc{}-seed{}-{}", key.increment, key.seed, trainer.name());
    let mut loss_rows = Vec::new();
    for artifacts in &run.per_task {
        for epoch in &artifacts.epoch_log {
            loss_rows.push(format!(
                "{run_id},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                trainer.name(),
                epoch.task,
                epoch.epoch,
                epoch.breakdown.l_ce_main,
                epoch.breakdown.l_ce_modality_avg,
                epoch.breakdown.l_kd,
                epoch.breakdown.l_total
            ));
        }
    }
    let warnings = run
        .per_task
        .iter()
        .enumerate()
        .filter_map(|(t, a)| a.insert_warning.as_ref().map(|w| format!("{run_id} task {t}: {w}")))
        .collect();

    Ok(CellResult {
        key,
        evals,
        loss_rows,
        warnings,
    })
}

fn fmt_seed(seed: u64) -> String {
    seed.to_string()
}

/// Runs the full grid and writes metrics, significance, losses, plots and
/// the manifest under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, jobs: usize) -> Result<ExperimentOutput> {
    let data = match &config.dataset_path {
        Some(path) => Dataset::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => generate(&config.gen).context("generating dataset")?,
    };
    std::fs::create_dir_all(out_dir.join("plots"))?;

    // Distinct trainers, in first-appearance order.
    let mut trainers: Vec<TrainerKind> = Vec::new();
    for m in &config.methods {
        if !trainers.contains(&m.trainer) {
            trainers.push(m.trainer);
        }
    }

    let mut keys = Vec::new();
    for &increment in &config.increments {
        for &seed in &config.seeds {
            for trainer_idx in 0..trainers.len() {
                keys.push(CellKey {
                    increment,
                    seed,
                    trainer_idx,
                });
            }
        }
    }

    // Independent cells, optional thread pool, deterministic reassembly.
    let jobs = jobs.max(1).min(keys.len().max(1));
    let mut cells: Vec<(usize, Result<CellResult>)> = Vec::with_capacity(keys.len());
    if jobs <= 1 {
        for (i, &key) in keys.iter().enumerate() {
            cells.push((i, run_cell(&data, config, key, &trainers, config.dump_scores)));
        }
    } else {
        let results = std::sync::Mutex::new(Vec::with_capacity(keys.len()));
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= keys.len() {
                        break;
                    }
                    let out = run_cell(&data, config, keys[i], &trainers, config.dump_scores);
                    results.lock().unwrap().push((i, out));
                });
            }
        });
        cells = results.into_inner().unwrap();
        cells.sort_by_key(|(i, _)| *i);
    }

    let mut results: Vec<CellResult> = Vec::with_capacity(cells.len());
    for (_, cell) in cells {
        results.push(cell?);
    }

    // Metric rows.
    let mut rows: Vec<MetricsRow> = Vec::new();
    // (method name, strategy, increment) -> per-seed aggregates.
    let mut agg_by_method: BTreeMap<(String, String, usize), Vec<Aggregate>> = BTreeMap::new();
    // (method, increment, seed) -> per-task AUC and FPR95 for significance
    // pairing.
    type PerTask = (Vec<Option<f64>>, Vec<Option<f64>>);
    let mut by_method: BTreeMap<(String, usize, u64), PerTask> = BTreeMap::new();

    for cell in &results {
        for eval in &cell.evals {
            let method = eval.method.trainer.name().to_string();
            let strategy = eval.method.strategy.name().to_string();
            let setting = cell.key.increment;
            let seed = cell.key.seed;
            for (t, acc) in eval.running_acc.iter().enumerate() {
                rows.push(MetricsRow {
                    method: method.clone(),
                    strategy: strategy.clone(),
                    setting,
                    seed: fmt_seed(seed),
                    task: (t + 1).to_string(),
                    auc: eval.per_task_auc[t],
                    fpr95: eval.per_task_fpr95[t],
                    acc: Some(*acc),
                    fgt: None,
                });
            }
            rows.push(MetricsRow {
                method: method.clone(),
                strategy: strategy.clone(),
                setting,
                seed: fmt_seed(seed),
                task: "avg".into(),
                auc: eval.aggregate.auc_t,
                fpr95: eval.aggregate.fpr95_t,
                acc: Some(eval.aggregate.acc_t),
                fgt: eval.aggregate.fgt_t,
            });
            agg_by_method
                .entry((method.clone(), strategy.clone(), setting))
                .or_default()
                .push(eval.aggregate.clone());
            by_method.insert(
                (eval.method.name(), setting, seed),
                (eval.per_task_auc.clone(), eval.per_task_fpr95.clone()),
            );
        }
    }

    // Mean / std rows over seeds.
    for ((method, strategy, setting), aggs) in &agg_by_method {
        let collect = |f: &dyn Fn(&Aggregate) -> Option<f64>| -> Vec<f64> {
            aggs.iter().filter_map(f).collect()
        };
        let auc: Vec<f64> = collect(&|a| a.auc_t);
        let fpr: Vec<f64> = collect(&|a| a.fpr95_t);
        let acc: Vec<f64> = collect(&|a| Some(a.acc_t));
        let fgt: Vec<f64> = collect(&|a| a.fgt_t);
        let stat = |v: &[f64]| -> (Option<f64>, Option<f64>) {
            if v.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(v);
                (Some(m), s)
            }
        };
        let (auc_m, auc_s) = stat(&auc);
        let (fpr_m, fpr_s) = stat(&fpr);
        let (acc_m, acc_s) = stat(&acc);
        let (fgt_m, fgt_s) = stat(&fgt);
        rows.push(MetricsRow {
            method: method.clone(),
            strategy: strategy.clone(),
            setting: *setting,
            seed: "mean".into(),
            task: "avg".into(),
            auc: auc_m,
            fpr95: fpr_m,
            acc: acc_m,
            fgt: fgt_m,
        });
        if aggs.len() >= 2 {
            rows.push(MetricsRow {
                method: method.clone(),
                strategy: strategy.clone(),
                setting: *setting,
                seed: "std".into(),
                task: "avg".into(),
                auc: auc_s,
                fpr95: fpr_s,
                acc: acc_s,
                fgt: fgt_s,
            });
        }
    }

    // Significance: every method against the first (the reference), from
    // per-task paired values over all seeds.
    let reference = config.methods[0];
    let mut significance = Vec::new();
    for &method in config.methods.iter().skip(1) {
        for &setting in &config.increments {
            for (metric, higher_better) in [("auc", true), ("fpr95", false)] {
                let mut diffs = Vec::new();
                let mut mean_a = 0.0;
                let mut mean_b = 0.0;
                for &seed in &config.seeds {
                    let a = &by_method[&(method.name(), setting, seed)];
                    let b = &by_method[&(reference.name(), setting, seed)];
                    let (a, b) = if metric == "auc" { (&a.0, &b.0) } else { (&a.1, &b.1) };
                    for (x, y) in a.iter().zip(b) {
                        if let (Some(x), Some(y)) = (x, y) {
                            diffs.push(x - y);
                            mean_a += x;
                            mean_b += y;
                        }
                    }
                }
                if diffs.is_empty() {
                    continue;
                }
                let w = wilcoxon_signed_rank(&diffs);
                let direction = if (mean_a - mean_b).abs() < 1e-12 {
                    "tied"
                } else if (mean_a > mean_b) == higher_better {
                    "better"
                } else {
                    "worse"
                };
                significance.push(SignificanceRow {
                    method_a: method.name(),
                    method_b: reference.name(),
                    metric: metric.into(),
                    setting,
                    p_value: w.p_value,
                    direction: direction.into(),
                });
            }
        }
    }

    // Plots: task-wise AUC and accuracy curves per setting (seed means).
    for &setting in &config.increments {
        let mut auc_series = Vec::new();
        let mut acc_series = Vec::new();
        for method in &config.methods {
            let mut auc_points = Vec::new();
            let mut acc_points = Vec::new();
            let num_tasks = config.gen.num_classes / setting;
            for t in 0..num_tasks {
                let mut auc_vals = Vec::new();
                let mut acc_vals = Vec::new();
                for cell in &results {
                    if cell.key.increment != setting {
                        continue;
                    }
                    for eval in &cell.evals {
                        if eval.method == *method {
                            if let Some(a) = eval.per_task_auc[t] {
                                auc_vals.push(a);
                            }
                            acc_vals.push(eval.running_acc[t]);
                        }
                    }
                }
                if !auc_vals.is_empty() {
                    auc_points.push((
                        (t + 1) as f64,
                        auc_vals.iter().sum::<f64>() / auc_vals.len() as f64,
                    ));
                }
                acc_points.push((
                    (t + 1) as f64,
                    acc_vals.iter().sum::<f64>() / acc_vals.len() as f64,
                ));
            }
            auc_series.push(Series {
                label: method.name(),
                points: auc_points,
            });
            acc_series.push(Series {
                label: method.name(),
                points: acc_points,
            });
        }
        emit_plot(
            &auc_series,
            PlotKind::TaskwiseCurve,
            &format!("Task-wise AUC (inc {setting})"),
            "task",
            "AUC",
            &out_dir.join(format!("plots/auc_inc{setting}.svg")),
        )?;
        emit_plot(
            &acc_series,
            PlotKind::TaskwiseCurve,
            &format!("Task-wise average accuracy (inc {setting})"),
            "task",
            "accuracy",
            &out_dir.join(format!("plots/acc_inc{setting}.svg")),
        )?;
    }

    // Score-distribution plots: first setting, first seed, earliest task
    // with novel classes, one histogram per method.
    if config.dump_scores {
        let setting = config.increments[0];
        let seed = config.seeds[0];
        for cell in &results {
            if cell.key.increment != setting || cell.key.seed != seed {
                continue;
            }
            for eval in &cell.evals {
                let t = 0;
                let known: Vec<f64> = eval.records[t]
                    .iter()
                    .filter(|r| !r.is_novel)
                    .map(|r| r.score.s)
                    .collect();
                let novel: Vec<f64> = eval.records[t]
                    .iter()
                    .filter(|r| r.is_novel)
                    .map(|r| r.score.s)
                    .collect();
                if known.is_empty() || novel.is_empty() {
                    continue;
                }
                let series = bin_scores(&known, &novel, 30);
                emit_plot(
                    &series,
                    PlotKind::Histogram,
                    &format!("Scores after task 1: {} (inc {setting})", eval.method.name()),
                    "score",
                    "count",
                    &out_dir.join(format!("plots/hist_{}_inc{setting}.svg", eval.method.name())),
                )?;
            }
        }
    }

    // CSV + manifest emission.
    let metrics_csv = metrics_to_csv(&rows);
    std::fs::write(out_dir.join("metrics.csv"), &metrics_csv)?;
    let significance_csv = significance_to_csv(&significance);
    std::fs::write(out_dir.join("significance.csv"), &significance_csv)?;

    let mut losses = String::from("run_id,trainer,task,epoch,l_ce_main,l_ce_mod,l_kd,l_total\n");
    for cell in &results {
        for row in &cell.loss_rows {
            losses.push_str(row);
            losses.push('\n');
        }
    }
    std::fs::write(out_dir.join("losses.csv"), &losses)?;

    if config.dump_scores {
        let m_count = config.gen.modality_dims.len();
        let mut dump = String::from("run_id,task,sample_id,true_label,is_novel,strategy,s");
        for m in 0..m_count {
            write!(dump, ",e{m}").unwrap();
        }
        for m in 0..m_count {
            write!(dump, ",r{m}").unwrap();
        }
        for m in 0..m_count {
            write!(dump, ",a{m}").unwrap();
        }
        dump.push('\n');
        for cell in &results {
            for eval in &cell.evals {
                let run_id = format!(
                    "inc{}-seed{}-{}",
                    cell.key.increment,
                    cell.key.seed,
                    eval.method.name()
                );
                for (t, task_records) in eval.records.iter().enumerate() {
                    for r in task_records {
                        write!(
                            dump,
                            "{run_id},{},{},{},{},{},{:.6}",
                            t + 1,
                            r.sample_id,
                            r.label,
                            r.is_novel,
                            eval.method.strategy.name(),
                            r.score.s
                        )
                        .unwrap();
                        let opt = |v: &Option<Vec<f64>>, m: usize| -> String {
                            v.as_ref()
                                .map(|vals| format!("{:.6}", vals[m]))
                                .unwrap_or_default()
                        };
                        for m in 0..m_count {
                            write!(dump, ",{}", opt(&r.score.energies, m)).unwrap();
                        }
                        for m in 0..m_count {
                            write!(dump, ",{}", opt(&r.score.reliabilities, m)).unwrap();
                        }
                        for m in 0..m_count {
                            write!(dump, ",{}", opt(&r.score.alphas, m)).unwrap();
                        }
                        dump.push('\n');
                    }
                }
            }
        }
        std::fs::write(out_dir.join("scores.csv"), &dump)?;
    }

    let resolved = resolved_text(config);
    std::fs::write(out_dir.join("config.resolved"), &resolved)?;

    let mut warnings: Vec<String> = Vec::new();
    for cell in &results {
        warnings.extend(cell.warnings.iter().cloned());
    }
    let mut manifest = String::new();
    writeln!(manifest, "config_hash = {:016x}", config_hash(config)).unwrap();
    writeln!(manifest, "tool_version = {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(
        manifest,
        "seeds = {}",
        config.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
    )
    .unwrap();
    writeln!(manifest, "cells = {}", keys.len()).unwrap();
    writeln!(
        manifest,
        "started_unix = {}",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    )
    .unwrap();
    for w in &warnings {
        writeln!(manifest, "warning = {w}").unwrap();
    }
    let mut artifacts = vec![
        "config.resolved".to_string(),
        "metrics.csv".to_string(),
        "significance.csv".to_string(),
        "losses.csv".to_string(),
    ];
    if config.dump_scores {
        artifacts.push("scores.csv".to_string());
    }
    for &setting in &config.increments {
        artifacts.push(format!("plots/auc_inc{setting}.svg"));
        artifacts.push(format!("plots/acc_inc{setting}.svg"));
    }
    for a in &artifacts {
        writeln!(manifest, "artifact = {a}").unwrap();
    }
    std::fs::write(out_dir.join("manifest.txt"), &manifest)?;

    Ok(ExperimentOutput {
        out_dir: out_dir.to_path_buf(),
        metrics_csv,
        significance_csv,
        metrics_rows: rows,
        warnings,
    })
}

/// Re-aggregates a metrics.csv: recomputes the over-seed mean/std rows from
/// the per-seed aggregate rows and returns the rebuilt CSV.
pub fn reaggregate(metrics_csv: &str) -> Result<String> {
    let rows = owcl::eval::metrics_from_csv(metrics_csv)?;
    let mut rebuilt: Vec<MetricsRow> = rows
        .iter()
        .filter(|r| r.seed != "mean" && r.seed != "std")
        .cloned()
        .collect();
    let mut groups: BTreeMap<(String, String, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| {
        r.task == "avg" && r.seed != "mean" && r.seed != "std"
    }) {
        groups
            .entry((r.method.clone(), r.strategy.clone(), r.setting))
            .or_default()
            .push(r);
    }
    for ((method, strategy, setting), group) in groups {
        let stat = |f: &dyn Fn(&MetricsRow) -> Option<f64>| -> (Option<f64>, Option<f64>) {
            let v: Vec<f64> = group.iter().filter_map(|r| f(r)).collect();
            if v.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&v);
                (Some(m), s)
            }
        };
        let (auc_m, auc_s) = stat(&|r| r.auc);
        let (fpr_m, fpr_s) = stat(&|r| r.fpr95);
        let (acc_m, acc_s) = stat(&|r| r.acc);
        let (fgt_m, fgt_s) = stat(&|r| r.fgt);
        rebuilt.push(MetricsRow {
            method: method.clone(),
            strategy: strategy.clone(),
            setting,
            seed: "mean".into(),
            task: "avg".into(),
            auc: auc_m,
            fpr95: fpr_m,
            acc: acc_m,
            fgt: fgt_m,
        });
        if group.len() >= 2 {
            rebuilt.push(MetricsRow {
                method,
                strategy,
                setting,
                seed: "std".into(),
                task: "avg".into(),
                auc: auc_s,
                fpr95: fpr_s,
                acc: acc_s,
                fgt: fgt_s,
            });
        }
    }
    Ok(metrics_to_csv(&rebuilt))
}
