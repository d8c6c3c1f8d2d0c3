//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its runtime. The heavyweight default-benchmark runs are
//! shared through a lazily built fixture.

use owcl::datagen::{generate, split_tasks, GenSpec, TaskStream};
use owcl::eval::{auc, fpr_at_95_tpr, spearman, wilcoxon_signed_rank};
use owcl::memory::{BufferPolicy, EnergyStats, ReplayBuffer};
use owcl::model::{MultimodalNet, NetConfig, NetGrads};
use owcl::numcore::{grad_check, softmax, Rng};
use owcl::score::{combine_logits, energy, modality_weights, reliability, score, Strategy};
use owcl::score::ScoringContext;
use owcl::train::{compute_loss, run_stream, StreamRun, TrainConfig, TrainerKind};
use owcl_cli::config::{parse_config, MethodSpec};
use owcl_cli::runner::{cell_stream, evaluate_method, run_experiment, train_cell, MethodEval};
use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

fn report(criterion: &str, detail: &str, started: Instant) {
    println!(
        "[acceptance] {criterion}: PASS ({:.1}s) {detail}",
        started.elapsed().as_secs_f64()
    );
}

/// Criterion 1: metric kernels against brute-force oracles.
#[test]
fn c1_numeric_kernels_match_oracles() {
    let started = Instant::now();
    let mut rng = Rng::new(2024);

    // AUC via pair counting, FPR95 via exhaustive threshold sweep.
    for round in 0..200 {
        let nk = 1 + rng.below(30) as usize;
        let nn = 1 + rng.below(30) as usize;
        let known: Vec<f64> = (0..nk).map(|_| (rng.uniform(-2.0, 2.0) * 4.0).round() / 4.0).collect();
        let novel: Vec<f64> = (0..nn).map(|_| (rng.uniform(-2.5, 1.5) * 4.0).round() / 4.0).collect();

        let mut pairs = 0.0;
        for &k in &known {
            for &n in &novel {
                pairs += if k > n { 1.0 } else if k == n { 0.5 } else { 0.0 };
            }
        }
        let auc_oracle = pairs / (nk * nn) as f64;
        assert!(
            (auc(&known, &novel).unwrap() - auc_oracle).abs() <= 1e-12,
            "auc mismatch round {round}"
        );

        let mut best_tau = f64::NEG_INFINITY;
        for &candidate in &known {
            let admitted = known.iter().filter(|&&s| s >= candidate).count();
            if admitted as f64 >= 0.95 * nk as f64 && candidate > best_tau {
                best_tau = candidate;
            }
        }
        let fpr_oracle = novel.iter().filter(|&&s| s >= best_tau).count() as f64 / nn as f64;
        assert!(
            (fpr_at_95_tpr(&known, &novel).unwrap() - fpr_oracle).abs() <= 1e-12,
            "fpr mismatch round {round}"
        );
    }

    // Scalar straight-line oracles for the scoring kernels.
    for _ in 0..200 {
        let c = 2 + rng.below(6) as usize;
        let z: Vec<f64> = (0..c).map(|_| rng.uniform(-4.0, 4.0)).collect();
        let direct_energy = -z.iter().map(|&v| v.exp()).sum::<f64>().ln();
        assert!((energy(&z).unwrap() - direct_energy).abs() <= 1e-10);

        let p = softmax(&z).unwrap();
        let exps: Vec<f64> = z.iter().map(|&v| v.exp()).collect();
        let total: f64 = exps.iter().sum();
        for (a, e) in p.iter().zip(&exps) {
            assert!((a - e / total).abs() <= 1e-10);
        }

        let e = rng.uniform(-4.0, 0.0);
        let mu = rng.uniform(-3.0, 0.0);
        let sigma = rng.uniform(0.1, 2.0);
        assert!((reliability(e, mu, sigma).unwrap() - (-(e - mu) / sigma)).abs() <= 1e-10);

        let m = 2 + rng.below(3) as usize;
        let r: Vec<f64> = (0..m).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let alphas = modality_weights(&r, Strategy::Adaptive).unwrap();
        let exp_r: Vec<f64> = r.iter().map(|v| v.exp()).collect();
        let denom: f64 = exp_r.iter().sum();
        for (a, e) in alphas.iter().zip(&exp_r) {
            assert!((a - e / denom).abs() <= 1e-10);
        }

        let main: Vec<f64> = (0..c).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let mods: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..c).map(|_| rng.uniform(-2.0, 2.0)).collect())
            .collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.uniform(0.0, 1.0)).collect();
        let combined = combine_logits(&main, &mods, &weights).unwrap();
        for cls in 0..c {
            let mut expect = main[cls];
            for mm in 0..m {
                expect += weights[mm] * mods[mm][cls];
            }
            assert!((combined[cls] - expect).abs() <= 1e-10);
        }
    }

    assert!(started.elapsed().as_secs_f64() < 10.0, "criterion 1 over budget");
    report("C1 numeric kernels vs oracles", "200 score sets + 200 scalar cases", started);
}

/// Criterion 2: the full training objective passes finite differences on
/// 50 random small configurations.
#[test]
fn c2_full_loss_gradients_pass_finite_differences() {
    let started = Instant::now();
    let mut rng = Rng::new(77);
    for trial in 0..50 {
        let m_count = 2 + (trial % 2);
        let classes = 3usize;
        let dims: Vec<usize> = (0..m_count).map(|_| 3 + rng.below(3) as usize).collect();
        let net_config = NetConfig {
            modality_dims: dims.clone(),
            encoder_hidden: 4 + rng.below(3) as usize,
            embed_dim: 3 + rng.below(2) as usize,
            fusion_dim: 4 + rng.below(3) as usize,
            initial_classes: classes,
        };
        let net = MultimodalNet::new(net_config, &mut rng).unwrap();

        let mut sample = |label: usize| owcl::datagen::MultimodalSample {
            id: 0,
            label,
            features: dims
                .iter()
                .map(|&d| (0..d).map(|_| rng.uniform(-1.2, 1.2)).collect())
                .collect(),
        };
        let batch_samples: Vec<_> = (0..3).map(|i| sample(i % classes)).collect();
        let replay_samples: Vec<_> = (0..2).map(|i| sample((i + 1) % classes)).collect();

        // Build exemplars whose stored logits differ from current outputs.
        let mut buffer = ReplayBuffer::new(8, BufferPolicy::RandomBalanced);
        buffer.insert_task(&replay_samples, &net, 0, &mut rng).unwrap();
        let mut perturbed = net.clone();
        for buf in perturbed.param_buffers_mut() {
            for v in buf.iter_mut() {
                *v += rng.uniform(-0.08, 0.08);
            }
        }
        let net = perturbed;

        let config = TrainConfig::desk_default(TrainerKind::ModalityDistill);
        let batch_refs: Vec<&owcl::datagen::MultimodalSample> = batch_samples.iter().collect();
        let replay_refs: Vec<&owcl::memory::Exemplar> = buffer.exemplars().iter().collect();
        let step = compute_loss(&net, &batch_refs, &replay_refs, &config).unwrap();

        let theta = net.flat_params();
        let mut probe = net.clone();
        let err = grad_check(&theta, &step.grads.flat(), 1e-5, |p| {
            probe.set_flat_params(p)?;
            Ok(compute_loss(&probe, &batch_refs, &replay_refs, &config)?
                .breakdown
                .l_total)
        })
        .unwrap();
        assert!(err <= 1e-4, "trial {trial}: relative error {err}");
    }
    assert!(started.elapsed().as_secs_f64() < 60.0, "criterion 2 over budget");
    report("C2 gradient correctness", "50 random configurations, eps 1e-5", started);
}

fn toy_stream() -> TaskStream {
    let spec = GenSpec {
        num_classes: 4,
        train_per_class: 24,
        test_per_class: 8,
        modality_dims: vec![4, 3],
        informativeness: vec![1.0, 1.0],
        dominance: vec![1.5, 1.0],
        spread: vec![0.6, 0.6],
        mean_scale: 1.5,
        degrade_prob: 0.4,
        degrade_factor: 4.0,
        seed: 11,
    };
    let data = generate(&spec).unwrap();
    split_tasks(&data, 2, 5, 0.25).unwrap()
}

/// Criterion 3: the reduction lattice is bitwise, and main-only scoring is
/// bitwise max-logit.
#[test]
fn c3_reduction_lattice_is_bitwise() {
    let started = Instant::now();
    let stream = toy_stream();
    let mut base = TrainConfig::desk_default(TrainerKind::Er);
    base.epochs = 3;
    base.batch_size = 8;
    base.replay_batch = 8;
    base.lambda = 0.0;
    base.beta = 0.0;

    for seed in [1u64, 2, 3] {
        let run_with = |trainer: TrainerKind| -> StreamRun {
            let mut config = base.clone();
            config.trainer = trainer;
            run_stream(&stream, &config, &mut Rng::new(seed)).unwrap()
        };
        let er = run_with(TrainerKind::Er);
        let morst = run_with(TrainerKind::ModalityDistill);
        let fused = run_with(TrainerKind::FusedDistill);
        for t in 0..stream.num_tasks() {
            let reference: Vec<u64> = er.per_task[t]
                .snapshot
                .flat_params()
                .iter()
                .map(|v| v.to_bits())
                .collect();
            for other in [&morst, &fused] {
                let params: Vec<u64> = other.per_task[t]
                    .snapshot
                    .flat_params()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect();
                assert_eq!(reference, params, "seed {seed} task {t}");
            }
        }

        // Scoring reduction on the final snapshot.
        let last = er.per_task.last().unwrap();
        for task in &stream.tasks {
            for s in &task.test {
                let main_only = score(
                    &ScoringContext {
                        net: &last.snapshot,
                        stats: Some(&last.stats),
                        strategy: Strategy::MainOnly,
                    },
                    s,
                )
                .unwrap();
                let max_logit = score(
                    &ScoringContext {
                        net: &last.snapshot,
                        stats: Some(&last.stats),
                        strategy: Strategy::MaxLogit,
                    },
                    s,
                )
                .unwrap();
                assert_eq!(main_only.s.to_bits(), max_logit.s.to_bits());
            }
        }
    }
    report("C3 reduction lattice bitwise", "3 seeds, 2-task stream, 3 trainers", started);
}

/// Shared default-benchmark fixture: the criterion-4/5 runs (16 classes,
/// increment 4, 5 seeds) trained once and evaluated under every strategy
/// both criteria need.
struct Fixture {
    evals: BTreeMap<(String, u64), MethodEval>,
    build_seconds: f64,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let started = Instant::now();
        let config = parse_config("").expect("defaults");
        let data = generate(&config.gen).unwrap();
        let seeds: Vec<u64> = config.seeds.clone();

        let mut evals = BTreeMap::new();
        for &seed in &seeds {
            let stream = cell_stream(&data, 4, seed, config.test_fraction).unwrap();
            let morst = train_cell(&stream, &config.train, TrainerKind::ModalityDistill, seed).unwrap();
            let er = train_cell(&stream, &config.train, TrainerKind::Er, seed).unwrap();
            for (run, methods) in [
                (
                    &morst,
                    vec![
                        "modality_distill+adaptive",
                        "modality_distill+main_only",
                        "modality_distill+uniform_average",
                        "modality_distill+uniform_sum",
                    ],
                ),
                (&er, vec!["er+adaptive", "er+max_logit"]),
            ] {
                for name in methods {
                    let method = MethodSpec::parse(name).unwrap();
                    let eval = evaluate_method(run, &stream, method, true).unwrap();
                    evals.insert((name.to_string(), seed), eval);
                }
            }
        }
        Fixture {
            evals,
            build_seconds: started.elapsed().as_secs_f64(),
        }
    })
}

fn mean_auc_t(fix: &Fixture, method: &str) -> f64 {
    let vals: Vec<f64> = fix
        .evals
        .iter()
        .filter(|((m, _), _)| m == method)
        .map(|(_, e)| e.aggregate.auc_t.unwrap())
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn mean_metric(fix: &Fixture, method: &str, pick: impl Fn(&MethodEval) -> f64) -> f64 {
    let vals: Vec<f64> = fix
        .evals
        .iter()
        .filter(|((m, _), _)| m == method)
        .map(|(_, e)| pick(e))
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Criterion 4: ablation directions on the default stream.
#[test]
fn c4_ablation_directions() {
    let started = Instant::now();
    let fix = fixture();

    // (a) scoring-only ablation: bitwise-identical ACC per seed, lower AUC.
    for seed in 1u64..=5 {
        let full = &fix.evals[&("modality_distill+adaptive".to_string(), seed)];
        let wo_scoring = &fix.evals[&("modality_distill+main_only".to_string(), seed)];
        assert_eq!(
            full.aggregate.acc_t.to_bits(),
            wo_scoring.aggregate.acc_t.to_bits(),
            "seed {seed}: scoring-only ablation moved accuracy"
        );
    }
    let mand = mean_auc_t(fix, "modality_distill+adaptive");
    let wo_scoring = mean_auc_t(fix, "modality_distill+main_only");
    assert!(mand > wo_scoring, "mand {mand} vs w/o scoring {wo_scoring}");

    // (b) training-only ablation: lower mean ACC and AUC.
    let wo_training_auc = mean_auc_t(fix, "er+adaptive");
    let mand_acc = mean_metric(fix, "modality_distill+adaptive", |e| e.aggregate.acc_t);
    let wo_training_acc = mean_metric(fix, "er+adaptive", |e| e.aggregate.acc_t);
    assert!(mand_acc > wo_training_acc, "acc {mand_acc} vs {wo_training_acc}");
    assert!(mand > wo_training_auc, "auc {mand} vs {wo_training_auc}");

    // (c) both removed: at most each single ablation.
    let wo_both = mean_auc_t(fix, "er+max_logit");
    assert!(wo_both <= wo_scoring, "{wo_both} vs w/o scoring {wo_scoring}");
    assert!(wo_both <= wo_training_auc, "{wo_both} vs w/o training {wo_training_auc}");

    let total = fix.build_seconds + started.elapsed().as_secs_f64();
    assert!(total < 900.0, "criterion 4 over budget: {total:.0}s");
    report(
        "C4 ablation directions",
        &format!(
            "mand {mand:.4} > wo_scoring {wo_scoring:.4}; acc {mand_acc:.4} > {wo_training_acc:.4}; floor {wo_both:.4} (runs {:.0}s)",
            total
        ),
        started,
    );
}

/// Criterion 5: scoring-strategy ordering with significance.
#[test]
fn c5_strategy_ordering_and_significance() {
    let started = Instant::now();
    let fix = fixture();
    let adaptive = mean_auc_t(fix, "modality_distill+adaptive");
    let uniform = mean_auc_t(fix, "modality_distill+uniform_average");
    let main_only = mean_auc_t(fix, "modality_distill+main_only");
    assert!(
        adaptive > uniform && uniform >= main_only,
        "ordering {adaptive:.4} / {uniform:.4} / {main_only:.4}"
    );

    let adaptive_fpr = mean_metric(fix, "modality_distill+adaptive", |e| e.aggregate.fpr95_t.unwrap());
    let main_fpr = mean_metric(fix, "modality_distill+main_only", |e| e.aggregate.fpr95_t.unwrap());
    assert!(adaptive_fpr < main_fpr, "fpr {adaptive_fpr:.4} vs {main_fpr:.4}");

    // Wilcoxon over paired per-task AUCs.
    let mut diffs = Vec::new();
    for seed in 1u64..=5 {
        let a = &fix.evals[&("modality_distill+adaptive".to_string(), seed)];
        let b = &fix.evals[&("modality_distill+main_only".to_string(), seed)];
        for (x, y) in a.per_task_auc.iter().zip(&b.per_task_auc) {
            if let (Some(x), Some(y)) = (x, y) {
                diffs.push(x - y);
            }
        }
    }
    let w = wilcoxon_signed_rank(&diffs);
    assert!(w.p_value < 0.05, "wilcoxon p {}", w.p_value);
    report(
        "C5 strategy ordering",
        &format!(
            "adaptive {adaptive:.4} > uniform {uniform:.4} >= main {main_only:.4}; fpr {adaptive_fpr:.4} < {main_fpr:.4}; p {:.5}",
            w.p_value
        ),
        started,
    );
}

/// Criterion 6: on the dominance-scaled spec, the dominant modality's head
/// ranks closest to the main logits, every seed.
#[test]
fn c6_modality_dominance_reconstruction() {
    let started = Instant::now();
    let spec = GenSpec::dominance_probe();
    let data = generate(&spec).unwrap();
    let template = TrainConfig::desk_default(TrainerKind::ModalityDistill);
    for seed in 1u64..=5 {
        let stream = cell_stream(&data, 4, seed, spec.test_fraction()).unwrap();
        let run = train_cell(&stream, &template, TrainerKind::ModalityDistill, seed).unwrap();
        let last = run.per_task.last().unwrap();
        let maxv = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut main_scores = Vec::new();
        let mut head_scores = vec![Vec::new(); stream.modality_dims.len()];
        for task in &stream.tasks {
            for s in &task.test {
                let out = last.snapshot.forward(s).unwrap();
                main_scores.push(maxv(&out.main_logits));
                for (m, z) in out.modality_logits.iter().enumerate() {
                    head_scores[m].push(maxv(z));
                }
            }
        }
        let corr: Vec<f64> = head_scores
            .iter()
            .map(|h| spearman(&main_scores, h).unwrap())
            .collect();
        for m in 1..corr.len() {
            assert!(
                corr[0] > corr[m],
                "seed {seed}: dominant correlation {:.3} not above modality {m} ({:.3})",
                corr[0],
                corr[m]
            );
        }
    }
    report("C6 modality dominance", "rank correlation strictly highest, 5 seeds", started);
}

/// Criterion 7: alpha-sum invariants over every scored sample of the
/// criterion-4 runs, plus exact values on perfect-separation fixtures.
#[test]
fn c7_metric_identities() {
    let started = Instant::now();
    let fix = fixture();
    let mut checked = 0usize;
    for ((method, _), eval) in &fix.evals {
        let strategy = MethodSpec::parse(method).unwrap().strategy;
        let expected_total = match strategy {
            Strategy::Adaptive | Strategy::UniformAverage => Some(1.0),
            Strategy::UniformSum => Some(3.0),
            Strategy::MainOnly => Some(0.0),
            _ => None,
        };
        for task_records in &eval.records {
            for record in task_records {
                if let Some(total) = expected_total {
                    let sum: f64 = record
                        .score
                        .alphas
                        .as_ref()
                        .expect("combining strategies carry alphas")
                        .iter()
                        .sum();
                    assert!(
                        (sum - total).abs() <= 1e-9,
                        "{method}: alpha sum {sum} != {total}"
                    );
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000, "expected full coverage, checked {checked}");

    // Perfect separation gives exact endpoint values.
    let known = vec![5.0, 6.0, 7.5, 8.0];
    let novel = vec![1.0, 0.5, -2.0];
    assert_eq!(auc(&known, &novel).unwrap(), 1.0);
    assert_eq!(fpr_at_95_tpr(&known, &novel).unwrap(), 0.0);
    report(
        "C7 metric identities",
        &format!("{checked} alpha sums, perfect-separation endpoints exact"),
        started,
    );
}

/// Criterion 8: identical configs reproduce metric CSVs bytewise.
#[test]
fn c8_rerun_determinism() {
    let started = Instant::now();
    let config = parse_config(
        "increments = 8\nseeds = 1, 2\nepochs = 4\nmethods = modality_distill+adaptive, er+max_logit\ntrain_per_class = 60\n",
    )
    .unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let out_a = run_experiment(&config, dir_a.path(), 2).unwrap();
    let out_b = run_experiment(&config, dir_b.path(), 1).unwrap();
    assert_eq!(out_a.metrics_csv, out_b.metrics_csv);
    assert_eq!(out_a.significance_csv, out_b.significance_csv);
    let losses_a = std::fs::read(dir_a.path().join("losses.csv")).unwrap();
    let losses_b = std::fs::read(dir_b.path().join("losses.csv")).unwrap();
    assert_eq!(losses_a, losses_b);
    let resolved_a = std::fs::read(dir_a.path().join("config.resolved")).unwrap();
    let resolved_b = std::fs::read(dir_b.path().join("config.resolved")).unwrap();
    assert_eq!(resolved_a, resolved_b);
    report("C8 rerun determinism", "bitwise-equal CSVs across reruns and thread counts", started);
}

/// Criterion 9: exact Wilcoxon matches direct sign-assignment enumeration.
#[test]
fn c9_wilcoxon_matches_enumeration() {
    let started = Instant::now();
    let mut rng = Rng::new(555);

    fn midranks(values: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].abs().partial_cmp(&values[b].abs()).unwrap());
        let mut ranks = vec![0.0; values.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j < order.len() && values[order[j]].abs() == values[order[i]].abs() {
                j += 1;
            }
            let mid = (i + 1 + j) as f64 / 2.0;
            for &idx in &order[i..j] {
                ranks[idx] = mid;
            }
            i = j;
        }
        ranks
    }

    for trial in 0..100 {
        let n = 1 + rng.below(12) as usize;
        let diffs: Vec<f64> = (0..n)
            .map(|_| (rng.uniform(-3.0, 3.0) * 2.0).round() / 2.0)
            .collect();
        let got = wilcoxon_signed_rank(&diffs);

        let nonzero: Vec<f64> = diffs.iter().cloned().filter(|&d| d != 0.0).collect();
        let expected = if nonzero.is_empty() {
            1.0
        } else {
            let ranks = midranks(&nonzero);
            let w_obs: f64 = nonzero
                .iter()
                .zip(&ranks)
                .filter(|(&d, _)| d > 0.0)
                .map(|(_, &r)| r)
                .sum();
            let mean: f64 = ranks.iter().sum::<f64>() / 2.0;
            let obs_dev = (w_obs - mean).abs();
            let k = nonzero.len();
            let mut extreme = 0u64;
            for mask in 0u64..(1 << k) {
                let w: f64 = (0..k).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
                if (w - mean).abs() >= obs_dev - 1e-9 {
                    extreme += 1;
                }
            }
            extreme as f64 / (1u64 << k) as f64
        };
        assert!(
            (got.p_value - expected).abs() <= 1e-9,
            "trial {trial}: {} vs {expected}",
            got.p_value
        );
    }
    report("C9 wilcoxon exact vs enumeration", "100 vectors, n <= 12", started);
}

/// Criterion 10: the full default grid completes within the budget.
#[test]
fn c10_full_grid_within_budget() {
    let started = Instant::now();
    let config = parse_config("").unwrap();
    assert_eq!(config.methods.len(), 6);
    assert_eq!(config.increments, vec![8, 4, 2]);
    assert_eq!(config.seeds.len(), 5);
    let dir = tempfile::tempdir().unwrap();
    let output = run_experiment(&config, dir.path(), 4).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1800.0, "grid took {elapsed:.0}s");
    assert!(output.warnings.is_empty(), "{:?}", output.warnings);
    // Sanity: every method has mean aggregate rows in every setting.
    for method in &config.methods {
        for &setting in &config.increments {
            assert!(output.metrics_rows.iter().any(|r| {
                r.seed == "mean"
                    && r.setting == setting
                    && format!("{}+{}", r.method, r.strategy) == method.name()
            }));
        }
    }
    assert!(dir.path().join("plots/auc_inc8.svg").exists());
    assert!(dir.path().join("plots/acc_inc2.svg").exists());
    report(
        "C10 full grid budget",
        &format!("6 methods x 3 settings x 5 seeds in {elapsed:.0}s"),
        started,
    );
}

/// Chance-level sanity: an untrained net scores near AUC 0.5.
#[test]
fn untrained_net_scores_near_chance() {
    let started = Instant::now();
    let spec = GenSpec {
        num_classes: 8,
        train_per_class: 20,
        test_per_class: 20,
        modality_dims: vec![6, 4],
        informativeness: vec![1.0, 1.0],
        dominance: vec![1.0, 1.0],
        spread: vec![1.0, 1.0],
        mean_scale: 1.5,
        degrade_prob: 0.0,
        degrade_factor: 1.0,
        seed: 31,
    };
    let data = generate(&spec).unwrap();
    let mut aucs = Vec::new();
    for seed in 1u64..=5 {
        let stream = split_tasks(&data, 4, seed, 0.5).unwrap();
        let mut rng = Rng::new(seed);
        let net = MultimodalNet::new(
            NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
            &mut rng,
        )
        .unwrap();
        let stats = EnergyStats {
            mean: vec![-1.0; 2],
            std: vec![1.0; 2],
            count: 1,
        };
        let eval = owcl::eval::evaluate_task(&net, Some(&stats), &stream, 0, Strategy::MaxLogit).unwrap();
        aucs.push(eval.auc.unwrap());
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "untrained AUC {mean}");
    let _ = NetGrads::zeros_like(
        &MultimodalNet::new(NetConfig::for_stream(vec![3], 2), &mut Rng::new(0)).unwrap(),
    );
    report("sanity untrained chance AUC", &format!("mean {mean:.3}"), started);
}
