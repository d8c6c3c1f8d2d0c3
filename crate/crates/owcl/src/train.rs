//! Replay trainers and the class-incremental outer loop.
//!
//! Three trainers share one loss pipeline:
//!
//! - `er`: cross-entropy on the current batch unioned with a replay batch.
//! - `fused_distill`: er plus a squared penalty tying the main logits of
//!   replayed exemplars to their stored fused logits.
//! - `modality_distill`: er plus per-modality head supervision (weight
//!   lambda) and a squared penalty tying each modality head to its own
//!   stored logits on replayed exemplars (weight beta).
//!
//! With lambda = beta = 0 all three reduce to the same arithmetic, which the
//! tests pin down bitwise.
//!
//! Independently of the objective, every trainer fits the modality heads
//! with a detached cross-entropy pass: gradients reach only the head
//! parameters, never the encoders, so the shared trunk is untouched. This
//! keeps the heads usable as scoring read-outs under every trainer without
//! perturbing any trainer's dynamics.

use crate::datagen::{Task, TaskStream};
use crate::error::{Error, Result};
use crate::memory::{BufferPolicy, EnergyStats, Exemplar, ReplayBuffer};
use crate::model::{MultimodalNet, NetConfig, NetGrads, ParamGroup};
use crate::numcore::{cross_entropy, LayerGrads, OptimizerKind, OptimizerState, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainerKind {
    Er,
    FusedDistill,
    ModalityDistill,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::Er => "er",
            TrainerKind::FusedDistill => "fused_distill",
            TrainerKind::ModalityDistill => "modality_distill",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "er" => Ok(TrainerKind::Er),
            "fused_distill" => Ok(TrainerKind::FusedDistill),
            "modality_distill" => Ok(TrainerKind::ModalityDistill),
            other => Err(Error::Input(format!("unknown trainer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub trainer: TrainerKind,
    /// Modality-supervision weight.
    pub lambda: f64,
    /// Distillation weight.
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Replay exemplars drawn per batch; defaults to the batch size.
    pub replay_batch: usize,
    /// Learning rate for the SGD groups (modality-0 encoder, fusion,
    /// classifier, heads).
    pub learning_rate: f64,
    /// Learning rate for the RMSProp groups (encoders of modality >= 1).
    pub rmsprop_learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    /// 1-based epochs at which the learning rate multiplies by
    /// `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub buffer_capacity: usize,
    pub buffer_policy: BufferPolicy,
}

impl TrainConfig {
    /// Desk-scale defaults: 20 epochs per task with lr x0.1 at epochs 8 and
    /// 14, batch 32 + 32 replay, lambda 0.3, beta 0.08, buffer 320.
    pub fn desk_default(trainer: TrainerKind) -> Self {
        TrainConfig {
            trainer,
            lambda: 0.3,
            beta: 0.08,
            epochs: 20,
            batch_size: 32,
            replay_batch: 32,
            learning_rate: 0.04,
            rmsprop_learning_rate: 0.006,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            decay_epochs: vec![8, 14],
            decay_factor: 0.1,
            buffer_capacity: 320,
            buffer_policy: BufferPolicy::RandomBalanced,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Domain(format!("beta {} must be >= 0", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.rmsprop_learning_rate > 0.0) {
            return Err(Error::Domain("learning rates must be positive".into()));
        }
        if !(0.0 < self.decay_factor && self.decay_factor <= 1.0) {
            return Err(Error::Domain(format!(
                "decay_factor {} must lie in (0, 1]",
                self.decay_factor
            )));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Domain("buffer capacity must be >= 1".into()));
        }
        Ok(())
    }
}

/// Components of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_ce_main: f64,
    pub l_ce_modality_avg: f64,
    pub l_sup: f64,
    pub l_kd: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    fn zero() -> Self {
        LossBreakdown {
            l_ce_main: 0.0,
            l_ce_modality_avg: 0.0,
            l_sup: 0.0,
            l_kd: 0.0,
            l_total: 0.0,
        }
    }
}

/// One loss evaluation: the objective value and its exact gradients, plus
/// the detached head-calibration gradients that are applied alongside them.
#[derive(Debug)]
pub struct LossComputation {
    pub breakdown: LossBreakdown,
    /// Exact gradients of `breakdown.l_total`.
    pub grads: NetGrads,
    /// Detached per-head cross-entropy gradients (head parameters only).
    pub head_fit: Vec<LayerGrads>,
}

/// Loss and gradients for one union batch under the configured trainer.
///
/// Cross-entropy terms average over the union of `batch` and `replay`; the
/// distillation term averages over `replay` only and compares only the
/// prefix covered by the stored logits. The returned `grads` are exactly
/// the objective's gradients; the detached head fit is reported separately.
pub fn compute_loss(
    net: &MultimodalNet,
    batch: &[&crate::datagen::MultimodalSample],
    replay: &[&Exemplar],
    config: &TrainConfig,
) -> Result<LossComputation> {
    let union_len = batch.len() + replay.len();
    if union_len == 0 {
        return Err(Error::Input("loss over an empty batch".into()));
    }
    let m_count = net.modality_count() as f64;
    let inv_union = 1.0 / union_len as f64;
    let inv_replay = if replay.is_empty() { 0.0 } else { 1.0 / replay.len() as f64 };

    let mut grads = NetGrads::zeros_like(net);
    let mut head_fit: Vec<LayerGrads> = net.heads.iter().map(LayerGrads::zeros_like).collect();
    let mut breakdown = LossBreakdown::zero();

    let heads_trained = config.trainer == TrainerKind::ModalityDistill && config.lambda != 0.0;
    let heads_distilled = config.trainer == TrainerKind::ModalityDistill && config.beta != 0.0;
    let fused_distilled = config.trainer == TrainerKind::FusedDistill && config.beta != 0.0;

    let mut run_sample = |sample: &crate::datagen::MultimodalSample,
                          stored: Option<&Exemplar>|
     -> Result<()> {
        let (out, trace) = net.forward_traced(sample)?;

        let (ce_main, ce_main_grad) = cross_entropy(&out.main_logits, sample.label)?;
        breakdown.l_ce_main += ce_main * inv_union;
        let mut d_main: Vec<f64> = ce_main_grad.iter().map(|g| g * inv_union).collect();

        // Per-modality head cross-entropy: always reported and always fed to
        // the detached calibration; joint gradients flow only under the
        // modality trainer's lambda.
        let mut ce_mod_sum = 0.0;
        let mut head_ce_grads: Vec<Vec<f64>> = Vec::with_capacity(out.modality_logits.len());
        for z in &out.modality_logits {
            let (ce, grad) = cross_entropy(z, sample.label)?;
            ce_mod_sum += ce;
            head_ce_grads.push(grad);
        }
        breakdown.l_ce_modality_avg += ce_mod_sum / m_count * inv_union;
        for (m, grad) in head_ce_grads.iter().enumerate() {
            let scaled: Vec<f64> = grad.iter().map(|g| g * inv_union).collect();
            net.heads[m].backward(
                &out.embeddings[m],
                &out.modality_logits[m],
                &scaled,
                &mut head_fit[m],
                None,
            )?;
        }

        let mut d_heads: Option<Vec<Vec<f64>>> = None;
        if heads_trained {
            let scale = config.lambda / m_count * inv_union;
            let mut head_grads = head_ce_grads;
            for g in &mut head_grads {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            d_heads = Some(head_grads);
        }

        if let Some(exemplar) = stored {
            match config.trainer {
                TrainerKind::ModalityDistill => {
                    let mut kd = 0.0;
                    for (m, stored_z) in exemplar.stored_modality_logits.iter().enumerate() {
                        let z = &out.modality_logits[m];
                        let k = stored_z.len().min(z.len());
                        for c in 0..k {
                            let d = stored_z[c] - z[c];
                            kd += d * d;
                        }
                        if heads_distilled {
                            let dh = d_heads.get_or_insert_with(|| {
                                vec![vec![0.0; out.main_logits.len()]; out.modality_logits.len()]
                            });
                            let scale = 2.0 * config.beta * inv_replay;
                            for c in 0..k {
                                dh[m][c] += scale * (z[c] - stored_z[c]);
                            }
                        }
                    }
                    breakdown.l_kd += kd * inv_replay;
                }
                TrainerKind::FusedDistill => {
                    let stored_z = &exemplar.stored_fused_logits;
                    let k = stored_z.len().min(out.main_logits.len());
                    let mut kd = 0.0;
                    for c in 0..k {
                        let d = stored_z[c] - out.main_logits[c];
                        kd += d * d;
                    }
                    breakdown.l_kd += kd * inv_replay;
                    if fused_distilled {
                        let scale = 2.0 * config.beta * inv_replay;
                        for c in 0..k {
                            d_main[c] += scale * (out.main_logits[c] - stored_z[c]);
                        }
                    }
                }
                TrainerKind::Er => {}
            }
        }

        net.backward(&out, &trace, &d_main, d_heads.as_deref(), &mut grads)
    };

    for sample in batch {
        run_sample(sample, None)?;
    }
    for exemplar in replay {
        run_sample(&exemplar.sample, Some(exemplar))?;
    }

    let lambda = if config.trainer == TrainerKind::ModalityDistill {
        config.lambda
    } else {
        0.0
    };
    let beta = if config.trainer == TrainerKind::Er {
        0.0
    } else {
        config.beta
    };
    breakdown.l_sup = breakdown.l_ce_main + lambda * breakdown.l_ce_modality_avg;
    breakdown.l_total = breakdown.l_sup + beta * breakdown.l_kd;
    if !breakdown.l_total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss {:?}",
            breakdown
        )));
    }
    Ok(LossComputation {
        breakdown,
        grads,
        head_fit,
    })
}

/// Optimizer bank: one state per parameter buffer. The modality-0 encoder
/// uses SGD and the remaining encoders RMSProp; fusion, classifier and
/// heads use SGD. Accumulators reset at every task boundary (a bank is
/// built per task).
struct NetOptimizer {
    states: Vec<OptimizerState>,
    base_rates: Vec<f64>,
}

impl NetOptimizer {
    fn new(net: &MultimodalNet, config: &TrainConfig) -> Result<Self> {
        let states: Vec<OptimizerState> = net
            .buffer_groups()
            .into_iter()
            .map(|group| match group {
                ParamGroup::Encoder(m) if m > 0 => OptimizerState::new(
                    OptimizerKind::RmsProp {
                        decay: config.rmsprop_decay,
                        epsilon: config.rmsprop_epsilon,
                    },
                    config.rmsprop_learning_rate,
                ),
                _ => OptimizerState::new(OptimizerKind::Sgd, config.learning_rate),
            })
            .collect::<Result<_>>()?;
        let base_rates = states.iter().map(|s| s.learning_rate).collect();
        Ok(NetOptimizer { states, base_rates })
    }

    fn set_scale(&mut self, scale: f64) {
        for (state, &base) in self.states.iter_mut().zip(&self.base_rates) {
            state.learning_rate = base * scale;
        }
    }

    fn step(&mut self, net: &mut MultimodalNet, grads: &NetGrads) -> Result<()> {
        let grad_bufs = grads.buffers();
        let param_bufs = net.param_buffers_mut();
        if grad_bufs.len() != param_bufs.len() || param_bufs.len() != self.states.len() {
            return Err(Error::shape(
                "optimizer bank",
                format!("{} params", param_bufs.len()),
                format!("{} grads, {} states", grad_bufs.len(), self.states.len()),
            ));
        }
        for ((params, grad), state) in param_bufs.into_iter().zip(grad_bufs).zip(&mut self.states) {
            state.step(params, grad)?;
        }
        Ok(())
    }
}

/// Learning-rate multiplier in force during a 1-based epoch.
fn lr_scale(config: &TrainConfig, epoch_1based: usize) -> f64 {
    let decays = config
        .decay_epochs
        .iter()
        .filter(|&&d| d <= epoch_1based)
        .count();
    config.decay_factor.powi(decays as i32)
}

/// One logged epoch: batch-averaged loss components.
#[derive(Debug, Clone)]
pub struct EpochLoss {
    pub task: usize,
    pub epoch: usize,
    pub lr_scale: f64,
    pub breakdown: LossBreakdown,
}

/// Trains the net on one task. Every mini-batch is concatenated with a
/// replay batch (empty during the first task). Deterministic in `rng`.
pub fn train_task(
    net: &mut MultimodalNet,
    buffer: &ReplayBuffer,
    task: &Task,
    task_index: usize,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<EpochLoss>> {
    config.validate()?;
    if task.train.is_empty() {
        return Err(Error::Input(format!("task {task_index} has no training data")));
    }
    let mut log = Vec::with_capacity(config.epochs);
    let mut optimizer = NetOptimizer::new(net, config)?;

    for epoch in 0..config.epochs {
        let scale = lr_scale(config, epoch + 1);
        optimizer.set_scale(scale);

        let mut order: Vec<usize> = (0..task.train.len()).collect();
        rng.shuffle(&mut order);

        let mut epoch_sum = LossBreakdown::zero();
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&crate::datagen::MultimodalSample> =
                chunk.iter().map(|&i| &task.train[i]).collect();
            let replay = buffer.sample_batch(config.replay_batch, rng);
            let mut step = compute_loss(net, &batch, &replay, config).map_err(|e| {
                Error::Numeric(format!(
                    "task {task_index} epoch {epoch} batch {batches}: {e}"
                ))
            })?;
            // Fold the detached head calibration into the head gradients.
            for (joint, fit) in step.grads.heads.iter_mut().zip(&step.head_fit) {
                for (a, b) in joint.d_weights.data_mut().iter_mut().zip(fit.d_weights.data()) {
                    *a += b;
                }
                for (a, b) in joint.d_bias.iter_mut().zip(&fit.d_bias) {
                    *a += b;
                }
            }
            let breakdown = step.breakdown;
            optimizer.step(net, &step.grads)?;
            epoch_sum.l_ce_main += breakdown.l_ce_main;
            epoch_sum.l_ce_modality_avg += breakdown.l_ce_modality_avg;
            epoch_sum.l_sup += breakdown.l_sup;
            epoch_sum.l_kd += breakdown.l_kd;
            epoch_sum.l_total += breakdown.l_total;
            batches += 1;
        }
        let inv = 1.0 / batches as f64;
        log.push(EpochLoss {
            task: task_index,
            epoch,
            lr_scale: scale,
            breakdown: LossBreakdown {
                l_ce_main: epoch_sum.l_ce_main * inv,
                l_ce_modality_avg: epoch_sum.l_ce_modality_avg * inv,
                l_sup: epoch_sum.l_sup * inv,
                l_kd: epoch_sum.l_kd * inv,
                l_total: epoch_sum.l_total * inv,
            },
        });
    }
    Ok(log)
}

/// Frozen state retained after each task: the trained snapshot, the buffer
/// statistics in force for the following evaluation, and the loss log.
#[derive(Debug, Clone)]
pub struct TaskArtifacts {
    pub snapshot: MultimodalNet,
    pub stats: EnergyStats,
    pub epoch_log: Vec<EpochLoss>,
    pub insert_warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StreamRun {
    pub per_task: Vec<TaskArtifacts>,
    pub buffer: ReplayBuffer,
}

/// Runs the full class-incremental loop: expand classes, train the task,
/// fold its data into the buffer, refresh energy statistics, snapshot.
pub fn run_stream(stream: &TaskStream, config: &TrainConfig, rng: &mut Rng) -> Result<StreamRun> {
    config.validate()?;
    if stream.tasks.is_empty() {
        return Err(Error::Input("empty task stream".into()));
    }
    let mut net = MultimodalNet::new(
        NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
        rng,
    )?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, config.buffer_policy);
    let mut per_task = Vec::with_capacity(stream.num_tasks());

    for (t, task) in stream.tasks.iter().enumerate() {
        net.expand_classes(stream.classes_after(t), rng)?;
        let epoch_log = train_task(&mut net, &buffer, task, t, config, rng)?;
        let outcome = buffer.insert_task(&task.train, &net, t, rng)?;
        let stats = buffer.refresh_stats(&net)?;
        per_task.push(TaskArtifacts {
            snapshot: net.clone(),
            stats,
            epoch_log,
            insert_warning: outcome.warning,
        });
    }
    Ok(StreamRun { per_task, buffer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, split_tasks, GenSpec, MultimodalSample};
    use crate::numcore::grad_check;

    fn toy_spec(classes: usize, spread: f64) -> GenSpec {
        GenSpec {
            num_classes: classes,
            train_per_class: 30,
            test_per_class: 10,
            modality_dims: vec![4, 3],
            informativeness: vec![1.0, 1.0],
            dominance: vec![1.0, 1.0],
            spread: vec![spread, spread],
            mean_scale: 2.5,
            degrade_prob: 0.0,
            degrade_factor: 1.0,
            seed: 17,
        }
    }

    fn toy_stream(classes: usize, increment: usize, spread: f64) -> TaskStream {
        let data = generate(&toy_spec(classes, spread)).unwrap();
        split_tasks(&data, increment, 5, 0.25).unwrap()
    }

    fn quick_config(trainer: TrainerKind) -> TrainConfig {
        let mut config = TrainConfig::desk_default(trainer);
        config.epochs = 3;
        config.batch_size = 16;
        config.replay_batch = 16;
        config.decay_epochs = vec![2];
        config
    }

    fn prepared_net_and_buffer(
        stream: &TaskStream,
        config: &TrainConfig,
        rng: &mut Rng,
    ) -> (MultimodalNet, ReplayBuffer) {
        // Briefly train task 0 so the buffer holds exemplars with stored
        // logits that differ from the current outputs.
        let mut net = MultimodalNet::new(
            NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
            rng,
        )
        .unwrap();
        let mut buffer = ReplayBuffer::new(config.buffer_capacity, config.buffer_policy);
        let mut brief = config.clone();
        brief.epochs = 1;
        train_task(&mut net, &buffer, &stream.tasks[0], 0, &brief, rng).unwrap();
        buffer
            .insert_task(&stream.tasks[0].train, &net, 0, rng)
            .unwrap();
        net.expand_classes(stream.classes_after(1), rng).unwrap();
        (net, buffer)
    }

    #[test]
    fn empty_replay_means_no_distillation() {
        let mut rng = Rng::new(100);
        let stream = toy_stream(4, 2, 0.5);
        let config = quick_config(TrainerKind::ModalityDistill);
        let net = MultimodalNet::new(
            NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
            &mut rng,
        )
        .unwrap();
        let batch: Vec<&MultimodalSample> = stream.tasks[0].train.iter().take(8).collect();
        let breakdown = compute_loss(&net, &batch, &[], &config).unwrap().breakdown;
        assert_eq!(breakdown.l_kd, 0.0);
        assert_eq!(breakdown.l_total, breakdown.l_sup);
        assert!(compute_loss(&net, &[], &[], &config).is_err());
    }

    #[test]
    fn matching_stored_logits_zero_the_distillation_term() {
        let mut rng = Rng::new(101);
        let stream = toy_stream(4, 2, 0.5);
        let config = quick_config(TrainerKind::ModalityDistill);
        // Build exemplars from the current net: stored logits match exactly.
        let net = MultimodalNet::new(
            NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
            &mut rng,
        )
        .unwrap();
        let mut buffer = ReplayBuffer::new(16, BufferPolicy::RandomBalanced);
        buffer
            .insert_task(&stream.tasks[0].train, &net, 0, &mut rng)
            .unwrap();
        let replay: Vec<&Exemplar> = buffer.exemplars().iter().take(6).collect();
        let batch: Vec<&MultimodalSample> = stream.tasks[0].train.iter().take(4).collect();

        let breakdown = compute_loss(&net, &batch, &replay, &config).unwrap().breakdown;
        assert!(breakdown.l_kd.abs() < 1e-24, "l_kd {}", breakdown.l_kd);

        let fused_config = quick_config(TrainerKind::FusedDistill);
        let breakdown = compute_loss(&net, &batch, &replay, &fused_config).unwrap().breakdown;
        assert!(breakdown.l_kd.abs() < 1e-24);
    }

    #[test]
    fn perturbing_a_head_strictly_increases_distillation() {
        let mut rng = Rng::new(102);
        let stream = toy_stream(4, 2, 0.5);
        let config = quick_config(TrainerKind::ModalityDistill);
        let mut net = MultimodalNet::new(
            NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
            &mut rng,
        )
        .unwrap();
        let mut buffer = ReplayBuffer::new(16, BufferPolicy::RandomBalanced);
        buffer
            .insert_task(&stream.tasks[0].train, &net, 0, &mut rng)
            .unwrap();
        let batch: Vec<&MultimodalSample> = stream.tasks[0].train.iter().take(4).collect();
        let replay: Vec<&Exemplar> = buffer.exemplars().iter().take(6).collect();
        let base = compute_loss(&net, &batch, &replay, &config).unwrap().breakdown;

        net.heads[0].bias[0] += 0.5;
        let bumped = compute_loss(&net, &batch, &replay, &config).unwrap().breakdown;
        assert!(bumped.l_kd > base.l_kd);
    }

    #[test]
    fn zeroed_weights_reduce_every_trainer_to_er_bitwise() {
        let stream = toy_stream(4, 2, 0.5);
        let mut er_cfg = quick_config(TrainerKind::Er);
        let mut morst_cfg = quick_config(TrainerKind::ModalityDistill);
        morst_cfg.lambda = 0.0;
        morst_cfg.beta = 0.0;
        let mut fused_cfg = quick_config(TrainerKind::FusedDistill);
        fused_cfg.beta = 0.0;
        er_cfg.lambda = 0.0;
        er_cfg.beta = 0.0;

        let mut rng = Rng::new(103);
        let (net, buffer) = prepared_net_and_buffer(&stream, &er_cfg, &mut rng);
        let batch: Vec<&MultimodalSample> = stream.tasks[1].train.iter().take(8).collect();
        let replay: Vec<&Exemplar> = buffer.exemplars().iter().take(8).collect();

        let er_step = compute_loss(&net, &batch, &replay, &er_cfg).unwrap();
        for config in [&morst_cfg, &fused_cfg] {
            let step = compute_loss(&net, &batch, &replay, config).unwrap();
            assert_eq!(step.breakdown.l_total.to_bits(), er_step.breakdown.l_total.to_bits());
            let a = step.grads.flat();
            let b = er_step.grads.flat();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            // The detached calibration is identical across trainers too.
            for (fa, fb) in step.head_fit.iter().zip(&er_step.head_fit) {
                assert_eq!(fa.d_weights.data(), fb.d_weights.data());
                assert_eq!(fa.d_bias, fb.d_bias);
            }
        }
    }

    /// Independent scalar recomputation of the full objective from forward
    /// outputs, plus a finite-difference check of its gradients.
    #[test]
    fn loss_matches_scalar_oracle_and_grad_check() {
        let stream = toy_stream(4, 2, 0.5);
        for trainer in [
            TrainerKind::ModalityDistill,
            TrainerKind::FusedDistill,
            TrainerKind::Er,
        ] {
            let config = quick_config(trainer);
            let mut rng = Rng::new(104);
            let (net, buffer) = prepared_net_and_buffer(&stream, &config, &mut rng);
            let batch: Vec<&MultimodalSample> = stream.tasks[1].train.iter().take(5).collect();
            let replay: Vec<&Exemplar> = buffer.exemplars().iter().take(5).collect();

            let step = compute_loss(&net, &batch, &replay, &config).unwrap();
            let breakdown = step.breakdown;

            // Scalar oracle straight from the definitions.
            let union: Vec<&MultimodalSample> = batch
                .iter()
                .cloned()
                .chain(replay.iter().map(|e| &e.sample))
                .collect();
            let naive_ce = |z: &[f64], y: usize| -> f64 {
                let sum: f64 = z.iter().map(|&v| v.exp()).sum();
                sum.ln() - z[y]
            };
            let mut ce_main = 0.0;
            let mut ce_mod = 0.0;
            for s in &union {
                let out = net.forward(s).unwrap();
                ce_main += naive_ce(&out.main_logits, s.label);
                let per_mod: f64 = out
                    .modality_logits
                    .iter()
                    .map(|z| naive_ce(z, s.label))
                    .sum::<f64>()
                    / out.modality_logits.len() as f64;
                ce_mod += per_mod;
            }
            ce_main /= union.len() as f64;
            ce_mod /= union.len() as f64;
            let mut kd = 0.0;
            for e in &replay {
                let out = net.forward(&e.sample).unwrap();
                match trainer {
                    TrainerKind::ModalityDistill => {
                        for (m, stored) in e.stored_modality_logits.iter().enumerate() {
                            for (c, &sz) in stored.iter().enumerate() {
                                kd += (sz - out.modality_logits[m][c]).powi(2);
                            }
                        }
                    }
                    TrainerKind::FusedDistill => {
                        for (c, &sz) in e.stored_fused_logits.iter().enumerate() {
                            kd += (sz - out.main_logits[c]).powi(2);
                        }
                    }
                    TrainerKind::Er => {}
                }
            }
            kd /= replay.len() as f64;
            let expected = match trainer {
                TrainerKind::ModalityDistill => ce_main + config.lambda * ce_mod + config.beta * kd,
                TrainerKind::FusedDistill => ce_main + config.beta * kd,
                TrainerKind::Er => ce_main,
            };
            assert!(
                (breakdown.l_total - expected).abs() <= 1e-10,
                "{trainer:?}: {} vs {expected}",
                breakdown.l_total
            );
            // Decomposition identity.
            assert!(
                (breakdown.l_sup
                    - (breakdown.l_ce_main
                        + if trainer == TrainerKind::ModalityDistill {
                            config.lambda * breakdown.l_ce_modality_avg
                        } else {
                            0.0
                        }))
                .abs()
                    <= 1e-12
            );

            // Finite differences over the flat parameter vector.
            let theta = net.flat_params();
            let mut probe = net.clone();
            let err = grad_check(&theta, &step.grads.flat(), 1e-5, |p| {
                probe.set_flat_params(p)?;
                Ok(compute_loss(&probe, &batch, &replay, &config)?.breakdown.l_total)
            })
            .unwrap();
            assert!(err <= 1e-4, "{trainer:?}: grad err {err}");
        }
    }

    #[test]
    fn zero_epochs_leave_the_net_bitwise_unchanged() {
        let stream = toy_stream(4, 2, 0.5);
        let mut config = quick_config(TrainerKind::Er);
        config.epochs = 0;
        let mut rng = Rng::new(105);
        let mut net = MultimodalNet::new(
            NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
            &mut rng,
        )
        .unwrap();
        let before = net.flat_params();
        let buffer = ReplayBuffer::new(config.buffer_capacity, config.buffer_policy);
        let log = train_task(&mut net, &buffer, &stream.tasks[0], 0, &config, &mut rng).unwrap();
        assert!(log.is_empty());
        assert_eq!(before, net.flat_params());
    }

    #[test]
    fn one_epoch_fits_separable_two_class_toy() {
        // Spread 0.1 makes the two clusters essentially disjoint.
        let mut spec = toy_spec(2, 0.1);
        spec.train_per_class = 100;
        let data = generate(&spec).unwrap();
        let stream = split_tasks(&data, 2, 3, 0.2).unwrap();
        let mut config = quick_config(TrainerKind::Er);
        config.epochs = 1;
        config.batch_size = 16;

        let mut rng = Rng::new(106);
        let mut net = MultimodalNet::new(
            NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
            &mut rng,
        )
        .unwrap();
        let buffer = ReplayBuffer::new(config.buffer_capacity, config.buffer_policy);
        train_task(&mut net, &buffer, &stream.tasks[0], 0, &config, &mut rng).unwrap();

        let correct = stream.tasks[0]
            .train
            .iter()
            .filter(|s| crate::score::predict(&net, s).unwrap() == s.label)
            .count();
        let acc = correct as f64 / stream.tasks[0].train.len() as f64;
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn same_seed_gives_bitwise_identical_runs() {
        let stream = toy_stream(4, 2, 0.5);
        let config = quick_config(TrainerKind::ModalityDistill);
        let run = |seed: u64| {
            let mut rng = Rng::new(seed);
            run_stream(&stream, &config, &mut rng).unwrap()
        };
        let a = run(42);
        let b = run(42);
        let c = run(43);
        for (ta, tb) in a.per_task.iter().zip(&b.per_task) {
            assert_eq!(ta.snapshot.flat_params(), tb.snapshot.flat_params());
            assert_eq!(ta.stats, tb.stats);
        }
        assert_ne!(
            a.per_task.last().unwrap().snapshot.flat_params(),
            c.per_task.last().unwrap().snapshot.flat_params()
        );
    }

    #[test]
    fn reduction_lattice_is_bitwise_on_full_streams() {
        let stream = toy_stream(4, 2, 0.5);
        let mut er_cfg = quick_config(TrainerKind::Er);
        er_cfg.lambda = 0.0;
        er_cfg.beta = 0.0;
        let mut morst_cfg = er_cfg.clone();
        morst_cfg.trainer = TrainerKind::ModalityDistill;
        let mut fused_cfg = er_cfg.clone();
        fused_cfg.trainer = TrainerKind::FusedDistill;

        let run = |config: &TrainConfig| {
            let mut rng = Rng::new(7);
            run_stream(&stream, config, &mut rng).unwrap()
        };
        let er = run(&er_cfg);
        let morst = run(&morst_cfg);
        let fused = run(&fused_cfg);
        for t in 0..stream.num_tasks() {
            let reference = er.per_task[t].snapshot.flat_params();
            assert_eq!(reference, morst.per_task[t].snapshot.flat_params());
            assert_eq!(reference, fused.per_task[t].snapshot.flat_params());
        }
    }

    #[test]
    fn run_stream_covers_all_tasks_and_balances_buffer() {
        let stream = toy_stream(4, 2, 0.5);
        let mut config = quick_config(TrainerKind::Er);
        config.buffer_capacity = 40;
        let mut rng = Rng::new(108);
        let run = run_stream(&stream, &config, &mut rng).unwrap();
        assert_eq!(run.per_task.len(), 2);
        for class in 0..4 {
            let count = run
                .buffer
                .exemplars()
                .iter()
                .filter(|e| e.sample.label == class)
                .count();
            assert_eq!(count, config.buffer_capacity / 4);
        }
        assert_eq!(run.per_task[0].snapshot.current_classes(), 2);
        assert_eq!(run.per_task[1].snapshot.current_classes(), 4);

        let eight = toy_stream(16, 2, 0.5);
        let mut quick = config.clone();
        quick.epochs = 1;
        let run = run_stream(&eight, &quick, &mut Rng::new(9)).unwrap();
        assert_eq!(run.per_task.len(), 8);
    }

    #[test]
    fn lr_decay_applies_exactly_at_boundaries() {
        let stream = toy_stream(4, 2, 0.5);
        let mut config = quick_config(TrainerKind::Er);
        config.epochs = 5;
        config.decay_epochs = vec![2, 4];
        let mut rng = Rng::new(109);
        let mut net = MultimodalNet::new(
            NetConfig::for_stream(stream.modality_dims.clone(), stream.increment),
            &mut rng,
        )
        .unwrap();
        let buffer = ReplayBuffer::new(config.buffer_capacity, config.buffer_policy);
        let log = train_task(&mut net, &buffer, &stream.tasks[0], 0, &config, &mut rng).unwrap();
        let scales: Vec<f64> = log.iter().map(|e| e.lr_scale).collect();
        let expect = [1.0, 0.1, 0.1, 0.1 * 0.1, 0.1 * 0.1];
        for (s, e) in scales.iter().zip(expect) {
            assert!((s - e).abs() < 1e-15, "{scales:?}");
        }
    }

    #[test]
    fn decomposition_identity_holds_for_every_logged_epoch() {
        let stream = toy_stream(4, 2, 0.5);
        let config = quick_config(TrainerKind::ModalityDistill);
        let mut rng = Rng::new(110);
        let run = run_stream(&stream, &config, &mut rng).unwrap();
        for artifacts in &run.per_task {
            for epoch in &artifacts.epoch_log {
                let b = &epoch.breakdown;
                assert!((b.l_sup - (b.l_ce_main + config.lambda * b.l_ce_modality_avg)).abs() < 1e-9);
                assert!((b.l_total - (b.l_sup + config.beta * b.l_kd)).abs() < 1e-9);
                assert!(b.l_ce_main >= 0.0 && b.l_kd >= 0.0);
            }
        }
    }
}
