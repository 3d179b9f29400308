//! Pretraining and finetuning loops with exact per-sample gradients.
//!
//! Every training gradient comes from the same exact-gradient routines the
//! rest of the library exposes; nothing is sampled. A full-batch (or
//! shuffled minibatch) step averages per-sample gradients, applies one
//! optimizer update, and optionally logs group-split metrics. Per-sample
//! work is parallelized in fixed-size chunks combined in index order, so
//! results are bit-identical regardless of thread count.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::fmt::fmt_f64;
use crate::grad::{entropy_grad, grad_sft, grad_value, OutputTarget};
use crate::policy::{Input, PolicyError, SoftmaxPolicy, DEFAULT_ENUM_CAP};
use crate::reward::{reward_stats, RewardSpec};
use crate::seeding::substream;

use super::optim::{apply_step, Batch, OptState, OptimizerConfig};
use super::{ControlledDataset, ControlledSpec, Group, TrainError};

/// Seed substreams: the dataset builder uses the base stream, so training
/// internals draw from distinct ones.
const STREAM_INIT: u64 = 1;
const STREAM_BATCH: u64 = 2;

/// Samples per parallel accumulation chunk. Chunks are summed in index
/// order, making the batch gradient independent of thread scheduling.
const GRAD_CHUNK: usize = 64;

const CAP: usize = DEFAULT_ENUM_CAP;

/// Allowed gap between the final pretraining cross-entropy and the entropy
/// of the uniform target, in nats.
pub const PRETRAIN_TOLERANCE: f64 = 0.05;

/// Which gradient a metrics pass reports the norm of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricObjective {
    /// Expected-reward gradient.
    Value,
    /// Cross-entropy gradient against the one-hot finetuning label.
    CrossEntropy,
}

/// Per-sample snapshot used for traces, medians, and mitigation counts.
#[derive(Debug, Clone, Copy)]
pub struct SampleMetrics {
    pub reward_mean: f64,
    pub reward_std: f64,
    pub grad_norm: f64,
    pub ce_loss: f64,
    pub correct: bool,
}

/// One logged aggregate: a group's means at an optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub group: Group,
    pub reward_mean: f64,
    pub reward_std_mean: f64,
    pub grad_norm_mean: f64,
    pub ce_loss: f64,
    pub accuracy: f64,
}

/// Group-split training curve. Only metric rows participate in equality;
/// the wall-clock duration is informational and never exported.
#[derive(Debug, Clone)]
pub struct TrainingTrace {
    rows: Vec<TraceRow>,
    pub elapsed_ms: u128,
}

impl TrainingTrace {
    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn group_rows(&self, group: Group) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.group == group)
    }

    pub fn first_row(&self, group: Group) -> Option<&TraceRow> {
        self.group_rows(group).next()
    }

    pub fn last_row(&self, group: Group) -> Option<&TraceRow> {
        self.group_rows(group).last()
    }

    pub fn last_step(&self) -> usize {
        self.rows.last().map_or(0, |r| r.step)
    }

    /// CSV with one row per (step, group); floats at full precision.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "step,group,reward_mean,reward_std_mean,grad_norm_mean,ce_loss,accuracy")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step,
                r.group.label(),
                fmt_f64(r.reward_mean),
                fmt_f64(r.reward_std_mean),
                fmt_f64(r.grad_norm_mean),
                fmt_f64(r.ce_loss),
                fmt_f64(r.accuracy),
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Optional knobs for reward finetuning.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Divide logits by this everywhere (generation and gradients) when set.
    pub temperature: Option<f64>,
    /// Weight of the sequence-entropy bonus added to the ascent direction.
    pub entropy_coeff: f64,
    /// Optimizer steps between logged trace points (step 0 and the final
    /// step are always logged).
    pub log_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { temperature: None, entropy_coeff: 0.0, log_every: 50 }
    }
}

/// Training target of the shared loop.
enum TrainMode<'a> {
    /// Ascend the expected reward (optionally entropy-regularized).
    Reward { entropy_coeff: f64 },
    /// Descend the cross-entropy to fixed per-sample targets.
    Supervised { targets: &'a [OutputTarget] },
}

impl TrainMode<'_> {
    /// Descent-oriented per-sample gradient; reward ascent is descent on
    /// the negated value.
    fn descent_grad(
        &self,
        policy: &SoftmaxPolicy,
        dataset: &ControlledDataset,
        i: usize,
        reward: &RewardSpec,
    ) -> Result<Vec<f64>, TrainError> {
        let x = Input::Features(dataset.inputs[i].clone());
        match self {
            TrainMode::Reward { entropy_coeff } => {
                let mut g = grad_value(policy, i, &x, reward, CAP)?.into_values();
                if *entropy_coeff != 0.0 {
                    let h = entropy_grad(policy, &x, CAP)?;
                    for (gi, hi) in g.iter_mut().zip(&h) {
                        *gi += entropy_coeff * hi;
                    }
                }
                for gi in &mut g {
                    *gi = -*gi;
                }
                Ok(g)
            }
            TrainMode::Supervised { targets } => {
                Ok(grad_sft(policy, &x, &targets[i])?.into_values())
            }
        }
    }

    /// Cross-entropy of the mode's target at one sample (reward mode uses
    /// the one-hot finetuning label as its diagnostic target).
    fn ce_loss(
        &self,
        policy: &SoftmaxPolicy,
        dataset: &ControlledDataset,
        i: usize,
        x: &Input,
    ) -> Result<f64, TrainError> {
        match self {
            TrainMode::Reward { .. } => {
                Ok(-policy.seq_prob(x, &[dataset.finetune_labels[i]])?.ln())
            }
            TrainMode::Supervised { targets } => {
                let mut loss = 0.0;
                for (y, w) in targets[i].pairs() {
                    loss -= w * policy.seq_prob(x, y)?.ln();
                }
                Ok(loss)
            }
        }
    }
}

/// Symmetric uniform fan-in initialization: every block belonging to a
/// layer with fan-in `f` is drawn from `U(-sqrt(1/f), sqrt(1/f))`,
/// deterministically in the spec seed.
pub fn init_policy(spec: &ControlledSpec) -> Result<SoftmaxPolicy, TrainError> {
    spec.validate()?;
    let vocab = spec.vocabulary();
    let arch = spec.architecture();
    let mut rng = substream(spec.seed, STREAM_INIT);
    let feat = arch.feature_dim(&vocab);
    let mut fan_in_chain: Vec<usize> = vec![feat];
    if let super::ModelKind::Mlp(hidden) = &spec.model {
        fan_in_chain.extend(hidden.iter().copied());
    }
    let mut values = Vec::new();
    for (block_index, (_, len)) in arch.layout(&vocab)?.iter().enumerate() {
        // Blocks come in (weight, bias) pairs for the mlp and a single
        // weight block for the linear model; both entries of a pair share
        // the layer's fan-in.
        let layer = block_index / 2;
        let fan_in = fan_in_chain[layer.min(fan_in_chain.len() - 1)];
        let bound = (1.0 / fan_in as f64).sqrt();
        values.extend((0..*len).map(|_| rng.gen_range(-bound..bound)));
    }
    Ok(SoftmaxPolicy::new(vocab, arch, values)?)
}

fn as_input(dataset: &ControlledDataset, i: usize) -> Input {
    Input::Features(dataset.inputs[i].clone())
}

/// Per-sample metrics over the whole dataset under the given policy.
pub fn sample_metrics(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
    objective: MetricObjective,
) -> Result<Vec<SampleMetrics>, TrainError> {
    let mode_targets: Vec<OutputTarget> = match objective {
        MetricObjective::Value => Vec::new(),
        MetricObjective::CrossEntropy => one_hot_targets(dataset),
    };
    let mode = match objective {
        MetricObjective::Value => TrainMode::Reward { entropy_coeff: 0.0 },
        MetricObjective::CrossEntropy => TrainMode::Supervised { targets: &mode_targets },
    };
    collect_metrics(policy, dataset, reward, &mode)
}

fn collect_metrics(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
    mode: &TrainMode<'_>,
) -> Result<Vec<SampleMetrics>, TrainError> {
    (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let x = as_input(dataset, i);
            let stats = reward_stats(policy, i, &x, reward, CAP)?;
            let g = mode.descent_grad(policy, dataset, i, reward)?;
            let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ce_loss = mode.ce_loss(policy, dataset, i, &x)?;
            let table = policy.distribution(&x, CAP)?;
            let (mut best, mut best_p) = (0usize, f64::NEG_INFINITY);
            for (idx, &p) in table.probs().iter().enumerate() {
                if p > best_p {
                    best = idx;
                    best_p = p;
                }
            }
            let correct = table.outputs()[best] == [dataset.finetune_labels[i]];
            Ok(SampleMetrics {
                reward_mean: stats.mean,
                reward_std: stats.std,
                grad_norm,
                ce_loss,
                correct,
            })
        })
        .collect()
}

fn push_group_rows(rows: &mut Vec<TraceRow>, step: usize, dataset: &ControlledDataset, metrics: &[SampleMetrics]) {
    for group in Group::ALL {
        let members = dataset.group_indices(group);
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        let mut row = TraceRow {
            step,
            group,
            reward_mean: 0.0,
            reward_std_mean: 0.0,
            grad_norm_mean: 0.0,
            ce_loss: 0.0,
            accuracy: 0.0,
        };
        for &i in &members {
            row.reward_mean += metrics[i].reward_mean;
            row.reward_std_mean += metrics[i].reward_std;
            row.grad_norm_mean += metrics[i].grad_norm;
            row.ce_loss += metrics[i].ce_loss;
            row.accuracy += if metrics[i].correct { 1.0 } else { 0.0 };
        }
        row.reward_mean /= n;
        row.reward_std_mean /= n;
        row.grad_norm_mean /= n;
        row.ce_loss /= n;
        row.accuracy /= n;
        rows.push(row);
    }
}

/// Mean of per-sample descent gradients over the batch, chunk-summed in
/// index order.
fn batch_grad_mean(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    batch: &[usize],
    reward: &RewardSpec,
    mode: &TrainMode<'_>,
) -> Result<Vec<f64>, TrainError> {
    let dim = policy.params().len();
    let partials: Result<Vec<Vec<f64>>, TrainError> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; dim];
            for &i in chunk {
                let g = mode.descent_grad(policy, dataset, i, reward)?;
                for (a, v) in acc.iter_mut().zip(&g) {
                    *a += v;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut sum = vec![0.0; dim];
    for partial in partials? {
        for (s, v) in sum.iter_mut().zip(&partial) {
            *s += v;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for s in &mut sum {
        *s *= scale;
    }
    Ok(sum)
}

fn epoch_batches(pool: &[usize], batch: Batch, shuffle_seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    match batch {
        Batch::Full => vec![pool.to_vec()],
        Batch::Size(size) => {
            let mut order = pool.to_vec();
            let mut rng = substream(shuffle_seed, STREAM_BATCH + epoch as u64);
            for j in (1..order.len()).rev() {
                let pick = rng.gen_range(0..=j);
                order.swap(j, pick);
            }
            order.chunks(size).map(<[usize]>::to_vec).collect()
        }
    }
}

/// Collect metrics, insist they are finite, and append the group rows.
fn log_point(
    rows: &mut Vec<TraceRow>,
    step: usize,
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
    mode: &TrainMode<'_>,
) -> Result<(), TrainError> {
    let metrics = collect_metrics(policy, dataset, reward, mode)?;
    let finite = |m: &SampleMetrics| {
        m.reward_mean.is_finite()
            && m.reward_std.is_finite()
            && m.grad_norm.is_finite()
            && m.ce_loss.is_finite()
    };
    if !metrics.iter().all(finite) {
        return Err(TrainError::NonFinite { what: "trace metric", step });
    }
    push_group_rows(rows, step, dataset, &metrics);
    Ok(())
}

/// Shared loop: batches, optimizer updates, logging. `pool` is the set of
/// trainable sample indices (metrics always cover the full dataset).
fn run_training(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
    pool: &[usize],
    opt: &OptimizerConfig,
    log_every: usize,
    mode: &TrainMode<'_>,
) -> Result<(SoftmaxPolicy, TrainingTrace), TrainError> {
    opt.validate()?;
    if log_every == 0 {
        return Err(TrainError::InvalidOptimizer("log_every must be positive".into()));
    }
    if pool.is_empty() {
        return Err(TrainError::InvalidSpec("no trainable samples".into()));
    }
    if let Some(&bad) = pool.iter().find(|&&i| i >= dataset.len()) {
        return Err(TrainError::InvalidSpec(format!("sample index {bad} out of range")));
    }

    let start = Instant::now();
    let mut params = policy.params().values().to_vec();
    let mut state = OptState::new(&opt.kind, params.len());
    let mut current = policy.clone();
    let mut rows = Vec::new();
    log_point(&mut rows, 0, &current, dataset, reward, mode)?;

    let mut step = 0usize;
    let mut last_logged = 0usize;
    for epoch in 0..opt.epochs {
        for batch in epoch_batches(pool, opt.batch, opt.shuffle_seed, epoch) {
            let grad = batch_grad_mean(&current, dataset, &batch, reward, mode)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite { what: "batch gradient", step });
            }
            apply_step(&mut params, &grad, &mut state, opt);
            step += 1;
            current = policy.with_values(params.clone()).map_err(|e| match e {
                PolicyError::NonFinite(_) | PolicyError::ParamsInvalid(_) => {
                    TrainError::NonFinite { what: "parameters", step }
                }
                other => TrainError::Policy(other),
            })?;
            if step % log_every == 0 {
                log_point(&mut rows, step, &current, dataset, reward, mode)?;
                last_logged = step;
            }
        }
    }
    if step != last_logged && step > 0 {
        log_point(&mut rows, step, &current, dataset, reward, mode)?;
    }
    Ok((current, TrainingTrace { rows, elapsed_ms: start.elapsed().as_millis() }))
}

fn one_hot_targets(dataset: &ControlledDataset) -> Vec<OutputTarget> {
    dataset.finetune_labels.iter().map(|&t| OutputTarget::one_hot(vec![t])).collect()
}

fn uniform_set_targets(dataset: &ControlledDataset) -> Result<Vec<OutputTarget>, TrainError> {
    dataset
        .pretrain_label_sets
        .iter()
        .map(|set| {
            let w = 1.0 / set.len() as f64;
            let pairs: Vec<(Vec<usize>, f64)> = set.iter().map(|&t| (vec![t], w)).collect();
            Ok(OutputTarget::new(pairs)?)
        })
        .collect()
}

/// Mean cross-entropy of the policy against per-sample targets.
fn mean_ce(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    targets: &[OutputTarget],
) -> Result<f64, TrainError> {
    let total: Result<f64, TrainError> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let x = as_input(dataset, i);
            let mut loss = 0.0;
            for (y, w) in targets[i].pairs() {
                loss -= w * policy.seq_prob(&x, y)?.ln();
            }
            Ok(loss)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a + b));
    Ok(total? / dataset.len() as f64)
}

/// Mean expected reward over the dataset.
pub fn mean_reward(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
) -> Result<f64, TrainError> {
    let total: Result<f64, TrainError> = (0..dataset.len())
        .into_par_iter()
        .map(|i| Ok(reward_stats(policy, i, &as_input(dataset, i), reward, CAP)?.mean))
        .try_reduce(|| 0.0, |a, b| Ok(a + b));
    Ok(total? / dataset.len() as f64)
}

/// Fit a fresh model to the uniform distribution over each sample's
/// pretraining label set. Fails if the final mean cross-entropy is not
/// within [`PRETRAIN_TOLERANCE`] of the target entropy.
///
/// The trace's reward columns are computed against the standard finetuning
/// reward so the initial group separation is visible.
pub fn pretrain(
    spec: &ControlledSpec,
    dataset: &ControlledDataset,
    opt: &OptimizerConfig,
) -> Result<(SoftmaxPolicy, TrainingTrace), TrainError> {
    let policy = init_policy(spec)?;
    let targets = uniform_set_targets(dataset)?;
    let reward = super::finetune_reward(dataset, spec.incorrect_reward_flipped)?;
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let mode = TrainMode::Supervised { targets: &targets };
    let (trained, trace) = run_training(&policy, dataset, &reward, &pool, opt, 100, &mode)?;
    let final_ce = mean_ce(&trained, dataset, &targets)?;
    let target: f64 = dataset
        .pretrain_label_sets
        .iter()
        .map(|s| (s.len() as f64).ln())
        .sum::<f64>()
        / dataset.len() as f64;
    if final_ce > target + PRETRAIN_TOLERANCE {
        return Err(TrainError::PretrainLoose {
            final_ce,
            target,
            tolerance: PRETRAIN_TOLERANCE,
            epochs: opt.epochs,
        });
    }
    Ok((trained, trace))
}

/// Maximize the expected reward with exact per-sample gradients.
pub fn rft_train(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
    opt: &OptimizerConfig,
    options: &TrainOptions,
) -> Result<(SoftmaxPolicy, TrainingTrace), TrainError> {
    let tempered = match options.temperature {
        Some(t) => policy.clone().with_temperature(t)?,
        None => policy.clone(),
    };
    let pool: Vec<usize> = (0..dataset.len()).collect();
    let mode = TrainMode::Reward { entropy_coeff: options.entropy_coeff };
    run_training(&tempered, dataset, reward, &pool, opt, options.log_every, &mode)
}

/// Minimize cross-entropy to the finetuning labels on `pool` (all samples
/// when `None`); `reward` is used for trace metrics only.
pub fn sft_train(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
    pool: Option<&[usize]>,
    opt: &OptimizerConfig,
    log_every: usize,
) -> Result<(SoftmaxPolicy, TrainingTrace), TrainError> {
    let all: Vec<usize>;
    let pool = match pool {
        Some(p) => p,
        None => {
            all = (0..dataset.len()).collect();
            &all
        }
    };
    let targets = one_hot_targets(dataset);
    let mode = TrainMode::Supervised { targets: &targets };
    run_training(policy, dataset, reward, pool, opt, log_every, &mode)
}
