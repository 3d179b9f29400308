//! Supervised warm-up before reward finetuning.
//!
//! Reward finetuning stalls on samples whose reward standard deviation is
//! near zero while their reward is still poor. A short supervised phase on
//! a small labeled subset lifts those samples out of the flat region, after
//! which reward finetuning can proceed. This module runs that protocol:
//! count the stalled samples, run the scaled-down supervised phase, count
//! again, run reward finetuning, and compare the final reward with a
//! baseline that skips the warm-up but spends the same reward budget.

use rand::Rng;
use rayon::prelude::*;

use crate::fmt::JsonObject;
use crate::policy::{Input, SoftmaxPolicy, DEFAULT_ENUM_CAP};
use crate::reward::{reward_stats, RewardSpec};
use crate::seeding::rng_from_seed;

use super::optim::OptimizerConfig;
use super::train::{mean_reward, rft_train, sft_train, TrainOptions, TrainingTrace};
use super::{ControlledDataset, TrainError};

/// Protocol knobs for the warm-up study.
#[derive(Debug, Clone)]
pub struct MitigationConfig {
    /// Fraction of `sft_opt.epochs` actually run, in (0, 1].
    pub sft_step_fraction: f64,
    /// Fraction of the dataset labeled for the supervised phase, in (0, 1].
    pub sft_sample_fraction: f64,
    /// Seed of the uniform subset draw.
    pub subset_seed: u64,
    /// Full-budget supervised optimizer; `sft_step_fraction` scales its
    /// epoch count.
    pub sft_opt: OptimizerConfig,
    /// Reward-phase optimizer, also used by the no-warm-up baseline.
    pub rft_opt: OptimizerConfig,
    /// A sample counts as stalled when its reward std is below this...
    pub std_threshold: f64,
    /// ...while its reward mean is still below this (nearly solved samples
    /// also have small std and are excluded).
    pub mean_cutoff: f64,
    /// Trace cadence for both training phases.
    pub log_every: usize,
}

impl MitigationConfig {
    /// Standard protocol: 10% of steps on 10% of samples, stalled means
    /// std < 0.1 with mean < 0.9.
    pub fn new(sft_opt: OptimizerConfig, rft_opt: OptimizerConfig) -> Self {
        Self {
            sft_step_fraction: 0.1,
            sft_sample_fraction: 0.1,
            subset_seed: 0,
            sft_opt,
            rft_opt,
            std_threshold: 0.1,
            mean_cutoff: 0.9,
            log_every: 50,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        let fractions = [
            ("step fraction", self.sft_step_fraction),
            ("sample fraction", self.sft_sample_fraction),
        ];
        for (name, f) in fractions {
            if !f.is_finite() || f <= 0.0 || f > 1.0 {
                return Err(TrainError::InvalidSpec(format!("{name} {f} outside (0, 1]")));
            }
        }
        if !self.std_threshold.is_finite() || self.std_threshold <= 0.0 {
            return Err(TrainError::InvalidSpec(format!(
                "std threshold {} must be positive",
                self.std_threshold
            )));
        }
        if !self.mean_cutoff.is_finite() {
            return Err(TrainError::InvalidSpec("mean cutoff must be finite".into()));
        }
        if self.log_every == 0 {
            return Err(TrainError::InvalidSpec("log_every must be positive".into()));
        }
        self.sft_opt.validate()?;
        self.rft_opt.validate()?;
        Ok(())
    }
}

/// Outcome of the warm-up study; serializes to a small JSON document.
#[derive(Debug, Clone, PartialEq)]
pub struct MitigationReport {
    pub sft_step_fraction: f64,
    pub sft_sample_fraction: f64,
    /// Supervised steps actually run (`round(fraction * full epochs)`).
    pub sft_steps_run: usize,
    /// Labeled samples actually used (`round(fraction * n)`, at least 1).
    pub sft_subset_size: usize,
    pub subset_seed: u64,
    pub std_threshold: f64,
    pub mean_cutoff: f64,
    /// Stalled-sample count before / after the supervised phase.
    pub count_before: usize,
    pub count_after: usize,
    /// Mean reward after the reward phase, warm-up vs. none.
    pub final_reward: f64,
    pub baseline_final_reward: f64,
}

impl MitigationReport {
    /// Deterministic JSON rendering with full-precision floats.
    pub fn to_json(&self) -> String {
        JsonObject::new()
            .float("sft_step_fraction", self.sft_step_fraction)
            .float("sft_sample_fraction", self.sft_sample_fraction)
            .uint("sft_steps_run", self.sft_steps_run as u64)
            .uint("sft_subset_size", self.sft_subset_size as u64)
            .uint("subset_seed", self.subset_seed)
            .float("std_threshold", self.std_threshold)
            .float("mean_cutoff", self.mean_cutoff)
            .uint("count_before", self.count_before as u64)
            .uint("count_after", self.count_after as u64)
            .float("final_reward", self.final_reward)
            .float("baseline_final_reward", self.baseline_final_reward)
            .render()
    }
}

/// Number of samples the reward gradient is effectively blind to: reward
/// std below `std_threshold` while the reward mean is still below
/// `mean_cutoff`. Samples that are nearly solved also have tiny std but are
/// excluded — their flatness is harmless.
pub fn small_std_suboptimal_count(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
    std_threshold: f64,
    mean_cutoff: f64,
) -> Result<usize, TrainError> {
    let flags: Result<Vec<bool>, TrainError> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let x = Input::Features(dataset.inputs[i].clone());
            let stats = reward_stats(policy, i, &x, reward, DEFAULT_ENUM_CAP)?;
            Ok(stats.std < std_threshold && stats.mean < mean_cutoff)
        })
        .collect();
    Ok(flags?.into_iter().filter(|&hit| hit).count())
}

fn scaled_count(fraction: f64, total: usize) -> usize {
    (fraction * total as f64).round() as usize
}

/// Uniform draw of `count` distinct indices from `0..n`, returned ascending.
fn draw_subset(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    for j in 0..count {
        let pick = j + rng.gen_range(0..n - j);
        order.swap(j, pick);
    }
    let mut subset = order[..count].to_vec();
    subset.sort_unstable();
    subset
}

/// Run the warm-up protocol: a supervised phase scaled down to
/// `sft_step_fraction` of its budget on `sft_sample_fraction` of the
/// samples, followed by full-budget reward finetuning. Returns the
/// reward-phase trace and a report with the stalled-sample counts around
/// the supervised phase plus a same-budget no-warm-up baseline reward.
pub fn partial_sft_then_rft(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
    config: &MitigationConfig,
) -> Result<(TrainingTrace, MitigationReport), TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::InvalidSpec("empty dataset".into()));
    }

    let n = dataset.len();
    let sft_steps_run = scaled_count(config.sft_step_fraction, config.sft_opt.epochs);
    let sft_subset_size = scaled_count(config.sft_sample_fraction, n).clamp(1, n);
    let subset = draw_subset(n, sft_subset_size, config.subset_seed);

    let count_before = small_std_suboptimal_count(
        policy,
        dataset,
        reward,
        config.std_threshold,
        config.mean_cutoff,
    )?;

    let sft_opt = OptimizerConfig { epochs: sft_steps_run, ..config.sft_opt.clone() };
    let (warmed, _) =
        sft_train(policy, dataset, reward, Some(&subset), &sft_opt, config.log_every)?;

    let count_after = small_std_suboptimal_count(
        &warmed,
        dataset,
        reward,
        config.std_threshold,
        config.mean_cutoff,
    )?;

    let options = TrainOptions { log_every: config.log_every, ..TrainOptions::default() };
    let (finetuned, rft_trace) = rft_train(&warmed, dataset, reward, &config.rft_opt, &options)?;
    let final_reward = mean_reward(&finetuned, dataset, reward)?;

    let (baseline, _) = rft_train(policy, dataset, reward, &config.rft_opt, &options)?;
    let baseline_final_reward = mean_reward(&baseline, dataset, reward)?;

    let report = MitigationReport {
        sft_step_fraction: config.sft_step_fraction,
        sft_sample_fraction: config.sft_sample_fraction,
        sft_steps_run,
        sft_subset_size,
        subset_seed: config.subset_seed,
        std_threshold: config.std_threshold,
        mean_cutoff: config.mean_cutoff,
        count_before,
        count_after,
        final_reward,
        baseline_final_reward,
    };
    Ok((rft_trace, report))
}
