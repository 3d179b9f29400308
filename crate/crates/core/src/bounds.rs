//! Gradient-norm inequality checks.
//!
//! The library's central inequality bounds the exact value gradient by the
//! policy's logit sensitivity and the reward spread:
//!
//! ```text
//! || grad V ||  <=  6 * L_out * gamma * sigma^(2/3)
//! ```
//!
//! with `gamma` the largest logit-Jacobian operator norm over prefixes and
//! `sigma` the reward standard deviation under the policy. Two companion
//! inequalities bound how far the clipped and KL-regularized surrogate
//! gradients can drift from the value gradient in terms of the total
//! variation distance to the reference policy. This module evaluates both
//! sides of each inequality on concrete instances, reports slack, and runs
//! randomized sweeps.

use rayon::prelude::*;
use thiserror::Error;

use crate::grad::{grad_ppo_clip, grad_ppo_kl, grad_value, tv_distance, GradError};
use crate::instances::{random_instance, GeneratorConfig};
use crate::policy::{Input, SoftmaxPolicy};
use crate::reward::{reward_stats, RewardSpec};
use crate::seeding::substream;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Reward(#[from] crate::reward::RewardError),
    #[error("sweep requires at least one instance")]
    EmptySweep,
    #[error("sweep requires at least one clip width and one kl weight")]
    EmptyHyperGrid,
}

/// Which inequality a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// `||grad V|| <= 6 L gamma sigma^(2/3)`
    ValueNorm,
    /// `||grad V_clip - grad V|| <= 12 L gamma TV / delta`
    ClipDifference,
    /// `||grad V_clip|| <= 6 L gamma (sigma^(2/3) + 2 TV / delta)`
    ClipCombined,
    /// `||grad V_kl - grad V|| <= 4 L gamma lambda TV`
    KlDifference,
    /// `||grad V_kl|| <= 6 L gamma (sigma^(2/3) + (2 lambda / 3) TV)`
    KlCombined,
}

impl BoundKind {
    pub const ALL: [BoundKind; 5] = [
        BoundKind::ValueNorm,
        BoundKind::ClipDifference,
        BoundKind::ClipCombined,
        BoundKind::KlDifference,
        BoundKind::KlCombined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::ValueNorm => "value_norm",
            BoundKind::ClipDifference => "clip_difference",
            BoundKind::ClipCombined => "clip_combined",
            BoundKind::KlDifference => "kl_difference",
            BoundKind::KlCombined => "kl_combined",
        }
    }
}

/// Everything that enters one inequality, plus both sides.
#[derive(Debug, Clone, Copy)]
pub struct BoundComponents {
    pub l_out: usize,
    pub gamma: f64,
    pub sigma: f64,
    /// Total variation distance to the reference; absent for the value bound.
    pub tv: Option<f64>,
    /// Clip width or KL weight; absent for the value bound.
    pub hyper: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of checking one inequality on one instance.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Index of the instance within its sweep; 0 for one-off checks.
    pub instance: usize,
    pub components: BoundComponents,
    pub holds: bool,
    /// `lhs / rhs`; when `rhs` is zero (e.g. the difference bounds at the
    /// reference policy), 0 if `lhs` also vanishes within [`HOLD_TOLERANCE`]
    /// and infinite otherwise.
    pub slack_ratio: f64,
}

/// Absolute comparison tolerance: a bound "holds" when
/// `lhs <= rhs + 1e-9 * max(1, rhs)`.
pub const HOLD_TOLERANCE: f64 = 1e-9;

fn finish(kind: BoundKind, instance: usize, components: BoundComponents) -> BoundReport {
    let BoundComponents { lhs, rhs, .. } = components;
    let holds = lhs <= rhs + HOLD_TOLERANCE * rhs.abs().max(1.0);
    let slack_ratio = if rhs == 0.0 {
        if lhs <= HOLD_TOLERANCE {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    };
    BoundReport { kind, instance, components, holds, slack_ratio }
}

fn two_thirds(sigma: f64) -> f64 {
    (sigma * sigma).cbrt()
}

/// Check the value-gradient bound on one instance.
pub fn check_value_grad_norm(
    policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    cap: usize,
) -> Result<BoundReport, BoundError> {
    let l_out = policy.vocab().l_out();
    let gamma = policy.gamma_capped(x, cap)?;
    let sigma = reward_stats(policy, input_id, x, reward, cap)?.std;
    let lhs = grad_value(policy, input_id, x, reward, cap)?.norm();
    let rhs = 6.0 * l_out as f64 * gamma * two_thirds(sigma);
    Ok(finish(
        BoundKind::ValueNorm,
        0,
        BoundComponents { l_out, gamma, sigma, tv: None, hyper: None, lhs, rhs },
    ))
}

fn norm_of(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Check the clipped-surrogate difference and combined bounds on one
/// instance; returns `[difference, combined]`.
pub fn check_clip_surrogate(
    policy: &SoftmaxPolicy,
    ref_policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    delta: f64,
    cap: usize,
) -> Result<[BoundReport; 2], BoundError> {
    let l_out = policy.vocab().l_out();
    let l = l_out as f64;
    let gamma = policy.gamma_capped(x, cap)?;
    let sigma = reward_stats(policy, input_id, x, reward, cap)?.std;
    let tv = tv_distance(policy, ref_policy, x, cap)?;
    let g_val = grad_value(policy, input_id, x, reward, cap)?;
    let g_clip = grad_ppo_clip(policy, ref_policy, input_id, x, reward, delta, cap)?;

    let diff = BoundComponents {
        l_out,
        gamma,
        sigma,
        tv: Some(tv),
        hyper: Some(delta),
        lhs: diff_norm(g_clip.values(), g_val.values()),
        rhs: 12.0 * l * gamma * tv / delta,
    };
    let combined = BoundComponents {
        l_out,
        gamma,
        sigma,
        tv: Some(tv),
        hyper: Some(delta),
        lhs: norm_of(g_clip.values()),
        rhs: 6.0 * l * gamma * (two_thirds(sigma) + 2.0 * tv / delta),
    };
    Ok([
        finish(BoundKind::ClipDifference, 0, diff),
        finish(BoundKind::ClipCombined, 0, combined),
    ])
}

/// Check the KL-surrogate difference and combined bounds on one instance;
/// returns `[difference, combined]`.
pub fn check_kl_surrogate(
    policy: &SoftmaxPolicy,
    ref_policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    lambda: f64,
    cap: usize,
) -> Result<[BoundReport; 2], BoundError> {
    let l_out = policy.vocab().l_out();
    let l = l_out as f64;
    let gamma = policy.gamma_capped(x, cap)?;
    let sigma = reward_stats(policy, input_id, x, reward, cap)?.std;
    let tv = tv_distance(policy, ref_policy, x, cap)?;
    let g_val = grad_value(policy, input_id, x, reward, cap)?;
    let g_kl = grad_ppo_kl(policy, ref_policy, input_id, x, reward, lambda, cap)?;

    let diff = BoundComponents {
        l_out,
        gamma,
        sigma,
        tv: Some(tv),
        hyper: Some(lambda),
        lhs: diff_norm(g_kl.values(), g_val.values()),
        rhs: 4.0 * l * gamma * lambda * tv,
    };
    let combined = BoundComponents {
        l_out,
        gamma,
        sigma,
        tv: Some(tv),
        hyper: Some(lambda),
        lhs: norm_of(g_kl.values()),
        rhs: 6.0 * l * gamma * (two_thirds(sigma) + 2.0 * lambda / 3.0 * tv),
    };
    Ok([finish(BoundKind::KlDifference, 0, diff), finish(BoundKind::KlCombined, 0, combined)])
}

/// Configuration for a randomized sweep over generated instances.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub count: usize,
    pub seed: u64,
    pub generator: GeneratorConfig,
    /// Clip widths checked per instance.
    pub deltas: Vec<f64>,
    /// KL weights checked per instance.
    pub lambdas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            count: 200,
            seed: 7,
            generator: GeneratorConfig::default(),
            deltas: vec![0.1, 0.2, 0.3],
            lambdas: vec![0.1, 1.0, 10.0],
        }
    }
}

/// Per-kind aggregate over a sweep.
#[derive(Debug, Clone, Copy)]
pub struct KindSummary {
    pub kind: BoundKind,
    pub checked: usize,
    pub violations: usize,
    pub max_slack: f64,
    pub median_slack: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub reports: Vec<BoundReport>,
    pub kinds: Vec<KindSummary>,
}

impl SweepSummary {
    pub fn total_violations(&self) -> usize {
        self.kinds.iter().map(|k| k.violations).sum()
    }
}

fn summarize(reports: &[BoundReport]) -> Vec<KindSummary> {
    BoundKind::ALL
        .iter()
        .map(|&kind| {
            let mut slacks: Vec<f64> = reports
                .iter()
                .filter(|r| r.kind == kind)
                .map(|r| r.slack_ratio)
                .collect();
            slacks.sort_by(f64::total_cmp);
            let violations =
                reports.iter().filter(|r| r.kind == kind && !r.holds).count();
            let max_slack = slacks.last().copied().unwrap_or(0.0);
            let median_slack = if slacks.is_empty() {
                0.0
            } else {
                slacks[slacks.len() / 2]
            };
            KindSummary { kind, checked: slacks.len(), violations, max_slack, median_slack }
        })
        .collect()
}

/// Check all five inequalities (each clip width and KL weight separately)
/// over `count` generated instances. Deterministic in the seed regardless
/// of thread count: instances are independent substreams and results are
/// collected in instance order.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepSummary, BoundError> {
    if config.count == 0 {
        return Err(BoundError::EmptySweep);
    }
    if config.deltas.is_empty() || config.lambdas.is_empty() {
        return Err(BoundError::EmptyHyperGrid);
    }
    let per_instance: Result<Vec<Vec<BoundReport>>, BoundError> = (0..config.count)
        .into_par_iter()
        .map(|index| {
            let mut rng = substream(config.seed, index as u64);
            let inst = random_instance(&mut rng, &config.generator, index);
            let cap = config.generator.cap;
            let mut reports = Vec::new();
            let mut value = check_value_grad_norm(
                &inst.policy,
                inst.input_id,
                &inst.x,
                &inst.reward,
                cap,
            )?;
            value.instance = index;
            reports.push(value);
            for &delta in &config.deltas {
                for mut r in check_clip_surrogate(
                    &inst.policy,
                    &inst.ref_policy,
                    inst.input_id,
                    &inst.x,
                    &inst.reward,
                    delta,
                    cap,
                )? {
                    r.instance = index;
                    reports.push(r);
                }
            }
            for &lambda in &config.lambdas {
                for mut r in check_kl_surrogate(
                    &inst.policy,
                    &inst.ref_policy,
                    inst.input_id,
                    &inst.x,
                    &inst.reward,
                    lambda,
                    cap,
                )? {
                    r.instance = index;
                    reports.push(r);
                }
            }
            Ok(reports)
        })
        .collect();
    let reports: Vec<BoundReport> = per_instance?.into_iter().flatten().collect();
    let kinds = summarize(&reports);
    Ok(SweepSummary { reports, kinds })
}

/// One data point of the exponent-sensitivity probe.
#[derive(Debug, Clone, Copy)]
pub struct ProbeCase {
    pub instance: usize,
    pub sigma: f64,
    pub lhs: f64,
    /// Bound with the shipped exponent, `6 L gamma sigma^(2/3)`.
    pub rhs_two_thirds: f64,
    /// Bound with the exponent tightened to 1, `6 L gamma sigma`.
    pub rhs_linear: f64,
    pub two_thirds_holds: bool,
    pub linear_holds: bool,
}

/// Result of re-checking the value bound with the exponent raised to 1.
///
/// This is a sensitivity *recording*, not an assertion: the checked data
/// says whether the smaller linear right-hand side would still have held on
/// the sampled instances. (It always will: the exact gradient also satisfies
/// `||grad V|| <= sqrt(2) L gamma sigma`, which is below both right-hand
/// sides, so this probe cannot distinguish the exponents on bounded
/// rewards. The numbers are still worth keeping next to the sweep output.)
#[derive(Debug, Clone)]
pub struct ExponentProbeReport {
    pub cases: Vec<ProbeCase>,
    pub two_thirds_violations: usize,
    pub linear_violations: usize,
}

/// Re-check the value bound on fresh instances with both the shipped
/// exponent and the exponent raised to 1, recording both outcomes.
pub fn exponent_probe(config: &SweepConfig) -> Result<ExponentProbeReport, BoundError> {
    if config.count == 0 {
        return Err(BoundError::EmptySweep);
    }
    let cases: Result<Vec<ProbeCase>, BoundError> = (0..config.count)
        .into_par_iter()
        .map(|index| {
            let mut rng = substream(config.seed, index as u64);
            let inst = random_instance(&mut rng, &config.generator, index);
            let cap = config.generator.cap;
            let report = check_value_grad_norm(
                &inst.policy,
                inst.input_id,
                &inst.x,
                &inst.reward,
                cap,
            )?;
            let c = report.components;
            let rhs_linear = 6.0 * c.l_out as f64 * c.gamma * c.sigma;
            let tol = HOLD_TOLERANCE * rhs_linear.abs().max(1.0);
            Ok(ProbeCase {
                instance: index,
                sigma: c.sigma,
                lhs: c.lhs,
                rhs_two_thirds: c.rhs,
                rhs_linear,
                two_thirds_holds: report.holds,
                linear_holds: c.lhs <= rhs_linear + tol,
            })
        })
        .collect();
    let cases = cases?;
    let two_thirds_violations = cases.iter().filter(|c| !c.two_thirds_holds).count();
    let linear_violations = cases.iter().filter(|c| !c.linear_holds).count();
    Ok(ExponentProbeReport { cases, two_thirds_violations, linear_violations })
}
