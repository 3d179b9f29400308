//! Command implementations. Each takes the resolved configuration and a
//! [`RunContext`], writes its artifacts, and reports whether its acceptance
//! gate (if any) held.

pub mod controlled;
pub mod diagnose;
pub mod gradflow;
pub mod mitigate;
pub mod plot_data;
pub mod verify_bounds;

use anyhow::Result;
use rftlab_core::diagnostics::{InputStats, StatMethod};
use rftlab_core::policy::SoftmaxPolicy;
use rftlab_core::reward::RewardSpec;
use rftlab_core::trainlab::{sample_metrics, ControlledDataset, MetricObjective};

/// How a completed run relates to its gate. Commands without a gate are
/// always `Clean`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    /// The run finished and its artifacts are valid, but a checked property
    /// failed (bound violation, fit outside its window).
    GateFailed(String),
}

/// Exact per-input reward statistics of a policy on the controlled dataset,
/// in scatter-export form.
pub fn exact_input_stats(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
) -> Result<Vec<InputStats>> {
    let metrics = sample_metrics(policy, dataset, reward, MetricObjective::Value)?;
    Ok(metrics
        .iter()
        .enumerate()
        .map(|(id, m)| InputStats {
            input_id: id,
            reward_mean: m.reward_mean,
            reward_std: m.reward_std,
            method: StatMethod::Exact,
        })
        .collect())
}

/// Render per-input statistics as the scatter CSV used by every command.
pub fn scatter_csv(stats: &[InputStats]) -> String {
    let mut bytes = Vec::new();
    rftlab_core::diagnostics::write_scatter_csv(stats, &mut bytes)
        .expect("in-memory write cannot fail");
    String::from_utf8(bytes).expect("scatter csv is ascii")
}

