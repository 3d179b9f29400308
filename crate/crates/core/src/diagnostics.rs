//! Per-input reward statistics and the summaries built from them.
//!
//! For each input the reward under the policy's output distribution has a
//! mean and a standard deviation; the std is the quantity that controls how
//! much gradient signal reward finetuning can extract. This module
//! estimates those per-input stats exactly (by enumeration) or from
//! ancestral samples, summarizes their spread as percentiles with a
//! near-optimal-mean exclusion rule, correlates pretraining stds with
//! finetuning movement, and exports scatter data.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fmt::fmt_f64;
use crate::policy::{Input, PolicyError, SoftmaxPolicy, Token, DEFAULT_ENUM_CAP};
use crate::reward::{reward_stats, RewardError, RewardSpec};
use crate::seeding::rng_from_seed;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("sampled estimation needs at least 2 generations, got {0}")]
    SampleCount(usize),
    #[error("percentile {0} outside [0, 100]")]
    InvalidPercentile(f64),
    #[error("no inputs left after excluding reward means above {cutoff}")]
    EmptyAfterExclusion { cutoff: f64 },
    #[error("series must have equal lengths of at least 2, got {0} and {1}")]
    BadSeries(usize, usize),
    #[error("{0} has zero variance; correlation undefined")]
    ZeroVariance(&'static str),
    #[error("input ids do not match: {0}")]
    IdMismatch(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a set of per-input stats was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatMethod {
    /// Exhaustive enumeration of the output distribution.
    Exact,
    /// Monte-Carlo over `n` ancestral generations.
    Sampled { n: usize },
}

/// Estimation mode requested from [`estimate_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatMode {
    Exact,
    Sampled { n: usize, seed: u64 },
}

/// Reward mean and standard deviation of one input.
///
/// The std is the population standard deviation in both modes: the sampled
/// estimator divides by `n`, matching the definition the exact route
/// integrates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputStats {
    pub input_id: usize,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub method: StatMethod,
}

/// Mean/std of the reward for one input, exactly or from `n` ancestral
/// samples drawn with the given seed.
pub fn estimate_stats(
    policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    mode: StatMode,
) -> Result<InputStats, DiagError> {
    match mode {
        StatMode::Exact => {
            let stats = reward_stats(policy, input_id, x, reward, DEFAULT_ENUM_CAP)?;
            Ok(InputStats {
                input_id,
                reward_mean: stats.mean,
                reward_std: stats.std,
                method: StatMethod::Exact,
            })
        }
        StatMode::Sampled { n, seed } => {
            if n < 2 {
                return Err(DiagError::SampleCount(n));
            }
            let mut rng = rng_from_seed(seed);
            let mut rewards = Vec::with_capacity(n);
            for _ in 0..n {
                let y = sample_output(policy, x, &mut rng)?;
                rewards.push(reward.eval(input_id, &y)?);
            }
            let mean = rewards.iter().sum::<f64>() / n as f64;
            let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
            Ok(InputStats {
                input_id,
                reward_mean: mean,
                reward_std: var.sqrt(),
                method: StatMethod::Sampled { n },
            })
        }
    }
}

/// One ancestral generation: each position is drawn from its conditional
/// given the tokens already emitted.
fn sample_output(
    policy: &SoftmaxPolicy,
    x: &Input,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Token>, DiagError> {
    let l_out = policy.vocab().l_out();
    let mut y: Vec<Token> = Vec::with_capacity(l_out);
    for _ in 0..l_out {
        let cond = policy.conditional(x, &y)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = cond.len() - 1;
        for (k, &p) in cond.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        y.push(pick);
    }
    Ok(y)
}

/// q-th percentile of the reward stds among inputs whose reward mean is at
/// most `mean_cutoff` (inputs already near the optimal reward have small
/// std for a benign reason and are excluded).
///
/// Uses linear interpolation between the two closest order statistics:
/// rank `h = (kept - 1) * q / 100`, value `s[floor(h)] + frac(h) *
/// (s[ceil(h)] - s[floor(h)])`.
pub fn std_percentile(stats: &[InputStats], q: f64, mean_cutoff: f64) -> Result<f64, DiagError> {
    if !(0.0..=100.0).contains(&q) {
        return Err(DiagError::InvalidPercentile(q));
    }
    let mut stds: Vec<f64> = stats
        .iter()
        .filter(|s| s.reward_mean <= mean_cutoff)
        .map(|s| s.reward_std)
        .collect();
    if stds.is_empty() {
        return Err(DiagError::EmptyAfterExclusion { cutoff: mean_cutoff });
    }
    stds.sort_by(f64::total_cmp);
    let h = (stds.len() - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(stds[lo] + (h - lo as f64) * (stds[hi] - stds[lo]))
}

/// Product-moment correlation of two equal-length series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, DiagError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(DiagError::BadSeries(xs.len(), ys.len()));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(DiagError::ZeroVariance("first series"));
    }
    if syy == 0.0 {
        return Err(DiagError::ZeroVariance("second series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between each input's earlier reward std and how far its
/// reward mean moved: `pearson(pre std, |post mean - pre mean|)` over
/// id-matched pairs. The two lists must contain exactly the same ids.
pub fn correlation_report(pre: &[InputStats], post: &[InputStats]) -> Result<f64, DiagError> {
    if pre.len() != post.len() {
        return Err(DiagError::IdMismatch(format!(
            "{} entries before vs {} after",
            pre.len(),
            post.len()
        )));
    }
    let mut post_by_id = BTreeMap::new();
    for s in post {
        if post_by_id.insert(s.input_id, s).is_some() {
            return Err(DiagError::IdMismatch(format!("duplicate id {} in post stats", s.input_id)));
        }
    }
    let mut seen = BTreeSet::new();
    let mut stds = Vec::with_capacity(pre.len());
    let mut changes = Vec::with_capacity(pre.len());
    for s in pre {
        if !seen.insert(s.input_id) {
            return Err(DiagError::IdMismatch(format!("duplicate id {} in pre stats", s.input_id)));
        }
        let Some(p) = post_by_id.get(&s.input_id) else {
            return Err(DiagError::IdMismatch(format!("id {} missing from post stats", s.input_id)));
        };
        stds.push(s.reward_std);
        changes.push((p.reward_mean - s.reward_mean).abs());
    }
    pearson(&stds, &changes)
}

/// CSV `id,reward_mean,reward_std`, rows sorted by std then id.
pub fn write_scatter_csv(stats: &[InputStats], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "id,reward_mean,reward_std")?;
    let mut sorted: Vec<&InputStats> = stats.iter().collect();
    sorted.sort_by(|a, b| {
        f64::total_cmp(&a.reward_std, &b.reward_std).then(a.input_id.cmp(&b.input_id))
    });
    for s in sorted {
        writeln!(out, "{},{},{}", s.input_id, fmt_f64(s.reward_mean), fmt_f64(s.reward_std))?;
    }
    Ok(())
}

/// Write the scatter CSV to a file.
pub fn scatter_export(stats: &[InputStats], path: &Path) -> Result<(), DiagError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_scatter_csv(stats, &mut out)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Architecture, Vocabulary};
    use crate::reward::MatchRule;
    use proptest::prelude::*;

    fn flat(id: usize, mean: f64, std: f64) -> InputStats {
        InputStats { input_id: id, reward_mean: mean, reward_std: std, method: StatMethod::Exact }
    }

    /// Three-token tabular policy with chosen logits and a 1/0 reward on
    /// token 0.
    fn tabular_setup(logits: Vec<f64>) -> (SoftmaxPolicy, RewardSpec, Input) {
        let vocab = Vocabulary::new(3, 1, 1).unwrap();
        let policy =
            SoftmaxPolicy::new(vocab, Architecture::TabularAr { n_inputs: 1 }, logits).unwrap();
        let reward = RewardSpec::label_match(vec![MatchRule {
            target: vec![0],
            correct: 1.0,
            incorrect: 0.0,
        }])
        .unwrap();
        (policy, reward, Input::Id(0))
    }

    #[test]
    fn constant_reward_gives_zero_std_in_both_modes() {
        let (policy, _, x) = tabular_setup(vec![0.4, -0.2, 1.1]);
        let constant = RewardSpec::label_match(vec![MatchRule {
            target: vec![0],
            correct: 0.7,
            incorrect: 0.7,
        }])
        .unwrap();
        let exact = estimate_stats(&policy, 0, &x, &constant, StatMode::Exact).unwrap();
        assert!((exact.reward_mean - 0.7).abs() <= 1e-12);
        assert!(exact.reward_std.abs() <= 1e-9);
        let sampled =
            estimate_stats(&policy, 0, &x, &constant, StatMode::Sampled { n: 32, seed: 1 })
                .unwrap();
        assert!((sampled.reward_mean - 0.7).abs() <= 1e-12);
        assert!(sampled.reward_std.abs() <= 1e-9);
        assert_eq!(sampled.method, StatMethod::Sampled { n: 32 });
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let (policy, reward, x) = tabular_setup(vec![0.4, -0.2, 1.1]);
        let mode = StatMode::Sampled { n: 10, seed: 1 };
        let a = estimate_stats(&policy, 0, &x, &reward, mode).unwrap();
        let b = estimate_stats(&policy, 0, &x, &reward, mode).unwrap();
        assert_eq!(a, b);
        let c =
            estimate_stats(&policy, 0, &x, &reward, StatMode::Sampled { n: 10, seed: 2 }).unwrap();
        assert_ne!(a.reward_mean, c.reward_mean);
    }

    #[test]
    fn sampled_estimates_converge_to_exact() {
        let (policy, reward, x) = tabular_setup(vec![0.4, -0.2, 1.1]);
        let exact = estimate_stats(&policy, 0, &x, &reward, StatMode::Exact).unwrap();
        let n = 10_000;
        let sampled =
            estimate_stats(&policy, 0, &x, &reward, StatMode::Sampled { n, seed: 3 }).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        assert!(
            (sampled.reward_mean - exact.reward_mean).abs() <= bound,
            "mean off by {}",
            (sampled.reward_mean - exact.reward_mean).abs()
        );
        assert!(
            (sampled.reward_std - exact.reward_std).abs() <= bound,
            "std off by {}",
            (sampled.reward_std - exact.reward_std).abs()
        );
    }

    #[test]
    fn sample_frequencies_match_the_conditional() {
        // Two-step outputs exercise prefix-conditional sampling.
        let vocab = Vocabulary::new(2, 2, 1).unwrap();
        // Logit rows: empty prefix, prefix [0], prefix [1].
        let logits = vec![0.0, 0.0, 2.0, 0.0, 0.0, 2.0];
        let policy =
            SoftmaxPolicy::new(vocab, Architecture::TabularAr { n_inputs: 1 }, logits).unwrap();
        // Reward 1 when the second token repeats the first.
        let reward = RewardSpec::table([
            ((0usize, vec![0usize, 0usize]), 1.0),
            ((0, vec![0, 1]), 0.0),
            ((0, vec![1, 0]), 0.0),
            ((0, vec![1, 1]), 1.0),
        ])
        .unwrap();
        let x = Input::Id(0);
        let exact = estimate_stats(&policy, 0, &x, &reward, StatMode::Exact).unwrap();
        // P(match) = sigmoid(2) regardless of the first token.
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((exact.reward_mean - expected).abs() <= 1e-12);
        let sampled =
            estimate_stats(&policy, 0, &x, &reward, StatMode::Sampled { n: 20_000, seed: 5 })
                .unwrap();
        assert!((sampled.reward_mean - expected).abs() <= 3.0 / (20_000f64).sqrt());
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let (policy, reward, x) = tabular_setup(vec![0.0, 0.0, 0.0]);
        assert!(matches!(
            estimate_stats(&policy, 0, &x, &reward, StatMode::Sampled { n: 1, seed: 0 }),
            Err(DiagError::SampleCount(1))
        ));
    }

    #[test]
    fn percentile_matches_the_worked_example() {
        let stats: Vec<InputStats> =
            (0..10).map(|i| flat(i, 0.0, i as f64 / 10.0)).collect();
        let p10 = std_percentile(&stats, 10.0, 0.9).unwrap();
        assert!((p10 - 0.09).abs() <= 1e-12, "got {p10}");
        let p100 = std_percentile(&stats, 100.0, 0.9).unwrap();
        assert_eq!(p100, 0.9);
        let p0 = std_percentile(&stats, 0.0, 0.9).unwrap();
        assert_eq!(p0, 0.0);
    }

    #[test]
    fn percentile_applies_the_exclusion_rule() {
        // Large stds all belong to near-optimal inputs, so they drop out.
        let stats = vec![
            flat(0, 0.95, 0.8),
            flat(1, 0.99, 0.9),
            flat(2, 0.1, 0.05),
            flat(3, 0.2, 0.07),
        ];
        let p = std_percentile(&stats, 100.0, 0.9).unwrap();
        assert_eq!(p, 0.07);
        let all_excluded: Vec<InputStats> = vec![flat(0, 0.95, 0.1), flat(1, 0.99, 0.2)];
        assert!(matches!(
            std_percentile(&all_excluded, 10.0, 0.9),
            Err(DiagError::EmptyAfterExclusion { .. })
        ));
        assert!(matches!(
            std_percentile(&stats, 101.0, 0.9),
            Err(DiagError::InvalidPercentile(_))
        ));
    }

    #[test]
    fn pearson_matches_hand_computed_values() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        // Deviations give sxy = 12, sxx = 10, syy = 21.2, so r = 6/sqrt(53).
        let ys = [2.0, 1.0, 4.0, 3.0, 7.0];
        let r = pearson(&xs, &ys).unwrap();
        assert!((r - 6.0 / 53.0f64.sqrt()).abs() <= 1e-12, "got {r}");

        let up: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&xs, &up).unwrap() - 1.0).abs() <= 1e-12);
        let down: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &down).unwrap() + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pearson_rejects_degenerate_series() {
        assert!(matches!(pearson(&[1.0], &[2.0]), Err(DiagError::BadSeries(1, 1))));
        assert!(matches!(pearson(&[1.0, 2.0], &[2.0]), Err(DiagError::BadSeries(2, 1))));
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(DiagError::ZeroVariance("first series"))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(DiagError::ZeroVariance("second series"))
        ));
    }

    #[test]
    fn correlation_report_pairs_by_id() {
        let pre = vec![flat(0, 0.1, 0.5), flat(1, 0.2, 0.1), flat(2, 0.0, 0.9)];
        // Post listed in a different order; changes 0.4, 0.05, 0.8.
        let post = vec![flat(2, 0.8, 0.0), flat(0, 0.5, 0.0), flat(1, 0.25, 0.0)];
        let r = correlation_report(&pre, &post).unwrap();
        let direct = pearson(&[0.5, 0.1, 0.9], &[0.4, 0.05, 0.8]).unwrap();
        assert_eq!(r, direct);
        assert!(r > 0.99, "stds and changes move together here, got {r}");
    }

    #[test]
    fn correlation_report_rejects_mismatched_ids() {
        let pre = vec![flat(0, 0.1, 0.5), flat(1, 0.2, 0.1)];
        let wrong_ids = vec![flat(0, 0.5, 0.0), flat(7, 0.4, 0.0)];
        assert!(matches!(
            correlation_report(&pre, &wrong_ids),
            Err(DiagError::IdMismatch(_))
        ));
        let short = vec![flat(0, 0.5, 0.0)];
        assert!(matches!(correlation_report(&pre, &short), Err(DiagError::IdMismatch(_))));
        let dup_pre = vec![flat(0, 0.1, 0.5), flat(0, 0.2, 0.1)];
        let post = vec![flat(0, 0.5, 0.0), flat(1, 0.4, 0.0)];
        assert!(matches!(correlation_report(&dup_pre, &post), Err(DiagError::IdMismatch(_))));
    }

    #[test]
    fn unchanged_rewards_make_the_change_series_degenerate() {
        let pre = vec![flat(0, 0.1, 0.5), flat(1, 0.2, 0.1)];
        assert!(matches!(
            correlation_report(&pre, &pre.clone()),
            Err(DiagError::ZeroVariance("second series"))
        ));
    }

    #[test]
    fn scatter_csv_is_sorted_and_round_trips() {
        let stats = vec![flat(2, 0.5, 0.3), flat(0, 0.25, 0.9), flat(1, -0.5, 0.3)];
        let mut buf = Vec::new();
        write_scatter_csv(&stats, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "id,reward_mean,reward_std");
        // Sorted by std, ties broken by id.
        let ids: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(ids, vec!["1", "2", "0"]);
        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            let id: usize = fields[0].parse().unwrap();
            let original = stats.iter().find(|s| s.input_id == id).unwrap();
            assert_eq!(fields[1].parse::<f64>().unwrap(), original.reward_mean);
            assert_eq!(fields[2].parse::<f64>().unwrap(), original.reward_std);
        }
    }

    #[test]
    fn empty_scatter_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.csv");
        scatter_export(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "id,reward_mean,reward_std\n");
    }

    proptest! {
        #[test]
        fn percentile_is_monotone_in_q(
            stds in proptest::collection::vec(0.0f64..1.0, 1..40),
            q1 in 0.0f64..100.0,
            q2 in 0.0f64..100.0,
        ) {
            let stats: Vec<InputStats> =
                stds.iter().enumerate().map(|(i, &s)| flat(i, 0.0, s)).collect();
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            let p_lo = std_percentile(&stats, lo, 0.9).unwrap();
            let p_hi = std_percentile(&stats, hi, 0.9).unwrap();
            prop_assert!(p_lo <= p_hi + 1e-12);
        }

        #[test]
        fn pearson_is_affine_invariant(
            xs in proptest::collection::vec(-10.0f64..10.0, 4..20),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x + (i as f64).sin()).collect();
            let spread = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
            };
            prop_assume!(spread(&xs) > 1e-6 && spread(&ys) > 1e-6);
            let base = pearson(&xs, &ys).unwrap();
            let scaled: Vec<f64> = ys.iter().map(|y| scale * y + shift).collect();
            prop_assert!((pearson(&xs, &scaled).unwrap() - base).abs() <= 1e-9);
            let flipped: Vec<f64> = ys.iter().map(|y| -scale * y + shift).collect();
            prop_assert!((pearson(&xs, &flipped).unwrap() + base).abs() <= 1e-9);
        }
    }
}
