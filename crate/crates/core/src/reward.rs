//! Bounded reward functions and their exact population statistics.
//!
//! Rewards live in `[-1, 1]` and are defined either by an explicit table
//! over (input id, output sequence) pairs or by a per-input target-match
//! rule. Expected reward and reward standard deviation are computed by
//! exhaustive enumeration of the output distribution; sampled estimates
//! live in [`crate::diagnostics`].

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::policy::{DistributionTable, Input, PolicyError, SoftmaxPolicy, Token};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("reward {value} for input {input_id} outside [-1, 1]")]
    OutOfRange { input_id: usize, value: f64 },
    #[error("no reward entry for input {input_id}, output {output:?}")]
    MissingEntry { input_id: usize, output: Vec<Token> },
    #[error("no reward rule for input {input_id}")]
    MissingInput { input_id: usize },
    #[error("reference value {0} outside [-1, 1]")]
    ReferenceOutOfRange(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("reward table file, record {record}: {message}")]
    TableFormat { record: usize, message: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Target-match rule for one input: `correct` when the output equals the
/// target sequence, `incorrect` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchRule {
    pub target: Vec<Token>,
    pub correct: f64,
    pub incorrect: f64,
}

impl MatchRule {
    /// The default payoffs: +1 on a match, -1 otherwise.
    pub fn standard(target: Vec<Token>) -> Self {
        Self { target, correct: 1.0, incorrect: -1.0 }
    }
}

/// A bounded reward function `r(x, y)`, keyed by input id.
#[derive(Debug, Clone)]
pub enum RewardSpec {
    /// Explicit values per (input id, output sequence).
    Table(HashMap<(usize, Vec<Token>), f64>),
    /// One [`MatchRule`] per input id.
    LabelMatch(Vec<MatchRule>),
}

impl RewardSpec {
    pub fn table(entries: impl IntoIterator<Item = ((usize, Vec<Token>), f64)>) -> Result<Self, RewardError> {
        let map: HashMap<_, _> = entries.into_iter().collect();
        for (&(input_id, _), &v) in &map {
            check_range(input_id, v)?;
        }
        Ok(RewardSpec::Table(map))
    }

    pub fn label_match(rules: Vec<MatchRule>) -> Result<Self, RewardError> {
        for (input_id, rule) in rules.iter().enumerate() {
            check_range(input_id, rule.correct)?;
            check_range(input_id, rule.incorrect)?;
        }
        Ok(RewardSpec::LabelMatch(rules))
    }

    /// `r(x, y)` for the input with id `input_id`.
    pub fn eval(&self, input_id: usize, y: &[Token]) -> Result<f64, RewardError> {
        match self {
            RewardSpec::Table(map) => map
                .get(&(input_id, y.to_vec()))
                .copied()
                .ok_or_else(|| RewardError::MissingEntry { input_id, output: y.to_vec() }),
            RewardSpec::LabelMatch(rules) => {
                let rule = rules.get(input_id).ok_or(RewardError::MissingInput { input_id })?;
                Ok(if y == rule.target.as_slice() { rule.correct } else { rule.incorrect })
            }
        }
    }

    /// Load a table from delimited text with records `input_id,tokens,reward`
    /// where `tokens` joins token ids with '-'.
    pub fn load_table(path: &Path) -> Result<Self, RewardError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut entries = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let fmt_err = |message: String| RewardError::TableFormat { record: i + 1, message };
            if record.len() != 3 {
                return Err(fmt_err(format!("expected 3 fields, got {}", record.len())));
            }
            let input_id: usize = record[0]
                .parse()
                .map_err(|_| fmt_err(format!("bad input id '{}'", &record[0])))?;
            let output: Result<Vec<Token>, _> = record[1].split('-').map(str::parse).collect();
            let output = output.map_err(|_| fmt_err(format!("bad output '{}'", &record[1])))?;
            let reward: f64 = record[2]
                .parse()
                .map_err(|_| fmt_err(format!("bad reward '{}'", &record[2])))?;
            entries.push(((input_id, output), reward));
        }
        Self::table(entries)
    }
}

fn check_range(input_id: usize, value: f64) -> Result<(), RewardError> {
    if !(value.is_finite() && (-1.0..=1.0).contains(&value)) {
        return Err(RewardError::OutOfRange { input_id, value });
    }
    Ok(())
}

/// Exact or sampled mean/std of the reward under one input's distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardStats {
    pub mean: f64,
    pub std: f64,
    pub exact: bool,
    pub n_samples: Option<usize>,
}

/// Expected reward `V(x) = sum_y p(y|x) r(x, y)` by enumeration.
pub fn expected_reward(
    policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    cap: usize,
) -> Result<f64, RewardError> {
    Ok(reward_stats(policy, input_id, x, reward, cap)?.mean)
}

/// Population standard deviation of the reward under `p(.|x)`.
pub fn reward_std(
    policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    cap: usize,
) -> Result<f64, RewardError> {
    Ok(reward_stats(policy, input_id, x, reward, cap)?.std)
}

/// Mean and population std in a single enumeration pass.
pub fn reward_stats(
    policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    cap: usize,
) -> Result<RewardStats, RewardError> {
    let table = policy.distribution(x, cap)?;
    stats_over(&table, |y| reward.eval(input_id, y))
}

/// Stats over an already-built distribution table.
pub fn stats_over(
    table: &DistributionTable,
    mut r: impl FnMut(&[Token]) -> Result<f64, RewardError>,
) -> Result<RewardStats, RewardError> {
    let mut mean = 0.0;
    let mut rewards = Vec::with_capacity(table.len());
    for (y, p) in table.iter() {
        let v = r(y)?;
        mean += p * v;
        rewards.push((p, v));
    }
    let var: f64 = rewards.iter().map(|(p, v)| p * (v - mean) * (v - mean)).sum();
    Ok(RewardStats { mean, std: var.max(0.0).sqrt(), exact: true, n_samples: None })
}

/// Centered reward `r(x, y) - v_ref` against a reference value.
pub fn advantage(reward: &RewardSpec, input_id: usize, y: &[Token], v_ref: f64) -> Result<f64, RewardError> {
    if !(v_ref.is_finite() && (-1.0..=1.0).contains(&v_ref)) {
        return Err(RewardError::ReferenceOutOfRange(v_ref));
    }
    Ok(reward.eval(input_id, y)? - v_ref)
}

/// Mean expected reward over a dataset of (input id, input) pairs.
pub fn population_value(
    policy: &SoftmaxPolicy,
    dataset: &[(usize, Input)],
    reward: &RewardSpec,
    cap: usize,
) -> Result<f64, RewardError> {
    if dataset.is_empty() {
        return Err(RewardError::EmptyDataset);
    }
    let mut total = 0.0;
    for (input_id, x) in dataset {
        total += expected_reward(policy, *input_id, x, reward, cap)?;
    }
    Ok(total / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{enumerate_outputs, Architecture, Vocabulary};
    use crate::seeding::rng_from_seed;
    use rand::Rng;

    const CAP: usize = 100_000;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn uniform_policy(size: usize, l_out: usize) -> SoftmaxPolicy {
        let v = Vocabulary::new(size, l_out, 1).unwrap();
        let arch = Architecture::TabularAr { n_inputs: 1 };
        let n = arch.param_count(&v).unwrap();
        SoftmaxPolicy::new(v, arch, vec![0.0; n]).unwrap()
    }

    fn constant_table(vocab: &Vocabulary, c: f64) -> RewardSpec {
        let entries = enumerate_outputs(vocab)
            .unwrap()
            .into_iter()
            .map(|y| ((0usize, y), c));
        RewardSpec::table(entries).unwrap()
    }

    #[test]
    fn constant_reward_mean_is_constant_and_std_zero() {
        let policy = uniform_policy(3, 2);
        let reward = constant_table(policy.vocab(), 0.4);
        let stats = reward_stats(&policy, 0, &Input::Id(0), &reward, CAP).unwrap();
        assert!(close(stats.mean, 0.4, 1e-12));
        assert!(close(stats.std, 0.0, 1e-12));
    }

    #[test]
    fn uniform_binary_match_is_fair_coin() {
        let policy = uniform_policy(2, 1);
        let reward = RewardSpec::label_match(vec![MatchRule::standard(vec![0])]).unwrap();
        let stats = reward_stats(&policy, 0, &Input::Id(0), &reward, CAP).unwrap();
        assert!(close(stats.mean, 0.0, 1e-12));
        assert!(close(stats.std, 1.0, 1e-12));
    }

    #[test]
    fn two_point_reward_matches_closed_form() {
        // Correct-label probability q = e^{-1} / (1 + e^{-1}): mean = 2q - 1,
        // std = sqrt(1 - (2q - 1)^2) = sqrt(4 q (1 - q)).
        let v = Vocabulary::new(2, 1, 1).unwrap();
        let policy =
            SoftmaxPolicy::new(v, Architecture::TabularAr { n_inputs: 1 }, vec![-1.0, 0.0]).unwrap();
        let reward = RewardSpec::label_match(vec![MatchRule::standard(vec![0])]).unwrap();
        let stats = reward_stats(&policy, 0, &Input::Id(0), &reward, CAP).unwrap();
        let q = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
        assert!(close(q, 0.268941, 1e-6));
        assert!(close(stats.mean, 2.0 * q - 1.0, 1e-12));
        assert!(close(stats.mean, -0.462118, 1e-6));
        assert!(close(stats.std, (4.0 * q * (1.0 - q)).sqrt(), 1e-12));
        assert!(close(stats.std, 0.886819, 1e-6));
    }

    #[test]
    fn shifting_rewards_shifts_mean_and_keeps_std() {
        let mut rng = rng_from_seed(2);
        let policy = uniform_policy(3, 2);
        let vocab = *policy.vocab();
        let base: Vec<(Vec<Token>, f64)> = enumerate_outputs(&vocab)
            .unwrap()
            .into_iter()
            .map(|y| (y, rng.gen::<f64>() * 1.2 - 0.8))
            .collect();
        let c = 0.15;
        let r0 = RewardSpec::table(base.iter().map(|(y, v)| ((0usize, y.clone()), *v))).unwrap();
        let r1 = RewardSpec::table(base.iter().map(|(y, v)| ((0usize, y.clone()), *v - c))).unwrap();
        let s0 = reward_stats(&policy, 0, &Input::Id(0), &r0, CAP).unwrap();
        let s1 = reward_stats(&policy, 0, &Input::Id(0), &r1, CAP).unwrap();
        assert!(close(s1.mean, s0.mean - c, 1e-12));
        assert!(close(s1.std, s0.std, 1e-12));
    }

    #[test]
    fn stats_stay_in_bounds_for_random_instances() {
        let mut rng = rng_from_seed(3);
        for trial in 0..50 {
            let size = rng.gen_range(2..=4);
            let l_out = rng.gen_range(1..=2);
            let v = Vocabulary::new(size, l_out, 1).unwrap();
            let arch = Architecture::TabularAr { n_inputs: 1 };
            let n = arch.param_count(&v).unwrap();
            let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
            let policy = SoftmaxPolicy::new(v, arch, values).unwrap();
            let reward = RewardSpec::table(
                enumerate_outputs(&v).unwrap().into_iter().map(|y| ((0usize, y), rng.gen::<f64>() * 2.0 - 1.0)),
            )
            .unwrap();
            let stats = reward_stats(&policy, 0, &Input::Id(0), &reward, CAP).unwrap();
            assert!(stats.mean.abs() <= 1.0 + 1e-12, "trial {trial}");
            assert!(stats.std >= 0.0 && stats.std <= 1.0 + 1e-12, "trial {trial}");
        }
    }

    #[test]
    fn advantage_is_centered_reward() {
        let reward = RewardSpec::label_match(vec![MatchRule::standard(vec![1])]).unwrap();
        assert!(close(advantage(&reward, 0, &[1], 1.0).unwrap(), 0.0, 1e-15));
        assert!(close(advantage(&reward, 0, &[0], 1.0).unwrap(), -2.0, 1e-15));
        let table = RewardSpec::table(vec![((0usize, vec![0]), 0.3)]).unwrap();
        assert!(close(advantage(&table, 0, &[0], -0.2).unwrap(), 0.5, 1e-15));
        assert!(advantage(&table, 0, &[0], 1.5).is_err());
    }

    #[test]
    fn population_value_averages_inputs() {
        let v = Vocabulary::new(2, 1, 1).unwrap();
        let arch = Architecture::TabularAr { n_inputs: 2 };
        let n = arch.param_count(&v).unwrap();
        // Input 0 strongly prefers token 1; input 1 strongly prefers token 0.
        let mut values = vec![0.0; n];
        values[0] = -20.0;
        values[1] = 0.0;
        values[2] = 0.0;
        values[3] = -20.0;
        let policy = SoftmaxPolicy::new(v, arch, values).unwrap();
        let reward = RewardSpec::label_match(vec![
            MatchRule::standard(vec![1]),
            MatchRule::standard(vec![1]),
        ])
        .unwrap();
        let dataset = vec![(0, Input::Id(0)), (1, Input::Id(1))];
        let value = population_value(&policy, &dataset, &reward, CAP).unwrap();
        assert!(close(value, 0.0, 1e-6), "value {value}");
        assert!(population_value(&policy, &[], &reward, CAP).is_err());
    }

    #[test]
    fn population_value_matches_double_sum() {
        let mut rng = rng_from_seed(9);
        let v = Vocabulary::new(3, 2, 1).unwrap();
        let arch = Architecture::TabularAr { n_inputs: 5 };
        let n = arch.param_count(&v).unwrap();
        let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let policy = SoftmaxPolicy::new(v, arch, values).unwrap();
        let outputs = enumerate_outputs(&v).unwrap();
        let mut entries = Vec::new();
        for id in 0..5 {
            for y in &outputs {
                entries.push(((id, y.clone()), rng.gen::<f64>() * 2.0 - 1.0));
            }
        }
        let reward = RewardSpec::table(entries.clone()).unwrap();
        let dataset: Vec<(usize, Input)> = (0..5).map(|i| (i, Input::Id(i))).collect();
        let got = population_value(&policy, &dataset, &reward, CAP).unwrap();

        // Brute-force double sum over inputs and outputs.
        let mut want = 0.0;
        for (id, x) in &dataset {
            for y in &outputs {
                let p = policy.seq_prob(x, y).unwrap();
                let r = entries.iter().find(|((i, s), _)| i == id && s == y).unwrap().1;
                want += p * r;
            }
        }
        want /= 5.0;
        assert!(close(got, want, 1e-12));
    }

    #[test]
    fn out_of_range_rewards_are_rejected() {
        assert!(RewardSpec::table(vec![((0usize, vec![0]), 1.2)]).is_err());
        assert!(RewardSpec::label_match(vec![MatchRule { target: vec![0], correct: 1.0, incorrect: -1.5 }]).is_err());
    }

    #[test]
    fn missing_table_entry_is_reported() {
        let policy = uniform_policy(2, 1);
        let reward = RewardSpec::table(vec![((0usize, vec![0]), 0.5)]).unwrap();
        let err = reward_stats(&policy, 0, &Input::Id(0), &reward, CAP).unwrap_err();
        assert!(matches!(err, RewardError::MissingEntry { .. }));
    }

    #[test]
    fn table_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rewards.csv");
        std::fs::write(&path, "0,0-1,0.5\n0,1-0,-0.25\n1,0-0,1\n").unwrap();
        let spec = RewardSpec::load_table(&path).unwrap();
        assert!(close(spec.eval(0, &[0, 1]).unwrap(), 0.5, 1e-15));
        assert!(close(spec.eval(0, &[1, 0]).unwrap(), -0.25, 1e-15));
        assert!(close(spec.eval(1, &[0, 0]).unwrap(), 1.0, 1e-15));
        assert!(spec.eval(1, &[1, 1]).is_err());
    }

    #[test]
    fn malformed_table_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "0,0-x,0.5\n").unwrap();
        assert!(matches!(RewardSpec::load_table(&path), Err(RewardError::TableFormat { record: 1, .. })));
    }
}
