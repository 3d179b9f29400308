//! Exact gradients of the four finetuning objectives.
//!
//! For a policy with enumerable output space, the gradient of the expected
//! reward is the exact weighted log-derivative sum
//!
//! ```text
//! grad V(x) = sum_y p(y|x) r(x,y) sum_l J_l(y)^T (e_{y_l} - p_l(y))
//! ```
//!
//! where `J_l(y)` is the logit Jacobian at prefix `y_{<l}`. The supervised
//! cross-entropy gradient, the ratio-clipped surrogate gradient (clipped
//! outputs contribute nothing), and the KL-regularized surrogate gradient
//! all reduce to the same per-prefix accumulation with different output
//! weights, so they share one code path. Surrogate *values* are computed by
//! an independent direct sum so finite differences of the value can serve
//! as an oracle for the analytic gradient.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::policy::{
    enumerate_outputs_capped, prefix_index, Input, ParamVector, PolicyError, SoftmaxPolicy, Token,
};
use crate::reward::{expected_reward, RewardError, RewardSpec};

#[derive(Debug, Error)]
pub enum GradError {
    #[error("clip width must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("kl weight must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("policy and reference differ in vocabulary or architecture")]
    PolicyMismatch,
    #[error("invalid target distribution: {0}")]
    InvalidTarget(String),
    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Which objective a gradient belongs to, with its hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Rft,
    Sft,
    PpoClip { delta: f64 },
    PpoKl { lambda: f64 },
}

/// A flat gradient aligned with the policy's parameter layout.
#[derive(Debug, Clone)]
pub struct GradVector {
    values: Vec<f64>,
    objective: Objective,
    /// Digest of the reference policy's parameters, for surrogate
    /// objectives that depend on one.
    ref_digest: Option<u64>,
}

impl GradVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn ref_digest(&self) -> Option<u64> {
        self.ref_digest
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Euclidean norm of the flat gradient.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// FNV-1a over the parameter bits; identifies a reference policy in reports.
pub fn param_digest(policy: &SoftmaxPolicy) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u64| {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for v in policy.params().values() {
        eat(v.to_bits());
    }
    eat(policy.temperature().to_bits());
    h
}

/// Sparse distribution over output sequences, e.g. a one-hot supervision
/// target. Weights are nonnegative and sum to one.
#[derive(Debug, Clone)]
pub struct OutputTarget {
    pairs: Vec<(Vec<Token>, f64)>,
}

impl OutputTarget {
    pub fn new(pairs: Vec<(Vec<Token>, f64)>) -> Result<Self, GradError> {
        if pairs.is_empty() {
            return Err(GradError::InvalidTarget("no outputs".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut sum = 0.0;
        for (y, w) in &pairs {
            if !seen.insert(y.clone()) {
                return Err(GradError::InvalidTarget(format!("duplicate output {y:?}")));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(GradError::InvalidTarget(format!("weight {w} for {y:?}")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GradError::InvalidTarget(format!("weights sum to {sum}")));
        }
        Ok(Self { pairs })
    }

    pub fn one_hot(y: Vec<Token>) -> Self {
        Self { pairs: vec![(y, 1.0)] }
    }

    pub fn pairs(&self) -> &[(Vec<Token>, f64)] {
        &self.pairs
    }
}

/// Enumerated view of a policy at one input: all conditionals plus all
/// sequence probabilities, aligned with lexicographic output order.
struct Enumerated {
    outputs: Vec<Vec<Token>>,
    rows: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl Enumerated {
    fn build(policy: &SoftmaxPolicy, x: &Input, cap: usize) -> Result<Self, GradError> {
        let outputs = enumerate_outputs_capped(policy.vocab(), cap)?;
        let rows = policy.conditional_rows(x, cap)?;
        let vocab = policy.vocab();
        let probs = outputs
            .iter()
            .map(|y| (0..y.len()).map(|l| rows[prefix_index(vocab, &y[..l])][y[l]]).product())
            .collect();
        Ok(Self { outputs, rows, probs })
    }
}

/// Shared accumulation: given per-output weights `c(y)`, compute
/// `sum_y c(y) sum_l J_l^T (e_{y_l} - p_l)` by collapsing outputs onto
/// prefixes first, then running one VJP per prefix.
fn weighted_score_sum(
    policy: &SoftmaxPolicy,
    x: &Input,
    en: &Enumerated,
    weight: impl Fn(usize) -> f64,
) -> Result<Vec<f64>, GradError> {
    let vocab = policy.vocab();
    let k = vocab.size();
    let mut per_prefix: Vec<Vec<f64>> = vec![Vec::new(); en.rows.len()];
    for (i, y) in en.outputs.iter().enumerate() {
        let c = weight(i);
        if c == 0.0 {
            continue;
        }
        for l in 0..y.len() {
            let pi = prefix_index(vocab, &y[..l]);
            if per_prefix[pi].is_empty() {
                per_prefix[pi] = vec![0.0; k];
            }
            per_prefix[pi][y[l]] += c;
        }
    }

    let mut grad = vec![0.0; policy.params().len()];
    let mut prefix = Vec::with_capacity(vocab.l_out());
    accumulate_prefixes(policy, x, &per_prefix, &en.rows, &mut prefix, &mut grad)?;
    Ok(grad)
}

/// Depth-first walk over prefixes in index order, applying the cotangent
/// `w - (sum w) p` at every prefix with accumulated weight.
fn accumulate_prefixes(
    policy: &SoftmaxPolicy,
    x: &Input,
    per_prefix: &[Vec<f64>],
    rows: &[Vec<f64>],
    prefix: &mut Vec<Token>,
    grad: &mut [f64],
) -> Result<(), GradError> {
    let vocab = policy.vocab();
    let pi = prefix_index(vocab, prefix);
    let w = &per_prefix[pi];
    if !w.is_empty() {
        let total: f64 = w.iter().sum();
        let p = &rows[pi];
        let cot: Vec<f64> = w.iter().zip(p).map(|(wk, pk)| wk - total * pk).collect();
        policy.vjp_into(x, prefix, &cot, grad)?;
    }
    if prefix.len() + 1 < vocab.l_out() {
        for t in 0..vocab.size() {
            prefix.push(t);
            accumulate_prefixes(policy, x, per_prefix, rows, prefix, grad)?;
            prefix.pop();
        }
    }
    Ok(())
}

/// Exact gradient of the expected reward `V(x)`.
pub fn grad_value(
    policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    cap: usize,
) -> Result<GradVector, GradError> {
    let en = Enumerated::build(policy, x, cap)?;
    let rewards: Result<Vec<f64>, RewardError> =
        en.outputs.iter().map(|y| reward.eval(input_id, y)).collect();
    let rewards = rewards?;
    let values = weighted_score_sum(policy, x, &en, |i| en.probs[i] * rewards[i])?;
    Ok(GradVector { values, objective: Objective::Rft, ref_digest: None })
}

/// Exact gradient of the cross-entropy loss against a target distribution.
///
/// Sparse targets need conditionals only along their own prefixes, so no
/// output enumeration happens here.
pub fn grad_sft(
    policy: &SoftmaxPolicy,
    x: &Input,
    target: &OutputTarget,
) -> Result<GradVector, GradError> {
    let vocab = policy.vocab();
    let k = vocab.size();
    // Deterministic iteration order (prefixes sort lexicographically).
    let mut weights: BTreeMap<Vec<Token>, Vec<f64>> = BTreeMap::new();
    for (y, w) in target.pairs() {
        if y.len() != vocab.l_out() {
            return Err(GradError::InvalidTarget(format!(
                "target output {y:?} has length {}, policy expects {}",
                y.len(),
                vocab.l_out()
            )));
        }
        for l in 0..y.len() {
            let entry = weights.entry(y[..l].to_vec()).or_insert_with(|| vec![0.0; k]);
            // Cross-entropy descends, so target outputs get negative weight.
            entry[y[l]] -= w;
        }
    }
    let mut grad = vec![0.0; policy.params().len()];
    for (prefix, w) in &weights {
        let p = policy.conditional(x, prefix)?;
        let total: f64 = w.iter().sum();
        let cot: Vec<f64> = w.iter().zip(&p).map(|(wk, pk)| wk - total * pk).collect();
        policy.vjp_into(x, prefix, &cot, &mut grad)?;
    }
    Ok(GradVector { values: grad, objective: Objective::Sft, ref_digest: None })
}

fn check_pair(policy: &SoftmaxPolicy, ref_policy: &SoftmaxPolicy) -> Result<(), GradError> {
    if policy.vocab() != ref_policy.vocab() || policy.arch() != ref_policy.arch() {
        return Err(GradError::PolicyMismatch);
    }
    Ok(())
}

/// Exact gradient of the ratio-clipped surrogate objective.
///
/// Outputs whose probability ratio exited the clip interval on the side
/// their advantage pushes toward contribute no gradient; every other output
/// contributes `A(y) grad p(y)`. Ratios exactly on the boundary count as
/// unclipped.
pub fn grad_ppo_clip(
    policy: &SoftmaxPolicy,
    ref_policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    delta: f64,
    cap: usize,
) -> Result<GradVector, GradError> {
    if !(delta.is_finite() && 0.0 < delta && delta < 1.0) {
        return Err(GradError::InvalidDelta(delta));
    }
    check_pair(policy, ref_policy)?;
    let en = Enumerated::build(policy, x, cap)?;
    let en_ref = Enumerated::build(ref_policy, x, cap)?;
    let v_ref = expected_reward(ref_policy, input_id, x, reward, cap)?;
    let mut coeff = vec![0.0; en.outputs.len()];
    for (i, y) in en.outputs.iter().enumerate() {
        let advantage = reward.eval(input_id, y)? - v_ref;
        let ratio = en.probs[i] / en_ref.probs[i];
        let clipped_high = ratio > 1.0 + delta && advantage > 0.0;
        let clipped_low = ratio < 1.0 - delta && advantage < 0.0;
        if !(clipped_high || clipped_low) {
            coeff[i] = en.probs[i] * advantage;
        }
    }
    let values = weighted_score_sum(policy, x, &en, |i| coeff[i])?;
    Ok(GradVector {
        values,
        objective: Objective::PpoClip { delta },
        ref_digest: Some(param_digest(ref_policy)),
    })
}

/// Exact gradient of the KL-regularized surrogate objective:
/// `grad V - lambda * grad KL(p_ref || p)`.
pub fn grad_ppo_kl(
    policy: &SoftmaxPolicy,
    ref_policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    lambda: f64,
    cap: usize,
) -> Result<GradVector, GradError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(GradError::InvalidLambda(lambda));
    }
    check_pair(policy, ref_policy)?;
    let mut values = grad_value(policy, input_id, x, reward, cap)?.into_values();

    // grad KL(p_ref || p) = -sum_prefix pref(prefix) J^T (p_ref - p), where
    // pref is the reference marginal of the prefix; subtracting
    // lambda * grad KL therefore adds lambda * pref * J^T (p_ref - p).
    let vocab = *policy.vocab();
    let rows = policy.conditional_rows(x, cap)?;
    let ref_rows = ref_policy.conditional_rows(x, cap)?;
    let mut stack: Vec<(Vec<Token>, f64)> = vec![(Vec::new(), 1.0)];
    while let Some((prefix, ref_mass)) = stack.pop() {
        let pi = prefix_index(&vocab, &prefix);
        let p = &rows[pi];
        let p_ref = &ref_rows[pi];
        let cot: Vec<f64> = p_ref
            .iter()
            .zip(p)
            .map(|(a, b)| lambda * ref_mass * (a - b))
            .collect();
        policy.vjp_into(x, &prefix, &cot, &mut values)?;
        if prefix.len() + 1 < vocab.l_out() {
            for t in 0..vocab.size() {
                let mut next = prefix.clone();
                next.push(t);
                stack.push((next, ref_mass * p_ref[t]));
            }
        }
    }
    Ok(GradVector {
        values,
        objective: Objective::PpoKl { lambda },
        ref_digest: Some(param_digest(ref_policy)),
    })
}

/// Total variation distance between the two output distributions at `x`.
pub fn tv_distance(
    policy: &SoftmaxPolicy,
    ref_policy: &SoftmaxPolicy,
    x: &Input,
    cap: usize,
) -> Result<f64, GradError> {
    if policy.vocab() != ref_policy.vocab() {
        return Err(GradError::PolicyMismatch);
    }
    let en = Enumerated::build(policy, x, cap)?;
    let en_ref = Enumerated::build(ref_policy, x, cap)?;
    Ok(0.5 * en.probs.iter().zip(&en_ref.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// KL divergence `KL(p_ref(.|x) || p(.|x))` over full output sequences.
pub fn kl_divergence(
    policy: &SoftmaxPolicy,
    ref_policy: &SoftmaxPolicy,
    x: &Input,
    cap: usize,
) -> Result<f64, GradError> {
    if policy.vocab() != ref_policy.vocab() {
        return Err(GradError::PolicyMismatch);
    }
    let en = Enumerated::build(policy, x, cap)?;
    let en_ref = Enumerated::build(ref_policy, x, cap)?;
    Ok(en_ref
        .probs
        .iter()
        .zip(&en.probs)
        .map(|(pr, p)| pr * (pr / p).ln())
        .sum())
}

/// Direct evaluation of the clipped surrogate objective (the min of the
/// plain and clipped ratio terms, averaged under the reference). Shares no
/// code with [`grad_ppo_clip`]; used as its finite-difference target.
pub fn ppo_clip_value(
    policy: &SoftmaxPolicy,
    ref_policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    delta: f64,
    cap: usize,
) -> Result<f64, GradError> {
    if !(delta.is_finite() && 0.0 < delta && delta < 1.0) {
        return Err(GradError::InvalidDelta(delta));
    }
    check_pair(policy, ref_policy)?;
    let v_ref = expected_reward(ref_policy, input_id, x, reward, cap)?;
    let en_ref = Enumerated::build(ref_policy, x, cap)?;
    let mut total = 0.0;
    for (i, y) in en_ref.outputs.iter().enumerate() {
        let advantage = reward.eval(input_id, y)? - v_ref;
        let ratio = policy.seq_prob(x, y)? / en_ref.probs[i];
        let clipped = ratio.clamp(1.0 - delta, 1.0 + delta);
        total += en_ref.probs[i] * (ratio * advantage).min(clipped * advantage);
    }
    Ok(total)
}

/// Direct evaluation of the KL-regularized surrogate objective.
pub fn ppo_kl_value(
    policy: &SoftmaxPolicy,
    ref_policy: &SoftmaxPolicy,
    input_id: usize,
    x: &Input,
    reward: &RewardSpec,
    lambda: f64,
    cap: usize,
) -> Result<f64, GradError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(GradError::InvalidLambda(lambda));
    }
    check_pair(policy, ref_policy)?;
    let v_ref = expected_reward(ref_policy, input_id, x, reward, cap)?;
    let en_ref = Enumerated::build(ref_policy, x, cap)?;
    let mut total = 0.0;
    for (i, y) in en_ref.outputs.iter().enumerate() {
        let advantage = reward.eval(input_id, y)? - v_ref;
        let ratio = policy.seq_prob(x, y)? / en_ref.probs[i];
        total += en_ref.probs[i] * ratio * advantage;
    }
    Ok(total - lambda * kl_divergence(policy, ref_policy, x, cap)?)
}

/// Gradient of the sequence-level entropy `H(p(.|x))`; the entropy-bonus
/// option of the training lab adds a multiple of this to the ascent
/// direction.
pub fn entropy_grad(policy: &SoftmaxPolicy, x: &Input, cap: usize) -> Result<Vec<f64>, GradError> {
    let en = Enumerated::build(policy, x, cap)?;
    weighted_score_sum(policy, x, &en, |i| -en.probs[i] * (1.0 + en.probs[i].ln()))
}

/// Central finite differences of a scalar objective over the parameters.
pub fn finite_diff_grad(
    params: &ParamVector,
    eps: f64,
    mut eval: impl FnMut(&ParamVector) -> Result<f64, GradError>,
) -> Result<Vec<f64>, GradError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(GradError::InvalidStep(eps));
    }
    let mut work = params.clone();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let base = params.values()[i];
        work.values_mut()[i] = base + eps;
        let plus = eval(&work)?;
        work.values_mut()[i] = base - eps;
        let minus = eval(&work)?;
        work.values_mut()[i] = base;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(GradError::NonFiniteObjective);
        }
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// [`finite_diff_grad`] over a policy-valued objective.
pub fn finite_diff_policy_grad(
    policy: &SoftmaxPolicy,
    eps: f64,
    mut eval: impl FnMut(&SoftmaxPolicy) -> Result<f64, GradError>,
) -> Result<Vec<f64>, GradError> {
    finite_diff_grad(policy.params(), eps, |params| {
        let probe = policy.with_values(params.values().to_vec())?;
        eval(&probe)
    })
}

/// Largest per-coordinate relative error between two gradients, with an
/// absolute floor below which coordinates count as equal.
pub fn max_rel_err(a: &[f64], b: &[f64], abs_floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = (x - y).abs();
            if diff <= abs_floor {
                0.0
            } else {
                diff / x.abs().max(y.abs()).max(abs_floor)
            }
        })
        .fold(0.0, f64::max)
}

pub use suite::{oracle_suite, OracleCase, OracleSuiteConfig, OracleSuiteReport};

mod suite {
    //! Randomized agreement suite: analytic gradients of all four
    //! objectives against central finite differences of independently
    //! implemented objective values.

    use super::*;
    use crate::instances::{random_instance, GeneratorConfig, Instance};
    use crate::seeding::substream;

    #[derive(Debug, Clone)]
    pub struct OracleSuiteConfig {
        pub count: usize,
        pub seed: u64,
        pub eps: f64,
        /// Relative-error threshold per coordinate.
        pub tolerance: f64,
        /// Coordinates with both values below this magnitude count as equal.
        pub abs_floor: f64,
        pub generator: GeneratorConfig,
        /// Clip widths tried in order until all ratios clear the boundary
        /// margin; gradients are checked away from clip boundaries where the
        /// surrogate is differentiable.
        pub delta_candidates: Vec<f64>,
        pub boundary_margin: f64,
        pub lambda: f64,
    }

    impl Default for OracleSuiteConfig {
        fn default() -> Self {
            Self {
                count: 120,
                seed: 42,
                eps: 1e-5,
                tolerance: 1e-4,
                abs_floor: 1e-8,
                generator: GeneratorConfig::default(),
                delta_candidates: vec![0.2, 0.1, 0.3, 0.15, 0.25, 0.35, 0.05, 0.4],
                boundary_margin: 5e-3,
                lambda: 0.7,
            }
        }
    }

    #[derive(Debug, Clone)]
    pub struct OracleCase {
        pub index: usize,
        pub kind: &'static str,
        pub param_count: usize,
        pub rel_err_value: f64,
        pub rel_err_sft: f64,
        pub rel_err_clip: f64,
        pub rel_err_kl: f64,
        pub delta: f64,
    }

    impl OracleCase {
        pub fn worst(&self) -> f64 {
            self.rel_err_value.max(self.rel_err_sft).max(self.rel_err_clip).max(self.rel_err_kl)
        }
    }

    #[derive(Debug, Clone)]
    pub struct OracleSuiteReport {
        pub cases: Vec<OracleCase>,
        pub tolerance: f64,
    }

    impl OracleSuiteReport {
        pub fn max_rel_err(&self) -> f64 {
            self.cases.iter().map(OracleCase::worst).fold(0.0, f64::max)
        }

        pub fn failures(&self) -> usize {
            self.cases.iter().filter(|c| c.worst() > self.tolerance).count()
        }
    }

    /// Pick the first candidate clip width for which no output ratio falls
    /// within the margin of a clip boundary, so finite differences do not
    /// straddle the surrogate's kink.
    fn pick_delta(inst: &Instance, config: &OracleSuiteConfig) -> Result<f64, GradError> {
        let en = Enumerated::build(&inst.policy, &inst.x, config.generator.cap)?;
        let en_ref = Enumerated::build(&inst.ref_policy, &inst.x, config.generator.cap)?;
        let ratios: Vec<f64> = en.probs.iter().zip(&en_ref.probs).map(|(a, b)| a / b).collect();
        let margin_of = |delta: f64| {
            ratios
                .iter()
                .map(|r| (r - (1.0 + delta)).abs().min((r - (1.0 - delta)).abs()))
                .fold(f64::INFINITY, f64::min)
        };
        let best = config
            .delta_candidates
            .iter()
            .copied()
            .max_by(|a, b| margin_of(*a).total_cmp(&margin_of(*b)))
            .expect("candidate list is nonempty");
        for &delta in &config.delta_candidates {
            if margin_of(delta) >= config.boundary_margin {
                return Ok(delta);
            }
        }
        Ok(best)
    }

    /// Run the oracle suite; deterministic in the seed.
    pub fn oracle_suite(config: &OracleSuiteConfig) -> Result<OracleSuiteReport, GradError> {
        let cap = config.generator.cap;
        let mut cases = Vec::with_capacity(config.count);
        for index in 0..config.count {
            let mut rng = substream(config.seed, index as u64);
            let inst = random_instance(&mut rng, &config.generator, index);
            let Instance { policy, ref_policy, input_id, x, reward, .. } = &inst;

            let analytic_value = grad_value(policy, *input_id, x, reward, cap)?;
            let fd_value = finite_diff_policy_grad(policy, config.eps, |p| {
                Ok(expected_reward(p, *input_id, x, reward, cap)?)
            })?;
            let rel_err_value = max_rel_err(analytic_value.values(), &fd_value, config.abs_floor);

            // Supervision target: the reward's preferred output when it has
            // one, otherwise the lexicographically first output.
            let target_seq = match reward {
                RewardSpec::LabelMatch(rules) => rules[*input_id].target.clone(),
                RewardSpec::Table(_) => vec![0; policy.vocab().l_out()],
            };
            let target = OutputTarget::one_hot(target_seq);
            let analytic_sft = grad_sft(policy, x, &target)?;
            let fd_sft = finite_diff_policy_grad(policy, config.eps, |p| {
                let mut loss = 0.0;
                for (y, w) in target.pairs() {
                    loss -= w * p.seq_prob(x, y)?.ln();
                }
                Ok(loss)
            })?;
            let rel_err_sft = max_rel_err(analytic_sft.values(), &fd_sft, config.abs_floor);

            let delta = pick_delta(&inst, config)?;
            let analytic_clip = grad_ppo_clip(policy, ref_policy, *input_id, x, reward, delta, cap)?;
            let fd_clip = finite_diff_policy_grad(policy, config.eps, |p| {
                ppo_clip_value(p, ref_policy, *input_id, x, reward, delta, cap)
            })?;
            let rel_err_clip = max_rel_err(analytic_clip.values(), &fd_clip, config.abs_floor);

            let analytic_kl =
                grad_ppo_kl(policy, ref_policy, *input_id, x, reward, config.lambda, cap)?;
            let fd_kl = finite_diff_policy_grad(policy, config.eps, |p| {
                ppo_kl_value(p, ref_policy, *input_id, x, reward, config.lambda, cap)
            })?;
            let rel_err_kl = max_rel_err(analytic_kl.values(), &fd_kl, config.abs_floor);

            cases.push(OracleCase {
                index,
                kind: policy.arch().kind_name(),
                param_count: policy.params().len(),
                rel_err_value,
                rel_err_sft,
                rel_err_clip,
                rel_err_kl,
                delta,
            });
        }
        Ok(OracleSuiteReport { cases, tolerance: config.tolerance })
    }
}
