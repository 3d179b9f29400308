//! Seeded random test instances: a policy, a nearby reference policy, an
//! input, and a reward.
//!
//! The same generator feeds the gradient oracle suite and the bound sweeps,
//! so coverage decisions (architecture mix, logit scale, reference
//! perturbation, reward family) live in one place. Everything is a pure
//! function of the caller-supplied generator, so a fixed seed reproduces a
//! fixed instance stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::policy::{enumerate_outputs_capped, Architecture, Input, SoftmaxPolicy, Vocabulary};
use crate::reward::{MatchRule, RewardSpec};

/// Ranges and mixture weights for instance generation.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Inclusive vocabulary-size range.
    pub size_range: (usize, usize),
    /// Inclusive output-length range.
    pub l_out_range: (usize, usize),
    /// Inclusive feature-dimension range for dense models.
    pub input_dim_range: (usize, usize),
    /// Hidden-width choices for mlp instances.
    pub mlp_hidden_choices: Vec<Vec<usize>>,
    /// Logit standard deviations to cycle through.
    pub scales: Vec<f64>,
    /// Reference-perturbation standard deviations to cycle through.
    pub taus: Vec<f64>,
    /// Probability that the reward is a target-match rule rather than an
    /// i.i.d. uniform table.
    pub label_match_prob: f64,
    /// Enumeration cap for the generated instances.
    pub cap: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            size_range: (2, 6),
            l_out_range: (1, 3),
            input_dim_range: (2, 5),
            mlp_hidden_choices: vec![vec![5], vec![6, 4], vec![8, 6]],
            scales: vec![0.1, 1.0, 3.0],
            taus: vec![0.0, 0.01, 0.1],
            label_match_prob: 0.5,
            cap: crate::policy::DEFAULT_ENUM_CAP,
        }
    }
}

/// One generated test case. The reference policy shares the architecture
/// and differs by a Gaussian parameter perturbation.
#[derive(Debug, Clone)]
pub struct Instance {
    pub policy: SoftmaxPolicy,
    pub ref_policy: SoftmaxPolicy,
    pub input_id: usize,
    pub x: Input,
    pub reward: RewardSpec,
    /// Generator bookkeeping: logit scale and perturbation size used.
    pub scale: f64,
    pub tau: f64,
}

pub(crate) fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; uses two uniform draws per call for platform-stable output.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub(crate) fn gauss_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * gauss(rng)).collect()
}

/// Parameter draw that puts the logits near the requested scale: tabular
/// rows are direct draws, dense layers shrink by fan-in so the forward pass
/// lands at comparable magnitude.
fn draw_params(arch: &Architecture, vocab: &Vocabulary, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match arch {
        Architecture::TabularAr { .. } => {
            let n = arch.param_count(vocab).expect("valid arch");
            gauss_vec(rng, n, scale)
        }
        Architecture::Linear { .. } | Architecture::Mlp { .. } => {
            let layout = arch.layout(vocab).expect("valid arch");
            let feature_dim = arch.feature_dim(vocab) as f64;
            let mut values = Vec::new();
            let mut fan_in = feature_dim;
            for (name, len) in layout {
                if name.starts_with('w') {
                    let rows = match &arch {
                        Architecture::Linear { .. } => vocab.size(),
                        _ => len / fan_in as usize,
                    };
                    let std = scale / fan_in.sqrt();
                    values.extend(gauss_vec(rng, len, std));
                    fan_in = rows as f64;
                } else {
                    values.extend(gauss_vec(rng, len, 0.1 * scale));
                }
            }
            values
        }
    }
}

/// Draw instance `index` of the stream for `rng`.
///
/// Architectures cycle tabular/linear/mlp by index so every suite covers
/// all three; scales and taus cycle through the configured lists.
pub fn random_instance(rng: &mut ChaCha8Rng, config: &GeneratorConfig, index: usize) -> Instance {
    let size = rng.gen_range(config.size_range.0..=config.size_range.1);
    let l_out = rng.gen_range(config.l_out_range.0..=config.l_out_range.1);
    let vocab = Vocabulary::new(size, l_out, 1).expect("valid vocabulary");
    let scale = config.scales[index % config.scales.len()];
    let tau = config.taus[(index / config.scales.len()) % config.taus.len()];

    let (arch, x) = match index % 3 {
        0 => (Architecture::TabularAr { n_inputs: 1 }, Input::Id(0)),
        1 => {
            let d = rng.gen_range(config.input_dim_range.0..=config.input_dim_range.1);
            (Architecture::Linear { input_dim: d }, Input::Features(gauss_vec(rng, d, 1.0)))
        }
        _ => {
            let d = rng.gen_range(config.input_dim_range.0..=config.input_dim_range.1);
            let hidden = config.mlp_hidden_choices[rng.gen_range(0..config.mlp_hidden_choices.len())].clone();
            (Architecture::Mlp { input_dim: d, hidden }, Input::Features(gauss_vec(rng, d, 1.0)))
        }
    };

    let values = draw_params(&arch, &vocab, scale, rng);
    let policy = SoftmaxPolicy::new(vocab, arch, values).expect("generated policy is valid");

    let mut ref_values = policy.params().values().to_vec();
    for v in &mut ref_values {
        *v += tau * gauss(rng);
    }
    let ref_policy = policy.with_values(ref_values).expect("perturbed policy is valid");

    let reward = if rng.gen::<f64>() < config.label_match_prob {
        let target: Vec<usize> = (0..l_out).map(|_| rng.gen_range(0..size)).collect();
        RewardSpec::label_match(vec![MatchRule::standard(target)]).expect("valid rule")
    } else {
        let outputs = enumerate_outputs_capped(&vocab, config.cap).expect("within cap");
        RewardSpec::table(
            outputs.into_iter().map(|y| ((0usize, y), rng.gen::<f64>() * 2.0 - 1.0)),
        )
        .expect("valid table")
    };

    Instance { policy, ref_policy, input_id: 0, x, reward, scale, tau }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::substream;

    #[test]
    fn generation_is_deterministic_in_seed() {
        let config = GeneratorConfig::default();
        for index in 0..6 {
            let a = random_instance(&mut substream(11, index as u64), &config, index);
            let b = random_instance(&mut substream(11, index as u64), &config, index);
            assert_eq!(a.policy.params().values(), b.policy.params().values());
            assert_eq!(a.ref_policy.params().values(), b.ref_policy.params().values());
        }
    }

    #[test]
    fn zero_tau_instances_share_parameters() {
        let config = GeneratorConfig { taus: vec![0.0], ..Default::default() };
        for index in 0..6 {
            let inst = random_instance(&mut substream(3, index as u64), &config, index);
            assert_eq!(inst.policy.params().values(), inst.ref_policy.params().values());
        }
    }

    #[test]
    fn kinds_cycle_over_index() {
        let config = GeneratorConfig::default();
        let kinds: Vec<&str> = (0..6)
            .map(|i| {
                let inst = random_instance(&mut substream(5, i as u64), &config, i);
                inst.policy.arch().kind_name()
            })
            .collect();
        assert_eq!(kinds, vec!["tabular_ar", "linear", "mlp", "tabular_ar", "linear", "mlp"]);
    }
}
