//! Run configuration: one TOML file with per-command sections, strict
//! schema, and serializable defaults so the resolved settings can be
//! digested for the manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rftlab_core::trainlab::{Batch, ModelKind, OptKind, OptimizerConfig};

/// Top-level configuration. Every field has a default, so an absent file,
/// an empty file, and a file with only overrides are all valid. Unknown
/// keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Base RNG seed; substreams are derived per use.
    pub seed: u64,
    /// Parent output directory; artifacts land in `<out>/<command>/`.
    pub out: PathBuf,
    pub bounds: BoundsSection,
    pub gradflow: GradflowSection,
    pub controlled: ControlledSection,
    pub mitigate: MitigateSection,
    pub diagnose: DiagnoseSection,
    pub plot_data: PlotDataSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("runs"),
            bounds: BoundsSection::default(),
            gradflow: GradflowSection::default(),
            controlled: ControlledSection::default(),
            mitigate: MitigateSection::default(),
            diagnose: DiagnoseSection::default(),
            plot_data: PlotDataSection::default(),
        }
    }
}

impl Config {
    /// Load from a TOML file, or produce the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let config: Self = toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?;
                Ok(config)
            }
        }
    }

    /// Hex SHA-256 of the resolved configuration (after flag overrides), so
    /// the manifest pins exactly what ran.
    pub fn digest(&self) -> Result<String> {
        let canonical = toml::to_string(self).context("serializing resolved config")?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }
}

/// Settings for `verify-bounds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    /// Randomized instances in the main sweep.
    pub instances: usize,
    /// Instances in the exponent-sensitivity probe (recorded, not gated).
    pub probe_instances: usize,
    /// Clip widths checked per instance.
    pub deltas: Vec<f64>,
    /// Regularizer weights checked per instance.
    pub lambdas: Vec<f64>,
    /// Inclusive vocabulary-size range of generated instances.
    pub min_vocab: usize,
    pub max_vocab: usize,
    /// Inclusive output-length range of generated instances.
    pub max_l_out: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            instances: 1000,
            probe_instances: 200,
            deltas: vec![0.1, 0.2, 0.3],
            lambdas: vec![0.1, 1.0, 10.0],
            min_vocab: 2,
            max_vocab: 6,
            max_l_out: 3,
        }
    }
}

/// Settings for `gradflow`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradflowSection {
    /// Number of output values in the scalar-gap setting.
    pub k: usize,
    /// Population size multiplier.
    pub n: usize,
    /// Descending initial-gap grid: start, end, (negative) step.
    pub mu0_start: f64,
    pub mu0_end: f64,
    pub mu0_step: f64,
    /// Rows with initial reward std at or below this form the fit tail.
    pub tail_sigma_max: f64,
    /// Accepted window for the log-log reward-time slope.
    pub slope_min: f64,
    pub slope_max: f64,
    /// Minimum R^2 for the cross-entropy-time linear fit.
    pub min_r2: f64,
}

impl Default for GradflowSection {
    fn default() -> Self {
        Self {
            k: 2,
            n: 1,
            mu0_start: -1.0,
            mu0_end: -12.0,
            mu0_step: -0.5,
            tail_sigma_max: 0.05,
            slope_min: 1.8,
            slope_max: 2.2,
            min_r2: 0.99,
        }
    }
}

/// Which finetuning runs `controlled` performs after pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Rft,
    Sft,
    Both,
}

impl Objective {
    pub fn wants_rft(self) -> bool {
        matches!(self, Objective::Rft | Objective::Both)
    }

    pub fn wants_sft(self) -> bool {
        matches!(self, Objective::Sft | Objective::Both)
    }
}

/// One optimizer recipe. `batch = 0` means full batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptSection {
    pub algo: Algo,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Adam,
    Sgd,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algo::Adam => write!(f, "adam"),
            Algo::Sgd => write!(f, "sgd"),
        }
    }
}

impl Default for OptSection {
    fn default() -> Self {
        Self { algo: Algo::Adam, learning_rate: 1e-4, epochs: 5000, batch: 0 }
    }
}

impl OptSection {
    pub fn to_optimizer(&self) -> OptimizerConfig {
        let base = match self.algo {
            Algo::Adam => OptimizerConfig::adam(self.learning_rate, self.epochs),
            Algo::Sgd => OptimizerConfig::sgd(self.learning_rate, self.epochs),
        };
        let batch = if self.batch == 0 { Batch::Full } else { Batch::Size(self.batch) };
        OptimizerConfig { batch, ..base }
    }
}

/// Settings for `controlled` (also the base run for `mitigate` and
/// `diagnose`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlledSection {
    pub n_samples: usize,
    pub input_dim: usize,
    pub n_labels: usize,
    pub n_pretrain_labels: usize,
    pub flip_fraction: f64,
    pub incorrect_reward_flipped: f64,
    /// Hidden layer widths; empty means a linear model.
    pub hidden: Vec<usize>,
    pub pretrain: OptSection,
    pub finetune: OptSection,
    pub objective: Objective,
    /// Trace cadence in optimizer steps.
    pub log_every: usize,
    /// Also write the generated dataset as CSV.
    pub export_dataset: bool,
}

impl Default for ControlledSection {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            input_dim: 32,
            n_labels: 10,
            n_pretrain_labels: 5,
            flip_fraction: 0.1,
            incorrect_reward_flipped: -1.0,
            hidden: vec![128, 64],
            pretrain: OptSection { algo: Algo::Adam, learning_rate: 2e-3, epochs: 1000, batch: 100 },
            finetune: OptSection::default(),
            objective: Objective::Both,
            log_every: 50,
            export_dataset: false,
        }
    }
}

impl ControlledSection {
    pub fn to_spec(&self, seed: u64) -> rftlab_core::trainlab::ControlledSpec {
        let model = if self.hidden.is_empty() {
            ModelKind::Linear
        } else {
            ModelKind::Mlp(self.hidden.clone())
        };
        rftlab_core::trainlab::ControlledSpec {
            n_samples: self.n_samples,
            input_dim: self.input_dim,
            n_labels: self.n_labels,
            n_pretrain_labels: self.n_pretrain_labels,
            flip_fraction: self.flip_fraction,
            incorrect_reward_flipped: self.incorrect_reward_flipped,
            model,
            seed,
        }
    }
}

/// Settings for `mitigate`: a grid of partial supervised phases ahead of
/// reward finetuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigateSection {
    /// Fractions of the supervised budget to run, one grid axis.
    pub step_fractions: Vec<f64>,
    /// Fractions of the dataset to train on, the other grid axis.
    pub sample_fractions: Vec<f64>,
    /// Reward-std threshold in the stalled-sample count.
    pub std_threshold: f64,
    /// Samples with reward mean at or above this are excluded from the count.
    pub mean_cutoff: f64,
    /// Seed of the subset draw (separate from the global seed so subsets can
    /// vary with the dataset held fixed).
    pub subset_seed: u64,
}

impl Default for MitigateSection {
    fn default() -> Self {
        Self {
            step_fractions: vec![0.1],
            sample_fractions: vec![0.1],
            std_threshold: 0.1,
            mean_cutoff: 0.9,
            subset_seed: 0,
        }
    }
}

/// Settings for `diagnose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Percentiles of the per-input reward std reported after pretraining.
    pub percentiles: Vec<f64>,
    /// Near-converged inputs (reward mean above this) are excluded from the
    /// percentile summary.
    pub mean_cutoff: f64,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self { percentiles: vec![10.0, 25.0, 50.0, 75.0, 90.0], mean_cutoff: 0.9 }
    }
}

/// Settings for `plot-data`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PlotDataSection {
    /// Training-trace CSV files to split into per-metric panels.
    pub traces: Vec<PathBuf>,
}

/// Keep a tiny compile-time tie to the optimizer kind so config and core
/// cannot drift apart silently.
#[allow(dead_code)]
fn algo_covers_all_kinds(kind: OptKind) -> Algo {
    match kind {
        OptKind::Adam { .. } => Algo::Adam,
        OptKind::Sgd => Algo::Sgd,
    }
}
