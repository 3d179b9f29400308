//! Controlled finetuning experiments on synthetic classification data.
//!
//! The setup: each sample gets a *set* of pretraining labels (its class plus
//! random extras); pretraining fits a uniform distribution over that set.
//! Finetuning then targets a single label per sample. For most samples the
//! finetuning label sits inside the pretraining set, so the pretrained model
//! already assigns it probability ~1/set-size and the reward has large
//! standard deviation. A chosen fraction of samples instead gets a label
//! *outside* the set; the pretrained model assigns it nearly zero
//! probability, making the reward almost deterministic (std near zero). The
//! two groups expose how reward finetuning stalls exactly where the reward
//! std vanishes, while supervised finetuning does not.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::grad::GradError;
use crate::instances::gauss_vec;
use crate::policy::{Architecture, PolicyError, Token, Vocabulary};
use crate::reward::{MatchRule, RewardError, RewardSpec};
use crate::seeding::rng_from_seed;

mod mitigate;
mod optim;
mod train;

pub use mitigate::{
    partial_sft_then_rft, small_std_suboptimal_count, MitigationConfig, MitigationReport,
};
pub use optim::{adam_step, sgd_step, Batch, OptKind, OptState, OptimizerConfig};
pub use train::{
    init_policy, mean_reward, pretrain, rft_train, sample_metrics, sft_train, MetricObjective,
    SampleMetrics, TraceRow, TrainOptions, TrainingTrace,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("sample {sample} has no label outside its pretraining set")]
    InfeasibleFlip { sample: usize },
    #[error(
        "pretraining stopped above target: cross-entropy {final_ce:.6} vs target {target:.6} (+{tolerance} allowed) after {epochs} epochs"
    )]
    PretrainLoose { final_ce: f64, target: f64, tolerance: f64, epochs: usize },
    #[error("non-finite {what} at optimizer step {step}")]
    NonFinite { what: &'static str, step: usize },
    #[error("invalid optimizer config: {0}")]
    InvalidOptimizer(String),
    #[error("dataset file format error at record {record}: {message}")]
    DatasetFormat { record: usize, message: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Model family for the classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Mlp(Vec<usize>),
}

/// Reward-std group of a sample, fixed at dataset construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// Finetuning label outside the pretraining set; near-zero reward std
    /// after pretraining.
    SmallStd,
    /// Finetuning label inside the pretraining set; large reward std.
    LargeStd,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::SmallStd, Group::LargeStd];

    pub fn label(self) -> &'static str {
        match self {
            Group::SmallStd => "small_std",
            Group::LargeStd => "large_std",
        }
    }
}

/// Full recipe for a controlled experiment.
#[derive(Debug, Clone)]
pub struct ControlledSpec {
    pub n_samples: usize,
    pub input_dim: usize,
    /// Number of class labels `K`.
    pub n_labels: usize,
    /// Labels per sample during pretraining, including the true class.
    pub n_pretrain_labels: usize,
    /// Fraction of samples whose finetuning label is moved outside their
    /// pretraining set.
    pub flip_fraction: f64,
    /// Reward paid on a wrong output for flipped samples (-1 standard;
    /// 0.5 in the high-initial-reward variant).
    pub incorrect_reward_flipped: f64,
    pub model: ModelKind,
    pub seed: u64,
}

impl Default for ControlledSpec {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            input_dim: 32,
            n_labels: 10,
            n_pretrain_labels: 5,
            flip_fraction: 0.1,
            incorrect_reward_flipped: -1.0,
            model: ModelKind::Mlp(vec![128, 64]),
            seed: 17,
        }
    }
}

impl ControlledSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_samples == 0 {
            return Err(TrainError::InvalidSpec("need at least one sample".into()));
        }
        if self.input_dim == 0 {
            return Err(TrainError::InvalidSpec("input dimension must be positive".into()));
        }
        if self.n_labels < 2 {
            return Err(TrainError::InvalidSpec("need at least two labels".into()));
        }
        if self.n_pretrain_labels == 0 || self.n_pretrain_labels > self.n_labels {
            return Err(TrainError::InvalidSpec(format!(
                "pretraining label count {} must lie in 1..={}",
                self.n_pretrain_labels, self.n_labels
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_fraction) {
            return Err(TrainError::InvalidSpec(format!(
                "flip fraction {} outside [0, 1]",
                self.flip_fraction
            )));
        }
        if self.flip_fraction > 0.0 && self.n_pretrain_labels == self.n_labels {
            return Err(TrainError::InvalidSpec(
                "flipping requires a label outside the pretraining set, but the set covers all labels"
                    .into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.incorrect_reward_flipped) {
            return Err(TrainError::InvalidSpec(format!(
                "incorrect reward {} outside [-1, 1]",
                self.incorrect_reward_flipped
            )));
        }
        if let ModelKind::Mlp(hidden) = &self.model {
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(TrainError::InvalidSpec("mlp hidden widths must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.n_labels, 1, 1).expect("validated spec")
    }

    pub fn architecture(&self) -> Architecture {
        match &self.model {
            ModelKind::Linear => Architecture::Linear { input_dim: self.input_dim },
            ModelKind::Mlp(hidden) => {
                Architecture::Mlp { input_dim: self.input_dim, hidden: hidden.clone() }
            }
        }
    }
}

/// Within-class spread of the synthetic inputs, relative to the unit-norm
/// class directions. Chosen so a two-layer network separates classes
/// cleanly while same-class samples stay distinguishable.
pub const CLASS_NOISE: f64 = 1.0;

/// Built dataset: unit-norm inputs, per-sample pretraining label sets,
/// one finetuning label each, and the fixed std group tags.
#[derive(Debug, Clone)]
pub struct ControlledDataset {
    pub inputs: Vec<Vec<f64>>,
    pub classes: Vec<Token>,
    pub pretrain_label_sets: Vec<BTreeSet<Token>>,
    pub finetune_labels: Vec<Token>,
    pub groups: Vec<Group>,
}

impl ControlledDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Sample indices belonging to one group, ascending.
    pub fn group_indices(&self, group: Group) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == group).collect()
    }

    fn check(&self) -> Result<(), TrainError> {
        for i in 0..self.len() {
            let inside = self.pretrain_label_sets[i].contains(&self.finetune_labels[i]);
            let ok = match self.groups[i] {
                Group::SmallStd => !inside,
                Group::LargeStd => inside,
            };
            if !ok {
                return Err(TrainError::InvalidSpec(format!(
                    "sample {i}: group tag inconsistent with label membership"
                )));
            }
        }
        Ok(())
    }
}

fn unit_norm(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Build the synthetic dataset. Deterministic in the spec's seed: class
/// directions first, then per-sample noise, then extra pretraining labels,
/// then the flipped subset and its outside labels.
pub fn build_controlled_dataset(spec: &ControlledSpec) -> Result<ControlledDataset, TrainError> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let k = spec.n_labels;
    let d = spec.input_dim;
    let n = spec.n_samples;

    let class_dirs: Vec<Vec<f64>> =
        (0..k).map(|_| unit_norm(gauss_vec(&mut rng, d, 1.0))).collect();

    let mut inputs = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        let noise = gauss_vec(&mut rng, d, CLASS_NOISE / (d as f64).sqrt());
        let x: Vec<f64> =
            class_dirs[class].iter().zip(&noise).map(|(m, e)| m + e).collect();
        inputs.push(unit_norm(x));
        classes.push(class);
    }

    let mut pretrain_label_sets = Vec::with_capacity(n);
    for &class in &classes {
        let mut set = BTreeSet::new();
        set.insert(class);
        while set.len() < spec.n_pretrain_labels {
            set.insert(rng.gen_range(0..k));
        }
        pretrain_label_sets.push(set);
    }

    // Fisher-Yates prefix selects the flipped subset.
    let flip_count = (spec.flip_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..flip_count {
        let pick = j + rng.gen_range(0..n - j);
        order.swap(j, pick);
    }
    let flipped: BTreeSet<usize> = order[..flip_count].iter().copied().collect();

    let mut finetune_labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        if flipped.contains(&i) {
            let outside: Vec<Token> =
                (0..k).filter(|t| !pretrain_label_sets[i].contains(t)).collect();
            if outside.is_empty() {
                return Err(TrainError::InfeasibleFlip { sample: i });
            }
            finetune_labels.push(outside[rng.gen_range(0..outside.len())]);
            groups.push(Group::SmallStd);
        } else {
            finetune_labels.push(classes[i]);
            groups.push(Group::LargeStd);
        }
    }

    let dataset = ControlledDataset { inputs, classes, pretrain_label_sets, finetune_labels, groups };
    dataset.check()?;
    Ok(dataset)
}

/// Finetuning reward: +1 on the finetuning label; otherwise -1 for kept
/// samples and `incorrect_reward_flipped` for flipped ones.
pub fn finetune_reward(
    dataset: &ControlledDataset,
    incorrect_reward_flipped: f64,
) -> Result<RewardSpec, TrainError> {
    let rules = (0..dataset.len())
        .map(|i| MatchRule {
            target: vec![dataset.finetune_labels[i]],
            correct: 1.0,
            incorrect: match dataset.groups[i] {
                Group::SmallStd => incorrect_reward_flipped,
                Group::LargeStd => -1.0,
            },
        })
        .collect();
    Ok(RewardSpec::label_match(rules)?)
}

/// Read a dataset from CSV: `D` feature columns, a semicolon-joined
/// pretraining label set, and the finetuning label. Class and group tags
/// are derived (class = first label of the set; group = membership of the
/// finetuning label).
pub fn load_dataset_csv(path: &Path) -> Result<ControlledDataset, TrainError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let mut classes = Vec::new();
    let mut pretrain_label_sets = Vec::new();
    let mut finetune_labels = Vec::new();
    let mut groups = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let bad = |message: String| TrainError::DatasetFormat { record: idx + 1, message };
        if record.len() < 3 {
            return Err(bad(format!("need at least 3 columns, got {}", record.len())));
        }
        let d = record.len() - 2;
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            x.push(
                record[j]
                    .parse::<f64>()
                    .map_err(|e| bad(format!("feature column {}: {e}", j + 1)))?,
            );
        }
        let set: BTreeSet<Token> = record[d]
            .split(';')
            .map(|s| s.trim().parse::<Token>().map_err(|e| bad(format!("label set: {e}"))))
            .collect::<Result<_, _>>()?;
        if set.is_empty() {
            return Err(bad("empty pretraining label set".into()));
        }
        let finetune = record[d + 1]
            .parse::<Token>()
            .map_err(|e| bad(format!("finetuning label: {e}")))?;
        if !inputs.is_empty() && x.len() != inputs[0].len() {
            return Err(bad(format!(
                "feature count {} differs from first record's {}",
                x.len(),
                inputs[0].len()
            )));
        }
        classes.push(*set.iter().next().expect("nonempty set"));
        groups.push(if set.contains(&finetune) { Group::LargeStd } else { Group::SmallStd });
        inputs.push(x);
        pretrain_label_sets.push(set);
        finetune_labels.push(finetune);
    }
    if inputs.is_empty() {
        return Err(TrainError::DatasetFormat { record: 0, message: "no records".into() });
    }
    let dataset = ControlledDataset { inputs, classes, pretrain_label_sets, finetune_labels, groups };
    dataset.check()?;
    Ok(dataset)
}

/// Write a dataset in the same CSV layout that [`load_dataset_csv`] reads.
pub fn save_dataset_csv(dataset: &ControlledDataset, path: &Path) -> Result<(), TrainError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..dataset.len() {
        let mut fields: Vec<String> =
            dataset.inputs[i].iter().map(|v| crate::fmt::fmt_f64(*v)).collect();
        let set: Vec<String> =
            dataset.pretrain_label_sets[i].iter().map(Token::to_string).collect();
        fields.push(set.join(";"));
        fields.push(dataset.finetune_labels[i].to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
