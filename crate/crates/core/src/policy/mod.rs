//! Softmax policies over small finite output spaces.
//!
//! A policy assigns `p(y|x) = prod_l softmax(f(x, y_{<l}))_{y_l}` to every
//! output sequence `y` of fixed length. Output spaces are small enough to
//! enumerate, which is what makes every downstream quantity (expected
//! reward, exact gradients, bound constants) computable without sampling.
//!
//! Three logit functions are supported:
//!
//! * [`Architecture::TabularAr`] stores one logit row per (input id, prefix)
//!   pair and is the most general function on a finite domain.
//! * [`Architecture::Linear`] maps a feature vector through a single weight
//!   matrix (no bias), the setting of the continuous-time analysis.
//! * [`Architecture::Mlp`] is a fully connected rectifier network with
//!   biases.
//!
//! For `Linear`/`Mlp` with output length above one, the prefix enters the
//! feature vector as per-position one-hot blocks appended to the input
//! features; a length-one output reduces to the plain classifier case.

mod text;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Token id in `[0, vocab.size())`.
pub type Token = usize;

/// Default ceiling on exhaustive output enumeration.
pub const DEFAULT_ENUM_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("vocabulary needs size >= 2 and positive lengths (got size={size}, l_out={l_out}, l_in={l_in})")]
    InvalidVocabulary { size: usize, l_out: usize, l_in: usize },
    #[error("enumeration needs {required} sequences, above the cap of {cap}")]
    CapExceeded { required: u128, cap: usize },
    #[error("input does not match the policy architecture: {0}")]
    InputMismatch(String),
    #[error("invalid prefix: {0}")]
    PrefixInvalid(String),
    #[error("invalid parameters: {0}")]
    ParamsInvalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("policy text format, line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token count and sequence lengths of a policy's input/output spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    size: usize,
    l_out: usize,
    l_in: usize,
}

impl Vocabulary {
    pub fn new(size: usize, l_out: usize, l_in: usize) -> Result<Self, PolicyError> {
        if size < 2 || l_out == 0 || l_in == 0 {
            return Err(PolicyError::InvalidVocabulary { size, l_out, l_in });
        }
        Ok(Self { size, l_out, l_in })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn l_out(&self) -> usize {
        self.l_out
    }

    pub fn l_in(&self) -> usize {
        self.l_in
    }

    /// `size^l_out`, the number of distinct output sequences.
    pub fn output_count(&self) -> u128 {
        (self.size as u128).pow(self.l_out as u32)
    }

    /// Number of proper prefixes (lengths `0..l_out`), i.e. logit-row sites.
    pub fn prefix_count(&self) -> u128 {
        (0..self.l_out).map(|j| (self.size as u128).pow(j as u32)).sum()
    }
}

/// All output sequences in lexicographic order, under the default cap.
pub fn enumerate_outputs(vocab: &Vocabulary) -> Result<Vec<Vec<Token>>, PolicyError> {
    enumerate_outputs_capped(vocab, DEFAULT_ENUM_CAP)
}

/// All output sequences in lexicographic order, under an explicit cap.
pub fn enumerate_outputs_capped(vocab: &Vocabulary, cap: usize) -> Result<Vec<Vec<Token>>, PolicyError> {
    let required = vocab.output_count();
    if required > cap as u128 {
        return Err(PolicyError::CapExceeded { required, cap });
    }
    let mut out = Vec::with_capacity(required as usize);
    let mut seq = vec![0 as Token; vocab.l_out];
    loop {
        out.push(seq.clone());
        // Odometer increment in lexicographic order.
        let mut pos = vocab.l_out;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            seq[pos] += 1;
            if seq[pos] < vocab.size {
                break;
            }
            seq[pos] = 0;
        }
    }
}

/// All proper prefixes (length `0..l_out`), shortest first, lexicographic
/// within each length. Index in this list equals [`prefix_index`].
pub fn enumerate_prefixes(vocab: &Vocabulary, cap: usize) -> Result<Vec<Vec<Token>>, PolicyError> {
    let required = vocab.prefix_count();
    if required > cap as u128 {
        return Err(PolicyError::CapExceeded { required, cap });
    }
    let mut out = Vec::with_capacity(required as usize);
    for len in 0..vocab.l_out {
        let sub = Vocabulary::new(vocab.size, len.max(1), vocab.l_in).expect("valid sub-vocabulary");
        if len == 0 {
            out.push(Vec::new());
        } else {
            out.extend(enumerate_outputs_capped(&sub, cap)?);
        }
    }
    Ok(out)
}

/// Position of `prefix` in [`enumerate_prefixes`] order.
pub fn prefix_index(vocab: &Vocabulary, prefix: &[Token]) -> usize {
    let k = vocab.size;
    let offset: usize = (0..prefix.len()).map(|j| k.pow(j as u32)).sum();
    let rank = prefix.iter().fold(0usize, |acc, &t| acc * k + t);
    offset + rank
}

/// Named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Flat parameter vector with named block views.
///
/// Blocks partition `[0, len)` in order; all entries are finite. Matrices
/// are stored row-major inside their block, so the Euclidean norm of the
/// flat vector equals the Frobenius norm over all blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<LayoutBlock>,
}

impl ParamVector {
    pub fn from_blocks(blocks: Vec<(String, Vec<f64>)>) -> Result<Self, PolicyError> {
        let mut values = Vec::new();
        let mut layout = Vec::with_capacity(blocks.len());
        for (name, vals) in blocks {
            layout.push(LayoutBlock { name, start: values.len(), len: vals.len() });
            values.extend(vals);
        }
        Self::from_parts(values, layout)
    }

    pub fn from_parts(values: Vec<f64>, layout: Vec<LayoutBlock>) -> Result<Self, PolicyError> {
        let mut cursor = 0usize;
        for block in &layout {
            if block.start != cursor {
                return Err(PolicyError::ParamsInvalid(format!(
                    "layout block '{}' starts at {} but {} expected",
                    block.name, block.start, cursor
                )));
            }
            cursor += block.len;
        }
        if cursor != values.len() {
            return Err(PolicyError::ParamsInvalid(format!(
                "layout covers {cursor} values but {} stored",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PolicyError::ParamsInvalid(format!("non-finite entry at index {i}")));
        }
        Ok(Self { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for optimizers; callers must keep entries finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[LayoutBlock] {
        &self.layout
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.start..b.start + b.len])
    }
}

/// Logit function family plus its shape parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Architecture {
    /// One stored logit row per (input id, prefix) pair.
    TabularAr { n_inputs: usize },
    /// Single weight matrix of shape `size x feature_dim`, no bias.
    Linear { input_dim: usize },
    /// Fully connected rectifier network with biases.
    Mlp { input_dim: usize, hidden: Vec<usize> },
}

impl Architecture {
    /// Width of the dense-model feature vector: input features plus one-hot
    /// prefix blocks for positions `1..l_out`.
    pub fn feature_dim(&self, vocab: &Vocabulary) -> usize {
        match self {
            Architecture::TabularAr { .. } => 0,
            Architecture::Linear { input_dim } | Architecture::Mlp { input_dim, .. } => {
                input_dim + (vocab.l_out - 1) * vocab.size
            }
        }
    }

    /// Canonical block layout (names and lengths, in storage order).
    pub fn layout(&self, vocab: &Vocabulary) -> Result<Vec<(String, usize)>, PolicyError> {
        match self {
            Architecture::TabularAr { n_inputs } => {
                if *n_inputs == 0 {
                    return Err(PolicyError::ParamsInvalid("tabular policy needs n_inputs >= 1".into()));
                }
                let rows = (*n_inputs as u128) * vocab.prefix_count();
                let total = rows * vocab.size as u128;
                let total = usize::try_from(total)
                    .map_err(|_| PolicyError::ParamsInvalid("tabular logit store too large".into()))?;
                Ok(vec![("logits".to_owned(), total)])
            }
            Architecture::Linear { input_dim } => {
                if *input_dim == 0 {
                    return Err(PolicyError::ParamsInvalid("linear policy needs input_dim >= 1".into()));
                }
                Ok(vec![("weight".to_owned(), vocab.size * self.feature_dim(vocab))])
            }
            Architecture::Mlp { input_dim, hidden } => {
                if *input_dim == 0 {
                    return Err(PolicyError::ParamsInvalid("mlp policy needs input_dim >= 1".into()));
                }
                if hidden.is_empty() || hidden.iter().any(|&h| h == 0) {
                    return Err(PolicyError::ParamsInvalid("mlp hidden widths must be nonempty and positive".into()));
                }
                let mut dims = vec![self.feature_dim(vocab)];
                dims.extend_from_slice(hidden);
                dims.push(vocab.size);
                let mut blocks = Vec::new();
                for i in 1..dims.len() {
                    blocks.push((format!("w{i}"), dims[i] * dims[i - 1]));
                    blocks.push((format!("b{i}"), dims[i]));
                }
                Ok(blocks)
            }
        }
    }

    pub fn param_count(&self, vocab: &Vocabulary) -> Result<usize, PolicyError> {
        Ok(self.layout(vocab)?.iter().map(|(_, len)| len).sum())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Architecture::TabularAr { .. } => "tabular_ar",
            Architecture::Linear { .. } => "linear",
            Architecture::Mlp { .. } => "mlp",
        }
    }
}

/// Policy input: an opaque id for tabular policies, a feature vector for
/// dense ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Id(usize),
    Features(Vec<f64>),
}

/// Numerically stable softmax (max subtraction before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Exhaustive output distribution of a policy at one input.
#[derive(Debug, Clone)]
pub struct DistributionTable {
    outputs: Vec<Vec<Token>>,
    probs: Vec<f64>,
}

impl DistributionTable {
    fn new(outputs: Vec<Vec<Token>>, probs: Vec<f64>) -> Result<Self, PolicyError> {
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(PolicyError::NonFinite(format!("distribution sums to {sum}, expected 1")));
        }
        if probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(PolicyError::NonFinite("distribution entry outside (0, 1]".into()));
        }
        Ok(Self { outputs, probs })
    }

    pub fn outputs(&self) -> &[Vec<Token>] {
        &self.outputs
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Token], f64)> {
        self.outputs.iter().map(|o| o.as_slice()).zip(self.probs.iter().copied())
    }
}

/// A softmax policy: vocabulary, logit function, flat parameters.
///
/// `temperature` divides the raw logits before the softmax; the default of
/// one leaves them untouched. It is part of the logit function, so
/// Jacobians and everything downstream see the scaled values.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    vocab: Vocabulary,
    arch: Architecture,
    params: ParamVector,
    temperature: f64,
}

impl SoftmaxPolicy {
    pub fn new(vocab: Vocabulary, arch: Architecture, values: Vec<f64>) -> Result<Self, PolicyError> {
        let layout_spec = arch.layout(&vocab)?;
        let expected: usize = layout_spec.iter().map(|(_, len)| len).sum();
        if values.len() != expected {
            return Err(PolicyError::ParamsInvalid(format!(
                "architecture expects {expected} parameters, got {}",
                values.len()
            )));
        }
        let mut blocks = Vec::with_capacity(layout_spec.len());
        let mut cursor = 0usize;
        for (name, len) in layout_spec {
            blocks.push(LayoutBlock { name, start: cursor, len });
            cursor += len;
        }
        let params = ParamVector::from_parts(values, blocks)?;
        Ok(Self { vocab, arch, params, temperature: 1.0 })
    }

    /// Replace the temperature (must be positive and finite).
    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, PolicyError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(PolicyError::ParamsInvalid(format!("temperature must be positive, got {temperature}")));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Same architecture with different parameter values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, PolicyError> {
        let p = Self::new(self.vocab, self.arch.clone(), values)?;
        p.with_temperature(self.temperature)
    }

    fn check_prefix(&self, prefix: &[Token]) -> Result<(), PolicyError> {
        if prefix.len() >= self.vocab.l_out {
            return Err(PolicyError::PrefixInvalid(format!(
                "prefix length {} not below output length {}",
                prefix.len(),
                self.vocab.l_out
            )));
        }
        if let Some(&t) = prefix.iter().find(|&&t| t >= self.vocab.size) {
            return Err(PolicyError::PrefixInvalid(format!("token {t} outside vocabulary of size {}", self.vocab.size)));
        }
        Ok(())
    }

    fn check_output(&self, y: &[Token]) -> Result<(), PolicyError> {
        if y.len() != self.vocab.l_out {
            return Err(PolicyError::PrefixInvalid(format!(
                "output length {} does not match l_out {}",
                y.len(),
                self.vocab.l_out
            )));
        }
        if let Some(&t) = y.iter().find(|&&t| t >= self.vocab.size) {
            return Err(PolicyError::PrefixInvalid(format!("token {t} outside vocabulary of size {}", self.vocab.size)));
        }
        Ok(())
    }

    /// Dense-model feature vector: input features plus prefix one-hots.
    fn features(&self, x: &Input, prefix: &[Token]) -> Result<Vec<f64>, PolicyError> {
        let input_dim = match &self.arch {
            Architecture::Linear { input_dim } | Architecture::Mlp { input_dim, .. } => *input_dim,
            Architecture::TabularAr { .. } => unreachable!("features only for dense models"),
        };
        let xs = match x {
            Input::Features(v) => v,
            Input::Id(_) => {
                return Err(PolicyError::InputMismatch("dense policy needs a feature-vector input".into()))
            }
        };
        if xs.len() != input_dim {
            return Err(PolicyError::InputMismatch(format!(
                "feature vector has {} entries, architecture expects {input_dim}",
                xs.len()
            )));
        }
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::InputMismatch("feature vector has non-finite entries".into()));
        }
        let mut feat = vec![0.0; self.arch.feature_dim(&self.vocab)];
        feat[..input_dim].copy_from_slice(xs);
        for (j, &t) in prefix.iter().enumerate() {
            feat[input_dim + j * self.vocab.size + t] = 1.0;
        }
        Ok(feat)
    }

    fn tabular_row_start(&self, x: &Input, prefix: &[Token]) -> Result<usize, PolicyError> {
        let n_inputs = match &self.arch {
            Architecture::TabularAr { n_inputs } => *n_inputs,
            _ => unreachable!("row lookup only for tabular policies"),
        };
        let id = match x {
            Input::Id(id) => *id,
            Input::Features(_) => {
                return Err(PolicyError::InputMismatch("tabular policy needs an input id".into()))
            }
        };
        if id >= n_inputs {
            return Err(PolicyError::InputMismatch(format!("input id {id} outside 0..{n_inputs}")));
        }
        let prefix_count = self.vocab.prefix_count() as usize;
        let row = id * prefix_count + prefix_index(&self.vocab, prefix);
        Ok(row * self.vocab.size)
    }

    /// Raw next-token logits `f(x, prefix)`, including the temperature.
    pub fn logits(&self, x: &Input, prefix: &[Token]) -> Result<Vec<f64>, PolicyError> {
        self.check_prefix(prefix)?;
        let mut raw = match &self.arch {
            Architecture::TabularAr { .. } => {
                let start = self.tabular_row_start(x, prefix)?;
                self.params.values()[start..start + self.vocab.size].to_vec()
            }
            Architecture::Linear { .. } => {
                let feat = self.features(x, prefix)?;
                let w = self.params.block("weight").expect("linear weight block");
                let d = feat.len();
                (0..self.vocab.size)
                    .map(|k| w[k * d..(k + 1) * d].iter().zip(&feat).map(|(a, b)| a * b).sum())
                    .collect()
            }
            Architecture::Mlp { .. } => self.mlp_forward(x, prefix)?.logits,
        };
        if self.temperature != 1.0 {
            for z in &mut raw {
                *z /= self.temperature;
            }
        }
        if raw.iter().any(|z| !z.is_finite()) {
            return Err(PolicyError::NonFinite("logits".into()));
        }
        Ok(raw)
    }

    /// Next-token distribution `softmax(f(x, prefix))`.
    pub fn conditional(&self, x: &Input, prefix: &[Token]) -> Result<Vec<f64>, PolicyError> {
        Ok(softmax(&self.logits(x, prefix)?))
    }

    /// `p(y|x)` as the product of per-position conditionals.
    pub fn seq_prob(&self, x: &Input, y: &[Token]) -> Result<f64, PolicyError> {
        self.check_output(y)?;
        let mut prob = 1.0;
        for l in 0..y.len() {
            let cond = self.conditional(x, &y[..l])?;
            prob *= cond[y[l]];
        }
        Ok(prob)
    }

    /// Full output distribution under an enumeration cap.
    pub fn distribution(&self, x: &Input, cap: usize) -> Result<DistributionTable, PolicyError> {
        let outputs = enumerate_outputs_capped(&self.vocab, cap)?;
        let rows = self.conditional_rows(x, cap)?;
        let probs = outputs
            .iter()
            .map(|y| {
                (0..y.len())
                    .map(|l| rows[prefix_index(&self.vocab, &y[..l])][y[l]])
                    .product()
            })
            .collect();
        DistributionTable::new(outputs, probs)
    }

    /// Conditional distribution at every prefix, indexed by [`prefix_index`].
    pub fn conditional_rows(&self, x: &Input, cap: usize) -> Result<Vec<Vec<f64>>, PolicyError> {
        enumerate_prefixes(&self.vocab, cap)?
            .iter()
            .map(|p| self.conditional(x, p))
            .collect()
    }

    fn mlp_forward(&self, x: &Input, prefix: &[Token]) -> Result<MlpTrace, PolicyError> {
        let hidden = match &self.arch {
            Architecture::Mlp { hidden, .. } => hidden.clone(),
            _ => unreachable!("mlp forward on non-mlp policy"),
        };
        let feat = self.features(x, prefix)?;
        let mut dims = vec![feat.len()];
        dims.extend_from_slice(&hidden);
        dims.push(self.vocab.size);

        let mut acts: Vec<Vec<f64>> = vec![feat];
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(dims.len() - 1);
        for i in 1..dims.len() {
            let w = self.params.block(&format!("w{i}")).expect("mlp weight block");
            let b = self.params.block(&format!("b{i}")).expect("mlp bias block");
            let input = acts.last().expect("previous activation");
            let mut z = vec![0.0; dims[i]];
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &w[r * dims[i - 1]..(r + 1) * dims[i - 1]];
                *zr = b[r] + row.iter().zip(input).map(|(a, v)| a * v).sum::<f64>();
            }
            let is_output = i == dims.len() - 1;
            if is_output {
                pre.push(z.clone());
                return Ok(MlpTrace { acts, pre, logits: z });
            }
            let a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            pre.push(z);
            acts.push(a);
        }
        unreachable!("mlp has at least one layer")
    }

    /// Vector-Jacobian product: `J(x, prefix)^T u` over the flat parameters.
    pub fn vjp(&self, x: &Input, prefix: &[Token], cotangent: &[f64]) -> Result<Vec<f64>, PolicyError> {
        let mut out = vec![0.0; self.params.len()];
        self.vjp_into(x, prefix, cotangent, &mut out)?;
        Ok(out)
    }

    /// [`Self::vjp`] accumulated into an existing buffer.
    pub fn vjp_into(
        &self,
        x: &Input,
        prefix: &[Token],
        cotangent: &[f64],
        out: &mut [f64],
    ) -> Result<(), PolicyError> {
        self.check_prefix(prefix)?;
        if cotangent.len() != self.vocab.size {
            return Err(PolicyError::InputMismatch(format!(
                "cotangent has {} entries, vocabulary has {}",
                cotangent.len(),
                self.vocab.size
            )));
        }
        if out.len() != self.params.len() {
            return Err(PolicyError::InputMismatch("output buffer length mismatch".into()));
        }
        let scale = 1.0 / self.temperature;
        match &self.arch {
            Architecture::TabularAr { .. } => {
                let start = self.tabular_row_start(x, prefix)?;
                for (k, &u) in cotangent.iter().enumerate() {
                    out[start + k] += scale * u;
                }
            }
            Architecture::Linear { .. } => {
                let feat = self.features(x, prefix)?;
                let d = feat.len();
                for (k, &u) in cotangent.iter().enumerate() {
                    if u == 0.0 {
                        continue;
                    }
                    let row = &mut out[k * d..(k + 1) * d];
                    for (g, &f) in row.iter_mut().zip(&feat) {
                        *g += scale * u * f;
                    }
                }
            }
            Architecture::Mlp { hidden, .. } => {
                let trace = self.mlp_forward(x, prefix)?;
                let mut dims = vec![trace.acts[0].len()];
                dims.extend_from_slice(hidden);
                dims.push(self.vocab.size);
                let n_layers = dims.len() - 1;
                // Backward pass; `delta` is the cotangent at each layer's
                // pre-activation.
                let mut delta: Vec<f64> = cotangent.iter().map(|&u| scale * u).collect();
                for i in (1..=n_layers).rev() {
                    let w_block = self
                        .params
                        .layout()
                        .iter()
                        .find(|b| b.name == format!("w{i}"))
                        .expect("mlp weight block")
                        .clone();
                    let b_block = self
                        .params
                        .layout()
                        .iter()
                        .find(|b| b.name == format!("b{i}"))
                        .expect("mlp bias block")
                        .clone();
                    let input = &trace.acts[i - 1];
                    let (d_out, d_in) = (dims[i], dims[i - 1]);
                    for r in 0..d_out {
                        let dr = delta[r];
                        if dr != 0.0 {
                            let row = &mut out[w_block.start + r * d_in..w_block.start + (r + 1) * d_in];
                            for (g, &v) in row.iter_mut().zip(input) {
                                *g += dr * v;
                            }
                        }
                        out[b_block.start + r] += dr;
                    }
                    if i > 1 {
                        let w = &self.params.values()[w_block.start..w_block.start + w_block.len];
                        let mut next = vec![0.0; d_in];
                        for (r, &dr) in delta.iter().enumerate() {
                            if dr == 0.0 {
                                continue;
                            }
                            let row = &w[r * d_in..(r + 1) * d_in];
                            for (n, &wv) in next.iter_mut().zip(row) {
                                *n += dr * wv;
                            }
                        }
                        // Rectifier gate: units with non-positive
                        // pre-activation pass no signal.
                        let z = &trace.pre[i - 2];
                        for (n, &zv) in next.iter_mut().zip(z) {
                            if zv <= 0.0 {
                                *n = 0.0;
                            }
                        }
                        delta = next;
                    }
                }
            }
        }
        Ok(())
    }

    /// Dense Jacobian of the logits with respect to the flat parameters.
    pub fn logit_jacobian(&self, x: &Input, prefix: &[Token]) -> Result<DMatrix<f64>, PolicyError> {
        let k = self.vocab.size;
        let p = self.params.len();
        let mut jac = DMatrix::zeros(k, p);
        let mut cot = vec![0.0; k];
        let mut row = vec![0.0; p];
        for r in 0..k {
            cot[r] = 1.0;
            row.iter_mut().for_each(|v| *v = 0.0);
            self.vjp_into(x, prefix, &cot, &mut row)?;
            cot[r] = 0.0;
            for (c, &v) in row.iter().enumerate() {
                jac[(r, c)] = v;
            }
        }
        Ok(jac)
    }

    /// Largest logit-Jacobian operator norm over all positions and prefixes.
    pub fn gamma(&self, x: &Input) -> Result<f64, PolicyError> {
        self.gamma_capped(x, DEFAULT_ENUM_CAP)
    }

    pub fn gamma_capped(&self, x: &Input, cap: usize) -> Result<f64, PolicyError> {
        let mut best: f64 = 0.0;
        for prefix in enumerate_prefixes(&self.vocab, cap)? {
            let jac = self.logit_jacobian(x, &prefix)?;
            // Operator norm via the spectrum of J J^T, a size x size matrix;
            // its largest eigenvalue is the squared top singular value of J.
            let jjt = &jac * jac.transpose();
            let eig = SymmetricEigen::new(jjt);
            let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            best = best.max(lmax.max(0.0).sqrt());
        }
        Ok(best)
    }
}

struct MlpTrace {
    /// Post-activation values per layer, starting with the feature vector.
    acts: Vec<Vec<f64>>,
    /// Pre-activation values per layer (hidden layers then output).
    pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

pub use text::{load_policy, policy_from_text, policy_to_text, save_policy};
