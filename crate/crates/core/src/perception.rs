//! Perception: a from-scratch `784 -> hidden -> 4` classifier producing a
//! probability row per glyph, its trainer, a finite-difference gradient
//! check and a binary checkpoint format.
//!
//! Any model that maps a glyph to a categorical distribution over the four
//! symbols can stand in for [`PerceptionModel`]; everything downstream only
//! consumes [`PseudoLabel`]s and [`Embedding`]s.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::EquationSample;
use crate::glyph::{GlyphImage, GLYPH_PIXELS};
use crate::symbol::{Symbol, ALPHABET_SIZE};

/// Default hidden width of the reference model.
pub const DEFAULT_HIDDEN: usize = 64;
/// Default gradient-descent step size.
pub const DEFAULT_LR: f64 = 0.1;

/// Floor applied before taking logs of probabilities.
const MIN_PROB: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerceptionError {
    #[error("sample has no glyphs")]
    EmptySample,
    #[error("probability row {row} is not a distribution (sum {sum})")]
    NotADistribution { row: usize, sum: f64 },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("non-finite loss {loss} (max |param| {max_abs_param}, max |grad| {max_abs_grad})")]
    NonFiniteLoss {
        loss: f64,
        max_abs_param: f64,
        max_abs_grad: f64,
    },
}

/// Per-glyph symbol distributions for one equation, with the argmax
/// reading and its confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    probs: Vec<[f64; ALPHABET_SIZE]>,
    argmax_symbols: Vec<Symbol>,
    confidences: Vec<f64>,
}

fn argmax(row: &[f64; ALPHABET_SIZE]) -> usize {
    let mut best = 0;
    for i in 1..ALPHABET_SIZE {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

impl PseudoLabel {
    /// Builds a pseudo-label from rows that each sum to 1 within 1e-6.
    pub fn from_rows(probs: Vec<[f64; ALPHABET_SIZE]>) -> Result<Self, PerceptionError> {
        if probs.is_empty() {
            return Err(PerceptionError::EmptySample);
        }
        for (row, p) in probs.iter().enumerate() {
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(PerceptionError::NotADistribution { row, sum });
            }
        }
        let argmax_symbols = probs
            .iter()
            .map(|r| Symbol::from_index(argmax(r)).expect("index < 4"))
            .collect();
        let confidences = probs.iter().map(|r| r[argmax(r)]).collect();
        Ok(PseudoLabel {
            probs,
            argmax_symbols,
            confidences,
        })
    }

    /// A pseudo-label that puts `confidence` on each given symbol and
    /// spreads the rest evenly.
    pub fn peaked(symbols: &[Symbol], confidence: f64) -> Result<Self, PerceptionError> {
        let rest = (1.0 - confidence) / (ALPHABET_SIZE - 1) as f64;
        PseudoLabel::from_rows(
            symbols
                .iter()
                .map(|s| {
                    let mut row = [rest; ALPHABET_SIZE];
                    row[s.index()] = confidence;
                    row
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[[f64; ALPHABET_SIZE]] {
        &self.probs
    }

    pub fn argmax_symbols(&self) -> &[Symbol] {
        &self.argmax_symbols
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn mean_confidence(&self) -> f64 {
        self.confidences.iter().sum::<f64>() / self.confidences.len() as f64
    }

    /// `ln p` of `symbol` at `position`, floored at `ln(1e-300)`.
    pub fn log_prob(&self, position: usize, symbol: Symbol) -> f64 {
        self.probs[position][symbol.index()].max(MIN_PROB).ln()
    }

    /// Sum of per-position log probabilities of `symbols`, in position order.
    pub fn log_score(&self, symbols: &[Symbol]) -> f64 {
        debug_assert_eq!(symbols.len(), self.len());
        symbols.iter().enumerate().map(|(i, &s)| self.log_prob(i, s)).sum()
    }
}

/// Mean-pooled hidden activations of one equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn width(&self) -> usize {
        self.values.len()
    }
}

/// Training target for one glyph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Hard(Symbol),
    Soft([f64; ALPHABET_SIZE]),
}

impl Target {
    fn row(self) -> [f64; ALPHABET_SIZE] {
        match self {
            Target::Hard(s) => {
                let mut r = [0.0; ALPHABET_SIZE];
                r[s.index()] = 1.0;
                r
            }
            Target::Soft(r) => r,
        }
    }
}

impl From<Symbol> for Target {
    fn from(s: Symbol) -> Self {
        Target::Hard(s)
    }
}

/// Stacked inputs, target rows and per-example loss weights.
///
/// The loss of a batch is `sum_i weight_i * CE(target_i, p_i)`; uniform
/// weights `1/n` make it the mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub weights: Array1<f64>,
}

impl Batch {
    /// Mean-loss batch from (image, target) pairs.
    pub fn new<'a, T: Into<Target>>(pairs: impl IntoIterator<Item = (&'a GlyphImage, T)>) -> Self {
        let pairs: Vec<(&GlyphImage, Target)> = pairs.into_iter().map(|(g, t)| (g, t.into())).collect();
        let n = pairs.len();
        let mut inputs = Array2::zeros((n, GLYPH_PIXELS));
        let mut targets = Array2::zeros((n, ALPHABET_SIZE));
        for (i, (g, t)) in pairs.iter().enumerate() {
            inputs.row_mut(i).assign(&ndarray::ArrayView1::from(g.pixels()));
            targets.row_mut(i).assign(&ndarray::ArrayView1::from(&t.row()));
        }
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Batch {
            inputs,
            targets,
            weights: Array1::from_elem(n, w),
        }
    }

    pub fn with_weights(mut self, weights: Array1<f64>) -> Self {
        assert_eq!(weights.len(), self.len(), "one weight per example");
        self.weights = weights;
        self
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone)]
struct Gradients {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl Gradients {
    fn max_abs(&self) -> f64 {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One parameter of the model, addressed by tensor and flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Param {
    W1(usize, usize),
    B1(usize),
    W2(usize, usize),
    B2(usize),
}

/// The reference perception model: fully connected `784 -> hidden -> 4`
/// with `tanh` hidden units and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionModel {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    seed: u64,
}

impl PerceptionModel {
    /// Uniform initialization in `±1/sqrt(fan_in)` for every layer.
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
        };
        let w1 = uniform(GLYPH_PIXELS, hidden, GLYPH_PIXELS);
        let b1 = uniform(1, hidden, GLYPH_PIXELS).remove_axis(Axis(0));
        let w2 = uniform(hidden, ALPHABET_SIZE, hidden);
        let b2 = uniform(1, ALPHABET_SIZE, hidden).remove_axis(Axis(0));
        PerceptionModel { w1, b1, w2, b2, seed }
    }

    /// All-zero parameters: every output row is uniform.
    pub fn zeros(hidden: usize) -> Self {
        PerceptionModel {
            w1: Array2::zeros((GLYPH_PIXELS, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, ALPHABET_SIZE)),
            b2: Array1::zeros(ALPHABET_SIZE),
            seed: 0,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.b1.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn all_finite(&self) -> bool {
        self.params_iter().all(|v| v.is_finite())
    }

    fn params_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
    }

    fn hidden(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.dot(&self.w1);
        h += &self.b1;
        h.mapv_inplace(f64::tanh);
        h
    }

    /// Hidden activations and output log-probabilities for a stack of inputs.
    fn forward_logp(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let h = self.hidden(x);
        let mut z = h.dot(&self.w2);
        z += &self.b2;
        for mut row in z.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        (h, z)
    }

    /// Probability rows for a stack of inputs.
    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (_, logp) = self.forward_logp(x);
        normalized_exp(logp)
    }

    /// Symbol distribution for one glyph.
    pub fn forward(&self, image: &GlyphImage) -> [f64; ALPHABET_SIZE] {
        let x = ArrayView2::from_shape((1, GLYPH_PIXELS), image.pixels()).expect("784 pixels");
        let p = self.predict(x);
        [p[[0, 0]], p[[0, 1]], p[[0, 2]], p[[0, 3]]]
    }

    /// Classifies each glyph of `sample` independently.
    pub fn classify_sequence(&self, sample: &EquationSample) -> Result<PseudoLabel, PerceptionError> {
        if sample.is_empty() {
            return Err(PerceptionError::EmptySample);
        }
        let x = stack(sample.glyphs.iter());
        rows_to_pseudo(&self.predict(x.view()))
    }

    /// Classifies many samples with one stacked forward pass.
    pub fn classify_many(&self, samples: &[EquationSample]) -> Result<Vec<PseudoLabel>, PerceptionError> {
        if samples.iter().any(|s| s.is_empty()) {
            return Err(PerceptionError::EmptySample);
        }
        let x = stack(samples.iter().flat_map(|s| s.glyphs.iter()));
        let p = self.predict(x.view());
        let mut out = Vec::with_capacity(samples.len());
        let mut start = 0;
        for s in samples {
            out.push(rows_to_pseudo(&p.slice(ndarray::s![start..start + s.len(), ..]).to_owned())?);
            start += s.len();
        }
        Ok(out)
    }

    /// Mean of hidden activations over the glyphs of `sample`.
    pub fn embed(&self, sample: &EquationSample) -> Result<Embedding, PerceptionError> {
        if sample.is_empty() {
            return Err(PerceptionError::EmptySample);
        }
        let x = stack(sample.glyphs.iter());
        let h = self.hidden(x.view());
        let mean = h.mean_axis(Axis(0)).expect("nonempty");
        Ok(Embedding { values: mean.to_vec() })
    }

    /// Weighted cross-entropy of the batch.
    pub fn loss(&self, batch: &Batch) -> f64 {
        let (_, logp) = self.forward_logp(batch.inputs.view());
        weighted_ce(&logp, batch)
    }

    fn loss_and_gradients(&self, batch: &Batch) -> (f64, Gradients) {
        let (h, logp) = self.forward_logp(batch.inputs.view());
        let loss = weighted_ce(&logp, batch);
        let p = normalized_exp(logp);
        // dL/dz = w * (p * sum(t) - t)
        let mut dz = p;
        for ((mut row, t), &w) in dz.rows_mut().into_iter().zip(batch.targets.rows()).zip(batch.weights.iter()) {
            let mass = t.sum();
            for (v, &tv) in row.iter_mut().zip(t.iter()) {
                *v = w * (*v * mass - tv);
            }
        }
        let w2 = h.t().dot(&dz);
        let b2 = dz.sum_axis(Axis(0));
        let mut dh = dz.dot(&self.w2.t());
        dh.zip_mut_with(&h, |d, &hv| *d *= 1.0 - hv * hv);
        let w1 = batch.inputs.t().dot(&dh);
        let b1 = dh.sum_axis(Axis(0));
        (loss, Gradients { w1, b1, w2, b2 })
    }

    /// One full-batch gradient-descent step on the mean cross-entropy.
    /// Returns the loss before the update.
    pub fn train_step(&mut self, batch: &Batch, lr: f64) -> Result<f64, PerceptionError> {
        self.train_step_weighted(&[(batch, 1.0)], lr)
    }

    /// One gradient-descent step on `sum_k lambda_k * loss(batch_k)`.
    /// Parts with zero weight or no examples are skipped entirely, so they
    /// cannot perturb the update.
    pub fn train_step_weighted(&mut self, parts: &[(&Batch, f64)], lr: f64) -> Result<f64, PerceptionError> {
        if !(lr > 0.0) {
            return Err(PerceptionError::BadLearningRate(lr));
        }
        let active: Vec<&(&Batch, f64)> = parts.iter().filter(|(b, w)| *w != 0.0 && !b.is_empty()).collect();
        if active.is_empty() {
            return Err(PerceptionError::EmptyBatch);
        }
        let mut total_loss = 0.0;
        let mut total: Option<Gradients> = None;
        for (batch, weight) in active {
            let (loss, mut g) = self.loss_and_gradients(batch);
            total_loss += weight * loss;
            if *weight != 1.0 {
                g.w1 *= *weight;
                g.b1 *= *weight;
                g.w2 *= *weight;
                g.b2 *= *weight;
            }
            total = Some(match total {
                None => g,
                Some(mut acc) => {
                    acc.w1 += &g.w1;
                    acc.b1 += &g.b1;
                    acc.w2 += &g.w2;
                    acc.b2 += &g.b2;
                    acc
                }
            });
        }
        let g = total.expect("at least one active part");
        if !total_loss.is_finite() {
            return Err(PerceptionError::NonFiniteLoss {
                loss: total_loss,
                max_abs_param: self.params_iter().fold(0.0, |m, v| m.max(v.abs())),
                max_abs_grad: g.max_abs(),
            });
        }
        self.w1.scaled_add(-lr, &g.w1);
        self.b1.scaled_add(-lr, &g.b1);
        self.w2.scaled_add(-lr, &g.w2);
        self.b2.scaled_add(-lr, &g.b2);
        Ok(total_loss)
    }

    fn param(&self, p: Param) -> f64 {
        match p {
            Param::W1(i, j) => self.w1[[i, j]],
            Param::B1(j) => self.b1[j],
            Param::W2(i, j) => self.w2[[i, j]],
            Param::B2(j) => self.b2[j],
        }
    }

    fn param_mut(&mut self, p: Param) -> &mut f64 {
        match p {
            Param::W1(i, j) => &mut self.w1[[i, j]],
            Param::B1(j) => &mut self.b1[j],
            Param::W2(i, j) => &mut self.w2[[i, j]],
            Param::B2(j) => &mut self.b2[j],
        }
    }

    /// Writes the checkpoint: magic, version, layer dims, seed, then every
    /// parameter as a little-endian `f64` (`w1` row-major, `b1`, `w2`, `b2`).
    pub fn save(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for dim in [GLYPH_PIXELS, self.hidden_width(), ALPHABET_SIZE] {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
        out.write_all(&self.seed.to_le_bytes())?;
        for v in self.params_iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(mut input: impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |input: &mut dyn Read| -> std::io::Result<u32> {
            input.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let version = read_u32(&mut input)?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let dims = [
            read_u32(&mut input)? as usize,
            read_u32(&mut input)? as usize,
            read_u32(&mut input)? as usize,
        ];
        if dims[0] != GLYPH_PIXELS || dims[2] != ALPHABET_SIZE || dims[1] == 0 {
            return Err(CheckpointError::BadDimensions(dims));
        }
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        let mut model = PerceptionModel::zeros(dims[1]);
        model.seed = seed;
        let mut next = || -> std::io::Result<f64> {
            input.read_exact(&mut u64buf)?;
            Ok(f64::from_le_bytes(u64buf))
        };
        for v in model.w1.iter_mut().chain(model.b1.iter_mut()) {
            *v = next()?;
        }
        for v in model.w2.iter_mut().chain(model.b2.iter_mut()) {
            *v = next()?;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to a Vec cannot fail");
        out
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"CABLPRCP";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a perception checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected layer dimensions {0:?}")]
    BadDimensions([usize; 3]),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn stack<'a>(glyphs: impl Iterator<Item = &'a GlyphImage>) -> Array2<f64> {
    let data: Vec<f64> = glyphs.flat_map(|g| g.pixels().iter().copied()).collect();
    let n = data.len() / GLYPH_PIXELS;
    Array2::from_shape_vec((n, GLYPH_PIXELS), data).expect("whole glyphs")
}

/// `exp` of log-probability rows, renormalized so each row sums to 1 up to
/// rounding.
fn normalized_exp(mut logp: Array2<f64>) -> Array2<f64> {
    logp.mapv_inplace(f64::exp);
    for mut row in logp.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    logp
}

fn weighted_ce(logp: &Array2<f64>, batch: &Batch) -> f64 {
    let mut total = 0.0;
    for ((lp, t), &w) in logp.rows().into_iter().zip(batch.targets.rows()).zip(batch.weights.iter()) {
        if w == 0.0 {
            continue;
        }
        let ce: f64 = lp.iter().zip(t.iter()).filter(|(_, &tv)| tv != 0.0).map(|(l, tv)| -tv * l).sum();
        total += w * ce;
    }
    total
}

fn rows_to_pseudo(p: &Array2<f64>) -> Result<PseudoLabel, PerceptionError> {
    PseudoLabel::from_rows(p.rows().into_iter().map(|r| [r[0], r[1], r[2], r[3]]).collect())
}

/// Step used for central finite differences.
pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// Largest relative error between analytic gradients and central finite
/// differences, `|g - g_fd| / max(|g_fd|, 1e-8)`, over a deterministic
/// sample of parameters: every bias, every output weight, and up to 256
/// input weights attached to pixels that are nonzero somewhere in `batch`.
pub fn grad_check(model: &PerceptionModel, batch: &Batch) -> f64 {
    let (_, g) = model.loss_and_gradients(batch);
    let hidden = model.hidden_width();

    let mut params: Vec<Param> = Vec::new();
    params.extend((0..hidden).map(Param::B1));
    params.extend((0..ALPHABET_SIZE).map(Param::B2));
    for i in 0..hidden {
        params.extend((0..ALPHABET_SIZE).map(|j| Param::W2(i, j)));
    }
    let active_pixels: Vec<usize> = (0..GLYPH_PIXELS)
        .filter(|&px| batch.inputs.column(px).iter().any(|&v| v != 0.0))
        .collect();
    let candidates = active_pixels.len() * hidden;
    let take = candidates.min(256);
    for k in 0..take {
        // Spread the sample evenly over (pixel, unit) pairs.
        let flat = k * candidates / take.max(1);
        params.push(Param::W1(active_pixels[flat / hidden], flat % hidden));
    }

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for p in params {
        let analytic = match p {
            Param::W1(i, j) => g.w1[[i, j]],
            Param::B1(j) => g.b1[j],
            Param::W2(i, j) => g.w2[[i, j]],
            Param::B2(j) => g.b2[j],
        };
        let original = model.param(p);
        *probe.param_mut(p) = original + GRAD_CHECK_STEP;
        let up = probe.loss(batch);
        *probe.param_mut(p) = original - GRAD_CHECK_STEP;
        let down = probe.loss(batch);
        *probe.param_mut(p) = original;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let err = (analytic - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::{render_glyph_with, GlyphStyle};

    fn glyph(s: Symbol, seed: u64) -> GlyphImage {
        render_glyph_with(s, seed, &GlyphStyle::clean())
    }

    fn sample(symbols: &[Symbol], seed: u64) -> EquationSample {
        EquationSample {
            glyphs: symbols.iter().enumerate().map(|(i, &s)| glyph(s, seed + i as u64)).collect(),
            truth_symbols: Some(symbols.to_vec()),
            veracity: None,
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = PerceptionModel::zeros(8);
        let row = m.forward(&glyph(Symbol::One, 0));
        for p in row {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn rows_are_distributions_and_deterministic() {
        let m = PerceptionModel::new(DEFAULT_HIDDEN, 3);
        for seed in 0..10 {
            let g = glyph(Symbol::ALL[seed as usize % 4], seed);
            let row = m.forward(&g);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert_eq!(row, m.forward(&g));
        }
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        let p = PseudoLabel::from_rows(vec![[0.25; 4], [0.1, 0.4, 0.4, 0.1]]).unwrap();
        assert_eq!(p.argmax_symbols(), &[Symbol::Zero, Symbol::One]);
        assert!(PseudoLabel::from_rows(vec![[0.5, 0.5, 0.5, 0.0]]).is_err());
    }

    #[test]
    fn classify_preserves_shape_and_permutes_rows() {
        use Symbol::*;
        let m = PerceptionModel::new(16, 1);
        let s = sample(&[One, Plus, One, Equals, One], 40);
        let pl = m.classify_sequence(&s).unwrap();
        assert_eq!(pl.len(), 5);
        let mut reversed = s.clone();
        reversed.glyphs.reverse();
        let pr = m.classify_sequence(&reversed).unwrap();
        for i in 0..5 {
            assert_eq!(pl.probs()[i], pr.probs()[4 - i]);
        }
        let many = m.classify_many(&[s.clone(), reversed]).unwrap();
        assert_eq!(many[0], pl);
        let empty = EquationSample {
            glyphs: vec![],
            truth_symbols: None,
            veracity: None,
        };
        assert_eq!(m.classify_sequence(&empty), Err(PerceptionError::EmptySample));
    }

    #[test]
    fn uniform_model_initial_loss_is_ln4() {
        let mut m = PerceptionModel::zeros(8);
        let g = glyph(Symbol::Plus, 2);
        let batch = Batch::new([(&g, Symbol::Plus)]);
        let loss = m.train_step(&batch, 0.1).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_at_own_predictions_is_entropy_and_step_is_tiny() {
        let mut m = PerceptionModel::new(16, 9);
        let g = glyph(Symbol::Zero, 5);
        let p = m.forward(&g);
        let entropy: f64 = -p.iter().map(|v| v * v.ln()).sum::<f64>();
        let batch = Batch::new([(&g, Target::Soft(p))]);
        let before = m.clone();
        let loss = m.train_step(&batch, 0.1).unwrap();
        assert!((loss - entropy).abs() < 1e-12);
        let moved = before
            .params_iter()
            .zip(m.params_iter())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(moved < 0.1 * 1e-12, "moved {moved}");
    }

    #[test]
    fn single_sample_loss_decreases() {
        let mut m = PerceptionModel::new(DEFAULT_HIDDEN, 4);
        let g = glyph(Symbol::Equals, 1);
        let batch = Batch::new([(&g, Symbol::Equals)]);
        let mut losses = Vec::new();
        for _ in 0..200 {
            losses.push(m.train_step(&batch, 0.1).unwrap());
        }
        let decreasing = losses.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreasing as f64 >= 0.95 * 199.0, "{decreasing}/199");
        assert!(m.all_finite());
    }

    #[test]
    fn rejects_bad_steps() {
        let mut m = PerceptionModel::zeros(4);
        let g = glyph(Symbol::Zero, 0);
        let batch = Batch::new([(&g, Symbol::Zero)]);
        assert_eq!(m.train_step(&batch, 0.0), Err(PerceptionError::BadLearningRate(0.0)));
        let empty = Batch::new(Vec::<(&GlyphImage, Symbol)>::new());
        assert_eq!(m.train_step(&empty, 0.1), Err(PerceptionError::EmptyBatch));
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut m = PerceptionModel::new(4, 0);
        let g = glyph(Symbol::Zero, 0);
        let batch = Batch::new([(&g, Target::Soft([f64::NAN, 0.0, 0.0, 0.0]))]);
        assert!(matches!(m.train_step(&batch, 0.1), Err(PerceptionError::NonFiniteLoss { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = PerceptionModel::new(DEFAULT_HIDDEN, 17);
        let glyphs: Vec<GlyphImage> = Symbol::ALL.iter().map(|&s| glyph(s, 7)).collect();
        let batch = Batch::new(glyphs.iter().zip(Symbol::ALL));
        assert!(grad_check(&m, &batch) < 1e-4);
    }

    #[test]
    fn zero_weight_batch_has_zero_error() {
        let m = PerceptionModel::new(8, 2);
        let g = glyph(Symbol::One, 3);
        let batch = Batch::new([(&g, Symbol::One)]).with_weights(Array1::zeros(1));
        assert_eq!(grad_check(&m, &batch), 0.0);
    }

    #[test]
    fn embedding_is_mean_of_hidden() {
        use Symbol::*;
        let m = PerceptionModel::new(12, 5);
        let one = sample(&[Plus], 3);
        let e = m.embed(&one).unwrap();
        assert_eq!(e.width(), 12);
        let h = m.hidden(stack(one.glyphs.iter()).view());
        assert_eq!(e.values, h.row(0).to_vec());

        let s = sample(&[One, Plus, Zero, Equals, One], 8);
        let mut doubled = s.clone();
        doubled.glyphs.extend(s.glyphs.clone());
        let (a, b) = (m.embed(&s).unwrap(), m.embed(&doubled).unwrap());
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = PerceptionModel::new(10, 77);
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 8 + 4 * 4 + 8 + 8 * m.parameter_count());
        let back = PerceptionModel::load(bytes.as_slice()).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, m);
        assert!(matches!(PerceptionModel::load(&b"nope...."[..]), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn same_seed_same_init() {
        assert_eq!(PerceptionModel::new(8, 1), PerceptionModel::new(8, 1));
        assert_ne!(PerceptionModel::new(8, 1), PerceptionModel::new(8, 2));
    }
}
