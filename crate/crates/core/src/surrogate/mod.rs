//! Two-layer feed-forward scorer mapping a retain-mask to a predicted
//! performance score in `(0, 1)`:
//!
//! ```text
//! f(m) = sigmoid(W2 . celu(W1 m + b1) + b2)
//! ```
//!
//! The hidden layer is always twice as wide as the input. Inputs are binary,
//! so the first layer is evaluated as a sum of the weight columns of the
//! retained layers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::record::MaskScoreRecord;
use crate::rng::RNG_NAME;
use crate::stats;
use crate::types::Variant;

mod checkpoint;
mod gradcheck;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{gradient_check, GRADCHECK_FLOOR};
pub use train::{train, TrainConfig, TrainOutcome};

pub const INIT_SCHEME: &str = "xavier_uniform_weights_zero_bias";

/// Settings the model was trained with, stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub init: String,
    pub rng: String,
}

impl Default for TrainMeta {
    fn default() -> Self {
        TrainMeta {
            seed: 0,
            epochs: 0,
            lr: 0.0,
            momentum: 0.0,
            lr_decay_factor: 1.0,
            lr_decay_every: 0,
            batch_size: 0,
            shuffle: false,
            init: "none".into(),
            rng: RNG_NAME.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModel {
    input_dim: usize,
    hidden_dim: usize,
    /// First-layer weights stored column by column: `w1[i * hidden + h]`
    /// is the weight from input `i` to hidden unit `h`.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
    alpha: f64,
    meta: TrainMeta,
}

/// Gradient buffers with the same layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    fn zeros(model: &SurrogateModel) -> Self {
        Gradients {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: 0.0,
        }
    }

    fn clear(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2 = 0.0;
    }

    pub(crate) fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + 1);
        out.extend(&self.w1);
        out.extend(&self.b1);
        out.extend(&self.w2);
        out.push(self.b2);
        out
    }
}

#[inline]
pub fn celu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * ((x / alpha).exp() - 1.0)
    }
}

/// Derivative of CELU; at `x = 0` the right derivative (1) is used.
#[inline]
pub fn celu_grad(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        (x / alpha).exp()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl SurrogateModel {
    /// Model with every parameter set to zero; predicts 0.5 everywhere.
    pub fn zeros(input_dim: usize) -> Self {
        assert!(input_dim > 0);
        let hidden_dim = 2 * input_dim;
        SurrogateModel {
            input_dim,
            hidden_dim,
            w1: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
            alpha: 1.0,
            meta: TrainMeta::default(),
        }
    }

    /// Weights uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn init_xavier<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        let mut model = Self::zeros(input_dim);
        let h = model.hidden_dim;
        // row-major draw order (hidden unit by hidden unit), stored by column
        let a1 = (6.0 / (input_dim + h) as f64).sqrt();
        for row in 0..h {
            for col in 0..input_dim {
                model.w1[col * h + row] = rng.gen_range(-a1..=a1);
            }
        }
        let a2 = (6.0 / (h + 1) as f64).sqrt();
        for w in &mut model.w2 {
            *w = rng.gen_range(-a2..=a2);
        }
        model.meta.init = INIT_SCHEME.into();
        model
    }

    /// Builds a model from row-major `W1` (`hidden x input`) and the rest.
    pub fn from_parts(w1_rows: &[Vec<f64>], b1: Vec<f64>, w2: Vec<f64>, b2: f64, alpha: f64) -> Result<Self> {
        let hidden_dim = w1_rows.len();
        let input_dim = w1_rows.first().map_or(0, Vec::len);
        if input_dim == 0 || w1_rows.iter().any(|r| r.len() != input_dim) {
            return Err(Error::DimensionMismatch("W1 must be a non-empty rectangular matrix".into()));
        }
        if hidden_dim != 2 * input_dim {
            return Err(Error::DimensionMismatch(format!(
                "hidden_dim {hidden_dim} must be twice input_dim {input_dim}"
            )));
        }
        if b1.len() != hidden_dim || w2.len() != hidden_dim {
            return Err(Error::DimensionMismatch(format!(
                "b1 and W2 must have {hidden_dim} entries"
            )));
        }
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(Error::InvalidConfig("CELU alpha must be positive".into()));
        }
        let mut w1 = vec![0.0; input_dim * hidden_dim];
        for (row, values) in w1_rows.iter().enumerate() {
            for (col, &v) in values.iter().enumerate() {
                w1[col * hidden_dim + row] = v;
            }
        }
        let model = SurrogateModel {
            input_dim,
            hidden_dim,
            w1,
            b1,
            w2,
            b2,
            alpha,
            meta: TrainMeta::default(),
        };
        if !model.is_finite() {
            return Err(Error::InvalidConfig("model parameters must be finite".into()));
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    pub(crate) fn set_meta(&mut self, meta: TrainMeta) {
        self.meta = meta;
    }

    /// `W1` as `hidden x input` rows.
    pub fn w1_rows(&self) -> Vec<Vec<f64>> {
        (0..self.hidden_dim)
            .map(|h| (0..self.input_dim).map(|i| self.w1[i * self.hidden_dim + h]).collect())
            .collect()
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn param_mut(&mut self, index: usize) -> &mut f64 {
        let (n1, nb, n2) = (self.w1.len(), self.b1.len(), self.w2.len());
        match index {
            i if i < n1 => &mut self.w1[i],
            i if i < n1 + nb => &mut self.b1[i - n1],
            i if i < n1 + nb + n2 => &mut self.w2[i - n1 - nb],
            i if i == n1 + nb + n2 => &mut self.b2,
            _ => panic!("parameter index {index} out of range"),
        }
    }

    pub(crate) fn param(&self, index: usize) -> f64 {
        let (n1, nb, n2) = (self.w1.len(), self.b1.len(), self.w2.len());
        match index {
            i if i < n1 => self.w1[i],
            i if i < n1 + nb => self.b1[i - n1],
            i if i < n1 + nb + n2 => self.w2[i - n1 - nb],
            i if i == n1 + nb + n2 => self.b2,
            _ => panic!("parameter index {index} out of range"),
        }
    }

    pub(crate) fn set_param(&mut self, index: usize, value: f64) {
        *self.param_mut(index) = value;
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
            .all(|v| v.is_finite())
    }

    fn column(&self, input: usize) -> &[f64] {
        &self.w1[input * self.hidden_dim..(input + 1) * self.hidden_dim]
    }

    /// Hidden pre-activations `W1 m + b1`.
    fn pre_activation(&self, bits: &[bool], out: &mut [f64]) {
        out.copy_from_slice(&self.b1);
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            for (z, w) in out.iter_mut().zip(self.column(i)) {
                *z += w;
            }
        }
    }

    fn output_from_pre(&self, z1: &[f64]) -> f64 {
        let mut z2 = self.b2;
        for (z, w) in z1.iter().zip(&self.w2) {
            z2 += w * celu(*z, self.alpha);
        }
        sigmoid(z2)
    }

    pub(crate) fn forward_bits(&self, bits: &[bool]) -> f64 {
        let mut z1 = vec![0.0; self.hidden_dim];
        self.pre_activation(bits, &mut z1);
        self.output_from_pre(&z1)
    }

    pub fn forward(&self, mask: &Mask) -> Result<f64> {
        self.check_width(mask)?;
        Ok(self.forward_bits(mask.bits()))
    }

    /// Hidden pre-activations for `mask`, e.g. to see how close an input sits
    /// to the CELU kink.
    pub fn hidden_pre_activations(&self, mask: &Mask) -> Result<Vec<f64>> {
        self.check_width(mask)?;
        let mut z1 = vec![0.0; self.hidden_dim];
        self.pre_activation(mask.bits(), &mut z1);
        Ok(z1)
    }

    fn check_width(&self, mask: &Mask) -> Result<()> {
        if mask.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} layers, surrogate expects {}",
                mask.len(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Per-layer marginal deltas for one base mask, written into `out`.
    /// Returns the number of network outputs computed.
    pub(crate) fn perturbation_deltas(&self, base: &Mask, variant: Variant, out: &mut [f64]) -> u64 {
        let h = self.hidden_dim;
        let mut z_base = vec![0.0; h];
        self.pre_activation(base.bits(), &mut z_base);
        let mut z_alt = vec![0.0; h];
        let mut forwards = 0;
        let base_out = match variant {
            Variant::Add => {
                forwards += 1;
                Some(self.output_from_pre(&z_base))
            }
            Variant::Force => None,
        };
        for (layer, delta) in out.iter_mut().enumerate() {
            let col = self.column(layer);
            let on = base.is_retained(layer);
            *delta = match (variant, on) {
                (Variant::Add, true) => 0.0,
                (Variant::Add, false) => {
                    for ((a, z), w) in z_alt.iter_mut().zip(&z_base).zip(col) {
                        *a = z + w;
                    }
                    forwards += 1;
                    self.output_from_pre(&z_alt) - base_out.unwrap()
                }
                (Variant::Force, true) => {
                    for ((a, z), w) in z_alt.iter_mut().zip(&z_base).zip(col) {
                        *a = z - w;
                    }
                    forwards += 2;
                    self.output_from_pre(&z_base) - self.output_from_pre(&z_alt)
                }
                (Variant::Force, false) => {
                    for ((a, z), w) in z_alt.iter_mut().zip(&z_base).zip(col) {
                        *a = z + w;
                    }
                    forwards += 2;
                    self.output_from_pre(&z_alt) - self.output_from_pre(&z_base)
                }
            };
        }
        forwards
    }

    /// Adds the gradient of `scale * (f(m) - target)^2` to `grads` and
    /// returns the unscaled squared error.
    pub(crate) fn accumulate_gradient(
        &self,
        bits: &[bool],
        target: f64,
        scale: f64,
        grads: &mut Gradients,
        z1: &mut [f64],
    ) -> f64 {
        self.pre_activation(bits, z1);
        let mut z2 = self.b2;
        for (z, w) in z1.iter().zip(&self.w2) {
            z2 += w * celu(*z, self.alpha);
        }
        let y = sigmoid(z2);
        let err = y - target;
        let dz2 = scale * 2.0 * err * y * (1.0 - y);
        grads.b2 += dz2;
        for (hdx, z) in z1.iter_mut().enumerate() {
            let pre = *z;
            grads.w2[hdx] += dz2 * celu(pre, self.alpha);
            // reuse the buffer for dL/dz1
            *z = dz2 * self.w2[hdx] * celu_grad(pre, self.alpha);
            grads.b1[hdx] += *z;
        }
        let h = self.hidden_dim;
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            for (g, d) in grads.w1[i * h..(i + 1) * h].iter_mut().zip(z1.iter()) {
                *g += d;
            }
        }
        err * err
    }

    /// Squared error of a single record, used by finite differences.
    pub(crate) fn record_loss(&self, record: &MaskScoreRecord) -> f64 {
        let e = self.forward_bits(record.mask.bits()) - record.score;
        e * e
    }
}

/// Coefficient of determination of the model's predictions on `test_set`.
pub fn r_squared(model: &SurrogateModel, test_set: &[MaskScoreRecord]) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predicted = test_set
        .iter()
        .map(|r| model.forward(&r.mask))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<f64> = test_set.iter().map(|r| r.score).collect();
    stats::r_squared(&predicted, &truth)
}
