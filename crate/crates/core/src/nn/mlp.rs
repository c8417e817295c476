use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::seed::rng_for;

/// Hidden/output widths of the default regressor.
pub const DEFAULT_WIDTHS: [usize; 6] = [32, 16, 8, 4, 2, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative, with the relu kink at 0 taken as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Fully connected layer, `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_params(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    /// Writes pre-activations into `z` and activations into `a`.
    #[inline]
    fn forward_into(&self, input: &[f64], z: &mut [f64], a: &mut [f64]) {
        for o in 0..self.out_dim() {
            let v = dot(self.weights.row(o), input) + self.bias[o];
            z[o] = v;
            a[o] = self.activation.apply(v);
        }
    }
}

/// Dense feed-forward regressor with one scalar output and a per-layer freeze mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    freeze_mask: Vec<bool>,
    input_dim: usize,
}

impl Mlp {
    /// Assembles a network from explicit layers; all layers start trainable.
    pub fn from_layers(input_dim: usize, layers: Vec<Dense>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Argument("input dimension must be at least 1".into()));
        }
        let last = layers
            .last()
            .ok_or_else(|| Error::Argument("network needs at least one layer".into()))?;
        if last.out_dim() != 1 {
            return Err(Error::Argument(format!(
                "output layer must have width 1, got {}",
                last.out_dim()
            )));
        }
        let mut expected = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() != expected || l.bias.len() != l.out_dim() || l.out_dim() == 0 {
                return Err(Error::Shape(format!(
                    "layer {i} is {}x{} with {} biases, expected input width {expected}",
                    l.out_dim(),
                    l.in_dim(),
                    l.bias.len()
                )));
            }
            expected = l.out_dim();
        }
        let n = layers.len();
        Ok(Self {
            layers,
            freeze_mask: vec![false; n],
            input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to one layer's parameters.
    pub fn layer_mut(&mut self, i: usize) -> &mut Dense {
        &mut self.layers[i]
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Dense::out_dim).collect()
    }

    pub fn freeze_mask(&self) -> &[bool] {
        &self.freeze_mask
    }

    pub fn is_frozen(&self, layer: usize) -> bool {
        self.freeze_mask[layer]
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Freezes layers `0..n_frozen` and unfreezes the rest. The output layer
    /// always stays trainable.
    pub fn set_frozen(&mut self, n_frozen: usize) -> Result<()> {
        if n_frozen >= self.depth() {
            return Err(Error::Argument(format!(
                "cannot freeze {n_frozen} of {} layers; the output layer must stay trainable",
                self.depth()
            )));
        }
        for (i, f) in self.freeze_mask.iter_mut().enumerate() {
            *f = i < n_frozen;
        }
        Ok(())
    }

    pub(crate) fn set_freeze_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.depth() {
            return Err(Error::Shape(format!(
                "freeze mask has {} entries for {} layers",
                mask.len(),
                self.depth()
            )));
        }
        self.freeze_mask = mask;
        Ok(())
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {width}",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Runs one sample, keeping every layer's pre-activations and activations.
    pub(crate) fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut zs = Vec::with_capacity(self.depth());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.out_dim()];
            let mut a = vec![0.0; layer.out_dim()];
            let input: &[f64] = if i == 0 { x } else { &acts[i - 1] };
            layer.forward_into(input, &mut z, &mut a);
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }

    fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.out_dim()];
            let mut a = vec![0.0; layer.out_dim()];
            layer.forward_into(&cur, &mut z, &mut a);
            cur = a;
        }
        cur[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_width(x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_width(x.cols())?;
        Ok(x.iter_rows().map(|r| self.forward_unchecked(r)).collect())
    }
}

/// He-uniform weights in `±sqrt(6 / fan_in)`, zero biases, relu on every
/// layer but the last.
pub fn init_mlp(input_dim: usize, widths: &[usize], seed: u64) -> Result<Mlp> {
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::Argument(format!("invalid layer widths {widths:?}")));
    }
    if widths.last() != Some(&1) {
        return Err(Error::Argument(format!(
            "last layer width must be 1, got {widths:?}"
        )));
    }
    if input_dim == 0 {
        return Err(Error::Argument("input dimension must be at least 1".into()));
    }
    let mut rng = rng_for(seed, "init");
    let mut fan_in = input_dim;
    let mut layers = Vec::with_capacity(widths.len());
    for (i, &w) in widths.iter().enumerate() {
        let limit = (6.0 / fan_in as f64).sqrt();
        let data = (0..w * fan_in)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        layers.push(Dense {
            weights: Matrix::from_vec(w, fan_in, data)?,
            bias: vec![0.0; w],
            activation: if i + 1 == widths.len() {
                Activation::Linear
            } else {
                Activation::Relu
            },
        });
        fan_in = w;
    }
    Mlp::from_layers(input_dim, layers)
}

/// Returns a copy of `mlp` with the first `n_frozen` layers frozen.
pub fn freeze_layers(mlp: &Mlp, n_frozen: usize) -> Result<Mlp> {
    let mut out = mlp.clone();
    out.set_frozen(n_frozen)?;
    Ok(out)
}

/// Mean absolute error.
pub fn mae_loss(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Argument("MAE of an empty batch".into()));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64)
}
