use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::mlp::Mlp;

/// Gradient of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients shaped like an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, mlp: &Mlp) -> bool {
        self.layers.len() == mlp.depth()
            && self.layers.iter().zip(mlp.layers()).all(|(g, l)| {
                g.weights.rows() == l.out_dim()
                    && g.weights.cols() == l.in_dim()
                    && g.bias.len() == l.out_dim()
            })
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|g| {
            g.weights
                .as_slice()
                .iter()
                .chain(&g.bias)
                .all(|&v| v == 0.0)
        })
    }
}

#[inline]
fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Exact gradients of the batch MAE with respect to every weight and bias.
///
/// Subgradients at the kinks are 0: a zero residual contributes nothing, and
/// relu'(0) = 0. Returns the gradients together with the batch loss.
pub fn backward(mlp: &Mlp, batch_x: &Matrix, batch_y: &[f64]) -> Result<(Gradients, f64)> {
    if batch_x.cols() != mlp.input_dim() {
        return Err(Error::Shape(format!(
            "network expects {} inputs, batch has {}",
            mlp.input_dim(),
            batch_x.cols()
        )));
    }
    if batch_x.rows() != batch_y.len() {
        return Err(Error::Shape(format!(
            "{} batch rows but {} targets",
            batch_x.rows(),
            batch_y.len()
        )));
    }
    if batch_y.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }

    let n = batch_y.len() as f64;
    let depth = mlp.depth();
    let layers = mlp.layers();
    let mut grads = Gradients::zeros_like(mlp);
    let mut loss = 0.0;

    for (x, &y) in batch_x.iter_rows().zip(batch_y) {
        let (zs, acts) = mlp.forward_trace(x);
        let residual = acts[depth - 1][0] - y;
        loss += residual.abs();
        let dl_dout = sign(residual) / n;
        if dl_dout == 0.0 {
            continue;
        }

        // delta = dL/dz for the current layer
        let mut delta: Vec<f64> = zs[depth - 1]
            .iter()
            .map(|&z| dl_dout * layers[depth - 1].activation.derivative(z))
            .collect();
        for l in (0..depth).rev() {
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                for (gw, &a) in g.weights.row_mut(o).iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let w = &layers[l].weights;
            let prev_act = layers[l - 1].activation;
            delta = (0..w.cols())
                .map(|i| {
                    let back: f64 = delta
                        .iter()
                        .enumerate()
                        .map(|(o, &d)| d * w.get(o, i))
                        .sum();
                    back * prev_act.derivative(zs[l - 1][i])
                })
                .collect();
        }
    }
    Ok((grads, loss / n))
}
