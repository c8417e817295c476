//! Two-component PCA by power iteration with deflation on the sample
//! covariance matrix.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::{dot, Matrix};
use crate::seed::rng_for;

pub const N_COMPONENTS: usize = 2;
pub const POWER_MAX_ITER: usize = 1000;
pub const POWER_TOL: f64 = 1e-10;

/// Each power step multiplies by C^(2^SQUARINGS), which shrinks non-dominant
/// directions much faster than C alone when eigenvalues are close.
const SQUARINGS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `N_COMPONENTS x n_features`, orthonormal rows.
    pub components: Matrix,
    /// Descending.
    pub explained_variance: Vec<f64>,
}

/// Unbiased (n-1) covariance of the columns of `x`.
pub fn covariance(x: &Matrix) -> (Vec<f64>, Matrix) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in x.iter_rows() {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v - m;
        }
        for a in 0..d {
            for b in a..d {
                let v = cov.get(a, b) + centered[a] * centered[b];
                cov.set(a, b, v);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    (mean, cov)
}

fn matmul_sym(a: &Matrix, b: &Matrix) -> Matrix {
    let d = a.rows();
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for k in 0..d {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for j in 0..d {
                let v = out.get(i, j) + aik * b.get(k, j);
                out.set(i, j, v);
            }
        }
    }
    out
}

fn mat_vec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    a.iter_rows().map(|r| dot(r, v)).collect()
}

fn frobenius(a: &Matrix) -> f64 {
    a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
    }
}

/// Flips `v` so that its largest-magnitude entry is positive.
fn canonical_sign(v: &mut [f64]) {
    let pivot = v.iter().copied().fold(
        0.0f64,
        |best, x| if x.abs() > best.abs() { x } else { best },
    );
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dominant unit eigenvector of the symmetric PSD matrix `b`, orthogonal to `basis`.
fn dominant_eigenvector(
    b: &Matrix,
    basis: &[Vec<f64>],
    start: &[f64],
    zero_floor: f64,
) -> Result<Vec<f64>> {
    let d = b.rows();
    let mut v = start.to_vec();
    orthogonalize(&mut v, basis);
    if normalize(&mut v) == 0.0 {
        return Err(Error::Numeric(
            "degenerate power-iteration start vector".into(),
        ));
    }

    if frobenius(b) <= zero_floor {
        // zero spectrum left: any direction orthogonal to the basis works
        return Ok(v);
    }
    let mut power = b.clone();
    for _ in 0..SQUARINGS {
        power = matmul_sym(&power, &power);
        let s = frobenius(&power);
        if s == 0.0 || !s.is_finite() {
            break;
        }
        power.as_mut_slice().iter_mut().for_each(|x| *x /= s);
    }
    if frobenius(&power) == 0.0 {
        power = b.clone();
    }

    for _ in 0..POWER_MAX_ITER {
        let mut next = mat_vec(&power, &v);
        orthogonalize(&mut next, basis);
        if normalize(&mut next) == 0.0 {
            // start vector fell into the null space of the remaining spectrum
            return Ok(v);
        }
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = next;
        if delta < POWER_TOL {
            return Ok(v);
        }
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge in {POWER_MAX_ITER} iterations (d = {d})"
    )))
}

/// Fits the top two principal components of `x`.
pub fn fit_pca(x: &Matrix) -> Result<PcaModel> {
    if x.rows() < 3 {
        return Err(Error::Argument(format!(
            "PCA needs at least 3 rows, got {}",
            x.rows()
        )));
    }
    if x.cols() < N_COMPONENTS {
        return Err(Error::Argument(format!(
            "PCA to {N_COMPONENTS} components needs at least {N_COMPONENTS} features, got {}",
            x.cols()
        )));
    }
    if !x.is_finite() {
        return Err(Error::Numeric(
            "PCA input contains non-finite values".into(),
        ));
    }
    let d = x.cols();
    let (mean, cov) = covariance(x);

    let mut rng = rng_for(0, "pca-start");
    let zero_floor = 1e-12 * frobenius(&cov);
    let mut deflated = cov.clone();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(N_COMPONENTS);
    let mut explained_variance = Vec::with_capacity(N_COMPONENTS);
    for _ in 0..N_COMPONENTS {
        let start: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut v = dominant_eigenvector(&deflated, &basis, &start, zero_floor)?;
        canonical_sign(&mut v);
        let lambda = dot(&v, &mat_vec(&cov, &v)).max(0.0);
        for a in 0..d {
            for b in 0..d {
                let val = deflated.get(a, b) - lambda * v[a] * v[b];
                deflated.set(a, b, val);
            }
        }
        explained_variance.push(lambda);
        basis.push(v);
    }

    Ok(PcaModel {
        mean,
        components: Matrix::from_rows(&basis)?,
        explained_variance,
    })
}

/// Coordinates `(x - mean) · componentsᵀ`, one row per input row.
pub fn project(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.mean.len() {
        return Err(Error::Shape(format!(
            "PCA fitted on {} features, input has {}",
            model.mean.len(),
            x.cols()
        )));
    }
    let k = model.components.rows();
    let mut out = Matrix::zeros(x.rows(), k);
    let mut centered = vec![0.0; x.cols()];
    for (r, row) in x.iter_rows().enumerate() {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&model.mean)) {
            *c = v - m;
        }
        for j in 0..k {
            out.set(r, j, dot(&centered, model.components.row(j)));
        }
    }
    Ok(out)
}

pub fn scatter_csv(coords: &Matrix, labels: &[usize]) -> Result<String> {
    if coords.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} coordinates but {} labels",
            coords.rows(),
            labels.len()
        )));
    }
    if coords.cols() != N_COMPONENTS && coords.rows() > 0 {
        return Err(Error::Shape(format!(
            "expected 2-D coordinates, got {}",
            coords.cols()
        )));
    }
    let mut out = String::from("pc1,pc2,cluster\n");
    for (row, label) in coords.iter_rows().zip(labels) {
        let _ = writeln!(out, "{},{},{}", row[0], row[1], label);
    }
    Ok(out)
}

/// Writes `pc1,pc2,cluster` rows.
pub fn export_scatter(coords: &Matrix, labels: &[usize], path: &Path) -> Result<()> {
    write_atomic(path, scatter_csv(coords, labels)?.as_bytes())
}
