//! K-means clustering (Lloyd iterations from k-means++ seeding) and elbow
//! selection of the cluster count over the WCSS curve.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::{squared_distance, Matrix};
use crate::seed::{derive_seed, rng_for};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Matrix,
    pub k: usize,
    pub seed: u64,
    pub iterations_run: usize,
    pub converged: bool,
    /// WCSS after each Lloyd update.
    pub wcss_history: Vec<f64>,
}

impl ClusterModel {
    /// WCSS of the final centroids on the fitting data.
    pub fn inertia(&self) -> f64 {
        self.wcss_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

fn nearest(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = squared_distance(row, c);
        // strict comparison: ties go to the lowest index
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn check_dims(x: &Matrix, centroids: &Matrix) -> Result<()> {
    if x.cols() != centroids.cols() {
        return Err(Error::Shape(format!(
            "data has {} features, centroids have {}",
            x.cols(),
            centroids.cols()
        )));
    }
    Ok(())
}

/// Labels each row with its nearest centroid; ties resolve to the lower index.
pub fn assign(model: &ClusterModel, x: &Matrix) -> Result<Vec<usize>> {
    check_dims(x, &model.centroids)?;
    Ok(x.iter_rows()
        .map(|r| nearest(r, &model.centroids).0)
        .collect())
}

/// Sum over rows of squared distance to the nearest centroid.
pub fn wcss(x: &Matrix, model: &ClusterModel) -> Result<f64> {
    check_dims(x, &model.centroids)?;
    Ok(wcss_unchecked(x, &model.centroids))
}

fn wcss_unchecked(x: &Matrix, centroids: &Matrix) -> f64 {
    x.iter_rows().map(|r| nearest(r, centroids).1).sum()
}

fn kmeans_plus_plus(x: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = x.rows();
    let mut rng = rng_for(seed, "kmeans++");
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = x
        .iter_rows()
        .map(|r| squared_distance(r, x.row(chosen[0])))
        .collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every remaining point duplicates a chosen one
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

/// Lloyd iterations from the given centroids.
fn lloyd(x: &Matrix, mut centroids: Matrix, seed: u64, max_iter: usize, tol: f64) -> ClusterModel {
    let (n, d, k) = (x.rows(), x.cols(), centroids.rows());
    let mut labels = vec![0usize; n];
    let mut wcss_history = Vec::new();
    let mut converged = false;
    let mut iterations_run = 0;

    for _ in 0..max_iter {
        iterations_run += 1;
        let mut dist = vec![0.0; n];
        let mut counts = vec![0usize; k];
        for (i, row) in x.iter_rows().enumerate() {
            let (j, dj) = nearest(row, &centroids);
            labels[i] = j;
            dist[i] = dj;
            counts[j] += 1;
        }

        // Empty cluster: steal the point farthest from its centroid.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(p) = donor {
                counts[labels[p]] -= 1;
                labels[p] = j;
                counts[j] = 1;
                dist[p] = 0.0;
            }
        }

        let mut next = Matrix::zeros(k, d);
        for (i, row) in x.iter_rows().enumerate() {
            for (acc, v) in next.row_mut(labels[i]).iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                next.row_mut(j).copy_from_slice(centroids.row(j));
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            next.row_mut(j).iter_mut().for_each(|v| *v *= inv);
            shift = shift.max(squared_distance(next.row(j), centroids.row(j)).sqrt());
        }
        centroids = next;
        wcss_history.push(wcss_unchecked(x, &centroids));

        if shift < tol {
            converged = true;
            break;
        }
    }

    ClusterModel {
        centroids,
        k,
        seed,
        iterations_run,
        converged,
        wcss_history,
    }
}

fn validate(x: &Matrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if k > x.rows() {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the number of rows ({})",
            x.rows()
        )));
    }
    if !x.is_finite() {
        return Err(Error::Numeric(
            "clustering input contains non-finite values".into(),
        ));
    }
    Ok(())
}

/// Single k-means run: k-means++ seeding, then Lloyd iterations until the
/// largest centroid displacement drops below `tol` or `max_iter` is reached.
pub fn kmeans(x: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterModel> {
    validate(x, k)?;
    let init = kmeans_plus_plus(x, k, seed);
    Ok(lloyd(x, init, seed, max_iter, tol))
}

fn pick_best(models: Vec<ClusterModel>) -> ClusterModel {
    // min_by keeps the first of equal elements, i.e. the lowest restart index
    models
        .into_iter()
        .min_by(|a, b| a.inertia().total_cmp(&b.inertia()))
        .expect("at least one restart")
}

/// Best of `opts.restarts` independent k-means runs (restart `r` uses a seed
/// derived from `seed` and `r`). Ties keep the lowest restart index.
pub fn kmeans_best_of(
    x: &Matrix,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<ClusterModel> {
    validate(x, k)?;
    let restarts = opts.restarts.max(1);
    let models: Vec<ClusterModel> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let run_seed = derive_seed(seed, &format!("restart-{r}"));
            lloyd(
                x,
                kmeans_plus_plus(x, k, run_seed),
                run_seed,
                opts.max_iter,
                opts.tol,
            )
        })
        .collect();
    let mut best = pick_best(models);
    best.seed = seed;
    Ok(best)
}

/// WCSS for k = 1..=k_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcssCurve {
    pub values: Vec<f64>,
}

impl WcssCurve {
    pub fn k_max(&self) -> usize {
        self.values.len()
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    /// Discrete second difference `W(k-1) - 2 W(k) + W(k+1)`.
    pub fn second_difference(&self, k: usize) -> f64 {
        self.at(k - 1) - 2.0 * self.at(k) + self.at(k + 1)
    }

    /// k in `[2, k_max - 1]` with the largest second difference; ties keep the smaller k.
    pub fn elbow(&self) -> usize {
        (2..self.k_max())
            .map(|k| (k, self.second_difference(k)))
            .fold((2, f64::NEG_INFINITY), |best, (k, v)| {
                if v > best.1 {
                    (k, v)
                } else {
                    best
                }
            })
            .0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,wcss\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, v);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct ElbowSelection {
    pub k: usize,
    pub curve: WcssCurve,
    /// Best model per k, index `k - 1`.
    pub models: Vec<ClusterModel>,
}

impl ElbowSelection {
    pub fn selected_model(&self) -> &ClusterModel {
        &self.models[self.k - 1]
    }
}

fn farthest_point(x: &Matrix, centroids: &Matrix) -> usize {
    x.iter_rows()
        .map(|r| nearest(r, centroids).1)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, d)| {
            if d > best.1 {
                (i, d)
            } else {
                best
            }
        })
        .0
}

/// Builds the WCSS curve for k = 1..=k_max and picks the k of sharpest bend.
///
/// Besides the seeded restarts, each k > 1 also runs Lloyd from the best
/// (k-1)-solution plus its farthest point. That candidate never exceeds the
/// (k-1) WCSS, so the curve is non-increasing in k.
pub fn elbow_select(
    x: &Matrix,
    k_max: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<ElbowSelection> {
    if k_max < 3 {
        return Err(Error::Argument(format!(
            "k_max must be at least 3, got {k_max}"
        )));
    }
    validate(x, k_max)?;

    let mut models: Vec<ClusterModel> = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut best = kmeans_best_of(x, k, derive_seed(seed, &format!("k-{k}")), opts)?;
        if let Some(prev) = models.last() {
            let p = farthest_point(x, &prev.centroids);
            let mut rows: Vec<Vec<f64>> = prev.centroids.iter_rows().map(<[f64]>::to_vec).collect();
            rows.push(x.row(p).to_vec());
            let warm = lloyd(
                x,
                Matrix::from_rows(&rows)?,
                best.seed,
                opts.max_iter,
                opts.tol,
            );
            if warm.inertia() < best.inertia() {
                best = warm;
            }
        }
        models.push(best);
    }
    let curve = WcssCurve {
        values: models.iter().map(ClusterModel::inertia).collect(),
    };
    Ok(ElbowSelection {
        k: curve.elbow(),
        curve,
        models,
    })
}
