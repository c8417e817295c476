//! Test-only oracles and fixtures. Nothing here calls into the code paths it
//! is used to check: forward passes, losses, eigenpairs and partitions are
//! recomputed from scratch.

#![allow(dead_code)]

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shiftlearn_core::nn::{Activation, Dense, Mlp};
use shiftlearn_core::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- networks

/// Plain per-layer parameters, detached from `Mlp`.
#[derive(Clone, Debug)]
pub struct RefLayer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub relu: bool,
}

pub fn to_ref(mlp: &Mlp) -> Vec<RefLayer> {
    mlp.layers()
        .iter()
        .map(|l| RefLayer {
            w: (0..l.out_dim())
                .map(|o| l.weights.row(o).to_vec())
                .collect(),
            b: l.bias.clone(),
            relu: l.activation == Activation::Relu,
        })
        .collect()
}

/// Straight-line forward pass.
pub fn ref_forward(layers: &[RefLayer], x: &[f64]) -> f64 {
    let mut a = x.to_vec();
    for l in layers {
        let mut next = Vec::with_capacity(l.b.len());
        for (row, bias) in l.w.iter().zip(&l.b) {
            let mut z = *bias;
            for (wi, ai) in row.iter().zip(&a) {
                z += wi * ai;
            }
            next.push(if l.relu && z < 0.0 { 0.0 } else { z });
        }
        a = next;
    }
    a[0]
}

pub fn ref_pre_activations(layers: &[RefLayer], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut all = Vec::new();
    for l in layers {
        let mut next = Vec::new();
        for (row, bias) in l.w.iter().zip(&l.b) {
            let z: f64 = bias + row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
            if l.relu {
                all.push(z);
            }
            next.push(if l.relu && z < 0.0 { 0.0 } else { z });
        }
        a = next;
    }
    all
}

pub fn ref_mae(layers: &[RefLayer], xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (ref_forward(layers, x) - y).abs())
        .sum::<f64>()
        / ys.len() as f64
}

/// Central finite differences of the batch MAE, ordered layer by layer as
/// (weights row-major, then bias).
pub fn fd_gradient(layers: &[RefLayer], xs: &[Vec<f64>], ys: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut work = layers.to_vec();
    for l in 0..layers.len() {
        for o in 0..layers[l].w.len() {
            for i in 0..layers[l].w[o].len() {
                let orig = work[l].w[o][i];
                work[l].w[o][i] = orig + h;
                let plus = ref_mae(&work, xs, ys);
                work[l].w[o][i] = orig - h;
                let minus = ref_mae(&work, xs, ys);
                work[l].w[o][i] = orig;
                out.push((plus - minus) / (2.0 * h));
            }
        }
        for o in 0..layers[l].b.len() {
            let orig = work[l].b[o];
            work[l].b[o] = orig + h;
            let plus = ref_mae(&work, xs, ys);
            work[l].b[o] = orig - h;
            let minus = ref_mae(&work, xs, ys);
            work[l].b[o] = orig;
            out.push((plus - minus) / (2.0 * h));
        }
    }
    out
}

pub fn random_mlp(rng: &mut ChaCha8Rng, input_dim: usize, widths: &[usize]) -> Mlp {
    let mut fan_in = input_dim;
    let layers = widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let data = (0..w * fan_in)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let layer = Dense {
                weights: Matrix::from_vec(w, fan_in, data).unwrap(),
                bias: (0..w).map(|_| rng.random_range(-0.5..0.5)).collect(),
                activation: if i + 1 == widths.len() {
                    Activation::Linear
                } else {
                    Activation::Relu
                },
            };
            fan_in = w;
            layer
        })
        .collect();
    Mlp::from_layers(input_dim, layers).unwrap()
}

pub struct GradCase {
    pub mlp: Mlp,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

/// Random network with at most `max_params` parameters and a batch whose
/// pre-activations and residuals all sit at least `margin` away from a kink,
/// so that central differences see a smooth function.
pub fn random_grad_case(rng: &mut ChaCha8Rng, max_params: usize, margin: f64) -> GradCase {
    loop {
        let input_dim = rng.random_range(1..=4);
        let depth = rng.random_range(1..=4);
        let mut widths: Vec<usize> = (0..depth - 1).map(|_| rng.random_range(1..=5)).collect();
        widths.push(1);
        let mlp = random_mlp(rng, input_dim, &widths);
        if mlp.n_params() > max_params {
            continue;
        }
        let batch = rng.random_range(1..=6);
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                (0..input_dim)
                    .map(|_| rng.random_range(-2.0..2.0))
                    .collect()
            })
            .collect();
        let ys: Vec<f64> = (0..batch).map(|_| rng.random_range(-3.0..3.0)).collect();
        let layers = to_ref(&mlp);
        let smooth = xs.iter().zip(&ys).all(|(x, y)| {
            ref_pre_activations(&layers, x)
                .iter()
                .all(|z| z.abs() > margin)
                && (ref_forward(&layers, x) - y).abs() > margin
        });
        if smooth {
            return GradCase { mlp, xs, ys };
        }
    }
}

pub fn grad_matches(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_floor || diff / analytic.abs().max(numeric.abs()) < rel_tol
}

// ---------------------------------------------------------------- k-means

fn partition_cost(points: &[[f64; 2]], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let n = idx.len() as f64;
    let mx = idx.iter().map(|&i| points[i][0]).sum::<f64>() / n;
    let my = idx.iter().map(|&i| points[i][1]).sum::<f64>() / n;
    idx.iter()
        .map(|&i| (points[i][0] - mx).powi(2) + (points[i][1] - my).powi(2))
        .sum()
}

/// Optimal 2-means WCSS by enumerating every 2-partition (point 0 pinned).
pub fn brute_force_two_means(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for mask in 1u64..(1 << (n - 1)) {
        let (mut a, mut b) = (vec![0], Vec::new());
        for i in 1..n {
            if mask & (1 << (i - 1)) != 0 {
                b.push(i);
            } else {
                a.push(i);
            }
        }
        best = best.min(partition_cost(points, &a) + partition_cost(points, &b));
    }
    best
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `per_blob` points around each center with isotropic spread.
pub fn blobs(rng: &mut ChaCha8Rng, centers: &[[f64; 2]], spread: f64, per_blob: usize) -> Matrix {
    let mut rows = Vec::new();
    for c in centers {
        for _ in 0..per_blob {
            rows.push([c[0] + spread * gaussian(rng), c[1] + spread * gaussian(rng)]);
        }
    }
    Matrix::from_rows(&rows).unwrap()
}

/// Blob centers `separation` apart: a random-direction pair for 2, an
/// equilateral triangle for 3.
pub fn blob_centers(rng: &mut ChaCha8Rng, count: usize, separation: f64) -> Vec<[f64; 2]> {
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let origin = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
    match count {
        2 => vec![
            origin,
            [
                origin[0] + separation * theta.cos(),
                origin[1] + separation * theta.sin(),
            ],
        ],
        3 => {
            let r = separation / 3f64.sqrt();
            (0..3)
                .map(|i| {
                    let a = theta + i as f64 * std::f64::consts::TAU / 3.0;
                    [origin[0] + r * a.cos(), origin[1] + r * a.sin()]
                })
                .collect()
        }
        _ => panic!("unsupported blob count {count}"),
    }
}

// ---------------------------------------------------------------- PCA

/// Unbiased covariance, recomputed directly.
pub fn covariance3(x: &Matrix) -> [[f64; 3]; 3] {
    let n = x.rows() as f64;
    let mut mean = [0.0; 3];
    for r in x.iter_rows() {
        for c in 0..3 {
            mean[c] += r[c] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for r in x.iter_rows() {
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    cov
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Closed-form eigenpairs of a symmetric 3x3 matrix (trigonometric
/// solution of the characteristic cubic), eigenvalues descending.
pub fn sym3_eigen(a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    let values = [e1, e2, e3];

    let mut vectors = [[0.0; 3]; 3];
    for (k, &lambda) in values.iter().enumerate() {
        let rows: Vec<[f64; 3]> = (0..3)
            .map(|i| {
                let mut r = a[i];
                r[i] -= lambda;
                r
            })
            .collect();
        let candidates = [
            cross(rows[0], rows[1]),
            cross(rows[0], rows[2]),
            cross(rows[1], rows[2]),
        ];
        let best = candidates
            .iter()
            .copied()
            .max_by(|u, v| norm3(*u).total_cmp(&norm3(*v)))
            .unwrap();
        let n = norm3(best);
        vectors[k] = [best[0] / n, best[1] / n, best[2] / n];
    }
    (values, vectors)
}

// ---------------------------------------------------------------- datasets

const MJOB: [&str; 5] = ["at_home", "health", "other", "services", "teacher"];
const REASON: [&str; 4] = ["course", "home", "other", "reputation"];
const GUARDIAN: [&str; 3] = ["father", "mother", "other"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn yes_no(rng: &mut ChaCha8Rng, p_yes: f64) -> &'static str {
    if rng.random::<f64>() < p_yes {
        "yes"
    } else {
        "no"
    }
}

/// Semicolon-delimited table with the 33-column student-performance layout.
///
/// Rows come from two latent groups that differ in school, family and grade
/// profile, so the encoded features cluster and the groups' grade relations
/// differ. Grades are on the 0..=20 scale and G3 tracks G1/G2.
pub fn synthetic_student_csv(n: usize, seed: u64) -> String {
    let mut rng = rng(seed);
    let header = [
        "school",
        "sex",
        "age",
        "address",
        "famsize",
        "Pstatus",
        "Medu",
        "Fedu",
        "Mjob",
        "Fjob",
        "reason",
        "guardian",
        "traveltime",
        "studytime",
        "failures",
        "schoolsup",
        "famsup",
        "paid",
        "activities",
        "nursery",
        "higher",
        "internet",
        "romantic",
        "famrel",
        "freetime",
        "goout",
        "Dalc",
        "Walc",
        "health",
        "absences",
        "G1",
        "G2",
        "G3",
    ];
    let mut out = header.map(|h| format!("\"{h}\"")).join(";");
    out.push('\n');
    for _ in 0..n {
        let minority = rng.random::<f64>() < 0.3;
        let clamp = |v: f64, lo: f64, hi: f64| v.round().clamp(lo, hi) as i64;
        let medu = if minority {
            rng.random_range(0..=2)
        } else {
            rng.random_range(2..=4)
        };
        let fedu = if minority {
            rng.random_range(0..=2)
        } else {
            rng.random_range(1..=4)
        };
        let studytime: i64 = rng.random_range(1..=4);
        let failures: i64 = if minority {
            rng.random_range(0..=3)
        } else {
            i64::from(rng.random::<f64>() < 0.1)
        };
        let absences = clamp(
            if minority {
                8.0 + 6.0 * gaussian(&mut rng)
            } else {
                3.0 + 3.0 * gaussian(&mut rng)
            },
            0.0,
            75.0,
        );
        let goout: i64 = rng.random_range(1..=5);
        let ability = if minority {
            8.0 + 0.6 * studytime as f64 - 1.2 * failures as f64 + 2.5 * gaussian(&mut rng)
        } else {
            10.0 + 0.5 * (medu + fedu) as f64 * 0.5 + 0.8 * studytime as f64 - 0.3 * goout as f64
                + 2.0 * gaussian(&mut rng)
        };
        let g1 = clamp(ability + gaussian(&mut rng), 0.0, 20.0);
        let g2 = clamp(ability + 0.3 + gaussian(&mut rng), 0.0, 20.0);
        let g3 = if rng.random::<f64>() < if minority { 0.08 } else { 0.02 } {
            0
        } else {
            clamp(
                0.2 * g1 as f64 + 0.8 * g2 as f64 - 0.02 * absences as f64
                    + 0.8 * gaussian(&mut rng),
                0.0,
                20.0,
            )
        };
        let mut row: Vec<String> = Vec::with_capacity(33);
        let q = |s: &str| format!("\"{s}\"");
        row.push(q(if minority { "MS" } else { "GP" }));
        row.push(q(if rng.random::<bool>() { "F" } else { "M" }));
        row.push(
            (if minority {
                rng.random_range(16..=22)
            } else {
                rng.random_range(15..=19)
            })
            .to_string(),
        );
        row.push(q(if minority { "R" } else { "U" }));
        row.push(q(if rng.random::<f64>() < 0.3 {
            "LE3"
        } else {
            "GT3"
        }));
        row.push(q(if rng.random::<f64>() < 0.1 { "A" } else { "T" }));
        row.push(medu.to_string());
        row.push(fedu.to_string());
        row.push(q(pick(&mut rng, &MJOB)));
        row.push(q(pick(&mut rng, &MJOB)));
        row.push(q(pick(&mut rng, &REASON)));
        row.push(q(pick(&mut rng, &GUARDIAN)));
        row.push(
            (if minority {
                rng.random_range(2..=4)
            } else {
                rng.random_range(1..=2)
            })
            .to_string(),
        );
        row.push(studytime.to_string());
        row.push(failures.to_string());
        row.push(q(yes_no(&mut rng, 0.13)));
        row.push(q(yes_no(&mut rng, 0.6)));
        row.push(q(yes_no(&mut rng, if minority { 0.1 } else { 0.5 })));
        row.push(q(yes_no(&mut rng, 0.5)));
        row.push(q(yes_no(&mut rng, 0.8)));
        row.push(q(yes_no(&mut rng, if minority { 0.7 } else { 0.97 })));
        row.push(q(yes_no(&mut rng, if minority { 0.5 } else { 0.9 })));
        row.push(q(yes_no(&mut rng, 0.33)));
        for _ in 0..3 {
            row.push(rng.random_range(1..=5i64).to_string());
        }
        row.push(rng.random_range(1..=5i64).to_string());
        row.push(rng.random_range(1..=5i64).to_string());
        row.push(rng.random_range(1..=5i64).to_string());
        row.push(absences.to_string());
        row.push(g1.to_string());
        row.push(g2.to_string());
        row.push(g3.to_string());
        let _ = writeln!(out, "{}", row.join(";"));
    }
    out
}
