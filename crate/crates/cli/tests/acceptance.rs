//! Acceptance gate. Runs every criterion, prints one PASS/FAIL/SKIP line per
//! criterion and exits nonzero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use shiftlearn_core::cluster::{elbow_select, kmeans_best_of, KMeansOptions};
use shiftlearn_core::data::{build_encoding_schema, encode, parse_table};
use shiftlearn_core::nn::{
    backward, init_mlp, load_model, save_model, train, Gradients, TrainConfig, DEFAULT_WIDTHS,
};
use shiftlearn_core::pipeline::{
    cluster_dataset, run_plan, run_source_training, ExperimentPlan, Stage,
};
use shiftlearn_core::{
    aggregate_seeds, fit_pca, mae, project, r2, rmse, ExperimentResult, Matrix, NumericTable,
};
use support::*;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn pass_if(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

// ------------------------------------------------------------------ 1

fn flatten(g: &Gradients) -> Vec<f64> {
    g.layers
        .iter()
        .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied())
        .collect()
}

fn gradient_oracle() -> Verdict {
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    let mut failures = Vec::new();
    for net in 0..100u64 {
        let mut r = rng(0xC0FFEE + net);
        let case = random_grad_case(&mut r, 50, 1e-3);
        let layers = to_ref(&case.mlp);
        let x = Matrix::from_rows(&case.xs).unwrap();
        let (grads, _) = backward(&case.mlp, &x, &case.ys).unwrap();
        let analytic = flatten(&grads);
        let numeric = fd_gradient(&layers, &case.xs, &case.ys, h);
        let mut ok = analytic.len() == numeric.len();
        for (a, n) in analytic.iter().zip(&numeric) {
            let diff = (a - n).abs();
            let scale = a.abs().max(n.abs());
            if scale > 1e-8 {
                worst_rel = worst_rel.max(diff / scale);
            }
            ok &= grad_matches(*a, *n, 1e-4, 1e-9);
        }
        if !ok {
            failures.push(net);
        }
    }
    pass_if(
        failures.is_empty(),
        format!(
            "{}/100 networks within rel err 1e-4 (worst {worst_rel:.2e}){}",
            100 - failures.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(", failing {failures:?}")
            }
        ),
    )
}

// ------------------------------------------------------------------ 2

fn freezing_invariance() -> Verdict {
    let mut r = rng(2);
    let (rows, cols) = (80, 16);
    let data: Vec<f64> = (0..rows * cols).map(|_| r.random_range(0.0..1.0)).collect();
    let target: Vec<f64> = (0..rows).map(|_| r.random_range(0.0..20.0)).collect();
    let names = (0..cols).map(|c| format!("x{c}")).collect();
    let table =
        NumericTable::new(Matrix::from_vec(rows, cols, data).unwrap(), target, names).unwrap();
    let base = init_mlp(cols, &DEFAULT_WIDTHS, 21).unwrap();
    let bits = |l: &shiftlearn_core::nn::Dense| -> Vec<u64> {
        l.weights
            .as_slice()
            .iter()
            .chain(&l.bias)
            .map(|v| v.to_bits())
            .collect()
    };
    let mut bad = Vec::new();
    let mut moved_trainable = true;
    for n in 1..DEFAULT_WIDTHS.len() {
        let mut net = base.clone();
        net.set_frozen(n).unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            batch_size: 10,
            seed: 5,
            ..TrainConfig::default()
        };
        let (trained, _) = train(&net, &table, &cfg).unwrap();
        for l in 0..n {
            if bits(&base.layers()[l]) != bits(&trained.layers()[l]) {
                bad.push((n, l));
            }
        }
        moved_trainable &= bits(&base.layers()[n..].last().unwrap())
            != bits(&trained.layers()[n..].last().unwrap());
    }
    pass_if(
        bad.is_empty() && moved_trainable,
        if bad.is_empty() {
            "n_frozen 1..=5: frozen parameters bit-identical after 100 epochs".into()
        } else {
            format!("frozen layers changed (n_frozen, layer): {bad:?}")
        },
    )
}

// ------------------------------------------------------------------ 3

fn kmeans_oracle() -> Verdict {
    let mut hits = 0;
    for instance in 0..50u64 {
        let mut r = rng(0x5EED_0000 + instance);
        let n = r.random_range(3..=10);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [r.random_range(-10.0..10.0), r.random_range(-10.0..10.0)])
            .collect();
        let x = Matrix::from_rows(&pts).unwrap();
        let got = kmeans_best_of(&x, 2, instance, &KMeansOptions::default())
            .unwrap()
            .inertia();
        let best = brute_force_two_means(&pts);
        if (got - best).abs() <= 1e-9 * best.max(f64::MIN_POSITIVE) {
            hits += 1;
        }
    }
    pass_if(
        hits >= 48,
        format!("{hits}/50 instances at the brute-force optimum (need 48)"),
    )
}

// ------------------------------------------------------------------ 4

fn elbow_correctness() -> Verdict {
    let mut tally = [0; 2];
    let mut misses = Vec::new();
    for (slot, true_k) in [2usize, 3].into_iter().enumerate() {
        for generator in 0..10u64 {
            let mut r = rng(0xE1B0 + 100 * true_k as u64 + generator);
            let spread = r.random_range(0.5..2.0);
            let centers = blob_centers(&mut r, true_k, 10.0 * spread);
            let x = blobs(&mut r, &centers, spread, 50);
            let k = elbow_select(&x, 10, generator, &KMeansOptions::default())
                .unwrap()
                .k;
            if k == true_k {
                tally[slot] += 1;
            } else {
                misses.push((true_k, generator, k));
            }
        }
    }
    pass_if(
        misses.is_empty(),
        format!(
            "k=2: {}/10, k=3: {}/10{}",
            tally[0],
            tally[1],
            if misses.is_empty() {
                String::new()
            } else {
                format!(", misses (true, seed, got) {misses:?}")
            }
        ),
    )
}

// ------------------------------------------------------------------ 5

fn pca_oracle() -> Verdict {
    let mut worst_dot: f64 = 1.0;
    let mut worst_ortho: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    for m in 0..100u64 {
        let mut r = rng(0x9CA + m);
        let rows: Vec<[f64; 3]> = (0..20)
            .map(|_| {
                [
                    r.random_range(-5.0..5.0),
                    r.random_range(-5.0..5.0),
                    r.random_range(-5.0..5.0),
                ]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let model = fit_pca(&x).unwrap();
        let (_, vectors) = sym3_eigen(covariance3(&x));
        for j in 0..2 {
            let d: f64 = model
                .components
                .row(j)
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| a * b)
                .sum();
            worst_dot = worst_dot.min(d.abs());
        }
        for a in 0..2 {
            for b in 0..2 {
                let d: f64 = model
                    .components
                    .row(a)
                    .iter()
                    .zip(model.components.row(b))
                    .map(|(p, q)| p * q)
                    .sum();
                worst_ortho = worst_ortho.max((d - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        let coords = project(&model, &x).unwrap();
        for j in 0..2 {
            let mean = coords.column(j).iter().sum::<f64>() / 20.0;
            worst_mean = worst_mean.max(mean.abs());
        }
    }
    pass_if(
        worst_dot > 1.0 - 1e-8 && worst_ortho < 1e-10 && worst_mean < 1e-10,
        format!(
            "100 random 20x3 matrices: min |dot| = 1 - {:.1e}, orthonormality err {worst_ortho:.1e}, projection mean {worst_mean:.1e}",
            1.0 - worst_dot
        ),
    )
}

// ------------------------------------------------------------------ 6

fn metric_identities() -> Verdict {
    let mut r = rng(6);
    let mut dominated = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..50);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-100.0..100.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| r.random_range(-100.0..100.0)).collect();
        if rmse(&y, &p).unwrap() >= mae(&y, &p).unwrap() {
            dominated += 1;
        }
    }
    let y: Vec<f64> = (0..30).map(|_| r.random_range(0.0..20.0)).collect();
    let perfect = r2(&y, &y).unwrap();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mean_pred = r2(&y, &vec![mean; y.len()]).unwrap();
    let hand = r2(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
    pass_if(
        dominated == 1000 && perfect == 1.0 && mean_pred.abs() < 1e-15 && hand == -3.0,
        format!("rmse >= mae {dominated}/1000, r2(perfect) = {perfect}, r2(mean) = {mean_pred}, hand case = {hand}"),
    )
}

// ------------------------------------------------------------------ 7

fn fjob_encoding() -> Verdict {
    let csv = "Fjob;G3\nteacher;10\nother;12\nat_home;9\nservices;14\nhealth;11\nother;8\n";
    let raw = parse_table(csv).unwrap();
    let schema = build_encoding_schema(&raw, "G3").unwrap();
    let table = encode(&raw, &schema).unwrap();
    let codes = &schema.ordinal_maps["Fjob"];
    let col = table.features().column(0);
    let ok = codes["teacher"] == 4
        && codes["other"] == 2
        && col[0] == 4.0
        && col[1] == 2.0
        && col[5] == 2.0;
    pass_if(ok, format!("codes {codes:?}"))
}

// ------------------------------------------------------------------ 8

/// Reference magnitudes (RMSE, MAE) for the sanity band:
/// source test, target direct, then frozen counts 1, 2, 3.
const REFERENCE_MAT: [(f64, f64); 5] = [
    (4.79, 3.67),
    (6.20, 4.76),
    (4.91, 3.85),
    (4.67, 3.71),
    (4.57, 3.65),
];
const REFERENCE_POR: [(f64, f64); 5] = [
    (3.39, 2.44),
    (3.03, 2.33),
    (2.69, 2.15),
    (2.71, 2.16),
    (2.71, 2.17),
];

fn locate(env: &str, file: &str) -> Option<PathBuf> {
    if let Ok(p) = std::env::var(env) {
        return Some(PathBuf::from(p));
    }
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(file);
    p.is_file().then_some(p)
}

struct DatasetRun {
    name: &'static str,
    results: Vec<ExperimentResult>,
}

impl DatasetRun {
    fn ks(&self) -> Vec<usize> {
        self.results.iter().map(|r| r.k).collect()
    }

    fn mean(&self, f: impl Fn(&ExperimentResult) -> f64) -> f64 {
        self.results.iter().map(f).sum::<f64>() / self.results.len() as f64
    }

    /// Reported for comparison only; cluster sizes depend on clustering seeds.
    fn cluster1_sizes(&self) -> Vec<usize> {
        self.results.iter().map(|r| r.cluster_sizes[1]).collect()
    }

    /// Frozen count with the lowest mean RMSE and that mean.
    fn best_frozen(&self) -> Option<(usize, f64)> {
        let table = aggregate_seeds(&self.results).ok()?;
        table
            .rows
            .iter()
            .filter(|r| r.stage == Stage::Transfer && r.n_seeds == self.results.len())
            .map(|r| (r.frozen.unwrap(), r.rmse.mean))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn run_dataset(name: &'static str, path: &Path, learning_rate: f64) -> Result<DatasetRun, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let raw = parse_table(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut plan = ExperimentPlan {
        dataset_id: name.into(),
        seeds: (0..5).collect(),
        ..ExperimentPlan::default()
    };
    plan.pretrain.learning_rate = learning_rate;
    plan.finetune.learning_rate = learning_rate;
    let results = run_plan(&plan, &raw).map_err(|e| format!("{name}: {e}"))?;
    Ok(DatasetRun { name, results })
}

fn qualitative(mat: &DatasetRun, por: &DatasetRun) -> (bool, bool, String) {
    let negative = mat.results.iter().filter(|r| r.direct.r2 < 0.0).count();
    let mut detail = format!("mat direct R2 < 0 in {negative}/5 seeds");
    let mut improves = true;
    for d in [mat, por] {
        let direct = d.mean(|r| r.direct.rmse);
        match d.best_frozen() {
            Some((n, best)) => {
                improves &= best < direct;
                detail.push_str(&format!(
                    "; {} direct RMSE {direct:.3} vs transfer ({n} frozen) {best:.3}",
                    d.name
                ));
            }
            None => {
                improves = false;
                detail.push_str(&format!("; {} has no complete transfer branch", d.name));
            }
        }
    }
    (negative >= 4, improves, detail)
}

fn band(d: &DatasetRun, reference: &[(f64, f64); 5]) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |label: String, got: f64, want: f64| {
        if (got - want).abs() > 0.5 * want {
            out.push(format!("{} {label} {got:.2} vs {want:.2}", d.name));
        }
    };
    check(
        "source RMSE".into(),
        d.mean(|r| r.source.rmse),
        reference[0].0,
    );
    check(
        "source MAE".into(),
        d.mean(|r| r.source.mae),
        reference[0].1,
    );
    check(
        "direct RMSE".into(),
        d.mean(|r| r.direct.rmse),
        reference[1].0,
    );
    check(
        "direct MAE".into(),
        d.mean(|r| r.direct.mae),
        reference[1].1,
    );
    if let Ok(table) = aggregate_seeds(&d.results) {
        for n in 1..=3 {
            if let Some(row) = table.row(Stage::Transfer, Some(n)) {
                check(
                    format!("transfer({n}) RMSE"),
                    row.rmse.mean,
                    reference[1 + n].0,
                );
                check(
                    format!("transfer({n}) MAE"),
                    row.mae.mean,
                    reference[1 + n].1,
                );
            }
        }
    }
    out
}

fn dataset_reproduction() -> Verdict {
    let (Some(mat_path), Some(por_path)) = (
        locate("SHIFTLEARN_STUDENT_MAT", "student-mat.csv"),
        locate("SHIFTLEARN_STUDENT_POR", "student-por.csv"),
    ) else {
        return Verdict::Skip(
            "student-mat.csv / student-por.csv not found; place them in data/ or set \
             SHIFTLEARN_STUDENT_MAT and SHIFTLEARN_STUDENT_POR"
                .into(),
        );
    };
    // 0.001 first; the larger rates are the fallback when the qualitative
    // checks fail at the default.
    let mut attempts = Vec::new();
    for lr in [1e-3, 3e-3, 1e-2] {
        let runs = run_dataset("mat", &mat_path, lr)
            .and_then(|m| Ok((m, run_dataset("por", &por_path, lr)?)));
        let (mat, por) = match runs {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(e),
        };
        let (neg_ok, improves, detail) = qualitative(&mat, &por);
        attempts.push(format!("lr {lr}: {detail}"));
        if neg_ok && improves || lr == 1e-2 {
            let k_ok = mat.ks().iter().chain(&por.ks()).all(|&k| k == 2);
            let mut outside = band(&mat, &REFERENCE_MAT);
            outside.extend(band(&por, &REFERENCE_POR));
            let ok = k_ok && neg_ok && improves && outside.is_empty();
            return pass_if(
                ok,
                format!(
                    "(a) k mat {:?} por {:?}; (b,c) {}; (d) {}; cluster1 sizes mat {:?} (ref 64) por {:?} (ref 122)",
                    mat.ks(),
                    por.ks(),
                    attempts.join(" | "),
                    if outside.is_empty() {
                        "all within +/-50%".into()
                    } else {
                        format!("outside band: {}", outside.join(", "))
                    },
                    mat.cluster1_sizes(),
                    por.cluster1_sizes()
                ),
            );
        }
    }
    unreachable!()
}

// ------------------------------------------------------------------ 9

fn csv_reports(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("students.csv"),
        synthetic_student_csv(395, 99),
    )
    .unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "dataset = \"students.csv\"\nseeds = [3]\n",
    )
    .unwrap();
    let config = dir.path().join("exp.toml");
    let mut reports = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let code = shiftlearn_cli::run([
            "shiftlearn",
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        if code != 0 {
            return Verdict::Fail(format!("{run} sweep exited with {code}"));
        }
        reports.push(csv_reports(&out));
    }
    let differing: Vec<String> = reports[0]
        .iter()
        .zip(&reports[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.display().to_string())
        .collect();
    pass_if(
        reports[0].len() == reports[1].len() && differing.is_empty() && !reports[0].is_empty(),
        format!(
            "{} CSV files, {} differ {:?}",
            reports[0].len(),
            differing.len(),
            differing
        ),
    )
}

// ------------------------------------------------------------------ 10

fn model_round_trip() -> Verdict {
    let raw = parse_table(&synthetic_student_csv(200, 10)).unwrap();
    let mut plan = ExperimentPlan {
        restarts: 3,
        ..ExperimentPlan::default()
    };
    plan.pretrain.epochs = 25;
    let data = cluster_dataset(&raw, &plan, 1).unwrap();
    let run = run_source_training(&plan, &data, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&run.bundle, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let d = run.bundle.mlp.input_dim();
    let mut r = rng(10);
    let mut same = 0;
    for i in 0..100 {
        let scale = 10f64.powi(i % 7 - 3);
        let x: Vec<f64> = (0..d).map(|_| scale * r.random_range(-1.0..1.0)).collect();
        let a = run.bundle.mlp.forward(&x).unwrap();
        let b = loaded.mlp.forward(&x).unwrap();
        if a.to_bits() == b.to_bits() {
            same += 1;
        }
    }
    pass_if(
        same == 100 && loaded.scaler == run.bundle.scaler && loaded.schema == run.bundle.schema,
        format!("{same}/100 outputs bit-identical after save/load"),
    )
}

// ------------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, Option<u64>, Check); 10] = [
        (1, "gradient oracle", Some(30), gradient_oracle),
        (2, "freezing invariance", Some(60), freezing_invariance),
        (3, "k-means oracle", Some(30), kmeans_oracle),
        (4, "elbow correctness", Some(60), elbow_correctness),
        (5, "PCA oracle", None, pca_oracle),
        (6, "metric identities", None, metric_identities),
        (7, "Fjob encoding", None, fjob_encoding),
        (
            8,
            "dataset-scale reproduction",
            Some(900),
            dataset_reproduction,
        ),
        (9, "determinism", None, determinism),
        (10, "model round-trip", None, model_round_trip),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let verdict = match (verdict, budget) {
            (Verdict::Pass(d), Some(s)) if elapsed > Duration::from_secs(s) => {
                Verdict::Fail(format!(
                    "{d}; runtime {:.1}s over the {s}s budget",
                    elapsed.as_secs_f64()
                ))
            }
            (v, _) => v,
        };
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!(
            "{tag} [{id:>2}] {name}: {detail} ({:.2}s)",
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
