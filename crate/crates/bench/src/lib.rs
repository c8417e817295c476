//! Fixture builders shared by the criterion benches.

use shiftlearn_core::{Matrix, NumericTable};

/// Deterministic pseudo-random matrix in `[0, 1)` (xorshift; no rng dependency).
pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let data = (0..rows * cols)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// Regression table with a smooth target, sized like a student-grade cluster.
pub fn regression_table(rows: usize, cols: usize, seed: u64) -> NumericTable {
    let x = uniform_matrix(rows, cols, seed);
    let y = x
        .iter_rows()
        .map(|r| 10.0 + 5.0 * r[0] - 3.0 * r[cols / 2] + r.iter().sum::<f64>() / cols as f64)
        .collect();
    let names = (0..cols).map(|i| format!("f{i}")).collect();
    NumericTable::new(x, y, names).expect("finite by construction")
}
