//! Reference computations that share no code with the library's linear algebra.
#![allow(dead_code, clippy::needless_range_loop)]

use fdg_core::SampleMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Natural log of |det(a)| by Gaussian elimination with partial pivoting.
pub fn ln_abs_det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        assert!(p != 0.0, "singular matrix in oracle");
        acc += p.abs().ln();
        for row in col + 1..n {
            let f = a[row][col] / p;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    acc
}

/// Subtracts the per-dimension mean from sample columns.
pub fn centered(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = columns[0].len();
    let n = columns.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|i| columns.iter().map(|c| c[i]).sum::<f64>() / n)
        .collect();
    columns
        .iter()
        .map(|c| c.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect()
}

/// ln det(I_d + X X^T / N) on the d x d side.
pub fn ln_det_cov(columns: &[Vec<f64>]) -> f64 {
    let d = columns[0].len();
    let n = columns.len() as f64;
    let mut s = vec![vec![0.0; d]; d];
    for c in columns {
        for i in 0..d {
            for j in 0..d {
                s[i][j] += c[i] * c[j] / n;
            }
        }
    }
    for (i, row) in s.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    ln_abs_det(s)
}

/// ln det(I_N + X^T X / N) on the N x N side.
pub fn ln_det_gram(columns: &[Vec<f64>]) -> f64 {
    let n = columns.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
            s[i][j] = dot / n as f64 + if i == j { 1.0 } else { 0.0 };
        }
    }
    ln_abs_det(s)
}

/// Volume in bits of raw columns, centered here.
pub fn volume(columns: &[Vec<f64>]) -> f64 {
    if columns.is_empty() {
        return 0.0;
    }
    0.5 * ln_det_cov(&centered(columns)) / std::f64::consts::LN_2
}

pub fn fdg(base: &[Vec<f64>], aug: &[Vec<f64>]) -> f64 {
    let vz = volume(base);
    let joint: Vec<Vec<f64>> = base.iter().chain(aug).cloned().collect();
    (volume(&joint) - vz) / vz
}

pub fn columns(m: &SampleMatrix) -> Vec<Vec<f64>> {
    m.columns().map(|c| c.to_vec()).collect()
}

pub fn matrix(dim: usize, cols: &[Vec<f64>]) -> SampleMatrix {
    SampleMatrix::from_columns(dim, cols).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` samples of dimension `d`, scaled per dimension by a random factor in [0.2, 3].
pub fn random_columns<R: Rng>(rng: &mut R, d: usize, n: usize) -> Vec<Vec<f64>> {
    let scale: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
    let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
    (0..n)
        .map(|_| {
            (0..d)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(rng);
                    shift[i] + scale[i] * z
                })
                .collect()
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() <= tol * scale
}
