//! Random objects for the integration suites. Independent of the library's
//! samplers: everything here is built from raw Gaussians.

#![allow(dead_code)]

use exchange_q::hilbert::{DensityMatrix, Effect, Povm, PureState, Transformation};
use exchange_q::knowledge::DitherMatrix;
use exchange_q::ComplexMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_c(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    (0..len).map(|_| gaussian_c(rng)).collect()
}

fn ginibre(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_entries(n, gaussian_vec(rng, n * n)).unwrap()
}

pub fn pure_state(rng: &mut ChaCha8Rng, n: usize) -> PureState {
    PureState::normalized(gaussian_vec(rng, n)).unwrap()
}

/// Full-rank or, with `rank < n`, rank-deficient random density matrix.
pub fn density_with_rank(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DensityMatrix {
    let mut acc = ComplexMatrix::zeros(n);
    for _ in 0..rank {
        let v = gaussian_vec(rng, n);
        acc = &acc + &ComplexMatrix::outer(&v, &v);
    }
    let t = acc.trace().re;
    DensityMatrix::new(acc.scale_real(1.0 / t).hermitian_part()).unwrap()
}

pub fn density(rng: &mut ChaCha8Rng, n: usize) -> DensityMatrix {
    let rank = rng.random_range(1..=n);
    density_with_rank(rng, n, rank)
}

/// Columns of a random `rows x cols` isometry (`rows >= cols`), by
/// Gram-Schmidt on Gaussian columns.
fn isometry_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<Complex64>> {
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(cols);
    while out.len() < cols {
        let mut v = gaussian_vec(rng, rows);
        for _ in 0..2 {
            for u in &out {
                let proj: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= proj * y;
                }
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            out.push(v.into_iter().map(|c| c / norm).collect());
        }
    }
    out
}

pub fn unitary(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let cols = isometry_columns(rng, n, n);
    let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, c) in col.iter().enumerate() {
            entries[i * n + j] = *c;
        }
    }
    ComplexMatrix::from_entries(n, entries).unwrap()
}

/// Random channel with `kraus_count` Kraus operators: the blocks of an
/// `(kraus_count * n) x n` isometry.
pub fn channel(rng: &mut ChaCha8Rng, n: usize, kraus_count: usize) -> Transformation {
    let cols = isometry_columns(rng, kraus_count * n, n);
    let ops = (0..kraus_count)
        .map(|b| {
            let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
            for (j, col) in cols.iter().enumerate() {
                for i in 0..n {
                    entries[i * n + j] = col[b * n + i];
                }
            }
            ComplexMatrix::from_entries(n, entries).unwrap()
        })
        .collect();
    Transformation::new("random", ops).unwrap()
}

fn inverse_sqrt(m: &ComplexMatrix) -> ComplexMatrix {
    let eig = m.hermitian_eigen();
    let n = m.dim();
    let mut acc = ComplexMatrix::zeros(n);
    for (v, vec) in eig.values.iter().zip(&eig.vectors) {
        acc = &acc + &ComplexMatrix::outer(vec, vec).scale_real(1.0 / v.sqrt());
    }
    acc
}

/// Random POVM with `m` full-rank effects: `S^{-1/2} A_i S^{-1/2}` for
/// random positive `A_i` and `S = sum A_i`.
pub fn povm(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Povm {
    let parts: Vec<ComplexMatrix> = (0..m)
        .map(|_| {
            let g = ginibre(rng, n);
            &g * &g.adjoint()
        })
        .collect();
    let mut s = ComplexMatrix::zeros(n);
    for p in &parts {
        s = &s + p;
    }
    let r = inverse_sqrt(&s);
    let effects = parts
        .iter()
        .map(|a| Effect::new((&(&r * a) * &r).hermitian_part()).unwrap())
        .collect();
    Povm::with_indexed_labels("random", effects).unwrap()
}

pub fn probability_vector(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random column-stochastic `new x old` matrix.
pub fn dither(rng: &mut ChaCha8Rng, new: usize, old: usize) -> DitherMatrix {
    let cols: Vec<Vec<f64>> = (0..old).map(|_| probability_vector(rng, new)).collect();
    let rows = (0..new).map(|j| cols.iter().map(|c| c[j]).collect()).collect();
    DitherMatrix::new(rows).unwrap()
}
