//! Dense complex square matrices at small dimension.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// An `n x n` complex matrix stored row-major. Immutable once built.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

/// Real eigenvalues (ascending) and matching orthonormal eigenvectors of a
/// Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<Complex64>>,
}

impl ComplexMatrix {
    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ShapeMismatch("matrix dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::LengthMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "row of length {} in a {dim}-row matrix",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::from_entries(dim, entries)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * m.dim + i] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = ONE;
        }
        m
    }

    /// `|a><b|`
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        let dim = a.len();
        debug_assert_eq!(dim, b.len());
        let mut entries = Vec::with_capacity(dim * dim);
        for ai in a {
            for bj in b {
                entries.push(ai * bj.conj());
            }
        }
        Self { dim, entries }
    }

    /// `|i><j|` in the computational basis.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.entries[i * dim + j] = ONE;
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut entries = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                entries.push(self.entries[c * n + r].conj());
            }
        }
        Self { dim: n, entries }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i]).sum()
    }

    /// `tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.entries[i * n + k] * other.entries[k * n + i];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max |a_ij - conj(a_ji)|
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                let d = (self.entries[r * n + c] - self.entries[c * n + r].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// `(A + A^dag) / 2`
    pub fn hermitian_part(&self) -> Self {
        let adj = self.adjoint();
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&adj.entries)
                .map(|(a, b)| (a + b) * 0.5)
                .collect(),
        }
    }

    /// Eigendecomposition of the Hermitian part of the matrix.
    pub fn hermitian_eigen(&self) -> HermitianEigen {
        let h = self.hermitian_part();
        let n = self.dim;
        let m = DMatrix::from_row_slice(n, n, &h.entries);
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        HermitianEigen {
            values: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
            vectors: order
                .iter()
                .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
                .collect(),
        }
    }

    pub fn eigenvalues_hermitian(&self) -> Vec<f64> {
        self.hermitian_eigen().values
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        (0..n)
            .map(|r| (0..n).map(|c| self.entries[r * n + c] * v[c]).sum())
            .collect()
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self * other)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self + other)
    }

    /// Parse a named constructor.
    ///
    /// Keys, all indices zero-based:
    /// - `pauli:i`, `pauli:x`, `pauli:y`, `pauli:z`
    /// - `identity:<n>`
    /// - `proj:<n>:<k>`: computational-basis projector `|k><k|`
    /// - `gellmann:<n>:<j>:<k>`: generalized Gell-Mann matrix: symmetric
    ///   `|j><k| + |k><j|` for `j < k`, antisymmetric `-i|k><j| + i|j><k|`
    ///   for `j > k`, and for `j == k = l >= 1` the diagonal
    ///   `sqrt(2/(l(l+1))) (sum_{m<l} |m><m| - l |l><l|)`.
    pub fn named(key: &str) -> Result<Self> {
        let bad = || Error::UnknownNamedMatrix(key.to_string());
        let parts: Vec<&str> = key.split(':').collect();
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["pauli", p] => pauli(p).ok_or_else(bad),
            ["identity", n] => {
                let n = int(n)?;
                if n == 0 {
                    return Err(bad());
                }
                Ok(Self::identity(n))
            }
            ["proj", n, k] => {
                let (n, k) = (int(n)?, int(k)?);
                if k >= n {
                    return Err(bad());
                }
                Ok(Self::unit(n, k, k))
            }
            ["gellmann", n, j, k] => {
                let (n, j, k) = (int(n)?, int(j)?, int(k)?);
                gell_mann(n, j, k).ok_or_else(bad)
            }
            _ => Err(bad()),
        }
    }
}

fn pauli(which: &str) -> Option<ComplexMatrix> {
    let i = Complex64::i();
    let rows = match which {
        "i" => [[ONE, ZERO], [ZERO, ONE]],
        "x" => [[ZERO, ONE], [ONE, ZERO]],
        "y" => [[ZERO, -i], [i, ZERO]],
        "z" => [[ONE, ZERO], [ZERO, -ONE]],
        _ => return None,
    };
    Some(ComplexMatrix {
        dim: 2,
        entries: rows.concat(),
    })
}

/// Unnormalized generalized Gell-Mann matrix (`tr(G^2) = 2`); see
/// [`ComplexMatrix::named`] for the index convention.
pub fn gell_mann(n: usize, j: usize, k: usize) -> Option<ComplexMatrix> {
    if j >= n || k >= n {
        return None;
    }
    let i = Complex64::i();
    if j < k {
        Some(&ComplexMatrix::unit(n, j, k) + &ComplexMatrix::unit(n, k, j))
    } else if j > k {
        Some(&ComplexMatrix::unit(n, k, j).scale(-i) + &ComplexMatrix::unit(n, j, k).scale(i))
    } else if j >= 1 {
        let l = j as f64;
        let norm = (2.0 / (l * (l + 1.0))).sqrt();
        let diag: Vec<f64> = (0..n)
            .map(|m| match m.cmp(&j) {
                std::cmp::Ordering::Less => norm,
                std::cmp::Ordering::Equal => -l * norm,
                std::cmp::Ordering::Greater => 0.0,
            })
            .collect();
        Some(ComplexMatrix::from_real_diagonal(&diag))
    } else {
        None
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self.get(r, c);
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            for k in 0..n {
                let a = self.entries[r * n + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..n {
                    out[r * n + c] += a * rhs.entries[k * n + c];
                }
            }
        }
        ComplexMatrix { dim: n, entries: out }
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matrix dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a - b).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            dim: self.dim,
            entries: self.entries.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        let entries = repr
            .entries
            .iter()
            .map(|[re, im]| Complex64::new(*re, *im))
            .collect();
        ComplexMatrix::from_entries(repr.dim, entries).map_err(de::Error::custom)
    }
}

/// Serde adapter for complex vectors as lists of `[re, im]` pairs.
pub mod complex_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}
