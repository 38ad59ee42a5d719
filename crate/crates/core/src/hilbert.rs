//! Density matrices, effects, POVMs, pure states and Kraus transformations,
//! with the trace-formula probability rule.
//!
//! Every type here validates on construction and is immutable afterwards, so
//! any value that exists is a legal preparation, outcome or map.

use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, ComplexMatrix};
use crate::tolerance;

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    let deviation = m.hermiticity_deviation();
    if deviation > tolerance::HERMITIAN || deviation.is_nan() {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// A unit-trace positive semidefinite Hermitian matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity, in that order.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        check_hermitian(&matrix)?;
        let trace = matrix.trace().re;
        let deviation = (trace - 1.0).abs();
        if deviation > tolerance::UNIT_TRACE || deviation.is_nan() {
            return Err(Error::TraceNotOne { trace, deviation });
        }
        let min_eigenvalue = matrix.eigenvalues_hermitian()[0];
        if min_eigenvalue < -tolerance::PSD {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(Self(matrix))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self(psi.projector())
    }

    /// Diagonal state from a probability vector (a classical mixture).
    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_real_diagonal(probabilities))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// tr(rho^2)
    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0).re
    }

    /// Projector onto the eigenvectors whose eigenvalue exceeds the support
    /// threshold.
    pub fn support_projector(&self) -> ComplexMatrix {
        let eig = self.0.hermitian_eigen();
        let mut p = ComplexMatrix::zeros(self.dim());
        for (value, vector) in eig.values.iter().zip(&eig.vectors) {
            if *value > tolerance::SUPPORT_EIGENVALUE {
                p = &p + &ComplexMatrix::outer(vector, vector);
            }
        }
        p
    }
}

impl TryFrom<ComplexMatrix> for DensityMatrix {
    type Error = Error;

    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<DensityMatrix> for ComplexMatrix {
    fn from(d: DensityMatrix) -> Self {
        d.0
    }
}

/// A Hermitian matrix with spectrum in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct Effect(ComplexMatrix);

impl Effect {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        check_hermitian(&matrix)?;
        let eig = matrix.eigenvalues_hermitian();
        let (min_eigenvalue, max_eigenvalue) = (eig[0], eig[eig.len() - 1]);
        if min_eigenvalue < -tolerance::EFFECT_BOUNDS
            || max_eigenvalue > 1.0 + tolerance::EFFECT_BOUNDS
        {
            return Err(Error::EffectOutOfRange {
                min_eigenvalue,
                max_eigenvalue,
            });
        }
        Ok(Self(matrix))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    pub fn projector(psi: &PureState) -> Self {
        Self(psi.projector())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

impl TryFrom<ComplexMatrix> for Effect {
    type Error = Error;

    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<Effect> for ComplexMatrix {
    fn from(e: Effect) -> Self {
        e.0
    }
}

/// A positive-operator-valued measure: effects summing to the identity, one
/// per labelled outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PovmRepr", into = "PovmRepr")]
pub struct Povm {
    label: String,
    effects: Vec<Effect>,
    outcome_labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PovmRepr {
    label: String,
    effects: Vec<Effect>,
    outcome_labels: Vec<String>,
}

impl Povm {
    pub fn new(
        label: impl Into<String>,
        effects: Vec<Effect>,
        outcome_labels: Vec<String>,
    ) -> Result<Self> {
        let first = effects.first().ok_or(Error::EmptyPovm)?;
        let dim = first.dim();
        if outcome_labels.len() != effects.len() {
            return Err(Error::LengthMismatch {
                expected: effects.len(),
                found: outcome_labels.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in &outcome_labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        let mut sum = ComplexMatrix::zeros(dim);
        for e in &effects {
            check_dims(dim, e.dim())?;
            sum = &sum + e.matrix();
        }
        let deviation = sum.max_abs_diff(&ComplexMatrix::identity(dim));
        if deviation > tolerance::POVM_COMPLETENESS || deviation.is_nan() {
            return Err(Error::PovmIncomplete { deviation });
        }
        Ok(Self {
            label: label.into(),
            effects,
            outcome_labels,
        })
    }

    /// Outcome labels default to `"0"`, `"1"`, ...
    pub fn with_indexed_labels(label: impl Into<String>, effects: Vec<Effect>) -> Result<Self> {
        let labels = (0..effects.len()).map(|i| i.to_string()).collect();
        Self::new(label, effects, labels)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn outcome_labels(&self) -> &[String] {
        &self.outcome_labels
    }

    pub fn outcome_count(&self) -> usize {
        self.effects.len()
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }
}

impl TryFrom<PovmRepr> for Povm {
    type Error = Error;

    fn try_from(r: PovmRepr) -> Result<Self> {
        Self::new(r.label, r.effects, r.outcome_labels)
    }
}

impl From<Povm> for PovmRepr {
    fn from(p: Povm) -> Self {
        PovmRepr {
            label: p.label,
            effects: p.effects,
            outcome_labels: p.outcome_labels,
        }
    }
}

/// A unit complex vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PureRepr", into = "PureRepr")]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct PureRepr(#[serde(with = "matrix::complex_vec")] Vec<Complex64>);

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::ShapeMismatch("pure state needs at least one amplitude".into()));
        }
        let deviation = (norm_sqr(&amplitudes) - 1.0).abs();
        if deviation > tolerance::PURE_NORM || deviation.is_nan() {
            return Err(Error::NotNormalized { deviation });
        }
        Ok(Self { amplitudes })
    }

    /// Rescale a nonzero vector to unit norm.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = norm_sqr(&amplitudes).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { deviation: 1.0 });
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self::new(amplitudes)
    }

    /// Computational basis vector `|k>`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[k] = Complex64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }
}

impl TryFrom<PureRepr> for PureState {
    type Error = Error;

    fn try_from(r: PureRepr) -> Result<Self> {
        Self::new(r.0)
    }
}

impl From<PureState> for PureRepr {
    fn from(p: PureState) -> Self {
        PureRepr(p.amplitudes)
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// A trace-preserving map in Kraus form, `rho -> sum_k K_k rho K_k^dag`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformation {
    label: String,
    kraus_ops: Vec<ComplexMatrix>,
}

impl Transformation {
    pub fn new(label: impl Into<String>, kraus_ops: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus_ops
            .first()
            .ok_or_else(|| Error::ShapeMismatch("Kraus set must be nonempty".into()))?;
        let dim = first.dim();
        let mut sum = ComplexMatrix::zeros(dim);
        for k in &kraus_ops {
            check_dims(dim, k.dim())?;
            sum = &sum + &(&k.adjoint() * k);
        }
        let deviation = sum.max_abs_diff(&ComplexMatrix::identity(dim));
        if deviation > tolerance::TRACE_PRESERVING || deviation.is_nan() {
            return Err(Error::NotTracePreserving { deviation });
        }
        Ok(Self {
            label: label.into(),
            kraus_ops,
        })
    }

    pub fn unitary(label: impl Into<String>, u: ComplexMatrix) -> Result<Self> {
        Self::new(label, vec![u])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.kraus_ops
    }

    pub fn dim(&self) -> usize {
        self.kraus_ops[0].dim()
    }

    /// Kraus set of "apply `self`, then `next`": `{ N_j K_i }`.
    pub fn then(&self, next: &Transformation) -> Result<Transformation> {
        check_dims(self.dim(), next.dim())?;
        let mut ops = Vec::with_capacity(self.kraus_ops.len() * next.kraus_ops.len());
        for n in &next.kraus_ops {
            for k in &self.kraus_ops {
                ops.push(n * k);
            }
        }
        Transformation::new(format!("{}*{}", next.label, self.label), ops)
    }
}

/// Arbitrary linear map on matrices, given as an `n^2 x n^2` complex matrix
/// acting on the row-major vectorization of `rho`. Its outputs are
/// re-validated, so an invalid image is an error rather than a state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    label: String,
    dim: usize,
    superop: ComplexMatrix,
}

impl LinearMap {
    pub fn new(label: impl Into<String>, dim: usize, superop: ComplexMatrix) -> Result<Self> {
        check_dims(dim * dim, superop.dim())?;
        Ok(Self {
            label: label.into(),
            dim,
            superop,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dims(self.dim, rho.dim())?;
        let out = self.superop.apply(rho.matrix().entries());
        let m = ComplexMatrix::from_entries(self.dim, out)?;
        DensityMatrix::new(m).map_err(|e| Error::InvalidMapOutput(Box::new(e)))
    }
}

/// `Re tr(E rho)`, clamped into [0, 1] within [`tolerance::CLAMP`].
pub fn trace_probability(effect: &Effect, rho: &DensityMatrix) -> Result<f64> {
    check_dims(effect.dim(), rho.dim())?;
    tolerance::clamp_probability(effect.matrix().trace_product(rho.matrix()).re)
}

/// Trace-formula probabilities for every outcome of `m`.
pub fn outcome_distribution(m: &Povm, rho: &DensityMatrix) -> Result<Vec<f64>> {
    m.effects().iter().map(|e| trace_probability(e, rho)).collect()
}

/// `|<psi_i|psi_k>|^2`
pub fn born_probability(psi_i: &PureState, psi_k: &PureState) -> Result<f64> {
    check_dims(psi_i.dim(), psi_k.dim())?;
    Ok(psi_i.inner(psi_k).norm_sqr())
}

/// `sum_i values[i] * P(O_i | M, rho)`
pub fn expectation_value(values: &[f64], m: &Povm, rho: &DensityMatrix) -> Result<f64> {
    if values.len() != m.outcome_count() {
        return Err(Error::LengthMismatch {
            expected: m.outcome_count(),
            found: values.len(),
        });
    }
    let probs = outcome_distribution(m, rho)?;
    Ok(values.iter().zip(&probs).map(|(l, p)| l * p).sum())
}

/// Observable `sum_i values[i] E_i` of a POVM with real outcome values.
pub fn observable(values: &[f64], m: &Povm) -> Result<ComplexMatrix> {
    if values.len() != m.outcome_count() {
        return Err(Error::LengthMismatch {
            expected: m.outcome_count(),
            found: values.len(),
        });
    }
    let mut a = ComplexMatrix::zeros(m.dim());
    for (l, e) in values.iter().zip(m.effects()) {
        a = &a + &e.matrix().scale_real(*l);
    }
    Ok(a)
}

pub fn apply_transformation(t: &Transformation, rho: &DensityMatrix) -> Result<DensityMatrix> {
    check_dims(t.dim(), rho.dim())?;
    let mut out = ComplexMatrix::zeros(rho.dim());
    for k in t.kraus_ops() {
        out = &out + &(&(k * rho.matrix()) * &k.adjoint());
    }
    // Kraus form keeps the state legal up to rounding; re-validation only
    // catches numerically degenerate inputs.
    DensityMatrix::new(out.hermitian_part())
}

/// Rank-1 projective measurement onto an orthonormal basis.
pub fn projective_measurement(label: impl Into<String>, vectors: &[PureState]) -> Result<Povm> {
    let dim = vectors
        .first()
        .map(PureState::dim)
        .ok_or(Error::EmptyPovm)?;
    for v in vectors {
        check_dims(dim, v.dim())?;
    }
    if vectors.len() != dim {
        return Err(Error::LengthMismatch {
            expected: dim,
            found: vectors.len(),
        });
    }
    let mut deviation: f64 = 0.0;
    for (a, va) in vectors.iter().enumerate() {
        for (b, vb) in vectors.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            deviation = deviation.max((va.inner(vb) - Complex64::new(target, 0.0)).norm());
        }
    }
    if deviation > tolerance::ORTHONORMAL {
        return Err(Error::NotOrthonormal { deviation });
    }
    Povm::with_indexed_labels(label, vectors.iter().map(Effect::projector).collect())
}

/// Standard qubit states and measurements used throughout tests and examples.
pub mod qubit {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn plus_z() -> PureState {
        PureState::basis(2, 0)
    }

    pub fn minus_z() -> PureState {
        PureState::basis(2, 1)
    }

    pub fn plus_x() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(vec![c(h, 0.0), c(h, 0.0)]).unwrap()
    }

    pub fn minus_x() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(vec![c(h, 0.0), c(-h, 0.0)]).unwrap()
    }

    pub fn plus_y() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(vec![c(h, 0.0), c(0.0, h)]).unwrap()
    }

    pub fn minus_y() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(vec![c(h, 0.0), c(0.0, -h)]).unwrap()
    }

    pub fn z_measurement() -> Povm {
        projective_measurement("z", &[plus_z(), minus_z()]).unwrap()
    }

    pub fn x_measurement() -> Povm {
        projective_measurement("x", &[plus_x(), minus_x()]).unwrap()
    }

    pub fn y_measurement() -> Povm {
        projective_measurement("y", &[plus_y(), minus_y()]).unwrap()
    }

    /// Density matrix `(I + r . sigma) / 2` for a Bloch vector with |r| <= 1.
    pub fn from_bloch(r: [f64; 3]) -> Result<DensityMatrix> {
        let [x, y, z] = r;
        let m = ComplexMatrix::from_rows(&[
            vec![c((1.0 + z) / 2.0, 0.0), c(x / 2.0, -y / 2.0)],
            vec![c(x / 2.0, y / 2.0), c((1.0 - z) / 2.0, 0.0)],
        ])?;
        DensityMatrix::new(m)
    }

    pub fn bloch_vector(rho: &DensityMatrix) -> [f64; 3] {
        let m = rho.matrix();
        [2.0 * m.get(1, 0).re, 2.0 * m.get(1, 0).im, (m.get(0, 0) - m.get(1, 1)).re]
    }

    /// Symmetric three-outcome POVM `{(2/3)|phi_k><phi_k|}` with Bloch
    /// vectors at 120 degrees in the x-z plane.
    pub fn trine() -> Povm {
        let effects = (0..3)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                let (half_s, half_c) = (angle / 2.0).sin_cos();
                let phi = PureState::new(vec![c(half_c, 0.0), c(half_s, 0.0)]).unwrap();
                Effect::new(phi.projector().scale_real(2.0 / 3.0)).unwrap()
            })
            .collect();
        Povm::with_indexed_labels("trine", effects).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::qubit::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn validate_density_examples() {
        assert!(DensityMatrix::new(ComplexMatrix::identity(2).scale_real(0.5)).is_ok());
        assert!(DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[1.0, 0.0])).is_ok());
        match DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.6, 0.6])) {
            Err(Error::TraceNotOne { trace, .. }) => assert_abs_diff_eq!(trace, 1.2, epsilon = 1e-15),
            other => panic!("expected TraceNotOne, got {other:?}"),
        }
    }

    #[test]
    fn validate_density_rejections_name_magnitude() {
        let non_herm = ComplexMatrix::from_rows(&[
            vec![c(0.5, 0.0), c(0.1, 0.0)],
            vec![c(0.0, 0.0), c(0.5, 0.0)],
        ])
        .unwrap();
        match DensityMatrix::new(non_herm) {
            Err(Error::NotHermitian { deviation }) => assert_abs_diff_eq!(deviation, 0.1, epsilon = 1e-15),
            other => panic!("{other:?}"),
        }
        match DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[1.5, -0.5])) {
            Err(Error::NotPositive { min_eigenvalue }) => {
                assert_abs_diff_eq!(min_eigenvalue, -0.5, epsilon = 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_probability_examples() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let e0 = Effect::projector(&plus_z());
        assert_abs_diff_eq!(trace_probability(&e0, &mixed).unwrap(), 0.5, epsilon = 1e-15);
        let rho = DensityMatrix::from_pure(&plus_x());
        assert_abs_diff_eq!(trace_probability(&Effect::identity(2), &rho).unwrap(), 1.0, epsilon = 1e-15);
        // oracle: |<+x|+z>|^2 computed from amplitudes directly
        let plus = plus_x();
        let direct = plus.amplitudes()[0].norm_sqr();
        let p = trace_probability(&Effect::projector(&plus), &DensityMatrix::from_pure(&plus_z())).unwrap();
        assert_abs_diff_eq!(p, direct, epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        assert!(matches!(
            trace_probability(&Effect::identity(3), &mixed),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn outcome_distribution_examples() {
        let z = z_measurement();
        let d = outcome_distribution(&z, &DensityMatrix::maximally_mixed(2)).unwrap();
        assert_eq!(d.len(), 2);
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-15);
        let d = outcome_distribution(&z, &DensityMatrix::from_pure(&plus_z())).unwrap();
        assert_eq!(d, vec![1.0, 0.0]);
        let d = outcome_distribution(&trine(), &DensityMatrix::maximally_mixed(2)).unwrap();
        for p in d {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn born_examples() {
        let a = plus_x();
        assert_abs_diff_eq!(born_probability(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(born_probability(&plus_x(), &minus_x()).unwrap(), 0.0);
        assert_abs_diff_eq!(born_probability(&plus_x(), &plus_z()).unwrap(), 0.5, epsilon = 1e-15);
        assert!(born_probability(&plus_x(), &PureState::basis(3, 0)).is_err());
    }

    #[test]
    fn expectation_examples() {
        let z = z_measurement();
        let v = [1.0, -1.0];
        assert_abs_diff_eq!(
            expectation_value(&v, &z, &DensityMatrix::maximally_mixed(2)).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            expectation_value(&v, &z, &DensityMatrix::from_pure(&plus_z())).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let rho = from_bloch([0.3, -0.2, 0.5]).unwrap();
        let t = trine();
        let probs = outcome_distribution(&x_measurement(), &rho).unwrap();
        assert_abs_diff_eq!(
            expectation_value(&[2.0, 3.0], &x_measurement(), &rho).unwrap(),
            2.0 * probs[0] + 3.0 * probs[1],
            epsilon = 1e-15
        );
        assert!(matches!(
            expectation_value(&[1.0, 2.0], &t, &rho),
            Err(Error::LengthMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn expectation_matches_observable_sandwich() {
        let psi = PureState::normalized(vec![c(0.3, 0.1), c(-0.4, 0.8)]).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let values = [0.7, -1.3];
        let m = x_measurement();
        let a = observable(&values, &m).unwrap();
        let sandwich: Complex64 = psi
            .amplitudes()
            .iter()
            .zip(a.apply(psi.amplitudes()))
            .map(|(p, ap)| p.conj() * ap)
            .sum();
        assert_abs_diff_eq!(expectation_value(&values, &m, &rho).unwrap(), sandwich.re, epsilon = 1e-10);
    }

    #[test]
    fn transformation_examples() {
        let rho = from_bloch([0.1, 0.2, 0.3]).unwrap();
        let id = Transformation::new("id", vec![ComplexMatrix::identity(2)]).unwrap();
        assert!(apply_transformation(&id, &rho).unwrap().matrix().max_abs_diff(rho.matrix()) < 1e-15);

        let x = ComplexMatrix::named("pauli:x").unwrap();
        let flip = Transformation::unitary("flip", x.clone()).unwrap();
        let out = apply_transformation(&flip, &DensityMatrix::from_pure(&plus_z())).unwrap();
        // oracle: X|0><0|X^dag = |1><1|
        let direct = &(&x * &plus_z().projector()) * &x.adjoint();
        assert!(out.matrix().max_abs_diff(&direct) < 1e-15);
        assert!(out.matrix().max_abs_diff(&minus_z().projector()) < 1e-15);

        let paulis: Vec<_> = ["i", "x", "y", "z"]
            .iter()
            .map(|p| ComplexMatrix::named(&format!("pauli:{p}")).unwrap().scale_real(0.5))
            .collect();
        let depol = Transformation::new("depolarize", paulis).unwrap();
        let out = apply_transformation(&depol, &rho).unwrap();
        assert!(out.matrix().max_abs_diff(DensityMatrix::maximally_mixed(2).matrix()) < 1e-15);
    }

    #[test]
    fn non_trace_preserving_kraus_rejected() {
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        assert!(matches!(
            Transformation::new("leaky", vec![half]),
            Err(Error::NotTracePreserving { .. })
        ));
    }

    #[test]
    fn linear_map_output_revalidated() {
        // transpose is positive and trace preserving: accepted
        let mut t = ComplexMatrix::zeros(4);
        let mut transpose = Vec::new();
        for r in 0..2 {
            for col in 0..2 {
                transpose.push((r * 2 + col, col * 2 + r));
            }
        }
        let mut entries = t.entries().to_vec();
        for (out, inp) in &transpose {
            entries[out * 4 + inp] = c(1.0, 0.0);
        }
        t = ComplexMatrix::from_entries(4, entries).unwrap();
        let map = LinearMap::new("transpose", 2, t).unwrap();
        let rho = from_bloch([0.0, 0.6, 0.0]).unwrap();
        let out = map.apply(&rho).unwrap();
        assert_abs_diff_eq!(bloch_vector(&out)[1], -0.6, epsilon = 1e-15);

        // doubling the state breaks unit trace: rejected
        let double = LinearMap::new("double", 2, ComplexMatrix::identity(4).scale_real(2.0)).unwrap();
        let err = double.apply(&rho).unwrap_err();
        assert_eq!(err.invariant(), Some("unit_trace"));
    }

    #[test]
    fn projective_measurement_examples() {
        let z = projective_measurement("z", &[plus_z(), minus_z()]).unwrap();
        assert_eq!(z.effects()[0].matrix(), &ComplexMatrix::named("proj:2:0").unwrap());
        let x = projective_measurement("x", &[plus_x(), minus_x()]).unwrap();
        let d = outcome_distribution(&x, &DensityMatrix::from_pure(&plus_x())).unwrap();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-15);
        assert!(matches!(
            projective_measurement("bad", &[plus_z(), plus_z()]),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn povm_validation() {
        let e = Effect::projector(&plus_z());
        assert!(matches!(
            Povm::with_indexed_labels("m", vec![e.clone()]),
            Err(Error::PovmIncomplete { .. })
        ));
        assert!(matches!(
            Povm::new("m", vec![e.clone(), Effect::projector(&minus_z())], vec!["a".into(), "a".into()]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(matches!(Povm::with_indexed_labels("m", vec![]), Err(Error::EmptyPovm)));
        assert!(matches!(
            Effect::new(ComplexMatrix::identity(2).scale_real(1.5)),
            Err(Error::EffectOutOfRange { .. })
        ));
    }

    #[test]
    fn povm_json_roundtrip() {
        let t = trine();
        let js = serde_json::to_string(&t).unwrap();
        let back: Povm = serde_json::from_str(&js).unwrap();
        assert_eq!(back.outcome_count(), 3);
        let bad = serde_json::json!({
            "label": "m",
            "effects": [{"dim": 2, "entries": [[1.0,0.0],[0.0,0.0],[0.0,0.0],[0.0,0.0]]}],
            "outcome_labels": ["0"]
        });
        assert!(serde_json::from_value::<Povm>(bad).is_err());
    }

    #[test]
    fn transformation_composition() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let had = ComplexMatrix::from_rows(&[vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]]).unwrap();
        let amp = Transformation::new(
            "amplitude-damping",
            vec![
                ComplexMatrix::from_real_diagonal(&[1.0, 0.6f64.sqrt()]),
                ComplexMatrix::unit(2, 0, 1).scale_real(0.4f64.sqrt()),
            ],
        )
        .unwrap();
        let u = Transformation::unitary("h", had).unwrap();
        let rho = from_bloch([0.2, -0.5, 0.4]).unwrap();
        let stepwise = apply_transformation(&u, &apply_transformation(&amp, &rho).unwrap()).unwrap();
        let composed = apply_transformation(&amp.then(&u).unwrap(), &rho).unwrap();
        assert!(stepwise.matrix().max_abs_diff(composed.matrix()) < 1e-10);
    }
}
