//! Real-vector realization of states and effects.
//!
//! A state `rho` becomes `s_a = tr(B_a rho)` and an effect `E` becomes
//! `o_a = tr(B_a E)` for a Hilbert-Schmidt orthonormal Hermitian basis
//! `{B_a}`, so `o . s = tr(E rho)` with no metric factor. The same vector
//! machinery carries classical simplices and custom systems given by finite
//! extremal generating sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, Effect, Povm};
use crate::matrix::{gell_mann, ComplexMatrix};
use crate::tolerance;

/// Orthonormal Hermitian basis of an `n x n` matrix space (or, for
/// [`HermitianBasis::diagonal`], of its diagonal subalgebra).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianBasis {
    dim: usize,
    elements: Vec<ComplexMatrix>,
}

impl HermitianBasis {
    /// Validates orthonormality and the `B_0 = I/sqrt(n)`, traceless-rest
    /// convention.
    pub fn new(dim: usize, elements: Vec<ComplexMatrix>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::BadBasis("no elements".into()));
        }
        for (a, ba) in elements.iter().enumerate() {
            if ba.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ba.dim(),
                });
            }
            if ba.hermiticity_deviation() > tolerance::HERMITIAN {
                return Err(Error::BadBasis(format!("element {a} is not Hermitian")));
            }
            for (b, bb) in elements.iter().enumerate().skip(a) {
                let target = if a == b { 1.0 } else { 0.0 };
                let dev = (ba.trace_product(bb).re - target).abs();
                if dev > tolerance::BASIS {
                    return Err(Error::BadBasis(format!(
                        "tr(B_{a} B_{b}) off by {dev:.3e}"
                    )));
                }
            }
        }
        let id = ComplexMatrix::identity(dim).scale_real(1.0 / (dim as f64).sqrt());
        if elements[0].max_abs_diff(&id) > tolerance::BASIS {
            return Err(Error::BadBasis("B_0 must be I/sqrt(n)".into()));
        }
        for (a, ba) in elements.iter().enumerate().skip(1) {
            if ba.trace().norm() > tolerance::BASIS {
                return Err(Error::BadBasis(format!("element {a} is not traceless")));
            }
        }
        Ok(Self { dim, elements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of real coordinates.
    pub fn real_dim(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    /// Basis of the diagonal matrices: `I/sqrt(k)` followed by the diagonal
    /// Gell-Mann matrices over `sqrt(2)`. Spans exactly the classical
    /// (commuting) states of a `k`-level system.
    pub fn diagonal(k: usize) -> Self {
        let mut elements = vec![ComplexMatrix::identity(k).scale_real(1.0 / (k as f64).sqrt())];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for l in 1..k {
            elements.push(gell_mann(k, l, l).expect("valid index").scale_real(s));
        }
        Self { dim: k, elements }
    }
}

/// The standard embedding basis for `n`-level systems.
///
/// Order: `I/sqrt(n)`; then for each pair `j < k` in lexicographic order the
/// symmetric and antisymmetric Gell-Mann matrices; then the diagonal ones
/// for `l = 1..n-1`. All but the first are divided by `sqrt(2)`. For `n = 2`
/// this is `{I, sigma_x, sigma_y, sigma_z} / sqrt(2)`.
pub fn standard_basis(n: usize) -> HermitianBasis {
    assert!(n >= 1, "basis dimension must be positive");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut elements = vec![ComplexMatrix::identity(n).scale_real(1.0 / (n as f64).sqrt())];
    for j in 0..n {
        for k in (j + 1)..n {
            elements.push(gell_mann(n, j, k).expect("valid index").scale_real(s));
            elements.push(gell_mann(n, k, j).expect("valid index").scale_real(s));
        }
    }
    for l in 1..n {
        elements.push(gell_mann(n, l, l).expect("valid index").scale_real(s));
    }
    HermitianBasis { dim: n, elements }
}

/// Real coordinates of a preparation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GptState {
    coords: Vec<f64>,
}

/// Real coordinates of a measurement outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GptEffect {
    coords: Vec<f64>,
}

impl GptState {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn real_dim(&self) -> usize {
        self.coords.len()
    }
}

impl GptEffect {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn real_dim(&self) -> usize {
        self.coords.len()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.coords.iter().map(|c| c * factor).collect())
    }
}

fn embed_matrix(m: &ComplexMatrix, basis: &HermitianBasis) -> Result<Vec<f64>> {
    if m.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: m.dim(),
        });
    }
    basis
        .elements()
        .iter()
        .map(|b| {
            let z = b.trace_product(m);
            if z.im.abs() > tolerance::IMAG_RESIDUE {
                return Err(Error::ComplexResidue { imag: z.im });
            }
            Ok(z.re)
        })
        .collect()
}

fn unembed_matrix(coords: &[f64], basis: &HermitianBasis) -> Result<ComplexMatrix> {
    if coords.len() != basis.real_dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.real_dim(),
            found: coords.len(),
        });
    }
    let mut m = ComplexMatrix::zeros(basis.dim());
    for (c, b) in coords.iter().zip(basis.elements()) {
        m = &m + &b.scale_real(*c);
    }
    Ok(m)
}

pub fn embed_state(rho: &DensityMatrix, basis: &HermitianBasis) -> Result<GptState> {
    embed_matrix(rho.matrix(), basis).map(GptState::new)
}

pub fn embed_effect(e: &Effect, basis: &HermitianBasis) -> Result<GptEffect> {
    embed_matrix(e.matrix(), basis).map(GptEffect::new)
}

/// Inverse of [`embed_state`]; the result is re-validated.
pub fn unembed_state(s: &GptState, basis: &HermitianBasis) -> Result<DensityMatrix> {
    DensityMatrix::new(unembed_matrix(s.coords(), basis)?)
}

pub fn unembed_effect(o: &GptEffect, basis: &HermitianBasis) -> Result<Effect> {
    Effect::new(unembed_matrix(o.coords(), basis)?)
}

/// `o . s`, with the same clamping policy as the trace formula.
pub fn vector_probability(o: &GptEffect, s: &GptState) -> Result<f64> {
    if o.real_dim() != s.real_dim() {
        return Err(Error::DimensionMismatch {
            expected: o.real_dim(),
            found: s.real_dim(),
        });
    }
    tolerance::clamp_probability(dot(o.coords(), s.coords()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which family a vector space of states belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    Classical { k: usize },
    Quantum { n: usize },
    Custom { dim: usize },
}

impl SystemKind {
    pub fn real_dim(&self) -> usize {
        match *self {
            SystemKind::Classical { k } => k,
            SystemKind::Quantum { n } => n * n,
            SystemKind::Custom { dim } => dim,
        }
    }

    /// Embedding basis, for kinds that have a matrix realization.
    pub fn basis(&self) -> Option<HermitianBasis> {
        match *self {
            SystemKind::Classical { k } => Some(HermitianBasis::diagonal(k)),
            SystemKind::Quantum { n } => Some(standard_basis(n)),
            SystemKind::Custom { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            SystemKind::Classical { k } => format!("classical({k})"),
            SystemKind::Quantum { n } => format!("quantum({n})"),
            SystemKind::Custom { dim } => format!("custom({dim})"),
        }
    }
}

/// A measurement as a labelled list of effect vectors on one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GptMeasurement {
    pub label: String,
    pub system: SystemKind,
    pub outcome_labels: Vec<String>,
    pub effects: Vec<GptEffect>,
}

impl GptMeasurement {
    pub fn new(
        label: impl Into<String>,
        system: SystemKind,
        outcome_labels: Vec<String>,
        effects: Vec<GptEffect>,
    ) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::EmptyPovm);
        }
        if outcome_labels.len() != effects.len() {
            return Err(Error::LengthMismatch {
                expected: effects.len(),
                found: outcome_labels.len(),
            });
        }
        let dim = system.real_dim();
        for e in &effects {
            if e.real_dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.real_dim(),
                });
            }
        }
        Ok(Self {
            label: label.into(),
            system,
            outcome_labels,
            effects,
        })
    }

    pub fn outcome_count(&self) -> usize {
        self.effects.len()
    }

    /// Outcome probabilities `o_i . s`.
    pub fn distribution(&self, s: &GptState) -> Result<Vec<f64>> {
        self.effects.iter().map(|o| vector_probability(o, s)).collect()
    }

    /// `sum_i o_i`, which equals the unit effect for a complete measurement.
    pub fn effect_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.system.real_dim()];
        for e in &self.effects {
            for (acc, c) in sum.iter_mut().zip(e.coords()) {
                *acc += c;
            }
        }
        sum
    }
}

/// Embed a POVM of an `n`-level quantum system.
pub fn embed_povm(povm: &Povm, basis: &HermitianBasis) -> Result<GptMeasurement> {
    let effects = povm
        .effects()
        .iter()
        .map(|e| embed_effect(e, basis))
        .collect::<Result<Vec<_>>>()?;
    GptMeasurement::new(
        povm.label(),
        SystemKind::Quantum { n: basis.dim() },
        povm.outcome_labels().to_vec(),
        effects,
    )
}

/// A system given by its kind, a finite set of extremal states (empty for
/// quantum systems, whose extremals are all pure states) and measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GptSystem {
    #[serde(flatten)]
    pub kind: SystemKind,
    pub extremal_states: Vec<GptState>,
    pub measurements: Vec<GptMeasurement>,
}

impl GptSystem {
    /// Checks that every measurement yields a normalized non-negative
    /// distribution on every extremal state.
    pub fn new(
        kind: SystemKind,
        extremal_states: Vec<GptState>,
        measurements: Vec<GptMeasurement>,
    ) -> Result<Self> {
        let dim = kind.real_dim();
        for s in &extremal_states {
            if s.real_dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.real_dim(),
                });
            }
        }
        if let SystemKind::Quantum { n } = kind {
            let target = 1.0 / (n as f64).sqrt();
            for (i, s) in extremal_states.iter().enumerate() {
                let dev = (s.coords()[0] - target).abs();
                if dev > tolerance::GPT_NORMALIZATION {
                    return Err(Error::BadSystem(format!(
                        "state {i}: normalization coordinate off by {dev:.3e}"
                    )));
                }
            }
        }
        for m in &measurements {
            if m.system != kind {
                return Err(Error::SystemMismatch(m.system.describe(), kind.describe()));
            }
            for (i, s) in extremal_states.iter().enumerate() {
                let raw: Vec<f64> = m.effects.iter().map(|o| dot(o.coords(), s.coords())).collect();
                let total: f64 = raw.iter().sum();
                let worst = raw.iter().copied().fold(f64::INFINITY, f64::min);
                if worst < -tolerance::GPT_NORMALIZATION
                    || (total - 1.0).abs() > tolerance::GPT_NORMALIZATION
                {
                    return Err(Error::BadSystem(format!(
                        "measurement {:?} on state {i}: min p = {worst:.3e}, sum = {total}",
                        m.label
                    )));
                }
            }
        }
        Ok(Self {
            kind,
            extremal_states,
            measurements,
        })
    }

    pub fn measurement(&self, label: &str) -> Option<&GptMeasurement> {
        self.measurements.iter().find(|m| m.label == label)
    }

    /// Index of a measurement after which the two extremal states can be
    /// told apart with certainty: no outcome has positive probability under
    /// both.
    pub fn distinguishing_measurement(&self, a: &GptState, b: &GptState) -> Result<Option<usize>> {
        for (idx, m) in self.measurements.iter().enumerate() {
            let pa = m.distribution(a)?;
            let pb = m.distribution(b)?;
            let shared: f64 = pa.iter().zip(&pb).map(|(x, y)| x.min(*y)).sum();
            if shared <= tolerance::DISTINGUISHABLE_OVERLAP {
                return Ok(Some(idx));
            }
        }
        Ok(None)
    }
}

/// The `k`-outcome classical system: states are probability vectors
/// embedded via the diagonal basis, extremals are the simplex vertices, and
/// the fine-grained measurement reads off each coordinate.
pub fn classical_system(k: usize) -> GptSystem {
    assert!(k >= 2, "classical system needs k >= 2");
    let basis = HermitianBasis::diagonal(k);
    let kind = SystemKind::Classical { k };
    let vertices = (0..k)
        .map(|i| {
            let mut p = vec![0.0; k];
            p[i] = 1.0;
            classical_state(&p, &basis)
        })
        .collect();
    let fine_effects = (0..k)
        .map(|i| GptEffect::new(embed_matrix(&ComplexMatrix::unit(k, i, i), &basis).expect("dims")))
        .collect();
    let fine = GptMeasurement::new(
        "fine",
        kind,
        (0..k).map(|i| i.to_string()).collect(),
        fine_effects,
    )
    .expect("well-formed");
    GptSystem::new(kind, vertices, vec![fine]).expect("classical system is consistent")
}

/// Embed a probability vector as a classical state.
pub fn classical_state(p: &[f64], basis: &HermitianBasis) -> GptState {
    GptState::new(embed_matrix(&ComplexMatrix::from_real_diagonal(p), basis).expect("dims"))
}

/// An `n`-level quantum system with the given POVMs embedded.
pub fn quantum_system(n: usize, povms: &[Povm]) -> Result<GptSystem> {
    let basis = standard_basis(n);
    let ms = povms
        .iter()
        .map(|p| embed_povm(p, &basis))
        .collect::<Result<Vec<_>>>()?;
    GptSystem::new(SystemKind::Quantum { n }, Vec::new(), ms)
}

/// Outcome of [`perfectly_distinguishable`].
#[derive(Debug, Clone)]
pub struct Distinguishability {
    pub distinguishable: bool,
    /// `tr(rho1 rho2)`
    pub overlap: f64,
    /// Frobenius norm of the product of the two support projectors.
    pub support_product_norm: f64,
    /// Two-outcome projective measurement `{P_1, I - P_1}` onto the support
    /// of the first state, present when the states are distinguishable.
    pub witness: Option<Povm>,
}

/// Whether a single measurement can tell the two preparations apart with
/// certainty, i.e. whether their supports are orthogonal.
pub fn perfectly_distinguishable(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<Distinguishability> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho1.dim(),
            found: rho2.dim(),
        });
    }
    let overlap = rho1.matrix().trace_product(rho2.matrix()).re;
    let p1 = rho1.support_projector();
    let p2 = rho2.support_projector();
    let support_product_norm = (&p1 * &p2).frobenius_norm();
    let distinguishable = overlap <= tolerance::DISTINGUISHABLE_OVERLAP
        && support_product_norm <= tolerance::SUPPORT_PRODUCT;
    let witness = if distinguishable {
        let complement = &ComplexMatrix::identity(rho1.dim()) - &p1;
        let povm = Povm::new(
            "support",
            vec![Effect::new(p1)?, Effect::new(complement)?],
            vec!["first".into(), "second".into()],
        )?;
        debug_assert!(witness_is_sharp(&povm, rho1, rho2));
        Some(povm)
    } else {
        None
    };
    Ok(Distinguishability {
        distinguishable,
        overlap,
        support_product_norm,
        witness,
    })
}

fn witness_is_sharp(povm: &Povm, rho1: &DensityMatrix, rho2: &DensityMatrix) -> bool {
    let sharp = |p: f64| p.abs() <= tolerance::CLAMP || (p - 1.0).abs() <= tolerance::CLAMP;
    [rho1, rho2].iter().all(|rho| {
        povm.effects()
            .iter()
            .all(|e| sharp(e.matrix().trace_product(rho.matrix()).re))
    })
}
