//! Numerical tolerances, in one place. Constructors validate eagerly
//! against these; nothing else in the crate hard-codes a threshold.

use serde::Serialize;

/// max |a_ij - conj(a_ji)| for Hermitian matrices.
pub const HERMITIAN: f64 = 1e-10;
/// |tr rho - 1| for density matrices.
pub const UNIT_TRACE: f64 = 1e-10;
/// Lowest admissible eigenvalue of a positive semidefinite matrix.
pub const PSD: f64 = 1e-9;
/// Slack on the effect spectrum bounds 0 and 1.
pub const EFFECT_BOUNDS: f64 = 1e-9;
/// Entrywise |sum E_i - I| for POVMs.
pub const POVM_COMPLETENESS: f64 = 1e-9;
/// |<psi|psi> - 1| for pure states.
pub const PURE_NORM: f64 = 1e-12;
/// |<a|b> - delta_ab| for projective measurement vectors.
pub const ORTHONORMAL: f64 = 1e-10;
/// Entrywise |sum K^dag K - I| for Kraus sets.
pub const TRACE_PRESERVING: f64 = 1e-9;
/// A raw probability may be clamped into [0, 1] only within this distance.
pub const CLAMP: f64 = 1e-9;
/// |tr(B_a B_b) - delta_ab| and tracelessness of basis elements.
pub const BASIS: f64 = 1e-10;
/// Imaginary residue tolerated in quantities that must be real.
pub const IMAG_RESIDUE: f64 = 1e-12;
/// GPT normalization coordinate and per-system distribution checks.
pub const GPT_NORMALIZATION: f64 = 1e-10;
/// Mixture weights and dither columns must sum to one within this.
pub const STOCHASTIC: f64 = 1e-12;
/// Eigenvalues above this span the support of a state.
pub const SUPPORT_EIGENVALUE: f64 = 1e-9;
/// tr(rho1 rho2) bound for perfect distinguishability.
pub const DISTINGUISHABLE_OVERLAP: f64 = 1e-10;
/// Frobenius norm bound on the product of support projectors.
pub const SUPPORT_PRODUCT: f64 = 1e-8;
/// Ensemble weights normalize to one within this.
pub const ENSEMBLE_WEIGHTS: f64 = 1e-10;
/// Predictive agreement required of kind-preserving permutations.
pub const EXCHANGEABILITY: f64 = 1e-12;

/// Snapshot of the table, echoed into reports as provenance.
#[derive(Debug, Clone, Serialize)]
pub struct ToleranceTable {
    pub hermitian: f64,
    pub unit_trace: f64,
    pub psd: f64,
    pub effect_bounds: f64,
    pub povm_completeness: f64,
    pub pure_norm: f64,
    pub orthonormal: f64,
    pub trace_preserving: f64,
    pub clamp: f64,
    pub stochastic: f64,
    pub ensemble_weights: f64,
    pub exchangeability: f64,
    pub basis: f64,
    pub imag_residue: f64,
    pub gpt_normalization: f64,
    pub support_eigenvalue: f64,
    pub distinguishable_overlap: f64,
    pub support_product: f64,
}

pub fn table() -> ToleranceTable {
    ToleranceTable {
        hermitian: HERMITIAN,
        unit_trace: UNIT_TRACE,
        psd: PSD,
        effect_bounds: EFFECT_BOUNDS,
        povm_completeness: POVM_COMPLETENESS,
        pure_norm: PURE_NORM,
        orthonormal: ORTHONORMAL,
        trace_preserving: TRACE_PRESERVING,
        clamp: CLAMP,
        stochastic: STOCHASTIC,
        ensemble_weights: ENSEMBLE_WEIGHTS,
        exchangeability: EXCHANGEABILITY,
        basis: BASIS,
        imag_residue: IMAG_RESIDUE,
        gpt_normalization: GPT_NORMALIZATION,
        support_eigenvalue: SUPPORT_EIGENVALUE,
        distinguishable_overlap: DISTINGUISHABLE_OVERLAP,
        support_product: SUPPORT_PRODUCT,
    }
}

/// Clamp a raw probability into [0, 1], refusing values further than
/// [`CLAMP`] outside the interval.
pub fn clamp_probability(raw: f64) -> crate::Result<f64> {
    if !(-CLAMP..=1.0 + CLAMP).contains(&raw) {
        return Err(crate::Error::ProbabilityOutOfRange { value: raw });
    }
    Ok(raw.clamp(0.0, 1.0))
}
