use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by constructors and operations across the crate.
///
/// Validation variants carry the measured violation so a report can say by
/// how much an invariant was missed, not just that it was.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |a_ij - conj(a_ji)| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },

    #[error("trace is not one: tr = {trace}, |tr - 1| = {deviation:.3e}")]
    TraceNotOne { trace: f64, deviation: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue = {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("effect eigenvalues leave [0, 1]: min = {min_eigenvalue:.3e}, max = {max_eigenvalue:.3e}")]
    EffectOutOfRange {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("POVM effects do not sum to the identity: max deviation = {deviation:.3e}")]
    PovmIncomplete { deviation: f64 },

    #[error("POVM must contain at least one effect")]
    EmptyPovm,

    #[error("duplicate outcome label {0:?}")]
    DuplicateLabel(String),

    #[error("pure state is not normalized: |<psi|psi> - 1| = {deviation:.3e}")]
    NotNormalized { deviation: f64 },

    #[error("vectors are not orthonormal: max |<a|b> - delta_ab| = {deviation:.3e}")]
    NotOrthonormal { deviation: f64 },

    #[error("Kraus operators are not trace preserving: max |sum K^dag K - I| = {deviation:.3e}")]
    NotTracePreserving { deviation: f64 },

    #[error("linear map produced an invalid state: {0}")]
    InvalidMapOutput(Box<Error>),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("probability {value} lies outside [0, 1] beyond clamping tolerance")]
    ProbabilityOutOfRange { value: f64 },

    #[error("complex residue {imag:.3e} where a real value was expected")]
    ComplexResidue { imag: f64 },

    #[error("Hermitian basis invalid: {0}")]
    BadBasis(String),

    #[error("unknown named matrix {0:?}")]
    UnknownNamedMatrix(String),

    #[error("invalid GPT system: {0}")]
    BadSystem(String),

    #[error("mixture weights invalid: {0}")]
    BadWeights(String),

    #[error("dither matrix invalid: {0}")]
    BadDither(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("measurements belong to different systems: {0} vs {1}")]
    SystemMismatch(String, String),

    #[error("invalid prior specification: {0}")]
    BadSpec(String),

    #[error("grid prior supports n = 2 only, got n = {0}")]
    UnsupportedGrid(usize),

    #[error("unknown measurement {0:?}")]
    UnknownMeasurement(String),

    #[error("outcome index {outcome} out of range for measurement {measurement:?} with {count} outcomes")]
    OutcomeOutOfRange {
        measurement: String,
        outcome: usize,
        count: usize,
    },

    #[error("parameter point does not match the model: {0}")]
    ModelMismatch(String),

    #[error("every particle assigns probability zero to the data")]
    AllWeightsZero,

    #[error("invalid permutation: {0}")]
    BadPermutation(String),

    #[error("kind-preserving permutation changed the predictive by {difference:.3e}")]
    ExchangeabilityViolated { difference: f64 },
}

impl Error {
    /// Name of the invariant a numerical validation failure refers to, or
    /// `None` for structural and inference errors.
    pub fn invariant(&self) -> Option<&'static str> {
        Some(match self {
            Error::NotHermitian { .. } => "hermitian",
            Error::TraceNotOne { .. } => "unit_trace",
            Error::NotPositive { .. } => "positive_semidefinite",
            Error::EffectOutOfRange { .. } => "effect_bounds",
            Error::PovmIncomplete { .. } => "povm_completeness",
            Error::NotNormalized { .. } => "unit_norm",
            Error::NotOrthonormal { .. } => "orthonormality",
            Error::NotTracePreserving { .. } => "trace_preserving",
            Error::InvalidMapOutput(inner) => return inner.invariant(),
            Error::ProbabilityOutOfRange { .. } => "probability_range",
            Error::ComplexResidue { .. } => "real_valued",
            Error::BadBasis(_) => "basis_orthonormality",
            Error::BadSystem(_) => "gpt_system_normalization",
            Error::BadWeights(_) => "mixture_weights",
            Error::BadDither(_) => "column_stochastic",
            Error::ExchangeabilityViolated { .. } => "partial_exchangeability",
            _ => return None,
        })
    }
}
