//! Scenario files: a single JSON document describing a system, its
//! measurements, a prior, recorded data and queries; and the report the
//! `run` pipeline produces from it.
//!
//! The schema is documented in `docs/scenario-schema.md`. Failures are
//! classified so the CLI can map them onto exit codes: schema violations
//! (2), numerical validation failures naming an invariant (3) and inference
//! errors (4).

use std::collections::HashSet;
use std::fmt;
use std::time::Instant;

use indexmap::IndexMap;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::gpt::{
    classical_state, classical_system, embed_povm, embed_state, perfectly_distinguishable,
    unembed_effect, vector_probability, GptEffect, GptMeasurement, GptState, GptSystem, HermitianBasis,
    SystemKind,
};
use crate::hilbert::{outcome_distribution, projective_measurement, qubit, DensityMatrix, Effect, Povm, PureState};
use crate::inference::{
    exchangeability_check, partial_exch_predictive, posterior_update_with, predictive, pushforward,
    ExperimentRecord, MeasurementRegistry, Resampling,
};
use crate::knowledge::{dither_measurement, mix_measurements, DitherMatrix, MixtureWeights};
use crate::matrix::ComplexMatrix;
use crate::prior::{ensemble_statistics, sample_prior, ParamPoint, ParticleEnsemble, PriorKind, PriorSpec};
use crate::tolerance;

pub const SCHEMA: &str = "exchange-q/v1";

/// Why a scenario could not be validated or run.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// Malformed document or unresolved reference. `pointer` is a JSON
    /// pointer into the config.
    Schema { pointer: String, message: String },
    /// A constructor rejected a value; `invariant` names the check.
    Numerical {
        pointer: String,
        invariant: String,
        message: String,
    },
    /// Inference failed on valid inputs (e.g. every particle rules out the
    /// data).
    Inference { pointer: String, message: String },
    Io(String),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Schema { .. } => 2,
            ScenarioError::Numerical { .. } => 3,
            ScenarioError::Inference { .. } => 4,
            ScenarioError::Io(_) => 1,
        }
    }

    fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// Classify a library error raised while building the object at `pointer`.
    fn from_build(pointer: &str, err: Error) -> Self {
        match err.invariant() {
            Some(inv) => ScenarioError::Numerical {
                pointer: pointer.to_string(),
                invariant: inv.to_string(),
                message: err.to_string(),
            },
            None => ScenarioError::schema(pointer, err.to_string()),
        }
    }

    fn from_query(pointer: &str, err: Error) -> Self {
        ScenarioError::Inference {
            pointer: pointer.to_string(),
            message: err.to_string(),
        }
    }

    pub fn pointer(&self) -> &str {
        match self {
            ScenarioError::Schema { pointer, .. }
            | ScenarioError::Numerical { pointer, .. }
            | ScenarioError::Inference { pointer, .. } => pointer,
            ScenarioError::Io(_) => "",
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Schema { pointer, message } => write!(f, "schema violation at {pointer:?}: {message}"),
            ScenarioError::Numerical {
                pointer,
                invariant,
                message,
            } => write!(f, "invariant {invariant} failed at {pointer:?}: {message}"),
            ScenarioError::Inference { pointer, message } => write!(f, "inference error at {pointer:?}: {message}"),
            ScenarioError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

// ---------------------------------------------------------------------------
// config

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub states: IndexMap<String, StateConfig>,
    pub measurements: IndexMap<String, MeasurementConfig>,
    pub prior: PriorSpec,
    pub particle_count: usize,
    #[serde(default)]
    pub records: IndexMap<String, ExperimentRecord>,
    #[serde(default)]
    pub queries: Vec<QueryConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Quantum { n: usize },
    Classical { k: usize },
    Custom {
        dim: usize,
        extremal_states: Vec<Vec<f64>>,
        measurements: Vec<CustomMeasurementConfig>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomMeasurementConfig {
    pub label: String,
    #[serde(default)]
    pub outcome_labels: Option<Vec<String>>,
    pub effects: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    Matrix(ComplexMatrix),
    /// Amplitudes as `[re, im]` pairs.
    Pure(Vec<[f64; 2]>),
    Bloch([f64; 3]),
    Named(String),
    /// Classical probability vector.
    Probabilities(Vec<f64>),
    /// Raw GPT coordinates (custom systems).
    Coords(Vec<f64>),
}

/// An effect given either inline or by named constructor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Inline(ComplexMatrix),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementConfig {
    Povm {
        effects: Vec<MatrixSpec>,
        #[serde(default)]
        outcome_labels: Option<Vec<String>>,
    },
    Projective {
        vectors: Vec<Vec<[f64; 2]>>,
    },
    EffectVectors {
        effects: Vec<Vec<f64>>,
        #[serde(default)]
        outcome_labels: Option<Vec<String>>,
    },
    /// A measurement defined in the `system` block.
    System { label: String },
    Mixture { of: [String; 2], weights: Vec<f64> },
    Dither { of: String, matrix: Vec<Vec<f64>> },
    /// Outcome count only, for models over products of simplices.
    Outcomes { count: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum QueryConfig {
    Predictive {
        record: String,
    },
    Posterior {
        record: String,
        /// Measurements whose posterior predictive outcome distribution to
        /// report; defaults to none.
        #[serde(default)]
        next: Vec<String>,
        #[serde(default)]
        resample_ess_fraction: Option<f64>,
    },
    Distinguishability {
        states: [String; 2],
    },
    ExchangeabilityCheck {
        record: String,
        permutation: Vec<usize>,
    },
    EmbedDiagnostics {
        #[serde(default)]
        states: Option<Vec<String>>,
    },
    PartialExchPredictive {
        record: String,
    },
}

/// Convert a serde path into a JSON pointer.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        ScenarioError::schema(pointer, e.into_inner().to_string())
    })?;
    if config.schema != SCHEMA {
        return Err(ScenarioError::schema(
            "/schema",
            format!("expected {SCHEMA:?}, found {:?}", config.schema),
        ));
    }
    Ok(config)
}

pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// built scenario

#[derive(Debug, Clone)]
pub struct BuiltState {
    pub rho: Option<DensityMatrix>,
    pub gpt: GptState,
}

#[derive(Debug, Clone)]
pub struct BuiltMeasurement {
    pub construction: String,
    pub outcome_count: usize,
    pub gpt: Option<GptMeasurement>,
    /// Matrix form, for quantum measurements.
    pub povm: Option<Povm>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub system: GptSystem,
    pub basis: Option<HermitianBasis>,
    pub states: IndexMap<String, BuiltState>,
    pub measurements: IndexMap<String, BuiltMeasurement>,
    pub registry: MeasurementRegistry,
}

/// One row of the validation table.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub object: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub error: Option<ScenarioError>,
}

impl Check {
    fn pass(object: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            object: object.into(),
            passed: true,
            detail: detail.into(),
            error: None,
        }
    }

    fn fail(object: impl Into<String>, err: ScenarioError) -> Self {
        Self {
            object: object.into(),
            passed: false,
            detail: err.to_string(),
            error: Some(err),
        }
    }
}

struct Builder<'a> {
    config: &'a ScenarioConfig,
    system: GptSystem,
    basis: Option<HermitianBasis>,
    built: IndexMap<String, Result<BuiltMeasurement, ScenarioError>>,
    visiting: HashSet<String>,
}

fn complex_vec(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs.iter().map(|[re, im]| Complex64::new(*re, *im)).collect()
}

fn indexed_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn build_system(cfg: &SystemConfig) -> Result<GptSystem, ScenarioError> {
    let at = |e| ScenarioError::from_build("/system", e);
    match cfg {
        SystemConfig::Quantum { n } => {
            if *n < 2 {
                return Err(ScenarioError::schema("/system/n", "quantum systems need n >= 2"));
            }
            GptSystem::new(SystemKind::Quantum { n: *n }, vec![], vec![]).map_err(at)
        }
        SystemConfig::Classical { k } => {
            if *k < 2 {
                return Err(ScenarioError::schema("/system/k", "classical systems need k >= 2"));
            }
            Ok(classical_system(*k))
        }
        SystemConfig::Custom {
            dim,
            extremal_states,
            measurements,
        } => {
            let kind = SystemKind::Custom { dim: *dim };
            let ms = measurements
                .iter()
                .map(|m| {
                    let labels = m.outcome_labels.clone().unwrap_or_else(|| indexed_labels(m.effects.len()));
                    let effects = m.effects.iter().cloned().map(GptEffect::new).collect();
                    GptMeasurement::new(m.label.clone(), kind, labels, effects)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(at)?;
            let states = extremal_states.iter().cloned().map(GptState::new).collect();
            GptSystem::new(kind, states, ms).map_err(at)
        }
    }
}

impl<'a> Builder<'a> {
    fn kind(&self) -> SystemKind {
        self.system.kind
    }

    fn quantum_n(&self, pointer: &str) -> Result<usize, ScenarioError> {
        match self.kind() {
            SystemKind::Quantum { n } => Ok(n),
            other => Err(ScenarioError::schema(
                pointer,
                format!("matrix-valued input needs a quantum system, this one is {}", other.describe()),
            )),
        }
    }

    fn resolve(&mut self, id: &str, from: &str) -> Result<BuiltMeasurement, ScenarioError> {
        if let Some(done) = self.built.get(id) {
            let own = from == format!("/measurements/{id}");
            return done.clone().map_err(|e| {
                if own {
                    e
                } else {
                    ScenarioError::schema(from, format!("depends on measurement {id:?}, which failed"))
                }
            });
        }
        let Some(cfg) = self.config.measurements.get(id) else {
            return Err(ScenarioError::schema(from, format!("unknown measurement {id:?}")));
        };
        if !self.visiting.insert(id.to_string()) {
            return Err(ScenarioError::schema(from, format!("measurement {id:?} is defined in terms of itself")));
        }
        let pointer = format!("/measurements/{id}");
        let result = self.construct(id, cfg, &pointer);
        self.visiting.remove(id);
        self.built.insert(id.to_string(), result.clone());
        result
    }

    fn construct(&mut self, id: &str, cfg: &MeasurementConfig, pointer: &str) -> Result<BuiltMeasurement, ScenarioError> {
        let at = |e| ScenarioError::from_build(pointer, e);
        let kind = self.kind();
        let from_povm = |povm: Povm, basis: &HermitianBasis, construction: String| -> Result<BuiltMeasurement, ScenarioError> {
            let gpt = embed_povm(&povm, basis).map_err(|e| ScenarioError::from_build(pointer, e))?;
            Ok(BuiltMeasurement {
                construction,
                outcome_count: povm.outcome_count(),
                gpt: Some(gpt),
                povm: Some(povm),
            })
        };
        match cfg {
            MeasurementConfig::Povm { effects, outcome_labels } => {
                let n = self.quantum_n(pointer)?;
                let mut es = Vec::with_capacity(effects.len());
                for (i, spec) in effects.iter().enumerate() {
                    let ptr = format!("{pointer}/effects/{i}");
                    let m = match spec {
                        MatrixSpec::Named(key) => {
                            ComplexMatrix::named(key).map_err(|e| ScenarioError::schema(&ptr, e.to_string()))?
                        }
                        MatrixSpec::Inline(m) => m.clone(),
                    };
                    if m.dim() != n {
                        return Err(ScenarioError::schema(&ptr, format!("effect is {}x{}, system has n = {n}", m.dim(), m.dim())));
                    }
                    es.push(Effect::new(m).map_err(|e| ScenarioError::from_build(&ptr, e))?);
                }
                let labels = outcome_labels.clone().unwrap_or_else(|| indexed_labels(es.len()));
                let povm = Povm::new(id, es, labels).map_err(at)?;
                from_povm(povm, self.basis.as_ref().expect("quantum basis"), "povm".into())
            }
            MeasurementConfig::Projective { vectors } => {
                let n = self.quantum_n(pointer)?;
                let mut states = Vec::with_capacity(vectors.len());
                for (i, v) in vectors.iter().enumerate() {
                    let ptr = format!("{pointer}/vectors/{i}");
                    if v.len() != n {
                        return Err(ScenarioError::schema(&ptr, format!("vector has {} amplitudes, system has n = {n}", v.len())));
                    }
                    states.push(PureState::new(complex_vec(v)).map_err(|e| ScenarioError::from_build(&ptr, e))?);
                }
                let povm = projective_measurement(id, &states).map_err(at)?;
                from_povm(povm, self.basis.as_ref().expect("quantum basis"), "projective".into())
            }
            MeasurementConfig::EffectVectors { effects, outcome_labels } => {
                let labels = outcome_labels.clone().unwrap_or_else(|| indexed_labels(effects.len()));
                let gpt_effects: Vec<GptEffect> = effects.iter().cloned().map(GptEffect::new).collect();
                let gpt = GptMeasurement::new(id, kind, labels.clone(), gpt_effects).map_err(at)?;
                let povm = match (&self.basis, kind) {
                    (Some(basis), SystemKind::Quantum { .. }) => {
                        let es = gpt
                            .effects
                            .iter()
                            .map(|o| unembed_effect(o, basis))
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(at)?;
                        Some(Povm::new(id, es, labels).map_err(at)?)
                    }
                    _ => {
                        // finite systems: check against every extremal state
                        GptSystem::new(kind, self.system.extremal_states.clone(), vec![gpt.clone()]).map_err(at)?;
                        None
                    }
                };
                Ok(BuiltMeasurement {
                    construction: "effect_vectors".into(),
                    outcome_count: gpt.outcome_count(),
                    gpt: Some(gpt),
                    povm,
                })
            }
            MeasurementConfig::System { label } => {
                let m = self.system.measurement(label).cloned().ok_or_else(|| {
                    ScenarioError::schema(format!("{pointer}/label"), format!("system has no measurement {label:?}"))
                })?;
                Ok(BuiltMeasurement {
                    construction: format!("system:{label}"),
                    outcome_count: m.outcome_count(),
                    gpt: Some(m),
                    povm: None,
                })
            }
            MeasurementConfig::Mixture { of, weights } => {
                let a = self.resolve(&of[0], &format!("{pointer}/of/0"))?;
                let b = self.resolve(&of[1], &format!("{pointer}/of/1"))?;
                let q = MixtureWeights::new(weights.clone())
                    .map_err(|e| ScenarioError::from_build(&format!("{pointer}/weights"), e))?;
                let (Some(ga), Some(gb)) = (a.gpt, b.gpt) else {
                    return Err(ScenarioError::schema(pointer, "mixture operands need effect vectors"));
                };
                let gpt = mix_measurements(&ga, &gb, &q).map_err(at)?;
                Ok(BuiltMeasurement {
                    construction: format!("mixture({}, {})", of[0], of[1]),
                    outcome_count: gpt.outcome_count(),
                    povm: self.povm_of(&gpt, id, pointer)?,
                    gpt: Some(gpt),
                })
            }
            MeasurementConfig::Dither { of, matrix } => {
                let base = self.resolve(of, &format!("{pointer}/of"))?;
                let q = DitherMatrix::new(matrix.clone())
                    .map_err(|e| ScenarioError::from_build(&format!("{pointer}/matrix"), e))?;
                let Some(g) = base.gpt else {
                    return Err(ScenarioError::schema(pointer, "dither operand needs effect vectors"));
                };
                let gpt = dither_measurement(&g, &q).map_err(|e| match e {
                    Error::ShapeMismatch(m) => ScenarioError::schema(format!("{pointer}/matrix"), m),
                    other => at(other),
                })?;
                Ok(BuiltMeasurement {
                    construction: format!("dither({of})"),
                    outcome_count: gpt.outcome_count(),
                    povm: self.povm_of(&gpt, id, pointer)?,
                    gpt: Some(gpt),
                })
            }
            MeasurementConfig::Outcomes { count } => {
                if *count < 1 {
                    return Err(ScenarioError::schema(format!("{pointer}/count"), "need at least one outcome"));
                }
                Ok(BuiltMeasurement {
                    construction: "outcomes".into(),
                    outcome_count: *count,
                    gpt: None,
                    povm: None,
                })
            }
        }
    }

    /// Matrix form of a derived quantum measurement, re-validated.
    fn povm_of(&self, gpt: &GptMeasurement, id: &str, pointer: &str) -> Result<Option<Povm>, ScenarioError> {
        let Some(basis) = self.basis.as_ref().filter(|_| matches!(self.kind(), SystemKind::Quantum { .. })) else {
            return Ok(None);
        };
        let at = |e| ScenarioError::from_build(pointer, e);
        let es = gpt
            .effects
            .iter()
            .map(|o| unembed_effect(o, basis))
            .collect::<Result<Vec<_>, _>>()
            .map_err(at)?;
        Ok(Some(Povm::new(id, es, gpt.outcome_labels.clone()).map_err(at)?))
    }
}

fn build_state(
    cfg: &StateConfig,
    system: &GptSystem,
    basis: Option<&HermitianBasis>,
    pointer: &str,
) -> Result<BuiltState, ScenarioError> {
    let at = |e| ScenarioError::from_build(pointer, e);
    let quantum = |rho: DensityMatrix| -> Result<BuiltState, ScenarioError> {
        let SystemKind::Quantum { n } = system.kind else {
            return Err(ScenarioError::schema(pointer, "matrix-valued state needs a quantum system"));
        };
        if rho.dim() != n {
            return Err(ScenarioError::schema(pointer, format!("state is {}-dimensional, system has n = {n}", rho.dim())));
        }
        let gpt = embed_state(&rho, basis.expect("quantum basis")).map_err(at)?;
        Ok(BuiltState { rho: Some(rho), gpt })
    };
    match cfg {
        StateConfig::Matrix(m) => quantum(DensityMatrix::new(m.clone()).map_err(at)?),
        StateConfig::Pure(amps) => {
            quantum(DensityMatrix::from_pure(&PureState::new(complex_vec(amps)).map_err(at)?))
        }
        StateConfig::Bloch(r) => quantum(qubit::from_bloch(*r).map_err(at)?),
        StateConfig::Named(key) => {
            let m = ComplexMatrix::named(key).map_err(|e| ScenarioError::schema(pointer, e.to_string()))?;
            quantum(DensityMatrix::new(m).map_err(at)?)
        }
        StateConfig::Probabilities(p) => {
            let SystemKind::Classical { k } = system.kind else {
                return Err(ScenarioError::schema(pointer, "probability-vector state needs a classical system"));
            };
            if p.len() != k {
                return Err(ScenarioError::schema(pointer, format!("{} probabilities for k = {k}", p.len())));
            }
            let rho = DensityMatrix::diagonal(p).map_err(at)?;
            let gpt = classical_state(p, basis.expect("classical basis"));
            Ok(BuiltState { rho: Some(rho), gpt })
        }
        StateConfig::Coords(c) => {
            let dim = system.kind.real_dim();
            if c.len() != dim {
                return Err(ScenarioError::schema(pointer, format!("{} coordinates, system needs {dim}", c.len())));
            }
            let gpt = GptState::new(c.clone());
            let rho = match basis {
                Some(b) => Some(crate::gpt::unembed_state(&gpt, b).map_err(at)?),
                None => None,
            };
            for m in &system.measurements {
                let p = m.distribution(&gpt).map_err(at)?;
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > tolerance::GPT_NORMALIZATION {
                    return Err(at(Error::BadSystem(format!(
                        "measurement {:?} sums to {total} on this state",
                        m.label
                    ))));
                }
            }
            Ok(BuiltState { rho, gpt })
        }
    }
}

fn check_prior(prior: &PriorSpec, system: &GptSystem, registry: &MeasurementRegistry) -> Result<(), ScenarioError> {
    if let Err(e) = prior.validate() {
        return Err(match e {
            Error::UnsupportedGrid(_) => ScenarioError::schema("/prior/n", e.to_string()),
            other => ScenarioError::Numerical {
                pointer: "/prior".into(),
                invariant: "prior_spec".into(),
                message: other.to_string(),
            },
        });
    }
    let quantum_dim = match &prior.kind {
        PriorKind::HaarPure { n } | PriorKind::HilbertSchmidt { n } | PriorKind::Grid { n, .. } => Some(*n),
        PriorKind::Explicit { points } => match &points[0].point {
            ParamPoint::Quantum(q) => Some(q.rho.dim()),
            ParamPoint::Simplices(_) => None,
        },
        _ => None,
    };
    if let Some(n) = quantum_dim {
        if system.kind != (SystemKind::Quantum { n }) {
            return Err(ScenarioError::schema(
                "/prior",
                format!("prior over {n}-level density matrices does not fit system {}", system.kind.describe()),
            ));
        }
        for id in registry.ids() {
            if registry.get(id).and_then(|m| m.effects.as_ref()).is_none() {
                return Err(ScenarioError::schema(
                    format!("/measurements/{id}"),
                    "a quantum prior needs effect vectors for every measurement",
                ));
            }
        }
        return Ok(());
    }
    let shapes: Vec<usize> = match &prior.kind {
        PriorKind::SimplexDirichlet { alpha } => vec![alpha.len()],
        PriorKind::ProductDirichlet { alphas } => alphas.iter().map(Vec::len).collect(),
        PriorKind::Explicit { points } => match &points[0].point {
            ParamPoint::Simplices(eta) => eta.iter().map(Vec::len).collect(),
            ParamPoint::Quantum(_) => unreachable!(),
        },
        _ => unreachable!(),
    };
    if shapes.len() != registry.len() {
        return Err(ScenarioError::schema(
            "/prior",
            format!("prior has {} simplices for {} measurements", shapes.len(), registry.len()),
        ));
    }
    for (slot, k) in shapes.iter().enumerate() {
        let (id, m) = registry.by_slot(slot);
        if m.outcome_count != *k {
            return Err(ScenarioError::schema(
                "/prior",
                format!("simplex {slot} has {k} categories, measurement {id:?} has {} outcomes", m.outcome_count),
            ));
        }
    }
    Ok(())
}

fn check_query(q: &QueryConfig, scenario: &Scenario, pointer: &str) -> Result<(), ScenarioError> {
    let record = |name: &str| -> Result<&ExperimentRecord, ScenarioError> {
        scenario
            .config
            .records
            .get(name)
            .ok_or_else(|| ScenarioError::schema(format!("{pointer}/record"), format!("unknown record {name:?}")))
    };
    let state = |name: &str, ptr: String| -> Result<(), ScenarioError> {
        if scenario.states.contains_key(name) {
            Ok(())
        } else {
            Err(ScenarioError::schema(ptr, format!("unknown state {name:?}")))
        }
    };
    match q {
        QueryConfig::Predictive { record: r } | QueryConfig::PartialExchPredictive { record: r } => {
            record(r)?;
        }
        QueryConfig::Posterior {
            record: r,
            next,
            resample_ess_fraction,
        } => {
            record(r)?;
            for (i, m) in next.iter().enumerate() {
                scenario
                    .registry
                    .slot(m)
                    .map_err(|e| ScenarioError::schema(format!("{pointer}/next/{i}"), e.to_string()))?;
            }
            if let Some(f) = resample_ess_fraction {
                if !(0.0..=1.0).contains(f) {
                    return Err(ScenarioError::schema(format!("{pointer}/resample_ess_fraction"), "must lie in [0, 1]"));
                }
            }
        }
        QueryConfig::Distinguishability { states } => {
            for (i, s) in states.iter().enumerate() {
                state(s, format!("{pointer}/states/{i}"))?;
            }
        }
        QueryConfig::ExchangeabilityCheck { record: r, permutation } => {
            let rec = record(r)?;
            rec.permuted(permutation)
                .map_err(|e| ScenarioError::schema(format!("{pointer}/permutation"), e.to_string()))?;
        }
        QueryConfig::EmbedDiagnostics { states } => {
            for (i, s) in states.iter().flatten().enumerate() {
                state(s, format!("{pointer}/states/{i}"))?;
            }
        }
    }
    Ok(())
}

/// Run every constructor and cross-reference check, collecting one row per
/// object. Returns the scenario when every check passed.
pub fn build_with_checks(config: &ScenarioConfig) -> (Option<Scenario>, Vec<Check>) {
    let mut checks = Vec::new();
    let system = match build_system(&config.system) {
        Ok(s) => {
            checks.push(Check::pass("/system", s.kind.describe()));
            s
        }
        Err(e) => {
            checks.push(Check::fail("/system", e));
            return (None, checks);
        }
    };
    let basis = system.kind.basis();
    let mut builder = Builder {
        config,
        system: system.clone(),
        basis: basis.clone(),
        built: IndexMap::new(),
        visiting: HashSet::new(),
    };
    let mut measurements = IndexMap::new();
    let mut registry = MeasurementRegistry::new();
    let mut failed = false;
    for id in config.measurements.keys() {
        let pointer = format!("/measurements/{id}");
        match builder.resolve(id, &pointer) {
            Ok(m) => {
                checks.push(Check::pass(
                    &pointer,
                    format!("{} with {} outcomes", m.construction, m.outcome_count),
                ));
                match &m.gpt {
                    Some(g) => registry.insert_measurement(id.clone(), g.clone()),
                    None => registry.insert_kind(id.clone(), m.outcome_count),
                }
                measurements.insert(id.clone(), m);
            }
            Err(e) => {
                failed = true;
                checks.push(Check::fail(&pointer, e));
            }
        }
    }
    let mut states = IndexMap::new();
    for (name, cfg) in &config.states {
        let pointer = format!("/states/{name}");
        match build_state(cfg, &system, basis.as_ref(), &pointer) {
            Ok(s) => {
                checks.push(Check::pass(&pointer, "valid state"));
                states.insert(name.clone(), s);
            }
            Err(e) => {
                failed = true;
                checks.push(Check::fail(&pointer, e));
            }
        }
    }
    if config.particle_count == 0 {
        failed = true;
        checks.push(Check::fail(
            "/particle_count",
            ScenarioError::schema("/particle_count", "must be positive"),
        ));
    }
    if failed {
        return (None, checks);
    }
    match check_prior(&config.prior, &system, &registry) {
        Ok(()) => checks.push(Check::pass("/prior", config.prior.generator())),
        Err(e) => {
            checks.push(Check::fail("/prior", e));
            failed = true;
        }
    }
    for (name, rec) in &config.records {
        let pointer = format!("/records/{name}");
        let mut ok = true;
        for (i, (id, outcome)) in rec.steps.iter().enumerate() {
            let step_ptr = format!("{pointer}/steps/{i}");
            match registry.get(id) {
                None => {
                    checks.push(Check::fail(
                        &pointer,
                        ScenarioError::schema(format!("{step_ptr}/0"), format!("unknown measurement {id:?}")),
                    ));
                    ok = false;
                    break;
                }
                Some(m) if *outcome >= m.outcome_count => {
                    checks.push(Check::fail(
                        &pointer,
                        ScenarioError::schema(
                            format!("{step_ptr}/1"),
                            format!("outcome {outcome} out of range for {id:?} ({} outcomes)", m.outcome_count),
                        ),
                    ));
                    ok = false;
                    break;
                }
                Some(_) => {}
            }
        }
        if ok {
            checks.push(Check::pass(&pointer, format!("{} steps", rec.len())));
        } else {
            failed = true;
        }
    }
    if failed {
        return (None, checks);
    }
    let scenario = Scenario {
        config: config.clone(),
        system,
        basis,
        states,
        measurements,
        registry,
    };
    for (i, q) in config.queries.iter().enumerate() {
        let pointer = format!("/queries/{i}");
        match check_query(q, &scenario, &pointer) {
            Ok(()) => checks.push(Check::pass(&pointer, "references resolve")),
            Err(e) => {
                failed = true;
                checks.push(Check::fail(&pointer, e));
            }
        }
    }
    if failed {
        (None, checks)
    } else {
        (Some(scenario), checks)
    }
}

/// Build a scenario, failing on the first failed check.
pub fn build(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    let (scenario, checks) = build_with_checks(config);
    scenario.ok_or_else(|| first_failure(&checks))
}

/// The most severe failure among the checks: schema errors outrank
/// numerical ones, so the exit code reports the structural problem first.
pub fn first_failure(checks: &[Check]) -> ScenarioError {
    let errors: Vec<&ScenarioError> = checks.iter().filter_map(|c| c.error.as_ref()).collect();
    errors
        .iter()
        .find(|e| matches!(e, ScenarioError::Schema { .. }))
        .or_else(|| errors.first())
        .map(|e| (*e).clone())
        .unwrap_or_else(|| ScenarioError::schema("", "scenario did not build"))
}

/// Human-readable pass/fail table.
pub fn format_checks(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.object.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    for c in checks {
        out.push_str(&format!(
            "{:<width$}  {}  {}\n",
            c.object,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        ));
    }
    if checks.iter().all(|c| c.passed) {
        out.push_str("all checks passed\n");
    } else {
        let n = checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{n} check(s) failed\n"));
    }
    out
}

// ---------------------------------------------------------------------------
// run

fn round_trip_error(rho: &DensityMatrix, basis: &HermitianBasis) -> Result<f64, Error> {
    let s = embed_state(rho, basis)?;
    let back = crate::gpt::unembed_state(&s, basis)?;
    Ok(back.matrix().max_abs_diff(rho.matrix()))
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

impl Scenario {
    fn ensemble_provenance(&self, e: &ParticleEnsemble) -> Value {
        let p = e.provenance();
        json!({
            "generator": p.generator,
            "seed": p.seed,
            "particle_count": p.particle_count,
            "requested_particle_count": self.config.particle_count,
            "exact": p.exact,
        })
    }

    fn run_query(&self, q: &QueryConfig, prior: &ParticleEnsemble, pointer: &str) -> Result<(Value, Value, Value), ScenarioError> {
        let fail = |e| ScenarioError::from_query(pointer, e);
        let prov = self.ensemble_provenance(prior);
        let record = |name: &str| &self.config.records[name];
        Ok(match q {
            QueryConfig::Predictive { record: r } => {
                let res = predictive(prior, record(r), &self.registry).map_err(fail)?;
                (Value::Null, serde_json::to_value(&res).expect("serializable"), prov)
            }
            QueryConfig::Posterior {
                record: r,
                next,
                resample_ess_fraction,
            } => {
                let resampling = resample_ess_fraction.map(|f| Resampling { ess_fraction: f });
                let post = posterior_update_with(prior, record(r), &self.registry, resampling).map_err(fail)?;
                let stats = ensemble_statistics(&post).map_err(fail)?;
                let mut next_out = serde_json::Map::new();
                for m in next {
                    let count = self.registry.get(m).expect("checked").outcome_count;
                    let mut dist = Vec::with_capacity(count);
                    for o in 0..count {
                        let res = predictive(&post, &ExperimentRecord::from_steps(&[(m.as_str(), o)]), &self.registry)
                            .map_err(fail)?;
                        dist.push(serde_json::to_value(&res).expect("serializable"));
                    }
                    next_out.insert(m.clone(), Value::Array(dist));
                }
                let mut exact = serde_json::Map::new();
                if let Some(mean) = &stats.mean_state {
                    // trace-formula probabilities at the posterior mean state
                    let mut table = serde_json::Map::new();
                    for (id, m) in &self.measurements {
                        if let Some(povm) = &m.povm {
                            table.insert(id.clone(), json!(outcome_distribution(povm, mean).map_err(fail)?));
                        }
                    }
                    exact.insert("outcome_distributions_at_mean_state".into(), Value::Object(table));
                }
                let mc = json!({
                    "effective_sample_size": stats.effective_sample_size,
                    "particle_count": stats.particle_count,
                    "mean_state": stats.mean_state,
                    "mean_purity": stats.mean_purity,
                    "mean_eta": stats.mean_eta,
                    "next_outcome_predictive": next_out,
                });
                let exact = if exact.is_empty() { Value::Null } else { Value::Object(exact) };
                (exact, mc, self.ensemble_provenance(&post))
            }
            QueryConfig::Distinguishability { states } => {
                let a = &self.states[&states[0]];
                let b = &self.states[&states[1]];
                let mut out = serde_json::Map::new();
                if let (Some(ra), Some(rb)) = (&a.rho, &b.rho) {
                    let d = perfectly_distinguishable(ra, rb).map_err(fail)?;
                    out.insert("distinguishable".into(), json!(d.distinguishable));
                    out.insert("overlap".into(), json!(d.overlap));
                    out.insert("support_product_norm".into(), json!(d.support_product_norm));
                    out.insert("witness".into(), json!(d.witness));
                }
                let mut certain = Vec::new();
                for id in self.registry.ids() {
                    let Some(g) = &self.measurements[id].gpt else { continue };
                    let pa = g.distribution(&a.gpt).map_err(fail)?;
                    let pb = g.distribution(&b.gpt).map_err(fail)?;
                    let shared: f64 = pa.iter().zip(&pb).map(|(x, y)| x.min(*y)).sum();
                    if shared <= tolerance::DISTINGUISHABLE_OVERLAP {
                        certain.push(id.to_string());
                    }
                }
                out.insert("distinguishing_registered_measurements".into(), json!(certain));
                (Value::Object(out), Value::Null, Value::Null)
            }
            QueryConfig::ExchangeabilityCheck { record: r, permutation } => {
                let rep = exchangeability_check(record(r), permutation, prior, &self.registry).map_err(fail)?;
                (Value::Null, serde_json::to_value(&rep).expect("serializable"), prov)
            }
            QueryConfig::EmbedDiagnostics { states } => {
                let names: Vec<&String> = match states {
                    Some(s) => s.iter().collect(),
                    None => self.states.keys().collect(),
                };
                let mut out = serde_json::Map::new();
                for name in names {
                    let st = &self.states[name];
                    let mut entry = serde_json::Map::new();
                    entry.insert("coords".into(), json!(st.gpt.coords()));
                    let mut per_meas = serde_json::Map::new();
                    for (id, m) in &self.measurements {
                        let Some(g) = &m.gpt else { continue };
                        let vector: Vec<f64> = g
                            .effects
                            .iter()
                            .map(|o| vector_probability(o, &st.gpt))
                            .collect::<Result<_, _>>()
                            .map_err(fail)?;
                        let mut row = json!({ "vector_formula": vector });
                        if let (Some(povm), Some(rho)) = (&m.povm, &st.rho) {
                            let trace = outcome_distribution(povm, rho).map_err(fail)?;
                            let diff = trace.iter().zip(&vector).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                            row["trace_formula"] = json!(trace);
                            row["max_abs_difference"] = json!(diff);
                        }
                        per_meas.insert(id.clone(), row);
                    }
                    entry.insert("outcome_distributions".into(), Value::Object(per_meas));
                    if let (Some(rho), Some(basis)) = (&st.rho, &self.basis) {
                        if matches!(self.system.kind, SystemKind::Quantum { .. }) {
                            entry.insert("round_trip_error".into(), json!(round_trip_error(rho, basis).map_err(fail)?));
                            entry.insert("purity".into(), json!(rho.purity()));
                            let all_effects = self.registry.ids().all(|id| self.measurements[id].gpt.is_some());
                            if all_effects {
                                entry.insert("pushforward_eta".into(), json!(pushforward(rho, &self.registry).map_err(fail)?));
                            }
                        }
                    }
                    out.insert(name.clone(), Value::Object(entry));
                }
                (Value::Object(out), Value::Null, Value::Null)
            }
            QueryConfig::PartialExchPredictive { record: r } => {
                let res = partial_exch_predictive(&self.config.prior, self.config.particle_count, record(r), &self.registry)
                    .map_err(fail)?;
                let exact = match res.closed_form_log_probability {
                    Some(lp) => json!({ "closed_form_log_probability": lp, "closed_form_probability": lp.exp() }),
                    None => Value::Null,
                };
                (exact, json!({ "estimate": res.monte_carlo, "agrees_within_3_std_errors": res.agrees }), prov)
            }
        })
    }

    fn measurement_table(&self) -> Value {
        let mut out = serde_json::Map::new();
        for (id, m) in &self.measurements {
            out.insert(
                id.clone(),
                json!({
                    "construction": m.construction,
                    "outcome_count": m.outcome_count,
                    "outcome_labels": m.gpt.as_ref().map(|g| g.outcome_labels.clone()),
                    "effect_vectors": m.gpt.as_ref().map(|g| g.effects.iter().map(|e| e.coords().to_vec()).collect::<Vec<_>>()),
                    "effect_sum": m.gpt.as_ref().map(|g| g.effect_sum()),
                }),
            );
        }
        Value::Object(out)
    }

    /// Sample the prior once and answer every query against that ensemble.
    pub fn run(&self) -> Result<Value, ScenarioError> {
        let start = Instant::now();
        log::info!("sampling {} with {} particles", self.config.prior.generator(), self.config.particle_count);
        let prior = sample_prior(&self.config.prior, self.config.particle_count)
            .map_err(|e| ScenarioError::from_build("/prior", e))?;
        let sample_ms = ms(start);
        let mut queries = Vec::with_capacity(self.config.queries.len());
        for (i, q) in self.config.queries.iter().enumerate() {
            let pointer = format!("/queries/{i}");
            log::info!("query {i}: {q:?}");
            let t = Instant::now();
            let (exact, mc, prov) = self.run_query(q, &prior, &pointer)?;
            queries.push(json!({
                "index": i,
                "query": q,
                "exact": exact,
                "monte_carlo": mc,
                "provenance": prov,
                "timing": { "wall_clock_ms": ms(t) },
            }));
        }
        Ok(json!({
            "schema": SCHEMA,
            "system": self.system.kind,
            "provenance": {
                "prior": self.config.prior,
                "seed": self.config.prior.seed,
                "particle_count": prior.len(),
                "requested_particle_count": self.config.particle_count,
                "generator": prior.provenance().generator,
                "rng": "ChaCha20, key = seed_from_u64(seed), stream = particle index",
                "tolerances": tolerance::table(),
            },
            "measurements": self.measurement_table(),
            "queries": queries,
            "timing": { "prior_sampling_ms": sample_ms, "wall_clock_ms": ms(start) },
        }))
    }
}

/// Remove every `timing` member, leaving the numerically determined part of
/// a report.
pub fn strip_timing(report: &mut Value) {
    match report {
        Value::Object(map) => {
            map.remove("timing");
            for v in map.values_mut() {
                strip_timing(v);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

pub fn run_file(config_path: &std::path::Path) -> Result<Value, ScenarioError> {
    let config = load_config(config_path)?;
    let scenario = build(&config)?;
    scenario.run()
}
