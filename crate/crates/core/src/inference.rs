//! Predictive probabilities and posterior reweighting for exchangeable and
//! partially exchangeable models.
//!
//! One engine serves both models. A parameter point is either a quantum
//! state (outcome probabilities by the vector formula) or a tuple of
//! simplex points, one categorical distribution per kind of measurement.
//! Given a point, steps of a record are independent, so the likelihood
//! depends on the record only through its table of (measurement, outcome)
//! counts. The predictive is the prior-weighted mixture of these products.

use indexmap::IndexMap;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gpt::{embed_state, standard_basis, vector_probability, GptMeasurement};
use crate::hilbert::DensityMatrix;
use crate::numeric::{log_sum_exp, pairwise_sum};
use crate::prior::{
    particle_rng, sample_prior, ParamPoint, ParticleEnsemble, PriorKind, PriorSpec, Provenance,
    RESAMPLE_STREAM,
};
use crate::tolerance;

/// A measurement available to a model. Quantum likelihoods need the effect
/// vectors; simplex likelihoods only the outcome count.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredMeasurement {
    pub outcome_count: usize,
    pub effects: Option<GptMeasurement>,
}

/// Measurement kinds by id. The registration order fixes each kind's slot,
/// i.e. which component of a simplex-tuple point it reads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementRegistry {
    entries: IndexMap<String, RegisteredMeasurement>,
}

impl MeasurementRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_measurement(&mut self, id: impl Into<String>, m: GptMeasurement) {
        self.entries.insert(
            id.into(),
            RegisteredMeasurement {
                outcome_count: m.outcome_count(),
                effects: Some(m),
            },
        );
    }

    pub fn insert_kind(&mut self, id: impl Into<String>, outcome_count: usize) {
        self.entries.insert(
            id.into(),
            RegisteredMeasurement {
                outcome_count,
                effects: None,
            },
        );
    }

    pub fn with_measurements<I, S>(ms: I) -> Self
    where
        I: IntoIterator<Item = (S, GptMeasurement)>,
        S: Into<String>,
    {
        let mut r = Self::new();
        for (id, m) in ms {
            r.insert_measurement(id, m);
        }
        r
    }

    pub fn with_kinds<I, S>(kinds: I) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut r = Self::new();
        for (id, k) in kinds {
            r.insert_kind(id, k);
        }
        r
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn slot(&self, id: &str) -> Result<usize> {
        self.entries
            .get_index_of(id)
            .ok_or_else(|| Error::UnknownMeasurement(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Option<&RegisteredMeasurement> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn by_slot(&self, slot: usize) -> (&str, &RegisteredMeasurement) {
        let (k, v) = self.entries.get_index(slot).expect("slot in range");
        (k.as_str(), v)
    }
}

/// Observed data: which measurement was performed at each step and which
/// outcome it gave.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub steps: Vec<(String, usize)>,
}

impl ExperimentRecord {
    pub fn new(steps: Vec<(String, usize)>) -> Self {
        Self { steps }
    }

    pub fn from_steps<S: AsRef<str>>(steps: &[(S, usize)]) -> Self {
        Self::new(steps.iter().map(|(m, o)| (m.as_ref().to_string(), *o)).collect())
    }

    /// Record of repeated outcomes of one measurement.
    pub fn repeated(measurement: &str, outcome: usize, times: usize) -> Self {
        Self::new(vec![(measurement.to_string(), outcome); times])
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn pushed(&self, measurement: &str, outcome: usize) -> Self {
        let mut steps = self.steps.clone();
        steps.push((measurement.to_string(), outcome));
        Self { steps }
    }

    pub fn concat(&self, other: &ExperimentRecord) -> Self {
        let mut steps = self.steps.clone();
        steps.extend(other.steps.iter().cloned());
        Self { steps }
    }

    /// Check every step against the registry.
    pub fn validate(&self, registry: &MeasurementRegistry) -> Result<()> {
        self.counts(registry).map(|_| ())
    }

    /// Count table `counts[slot][outcome]`: the sufficient statistic of the
    /// record under any model with independent steps given the parameter.
    pub fn counts(&self, registry: &MeasurementRegistry) -> Result<Vec<Vec<u64>>> {
        let mut counts: Vec<Vec<u64>> = (0..registry.len())
            .map(|s| vec![0; registry.by_slot(s).1.outcome_count])
            .collect();
        for (id, outcome) in &self.steps {
            let slot = registry.slot(id)?;
            let row = &mut counts[slot];
            if *outcome >= row.len() {
                return Err(Error::OutcomeOutOfRange {
                    measurement: id.clone(),
                    outcome: *outcome,
                    count: row.len(),
                });
            }
            row[*outcome] += 1;
        }
        Ok(counts)
    }

    /// `steps'[i] = steps[permutation[i]]`.
    pub fn permuted(&self, permutation: &[usize]) -> Result<Self> {
        check_permutation(permutation, self.len())?;
        Ok(Self {
            steps: permutation.iter().map(|&i| self.steps[i].clone()).collect(),
        })
    }
}

fn check_permutation(permutation: &[usize], len: usize) -> Result<()> {
    if permutation.len() != len {
        return Err(Error::BadPermutation(format!(
            "length {} for a record of {len} steps",
            permutation.len()
        )));
    }
    let mut seen = vec![false; len];
    for &i in permutation {
        if i >= len || seen[i] {
            return Err(Error::BadPermutation(format!("index {i} out of range or repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Probability of one outcome of the measurement in `slot` at a point.
fn outcome_probability(
    point: &ParamPoint,
    registry: &MeasurementRegistry,
    slot: usize,
    outcome: usize,
) -> Result<f64> {
    let (id, entry) = registry.by_slot(slot);
    match point {
        ParamPoint::Quantum(q) => {
            let m = entry.effects.as_ref().ok_or_else(|| {
                Error::ModelMismatch(format!(
                    "measurement {id:?} has no effect vectors; a quantum point needs them"
                ))
            })?;
            vector_probability(&m.effects[outcome], &q.state)
                .map_err(|e| Error::ModelMismatch(format!("measurement {id:?}: {e}")))
        }
        ParamPoint::Simplices(eta) => {
            let dist = eta.get(slot).ok_or_else(|| {
                Error::ModelMismatch(format!(
                    "point has {} simplex components, measurement {id:?} needs slot {slot}",
                    eta.len()
                ))
            })?;
            if dist.len() != entry.outcome_count {
                return Err(Error::ModelMismatch(format!(
                    "measurement {id:?} has {} outcomes, component {slot} has {}",
                    entry.outcome_count,
                    dist.len()
                )));
            }
            Ok(dist[outcome])
        }
    }
}

/// `sum n log p` over the count table; `-inf` when an observed outcome has
/// probability zero.
fn log_likelihood_counts(
    point: &ParamPoint,
    counts: &[Vec<u64>],
    registry: &MeasurementRegistry,
) -> Result<f64> {
    let mut acc = 0.0;
    for (slot, row) in counts.iter().enumerate() {
        for (outcome, &n) in row.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let p = outcome_probability(point, registry, slot, outcome)?;
            acc += n as f64 * p.ln();
        }
    }
    Ok(acc)
}

/// Log-likelihood of a record at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLikelihood {
    Finite(f64),
    /// The outcome at `step` has probability zero at this point.
    ZeroProbabilityOutcome { step: usize },
}

impl LogLikelihood {
    pub fn value(&self) -> f64 {
        match self {
            LogLikelihood::Finite(v) => *v,
            LogLikelihood::ZeroProbabilityOutcome { .. } => f64::NEG_INFINITY,
        }
    }
}

/// `sum_i log p(D_i | M_i, point)`
pub fn likelihood(
    point: &ParamPoint,
    record: &ExperimentRecord,
    registry: &MeasurementRegistry,
) -> Result<LogLikelihood> {
    let counts = record.counts(registry)?;
    let value = log_likelihood_counts(point, &counts, registry)?;
    if value > f64::NEG_INFINITY {
        return Ok(LogLikelihood::Finite(value));
    }
    for (step, (id, outcome)) in record.steps.iter().enumerate() {
        let slot = registry.slot(id)?;
        if outcome_probability(point, registry, slot, *outcome)? == 0.0 {
            return Ok(LogLikelihood::ZeroProbabilityOutcome { step });
        }
    }
    unreachable!("-inf likelihood without a zero-probability step")
}

fn all_log_likelihoods(
    ensemble: &ParticleEnsemble,
    counts: &[Vec<u64>],
    registry: &MeasurementRegistry,
) -> Result<Vec<f64>> {
    ensemble
        .points()
        .par_iter()
        .map(|p| log_likelihood_counts(p, counts, registry))
        .collect()
}

/// Mixture estimate of a predictive probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictiveResult {
    pub log_probability: f64,
    pub probability: f64,
    /// Monte Carlo standard error of `probability`; zero for exact
    /// (grid or explicit) ensembles.
    pub mc_std_error: f64,
    pub particle_count: usize,
    /// Effective sample size of the data-weighted particles.
    pub ess: f64,
    pub exact: bool,
}

/// `log sum_k w_k exp(L_k)` with its standard error, from normalized log
/// weights and per-particle log-likelihoods.
fn mixture(log_weights: &[f64], log_liks: &[f64], exact: bool) -> PredictiveResult {
    let terms: Vec<f64> = log_weights.iter().zip(log_liks).map(|(w, l)| w + l).collect();
    let log_p = log_sum_exp(&terms);
    let n = log_weights.len();
    if log_p == f64::NEG_INFINITY {
        return PredictiveResult {
            log_probability: log_p,
            probability: 0.0,
            mc_std_error: 0.0,
            particle_count: n,
            ess: 0.0,
            exact,
        };
    }
    // self-normalized variance estimate sum_k w_k^2 (f_k - P)^2, computed
    // relative to P so long records do not underflow
    let rel: Vec<f64> = log_weights
        .iter()
        .zip(log_liks)
        .map(|(w, l)| {
            let d = (l - log_p).exp() - 1.0;
            (2.0 * w).exp() * d * d
        })
        .collect();
    let rel_se = pairwise_sum(&rel).sqrt();
    let post_sq: Vec<f64> = terms.iter().map(|t| (2.0 * (t - log_p)).exp()).collect();
    let probability = log_p.exp();
    PredictiveResult {
        log_probability: log_p,
        probability,
        mc_std_error: if exact { 0.0 } else { probability * rel_se },
        particle_count: n,
        ess: 1.0 / pairwise_sum(&post_sq),
        exact,
    }
}

/// `p(D_1, D_2, ... | M_1, M_2, ..., H)` as the ensemble mixture of
/// per-point likelihoods.
pub fn predictive(
    ensemble: &ParticleEnsemble,
    record: &ExperimentRecord,
    registry: &MeasurementRegistry,
) -> Result<PredictiveResult> {
    let counts = record.counts(registry)?;
    let log_liks = all_log_likelihoods(ensemble, &counts, registry)?;
    Ok(mixture(ensemble.log_weights(), &log_liks, ensemble.provenance().exact))
}

/// Predictive of a sequence of outcomes of a single kind of experiment,
/// each point of the ensemble being one categorical parameter `theta`
/// (stored as a one-component simplex tuple).
pub fn exchangeable_predictive(ensemble: &ParticleEnsemble, outcomes: &[usize]) -> Result<PredictiveResult> {
    let k = match &ensemble.points()[0] {
        ParamPoint::Simplices(eta) if eta.len() == 1 => eta[0].len(),
        _ => return Err(Error::ModelMismatch("expected single-simplex points".into())),
    };
    let mut counts = vec![0u64; k];
    for &o in outcomes {
        if o >= k {
            return Err(Error::OutcomeOutOfRange {
                measurement: "theta".into(),
                outcome: o,
                count: k,
            });
        }
        counts[o] += 1;
    }
    let log_liks = ensemble
        .points()
        .par_iter()
        .map(|p| match p {
            ParamPoint::Simplices(eta) if eta.len() == 1 && eta[0].len() == k => {
                let mut acc = 0.0;
                for (theta, &n) in eta[0].iter().zip(&counts) {
                    if n > 0 {
                        acc += n as f64 * theta.ln();
                    }
                }
                Ok(acc)
            }
            _ => Err(Error::ModelMismatch("expected single-simplex points".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mixture(ensemble.log_weights(), &log_liks, ensemble.provenance().exact))
}

/// Optional systematic resampling after reweighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resampling {
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_fraction: f64,
}

/// Reweight by the likelihood of `record`; points are unchanged.
pub fn posterior_update(
    ensemble: &ParticleEnsemble,
    record: &ExperimentRecord,
    registry: &MeasurementRegistry,
) -> Result<ParticleEnsemble> {
    posterior_update_with(ensemble, record, registry, None)
}

pub fn posterior_update_with(
    ensemble: &ParticleEnsemble,
    record: &ExperimentRecord,
    registry: &MeasurementRegistry,
    resampling: Option<Resampling>,
) -> Result<ParticleEnsemble> {
    let counts = record.counts(registry)?;
    let log_liks = all_log_likelihoods(ensemble, &counts, registry)?;
    let new_weights: Vec<f64> = ensemble
        .log_weights()
        .iter()
        .zip(&log_liks)
        .map(|(w, l)| w + l)
        .collect();
    if new_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(Error::AllWeightsZero);
    }
    let prov = ensemble.provenance();
    let provenance = Provenance {
        generator: if record.is_empty() {
            prov.generator.clone()
        } else {
            format!("posterior[{} steps] of {}", record.len(), prov.generator)
        },
        ..prov.clone()
    };
    let updated = ensemble.reweighted(new_weights, provenance)?;
    match resampling {
        Some(r) if updated.effective_sample_size() < r.ess_fraction * updated.len() as f64 => {
            systematic_resample(&updated)
        }
        _ => Ok(updated),
    }
}

/// Systematic resampling with one uniform offset drawn from the reserved
/// resampling stream of the ensemble's seed.
pub fn systematic_resample(ensemble: &ParticleEnsemble) -> Result<ParticleEnsemble> {
    let n = ensemble.len();
    let mut rng = particle_rng(ensemble.provenance().seed, RESAMPLE_STREAM);
    let offset: f64 = rng.random::<f64>() / n as f64;
    let weights = ensemble.weights();
    let mut points = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut idx = 0;
    for i in 0..n {
        let u = offset + i as f64 / n as f64;
        while u > cumulative && idx + 1 < n {
            idx += 1;
            cumulative += weights[idx];
        }
        points.push(ensemble.points()[idx].clone());
    }
    let prov = ensemble.provenance();
    ParticleEnsemble::uniform(
        points,
        Provenance {
            generator: format!("resampled({})", prov.generator),
            exact: false,
            ..prov.clone()
        },
    )
}

/// Closed-form Dirichlet-multinomial log probability of an ordered sequence
/// with the given outcome counts.
pub fn dirichlet_multinomial_log_probability(alpha: &[f64], counts: &[u64]) -> f64 {
    let a: f64 = alpha.iter().sum();
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    let mut out = ln_gamma(a) - ln_gamma(a + n);
    for (al, &c) in alpha.iter().zip(counts) {
        out += ln_gamma(al + c as f64) - ln_gamma(*al);
    }
    out
}

/// Predictive of the product-of-simplices model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialExchResult {
    pub monte_carlo: PredictiveResult,
    /// Product over measurement kinds of Dirichlet-multinomial terms, for
    /// Dirichlet priors.
    pub closed_form_log_probability: Option<f64>,
    /// Whether Monte Carlo and closed form agree within 3 standard errors.
    pub agrees: Option<bool>,
}

pub fn partial_exch_predictive(
    prior: &PriorSpec,
    particle_count: usize,
    record: &ExperimentRecord,
    registry: &MeasurementRegistry,
) -> Result<PartialExchResult> {
    let alphas: Option<Vec<Vec<f64>>> = match &prior.kind {
        PriorKind::ProductDirichlet { alphas } => Some(alphas.clone()),
        PriorKind::SimplexDirichlet { alpha } => Some(vec![alpha.clone()]),
        PriorKind::Explicit { points } => {
            if points.iter().any(|p| !matches!(p.point, ParamPoint::Simplices(_))) {
                return Err(Error::ModelMismatch(
                    "partially exchangeable prior must live on a product of simplices".into(),
                ));
            }
            None
        }
        _ => {
            return Err(Error::ModelMismatch(
                "partially exchangeable prior must be product_dirichlet, simplex_dirichlet or explicit".into(),
            ))
        }
    };
    if let Some(alphas) = &alphas {
        if alphas.len() != registry.len() {
            return Err(Error::ModelMismatch(format!(
                "prior has {} simplices, registry has {} measurement kinds",
                alphas.len(),
                registry.len()
            )));
        }
    }
    let ensemble = sample_prior(prior, particle_count)?;
    let monte_carlo = predictive(&ensemble, record, registry)?;
    let closed_form_log_probability = match &alphas {
        Some(alphas) => {
            let counts = record.counts(registry)?;
            for (slot, a) in alphas.iter().enumerate() {
                if a.len() != counts[slot].len() {
                    return Err(Error::ModelMismatch(format!(
                        "slot {slot}: {} Dirichlet parameters for {} outcomes",
                        a.len(),
                        counts[slot].len()
                    )));
                }
            }
            Some(
                alphas
                    .iter()
                    .zip(&counts)
                    .map(|(a, c)| dirichlet_multinomial_log_probability(a, c))
                    .sum(),
            )
        }
        None => None,
    };
    let agrees = closed_form_log_probability
        .map(|lp: f64| (monte_carlo.probability - lp.exp()).abs() <= 3.0 * monte_carlo.mc_std_error);
    Ok(PartialExchResult {
        monte_carlo,
        closed_form_log_probability,
        agrees,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExchangeabilityReport {
    /// Every step is moved to a position holding the same kind of
    /// measurement.
    pub preserves_kinds: bool,
    pub original: PredictiveResult,
    pub permuted: PredictiveResult,
    /// |p(original) - p(permuted)|
    pub difference: f64,
    /// The permutation mixes kinds yet the predictive is unchanged, a
    /// stronger symmetry than partial exchangeability requires.
    pub stronger_symmetry: bool,
}

/// Compare predictives of a record and its permutation under one ensemble.
/// A kind-preserving permutation that changes the predictive is an error.
pub fn exchangeability_check(
    record: &ExperimentRecord,
    permutation: &[usize],
    ensemble: &ParticleEnsemble,
    registry: &MeasurementRegistry,
) -> Result<ExchangeabilityReport> {
    let permuted_record = record.permuted(permutation)?;
    let preserves_kinds = permutation
        .iter()
        .enumerate()
        .all(|(i, &src)| record.steps[src].0 == record.steps[i].0);
    let original = predictive(ensemble, record, registry)?;
    let permuted = predictive(ensemble, &permuted_record, registry)?;
    let difference = (original.probability - permuted.probability).abs();
    if preserves_kinds && difference > tolerance::EXCHANGEABILITY {
        return Err(Error::ExchangeabilityViolated { difference });
    }
    Ok(ExchangeabilityReport {
        preserves_kinds,
        stronger_symmetry: !preserves_kinds && difference <= tolerance::EXCHANGEABILITY,
        original,
        permuted,
        difference,
    })
}

/// Outcome distributions `(eta_M)` induced by a density matrix on every
/// registered measurement: the point of the product of simplices that the
/// state corresponds to.
pub fn pushforward(rho: &DensityMatrix, registry: &MeasurementRegistry) -> Result<Vec<Vec<f64>>> {
    let s = embed_state(rho, &standard_basis(rho.dim()))?;
    (0..registry.len())
        .map(|slot| {
            let (id, entry) = registry.by_slot(slot);
            let m = entry.effects.as_ref().ok_or_else(|| {
                Error::ModelMismatch(format!("measurement {id:?} has no effect vectors"))
            })?;
            m.distribution(&s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpt::embed_povm;
    use crate::hilbert::qubit::*;
    use crate::prior::{QuantumPoint, WeightedPoint};
    use approx::assert_abs_diff_eq;

    fn qubit_registry() -> MeasurementRegistry {
        let b = standard_basis(2);
        MeasurementRegistry::with_measurements([
            ("z", embed_povm(&z_measurement(), &b).unwrap()),
            ("x", embed_povm(&x_measurement(), &b).unwrap()),
        ])
    }

    fn point(rho: DensityMatrix) -> ParamPoint {
        ParamPoint::Quantum(QuantumPoint::new(rho))
    }

    fn explicit(points: Vec<(f64, ParamPoint)>) -> ParticleEnsemble {
        let spec = PriorSpec::new(
            PriorKind::Explicit {
                points: points.into_iter().map(|(weight, point)| WeightedPoint { weight, point }).collect(),
            },
            0,
        )
        .unwrap();
        sample_prior(&spec, 1).unwrap()
    }

    #[test]
    fn likelihood_examples() {
        let reg = qubit_registry();
        let up = point(DensityMatrix::from_pure(&plus_z()));
        assert_eq!(likelihood(&up, &ExperimentRecord::default(), &reg).unwrap(), LogLikelihood::Finite(0.0));
        let r = ExperimentRecord::from_steps(&[("z", 0)]);
        assert_eq!(likelihood(&up, &r, &reg).unwrap().value(), 0.0);
        let r = ExperimentRecord::from_steps(&[("z", 0), ("x", 0)]);
        assert_abs_diff_eq!(likelihood(&up, &r, &reg).unwrap().value(), (0.5f64).ln(), epsilon = 1e-15);
        let r = ExperimentRecord::from_steps(&[("x", 1), ("z", 1)]);
        assert_eq!(
            likelihood(&up, &r, &reg).unwrap(),
            LogLikelihood::ZeroProbabilityOutcome { step: 1 }
        );
        assert!(matches!(
            likelihood(&up, &ExperimentRecord::from_steps(&[("y", 0)]), &reg),
            Err(Error::UnknownMeasurement(_))
        ));
        assert!(matches!(
            likelihood(&up, &ExperimentRecord::from_steps(&[("z", 2)]), &reg),
            Err(Error::OutcomeOutOfRange { .. })
        ));
        let simplex = ParamPoint::Simplices(vec![vec![0.5, 0.5]]);
        assert!(matches!(
            likelihood(&simplex, &ExperimentRecord::from_steps(&[("x", 0)]), &reg),
            Err(Error::ModelMismatch(_))
        ));
    }

    #[test]
    fn degenerate_mixture_equals_likelihood() {
        let reg = qubit_registry();
        let rho = from_bloch([0.3, 0.1, -0.2]).unwrap();
        let e = explicit(vec![(1.0, point(rho.clone()))]);
        let r = ExperimentRecord::from_steps(&[("z", 0), ("x", 1), ("z", 1)]);
        let pred = predictive(&e, &r, &reg).unwrap();
        let l = likelihood(&point(rho), &r, &reg).unwrap().value();
        assert_abs_diff_eq!(pred.log_probability, l, epsilon = 1e-15);
        assert_eq!(pred.mc_std_error, 0.0);
        assert!(pred.exact);
    }

    #[test]
    fn hilbert_schmidt_single_outcome_symmetry() {
        let reg = qubit_registry();
        let e = sample_prior(&PriorSpec::new(PriorKind::HilbertSchmidt { n: 2 }, 99).unwrap(), 20_000).unwrap();
        let pred = predictive(&e, &ExperimentRecord::from_steps(&[("z", 0)]), &reg).unwrap();
        assert!((pred.probability - 0.5).abs() <= 3.0 * pred.mc_std_error, "{pred:?}");
        assert!(pred.mc_std_error > 0.0);
    }

    #[test]
    fn beta_binomial_sequence() {
        let reg = MeasurementRegistry::with_kinds([("coin", 2)]);
        let spec = PriorSpec::new(PriorKind::SimplexDirichlet { alpha: vec![1.0, 1.0] }, 5).unwrap();
        let e = sample_prior(&spec, 100_000).unwrap();
        for (a, b) in [(3usize, 1usize), (0, 4), (2, 2), (5, 0)] {
            let mut steps = vec![("coin".to_string(), 0); a];
            steps.extend(vec![("coin".to_string(), 1); b]);
            let pred = predictive(&e, &ExperimentRecord::new(steps), &reg).unwrap();
            // B(1+a, 1+b) / B(1, 1) = a! b! / (a+b+1)!
            let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
            let exact = fact(a) * fact(b) / fact(a + b + 1);
            assert!((pred.probability - exact).abs() <= 3.0 * pred.mc_std_error, "{a},{b}: {pred:?} vs {exact}");
        }
    }

    #[test]
    fn posterior_examples() {
        let reg = MeasurementRegistry::with_kinds([("coin", 2)]);
        let spec = PriorSpec::new(PriorKind::SimplexDirichlet { alpha: vec![1.0, 1.0] }, 17).unwrap();
        let prior = sample_prior(&spec, 100_000).unwrap();
        let same = posterior_update(&prior, &ExperimentRecord::default(), &reg).unwrap();
        assert_eq!(same.points(), prior.points());
        for (a, b) in same.log_weights().iter().zip(prior.log_weights()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }

        let post = posterior_update(&prior, &ExperimentRecord::repeated("coin", 0, 5), &reg).unwrap();
        let next = predictive(&post, &ExperimentRecord::from_steps(&[("coin", 0)]), &reg).unwrap();
        assert!((next.probability - 6.0 / 7.0).abs() <= 3.0 * next.mc_std_error, "{next:?}");
    }

    #[test]
    fn all_weights_zero() {
        let reg = qubit_registry();
        let e = explicit(vec![(1.0, point(DensityMatrix::from_pure(&plus_z())))]);
        assert!(matches!(
            posterior_update(&e, &ExperimentRecord::from_steps(&[("z", 1)]), &reg),
            Err(Error::AllWeightsZero)
        ));
        let pred = predictive(&e, &ExperimentRecord::from_steps(&[("z", 1)]), &reg).unwrap();
        assert_eq!(pred.probability, 0.0);
        assert_eq!(pred.log_probability, f64::NEG_INFINITY);
    }

    #[test]
    fn partial_exch_examples() {
        let reg = MeasurementRegistry::with_kinds([("a", 2), ("b", 3)]);
        let spec = PriorSpec::new(
            PriorKind::ProductDirichlet { alphas: vec![vec![1.0, 1.0], vec![1.0, 1.0, 1.0]] },
            23,
        )
        .unwrap();
        let r = ExperimentRecord::from_steps(&[("a", 0), ("b", 2), ("a", 0), ("b", 1)]);
        let res = partial_exch_predictive(&spec, 50_000, &r, &reg).unwrap();
        // factorized oracle: Polya urns per kind
        let a_part = (1.0 / 2.0) * (2.0 / 3.0);
        let b_part = (1.0 / 3.0) * (1.0 / 4.0);
        assert_abs_diff_eq!(res.closed_form_log_probability.unwrap().exp(), a_part * b_part, epsilon = 1e-14);
        assert_eq!(res.agrees, Some(true));

        let det = PriorSpec::new(
            PriorKind::Explicit {
                points: vec![WeightedPoint {
                    weight: 1.0,
                    point: ParamPoint::Simplices(vec![vec![0.3, 0.7], vec![0.2, 0.5, 0.3]]),
                }],
            },
            0,
        )
        .unwrap();
        let res = partial_exch_predictive(&det, 1, &r, &reg).unwrap();
        assert_abs_diff_eq!(res.monte_carlo.probability, 0.3 * 0.3 * 0.3 * 0.5, epsilon = 1e-15);
        assert_eq!(res.closed_form_log_probability, None);

        let hs = PriorSpec::new(PriorKind::HilbertSchmidt { n: 2 }, 0).unwrap();
        assert!(partial_exch_predictive(&hs, 10, &r, &reg).is_err());
    }

    #[test]
    fn single_kind_matches_exchangeable_path_bitwise() {
        let reg = MeasurementRegistry::with_kinds([("die", 3)]);
        let spec = PriorSpec::new(PriorKind::SimplexDirichlet { alpha: vec![0.5, 1.0, 2.0] }, 8).unwrap();
        let outcomes = [0usize, 2, 2, 1, 0, 2];
        let record = ExperimentRecord::new(outcomes.iter().map(|&o| ("die".to_string(), o)).collect());
        let partial = partial_exch_predictive(&spec, 5000, &record, &reg).unwrap();
        let ensemble = sample_prior(&spec, 5000).unwrap();
        let plain = exchangeable_predictive(&ensemble, &outcomes).unwrap();
        assert_eq!(partial.monte_carlo, plain);
    }

    #[test]
    fn exchangeability_examples() {
        let reg = qubit_registry();
        let e = sample_prior(&PriorSpec::new(PriorKind::HilbertSchmidt { n: 2 }, 4).unwrap(), 2000).unwrap();
        let r = ExperimentRecord::from_steps(&[("z", 0), ("x", 1), ("z", 1), ("x", 1)]);
        let swap = exchangeability_check(&r, &[2, 1, 0, 3], &e, &reg).unwrap();
        assert!(swap.preserves_kinds);
        assert!(swap.difference <= 1e-12);
        let id = exchangeability_check(&r, &[0, 1, 2, 3], &e, &reg).unwrap();
        assert!(id.preserves_kinds && id.difference == 0.0);
        let rev = exchangeability_check(&r, &[3, 2, 1, 0], &e, &reg).unwrap();
        assert!(!rev.preserves_kinds);
        assert!(rev.stronger_symmetry);
        assert!(matches!(
            exchangeability_check(&r, &[0, 0, 1, 2], &e, &reg),
            Err(Error::BadPermutation(_))
        ));
        assert!(matches!(
            exchangeability_check(&r, &[0, 1], &e, &reg),
            Err(Error::BadPermutation(_))
        ));
    }

    #[test]
    fn pushforward_of_plus_z() {
        let reg = qubit_registry();
        let eta = pushforward(&DensityMatrix::from_pure(&plus_z()), &reg).unwrap();
        assert_abs_diff_eq!(eta[0][0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eta[1][0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn resampling_preserves_mean() {
        let reg = qubit_registry();
        let e = sample_prior(&PriorSpec::new(PriorKind::HilbertSchmidt { n: 2 }, 31).unwrap(), 20_000).unwrap();
        let r = ExperimentRecord::repeated("z", 0, 10);
        let plain = posterior_update(&e, &r, &reg).unwrap();
        let resampled = posterior_update_with(&e, &r, &reg, Some(Resampling { ess_fraction: 1.0 })).unwrap();
        assert!(!resampled.provenance().exact);
        assert_abs_diff_eq!(resampled.effective_sample_size(), 20_000.0, epsilon = 1e-6);
        let m1 = crate::prior::ensemble_statistics(&plain).unwrap().mean_state.unwrap();
        let m2 = crate::prior::ensemble_statistics(&resampled).unwrap().mean_state.unwrap();
        assert!(m1.matrix().max_abs_diff(m2.matrix()) < 0.01);
        let again = posterior_update_with(&e, &r, &reg, Some(Resampling { ess_fraction: 1.0 })).unwrap();
        assert_eq!(again, resampled);
    }
}
