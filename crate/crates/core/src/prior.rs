//! Seeded particle ensembles: the computational form of a prior over
//! preparations, either density matrices or tuples of simplex points (one
//! outcome distribution per kind of measurement).
//!
//! # Random streams
//!
//! Particle `i` of a prior with seed `s` draws from ChaCha20 keyed by
//! `ChaCha20Rng::seed_from_u64(s)` (PCG32 key expansion) on stream `i`.
//! ChaCha is counter based, so each particle's stream is fixed no matter
//! which thread generates it or in what order. Stream [`RESAMPLE_STREAM`] is
//! reserved for resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gpt::{embed_state, standard_basis, unembed_state, GptState, HermitianBasis};
use crate::hilbert::{DensityMatrix, PureState};
use crate::matrix::ComplexMatrix;
use crate::numeric::{normalize_log_weights, pairwise_sum};
use crate::tolerance;

/// Stream index reserved for systematic resampling.
pub const RESAMPLE_STREAM: u64 = u64::MAX;

/// Generator for particle `stream` of seed `seed`.
pub fn particle_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A density matrix together with its real coordinates in the standard
/// basis, cached because likelihoods are dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumPoint {
    pub rho: DensityMatrix,
    pub state: GptState,
}

impl QuantumPoint {
    pub fn new(rho: DensityMatrix) -> Self {
        let basis = standard_basis(rho.dim());
        Self::with_basis(rho, &basis)
    }

    fn with_basis(rho: DensityMatrix, basis: &HermitianBasis) -> Self {
        let state = embed_state(&rho, basis).expect("basis built for this dimension");
        Self { rho, state }
    }
}

/// A parameter point of the predictive mixture.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamPoint {
    Quantum(QuantumPoint),
    /// One outcome distribution per kind of measurement.
    Simplices(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ParamPointRepr {
    State(DensityMatrix),
    Eta(Vec<Vec<f64>>),
}

impl Serialize for ParamPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ParamPoint::Quantum(q) => ParamPointRepr::State(q.rho.clone()).serialize(s),
            ParamPoint::Simplices(eta) => ParamPointRepr::Eta(eta.clone()).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ParamPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match ParamPointRepr::deserialize(d)? {
            ParamPointRepr::State(rho) => ParamPoint::Quantum(QuantumPoint::new(rho)),
            ParamPointRepr::Eta(eta) => ParamPoint::Simplices(eta),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub weight: f64,
    pub point: ParamPoint,
}

/// Family of the prior measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorKind {
    /// Pure states from normalized complex Gaussian vectors.
    HaarPure { n: usize },
    /// `G G^dag / tr(G G^dag)` with `G` complex Ginibre. For `n = 2` this is
    /// the uniform measure on the Bloch ball.
    HilbertSchmidt { n: usize },
    SimplexDirichlet { alpha: Vec<f64> },
    ProductDirichlet { alphas: Vec<Vec<f64>> },
    /// Cell centres of a `resolution^3` lattice on `[-1, 1]^3` that fall in
    /// the Bloch ball, equally weighted. Qubits only.
    Grid { n: usize, resolution: usize },
    Explicit { points: Vec<WeightedPoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(flatten)]
    pub kind: PriorKind,
    pub seed: u64,
}

fn check_probability_vector(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| x.is_nan() || *x < 0.0) {
        return Err(Error::BadSpec(format!("{what} has a negative or missing entry")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > tolerance::STOCHASTIC {
        return Err(Error::BadSpec(format!("{what} sums to {total}")));
    }
    Ok(())
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.len() < 2 {
        return Err(Error::BadSpec("Dirichlet needs at least two categories".into()));
    }
    if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) {
        return Err(Error::BadSpec(format!("Dirichlet parameters must be positive: {alpha:?}")));
    }
    Ok(())
}

impl PriorSpec {
    pub fn new(kind: PriorKind, seed: u64) -> Result<Self> {
        let spec = Self { kind, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            PriorKind::HaarPure { n } | PriorKind::HilbertSchmidt { n } => {
                if *n < 2 {
                    return Err(Error::BadSpec(format!("state dimension {n} < 2")));
                }
            }
            PriorKind::SimplexDirichlet { alpha } => check_alpha(alpha)?,
            PriorKind::ProductDirichlet { alphas } => {
                if alphas.is_empty() {
                    return Err(Error::BadSpec("product of zero simplices".into()));
                }
                alphas.iter().try_for_each(|a| check_alpha(a))?;
            }
            PriorKind::Grid { n, resolution } => {
                if *n != 2 {
                    return Err(Error::UnsupportedGrid(*n));
                }
                if *resolution < 2 {
                    return Err(Error::BadSpec(format!("grid resolution {resolution} < 2")));
                }
            }
            PriorKind::Explicit { points } => {
                if points.is_empty() {
                    return Err(Error::BadSpec("explicit prior has no points".into()));
                }
                let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
                check_probability_vector(&weights, "explicit weights")?;
                let shape = |p: &ParamPoint| match p {
                    ParamPoint::Quantum(q) => vec![q.rho.dim()],
                    ParamPoint::Simplices(eta) => {
                        std::iter::once(usize::MAX).chain(eta.iter().map(Vec::len)).collect()
                    }
                };
                let first = shape(&points[0].point);
                for (i, wp) in points.iter().enumerate() {
                    if shape(&wp.point) != first {
                        return Err(Error::BadSpec(format!("explicit point {i} has a different shape")));
                    }
                    if let ParamPoint::Simplices(eta) = &wp.point {
                        for (m, v) in eta.iter().enumerate() {
                            check_probability_vector(v, &format!("point {i} component {m}"))?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Short generator description for provenance.
    pub fn generator(&self) -> String {
        match &self.kind {
            PriorKind::HaarPure { n } => format!("haar_pure(n={n})"),
            PriorKind::HilbertSchmidt { n } => format!("hilbert_schmidt(n={n})"),
            PriorKind::SimplexDirichlet { alpha } => format!("simplex_dirichlet({alpha:?})"),
            PriorKind::ProductDirichlet { alphas } => format!("product_dirichlet({alphas:?})"),
            PriorKind::Grid { n, resolution } => format!("grid(n={n}, resolution={resolution})"),
            PriorKind::Explicit { points } => format!("explicit({} points)", points.len()),
        }
    }

    /// Grid and explicit priors are deterministic quadratures, not samples.
    pub fn is_exact(&self) -> bool {
        matches!(self.kind, PriorKind::Grid { .. } | PriorKind::Explicit { .. })
    }
}

/// Where an ensemble came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub particle_count: usize,
    /// True when the ensemble is an exact quadrature (grid or explicit)
    /// rather than a Monte Carlo sample.
    pub exact: bool,
}

/// Weighted particles approximating a measure over parameter points.
/// Log weights are kept normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    points: Vec<ParamPoint>,
    log_weights: Vec<f64>,
    provenance: Provenance,
}

impl ParticleEnsemble {
    pub fn new(points: Vec<ParamPoint>, log_weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::BadSpec("ensemble needs at least one particle".into()));
        }
        if points.len() != log_weights.len() {
            return Err(Error::LengthMismatch {
                expected: points.len(),
                found: log_weights.len(),
            });
        }
        let log_weights = normalize_log_weights(&log_weights).ok_or(Error::AllWeightsZero)?;
        Ok(Self {
            points,
            log_weights,
            provenance,
        })
    }

    pub fn uniform(points: Vec<ParamPoint>, provenance: Provenance) -> Result<Self> {
        let w = vec![0.0; points.len()];
        Self::new(points, w, provenance)
    }

    pub fn points(&self) -> &[ParamPoint] {
        &self.points
    }

    /// Normalized log weights.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `1 / sum_k w_k^2`
    pub fn effective_sample_size(&self) -> f64 {
        let sq: Vec<f64> = self.log_weights.iter().map(|w| (2.0 * w).exp()).collect();
        1.0 / pairwise_sum(&sq)
    }

    /// Same points, new (unnormalized) log weights.
    pub fn reweighted(&self, log_weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        Self::new(self.points.clone(), log_weights, provenance)
    }
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

fn draw_haar(n: usize, rng: &mut ChaCha20Rng) -> Result<DensityMatrix> {
    let v: Vec<Complex64> = (0..n).map(|_| complex_gaussian(rng)).collect();
    Ok(DensityMatrix::from_pure(&PureState::normalized(v)?))
}

fn draw_hilbert_schmidt(n: usize, rng: &mut ChaCha20Rng) -> Result<DensityMatrix> {
    let entries: Vec<Complex64> = (0..n * n).map(|_| complex_gaussian(rng)).collect();
    let g = ComplexMatrix::from_entries(n, entries)?;
    let w = &g * &g.adjoint();
    let t = w.trace().re;
    DensityMatrix::new(w.scale_real(1.0 / t).hermitian_part())
}

fn draw_dirichlet(alpha: &[f64], rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
    let gammas = alpha
        .iter()
        .map(|a| Gamma::new(*a, 1.0).map_err(|e| Error::BadSpec(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    // very small alphas can underflow every draw; redraw on the same stream
    for _ in 0..64 {
        let g: Vec<f64> = gammas.iter().map(|d| d.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 && total.is_finite() {
            return Ok(g.into_iter().map(|x| x / total).collect());
        }
    }
    Err(Error::BadSpec(format!("Dirichlet{alpha:?} draws underflow")))
}

fn bloch_grid(resolution: usize) -> Vec<[f64; 3]> {
    let step = 2.0 / resolution as f64;
    let coord = |i: usize| -1.0 + (i as f64 + 0.5) * step;
    let mut out = Vec::new();
    for i in 0..resolution {
        for j in 0..resolution {
            for k in 0..resolution {
                let r = [coord(i), coord(j), coord(k)];
                if r.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
                    out.push(r);
                }
            }
        }
    }
    out
}

fn parallel_draw<F>(count: usize, seed: u64, draw: F) -> Result<Vec<ParamPoint>>
where
    F: Fn(&mut ChaCha20Rng) -> Result<ParamPoint> + Sync,
{
    (0..count as u64)
        .into_par_iter()
        .map(|i| draw(&mut particle_rng(seed, i)))
        .collect()
}

/// Draw (or enumerate) an ensemble from a prior.
///
/// Sampled kinds produce `count` equally weighted particles; `grid` and
/// `explicit` ignore `count` and return their fixed point sets.
pub fn sample_prior(spec: &PriorSpec, count: usize) -> Result<ParticleEnsemble> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::BadSpec("particle count must be positive".into()));
    }
    let seed = spec.seed;
    let (points, log_weights) = match &spec.kind {
        PriorKind::HaarPure { n } => {
            let basis = standard_basis(*n);
            let pts = parallel_draw(count, seed, |rng| {
                Ok(ParamPoint::Quantum(QuantumPoint::with_basis(draw_haar(*n, rng)?, &basis)))
            })?;
            (pts, vec![0.0; count])
        }
        PriorKind::HilbertSchmidt { n } => {
            let basis = standard_basis(*n);
            let pts = parallel_draw(count, seed, |rng| {
                Ok(ParamPoint::Quantum(QuantumPoint::with_basis(
                    draw_hilbert_schmidt(*n, rng)?,
                    &basis,
                )))
            })?;
            (pts, vec![0.0; count])
        }
        PriorKind::SimplexDirichlet { alpha } => {
            let pts = parallel_draw(count, seed, |rng| {
                Ok(ParamPoint::Simplices(vec![draw_dirichlet(alpha, rng)?]))
            })?;
            (pts, vec![0.0; count])
        }
        PriorKind::ProductDirichlet { alphas } => {
            let pts = parallel_draw(count, seed, |rng| {
                let eta = alphas
                    .iter()
                    .map(|a| draw_dirichlet(a, rng))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ParamPoint::Simplices(eta))
            })?;
            (pts, vec![0.0; count])
        }
        PriorKind::Grid { resolution, .. } => {
            let basis = standard_basis(2);
            let pts = bloch_grid(*resolution)
                .into_par_iter()
                .map(|r| {
                    let rho = crate::hilbert::qubit::from_bloch(r)?;
                    Ok(ParamPoint::Quantum(QuantumPoint::with_basis(rho, &basis)))
                })
                .collect::<Result<Vec<_>>>()?;
            let n = pts.len();
            (pts, vec![0.0; n])
        }
        PriorKind::Explicit { points } => (
            points.iter().map(|p| p.point.clone()).collect(),
            points.iter().map(|p| p.weight.ln()).collect(),
        ),
    };
    let provenance = Provenance {
        generator: spec.generator(),
        seed,
        particle_count: points.len(),
        exact: spec.is_exact(),
    };
    ParticleEnsemble::new(points, log_weights, provenance)
}

/// Summary of an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub particle_count: usize,
    pub effective_sample_size: f64,
    /// Weighted mean density matrix, for quantum ensembles.
    pub mean_state: Option<DensityMatrix>,
    /// Weighted mean of `tr(rho^2)`, for quantum ensembles.
    pub mean_purity: Option<f64>,
    /// Weighted mean of each simplex component, for simplex ensembles.
    pub mean_eta: Option<Vec<Vec<f64>>>,
}

fn weighted_mean_columns(weights: &[f64], rows: &[&[f64]]) -> Vec<f64> {
    let width = rows[0].len();
    (0..width)
        .map(|c| {
            let terms: Vec<f64> = weights.iter().zip(rows).map(|(w, r)| w * r[c]).collect();
            pairwise_sum(&terms)
        })
        .collect()
}

pub fn ensemble_statistics(e: &ParticleEnsemble) -> Result<EnsembleSummary> {
    let weights = e.weights();
    let mut summary = EnsembleSummary {
        particle_count: e.len(),
        effective_sample_size: e.effective_sample_size(),
        mean_state: None,
        mean_purity: None,
        mean_eta: None,
    };
    match &e.points()[0] {
        ParamPoint::Quantum(first) => {
            let mut coords = Vec::with_capacity(e.len());
            let mut purities = Vec::with_capacity(e.len());
            for (p, w) in e.points().iter().zip(&weights) {
                let ParamPoint::Quantum(q) = p else {
                    return Err(Error::ModelMismatch("mixed point kinds in ensemble".into()));
                };
                coords.push(q.state.coords());
                purities.push(w * q.rho.purity());
            }
            let mean = GptState::new(weighted_mean_columns(&weights, &coords));
            let basis = standard_basis(first.rho.dim());
            summary.mean_state = Some(unembed_state(&mean, &basis)?);
            summary.mean_purity = Some(pairwise_sum(&purities));
        }
        ParamPoint::Simplices(first) => {
            let mut means = Vec::with_capacity(first.len());
            for m in 0..first.len() {
                let rows = e
                    .points()
                    .iter()
                    .map(|p| match p {
                        ParamPoint::Simplices(eta) if eta.len() == first.len() => Ok(eta[m].as_slice()),
                        _ => Err(Error::ModelMismatch("mixed point kinds in ensemble".into())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                means.push(weighted_mean_columns(&weights, &rows));
            }
            summary.mean_eta = Some(means);
        }
    }
    Ok(summary)
}
