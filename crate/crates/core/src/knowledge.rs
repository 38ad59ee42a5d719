//! Uncertain preparations and measurements: mixtures of states, mixtures of
//! measurements, and dithers (stochastic post-processing of outcomes, which
//! include coarsenings).
//!
//! Everything works on effect vectors, so the same algebra serves quantum,
//! classical and custom systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpt::{GptEffect, GptMeasurement, GptState};
use crate::tolerance;

/// A probability vector over alternatives. No silent renormalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::BadWeights("no weights".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| w.is_nan() || **w < 0.0) {
            return Err(Error::BadWeights(format!("weight {i} = {w} is negative")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tolerance::STOCHASTIC {
            return Err(Error::BadWeights(format!("weights sum to {total}")));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(w: MixtureWeights) -> Self {
        w.0
    }
}

/// Column-stochastic matrix `Q[j][i] = P(new outcome j | old outcome i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DitherMatrix {
    rows: Vec<Vec<f64>>,
}

impl DitherMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || cols == 0 {
            return Err(Error::BadDither("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::BadDither("ragged rows".into()));
        }
        for (j, row) in rows.iter().enumerate() {
            for (i, q) in row.iter().enumerate() {
                if q.is_nan() || *q < 0.0 {
                    return Err(Error::BadDither(format!("entry ({j}, {i}) = {q} is negative")));
                }
            }
        }
        for i in 0..cols {
            let total: f64 = rows.iter().map(|r| r[i]).sum();
            if (total - 1.0).abs() > tolerance::STOCHASTIC {
                return Err(Error::BadDither(format!("column {i} sums to {total}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|j| (0..k).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    /// Every old outcome maps uniformly onto `new` outcomes.
    pub fn uniform(new: usize, old: usize) -> Self {
        Self {
            rows: vec![vec![1.0 / new as f64; old]; new],
        }
    }

    /// 0/1 matrix merging old outcomes into the listed groups.
    pub fn coarsening(groups: &[Vec<usize>], old: usize) -> Result<Self> {
        let mut rows = vec![vec![0.0; old]; groups.len()];
        for (j, g) in groups.iter().enumerate() {
            for &i in g {
                if i >= old {
                    return Err(Error::BadDither(format!("outcome {i} out of range")));
                }
                rows[j][i] = 1.0;
            }
        }
        Self::new(rows)
    }

    pub fn new_outcomes(&self) -> usize {
        self.rows.len()
    }

    pub fn old_outcomes(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Matrix product `self * first`: apply `first`, then `self`.
    pub fn after(&self, first: &DitherMatrix) -> Result<DitherMatrix> {
        if self.old_outcomes() != first.new_outcomes() {
            return Err(Error::ShapeMismatch(format!(
                "cannot chain a {}-input dither after a {}-output dither",
                self.old_outcomes(),
                first.new_outcomes()
            )));
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                (0..first.old_outcomes())
                    .map(|i| row.iter().zip(&first.rows).map(|(q, f)| q * f[i]).sum())
                    .collect()
            })
            .collect();
        // the product of column-stochastic matrices is column-stochastic up to
        // rounding; no re-check at the strict tolerance
        Ok(DitherMatrix { rows })
    }

    /// `Q p`
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(p).map(|(q, x)| q * x).sum())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for DitherMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<DitherMatrix> for Vec<Vec<f64>> {
    fn from(d: DitherMatrix) -> Self {
        d.rows
    }
}

/// `sum_k q_k s_k`
pub fn mix_preparations(states: &[GptState], q: &MixtureWeights) -> Result<GptState> {
    if states.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            found: states.len(),
        });
    }
    let dim = states[0].real_dim();
    let mut out = vec![0.0; dim];
    for (s, w) in states.iter().zip(q.as_slice()) {
        if s.real_dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.real_dim(),
            });
        }
        for (acc, c) in out.iter_mut().zip(s.coords()) {
            *acc += w * c;
        }
    }
    Ok(GptState::new(out))
}

/// Measurement performed as `m1` with probability `q[0]` and `m2` with
/// `q[1]`, recording which one ran: the outcome set is the disjoint union
/// and the effects are `q1 o1_i` and `q2 o2_j`.
pub fn mix_measurements(
    m1: &GptMeasurement,
    m2: &GptMeasurement,
    q: &MixtureWeights,
) -> Result<GptMeasurement> {
    if m1.system != m2.system {
        return Err(Error::SystemMismatch(m1.system.describe(), m2.system.describe()));
    }
    if q.len() != 2 {
        return Err(Error::BadWeights(format!("need two weights, got {}", q.len())));
    }
    let [q1, q2] = [q.as_slice()[0], q.as_slice()[1]];
    let mut labels = Vec::with_capacity(m1.outcome_count() + m2.outcome_count());
    let mut effects = Vec::with_capacity(labels.capacity());
    for (m, w) in [(m1, q1), (m2, q2)] {
        for (l, e) in m.outcome_labels.iter().zip(&m.effects) {
            labels.push(format!("{}/{}", m.label, l));
            effects.push(e.scaled(w));
        }
    }
    GptMeasurement::new(
        format!("mix({},{})", m1.label, m2.label),
        m1.system,
        labels,
        effects,
    )
}

/// Post-process the outcomes of `m` through `q`: `o''_j = sum_i Q_ji o_i`.
pub fn dither_measurement(m: &GptMeasurement, q: &DitherMatrix) -> Result<GptMeasurement> {
    if q.old_outcomes() != m.outcome_count() {
        return Err(Error::ShapeMismatch(format!(
            "dither expects {} outcomes, measurement {:?} has {}",
            q.old_outcomes(),
            m.label,
            m.outcome_count()
        )));
    }
    let dim = m.system.real_dim();
    let mut labels = Vec::with_capacity(q.new_outcomes());
    let mut effects = Vec::with_capacity(q.new_outcomes());
    for (j, row) in q.rows().iter().enumerate() {
        let mut coords = vec![0.0; dim];
        for (w, e) in row.iter().zip(&m.effects) {
            for (acc, c) in coords.iter_mut().zip(e.coords()) {
                *acc += w * c;
            }
        }
        effects.push(GptEffect::new(coords));
        labels.push(dithered_label(row, &m.outcome_labels, j));
    }
    GptMeasurement::new(format!("dither({})", m.label), m.system, labels, effects)
}

/// Coarsened outcomes are named by joining the merged labels with `|`;
/// genuinely stochastic rows get a positional name.
fn dithered_label(row: &[f64], old: &[String], j: usize) -> String {
    if row.iter().all(|q| *q == 0.0 || *q == 1.0) {
        let merged: Vec<&str> = row
            .iter()
            .zip(old)
            .filter(|(q, _)| **q == 1.0)
            .map(|(_, l)| l.as_str())
            .collect();
        if !merged.is_empty() {
            return merged.join("|");
        }
    }
    format!("d{j}")
}

/// One step of a measurement construction.
#[derive(Debug, Clone)]
pub enum Step {
    /// Mix the current measurement (weight `weights[0]`) with `other`.
    MixWith {
        other: GptMeasurement,
        weights: MixtureWeights,
    },
    Dither(DitherMatrix),
}

/// Fold a chain of mixtures and dithers over `base`. Runs of consecutive
/// dithers are fused into one product matrix before being applied.
pub fn compose(base: &GptMeasurement, steps: &[Step]) -> Result<GptMeasurement> {
    let mut current = base.clone();
    let mut pending: Option<DitherMatrix> = None;
    for step in steps {
        match step {
            Step::Dither(q) => {
                pending = Some(match pending.take() {
                    Some(p) => q.after(&p)?,
                    None => q.clone(),
                });
            }
            Step::MixWith { other, weights } => {
                if let Some(p) = pending.take() {
                    current = dither_measurement(&current, &p)?;
                }
                current = mix_measurements(&current, other, weights)?;
            }
        }
    }
    if let Some(p) = pending {
        current = dither_measurement(&current, &p)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpt::{embed_povm, embed_state, standard_basis};
    use crate::hilbert::qubit::*;
    use crate::hilbert::DensityMatrix;
    use approx::assert_abs_diff_eq;

    fn qubit(m: &crate::hilbert::Povm) -> GptMeasurement {
        embed_povm(m, &standard_basis(2)).unwrap()
    }

    fn state(r: [f64; 3]) -> GptState {
        embed_state(&from_bloch(r).unwrap(), &standard_basis(2)).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_abs_diff_eq!(*x, *y, epsilon = tol);
        }
    }

    #[test]
    fn weights_validation() {
        assert!(MixtureWeights::new(vec![0.25, 0.75]).is_ok());
        assert!(MixtureWeights::new(vec![0.5, 0.6]).is_err());
        assert!(MixtureWeights::new(vec![-0.1, 1.1]).is_err());
        assert!(MixtureWeights::new(vec![f64::NAN, 1.0]).is_err());
        assert!(MixtureWeights::new(vec![]).is_err());
    }

    #[test]
    fn dither_validation() {
        assert!(DitherMatrix::new(vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).is_ok());
        let err = DitherMatrix::new(vec![vec![0.5, 1.0], vec![0.4, 0.0]]).unwrap_err();
        assert_eq!(err.invariant(), Some("column_stochastic"));
        assert!(DitherMatrix::new(vec![vec![1.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn mix_preparations_examples() {
        let b = standard_basis(2);
        let s1 = state([0.0, 0.0, 1.0]);
        let s2 = state([0.0, 0.0, -1.0]);
        let q = MixtureWeights::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(mix_preparations(&[s1.clone(), s2.clone()], &q).unwrap(), s1);

        let half = MixtureWeights::new(vec![0.5, 0.5]).unwrap();
        let mix = mix_preparations(&[s1.clone(), s2.clone()], &half).unwrap();
        // oracle: average the matrices, then embed
        let avg = DensityMatrix::new(
            &plus_z().projector().scale_real(0.5) + &minus_z().projector().scale_real(0.5),
        )
        .unwrap();
        close(mix.coords(), embed_state(&avg, &b).unwrap().coords(), 1e-15);

        let o = &qubit(&x_measurement()).effects[0];
        let q = MixtureWeights::new(vec![0.3, 0.7]).unwrap();
        let a = state([0.6, 0.1, 0.2]);
        let c = state([-0.2, 0.3, 0.9]);
        let m = mix_preparations(&[a.clone(), c.clone()], &q).unwrap();
        let lhs = crate::gpt::vector_probability(o, &m).unwrap();
        let rhs = 0.3 * crate::gpt::vector_probability(o, &a).unwrap()
            + 0.7 * crate::gpt::vector_probability(o, &c).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        assert!(matches!(
            mix_preparations(&[a], &q),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mix_measurements_examples() {
        let z = qubit(&z_measurement());
        let x = qubit(&x_measurement());
        let s = state([0.0, 0.0, 1.0]);

        let first = mix_measurements(&z, &x, &MixtureWeights::new(vec![1.0, 0.0]).unwrap()).unwrap();
        close(&first.distribution(&s).unwrap(), &[1.0, 0.0, 0.0, 0.0], 1e-15);

        let half = mix_measurements(&z, &x, &MixtureWeights::new(vec![0.5, 0.5]).unwrap()).unwrap();
        close(&half.distribution(&s).unwrap(), &[0.5, 0.0, 0.25, 0.25], 1e-15);
        assert_eq!(half.outcome_labels, vec!["z/0", "z/1", "x/0", "x/1"]);

        let unit = crate::gpt::embed_effect(&crate::hilbert::Effect::identity(2), &standard_basis(2)).unwrap();
        close(&half.effect_sum(), unit.coords(), 1e-10);

        let classical = crate::gpt::classical_system(4).measurements[0].clone();
        assert!(matches!(
            mix_measurements(&z, &classical, &MixtureWeights::new(vec![0.5, 0.5]).unwrap()),
            Err(Error::SystemMismatch(..))
        ));
    }

    #[test]
    fn dither_examples() {
        let t = qubit(&trine());
        let s = state([0.2, -0.3, 0.5]);
        let base = t.distribution(&s).unwrap();

        let same = dither_measurement(&t, &DitherMatrix::identity(3)).unwrap();
        close(&same.distribution(&s).unwrap(), &base, 1e-15);

        let coarse = DitherMatrix::coarsening(&[vec![0, 1], vec![2]], 3).unwrap();
        assert_eq!(coarse.rows(), &[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let c = dither_measurement(&t, &coarse).unwrap();
        close(&c.distribution(&s).unwrap(), &[base[0] + base[1], base[2]], 1e-15);
        assert_eq!(c.outcome_labels, vec!["0|1", "2"]);

        let blind = dither_measurement(&t, &DitherMatrix::uniform(2, 3)).unwrap();
        for r in [[0.0, 0.0, 1.0], [0.5, 0.5, 0.0], [0.0, 0.0, 0.0]] {
            close(&blind.distribution(&state(r)).unwrap(), &[0.5, 0.5], 1e-15);
        }
        assert!(matches!(
            dither_measurement(&t, &DitherMatrix::identity(2)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn compose_examples() {
        let z = qubit(&z_measurement());
        let x = qubit(&x_measurement());
        let s = state([0.4, 0.1, -0.6]);

        assert_eq!(compose(&z, &[]).unwrap(), z);

        // dither after mix with a block-splitting Q equals mixing the
        // individually dithered parts
        let q = MixtureWeights::new(vec![0.4, 0.6]).unwrap();
        let qz = DitherMatrix::new(vec![vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        let qx = DitherMatrix::new(vec![vec![0.3, 0.5], vec![0.7, 0.5]]).unwrap();
        let mut block = vec![vec![0.0; 4]; 4];
        for j in 0..2 {
            for i in 0..2 {
                block[j][i] = qz.rows()[j][i];
                block[j + 2][i + 2] = qx.rows()[j][i];
            }
        }
        let block = DitherMatrix::new(block).unwrap();
        let lhs = compose(
            &z,
            &[Step::MixWith { other: x.clone(), weights: q.clone() }, Step::Dither(block)],
        )
        .unwrap();
        let rhs = mix_measurements(
            &dither_measurement(&z, &qz).unwrap(),
            &dither_measurement(&x, &qx).unwrap(),
            &q,
        )
        .unwrap();
        // elementwise oracle on the outcome probabilities
        let pz = z.distribution(&s).unwrap();
        let px = x.distribution(&s).unwrap();
        let oracle: Vec<f64> = (0..2)
            .map(|j| 0.4 * (qz.rows()[j][0] * pz[0] + qz.rows()[j][1] * pz[1]))
            .chain((0..2).map(|j| 0.6 * (qx.rows()[j][0] * px[0] + qx.rows()[j][1] * px[1])))
            .collect();
        close(&lhs.distribution(&s).unwrap(), &oracle, 1e-12);
        close(&rhs.distribution(&s).unwrap(), &oracle, 1e-12);

        // coarsen then coarsen equals a single coarsening by the product
        let t = qubit(&trine());
        let q1 = DitherMatrix::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let q2 = DitherMatrix::new(vec![vec![0.25, 1.0], vec![0.75, 0.0]]).unwrap();
        let chained = compose(&t, &[Step::Dither(q1.clone()), Step::Dither(q2.clone())]).unwrap();
        let product = q2.after(&q1).unwrap();
        // matrix-product oracle, by hand
        let expected = [[0.25, 1.0, 1.0], [0.75, 0.0, 0.0]];
        for (row, e) in product.rows().iter().zip(expected) {
            close(row, &e, 1e-15);
        }
        let single = dither_measurement(&t, &product).unwrap();
        close(
            &chained.distribution(&s).unwrap(),
            &single.distribution(&s).unwrap(),
            1e-12,
        );
        let stepwise = dither_measurement(&dither_measurement(&t, &q1).unwrap(), &q2).unwrap();
        close(
            &chained.distribution(&s).unwrap(),
            &stepwise.distribution(&s).unwrap(),
            1e-12,
        );
    }

    #[test]
    fn three_way_mixture_associative() {
        let (a, b, c) = (state([1.0, 0.0, 0.0]), state([0.0, 0.6, 0.0]), state([0.0, 0.0, -0.9]));
        let inner = mix_preparations(&[a.clone(), b.clone()], &MixtureWeights::new(vec![0.25, 0.75]).unwrap()).unwrap();
        let outer = mix_preparations(&[inner, c.clone()], &MixtureWeights::new(vec![0.4, 0.6]).unwrap()).unwrap();
        let flat = mix_preparations(&[a, b, c], &MixtureWeights::new(vec![0.1, 0.3, 0.6]).unwrap()).unwrap();
        close(outer.coords(), flat.coords(), 1e-12);
    }

    #[test]
    fn serde_plain_arrays() {
        let q: DitherMatrix = serde_json::from_str("[[1,1,0],[0,0,1]]").unwrap();
        assert_eq!(q.new_outcomes(), 2);
        assert!(serde_json::from_str::<DitherMatrix>("[[0.5,1],[0.4,0]]").is_err());
        let w: MixtureWeights = serde_json::from_str("[0.5,0.5]").unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
    }
}
