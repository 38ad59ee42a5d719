mod common;

use exchange_q::gpt::{embed_povm, standard_basis};
use exchange_q::hilbert::qubit;
use exchange_q::inference::{posterior_update, predictive, ExperimentRecord, MeasurementRegistry};
use exchange_q::prior::{ensemble_statistics, sample_prior, PriorKind, PriorSpec};
use proptest::prelude::*;
use rand::Rng;

fn qubit_registry() -> MeasurementRegistry {
    let basis = standard_basis(2);
    MeasurementRegistry::with_measurements([
        ("z", embed_povm(&qubit::z_measurement(), &basis).unwrap()),
        ("x", embed_povm(&qubit::x_measurement(), &basis).unwrap()),
        ("trine", embed_povm(&qubit::trine(), &basis).unwrap()),
    ])
}

fn random_record(rng: &mut rand_chacha::ChaCha8Rng, registry: &MeasurementRegistry, len: usize) -> ExperimentRecord {
    let ids: Vec<&str> = registry.ids().collect();
    let steps = (0..len)
        .map(|_| {
            let id = ids[rng.random_range(0..ids.len())];
            let k = registry.get(id).unwrap().outcome_count;
            (id.to_string(), rng.random_range(0..k))
        })
        .collect();
    ExperimentRecord::new(steps)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // sum over the next outcome of p(D, o) equals p(D)
    #[test]
    fn marginals_are_coherent(seed in any::<u64>(), len in 0usize..8) {
        let registry = qubit_registry();
        let ensemble = sample_prior(&PriorSpec::new(PriorKind::HilbertSchmidt { n: 2 }, seed).unwrap(), 2_000).unwrap();
        let mut rng = common::rng(seed);
        let record = random_record(&mut rng, &registry, len);
        let base = predictive(&ensemble, &record, &registry).unwrap().probability;
        for id in ["z", "x", "trine"] {
            let k = registry.get(id).unwrap().outcome_count;
            let total: f64 = (0..k)
                .map(|o| predictive(&ensemble, &record.pushed(id, o), &registry).unwrap().probability)
                .sum();
            prop_assert!((total - base).abs() <= 1e-10, "{total} vs {base}");
        }
    }

    // p(D1 D2) = p(D1) p(D2 | D1)
    #[test]
    fn chain_rule_through_posterior(seed in any::<u64>(), a in 0usize..6, b in 1usize..6) {
        let registry = qubit_registry();
        let ensemble = sample_prior(&PriorSpec::new(PriorKind::HilbertSchmidt { n: 2 }, seed).unwrap(), 2_000).unwrap();
        let mut rng = common::rng(seed ^ 1);
        let first = random_record(&mut rng, &registry, a);
        let second = random_record(&mut rng, &registry, b);
        let joint = predictive(&ensemble, &first.concat(&second), &registry).unwrap();
        let p1 = predictive(&ensemble, &first, &registry).unwrap();
        let post = posterior_update(&ensemble, &first, &registry).unwrap();
        let p2 = predictive(&post, &second, &registry).unwrap();
        prop_assert!((joint.log_probability - (p1.log_probability + p2.log_probability)).abs() <= 1e-10);
    }
}

#[test]
fn posterior_concentrates_on_the_data_generating_state() {
    let registry = qubit_registry();
    let target = qubit::from_bloch([0.6, 0.0, -0.5]).unwrap();
    let pz = 0.5 * (1.0 - 0.5);
    let px = 0.5 * (1.0 + 0.6);
    // balanced synthetic data at the exact frequencies
    let mut steps = Vec::new();
    for i in 0..200 {
        steps.push(("z".to_string(), usize::from(i as f64 >= 200.0 * pz)));
        steps.push(("x".to_string(), usize::from(i as f64 >= 200.0 * px)));
    }
    let record = ExperimentRecord::new(steps);
    let ensemble = sample_prior(&PriorSpec::new(PriorKind::HilbertSchmidt { n: 2 }, 77).unwrap(), 50_000).unwrap();
    let post = posterior_update(&ensemble, &record, &registry).unwrap();
    let mean = ensemble_statistics(&post).unwrap().mean_state.unwrap();
    let r = qubit::bloch_vector(&mean);
    let t = qubit::bloch_vector(&target);
    assert!((r[0] - t[0]).abs() < 0.08 && (r[2] - t[2]).abs() < 0.08, "{r:?} vs {t:?}");
    assert!(post.effective_sample_size() < ensemble.effective_sample_size());
}

#[test]
fn posterior_mean_tracks_beta_binomial() {
    // uniform Dirichlet on two outcomes; after 7 successes in 10 the
    // posterior mean is 8/12
    let registry = MeasurementRegistry::with_kinds([("coin", 2)]);
    let prior = sample_prior(
        &PriorSpec::new(PriorKind::SimplexDirichlet { alpha: vec![1.0, 1.0] }, 3).unwrap(),
        100_000,
    )
    .unwrap();
    let mut steps = vec![("coin", 0); 7];
    steps.extend([("coin", 1); 3]);
    let post = posterior_update(&prior, &ExperimentRecord::from_steps(&steps), &registry).unwrap();
    let eta = ensemble_statistics(&post).unwrap().mean_eta.unwrap();
    assert!((eta[0][0] - 8.0 / 12.0).abs() < 0.005, "{}", eta[0][0]);
}
