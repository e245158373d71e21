mod common;

use std::path::PathBuf;

use approx::assert_relative_eq;
use mdiqkd_core::channel_sim::{build_observables, monte_carlo_yield, pair_yield, PairObservables};
use mdiqkd_core::keyrate::{
    expectation_envelopes, s_minus_upper, s_plus_lower, secure_key_rate, sigma_factors,
    AnalysisInputs,
};
use mdiqkd_core::source_model::Source;
use mdiqkd_core::stat_bounds::{chernoff_lower, chernoff_upper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Secure key rate of the reference sources at 10 km, default channel, N_t = 1e11,
/// recorded at the first verified build.
const FROZEN_RATE_L10: f64 = 7.244_071_386_236_441e-6;

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/observables_L10_Nt1e11.csv")
}

fn reference_observables() -> PairObservables {
    build_observables(
        &common::reference_sources(1e-6, 0.0),
        &common::reference_channel(10.0, 1e11),
    )
    .unwrap()
}

#[test]
fn observables_match_stored_fixture() {
    let obs = reference_observables();
    if std::env::var_os("MDIQKD_REGEN_FIXTURES").is_some() {
        obs.write_csv(std::fs::File::create(fixture_path()).unwrap())
            .unwrap();
    }
    let stored = PairObservables::read_csv(std::fs::File::open(fixture_path()).unwrap()).unwrap();
    assert_eq!(stored.records(), obs.records());
}

#[test]
fn fixture_agrees_with_monte_carlo_on_random_pairs() {
    let ens = common::reference_sources(1e-6, 0.0);
    let params = common::reference_channel(10.0, 1e11);
    let obs = PairObservables::read_csv(std::fs::File::open(fixture_path()).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 2_000_000u64;
    for _ in 0..3 {
        let l = Source::ALL[rng.random_range(0..4)];
        let r = Source::ALL[rng.random_range(0..4)];
        let rec = obs.get(l, r);
        let est = monte_carlo_yield(
            ens.alice.typical_intensity(l),
            ens.bob.typical_intensity(r),
            rec.basis,
            &params,
            trials,
            rng.random(),
        )
        .unwrap();
        let q = rec.rate();
        let sigma = (q * (1.0 - q) / trials as f64).sqrt();
        assert!(
            (est.gain - q).abs() <= 4.0 * sigma + 1e-12,
            "{l}{r}: mc {} vs fixture {q}",
            est.gain
        );
    }
}

#[test]
fn rate_regression_at_ten_km() {
    let inputs = AnalysisInputs::new(
        common::reference_sources(1e-6, 0.0),
        PairObservables::read_csv(std::fs::File::open(fixture_path()).unwrap()).unwrap(),
        mdiqkd_core::stat_bounds::ChernoffConfig::new(1e-7),
        1.16,
    )
    .unwrap();
    let report = secure_key_rate(&inputs).unwrap();
    println!("rate at 10 km: {:.17e}", report.rate);
    assert!(report.rate > 0.0);
    assert_relative_eq!(report.rate, FROZEN_RATE_L10, max_relative = 1e-9);
}

#[test]
fn joint_bounds_beat_per_term_bounds() {
    let inputs = AnalysisInputs::simulated(
        &common::reference_sources(1e-6, 0.01),
        &common::reference_channel(10.0, 1e11),
    )
    .unwrap();
    let sigma = sigma_factors(&inputs.bounds).unwrap();
    let (a, b) = (&inputs.bounds.alice, &inputs.bounds.bob);
    let cfg = &inputs.chernoff;
    let rec = |l, r| *inputs.observables.get(l, r);
    let k = a.upper(Source::X, 1) * b.upper(Source::X, 2) / (1.0 - sigma.sum_y());
    let per_term = |l, r, c: f64, upper: bool| {
        let rr = rec(l, r);
        let n = rr.counts as f64;
        let bound = if upper {
            chernoff_upper(n, cfg)
        } else {
            chernoff_lower(n, cfg)
        };
        c * bound.unwrap() / rr.emitted
    };
    use Source::*;
    let naive_plus = per_term(X, X, a.lower(Y, 1) * b.lower(Y, 2), false)
        + per_term(V, Y, k * a.lower(Y, 0) / a.upper(V, 0), false)
        + per_term(Y, V, k * b.lower(Y, 0) / b.upper(V, 0), false);
    let naive_minus = per_term(Y, Y, k, true)
        + per_term(
            V,
            V,
            k * a.upper(Y, 0) * b.upper(Y, 0) / (a.lower(V, 0) * b.lower(V, 0)),
            true,
        );
    let (plus, _) = s_plus_lower(&inputs, &sigma).unwrap();
    let (minus, _) = s_minus_upper(&inputs, &sigma).unwrap();
    assert!(plus > naive_plus, "{plus} vs {naive_plus}");
    assert!(minus < naive_minus, "{minus} vs {naive_minus}");
}

#[test]
fn envelopes_contain_true_model_rates() {
    for distance in [10.0, 50.0] {
        let ens = common::reference_sources(1e-6, 0.01);
        let params = common::reference_channel(distance, 1e11);
        let inputs = AnalysisInputs::simulated(&ens, &params).unwrap();
        let env = expectation_envelopes(&inputs).unwrap();
        for s in &env.sources {
            let basis = inputs.observables.get(s.alice, s.bob).basis;
            let y = pair_yield(
                ens.alice.typical_intensity(s.alice),
                ens.bob.typical_intensity(s.bob),
                basis,
                &params,
            )
            .unwrap();
            assert!(
                s.rate.contains(y.gain),
                "{}{} at {distance}",
                s.alice,
                s.bob
            );
            assert!(
                s.error_rate.contains(y.error_gain),
                "{}{} at {distance}",
                s.alice,
                s.bob
            );
        }
    }
}
