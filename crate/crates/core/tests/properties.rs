use proptest::prelude::*;

use fpt_moments::deadtime::{output_distribution, CounterParams};
use fpt_moments::models::{OuParams, WienerParams};
use fpt_moments::moments::{fpt_moment, fpt_variance, refractory_moment};
use fpt_moments::montecarlo::{simulate_counter, simulate_fpt};
use fpt_moments::ElasticThreshold;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counter_pmf_is_normalized(lambda in 0.05..50.0f64, t in 0.1..10.0f64, frac in 0.0..1.2f64) {
        let d = output_distribution(&CounterParams::new(lambda, t, frac * t).unwrap()).unwrap();
        prop_assert!(d.normalization_defect <= 1e-12, "defect {}", d.normalization_defect);
        prop_assert!(d.pmf.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn dead_time_lowers_mean_count(lambda in 0.1..20.0f64, t in 0.5..5.0f64, a in 0.0..0.5f64, b in 0.0..0.5f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-3);
        let m = |tau: f64| output_distribution(&CounterParams::new(lambda, t, tau).unwrap()).unwrap().mean;
        prop_assert!(m(hi) <= m(lo) * (1.0 + 1e-12));
    }

    #[test]
    fn more_noise_shortens_wiener_passage(mu in -1.0..0.0f64, s2 in 5.0..100.0f64, k in 1.1..3.0f64) {
        let t = |s2: f64| fpt_moment(&WienerParams::new(mu, s2, -80.0).unwrap().spec(), -50.0, -70.0, 1, 1e-9).unwrap();
        prop_assert!(t(k * s2) < t(s2));
    }

    #[test]
    fn ou_moments_are_positive(theta in 2.0..10.0f64, rho in -75.0..-55.0f64, s2 in 20.0..500.0f64, p in 0.05..0.95f64) {
        let spec = OuParams::new(theta, rho, s2, -80.0).unwrap().spec();
        prop_assert!(fpt_variance(&spec, -50.0, -70.0, 1e-9).unwrap() > 0.0);
        let th = ElasticThreshold::from_reflecting_probability(-50.0, p).unwrap();
        let m1 = refractory_moment(&spec, &th, 1, 1e-9).unwrap();
        let m2 = refractory_moment(&spec, &th, 2, 1e-9).unwrap();
        prop_assert!(m1 > 0.0 && m2 > m1 * m1);
    }
}

#[test]
fn simulations_are_reproducible() {
    let p = CounterParams::new(2.0, 3.0, 0.4).unwrap();
    let a = simulate_counter(&p, 20_000, 7).unwrap();
    let b = simulate_counter(&p, 20_000, 7).unwrap();
    let c = simulate_counter(&p, 20_000, 8).unwrap();
    assert_eq!(a.counts, b.counts);
    assert_ne!(a.counts, c.counts);

    let spec = WienerParams::new(-0.5, 50.0, -80.0).unwrap().spec();
    let x = simulate_fpt(&spec, -50.0, -70.0, 2_000, 0.05, 3).unwrap();
    let y = simulate_fpt(&spec, -50.0, -70.0, 2_000, 0.05, 3).unwrap();
    assert_eq!(x.mean.to_bits(), y.mean.to_bits());
    assert_eq!(x.std_error.to_bits(), y.std_error.to_bits());
}

#[test]
fn simulation_independent_of_thread_count() {
    let spec = WienerParams::new(0.0, 40.0, -80.0).unwrap().spec();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_fpt(&spec, -50.0, -70.0, 3_000, 0.05, 21).unwrap().mean)
    };
    assert_eq!(run(1).to_bits(), run(4).to_bits());
}
