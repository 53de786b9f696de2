use gram_spectra::covest::{counterexample_inverse_divergence, rate_experiment};
use gram_spectra::ensembles::DesignSpec;
use gram_spectra::mc::{estimate_moment, Engine, Statistic};
use gram_spectra::rng::DEFAULT_SEED;

#[test]
fn forward_and_inverse_rates_agree() {
    let rows = rate_experiment(
        DesignSpec::gaussian,
        &[(100, 10), (200, 20), (400, 40)],
        2.0,
        500,
        DEFAULT_SEED,
        &Engine::new(0).unwrap(),
    )
    .unwrap();
    for r in &rows {
        assert!(r.valid);
        assert_eq!(r.overflow_count, 0);
        assert_eq!(r.resolvent_violations, 0);
    }
    let last = &rows[2];
    let ratio = last.forward_ratio / last.inverse_ratio;
    assert!((0.25..=4.0).contains(&ratio), "forward/inverse = {ratio}");
    for w in rows.windows(2) {
        for (a, b) in [
            (w[0].forward_ratio, w[1].forward_ratio),
            (w[0].inverse_ratio, w[1].inverse_ratio),
        ] {
            assert!((b - a).abs() / a < 0.5, "{a} -> {b}");
        }
    }
}

#[test]
fn counterexample_inverse_error_dwarfs_gaussian_control() {
    let eng = Engine::new(0).unwrap();
    let heavy = counterexample_inverse_divergence(3, 3, 100_000, DEFAULT_SEED, &eng).unwrap();

    let control = estimate_moment(
        &DesignSpec::gaussian(30, 3).unwrap(),
        Statistic::InvCovError,
        1.0,
        100_000,
        DEFAULT_SEED,
        &eng,
    )
    .unwrap();
    let a = control.checkpoint(10_000).unwrap();
    let b = control.checkpoint(100_000).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() <= 2.0 * se, "{a:?} {b:?}");
    assert!(heavy.max_sample >= 100.0 * control.max_sample);
    assert!(heavy.mean >= 1e6 * control.mean);
}
