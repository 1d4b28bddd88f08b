//! Property suites for the pulse transfer models.

use mrlat::ode::OdeOptions;
use mrlat::pulse::{self, PulseDescriptor, Spectrum};
use proptest::prelude::*;

const TAU: f64 = std::f64::consts::TAU;

proptest! {
    #[test]
    fn rect_transfer_is_a_probability(
        delta_khz in -500.0..500.0f64,
        omega_khz in 0.1..200.0f64,
        t_us in 0.0..100.0f64,
    ) {
        let p = pulse::rect_transfer(TAU * delta_khz * 1e3, TAU * omega_khz * 1e3, t_us * 1e-6);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn gaussian_spectrum_is_a_probability(
        delta_khz in -500.0..500.0f64,
        sigma_khz in 0.1..50.0f64,
        p_max in 0.0..1.0f64,
    ) {
        let p = pulse::gaussian_spectrum(TAU * delta_khz * 1e3, TAU * sigma_khz * 1e3, p_max);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(p <= p_max);
    }

    /// Composition bookkeeping: log P_max(M) is linear in M and
    /// sigma_w(M)^2 M is constant, on refitted values.
    #[test]
    fn compose_loops_scaling(
        p_max in 0.2..0.99f64,
        sigma_khz in 1.0..20.0f64,
    ) {
        let base = Spectrum::gaussian(p_max, TAU * sigma_khz * 1e3, 6.0, 25);
        let mut last_log: Option<f64> = None;
        for m in 1..=5u32 {
            let c = pulse::compose_loops(&base, m);
            let (p_fit, s_fit) = c.refit().unwrap();
            let log_p = p_fit.ln();
            if let Some(prev) = last_log {
                prop_assert!((log_p - prev - p_max.ln()).abs() < 1e-6);
            }
            last_log = Some(log_p);
            let invariant = s_fit * s_fit * m as f64;
            let expect = (TAU * sigma_khz * 1e3).powi(2);
            prop_assert!((invariant - expect).abs() / expect < 1e-6);
        }
    }
}

proptest! {
    // Bloch integrations are comparatively expensive; a couple dozen random
    // cases pin the agreement without dominating the test run.
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn bloch_matches_rect_formula_everywhere(
        ratio in -10.0..10.0f64,
        t_us in 2.0..40.0f64,
    ) {
        let t = t_us * 1e-6;
        let pulse_desc = PulseDescriptor::pi_rectangular(t, 0.0).unwrap();
        let omega = pulse_desc.peak_rabi;
        let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let delta = ratio * omega;
        let numeric = pulse::bloch_integrate(&pulse_desc, delta, f64::INFINITY, &opts).unwrap();
        let analytic = pulse::rect_transfer(delta, omega, t);
        prop_assert!((numeric - analytic).abs() < 1e-6,
            "delta/omega = {ratio}: {numeric} vs {analytic}");
    }

    #[test]
    fn bloch_spectra_even_in_detuning(
        sigma_t_us in 5.0..30.0f64,
        delta_khz in 0.0..40.0f64,
    ) {
        let p = PulseDescriptor::pi_gaussian(sigma_t_us * 1e-6, 2.0, 0.0).unwrap();
        let opts = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let plus = pulse::bloch_integrate(&p, TAU * delta_khz * 1e3, f64::INFINITY, &opts).unwrap();
        let minus = pulse::bloch_integrate(&p, -TAU * delta_khz * 1e3, f64::INFINITY, &opts).unwrap();
        prop_assert!((plus - minus).abs() < 1e-8);
    }

    #[test]
    fn bloch_transfer_stays_in_unit_interval(
        sigma_t_us in 5.0..30.0f64,
        delta_khz in -60.0..60.0f64,
        t2_us in 50.0..1000.0f64,
    ) {
        let p = PulseDescriptor::pi_gaussian(sigma_t_us * 1e-6, 2.0, 0.0).unwrap();
        let v = pulse::bloch_integrate(&p, TAU * delta_khz * 1e3, t2_us * 1e-6,
            &OdeOptions::default()).unwrap();
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&v));
    }
}
