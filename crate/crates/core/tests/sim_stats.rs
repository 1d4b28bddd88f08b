//! Statistical agreement between the Monte Carlo and the analytic models.

use mrlat::analysis;
use mrlat::config::ApparatusConfig;
use mrlat::planner::{pattern_success_probability, PlanPulse, ResponseModel, SequencePlan};
use mrlat::pulse::PulseShape;
use mrlat::sim::{run_ensemble, ShotConfig, ThermalMode};

const TAU: f64 = std::f64::consts::TAU;

fn plan_at_sites(
    sites: &[i64],
    p_max: f64,
    sigma_w: f64,
    loops: u32,
    pushout: (f64, f64),
    cfg: &ApparatusConfig,
) -> SequencePlan {
    let split_hz = cfg.site_splitting(45.0) / TAU;
    let pulses = sites
        .iter()
        .map(|&s| {
            PlanPulse::new_pi(
                PulseShape::Gaussian { sigma_t: 20e-6, truncation: 2.0 },
                s as f64 * split_hz,
                ResponseModel::Gaussian { p_max, sigma_w },
            )
            .unwrap()
        })
        .collect();
    SequencePlan {
        pulses,
        loop_count: loops,
        current: 45.0,
        pushout_survival_f4: pushout.0,
        pushout_survival_f3: pushout.1,
        init_efficiency: 1.0,
        seed: None,
    }
}

/// Surviving-atom frequency per site matches the composed analytic spectrum
/// times the filling factor within 3 binomial standard errors at 1e5 shots.
#[test]
fn per_site_survival_matches_composed_spectrum() {
    let cfg = ApparatusConfig::default();
    let p_max = 0.843;
    let sigma_w = TAU * 6.4e3;
    let plan = plan_at_sites(&[0], p_max, sigma_w, 2, (0.0, 1.0), &cfg);
    let mut sc = ShotConfig::new(plan, 424242);
    sc.lattice_extent = 7;
    sc.p_a = 0.5;
    sc.drift_rate = 0.0;
    sc.thermal_mode = ThermalMode::Disabled;
    let n_shots = 100_000u64;
    let result = run_ensemble(&sc, &cfg, n_shots, None).unwrap();
    let counts = result.survivors_per_site();
    let split = cfg.site_splitting(45.0);
    for site in -3i64..=3 {
        let delta = site as f64 * split;
        let transfer = p_max * (-delta * delta / (2.0 * sigma_w * sigma_w)).exp();
        let expect = sc.p_a * transfer * transfer;
        let freq = *counts.get(&site).unwrap_or(&0) as f64 / n_shots as f64;
        let se = (expect * (1.0 - expect) / n_shots as f64).sqrt();
        assert!(
            (freq - expect).abs() <= 3.0 * se.max(1e-5),
            "site {site}: frequency {freq:.5} vs analytic {expect:.5} (SE {se:.5})"
        );
    }
}

/// With a realistic push-out, atoms at non-addressed sites survive with at
/// most `pushout_survival_f4 + P(delta_site)` per loop.
#[test]
fn non_addressed_sites_have_no_spurious_survival_channel() {
    let cfg = ApparatusConfig::default();
    let p_max = 0.843;
    let sigma_w = TAU * 6.4e3;
    let plan = plan_at_sites(&[0], p_max, sigma_w, 1, (0.01, 0.99), &cfg);
    let mut sc = ShotConfig::new(plan, 7171);
    sc.lattice_extent = 11;
    sc.p_a = 1.0;
    sc.drift_rate = 0.0;
    sc.thermal_mode = ThermalMode::Disabled;
    let n_shots = 50_000u64;
    let result = run_ensemble(&sc, &cfg, n_shots, None).unwrap();
    let counts = result.survivors_per_site();
    let split = cfg.site_splitting(45.0);
    for site in [-5i64, -3, -2, 2, 3, 5] {
        let delta = site as f64 * split;
        let transfer = p_max * (-delta * delta / (2.0 * sigma_w * sigma_w)).exp();
        let bound = 0.01 + transfer;
        let freq = *counts.get(&site).unwrap_or(&0) as f64 / n_shots as f64;
        let se = (bound * (1.0 - bound) / n_shots as f64).sqrt();
        assert!(
            freq <= bound + 4.0 * se,
            "site {site}: survival {freq:.5} exceeds bound {bound:.5}"
        );
    }
}

/// A drift sweep covering many sites inflates the aggregated position-space
/// peak from sigma_z(M) toward the box-convolved width.
#[test]
fn drift_broadens_position_space_peak() {
    let cfg = ApparatusConfig::default();
    let p_max = 0.843;
    let sigma_w = TAU * 6.4e3;
    let plan = plan_at_sites(&[0], p_max, sigma_w, 2, (0.0, 1.0), &cfg);
    let mut sc = ShotConfig::new(plan, 90901);
    sc.lattice_extent = 9;
    sc.p_a = 1.0;
    // 0.005 sites per shot, 4000 shots: 20 full periods, uniform modulo one site.
    sc.drift_rate = 0.005 * cfg.site_spacing();
    sc.shot_interval = 1.0;
    sc.thermal_mode = ThermalMode::Resampled;
    let n_shots = 4000u64;
    let result = run_ensemble(&sc, &cfg, n_shots, None).unwrap();

    // In the lattice frame (survival per site) the drift sweep convolves the
    // selectivity profile with the one-site box: each site integrates the
    // transfer over one full period of addressed positions.
    let counts = result.survivors_per_site();
    let total: u64 = counts.values().sum();
    assert!(total > 2000, "need statistics, got {total}");
    let xs: Vec<f64> = (-4..=4).map(f64::from).collect();
    let ys: Vec<f64> =
        (-4i64..=4).map(|s| *counts.get(&s).unwrap_or(&0) as f64).collect();
    let fit = analysis::fit_gaussian(&xs, &ys).unwrap();

    // Oracle: the planned selectivity width (plus the small axial thermal
    // width) convolved with the one-site drift box.
    let site = cfg.site_spacing();
    let split = cfg.site_splitting(45.0);
    let sigma_z = sigma_w / 2.0f64.sqrt() / split;
    let (sig_ax, _) = cfg.thermal_sigmas();
    let intrinsic = (sigma_z * sigma_z + (sig_ax / site) * (sig_ax / site)).sqrt();
    let oracle = analysis::drift_convolve(intrinsic).unwrap();
    assert!(
        (fit.sigma - oracle.width).abs() < 0.06,
        "per-site width {:.4} vs convolution oracle {:.4}",
        fit.sigma,
        oracle.width
    );
    // Clearly inflated above the drift-free selectivity width.
    assert!(fit.sigma > sigma_z + 0.05, "width {:.4} not broadened", fit.sigma);
}

/// The closed-form whole-pattern probability agrees with the Monte Carlo
/// all-target-sites-survive frequency.
#[test]
fn pattern_success_agrees_with_monte_carlo() {
    let cfg = ApparatusConfig::default();
    let p_max = 0.843;
    let sigma_w = TAU * 6.4e3;
    let sites = [0i64, 2, 4, 6, 8, 10];
    let plan = plan_at_sites(&sites, p_max, sigma_w, 2, (0.0, 1.0), &cfg);
    let mut sc = ShotConfig::new(plan, 5150);
    sc.lattice_extent = 24;
    sc.p_a = 0.5;
    sc.drift_rate = 0.0;
    sc.thermal_mode = ThermalMode::Disabled;
    let n_shots = 100_000u64;
    let result = run_ensemble(&sc, &cfg, n_shots, None).unwrap();

    // Neighbor-pulse spectral tails at two-site spacing shift the per-loop
    // keep probability by under 1e-4 relative; far below the 3 SE band.
    let p_keep = p_max * p_max;
    let predicted = pattern_success_probability(6, 0.5, p_keep).unwrap().p_full;
    let hits = result
        .shots
        .iter()
        .filter(|shot| {
            sites.iter().all(|s| shot.survivors.iter().any(|a| a.site == *s))
        })
        .count();
    let freq = hits as f64 / n_shots as f64;
    let se = (predicted * (1.0 - predicted) / n_shots as f64).sqrt();
    assert!(
        (freq - predicted).abs() <= 3.0 * se,
        "all-sites frequency {freq:.5} vs predicted {predicted:.5} (SE {se:.6})"
    );
}
