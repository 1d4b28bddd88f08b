//! Spectral and statistical analysis: Gaussian fits, drift
//! convolution/deconvolution, thermally averaged effective spectra under a
//! radial offset, addressed-region geometry, and offset calibration.

use crate::config::{ApparatusConfig, Position};
use crate::error::{Error, Result};
use crate::fit;
use crate::physics;
use crate::pulse;
use crate::quad;

pub use crate::fit::{fit_gaussian, GaussianFit};

const TAU: f64 = std::f64::consts::TAU;

/// 1/sqrt(12): the standard deviation of the uniform one-site drift kernel.
pub const DRIFT_KERNEL_SIGMA: f64 = 0.288_675_134_594_812_9;

/// Measured widths this close below the kernel floor are treated as
/// drift-dominated and deconvolve to zero instead of failing.
pub const DECONVOLUTION_FEASIBILITY_TOL: f64 = 0.01;

/// A Gaussian peak broadened by the one-site uniform drift kernel.
#[derive(Debug, Clone)]
pub struct DriftBroadened {
    /// Numerically convolved profile, `(z in sites, value)`.
    pub samples: Vec<(f64, f64)>,
    /// Width of the Gaussian with the same variance as the broadened peak:
    /// `sqrt(sigma_z^2 + 1/12)`. This is the width the deconvolution inverts.
    pub width: f64,
    /// Width from a least-squares Gaussian refit of the numerical profile.
    /// Agrees with `width` to a few percent once `sigma_z` is not much
    /// smaller than the kernel itself.
    pub refit_width: f64,
    /// Input width (sites).
    pub sigma_z: f64,
}

fn drift_width(sigma_z: f64) -> f64 {
    (sigma_z * sigma_z + 1.0 / 12.0).sqrt()
}

/// Convolve a unit Gaussian peak of width `sigma_z` (sites) with the uniform
/// kernel of full width one site and refit the broadened peak.
pub fn drift_convolve(sigma_z: f64) -> Result<DriftBroadened> {
    if !(sigma_z > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma_z must be > 0, got {sigma_z}")));
    }
    let half_span = (4.0 * sigma_z + 1.0).max(3.0);
    let n = 600;
    let samples: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let z = -half_span + 2.0 * half_span * i as f64 / n as f64;
            let v = quad::integrate_1d(
                |u| (-(z - u) * (z - u) / (2.0 * sigma_z * sigma_z)).exp(),
                -0.5,
                0.5,
                32,
            );
            (z, v)
        })
        .collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let refit = fit::fit_gaussian(&xs, &ys)?;
    Ok(DriftBroadened {
        samples,
        width: drift_width(sigma_z),
        refit_width: refit.sigma,
        sigma_z,
    })
}

/// Invert the drift broadening: find `sigma` with
/// `drift_convolve(sigma).width = measured` to better than 1e-4 sites.
///
/// Measured widths below the kernel floor `1/sqrt(12)` have no Gaussian
/// preimage; within [`DECONVOLUTION_FEASIBILITY_TOL`] of the floor the result
/// is clamped to zero, further below the call is infeasible.
pub fn drift_deconvolve(measured: f64) -> Result<f64> {
    if !(measured > 0.0) {
        return Err(Error::InvalidConfig(format!("measured width must be > 0, got {measured}")));
    }
    if measured <= DRIFT_KERNEL_SIGMA {
        if measured > DRIFT_KERNEL_SIGMA - DECONVOLUTION_FEASIBILITY_TOL {
            return Ok(0.0);
        }
        return Err(Error::Infeasible(format!(
            "measured width {measured:.4} sites is below the drift kernel floor {:.4}",
            DRIFT_KERNEL_SIGMA
        )));
    }
    // Bisect the forward width map (monotone in sigma).
    let mut lo = 0.0f64;
    let mut hi = measured;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if drift_width(mid) < measured {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let sigma = 0.5 * (lo + hi);
    debug_assert!((drift_width(sigma) - measured).abs() < 1e-4);
    Ok(sigma)
}

/// Thermally averaged transfer versus axial displacement.
#[derive(Debug, Clone)]
pub struct EffectiveSpectrum {
    /// `(z' in sites, averaged transfer)`.
    pub samples: Vec<(f64, f64)>,
    /// Fitted effective maximum transfer.
    pub pbar_max: f64,
    /// Fitted effective 1/sqrt(e) half-width in sites.
    pub sigma_z_sites: f64,
    /// Fitted peak position (sites).
    pub center_sites: f64,
    /// The P_max of the input spectrum, for normalized reporting.
    pub p_max_input: f64,
}

impl EffectiveSpectrum {
    /// Peak transfer normalized to the input spectrum amplitude.
    pub fn pbar_ratio(&self) -> f64 {
        self.pbar_max / self.p_max_input
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EffectiveSpectrumOptions {
    /// Number of axial sample points of the output spectrum.
    pub n_points: usize,
    /// Absolute quadrature tolerance in the averaged transfer.
    pub quad_tol: f64,
    /// Truncation of the thermal Gaussians, in sigmas per axis.
    pub sigma_truncation: f64,
}

impl Default for EffectiveSpectrumOptions {
    fn default() -> Self {
        Self { n_points: 81, quad_tol: 1e-4, sigma_truncation: 5.0 }
    }
}

/// Average the Gaussian pulse spectrum `(sigma_w, p_max)` over the thermal
/// position distribution of an atom whose site sits at radial offset `rho0`
/// from the coil axis, as a function of the axial displacement `z'` of the
/// site from the resonance position.
///
/// For an M-loop sequence pass the composed spectrum
/// (`sigma_w / sqrt(M)`, `p_max^M`).
pub fn effective_spectrum(
    rho0: f64,
    sigma_w: f64,
    p_max: f64,
    current: f64,
    cfg: &ApparatusConfig,
    opts: &EffectiveSpectrumOptions,
) -> Result<EffectiveSpectrum> {
    if !(sigma_w > 0.0) || !(0.0..=1.0).contains(&p_max) {
        return Err(Error::InvalidConfig("need sigma_w > 0 and p_max in [0, 1]".into()));
    }
    let (sig_ax, sig_rad) = cfg.thermal_sigmas();
    let site = cfg.site_spacing();
    let split = cfg.site_splitting(current);
    if split == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let r0 = Position::axial_radial(cfg.axial_offset, rho0);
    let wp = cfg.omega_prime(current);
    let quad_coef = wp * wp / (8.0 * cfg.delta0());

    // Width estimate of the effective profile to size the axial grid.
    let sigma_delta_rad = 2.0 * quad_coef * rho0 * sig_rad;
    let sigma_delta_ax = wp * sig_ax;
    let width_est =
        (sigma_w * sigma_w + sigma_delta_rad * sigma_delta_rad + sigma_delta_ax * sigma_delta_ax)
            .sqrt()
            / split;
    let span = 4.0 * width_est;
    // The mean radial detuning shifts the resonance slightly off z' = 0.
    let center_est = -quad_coef * 2.0 * sig_rad * sig_rad / split;

    let trunc = opts.sigma_truncation;
    let norm = 1.0 / ((TAU).powf(1.5) * sig_rad * sig_rad * sig_ax);
    let n = opts.n_points.max(11);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let z_sites = center_est - span + 2.0 * span * i as f64 / (n - 1) as f64;
        let z = z_sites * site;
        let integrand = |dx: f64, dy: f64, dz: f64| {
            let weight = (-(dx * dx + dy * dy) / (2.0 * sig_rad * sig_rad)
                - dz * dz / (2.0 * sig_ax * sig_ax))
                .exp();
            let delta = physics::detuning_unchecked(
                Position::new(dx, dy, z + dz),
                r0,
                current,
                cfg,
            );
            weight * pulse::gaussian_spectrum(delta, sigma_w, p_max)
        };
        let v = quad::adaptive_product_3d(
            integrand,
            [trunc * sig_rad, trunc * sig_rad, trunc * sig_ax],
            opts.quad_tol / norm,
        )? * norm;
        samples.push((z_sites, v.clamp(0.0, 1.0)));
    }

    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let g = fit::fit_gaussian(&xs, &ys)?;
    Ok(EffectiveSpectrum {
        samples,
        pbar_max: g.amplitude,
        sigma_z_sites: g.sigma,
        center_sites: g.center,
        p_max_input: p_max,
    })
}

/// Invert [`effective_spectrum`]: find the radial offset whose normalized
/// peak transfer equals `target_ratio`. Monotone bisection over
/// `[0, rho_max]`.
pub fn infer_radial_offset(
    target_ratio: f64,
    sigma_w: f64,
    current: f64,
    cfg: &ApparatusConfig,
    rho_max: f64,
) -> Result<f64> {
    if !(0.0 < target_ratio && target_ratio < 1.0) {
        return Err(Error::InvalidConfig("target ratio must be in (0, 1)".into()));
    }
    let opts = EffectiveSpectrumOptions { n_points: 25, ..Default::default() };
    let ratio_at = |rho0: f64| -> Result<f64> {
        Ok(effective_spectrum(rho0, sigma_w, 1.0, current, cfg, &opts)?.pbar_ratio())
    };
    if ratio_at(0.0)? < target_ratio {
        return Err(Error::Infeasible(format!(
            "target ratio {target_ratio} exceeds the zero-offset ceiling"
        )));
    }
    if ratio_at(rho_max)? > target_ratio {
        return Err(Error::Infeasible(format!(
            "target ratio {target_ratio} not reached by rho0 = {rho_max}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = rho_max;
    for _ in 0..25 {
        let mid = 0.5 * (lo + hi);
        if ratio_at(mid)? > target_ratio {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 0.2e-6 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Boolean mask of the region `|delta(r', r0)| <= k sigma_w` on a
/// (z', rho') grid. Atoms inside are guaranteed a transfer of at least
/// `exp(-k^2/2) * P_max`.
#[derive(Debug, Clone)]
pub struct AddressedRegion {
    /// Axial grid (sites).
    pub z_sites: Vec<f64>,
    /// Transverse displacement grid (m), along the offset direction.
    pub rho_m: Vec<f64>,
    /// Row-major mask, rows indexed by `rho_m`, columns by `z_sites`.
    pub mask: Vec<bool>,
    pub k_sigma: f64,
}

impl AddressedRegion {
    pub fn contains(&self, rho_idx: usize, z_idx: usize) -> bool {
        self.mask[rho_idx * self.z_sites.len() + z_idx]
    }

    /// Midpoint of the addressed z-range at a given transverse row, if any.
    pub fn axial_center_at(&self, rho_idx: usize) -> Option<f64> {
        let row = &self.mask[rho_idx * self.z_sites.len()..(rho_idx + 1) * self.z_sites.len()];
        let first = row.iter().position(|&m| m)?;
        let last = row.iter().rposition(|&m| m)?;
        Some(0.5 * (self.z_sites[first] + self.z_sites[last]))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RegionGrid {
    /// Half-span of the axial grid (sites).
    pub z_half_span_sites: f64,
    /// Axial step (sites).
    pub z_step_sites: f64,
    /// Half-span of the transverse grid in units of the radial thermal sigma.
    pub rho_half_span_sigmas: f64,
    /// Transverse step in units of the radial thermal sigma.
    pub rho_step_sigmas: f64,
}

impl Default for RegionGrid {
    fn default() -> Self {
        Self {
            z_half_span_sites: 3.0,
            z_step_sites: 0.02,
            rho_half_span_sigmas: 3.0,
            rho_step_sigmas: 0.05,
        }
    }
}

/// Compute the addressed region for a pulse of spectral width `sigma_w`
/// centered on the site at radial offset `rho0`.
pub fn addressed_region(
    rho0: f64,
    sigma_w: f64,
    current: f64,
    cfg: &ApparatusConfig,
    k_sigma: f64,
    grid: &RegionGrid,
) -> AddressedRegion {
    let (_, sig_rad) = cfg.thermal_sigmas();
    let site = cfg.site_spacing();
    let r0 = Position::axial_radial(cfg.axial_offset, rho0);
    let nz = (2.0 * grid.z_half_span_sites / grid.z_step_sites).round() as usize + 1;
    let nr = (2.0 * grid.rho_half_span_sigmas / grid.rho_step_sigmas).round() as usize + 1;
    let z_sites: Vec<f64> = (0..nz)
        .map(|i| -grid.z_half_span_sites + i as f64 * grid.z_step_sites)
        .collect();
    let rho_m: Vec<f64> = (0..nr)
        .map(|i| (-grid.rho_half_span_sigmas + i as f64 * grid.rho_step_sigmas) * sig_rad)
        .collect();
    let mut mask = vec![false; nz * nr];
    for (ri, &rho) in rho_m.iter().enumerate() {
        for (zi, &zs) in z_sites.iter().enumerate() {
            let delta =
                physics::detuning_unchecked(Position::new(rho, 0.0, zs * site), r0, current, cfg);
            mask[ri * nz + zi] = delta.abs() <= k_sigma * sigma_w;
        }
    }
    AddressedRegion { z_sites, rho_m, mask, k_sigma }
}

/// Axial position of the microwave resonance for a pulse at `pulse_offset`
/// (rad/s relative to the reference resonance), for a lattice whose axis sits
/// at `r0`. Solves the field expansion for z.
pub fn resonance_position(pulse_offset: f64, r0: Position, current: f64, cfg: &ApparatusConfig) -> f64 {
    let wp = cfg.omega_prime(current);
    let quad_coef = wp * wp / (8.0 * cfg.delta0());
    (pulse_offset - quad_coef * r0.rho().powi(2)) / wp - r0.z
}

/// Least-squares parabola through an offset-field calibration scan.
#[derive(Debug, Clone)]
pub struct OffsetCalibrationFit {
    /// Coefficients (a, b, c) of `z = a h^2 + b h + c`.
    pub coefficients: [f64; 3],
    pub covariance: [f64; 9],
    /// Vertex abscissa `-b / (2a)`: the compensating field offset.
    pub vertex: f64,
    pub vertex_uncertainty: f64,
    /// Quadratic coefficient `a`.
    pub curvature: f64,
    /// |a| / sigma_a.
    pub curvature_significance: f64,
}

/// Fit the quadratic dependence of the resonance position on an applied
/// transverse field offset. Errors with `DegenerateFit` when the curvature is
/// not resolved at three standard deviations.
pub fn offset_calibration_fit(data: &[(f64, f64)]) -> Result<OffsetCalibrationFit> {
    if data.len() < 4 {
        return Err(Error::FitFailure("need at least 4 scan points".into()));
    }
    let xs: Vec<f64> = data.iter().map(|d| d.0).collect();
    let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
    let (coef, cov) = fit::fit_parabola(&xs, &ys)?;
    let a = coef[0];
    let sigma_a = cov[0].max(0.0).sqrt();
    let significance = if sigma_a > 0.0 { a.abs() / sigma_a } else { f64::INFINITY };
    if significance <= 3.0 {
        return Err(Error::DegenerateFit(format!(
            "curvature {a:.3e} not significant (|a|/sigma_a = {significance:.2})"
        )));
    }
    let b = coef[1];
    let vertex = -b / (2.0 * a);
    // Propagate (a, b) covariance through v = -b/(2a).
    let dv_da = b / (2.0 * a * a);
    let dv_db = -1.0 / (2.0 * a);
    let var = dv_da * dv_da * cov[0] + dv_db * dv_db * cov[4] + 2.0 * dv_da * dv_db * cov[1];
    Ok(OffsetCalibrationFit {
        coefficients: coef,
        covariance: cov,
        vertex,
        vertex_uncertainty: var.max(0.0).sqrt(),
        curvature: a,
        curvature_significance: significance,
    })
}

/// Binned counts with uniform bins; `origin` is the center of bin "0".
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub origin: f64,
    /// Index of the first stored bin relative to the origin bin.
    pub first_bin: i64,
    pub counts: Vec<u64>,
    /// Number of inputs that could not be histogrammed (e.g. shots with a
    /// missing pair member).
    pub skipped: usize,
}

impl Histogram {
    /// Bin `values` with the given width; bin centers are aligned so that
    /// `origin` falls on a center.
    pub fn from_values(values: &[f64], bin_width: f64, origin: f64) -> Result<Self> {
        if !(bin_width > 0.0) {
            return Err(Error::InvalidConfig("bin width must be > 0".into()));
        }
        if values.is_empty() {
            return Ok(Self { bin_width, origin, first_bin: 0, counts: vec![], skipped: 0 });
        }
        let idx =
            |v: f64| -> i64 { ((v - origin) / bin_width).round() as i64 };
        let lo = values.iter().map(|&v| idx(v)).min().unwrap();
        let hi = values.iter().map(|&v| idx(v)).max().unwrap();
        let mut counts = vec![0u64; (hi - lo + 1) as usize];
        for &v in values {
            counts[(idx(v) - lo) as usize] += 1;
        }
        Ok(Self { bin_width, origin, first_bin: lo, counts, skipped: 0 })
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|i| self.origin + (self.first_bin + i as i64) as f64 * self.bin_width)
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// The same histogram extended by `n` empty bins on each side (fits need
    /// the peak to be spanned by data).
    pub fn padded(&self, n: usize) -> Histogram {
        let mut counts = vec![0u64; n];
        counts.extend(self.counts.iter().copied());
        counts.resize(counts.len() + n, 0);
        Histogram {
            bin_width: self.bin_width,
            origin: self.origin,
            first_bin: self.first_bin - n as i64,
            counts,
            skipped: self.skipped,
        }
    }

    /// Total count in bins whose center lies within `half_width` of `center`.
    pub fn count_within(&self, center: f64, half_width: f64) -> u64 {
        self.bin_centers()
            .iter()
            .zip(&self.counts)
            .filter(|(c, _)| (*c - center).abs() <= half_width)
            .map(|(_, &n)| n)
            .sum()
    }
}

/// Result of the histogram-based selectivity extraction.
#[derive(Debug, Clone)]
pub struct HistogramSelectivity {
    /// Fitted 1/sqrt(e) half-width of the distance distribution (sites).
    pub sigma_dist: f64,
    /// Per-atom selectivity: `sigma_dist / sqrt(2)`.
    pub sigma_meas: f64,
    /// Fitted center of the distance distribution (sites).
    pub center: f64,
    pub fit: GaussianFit,
}

/// Extract the single-atom selectivity width from a pair-distance histogram.
pub fn selectivity_from_histogram(hist: &Histogram) -> Result<HistogramSelectivity> {
    let xs = hist.bin_centers();
    let ys: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let fit = fit::fit_gaussian(&xs, &ys)?;
    Ok(HistogramSelectivity {
        sigma_dist: fit.sigma,
        sigma_meas: fit.sigma / std::f64::consts::SQRT_2,
        center: fit.center,
        fit,
    })
}
