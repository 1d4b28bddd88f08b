//! Synthetic diffraction-limited fluorescence imaging and position recovery:
//! Gaussian point-spread rendering with Poisson photon statistics, multi-peak
//! least-squares position estimation on the vertically binned profile, and
//! pair-distance extraction.

use rand::Rng;

use crate::error::{Error, Result};
use crate::fit::{self, FitOptions, Model};

/// Camera and photon-budget settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingConfig {
    /// PSF full width at half maximum (m).
    pub psf_fwhm: f64,
    /// Pixel size (m).
    pub pixel_size: f64,
    /// Mean detected photons per atom per exposure.
    pub photons_per_atom: f64,
    /// Mean background counts per pixel.
    pub background_rate: f64,
    /// Image height in pixels (transverse direction).
    pub height_px: usize,
    /// Sample Poisson noise; when false the image holds expectation values.
    pub poisson_noise: bool,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            psf_fwhm: 1.8e-6,
            pixel_size: 0.3e-6,
            photons_per_atom: 1600.0,
            background_rate: 0.5,
            height_px: 80,
            poisson_noise: true,
        }
    }
}

impl ImagingConfig {
    /// Gaussian PSF sigma: FWHM / (2 sqrt(2 ln 2)).
    pub fn psf_sigma(&self) -> f64 {
        self.psf_fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
    }
}

/// A rendered intensity grid with axis calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub width: usize,
    pub height: usize,
    /// Row-major counts, row = transverse pixel, column = axial pixel.
    pub pixels: Vec<f64>,
    /// Axial coordinate of the center of column 0 (m).
    pub origin: f64,
    pub pixel_size: f64,
}

impl SyntheticImage {
    pub fn pixel(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Axial coordinate of a column center (m).
    pub fn x_of(&self, col: usize) -> f64 {
        self.origin + col as f64 * self.pixel_size
    }

    /// Vertically binned 1D profile: `(x, summed counts)` per column.
    pub fn binned_profile(&self) -> (Vec<f64>, Vec<f64>) {
        let xs = (0..self.width).map(|c| self.x_of(c)).collect();
        let mut ys = vec![0.0; self.width];
        for row in 0..self.height {
            let cells = &self.pixels[row * self.width..(row + 1) * self.width];
            for (y, &v) in ys.iter_mut().zip(cells) {
                *y += v;
            }
        }
        (xs, ys)
    }

    pub fn total_counts(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Image restricted to the axial interval `[x0, x1]` (m).
    pub fn crop(&self, x0: f64, x1: f64) -> SyntheticImage {
        let c0 = (((x0 - self.origin) / self.pixel_size).ceil().max(0.0)) as usize;
        let c1 = ((((x1 - self.origin) / self.pixel_size).floor()) as usize)
            .min(self.width.saturating_sub(1));
        let width = c1.saturating_sub(c0) + 1;
        let mut pixels = Vec::with_capacity(width * self.height);
        for row in 0..self.height {
            pixels.extend_from_slice(&self.pixels[row * self.width + c0..row * self.width + c1 + 1]);
        }
        SyntheticImage {
            width,
            height: self.height,
            pixels,
            origin: self.origin + c0 as f64 * self.pixel_size,
            pixel_size: self.pixel_size,
        }
    }
}

/// Poisson deviate; Knuth's method for small rates, Gaussian approximation
/// beyond 64 where the relative error is negligible.
fn sample_poisson<R: Rng>(rng: &mut R, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda < 64.0 {
        let limit = (-lambda).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= rng.gen::<f64>();
            if p <= limit {
                return k as f64;
            }
            k += 1;
        }
    }
    (lambda + lambda.sqrt() * crate::sim::standard_normal(rng)).round().max(0.0)
}

/// Render surviving atoms at lab-frame `(axial, transverse)` positions (m)
/// into an image spanning `window = (x_min, x_max)` axially and centered
/// transversally on the lattice axis.
pub fn render_image<R: Rng>(
    positions: &[(f64, f64)],
    window: (f64, f64),
    cfg: &ImagingConfig,
    rng: &mut R,
) -> SyntheticImage {
    let width = (((window.1 - window.0) / cfg.pixel_size).ceil() as usize).max(1);
    let height = cfg.height_px.max(1);
    let sigma = cfg.psf_sigma();
    let origin = window.0 + cfg.pixel_size / 2.0;
    let y0 = -(height as f64) / 2.0 * cfg.pixel_size + cfg.pixel_size / 2.0;
    let norm = cfg.pixel_size / (sigma * (std::f64::consts::TAU).sqrt());
    let mut expected = vec![cfg.background_rate; width * height];

    let cut = (6.0 * sigma / cfg.pixel_size).ceil() as isize;
    for &(xa, ya) in positions {
        let col_c = ((xa - origin) / cfg.pixel_size).round() as isize;
        let row_c = ((ya - y0) / cfg.pixel_size).round() as isize;
        for row in (row_c - cut).max(0)..=(row_c + cut).min(height as isize - 1) {
            let y = y0 + row as f64 * cfg.pixel_size;
            let gy = norm * (-(y - ya) * (y - ya) / (2.0 * sigma * sigma)).exp();
            for col in (col_c - cut).max(0)..=(col_c + cut).min(width as isize - 1) {
                let x = origin + col as f64 * cfg.pixel_size;
                let gx = norm * (-(x - xa) * (x - xa) / (2.0 * sigma * sigma)).exp();
                expected[row as usize * width + col as usize] += cfg.photons_per_atom * gx * gy;
            }
        }
    }

    let pixels = if cfg.poisson_noise {
        expected.iter().map(|&l| sample_poisson(rng, l)).collect()
    } else {
        expected
    };
    SyntheticImage { width, height, pixels, origin, pixel_size: cfg.pixel_size }
}

/// Lab-frame `(axial, transverse)` positions of surviving atoms, including
/// the shot's lattice drift.
pub fn atom_positions(
    records: &[crate::sim::AtomRecord],
    drift_offset: f64,
    site_spacing: f64,
) -> Vec<(f64, f64)> {
    records
        .iter()
        .map(|a| (a.site as f64 * site_spacing + a.axial + drift_offset, a.radial[1]))
        .collect()
}

/// Sum of `k` equal-width Gaussians plus a flat background.
/// Parameters: `[background, A_1, mu_1, ..., A_k, mu_k]`.
struct MultiPeak {
    sigma: f64,
    components: usize,
}

impl Model for MultiPeak {
    fn n_params(&self) -> usize {
        1 + 2 * self.components
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let mut v = p[0];
        for k in 0..self.components {
            let d = x - p[2 + 2 * k];
            v += p[1 + 2 * k] * (-d * d / (2.0 * self.sigma * self.sigma)).exp();
        }
        v
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        let s2 = self.sigma * self.sigma;
        for k in 0..self.components {
            let d = x - p[2 + 2 * k];
            let e = (-d * d / (2.0 * s2)).exp();
            out[1 + 2 * k] = e;
            out[2 + 2 * k] = p[1 + 2 * k] * e * d / s2;
        }
    }
}

/// An estimated atom position.
#[derive(Debug, Clone, Copy)]
pub struct PositionEstimate {
    /// Position on the calibrated axis (m).
    pub position: f64,
    /// One-sigma uncertainty from the fit covariance (m).
    pub uncertainty: f64,
    /// Fitted peak amplitude (counts).
    pub amplitude: f64,
}

fn fit_components(
    xs: &[f64],
    ys: &[f64],
    sigma: f64,
    count: usize,
) -> Result<(Vec<PositionEstimate>, f64)> {
    // Greedy matching pursuit: place each new component at the largest fit
    // residual (keeping clear of components already placed), then refit the
    // whole model before adding the next one.
    let mut params = vec![ys.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0)];
    let mut fit = None;
    let exclusion = 0.8 * sigma;
    for k in 1..=count {
        let current = MultiPeak { sigma, components: k - 1 };
        let taken: Vec<f64> = (0..k - 1).map(|j| params[2 + 2 * j]).collect();
        let seed = xs
            .iter()
            .enumerate()
            .filter(|(_, &x)| taken.iter().all(|&mu| (x - mu).abs() > exclusion))
            .map(|(i, &x)| (i, ys[i] - current.eval(x, &params)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let (best_i, best_r) = match seed {
            Some(s) => s,
            None => {
                return Err(Error::FitFailure(format!(
                    "no room to seed component {k} of {count}"
                )))
            }
        };
        params.push(best_r.max(1e-9));
        params.push(xs[best_i]);
        let model = MultiPeak { sigma, components: k };
        let step = fit::levenberg_marquardt(&model, xs, ys, &params, &FitOptions::default())?;
        params = step.params.clone();
        fit = Some(step);
    }
    let mut fit = fit.expect("at least one component");

    // Split-and-recycle refinement: a near-zero component paired with one
    // overgrown component signals two merged atoms described by a single
    // peak. Recycle the dead component into a split of the strongest one and
    // keep the refit when it clearly improves.
    if count >= 2 {
        let model = MultiPeak { sigma, components: count };
        for _ in 0..count {
            let amp = |p: &[f64], j: usize| p[1 + 2 * j];
            let weakest =
                (0..count).min_by(|&a, &b| amp(&params, a).partial_cmp(&amp(&params, b)).unwrap());
            let strongest =
                (0..count).max_by(|&a, &b| amp(&params, a).partial_cmp(&amp(&params, b)).unwrap());
            let (w, s) = match (weakest, strongest) {
                (Some(w), Some(s)) if w != s => (w, s),
                _ => break,
            };
            if amp(&params, w) > 0.2 * amp(&params, s) {
                break;
            }
            let mut trial = params.clone();
            let mu = trial[2 + 2 * s];
            let half = trial[1 + 2 * s] / 2.0;
            trial[1 + 2 * s] = half;
            trial[2 + 2 * s] = mu - 0.6 * sigma;
            trial[1 + 2 * w] = half;
            trial[2 + 2 * w] = mu + 0.6 * sigma;
            match fit::levenberg_marquardt(&model, xs, ys, &trial, &FitOptions::default()) {
                Ok(step) if step.residual_ss < 0.98 * fit.residual_ss => {
                    params = step.params.clone();
                    fit = step;
                }
                _ => break,
            }
        }
    }
    let n = 1 + 2 * count;
    let mut estimates: Vec<PositionEstimate> = (0..count)
        .map(|k| PositionEstimate {
            position: fit.params[2 + 2 * k],
            uncertainty: fit.covariance[(2 + 2 * k) * n + (2 + 2 * k)].max(0.0).sqrt(),
            amplitude: fit.params[1 + 2 * k],
        })
        .collect();
    estimates.sort_by(|a, b| a.position.partial_cmp(&b.position).unwrap());
    let dof = (xs.len() - n).max(1) as f64;
    Ok((estimates, fit.residual_ss / dof))
}

/// Estimate atom positions from the binned profile of `image` by fitting a
/// sum of equal-width Gaussians (width pinned to the PSF) over a flat
/// background.
///
/// With `count_hint` the component count is fixed; otherwise components are
/// added while the reduced chi-square improves by more than 5%, up to
/// `max_components`.
pub fn estimate_positions(
    image: &SyntheticImage,
    psf_sigma: f64,
    count_hint: Option<usize>,
    max_components: usize,
) -> Result<Vec<PositionEstimate>> {
    let (xs, ys) = image.binned_profile();
    if xs.len() < 7 {
        return Err(Error::FitFailure("image too narrow for position estimation".into()));
    }
    if let Some(n) = count_hint {
        if n == 0 {
            return Err(Error::FitFailure("component hint must be positive".into()));
        }
        return Ok(fit_components(&xs, &ys, psf_sigma, n)?.0);
    }
    let (mut best, mut best_chi2) = fit_components(&xs, &ys, psf_sigma, 1)?;
    for count in 2..=max_components.max(1) {
        let (est, chi2) = match fit_components(&xs, &ys, psf_sigma, count) {
            Ok(v) => v,
            Err(_) => break,
        };
        if chi2 < best_chi2 * 0.95 {
            best = est;
            best_chi2 = chi2;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Intra-pair distances for one shot: for every predefined pair center, the
/// two estimates nearest the expected member positions are grouped; shots
/// with fewer than two estimates in the window are skipped and counted.
///
/// All quantities share one unit (sites or meters).
pub fn pair_distances(
    positions: &[f64],
    pair_centers: &[f64],
    separation: f64,
    window_half: f64,
) -> (Vec<f64>, usize) {
    let mut distances = Vec::new();
    let mut skipped = 0;
    for &c in pair_centers {
        let members: Vec<f64> =
            positions.iter().copied().filter(|p| (p - c).abs() <= window_half).collect();
        if members.len() < 2 {
            skipped += 1;
            continue;
        }
        let target_a = c - separation / 2.0;
        let target_b = c + separation / 2.0;
        let ia = argmin_distance(&members, target_a, None);
        let ib = argmin_distance(&members, target_b, Some(ia));
        distances.push((members[ia] - members[ib]).abs());
    }
    (distances, skipped)
}

fn argmin_distance(values: &[f64], target: f64, exclude: Option<usize>) -> usize {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let d = (v - target).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn noiseless() -> ImagingConfig {
        ImagingConfig { poisson_noise: false, background_rate: 0.0, ..Default::default() }
    }

    #[test]
    fn empty_shot_renders_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let img = render_image(&[], (-5e-6, 5e-6), &noiseless(), &mut rng);
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn single_atom_normalization_and_peak() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let cfg = noiseless();
        let img = render_image(&[(0.4e-6, 0.0)], (-6e-6, 6e-6), &cfg, &mut rng);
        let total = img.total_counts();
        assert!(
            (total - cfg.photons_per_atom).abs() / cfg.photons_per_atom < 1e-6,
            "total {total}"
        );
        let (xs, ys) = img.binned_profile();
        let peak = ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| xs[i])
            .unwrap();
        assert!((peak - 0.4e-6).abs() <= cfg.pixel_size);
    }

    #[test]
    fn noiseless_single_atom_estimate_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let cfg = noiseless();
        let img = render_image(&[(0.7e-6, 0.0)], (-6e-6, 6e-6), &cfg, &mut rng);
        let est = estimate_positions(&img, cfg.psf_sigma(), Some(1), 8).unwrap();
        assert_eq!(est.len(), 1);
        assert!((est[0].position - 0.7e-6).abs() < 10e-9, "err {}", est[0].position - 0.7e-6);
    }

    #[test]
    fn two_close_atoms_resolved_with_hint() {
        // Two sites apart: 0.866 um, below the 1.8 um PSF FWHM.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let cfg = ImagingConfig { photons_per_atom: 1e4, ..Default::default() };
        let site = 0.433e-6;
        let img = render_image(&[(0.0, 0.0), (2.0 * site, 0.0)], (-6e-6, 7e-6), &cfg, &mut rng);
        let est = estimate_positions(&img, cfg.psf_sigma(), Some(2), 8).unwrap();
        assert_eq!(est.len(), 2);
        assert!((est[0].position / site).abs() < 0.2, "a at {} sites", est[0].position / site);
        assert!(
            (est[1].position / site - 2.0).abs() < 0.2,
            "b at {} sites",
            est[1].position / site
        );
    }

    #[test]
    fn eight_atom_cluster_recovered() {
        // Four nearest-neighbor pairs in a sparsely filled lattice: each pair
        // is unresolved (0.87 um spacing under a 1.8 um PSF) but the cluster
        // is sparse overall.
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let cfg = ImagingConfig { photons_per_atom: 1e4, ..Default::default() };
        let site = 0.433e-6;
        let sites = [0i64, 2, 9, 11, 18, 20, 27, 29];
        let positions: Vec<(f64, f64)> =
            sites.iter().map(|&s| (s as f64 * site, 0.0)).collect();
        let img = render_image(&positions, (-4e-6, 17e-6), &cfg, &mut rng);
        let est = estimate_positions(&img, cfg.psf_sigma(), Some(8), 10).unwrap();
        for (e, &s) in est.iter().zip(&sites) {
            assert!(
                (e.position / site - s as f64).abs() < 0.4,
                "site {s} recovered at {}",
                e.position / site
            );
        }
    }

    #[test]
    fn position_estimates_unbiased() {
        let cfg = ImagingConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let site = 0.433e-6;
        let mut sum_err = 0.0;
        let mut sum_sq = 0.0;
        let n = 1000;
        for _ in 0..n {
            let truth = (rng.gen::<f64>() - 0.5) * site;
            let img = render_image(&[(truth, 0.0)], (-5e-6, 5e-6), &cfg, &mut rng);
            let est = estimate_positions(&img, cfg.psf_sigma(), Some(1), 4).unwrap();
            let err = (est[0].position - truth) / site;
            sum_err += err;
            sum_sq += err * err;
        }
        let mean = sum_err / n as f64;
        let rms = (sum_sq / n as f64).sqrt();
        assert!(mean.abs() < 0.02, "mean signed error {mean} sites");
        // Photon budget is tuned for roughly 0.1-site single-shot precision.
        assert!(rms < 0.2, "rms error {rms} sites");
    }

    #[test]
    fn pair_distance_grouping() {
        let (d, skipped) = pair_distances(&[0.05, 2.02, 16.0, 18.1], &[1.0, 17.0], 2.0, 4.0);
        assert_eq!(skipped, 0);
        assert!((d[0] - 1.97).abs() < 1e-9);
        assert!((d[1] - 2.1).abs() < 1e-9);
        // A missing member skips the pair.
        let (d2, skipped2) = pair_distances(&[0.05], &[1.0], 2.0, 4.0);
        assert!(d2.is_empty());
        assert_eq!(skipped2, 1);
        // A spurious extra estimate does not break the grouping.
        let (d3, _) = pair_distances(&[0.0, 0.9, 2.0], &[1.0], 2.0, 4.0);
        assert!((d3[0] - 2.0).abs() < 1e-9);
    }
}
