//! Transfer-probability models for microwave pulses: the analytic
//! rectangular-pulse formula, the Gaussian spectral model, a numerical
//! two-level Bloch oracle, and the inner-loop composition law.

use crate::error::{Error, Result};
use crate::fit;
use crate::ode::{self, OdeOptions};
use crate::quad;

const PI: f64 = std::f64::consts::PI;

/// Default truncation half-width of Gaussian envelopes, in units of sigma_t.
pub const DEFAULT_TRUNCATION: f64 = 2.0;

/// Amplitude envelope shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseShape {
    /// Constant amplitude over `duration` seconds.
    Rectangular { duration: f64 },
    /// Gaussian with 1/sqrt(e) half-width `sigma_t`, truncated at
    /// `truncation * sigma_t` on both sides of the center.
    Gaussian { sigma_t: f64, truncation: f64 },
}

/// One microwave pulse: envelope shape, carrier offset from the reference
/// resonance, and peak Rabi rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseDescriptor {
    pub shape: PulseShape,
    /// Center frequency offset relative to the reference-site resonance (rad/s).
    pub center_offset: f64,
    /// Peak Rabi rate (rad/s).
    pub peak_rabi: f64,
}

impl PulseDescriptor {
    /// Rectangular pi-pulse: `peak_rabi * duration = pi` exactly.
    pub fn pi_rectangular(duration: f64, center_offset: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::InvalidConfig(format!("pulse duration must be > 0, got {duration}")));
        }
        Ok(Self {
            shape: PulseShape::Rectangular { duration },
            center_offset,
            peak_rabi: PI / duration,
        })
    }

    /// Truncated Gaussian pi-pulse; the peak Rabi rate is set so that the
    /// time-integrated rate over the truncated window equals pi exactly.
    pub fn pi_gaussian(sigma_t: f64, truncation: f64, center_offset: f64) -> Result<Self> {
        if !(sigma_t > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma_t must be > 0, got {sigma_t}")));
        }
        if !(truncation > 0.5) {
            return Err(Error::InvalidConfig(format!(
                "truncation must exceed 0.5 sigma, got {truncation}"
            )));
        }
        let unit_area =
            quad::integrate_1d(|t| (-t * t / (2.0 * sigma_t * sigma_t)).exp(), -truncation * sigma_t, truncation * sigma_t, 96);
        Ok(Self {
            shape: PulseShape::Gaussian { sigma_t, truncation },
            center_offset,
            peak_rabi: PI / unit_area,
        })
    }

    /// Total envelope support (s).
    pub fn duration(&self) -> f64 {
        match self.shape {
            PulseShape::Rectangular { duration } => duration,
            PulseShape::Gaussian { sigma_t, truncation } => 2.0 * truncation * sigma_t,
        }
    }

    /// Instantaneous Rabi rate at `t` in `[0, duration]`.
    pub fn envelope(&self, t: f64) -> f64 {
        match self.shape {
            PulseShape::Rectangular { duration } => {
                if (0.0..=duration).contains(&t) {
                    self.peak_rabi
                } else {
                    0.0
                }
            }
            PulseShape::Gaussian { sigma_t, truncation } => {
                let center = truncation * sigma_t;
                if (0.0..=2.0 * center).contains(&t) {
                    let d = t - center;
                    self.peak_rabi * (-d * d / (2.0 * sigma_t * sigma_t)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Time-integrated Rabi rate (rad), evaluated numerically.
    pub fn area(&self) -> f64 {
        match self.shape {
            PulseShape::Rectangular { duration } => self.peak_rabi * duration,
            PulseShape::Gaussian { .. } => {
                quad::integrate_1d(|t| self.envelope(t), 0.0, self.duration(), 192)
            }
        }
    }

    /// Rough 1/sqrt(e) spectral half-width estimate used to size sampling
    /// grids before the numerical spectrum is known (rad/s).
    pub fn spectral_width_estimate(&self) -> f64 {
        match self.shape {
            PulseShape::Rectangular { duration } => 2.2 / duration,
            PulseShape::Gaussian { sigma_t, .. } => 1.0 / (std::f64::consts::SQRT_2 * sigma_t),
        }
    }
}

/// Analytic transfer probability of a rectangular pulse:
/// `Omega^2/(Omega^2 + delta^2) * sin^2(sqrt(Omega^2 + delta^2) t / 2)`.
pub fn rect_transfer(delta: f64, omega: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    let g2 = omega * omega + delta * delta;
    if g2 == 0.0 {
        return 0.0;
    }
    let g = g2.sqrt();
    omega * omega / g2 * (g * t / 2.0).sin().powi(2)
}

/// Gaussian spectral model: `P_max exp(-delta^2 / (2 sigma_w^2))`.
pub fn gaussian_spectrum(delta: f64, sigma_w: f64, p_max: f64) -> f64 {
    debug_assert!(sigma_w > 0.0);
    debug_assert!((0.0..=1.0).contains(&p_max));
    p_max * (-delta * delta / (2.0 * sigma_w * sigma_w)).exp()
}

/// Integrate the two-level Bloch equations for `pulse` at detuning `delta`
/// with transverse decay `1/t2` and return the final |1> population.
///
/// `t2 = f64::INFINITY` turns decay off; evolution is then norm-preserving
/// and `bloch_norm_defect` stays at the integrator tolerance.
pub fn bloch_integrate(pulse: &PulseDescriptor, delta: f64, t2: f64, opts: &OdeOptions) -> Result<f64> {
    let y = bloch_trajectory(pulse, delta, t2, opts, |_, _| {})?;
    Ok((1.0 + y[2]) / 2.0)
}

/// Same as [`bloch_integrate`] but reports the largest Bloch-vector norm
/// deviation from 1 along the trajectory (meaningful for `t2 = inf`).
pub fn bloch_integrate_with_norm_defect(
    pulse: &PulseDescriptor,
    delta: f64,
    t2: f64,
    opts: &OdeOptions,
) -> Result<(f64, f64)> {
    let mut defect = 0.0f64;
    let y = bloch_trajectory(pulse, delta, t2, opts, |_, y| {
        let norm = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        defect = defect.max((norm - 1.0).abs());
    })?;
    Ok(((1.0 + y[2]) / 2.0, defect))
}

fn bloch_trajectory<O: FnMut(f64, &[f64; 3])>(
    pulse: &PulseDescriptor,
    delta: f64,
    t2: f64,
    opts: &OdeOptions,
    observe: O,
) -> Result<[f64; 3]> {
    let decay = if t2.is_finite() { 1.0 / t2 } else { 0.0 };
    let rhs = |t: f64, y: &[f64; 3]| {
        let omega = pulse.envelope(t);
        [
            delta * y[1] - decay * y[0],
            -delta * y[0] + omega * y[2] - decay * y[1],
            -omega * y[1],
        ]
    };
    ode::integrate_observed(rhs, 0.0, pulse.duration(), [0.0, 0.0, -1.0], opts, observe)
}

/// A sampled transfer-vs-detuning curve with fitted Gaussian parameters.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// `(detuning rad/s, transfer probability)`, detunings strictly increasing.
    pub samples: Vec<(f64, f64)>,
    /// Fitted maximum transfer.
    pub p_max: f64,
    /// Fitted 1/sqrt(e) spectral half-width (rad/s).
    pub sigma_w: f64,
}

impl Spectrum {
    /// Build a spectrum from samples, fitting the Gaussian parameters.
    pub fn from_samples(samples: Vec<(f64, f64)>) -> Result<Self> {
        validate_samples(&samples)?;
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let g = fit::fit_gaussian(&xs, &ys)?;
        Ok(Self { samples, p_max: g.amplitude, sigma_w: g.sigma })
    }

    /// Construct an exactly Gaussian spectrum on a uniform grid spanning
    /// `+- span_sigmas * sigma_w` with `points_per_sigma` samples per width.
    pub fn gaussian(p_max: f64, sigma_w: f64, span_sigmas: f64, points_per_sigma: usize) -> Self {
        let n = ((2.0 * span_sigmas) * points_per_sigma as f64).ceil() as usize | 1;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let d = (-span_sigmas + 2.0 * span_sigmas * i as f64 / n as f64) * sigma_w;
                (d, gaussian_spectrum(d, sigma_w, p_max))
            })
            .collect();
        Self { samples, p_max, sigma_w }
    }

    /// Re-fit the Gaussian parameters from the stored samples (independent of
    /// the analytic bookkeeping done by [`compose_loops`]).
    pub fn refit(&self) -> Result<(f64, f64)> {
        let xs: Vec<f64> = self.samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = self.samples.iter().map(|s| s.1).collect();
        let g = fit::fit_gaussian(&xs, &ys)?;
        Ok((g.amplitude, g.sigma))
    }
}

fn validate_samples(samples: &[(f64, f64)]) -> Result<()> {
    if samples.len() < 5 {
        return Err(Error::InvalidConfig("spectrum needs at least 5 samples".into()));
    }
    for w in samples.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidConfig("spectrum detunings must be strictly increasing".into()));
        }
    }
    if samples.iter().any(|&(_, p)| !(0.0..=1.0 + 1e-12).contains(&p)) {
        return Err(Error::InvalidConfig("transfer probabilities must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Sample the Bloch-oracle spectrum of `pulse` on a uniform grid spanning
/// `+- 6` estimated widths with at least 25 points per width, then fit.
pub fn sample_bloch_spectrum(pulse: &PulseDescriptor, t2: f64, opts: &OdeOptions) -> Result<Spectrum> {
    let width = pulse.spectral_width_estimate();
    let span = 6.0 * width;
    let n = 25 * 12;
    let samples: Result<Vec<(f64, f64)>> = (0..=n)
        .map(|i| {
            let d = -span + 2.0 * span * i as f64 / n as f64;
            bloch_integrate(pulse, d, t2, opts).map(|p| (d, p.clamp(0.0, 1.0)))
        })
        .collect();
    Spectrum::from_samples(samples?)
}

/// Pointwise M-th power of a spectrum: the composition law of M repetitions
/// of the state-transfer + push-out inner loop. For a Gaussian input the
/// fitted parameters transform exactly as `P_max^M` and `sigma_w / sqrt(M)`.
pub fn compose_loops(spectrum: &Spectrum, m: u32) -> Spectrum {
    assert!(m >= 1, "loop count must be at least 1");
    if m == 1 {
        return spectrum.clone();
    }
    let samples = spectrum
        .samples
        .iter()
        .map(|&(d, p)| (d, p.powi(m as i32)))
        .collect();
    Spectrum {
        samples,
        p_max: spectrum.p_max.powi(m as i32),
        sigma_w: spectrum.sigma_w / (m as f64).sqrt(),
    }
}
