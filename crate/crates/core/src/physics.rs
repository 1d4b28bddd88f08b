//! Static field model: quadrupole geometry, Zeeman-shifted transition
//! frequency, position-dependent detuning and gradient calibration.

use crate::config::{ApparatusConfig, Position};
use crate::error::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Magnetic field (G) at position `r` for coil current `I`, including the
/// guiding field: `(-B'x/2, -B'y/2, B0 + B'z)`.
///
/// Expressed in the frame whose +z direction is the direction of increasing
/// transition frequency, so B' enters with its magnitude here; the physical
/// gradient is negative (see [`calibrate_gradient`]), which only mirrors the
/// z axis and leaves every observable unchanged.
pub fn magnetic_field(r: Position, current: f64, cfg: &ApparatusConfig) -> [f64; 3] {
    let bp = cfg.b_prime_magnitude(current);
    [
        -bp * r.x / 2.0,
        -bp * r.y / 2.0,
        cfg.guiding_field + bp * r.z,
    ]
}

fn validity_terms(r: Position, current: f64, cfg: &ApparatusConfig) -> (f64, f64) {
    let bp = cfg.b_prime_magnitude(current);
    let lhs = (cfg.guiding_field + bp * r.z).powi(2);
    let rhs = cfg.validity_factor * bp.powi(2) * r.rho().powi(2) / 4.0;
    (lhs, rhs)
}

/// Check that the second-order expansion of |B| is valid at `r`.
///
/// In non-strict mode a violation is logged once per call site instead of
/// returned as an error; simulations keep running on the expansion.
pub fn check_validity(r: Position, current: f64, cfg: &ApparatusConfig) -> Result<()> {
    let (lhs, rhs) = validity_terms(r, current, cfg);
    if lhs <= rhs {
        let err = Error::ValidityViolation {
            z_um: r.z * 1e6,
            rho_um: r.rho() * 1e6,
            current,
            lhs,
            rhs,
            factor: cfg.validity_factor,
        };
        if cfg.validity_strict {
            return Err(err);
        }
        log::warn!("{err}");
    }
    Ok(())
}

/// Transition frequency offset from the hyperfine splitting (rad/s), using
/// the second-order expansion: `delta0 + omega' z + omega'^2 rho^2 / (8 delta0)`.
pub fn transition_frequency(r: Position, current: f64, cfg: &ApparatusConfig) -> Result<f64> {
    check_validity(r, current, cfg)?;
    Ok(transition_frequency_unchecked(r, current, cfg))
}

/// Expansion value without the validity check (hot path for simulations).
pub fn transition_frequency_unchecked(r: Position, current: f64, cfg: &ApparatusConfig) -> f64 {
    let d0 = cfg.delta0();
    let wp = cfg.omega_prime(current);
    d0 + wp * r.z + wp * wp * r.rho().powi(2) / (8.0 * d0)
}

/// Transition frequency offset evaluated from the exact field modulus,
/// `|gamma| |B(r)|`. Serves as the independent oracle for the expansion.
pub fn transition_frequency_exact(r: Position, current: f64, cfg: &ApparatusConfig) -> f64 {
    let b = magnetic_field(r, current, cfg);
    let modulus = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    cfg.gamma_magnitude() * modulus
}

/// Spatial detuning between a displaced position and the reference origin:
/// `delta(r', r0) = omega0(r' + r0, I) - omega0(r0, I)` (rad/s).
pub fn detuning(r_prime: Position, r0: Position, current: f64, cfg: &ApparatusConfig) -> Result<f64> {
    check_validity(r_prime.add(r0), current, cfg)?;
    check_validity(r0, current, cfg)?;
    Ok(detuning_unchecked(r_prime, r0, current, cfg))
}

/// Detuning without validity checks (hot path for simulations).
pub fn detuning_unchecked(r_prime: Position, r0: Position, current: f64, cfg: &ApparatusConfig) -> f64 {
    transition_frequency_unchecked(r_prime.add(r0), current, cfg)
        - transition_frequency_unchecked(r0, current, cfg)
}

/// Gradient calibration report at a given coil current.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCalibration {
    /// omega'/(2 pi I) in Hz per site per ampere.
    pub hz_per_site_amp: f64,
    /// omega'/(2 pi I) in Hz per micrometer per ampere.
    pub hz_per_um_amp: f64,
    /// Signed B'/I in microgauss per micrometer per ampere.
    pub b_prime_ug_per_um_amp: f64,
    /// Per-site frequency splitting at the report current (Hz).
    pub site_splitting_hz: f64,
    /// Axial gradient magnitude at the report current (G/cm).
    pub gradient_g_per_cm: f64,
    /// Current the splitting and gradient are quoted at (A).
    pub current: f64,
}

/// Unit-conversion closure of the gradient calibration.
pub fn calibrate_gradient(cfg: &ApparatusConfig, current: f64) -> GradientCalibration {
    let per_um = cfg.gradient_slope_hz_per_um_amp;
    let per_site = per_um * cfg.site_spacing() * 1e6;
    // G/m per A is numerically identical to uG/um per A.
    let b_prime_per_amp = cfg.b_prime(1.0);
    GradientCalibration {
        hz_per_site_amp: per_site,
        hz_per_um_amp: per_um,
        b_prime_ug_per_um_amp: b_prime_per_amp,
        site_splitting_hz: cfg.site_splitting(current) / TAU,
        gradient_g_per_cm: cfg.b_prime(current).abs() / 100.0,
        current,
    }
}
