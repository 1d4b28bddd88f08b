//! Apparatus configuration and physical constants.
//!
//! All lengths are in meters, times in seconds, angular frequencies in rad/s,
//! magnetic fields in gauss, currents in ampere. Only frequency *differences*
//! enter any observable, so the gyromagnetic ratio is handled as a magnitude
//! with its sign tracked separately (the axial gradient B' is negative for a
//! positive per-site frequency splitting).

use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054571817e-34;
/// Bohr magneton over Planck constant (Hz/G).
pub const MU_B_OVER_H: f64 = 1.3996245042e6;
/// Cs-133 atomic mass (kg).
pub const CS_MASS: f64 = 132.905451961 * 1.66053906660e-27;
/// Cs ground-state electronic g-factor.
pub const CS_G_J: f64 = 2.00254032;
/// Cs nuclear g-factor in Bohr magnetons.
pub const CS_G_I: f64 = -0.00039885395;

const TAU: f64 = std::f64::consts::TAU;

/// Choice of gyromagnetic ratio for the |0> <-> |1> transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaMode {
    /// The rounded 2pi x 2.5 MHz/G used for headline numbers.
    #[default]
    Rounded,
    /// (3 g3 - 4 g4) mu_B / hbar from tabulated Cs ground-state g-factors.
    ExactGFactors,
}

/// A position relative to the symmetry axis of the gradient coils.
///
/// `z` runs along the lattice (and coil) axis; `x`, `y` span the transverse
/// plane, with `rho = sqrt(x^2 + y^2)` the radial distance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// A point on the symmetry axis.
    pub fn on_axis(z: f64) -> Self {
        Self { x: 0.0, y: 0.0, z }
    }

    /// A point at axial coordinate `z` and radial distance `rho` (placed
    /// along x).
    pub fn axial_radial(z: f64, rho: f64) -> Self {
        Self { x: rho, y: 0.0, z }
    }

    pub fn rho(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn add(&self, other: Position) -> Position {
        Position::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

/// Static apparatus parameters. Defaults reproduce the reference setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ApparatusConfig {
    /// Lattice laser wavelength (m).
    pub lattice_wavelength: f64,
    /// Guiding field B0 along z (G).
    pub guiding_field: f64,
    /// Calibrated frequency shift per length per coil current, Hz/(um A).
    pub gradient_slope_hz_per_um_amp: f64,
    /// Gyromagnetic-ratio convention.
    pub gamma_mode: GammaMode,
    /// Maximum coil current the supply delivers (A).
    pub max_current: f64,
    /// Radial offset of the lattice axis from the coil axis (m).
    pub radial_offset: f64,
    /// Axial offset of the lattice reference site from the quadrupole zero (m).
    pub axial_offset: f64,
    /// Axial trap frequency (rad/s).
    pub trap_freq_axial: f64,
    /// Radial trap frequency (rad/s).
    pub trap_freq_radial: f64,
    /// Sample temperature (K).
    pub temperature: f64,
    /// Mean axial vibrational quantum number.
    pub nbar_axial: f64,
    /// Mean radial vibrational quantum number.
    pub nbar_radial: f64,
    /// Peak Rabi frequency (rad/s).
    pub rabi_peak: f64,
    /// Transverse coherence time (s).
    pub t2: f64,
    /// Survival probability of F=4 atoms under the push-out.
    pub pushout_survival_f4: f64,
    /// Survival probability of F=3 atoms under the push-out.
    pub pushout_survival_f3: f64,
    /// Atomic mass (kg).
    pub atom_mass: f64,
    /// Safety factor for the second-order field expansion check.
    pub validity_factor: f64,
    /// Whether a validity violation is an error or only a logged warning.
    pub validity_strict: bool,
}

impl Default for ApparatusConfig {
    fn default() -> Self {
        Self {
            lattice_wavelength: 866e-9,
            guiding_field: 3.0,
            gradient_slope_hz_per_um_amp: 671.0,
            gamma_mode: GammaMode::Rounded,
            max_current: 45.0,
            radial_offset: 0.0,
            axial_offset: 0.0,
            trap_freq_axial: TAU * 115e3,
            trap_freq_radial: TAU * 1.2e3,
            temperature: 10e-6,
            nbar_axial: 1.2,
            nbar_radial: 200.0,
            rabi_peak: TAU * 60e3,
            t2: 200e-6,
            pushout_survival_f4: 0.01,
            pushout_survival_f3: 0.99,
            atom_mass: CS_MASS,
            validity_factor: 10.0,
            validity_strict: false,
        }
    }
}

impl ApparatusConfig {
    /// Site spacing, exactly half the lattice wavelength (m).
    pub fn site_spacing(&self) -> f64 {
        self.lattice_wavelength / 2.0
    }

    /// Signed gyromagnetic ratio (rad/s per G). Negative for this transition.
    pub fn gamma_signed(&self) -> f64 {
        match self.gamma_mode {
            GammaMode::Rounded => -TAU * 2.5e6,
            GammaMode::ExactGFactors => {
                let g4 = CS_G_J * (5.0 / 40.0) + CS_G_I * (35.0 / 40.0);
                let g3 = CS_G_J * (-3.0 / 24.0) + CS_G_I * (27.0 / 24.0);
                (3.0 * g3 - 4.0 * g4) * TAU * MU_B_OVER_H
            }
        }
    }

    /// Magnitude of the gyromagnetic ratio (rad/s per G).
    pub fn gamma_magnitude(&self) -> f64 {
        self.gamma_signed().abs()
    }

    /// Guiding-field contribution delta_0 = |gamma| B0 (rad/s).
    pub fn delta0(&self) -> f64 {
        self.gamma_magnitude() * self.guiding_field
    }

    /// Position-dependent shift omega'(I) (rad/s per m), non-negative.
    pub fn omega_prime(&self, current: f64) -> f64 {
        TAU * self.gradient_slope_hz_per_um_amp * 1e6 * current
    }

    /// Per-site frequency splitting at `current` (rad/s).
    pub fn site_splitting(&self, current: f64) -> f64 {
        self.omega_prime(current) * self.site_spacing()
    }

    /// Signed axial field gradient B'(I) = omega'(I) / gamma (G/m).
    /// Negative for positive current since gamma is negative.
    pub fn b_prime(&self, current: f64) -> f64 {
        self.omega_prime(current) / self.gamma_signed()
    }

    /// Gradient magnitude (G/m), used by the field model in the frame where
    /// the transition frequency increases along +z.
    pub fn b_prime_magnitude(&self, current: f64) -> f64 {
        self.omega_prime(current) / self.gamma_magnitude()
    }

    /// Thermal 1/sqrt(e) half-widths of the atomic wave packet,
    /// `(sigma_axial, sigma_radial)` in meters.
    pub fn thermal_sigmas(&self) -> (f64, f64) {
        let sig = |nbar: f64, omega: f64| {
            (HBAR * (2.0 * nbar + 1.0) / (2.0 * self.atom_mass * omega)).sqrt()
        };
        (
            sig(self.nbar_axial, self.trap_freq_axial),
            sig(self.nbar_radial, self.trap_freq_radial),
        )
    }

    /// Check the static invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lattice_wavelength", self.lattice_wavelength),
            ("guiding_field", self.guiding_field),
            ("gradient_slope", self.gradient_slope_hz_per_um_amp),
            ("trap_freq_axial", self.trap_freq_axial),
            ("trap_freq_radial", self.trap_freq_radial),
            ("temperature", self.temperature),
            ("rabi_peak", self.rabi_peak),
            ("t2", self.t2),
            ("atom_mass", self.atom_mass),
            ("validity_factor", self.validity_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_current < 0.0 {
            return Err(Error::InvalidConfig("max_current must be >= 0".into()));
        }
        for (name, p) in [
            ("pushout_survival_f4", self.pushout_survival_f4),
            ("pushout_survival_f3", self.pushout_survival_f3),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.nbar_axial < 0.0 || self.nbar_radial < 0.0 {
            return Err(Error::InvalidConfig("mean occupation numbers must be >= 0".into()));
        }
        Ok(())
    }
}
