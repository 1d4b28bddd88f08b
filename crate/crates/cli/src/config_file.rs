//! Configuration files: `[apparatus]`, `[simulation]` and `[imaging]`
//! sections in the shared key-value format with SI unit suffixes. An empty
//! (or absent) file reproduces the reference apparatus.

use std::path::Path;

use mrlat::config::{ApparatusConfig, GammaMode};
use mrlat::error::{Error, Result};
use mrlat::imaging::ImagingConfig;
use mrlat::io::{self, units, SectionReader};
use mrlat::sim::ThermalMode;

const TAU: f64 = std::f64::consts::TAU;

/// Angular-frequency fields accept ordinary-frequency suffixes but are
/// stored and serialized in rad/s so that round-trips are exact.
const ANGULAR: &[(&str, f64)] = &[
    ("rad/s", 1.0),
    ("Hz", TAU),
    ("kHz", TAU * 1e3),
    ("MHz", TAU * 1e6),
];

/// Simulation defaults that are not part of the apparatus itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub lattice_extent: usize,
    pub p_a: f64,
    pub drift_rate: f64,
    pub shot_interval: f64,
    pub thermal: ThermalMode,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            lattice_extent: 200,
            p_a: 0.5,
            drift_rate: 10e-9,
            shot_interval: 10.0,
            thermal: ThermalMode::Resampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub apparatus: ApparatusConfig,
    pub sim: SimSettings,
    pub imaging: ImagingConfig,
}

pub fn load(path: Option<&Path>) -> Result<Settings> {
    match path {
        None => Ok(Settings::default()),
        Some(p) => parse(&std::fs::read_to_string(p)?),
    }
}

pub fn parse(text: &str) -> Result<Settings> {
    let mut settings = Settings::default();
    for section in io::parse_sections(text)? {
        let mut r = SectionReader::new(&section);
        match section.name.as_str() {
            "apparatus" => parse_apparatus(&mut r, &mut settings.apparatus)?,
            "simulation" => parse_simulation(&mut r, &mut settings.sim)?,
            "imaging" => parse_imaging(&mut r, &mut settings.imaging)?,
            other => {
                return Err(Error::Parse {
                    line: section.line,
                    msg: format!("unknown section [{other}] in configuration file"),
                })
            }
        }
        r.finish()?;
    }
    settings.apparatus.validate()?;
    Ok(settings)
}

fn parse_apparatus(r: &mut SectionReader, cfg: &mut ApparatusConfig) -> Result<()> {
    if let Some((v, l)) = r.take("lattice_wavelength") {
        cfg.lattice_wavelength = io::parse_quantity(&v, units::LENGTH, l)?;
    }
    if let Some((v, l)) = r.take("guiding_field") {
        cfg.guiding_field = io::parse_quantity(&v, units::FIELD, l)?;
    }
    if let Some((v, l)) = r.take("gradient_slope_hz_per_um_amp") {
        cfg.gradient_slope_hz_per_um_amp = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("gamma") {
        cfg.gamma_mode = match v.as_str() {
            "rounded" => GammaMode::Rounded,
            "exact" => GammaMode::ExactGFactors,
            other => {
                return Err(Error::Parse {
                    line: l,
                    msg: format!("gamma must be `rounded` or `exact`, got `{other}`"),
                })
            }
        };
    }
    if let Some((v, l)) = r.take("max_current") {
        cfg.max_current = io::parse_quantity(&v, units::CURRENT, l)?;
    }
    if let Some((v, l)) = r.take("radial_offset") {
        cfg.radial_offset = io::parse_quantity(&v, units::LENGTH, l)?;
    }
    if let Some((v, l)) = r.take("axial_offset") {
        cfg.axial_offset = io::parse_quantity(&v, units::LENGTH, l)?;
    }
    if let Some((v, l)) = r.take("trap_freq_axial") {
        cfg.trap_freq_axial = io::parse_quantity(&v, ANGULAR, l)?;
    }
    if let Some((v, l)) = r.take("trap_freq_radial") {
        cfg.trap_freq_radial = io::parse_quantity(&v, ANGULAR, l)?;
    }
    if let Some((v, l)) = r.take("temperature") {
        cfg.temperature = io::parse_quantity(&v, units::TEMPERATURE, l)?;
    }
    if let Some((v, l)) = r.take("nbar_axial") {
        cfg.nbar_axial = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("nbar_radial") {
        cfg.nbar_radial = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("rabi_peak") {
        cfg.rabi_peak = io::parse_quantity(&v, ANGULAR, l)?;
    }
    if let Some((v, l)) = r.take("t2") {
        cfg.t2 = io::parse_quantity(&v, units::TIME, l)?;
    }
    if let Some((v, l)) = r.take("pushout_survival_f4") {
        cfg.pushout_survival_f4 = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("pushout_survival_f3") {
        cfg.pushout_survival_f3 = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("validity_factor") {
        cfg.validity_factor = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("validity_strict") {
        cfg.validity_strict = parse_bool(&v, l)?;
    }
    Ok(())
}

fn parse_simulation(r: &mut SectionReader, sim: &mut SimSettings) -> Result<()> {
    if let Some((v, l)) = r.take("lattice_extent") {
        sim.lattice_extent = io::parse_u64(&v, l)? as usize;
    }
    if let Some((v, l)) = r.take("p_a") {
        sim.p_a = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("drift_rate") {
        sim.drift_rate = io::parse_quantity(&v, units::VELOCITY, l)?;
    }
    if let Some((v, l)) = r.take("shot_interval") {
        sim.shot_interval = io::parse_quantity(&v, units::TIME, l)?;
    }
    if let Some((v, l)) = r.take("thermal") {
        sim.thermal = match v.as_str() {
            "resampled" => ThermalMode::Resampled,
            "frozen" => ThermalMode::Frozen,
            "disabled" => ThermalMode::Disabled,
            other => {
                return Err(Error::Parse {
                    line: l,
                    msg: format!(
                        "thermal must be `resampled`, `frozen` or `disabled`, got `{other}`"
                    ),
                })
            }
        };
    }
    Ok(())
}

fn parse_imaging(r: &mut SectionReader, img: &mut ImagingConfig) -> Result<()> {
    if let Some((v, l)) = r.take("psf_fwhm") {
        img.psf_fwhm = io::parse_quantity(&v, units::LENGTH, l)?;
    }
    if let Some((v, l)) = r.take("pixel_size") {
        img.pixel_size = io::parse_quantity(&v, units::LENGTH, l)?;
    }
    if let Some((v, l)) = r.take("photons_per_atom") {
        img.photons_per_atom = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("background_rate") {
        img.background_rate = io::parse_f64(&v, l)?;
    }
    if let Some((v, l)) = r.take("height_px") {
        img.height_px = io::parse_u64(&v, l)? as usize;
    }
    if let Some((v, l)) = r.take("poisson_noise") {
        img.poisson_noise = parse_bool(&v, l)?;
    }
    Ok(())
}

fn parse_bool(v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Parse { line, msg: format!("invalid boolean `{other}`") }),
    }
}

/// Serialize the resolved settings in canonical units; parsing the output
/// reproduces the settings exactly.
pub fn serialize(s: &Settings) -> String {
    let a = &s.apparatus;
    let mut out = String::new();
    out.push_str("[apparatus]\n");
    out.push_str(&format!("lattice_wavelength = {} m\n", a.lattice_wavelength));
    out.push_str(&format!("guiding_field = {} G\n", a.guiding_field));
    out.push_str(&format!("gradient_slope_hz_per_um_amp = {}\n", a.gradient_slope_hz_per_um_amp));
    out.push_str(&format!(
        "gamma = {}\n",
        match a.gamma_mode {
            GammaMode::Rounded => "rounded",
            GammaMode::ExactGFactors => "exact",
        }
    ));
    out.push_str(&format!("max_current = {} A\n", a.max_current));
    out.push_str(&format!("radial_offset = {} m\n", a.radial_offset));
    out.push_str(&format!("axial_offset = {} m\n", a.axial_offset));
    out.push_str(&format!("trap_freq_axial = {} rad/s\n", a.trap_freq_axial));
    out.push_str(&format!("trap_freq_radial = {} rad/s\n", a.trap_freq_radial));
    out.push_str(&format!("temperature = {} K\n", a.temperature));
    out.push_str(&format!("nbar_axial = {}\n", a.nbar_axial));
    out.push_str(&format!("nbar_radial = {}\n", a.nbar_radial));
    out.push_str(&format!("rabi_peak = {} rad/s\n", a.rabi_peak));
    out.push_str(&format!("t2 = {} s\n", a.t2));
    out.push_str(&format!("pushout_survival_f4 = {}\n", a.pushout_survival_f4));
    out.push_str(&format!("pushout_survival_f3 = {}\n", a.pushout_survival_f3));
    out.push_str(&format!("validity_factor = {}\n", a.validity_factor));
    out.push_str(&format!("validity_strict = {}\n", a.validity_strict));
    let m = &s.sim;
    out.push_str("\n[simulation]\n");
    out.push_str(&format!("lattice_extent = {}\n", m.lattice_extent));
    out.push_str(&format!("p_a = {}\n", m.p_a));
    out.push_str(&format!("drift_rate = {} m/s\n", m.drift_rate));
    out.push_str(&format!("shot_interval = {} s\n", m.shot_interval));
    out.push_str(&format!(
        "thermal = {}\n",
        match m.thermal {
            ThermalMode::Resampled => "resampled",
            ThermalMode::Frozen => "frozen",
            ThermalMode::Disabled => "disabled",
        }
    ));
    let i = &s.imaging;
    out.push_str("\n[imaging]\n");
    out.push_str(&format!("psf_fwhm = {} m\n", i.psf_fwhm));
    out.push_str(&format!("pixel_size = {} m\n", i.pixel_size));
    out.push_str(&format!("photons_per_atom = {}\n", i.photons_per_atom));
    out.push_str(&format!("background_rate = {}\n", i.background_rate));
    out.push_str(&format!("height_px = {}\n", i.height_px));
    out.push_str(&format!("poisson_noise = {}\n", i.poisson_noise));
    out
}
