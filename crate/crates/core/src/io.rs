//! File formats: the sectioned key-value text format (plan and configuration
//! files), CSV exports, and 16-bit binary PGM images.
//!
//! Key-value files consist of `[section]` headers and `key = value` lines;
//! `#` starts a comment. Values may carry an SI unit suffix (`10 nm/s`,
//! `20 us`, `6.4 kHz`). Serializers always emit canonical units (s, m, Hz,
//! A, rad/s) with shortest round-trip float formatting, so
//! parse -> serialize -> parse is the identity.

use std::io::Write;

use crate::analysis::{AddressedRegion, EffectiveSpectrum, Histogram};
use crate::error::{Error, Result};
use crate::imaging::SyntheticImage;
use crate::planner::{PlanPulse, ResponseModel, SequencePlan};
use crate::pulse::{PulseShape, Spectrum};
use crate::sim::EnsembleResult;

/// One `[section]` with its `key = value` entries.
#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<(String, String, usize)>,
}

/// Parse the sectioned key-value format. Keys before any section header are
/// rejected.
pub fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse { line: line_no, msg: "unterminated section header".into() })?
                .trim();
            if name.is_empty() {
                return Err(Error::Parse { line: line_no, msg: "empty section name".into() });
            }
            sections.push(Section { name: name.to_string(), line: line_no, entries: vec![] });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let section = sections.last_mut().ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "key outside of any [section]".into(),
        })?;
        section.entries.push((key.trim().to_string(), value.trim().to_string(), line_no));
    }
    Ok(sections)
}

/// Consumes entries of one section and rejects anything left over, naming
/// the offending key.
pub struct SectionReader {
    name: String,
    entries: Vec<(String, String, usize)>,
    taken: Vec<bool>,
}

impl SectionReader {
    pub fn new(section: &Section) -> Self {
        Self {
            name: section.name.clone(),
            entries: section.entries.clone(),
            taken: vec![false; section.entries.len()],
        }
    }

    pub fn take(&mut self, key: &str) -> Option<(String, usize)> {
        for (i, (k, v, line)) in self.entries.iter().enumerate() {
            if !self.taken[i] && k == key {
                self.taken[i] = true;
                return Some((v.clone(), *line));
            }
        }
        None
    }

    pub fn require(&mut self, key: &str) -> Result<(String, usize)> {
        self.take(key).ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("section [{}] is missing required key `{key}`", self.name),
        })
    }

    /// Error on unconsumed keys.
    pub fn finish(self) -> Result<()> {
        for (i, (k, _, line)) in self.entries.iter().enumerate() {
            if !self.taken[i] {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("unknown key `{k}` in section [{}]", self.name),
                });
            }
        }
        Ok(())
    }
}

/// Unit tables: suffix and multiplier to the canonical unit.
pub mod units {
    pub const TIME: &[(&str, f64)] = &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9)];
    pub const LENGTH: &[(&str, f64)] =
        &[("m", 1.0), ("cm", 1e-2), ("mm", 1e-3), ("um", 1e-6), ("nm", 1e-9)];
    pub const FREQUENCY: &[(&str, f64)] =
        &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)];
    pub const ANGULAR_FREQUENCY: &[(&str, f64)] = &[("rad/s", 1.0)];
    pub const VELOCITY: &[(&str, f64)] =
        &[("m/s", 1.0), ("mm/s", 1e-3), ("um/s", 1e-6), ("nm/s", 1e-9)];
    pub const CURRENT: &[(&str, f64)] = &[("A", 1.0), ("mA", 1e-3)];
    pub const FIELD: &[(&str, f64)] = &[("G", 1.0), ("mG", 1e-3), ("uG", 1e-6), ("T", 1e4)];
    pub const TEMPERATURE: &[(&str, f64)] = &[("K", 1.0), ("mK", 1e-3), ("uK", 1e-6)];
    pub const NONE: &[(&str, f64)] = &[];
}

/// Parse a number with an optional whitespace-separated unit suffix from the
/// given table. A bare number is taken in the canonical unit.
pub fn parse_quantity(value: &str, table: &[(&str, f64)], line: usize) -> Result<f64> {
    let value = value.trim();
    let (num_str, factor) = if let Some((n, u)) = value.split_once(char::is_whitespace) {
        let unit = u.trim();
        let factor = table.iter().find(|(s, _)| *s == unit).map(|(_, f)| *f).ok_or_else(|| {
            Error::Parse {
                line,
                msg: format!(
                    "unknown unit `{unit}` (expected one of {:?})",
                    table.iter().map(|(s, _)| *s).collect::<Vec<_>>()
                ),
            }
        })?;
        (n.trim(), factor)
    } else {
        (value, 1.0)
    };
    let number: f64 = num_str
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("invalid number `{num_str}`") })?;
    Ok(number * factor)
}

pub fn parse_f64(value: &str, line: usize) -> Result<f64> {
    value.trim().parse().map_err(|_| Error::Parse { line, msg: format!("invalid number `{value}`") })
}

pub fn parse_u64(value: &str, line: usize) -> Result<u64> {
    value.trim().parse().map_err(|_| Error::Parse { line, msg: format!("invalid integer `{value}`") })
}

// ---------------------------------------------------------------------------
// Sequence plan files
// ---------------------------------------------------------------------------

/// Serialize a plan to the documented key-value schema.
pub fn serialize_plan(plan: &SequencePlan) -> String {
    let mut out = String::new();
    out.push_str("[plan]\n");
    out.push_str(&format!("loops = {}\n", plan.loop_count));
    out.push_str(&format!("current = {} A\n", plan.current));
    out.push_str(&format!("pushout_survival_f4 = {}\n", plan.pushout_survival_f4));
    out.push_str(&format!("pushout_survival_f3 = {}\n", plan.pushout_survival_f3));
    out.push_str(&format!("init_efficiency = {}\n", plan.init_efficiency));
    if let Some(seed) = plan.seed {
        out.push_str(&format!("seed = {seed}\n"));
    }
    for p in &plan.pulses {
        out.push_str("\n[pulse]\n");
        match p.descriptor.shape {
            PulseShape::Gaussian { sigma_t, truncation } => {
                out.push_str("shape = gaussian\n");
                out.push_str(&format!("sigma_t = {sigma_t} s\n"));
                out.push_str(&format!("truncation = {truncation}\n"));
            }
            PulseShape::Rectangular { duration } => {
                out.push_str("shape = rectangular\n");
                out.push_str(&format!("duration = {duration} s\n"));
            }
        }
        out.push_str(&format!("frequency_offset = {} Hz\n", p.offset_hz));
        match p.response {
            ResponseModel::Gaussian { p_max, sigma_w } => {
                out.push_str("response = gaussian\n");
                out.push_str(&format!("response_p_max = {p_max}\n"));
                out.push_str(&format!("response_sigma_w = {sigma_w} rad/s\n"));
            }
            ResponseModel::Rect { omega, duration } => {
                out.push_str("response = rect\n");
                out.push_str(&format!("response_omega = {omega} rad/s\n"));
                out.push_str(&format!("response_duration = {duration} s\n"));
            }
        }
    }
    out
}

/// Parse a plan file.
pub fn parse_plan(text: &str) -> Result<SequencePlan> {
    let sections = parse_sections(text)?;
    let mut plan_header: Option<SectionReader> = None;
    let mut pulses = Vec::new();
    for section in &sections {
        match section.name.as_str() {
            "plan" => {
                if plan_header.is_some() {
                    return Err(Error::Parse {
                        line: section.line,
                        msg: "duplicate [plan] section".into(),
                    });
                }
                plan_header = Some(SectionReader::new(section));
            }
            "pulse" => pulses.push(parse_pulse_section(section)?),
            other => {
                return Err(Error::Parse {
                    line: section.line,
                    msg: format!("unknown section [{other}] in plan file"),
                })
            }
        }
    }
    let mut header = plan_header
        .ok_or_else(|| Error::Parse { line: 0, msg: "plan file is missing the [plan] section".into() })?;
    let (loops, l1) = header.require("loops")?;
    let loop_count = parse_u64(&loops, l1)? as u32;
    let (current, l2) = header.require("current")?;
    let current = parse_quantity(&current, units::CURRENT, l2)?;
    let (f4, l3) = header.require("pushout_survival_f4")?;
    let pushout_survival_f4 = parse_f64(&f4, l3)?;
    let (f3, l4) = header.require("pushout_survival_f3")?;
    let pushout_survival_f3 = parse_f64(&f3, l4)?;
    let (init, l5) = header.require("init_efficiency")?;
    let init_efficiency = parse_f64(&init, l5)?;
    let seed = match header.take("seed") {
        Some((v, l)) => Some(parse_u64(&v, l)?),
        None => None,
    };
    header.finish()?;
    if pulses.is_empty() {
        return Err(Error::Parse { line: 0, msg: "plan file contains no [pulse] sections".into() });
    }
    Ok(SequencePlan {
        pulses,
        loop_count,
        current,
        pushout_survival_f4,
        pushout_survival_f3,
        init_efficiency,
        seed,
    })
}

fn parse_pulse_section(section: &Section) -> Result<PlanPulse> {
    let mut r = SectionReader::new(section);
    let (shape_name, shape_line) = r.require("shape")?;
    let shape = match shape_name.as_str() {
        "gaussian" => {
            let (st, l) = r.require("sigma_t")?;
            let sigma_t = parse_quantity(&st, units::TIME, l)?;
            let (tr, l) = r.require("truncation")?;
            let truncation = parse_f64(&tr, l)?;
            PulseShape::Gaussian { sigma_t, truncation }
        }
        "rectangular" => {
            let (d, l) = r.require("duration")?;
            PulseShape::Rectangular { duration: parse_quantity(&d, units::TIME, l)? }
        }
        other => {
            return Err(Error::Parse {
                line: shape_line,
                msg: format!("unknown pulse shape `{other}`"),
            })
        }
    };
    let (off, off_line) = r.require("frequency_offset")?;
    let offset_hz = parse_quantity(&off, units::FREQUENCY, off_line)?;
    let (resp_name, resp_line) = r.require("response")?;
    let response = match resp_name.as_str() {
        "gaussian" => {
            let (p, l) = r.require("response_p_max")?;
            let p_max = parse_f64(&p, l)?;
            let (s, l) = r.require("response_sigma_w")?;
            let sigma_w = parse_quantity(&s, units::ANGULAR_FREQUENCY, l)?;
            ResponseModel::Gaussian { p_max, sigma_w }
        }
        "rect" => {
            let (o, l) = r.require("response_omega")?;
            let omega = parse_quantity(&o, units::ANGULAR_FREQUENCY, l)?;
            let (d, l) = r.require("response_duration")?;
            let duration = parse_quantity(&d, units::TIME, l)?;
            ResponseModel::Rect { omega, duration }
        }
        other => {
            return Err(Error::Parse {
                line: resp_line,
                msg: format!("unknown response model `{other}`"),
            })
        }
    };
    r.finish()?;
    PlanPulse::new_pi(shape, offset_hz, response)
}

// ---------------------------------------------------------------------------
// CSV exports (RFC-4180-style, header row, >= 12 significant digits)
// ---------------------------------------------------------------------------

const TAU: f64 = std::f64::consts::TAU;

fn fmt(v: f64) -> String {
    format!("{v:.15e}")
}

pub fn write_spectrum_csv<W: Write>(w: &mut W, spectrum: &Spectrum) -> Result<()> {
    writeln!(w, "detuning_hz,transfer")?;
    for &(d, p) in &spectrum.samples {
        writeln!(w, "{},{}", fmt(d / TAU), fmt(p))?;
    }
    Ok(())
}

pub fn write_effective_spectrum_csv<W: Write>(w: &mut W, spectrum: &EffectiveSpectrum) -> Result<()> {
    writeln!(w, "z_sites,transfer")?;
    for &(z, p) in &spectrum.samples {
        writeln!(w, "{},{}", fmt(z), fmt(p))?;
    }
    Ok(())
}

pub fn write_shots_csv<W: Write>(w: &mut W, result: &EnsembleResult) -> Result<()> {
    writeln!(w, "shot_index,site,axial_nm,radial_nm,state")?;
    for shot in &result.shots {
        for a in &shot.survivors {
            let radial = (a.radial[0] * a.radial[0] + a.radial[1] * a.radial[1]).sqrt();
            writeln!(
                w,
                "{},{},{},{},{}",
                shot.shot_index,
                a.site,
                fmt(a.axial * 1e9),
                fmt(radial * 1e9),
                match a.state {
                    crate::sim::AtomState::Zero => "ZERO",
                    crate::sim::AtomState::One => "ONE",
                    crate::sim::AtomState::Lost => "LOST",
                }
            )?;
        }
    }
    Ok(())
}

pub fn write_drift_csv<W: Write>(w: &mut W, result: &EnsembleResult) -> Result<()> {
    writeln!(w, "shot_index,drift_nm")?;
    for shot in &result.shots {
        writeln!(w, "{},{}", shot.shot_index, fmt(shot.drift_offset * 1e9))?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(w: &mut W, result: &EnsembleResult) -> Result<()> {
    writeln!(w, "site,survival_count")?;
    for (site, count) in result.survivors_per_site() {
        writeln!(w, "{site},{count}")?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(w: &mut W, hist: &Histogram) -> Result<()> {
    writeln!(w, "bin_center,count")?;
    for (c, n) in hist.bin_centers().iter().zip(&hist.counts) {
        writeln!(w, "{},{}", fmt(*c), n)?;
    }
    Ok(())
}

pub fn write_region_csv<W: Write>(w: &mut W, region: &AddressedRegion) -> Result<()> {
    writeln!(w, "z_sites,rho_um,inside")?;
    for (ri, &rho) in region.rho_m.iter().enumerate() {
        for (zi, &z) in region.z_sites.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                fmt(z),
                fmt(rho * 1e6),
                u8::from(region.contains(ri, zi))
            )?;
        }
    }
    Ok(())
}

/// Vertically binned image profile as CSV.
pub fn write_profile_csv<W: Write>(w: &mut W, image: &SyntheticImage) -> Result<()> {
    writeln!(w, "x_um,counts")?;
    let (xs, ys) = image.binned_profile();
    for (x, y) in xs.iter().zip(&ys) {
        writeln!(w, "{},{}", fmt(x * 1e6), fmt(*y))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 16-bit binary PGM
// ---------------------------------------------------------------------------

/// Write the image as a binary P5 greymap with 16-bit big-endian samples.
/// Counts are scaled so that `max_count` (default: the image maximum) maps
/// to 65535.
pub fn write_pgm16<W: Write>(w: &mut W, image: &SyntheticImage, max_count: Option<f64>) -> Result<()> {
    let max = max_count
        .unwrap_or_else(|| image.pixels.iter().cloned().fold(0.0, f64::max))
        .max(1e-300);
    writeln!(w, "P5")?;
    writeln!(w, "{} {}", image.width, image.height)?;
    writeln!(w, "65535")?;
    for &p in &image.pixels {
        let v = ((p / max).clamp(0.0, 1.0) * 65535.0).round() as u16;
        w.write_all(&v.to_be_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ApparatusConfig;
    use crate::planner::TargetPattern;

    #[test]
    fn quantity_parsing() {
        // Scaled units are exact up to one rounding of the multiplication.
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-15 * b.abs();
        assert!(close(parse_quantity("10 nm/s", units::VELOCITY, 1).unwrap(), 10e-9));
        assert!(close(parse_quantity("20 us", units::TIME, 1).unwrap(), 20e-6));
        assert!(close(parse_quantity("6.4 kHz", units::FREQUENCY, 1).unwrap(), 6.4e3));
        // Canonical units parse bit-exactly.
        assert_eq!(parse_quantity("2e-5 s", units::TIME, 1).unwrap(), 2e-5);
        assert_eq!(parse_quantity("45", units::CURRENT, 1).unwrap(), 45.0);
        assert!(parse_quantity("3 parsec", units::LENGTH, 1).is_err());
    }

    #[test]
    fn sections_reject_stray_keys() {
        assert!(matches!(parse_sections("a = 1\n"), Err(Error::Parse { line: 1, .. })));
        let s = parse_sections("# comment\n[one]\na = 1\nb = 2 us\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].entries.len(), 2);
    }

    #[test]
    fn plan_roundtrip_is_identity() {
        let cfg = ApparatusConfig::default();
        let pattern = TargetPattern::new(vec![0, 2, 16, 18, 32, 34]).unwrap();
        let freqs = crate::planner::frequencies_for_pattern(&pattern, 45.0, &cfg).unwrap();
        let pulses: Vec<PlanPulse> = freqs
            .iter()
            .map(|&f| {
                PlanPulse::new_pi(
                    PulseShape::Gaussian { sigma_t: 20e-6, truncation: 2.0 },
                    f / TAU,
                    ResponseModel::Gaussian { p_max: 0.843, sigma_w: TAU * 6.4e3 },
                )
                .unwrap()
            })
            .collect();
        let plan = SequencePlan {
            pulses,
            loop_count: 2,
            current: 45.0,
            pushout_survival_f4: 0.01,
            pushout_survival_f3: 0.99,
            init_efficiency: 1.0,
            seed: Some(7),
        };
        let text = serialize_plan(&plan);
        let parsed = parse_plan(&text).unwrap();
        assert_eq!(parsed, parse_plan(&serialize_plan(&parsed)).unwrap());
        assert_eq!(parsed, plan);
        plan.validate(&cfg).unwrap();
    }

    #[test]
    fn plan_unknown_key_is_named() {
        let text = "[plan]\nloops = 1\ncurrent = 45 A\npushout_survival_f4 = 0\n\
                    pushout_survival_f3 = 1\ninit_efficiency = 1\nbogus_key = 3\n\
                    [pulse]\nshape = gaussian\nsigma_t = 2e-5 s\ntruncation = 2\n\
                    frequency_offset = 0 Hz\nresponse = gaussian\nresponse_p_max = 0.8\n\
                    response_sigma_w = 40000 rad/s\n";
        let err = parse_plan(text).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "error was: {err}");
    }

    #[test]
    fn pgm_header_and_size() {
        let image = SyntheticImage {
            width: 3,
            height: 2,
            pixels: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            origin: 0.0,
            pixel_size: 1e-6,
        };
        let mut buf = Vec::new();
        write_pgm16(&mut buf, &image, None).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n65535\n"));
        assert_eq!(buf.len(), b"P5\n3 2\n65535\n".len() + 12);
        // Max pixel maps to 65535 big-endian.
        assert_eq!(&buf[buf.len() - 2..], &[0xff, 0xff]);
    }

    #[test]
    fn csv_has_at_least_12_significant_digits() {
        let spec = Spectrum::gaussian(0.843, TAU * 6.4e3, 3.0, 10);
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &spec).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "detuning_hz,transfer");
        let first = lines.next().unwrap();
        let field = first.split(',').next().unwrap();
        let mantissa = field.split('e').next().unwrap();
        let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
        assert!(digits >= 12, "field {field} has {digits} digits");
    }
}
