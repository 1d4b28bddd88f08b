//! Translate target site patterns into commensurate pulse trains, predict
//! selectivity and yield, optimize the pulse-width / loop-count trade-off,
//! and estimate whole-pattern and Mott-plane preparation probabilities.

use crate::config::ApparatusConfig;
use crate::error::{Error, Result};
use crate::ode::OdeOptions;
use crate::pulse::{self, PulseDescriptor, PulseShape};

/// Target sites, as lattice indices relative to a reference site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetPattern {
    sites: Vec<i64>,
}

impl TargetPattern {
    /// Sites must be non-empty and strictly increasing.
    pub fn new(sites: Vec<i64>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidConfig("pattern must contain at least one site".into()));
        }
        if sites.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("pattern sites must be strictly increasing".into()));
        }
        Ok(Self { sites })
    }

    pub fn sites(&self) -> &[i64] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Center-frequency offsets (rad/s, ascending) addressing each pattern site:
/// `omega_i = omega'(I) * (lambda/2) * site_i`.
pub fn frequencies_for_pattern(
    pattern: &TargetPattern,
    current: f64,
    cfg: &ApparatusConfig,
) -> Result<Vec<f64>> {
    if current == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let split = cfg.site_splitting(current);
    Ok(pattern.sites.iter().map(|&s| s as f64 * split).collect())
}

/// Independent re-validation of the lattice-periodicity condition: all
/// pairwise frequency differences must be integer multiples of the per-site
/// splitting within `rel_tol`.
pub fn validate_commensurability(
    frequencies: &[f64],
    current: f64,
    cfg: &ApparatusConfig,
    rel_tol: f64,
) -> Result<()> {
    if current == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let split = cfg.site_splitting(current);
    for (i, &wi) in frequencies.iter().enumerate() {
        for &wj in frequencies.iter().skip(i + 1) {
            let ratio = (wi - wj).abs() / split;
            let err = (ratio - ratio.round()).abs();
            if err > rel_tol * ratio.max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "frequency pair ({wi:.3}, {wj:.3}) rad/s is off the site grid by {err:.2e} sites"
                )));
            }
        }
    }
    Ok(())
}

/// Transfer response used when a pulse acts on an atom in the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResponseModel {
    /// Gaussian spectral response with fitted peak transfer and width.
    Gaussian { p_max: f64, sigma_w: f64 },
    /// Analytic rectangular-pulse response.
    Rect { omega: f64, duration: f64 },
}

impl ResponseModel {
    /// Transfer probability at detuning `delta` (rad/s) for one pulse.
    pub fn transfer(&self, delta: f64) -> f64 {
        match *self {
            ResponseModel::Gaussian { p_max, sigma_w } => {
                pulse::gaussian_spectrum(delta, sigma_w, p_max)
            }
            ResponseModel::Rect { omega, duration } => {
                pulse::rect_transfer(delta, omega, duration)
            }
        }
    }
}

/// One entry of the pulse train.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanPulse {
    pub descriptor: PulseDescriptor,
    /// Center frequency offset in Hz. This is the value plan files store;
    /// the descriptor carries the derived rad/s offset.
    pub offset_hz: f64,
    pub response: ResponseModel,
}

impl PlanPulse {
    /// Build a pi-pulse entry from an envelope shape and its frequency
    /// offset in Hz.
    pub fn new_pi(shape: PulseShape, offset_hz: f64, response: ResponseModel) -> Result<Self> {
        let offset = offset_hz * std::f64::consts::TAU;
        let descriptor = match shape {
            PulseShape::Rectangular { duration } => {
                PulseDescriptor::pi_rectangular(duration, offset)?
            }
            PulseShape::Gaussian { sigma_t, truncation } => {
                PulseDescriptor::pi_gaussian(sigma_t, truncation, offset)?
            }
        };
        Ok(Self { descriptor, offset_hz, response })
    }
}

/// A complete addressing sequence: the pulse train, the inner-loop repetition
/// count, push-out survivals and bookkeeping efficiencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePlan {
    pub pulses: Vec<PlanPulse>,
    pub loop_count: u32,
    /// Coil current the train frequencies were planned for (A).
    pub current: f64,
    pub pushout_survival_f4: f64,
    pub pushout_survival_f3: f64,
    pub init_efficiency: f64,
    pub seed: Option<u64>,
}

impl SequencePlan {
    /// Plan Gaussian pi-pulses for `pattern`, computing the shared spectral
    /// response with the Bloch oracle at the apparatus coherence time.
    pub fn for_pattern(
        pattern: &TargetPattern,
        sigma_t: f64,
        truncation: f64,
        loop_count: u32,
        current: f64,
        cfg: &ApparatusConfig,
    ) -> Result<Self> {
        let freqs = frequencies_for_pattern(pattern, current, cfg)?;
        let reference = PulseDescriptor::pi_gaussian(sigma_t, truncation, 0.0)?;
        let spectrum = pulse::sample_bloch_spectrum(&reference, cfg.t2, &OdeOptions::default())?;
        let response = ResponseModel::Gaussian { p_max: spectrum.p_max, sigma_w: spectrum.sigma_w };
        let pulses = freqs
            .iter()
            .map(|&f| {
                PlanPulse::new_pi(
                    PulseShape::Gaussian { sigma_t, truncation },
                    f / std::f64::consts::TAU,
                    response,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let plan = Self {
            pulses,
            loop_count,
            current,
            pushout_survival_f4: cfg.pushout_survival_f4,
            pushout_survival_f3: cfg.pushout_survival_f3,
            init_efficiency: 1.0,
            seed: None,
        };
        plan.validate(cfg)?;
        Ok(plan)
    }

    /// Replace every pulse response (e.g. to pin measured spectral values).
    pub fn with_response(mut self, response: ResponseModel) -> Self {
        for p in &mut self.pulses {
            p.response = response;
        }
        self
    }

    /// Shared structural invariants: loop count, one envelope shape for the
    /// whole train, frequencies on the site grid. A train whose site spacing
    /// is tighter than 4 sigma_w(M) is legal but logged as a collision risk.
    pub fn validate(&self, cfg: &ApparatusConfig) -> Result<()> {
        if self.loop_count < 1 {
            return Err(Error::InvalidConfig("loop count must be at least 1".into()));
        }
        if self.pulses.is_empty() {
            return Err(Error::InvalidConfig("plan contains no pulses".into()));
        }
        for p in &self.pulses {
            if p.descriptor.shape != self.pulses[0].descriptor.shape {
                return Err(Error::InvalidConfig(
                    "all train pulses must share the envelope shape".into(),
                ));
            }
        }
        for (name, p) in [
            ("pushout_survival_f4", self.pushout_survival_f4),
            ("pushout_survival_f3", self.pushout_survival_f3),
            ("init_efficiency", self.init_efficiency),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1]")));
            }
        }
        let freqs: Vec<f64> = self.pulses.iter().map(|p| p.descriptor.center_offset).collect();
        if self.current != 0.0 {
            validate_commensurability(&freqs, self.current, cfg, 1e-6)?;
            if let ResponseModel::Gaussian { sigma_w, .. } = self.pulses[0].response {
                let split = cfg.site_splitting(self.current);
                let sigma_m = sigma_w / (self.loop_count as f64).sqrt();
                let mut offsets: Vec<f64> = freqs.clone();
                offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if let Some(min_gap) = offsets
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .min_by(|a, b| a.partial_cmp(b).unwrap())
                {
                    if min_gap < 4.0 * sigma_m {
                        log::warn!(
                            "pattern spacing {:.2} sites is below 4 sigma_w(M) = {:.2} sites; \
                             neighboring pulses overlap spectrally",
                            min_gap / split,
                            4.0 * sigma_m / split
                        );
                    }
                }
            }
        }
        Ok(())
    }

    /// Single-pulse response shared by the train.
    pub fn response(&self) -> ResponseModel {
        self.pulses[0].response
    }
}

/// Pulse input for selectivity prediction: either an envelope width (runs
/// the Bloch oracle) or an already-known spectral response.
#[derive(Debug, Clone, Copy)]
pub enum PulseSelectivity {
    FromSigmaT { sigma_t: f64, truncation: f64 },
    FromSigmaOmega { sigma_w: f64, p_max: f64 },
}

/// Predicted selectivity of an M-loop sequence.
#[derive(Debug, Clone, Copy)]
pub struct Selectivity {
    /// Single-pulse fitted peak transfer.
    pub p_max_single: f64,
    /// Single-pulse fitted spectral width (rad/s).
    pub sigma_w_single: f64,
    /// `P_max^M`.
    pub p_max_m: f64,
    /// `sigma_w / sqrt(M)` (rad/s).
    pub sigma_w_m: f64,
    /// Position-space selectivity `sigma_w(M) / (omega' lambda/2)` in sites.
    pub sigma_z_sites: f64,
}

/// Predict `P_max(M)`, `sigma_w(M)` and the position-space selectivity
/// width for an M-loop sequence at coil current `current`.
pub fn plan_selectivity(
    input: &PulseSelectivity,
    loops: u32,
    current: f64,
    cfg: &ApparatusConfig,
) -> Result<Selectivity> {
    if loops < 1 {
        return Err(Error::InvalidConfig("loop count must be at least 1".into()));
    }
    if current <= 0.0 {
        return Err(Error::ZeroGradient);
    }
    let (p1, s1) = match *input {
        PulseSelectivity::FromSigmaT { sigma_t, truncation } => {
            let pulse = PulseDescriptor::pi_gaussian(sigma_t, truncation, 0.0)?;
            let spec = pulse::sample_bloch_spectrum(&pulse, cfg.t2, &OdeOptions::default())?;
            (spec.p_max, spec.sigma_w)
        }
        PulseSelectivity::FromSigmaOmega { sigma_w, p_max } => (p_max, sigma_w),
    };
    let m = loops as f64;
    let sigma_m = s1 / m.sqrt();
    Ok(Selectivity {
        p_max_single: p1,
        sigma_w_single: s1,
        p_max_m: p1.powi(loops as i32),
        sigma_w_m: sigma_m,
        sigma_z_sites: sigma_m / cfg.site_splitting(current),
    })
}

/// Best (sigma_t, M) over a search domain.
#[derive(Debug, Clone, Copy)]
pub struct OptimizedSequence {
    pub sigma_t: f64,
    pub loops: u32,
    pub selectivity: Selectivity,
}

/// Maximize `P_max(M)` subject to `sigma_z(M) <= target_sigma_z` and
/// `P_max(M) >= min_p`. Deterministic tie-break: smaller M, then smaller
/// sigma_t.
pub fn optimize_loop_count(
    target_sigma_z_sites: f64,
    min_p: f64,
    current: f64,
    cfg: &ApparatusConfig,
    sigma_ts: &[f64],
    loop_counts: &[u32],
    truncation: f64,
) -> Result<OptimizedSequence> {
    if sigma_ts.is_empty() || loop_counts.is_empty() {
        return Err(Error::InvalidConfig("empty search domain".into()));
    }
    // One Bloch spectrum per sigma_t, reused across loop counts.
    let mut singles: Vec<(f64, f64, f64)> = Vec::with_capacity(sigma_ts.len());
    for &sigma_t in sigma_ts {
        let pulse = PulseDescriptor::pi_gaussian(sigma_t, truncation, 0.0)?;
        let spec = pulse::sample_bloch_spectrum(&pulse, cfg.t2, &OdeOptions::default())?;
        singles.push((sigma_t, spec.p_max, spec.sigma_w));
    }
    let mut ms = loop_counts.to_vec();
    ms.sort_unstable();
    let mut sts: Vec<usize> = (0..singles.len()).collect();
    sts.sort_by(|&a, &b| singles[a].0.partial_cmp(&singles[b].0).unwrap());

    let split = cfg.site_splitting(current);
    let mut best: Option<OptimizedSequence> = None;
    for &m in &ms {
        for &si in &sts {
            let (sigma_t, p1, s1) = singles[si];
            let sigma_m = s1 / (m as f64).sqrt();
            let sigma_z = sigma_m / split;
            let p_m = p1.powi(m as i32);
            if sigma_z <= target_sigma_z_sites && p_m >= min_p {
                let better = match &best {
                    None => true,
                    Some(b) => p_m > b.selectivity.p_max_m,
                };
                if better {
                    best = Some(OptimizedSequence {
                        sigma_t,
                        loops: m,
                        selectivity: Selectivity {
                            p_max_single: p1,
                            sigma_w_single: s1,
                            p_max_m: p_m,
                            sigma_w_m: sigma_m,
                            sigma_z_sites: sigma_z,
                        },
                    });
                }
            }
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no (sigma_t, M) in the domain reaches sigma_z <= {target_sigma_z_sites} sites \
             with P_max(M) >= {min_p}"
        ))
    })
}

/// Whole-pattern preparation probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSuccess {
    /// Probability that all N sites are initially occupied: `p_a^N`.
    pub p_ini: f64,
    /// Probability that the full pattern is prepared: `(p_a P_keep)^N`.
    pub p_full: f64,
}

pub fn pattern_success_probability(n_atoms: u32, p_a: f64, p_keep: f64) -> Result<PatternSuccess> {
    if n_atoms < 1 {
        return Err(Error::InvalidConfig("pattern needs at least one atom".into()));
    }
    if !(0.0..=1.0).contains(&p_a) || !(0.0..=1.0).contains(&p_keep) {
        return Err(Error::InvalidConfig("probabilities must be in [0, 1]".into()));
    }
    let n = n_atoms as i32;
    Ok(PatternSuccess { p_ini: p_a.powi(n), p_full: (p_a * p_keep).powi(n) })
}

/// Plane-selection yield from a unity-filled spherical cloud.
#[derive(Debug, Clone)]
pub struct MottPlaneYield {
    /// Retained atoms in the addressed plane.
    pub atoms_in_plane: f64,
    /// Fraction of all retained atoms that stem from |plane index| >= 1.
    pub neighbor_fraction: f64,
    /// `(plane index, retained atoms)` for every plane intersecting the cloud.
    pub plane_retained: Vec<(i64, f64)>,
}

/// Estimate how many atoms a transfer-and-push-out sequence of `loops`
/// inner loops retains in the central plane of a spherical unity-filled
/// cloud, and how many leak in from neighboring planes. Sites live on a
/// cubic lattice of spacing lambda/2; each plane sees the composed Gaussian
/// spectrum at its own detuning.
pub fn mott_plane_yield(
    cloud_diameter: f64,
    sigma_w: f64,
    loops: u32,
    current: f64,
    cfg: &ApparatusConfig,
) -> Result<MottPlaneYield> {
    if cloud_diameter < 0.0 || !(sigma_w > 0.0) {
        return Err(Error::InvalidConfig("need diameter >= 0 and sigma_w > 0".into()));
    }
    if loops < 1 {
        return Err(Error::InvalidConfig("loop count must be at least 1".into()));
    }
    let site = cfg.site_spacing();
    let split = cfg.site_splitting(current);
    if split == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let radius = cloud_diameter / 2.0;
    let k_max = (radius / site).floor() as i64;
    let mut plane_retained = Vec::new();
    let mut total = 0.0;
    let mut neighbors = 0.0;
    for k in -k_max..=k_max {
        let z = k as f64 * site;
        let r2 = radius * radius - z * z;
        if r2 < 0.0 {
            continue;
        }
        let occupied = lattice_disk_count(r2.sqrt() / site) as f64;
        let transfer = pulse::gaussian_spectrum(k as f64 * split, sigma_w, 1.0)
            .powi(loops as i32);
        let retained = occupied * transfer;
        plane_retained.push((k, retained));
        total += retained;
        if k != 0 {
            neighbors += retained;
        }
    }
    let atoms_in_plane =
        plane_retained.iter().find(|(k, _)| *k == 0).map(|&(_, n)| n).unwrap_or(0.0);
    Ok(MottPlaneYield {
        atoms_in_plane,
        neighbor_fraction: if total > 0.0 { neighbors / total } else { 0.0 },
        plane_retained,
    })
}

/// Number of integer lattice points with `i^2 + j^2 <= r^2` (r in sites).
fn lattice_disk_count(r: f64) -> u64 {
    let i_max = r.floor() as i64;
    let mut count = 0u64;
    for i in -i_max..=i_max {
        let rem = r * r - (i * i) as f64;
        if rem >= 0.0 {
            count += 2 * rem.sqrt().floor() as u64 + 1;
        }
    }
    count
}
