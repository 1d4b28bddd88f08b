//! Seeded stochastic simulation of the addressing experiment: Bernoulli
//! lattice loading, thermal displacement sampling, pulse-train application
//! under the gradient, probabilistic push-out, inner-loop repetition, and
//! axial lattice drift across shots.
//!
//! Every shot derives its own counter-based RNG stream from the master seed,
//! so results are bit-identical for a fixed seed regardless of how many
//! workers execute the ensemble.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::config::{ApparatusConfig, Position};
use crate::error::{Error, Result};
use crate::physics;
use crate::planner::SequencePlan;

const TAU: f64 = std::f64::consts::TAU;

/// Internal state of a trapped atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomState {
    /// |F=4, mF=4>: removed by the push-out.
    Zero,
    /// |F=3, mF=3>: kept by the push-out.
    One,
    /// Pushed out of the trap; excluded from imaging.
    Lost,
}

/// One atom in the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomRecord {
    /// Lattice site index relative to the reference site.
    pub site: i64,
    /// Axial displacement from the site center (m).
    pub axial: f64,
    /// Transverse displacement components (m).
    pub radial: [f64; 2],
    pub state: AtomState,
}

/// How thermal displacements evolve between inner-loop iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThermalMode {
    /// Redraw displacements every loop iteration (radial motion is fast
    /// compared to the loop period).
    #[default]
    Resampled,
    /// Keep the displacements drawn at loading time.
    Frozen,
    /// No displacements at all (statistics validation mode).
    Disabled,
}

/// Per-run simulation settings.
#[derive(Debug, Clone)]
pub struct ShotConfig {
    /// Number of lattice sites, centered on the reference site.
    pub lattice_extent: usize,
    /// Probability that a site holds one atom after loading.
    pub p_a: f64,
    /// Axial lattice drift rate (m/s).
    pub drift_rate: f64,
    /// Wall-clock interval between successive shots (s).
    pub shot_interval: f64,
    /// Radial offset of the lattice axis from the coil axis (m).
    pub rho0: f64,
    /// Axial offset of the reference site from the quadrupole zero (m).
    /// Has no observable effect within the second-order field model (the
    /// axial dependence is linear) but is kept as an explicit parameter.
    pub z0: f64,
    pub seed: u64,
    pub thermal_mode: ThermalMode,
    pub plan: SequencePlan,
}

impl ShotConfig {
    pub fn new(plan: SequencePlan, seed: u64) -> Self {
        Self {
            lattice_extent: 200,
            p_a: 0.5,
            drift_rate: 10e-9,
            shot_interval: 10.0,
            rho0: 0.0,
            z0: 0.0,
            seed,
            thermal_mode: ThermalMode::default(),
            plan,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lattice_extent < 1 {
            return Err(Error::InvalidConfig("lattice extent must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_a) {
            return Err(Error::InvalidConfig(format!("p_a must be in [0, 1], got {}", self.p_a)));
        }
        if self.shot_interval < 0.0 {
            return Err(Error::InvalidConfig("shot interval must be >= 0".into()));
        }
        Ok(())
    }

    /// Site indices covered by the lattice, centered on the reference site.
    pub fn sites(&self) -> impl Iterator<Item = i64> {
        let half = (self.lattice_extent / 2) as i64;
        (0..self.lattice_extent as i64).map(move |i| i - half)
    }
}

/// One surviving-atom record set.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotOutcome {
    pub shot_index: u64,
    /// Axial drift offset applied to this shot (m), already reduced
    /// modulo lambda/2 into (-lambda/4, lambda/4].
    pub drift_offset: f64,
    /// Atoms that survived the sequence (state is never `Lost`).
    pub survivors: Vec<AtomRecord>,
}

/// All shots of an ensemble, in shot order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub shots: Vec<ShotOutcome>,
}

impl EnsembleResult {
    /// Survivor counts per site.
    pub fn survivors_per_site(&self) -> std::collections::BTreeMap<i64, u64> {
        let mut map = std::collections::BTreeMap::new();
        for shot in &self.shots {
            for a in &shot.survivors {
                *map.entry(a.site).or_insert(0) += 1;
            }
        }
        map
    }

    pub fn total_survivors(&self) -> u64 {
        self.shots.iter().map(|s| s.survivors.len() as u64).sum()
    }
}

/// Standard normal deviate via the Box-Muller transform.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Draw thermal displacements: `(axial, [radial_x, radial_y])` in meters.
/// Each axis is a zero-mean Gaussian with
/// `sigma_i = sqrt(hbar (2 nbar_i + 1) / (2 m omega_i))`.
pub fn sample_thermal_displacement<R: Rng>(
    cfg: &ApparatusConfig,
    rng: &mut R,
) -> (f64, [f64; 2]) {
    let (sig_ax, sig_rad) = cfg.thermal_sigmas();
    (
        sig_ax * standard_normal(rng),
        [sig_rad * standard_normal(rng), sig_rad * standard_normal(rng)],
    )
}

/// Populate the lattice: each site independently holds one atom with
/// probability `p_a`, initialized to |0> with thermal displacements.
pub fn load_lattice<R: Rng>(
    extent: usize,
    p_a: f64,
    cfg: &ApparatusConfig,
    mode: ThermalMode,
    rng: &mut R,
) -> Vec<AtomRecord> {
    let half = (extent / 2) as i64;
    let mut atoms = Vec::new();
    for i in 0..extent as i64 {
        if rng.gen::<f64>() < p_a {
            let (axial, radial) = match mode {
                ThermalMode::Disabled => (0.0, [0.0, 0.0]),
                _ => sample_thermal_displacement(cfg, rng),
            };
            atoms.push(AtomRecord { site: i - half, axial, radial, state: AtomState::Zero });
        }
    }
    atoms
}

/// Reduce `x` modulo the site spacing into `(-spacing/2, spacing/2]`.
pub fn reduce_modulo_site(x: f64, site_spacing: f64) -> f64 {
    x - site_spacing * (x / site_spacing - 0.5).ceil()
}

/// Run the `M`-fold inner loop (initialization, pulse train, push-out) on
/// `atoms` at a fixed lattice drift offset.
pub fn apply_inner_loop<R: Rng>(
    atoms: &mut [AtomRecord],
    plan: &SequencePlan,
    drift_offset: f64,
    rho0: f64,
    z0: f64,
    cfg: &ApparatusConfig,
    mode: ThermalMode,
    rng: &mut R,
) {
    let site = cfg.site_spacing();
    let wp = cfg.omega_prime(plan.current);
    let r0 = Position::axial_radial(z0, rho0);
    // Pulse target positions from their frequency offsets.
    let targets: Vec<f64> =
        plan.pulses.iter().map(|p| p.descriptor.center_offset / wp).collect();

    for _ in 0..plan.loop_count {
        for atom in atoms.iter_mut() {
            if atom.state == AtomState::Lost {
                continue;
            }
            // Optical pumping back to |0>.
            atom.state = AtomState::Zero;
            if mode == ThermalMode::Resampled {
                let (axial, radial) = sample_thermal_displacement(cfg, rng);
                atom.axial = axial;
                atom.radial = radial;
            }
            // Pulse train: each pulse acts on atoms still in |0>.
            for (pulse, &target) in plan.pulses.iter().zip(&targets) {
                if atom.state != AtomState::Zero {
                    break;
                }
                let z_prime = atom.site as f64 * site + atom.axial + drift_offset - target;
                let delta = physics::detuning_unchecked(
                    Position::new(atom.radial[0], atom.radial[1], z_prime),
                    r0,
                    plan.current,
                    cfg,
                );
                let p = pulse.response.transfer(delta);
                if rng.gen::<f64>() < p {
                    atom.state = AtomState::One;
                }
            }
            // State-selective push-out.
            let survival = match atom.state {
                AtomState::One => plan.pushout_survival_f3,
                AtomState::Zero => plan.pushout_survival_f4,
                AtomState::Lost => unreachable!(),
            };
            if rng.gen::<f64>() >= survival {
                atom.state = AtomState::Lost;
            }
        }
    }
}

/// Run one shot with its counter-derived RNG stream.
pub fn run_shot(shot_index: u64, sc: &ShotConfig, cfg: &ApparatusConfig) -> ShotOutcome {
    let mut rng = ChaCha12Rng::seed_from_u64(sc.seed);
    rng.set_stream(shot_index);
    let drift_offset = reduce_modulo_site(
        sc.drift_rate * shot_index as f64 * sc.shot_interval,
        cfg.site_spacing(),
    );
    let mut atoms = load_lattice(sc.lattice_extent, sc.p_a, cfg, sc.thermal_mode, &mut rng);
    apply_inner_loop(
        &mut atoms,
        &sc.plan,
        drift_offset,
        sc.rho0,
        sc.z0,
        cfg,
        sc.thermal_mode,
        &mut rng,
    );
    atoms.retain(|a| a.state != AtomState::Lost);
    ShotOutcome { shot_index, drift_offset, survivors: atoms }
}

/// Run `n_shots` shots. `workers = None` uses the global thread pool; the
/// result is independent of the worker count.
pub fn run_ensemble(
    sc: &ShotConfig,
    cfg: &ApparatusConfig,
    n_shots: u64,
    workers: Option<usize>,
) -> Result<EnsembleResult> {
    sc.validate()?;
    sc.plan.validate(cfg)?;
    let run = || -> Vec<ShotOutcome> {
        (0..n_shots)
            .into_par_iter()
            .map(|k| run_shot(k, sc, cfg))
            .collect()
    };
    let shots = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    Ok(EnsembleResult { shots })
}
