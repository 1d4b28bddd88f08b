//! Command implementations.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use mrlat::analysis;
use mrlat::config::GammaMode;
use mrlat::imaging;
use mrlat::io as mio;
use mrlat::ode::OdeOptions;
use mrlat::physics;
use mrlat::planner::{self, SequencePlan, TargetPattern};
use mrlat::pulse::{self, PulseDescriptor};
use mrlat::sim::{self, AtomState, ShotConfig};

use crate::config_file::{self, Settings};
use crate::manifest;
use crate::{AnalyzeCommand, Cli, Command, HistogramArgs};

const TAU: f64 = std::f64::consts::TAU;

pub fn run(cli: Cli) -> Result<()> {
    let settings = config_file::load(cli.config.as_deref())?;
    let out = match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating output directory {}", dir.display()))?;
            Some(dir.clone())
        }
        None => None,
    };
    let command_name = match &cli.command {
        Command::Calibrate { .. } => "calibrate",
        Command::Spectrum { .. } => "spectrum",
        Command::Plan { .. } => "plan",
        Command::Simulate { .. } => "simulate",
        Command::Analyze(_) => "analyze",
        Command::MottPlane { .. } => "mott-plane",
    };
    if let Some(dir) = &out {
        manifest::write(
            dir,
            command_name,
            cli.seed,
            cli.config.as_deref(),
            &config_file::serialize(&settings),
        )?;
    }
    match cli.command {
        Command::Calibrate { current, exact_gamma } => {
            calibrate(&settings, current, exact_gamma, out.as_deref())
        }
        Command::Spectrum { sigma_t, rect, truncation, t2, loops, position_space } => {
            spectrum(&settings, sigma_t, rect, truncation, t2, loops, position_space, out.as_deref())
        }
        Command::Plan { pattern, sigma_t, truncation, loops, current } => {
            plan(&settings, &pattern, sigma_t, truncation, loops, current, cli.seed, out.as_deref())
        }
        Command::Simulate { plan, shots, workers, rho0, drift, interval, pa, extent, images } => {
            simulate(
                &settings, &plan, shots, workers, rho0, drift, interval, pa, extent, images,
                cli.seed, out.as_deref(),
            )
        }
        Command::Analyze(cmd) => analyze(&settings, cmd, cli.seed, out.as_deref()),
        Command::MottPlane { diameter, sigma_omega, loops, current } => {
            mott_plane(&settings, diameter, sigma_omega, loops, current, out.as_deref())
        }
    }
}

fn emit(out: Option<&Path>, file: &str, report: &str) -> Result<()> {
    print!("{report}");
    if let Some(dir) = out {
        fs::write(dir.join(file), report)?;
    }
    Ok(())
}

fn calibrate(settings: &Settings, current: f64, exact_gamma: bool, out: Option<&Path>) -> Result<()> {
    let mut cfg = settings.apparatus.clone();
    if exact_gamma {
        cfg.gamma_mode = GammaMode::ExactGFactors;
    }
    let cal = physics::calibrate_gradient(&cfg, current);
    let report = format!(
        "gradient calibration at {current} A ({} gyromagnetic ratio)\n\
         omega'/(2 pi I)      = {:.0} Hz/(site A)  [{:.3}]\n\
         omega'/(2 pi I)      = {:.0} Hz/(um A)\n\
         per-site splitting   = {:.3} kHz\n\
         B'/I                 = {:.1} uG/(um A)\n\
         axial gradient       = {:.1} G/cm\n",
        match cfg.gamma_mode {
            GammaMode::Rounded => "rounded",
            GammaMode::ExactGFactors => "exact",
        },
        cal.hz_per_site_amp.round(),
        cal.hz_per_site_amp,
        cal.hz_per_um_amp,
        cal.site_splitting_hz / 1e3,
        cal.b_prime_ug_per_um_amp,
        cal.gradient_g_per_cm,
    );
    emit(out, "calibration.txt", &report)
}

#[allow(clippy::too_many_arguments)]
fn spectrum(
    settings: &Settings,
    sigma_t: Option<f64>,
    rect: Option<f64>,
    truncation: f64,
    t2: Option<f64>,
    loops: u32,
    position_space: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = &settings.apparatus;
    let pulse_desc = match (sigma_t, rect) {
        (Some(st), None) => PulseDescriptor::pi_gaussian(st, truncation, 0.0)?,
        (None, Some(d)) => PulseDescriptor::pi_rectangular(d, 0.0)?,
        (None, None) => PulseDescriptor::pi_gaussian(20e-6, truncation, 0.0)?,
        (Some(_), Some(_)) => bail!("choose either --sigma-t or --rect"),
    };
    let t2 = match t2 {
        Some(v) if v <= 0.0 => f64::INFINITY,
        Some(v) => v,
        None => cfg.t2,
    };
    let single = pulse::sample_bloch_spectrum(&pulse_desc, t2, &OdeOptions::default())?;
    let composed = pulse::compose_loops(&single, loops);
    let mut report = format!(
        "pulse spectrum ({:?}, t2 = {t2:.3e} s)\n\
         single pulse: P_max = {:.4}, sigma_omega/2pi = {:.1} Hz\n\
         M = {loops}:      P_max = {:.4}, sigma_omega/2pi = {:.1} Hz\n",
        pulse_desc.shape,
        single.p_max,
        single.sigma_w / TAU,
        composed.p_max,
        composed.sigma_w / TAU,
    );
    if let Some(dir) = out {
        let mut f = fs::File::create(dir.join("spectrum.csv"))?;
        mio::write_spectrum_csv(&mut f, &composed)?;
    }
    if let Some(current) = position_space {
        let split = cfg.site_splitting(current);
        if split == 0.0 {
            bail!(mrlat::Error::ZeroGradient);
        }
        report.push_str(&format!(
            "position space at {current} A: sigma_z(M) = {:.4} sites\n",
            composed.sigma_w / split
        ));
        if let Some(dir) = out {
            let mut f = fs::File::create(dir.join("position_space.csv"))?;
            writeln!(f, "z_sites,transfer")?;
            for &(d, p) in &composed.samples {
                writeln!(f, "{:.15e},{:.15e}", d / split, p)?;
            }
        }
    }
    emit(out, "spectrum.txt", &report)
}

#[allow(clippy::too_many_arguments)]
fn plan(
    settings: &Settings,
    pattern: &str,
    sigma_t: f64,
    truncation: f64,
    loops: u32,
    current: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let sites = parse_site_list(pattern)?;
    let target = TargetPattern::new(sites)?;
    let cfg = &settings.apparatus;
    let mut plan = SequencePlan::for_pattern(&target, sigma_t, truncation, loops, current, cfg)?;
    plan.seed = Some(seed);
    let sel = planner::plan_selectivity(
        &planner::PulseSelectivity::FromSigmaT { sigma_t, truncation },
        loops,
        current,
        cfg,
    )?;
    let mut report = format!(
        "sequence plan: {} pulses, M = {loops}, I = {current} A\n\
         single pulse: P_max = {:.4}, sigma_omega/2pi = {:.1} Hz\n\
         M loops:      P_max(M) = {:.4}, sigma_z(M) = {:.4} sites\n\
         pulse frequency offsets (Hz):\n",
        plan.pulses.len(),
        sel.p_max_single,
        sel.sigma_w_single / TAU,
        sel.p_max_m,
        sel.sigma_z_sites,
    );
    for (site, p) in target.sites().iter().zip(&plan.pulses) {
        report.push_str(&format!("  site {site:5}: {:.3}\n", p.offset_hz));
    }
    if let Some(dir) = out {
        fs::write(dir.join("pattern.plan"), mio::serialize_plan(&plan))?;
        report.push_str(&format!("plan written to {}\n", dir.join("pattern.plan").display()));
    }
    emit(out, "plan_report.txt", &report)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    settings: &Settings,
    plan_path: &Path,
    shots: u64,
    workers: Option<usize>,
    rho0: Option<f64>,
    drift: Option<f64>,
    interval: Option<f64>,
    pa: Option<f64>,
    extent: Option<usize>,
    images: bool,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let plan_text = fs::read_to_string(plan_path)
        .with_context(|| format!("reading plan file {}", plan_path.display()))?;
    let plan = mio::parse_plan(&plan_text)?;
    plan.validate(&settings.apparatus)?;

    let mut sc = ShotConfig::new(plan, seed);
    sc.lattice_extent = extent.unwrap_or(settings.sim.lattice_extent);
    sc.p_a = pa.unwrap_or(settings.sim.p_a);
    sc.drift_rate = drift.unwrap_or(settings.sim.drift_rate);
    sc.shot_interval = interval.unwrap_or(settings.sim.shot_interval);
    sc.rho0 = rho0.unwrap_or(settings.apparatus.radial_offset);
    sc.z0 = settings.apparatus.axial_offset;
    sc.thermal_mode = settings.sim.thermal;

    let result = sim::run_ensemble(&sc, &settings.apparatus, shots, workers)?;
    let survivors = result.total_survivors();
    let report = format!(
        "simulate: {shots} shots, seed {seed}, extent {} sites, pa {}, rho0 {:.3e} m, \
         drift {:.3e} m/s, interval {} s\n\
         survivors: {survivors} total ({:.3} per shot)\n",
        sc.lattice_extent,
        sc.p_a,
        sc.rho0,
        sc.drift_rate,
        sc.shot_interval,
        survivors as f64 / shots as f64,
    );
    if let Some(dir) = out {
        let mut f = fs::File::create(dir.join("shots.csv"))?;
        mio::write_shots_csv(&mut f, &result)?;
        let mut f = fs::File::create(dir.join("summary.csv"))?;
        mio::write_summary_csv(&mut f, &result)?;
        let mut f = fs::File::create(dir.join("drift.csv"))?;
        mio::write_drift_csv(&mut f, &result)?;
        if images {
            let img_dir = dir.join("images");
            fs::create_dir_all(&img_dir)?;
            let site = settings.apparatus.site_spacing();
            let window = window_for_extent(sc.lattice_extent, site);
            let mut rng = imaging_rng(seed);
            for shot in &result.shots {
                let positions = imaging::atom_positions(&shot.survivors, shot.drift_offset, site);
                let img = imaging::render_image(&positions, window, &settings.imaging, &mut rng);
                let mut f =
                    fs::File::create(img_dir.join(format!("shot_{:05}.pgm", shot.shot_index)))?;
                // Fixed scale so frames are compatible and byte-reproducible.
                mio::write_pgm16(&mut f, &img, Some(settings.imaging.photons_per_atom / 4.0))?;
                let mut f = fs::File::create(
                    img_dir.join(format!("shot_{:05}_profile.csv", shot.shot_index)),
                )?;
                mio::write_profile_csv(&mut f, &img)?;
            }
        }
    }
    emit(out, "simulate.txt", &report)
}

fn analyze(settings: &Settings, cmd: AnalyzeCommand, seed: u64, out: Option<&Path>) -> Result<()> {
    match cmd {
        AnalyzeCommand::Histogram(args) => histogram(settings, &args, seed, out),
        AnalyzeCommand::Deconvolve { width } => {
            let drift_free = analysis::drift_deconvolve(width)?;
            let forward = analysis::drift_convolve(drift_free.max(1e-6))?;
            let report = format!(
                "drift deconvolution\nmeasured width   = {width:.4} sites\n\
                 drift-free width = {drift_free:.4} sites\n\
                 forward check    = {:.4} sites (refit {:.4})\n",
                forward.width, forward.refit_width,
            );
            emit(out, "deconvolve.txt", &report)
        }
        AnalyzeCommand::EffectiveSpectrum { rho0, sigma_omega, p_max, loops, current } => {
            let m = loops.max(1);
            let sigma_m = TAU * sigma_omega / (m as f64).sqrt();
            let p_m = p_max.powi(m as i32);
            let eff = analysis::effective_spectrum(
                rho0,
                sigma_m,
                p_m,
                current,
                &settings.apparatus,
                &Default::default(),
            )?;
            let report = format!(
                "effective spectrum: rho0 = {:.3e} m, sigma_omega/2pi = {sigma_omega} Hz, \
                 M = {m}, I = {current} A\n\
                 peak transfer    = {:.4} (normalized {:.4})\n\
                 effective width  = {:.4} sites (center {:.4})\n",
                rho0,
                eff.pbar_max,
                eff.pbar_ratio(),
                eff.sigma_z_sites,
                eff.center_sites,
            );
            if let Some(dir) = out {
                let mut f = fs::File::create(dir.join("effective_spectrum.csv"))?;
                mio::write_effective_spectrum_csv(&mut f, &eff)?;
            }
            emit(out, "effective_spectrum.txt", &report)
        }
        AnalyzeCommand::Region { rho0, sigma_omega, current } => {
            let grid = analysis::RegionGrid::default();
            let mut report = format!(
                "addressed regions: rho0 = {rho0:.3e} m, sigma_omega/2pi = {sigma_omega} Hz, \
                 I = {current} A\n"
            );
            for k in [1.0, 2.0] {
                let region = analysis::addressed_region(
                    rho0,
                    TAU * sigma_omega,
                    current,
                    &settings.apparatus,
                    k,
                    &grid,
                );
                let inside = region.mask.iter().filter(|&&m| m).count();
                report.push_str(&format!(
                    "k = {k}: {inside} of {} grid cells inside\n",
                    region.mask.len()
                ));
                if let Some(dir) = out {
                    let mut f = fs::File::create(dir.join(format!("region_k{}.csv", k as u32)))?;
                    mio::write_region_csv(&mut f, &region)?;
                }
            }
            emit(out, "region.txt", &report)
        }
        AnalyzeCommand::OffsetCal { data } => {
            let text = fs::read_to_string(&data)
                .with_context(|| format!("reading scan data {}", data.display()))?;
            let mut points = Vec::new();
            for (i, line) in text.lines().enumerate().skip(1) {
                if line.trim().is_empty() {
                    continue;
                }
                let mut cols = line.split(',');
                let h: f64 = cols
                    .next()
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| mrlat::Error::Parse {
                        line: i + 1,
                        msg: "expected `offset_field_gauss,resonance_position_m`".into(),
                    })?;
                let z: f64 = cols
                    .next()
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| mrlat::Error::Parse {
                        line: i + 1,
                        msg: "expected `offset_field_gauss,resonance_position_m`".into(),
                    })?;
                points.push((h, z));
            }
            let fit = analysis::offset_calibration_fit(&points)?;
            let b_prime = settings.apparatus.b_prime(45.0) / 45.0;
            let rho_estimate = 2.0 * fit.vertex / b_prime;
            let report = format!(
                "offset calibration fit ({} points)\n\
                 vertex (compensating field) = {:.6} +- {:.6} G\n\
                 curvature = {:.6e} m/G^2 (significance {:.1})\n\
                 implied offset along scan   = {:.3e} m (at B'/I of 1 A: {:.3e})\n",
                points.len(),
                fit.vertex,
                fit.vertex_uncertainty,
                fit.curvature,
                fit.curvature_significance,
                2.0 * fit.vertex / settings.apparatus.b_prime(45.0),
                rho_estimate,
            );
            emit(out, "offset_calibration.txt", &report)
        }
    }
}

fn histogram(settings: &Settings, args: &HistogramArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let shots = read_shots_csv(&args.run.join("shots.csv"))?;
    let drifts = read_drift_csv(&args.run.join("drift.csv"))?;
    let centers = parse_f64_list(&args.pairs)?;
    let cfg = &settings.apparatus;
    let imaging_cfg = &settings.imaging;
    let site = cfg.site_spacing();
    let n_shots = drifts.len();
    let single_amp =
        imaging_cfg.photons_per_atom * imaging_cfg.pixel_size / (imaging_cfg.psf_sigma() * TAU.sqrt());

    // Image window covering every pair region.
    let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - 8.0;
    let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 8.0;
    let mut rng = imaging_rng(seed);
    let mut distances = Vec::new();
    let mut skipped = 0usize;
    for (k, &drift) in drifts.iter().enumerate() {
        let empty = Vec::new();
        let records = shots.get(&(k as u64)).unwrap_or(&empty);
        let positions = imaging::atom_positions(records, drift, site);
        let img = imaging::render_image(&positions, (lo * site, hi * site), imaging_cfg, &mut rng);
        let drift_sites = drift / site;
        for &pc in &centers {
            let center = pc + drift_sites;
            let crop = img.crop((center - 5.0) * site, (center + 5.0) * site);
            let estimates =
                match imaging::estimate_positions(&crop, imaging_cfg.psf_sigma(), None, 4) {
                    Ok(e) => e,
                    Err(_) => {
                        skipped += 1;
                        continue;
                    }
                };
            let est_sites: Vec<f64> = estimates
                .iter()
                .filter(|e| e.amplitude > 0.5 * single_amp)
                .map(|e| e.position / site)
                .collect();
            let (d, s) =
                imaging::pair_distances(&est_sites, &[center], args.separation, args.window);
            distances.extend(d);
            skipped += s;
        }
    }

    let mut hist = analysis::Histogram::from_values(&distances, args.bin, 0.0)?;
    hist.skipped = skipped;
    let correct =
        distances.iter().filter(|d| (*d - args.separation).abs() <= 0.5).count();
    let fit_hist = hist.padded(3);
    let mut report = format!(
        "pair-distance histogram: {} distances from {n_shots} shots, {skipped} pair slots skipped\n\
         correctly prepared pairs (|d - {}| <= 0.5 sites): {correct}\n",
        distances.len(),
        args.separation,
    );
    match analysis::selectivity_from_histogram(&fit_hist) {
        Ok(sel) => {
            report.push_str(&format!(
                "Gaussian fit: center = {:.3} sites, sigma_dist = {:.3} sites\n\
                 single-atom selectivity sigma_meas = sigma_dist/sqrt(2) = {:.3} sites\n",
                sel.center, sel.sigma_dist, sel.sigma_meas,
            ));
            match analysis::drift_deconvolve(sel.sigma_meas) {
                Ok(df) => report
                    .push_str(&format!("drift-free selectivity = {df:.3} sites\n")),
                Err(e) => report.push_str(&format!("drift-free selectivity: {e}\n")),
            }
        }
        Err(e) => report.push_str(&format!("Gaussian fit failed: {e}\n")),
    }
    if let Some(dir) = out {
        let mut f = fs::File::create(dir.join("histogram.csv"))?;
        mio::write_histogram_csv(&mut f, &hist)?;
    }
    emit(out, "histogram.txt", &report)
}

fn mott_plane(
    settings: &Settings,
    diameter: f64,
    sigma_omega: f64,
    loops: u32,
    current: f64,
    out: Option<&Path>,
) -> Result<()> {
    let yield_ = planner::mott_plane_yield(
        diameter,
        TAU * sigma_omega,
        loops,
        current,
        &settings.apparatus,
    )?;
    let mut report = format!(
        "plane selection from a unity-filled spherical cloud\n\
         diameter = {:.3e} m, sigma_omega/2pi = {sigma_omega} Hz, M = {loops}, I = {current} A\n\
         atoms in addressed plane = {:.0}\n\
         neighbor-plane fraction  = {:.2}%\n",
        diameter,
        yield_.atoms_in_plane,
        100.0 * yield_.neighbor_fraction,
    );
    report.push_str("plane retention:\n");
    for (k, n) in &yield_.plane_retained {
        if *n > 0.005 {
            report.push_str(&format!("  plane {k:4}: {n:10.2}\n"));
        }
    }
    emit(out, "mott_plane.txt", &report)
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn parse_site_list(text: &str) -> Result<Vec<i64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .with_context(|| format!("invalid site index `{}`", t.trim()))
        })
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("invalid number `{}`", t.trim()))
        })
        .collect()
}

fn window_for_extent(extent: usize, site: f64) -> (f64, f64) {
    let half = extent as f64 / 2.0 + 6.0;
    (-half * site, half * site)
}

/// Imaging RNG stream, separated from the per-shot simulation streams.
fn imaging_rng(seed: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

fn read_shots_csv(path: &Path) -> Result<std::collections::BTreeMap<u64, Vec<sim::AtomRecord>>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading shots file {}", path.display()))?;
    let mut shots: std::collections::BTreeMap<u64, Vec<sim::AtomRecord>> =
        std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            bail!(mrlat::Error::Parse {
                line: i + 1,
                msg: format!("expected 5 columns in shots CSV, got {}", cols.len()),
            });
        }
        let shot: u64 = cols[0].trim().parse().context("shot index")?;
        let site: i64 = cols[1].trim().parse().context("site")?;
        let axial_nm: f64 = cols[2].trim().parse().context("axial_nm")?;
        let radial_nm: f64 = cols[3].trim().parse().context("radial_nm")?;
        let state = match cols[4].trim() {
            "ZERO" => AtomState::Zero,
            "ONE" => AtomState::One,
            other => bail!(mrlat::Error::Parse {
                line: i + 1,
                msg: format!("unknown state `{other}`"),
            }),
        };
        shots.entry(shot).or_default().push(sim::AtomRecord {
            site,
            axial: axial_nm * 1e-9,
            // The CSV stores the radial magnitude; place it on one transverse
            // component for rendering (the binned analysis is insensitive).
            radial: [0.0, radial_nm * 1e-9],
            state,
        });
    }
    Ok(shots)
}

fn read_drift_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading drift file {}", path.display()))?;
    let mut drifts = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let _shot = cols.next();
        let nm: f64 = cols
            .next()
            .and_then(|c| c.trim().parse().ok())
            .context("drift CSV needs `shot_index,drift_nm` rows")?;
        drifts.push(nm * 1e-9);
    }
    Ok(drifts)
}
