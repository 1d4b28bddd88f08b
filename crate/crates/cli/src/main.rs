//! `mrlat` — batch front-end binding configuration files to the planning,
//! simulation and analysis pipelines with reproducible seeded runs.

mod commands;
mod config_file;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "mrlat",
    version,
    about = "Planning and simulation toolkit for single-site microwave addressing \
             of atoms in an optical lattice under a magnetic field gradient",
    after_help = "Numeric flags take plain SI values (seconds, meters, hertz, ampere).\n\
                  Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure."
)]
pub(crate) struct Cli {
    /// Configuration file; omitted fields fall back to the reference apparatus.
    #[arg(long, global = true)]
    pub(crate) config: Option<PathBuf>,
    /// Master seed; all randomness in a run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub(crate) seed: u64,
    /// Output directory (created if needed); a run manifest is written there.
    #[arg(long, global = true)]
    pub(crate) out: Option<PathBuf>,
    #[command(subcommand)]
    pub(crate) command: Command,
}

#[derive(Subcommand)]
pub(crate) enum Command {
    /// Report the gradient calibration and unit conversions.
    Calibrate {
        /// Coil current (A).
        #[arg(long, default_value_t = 45.0)]
        current: f64,
        /// Use exact Cs ground-state g-factors instead of the rounded ratio.
        #[arg(long)]
        exact_gamma: bool,
    },
    /// Compute pulse spectra (frequency domain, optionally position space).
    Spectrum {
        /// Gaussian pulse 1/sqrt(e) half-width (s).
        #[arg(long, conflicts_with = "rect")]
        sigma_t: Option<f64>,
        /// Rectangular pulse duration (s).
        #[arg(long)]
        rect: Option<f64>,
        /// Gaussian envelope truncation (units of sigma_t).
        #[arg(long, default_value_t = 2.0)]
        truncation: f64,
        /// Transverse coherence time (s); 0 disables decay.
        #[arg(long)]
        t2: Option<f64>,
        /// Inner-loop repetitions applied to the spectrum.
        #[arg(long, default_value_t = 1)]
        loops: u32,
        /// Also write the position-space spectrum for this coil current (A).
        #[arg(long)]
        position_space: Option<f64>,
    },
    /// Translate a site pattern into a pulse-train plan file.
    Plan {
        /// Comma-separated target site indices, strictly increasing.
        #[arg(long)]
        pattern: String,
        /// Gaussian pulse 1/sqrt(e) half-width (s).
        #[arg(long, default_value_t = 20e-6)]
        sigma_t: f64,
        /// Gaussian envelope truncation (units of sigma_t).
        #[arg(long, default_value_t = 2.0)]
        truncation: f64,
        /// Inner-loop repetitions M.
        #[arg(long, default_value_t = 2)]
        loops: u32,
        /// Coil current (A).
        #[arg(long, default_value_t = 45.0)]
        current: f64,
    },
    /// Run the seeded Monte Carlo over a plan file.
    Simulate {
        /// Plan file produced by `plan`.
        #[arg(long)]
        plan: PathBuf,
        /// Number of shots.
        #[arg(long)]
        shots: u64,
        /// Worker threads (default: all cores). Results are identical for
        /// any worker count.
        #[arg(long)]
        workers: Option<usize>,
        /// Radial offset of the lattice axis (m).
        #[arg(long)]
        rho0: Option<f64>,
        /// Axial lattice drift rate (m/s).
        #[arg(long)]
        drift: Option<f64>,
        /// Interval between shots (s).
        #[arg(long)]
        interval: Option<f64>,
        /// Filling factor.
        #[arg(long)]
        pa: Option<f64>,
        /// Lattice extent (sites).
        #[arg(long)]
        extent: Option<usize>,
        /// Render one PGM image per shot.
        #[arg(long)]
        images: bool,
    },
    /// Histograms, fits, deconvolution, effective spectra, offset calibration.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Estimate the plane-selection yield from a unity-filled spherical cloud.
    MottPlane {
        /// Cloud diameter (m).
        #[arg(long, default_value_t = 25e-6)]
        diameter: f64,
        /// Single-pulse spectral half-width (Hz).
        #[arg(long, default_value_t = 6.4e3)]
        sigma_omega: f64,
        /// Inner-loop repetitions M.
        #[arg(long, default_value_t = 2)]
        loops: u32,
        /// Coil current (A).
        #[arg(long, default_value_t = 45.0)]
        current: f64,
    },
}

#[derive(Subcommand)]
pub(crate) enum AnalyzeCommand {
    /// Pair-distance histogram and selectivity from a simulate run.
    Histogram(HistogramArgs),
    /// Remove the one-site drift broadening from a measured width.
    Deconvolve {
        /// Measured 1/sqrt(e) half-width (sites).
        #[arg(long)]
        width: f64,
    },
    /// Thermally averaged transfer versus axial displacement under a radial offset.
    EffectiveSpectrum {
        /// Radial offset (m).
        #[arg(long)]
        rho0: f64,
        /// Single-pulse spectral half-width (Hz).
        #[arg(long, default_value_t = 6.4e3)]
        sigma_omega: f64,
        /// Single-pulse peak transfer.
        #[arg(long, default_value_t = 1.0)]
        p_max: f64,
        /// Inner-loop repetitions M (the composed spectrum is averaged).
        #[arg(long, default_value_t = 1)]
        loops: u32,
        /// Coil current (A).
        #[arg(long, default_value_t = 45.0)]
        current: f64,
    },
    /// Addressed-region masks |delta| <= k sigma_omega on a (z, rho) grid.
    Region {
        /// Radial offset (m).
        #[arg(long)]
        rho0: f64,
        /// Single-pulse spectral half-width (Hz).
        #[arg(long, default_value_t = 6.4e3)]
        sigma_omega: f64,
        /// Coil current (A).
        #[arg(long, default_value_t = 45.0)]
        current: f64,
    },
    /// Parabola fit of an offset-field calibration scan.
    OffsetCal {
        /// CSV with header and `offset_field_gauss,resonance_position_m` rows.
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args)]
pub(crate) struct HistogramArgs {
    /// Directory holding shots.csv and drift.csv from `simulate`.
    #[arg(long)]
    pub(crate) run: PathBuf,
    /// Comma-separated pair-center sites.
    #[arg(long)]
    pub(crate) pairs: String,
    /// Predefined intra-pair separation (sites).
    #[arg(long, default_value_t = 2.0)]
    pub(crate) separation: f64,
    /// Pairing window half-width around each center (sites).
    #[arg(long, default_value_t = 4.0)]
    pub(crate) window: f64,
    /// Histogram bin width (sites).
    #[arg(long, default_value_t = 0.25)]
    pub(crate) bin: f64,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 for usage/configuration problems, 2 for numerical failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mrlat::Error>() {
        Some(
            mrlat::Error::IntegrationFailure(_)
            | mrlat::Error::FitFailure(_)
            | mrlat::Error::DegenerateFit(_)
            | mrlat::Error::QuadratureFailure(_)
            | mrlat::Error::Infeasible(_),
        ) => 2,
        _ => 1,
    }
}

