//! `homsim`: simulate and analyze two-photon interference runs on a lossy
//! scattering beamsplitter.
//!
//! Subcommands:
//! - `simulate`: one `HTAG` time-tag file (plus JSON sidecar) per scan
//!   delay, deterministic in the seed
//! - `analyze`: count windowed coincidences in tag files, subtract
//!   accidentals, fit the dip, emit curve CSV + fit JSON
//! - `characterize`: splitter transmission lookup and propagation-length
//!   fit from measurement CSVs
//! - `theory`: analytic dip curve on the configured scan grid
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 assertion
//! failed (`--assert-quantum` on a classical-compatible result).

mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use homsim::analysis::{
    classical_visibility_oracle, fit_dip, quantum_threshold_test, CoincidenceCounter, DipPoint,
    FitReport, Measured, Verdict,
};
use homsim::event::{detection_model, per_delay_config, simulate_stream, SourceConfig};
use homsim::plasmonics::{
    bragg_lookup, fit_propagation_length, parse_propagation_csv, parse_transmission_csv,
    BraggSpec,
};
use homsim::tags;
use homsim::units::cps_to_cph;
use homsim::wavepacket::coincidence_probability;

use config::parse_duration;

#[derive(Parser)]
#[command(name = "homsim", version, about = "Two-photon interference on a lossy beamsplitter: simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct JobsArg {
    /// Worker threads for per-delay jobs (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate time-tag files for every delay of the configured scan.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for `tags_d{index}.htag` + sidecars.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        jobs: JobsArg,
    },
    /// Analyze tag files into a dip curve and fit report.
    Analyze {
        /// `HTAG` files (sidecars looked up next to them).
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Coincidence window, suffix-parsed (e.g. `2ns`).
        #[arg(long, default_value = "2ns", value_parser = parse_window)]
        window: f64,
        /// Exit 4 unless the fitted dip is certified quantum.
        #[arg(long)]
        assert_quantum: bool,
        /// Also report the classical-interference bound for this splitter
        /// from a Monte Carlo oracle.
        #[arg(long)]
        classical_oracle: bool,
        #[command(flatten)]
        jobs: JobsArg,
    },
    /// Splitter and waveguide characterization from measurement CSVs.
    Characterize {
        /// `wavelength_nm,transmission` table.
        #[arg(long)]
        bragg: Option<PathBuf>,
        /// Wavelength (nm) to interpolate the splitting ratio at.
        #[arg(long)]
        wavelength: Option<f64>,
        /// `length_um,intensity` decay samples.
        #[arg(long)]
        propagation: Option<PathBuf>,
        /// Optional output file for the JSON report (also printed).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic dip curve for a config, same CSV schema as `analyze`.
    Theory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_window(text: &str) -> Result<f64, String> {
    let value = parse_duration(text).map_err(|e| e.to_string())?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err("window must be positive".into())
    }
}

enum CliError {
    Config(String),
    Data(String),
    Assertion(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Assertion(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Assertion(m) => write!(f, "assertion failed: {m}"),
        }
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn data_err(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            config,
            out,
            seed,
            jobs,
        } => cmd_simulate(&config, &out, seed, jobs.jobs),
        Command::Analyze {
            files,
            out,
            window,
            assert_quantum,
            classical_oracle,
            jobs,
        } => cmd_analyze(&files, &out, window, assert_quantum, classical_oracle, jobs.jobs),
        Command::Characterize {
            bragg,
            wavelength,
            propagation,
            out,
        } => cmd_characterize(bragg.as_deref(), wavelength, propagation.as_deref(), out.as_deref()),
        Command::Theory { config, out } => cmd_theory(&config, &out),
    }
}

fn worker_count(requested: Option<usize>, tasks: usize) -> usize {
    requested
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, tasks.max(1))
}

/// Run `work` over the task indices on a small thread pool, collecting
/// results in task order and surfacing the first error by index.
fn run_jobs<R: Send>(
    tasks: usize,
    jobs: usize,
    work: impl Fn(usize) -> Result<R, CliError> + Sync,
) -> Result<Vec<R>, CliError> {
    let slots: Mutex<Vec<Option<Result<R, CliError>>>> =
        Mutex::new((0..tasks).map(|_| None).collect());
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::SeqCst);
                if index >= tasks {
                    break;
                }
                let outcome = work(index);
                slots.lock().unwrap()[index] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("all jobs complete"))
        .collect()
}

fn tag_file_name(index: usize) -> String {
    format!("tags_d{index}.htag")
}

fn cmd_simulate(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    let run_config = config::load(config_path).map_err(config_err)?;
    let mut source = run_config.source;
    if let Some(seed) = seed_override {
        source.seed = seed;
    }
    std::fs::create_dir_all(out_dir).map_err(data_err)?;

    let delays: Vec<f64> = run_config.scan.delays().to_vec();
    let workers = worker_count(jobs, delays.len());
    let written = run_jobs(delays.len(), workers, |index| {
        let cfg = per_delay_config(&source, delays[index], index as u64);
        let path = out_dir.join(tag_file_name(index));
        let stream = simulate_stream(&cfg).map_err(data_err)?;
        let count = tags::write_file(&path, stream).map_err(data_err)?;
        tags::write_sidecar(&path, &cfg).map_err(data_err)?;
        Ok((path, count))
    })?;

    for (path, count) in &written {
        println!("{}: {count} records", path.display());
    }
    println!(
        "simulated {} {} delays into {}",
        written.len(),
        run_config.experiment,
        out_dir.display()
    );
    Ok(())
}

fn cmd_analyze(
    files: &[PathBuf],
    out_dir: &Path,
    window_s: f64,
    assert_quantum: bool,
    classical_oracle: bool,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    if files.is_empty() {
        return Err(CliError::Config("no input files given".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(data_err)?;

    let workers = worker_count(jobs, files.len());
    let mut analyzed = run_jobs(files.len(), workers, |index| {
        let path = &files[index];
        let sidecar = tags::read_sidecar(path)
            .map_err(|e| data_err(format!("{}: sidecar: {e}", path.display())))?;
        let mut counter = CoincidenceCounter::new(window_s).map_err(data_err)?;
        let reader =
            tags::open_file(path).map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        for record in reader {
            let record = record.map_err(|e| data_err(format!("{}: {e}", path.display())))?;
            counter
                .push(record)
                .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        }
        let result = counter
            .finish(sidecar.config.duration_s)
            .map_err(data_err)?;
        Ok((sidecar.config, result))
    })?;

    analyzed.sort_by(|a, b| a.0.delay_s.total_cmp(&b.0.delay_s));

    let points: Vec<DipPoint> = analyzed
        .iter()
        .map(|(cfg, result)| DipPoint::from_result(cfg.delay_s, result))
        .collect();
    let curve_path = out_dir.join("dip_curve.csv");
    let mut csv = Vec::new();
    homsim::analysis::write_dip_csv(&mut csv, &points).map_err(data_err)?;
    std::fs::write(&curve_path, csv).map_err(data_err)?;
    println!("wrote {}", curve_path.display());

    let fit_input: Vec<(f64, Measured)> = points
        .iter()
        .map(|p| (p.delay_s, p.corrected_cph))
        .collect();
    let delta_omega_init = analyzed[0].0.profile.delta_omega();
    let fit = fit_dip(&fit_input, delta_omega_init).map_err(data_err)?;
    let report = FitReport::from_fit(&fit);

    let report_path = out_dir.join("fit_report.json");
    let mut json = Vec::new();
    homsim::analysis::write_fit_json(&mut json, &report).map_err(data_err)?;
    std::fs::write(&report_path, json).map_err(data_err)?;
    println!("wrote {}", report_path.display());
    println!(
        "visibility {:.4} ± {:.4}, coherence time {:.4} ps, N_max {:.2} cph, verdict: {}",
        report.visibility,
        report.sigma_visibility,
        report.coherence_time_ps,
        report.n_max,
        report.verdict
    );

    if classical_oracle {
        let cfg = &analyzed[0].0;
        let oracle =
            classical_visibility_oracle(cfg.bs, 1_000_000, cfg.seed).map_err(data_err)?;
        println!(
            "classical-interference bound for this splitter: {:.4} ± {:.4}",
            oracle.visibility, oracle.std_error
        );
    }

    if assert_quantum && quantum_threshold_test(&fit) != Verdict::Quantum {
        return Err(CliError::Assertion(format!(
            "visibility {:.4} ± {:.4} is classical-compatible",
            report.visibility, report.sigma_visibility
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CharacterizeReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    wavelength_nm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transmittance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reflectance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    propagation_length_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    propagation_length_sigma_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_amplitude: Option<f64>,
}

fn cmd_characterize(
    bragg: Option<&Path>,
    wavelength: Option<f64>,
    propagation: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if bragg.is_none() && propagation.is_none() {
        return Err(CliError::Config(
            "nothing to characterize: pass --bragg with --wavelength and/or --propagation".into(),
        ));
    }

    let mut report = CharacterizeReport {
        wavelength_nm: None,
        transmittance: None,
        reflectance: None,
        propagation_length_um: None,
        propagation_length_sigma_um: None,
        decay_amplitude: None,
    };

    if let Some(path) = bragg {
        let wavelength = wavelength.ok_or_else(|| {
            CliError::Config("--bragg needs --wavelength to interpolate at".into())
        })?;
        let text = std::fs::read_to_string(path).map_err(data_err)?;
        let table = parse_transmission_csv(&text).map_err(data_err)?;
        let spec = BraggSpec::new(500.0, table).map_err(data_err)?;
        let (t, r) = bragg_lookup(&spec, wavelength).map_err(data_err)?;
        report.wavelength_nm = Some(wavelength);
        report.transmittance = Some(t);
        report.reflectance = Some(r);
    }

    if let Some(path) = propagation {
        let text = std::fs::read_to_string(path).map_err(data_err)?;
        let samples = parse_propagation_csv(&text).map_err(data_err)?;
        let (length, amplitude, sigma) = fit_propagation_length(&samples).map_err(data_err)?;
        report.propagation_length_um = Some(length);
        report.propagation_length_sigma_um = Some(sigma);
        report.decay_amplitude = Some(amplitude);
    }

    let json = serde_json::to_string_pretty(&report).map_err(data_err)?;
    println!("{json}");
    if let Some(path) = out {
        std::fs::write(path, format!("{json}\n")).map_err(data_err)?;
    }
    Ok(())
}

fn cmd_theory(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let run_config = config::load(config_path).map_err(config_err)?;
    std::fs::create_dir_all(out_dir).map_err(data_err)?;

    let points: Vec<DipPoint> = run_config
        .scan
        .delays()
        .iter()
        .map(|&delay_s| theory_point(&run_config.source, delay_s, run_config.window_s))
        .collect::<Result<_, _>>()?;

    let path = out_dir.join("theory_curve.csv");
    let mut csv = Vec::new();
    homsim::analysis::write_dip_csv(&mut csv, &points).map_err(data_err)?;
    std::fs::write(&path, csv).map_err(data_err)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn theory_point(source: &SourceConfig, delay_s: f64, window_s: f64) -> Result<DipPoint, CliError> {
    let cfg = SourceConfig {
        delay_s,
        ..source.clone()
    };
    let model = detection_model(&cfg).map_err(config_err)?;
    let corrected_cph = cps_to_cph(model.true_coincidence_cps(cfg.pair_rate_cps));
    let (r1, r2) = model.singles_rates_cps(cfg.pair_rate_cps);
    let accidental_cph = cps_to_cph(homsim::analysis::accidental_rate(r1, r2, window_s));

    // Cross-check against the closed-form dip at full mode overlap; the
    // detection-model route already includes partial distinguishability.
    if (cfg.mode_overlap - 1.0).abs() < 1e-12 {
        let p = coincidence_probability(&cfg.profile, delay_s, cfg.bs, cfg.loss)
            .map_err(config_err)?;
        debug_assert!((cps_to_cph(cfg.pair_rate_cps * p) - corrected_cph).abs() < 1e-9);
    }

    Ok(DipPoint {
        delay_s,
        raw_cph: corrected_cph + accidental_cph,
        accidental_cph,
        corrected_cph: Measured::new(corrected_cph, 0.0),
    })
}
