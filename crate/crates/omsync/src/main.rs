//! Command-line front end: configs in, plot-ready CSV/JSON out.
//!
//! Exit codes: 0 ok, 1 malformed configuration, 2 divergence, 3 I/O.

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use omsync::analysis::SignalSelector;
use omsync::bath::{compare_models, phase_sign_check, BathSpec, OraclePlan};
use omsync::config::{preset_text, Config, Manifest};
use omsync::dynamics::DynamicsError;
use omsync::model::CircuitConfig;
use omsync::{classify, power_spectrum, run_sweep, steady_window};
use std::fs;
use std::path::{Path, PathBuf};

use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "omsync",
    version,
    about = "Synchronization of dissipatively coupled microwave optomechanical resonators"
)]
struct Cli {
    /// Configuration file (flat key=value lines, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory (subcommand dependent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a configuration key (repeatable), e.g. `--set J=0.11`.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Seed for the optional randomized initial perturbation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the equations of motion and write a trajectory CSV.
    Simulate,
    /// Simulate, window out the transient and write a spectrum CSV.
    Spectrum,
    /// Simulate, analyze and write a classification JSON.
    Classify,
    /// Run (or resume) a parameter sweep into a result directory.
    Sweep,
    /// Run a 2-D sweep (resuming if partial) and write the phase diagram.
    Phase,
    /// Validate the environment elimination against the full bath model.
    Oracle,
    /// Write a named built-in configuration file.
    Preset { name: String },
}

#[derive(Debug)]
enum AppError {
    Config(String),
    Divergence(String),
    Io(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => 1,
            AppError::Divergence(_) => 2,
            AppError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Divergence(m) | AppError::Io(m) => m,
        }
    }
}

fn io_err<E: std::fmt::Display>(context: &str) -> impl Fn(E) -> AppError + '_ {
    move |e| AppError::Io(format!("{context}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, AppError> {
    let text = match &cli.config {
        Some(path) => Some(
            fs::read_to_string(path)
                .map_err(io_err(&format!("reading {}", path.display())))?,
        ),
        None => None,
    };
    let mut cfg = Config::resolve(text.as_deref(), &cli.set)
        .map_err(|e| AppError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.plan.perturb_seed = Some(seed);
    }
    Ok(cfg)
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_manifest(path: &Path, cfg: &Config, overrides: &[String]) -> Result<(), AppError> {
    let manifest = Manifest::new(cfg, overrides);
    let mut m_path = path.as_os_str().to_owned();
    m_path.push(".manifest.json");
    fs::write(
        PathBuf::from(m_path),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(io_err("writing manifest"))?;
    Ok(())
}

fn simulate(cfg: &Config) -> Result<omsync::Trajectory, AppError> {
    let k = cfg.coupling_matrix();
    let gain: Vec<String> = omsync::linear_stability(&cfg.circuit, &k)
        .iter()
        .filter(|e| e.re > 0.0)
        .map(|e| format!("{:.4}{:+.4}i", e.re, e.im))
        .collect();
    if !gain.is_empty() {
        eprintln!(
            "warning: linear gain regime (eigenvalues with positive real part: {}); \
             the optomechanical nonlinearity usually saturates the growth",
            gain.join(", ")
        );
    }
    omsync::integrate(&cfg.plan, &cfg.circuit, &k).map_err(|e| match e {
        DynamicsError::Diverged { .. } | DynamicsError::StepUnderflow { .. } => {
            AppError::Divergence(e.to_string())
        }
        other => AppError::Config(other.to_string()),
    })
}

fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Preset { name } => {
            let text = preset_text(name).map_err(|e| AppError::Config(e.to_string()))?;
            let path = out_path(&cli, &format!("{name}.cfg"));
            fs::write(&path, text).map_err(io_err("writing preset"))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Simulate => {
            let cfg = load_config(&cli)?;
            let traj = simulate(&cfg)?;
            let path = out_path(&cli, "trajectory.csv");
            let file = fs::File::create(&path).map_err(io_err("creating output"))?;
            traj.write_csv(std::io::BufWriter::new(file))
                .map_err(io_err("writing trajectory"))?;
            write_manifest(&path, &cfg, &cli.set)?;
            println!("wrote {} ({} samples)", path.display(), traj.len());
            Ok(())
        }
        Command::Spectrum => {
            let cfg = load_config(&cli)?;
            let traj = simulate(&cfg)?;
            let window = steady_window(&traj, cfg.plan.discard_fraction)
                .map_err(|e| AppError::Config(e.to_string()))?;
            let spec = power_spectrum(&window, cfg.signals)
                .map_err(|e| AppError::Config(e.to_string()))?;
            let path = out_path(&cli, "spectrum.csv");
            let file = fs::File::create(&path).map_err(io_err("creating output"))?;
            spec.write_csv(std::io::BufWriter::new(file))
                .map_err(io_err("writing spectrum"))?;
            write_manifest(&path, &cfg, &cli.set)?;
            println!("wrote {} ({} bins)", path.display(), spec.f_over_f0.len());
            Ok(())
        }
        Command::Classify => {
            let cfg = load_config(&cli)?;
            let traj = simulate(&cfg)?;
            let window = steady_window(&traj, cfg.plan.discard_fraction)
                .map_err(|e| AppError::Config(e.to_string()))?;
            let spectra = power_spectrum(&window, SignalSelector::Intensities)
                .map_err(|e| AppError::Config(e.to_string()))?;
            let k = cfg.coupling_matrix();
            let cls = classify(&spectra, &window, &k, &cfg.classifier);
            let path = out_path(&cli, "classification.json");
            fs::write(&path, cls.to_json()).map_err(io_err("writing classification"))?;
            write_manifest(&path, &cfg, &cli.set)?;
            println!("{}: {}", path.display(), cls.state);
            Ok(())
        }
        Command::Sweep => {
            let cfg = load_config(&cli)?;
            let spec = cfg.sweep_spec();
            let dir = out_path(&cli, "sweep_out");
            let result =
                run_sweep(&spec, cli.workers, &dir).map_err(|e| AppError::Config(e.to_string()))?;
            if result.fresh_count == 0 {
                println!(
                    "sweep already 100% complete ({} points in {}); nothing to do",
                    result.records.len(),
                    dir.display()
                );
            } else {
                println!(
                    "sweep complete: {} points in {} ({} computed now)",
                    result.records.len(),
                    dir.display(),
                    result.fresh_count
                );
            }
            Ok(())
        }
        Command::Phase => {
            let cfg = load_config(&cli)?;
            let spec = cfg.sweep_spec();
            let dir = out_path(&cli, "sweep_out");
            let result =
                run_sweep(&spec, cli.workers, &dir).map_err(|e| AppError::Config(e.to_string()))?;
            let pd = omsync::phase_diagram(&result).map_err(|e| AppError::Config(e.to_string()))?;
            let path = dir.join("phase.csv");
            fs::write(&path, pd.to_csv()).map_err(io_err("writing phase diagram"))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Oracle => {
            let cfg = load_config(&cli)?;
            let b = &cfg.bath;
            let spec = BathSpec {
                j_site: [b.j1, b.j2, b.j3],
                positions: [0.0, cfg.env.theta, cfg.env.theta + cfg.env.phi],
                band_halfwidth: b.band,
                n_modes: b.n_modes,
                carrier: if b.carrier > 0.0 {
                    b.carrier
                } else {
                    BathSpec::suggested_carrier(b.band)
                },
            };
            spec.validate().map_err(|e| AppError::Config(e.to_string()))?;

            // The circuit side of the comparison is derived from the bath so
            // the two models describe the same reduced system.
            let gamma_eff = spec.gamma_eff();
            if gamma_eff <= 0.0 {
                return Err(AppError::Config(
                    "bath_j1..bath_j3 are all zero; nothing to compare".to_string(),
                ));
            }
            let circuit = CircuitConfig {
                delta: cfg.circuit.delta,
                g0: 0.0,
                epsilon: 0.0,
                gamma: gamma_eff,
                ..cfg.circuit
            };
            let mut plan = OraclePlan::for_spec(&spec);
            if b.horizon > 0.0 {
                plan.horizon = b.horizon;
            }
            if b.dt > 0.0 {
                plan.dt = b.dt;
            }
            plan.initial = [
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ];

            let mut report = compare_models(&spec, &circuit, &plan)
                .map_err(|e| AppError::Config(e.to_string()))?;
            let detunings = [circuit.delta, 0.0, -circuit.delta];
            report.phase_sign_check = Some(
                phase_sign_check(&spec, detunings)
                    .map_err(|e| AppError::Config(e.to_string()))?,
            );

            let path = out_path(&cli, "oracle.json");
            let curve_path = path.with_extension("errors.csv");
            let mut curve = String::from("tau,error\n");
            for (t, e) in &report.error_curve {
                curve.push_str(&format!("{t:.9e},{e:.9e}\n"));
            }
            fs::write(&curve_path, curve).map_err(io_err("writing error curve"))?;
            report.per_tau_error_csv_path = Some(curve_path.display().to_string());
            fs::write(&path, serde_json::to_string_pretty(&report).unwrap())
                .map_err(io_err("writing oracle report"))?;
            write_manifest(&path, &cfg, &cli.set)?;
            println!(
                "wrote {} (max_error = {:.4e})",
                path.display(),
                report.max_error
            );
            Ok(())
        }
    }
}
