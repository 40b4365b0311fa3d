//! `qsltraj`: simulate a continuously measured qubit and measure how often
//! single trajectories beat the ensemble quantum speed limit.

mod config;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use qsl_core::ensemble::{
    colormap_from_run, passage_time_distribution, run_ensemble_with, sweep_kappa, EnsembleOptions,
};
use qsl_core::io::{self, IoError, OutputDir};
use qsl_core::metrics::{conditioned_velocity, passage_time};
use qsl_core::sde::{simulate_with_fault, Fault};
use qsl_core::validate::{run_validation, ValidationOptions};
use serde_json::json;

use config::{resolve, CommonArgs, Extras, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_IO: u8 = 1;

/// Bins of F ∈ [0, 1] in colormap.csv.
const COLORMAP_F_BINS: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "qsltraj", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trajectory and dump it to trajectory.csv.
    Trajectory {
        #[command(flatten)]
        common: CommonArgs,
        /// Which trajectory of the seeded family to simulate.
        #[arg(long, default_value_t = 0)]
        traj_index: u64,
        #[arg(long, allow_negative_numbers = true)]
        target_angle: Option<f64>,
    },
    /// Run an ensemble: velocity histogram, violation fraction, fidelity map.
    Ensemble {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, allow_negative_numbers = true)]
        n_bins: Option<i64>,
        #[arg(long, allow_negative_numbers = true)]
        target_angle: Option<f64>,
    },
    /// One ensemble per κ in --kappas.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated κ values.
        #[arg(long, allow_hyphen_values = true)]
        kappas: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        n_bins: Option<i64>,
    },
    /// Passage times to a target Bures angle.
    Passage {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, allow_negative_numbers = true)]
        target_angle: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        n_bins: Option<i64>,
    },
    /// Run the self-check suite and write validation.json.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Corrupt the integrator on purpose (mutation testing).
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    DiffusionSign,
    DiffusionScale,
}

impl From<FaultArg> for Fault {
    fn from(f: FaultArg) -> Self {
        match f {
            FaultArg::DiffusionSign => Fault::DiffusionSign,
            FaultArg::DiffusionScale => Fault::DiffusionScale,
        }
    }
}

/// Everything that can end a command early, with its exit code.
#[derive(Debug)]
enum Failure {
    Core(qsl_core::Error),
    Io(IoError),
    Validation,
}

impl From<qsl_core::Error> for Failure {
    fn from(e: qsl_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            Failure::Core(_) => EXIT_CONFIG,
            Failure::Io(IoError::Exists(_)) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Validation => EXIT_VALIDATION,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Io(e) => eprintln!("error: {e}"),
                Failure::Validation => eprintln!("validation failed"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Trajectory {
            common,
            traj_index,
            target_angle,
        } => {
            let extras = Extras {
                target_angle,
                wants_target: true,
                ..Extras::default()
            };
            let cfg = resolve("trajectory", &common, &extras)?;
            cmd_trajectory(&cfg, traj_index)
        }
        Command::Ensemble {
            common,
            n_bins,
            target_angle,
        } => {
            let extras = Extras {
                target_angle,
                n_bins,
                wants_target: true,
                wants_bins: true,
                ..Extras::default()
            };
            cmd_ensemble(&resolve("ensemble", &common, &extras)?)
        }
        Command::Sweep {
            common,
            kappas,
            n_bins,
        } => {
            let extras = Extras {
                kappas,
                n_bins,
                wants_kappas: true,
                wants_bins: true,
                ..Extras::default()
            };
            cmd_sweep(&resolve("sweep", &common, &extras)?)
        }
        Command::Passage {
            common,
            target_angle,
            n_bins,
        } => {
            let extras = Extras {
                target_angle,
                n_bins,
                wants_target: true,
                wants_bins: true,
                ..Extras::default()
            };
            cmd_passage(&resolve("passage", &common, &extras)?)
        }
        Command::Validate {
            common,
            inject_fault,
        } => {
            let cfg = resolve("validate", &common, &Extras::default())?;
            cmd_validate(&cfg, inject_fault.map_or(Fault::None, Fault::from))
        }
    }
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| {
            Failure::Core(qsl_core::Error::InvalidParams {
                field: "workers",
                reason: e.to_string(),
            })
        })
}

fn progress(cfg: &RunConfig, what: &str) -> Instant {
    eprintln!(
        "{}: {what} (kappa = {}, tau = {}, dt = {}, {} worker(s))",
        cfg.command, cfg.params.kappa, cfg.params.tau, cfg.params.dt, cfg.workers
    );
    Instant::now()
}

fn done(cfg: &RunConfig, start: Instant) {
    eprintln!("{}: finished in {:.1} s", cfg.command, start.elapsed().as_secs_f64());
}

fn cmd_trajectory(cfg: &RunConfig, traj_index: u64) -> Result<(), Failure> {
    let out = OutputDir::new(&cfg.out, cfg.overwrite)?;
    out.check_writable(&["trajectory.csv", "trajectory.json"])?;
    let start = progress(cfg, &format!("trajectory {traj_index}"));
    let rec = simulate_with_fault(&cfg.params, traj_index, Fault::None)?;
    let mut sample = conditioned_velocity(&rec, &cfg.params)?;
    sample.passage_time = passage_time(&rec, cfg.target_angle.unwrap_or(std::f64::consts::FRAC_PI_4));
    out.write("trajectory.csv", &io::trajectory_csv(&rec))?;
    out.write_json(
        "trajectory.json",
        &json!({
            "config": cfg,
            "traj_index": traj_index,
            "seed_used": rec.seed_used,
            "sample": sample,
            "large_excursions": rec.large_excursions,
        }),
    )?;
    done(cfg, start);
    Ok(())
}

fn cmd_ensemble(cfg: &RunConfig) -> Result<(), Failure> {
    let out = OutputDir::new(&cfg.out, cfg.overwrite)?;
    let files = ["ensemble.csv", "histogram.csv", "colormap.csv", "curves.csv", "stats.json"];
    out.check_writable(&files)?;
    let opts = EnsembleOptions {
        n_bins: cfg.n_bins.unwrap_or(qsl_core::ensemble::DEFAULT_BINS),
        target_angle: cfg.target_angle.unwrap_or(std::f64::consts::FRAC_PI_4),
        ..EnsembleOptions::default()
    };
    let start = progress(cfg, &format!("{} trajectories", cfg.params.n_traj));
    let run = pool(cfg)?.install(|| run_ensemble_with(&cfg.params, &opts))?;
    let colormap = colormap_from_run(&run, COLORMAP_F_BINS)?;
    let s = &run.stats;
    out.write("ensemble.csv", &io::ensemble_csv(s))?;
    out.write("histogram.csv", &io::histogram_csv(&s.histogram))?;
    out.write("colormap.csv", &io::colormap_csv(&colormap))?;
    out.write("curves.csv", &io::curves_csv(&s.fidelity_bands))?;
    out.write_json(
        "stats.json",
        &json!({
            "config": cfg,
            "v_ensemble": s.qsl.v_ensemble,
            "v_qsl": s.qsl.v_qsl,
            "tau_qsl_angle": s.qsl.tau_qsl_angle,
            "tau_qsl_ratio": s.qsl.tau_qsl_ratio,
            "tau_qsl_bound": s.qsl.tau_qsl_bound,
            "target_angle": s.qsl.target_angle,
            "mean_vc": s.mean_vc,
            "se_mean_vc": s.se_mean_vc,
            "std_vc": s.std_vc,
            "max_vc": s.max_vc,
            "var_vc_sample": s.var_vc_sample.map(|e| e.value),
            "var_vc_sample_se": s.var_vc_sample.map(|e| e.std_error),
            "var_vc_formula": s.var_vc_formula.map(|e| e.value),
            "var_vc_formula_se": s.var_vc_formula.map(|e| e.std_error),
            "violation_fraction": s.violation_fraction,
            "f_qsl_final": s.f_qsl_final,
            "final_fraction_below_fqsl": s.final_fraction_below_fqsl,
            "max_identity_residual": s.max_identity_residual,
            "passage_reached": s.passage_reached,
            "n_traj": s.n_traj,
            "clamp_events": s.clamp_events,
            "bimodality": s.bimodality,
            "histogram_degenerate": s.histogram.degenerate,
        }),
    )?;
    eprintln!(
        "ensemble: violation fraction {:.4}, mean V_C {:.6} (V = {:.6}, V_QSL = {:.6})",
        s.violation_fraction, s.mean_vc, s.qsl.v_ensemble, s.qsl.v_qsl
    );
    done(cfg, start);
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let out = OutputDir::new(&cfg.out, cfg.overwrite)?;
    out.check_writable(&["sweep.csv", "sweep.json"])?;
    let kappas = cfg.kappas.clone().unwrap_or_default();
    let opts = EnsembleOptions {
        n_bins: cfg.n_bins.unwrap_or(qsl_core::ensemble::DEFAULT_BINS),
        fidelity_columns: 2,
        ..EnsembleOptions::default()
    };
    let start = progress(cfg, &format!("{} kappa values", kappas.len()));
    let sweep = pool(cfg)?.install(|| sweep_kappa(&cfg.params, &kappas, &opts))?;
    out.write("sweep.csv", &io::sweep_csv(&sweep))?;
    out.write_json(
        "sweep.json",
        &json!({
            "config": cfg,
            "rows": sweep.rows,
            "std_vc_increasing": sweep.std_vc_increasing,
        }),
    )?;
    done(cfg, start);
    Ok(())
}

fn cmd_passage(cfg: &RunConfig) -> Result<(), Failure> {
    let out = OutputDir::new(&cfg.out, cfg.overwrite)?;
    out.check_writable(&["passage.csv", "passage_histogram.csv", "passage.json"])?;
    let target = cfg.target_angle.unwrap_or(std::f64::consts::FRAC_PI_4);
    let n_bins = cfg.n_bins.unwrap_or(qsl_core::ensemble::DEFAULT_BINS);
    let start = progress(cfg, &format!("{} trajectories to angle {target}", cfg.params.n_traj));
    let stats = pool(cfg)?.install(|| passage_time_distribution(&cfg.params, target, n_bins))?;
    out.write("passage.csv", &io::passage_csv(&stats))?;
    if let Some(h) = &stats.histogram {
        out.write("passage_histogram.csv", &io::histogram_csv(h))?;
    }
    out.write_json("passage.json", &json!({ "config": cfg, "passage": stats }))?;
    eprintln!(
        "passage: {} reached, {} unreached; fraction before tau_QSL (angle) {:?}",
        stats.reached, stats.unreached, stats.fraction_below_angle
    );
    done(cfg, start);
    Ok(())
}

fn cmd_validate(cfg: &RunConfig, fault: Fault) -> Result<(), Failure> {
    let out = OutputDir::new(&cfg.out, cfg.overwrite)?;
    out.check_writable(&["validation.json"])?;
    let opts = ValidationOptions {
        n_traj: cfg.params.n_traj,
        fault,
        ..ValidationOptions::default()
    };
    let start = progress(cfg, "self-checks");
    let report = pool(cfg)?.install(|| run_validation(&cfg.params, &opts))?;
    for c in &report.checks {
        let verdict = match (c.passed, c.gating) {
            (true, true) => "PASS",
            (false, _) => "FAIL",
            (true, false) => "INFO",
        };
        println!("{verdict} {}: measured {} expected {} ({})", c.name, c.measured, c.expected, c.detail);
    }
    out.write_json("validation.json", &json!({ "config": cfg, "report": report }))?;
    done(cfg, start);
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}
