//! Flag / config-file / default resolution.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use qsl_core::ensemble::DEFAULT_BINS;
use qsl_core::io::{parse_list, read_config};
use qsl_core::{BlochVector, Error, Result, SimParams};
use serde::Serialize;

/// Flags shared by every command. All are optional so that a config file
/// can supply them; anything still missing falls back to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Drive frequency ω.
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// Measurement strength κ.
    #[arg(long, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    /// Total duration τ.
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Integrator step.
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Number of trajectories.
    #[arg(long = "n-traj", allow_negative_numbers = true)]
    pub n_traj: Option<i64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial Bloch vector as `x,y,z`; must be pure.
    #[arg(long, allow_hyphen_values = true)]
    pub initial: Option<String>,
    /// Worker threads (default: available parallelism).
    #[arg(long, allow_negative_numbers = true)]
    pub workers: Option<i64>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long)]
    pub overwrite: bool,
    /// `key = value` file; command-line flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Resolved configuration, echoed into the JSON outputs.
///
/// Execution-only settings (worker count, output directory, overwrite) are
/// left out of the echo so that the same physics yields the same files.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub params: SimParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub overwrite: bool,
}

/// Command-specific values as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Extras {
    pub target_angle: Option<f64>,
    pub kappas: Option<String>,
    pub n_bins: Option<i64>,
    pub wants_target: bool,
    pub wants_kappas: bool,
    pub wants_bins: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "omega", "kappa", "tau", "dt", "n_traj", "seed", "initial", "workers", "out", "target_angle",
    "kappas", "n_bins",
];

struct Layer {
    file: BTreeMap<String, String>,
}

impl Layer {
    fn get<T: FromStr>(&self, field: &'static str, flag: Option<T>) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(field) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidParams {
                    field,
                    reason: format!("cannot parse `{raw}` from the config file"),
                }),
        }
    }

    fn raw(&self, field: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.file.get(field).cloned())
    }
}

fn count(field: &'static str, v: i64, min: i64) -> Result<u64> {
    if v < min {
        return Err(Error::InvalidParams {
            field,
            reason: format!("must be at least {min}, got {v}"),
        });
    }
    Ok(v as u64)
}

pub fn resolve(command: &str, common: &CommonArgs, extras: &Extras) -> Result<RunConfig> {
    let file = match &common.config {
        Some(path) => read_config(path)?,
        None => BTreeMap::new(),
    };
    if let Some(key) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::InvalidParams {
            field: "config",
            reason: format!("unknown key `{key}`"),
        });
    }
    let layer = Layer { file };
    let d = SimParams::default();
    let initial = match layer.raw("initial", common.initial.clone()) {
        Some(s) => BlochVector::from_str(&s).map_err(|e| Error::InvalidParams {
            field: "initial",
            reason: e.to_string(),
        })?,
        None => d.initial,
    };
    let n_traj = match layer.get("n_traj", common.n_traj)? {
        Some(v) => count("n_traj", v, 1)?,
        None => d.n_traj,
    };
    let params = SimParams {
        omega: layer.get("omega", common.omega)?.unwrap_or(d.omega),
        kappa: layer.get("kappa", common.kappa)?.unwrap_or(d.kappa),
        tau: layer.get("tau", common.tau)?.unwrap_or(d.tau),
        dt: layer.get("dt", common.dt)?.unwrap_or(d.dt),
        initial,
        n_traj,
        seed: layer.get("seed", common.seed)?.unwrap_or(d.seed),
        max_norm_excursion: d.max_norm_excursion,
    };
    params.validate()?;

    let workers = match layer.get("workers", common.workers)? {
        Some(v) => count("workers", v, 1)? as usize,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let out = layer
        .get::<PathBuf>("out", common.out.clone())?
        .unwrap_or_else(|| PathBuf::from("."));

    let target_angle = if extras.wants_target {
        let t = layer.get("target_angle", extras.target_angle)?.unwrap_or(FRAC_PI_4);
        if !(t > 0.0 && t <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParams {
                field: "target_angle",
                reason: format!("must lie in (0, π/2], got {t}"),
            });
        }
        Some(t)
    } else {
        None
    };
    let kappas = if extras.wants_kappas {
        let raw = layer
            .raw("kappas", extras.kappas.clone())
            .unwrap_or_else(|| "0.05,0.1,0.25,0.5".into());
        let list = parse_list("kappas", &raw)?;
        for &k in &list {
            params.with_kappa(k).validate()?;
        }
        Some(list)
    } else {
        None
    };
    let n_bins = if extras.wants_bins {
        match layer.get("n_bins", extras.n_bins)? {
            Some(v) => Some(count("n_bins", v, 2)? as usize),
            None => Some(DEFAULT_BINS),
        }
    } else {
        None
    };

    Ok(RunConfig {
        command: command.into(),
        params,
        target_angle,
        kappas,
        n_bins,
        workers,
        out,
        overwrite: common.overwrite,
    })
}
