//! Output files and the `key = value` configuration format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::ensemble::{Colormap, EnsembleStats, FidelityBands, Histogram, PassageStats, Sweep};
use crate::error::{Error, Result};
use crate::sde::TrajectoryRecord;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{0} already exists; pass --overwrite to replace it")]
    Exists(PathBuf),
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serializing {0}: {1}")]
    Json(PathBuf, serde_json::Error),
}

/// Writes files into one directory, refusing to replace existing files
/// unless `overwrite` is set.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    overwrite: bool,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>, overwrite: bool) -> std::result::Result<Self, IoError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| IoError::Fs {
            path: root.clone(),
            source,
        })?;
        Ok(OutputDir { root, overwrite })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Fails if any of `names` exists and overwriting is off. Called before
    /// a run so that a long simulation is not wasted on a refused write.
    pub fn check_writable(&self, names: &[&str]) -> std::result::Result<(), IoError> {
        if self.overwrite {
            return Ok(());
        }
        for name in names {
            let p = self.path(name);
            if p.exists() {
                return Err(IoError::Exists(p));
            }
        }
        Ok(())
    }

    pub fn write(&self, name: &str, contents: &str) -> std::result::Result<PathBuf, IoError> {
        self.check_writable(&[name])?;
        let p = self.path(name);
        fs::write(&p, contents).map_err(|source| IoError::Fs {
            path: p.clone(),
            source,
        })?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> std::result::Result<PathBuf, IoError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| IoError::Json(self.path(name), e))?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// `t,x,y,z,F,dW`, one row per grid point; dW is empty on the last row.
pub fn trajectory_csv(rec: &TrajectoryRecord) -> String {
    let mut out = String::from("t,x,y,z,F,dW\n");
    for (i, (t, r)) in rec.times.iter().zip(&rec.states).enumerate() {
        let dw = rec.wiener.get(i).copied();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(*t),
            fmt_f64(r.x),
            fmt_f64(r.y),
            fmt_f64(r.z),
            fmt_f64(rec.fidelity_path[i]),
            fmt_opt(dw)
        );
    }
    out
}

/// `traj_id,v_c,bures_final,passage_time,f_final`; passage_time is empty for
/// trajectories that never reach the target.
pub fn ensemble_csv(stats: &EnsembleStats) -> String {
    let mut out = String::from("traj_id,v_c,bures_final,passage_time,f_final\n");
    for s in &stats.velocity_samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.traj_index,
            fmt_f64(s.v_conditioned),
            fmt_f64(s.bures_final),
            fmt_opt(s.passage_time),
            fmt_f64(s.f_final)
        );
    }
    out
}

/// `bin_left,bin_right,count,density`.
pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_left,bin_right,count,density\n");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(h.edges[i]),
            fmt_f64(h.edges[i + 1]),
            c,
            fmt_f64(h.density[i])
        );
    }
    out
}

/// `t,f_bin_left,f_bin_right,density`, time-major.
pub fn colormap_csv(c: &Colormap) -> String {
    let mut out = String::from("t,f_bin_left,f_bin_right,density\n");
    for (t, row) in c.times.iter().zip(&c.density) {
        for (j, d) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(c.f_edges[j]),
                fmt_f64(c.f_edges[j + 1]),
                fmt_f64(*d)
            );
        }
    }
    out
}

/// `t,f_ensemble,f_qsl,f_mean,f_q05,f_q25,f_median,f_q75,f_q95`.
pub fn curves_csv(b: &FidelityBands) -> String {
    let mut out = String::from("t,f_ensemble,f_qsl,f_mean,f_q05,f_q25,f_median,f_q75,f_q95\n");
    for i in 0..b.times.len() {
        let row = [
            b.times[i], b.f_ensemble[i], b.f_qsl[i], b.mean[i], b.q05[i], b.q25[i], b.median[i],
            b.q75[i], b.q95[i],
        ];
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// `kappa,mean_vc,std_vc,violation_fraction,v_ensemble,v_qsl`.
pub fn sweep_csv(s: &Sweep) -> String {
    let mut out = String::from("kappa,mean_vc,std_vc,violation_fraction,v_ensemble,v_qsl\n");
    for r in &s.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.kappa),
            fmt_f64(r.mean_vc),
            fmt_f64(r.std_vc),
            fmt_f64(r.violation_fraction),
            fmt_f64(r.v_ensemble),
            fmt_f64(r.v_qsl)
        );
    }
    out
}

/// `traj_id,passage_time`; empty when the target is never reached.
pub fn passage_csv(p: &PassageStats) -> String {
    let mut out = String::from("traj_id,passage_time\n");
    for (k, t) in p.times.iter().enumerate() {
        let _ = writeln!(out, "{},{}", k, fmt_opt(*t));
    }
    out
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// keys are normalized to lower case with `-` read as `_`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::params("config", format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
        })?;
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::params("config", format!("line {}: empty key or value", lineno + 1)));
        }
        if map.insert(key.clone(), value.to_string()).is_some() {
            return Err(Error::params("config", format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::params("config", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Parses a comma-separated list of numbers such as `0.05,0.1,0.25`.
pub fn parse_list(field: &'static str, s: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::params(field, "the list is empty"));
    }
    items
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::params(field, format!("`{p}` is not a number")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let s = fmt_f64(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        let third = 1.0 / 3.0;
        assert_eq!(fmt_f64(third).parse::<f64>().unwrap(), third);
    }

    #[test]
    fn config_parsing() {
        let cfg = parse_config("# run\nkappa = 0.5\n n-traj=100 # inline\n\n").unwrap();
        assert_eq!(cfg["kappa"], "0.5");
        assert_eq!(cfg["n_traj"], "100");
        assert!(parse_config("kappa 0.5").is_err());
        assert!(parse_config("kappa = 1\nkappa = 2").is_err());
    }

    #[test]
    fn list_round_trip() {
        let v = parse_list("kappas", "0.05, 0.1,0.25").unwrap();
        assert_eq!(v, vec![0.05, 0.1, 0.25]);
        let text: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        assert_eq!(parse_list("kappas", &text.join(",")).unwrap(), v);
        assert!(parse_list("kappas", "").is_err());
        assert!(parse_list("kappas", "0.1,abc").is_err());
    }
}
