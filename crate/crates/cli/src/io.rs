//! Config parsing and the on-disk output formats: diagnostics and snapshot
//! CSVs, study NDJSON logs, and the hashed run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dispflow_core::energy::EnergyReport;
use dispflow_core::experiments::StudyResult;
use dispflow_core::integrate::{RunFailure, Trajectory};
use dispflow_core::{Grid, RunConfig};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Config { path: PathBuf, source: ConfigError },
}

/// A schema violation, located by its JSON path (`.` for the top level).
#[derive(Debug, Error, PartialEq)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

/// Parses and validates a JSON run config, filling defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
        key: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate().map_err(|e| ConfigError {
        key: ".".to_string(),
        message: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|source| IoError::Config {
        path: path.to_path_buf(),
        source,
    })
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn diagnostics_header(k: u32) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..=k).map(|l| format!("l2_{l}")));
    cols.push(format!("N_{k}"));
    cols.extend(["length", "obstruction", "renorm_drift"].map(String::from));
    cols.join(",")
}

pub fn diagnostics_csv(k: u32, reports: &[EnergyReport]) -> String {
    let mut out = diagnostics_header(k);
    out.push('\n');
    for r in reports {
        let mut row = vec![num(r.t)];
        row.extend(r.levels.iter().map(|&v| num(v)));
        row.push(num(r.gauged.unwrap_or(f64::NAN)));
        row.extend([r.length, r.obstruction, r.renorm_drift].map(num));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn snapshot_csv(grid: &Grid, points: &[dispflow_core::Vec3]) -> String {
    let mut out = String::from("x,u1,u2,u3\n");
    for (x, p) in grid.nodes().into_iter().zip(points) {
        let _ = writeln!(out, "{},{},{},{}", num(x), num(p.x), num(p.y), num(p.z));
    }
    out
}

/// Files written under one directory, with their content hashes.
#[derive(Debug)]
pub struct OutputSet {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputSet {
    pub fn create(root: &Path) -> Result<Self, IoError> {
        fs::create_dir_all(root).map_err(|source| IoError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutputSet {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<(), IoError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| IoError::Write {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, bytes).map_err(|source| IoError::Write {
            path: path.clone(),
            source,
        })?;
        self.files.insert(relative.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Writes `manifest.json` from `fields` plus the code version and every
    /// output hash; returns its path.
    pub fn finish(self, mut fields: Map<String, Value>) -> Result<PathBuf, IoError> {
        fields.insert("code_version".into(), json!(CODE_VERSION));
        fields.insert("outputs".into(), json!(self.files));
        let mut text =
            serde_json::to_string_pretty(&Value::Object(fields)).expect("manifest serialises");
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|source| IoError::Write {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

/// Writes a trajectory (complete or partial) and its manifest.
pub fn write_run(
    dir: &Path,
    cfg: &RunConfig,
    result: &Result<Trajectory, RunFailure>,
) -> Result<PathBuf, IoError> {
    let (traj, status) = match result {
        Ok(t) => (t, "ok".to_string()),
        Err(f) => (&f.partial, format!("failed: {}", f.error)),
    };
    let mut out = OutputSet::create(dir)?;
    out.write(
        "diagnostics.csv",
        diagnostics_csv(cfg.k, &traj.diagnostics).as_bytes(),
    )?;
    if let Ok(grid) = Grid::new(cfg.n) {
        for snap in &traj.snapshots {
            let name = format!("snapshots/step_{:010}.csv", snap.step);
            out.write(&name, snapshot_csv(&grid, &snap.curve.points.0).as_bytes())?;
        }
    }
    let mut fields = Map::new();
    fields.insert("kind".into(), json!("run"));
    fields.insert("config".into(), json!(cfg));
    fields.insert("config_hash".into(), json!(cfg.hash()));
    fields.insert("dt".into(), json!(traj.dt));
    fields.insert("steps".into(), json!(traj.steps));
    fields.insert(
        "energy_doubling_time".into(),
        json!(traj.energy_doubling_time),
    );
    fields.insert("status".into(), json!(status));
    out.finish(fields)
}

fn file_stem(study: &str) -> String {
    study.replace(':', "-")
}

/// One line per case, then a closing line with fitted values and checks.
pub fn study_ndjson(study: &StudyResult) -> String {
    let mut out = String::new();
    for case in &study.cases {
        let line = json!({ "study": study.name, "case": case });
        out.push_str(&serde_json::to_string(&line).expect("case serialises"));
        out.push('\n');
    }
    let summary = json!({
        "study": study.name,
        "parameters": study.parameters,
        "fitted": study.fitted,
        "checks": study.checks,
        "passed": study.passed(),
    });
    out.push_str(&serde_json::to_string(&summary).expect("summary serialises"));
    out.push('\n');
    out
}

pub fn summary_table(studies: &[StudyResult]) -> String {
    let width = studies
        .iter()
        .flat_map(|s| {
            s.checks
                .iter()
                .map(move |c| s.name.len() + c.name.len() + 1)
        })
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for s in studies {
        for c in &s.checks {
            let label = format!("{}/{}", s.name, c.name);
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{verdict}  {label:<width$}  {}", c.detail);
        }
    }
    out
}

pub fn write_studies(
    dir: &Path,
    command: &str,
    seed: u64,
    studies: &[StudyResult],
) -> Result<PathBuf, IoError> {
    let mut out = OutputSet::create(dir)?;
    for s in studies {
        out.write(
            &format!("{}.ndjson", file_stem(&s.name)),
            study_ndjson(s).as_bytes(),
        )?;
    }
    out.write("summary.txt", summary_table(studies).as_bytes())?;
    let mut fields = Map::new();
    fields.insert("kind".into(), json!("study"));
    fields.insert("command".into(), json!(command));
    fields.insert("seed".into(), json!(seed));
    fields.insert(
        "studies".into(),
        json!(studies
            .iter()
            .map(|s| json!({ "name": s.name, "passed": s.passed() }))
            .collect::<Vec<_>>()),
    );
    out.finish(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [std::f64::consts::TAU, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(std::f64::consts::TAU), "6.2831853071795862e0");
    }

    #[test]
    fn header_lists_every_level() {
        assert_eq!(
            diagnostics_header(2),
            "t,l2_0,l2_1,l2_2,N_2,length,obstruction,renorm_drift"
        );
    }

    #[test]
    fn unknown_key_is_located() {
        let err = parse_config(
            r#"{"target":"sphere","initial":"great-circle","preset":"integrable","n":64,"t_end":0.01,"epsillon":0.1}"#,
        )
        .unwrap_err();
        assert!(err.message.contains("epsillon"), "{err}");
    }

    #[test]
    fn wrong_type_names_key_and_type() {
        let err = parse_config(
            r#"{"target":"sphere","initial":"great-circle","preset":"integrable","n":"64","t_end":0.01}"#,
        )
        .unwrap_err();
        assert_eq!(err.key, "n");
        assert!(err.message.contains("expected"), "{err}");
    }

    #[test]
    fn semantic_errors_are_reported() {
        let err = parse_config(r#"{"target":"sphere","initial":"great-circle","preset":"integrable","n":63,"t_end":0.01}"#)
            .unwrap_err();
        assert!(err.message.contains("even"), "{err}");
    }
}
