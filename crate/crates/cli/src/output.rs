//! Result files: results.csv, spectrum.csv and meta.json.

use std::fs;
use std::path::Path;

use bhqt::protocols::{ExperimentConfig, ProtocolReport, Table};
use serde_json::{json, Map, Value};

use crate::CliError;

/// One evaluated sweep point.
pub struct PointOutcome {
    pub assignment: Vec<(String, String)>,
    pub config: ExperimentConfig,
    pub report: ProtocolReport,
}

/// Run-level facts recorded in meta.json.
pub struct RunInfo<'a> {
    pub source: &'a str,
    pub overrides: &'a [String],
    pub jobs: usize,
    pub wall_time_s: f64,
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}

fn csv_table<'a>(
    keys: &[String],
    points: impl Iterator<Item = (&'a [(String, String)], &'a Table)>,
) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Option<&[String]> = None;
    for (assignment, table) in points {
        match header {
            None => {
                let mut cols: Vec<&str> = keys.iter().map(String::as_str).collect();
                cols.extend(table.columns.iter().map(String::as_str));
                w.write_record(&cols).map_err(|e| CliError::Io(e.to_string()))?;
                header = Some(&table.columns);
            }
            Some(h) if h != table.columns.as_slice() => {
                return Err(CliError::Run(bhqt::Error::Domain(
                    "sweep points produced different result columns".into(),
                )));
            }
            Some(_) => {}
        }
        let prefix: Vec<String> = keys
            .iter()
            .map(|k| {
                assignment
                    .iter()
                    .find(|(key, _)| key == k)
                    .map_or(String::new(), |(_, v)| unquote(v).to_string())
            })
            .collect();
        for row in &table.rows {
            let mut rec = prefix.clone();
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn results_csv(keys: &[String], points: &[PointOutcome]) -> Result<Vec<u8>, CliError> {
    csv_table(keys, points.iter().map(|p| (p.assignment.as_slice(), &p.report.results)))
}

/// `None` when the protocol has no spectrum.
pub fn spectrum_csv(keys: &[String], points: &[PointOutcome]) -> Result<Option<Vec<u8>>, CliError> {
    if points.iter().all(|p| p.report.spectrum.is_none()) {
        return Ok(None);
    }
    let tables = points
        .iter()
        .filter_map(|p| p.report.spectrum.as_ref().map(|t| (p.assignment.as_slice(), t)));
    csv_table(keys, tables).map(Some)
}

pub fn meta_json(keys: &[String], points: &[PointOutcome], info: &RunInfo) -> Result<Vec<u8>, CliError> {
    let first = &points[0].config;
    let mut entries = Vec::with_capacity(points.len());
    for p in points {
        let assignment: Map<String, Value> = p
            .assignment
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(unquote(v).to_string())))
            .collect();
        let config = serde_json::to_value(&p.config).map_err(|e| CliError::Io(e.to_string()))?;
        entries.push(json!({
            "assignment": assignment,
            "config": config,
            "summary": p.report.summary,
            "warnings": p.report.warnings,
        }));
    }
    let doc = json!({
        "protocol": points[0].report.protocol.name(),
        "source": info.source,
        "overrides": info.overrides,
        "sweep_keys": keys,
        "seed": first.run.seed,
        "shots": first.run.shots,
        "jobs": info.jobs,
        "versions": {
            "bhqt-core": bhqt::VERSION,
            "bhqt-cli": env!("CARGO_PKG_VERSION"),
        },
        "wall_time_s": info.wall_time_s,
        "points": entries,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes every file into a scratch directory beside `out`, then moves them
/// into place, so a failed write leaves nothing behind.
pub fn write_atomically(out: &Path, files: &[(&str, Vec<u8>)]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", out.display()));
    if out.exists() && !out.is_dir() {
        return Err(CliError::Io(format!("{} exists and is not a directory", out.display())));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => Path::new(".").to_path_buf(),
    };
    fs::create_dir_all(&parent).map_err(io)?;
    let scratch = tempfile::Builder::new()
        .prefix(".bhqt-")
        .tempdir_in(&parent)
        .map_err(io)?;
    for (name, bytes) in files {
        fs::write(scratch.path().join(name), bytes).map_err(io)?;
    }
    if out.exists() {
        for (name, _) in files {
            fs::rename(scratch.path().join(name), out.join(name)).map_err(io)?;
        }
    } else {
        fs::rename(scratch.keep(), out).map_err(io)?;
    }
    Ok(())
}
