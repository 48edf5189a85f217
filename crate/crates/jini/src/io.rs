//! File formats: the dataset CSV, experiment output CSV/JSON, and atomic
//! writes (temp file plus rename, so failures never leave partial output).
//!
//! Dataset CSV layout: optional `#censor_at=C` metadata line(s), then a
//! header `y,x1,...,xp`, then one row per observation.

use anyhow::{bail, Context, Result};
use jini_core::models::{Dataset, DesignMatrix, ResponseKind};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::harness::{summarize, ExperimentResult, SummaryRow};

/// Reads a dataset CSV. The response kind is supplied by the caller (the
/// model choice decides it); `censor_override` takes precedence over any
/// `#censor_at` metadata in the file.
pub fn read_dataset_csv(
    path: &Path,
    kind: ResponseKind,
    censor_override: Option<u64>,
) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    parse_dataset_csv(&text, kind, censor_override)
        .with_context(|| format!("parsing dataset {}", path.display()))
}

pub fn parse_dataset_csv(
    text: &str,
    kind: ResponseKind,
    censor_override: Option<u64>,
) -> Result<Dataset> {
    let mut censor_at = None;
    let mut header: Option<Vec<String>> = None;
    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some(value) = meta.strip_prefix("censor_at=") {
                censor_at = Some(value.trim().parse::<u64>().with_context(|| {
                    format!("line {}: bad censor_at value '{value}'", lineno + 1)
                })?);
            }
            continue;
        }
        if header.is_none() {
            let cols: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if cols.first().map(String::as_str) != Some("y") {
                bail!("line {}: header must start with 'y', got '{line}'", lineno + 1);
            }
            if cols.len() < 2 {
                bail!("line {}: need at least one covariate column", lineno + 1);
            }
            header = Some(cols);
            continue;
        }
        let p = header.as_ref().unwrap().len() - 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != p + 1 {
            bail!("line {}: expected {} fields, got {}", lineno + 1, p + 1, fields.len());
        }
        let yi: u64 = fields[0]
            .parse()
            .with_context(|| format!("line {}: bad response '{}'", lineno + 1, fields[0]))?;
        let mut row = Vec::with_capacity(p);
        for f in &fields[1..] {
            let v: f64 = f
                .parse()
                .with_context(|| format!("line {}: bad covariate '{f}'", lineno + 1))?;
            row.push(v);
        }
        y.push(yi);
        rows.push(row);
    }
    if header.is_none() {
        bail!("no header row found");
    }
    if rows.is_empty() {
        bail!("no data rows found");
    }
    let design = DesignMatrix::from_rows(&rows)?;
    let censor = censor_override.or(censor_at);
    Ok(Dataset::new(design, y, kind, censor)?)
}

pub fn write_dataset_csv(data: &Dataset) -> String {
    let mut out = String::new();
    if let Some(c) = data.censor_at {
        let _ = writeln!(out, "#censor_at={c}");
    }
    let p = data.design.cols();
    out.push('y');
    for j in 1..=p {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for i in 0..data.n() {
        let _ = write!(out, "{}", data.y[i]);
        for v in data.design.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Bulk estimates CSV: one row per replication, method, and parameter.
pub fn estimates_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("rep,method,param_index,estimate\n");
    for m in &result.methods {
        for (rep, est) in &m.estimates {
            for (j, v) in est.iter().enumerate() {
                let _ = writeln!(out, "{rep},{},{},{v}", m.method.name(), j + 1);
            }
        }
    }
    out
}

#[derive(Serialize)]
struct MethodSummaryJson<'a> {
    method: &'a str,
    bias: &'a [f64],
    rmse: &'a [f64],
    replications_used: usize,
    failures: usize,
}

#[derive(Serialize)]
struct ExperimentSummaryJson<'a> {
    config: &'a crate::harness::ExperimentConfig,
    config_sha256: String,
    methods: Vec<MethodSummaryJson<'a>>,
    initial_fit_failures: usize,
    iteration_histogram: BTreeMap<usize, usize>,
    summary: Vec<SummaryRow>,
    wall_secs: f64,
}

/// Hash of the canonical config serialization, for provenance lines in
/// downstream reports.
pub fn config_hash(config: &crate::harness::ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(config)?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(hex::encode(hasher.finalize()))
}

pub fn summary_json(result: &ExperimentResult) -> Result<String> {
    let payload = ExperimentSummaryJson {
        config: &result.config,
        config_sha256: config_hash(&result.config)?,
        methods: result
            .methods
            .iter()
            .map(|m| MethodSummaryJson {
                method: m.method.name(),
                bias: &m.bias,
                rmse: &m.rmse,
                replications_used: m.estimates.len(),
                failures: m.failures,
            })
            .collect(),
        initial_fit_failures: result.initial_failures,
        iteration_histogram: result.iteration_histogram(),
        summary: summarize(result),
        wall_secs: result.wall_secs,
    };
    Ok(serde_json::to_string_pretty(&payload)?)
}

/// Writes through a temp file in the destination directory and renames, so
/// a failed run leaves no partial output behind.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let stem = path
        .file_name()
        .context("output path has no file name")?
        .to_string_lossy()
        .into_owned();
    let tmp = match dir {
        Some(d) => d.join(format!(".{stem}.tmp-{}", std::process::id())),
        None => std::path::PathBuf::from(format!(".{stem}.tmp-{}", std::process::id())),
    };
    std::fs::write(&tmp, contents)
        .with_context(|| format!("writing temporary file {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into place at {}", path.display()))?;
    Ok(())
}
