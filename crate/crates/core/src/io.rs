//! File formats: panel CSV with a JSON sidecar, contrast CSV, Monte Carlo
//! summary CSV and sample-path CSV. Floats are written as the shortest decimal
//! that round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, PanelData};
use crate::montecarlo::{EstimatorSummary, SamplePath};
use crate::recast::ContrastSeries;

pub const PANEL_HEADER: &str = "group,replicate,value";
pub const CONTRAST_HEADER: &str = "group,contrast_index,value";
pub const SUMMARY_HEADER: &str = "estimator,n,R,mean,bias,variance,mse,se_mean,crlb_ratio";
pub const PATH_HEADER: &str = "n,naive,recast";

pub const PANEL_FORMAT_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_string()
    } else {
        x.to_string()
    }
}

/// Metadata written next to a panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSidecar {
    pub format_version: u32,
    pub m: usize,
    pub n: usize,
    pub spec: Option<ModelSpec>,
    pub seed: Option<u64>,
    pub sampler: String,
}

pub const SAMPLER: &str = "chacha8/splitmix64-key/box-muller(cos,sin)";

/// `panel.csv` → `panel.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// One row per cell, groups outer, replicates inner, both 1-based.
pub fn panel_to_csv(panel: &PanelData) -> String {
    let mut out = String::with_capacity(panel.values().len() * 24);
    out.push_str(PANEL_HEADER);
    out.push('\n');
    for (t, g) in panel.groups().enumerate() {
        for (i, x) in g.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", t + 1, i + 1, fmt_f64(*x));
        }
    }
    out
}

pub fn panel_sidecar(panel: &PanelData) -> PanelSidecar {
    PanelSidecar {
        format_version: PANEL_FORMAT_VERSION,
        m: panel.m(),
        n: panel.n(),
        spec: panel.spec().cloned(),
        seed: panel.seed(),
        sampler: SAMPLER.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the panel CSV and its JSON sidecar.
pub fn write_panel(panel: &PanelData, csv_path: &Path) -> Result<()> {
    write_file(csv_path, &panel_to_csv(panel))?;
    let mut json = serde_json::to_string_pretty(&panel_sidecar(panel))?;
    json.push('\n');
    write_file(&sidecar_path(csv_path), &json)
}

/// Parses panel CSV text. Every `(group, replicate)` cell of the implied
/// `m × n` grid must appear exactly once, in any order.
pub fn parse_panel_csv(text: &str, origin: &Path) -> Result<PanelData> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["group", "replicate", "value"] {
        return Err(parse_err(1, format!("expected header `{PANEL_HEADER}`")));
    }

    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let index = |col: usize, name: &str| -> Result<usize> {
            let raw = &record[col];
            match raw.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(parse_err(
                    line,
                    format!("column `{name}`: expected a positive integer, got `{raw}`"),
                )),
            }
        };
        let group = index(0, "group")?;
        let replicate = index(1, "replicate")?;
        let raw = &record[2];
        let value = match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                return Err(parse_err(
                    line,
                    format!("column `value`: expected a finite number, got `{raw}`"),
                ))
            }
        };
        cells.push((line, group, replicate, value));
    }
    if cells.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }

    let n = cells.iter().map(|c| c.1).max().unwrap();
    let m = cells.iter().map(|c| c.2).max().unwrap();
    if m < 2 {
        return Err(Error::TooFewReplicates(m));
    }
    let mut values = vec![None; m * n];
    for &(line, group, replicate, value) in &cells {
        let slot = &mut values[(group - 1) * m + replicate - 1];
        if slot.is_some() {
            return Err(parse_err(
                line,
                format!("duplicate cell group={group} replicate={replicate}"),
            ));
        }
        *slot = Some(value);
    }
    if let Some(pos) = values.iter().position(Option::is_none) {
        return Err(parse_err(
            0,
            format!(
                "missing cell group={} replicate={} (panel is {m} x {n})",
                pos / m + 1,
                pos % m + 1
            ),
        ));
    }
    PanelData::from_groups(m, n, values.into_iter().map(Option::unwrap).collect())
}

/// Reads a panel CSV and, when present, its sidecar.
pub fn read_panel(csv_path: &Path) -> Result<PanelData> {
    let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let panel = parse_panel_csv(&text, csv_path)?;
    let side = sidecar_path(csv_path);
    if !side.exists() {
        return Ok(panel);
    }
    let json = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: PanelSidecar = serde_json::from_str(&json)?;
    if meta.m != panel.m() || meta.n != panel.n() {
        return Err(Error::Dimension(format!(
            "sidecar says {}x{}, CSV holds {}x{}",
            meta.m,
            meta.n,
            panel.m(),
            panel.n()
        )));
    }
    match meta.spec {
        Some(spec) => panel.with_provenance(spec, meta.seed),
        None => Ok(panel),
    }
}

pub fn contrasts_to_csv(series: &ContrastSeries) -> String {
    let mut out = String::new();
    out.push_str(CONTRAST_HEADER);
    out.push('\n');
    for t in 0..series.n() {
        for j in 0..series.rows() {
            let _ = writeln!(out, "{},{},{}", t + 1, j + 1, fmt_f64(series.get(j, t)));
        }
    }
    out
}

pub fn summaries_to_csv(summaries: &[EstimatorSummary]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.estimator,
            s.n,
            s.replications,
            fmt_f64(s.mean),
            fmt_f64(s.bias),
            fmt_f64(s.variance),
            fmt_f64(s.mse),
            fmt_f64(s.std_error_of_mean),
            s.crlb_ratio.map(fmt_f64).unwrap_or_default()
        );
    }
    out
}

pub fn sample_path_to_csv(path: &SamplePath) -> String {
    let mut out = String::new();
    out.push_str(PATH_HEADER);
    out.push('\n');
    for ((n, a), b) in path
        .n_points
        .iter()
        .zip(&path.naive_estimates)
        .zip(&path.recast_estimates)
    {
        let _ = writeln!(out, "{n},{},{}", fmt_f64(*a), fmt_f64(*b));
    }
    out
}
