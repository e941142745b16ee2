//! Reference data ingestion and experiment output.
//!
//! Weekly series use a two-column CSV with header `week,infected` and
//! 1-indexed consecutive weeks. Lines starting with `#` before the header
//! carry `key: value` annotations (`region`, `provenance`).
//!
//! An ensemble run directory holds either
//! - `ensemble.csv` (`replicate,week_1,…,week_W`), `summary.csv`
//!   (`week,min,q1,median,q3,max,iqr`) and `metadata.json`, or
//! - a single `run.json` with `metadata`, `ensemble` and `summary` keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abm::AbmConfig;
use crate::error::{Result, SimError};
use crate::monte_carlo::VariationSpec;
use crate::params::{EnsembleResult, SirParams, WeeklySeries};
use crate::stats::WeeklySummary;

pub const SERIES_HEADER: &str = "week,infected";
pub const ENSEMBLE_CSV: &str = "ensemble.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SERIES_CSV: &str = "series.csv";
pub const METADATA_JSON: &str = "metadata.json";
pub const RUN_JSON: &str = "run.json";
pub const WEEKLY_SAMPLING: &str = "end-of-week prevalence: week w reports infected at day 7*w";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Observed weekly infected counts for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSeries {
    pub region: String,
    pub series: WeeklySeries,
    pub provenance: String,
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> SimError {
    SimError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Parses a `week,infected` file. Line numbers in errors are 1-based and
/// count the header and comment lines.
pub fn load_reference(path: &Path) -> Result<ReferenceSeries> {
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let mut notes = BTreeMap::new();
    let mut values = Vec::new();
    let mut seen_header = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(note) = line.strip_prefix('#') {
            if let Some((k, v)) = note.split_once(':') {
                notes.insert(k.trim().to_lowercase(), v.trim().to_string());
            }
            continue;
        }
        if !seen_header {
            if line.replace(' ', "") != SERIES_HEADER {
                return Err(parse_err(path, line_no, format!("expected header `{SERIES_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(week), Some(count), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(parse_err(path, line_no, "expected two columns `week,infected`"));
        };
        let week: usize = week
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid week `{week}`")))?;
        let count: f64 = count
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid count `{count}`")))?;
        if week != values.len() + 1 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected week {}, found {week}", values.len() + 1),
            ));
        }
        if !(count.is_finite() && count >= 0.0) {
            return Err(parse_err(path, line_no, format!("count must be non-negative, got {count}")));
        }
        values.push(count);
    }
    if !seen_header {
        return Err(parse_err(path, 1, format!("missing header `{SERIES_HEADER}`")));
    }
    let series = WeeklySeries::new(values).map_err(|e| parse_err(path, text.lines().count(), e.to_string()))?;
    Ok(ReferenceSeries {
        region: notes.remove("region").unwrap_or_default(),
        series,
        provenance: notes.remove("provenance").unwrap_or_default(),
    })
}

/// Calibrated deterministic run rounded to whole people. Stands in for
/// observed data when none is supplied; it is not a digitization of any
/// historical record.
pub fn synthetic_reference(params: &SirParams, weeks: usize, dt: f64) -> Result<ReferenceSeries> {
    let sd = crate::sd::run_sd(params, weeks, dt)?;
    let rounded = WeeklySeries::new(sd.values().iter().map(|v| v.round()).collect())?;
    Ok(ReferenceSeries {
        region: "Osterlovsta (synthetic)".to_string(),
        series: rounded,
        provenance: format!(
            "SYNTHETIC: deterministic SIR run (N={}, c={}, p={}, D={}, I0={}, RK4 dt={dt}), end-of-week prevalence rounded to integers",
            params.population(),
            params.contact_rate(),
            params.infection_prob(),
            params.illness_duration(),
            params.initial_infected()
        ),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| SimError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

pub fn series_to_csv(series: &WeeklySeries, notes: &[(&str, &str)]) -> String {
    let mut out = String::new();
    for (k, v) in notes {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for (w, v) in series.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", w + 1, v);
    }
    out
}

pub fn save_series(series: &WeeklySeries, path: &Path) -> Result<()> {
    write_file(path, &series_to_csv(series, &[]))
}

pub fn save_reference(reference: &ReferenceSeries, path: &Path) -> Result<()> {
    let mut notes = Vec::new();
    if !reference.region.is_empty() {
        notes.push(("region", reference.region.as_str()));
    }
    if !reference.provenance.is_empty() {
        notes.push(("provenance", reference.provenance.as_str()));
    }
    write_file(path, &series_to_csv(&reference.series, &notes))
}

/// Everything needed to rerun an experiment bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// `run-sd`, `run-mc` or `run-abm`.
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub params: SirParams,
    pub weeks: usize,
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variation: Option<VariationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abm: Option<AbmConfig>,
    pub threads: usize,
    pub elapsed_seconds: f64,
    #[serde(default)]
    pub clamped_draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_variation: Option<f64>,
    pub quantile_rule: String,
    pub weekly_sampling: String,
    /// Where each default value comes from.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

pub fn save_metadata(meta: &RunMetadata, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(meta).map_err(|e| SimError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    write_file(path, &(json + "\n"))
}

pub fn load_metadata(path: &Path) -> Result<RunMetadata> {
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SimError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn ensemble_to_csv(ensemble: &EnsembleResult) -> String {
    let mut out = String::from("replicate");
    for w in 1..=ensemble.weeks() {
        let _ = write!(out, ",week_{w}");
    }
    out.push('\n');
    for (r, s) in ensemble.series().iter().enumerate() {
        let _ = write!(out, "{r}");
        for v in s.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn summary_to_csv(summary: &WeeklySummary) -> String {
    let mut out = String::from("week,min,q1,median,q3,max,iqr\n");
    for w in 0..summary.weeks() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            w + 1,
            summary.min[w],
            summary.q1[w],
            summary.median[w],
            summary.q3[w],
            summary.max[w],
            summary.iqr[w]
        );
    }
    out
}

#[derive(Serialize, Deserialize)]
struct RunJson {
    metadata: RunMetadata,
    ensemble: EnsembleResult,
    summary: WeeklySummary,
}

/// Writes the replicate matrix, summary and metadata into `dir`, returning
/// the files written.
pub fn save_ensemble(
    ensemble: &EnsembleResult,
    summary: &WeeklySummary,
    metadata: &RunMetadata,
    dir: &Path,
    format: Format,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    match format {
        Format::Csv => {
            let files = [dir.join(ENSEMBLE_CSV), dir.join(SUMMARY_CSV), dir.join(METADATA_JSON)];
            write_file(&files[0], &ensemble_to_csv(ensemble))?;
            write_file(&files[1], &summary_to_csv(summary))?;
            save_metadata(metadata, &files[2])?;
            Ok(files.to_vec())
        }
        Format::Json => {
            let path = dir.join(RUN_JSON);
            let doc = RunJson {
                metadata: metadata.clone(),
                ensemble: ensemble.clone(),
                summary: summary.clone(),
            };
            let json = serde_json::to_string_pretty(&doc).map_err(|e| SimError::Json {
                path: path.clone(),
                source: e,
            })?;
            write_file(&path, &(json + "\n"))?;
            Ok(vec![path])
        }
    }
}

/// Writes a single deterministic series plus metadata into `dir`.
pub fn save_sd_run(series: &WeeklySeries, metadata: &RunMetadata, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    match format {
        Format::Csv => {
            let files = [dir.join(SERIES_CSV), dir.join(METADATA_JSON)];
            save_series(series, &files[0])?;
            save_metadata(metadata, &files[1])?;
            Ok(files.to_vec())
        }
        Format::Json => {
            let path = dir.join(RUN_JSON);
            let doc = serde_json::json!({ "metadata": metadata, "series": series });
            let json = serde_json::to_string_pretty(&doc).map_err(|e| SimError::Json {
                path: path.clone(),
                source: e,
            })?;
            write_file(&path, &(json + "\n"))?;
            Ok(vec![path])
        }
    }
}

pub fn load_ensemble_csv(path: &Path) -> Result<EnsembleResult> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        let values = rec
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        rows.push(WeeklySeries::new(values).map_err(|e| parse_err(path, line, e.to_string()))?);
    }
    EnsembleResult::new(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> SimError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SimError::io(path, io),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

/// What a run directory contains.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Series {
        series: WeeklySeries,
        metadata: RunMetadata,
    },
    Ensemble {
        ensemble: EnsembleResult,
        metadata: RunMetadata,
    },
}

impl RunOutput {
    pub fn metadata(&self) -> &RunMetadata {
        match self {
            RunOutput::Series { metadata, .. } | RunOutput::Ensemble { metadata, .. } => metadata,
        }
    }
}

/// Loads a run directory written by [`save_ensemble`] or [`save_sd_run`].
pub fn load_run(dir: &Path) -> Result<RunOutput> {
    let json_path = dir.join(RUN_JSON);
    if json_path.exists() {
        let text = fs::read_to_string(&json_path).map_err(|e| SimError::io(&json_path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| SimError::Json {
            path: json_path.clone(),
            source: e,
        })?;
        let json_err = |e| SimError::Json {
            path: json_path.clone(),
            source: e,
        };
        let metadata: RunMetadata = serde_json::from_value(value["metadata"].clone()).map_err(json_err)?;
        if value.get("series").is_some() {
            let series = serde_json::from_value(value["series"].clone()).map_err(json_err)?;
            return Ok(RunOutput::Series { series, metadata });
        }
        let ensemble = serde_json::from_value(value["ensemble"].clone()).map_err(json_err)?;
        return Ok(RunOutput::Ensemble { ensemble, metadata });
    }
    let metadata = load_metadata(&dir.join(METADATA_JSON))?;
    let series_path = dir.join(SERIES_CSV);
    if series_path.exists() {
        let series = load_reference(&series_path)?.series;
        return Ok(RunOutput::Series { series, metadata });
    }
    let ensemble = load_ensemble_csv(&dir.join(ENSEMBLE_CSV))?;
    Ok(RunOutput::Ensemble { ensemble, metadata })
}
