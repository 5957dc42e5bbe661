//! Result files: one CSV row per record, a JSON summary and plot-ready
//! two-column data per scheme.
//!
//! CSV columns, in order: `scenario_id, scheme, axis, axis_value,
//! sum_rate_approx, sum_rate_mc, mc_stderr, rate_k_m, leakage_w, iterations,
//! converged, wall_ms, repetition, seed, power, violation, error`.
//! `rate_k_m` joins the per-user rates `k0m0;k0m1;k1m0;...` and `power` holds
//! the allocation `[k][m][n]` as JSON.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocation::PowerAllocation;
use crate::error::{Error, Result};
use crate::scenario::config::{ScenarioConfig, Scheme, SweepAxis};
use crate::scenario::sweep::RunRecord;

pub const CSV_COLUMNS: [&str; 17] = [
    "scenario_id",
    "scheme",
    "axis",
    "axis_value",
    "sum_rate_approx",
    "sum_rate_mc",
    "mc_stderr",
    "rate_k_m",
    "leakage_w",
    "iterations",
    "converged",
    "wall_ms",
    "repetition",
    "seed",
    "power",
    "violation",
    "error",
];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    scenario_id: String,
    scheme: Scheme,
    axis: Option<SweepAxis>,
    axis_value: Option<f64>,
    sum_rate_approx: f64,
    sum_rate_mc: f64,
    mc_stderr: f64,
    rate_k_m: String,
    leakage_w: f64,
    iterations: usize,
    converged: bool,
    wall_ms: f64,
    repetition: usize,
    seed: u64,
    power: String,
    violation: Option<String>,
    error: Option<String>,
}

fn join_rates(rates: &[[f64; 2]]) -> String {
    rates.iter().flatten().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn split_rates(text: &str) -> Result<Vec<[f64; 2]>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let values = text
        .split(';')
        .map(|v| v.parse::<f64>().map_err(|e| Error::Domain(format!("bad rate '{v}': {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() % 2 != 0 {
        return Err(Error::Domain(format!("rate_k_m has an odd number of entries: {text}")));
    }
    Ok(values.chunks(2).map(|c| [c[0], c[1]]).collect())
}

impl CsvRow {
    fn from_record(r: &RunRecord) -> Result<Self> {
        Ok(CsvRow {
            scenario_id: r.scenario_id.clone(),
            scheme: r.scheme,
            axis: r.axis,
            axis_value: r.axis_value,
            sum_rate_approx: r.sum_rate_approx,
            sum_rate_mc: r.sum_rate_mc,
            mc_stderr: r.mc_stderr,
            rate_k_m: join_rates(&r.rates),
            leakage_w: r.leakage_w,
            iterations: r.iterations,
            converged: r.converged,
            wall_ms: r.wall_ms,
            repetition: r.repetition,
            seed: r.seed,
            power: match &r.power {
                Some(p) => serde_json::to_string(&p.p)?,
                None => String::new(),
            },
            violation: r.violation.clone(),
            error: r.error.clone(),
        })
    }

    fn into_record(self) -> Result<RunRecord> {
        let power = if self.power.is_empty() {
            None
        } else {
            Some(PowerAllocation { p: serde_json::from_str(&self.power)? })
        };
        Ok(RunRecord {
            rates: split_rates(&self.rate_k_m)?,
            scenario_id: self.scenario_id,
            scheme: self.scheme,
            axis: self.axis,
            axis_value: self.axis_value,
            repetition: self.repetition,
            seed: self.seed,
            sum_rate_approx: self.sum_rate_approx,
            sum_rate_mc: self.sum_rate_mc,
            mc_stderr: self.mc_stderr,
            leakage_w: self.leakage_w,
            iterations: self.iterations,
            converged: self.converged,
            wall_ms: self.wall_ms,
            power,
            violation: self.violation,
            error: self.error,
        })
    }
}

pub fn write_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(CSV_COLUMNS)?;
    for r in records {
        writer.serialize(CsvRow::from_record(r)?)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Domain(format!("unexpected CSV header: {}", header.join(","))));
    }
    reader.deserialize::<CsvRow>().map(|row| row?.into_record()).collect()
}

/// Aggregate of one (scheme, axis value) cell over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub scheme: Scheme,
    pub axis_value: Option<f64>,
    pub runs: usize,
    pub failures: usize,
    pub mean_sum_rate_approx: Option<f64>,
    pub mean_sum_rate_mc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
    pub axis: Option<SweepAxis>,
    pub records: usize,
    pub failures: usize,
    pub violations: usize,
    pub points: Vec<PointSummary>,
}

/// SHA-256 of the config's canonical TOML form.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let digest = Sha256::digest(config.to_toml_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl Summary {
    pub fn new(config: &ScenarioConfig, seed: u64, records: &[RunRecord]) -> Self {
        // Group in first-appearance order, which follows (axis value, scheme).
        let mut order: Vec<(Scheme, Option<u64>)> = Vec::new();
        let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            let key = (r.scheme, r.axis_value.map(f64::to_bits));
            let slot = order.iter().position(|k| *k == key).unwrap_or_else(|| {
                order.push(key);
                order.len() - 1
            });
            groups.entry(slot).or_default().push(r);
        }
        let points = groups
            .into_iter()
            .map(|(slot, rs)| {
                let ok = || rs.iter().filter(|r| r.error.is_none());
                PointSummary {
                    scheme: order[slot].0,
                    axis_value: rs[0].axis_value,
                    runs: rs.len(),
                    failures: rs.len() - ok().count(),
                    mean_sum_rate_approx: mean(ok().map(|r| r.sum_rate_approx)),
                    mean_sum_rate_mc: mean(ok().map(|r| r.sum_rate_mc)),
                }
            })
            .collect();
        Summary {
            scenario: config.name.clone(),
            config_sha256: config_hash(config),
            seed,
            axis: records.first().and_then(|r| r.axis),
            records: records.len(),
            failures: records.iter().filter(|r| r.error.is_some()).count(),
            violations: records.iter().filter(|r| r.violation.is_some()).count(),
            points,
        }
    }
}

/// Writes `<stem>_<scheme>.dat` files with `axis_value mean_sum_rate_approx
/// mean_sum_rate_mc` per line, skipping cells where every run failed.
pub fn write_plot_data(summary: &Summary, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for scheme in Scheme::ALL {
        let rows: Vec<&PointSummary> = summary.points.iter().filter(|p| p.scheme == scheme).collect();
        if rows.is_empty() {
            continue;
        }
        let path = dir.as_ref().join(format!("{stem}_{scheme}.dat"));
        let mut out = File::create(&path)?;
        writeln!(out, "# {} sum_rate_approx sum_rate_mc", summary.axis.map_or("point", |a| a.tag()))?;
        for p in rows {
            if let (Some(a), Some(m)) = (p.mean_sum_rate_approx, p.mean_sum_rate_mc) {
                writeln!(out, "{} {a} {m}", p.axis_value.unwrap_or(0.0))?;
            }
        }
        files.push(path);
    }
    Ok(files)
}

/// Writes the CSV at `csv_path`, the summary next to it with a `.json`
/// extension and, for sweeps, the plot data files. Returns every path
/// written.
pub fn emit_results(records: &[RunRecord], summary: &Summary, csv_path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let csv_path = csv_path.as_ref();
    write_csv(records, csv_path)?;
    let json_path = csv_path.with_extension("json");
    let mut json = serde_json::to_string_pretty(summary)?;
    json.push('\n');
    std::fs::write(&json_path, json)?;
    let mut files = vec![csv_path.to_path_buf(), json_path];
    if summary.axis.is_some() {
        let dir = csv_path.parent().unwrap_or(Path::new("."));
        let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
        files.extend(write_plot_data(summary, dir, stem)?);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::default_scenario;

    fn record(scheme: Scheme, value: f64) -> RunRecord {
        RunRecord {
            scenario_id: "default-p0-r0".into(),
            scheme,
            axis: Some(SweepAxis::PMax),
            axis_value: Some(value),
            repetition: 0,
            seed: 9,
            sum_rate_approx: 10.25,
            sum_rate_mc: 10.1,
            mc_stderr: 0.01,
            rates: vec![[1.5, 0.5], [2.0 / 3.0, 0.1 + 0.2]],
            leakage_w: 7.9e-14,
            iterations: 3,
            converged: true,
            wall_ms: 12.5,
            power: Some(PowerAllocation { p: vec![[vec![1.0, 2.0], vec![0.3, 1e-7]], [vec![4.0], vec![5.0]]] }),
            violation: None,
            error: Some("note, with \"quotes\"".into()),
        }
    }

    #[test]
    fn empty_records_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim_end(), CSV_COLUMNS.join(","));
        assert!(read_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut single = record(Scheme::OmaSca, 0.0);
        single.axis = None;
        single.axis_value = None;
        single.power = None;
        single.rates.clear();
        let records = vec![record(Scheme::ScaNoma, 25.0), record(Scheme::EqualPowerNoma, 50.0), single];
        write_csv(&records, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), records);
    }

    #[test]
    fn summary_groups_and_emits() {
        let dir = tempfile::tempdir().unwrap();
        let config = default_scenario();
        let mut failed = record(Scheme::ScaNoma, 50.0);
        failed.repetition = 1;
        let mut ok = record(Scheme::ScaNoma, 50.0);
        ok.error = None;
        let records = vec![record(Scheme::ScaNoma, 25.0), ok, failed];
        let summary = Summary::new(&config, 9, &records);
        assert_eq!(summary.points.len(), 2);
        assert_eq!(summary.points[1].runs, 2);
        assert_eq!(summary.points[1].failures, 1);
        assert_eq!(summary.config_sha256.len(), 64);
        let files = emit_results(&records, &summary, dir.path().join("sweep.csv")).unwrap();
        assert_eq!(files.len(), 3);
        let dat = std::fs::read_to_string(dir.path().join("sweep_sca_noma.dat")).unwrap();
        assert_eq!(dat.lines().count(), 2);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_csv(&[], "/nonexistent-dir/x.csv").unwrap_err();
        assert!(matches!(err, Error::Csv(_) | Error::Io(_)));
    }
}
