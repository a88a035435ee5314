//! Run matrices and CSV output.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::engine::{run, EngineError, PacketRecord, SimMode};
use crate::metrics::{summarize, MetricsSample, RunSummary};
use crate::model::ServiceClass;
use crate::traffic::TrafficIntensity;

/// Coordinates of one run in the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub mode: SimMode,
    pub seed: u64,
    pub rho: f64,
}

impl Eq for CellKey {}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.mode
            .as_str()
            .cmp(other.mode.as_str())
            .then(self.seed.cmp(&other.seed))
            .then(self.rho.total_cmp(&other.rho))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Metrics kept from one run. The full trace is dropped unless packet
/// output was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub key: CellKey,
    pub summary: RunSummary,
    pub conservation_holds: bool,
    pub packets: Option<Vec<PacketRecord>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub key: CellKey,
    pub result: Result<CellReport, EngineError>,
}

/// Distinct cells of the matrix in output order.
pub fn cells(cfg: &ScenarioConfig) -> Vec<CellKey> {
    let mut set = BTreeSet::new();
    for &mode in &cfg.modes {
        for &seed in &cfg.seeds {
            for &rho in &cfg.rhos {
                set.insert(CellKey { mode, seed, rho });
            }
        }
    }
    set.into_iter().collect()
}

/// Runs one cell and reduces it to a report.
pub fn run_cell(cfg: &ScenarioConfig, key: CellKey) -> Result<CellReport, EngineError> {
    let rho = TrafficIntensity::new(key.rho).map_err(|e| EngineError::InvalidScenario(vec![e]))?;
    let result = run(&cfg.scenario(), key.mode, cfg.frames, key.seed, rho)?;
    Ok(CellReport {
        key,
        summary: summarize(&result, &cfg.metrics),
        conservation_holds: result.conservation_holds(),
        packets: cfg.trace.then_some(result.packets),
    })
}

/// Runs every (mode, seed, rho) cell in parallel. A failing cell reports
/// its error without affecting the others.
pub fn run_matrix(cfg: &ScenarioConfig) -> Vec<CellOutcome> {
    cells(cfg)
        .into_par_iter()
        .map(|key| CellOutcome {
            key,
            result: run_cell(cfg, key),
        })
        .collect()
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), num)
}

fn key_fields(k: &CellKey) -> [String; 3] {
    [k.mode.to_string(), k.seed.to_string(), num(k.rho)]
}

fn class_fields(s: &MetricsSample, class: ServiceClass) -> Vec<String> {
    match s.per_class.get(&class) {
        Some(c) => vec![
            opt(c.mean_delay_ms),
            opt(c.violation_rate),
            num(c.throughput_kbps),
            c.delivered.to_string(),
        ],
        None => vec!["NA".into(), "NA".into(), num(0.0), "0".into()],
    }
}

fn csv_file(path: &Path, comments: &[&str], header: &[&str]) -> io::Result<csv::Writer<BufWriter<File>>> {
    let mut out = BufWriter::new(File::create(path)?);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

const SUMMARY_DOC: &[&str] = &[
    "One row per (mode, seed, rho, class) over the post-warm-up interval.",
    "mean_delay_ms: mean departure - arrival of delivered packets; NA when none delivered.",
    "violation_rate: delivered packets later than max_latency / delivered; 0 for classes without a bound.",
    "throughput_kbps: delivered bytes * 8 / interval length.",
    "residual_backlog: packets of the class still queued at run end.",
    "utilization, jfi: cell-wide values repeated on each class row; jfi is NA when nothing was delivered.",
    "Rows sorted by mode, seed, rho, then class priority (ugs, rtps, nrtps, be).",
];

const TIMESERIES_DOC: &[&str] = &[
    "One row per (mode, seed, rho, window, class); windows are half-open [start, end) in ms.",
    "Columns as in summary.csv, computed over each window.",
];

const PACKETS_DOC: &[&str] = &[
    "One row per generated packet. departure_ms is NA for dropped or still-queued packets.",
];

fn class_order() -> [ServiceClass; 4] {
    [ServiceClass::Ugs, ServiceClass::Rtps, ServiceClass::Nrtps, ServiceClass::Be]
}

/// Writes `summary.csv`, `timeseries.csv` and, when traces were kept,
/// `packets.csv` into `dir`. Failed cells are skipped. Returns the paths
/// written.
pub fn write_outputs(reports: &[&CellReport], dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut sorted: Vec<&CellReport> = reports.to_vec();
    sorted.sort_by_key(|r| r.key);
    let mut written = Vec::new();

    let path = dir.join("summary.csv");
    let mut w = csv_file(
        &path,
        SUMMARY_DOC,
        &[
            "mode",
            "seed",
            "rho",
            "class",
            "mean_delay_ms",
            "violation_rate",
            "throughput_kbps",
            "delivered_packets",
            "residual_backlog",
            "utilization",
            "jfi",
        ],
    )?;
    for r in &sorted {
        let s = &r.summary.overall;
        for class in class_order() {
            if !s.per_class.contains_key(&class) {
                continue;
            }
            let mut row: Vec<String> = key_fields(&r.key).into();
            row.push(class.to_string());
            row.extend(class_fields(s, class));
            row.push(r.summary.residual_backlog.get(&class).copied().unwrap_or(0).to_string());
            row.push(num(s.utilization));
            row.push(opt(s.jfi));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = dir.join("timeseries.csv");
    let mut w = csv_file(
        &path,
        TIMESERIES_DOC,
        &[
            "mode",
            "seed",
            "rho",
            "window_start_ms",
            "window_end_ms",
            "class",
            "mean_delay_ms",
            "violation_rate",
            "throughput_kbps",
            "delivered_packets",
            "utilization",
            "jfi",
        ],
    )?;
    for r in &sorted {
        for s in &r.summary.windows {
            for class in class_order() {
                if !s.per_class.contains_key(&class) {
                    continue;
                }
                let mut row: Vec<String> = key_fields(&r.key).into();
                row.push(num(s.window.start_ms));
                row.push(num(s.window.end_ms));
                row.push(class.to_string());
                row.extend(class_fields(s, class));
                row.push(num(s.utilization));
                row.push(opt(s.jfi));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    written.push(path);

    if sorted.iter().any(|r| r.packets.is_some()) {
        let path = dir.join("packets.csv");
        let mut w = csv_file(
            &path,
            PACKETS_DOC,
            &[
                "mode",
                "seed",
                "rho",
                "cid",
                "class",
                "seq",
                "size",
                "arrival_ms",
                "departure_ms",
                "dropped",
            ],
        )?;
        for r in &sorted {
            let Some(packets) = &r.packets else { continue };
            let mut packets: Vec<&PacketRecord> = packets.iter().collect();
            packets.sort_by_key(|p| (p.cid, p.seq));
            for p in packets {
                let mut row: Vec<String> = key_fields(&r.key).into();
                row.extend([
                    p.cid.0.to_string(),
                    p.class.to_string(),
                    p.seq.to_string(),
                    p.size.to_string(),
                    num(p.arrival_time),
                    opt(p.departure_time),
                    p.dropped.to_string(),
                ]);
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
