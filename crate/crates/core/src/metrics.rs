//! Evaluation metrics over a [`RunResult`]: delay, delay-violation rate,
//! throughput, bandwidth utilization and Jain's fairness index.

use std::collections::BTreeMap;

use crate::engine::{FrameRecord, PacketRecord, RunResult};
use crate::model::{ConnectionId, ServiceClass};

/// Half-open interval `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start_ms: f64,
    pub end_ms: f64,
}

impl Window {
    pub fn new(start_ms: f64, end_ms: f64) -> Self {
        Window { start_ms, end_ms }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_ms && t < self.end_ms
    }

    pub fn length_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStats {
    pub mean_delay_ms: f64,
    pub violation_rate: f64,
    pub delivered: u64,
}

/// Mean delay and violation rate of packets that departed inside `window`.
///
/// A packet violates when its delay exceeds its connection's maximum
/// latency; packets without a latency bound never violate. `None` when
/// nothing was delivered.
pub fn delay_stats(
    records: &[PacketRecord],
    window: Window,
    class_filter: Option<ServiceClass>,
) -> Option<DelayStats> {
    let mut n = 0u64;
    let mut sum = 0.0;
    let mut late = 0u64;
    for p in records {
        if class_filter.is_some_and(|c| c != p.class) {
            continue;
        }
        let Some(dep) = p.departure_time else { continue };
        if !window.contains(dep) {
            continue;
        }
        let delay = dep - p.arrival_time;
        n += 1;
        sum += delay;
        if p.max_latency.is_some_and(|l| delay > l) {
            late += 1;
        }
    }
    (n > 0).then(|| DelayStats {
        mean_delay_ms: sum / n as f64,
        violation_rate: late as f64 / n as f64,
        delivered: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    Class,
    Connection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKey {
    Class(ServiceClass),
    Connection(ConnectionId),
}

/// Delivered kbit/s per group member; only members with deliveries appear.
pub fn throughput(records: &[PacketRecord], window: Window, group: Grouping) -> BTreeMap<GroupKey, f64> {
    let mut bytes: BTreeMap<GroupKey, u64> = BTreeMap::new();
    for p in records {
        let Some(dep) = p.departure_time else { continue };
        if !window.contains(dep) {
            continue;
        }
        let key = match group {
            Grouping::Class => GroupKey::Class(p.class),
            Grouping::Connection => GroupKey::Connection(p.cid),
        };
        *bytes.entry(key).or_insert(0) += u64::from(p.size);
    }
    let len = window.length_ms();
    bytes
        .into_iter()
        // bits per ms is kbit/s
        .map(|(k, b)| (k, if len > 0.0 { b as f64 * 8.0 / len } else { 0.0 }))
        .collect()
}

/// Mean of used/capacity over frames starting inside the window.
pub fn utilization(frames: &[FrameRecord], window: Window) -> f64 {
    let mut n = 0u64;
    let mut sum = 0.0;
    for f in frames.iter().filter(|f| window.contains(f.start_ms)) {
        n += 1;
        sum += f.used as f64 / f.capacity as f64;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// (Σr)² / (n·Σr²); `None` for an empty or all-zero input.
pub fn jain_index(rates: &[f64]) -> Option<f64> {
    if rates.is_empty() {
        return None;
    }
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|r| r * r).sum();
    if sq <= 0.0 {
        return None;
    }
    Some(sum * sum / (rates.len() as f64 * sq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JfiBasis {
    /// One rate per service class present in the scenario.
    Class,
    /// One rate per connection.
    Connection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub window_ms: f64,
    pub warmup_fraction: f64,
    pub jfi_basis: JfiBasis,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            window_ms: 1000.0,
            warmup_fraction: 0.1,
            jfi_basis: JfiBasis::Class,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub mean_delay_ms: Option<f64>,
    pub violation_rate: Option<f64>,
    pub throughput_kbps: f64,
    pub delivered: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSample {
    pub window: Window,
    pub per_class: BTreeMap<ServiceClass, ClassStats>,
    pub per_connection_kbps: BTreeMap<ConnectionId, f64>,
    pub utilization: f64,
    pub jfi: Option<f64>,
}

fn jfi_for(
    run: &RunResult,
    per_class: &BTreeMap<ServiceClass, ClassStats>,
    per_conn: &BTreeMap<ConnectionId, f64>,
    basis: JfiBasis,
) -> Option<f64> {
    let rates: Vec<f64> = match basis {
        JfiBasis::Class => per_class.values().map(|s| s.throughput_kbps).collect(),
        JfiBasis::Connection => run
            .connections
            .iter()
            .map(|c| per_conn.get(&c.cid).copied().unwrap_or(0.0))
            .collect(),
    };
    jain_index(&rates)
}

/// All metrics for one window. Every class present in the run gets an
/// entry, even when it delivered nothing.
pub fn sample(run: &RunResult, window: Window, basis: JfiBasis) -> MetricsSample {
    let by_class = throughput(&run.packets, window, Grouping::Class);
    let mut classes: Vec<ServiceClass> = run.connections.iter().map(|c| c.class).collect();
    classes.sort();
    classes.dedup();
    let per_class: BTreeMap<ServiceClass, ClassStats> = classes
        .into_iter()
        .map(|class| {
            let d = delay_stats(&run.packets, window, Some(class));
            let stats = ClassStats {
                mean_delay_ms: d.map(|d| d.mean_delay_ms),
                violation_rate: d.map(|d| d.violation_rate),
                throughput_kbps: by_class.get(&GroupKey::Class(class)).copied().unwrap_or(0.0),
                delivered: d.map_or(0, |d| d.delivered),
            };
            (class, stats)
        })
        .collect();
    let per_connection_kbps: BTreeMap<ConnectionId, f64> = throughput(&run.packets, window, Grouping::Connection)
        .into_iter()
        .filter_map(|(k, v)| match k {
            GroupKey::Connection(cid) => Some((cid, v)),
            GroupKey::Class(_) => None,
        })
        .collect();
    let jfi = jfi_for(run, &per_class, &per_connection_kbps, basis);
    MetricsSample {
        window,
        per_class,
        per_connection_kbps,
        utilization: utilization(&run.frames, window),
        jfi,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Whole post-warm-up interval.
    pub overall: MetricsSample,
    pub windows: Vec<MetricsSample>,
    /// Packets still queued at the end of the run, per class.
    pub residual_backlog: BTreeMap<ServiceClass, u64>,
}

/// Post-warm-up summary plus consecutive windows. Warm-up is rounded down
/// to whole frames; a trailing partial window is dropped.
pub fn summarize(run: &RunResult, cfg: &MetricsConfig) -> RunSummary {
    let frame_ms = run.frame.frame_duration_ms;
    let total = run.frames.len() as u64;
    let warm_frames = (total as f64 * cfg.warmup_fraction).floor() as u64;
    let start = warm_frames as f64 * frame_ms;
    let end = run.duration_ms();
    let overall = sample(run, Window::new(start, end), cfg.jfi_basis);

    let frames_per_window = ((cfg.window_ms / frame_ms).round() as u64).max(1);
    let mut windows = Vec::new();
    let mut f = warm_frames;
    while f + frames_per_window <= total {
        let w = Window::new(f as f64 * frame_ms, (f + frames_per_window) as f64 * frame_ms);
        windows.push(sample(run, w, cfg.jfi_basis));
        f += frames_per_window;
    }

    let mut residual_backlog = BTreeMap::new();
    for p in run.backlog() {
        *residual_backlog.entry(p.class).or_insert(0) += 1;
    }
    RunSummary {
        overall,
        windows,
        residual_backlog,
    }
}
