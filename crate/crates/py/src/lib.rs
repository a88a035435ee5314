//! Python module `uplink_sched`: parse scenarios, run the simulator and
//! call the allocator and metric helpers directly.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use uplink_sched::bs_alloc::{self, BandwidthRequest};
use uplink_sched::cli::{run_cell, CellReport};
use uplink_sched::config::{self, ConfigError};
use uplink_sched::metrics::{self, MetricsSample};
use uplink_sched::{Connection, ConnectionId, FrameConfig, ScenarioConfig, SimMode};

fn config_err(errors: Vec<ConfigError>) -> PyErr {
    let text: Vec<String> = errors.iter().map(ToString::to_string).collect();
    PyValueError::new_err(text.join("\n"))
}

fn parse_mode(mode: &str) -> PyResult<SimMode> {
    mode.parse().map_err(|e| PyValueError::new_err(format!("{e}")))
}

/// A parsed scenario file.
#[pyclass(name = "Config", module = "uplink_sched")]
struct PyConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        config::parse_config(text)
            .map(|inner| PyConfig { inner })
            .map_err(config_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Self::new(&text)
    }

    /// The built-in four-station scenario.
    #[staticmethod]
    fn reference_scenario() -> Self {
        PyConfig {
            inner: config::reference_scenario(),
        }
    }

    fn to_text(&self) -> String {
        config::serialize(&self.inner)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn frames(&self) -> u64 {
        self.inner.frames
    }

    #[setter]
    fn set_frames(&mut self, frames: u64) -> PyResult<()> {
        if frames == 0 {
            return Err(PyValueError::new_err("frames must be positive"));
        }
        self.inner.frames = frames;
        Ok(())
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, seeds: Vec<u64>) {
        self.inner.seeds = seeds;
    }

    #[getter]
    fn rhos(&self) -> Vec<f64> {
        self.inner.rhos.clone()
    }

    #[setter]
    fn set_rhos(&mut self, rhos: Vec<f64>) {
        self.inner.rhos = rhos;
    }

    #[getter]
    fn modes(&self) -> Vec<String> {
        self.inner.modes.iter().map(ToString::to_string).collect()
    }

    #[setter]
    fn set_modes(&mut self, modes: Vec<String>) -> PyResult<()> {
        self.inner.modes = modes.iter().map(|m| parse_mode(m)).collect::<PyResult<_>>()?;
        Ok(())
    }

    #[getter]
    fn uplink_capacity(&self) -> u64 {
        self.inner.frame.uplink_capacity
    }

    #[getter]
    fn frame_duration_ms(&self) -> f64 {
        self.inner.frame.frame_duration_ms
    }

    #[getter]
    fn station_count(&self) -> usize {
        self.inner.station_count()
    }

    /// CIDs in ascending order.
    #[getter]
    fn connections(&self) -> Vec<u32> {
        self.inner.connections.iter().map(|c| c.cid.0).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(name={:?}, stations={}, connections={}, frames={})",
            self.inner.name,
            self.inner.station_count(),
            self.inner.connections.len(),
            self.inner.frames
        )
    }
}

fn sample_dict<'py>(py: Python<'py>, s: &MetricsSample) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("start_ms", s.window.start_ms)?;
    d.set_item("end_ms", s.window.end_ms)?;
    d.set_item("utilization", s.utilization)?;
    d.set_item("jfi", s.jfi)?;
    let classes = PyDict::new(py);
    for (class, c) in &s.per_class {
        let cd = PyDict::new(py);
        cd.set_item("mean_delay_ms", c.mean_delay_ms)?;
        cd.set_item("violation_rate", c.violation_rate)?;
        cd.set_item("throughput_kbps", c.throughput_kbps)?;
        cd.set_item("delivered", c.delivered)?;
        classes.set_item(class.to_string(), cd)?;
    }
    d.set_item("classes", classes)?;
    let conns = PyDict::new(py);
    for (cid, kbps) in &s.per_connection_kbps {
        conns.set_item(cid.0, kbps)?;
    }
    d.set_item("connection_kbps", conns)?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &CellReport) -> PyResult<Bound<'py, PyDict>> {
    let d = sample_dict(py, &r.summary.overall)?;
    d.set_item("mode", r.key.mode.to_string())?;
    d.set_item("seed", r.key.seed)?;
    d.set_item("rho", r.key.rho)?;
    d.set_item("conservation_holds", r.conservation_holds)?;
    let backlog = PyDict::new(py);
    for (class, n) in &r.summary.residual_backlog {
        backlog.set_item(class.to_string(), n)?;
    }
    d.set_item("residual_backlog", backlog)?;
    let windows = r
        .summary
        .windows
        .iter()
        .map(|w| sample_dict(py, w))
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("windows", windows)?;
    Ok(d)
}

fn cell(cfg: &ScenarioConfig, mode: &str, seed: u64, rho: f64) -> PyResult<CellReport> {
    let key = uplink_sched::CellKey {
        mode: parse_mode(mode)?,
        seed,
        rho,
    };
    run_cell(cfg, key).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs one cell and returns its post-warm-up summary as a dict.
#[pyfunction]
#[pyo3(signature = (config, mode, seed = 1, rho = 1.0, frames = None))]
fn run<'py>(
    py: Python<'py>,
    config: &PyConfig,
    mode: &str,
    seed: u64,
    rho: f64,
    frames: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = config.inner.clone();
    if let Some(f) = frames {
        cfg.frames = f;
    }
    let report = py.detach(|| cell(&cfg, mode, seed, rho))?;
    report_dict(py, &report)
}

/// Runs every (mode, seed, rho) cell of `config`. With `out_dir` the CSV
/// files are written there too.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None))]
fn run_matrix<'py>(py: Python<'py>, config: &PyConfig, out_dir: Option<&str>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.inner.clone();
    let outcomes = py.detach(|| uplink_sched::run_matrix(&cfg));
    let mut reports = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        match &o.result {
            Ok(r) => reports.push(r),
            Err(e) => return Err(PyValueError::new_err(format!("{} seed {} rho {}: {e}", o.key.mode, o.key.seed, o.key.rho))),
        }
    }
    if let Some(dir) = out_dir {
        uplink_sched::write_outputs(&reports, Path::new(dir)).map_err(|e| PyIOError::new_err(format!("{dir}: {e}")))?;
    }
    reports.into_iter().map(|r| report_dict(py, r)).collect()
}

/// Two-phase allocation of one frame for the connections of `config`.
/// `requests` maps CID to backlog bytes; returns CID to granted bytes.
#[pyfunction]
fn allocate(config: &PyConfig, requests: BTreeMap<u32, u64>) -> PyResult<BTreeMap<u32, u64>> {
    let cfg = &config.inner;
    let conns: Vec<Connection> = cfg
        .connections
        .iter()
        .map(|s| Connection::new(s.cid, s.ss_id, s.class, s.qos))
        .collect();
    let reqs: Vec<BandwidthRequest> = requests
        .iter()
        .map(|(&cid, &requested)| BandwidthRequest {
            cid: ConnectionId(cid),
            requested,
            issued_frame: 0,
        })
        .collect();
    let result = bs_alloc::allocate(&reqs, &conns, &cfg.frame).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(result.allocated.into_iter().map(|(cid, b)| (cid.0, b)).collect())
}

/// Whole bytes carried per frame at `rate_kbps`.
#[pyfunction]
#[pyo3(signature = (rate_kbps, frame_duration_ms = 10.0))]
fn bytes_per_frame(rate_kbps: f64, frame_duration_ms: f64) -> u64 {
    let frame = FrameConfig {
        frame_duration_ms,
        ..FrameConfig::default()
    };
    uplink_sched::bytes_per_frame(rate_kbps, &frame)
}

/// Jain's fairness index; None for an empty or all-zero input.
#[pyfunction]
fn jain_index(rates: Vec<f64>) -> Option<f64> {
    metrics::jain_index(&rates)
}

#[pymodule]
#[pyo3(name = "uplink_sched")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(bytes_per_frame, m)?)?;
    m.add_function(wrap_pyfunction!(jain_index, m)?)?;
    Ok(())
}
