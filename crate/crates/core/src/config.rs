//! Scenario files.
//!
//! The format is line oriented. `#` starts a comment, blank lines are
//! ignored, `[scenario]` holds run settings and each `[connection CID]`
//! section describes one uplink flow:
//!
//! ```text
//! [scenario]
//! name = demo
//! uplink_capacity = 12000
//! modes = ss1, gpc
//! seeds = 1, 2, 3
//! rho = 0.2:1.4:0.2
//!
//! [connection 1]
//! ss = 0
//! class = rtps
//! max_latency = 20
//! traffic = onoff
//! ```
//!
//! Omitted QoS fields take the class's reference contract values and an
//! omitted traffic model takes the class default from
//! [`default_models`]. The literal `none` clears an optional QoS field.
//! Unknown keys, repeated keys and unknown sections are errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use crate::engine::{ConnectionSpec, Scenario, SimMode};
use crate::metrics::{JfiBasis, MetricsConfig};
use crate::model::{validate_scenario, Connection, ConnectionId, FrameConfig, QosParams, ServiceClass, Violation};
use crate::traffic::{default_models, PacketSize, TrafficKind, TrafficModel};

/// Text of the built-in four-station scenario.
pub const REFERENCE_SCENARIO: &str = include_str!("../scenarios/reference.conf");

/// Everything needed to run and report one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub frame: FrameConfig,
    /// Sorted by CID.
    pub connections: Vec<ConnectionSpec>,
    pub modes: Vec<SimMode>,
    pub frames: u64,
    pub seeds: Vec<u64>,
    pub rhos: Vec<f64>,
    pub metrics: MetricsConfig,
    pub drop_expired: bool,
    pub output_dir: Option<String>,
    /// Emit a per-packet trace next to the summaries.
    pub trace: bool,
}

impl ScenarioConfig {
    pub fn scenario(&self) -> Scenario {
        Scenario {
            frame: self.frame,
            connections: self.connections.clone(),
            drop_expired: self.drop_expired,
        }
    }

    /// Number of distinct subscriber stations.
    pub fn station_count(&self) -> usize {
        self.connections.iter().map(|c| c.ss_id).collect::<BTreeSet<_>>().len()
    }
}

/// One parse or validation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, when the problem has a location.
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, field: Option<&str>, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            field: field.map(str::to_owned),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            field: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug)]
struct Section {
    line: usize,
    cid: Option<u32>,
    entries: BTreeMap<String, Entry>,
}

const SCENARIO_KEYS: &[&str] = &[
    "name",
    "frame_duration_ms",
    "uplink_capacity",
    "channel_bandwidth_mhz",
    "modes",
    "frames",
    "seeds",
    "rho",
    "window_ms",
    "warmup_fraction",
    "jfi_basis",
    "drop_expired",
    "trace",
    "output_dir",
];

const CONNECTION_KEYS: &[&str] = &[
    "ss",
    "class",
    "max_sustained_rate",
    "min_reserved_rate",
    "max_latency",
    "weight",
    "traffic",
    "mean_rate",
    "packet_size",
    "on_ms",
    "off_ms",
    "bulk_size",
];

fn split_sections(text: &str, errors: &mut Vec<ConfigError>) -> (Option<Section>, Vec<Section>) {
    let mut scenario: Option<Section> = None;
    let mut connections: Vec<Section> = Vec::new();
    // true = scenario section, false = last connection
    let mut current: Option<bool> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let Some(header) = header.strip_suffix(']') else {
                errors.push(ConfigError::at(line, None, "unterminated section header"));
                current = None;
                continue;
            };
            let mut words = header.split_whitespace();
            match (words.next(), words.next(), words.next()) {
                (Some("scenario"), None, None) => {
                    if scenario.is_some() {
                        errors.push(ConfigError::at(line, None, "duplicate [scenario] section"));
                        current = None;
                    } else {
                        scenario = Some(Section {
                            line,
                            cid: None,
                            entries: BTreeMap::new(),
                        });
                        current = Some(true);
                    }
                }
                (Some("connection"), Some(id), None) => match id.parse::<u32>() {
                    Ok(cid) => {
                        connections.push(Section {
                            line,
                            cid: Some(cid),
                            entries: BTreeMap::new(),
                        });
                        current = Some(false);
                    }
                    Err(_) => {
                        errors.push(ConfigError::at(line, None, format!("bad connection id `{id}`")));
                        current = None;
                    }
                },
                _ => {
                    errors.push(ConfigError::at(line, None, format!("unknown section [{header}]")));
                    current = None;
                }
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(ConfigError::at(line, None, format!("expected `key = value`, got `{content}`")));
            continue;
        };
        let key = key.trim().to_owned();
        let value = value.trim().to_owned();
        let section = match current {
            Some(true) => scenario.as_mut(),
            Some(false) => connections.last_mut(),
            None => None,
        };
        let Some(section) = section else {
            errors.push(ConfigError::at(line, Some(&key), "key outside of a section"));
            continue;
        };
        let allowed = if section.cid.is_some() { CONNECTION_KEYS } else { SCENARIO_KEYS };
        if !allowed.contains(&key.as_str()) {
            errors.push(ConfigError::at(line, Some(&key), "unknown key"));
            continue;
        }
        if section.entries.contains_key(&key) {
            errors.push(ConfigError::at(line, Some(&key), "key given more than once"));
            continue;
        }
        section.entries.insert(key, Entry { line, value });
    }
    (scenario, connections)
}

fn parse_value<T: std::str::FromStr>(section: &Section, key: &str, errors: &mut Vec<ConfigError>) -> Option<T>
where
    T::Err: fmt::Display,
{
    let e = section.entries.get(key)?;
    match e.value.parse::<T>() {
        Ok(v) => Some(v),
        Err(err) => {
            errors.push(ConfigError::at(e.line, Some(key), format!("bad value `{}`: {err}", e.value)));
            None
        }
    }
}

fn parse_list<T, F>(section: &Section, key: &str, errors: &mut Vec<ConfigError>, mut f: F) -> Option<Vec<T>>
where
    F: FnMut(&str) -> Result<T, String>,
{
    let e = section.entries.get(key)?;
    let mut out = Vec::new();
    for item in e.value.split(',') {
        match f(item.trim()) {
            Ok(v) => out.push(v),
            Err(msg) => {
                errors.push(ConfigError::at(e.line, Some(key), msg));
                return None;
            }
        }
    }
    if out.is_empty() {
        errors.push(ConfigError::at(e.line, Some(key), "empty list"));
        return None;
    }
    Some(out)
}

/// Parses a comma list of seeds; `a..b` is an inclusive range.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed `{a}`"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed `{b}`"))?;
            if a > b {
                return Err(format!("seed range {a}..{b} is reversed"));
            }
            out.extend(a..=b);
        } else {
            out.push(item.parse().map_err(|_| format!("bad seed `{item}`"))?);
        }
    }
    if out.is_empty() {
        return Err("no seeds".into());
    }
    Ok(out)
}

/// Parses a comma list of intensities; `start:stop:step` expands to an
/// inclusive arithmetic sweep.
pub fn parse_rhos(text: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| -> Result<f64, String> {
        let v: f64 = t.trim().parse().map_err(|_| format!("bad rho `{}`", t.trim()))?;
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("rho must be >= 0 (got {v})"))
        }
    };
    let mut out = Vec::new();
    for item in text.split(',') {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [one] => out.push(num(one)?),
            [start, stop, step] => {
                let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
                if step <= 0.0 {
                    return Err("rho step must be > 0".into());
                }
                let n = ((stop - start) / step + 1e-9).floor();
                if n < 0.0 {
                    return Err(format!("rho sweep {start}:{stop}:{step} is empty"));
                }
                for i in 0..=(n as u64) {
                    // Round away accumulated binary error: 0.2*3 → 0.6.
                    let v = start + i as f64 * step;
                    out.push((v * 1e9).round() / 1e9);
                }
            }
            _ => return Err(format!("bad rho item `{item}`")),
        }
    }
    if out.is_empty() {
        return Err("no rho values".into());
    }
    Ok(out)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn parse_basis(s: &str) -> Result<JfiBasis, String> {
    match s.to_ascii_lowercase().as_str() {
        "class" => Ok(JfiBasis::Class),
        "connection" => Ok(JfiBasis::Connection),
        _ => Err(format!("expected class or connection, got `{s}`")),
    }
}

fn basis_str(b: JfiBasis) -> &'static str {
    match b {
        JfiBasis::Class => "class",
        JfiBasis::Connection => "connection",
    }
}

fn apply_scenario(section: &Section, cfg: &mut ScenarioConfig, errors: &mut Vec<ConfigError>) {
    let before = errors.len();
    if let Some(e) = section.entries.get("name") {
        cfg.name = e.value.clone();
    }
    if let Some(v) = parse_value::<f64>(section, "frame_duration_ms", errors) {
        cfg.frame.frame_duration_ms = v;
    }
    if let Some(v) = parse_value::<u64>(section, "uplink_capacity", errors) {
        cfg.frame.uplink_capacity = v;
    }
    if let Some(v) = parse_value::<f64>(section, "channel_bandwidth_mhz", errors) {
        cfg.frame.channel_bandwidth_mhz = v;
    }
    if let Some(v) = parse_list(section, "modes", errors, |s| s.parse::<SimMode>()) {
        cfg.modes = v;
    }
    if let Some(v) = parse_value::<u64>(section, "frames", errors) {
        cfg.frames = v;
    }
    if let Some(e) = section.entries.get("seeds") {
        match parse_seeds(&e.value) {
            Ok(v) => cfg.seeds = v,
            Err(m) => errors.push(ConfigError::at(e.line, Some("seeds"), m)),
        }
    }
    if let Some(e) = section.entries.get("rho") {
        match parse_rhos(&e.value) {
            Ok(v) => cfg.rhos = v,
            Err(m) => errors.push(ConfigError::at(e.line, Some("rho"), m)),
        }
    }
    if let Some(v) = parse_value::<f64>(section, "window_ms", errors) {
        cfg.metrics.window_ms = v;
    }
    if let Some(v) = parse_value::<f64>(section, "warmup_fraction", errors) {
        cfg.metrics.warmup_fraction = v;
    }
    if let Some(v) = parse_list(section, "jfi_basis", errors, parse_basis) {
        cfg.metrics.jfi_basis = v[0];
    }
    if let Some(v) = parse_list(section, "drop_expired", errors, parse_bool) {
        cfg.drop_expired = v[0];
    }
    if let Some(v) = parse_list(section, "trace", errors, parse_bool) {
        cfg.trace = v[0];
    }
    if let Some(e) = section.entries.get("output_dir") {
        cfg.output_dir = Some(e.value.clone());
    }
    if errors.len() > before {
        return;
    }

    let line_of = |key: &str| section.entries.get(key).map_or(section.line, |e| e.line);
    if !(cfg.frame.frame_duration_ms > 0.0 && cfg.frame.frame_duration_ms.is_finite()) {
        errors.push(ConfigError::at(line_of("frame_duration_ms"), Some("frame_duration_ms"), "must be > 0"));
    }
    if cfg.frame.uplink_capacity == 0 {
        errors.push(ConfigError::at(line_of("uplink_capacity"), Some("uplink_capacity"), "must be > 0"));
    }
    if cfg.frames == 0 {
        errors.push(ConfigError::at(line_of("frames"), Some("frames"), "must be > 0"));
    }
    if !(cfg.metrics.window_ms > 0.0 && cfg.metrics.window_ms.is_finite()) {
        errors.push(ConfigError::at(line_of("window_ms"), Some("window_ms"), "must be > 0"));
    }
    if !(0.0..1.0).contains(&cfg.metrics.warmup_fraction) {
        errors.push(ConfigError::at(line_of("warmup_fraction"), Some("warmup_fraction"), "must be in [0, 1)"));
    }
}

fn opt_rate(section: &Section, key: &str, current: Option<f64>, errors: &mut Vec<ConfigError>) -> Option<f64> {
    match section.entries.get(key) {
        None => current,
        Some(e) if e.value.eq_ignore_ascii_case("none") => None,
        Some(e) => match e.value.parse::<f64>() {
            Ok(v) => Some(v),
            Err(_) => {
                errors.push(ConfigError::at(e.line, Some(key), format!("bad number `{}`", e.value)));
                current
            }
        },
    }
}

fn template(kind: TrafficKind) -> TrafficModel {
    let defaults = default_models();
    let class = match kind {
        TrafficKind::Cbr => ServiceClass::Ugs,
        TrafficKind::OnOffVbr => ServiceClass::Rtps,
        TrafficKind::PoissonBulk => ServiceClass::Nrtps,
        TrafficKind::PoissonMix => ServiceClass::Be,
    };
    defaults[&class]
}

fn build_connection(section: &Section, capacity: u64, errors: &mut Vec<ConfigError>) -> Option<ConnectionSpec> {
    let cid = ConnectionId(section.cid.expect("connection section"));
    let before = errors.len();
    let Some(class_entry) = section.entries.get("class") else {
        errors.push(ConfigError::at(section.line, Some("class"), format!("connection {cid}: missing class")));
        return None;
    };
    let class: ServiceClass = match class_entry.value.parse() {
        Ok(c) => c,
        Err(e) => {
            errors.push(ConfigError::at(class_entry.line, Some("class"), e));
            return None;
        }
    };
    let Some(ss_id) = parse_value::<u32>(section, "ss", errors) else {
        if !section.entries.contains_key("ss") {
            errors.push(ConfigError::at(section.line, Some("ss"), format!("connection {cid}: missing ss")));
        }
        return None;
    };

    let mut qos = QosParams::reference(class);
    qos.max_sustained_rate = opt_rate(section, "max_sustained_rate", qos.max_sustained_rate, errors);
    qos.min_reserved_rate = opt_rate(section, "min_reserved_rate", qos.min_reserved_rate, errors);
    qos.max_latency = opt_rate(section, "max_latency", qos.max_latency, errors);
    if let Some(w) = parse_value::<f64>(section, "weight", errors) {
        qos.weight = w;
    }

    let mut traffic = default_models()[&class];
    if let Some(kind) = parse_value::<TrafficKind>(section, "traffic", errors) {
        if kind != traffic.kind {
            traffic = template(kind);
        }
    }
    if let Some(v) = parse_value::<f64>(section, "mean_rate", errors) {
        traffic.mean_rate = v;
    }
    if let Some(v) = parse_value::<PacketSize>(section, "packet_size", errors) {
        traffic.packet_size = v;
    }
    if let Some(v) = parse_value::<f64>(section, "on_ms", errors) {
        traffic.on_ms = v;
    }
    if let Some(v) = parse_value::<f64>(section, "off_ms", errors) {
        traffic.off_ms = v;
    }
    if let Some(v) = parse_value::<u32>(section, "bulk_size", errors) {
        traffic.bulk_size = v;
    }
    if errors.len() > before {
        return None;
    }

    for v in qos.check(cid, class) {
        let field = match &v {
            Violation::MissingField { field, .. }
            | Violation::UnexpectedField { field, .. }
            | Violation::NonPositive { field, .. } => *field,
            _ => "min_reserved_rate",
        };
        let line = section.entries.get(field).map_or(section.line, |e| e.line);
        errors.push(ConfigError::at(line, Some(field), v.to_string()));
    }
    if let Err(m) = traffic.check(capacity) {
        errors.push(ConfigError::at(section.line, Some("traffic"), format!("connection {cid}: {m}")));
    }
    (errors.len() == before).then_some(ConnectionSpec {
        cid,
        ss_id,
        class,
        qos,
        traffic,
    })
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "unnamed".into(),
            frame: FrameConfig::default(),
            connections: Vec::new(),
            modes: SimMode::ALL.to_vec(),
            frames: 10_000,
            seeds: vec![1],
            rhos: vec![1.0],
            metrics: MetricsConfig::default(),
            drop_expired: false,
            output_dir: None,
            trace: false,
        }
    }
}

/// Parses and validates a scenario file. All problems found are returned.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let (scenario, sections) = split_sections(text, &mut errors);
    let mut cfg = ScenarioConfig::default();
    if let Some(s) = &scenario {
        apply_scenario(s, &mut cfg, &mut errors);
    }

    let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
    for s in &sections {
        let cid = s.cid.expect("connection section");
        if let Some(first) = seen.insert(cid, s.line) {
            errors.push(ConfigError::at(
                s.line,
                None,
                format!("connection {cid} already defined on line {first}"),
            ));
            continue;
        }
        if let Some(spec) = build_connection(s, cfg.frame.uplink_capacity, &mut errors) {
            cfg.connections.push(spec);
        }
    }
    if sections.is_empty() {
        errors.push(ConfigError::global("no subscriber stations"));
    }

    cfg.connections.sort_by_key(|c| c.cid);
    if !cfg.connections.is_empty() {
        let conns: Vec<Connection> = cfg
            .connections
            .iter()
            .map(|c| Connection::new(c.cid, c.ss_id, c.class, c.qos))
            .collect();
        if let Err(vs) = validate_scenario(&conns, &cfg.frame) {
            // Per-connection problems were already reported with locations.
            errors.extend(
                vs.iter()
                    .filter(|v| matches!(v, Violation::ReservedSumExceedsCapacity { .. } | Violation::BadFrame(_)))
                    .map(|v| ConfigError::global(v.to_string())),
            );
        }
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(errors)
    }
}

fn opt_str(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_owned(), |x| x.to_string())
}

/// Writes `cfg` in the file format with every field explicit, so that
/// `parse_config(&serialize(c)) == Ok(c)`.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let join = |items: Vec<String>| items.join(", ");
    let _ = writeln!(out, "[scenario]");
    let _ = writeln!(out, "name = {}", cfg.name);
    let _ = writeln!(out, "frame_duration_ms = {}", cfg.frame.frame_duration_ms);
    let _ = writeln!(out, "uplink_capacity = {}", cfg.frame.uplink_capacity);
    let _ = writeln!(out, "channel_bandwidth_mhz = {}", cfg.frame.channel_bandwidth_mhz);
    let _ = writeln!(out, "modes = {}", join(cfg.modes.iter().map(|m| m.to_string()).collect()));
    let _ = writeln!(out, "frames = {}", cfg.frames);
    let _ = writeln!(out, "seeds = {}", join(cfg.seeds.iter().map(|s| s.to_string()).collect()));
    let _ = writeln!(out, "rho = {}", join(cfg.rhos.iter().map(|r| r.to_string()).collect()));
    let _ = writeln!(out, "window_ms = {}", cfg.metrics.window_ms);
    let _ = writeln!(out, "warmup_fraction = {}", cfg.metrics.warmup_fraction);
    let _ = writeln!(out, "jfi_basis = {}", basis_str(cfg.metrics.jfi_basis));
    let _ = writeln!(out, "drop_expired = {}", cfg.drop_expired);
    let _ = writeln!(out, "trace = {}", cfg.trace);
    if let Some(dir) = &cfg.output_dir {
        let _ = writeln!(out, "output_dir = {dir}");
    }
    for c in &cfg.connections {
        let t = &c.traffic;
        let _ = writeln!(out, "\n[connection {}]", c.cid.0);
        let _ = writeln!(out, "ss = {}", c.ss_id);
        let _ = writeln!(out, "class = {}", c.class);
        let _ = writeln!(out, "max_sustained_rate = {}", opt_str(c.qos.max_sustained_rate));
        let _ = writeln!(out, "min_reserved_rate = {}", opt_str(c.qos.min_reserved_rate));
        let _ = writeln!(out, "max_latency = {}", opt_str(c.qos.max_latency));
        let _ = writeln!(out, "weight = {}", c.qos.weight);
        let _ = writeln!(out, "traffic = {}", t.kind.as_str());
        let _ = writeln!(out, "mean_rate = {}", t.mean_rate);
        let _ = writeln!(out, "packet_size = {}", t.packet_size);
        let _ = writeln!(out, "on_ms = {}", t.on_ms);
        let _ = writeln!(out, "off_ms = {}", t.off_ms);
        let _ = writeln!(out, "bulk_size = {}", t.bulk_size);
    }
    out
}

/// The built-in four-station scenario.
pub fn reference_scenario() -> ScenarioConfig {
    parse_config(REFERENCE_SCENARIO).expect("built-in scenario parses")
}
