//! Domain types shared by every stage of the uplink pipeline: service
//! classes, QoS parameters, connections, packets and the frame layout.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

/// The four 802.16 uplink scheduling services.
///
/// `Ord` follows scheduling priority, so `Ugs > Rtps > Nrtps > Be`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ServiceClass {
    Ugs,
    Rtps,
    Nrtps,
    Be,
}

impl ServiceClass {
    /// All classes, highest priority first.
    pub const ALL: [ServiceClass; 4] = [
        ServiceClass::Ugs,
        ServiceClass::Rtps,
        ServiceClass::Nrtps,
        ServiceClass::Be,
    ];

    /// Priority rank; larger is served first.
    pub fn rank(self) -> u8 {
        match self {
            ServiceClass::Ugs => 3,
            ServiceClass::Rtps => 2,
            ServiceClass::Nrtps => 1,
            ServiceClass::Be => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceClass::Ugs => "ugs",
            ServiceClass::Rtps => "rtps",
            ServiceClass::Nrtps => "nrtps",
            ServiceClass::Be => "be",
        }
    }

    /// Default phase-2 weight for connections of this class.
    pub fn default_weight(self) -> f64 {
        match self {
            // UGS never takes part in excess distribution.
            ServiceClass::Ugs => 1.0,
            ServiceClass::Rtps => 4.0,
            ServiceClass::Nrtps => 2.0,
            ServiceClass::Be => 1.0,
        }
    }
}

impl PartialOrd for ServiceClass {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ServiceClass {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl fmt::Display for ServiceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ServiceClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ugs" => Ok(ServiceClass::Ugs),
            "rtps" => Ok(ServiceClass::Rtps),
            "nrtps" => Ok(ServiceClass::Nrtps),
            "be" => Ok(ServiceClass::Be),
            other => Err(format!("unknown service class `{other}`")),
        }
    }
}

/// Per-connection QoS contract. Rates are kbit/s, latency is ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosParams {
    pub max_sustained_rate: Option<f64>,
    pub min_reserved_rate: Option<f64>,
    pub max_latency: Option<f64>,
    pub weight: f64,
}

impl QosParams {
    /// Reference contract values for each class (rates in kbit/s, latency in ms).
    pub fn reference(class: ServiceClass) -> Self {
        let (rmax, rmin, latency) = match class {
            ServiceClass::Ugs => (Some(256.0), None, None),
            ServiceClass::Rtps => (Some(1024.0), Some(512.0), Some(20.0)),
            ServiceClass::Nrtps => (Some(1024.0), Some(512.0), None),
            ServiceClass::Be => (None, Some(256.0), None),
        };
        QosParams {
            max_sustained_rate: rmax,
            min_reserved_rate: rmin,
            max_latency: latency,
            weight: class.default_weight(),
        }
    }

    /// Checks the class-conditioned presence rules and value ranges.
    pub fn check(&self, cid: ConnectionId, class: ServiceClass) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut missing = |field: &'static str| {
            out.push(Violation::MissingField { cid, class, field });
        };
        match class {
            ServiceClass::Ugs => {
                if self.max_sustained_rate.is_none() {
                    missing("max_sustained_rate");
                }
            }
            ServiceClass::Rtps => {
                if self.max_sustained_rate.is_none() {
                    missing("max_sustained_rate");
                }
                if self.min_reserved_rate.is_none() {
                    missing("min_reserved_rate");
                }
                if self.max_latency.is_none() {
                    missing("max_latency");
                }
            }
            ServiceClass::Nrtps => {
                if self.max_sustained_rate.is_none() {
                    missing("max_sustained_rate");
                }
                if self.min_reserved_rate.is_none() {
                    missing("min_reserved_rate");
                }
            }
            ServiceClass::Be => {
                if self.min_reserved_rate.is_none() {
                    missing("min_reserved_rate");
                }
            }
        }
        if class != ServiceClass::Rtps && self.max_latency.is_some() {
            out.push(Violation::UnexpectedField {
                cid,
                class,
                field: "max_latency",
            });
        }

        let mut positive = |field: &'static str, value: Option<f64>| {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    out.push(Violation::NonPositive { cid, field, value: v });
                }
            }
        };
        positive("max_sustained_rate", self.max_sustained_rate);
        positive("min_reserved_rate", self.min_reserved_rate);
        positive("max_latency", self.max_latency);
        positive("weight", Some(self.weight));

        if let (Some(rmin), Some(rmax)) = (self.min_reserved_rate, self.max_sustained_rate) {
            if rmin > rmax {
                out.push(Violation::ReservedAboveSustained { cid, rmin, rmax });
            }
        }
        out
    }
}

/// Connection identifier, unique across the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnectionId(pub u32);

impl fmt::Display for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A queued uplink packet. Times are ms since simulation start.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    /// Per-connection sequence number, assigned at generation.
    pub seq: u64,
    pub size: u32,
    pub arrival_time: f64,
    /// EDF deadline; present only on rtPS packets.
    pub deadline: Option<f64>,
    pub departure_time: Option<f64>,
}

impl Packet {
    pub fn new(seq: u64, size: u32, arrival_time: f64, max_latency: Option<f64>) -> Self {
        Packet {
            seq,
            size,
            arrival_time,
            deadline: max_latency.map(|l| arrival_time + l),
            departure_time: None,
        }
    }
}

/// An uplink flow owned by one subscriber station.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub cid: ConnectionId,
    pub ss_id: u32,
    pub service_class: ServiceClass,
    pub qos: QosParams,
    pub queue: VecDeque<Packet>,
}

impl Connection {
    pub fn new(cid: ConnectionId, ss_id: u32, service_class: ServiceClass, qos: QosParams) -> Self {
        Connection {
            cid,
            ss_id,
            service_class,
            qos,
            queue: VecDeque::new(),
        }
    }

    pub fn backlog_bytes(&self) -> u64 {
        self.queue.iter().map(|p| u64::from(p.size)).sum()
    }

    /// Guaranteed per-frame bytes (BWMIN). UGS is guaranteed its sustained rate.
    pub fn min_bytes_per_frame(&self, frame: &FrameConfig) -> u64 {
        let rate = match self.service_class {
            ServiceClass::Ugs => self.qos.max_sustained_rate,
            _ => self.qos.min_reserved_rate,
        };
        bytes_per_frame(rate.unwrap_or(0.0), frame)
    }

    /// DFPQ quantum: one frame at the sustained rate, or the reserved rate
    /// when no sustained rate is configured.
    pub fn quantum_bytes(&self, frame: &FrameConfig) -> u64 {
        let rate = match self.qos.max_sustained_rate {
            Some(r) if r > 0.0 => r,
            _ => self.qos.min_reserved_rate.unwrap_or(0.0),
        };
        bytes_per_frame(rate, frame).max(1)
    }
}

/// TDD frame layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub frame_duration_ms: f64,
    /// Uplink bytes available per frame (B).
    pub uplink_capacity: u64,
    /// Informational only; not used to derive capacity.
    pub channel_bandwidth_mhz: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        // 4.3 MHz at 1 bit/s/Hz over 10 ms.
        FrameConfig {
            frame_duration_ms: 10.0,
            uplink_capacity: 5375,
            channel_bandwidth_mhz: 4.3,
        }
    }
}

impl FrameConfig {
    pub fn frame_start(&self, index: u64) -> f64 {
        index as f64 * self.frame_duration_ms
    }

    pub fn frame_end(&self, index: u64) -> f64 {
        (index + 1) as f64 * self.frame_duration_ms
    }
}

/// Bytes carried in one frame at `rate_kbps`, rounded down.
pub fn bytes_per_frame(rate_kbps: f64, frame: &FrameConfig) -> u64 {
    if !(rate_kbps > 0.0) {
        return 0;
    }
    // kbit/s × ms = bits
    (rate_kbps * frame.frame_duration_ms / 8.0).floor() as u64
}

/// A single problem found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingField {
        cid: ConnectionId,
        class: ServiceClass,
        field: &'static str,
    },
    UnexpectedField {
        cid: ConnectionId,
        class: ServiceClass,
        field: &'static str,
    },
    NonPositive {
        cid: ConnectionId,
        field: &'static str,
        value: f64,
    },
    ReservedAboveSustained {
        cid: ConnectionId,
        rmin: f64,
        rmax: f64,
    },
    DuplicateCid(ConnectionId),
    BadFrame(&'static str),
    ReservedSumExceedsCapacity {
        reserved: u64,
        capacity: u64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingField { cid, class, field } => {
                write!(f, "connection {cid} ({class}): missing {field}")
            }
            Violation::UnexpectedField { cid, class, field } => {
                write!(f, "connection {cid} ({class}): {field} not allowed for this class")
            }
            Violation::NonPositive { cid, field, value } => {
                write!(f, "connection {cid}: {field} must be > 0 (got {value})")
            }
            Violation::ReservedAboveSustained { cid, rmin, rmax } => write!(
                f,
                "connection {cid}: min_reserved_rate {rmin} exceeds max_sustained_rate {rmax}"
            ),
            Violation::DuplicateCid(cid) => write!(f, "duplicate connection id {cid}"),
            Violation::BadFrame(msg) => write!(f, "frame config: {msg}"),
            Violation::ReservedSumExceedsCapacity { reserved, capacity } => write!(
                f,
                "reserved sum exceeds B: {reserved} bytes/frame reserved, capacity {capacity}"
            ),
        }
    }
}

/// Checks every connection's contract and the admission inequality
/// Σ BWMIN ≤ B. All violations are collected.
///
/// The reserved sum includes each UGS connection's unsolicited grant, since
/// that is what phase 1 of the allocator hands out unconditionally.
pub fn validate_scenario(
    connections: &[Connection],
    frame: &FrameConfig,
) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if !(frame.frame_duration_ms > 0.0 && frame.frame_duration_ms.is_finite()) {
        violations.push(Violation::BadFrame("frame_duration must be > 0"));
    }
    if frame.uplink_capacity == 0 {
        violations.push(Violation::BadFrame("uplink_capacity must be > 0"));
    }

    let mut seen = BTreeSet::new();
    for conn in connections {
        if !seen.insert(conn.cid) {
            violations.push(Violation::DuplicateCid(conn.cid));
        }
        violations.extend(conn.qos.check(conn.cid, conn.service_class));
    }

    let reserved: u64 = connections
        .iter()
        .map(|c| c.min_bytes_per_frame(frame))
        .sum();
    if reserved > frame.uplink_capacity {
        violations.push(Violation::ReservedSumExceedsCapacity {
            reserved,
            capacity: frame.uplink_capacity,
        });
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
