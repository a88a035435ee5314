//! Frame-driven simulation loop.
//!
//! Each frame: the BS allocates against the requests issued at the end of
//! the previous frame, new traffic arrives, stations spend their grants on
//! their live queues, and fresh requests report the post-transmission
//! backlog. The request path therefore lags by exactly one frame.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bs_alloc::{self, BandwidthRequest, GrantMap};
use crate::model::{validate_scenario, Connection, ConnectionId, FrameConfig, QosParams, ServiceClass};
use crate::ss_sched::{self, DfpqState, TransmissionList};
use crate::traffic::{TrafficIntensity, TrafficModel, TrafficSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SimMode {
    /// Pooled grants, proposed station scheduler.
    Ss1,
    /// Pooled grants, strict-priority station scheduler.
    Ss2,
    /// Grant per connection, no station scheduler.
    Gpc,
}

impl SimMode {
    pub const ALL: [SimMode; 3] = [SimMode::Ss1, SimMode::Ss2, SimMode::Gpc];

    pub fn as_str(self) -> &'static str {
        match self {
            SimMode::Ss1 => "ss1",
            SimMode::Ss2 => "ss2",
            SimMode::Gpc => "gpc",
        }
    }
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ss1" => Ok(SimMode::Ss1),
            "ss2" => Ok(SimMode::Ss2),
            "gpc" => Ok(SimMode::Gpc),
            other => Err(format!("unknown mode `{other}` (expected ss1, ss2 or gpc)")),
        }
    }
}

/// Static description of one connection in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionSpec {
    pub cid: ConnectionId,
    pub ss_id: u32,
    pub class: ServiceClass,
    pub qos: QosParams,
    pub traffic: TrafficModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub frame: FrameConfig,
    pub connections: Vec<ConnectionSpec>,
    /// Drop rtPS packets that can no longer meet their deadline.
    pub drop_expired: bool,
}

impl Scenario {
    fn build_connections(&self) -> Vec<Connection> {
        let mut conns: Vec<Connection> = self
            .connections
            .iter()
            .map(|s| Connection::new(s.cid, s.ss_id, s.class, s.qos))
            .collect();
        conns.sort_by_key(|c| (c.ss_id, c.cid));
        conns
    }

    /// Contract, admission and traffic-model checks.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors: Vec<String> = match validate_scenario(&self.build_connections(), &self.frame) {
            Ok(()) => Vec::new(),
            Err(v) => v.iter().map(ToString::to_string).collect(),
        };
        for spec in &self.connections {
            if let Err(e) = spec.traffic.check(self.frame.uplink_capacity) {
                errors.push(format!("connection {} traffic: {e}", spec.cid));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("frame count must be > 0")]
    NoFrames,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalRecord {
    pub cid: ConnectionId,
    pub seq: u64,
    pub size: u32,
    pub arrival_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxRecord {
    pub cid: ConnectionId,
    pub seq: u64,
    pub size: u32,
    pub departure_time: f64,
}

/// What happened in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub frame_index: u64,
    pub grants: GrantMap,
    pub arrivals: Vec<ArrivalRecord>,
    pub transmissions: Vec<TxRecord>,
    /// Expired rtPS packets removed this frame (drop-on-expiry only).
    pub dropped: Vec<(ConnectionId, u64)>,
    /// Post-transmission backlog in bytes, which is also next frame's request.
    pub backlog: BTreeMap<ConnectionId, u64>,
}

impl FrameTrace {
    pub fn used_bytes(&self) -> u64 {
        self.transmissions.iter().map(|t| u64::from(t.size)).sum()
    }
}

/// Mutable state of a run.
#[derive(Debug, Clone)]
pub struct SimState {
    frame_index: u64,
    mode: SimMode,
    rho: TrafficIntensity,
    frame: FrameConfig,
    drop_expired: bool,
    /// Sorted by (ss_id, cid) so every station is a contiguous slice.
    connections: Vec<Connection>,
    stations: Vec<(u32, std::ops::Range<usize>)>,
    dfpq: BTreeMap<u32, DfpqState>,
    sources: BTreeMap<ConnectionId, TrafficSource>,
    pending_requests: BTreeMap<ConnectionId, u64>,
}

impl SimState {
    pub fn new(
        scenario: &Scenario,
        mode: SimMode,
        seed: u64,
        rho: TrafficIntensity,
    ) -> Result<Self, EngineError> {
        scenario.validate().map_err(EngineError::InvalidScenario)?;
        let connections = scenario.build_connections();

        let mut stations: Vec<(u32, std::ops::Range<usize>)> = Vec::new();
        for (i, c) in connections.iter().enumerate() {
            match stations.last_mut() {
                Some((ss, range)) if *ss == c.ss_id => range.end = i + 1,
                _ => stations.push((c.ss_id, i..i + 1)),
            }
        }
        let dfpq = stations
            .iter()
            .map(|(ss, r)| (*ss, DfpqState::new(&connections[r.clone()], &scenario.frame)))
            .collect();
        let sources = scenario
            .connections
            .iter()
            .map(|s| (s.cid, TrafficSource::new(s.cid, s.traffic, s.qos.max_latency, seed)))
            .collect();

        Ok(SimState {
            frame_index: 0,
            mode,
            rho,
            frame: scenario.frame,
            drop_expired: scenario.drop_expired,
            connections,
            stations,
            dfpq,
            sources,
            pending_requests: BTreeMap::new(),
        })
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    pub fn pending_requests(&self) -> &BTreeMap<ConnectionId, u64> {
        &self.pending_requests
    }

    pub fn dfpq_state(&self, ss_id: u32) -> Option<&DfpqState> {
        self.dfpq.get(&ss_id)
    }

    fn requests(&self) -> Vec<BandwidthRequest> {
        let issued = self.frame_index.saturating_sub(1);
        let mut reqs = bs_alloc::ugs_requests(&self.connections, &self.frame, self.frame_index);
        reqs.extend(
            self.connections
                .iter()
                .filter(|c| c.service_class != ServiceClass::Ugs)
                .map(|c| BandwidthRequest {
                    cid: c.cid,
                    requested: self.pending_requests.get(&c.cid).copied().unwrap_or(0),
                    issued_frame: issued,
                }),
        );
        reqs
    }

    /// Advances the simulation by one frame.
    pub fn step_frame(&mut self) -> FrameTrace {
        let index = self.frame_index;
        let frame_end = self.frame.frame_end(index);

        // 1. BS allocation on last frame's requests.
        let requests = self.requests();
        let allocation = bs_alloc::allocate(&requests, &self.connections, &self.frame)
            .expect("scenario validated at construction");
        let grants = match self.mode {
            SimMode::Ss1 | SimMode::Ss2 => bs_alloc::pool_gpss(&allocation, &self.connections),
            SimMode::Gpc => GrantMap::Gpc(allocation.allocated),
        };

        // 2. Arrivals, in CID order.
        let mut arrivals = Vec::new();
        let mut order: Vec<usize> = (0..self.connections.len()).collect();
        order.sort_by_key(|&i| self.connections[i].cid);
        for i in order {
            let conn = &mut self.connections[i];
            let source = self.sources.get_mut(&conn.cid).unwrap();
            for p in source.generate(index, self.rho, &self.frame) {
                arrivals.push(ArrivalRecord {
                    cid: conn.cid,
                    seq: p.seq,
                    size: p.size,
                    arrival_time: p.arrival_time,
                });
                conn.queue.push_back(p);
            }
        }

        // Optional drop of rtPS packets that would depart past their deadline.
        let mut dropped = Vec::new();
        if self.drop_expired {
            for conn in self.connections.iter_mut().filter(|c| c.service_class == ServiceClass::Rtps) {
                while conn.queue.front().is_some_and(|p| p.deadline.is_some_and(|d| d < frame_end)) {
                    let p = conn.queue.pop_front().unwrap();
                    dropped.push((conn.cid, p.seq));
                }
            }
        }

        // 3. Transmission.
        let mut sent = TransmissionList::default();
        match &grants {
            GrantMap::Gpss(per_ss) => {
                for (ss, range) in &self.stations {
                    let grant = per_ss.get(ss).copied().unwrap_or(0);
                    let slice = &mut self.connections[range.clone()];
                    let list = match self.mode {
                        SimMode::Ss1 => {
                            ss_sched::schedule_frame_ss1(slice, grant, self.dfpq.get_mut(ss).unwrap())
                        }
                        _ => ss_sched::schedule_frame_ss2(slice, grant),
                    };
                    sent.extend(list);
                }
            }
            GrantMap::Gpc(per_conn) => {
                for conn in self.connections.iter_mut() {
                    let grant = per_conn.get(&conn.cid).copied().unwrap_or(0);
                    sent.extend(ss_sched::transmit_fifo(conn, grant));
                }
            }
        }
        debug_assert!(sent.total_bytes <= self.frame.uplink_capacity);

        // 4. Departures are stamped at frame end.
        let transmissions = sent
            .entries
            .into_iter()
            .map(|t| TxRecord {
                cid: t.cid,
                seq: t.packet.seq,
                size: t.packet.size,
                departure_time: frame_end,
            })
            .collect();

        // 5. Requests for the next frame.
        let backlog: BTreeMap<ConnectionId, u64> = self
            .connections
            .iter()
            .map(|c| (c.cid, c.backlog_bytes()))
            .collect();
        self.pending_requests = backlog
            .iter()
            .filter(|(cid, _)| {
                self.connections
                    .iter()
                    .any(|c| c.cid == **cid && c.service_class != ServiceClass::Ugs)
            })
            .map(|(cid, b)| (*cid, *b))
            .collect();

        // 6.
        self.frame_index += 1;

        FrameTrace {
            frame_index: index,
            grants,
            arrivals,
            transmissions,
            dropped,
            backlog,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionInfo {
    pub cid: ConnectionId,
    pub ss_id: u32,
    pub class: ServiceClass,
    pub max_latency: Option<f64>,
}

/// Lifecycle of one generated packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub cid: ConnectionId,
    pub class: ServiceClass,
    pub seq: u64,
    pub size: u32,
    pub arrival_time: f64,
    pub departure_time: Option<f64>,
    pub dropped: bool,
    pub max_latency: Option<f64>,
}

impl PacketRecord {
    pub fn delay(&self) -> Option<f64> {
        self.departure_time.map(|d| d - self.arrival_time)
    }
}

/// Per-frame capacity accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub start_ms: f64,
    pub granted: u64,
    pub used: u64,
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mode: SimMode,
    pub seed: u64,
    pub rho: f64,
    pub frame: FrameConfig,
    pub connections: Vec<ConnectionInfo>,
    /// Ordered by (cid, seq).
    pub packets: Vec<PacketRecord>,
    pub frames: Vec<FrameRecord>,
}

impl RunResult {
    pub fn duration_ms(&self) -> f64 {
        self.frames.len() as f64 * self.frame.frame_duration_ms
    }

    /// Packets still queued at the end of the run.
    pub fn backlog(&self) -> impl Iterator<Item = &PacketRecord> {
        self.packets.iter().filter(|p| p.departure_time.is_none() && !p.dropped)
    }

    /// arrivals = departures + drops + backlog for every connection.
    pub fn conservation_holds(&self) -> bool {
        self.connections.iter().all(|c| {
            let mine = self.packets.iter().filter(|p| p.cid == c.cid);
            let (mut arrived, mut departed, mut dropped, mut queued) = (0u64, 0u64, 0u64, 0u64);
            for p in mine {
                arrived += 1;
                match (p.departure_time, p.dropped) {
                    (Some(_), false) => departed += 1,
                    (None, true) => dropped += 1,
                    (None, false) => queued += 1,
                    (Some(_), true) => return false,
                }
            }
            arrived == departed + dropped + queued
        })
    }
}

/// Runs `frames` frames of `scenario` from a fresh state.
pub fn run(
    scenario: &Scenario,
    mode: SimMode,
    frames: u64,
    seed: u64,
    rho: TrafficIntensity,
) -> Result<RunResult, EngineError> {
    if frames == 0 {
        return Err(EngineError::NoFrames);
    }
    let mut state = SimState::new(scenario, mode, seed, rho)?;
    let info: BTreeMap<ConnectionId, ConnectionInfo> = state
        .connections
        .iter()
        .map(|c| {
            (
                c.cid,
                ConnectionInfo {
                    cid: c.cid,
                    ss_id: c.ss_id,
                    class: c.service_class,
                    max_latency: c.qos.max_latency,
                },
            )
        })
        .collect();

    // Per-connection logs indexed by seq; sequence numbers are dense.
    let mut logs: BTreeMap<ConnectionId, Vec<PacketRecord>> =
        info.keys().map(|cid| (*cid, Vec::new())).collect();
    let mut frame_records = Vec::with_capacity(frames as usize);

    for _ in 0..frames {
        let trace = state.step_frame();
        for a in &trace.arrivals {
            let ci = &info[&a.cid];
            let log = logs.get_mut(&a.cid).unwrap();
            debug_assert_eq!(log.len() as u64, a.seq);
            log.push(PacketRecord {
                cid: a.cid,
                class: ci.class,
                seq: a.seq,
                size: a.size,
                arrival_time: a.arrival_time,
                departure_time: None,
                dropped: false,
                max_latency: ci.max_latency,
            });
        }
        for t in &trace.transmissions {
            logs.get_mut(&t.cid).unwrap()[t.seq as usize].departure_time = Some(t.departure_time);
        }
        for (cid, seq) in &trace.dropped {
            logs.get_mut(cid).unwrap()[*seq as usize].dropped = true;
        }
        frame_records.push(FrameRecord {
            frame_index: trace.frame_index,
            start_ms: scenario.frame.frame_start(trace.frame_index),
            granted: trace.grants.total(),
            used: trace.used_bytes(),
            capacity: scenario.frame.uplink_capacity,
        });
    }

    Ok(RunResult {
        mode,
        seed,
        rho: rho.value(),
        frame: scenario.frame,
        connections: info.into_values().collect(),
        packets: logs.into_values().flatten().collect(),
        frames: frame_records,
    })
}
