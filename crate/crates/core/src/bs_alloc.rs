//! Base-station uplink allocator.
//!
//! Phase 1 hands every connection `min(request, BWMIN)`. Phase 2 spreads the
//! leftover capacity over connections with unmet demand in proportion to
//! their weights, never granting more than was requested. The result is
//! then either pooled per subscriber station (GPSS) or kept per connection
//! (GPC).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Connection, ConnectionId, FrameConfig, ServiceClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandwidthRequest {
    pub cid: ConnectionId,
    /// Absolute backlog in bytes.
    pub requested: u64,
    pub issued_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationResult {
    pub allocated: BTreeMap<ConnectionId, u64>,
    pub remaining: u64,
}

impl AllocationResult {
    pub fn total_allocated(&self) -> u64 {
        self.allocated.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantMode {
    Gpss,
    Gpc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GrantMap {
    /// Pooled grant per subscriber station.
    Gpss(BTreeMap<u32, u64>),
    /// Grant per connection.
    Gpc(BTreeMap<ConnectionId, u64>),
}

impl GrantMap {
    pub fn mode(&self) -> GrantMode {
        match self {
            GrantMap::Gpss(_) => GrantMode::Gpss,
            GrantMap::Gpc(_) => GrantMode::Gpc,
        }
    }

    pub fn total(&self) -> u64 {
        match self {
            GrantMap::Gpss(m) => m.values().sum(),
            GrantMap::Gpc(m) => m.values().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocError {
    #[error("infeasible reservation: {reserved} bytes/frame reserved, capacity {capacity}")]
    InfeasibleReservation { reserved: u64, capacity: u64 },
    #[error("request for unknown connection {0}")]
    UnknownConnection(ConnectionId),
}

/// Synthetic requests for UGS connections: each asks for exactly its
/// unsolicited per-frame grant.
pub fn ugs_requests(connections: &[Connection], frame: &FrameConfig, issued_frame: u64) -> Vec<BandwidthRequest> {
    connections
        .iter()
        .filter(|c| c.service_class == ServiceClass::Ugs)
        .map(|c| BandwidthRequest {
            cid: c.cid,
            requested: c.min_bytes_per_frame(frame),
            issued_frame,
        })
        .collect()
}

fn request_map(requests: &[BandwidthRequest]) -> BTreeMap<ConnectionId, u64> {
    let mut map = BTreeMap::new();
    for r in requests {
        *map.entry(r.cid).or_insert(0) += r.requested;
    }
    map
}

/// Phase 1: every connection gets `min(requested, BWMIN)`.
///
/// Connections without a request are allocated 0.
pub fn phase1_guarantee(
    requests: &[BandwidthRequest],
    connections: &[Connection],
    frame: &FrameConfig,
) -> Result<AllocationResult, AllocError> {
    let reserved: u64 = connections.iter().map(|c| c.min_bytes_per_frame(frame)).sum();
    if reserved > frame.uplink_capacity {
        return Err(AllocError::InfeasibleReservation {
            reserved,
            capacity: frame.uplink_capacity,
        });
    }
    let demand = request_map(requests);
    if let Some(cid) = demand.keys().find(|cid| !connections.iter().any(|c| c.cid == **cid)) {
        return Err(AllocError::UnknownConnection(*cid));
    }

    let allocated: BTreeMap<ConnectionId, u64> = connections
        .iter()
        .map(|c| {
            let req = demand.get(&c.cid).copied().unwrap_or(0);
            (c.cid, req.min(c.min_bytes_per_frame(frame)))
        })
        .collect();
    let total: u64 = allocated.values().sum();
    Ok(AllocationResult {
        allocated,
        remaining: frame.uplink_capacity - total,
    })
}

/// Phase 2: weighted water-filling of `result.remaining` over unmet demand.
///
/// Each pass splits the excess pool of the unmet connections (what they
/// already received in this phase plus what is left) in proportion to
/// weight, rounds each target down and tops every connection up towards its
/// target, capped at its deficit. Passes repeat until nobody is unmet or a
/// pass grants nothing. The sub-byte residue then goes one byte at a time to
/// the unmet connection with the least excess per unit weight, ties by
/// ascending CID.
pub fn phase2_excess(
    mut result: AllocationResult,
    requests: &[BandwidthRequest],
    weights: &BTreeMap<ConnectionId, f64>,
) -> AllocationResult {
    let demand = request_map(requests);
    let weight = |cid: &ConnectionId| weights.get(cid).copied().unwrap_or(1.0);
    let deficit = |result: &AllocationResult, cid: &ConnectionId| {
        let req = demand.get(cid).copied().unwrap_or(0);
        req.saturating_sub(result.allocated[cid])
    };
    let mut excess: BTreeMap<ConnectionId, u64> = result.allocated.keys().map(|cid| (*cid, 0)).collect();
    let unmet = |result: &AllocationResult| -> Vec<ConnectionId> {
        result
            .allocated
            .keys()
            .filter(|cid| deficit(result, cid) > 0)
            .copied()
            .collect()
    };

    while result.remaining > 0 {
        let open = unmet(&result);
        if open.is_empty() {
            return result;
        }
        let weight_sum: f64 = open.iter().map(weight).sum();
        let pool = (result.remaining + open.iter().map(|cid| excess[cid]).sum::<u64>()) as f64;
        let mut granted = false;
        for cid in &open {
            let target = (pool * weight(cid) / weight_sum).floor() as u64;
            let inc = target
                .saturating_sub(excess[cid])
                .min(deficit(&result, cid))
                .min(result.remaining);
            if inc > 0 {
                *result.allocated.get_mut(cid).unwrap() += inc;
                *excess.get_mut(cid).unwrap() += inc;
                result.remaining -= inc;
                granted = true;
            }
        }
        if !granted {
            break;
        }
    }

    while result.remaining > 0 {
        let neediest = unmet(&result)
            .into_iter()
            .min_by(|a, b| (excess[a] as f64 / weight(a)).total_cmp(&(excess[b] as f64 / weight(b))));
        let Some(cid) = neediest else { break };
        *result.allocated.get_mut(&cid).unwrap() += 1;
        *excess.get_mut(&cid).unwrap() += 1;
        result.remaining -= 1;
    }
    result
}

/// Per-connection weights as configured on the connections.
pub fn weights_of(connections: &[Connection]) -> BTreeMap<ConnectionId, f64> {
    connections.iter().map(|c| (c.cid, c.qos.weight)).collect()
}

/// Phase 1 followed by phase 2.
pub fn allocate(
    requests: &[BandwidthRequest],
    connections: &[Connection],
    frame: &FrameConfig,
) -> Result<AllocationResult, AllocError> {
    let first = phase1_guarantee(requests, connections, frame)?;
    Ok(phase2_excess(first, requests, &weights_of(connections)))
}

/// Sums per-connection allocations into one grant per subscriber station.
pub fn pool_gpss(result: &AllocationResult, connections: &[Connection]) -> GrantMap {
    let mut grants = BTreeMap::new();
    for c in connections {
        *grants.entry(c.ss_id).or_insert(0) += result.allocated.get(&c.cid).copied().unwrap_or(0);
    }
    GrantMap::Gpss(grants)
}

/// Grant-per-connection baseline: same pipeline, no pooling.
pub fn allocate_gpc(
    requests: &[BandwidthRequest],
    connections: &[Connection],
    frame: &FrameConfig,
) -> Result<GrantMap, AllocError> {
    let result = allocate(requests, connections, frame)?;
    Ok(GrantMap::Gpc(result.allocated))
}
