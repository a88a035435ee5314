//! Subscriber-station schedulers.
//!
//! `schedule_frame_ss1` spends a pooled grant in three phases: UGS in strict
//! priority, rtPS by earliest deadline, then a deficit round over nrtPS and
//! BE queues. `schedule_frame_ss2` is the strict-priority comparator.
//!
//! Packets are never fragmented. All functions take the station's
//! connections as a slice and look only at the classes they serve.

use std::collections::BTreeMap;

use crate::model::{Connection, ConnectionId, FrameConfig, Packet, ServiceClass};

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub cid: ConnectionId,
    pub class: ServiceClass,
    pub packet: Packet,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransmissionList {
    pub entries: Vec<Transmission>,
    pub total_bytes: u64,
}

impl TransmissionList {
    fn push(&mut self, conn: &Connection, packet: Packet) {
        self.total_bytes += u64::from(packet.size);
        self.entries.push(Transmission {
            cid: conn.cid,
            class: conn.service_class,
            packet,
        });
    }

    pub fn extend(&mut self, other: TransmissionList) {
        self.total_bytes += other.total_bytes;
        self.entries.extend(other.entries);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Byte budget of one station for one frame.
///
/// `after_ugs_rtps` is the capacity left for the deficit round (Ltotal) and
/// `running` the live remainder (La).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameBudget {
    pub total: u64,
    pub after_ugs_rtps: u64,
    pub running: u64,
}

impl FrameBudget {
    pub fn new(total: u64) -> Self {
        FrameBudget {
            total,
            after_ugs_rtps: total,
            running: total,
        }
    }

    fn spend(&mut self, bytes: u64) {
        debug_assert!(bytes <= self.running);
        self.running -= bytes;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeficitEntry {
    pub quantum: u64,
    pub deficit: u64,
    /// Quantum already granted in the current round.
    pub credited: bool,
    /// A visit was cut short by the frame budget; the next visit resumes it
    /// without a fresh quantum.
    pub resume: bool,
}

/// Quantum and deficit counter per nrtPS/BE connection, plus the
/// round-robin position and round progress, which persist across frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfpqState {
    order: Vec<ConnectionId>,
    entries: BTreeMap<ConnectionId, DeficitEntry>,
    next: usize,
}

impl DfpqState {
    /// Visit order is every nrtPS connection by ascending CID, then every BE
    /// connection by ascending CID.
    pub fn new(connections: &[Connection], frame: &FrameConfig) -> Self {
        let mut dfpq: Vec<&Connection> = connections
            .iter()
            .filter(|c| matches!(c.service_class, ServiceClass::Nrtps | ServiceClass::Be))
            .collect();
        dfpq.sort_by_key(|c| (std::cmp::Reverse(c.service_class), c.cid));
        Self::with_quanta(dfpq.iter().map(|c| (c.cid, c.quantum_bytes(frame))))
    }

    /// Explicit visit order and quanta. Zero quanta are raised to 1.
    pub fn with_quanta(order: impl IntoIterator<Item = (ConnectionId, u64)>) -> Self {
        let mut ids = Vec::new();
        let mut entries = BTreeMap::new();
        for (cid, quantum) in order {
            ids.push(cid);
            entries.insert(
                cid,
                DeficitEntry {
                    quantum: quantum.max(1),
                    deficit: 0,
                    credited: false,
                    resume: false,
                },
            );
        }
        DfpqState {
            order: ids,
            entries,
            next: 0,
        }
    }

    pub fn order(&self) -> &[ConnectionId] {
        &self.order
    }

    pub fn entry(&self, cid: ConnectionId) -> Option<DeficitEntry> {
        self.entries.get(&cid).copied()
    }

    /// Index into `order()` of the next queue to visit.
    pub fn position(&self) -> usize {
        self.next
    }

    /// True when every counter of an empty queue is zero.
    pub fn reset_rule_holds(&self, connections: &[Connection]) -> bool {
        connections.iter().all(|c| match self.entries.get(&c.cid) {
            Some(e) => !c.queue.is_empty() || e.deficit == 0,
            None => true,
        })
    }
}

fn by_cid(conns: &[Connection], class: ServiceClass) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..conns.len())
        .filter(|&i| conns[i].service_class == class)
        .collect();
    idx.sort_by_key(|&i| conns[i].cid);
    idx
}

fn head_size(conn: &Connection) -> Option<u64> {
    conn.queue.front().map(|p| u64::from(p.size))
}

/// UGS phase: each UGS queue, by ascending CID, sends head packets while
/// they fit whole.
pub fn serve_ugs(conns: &mut [Connection], budget: &mut FrameBudget) -> TransmissionList {
    let mut out = TransmissionList::default();
    for i in by_cid(conns, ServiceClass::Ugs) {
        while let Some(size) = head_size(&conns[i]) {
            if size > budget.running {
                break;
            }
            let p = conns[i].queue.pop_front().unwrap();
            budget.spend(size);
            out.push(&conns[i], p);
        }
    }
    out
}

/// rtPS phase: earliest deadline first across the heads of all rtPS queues,
/// ties by arrival time then CID. Ends at the first candidate that does not
/// fit.
pub fn serve_rtps_edf(conns: &mut [Connection], budget: &mut FrameBudget) -> TransmissionList {
    let mut out = TransmissionList::default();
    let rtps = by_cid(conns, ServiceClass::Rtps);
    loop {
        let pick = rtps
            .iter()
            .filter_map(|&i| conns[i].queue.front().map(|p| (i, p)))
            .min_by(|(i, a), (j, b)| {
                let da = a.deadline.unwrap_or(f64::INFINITY);
                let db = b.deadline.unwrap_or(f64::INFINITY);
                da.total_cmp(&db)
                    .then(a.arrival_time.total_cmp(&b.arrival_time))
                    .then(conns[*i].cid.cmp(&conns[*j].cid))
            })
            .map(|(i, p)| (i, u64::from(p.size)));
        let Some((i, size)) = pick else { break };
        if size > budget.running {
            break;
        }
        let p = conns[i].queue.pop_front().unwrap();
        budget.spend(size);
        out.push(&conns[i], p);
    }
    out
}

/// Deficit round over nrtPS then BE queues.
///
/// Every backlogged queue receives its quantum once per round. Starting from
/// the persisted position, the scheduler visits the next queue in visit
/// order that still has a pending visit this round and whose head packet
/// fits the running budget; queues whose head does not fit are deferred,
/// not skipped. A visit sends head packets while each fits both the deficit
/// counter and the running budget. A visit cut short by the budget (head
/// still covered by the deficit) stays pending and resumes without a new
/// quantum. When no queue has a pending visit, a new round begins. The phase
/// ends when no head packet fits the running budget. Counters of queues that
/// drain are reset to zero.
pub fn dfpq_round(
    conns: &mut [Connection],
    state: &mut DfpqState,
    budget: &mut FrameBudget,
) -> TransmissionList {
    let mut out = TransmissionList::default();
    let n = state.order.len();
    if n == 0 {
        return out;
    }
    let index: BTreeMap<ConnectionId, usize> = conns
        .iter()
        .enumerate()
        .map(|(i, c)| (c.cid, i))
        .collect();
    let slots: Vec<Option<usize>> = state.order.iter().map(|cid| index.get(cid).copied()).collect();
    let fits = |conns: &[Connection], slot: Option<usize>, running: u64| {
        slot.and_then(|i| head_size(&conns[i])).is_some_and(|s| s <= running)
    };

    loop {
        if !slots.iter().any(|&slot| fits(conns, slot, budget.running)) {
            break;
        }
        let pending = |state: &DfpqState, pos: usize| {
            let e = &state.entries[&state.order[pos]];
            e.resume || !e.credited
        };
        let pick = (0..n)
            .map(|k| (state.next + k) % n)
            .find(|&pos| pending(state, pos) && fits(conns, slots[pos], budget.running));
        let Some(pos) = pick else {
            // Nobody left in this round can use the budget. Start a new
            // round if some backlogged queue has no pending visit.
            if (0..n).any(|pos| pending(state, pos) && slots[pos].is_some_and(|i| !conns[i].queue.is_empty())) {
                break;
            }
            for e in state.entries.values_mut() {
                e.credited = false;
            }
            continue;
        };

        let i = slots[pos].unwrap();
        let entry = state.entries.get_mut(&state.order[pos]).unwrap();
        if !entry.resume {
            entry.deficit += entry.quantum;
            entry.credited = true;
        }
        entry.resume = false;
        while let Some(size) = head_size(&conns[i]) {
            if size > entry.deficit {
                break;
            }
            if size > budget.running {
                entry.resume = true;
                break;
            }
            let p = conns[i].queue.pop_front().unwrap();
            entry.deficit -= size;
            budget.spend(size);
            out.push(&conns[i], p);
        }
        if conns[i].queue.is_empty() {
            entry.deficit = 0;
        }
        state.next = (pos + 1) % n;
    }

    for (pos, slot) in slots.iter().enumerate() {
        if let Some(i) = *slot {
            if conns[i].queue.is_empty() {
                let e = state.entries.get_mut(&state.order[pos]).unwrap();
                e.deficit = 0;
                e.resume = false;
            }
        }
    }
    out
}

/// Proposed station scheduler: UGS, then rtPS by EDF, then the deficit round.
pub fn schedule_frame_ss1(
    conns: &mut [Connection],
    grant: u64,
    state: &mut DfpqState,
) -> TransmissionList {
    let mut budget = FrameBudget::new(grant);
    let mut out = serve_ugs(conns, &mut budget);
    out.extend(serve_rtps_edf(conns, &mut budget));
    budget.after_ugs_rtps = budget.running;
    out.extend(dfpq_round(conns, state, &mut budget));
    debug_assert!(out.total_bytes <= grant);
    out
}

/// Strict-priority comparator: classes in priority order, oldest head
/// packet first within a class (ties by CID). The first head packet that
/// does not fit blocks everything below it.
pub fn schedule_frame_ss2(conns: &mut [Connection], grant: u64) -> TransmissionList {
    let mut budget = FrameBudget::new(grant);
    let mut out = TransmissionList::default();
    for class in ServiceClass::ALL {
        let members = by_cid(conns, class);
        loop {
            let pick = members
                .iter()
                .filter_map(|&i| conns[i].queue.front().map(|p| (i, p.arrival_time)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(conns[a.0].cid.cmp(&conns[b.0].cid)));
            let Some((i, _)) = pick else { break };
            let size = head_size(&conns[i]).unwrap();
            if size > budget.running {
                return out;
            }
            let p = conns[i].queue.pop_front().unwrap();
            budget.spend(size);
            out.push(&conns[i], p);
        }
    }
    out
}

/// Grant-per-connection transmission: FIFO up to the connection's own grant.
pub fn transmit_fifo(conn: &mut Connection, grant: u64) -> TransmissionList {
    let mut out = TransmissionList::default();
    let mut left = grant;
    while let Some(size) = head_size(conn) {
        if size > left {
            break;
        }
        let p = conn.queue.pop_front().unwrap();
        left -= size;
        out.push(conn, p);
    }
    out
}
