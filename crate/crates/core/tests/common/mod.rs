//! Reference implementations used as test oracles. None of them share code
//! with the library beyond plain data types.

#![allow(dead_code)]

use std::collections::VecDeque;

/// Byte-at-a-time allocator. After the reserved minimum, each further byte
/// goes to the unmet connection whose excess per unit weight is smallest;
/// ties go to the lower index.
pub fn byte_allocator(capacity: u64, requests: &[u64], minimum: &[u64], weights: &[f64]) -> Vec<u64> {
    let n = requests.len();
    let mut alloc: Vec<u64> = (0..n).map(|i| requests[i].min(minimum[i])).collect();
    let mut left = capacity - alloc.iter().sum::<u64>();
    let mut excess = vec![0u64; n];
    while left > 0 {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if alloc[i] >= requests[i] {
                continue;
            }
            let served = excess[i] as f64 / weights[i];
            match best {
                Some(b) if excess[b] as f64 / weights[b] <= served => {}
                _ => best = Some(i),
            }
        }
        let Some(i) = best else { break };
        alloc[i] += 1;
        excess[i] += 1;
        left -= 1;
    }
    alloc
}

/// Deficit round robin with a per-frame byte budget.
///
/// Queues are visited cyclically from a persistent pointer. Each queue is
/// owed one quantum per round; a visit that the budget interrupts while the
/// head is still covered by the counter is finished later without a fresh
/// quantum. A new round starts only once nobody is owed a visit.
#[derive(Debug, Clone)]
pub struct RefDrr {
    pub quanta: Vec<u64>,
    pub queues: Vec<VecDeque<u64>>,
    pub dc: Vec<u64>,
    visited: Vec<bool>,
    interrupted: Vec<bool>,
    pointer: usize,
}

impl RefDrr {
    pub fn new(quanta: Vec<u64>, queues: Vec<VecDeque<u64>>) -> Self {
        let n = quanta.len();
        RefDrr {
            quanta,
            queues,
            dc: vec![0; n],
            visited: vec![false; n],
            interrupted: vec![false; n],
            pointer: 0,
        }
    }

    fn owed(&self, q: usize) -> bool {
        self.interrupted[q] || !self.visited[q]
    }

    fn head_fits(&self, q: usize, budget: u64) -> bool {
        self.queues[q].front().is_some_and(|&s| s <= budget)
    }

    /// Serves one frame; returns (queue, size) in transmission order.
    pub fn frame(&mut self, mut budget: u64) -> Vec<(usize, u64)> {
        let n = self.quanta.len();
        let mut sent = Vec::new();
        while (0..n).any(|q| self.head_fits(q, budget)) {
            let mut chosen = None;
            for k in 0..n {
                let q = (self.pointer + k) % n;
                if self.owed(q) && self.head_fits(q, budget) {
                    chosen = Some(q);
                    break;
                }
            }
            let q = match chosen {
                Some(q) => q,
                None => {
                    if (0..n).any(|q| self.owed(q) && !self.queues[q].is_empty()) {
                        break;
                    }
                    self.visited.iter_mut().for_each(|v| *v = false);
                    continue;
                }
            };
            if self.interrupted[q] {
                self.interrupted[q] = false;
            } else {
                self.dc[q] += self.quanta[q];
                self.visited[q] = true;
            }
            while let Some(&size) = self.queues[q].front() {
                if size > self.dc[q] {
                    break;
                }
                if size > budget {
                    self.interrupted[q] = true;
                    break;
                }
                self.queues[q].pop_front();
                self.dc[q] -= size;
                budget -= size;
                sent.push((q, size));
            }
            if self.queues[q].is_empty() {
                self.dc[q] = 0;
            }
            self.pointer = (q + 1) % n;
        }
        for q in 0..n {
            if self.queues[q].is_empty() {
                self.dc[q] = 0;
                self.interrupted[q] = false;
            }
        }
        sent
    }
}

/// Textbook deficit round robin with unlimited budget: rounds over the
/// active list, quantum added on every visit, counter cleared on empty.
pub fn classic_drr(quanta: &[u64], queues: &[Vec<u64>]) -> Vec<(usize, u64)> {
    let mut queues: Vec<VecDeque<u64>> = queues.iter().map(|q| q.iter().copied().collect()).collect();
    let mut dc = vec![0u64; quanta.len()];
    let mut out = Vec::new();
    while queues.iter().any(|q| !q.is_empty()) {
        for i in 0..queues.len() {
            if queues[i].is_empty() {
                continue;
            }
            dc[i] += quanta[i];
            while let Some(&s) = queues[i].front() {
                if s > dc[i] {
                    break;
                }
                dc[i] -= s;
                out.push((i, s));
                queues[i].pop_front();
            }
            if queues[i].is_empty() {
                dc[i] = 0;
            }
        }
    }
    out
}

/// Maximum lateness of sending jobs `(size, deadline)` back to back from
/// time `start` at one byte per time unit.
pub fn max_lateness(start: f64, jobs: &[(u64, f64)]) -> f64 {
    let mut t = start;
    let mut worst = f64::NEG_INFINITY;
    for &(size, deadline) in jobs {
        t += size as f64;
        worst = worst.max(t - deadline);
    }
    worst
}

/// Smallest maximum lateness over every ordering of `jobs`.
pub fn brute_force_min_lateness(start: f64, jobs: &[(u64, f64)]) -> f64 {
    fn go(start: f64, rest: &mut Vec<(u64, f64)>, chosen: &mut Vec<(u64, f64)>, best: &mut f64) {
        if rest.is_empty() {
            *best = best.min(max_lateness(start, chosen));
            return;
        }
        for i in 0..rest.len() {
            let job = rest.remove(i);
            chosen.push(job);
            go(start, rest, chosen, best);
            chosen.pop();
            rest.insert(i, job);
        }
    }
    let mut best = f64::INFINITY;
    go(start, &mut jobs.to_vec(), &mut Vec::new(), &mut best);
    best
}

/// Jain's index evaluated directly from its definition.
pub fn jain(rates: &[f64]) -> f64 {
    let n = rates.len() as f64;
    let s: f64 = rates.iter().sum();
    let q: f64 = rates.iter().map(|r| r * r).sum();
    s * s / (n * q)
}
