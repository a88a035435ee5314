//! Synthetic per-connection traffic sources.
//!
//! Every source owns a ChaCha stream keyed by (run seed, CID), so a
//! connection's arrivals do not depend on which other connections exist.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::model::{ConnectionId, FrameConfig, Packet, ServiceClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficKind {
    /// Fixed-size packets at a constant rate, released at frame start.
    Cbr,
    /// Exponential on/off source; Poisson packet arrivals while on.
    OnOffVbr,
    /// Poisson arrivals of fixed-size bulks, split into packets.
    PoissonBulk,
    /// Poisson packet arrivals with random sizes.
    PoissonMix,
}

impl TrafficKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficKind::Cbr => "cbr",
            TrafficKind::OnOffVbr => "onoff",
            TrafficKind::PoissonBulk => "bulk",
            TrafficKind::PoissonMix => "mix",
        }
    }
}

impl std::str::FromStr for TrafficKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cbr" => Ok(TrafficKind::Cbr),
            "onoff" | "onoff_vbr" => Ok(TrafficKind::OnOffVbr),
            "bulk" | "poisson_bulk" => Ok(TrafficKind::PoissonBulk),
            "mix" | "poisson_mix" => Ok(TrafficKind::PoissonMix),
            other => Err(format!("unknown traffic model `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketSize {
    Fixed(u32),
    /// Uniform over the inclusive range.
    Uniform { lo: u32, hi: u32 },
}

impl PacketSize {
    pub fn mean(self) -> f64 {
        match self {
            PacketSize::Fixed(s) => f64::from(s),
            PacketSize::Uniform { lo, hi } => (f64::from(lo) + f64::from(hi)) / 2.0,
        }
    }

    pub fn max(self) -> u32 {
        match self {
            PacketSize::Fixed(s) => s,
            PacketSize::Uniform { hi, .. } => hi,
        }
    }

    pub fn min(self) -> u32 {
        match self {
            PacketSize::Fixed(s) => s,
            PacketSize::Uniform { lo, .. } => lo,
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> u32 {
        match self {
            PacketSize::Fixed(s) => s,
            PacketSize::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

impl fmt::Display for PacketSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PacketSize::Fixed(s) => write!(f, "{s}"),
            PacketSize::Uniform { lo, hi } => write!(f, "{lo}-{hi}"),
        }
    }
}

impl std::str::FromStr for PacketSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| format!("bad packet size `{t}`"))
        };
        match s.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi) = (parse(lo)?, parse(hi)?);
                if lo > hi {
                    return Err(format!("packet size range {lo}-{hi} is reversed"));
                }
                Ok(PacketSize::Uniform { lo, hi })
            }
            None => Ok(PacketSize::Fixed(parse(s)?)),
        }
    }
}

/// Parameters of one connection's traffic source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficModel {
    pub kind: TrafficKind,
    /// Long-run mean offered rate at rho = 1, kbit/s.
    pub mean_rate: f64,
    pub packet_size: PacketSize,
    /// Mean on period (on/off sources), ms.
    pub on_ms: f64,
    /// Mean off period (on/off sources), ms.
    pub off_ms: f64,
    /// Bytes per bulk arrival (bulk sources).
    pub bulk_size: u32,
}

impl TrafficModel {
    pub fn cbr(mean_rate: f64, size: u32) -> Self {
        TrafficModel {
            kind: TrafficKind::Cbr,
            mean_rate,
            packet_size: PacketSize::Fixed(size),
            on_ms: 0.0,
            off_ms: 0.0,
            bulk_size: 0,
        }
    }

    pub fn on_off(mean_rate: f64, packet_size: PacketSize, on_ms: f64, off_ms: f64) -> Self {
        TrafficModel {
            kind: TrafficKind::OnOffVbr,
            mean_rate,
            packet_size,
            on_ms,
            off_ms,
            bulk_size: 0,
        }
    }

    pub fn bulk(mean_rate: f64, packet_size: PacketSize, bulk_size: u32) -> Self {
        TrafficModel {
            kind: TrafficKind::PoissonBulk,
            mean_rate,
            packet_size,
            on_ms: 0.0,
            off_ms: 0.0,
            bulk_size,
        }
    }

    pub fn mix(mean_rate: f64, packet_size: PacketSize) -> Self {
        TrafficModel {
            kind: TrafficKind::PoissonMix,
            mean_rate,
            packet_size,
            on_ms: 0.0,
            off_ms: 0.0,
            bulk_size: 0,
        }
    }

    /// Checks rate and size bounds against the frame capacity.
    pub fn check(&self, uplink_capacity: u64) -> Result<(), String> {
        if !(self.mean_rate > 0.0 && self.mean_rate.is_finite()) {
            return Err(format!("mean_rate must be > 0 (got {})", self.mean_rate));
        }
        if self.packet_size.min() == 0 {
            return Err("packet sizes must be at least 1 byte".into());
        }
        if u64::from(self.packet_size.max()) > uplink_capacity {
            return Err(format!(
                "packet size {} exceeds uplink capacity {uplink_capacity}",
                self.packet_size.max()
            ));
        }
        match self.kind {
            TrafficKind::OnOffVbr if !(self.on_ms > 0.0 && self.off_ms > 0.0) => {
                Err("on_ms and off_ms must be > 0".into())
            }
            TrafficKind::PoissonBulk if self.bulk_size == 0 => Err("bulk_size must be > 0".into()),
            _ => Ok(()),
        }
    }
}

/// Global multiplier on every source's mean rate.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TrafficIntensity(f64);

impl TrafficIntensity {
    pub fn new(rho: f64) -> Result<Self, String> {
        if rho >= 0.0 && rho.is_finite() {
            Ok(TrafficIntensity(rho))
        } else {
            Err(format!("traffic intensity must be >= 0 (got {rho})"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for TrafficIntensity {
    fn default() -> Self {
        TrafficIntensity(1.0)
    }
}

/// Default source per class, tuned to the reference contract rates.
pub fn default_models() -> BTreeMap<ServiceClass, TrafficModel> {
    BTreeMap::from([
        (ServiceClass::Ugs, TrafficModel::cbr(256.0, 320)),
        (
            ServiceClass::Rtps,
            TrafficModel::on_off(1024.0, PacketSize::Uniform { lo: 100, hi: 1250 }, 500.0, 500.0),
        ),
        (
            ServiceClass::Nrtps,
            TrafficModel::bulk(1024.0, PacketSize::Fixed(1250), 1250),
        ),
        (
            ServiceClass::Be,
            TrafficModel::mix(512.0, PacketSize::Uniform { lo: 64, hi: 1250 }),
        ),
    ])
}

/// Seeds one of a connection's private streams. Stream 0 drives packet
/// sampling, stream 1 the on/off phase process, so the phase trajectory is
/// the same at every intensity.
pub fn source_rng(seed: u64, cid: ConnectionId, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(cid.0) * 2 + stream);
    rng
}

/// Stateful generator for one connection.
#[derive(Debug, Clone)]
pub struct TrafficSource {
    model: TrafficModel,
    max_latency: Option<f64>,
    rng: ChaCha8Rng,
    phase_rng: ChaCha8Rng,
    next_seq: u64,
    cbr_credit: f64,
    on: bool,
    phase_left_ms: f64,
}

impl TrafficSource {
    pub fn new(cid: ConnectionId, model: TrafficModel, max_latency: Option<f64>, seed: u64) -> Self {
        let rng = source_rng(seed, cid, 0);
        let mut phase_rng = source_rng(seed, cid, 1);
        let (on, phase_left_ms) = if model.kind == TrafficKind::OnOffVbr {
            let p_on = model.on_ms / (model.on_ms + model.off_ms);
            let on = phase_rng.random_bool(p_on.clamp(0.0, 1.0));
            let mean = if on { model.on_ms } else { model.off_ms };
            (on, sample_exp(&mut phase_rng, mean))
        } else {
            (false, 0.0)
        };
        TrafficSource {
            model,
            max_latency,
            rng,
            phase_rng,
            next_seq: 0,
            cbr_credit: 0.0,
            on,
            phase_left_ms,
        }
    }

    pub fn model(&self) -> &TrafficModel {
        &self.model
    }

    /// Arrivals during frame `frame_index`, sorted by arrival time.
    pub fn generate(
        &mut self,
        frame_index: u64,
        rho: TrafficIntensity,
        frame: &FrameConfig,
    ) -> Vec<Packet> {
        let start = frame.frame_start(frame_index);
        let dur = frame.frame_duration_ms;
        // Mean offered bytes per ms at this intensity.
        let bytes_per_ms = rho.value() * self.model.mean_rate / 8.0;

        let mut arrivals: Vec<(f64, u32)> = Vec::new();
        match self.model.kind {
            TrafficKind::Cbr => {
                self.cbr_credit += bytes_per_ms * dur;
                let size = self.model.packet_size.max();
                while self.cbr_credit >= f64::from(size) {
                    self.cbr_credit -= f64::from(size);
                    arrivals.push((start, size));
                }
            }
            TrafficKind::PoissonMix => {
                let n = sample_poisson(&mut self.rng, bytes_per_ms * dur / self.model.packet_size.mean());
                for _ in 0..n {
                    let t = start + self.rng.random::<f64>() * dur;
                    let size = self.model.packet_size.sample(&mut self.rng);
                    arrivals.push((t, size));
                }
            }
            TrafficKind::PoissonBulk => {
                let bulk = self.model.bulk_size;
                let n = sample_poisson(&mut self.rng, bytes_per_ms * dur / f64::from(bulk));
                for _ in 0..n {
                    let t = start + self.rng.random::<f64>() * dur;
                    let mut left = bulk;
                    while left > 0 {
                        let size = self.model.packet_size.sample(&mut self.rng).min(left);
                        arrivals.push((t, size));
                        left -= size;
                    }
                }
            }
            TrafficKind::OnOffVbr => {
                let on_time = self.advance_on_off(dur);
                let duty = self.model.on_ms / (self.model.on_ms + self.model.off_ms);
                let peak_bytes_per_ms = bytes_per_ms / duty;
                let n = sample_poisson(
                    &mut self.rng,
                    peak_bytes_per_ms * on_time / self.model.packet_size.mean(),
                );
                for _ in 0..n {
                    let t = start + self.rng.random::<f64>() * dur;
                    let size = self.model.packet_size.sample(&mut self.rng);
                    arrivals.push((t, size));
                }
            }
        }

        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
        arrivals
            .into_iter()
            .map(|(t, size)| {
                let p = Packet::new(self.next_seq, size, t, self.max_latency);
                self.next_seq += 1;
                p
            })
            .collect()
    }

    /// Walks the on/off process across `dur` ms; returns time spent on.
    fn advance_on_off(&mut self, dur: f64) -> f64 {
        let mut left = dur;
        let mut on_time = 0.0;
        while left > 0.0 {
            let step = self.phase_left_ms.min(left);
            if self.on {
                on_time += step;
            }
            left -= step;
            self.phase_left_ms -= step;
            if self.phase_left_ms <= 0.0 {
                self.on = !self.on;
                let mean = if self.on { self.model.on_ms } else { self.model.off_ms };
                self.phase_left_ms = sample_exp(&mut self.phase_rng, mean);
            }
        }
        on_time
    }
}

fn sample_poisson<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(d) => {
            let x: f64 = d.sample(rng);
            x as u64
        }
        Err(_) => 0,
    }
}

fn sample_exp<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    match Exp::new(1.0 / mean) {
        // A zero-length phase would stall the on/off walk.
        Ok(d) => d.sample(rng).max(1e-9),
        Err(_) => f64::INFINITY,
    }
}
