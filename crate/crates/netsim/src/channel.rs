use crate::topology::{index_of, Topology};
use crate::NetsimError;
use epic_core::node::NodeId;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const NANOS_PER_MS: f64 = 1e6;

pub fn ms_to_ns(ms: f64) -> u64 {
    (ms * NANOS_PER_MS).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Medium access delay per segment before contention scaling.
    pub base_delay_ms: f64,
    /// Upper bound of the uniform extra delay per segment.
    pub jitter_ms: f64,
    /// Access delay is `base * (1 + neighbours / contention_divisor)`.
    pub contention_divisor: f64,
    pub bitrate_bps: f64,
    /// Per-segment transport and network header, counted in airtime only.
    pub header_bytes: usize,
    pub mss: usize,
    /// Independent loss probability of each segment transmission.
    pub loss: f64,
    /// Extra attempts per segment after a loss.
    pub retries: u32,
    /// Wired gateway to utility delay; never lossy.
    pub utility_link_ms: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            base_delay_ms: 2.0,
            jitter_ms: 1.0,
            contention_divisor: 10.0,
            bitrate_bps: 1_000_000.0,
            header_bytes: 40,
            mss: 536,
            loss: 0.01,
            retries: 2,
            utility_link_ms: 5.0,
        }
    }
}

impl ChannelParams {
    /// Lossless, jitter-free variant of these parameters.
    pub fn ideal(self) -> Self {
        ChannelParams {
            loss: 0.0,
            jitter_ms: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        let delays = [self.base_delay_ms, self.jitter_ms, self.utility_link_ms];
        if delays.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(NetsimError::Config("delays must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return Err(NetsimError::Config(format!("loss {} outside [0, 1]", self.loss)));
        }
        if self.mss == 0 || !(self.bitrate_bps > 0.0) || !(self.contention_divisor > 0.0) {
            return Err(NetsimError::Config("mss, bitrate and contention divisor must be positive".into()));
        }
        Ok(())
    }

    /// Payload sizes of the segments carrying `bytes`.
    pub fn segments(&self, bytes: usize) -> Vec<usize> {
        let mut out = vec![self.mss; bytes / self.mss];
        if bytes % self.mss != 0 || bytes == 0 {
            out.push(bytes % self.mss);
        }
        out
    }
}

/// One attempt to move one segment over one hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SegmentRecord {
    pub from: NodeId,
    pub to: NodeId,
    pub bytes: usize,
    pub start_ns: u64,
    pub end_ns: u64,
    pub delivered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    /// Time the last segment finished, delivered or not.
    pub done_ns: u64,
    pub delivered: bool,
}

/// Half-duplex radios: a node either sends or receives one segment at a
/// time, and transmissions are served in request order.
pub struct Channel {
    params: ChannelParams,
    busy_until: Vec<u64>,
    audit: Vec<SegmentRecord>,
}

impl Channel {
    pub fn new(params: ChannelParams, nodes: usize) -> Self {
        Channel {
            params,
            busy_until: vec![0; nodes],
            audit: Vec::new(),
        }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn audit(&self) -> &[SegmentRecord] {
        &self.audit
    }

    pub fn take_audit(&mut self) -> Vec<SegmentRecord> {
        std::mem::take(&mut self.audit)
    }

    pub fn reset(&mut self) {
        self.busy_until.iter_mut().for_each(|b| *b = 0);
        self.audit.clear();
    }

    fn access_ns(&self, topo: &Topology, from: NodeId, rng: &mut ChaCha8Rng) -> u64 {
        let p = &self.params;
        let contention = 1.0 + topo.degree(from) as f64 / p.contention_divisor;
        let jitter = if p.jitter_ms > 0.0 { rng.gen_range(0.0..p.jitter_ms) } else { 0.0 };
        ms_to_ns(p.base_delay_ms * contention + jitter)
    }

    fn airtime_ns(&self, bytes: usize) -> u64 {
        let bits = ((bytes + self.params.header_bytes) * 8) as f64;
        (bits / self.params.bitrate_bps * 1e9).round() as u64
    }

    /// Sends `bytes` from `from` to its neighbour `to`, starting no earlier
    /// than `now_ns`. A segment lost on every attempt loses the packet.
    pub fn send(
        &mut self,
        topo: &Topology,
        from: NodeId,
        to: NodeId,
        bytes: usize,
        now_ns: u64,
        rng: &mut ChaCha8Rng,
    ) -> Delivery {
        let (fi, ti) = (index_of(from), index_of(to));
        let mut t = now_ns.max(self.busy_until[fi]).max(self.busy_until[ti]);
        let mut delivered = true;
        for seg in self.params.segments(bytes) {
            let mut ok = false;
            for _ in 0..=self.params.retries {
                let start = t;
                t += self.access_ns(topo, from, rng) + self.airtime_ns(seg);
                ok = self.params.loss == 0.0 || rng.gen::<f64>() >= self.params.loss;
                self.audit.push(SegmentRecord {
                    from,
                    to,
                    bytes: seg,
                    start_ns: start,
                    end_ns: t,
                    delivered: ok,
                });
                if ok {
                    break;
                }
            }
            if !ok {
                delivered = false;
                break;
            }
        }
        self.busy_until[fi] = t;
        self.busy_until[ti] = t;
        Delivery { done_ns: t, delivered }
    }
}
