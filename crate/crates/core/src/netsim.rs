//! Connection-profile replay and transmission-cost modeling.
//!
//! Offloading cost is dominated by the round-trip time; the payload term
//! (`(n + m) * bytes_per_token` at a fixed symmetric bandwidth) is kept for
//! honesty but is tiny at the default 100 Mbps.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FormatError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetsimError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Round-trip time samples over simulated time, replayed as a step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttTrace {
    trace_id: String,
    /// `(offset seconds, rtt ms)`, strictly increasing offsets.
    samples: Vec<(f64, f64)>,
}

impl RttTrace {
    pub fn new(trace_id: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self, NetsimError> {
        if samples.is_empty() {
            return Err(NetsimError::InvalidTrace("trace is empty".into()));
        }
        for (i, &(t, rtt)) in samples.iter().enumerate() {
            if !t.is_finite() || !(rtt.is_finite() && rtt > 0.0) {
                return Err(NetsimError::InvalidTrace(format!(
                    "sample {i}: offset {t} / rtt {rtt} out of range"
                )));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(NetsimError::InvalidTrace(format!(
                    "sample {i}: offset {t} does not increase"
                )));
            }
        }
        Ok(Self {
            trace_id: trace_id.into(),
            samples,
        })
    }

    /// Single-sample trace with a fixed RTT.
    pub fn constant(trace_id: impl Into<String>, rtt_ms: f64) -> Result<Self, NetsimError> {
        Self::new(trace_id, vec![(0.0, rtt_ms)])
    }

    pub fn trace_id(&self) -> &str {
        &self.trace_id
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// RTT of the latest sample at or before `t`, clamped to the first and
    /// last samples outside the trace span.
    pub fn rtt_at(&self, t: f64) -> f64 {
        let idx = self.samples.partition_point(|&(off, _)| off <= t);
        self.samples[idx.saturating_sub(1)].1
    }

    pub fn mean_rtt(&self) -> f64 {
        self.samples.iter().map(|s| s.1).sum::<f64>() / self.samples.len() as f64
    }

    pub fn read_csv<R: Read>(trace_id: &str, input: R) -> Result<Self, NetsimError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| FormatError {
                line: 1,
                reason: e.to_string(),
            })?
            .clone();
        if header.iter().collect::<Vec<_>>() != ["t_offset_s", "rtt_ms"] {
            return Err(FormatError {
                line: 1,
                reason: format!("expected header t_offset_s,rtt_ms, found {:?}", header),
            }
            .into());
        }
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| FormatError {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                reason: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let parse = |i: usize, name: &str| -> Result<f64, FormatError> {
                rec.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| FormatError {
                        line,
                        reason: format!("cannot parse {name} from {:?}", rec.get(i)),
                    })
            };
            let t = parse(0, "t_offset_s")?;
            let rtt = parse(1, "rtt_ms")?;
            if let Some(&(prev, _)) = samples.last() {
                if t <= prev {
                    return Err(FormatError {
                        line,
                        reason: format!("offset {t} does not increase past {prev}"),
                    }
                    .into());
                }
            }
            if !(rtt > 0.0) {
                return Err(FormatError {
                    line,
                    reason: format!("rtt_ms must be > 0, got {rtt}"),
                }
                .into());
            }
            samples.push((t, rtt));
        }
        Self::new(trace_id, samples)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["t_offset_s", "rtt_ms"])?;
        for (t, rtt) in &self.samples {
            w.write_record([t.to_string(), rtt.to_string()])?;
        }
        w.flush()
    }
}

pub fn rtt_at(trace: &RttTrace, t: f64) -> f64 {
    trace.rtt_at(t)
}

/// Parameters of a synthetic connection profile: a mean-reverting RTT walk
/// with occasional congestion spikes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub trace_id: String,
    pub duration_s: f64,
    pub interval_s: f64,
    pub mean_rtt_ms: f64,
    pub sd_rtt_ms: f64,
    /// Per-step pull back toward the mean, in (0, 1].
    pub reversion: f64,
    pub spike_prob: f64,
    pub spike_ms: f64,
    pub min_rtt_ms: f64,
    pub seed: u64,
}

impl TraceSpec {
    /// Slow, jittery link (emulates the first connection profile).
    pub fn cp1(seed: u64) -> Self {
        Self {
            trace_id: "cp1".into(),
            duration_s: 4.0 * 3600.0,
            interval_s: 240.0,
            mean_rtt_ms: 70.0,
            sd_rtt_ms: 18.0,
            reversion: 0.2,
            spike_prob: 0.05,
            spike_ms: 60.0,
            min_rtt_ms: 20.0,
            seed,
        }
    }

    /// Faster link (emulates the second connection profile).
    pub fn cp2(seed: u64) -> Self {
        Self {
            trace_id: "cp2".into(),
            duration_s: 5.0 * 3600.0,
            interval_s: 240.0,
            mean_rtt_ms: 25.0,
            sd_rtt_ms: 6.0,
            reversion: 0.2,
            spike_prob: 0.03,
            spike_ms: 25.0,
            min_rtt_ms: 8.0,
            seed,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "cp1" => Some(Self::cp1(seed)),
            "cp2" => Some(Self::cp2(seed)),
            _ => None,
        }
    }

    pub fn generate(&self) -> Result<RttTrace, NetsimError> {
        if !(self.interval_s > 0.0 && self.duration_s >= 0.0) {
            return Err(NetsimError::InvalidParameter(
                "interval_s must be > 0 and duration_s >= 0".into(),
            ));
        }
        if !(self.reversion > 0.0 && self.reversion <= 1.0) || !(self.min_rtt_ms > 0.0) {
            return Err(NetsimError::InvalidParameter(
                "reversion must be in (0, 1] and min_rtt_ms > 0".into(),
            ));
        }
        let noise = Normal::new(0.0, self.sd_rtt_ms.max(0.0))
            .map_err(|e| NetsimError::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let steps = (self.duration_s / self.interval_s).floor() as usize + 1;
        let mut level = self.mean_rtt_ms;
        let mut samples = Vec::with_capacity(steps);
        for k in 0..steps {
            level += self.reversion * (self.mean_rtt_ms - level) + noise.sample(&mut rng);
            let mut rtt = level;
            if rng.random::<f64>() < self.spike_prob {
                rtt += self.spike_ms * rng.random::<f64>();
            }
            // keep traces readable: round to microseconds
            let rtt = (rtt.max(self.min_rtt_ms) * 1000.0).round() / 1000.0;
            samples.push((k as f64 * self.interval_s, rtt));
        }
        RttTrace::new(self.trace_id.clone(), samples)
    }
}

/// Symmetric link bandwidth and token encoding size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBandwidth")]
pub struct BandwidthModel {
    mbps: f64,
    bytes_per_token: f64,
}

#[derive(Deserialize)]
struct RawBandwidth {
    mbps: f64,
    bytes_per_token: f64,
}

impl TryFrom<RawBandwidth> for BandwidthModel {
    type Error = NetsimError;

    fn try_from(raw: RawBandwidth) -> Result<Self, Self::Error> {
        BandwidthModel::new(raw.mbps, raw.bytes_per_token)
    }
}

impl Default for BandwidthModel {
    fn default() -> Self {
        Self {
            mbps: 100.0,
            bytes_per_token: 2.0,
        }
    }
}

impl BandwidthModel {
    pub fn new(mbps: f64, bytes_per_token: f64) -> Result<Self, NetsimError> {
        if !(mbps.is_finite() && mbps > 0.0) {
            return Err(NetsimError::InvalidParameter(format!(
                "mbps must be > 0, got {mbps}"
            )));
        }
        if !(bytes_per_token.is_finite() && bytes_per_token >= 1.0) {
            return Err(NetsimError::InvalidParameter(format!(
                "bytes_per_token must be >= 1, got {bytes_per_token}"
            )));
        }
        Ok(Self {
            mbps,
            bytes_per_token,
        })
    }

    pub fn mbps(&self) -> f64 {
        self.mbps
    }

    pub fn bytes_per_token(&self) -> f64 {
        self.bytes_per_token
    }

    /// Serialization time in ms for `n` input plus `m` output tokens.
    pub fn payload_ms(&self, n: f64, m: f64) -> f64 {
        (n + m) * self.bytes_per_token * 8.0 / (self.mbps * 1000.0)
    }
}

/// The gateway's belief about the current round-trip time, refreshed from
/// timestamped cloud round trips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxEstimator {
    last_rtt: Option<f64>,
    last_update: Option<f64>,
    ewma_alpha: f64,
    initial_rtt: f64,
}

impl Default for TxEstimator {
    fn default() -> Self {
        Self {
            last_rtt: None,
            last_update: None,
            ewma_alpha: 1.0,
            initial_rtt: 50.0,
        }
    }
}

impl TxEstimator {
    pub fn new(ewma_alpha: f64, initial_rtt: f64) -> Result<Self, NetsimError> {
        if !(ewma_alpha > 0.0 && ewma_alpha <= 1.0) {
            return Err(NetsimError::InvalidParameter(format!(
                "ewma_alpha must be in (0, 1], got {ewma_alpha}"
            )));
        }
        if !(initial_rtt.is_finite() && initial_rtt > 0.0) {
            return Err(NetsimError::InvalidParameter(format!(
                "initial_rtt must be > 0, got {initial_rtt}"
            )));
        }
        Ok(Self {
            last_rtt: None,
            last_update: None,
            ewma_alpha,
            initial_rtt,
        })
    }

    pub fn last_rtt(&self) -> Option<f64> {
        self.last_rtt
    }

    pub fn last_update(&self) -> Option<f64> {
        self.last_update
    }

    pub fn ewma_alpha(&self) -> f64 {
        self.ewma_alpha
    }

    pub fn initial_rtt(&self) -> f64 {
        self.initial_rtt
    }

    /// Current RTT belief: the smoothed observation, or the prior.
    pub fn rtt_estimate(&self) -> f64 {
        self.last_rtt.unwrap_or(self.initial_rtt)
    }

    /// Folds a measured round trip into the estimate.
    #[must_use]
    pub fn observe(&self, measured_rtt: f64, now: f64) -> Self {
        debug_assert!(measured_rtt > 0.0);
        debug_assert!(self.last_update.is_none_or(|t| now >= t));
        let prev = self.last_rtt.unwrap_or(measured_rtt);
        Self {
            last_rtt: Some(self.ewma_alpha * measured_rtt + (1.0 - self.ewma_alpha) * prev),
            last_update: Some(now),
            ..*self
        }
    }

    /// Estimated offloading cost: RTT belief plus payload serialization.
    pub fn tx_estimate(&self, bw: &BandwidthModel, n: f64, m_hat: f64) -> f64 {
        self.rtt_estimate() + bw.payload_ms(n, m_hat)
    }
}

pub fn observe_roundtrip(est: &TxEstimator, measured_rtt: f64, now: f64) -> TxEstimator {
    est.observe(measured_rtt, now)
}

pub fn current_tx_estimate(est: &TxEstimator, bw: &BandwidthModel, n: f64, m_hat: f64) -> f64 {
    est.tx_estimate(bw, n, m_hat)
}

/// Ground-truth offloading cost at simulated time `t`.
pub fn realized_tx(trace: &RttTrace, bw: &BandwidthModel, t: f64, n: f64, m: f64) -> f64 {
    trace.rtt_at(t) + bw.payload_ms(n, m)
}
