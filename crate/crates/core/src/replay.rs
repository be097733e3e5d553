//! Decision logs and offline replay.
//!
//! Simulator runs and the live gateway write the same CSV row layout. Given
//! the logged input length and RTT belief, [`DispatchModel::decide`]
//! reproduces each routing decision bit-for-bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::model::FormatError;
use crate::netsim::BandwidthModel;
use crate::policy::{oracle_decide, Decision, PolicyConfig, PolicyKind, Target};

/// Everything the dispatcher needs to turn `(n, rtt belief)` into a decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchModel {
    pub policy: PolicyConfig,
    #[serde(default)]
    pub bandwidth: BandwidthModel,
}

impl DispatchModel {
    /// Transmission estimate for `n` under this policy's length assumption.
    pub fn tx_estimate(&self, n: f64, rtt_estimate: f64) -> f64 {
        let m_hat = self.policy.assumed_output_len(n);
        rtt_estimate + self.bandwidth.payload_ms(n, m_hat)
    }

    pub fn decide(&self, n: f64, rtt_estimate: f64) -> Decision {
        self.policy.decide(n, self.tx_estimate(n, rtt_estimate))
    }
}

pub const LOG_HEADER: [&str; 13] = [
    "request_id",
    "decision",
    "est_edge_ms",
    "est_cloud_ms",
    "realized_edge_ms",
    "realized_cloud_ms",
    "realized_tx_ms",
    "charged_ms",
    "clock_s",
    "n",
    "m_true",
    "rtt_estimate_ms",
    "queue_ms",
];

/// One row of a decision log. Quantities a live gateway cannot observe
/// (e.g. the edge time of an offloaded request) are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub request_id: String,
    pub decision: Target,
    pub est_edge_ms: f64,
    pub est_cloud_ms: f64,
    pub realized_edge_ms: Option<f64>,
    pub realized_cloud_ms: Option<f64>,
    pub realized_tx_ms: Option<f64>,
    pub charged_ms: f64,
    pub clock_s: f64,
    pub n: u32,
    pub m_true: Option<u32>,
    pub rtt_estimate_ms: f64,
    pub queue_ms: Option<f64>,
}

pub fn log_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn write_log<W: Write>(out: W, rows: &[LogRow]) -> std::io::Result<()> {
    let mut w = log_writer(out);
    if rows.is_empty() {
        w.write_record(LOG_HEADER)?;
    }
    for r in rows {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    w.flush()
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<LogRow>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let header = rdr.headers().map_err(|e| FormatError {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != LOG_HEADER {
        return Err(FormatError {
            line: 1,
            reason: format!("unexpected decision-log header {:?}", header),
        });
    }
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| FormatError {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub total: usize,
    pub matched: usize,
    /// Human-readable description of each mismatch.
    pub mismatches: Vec<String>,
}

impl ReplayOutcome {
    pub fn all_match(&self) -> bool {
        self.matched == self.total
    }
}

/// Recomputes each logged decision offline and compares targets and
/// estimates exactly.
pub fn replay(rows: &[LogRow], model: &DispatchModel) -> ReplayOutcome {
    let mut mismatches = Vec::new();
    for row in rows {
        let d = if model.policy.kind == PolicyKind::Oracle {
            match (
                row.realized_edge_ms,
                row.realized_cloud_ms,
                row.realized_tx_ms,
            ) {
                (Some(e), Some(c), Some(t)) => oracle_decide(e, c, t),
                _ => {
                    mismatches.push(format!(
                        "{}: oracle replay needs realized values",
                        row.request_id
                    ));
                    continue;
                }
            }
        } else {
            model.decide(row.n as f64, row.rtt_estimate_ms)
        };
        if d.target != row.decision
            || d.est_edge.to_bits() != row.est_edge_ms.to_bits()
            || d.est_cloud_total.to_bits() != row.est_cloud_ms.to_bits()
        {
            mismatches.push(format!(
                "{}: logged {} ({} vs {}), replayed {} ({} vs {})",
                row.request_id,
                row.decision,
                row.est_edge_ms,
                row.est_cloud_ms,
                d.target,
                d.est_edge,
                d.est_cloud_total
            ));
        }
    }
    ReplayOutcome {
        total: rows.len(),
        matched: rows.len() - mismatches.len(),
        mismatches,
    }
}
