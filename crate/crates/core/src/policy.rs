//! Edge/cloud dispatch policies.
//!
//! Every estimate-driven policy applies the same rule: run at the edge when
//!
//! ```text
//! T_exe,edge(n, m̂) <= T_tx + T_exe,cloud(n, m̂)
//! ```
//!
//! and offload otherwise. Ties stay at the edge. C-NMT predicts `m̂` from `n`
//! with the language pair's [`LengthModel`]; Naive plugs in the corpus-wide
//! mean output length. The Oracle sees realized latencies instead.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{DeviceProfile, LengthModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Edge,
    Cloud,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Edge => "edge",
            Target::Cloud => "cloud",
        })
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "edge" => Ok(Target::Edge),
            "cloud" => Ok(Target::Cloud),
            other => Err(format!("unknown target {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[serde(rename = "cnmt")]
    CNmt,
    Naive,
    StaticEdge,
    StaticCloud,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::CNmt,
        PolicyKind::Naive,
        PolicyKind::StaticEdge,
        PolicyKind::StaticCloud,
        PolicyKind::Oracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::CNmt => "cnmt",
            PolicyKind::Naive => "naive",
            PolicyKind::StaticEdge => "static_edge",
            PolicyKind::StaticCloud => "static_cloud",
            PolicyKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || (norm == "c_nmt" && *k == PolicyKind::CNmt))
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

/// A routing choice together with the estimates that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub target: Target,
    pub est_edge: f64,
    /// Cloud execution plus transmission estimate.
    pub est_cloud_total: f64,
    pub rationale: PolicyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub edge: DeviceProfile,
    pub cloud: DeviceProfile,
    pub length_model: LengthModel,
    /// Mean output length, used by Naive only.
    pub m_avg: f64,
}

impl PolicyConfig {
    pub fn new(
        kind: PolicyKind,
        edge: DeviceProfile,
        cloud: DeviceProfile,
        length_model: LengthModel,
        m_avg: f64,
    ) -> Result<Self, String> {
        if kind == PolicyKind::Naive && !(m_avg >= 1.0) {
            return Err(format!("naive policy needs m_avg >= 1, got {m_avg}"));
        }
        Ok(Self {
            kind,
            edge,
            cloud,
            length_model,
            m_avg,
        })
    }

    #[must_use]
    pub fn with_kind(&self, kind: PolicyKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    /// The output length this policy assumes for an input of `n` tokens.
    pub fn assumed_output_len(&self, n: f64) -> f64 {
        match self.kind {
            PolicyKind::Naive => self.m_avg,
            _ => self.length_model.predict_len(n),
        }
    }

    /// Estimate-driven decision for any kind except [`PolicyKind::Oracle`],
    /// which needs realized quantities (see [`oracle_decide`]).
    pub fn decide(&self, n: f64, t_tx: f64) -> Decision {
        match self.kind {
            PolicyKind::CNmt => cnmt_decide(self, n, t_tx),
            PolicyKind::Naive => naive_decide(self, n, t_tx),
            PolicyKind::StaticEdge | PolicyKind::StaticCloud => static_decide(self, n, t_tx),
            PolicyKind::Oracle => {
                // best available guess without realized values
                let mut d = cnmt_decide(self, n, t_tx);
                d.rationale = PolicyKind::Oracle;
                d
            }
        }
    }
}

fn rule(cfg: &PolicyConfig, n: f64, m_hat: f64, t_tx: f64, kind: PolicyKind) -> Decision {
    let est_edge = cfg.edge.exec_time(n, m_hat);
    let est_cloud_total = t_tx + cfg.cloud.exec_time(n, m_hat);
    Decision {
        target: if est_edge <= est_cloud_total {
            Target::Edge
        } else {
            Target::Cloud
        },
        est_edge,
        est_cloud_total,
        rationale: kind,
    }
}

pub fn cnmt_decide(cfg: &PolicyConfig, n: f64, t_tx: f64) -> Decision {
    let m_hat = cfg.length_model.predict_len(n);
    rule(cfg, n, m_hat, t_tx, PolicyKind::CNmt)
}

pub fn naive_decide(cfg: &PolicyConfig, n: f64, t_tx: f64) -> Decision {
    rule(cfg, n, cfg.m_avg, t_tx, PolicyKind::Naive)
}

/// Fixed routing; the estimates are filled with the C-NMT ones for reporting.
pub fn static_decide(cfg: &PolicyConfig, n: f64, t_tx: f64) -> Decision {
    let (target, kind) = match cfg.kind {
        PolicyKind::StaticCloud => (Target::Cloud, PolicyKind::StaticCloud),
        _ => (Target::Edge, PolicyKind::StaticEdge),
    };
    let m_hat = cfg.length_model.predict_len(n);
    Decision {
        target,
        rationale: kind,
        ..rule(cfg, n, m_hat, t_tx, kind)
    }
}

/// Post-hoc choice over realized latencies. Ties stay at the edge.
pub fn oracle_decide(realized_edge: f64, realized_cloud_exec: f64, realized_tx: f64) -> Decision {
    let est_cloud_total = realized_tx + realized_cloud_exec;
    Decision {
        target: if realized_edge <= est_cloud_total {
            Target::Edge
        } else {
            Target::Cloud
        },
        est_edge: realized_edge,
        est_cloud_total,
        rationale: PolicyKind::Oracle,
    }
}

/// The input length at which C-NMT starts offloading for a fixed `t_tx`, when
/// the edge's effective per-token slope exceeds the cloud's.
pub fn cnmt_crossover(cfg: &PolicyConfig, t_tx: f64) -> Option<f64> {
    let g = cfg.length_model.gamma();
    let d = cfg.length_model.delta();
    let slope_e = cfg.edge.alpha_n() + cfg.edge.alpha_m() * g;
    let slope_c = cfg.cloud.alpha_n() + cfg.cloud.alpha_m() * g;
    if slope_e <= slope_c {
        return None;
    }
    let icpt_e = cfg.edge.alpha_m() * d + cfg.edge.beta();
    let icpt_c = cfg.cloud.alpha_m() * d + cfg.cloud.beta() + t_tx;
    Some((icpt_c - icpt_e) / (slope_e - slope_c))
}
