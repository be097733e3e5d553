//! Trace-driven simulation of the gateway.
//!
//! In the default serial mode requests are issued back to back: each one is
//! routed, charged its realized latency, and the clock advances by that
//! charge before the next request is considered. Both devices' latencies and
//! the transmission cost are realized for every request regardless of the
//! routing choice, so the Oracle can be evaluated from the same records.
//!
//! Poisson mode adds seeded open-loop arrivals with one FIFO queue per device;
//! charged latency then includes queueing delay.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FormatError;
use crate::netsim::{realized_tx, BandwidthModel, RttTrace, TxEstimator};
use crate::policy::{oracle_decide, Decision, PolicyConfig, PolicyKind, Target};
use crate::replay::{self, DispatchModel, LogRow};
use crate::workload::{Corpus, DeviceOracle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Serial,
    /// Open-loop arrivals, `rate` requests per second.
    Poisson { rate: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub corpus: Corpus,
    pub edge_oracle: DeviceOracle,
    pub cloud_oracle: DeviceOracle,
    pub trace: RttTrace,
    pub bandwidth: BandwidthModel,
    pub policy: PolicyConfig,
    pub estimator_init: TxEstimator,
    pub mode: SimMode,
    /// Synthetic round trip every this many simulated seconds; off when `None`.
    pub probe_interval_s: Option<f64>,
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.policy.kind == PolicyKind::Naive && !(self.policy.m_avg >= 1.0) {
            return Err(SimError::Config(format!(
                "naive policy needs m_avg >= 1, got {}",
                self.policy.m_avg
            )));
        }
        if let SimMode::Poisson { rate, .. } = self.mode {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(SimError::Config(format!(
                    "poisson rate must be > 0, got {rate}"
                )));
            }
        }
        if let Some(p) = self.probe_interval_s {
            if !(p.is_finite() && p > 0.0) {
                return Err(SimError::Config(format!(
                    "probe interval must be > 0, got {p}"
                )));
            }
        }
        Ok(())
    }

    fn dispatch(&self) -> DispatchModel {
        DispatchModel {
            policy: self.policy.clone(),
            bandwidth: self.bandwidth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: u64,
    pub n: u32,
    pub m_true: u32,
    pub decision: Decision,
    pub realized_edge: f64,
    pub realized_cloud_exec: f64,
    pub realized_tx: f64,
    /// Latency actually incurred, including any queueing delay.
    pub charged: f64,
    pub queueing: f64,
    pub clock_at_dispatch: f64,
    /// RTT belief the decision was made with.
    pub rtt_estimate: f64,
}

impl RequestRecord {
    /// Latency of the chosen path without queueing.
    pub fn service_latency(&self) -> f64 {
        match self.decision.target {
            Target::Edge => self.realized_edge,
            Target::Cloud => self.realized_tx + self.realized_cloud_exec,
        }
    }

    pub fn to_log_row(&self) -> LogRow {
        LogRow {
            request_id: self.request_id.to_string(),
            decision: self.decision.target,
            est_edge_ms: self.decision.est_edge,
            est_cloud_ms: self.decision.est_cloud_total,
            realized_edge_ms: Some(self.realized_edge),
            realized_cloud_ms: Some(self.realized_cloud_exec),
            realized_tx_ms: Some(self.realized_tx),
            charged_ms: self.charged,
            clock_s: self.clock_at_dispatch,
            n: self.n,
            m_true: Some(self.m_true),
            rtt_estimate_ms: self.rtt_estimate,
            queue_ms: Some(self.queueing),
        }
    }

    fn from_log_row(row: &LogRow, line: u64, rationale: PolicyKind) -> Result<Self, FormatError> {
        let missing = |what: &str| FormatError {
            line,
            reason: format!("simulation record is missing {what}"),
        };
        Ok(Self {
            request_id: row.request_id.parse().map_err(|_| FormatError {
                line,
                reason: format!("request_id {:?} is not an integer", row.request_id),
            })?,
            n: row.n,
            m_true: row.m_true.ok_or_else(|| missing("m_true"))?,
            decision: Decision {
                target: row.decision,
                est_edge: row.est_edge_ms,
                est_cloud_total: row.est_cloud_ms,
                rationale,
            },
            realized_edge: row
                .realized_edge_ms
                .ok_or_else(|| missing("realized_edge_ms"))?,
            realized_cloud_exec: row
                .realized_cloud_ms
                .ok_or_else(|| missing("realized_cloud_ms"))?,
            realized_tx: row
                .realized_tx_ms
                .ok_or_else(|| missing("realized_tx_ms"))?,
            charged: row.charged_ms,
            queueing: row.queue_ms.ok_or_else(|| missing("queue_ms"))?,
            clock_at_dispatch: row.clock_s,
            rtt_estimate: row.rtt_estimate_ms,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub edge_seed: u64,
    pub cloud_seed: u64,
    pub arrival_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: PolicyKind,
    pub records: Vec<RequestRecord>,
    pub total: f64,
    pub trace_id: String,
    pub seeds: SeedProvenance,
}

impl RunResult {
    fn from_records(
        policy: PolicyKind,
        records: Vec<RequestRecord>,
        trace_id: String,
        seeds: SeedProvenance,
    ) -> Self {
        let total = records.iter().map(|r| r.charged).sum();
        Self {
            policy,
            records,
            total,
            trace_id,
            seeds,
        }
    }

    pub fn count(&self, target: Target) -> usize {
        self.records
            .iter()
            .filter(|r| r.decision.target == target)
            .count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows: Vec<LogRow> = self.records.iter().map(RequestRecord::to_log_row).collect();
        replay::write_log(out, &rows)
    }

    /// Reads records written by [`RunResult::write_csv`]. The CSV does not carry
    /// trace or seed provenance; those are filled from the arguments.
    pub fn read_csv<R: Read>(
        input: R,
        policy: PolicyKind,
        trace_id: &str,
        seeds: SeedProvenance,
    ) -> Result<Self, FormatError> {
        let rows = replay::read_log(input)?;
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, r)| RequestRecord::from_log_row(r, i as u64 + 2, policy))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_records(policy, records, trace_id.into(), seeds))
    }
}

fn seeds(cfg: &SimConfig) -> SeedProvenance {
    SeedProvenance {
        edge_seed: cfg.edge_oracle.seed,
        cloud_seed: cfg.cloud_oracle.seed,
        arrival_seed: match cfg.mode {
            SimMode::Serial => None,
            SimMode::Poisson { seed, .. } => Some(seed),
        },
    }
}

/// Applies every due probe up to `now`.
fn run_probes(
    est: &mut TxEstimator,
    next_probe: &mut Option<f64>,
    interval: Option<f64>,
    trace: &RttTrace,
    now: f64,
) {
    if let (Some(t), Some(p)) = (next_probe.as_mut(), interval) {
        while *t <= now {
            *est = est.observe(trace.rtt_at(*t), *t);
            *t += p;
        }
    }
}

struct Realized {
    edge: f64,
    cloud: f64,
    tx: f64,
}

fn route(
    cfg: &SimConfig,
    dispatch: &DispatchModel,
    n: f64,
    rtt_estimate: f64,
    real: &Realized,
) -> Decision {
    if cfg.policy.kind == PolicyKind::Oracle {
        oracle_decide(real.edge, real.cloud, real.tx)
    } else {
        dispatch.decide(n, rtt_estimate)
    }
}

pub fn run_simulation(cfg: &SimConfig) -> Result<RunResult, SimError> {
    cfg.validate()?;
    let records = match cfg.mode {
        SimMode::Serial => run_serial(cfg),
        SimMode::Poisson { rate, seed } => run_poisson(cfg, rate, seed),
    };
    Ok(RunResult::from_records(
        cfg.policy.kind,
        records,
        cfg.trace.trace_id().to_string(),
        seeds(cfg),
    ))
}

fn realize(cfg: &SimConfig, req: &crate::workload::Request, clock: f64) -> Realized {
    Realized {
        edge: cfg.edge_oracle.realize(req),
        cloud: cfg.cloud_oracle.realize(req),
        tx: realized_tx(
            &cfg.trace,
            &cfg.bandwidth,
            clock,
            req.n as f64,
            req.m_true as f64,
        ),
    }
}

fn run_serial(cfg: &SimConfig) -> Vec<RequestRecord> {
    let dispatch = cfg.dispatch();
    let mut est = cfg.estimator_init;
    let mut next_probe = cfg.probe_interval_s.map(|_| 0.0);
    let mut clock = 0.0f64;
    let mut records = Vec::with_capacity(cfg.corpus.len());

    for req in cfg.corpus.requests() {
        run_probes(
            &mut est,
            &mut next_probe,
            cfg.probe_interval_s,
            &cfg.trace,
            clock,
        );
        let n = req.n as f64;
        let rtt_estimate = est.rtt_estimate();
        let real = realize(cfg, req, clock);
        let decision = route(cfg, &dispatch, n, rtt_estimate, &real);
        let charged = match decision.target {
            Target::Edge => real.edge,
            Target::Cloud => real.tx + real.cloud,
        };
        records.push(RequestRecord {
            request_id: req.id,
            n: req.n,
            m_true: req.m_true,
            decision,
            realized_edge: real.edge,
            realized_cloud_exec: real.cloud,
            realized_tx: real.tx,
            charged,
            queueing: 0.0,
            clock_at_dispatch: clock,
            rtt_estimate,
        });
        let dispatched_at = clock;
        clock += charged / 1000.0;
        // probes that fired while this request was in flight land first
        run_probes(
            &mut est,
            &mut next_probe,
            cfg.probe_interval_s,
            &cfg.trace,
            clock,
        );
        if decision.target == Target::Cloud {
            est = est.observe(cfg.trace.rtt_at(dispatched_at), clock);
        }
    }
    records
}

/// Pending cloud response, ordered so the heap pops the earliest first.
struct Completion {
    at: f64,
    seq: u64,
    rtt: f64,
}

impl PartialEq for Completion {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Completion {}

impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Completion {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn run_poisson(cfg: &SimConfig, rate: f64, seed: u64) -> Vec<RequestRecord> {
    let dispatch = cfg.dispatch();
    let gaps = Exp::new(rate).expect("validated rate");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = cfg.estimator_init;
    let mut next_probe = cfg.probe_interval_s.map(|_| 0.0);
    let mut pending: BinaryHeap<Completion> = BinaryHeap::new();
    let mut edge_free = 0.0f64;
    let mut cloud_free = 0.0f64;
    let mut arrival = 0.0f64;
    let mut records = Vec::with_capacity(cfg.corpus.len());

    for (seq, req) in cfg.corpus.requests().iter().enumerate() {
        arrival += gaps.sample(&mut rng);
        // fold in every response and probe that lands before this arrival,
        // in time order
        loop {
            let next_done = pending.peek().map(|c| c.at).filter(|&t| t <= arrival);
            let probe_due = next_probe.filter(|&t| t <= arrival);
            match (next_done, probe_due) {
                (Some(d), Some(p)) if p < d => run_probes(
                    &mut est,
                    &mut next_probe,
                    cfg.probe_interval_s,
                    &cfg.trace,
                    p,
                ),
                (Some(_), _) => {
                    let c = pending.pop().expect("peeked");
                    est = est.observe(c.rtt, c.at);
                }
                (None, Some(p)) => run_probes(
                    &mut est,
                    &mut next_probe,
                    cfg.probe_interval_s,
                    &cfg.trace,
                    p,
                ),
                (None, None) => break,
            }
        }

        let n = req.n as f64;
        let rtt_estimate = est.rtt_estimate();
        let real = realize(cfg, req, arrival);
        let decision = route(cfg, &dispatch, n, rtt_estimate, &real);
        let (finish, service) = match decision.target {
            Target::Edge => {
                let start = edge_free.max(arrival);
                edge_free = start + real.edge / 1000.0;
                (edge_free, real.edge)
            }
            Target::Cloud => {
                let half_trip = real.tx / 2000.0;
                let start = cloud_free.max(arrival + half_trip);
                cloud_free = start + real.cloud / 1000.0;
                (cloud_free + half_trip, real.tx + real.cloud)
            }
        };
        let charged = (finish - arrival) * 1000.0;
        let queueing = (charged - service).max(0.0);
        if decision.target == Target::Cloud {
            pending.push(Completion {
                at: finish,
                seq: seq as u64,
                rtt: cfg.trace.rtt_at(arrival),
            });
        }
        records.push(RequestRecord {
            request_id: req.id,
            n: req.n,
            m_true: req.m_true,
            decision,
            realized_edge: real.edge,
            realized_cloud_exec: real.cloud,
            realized_tx: real.tx,
            charged,
            queueing,
            clock_at_dispatch: arrival,
            rtt_estimate,
        });
    }
    records
}

/// Re-routes every record to whichever device realized the lower latency.
pub fn oracle_from_records(records: &[RequestRecord]) -> Vec<RequestRecord> {
    records
        .iter()
        .map(|r| {
            let decision = oracle_decide(r.realized_edge, r.realized_cloud_exec, r.realized_tx);
            let charged = match decision.target {
                Target::Edge => r.realized_edge,
                Target::Cloud => r.realized_tx + r.realized_cloud_exec,
            };
            RequestRecord {
                decision,
                charged,
                queueing: 0.0,
                ..*r
            }
        })
        .collect()
}

/// Oracle result derived from one run's records.
pub fn oracle_run(run: &RunResult) -> RunResult {
    RunResult::from_records(
        PolicyKind::Oracle,
        oracle_from_records(&run.records),
        run.trace_id.clone(),
        run.seeds,
    )
}

/// Percent change of `t_policy` relative to `t_ref`; negative is faster.
pub fn percent_variation(t_policy: f64, t_ref: f64) -> f64 {
    100.0 * (t_policy - t_ref) / t_ref
}

fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    // avoid printing -0.00
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: PolicyKind,
    pub total_ms: f64,
    pub edge_count: usize,
    pub cloud_count: usize,
    pub vs_static_edge_pct: f64,
    pub vs_static_cloud_pct: f64,
    pub vs_oracle_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub trace_id: String,
    pub request_count: usize,
    pub mode: SimMode,
    /// Run whose records produced the tightest Oracle bound.
    pub oracle_source: PolicyKind,
    pub notes: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, policy: PolicyKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    pub fn total(&self, policy: PolicyKind) -> Option<f64> {
        self.row(policy).map(|r| r.total_ms)
    }

    /// Unrounded percent variation of `policy` against `reference`.
    pub fn variation(&self, policy: PolicyKind, reference: PolicyKind) -> Option<f64> {
        Some(percent_variation(
            self.total(policy)?,
            self.total(reference)?,
        ))
    }

    pub fn write_json<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::other)?;
        out.write_all(b"\n")
    }

    /// Plot-ready totals and percent variations, two decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record([
            "policy",
            "total_ms",
            "edge_count",
            "cloud_count",
            "vs_static_edge_pct",
            "vs_static_cloud_pct",
            "vs_oracle_pct",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.policy.to_string(),
                format!("{:.3}", r.total_ms),
                r.edge_count.to_string(),
                r.cloud_count.to_string(),
                format!("{:.2}", r.vs_static_edge_pct),
                format!("{:.2}", r.vs_static_cloud_pct),
                format!("{:.2}", r.vs_oracle_pct),
            ])?;
        }
        w.flush()
    }
}

/// Runs every requested policy plus both static baselines on identical
/// inputs, derives the Oracle, and tabulates percent variations.
///
/// Each run's clock follows its own charges, so with a time-varying trace the
/// runs see different RTTs. The Oracle is the cheapest of the per-run Oracle
/// replays, which keeps it a lower bound on every policy in the report.
pub fn compare_report(
    cfg: &SimConfig,
    policies: &[PolicyKind],
) -> Result<(Report, Vec<RunResult>), SimError> {
    if policies.is_empty() {
        return Err(SimError::Config("no policies to compare".into()));
    }
    let mut kinds: Vec<PolicyKind> = Vec::new();
    for k in policies
        .iter()
        .copied()
        .chain([PolicyKind::StaticEdge, PolicyKind::StaticCloud])
    {
        if k != PolicyKind::Oracle && !kinds.contains(&k) {
            kinds.push(k);
        }
    }

    let runs: Vec<RunResult> = std::thread::scope(|s| {
        let handles: Vec<_> = kinds
            .iter()
            .map(|&k| {
                let run_cfg = SimConfig {
                    policy: cfg.policy.with_kind(k),
                    ..cfg.clone()
                };
                s.spawn(move || run_simulation(&run_cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let oracle = runs
        .iter()
        .map(oracle_run)
        .zip(&kinds)
        .min_by(|a, b| a.0.total.total_cmp(&b.0.total))
        .map(|(run, &src)| (run, src))
        .expect("at least the static runs exist");
    let (oracle_run, oracle_source) = oracle;

    let mut all = runs;
    all.push(oracle_run);
    let total_of = |k: PolicyKind| {
        all.iter()
            .find(|r| r.policy == k)
            .map(|r| r.total)
            .expect("baseline present")
    };
    let t_edge = total_of(PolicyKind::StaticEdge);
    let t_cloud = total_of(PolicyKind::StaticCloud);
    let t_oracle = total_of(PolicyKind::Oracle);

    let rows = all
        .iter()
        .map(|r| ReportRow {
            policy: r.policy,
            total_ms: r.total,
            edge_count: r.count(Target::Edge),
            cloud_count: r.count(Target::Cloud),
            vs_static_edge_pct: round2(percent_variation(r.total, t_edge)),
            vs_static_cloud_pct: round2(percent_variation(r.total, t_cloud)),
            vs_oracle_pct: round2(percent_variation(r.total, t_oracle)),
        })
        .collect();

    let mut notes = vec![format!(
        "oracle derived from realized latencies of the {} run",
        oracle_source
    )];
    match cfg.mode {
        SimMode::Serial => {
            notes.push("serial mode: requests issued back to back, no server-side queueing".into())
        }
        SimMode::Poisson { rate, .. } => notes.push(format!(
            "poisson mode at {rate} req/s with FIFO device queues; oracle excludes queueing"
        )),
    }

    let report = Report {
        trace_id: cfg.trace.trace_id().to_string(),
        request_count: cfg.corpus.len(),
        mode: cfg.mode,
        oracle_source,
        notes,
        rows,
    };
    Ok((report, all))
}
