//! Single owner of the RTT estimator, counters and decision log.
//!
//! Handlers only talk to it through a channel, so every estimator update is
//! applied in one serial order and every stats snapshot is taken between
//! two completions.

use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use cnmt_core::replay::{log_writer, LogRow, LOG_HEADER};
use cnmt_core::{Target, TxEstimator};
use tokio::sync::{mpsc, oneshot};

use crate::protocol::StatsSnapshot;
use crate::GatewayError;

pub(crate) struct Completion {
    pub row: LogRow,
    /// Measured round trip, present for answered cloud requests.
    pub measured_rtt: Option<f64>,
    pub unreachable: bool,
}

pub(crate) enum Command {
    Estimate(oneshot::Sender<f64>),
    Complete(Box<Completion>),
    Stats(oneshot::Sender<StatsSnapshot>),
    Shutdown(oneshot::Sender<Result<StatsSnapshot, GatewayError>>),
}

pub(crate) type LogSink = csv::Writer<BufWriter<File>>;

struct State {
    est: TxEstimator,
    stats: StatsSnapshot,
    log: Option<LogSink>,
    started: Instant,
}

impl State {
    fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            rtt_estimate_ms: self.est.rtt_estimate(),
            ..self.stats
        }
    }

    fn complete(&mut self, c: Completion) -> Result<(), GatewayError> {
        if let Some(rtt) = c.measured_rtt {
            self.est = self.est.observe(rtt, self.started.elapsed().as_secs_f64());
            self.stats.rtt_observations += 1;
        }
        self.stats.completed += 1;
        match c.row.decision {
            Target::Edge => self.stats.edge_count += 1,
            Target::Cloud => self.stats.cloud_count += 1,
        }
        if c.unreachable {
            self.stats.cloud_unreachable += 1;
        }
        self.stats.total_charged_ms += c.row.charged_ms;
        if let Some(log) = self.log.as_mut() {
            log.serialize(&c.row)?;
        }
        Ok(())
    }

    fn close(&mut self) -> Result<(), GatewayError> {
        if let Some(log) = self.log.as_mut() {
            if self.stats.completed == 0 {
                log.write_record(LOG_HEADER)?;
            }
            log.flush()?;
        }
        Ok(())
    }
}

pub(crate) fn open_log(path: &std::path::Path) -> Result<LogSink, GatewayError> {
    Ok(log_writer(BufWriter::new(File::create(path)?)))
}

pub(crate) async fn run(
    est: TxEstimator,
    log: Option<LogSink>,
    started: Instant,
    mut rx: mpsc::Receiver<Command>,
) {
    let mut state = State {
        est,
        stats: StatsSnapshot {
            completed: 0,
            edge_count: 0,
            cloud_count: 0,
            cloud_unreachable: 0,
            rtt_estimate_ms: est.rtt_estimate(),
            rtt_observations: 0,
            total_charged_ms: 0.0,
        },
        log,
        started,
    };
    let mut failure: Option<GatewayError> = None;
    while let Some(cmd) = rx.recv().await {
        match cmd {
            Command::Estimate(reply) => {
                let _ = reply.send(state.est.rtt_estimate());
            }
            Command::Complete(c) => {
                if let Err(e) = state.complete(*c) {
                    log::error!("decision log write failed: {e}");
                    state.log = None;
                    failure.get_or_insert(e);
                }
            }
            Command::Stats(reply) => {
                let _ = reply.send(state.snapshot());
            }
            Command::Shutdown(reply) => {
                let closed = state.close();
                let result = match failure.take() {
                    Some(e) => Err(e),
                    None => closed.map(|_| state.snapshot()),
                };
                let _ = reply.send(result);
                return;
            }
        }
    }
    let _ = state.close();
}
