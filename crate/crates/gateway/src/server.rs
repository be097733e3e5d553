//! Client-facing listener and per-request dispatch.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cnmt_core::replay::{DispatchModel, LogRow};
use cnmt_core::{Decision, DeviceProfile, PolicyKind, Target, TxEstimator};
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, Semaphore};
use tokio::task::JoinHandle;

use crate::coordinator::{self, Command, Completion};
use crate::protocol::{
    encode, parse_frame, CloudJob, CloudReply, ErrorFrame, Inbound, StatsSnapshot, WireRequest,
    WireResponse,
};
use crate::timing::{model_sleep, modeled};
use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    /// Profiles, length model, policy kind and bandwidth used for decisions.
    pub dispatch: DispatchModel,
    pub listen: String,
    pub cloud_addr: String,
    /// Service-time profile of the local executor. Defaults to the edge
    /// profile the policy believes in.
    #[serde(default)]
    pub edge_profile: Option<DeviceProfile>,
    /// Wall-clock milliseconds per modeled millisecond.
    #[serde(default = "crate::default_time_scale")]
    pub time_scale: f64,
    #[serde(default)]
    pub estimator: TxEstimator,
    #[serde(default)]
    pub decision_log: Option<PathBuf>,
    /// Requests the edge executor runs at once; the rest wait in FIFO order.
    #[serde(default = "default_edge_slots")]
    pub edge_slots: usize,
    /// Wall-clock budget for one cloud round trip before falling back to the edge.
    #[serde(default = "default_cloud_timeout_ms")]
    pub cloud_timeout_ms: u64,
}

fn default_edge_slots() -> usize {
    1
}

fn default_cloud_timeout_ms() -> u64 {
    10_000
}

impl GatewayConfig {
    fn validate(&self) -> Result<(), GatewayError> {
        if self.dispatch.policy.kind == PolicyKind::Oracle {
            return Err(GatewayError::Config(
                "the oracle policy needs realized latencies and cannot run live".into(),
            ));
        }
        if self.edge_slots == 0 {
            return Err(GatewayError::Config("edge_slots must be >= 1".into()));
        }
        crate::check_time_scale(self.time_scale)
    }
}

struct Shared {
    cfg: GatewayConfig,
    edge_profile: DeviceProfile,
    edge_slots: Semaphore,
    cmd: mpsc::Sender<Command>,
    started: Instant,
}

/// Handle to a running gateway.
pub struct Gateway {
    addr: SocketAddr,
    cmd: mpsc::Sender<Command>,
    stop: oneshot::Sender<()>,
    accept: JoinHandle<()>,
    coordinator: JoinHandle<()>,
}

impl Gateway {
    pub async fn start(cfg: GatewayConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let log = cfg
            .decision_log
            .as_deref()
            .map(coordinator::open_log)
            .transpose()?;
        let listener = TcpListener::bind(&cfg.listen).await?;
        let addr = listener.local_addr()?;
        let started = Instant::now();
        let (cmd, rx) = mpsc::channel(1024);
        let coordinator = tokio::spawn(coordinator::run(cfg.estimator, log, started, rx));

        let shared = Arc::new(Shared {
            edge_profile: cfg
                .edge_profile
                .clone()
                .unwrap_or_else(|| cfg.dispatch.policy.edge.clone()),
            edge_slots: Semaphore::new(cfg.edge_slots),
            cfg,
            cmd: cmd.clone(),
            started,
        });
        let (stop, mut stopped) = oneshot::channel();
        let accept = tokio::spawn(async move {
            loop {
                tokio::select! {
                    _ = &mut stopped => break,
                    accepted = listener.accept() => match accepted {
                        Ok((stream, peer)) => {
                            let shared = Arc::clone(&shared);
                            tokio::spawn(async move {
                                if let Err(e) = serve_connection(stream, &shared).await {
                                    log::debug!("connection from {peer} ended: {e}");
                                }
                            });
                        }
                        Err(e) => log::warn!("accept failed: {e}"),
                    },
                }
            }
        });
        log::info!("gateway listening on {addr}");
        Ok(Self {
            addr,
            cmd,
            stop,
            accept,
            coordinator,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub async fn stats(&self) -> Result<StatsSnapshot, GatewayError> {
        stats(&self.cmd).await
    }

    /// Stops accepting connections, flushes the decision log and returns the
    /// final counters. Requests still in flight are not logged.
    pub async fn shutdown(self) -> Result<StatsSnapshot, GatewayError> {
        let _ = self.stop.send(());
        let _ = self.accept.await;
        let (tx, rx) = oneshot::channel();
        self.cmd
            .send(Command::Shutdown(tx))
            .await
            .map_err(|_| GatewayError::Closed)?;
        let out = rx.await.map_err(|_| GatewayError::Closed)?;
        let _ = self.coordinator.await;
        out
    }
}

async fn stats(cmd: &mpsc::Sender<Command>) -> Result<StatsSnapshot, GatewayError> {
    let (tx, rx) = oneshot::channel();
    cmd.send(Command::Stats(tx))
        .await
        .map_err(|_| GatewayError::Closed)?;
    rx.await.map_err(|_| GatewayError::Closed)
}

async fn serve_connection(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        let frame = match parse_frame(&line) {
            Ok(Inbound::Request(req)) => {
                let id = req.id.clone();
                match handle_request(shared, req).await {
                    Ok(resp) => encode(&resp),
                    Err(e) => encode(&ErrorFrame {
                        id: Some(id),
                        error: e.to_string(),
                    }),
                }
            }
            Ok(Inbound::Stats) => match stats(&shared.cmd).await {
                Ok(s) => encode(&s),
                Err(e) => encode(&ErrorFrame {
                    id: None,
                    error: e.to_string(),
                }),
            },
            Err(err) => encode(&err),
        };
        write.write_all(&frame).await?;
    }
    Ok(())
}

async fn handle_request(shared: &Shared, req: WireRequest) -> Result<WireResponse, GatewayError> {
    let (tx, rx) = oneshot::channel();
    shared
        .cmd
        .send(Command::Estimate(tx))
        .await
        .map_err(|_| GatewayError::Closed)?;
    let rtt_estimate = rx.await.map_err(|_| GatewayError::Closed)?;

    let arrived = Instant::now();
    let clock_s = shared.started.elapsed().as_secs_f64();
    let n = req.n as f64;
    let decision: Decision = shared.cfg.dispatch.decide(n, rtt_estimate);
    let m = req
        .m_true
        .map(f64::from)
        .unwrap_or_else(|| shared.cfg.dispatch.policy.length_model.predict_len(n));

    let mut row = LogRow {
        request_id: req.id.clone(),
        decision: decision.target,
        est_edge_ms: decision.est_edge,
        est_cloud_ms: decision.est_cloud_total,
        realized_edge_ms: None,
        realized_cloud_ms: None,
        realized_tx_ms: None,
        charged_ms: 0.0,
        clock_s,
        n: req.n,
        m_true: req.m_true,
        rtt_estimate_ms: rtt_estimate,
        queue_ms: None,
    };
    let mut measured_rtt = None;
    let mut unreachable = false;

    let cloud = match decision.target {
        Target::Cloud => match call_cloud(shared, req.n, m).await {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("cloud unreachable for {}: {e}; serving at edge", req.id);
                unreachable = true;
                None
            }
        },
        Target::Edge => None,
    };
    match cloud {
        Some((service_ms, total_ms)) => {
            let rtt = (total_ms - service_ms).max(1e-6);
            measured_rtt = Some(rtt);
            row.realized_cloud_ms = Some(service_ms);
            row.realized_tx_ms = Some(rtt);
        }
        None => {
            let (service_ms, queue_ms) = run_edge(shared, req.n, m).await?;
            row.realized_edge_ms = Some(service_ms);
            row.queue_ms = Some(queue_ms);
        }
    }
    row.charged_ms = modeled(arrived.elapsed(), shared.cfg.time_scale);

    let resp = WireResponse {
        id: req.id,
        target: decision.target,
        est_edge_ms: decision.est_edge,
        est_cloud_ms: decision.est_cloud_total,
        charged_ms: row.charged_ms,
        rtt_estimate_ms: rtt_estimate,
        cloud_unreachable: unreachable,
    };
    shared
        .cmd
        .send(Command::Complete(Box::new(Completion {
            row,
            measured_rtt,
            unreachable,
        })))
        .await
        .map_err(|_| GatewayError::Closed)?;
    Ok(resp)
}

/// Runs one job on the local executor; returns modeled service and queueing time.
async fn run_edge(shared: &Shared, n: u32, m: f64) -> Result<(f64, f64), GatewayError> {
    let queued = Instant::now();
    let _slot = shared
        .edge_slots
        .acquire()
        .await
        .map_err(|_| GatewayError::Closed)?;
    let queue_ms = modeled(queued.elapsed(), shared.cfg.time_scale);
    let service_ms = shared.edge_profile.exec_time(n as f64, m);
    model_sleep(service_ms, shared.cfg.time_scale).await;
    Ok((service_ms, queue_ms))
}

/// Ships one job to the cloud stub; returns the stub's service time and the
/// modeled round trip from send to reply.
async fn call_cloud(shared: &Shared, n: u32, m: f64) -> Result<(f64, f64), GatewayError> {
    let budget = Duration::from_millis(shared.cfg.cloud_timeout_ms);
    let attempt = async {
        let mut stream = TcpStream::connect(&shared.cfg.cloud_addr).await?;
        stream.set_nodelay(true)?;
        let sent = Instant::now();
        stream.write_all(&encode(&CloudJob { n, m })).await?;
        let mut line = String::new();
        BufReader::new(&mut stream).read_line(&mut line).await?;
        let elapsed = sent.elapsed();
        let reply: CloudReply = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok::<_, std::io::Error>((reply.service_ms, modeled(elapsed, shared.cfg.time_scale)))
    };
    match tokio::time::timeout(budget, attempt).await {
        Ok(r) => Ok(r?),
        Err(_) => Err(GatewayError::Io(std::io::Error::new(
            std::io::ErrorKind::TimedOut,
            "cloud round trip timed out",
        ))),
    }
}
