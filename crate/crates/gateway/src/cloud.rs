//! Stand-in for the remote translation server.
//!
//! Each job is held for the configured round-trip delay plus the service
//! time of its device profile, then answered with the service time so the
//! caller can separate network from compute.

use std::net::SocketAddr;

use cnmt_core::DeviceProfile;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::protocol::{encode, CloudJob, CloudReply, ErrorFrame};
use crate::timing::model_sleep;
use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudStubConfig {
    pub listen: String,
    pub profile: DeviceProfile,
    /// Artificial round-trip delay added to every job, in modeled ms.
    pub rtt_ms: f64,
    #[serde(default = "crate::default_time_scale")]
    pub time_scale: f64,
}

impl CloudStubConfig {
    fn validate(&self) -> Result<(), GatewayError> {
        if !(self.rtt_ms.is_finite() && self.rtt_ms >= 0.0) {
            return Err(GatewayError::Config(format!(
                "rtt_ms must be >= 0, got {}",
                self.rtt_ms
            )));
        }
        crate::check_time_scale(self.time_scale)
    }
}

pub struct CloudStub {
    addr: SocketAddr,
    stop: oneshot::Sender<()>,
    task: JoinHandle<()>,
}

impl CloudStub {
    pub async fn start(cfg: CloudStubConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let listener = TcpListener::bind(&cfg.listen).await?;
        let addr = listener.local_addr()?;
        let (stop, mut stopped) = oneshot::channel();
        let task = tokio::spawn(async move {
            loop {
                tokio::select! {
                    _ = &mut stopped => break,
                    accepted = listener.accept() => match accepted {
                        Ok((stream, _)) => {
                            let cfg = cfg.clone();
                            tokio::spawn(async move {
                                if let Err(e) = serve_jobs(stream, &cfg).await {
                                    log::debug!("cloud stub connection ended: {e}");
                                }
                            });
                        }
                        Err(e) => log::warn!("cloud stub accept failed: {e}"),
                    },
                }
            }
        });
        log::info!("cloud stub listening on {addr}");
        Ok(Self { addr, stop, task })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting jobs. Connections already open finish their current job.
    pub async fn shutdown(self) {
        let _ = self.stop.send(());
        let _ = self.task.await;
    }
}

async fn serve_jobs(stream: TcpStream, cfg: &CloudStubConfig) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    while let Some(line) = lines.next_line().await? {
        let reply = match serde_json::from_str::<CloudJob>(&line) {
            Ok(job) if job.n >= 1 && job.m.is_finite() && job.m >= 0.0 => {
                let service_ms = cfg.profile.exec_time(job.n as f64, job.m);
                model_sleep(cfg.rtt_ms + service_ms, cfg.time_scale).await;
                encode(&CloudReply { service_ms })
            }
            Ok(job) => encode(&ErrorFrame {
                id: None,
                error: format!("invalid job {job:?}"),
            }),
            Err(e) => encode(&ErrorFrame {
                id: None,
                error: format!("malformed job: {e}"),
            }),
        };
        write.write_all(&reply).await?;
    }
    Ok(())
}
