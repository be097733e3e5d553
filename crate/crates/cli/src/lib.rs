//! The `cnmt` command-line tool.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cnmt_core::model::{fit_latency, fit_length, FilterRules, FitReport};
use cnmt_core::netsim::TraceSpec;
use cnmt_core::replay::{read_log, replay, DispatchModel};
use cnmt_core::sim::{compare_report, run_simulation, Report, SimConfig};
use cnmt_core::workload::{load_measurements, synth_corpus, SynthSpec};
use cnmt_core::{DeviceProfile, LengthModel, PolicyKind};
use cnmt_gateway::{CloudStub, CloudStubConfig, Gateway, GatewayConfig};
use serde::{Deserialize, Serialize};

pub mod experiment;

use experiment::{read_pairs_file, stem, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cnmt",
    version,
    about = "Latency-aware edge/cloud dispatch for translation requests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a device latency profile from an `n,m,t_ms` measurement CSV.
    FitLatency {
        #[arg(long)]
        samples: PathBuf,
        /// Device id recorded in the model; defaults to the file stem.
        #[arg(long)]
        device_id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the output-length model from an `n\tm_real` TSV.
    FitLength {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_len: u32,
        #[arg(long, default_value_t = 100)]
        max_len: u32,
        #[arg(long, default_value_t = 2.0)]
        max_ratio: f64,
        /// Defaults to the file stem.
        #[arg(long)]
        language_pair: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus TSV from a JSON spec.
    GenCorpus {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an RTT trace CSV from a preset or a JSON spec.
    GenTrace {
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        preset: Option<Preset>,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Seed for the preset, or override for the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one policy over an experiment and write its per-request CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the first policy in the config.
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Defaults to `<output_dir>/runs/<policy>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every policy of an experiment plus the baselines and write the report.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the gateway daemon or the cloud stub until interrupted.
    Serve {
        #[arg(long)]
        role: Role,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the listen address in the config.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Recompute every decision in a log and compare.
    ReplayCheck {
        #[arg(long)]
        log: PathBuf,
        /// Dispatch model JSON, a gateway config, or a compare `models.json`.
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Cp1,
    Cp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Gateway,
    Cloud,
}

/// Fitted latency profile as written by `fit-latency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModelFile {
    pub profile: DeviceProfile,
    pub fit: FitReport,
}

/// Fitted length model as written by `fit-length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthModelFile {
    pub length_model: LengthModel,
    pub fit: FitReport,
    pub filter: FilterRules,
    pub pairs_total: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitLatency {
            samples,
            device_id,
            out,
        } => {
            let data = load_measurements(&samples)?;
            let id = device_id.unwrap_or_else(|| stem(&samples));
            let (profile, fit) = fit_latency(&data, &id)
                .with_context(|| format!("fitting {}", samples.display()))?;
            emit_json(out.as_deref(), &LatencyModelFile { profile, fit })
        }
        Command::FitLength {
            pairs,
            min_len,
            max_len,
            max_ratio,
            language_pair,
            out,
        } => {
            let filter = FilterRules::new(min_len, max_len, max_ratio)?;
            let data = read_pairs_file(&pairs)?;
            let lp = language_pair.unwrap_or_else(|| stem(&pairs));
            let (length_model, fit) = fit_length(&data, &filter, &lp)
                .with_context(|| format!("fitting {}", pairs.display()))?;
            emit_json(
                out.as_deref(),
                &LengthModelFile {
                    length_model,
                    fit,
                    filter,
                    pairs_total: data.len(),
                },
            )
        }
        Command::GenCorpus { spec, seed, out } => {
            let mut spec: SynthSpec = read_json(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let corpus = synth_corpus(&spec)?;
            write_file(&out, |w| corpus.write_tsv(w))
        }
        Command::GenTrace {
            preset,
            spec,
            seed,
            out,
        } => {
            let spec = match (preset, spec) {
                (Some(p), _) => {
                    let name = match p {
                        Preset::Cp1 => "cp1",
                        Preset::Cp2 => "cp2",
                    };
                    TraceSpec::preset(name, seed.unwrap_or(0)).expect("known preset")
                }
                (None, Some(path)) => {
                    let mut spec: TraceSpec = read_json(&path)?;
                    if let Some(s) = seed {
                        spec.seed = s;
                    }
                    spec
                }
                (None, None) => bail!("either --preset or --spec is required"),
            };
            let trace = spec.generate()?;
            write_file(&out, |w| trace.write_csv(w))
        }
        Command::Simulate {
            config,
            policy,
            out,
        } => {
            let (cfg, base) = ExperimentConfig::load(&config)?;
            let prepared = cfg.prepare(&base)?;
            let kind = policy.unwrap_or(prepared.sim.policy.kind);
            let sim = SimConfig {
                policy: prepared.sim.policy.with_kind(kind),
                ..prepared.sim
            };
            let run = run_simulation(&sim)?;
            let out =
                out.unwrap_or_else(|| prepared.output_dir.join("runs").join(format!("{kind}.csv")));
            write_file(&out, |w| run.write_csv(w))?;
            println!(
                "{kind}: {} requests, total {:.3} ms, {} edge / {} cloud -> {}",
                run.records.len(),
                run.total,
                run.count(cnmt_core::Target::Edge),
                run.count(cnmt_core::Target::Cloud),
                out.display()
            );
            Ok(())
        }
        Command::Compare { config } => {
            let (cfg, base) = ExperimentConfig::load(&config)?;
            let prepared = cfg.prepare(&base)?;
            let (report, runs) = compare_report(&prepared.sim, &cfg.policies)?;
            let dir = &prepared.output_dir;
            write_file(&dir.join("report.json"), |w| report.write_json(w))?;
            write_file(&dir.join("report.csv"), |w| report.write_csv(w))?;
            emit_json(Some(&dir.join("models.json")), &prepared.models)?;
            for run in &runs {
                write_file(&dir.join("runs").join(format!("{}.csv", run.policy)), |w| {
                    run.write_csv(w)
                })?;
            }
            print_report(&report);
            Ok(())
        }
        Command::Serve {
            role,
            config,
            listen,
        } => serve(role, &config, listen),
        Command::ReplayCheck { log, model } => {
            let file =
                std::fs::File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let rows = read_log(file).with_context(|| format!("reading {}", log.display()))?;
            let model = load_dispatch_model(&model)?;
            let outcome = replay(&rows, &model);
            println!("{}/{} decisions match", outcome.matched, outcome.total);
            for m in outcome.mismatches.iter().take(10) {
                eprintln!("mismatch {m}");
            }
            if !outcome.all_match() {
                bail!(
                    "{} of {} decisions differ",
                    outcome.total - outcome.matched,
                    outcome.total
                );
            }
            Ok(())
        }
    }
}

fn print_report(report: &Report) {
    println!(
        "{} requests on trace {} (oracle from {} run)",
        report.request_count, report.trace_id, report.oracle_source
    );
    println!(
        "{:<12} {:>14} {:>7} {:>7} {:>10} {:>10} {:>10}",
        "policy", "total_ms", "edge", "cloud", "vs_edge%", "vs_cloud%", "vs_oracle%"
    );
    for r in &report.rows {
        println!(
            "{:<12} {:>14.3} {:>7} {:>7} {:>10.2} {:>10.2} {:>10.2}",
            r.policy.as_str(),
            r.total_ms,
            r.edge_count,
            r.cloud_count,
            r.vs_static_edge_pct,
            r.vs_static_cloud_pct,
            r.vs_oracle_pct
        );
    }
}

fn serve(role: Role, config: &Path, listen: Option<String>) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    match role {
        Role::Gateway => {
            let mut cfg: GatewayConfig = read_json(config)?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            rt.block_on(async {
                let gw = Gateway::start(cfg).await?;
                println!("gateway listening on {}", gw.local_addr());
                tokio::signal::ctrl_c().await?;
                let stats = gw.shutdown().await?;
                println!("{}", serde_json::to_string(&stats)?);
                Ok(())
            })
        }
        Role::Cloud => {
            let mut cfg: CloudStubConfig = read_json(config)?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            rt.block_on(async {
                let stub = CloudStub::start(cfg).await?;
                println!("cloud stub listening on {}", stub.local_addr());
                tokio::signal::ctrl_c().await?;
                stub.shutdown().await;
                Ok(())
            })
        }
    }
}

/// Accepts a bare dispatch model or any JSON object with a `dispatch` field.
fn load_dispatch_model(path: &Path) -> Result<DispatchModel> {
    let value: serde_json::Value = read_json(path)?;
    let inner = match value.get("dispatch") {
        Some(d) => d.clone(),
        None => value,
    };
    serde_json::from_value(inner)
        .with_context(|| format!("{} holds no dispatch model", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// Pretty JSON to `out`, or to stdout when no path is given.
fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => write_file(p, |w| w.write_all(text.as_bytes())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
