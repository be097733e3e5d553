//! Experiment configuration files.
//!
//! Relative paths inside a config resolve against the directory holding the
//! config file. Every random source takes an explicit seed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cnmt_core::model::{fit_latency, fit_length, read_pairs, FilterRules, FitReport, LengthPair};
use cnmt_core::netsim::TraceSpec;
use cnmt_core::replay::DispatchModel;
use cnmt_core::sim::{SimConfig, SimMode};
use cnmt_core::workload::{
    load_corpus, load_measurements, measure, synth_corpus, Corpus, DeviceOracle, SynthSpec,
};
use cnmt_core::{
    BandwidthModel, DeviceProfile, LengthModel, PolicyConfig, PolicyKind, RttTrace, TxEstimator,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub trace: TraceSource,
    #[serde(default)]
    pub bandwidth: BandwidthModel,
    pub edge: DeviceSpec,
    pub cloud: DeviceSpec,
    pub length_model: LengthSource,
    /// Output length assumed by Naive. Defaults to the corpus mean.
    #[serde(default)]
    pub m_avg: Option<f64>,
    #[serde(default)]
    pub estimator: TxEstimator,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub probe_interval_s: Option<f64>,
    pub policies: Vec<PolicyKind>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSource {
    File { path: PathBuf },
    Synthetic { spec: SynthSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    File {
        path: PathBuf,
        #[serde(default)]
        trace_id: Option<String>,
    },
    Preset {
        name: String,
        seed: u64,
    },
    Generated {
        spec: TraceSpec,
    },
    Constant {
        rtt_ms: f64,
    },
}

/// A simulated device: its ground truth and where the dispatcher's belief
/// about it comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub true_profile: DeviceProfile,
    /// Relative standard deviation of realized latencies.
    #[serde(default)]
    pub noise_sd: f64,
    pub seed: u64,
    pub dispatch: ProfileSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSource {
    /// The dispatcher knows the true profile.
    Truth,
    Profile {
        profile: DeviceProfile,
    },
    /// Fit on a measurement CSV.
    Measurements {
        path: PathBuf,
    },
    /// Fit on latencies measured from the device over a separate synthetic
    /// corpus, with its own noise seed.
    HeldOut {
        spec: SynthSpec,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthSource {
    Fixed {
        model: LengthModel,
    },
    Pairs {
        path: PathBuf,
        #[serde(default)]
        filter: FilterRules,
    },
    HeldOut {
        spec: SynthSpec,
        #[serde(default)]
        filter: FilterRules,
    },
    /// Fit on the evaluation corpus itself.
    Corpus {
        #[serde(default)]
        filter: FilterRules,
    },
}

/// The dispatcher's models and how well each was fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub dispatch: DispatchModel,
    pub edge_fit: Option<FitReport>,
    pub cloud_fit: Option<FitReport>,
    pub length_fit: Option<FitReport>,
}

pub struct Prepared {
    pub sim: SimConfig,
    pub models: ModelSummary,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    /// Loads and generates every input and fits the dispatcher's models.
    pub fn prepare(&self, base: &Path) -> Result<Prepared> {
        if self.policies.is_empty() {
            bail!("config lists no policies");
        }
        let corpus = match &self.corpus {
            CorpusSource::File { path } => load_corpus(base.join(path))?,
            CorpusSource::Synthetic { spec } => synth_corpus(spec)?,
        };
        let trace = match &self.trace {
            TraceSource::File { path, trace_id } => {
                let path = base.join(path);
                let id = trace_id.clone().unwrap_or_else(|| stem(&path));
                let file = std::fs::File::open(&path)
                    .with_context(|| format!("opening {}", path.display()))?;
                RttTrace::read_csv(&id, file)
                    .with_context(|| format!("reading {}", path.display()))?
            }
            TraceSource::Preset { name, seed } => TraceSpec::preset(name, *seed)
                .with_context(|| format!("unknown trace preset '{name}' (expected cp1 or cp2)"))?
                .generate()?,
            TraceSource::Generated { spec } => spec.generate()?,
            TraceSource::Constant { rtt_ms } => RttTrace::constant("constant", *rtt_ms)?,
        };
        let (edge, edge_fit) = self.edge.dispatch_profile(base, "edge")?;
        let (cloud, cloud_fit) = self.cloud.dispatch_profile(base, "cloud")?;
        let (length_model, length_fit) = self.length_model.resolve(base, &corpus)?;
        let m_avg = self.m_avg.unwrap_or_else(|| corpus.m_avg());

        let policy = PolicyConfig::new(self.policies[0], edge, cloud, length_model, m_avg)
            .map_err(anyhow::Error::msg)?;
        let sim = SimConfig {
            edge_oracle: self.edge.oracle()?,
            cloud_oracle: self.cloud.oracle()?,
            trace,
            bandwidth: self.bandwidth,
            policy: policy.clone(),
            estimator_init: self.estimator,
            mode: self.mode,
            probe_interval_s: self.probe_interval_s,
            corpus,
        };
        let models = ModelSummary {
            dispatch: DispatchModel {
                policy,
                bandwidth: self.bandwidth,
            },
            edge_fit,
            cloud_fit,
            length_fit,
        };
        Ok(Prepared {
            sim,
            models,
            output_dir: base.join(&self.output_dir),
        })
    }
}

impl DeviceSpec {
    fn oracle(&self) -> Result<DeviceOracle> {
        Ok(DeviceOracle::new(
            self.true_profile.clone(),
            self.noise_sd,
            self.seed,
        )?)
    }

    fn dispatch_profile(
        &self,
        base: &Path,
        id: &str,
    ) -> Result<(DeviceProfile, Option<FitReport>)> {
        match &self.dispatch {
            ProfileSource::Truth => Ok((self.true_profile.clone(), None)),
            ProfileSource::Profile { profile } => Ok((profile.clone(), None)),
            ProfileSource::Measurements { path } => {
                let samples = load_measurements(base.join(path))?;
                let (p, fit) =
                    fit_latency(&samples, id).with_context(|| format!("fitting {id} profile"))?;
                Ok((p, Some(fit)))
            }
            ProfileSource::HeldOut { spec, seed } => {
                let corpus = synth_corpus(spec)?;
                let oracle = DeviceOracle::new(self.true_profile.clone(), self.noise_sd, *seed)?;
                let (p, fit) = fit_latency(&measure(&oracle, &corpus), id)
                    .with_context(|| format!("fitting {id} profile"))?;
                Ok((p, Some(fit)))
            }
        }
    }
}

impl LengthSource {
    fn resolve(&self, base: &Path, corpus: &Corpus) -> Result<(LengthModel, Option<FitReport>)> {
        let lp = corpus.language_pair().to_string();
        let (pairs, filter) = match self {
            LengthSource::Fixed { model } => return Ok((model.clone(), None)),
            LengthSource::Pairs { path, filter } => (read_pairs_file(&base.join(path))?, filter),
            LengthSource::HeldOut { spec, filter } => (synth_corpus(spec)?.pairs(), filter),
            LengthSource::Corpus { filter } => (corpus.pairs(), filter),
        };
        let (lm, fit) = fit_length(&pairs, filter, &lp).context("fitting length model")?;
        Ok((lm, Some(fit)))
    }
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a length-pair TSV; zero lengths are allowed here so the prefilter
/// can drop them.
pub fn read_pairs_file(path: &Path) -> Result<Vec<LengthPair>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_pairs(file).with_context(|| format!("reading {}", path.display()))
}
