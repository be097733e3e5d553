//! Corpora, measurement ingestion, and ground-truth latency realization.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, DeviceProfile, FormatError, LatencySample, LengthPair};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: FormatError,
    },
    #[error("{0}: corpus has no rows")]
    EmptyCorpus(String),
    #[error("{0}: file has no data rows")]
    EmptyFile(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// One translation job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub n: u32,
    pub m_true: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    requests: Vec<Request>,
    m_avg: f64,
    language_pair: String,
}

impl Corpus {
    /// Builds a corpus from `(n, m_true)` pairs, numbering requests from 0.
    pub fn from_pairs(
        language_pair: impl Into<String>,
        pairs: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, WorkloadError> {
        let requests: Vec<Request> = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (n, m_true))| Request {
                id: i as u64,
                n,
                m_true,
            })
            .collect();
        let language_pair = language_pair.into();
        if requests.is_empty() {
            return Err(WorkloadError::EmptyCorpus(language_pair));
        }
        if let Some(r) = requests.iter().find(|r| r.n < 1 || r.m_true < 1) {
            return Err(WorkloadError::InvalidSpec(format!(
                "request {} has n={} m_true={}; both must be >= 1",
                r.id, r.n, r.m_true
            )));
        }
        let m_avg = requests.iter().map(|r| r.m_true as f64).sum::<f64>() / requests.len() as f64;
        Ok(Self {
            requests,
            m_avg,
            language_pair,
        })
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn m_avg(&self) -> f64 {
        self.m_avg
    }

    pub fn language_pair(&self) -> &str {
        &self.language_pair
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn pairs(&self) -> Vec<LengthPair> {
        self.requests
            .iter()
            .map(|r| LengthPair {
                n: r.n,
                m_real: r.m_true,
            })
            .collect()
    }

    pub fn write_tsv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        model::write_pairs(out, &self.pairs())
    }
}

fn open(path: &Path) -> Result<BufReader<File>, WorkloadError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| WorkloadError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Reads an `n\tm_real` TSV as a corpus.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, WorkloadError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let pairs = model::read_pairs(open(path)?).map_err(|source| WorkloadError::Parse {
        path: shown.clone(),
        source,
    })?;
    if pairs.is_empty() {
        return Err(WorkloadError::EmptyCorpus(shown));
    }
    if let Some((i, p)) = pairs
        .iter()
        .enumerate()
        .find(|(_, p)| p.n < 1 || p.m_real < 1)
    {
        return Err(WorkloadError::Parse {
            path: shown,
            source: FormatError {
                line: i as u64 + 2,
                reason: format!("n={} m_real={}; both must be >= 1", p.n, p.m_real),
            },
        });
    }
    let lp = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::from_pairs(lp, pairs.into_iter().map(|p| (p.n, p.m_real)))
}

/// Reads an `n,m,t_ms` measurement CSV.
pub fn load_measurements(path: impl AsRef<Path>) -> Result<Vec<LatencySample>, WorkloadError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let samples = model::read_samples(open(path)?).map_err(|source| WorkloadError::Parse {
        path: shown.clone(),
        source,
    })?;
    if samples.is_empty() {
        return Err(WorkloadError::EmptyFile(shown));
    }
    Ok(samples)
}

/// Input-length distribution for synthetic corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthDist {
    /// Integers uniform on `[lo, hi]`.
    Uniform { lo: u32, hi: u32 },
    /// Rounded log-normal draws, resampled until they land in `[1, max_len]`.
    Lognormal { mu: f64, sigma: f64, max_len: u32 },
    /// Weighted mixture of the above.
    Mixture { components: Vec<(f64, LengthDist)> },
}

impl LengthDist {
    fn validate(&self) -> Result<(), WorkloadError> {
        match self {
            LengthDist::Uniform { lo, hi } if *lo >= 1 && lo <= hi => Ok(()),
            LengthDist::Lognormal { mu, sigma, max_len }
                if mu.is_finite() && *sigma >= 0.0 && *max_len >= 1 =>
            {
                Ok(())
            }
            LengthDist::Mixture { components }
                if !components.is_empty()
                    && components.iter().all(|(w, _)| *w > 0.0 && w.is_finite()) =>
            {
                components.iter().try_for_each(|(_, d)| d.validate())
            }
            other => Err(WorkloadError::InvalidSpec(format!(
                "bad length distribution {other:?}"
            ))),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        match self {
            LengthDist::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
            LengthDist::Lognormal { mu, sigma, max_len } => {
                let dist = LogNormal::new(*mu, *sigma).expect("validated sigma");
                for _ in 0..1000 {
                    let v = dist.sample(rng).round();
                    if v >= 1.0 && v <= *max_len as f64 {
                        return v as u32;
                    }
                }
                // pathological parameters: fall back to clamping
                (dist.sample(rng).round() as u32).clamp(1, *max_len)
            }
            LengthDist::Mixture { components } => {
                let total: f64 = components.iter().map(|(w, _)| w).sum();
                let mut pick = rng.random::<f64>() * total;
                for (w, d) in components {
                    if pick < *w {
                        return d.sample(rng);
                    }
                    pick -= w;
                }
                components.last().expect("non-empty").1.sample(rng)
            }
        }
    }
}

/// Parameters for a synthetic corpus with linear N-to-M structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub count: usize,
    pub n_distribution: LengthDist,
    pub gamma: f64,
    pub delta: f64,
    #[serde(default)]
    pub length_noise_sd: f64,
    pub seed: u64,
    #[serde(default = "default_language_pair")]
    pub language_pair: String,
}

fn default_language_pair() -> String {
    "synthetic".into()
}

/// Generates a corpus with `m_true = round(gamma * n + delta + noise)`, at
/// least one token. Bit-for-bit reproducible per seed.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus, WorkloadError> {
    if spec.count < 1 {
        return Err(WorkloadError::InvalidSpec("count must be >= 1".into()));
    }
    if !(spec.gamma.is_finite() && spec.delta.is_finite()) {
        return Err(WorkloadError::InvalidSpec(
            "gamma/delta must be finite".into(),
        ));
    }
    spec.n_distribution.validate()?;
    if !(spec.length_noise_sd.is_finite() && spec.length_noise_sd >= 0.0) {
        return Err(WorkloadError::InvalidSpec(
            "length_noise_sd must be >= 0".into(),
        ));
    }
    let noise = Normal::new(0.0, spec.length_noise_sd)
        .map_err(|e| WorkloadError::InvalidSpec(format!("length_noise_sd: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pairs: Vec<(u32, u32)> = (0..spec.count)
        .map(|_| {
            let n = spec.n_distribution.sample(&mut rng);
            let eps = if spec.length_noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            let m = (spec.gamma * n as f64 + spec.delta + eps).round().max(1.0);
            (n, m as u32)
        })
        .collect();
    Corpus::from_pairs(spec.language_pair.clone(), pairs)
}

/// Hidden ground truth for one device: the true plane plus Gaussian scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceOracle {
    pub true_profile: DeviceProfile,
    #[serde(default)]
    pub noise_sd: f64,
    pub seed: u64,
}

/// Realized times never fall below this fraction of the noiseless value.
const NOISE_FLOOR: f64 = 0.05;

impl DeviceOracle {
    pub fn new(
        true_profile: DeviceProfile,
        noise_sd: f64,
        seed: u64,
    ) -> Result<Self, WorkloadError> {
        if !(noise_sd.is_finite() && noise_sd >= 0.0) {
            return Err(WorkloadError::InvalidSpec(format!(
                "noise_sd must be >= 0, got {noise_sd}"
            )));
        }
        Ok(Self {
            true_profile,
            noise_sd,
            seed,
        })
    }

    pub fn noiseless(true_profile: DeviceProfile) -> Self {
        Self {
            true_profile,
            noise_sd: 0.0,
            seed: 0,
        }
    }

    /// Realized execution time for `req`; a pure function of
    /// `(seed, req.id, req.n, req.m_true)`.
    pub fn realize(&self, req: &Request) -> f64 {
        let base = self.true_profile.exec_time(req.n as f64, req.m_true as f64);
        if self.noise_sd == 0.0 {
            return base;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, req.id));
        let normal = Normal::new(0.0, self.noise_sd).expect("validated noise_sd");
        let floor = NOISE_FLOOR * base;
        // rejection sampling keeps the draw a proper truncated Gaussian
        for _ in 0..64 {
            let v = base + normal.sample(&mut rng);
            if v >= floor {
                return v;
            }
        }
        floor
    }
}

pub fn realize_latency(oracle: &DeviceOracle, req: &Request) -> f64 {
    oracle.realize(req)
}

/// SplitMix64-style mixing of a seed and a request id.
fn mix(seed: u64, id: u64) -> u64 {
    let mut z = seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Profiling run: realizes every request in `corpus` on `oracle`.
pub fn measure(oracle: &DeviceOracle, corpus: &Corpus) -> Vec<LatencySample> {
    corpus
        .requests()
        .iter()
        .map(|r| LatencySample {
            n: r.n,
            m: r.m_true,
            t: oracle.realize(r),
        })
        .collect()
}
