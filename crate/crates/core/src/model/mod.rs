//! Linear latency and output-length models.
//!
//! A device's execution time is modeled as a plane over input length `n` and
//! output length `m`:
//!
//! ```text
//! T_exe(n, m) = alpha_n * n + alpha_m * m + beta
//! ```
//!
//! Recurrent models show a clear slope in both lengths. Transformer-style
//! encoders on a parallel accelerator are roughly flat in `n`, which is the
//! `alpha_n ≈ 0` corner of the same plane.
//!
//! Because `m` is unknown before a translation finishes, the dispatcher
//! substitutes a per-language-pair linear prediction `m̂ = gamma * n + delta`.
//! Both planes and lines are fitted by ordinary least squares.

mod io;
mod lsq;

pub use io::{read_pairs, read_samples, write_pairs, write_samples, FormatError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("prefilter removed all {0} pairs")]
    AllFiltered(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Coefficients of a device's execution-time plane, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct DeviceProfile {
    alpha_n: f64,
    alpha_m: f64,
    beta: f64,
    device_id: String,
}

#[derive(Deserialize)]
struct RawProfile {
    alpha_n: f64,
    alpha_m: f64,
    beta: f64,
    #[serde(default)]
    device_id: String,
}

impl TryFrom<RawProfile> for DeviceProfile {
    type Error = ModelError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        DeviceProfile::new(raw.device_id, raw.alpha_n, raw.alpha_m, raw.beta)
    }
}

impl DeviceProfile {
    pub fn new(
        device_id: impl Into<String>,
        alpha_n: f64,
        alpha_m: f64,
        beta: f64,
    ) -> Result<Self, ModelError> {
        for (name, v) in [("alpha_n", alpha_n), ("alpha_m", alpha_m), ("beta", beta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(Self {
            alpha_n,
            alpha_m,
            beta,
            device_id: device_id.into(),
        })
    }

    pub fn alpha_n(&self) -> f64 {
        self.alpha_n
    }

    pub fn alpha_m(&self) -> f64 {
        self.alpha_m
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    /// Execution time in ms for `n` input and `m` output tokens. `m` may be a
    /// fractional prediction.
    pub fn exec_time(&self, n: f64, m: f64) -> f64 {
        self.alpha_n * n + self.alpha_m * m + self.beta
    }
}

/// Free-function form of [`DeviceProfile::exec_time`].
pub fn exec_time(profile: &DeviceProfile, n: f64, m: f64) -> f64 {
    profile.exec_time(n, m)
}

/// Linear N-to-M mapping for one language pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLengthModel")]
pub struct LengthModel {
    gamma: f64,
    delta: f64,
    language_pair: String,
}

#[derive(Deserialize)]
struct RawLengthModel {
    gamma: f64,
    delta: f64,
    #[serde(default)]
    language_pair: String,
}

impl TryFrom<RawLengthModel> for LengthModel {
    type Error = ModelError;

    fn try_from(raw: RawLengthModel) -> Result<Self, Self::Error> {
        LengthModel::new(raw.language_pair, raw.gamma, raw.delta)
    }
}

impl LengthModel {
    pub fn new(
        language_pair: impl Into<String>,
        gamma: f64,
        delta: f64,
    ) -> Result<Self, ModelError> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !delta.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "delta must be finite, got {delta}"
            )));
        }
        Ok(Self {
            gamma,
            delta,
            language_pair: language_pair.into(),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn language_pair(&self) -> &str {
        &self.language_pair
    }

    /// Predicted output length, kept fractional and never below one token.
    pub fn predict_len(&self, n: f64) -> f64 {
        (self.gamma * n + self.delta).max(1.0)
    }
}

pub fn predict_len(lm: &LengthModel, n: f64) -> f64 {
    lm.predict_len(n)
}

/// One measured inference: lengths and execution time in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub n: u32,
    pub m: u32,
    pub t: f64,
}

/// Ground-truth source/reference lengths of one sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LengthPair {
    pub n: u32,
    pub m_real: u32,
}

/// In-sample goodness of fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r2: f64,
    pub mse: f64,
    pub sample_count: usize,
}

/// Parallel-corpus sanity filters: length bounds and a length-ratio bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFilterRules")]
pub struct FilterRules {
    min_len: u32,
    max_len: u32,
    max_ratio: f64,
}

#[derive(Deserialize)]
struct RawFilterRules {
    min_len: u32,
    max_len: u32,
    max_ratio: f64,
}

impl TryFrom<RawFilterRules> for FilterRules {
    type Error = ModelError;

    fn try_from(raw: RawFilterRules) -> Result<Self, Self::Error> {
        FilterRules::new(raw.min_len, raw.max_len, raw.max_ratio)
    }
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            min_len: 1,
            max_len: 100,
            max_ratio: 2.0,
        }
    }
}

impl FilterRules {
    pub fn new(min_len: u32, max_len: u32, max_ratio: f64) -> Result<Self, ModelError> {
        if min_len < 1 {
            return Err(ModelError::InvalidParameter("min_len must be >= 1".into()));
        }
        if max_len <= min_len {
            return Err(ModelError::InvalidParameter(format!(
                "max_len ({max_len}) must exceed min_len ({min_len})"
            )));
        }
        if !(max_ratio > 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "max_ratio must be > 1, got {max_ratio}"
            )));
        }
        Ok(Self {
            min_len,
            max_len,
            max_ratio,
        })
    }

    pub fn min_len(&self) -> u32 {
        self.min_len
    }

    pub fn max_len(&self) -> u32 {
        self.max_len
    }

    pub fn max_ratio(&self) -> f64 {
        self.max_ratio
    }

    pub fn accepts(&self, pair: &LengthPair) -> bool {
        let in_bounds = |x: u32| x >= self.min_len && x <= self.max_len;
        if !in_bounds(pair.n) || !in_bounds(pair.m_real) {
            return false;
        }
        let hi = pair.n.max(pair.m_real) as f64;
        let lo = pair.n.min(pair.m_real) as f64;
        hi / lo <= self.max_ratio
    }
}

/// Keeps the pairs accepted by `rules`, in order.
pub fn prefilter(pairs: &[LengthPair], rules: &FilterRules) -> Vec<LengthPair> {
    pairs.iter().copied().filter(|p| rules.accepts(p)).collect()
}

/// Mean squared error and coefficient of determination.
pub fn fit_scores(predicted: &[f64], actual: &[f64]) -> Result<FitReport, ModelError> {
    if predicted.len() != actual.len() || actual.is_empty() {
        return Err(ModelError::DegenerateDesign(format!(
            "need equal non-zero lengths, got {} predicted and {} actual",
            predicted.len(),
            actual.len()
        )));
    }
    let (ss_res, ss_tot) = sums_of_squares(predicted, actual);
    if ss_tot == 0.0 {
        return Err(ModelError::DegenerateDesign(
            "actual values have zero variance".into(),
        ));
    }
    Ok(FitReport {
        r2: 1.0 - ss_res / ss_tot,
        mse: ss_res / actual.len() as f64,
        sample_count: actual.len(),
    })
}

fn sums_of_squares(predicted: &[f64], actual: &[f64]) -> (f64, f64) {
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_res = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (a - p) * (a - p))
        .sum();
    let ss_tot = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    (ss_res, ss_tot)
}

/// Like [`fit_scores`] but a flat target that was reproduced exactly scores
/// `r2 = 1` instead of failing; fitted constant devices are legitimate.
fn training_scores(predicted: &[f64], actual: &[f64]) -> Result<FitReport, ModelError> {
    match fit_scores(predicted, actual) {
        Err(ModelError::DegenerateDesign(_)) if !actual.is_empty() => {
            let (ss_res, _) = sums_of_squares(predicted, actual);
            if ss_res == 0.0 {
                Ok(FitReport {
                    r2: 1.0,
                    mse: 0.0,
                    sample_count: actual.len(),
                })
            } else {
                fit_scores(predicted, actual)
            }
        }
        other => other,
    }
}

/// Least-squares plane fit with non-negative coefficients.
///
/// Coefficients that come out negative are pinned to zero and the remaining
/// free ones are refitted until none is negative.
pub fn fit_latency(
    samples: &[LatencySample],
    device_id: &str,
) -> Result<(DeviceProfile, FitReport), ModelError> {
    if samples.len() < 3 {
        return Err(ModelError::DegenerateDesign(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    let design = [
        samples.iter().map(|s| s.n as f64).collect::<Vec<_>>(),
        samples.iter().map(|s| s.m as f64).collect::<Vec<_>>(),
        vec![1.0; samples.len()],
    ];
    const NAMES: [&str; 3] = ["n", "m", "intercept"];
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    if let Some(bad) = t.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "latency samples must be positive, got {bad}"
        )));
    }

    // full-rank check on the unconstrained design first
    lsq::solve(&design, &t).map_err(|e| {
        ModelError::DegenerateDesign(format!(
            "column '{}' is collinear with the others",
            NAMES[e.column]
        ))
    })?;

    let mut free = [true; 3];
    let coef = loop {
        let idx: Vec<usize> = (0..3).filter(|&i| free[i]).collect();
        let mut coef = [0.0f64; 3];
        if idx.is_empty() {
            break coef;
        }
        let cols: Vec<Vec<f64>> = idx.iter().map(|&i| design[i].clone()).collect();
        let sol = lsq::solve(&cols, &t).map_err(|e| {
            ModelError::DegenerateDesign(format!(
                "column '{}' is collinear after clamping",
                NAMES[idx[e.column]]
            ))
        })?;
        for (&i, v) in idx.iter().zip(&sol) {
            coef[i] = *v;
        }
        let negative: Vec<usize> = idx.iter().copied().filter(|&i| coef[i] < 0.0).collect();
        if negative.is_empty() {
            break coef;
        }
        for i in negative {
            free[i] = false;
        }
    };

    let profile = DeviceProfile::new(device_id, coef[0], coef[1], coef[2])?;
    let predicted: Vec<f64> = samples
        .iter()
        .map(|s| profile.exec_time(s.n as f64, s.m as f64))
        .collect();
    let report = training_scores(&predicted, &t)?;
    Ok((profile, report))
}

/// Prefilters the pairs then fits `m_real ~ gamma * n + delta`.
pub fn fit_length(
    pairs: &[LengthPair],
    rules: &FilterRules,
    language_pair: &str,
) -> Result<(LengthModel, FitReport), ModelError> {
    let kept = prefilter(pairs, rules);
    if kept.is_empty() {
        return Err(ModelError::AllFiltered(pairs.len()));
    }
    if kept.len() < 2 {
        return Err(ModelError::DegenerateDesign(format!(
            "need at least 2 pairs after filtering, got {}",
            kept.len()
        )));
    }
    let n: Vec<f64> = kept.iter().map(|p| p.n as f64).collect();
    let m: Vec<f64> = kept.iter().map(|p| p.m_real as f64).collect();
    let sol = lsq::solve(&[n.clone(), vec![1.0; n.len()]], &m).map_err(|_| {
        ModelError::DegenerateDesign("all retained pairs share the same input length".into())
    })?;
    let model = LengthModel::new(language_pair, sol[0], sol[1])?;
    let predicted: Vec<f64> = n.iter().map(|&x| model.gamma * x + model.delta).collect();
    let report = training_scores(&predicted, &m)?;
    Ok((model, report))
}
