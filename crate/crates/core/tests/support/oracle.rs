//! Independent reference computations for tests.
//!
//! Nothing here calls into the crate's fitting, netsim or simulation code:
//! least squares goes through accumulated normal equations and Cramer's rule,
//! random data comes from a local SplitMix64 + Box-Muller generator, and the
//! simulation recomputation is plain arithmetic over the request list.

#![allow(dead_code)]

/// SplitMix64 with Box-Muller normals.
pub struct RefRng(u64);

impl RefRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn int_in(&mut self, lo: u32, hi: u32) -> u32 {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as u32
    }

    pub fn normal(&mut self, sd: f64) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Unconstrained least squares of `t ~ a*n + b*m + c` by Cramer's rule on
/// the normal equations. Returns `[a, b, c]`.
pub fn ols_plane(points: &[(f64, f64, f64)]) -> [f64; 3] {
    let mut g = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for &(n, m, t) in points {
        let x = [n, m, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += x[i] * x[j];
            }
            r[i] += x[i] * t;
        }
    }
    let d = det3(g);
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut gk = g;
        for i in 0..3 {
            gk[i][k] = r[i];
        }
        out[k] = det3(gk) / d;
    }
    out
}

/// Closed-form simple regression `y ~ slope*x + intercept`.
pub fn ols_line(points: &[(f64, f64)]) -> (f64, f64) {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// In-sample R² and MSE.
pub fn r2_mse(pred: &[f64], actual: &[f64]) -> (f64, f64) {
    let k = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / k;
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum();
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    (1.0 - ss_res / ss_tot, ss_res / k)
}

/// `count` samples of the plane `(a, b, c)` with Gaussian noise, `n, m` in
/// `[1, 100]`.
pub fn plane_samples(seed: u64, count: usize, truth: [f64; 3], sd: f64) -> Vec<(u32, u32, f64)> {
    let mut rng = RefRng::new(seed);
    (0..count)
        .map(|_| {
            let n = rng.int_in(1, 100);
            let m = rng.int_in(1, 100);
            let t = truth[0] * n as f64 + truth[1] * m as f64 + truth[2] + rng.normal(sd);
            (n, m, t)
        })
        .collect()
}

/// Length pairs `m = round(gamma*n + delta + noise)`, `n` uniform in `[lo, hi]`.
pub fn line_pairs(
    seed: u64,
    count: usize,
    gamma: f64,
    delta: f64,
    sd: f64,
    lo: u32,
    hi: u32,
) -> Vec<(u32, u32)> {
    let mut rng = RefRng::new(seed);
    (0..count)
        .map(|_| {
            let n = rng.int_in(lo, hi);
            let m = (gamma * n as f64 + delta + rng.normal(sd)).round().max(1.0);
            (n, m as u32)
        })
        .collect()
}

/// Step lookup by linear scan.
pub fn rtt_linear_scan(samples: &[(f64, f64)], t: f64) -> f64 {
    let mut out = samples[0].1;
    for &(off, rtt) in samples {
        if off <= t {
            out = rtt;
        }
    }
    out
}

/// Plain-number description of a noiseless serial run on a constant link.
pub struct StraightLine {
    pub edge: [f64; 3],
    pub cloud: [f64; 3],
    pub gamma: f64,
    pub delta: f64,
    pub m_avg: f64,
    pub rtt: f64,
    pub initial_rtt: f64,
    pub ewma_alpha: f64,
    pub mbps: f64,
    pub bytes_per_token: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RefPolicy {
    CNmt,
    Naive,
    Edge,
    Cloud,
    Oracle,
}

impl StraightLine {
    fn plane(c: [f64; 3], n: f64, m: f64) -> f64 {
        c[0] * n + c[1] * m + c[2]
    }

    fn payload(&self, n: f64, m: f64) -> f64 {
        (n + m) * self.bytes_per_token * 8.0 / (self.mbps * 1000.0)
    }

    /// Total charged latency and per-request `true` when offloaded.
    pub fn total(&self, requests: &[(u32, u32)], policy: RefPolicy) -> (f64, Vec<bool>) {
        let mut belief: Option<f64> = None;
        let mut total = 0.0;
        let mut offloaded = Vec::new();
        for &(n, m) in requests {
            let (n, m) = (n as f64, m as f64);
            let edge_real = Self::plane(self.edge, n, m);
            let cloud_real = self.rtt + self.payload(n, m) + Self::plane(self.cloud, n, m);
            let m_hat = match policy {
                RefPolicy::Naive => self.m_avg,
                _ => (self.gamma * n + self.delta).max(1.0),
            };
            let rtt_hat = belief.unwrap_or(self.initial_rtt);
            let est_edge = Self::plane(self.edge, n, m_hat);
            let est_cloud = rtt_hat + self.payload(n, m_hat) + Self::plane(self.cloud, n, m_hat);
            let cloud = match policy {
                RefPolicy::CNmt | RefPolicy::Naive => est_edge > est_cloud,
                RefPolicy::Edge => false,
                RefPolicy::Cloud => true,
                RefPolicy::Oracle => edge_real > cloud_real,
            };
            if cloud {
                total += cloud_real;
                belief = Some(match belief {
                    None => self.rtt,
                    Some(b) => self.ewma_alpha * self.rtt + (1.0 - self.ewma_alpha) * b,
                });
            } else {
                total += edge_real;
            }
            offloaded.push(cloud);
        }
        (total, offloaded)
    }
}
