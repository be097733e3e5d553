//! Small dense least squares via Householder QR.
//!
//! Designs here have at most three columns, so everything is column-major
//! `Vec<Vec<f64>>` and solved in place. A column whose diagonal entry in `R`
//! collapses relative to its original norm is reported as rank deficient.

/// Relative threshold below which a pivot is treated as zero.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RankDeficient {
    pub column: usize,
}

/// Minimizes `||X b - y||²` for the design given as columns.
pub(crate) fn solve(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>, RankDeficient> {
    let p = columns.len();
    let rows = y.len();
    if rows < p {
        return Err(RankDeficient { column: rows });
    }
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut rhs = y.to_vec();
    let norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();

    for k in 0..p {
        let col_norm = norm(&a[k][k..]);
        if norms[k] == 0.0 || col_norm <= RANK_TOL * norms[k] {
            return Err(RankDeficient { column: k });
        }
        let alpha = if a[k][k] > 0.0 { -col_norm } else { col_norm };
        // v = x - alpha e1, stored in a[k][k..]
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let v_norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if v_norm_sq == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k) {
            reflect(&v, v_norm_sq, &mut col[k..]);
        }
        reflect(&v, v_norm_sq, &mut rhs[k..]);
    }

    // back substitution on the upper-triangular block
    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let mut acc = rhs[i];
        for j in (i + 1)..p {
            acc -= a[j][i] * coef[j];
        }
        coef[i] = acc / a[i][i];
    }
    Ok(coef)
}

fn reflect(v: &[f64], v_norm_sq: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let scale = 2.0 * dot / v_norm_sq;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= scale * vi;
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
