//! Sample covariance, partial correlations and the Fisher-z test.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::data::DataMatrix;
use crate::error::{param, Error, Result};
use crate::sem::CovMatrix;

/// Relative pivot threshold below which a conditioning submatrix is treated
/// as singular.
pub const SINGULAR_TOL: f64 = 1e-10;

/// A single partial-correlation evaluation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PcorQuery {
    pub i: usize,
    pub j: usize,
    pub set: Vec<usize>,
    pub value: f64,
}

/// Unbiased covariance of the centred columns. With `standardize_columns`
/// every column is first scaled to unit sample standard deviation, so the
/// result is the sample correlation matrix.
pub fn sample_covariance(data: &DataMatrix, standardize_columns: bool) -> Result<CovMatrix> {
    let n = data.n();
    if n < 2 {
        return Err(param("sample covariance needs at least two rows"));
    }
    let mut x = data.values().clone();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut cov = x.tr_mul(&x) / (n as f64 - 1.0);
    let p = cov.nrows();
    if standardize_columns {
        let sd: Vec<f64> = (0..p).map(|k| cov[(k, k)].sqrt()).collect();
        if let Some(column) = sd.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::DegenerateColumn { column });
        }
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] /= sd[a] * sd[b];
            }
            cov[(a, a)] = 1.0;
        }
    }
    let sym = (&cov + cov.transpose()) * 0.5;
    Ok(CovMatrix::new_unchecked(sym, Some(n)))
}

fn check_query(p: usize, i: usize, j: usize, s: &[usize]) -> Result<()> {
    if i >= p || j >= p || s.iter().any(|&v| v >= p) {
        return Err(param("node index out of range"));
    }
    if i == j {
        return Err(param(format!("partial correlation needs distinct nodes, got {i} twice")));
    }
    if s.contains(&i) || s.contains(&j) {
        return Err(param(format!("conditioning set {s:?} contains an endpoint of ({i}, {j})")));
    }
    if s.len() + 2 > p {
        return Err(param("conditioning set too large"));
    }
    Ok(())
}

/// Reusable buffer for the Cholesky-based partial correlation used in the
/// estimation loops.
#[derive(Debug, Default, Clone)]
pub struct PcorScratch {
    l: Vec<f64>,
    idx: Vec<usize>,
}

impl PcorScratch {
    pub fn new() -> Self {
        Self::default()
    }

    /// `rho(i, j | s)` from the Cholesky factor of the covariance submatrix
    /// on `(s, i, j)`: the trailing 2x2 block of the factor is the Cholesky
    /// factor of the Schur complement, i.e. of the inverse of the `{i, j}`
    /// block of the marginal precision `P`, so `-P_ij / sqrt(P_ii P_jj)`
    /// reduces to `L_ji / sqrt(L_ji^2 + L_jj^2)`. Returns `None` when a pivot
    /// falls below [`SINGULAR_TOL`] relative to its diagonal entry.
    pub fn pcor(&mut self, cov: &DMatrix<f64>, i: usize, j: usize, s: &[usize]) -> Option<f64> {
        if s.is_empty() {
            let (a, b, c) = (cov[(i, i)], cov[(j, j)], cov[(i, j)]);
            if !(a > 0.0 && b > 0.0) {
                return None;
            }
            let r = c / (a * b).sqrt();
            return (1.0 - r * r > SINGULAR_TOL).then_some(r.clamp(-1.0, 1.0));
        }
        let m = s.len() + 2;
        self.idx.clear();
        self.idx.extend_from_slice(s);
        self.idx.push(i);
        self.idx.push(j);
        self.l.clear();
        self.l.resize(m * m, 0.0);
        let (l, idx) = (&mut self.l, &self.idx);
        for r in 0..m {
            for c in 0..=r {
                let mut v = cov[(idx[r], idx[c])];
                for u in 0..c {
                    v -= l[r * m + u] * l[c * m + u];
                }
                if r == c {
                    let diag = cov[(idx[r], idx[r])];
                    if !(v > SINGULAR_TOL * diag) {
                        return None;
                    }
                    l[r * m + r] = v.sqrt();
                } else {
                    l[r * m + c] = v / l[c * m + c];
                }
            }
        }
        let b = l[(m - 1) * m + (m - 2)];
        let c = l[(m - 1) * m + (m - 1)];
        Some((b / (b * b + c * c).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Partial correlation of `i` and `j` given `s` through the precision of the
/// `(|s| + 2)`-dimensional marginal (see [`PcorScratch::pcor`]).
pub fn partial_correlation(cov: &CovMatrix, i: usize, j: usize, s: &[usize]) -> Result<f64> {
    check_query(cov.p(), i, j, s)?;
    PcorScratch::new()
        .pcor(cov.matrix(), i, j, s)
        .ok_or_else(|| Error::Singular { i, j, set: s.to_vec() })
}

/// Partial correlation by the recursion
/// `rho(i,j|S) = [rho(i,j|S') - rho(i,k|S') rho(k,j|S')] / sqrt((1 - rho(i,k|S')^2)(1 - rho(k,j|S')^2))`
/// with `k` the smallest index in `S` and `S' = S \ {k}`.
pub fn partial_correlation_recursive(cov: &CovMatrix, i: usize, j: usize, s: &[usize]) -> Result<f64> {
    check_query(cov.p(), i, j, s)?;
    let mut sorted = s.to_vec();
    sorted.sort_unstable();
    let singular = || Error::Singular { i, j, set: s.to_vec() };
    recursive(cov.matrix(), i, j, &sorted).ok_or_else(singular)
}

fn recursive(cov: &DMatrix<f64>, i: usize, j: usize, s: &[usize]) -> Option<f64> {
    let Some((&k, rest)) = s.split_first() else {
        let (a, b) = (cov[(i, i)], cov[(j, j)]);
        if !(a > 0.0 && b > 0.0) {
            return None;
        }
        return Some(cov[(i, j)] / (a * b).sqrt());
    };
    let rij = recursive(cov, i, j, rest)?;
    let rik = recursive(cov, i, k, rest)?;
    let rkj = recursive(cov, k, j, rest)?;
    if rik.abs() >= 1.0 - SINGULAR_TOL || rkj.abs() >= 1.0 - SINGULAR_TOL {
        return None;
    }
    let v = (rij - rik * rkj) / ((1.0 - rik * rik) * (1.0 - rkj * rkj)).sqrt();
    (v.abs() < 1.0 + 1e-10).then_some(v.clamp(-1.0, 1.0))
}

/// Two-sided p-value of `z = sqrt(n - s_size - 3) atanh(r)` under the
/// standard normal.
pub fn fisher_z_pvalue(r: f64, n: usize, s_size: usize) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(Error::DegenerateCorrelation(r));
    }
    if n < s_size + 4 {
        return Err(Error::SampleSize { n, set_size: s_size });
    }
    let z = ((n - s_size - 3) as f64).sqrt() * r.abs().atanh();
    Ok(erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
}

/// The `|r|` at which [`fisher_z_pvalue`] equals `significance`.
pub fn fisher_z_critical_r(significance: f64, n: usize, s_size: usize) -> Result<f64> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(param(format!("significance must lie in (0, 1), got {significance}")));
    }
    if n < s_size + 4 {
        return Err(Error::SampleSize { n, set_size: s_size });
    }
    let z = Normal::standard().inverse_cdf(1.0 - significance / 2.0);
    Ok((z / ((n - s_size - 3) as f64).sqrt()).tanh())
}
