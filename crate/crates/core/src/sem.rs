//! Linear structural equation models `X_k = sum_{j in pa(k)} rho_jk X_j + eps_k`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{param, Error, Result};
use crate::graph::io::{dag_from_doc, parse_edge_list_doc, write_dag};
use crate::graph::{trek::treks_between, Dag};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    Uniform,
    Laplace,
}

impl NoiseFamily {
    /// Draws one zero-mean error with the given variance.
    pub fn draw(self, variance: f64, rng: &mut impl rand::Rng) -> f64 {
        let sd = variance.sqrt();
        match self {
            NoiseFamily::Gaussian => { let z: f64 = StandardNormal.sample(rng); sd * z },
            // Uniform(-a, a) has variance a^2 / 3.
            NoiseFamily::Uniform => sd * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            // Laplace(0, b) has variance 2 b^2; inverse-CDF draw.
            NoiseFamily::Laplace => {
                let b = sd / 2f64.sqrt();
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Uniform => "uniform",
            NoiseFamily::Laplace => "laplace",
        })
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "uniform" => Ok(Self::Uniform),
            "laplace" => Ok(Self::Laplace),
            other => Err(param(format!("unknown noise family '{other}'"))),
        }
    }
}

/// Weighted DAG plus per-node error variances.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSem {
    dag: Dag,
    noise_variances: Vec<f64>,
    noise: NoiseFamily,
}

impl LinearSem {
    pub fn new(dag: Dag, noise_variances: Vec<f64>, noise: NoiseFamily) -> Result<Self> {
        if !dag.is_weighted() {
            return Err(param("SEM requires a weighted DAG"));
        }
        if noise_variances.len() != dag.p() {
            return Err(param("one noise variance per node is required"));
        }
        if let Some(k) = noise_variances.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(param(format!("noise variance of node {k} must be positive and finite")));
        }
        Ok(Self { dag, noise_variances, noise })
    }

    /// Unit error variances with Gaussian noise.
    pub fn unit(dag: Dag) -> Result<Self> {
        let p = dag.p();
        Self::new(dag, vec![1.0; p], NoiseFamily::Gaussian)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn p(&self) -> usize {
        self.dag.p()
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_variances
    }

    pub fn noise(&self) -> NoiseFamily {
        self.noise
    }

    pub fn with_noise(mut self, noise: NoiseFamily) -> Self {
        self.noise = noise;
        self
    }
}

/// Symmetric positive semidefinite matrix, optionally tagged with the
/// sample size it was estimated from.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    matrix: DMatrix<f64>,
    sample_size: Option<usize>,
}

impl CovMatrix {
    /// Validates symmetry (1e-12, relative to the largest entry when that
    /// exceeds one) and positive semidefiniteness (smallest eigenvalue of the
    /// symmetrized matrix at least -1e-10 on the same scale).
    pub fn new(matrix: DMatrix<f64>, sample_size: Option<usize>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(param("covariance matrix must be square and non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(param("covariance matrix has non-finite entries"));
        }
        let scale = matrix.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(param(format!("covariance matrix not symmetric (max deviation {asym:e})")));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * scale {
            return Err(param(format!("covariance matrix not positive semidefinite (eigenvalue {min_eig:e})")));
        }
        Ok(Self { matrix: sym, sample_size })
    }

    pub(crate) fn new_unchecked(matrix: DMatrix<f64>, sample_size: Option<usize>) -> Self {
        Self { matrix, sample_size }
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn sample_size(&self) -> Option<usize> {
        self.sample_size
    }

    /// Rescales to unit diagonal. Fails on a zero variance.
    pub fn to_correlation(&self) -> Result<Self> {
        let p = self.p();
        let sd: Vec<f64> = (0..p).map(|k| self.matrix[(k, k)].sqrt()).collect();
        if let Some(column) = sd.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateColumn { column });
        }
        let mut m = DMatrix::from_fn(p, p, |a, b| self.matrix[(a, b)] / (sd[a] * sd[b]));
        for k in 0..p {
            m[(k, k)] = 1.0;
        }
        Ok(Self { matrix: m, sample_size: self.sample_size })
    }

    /// Returns `c * self`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { matrix: &self.matrix * c, sample_size: self.sample_size }
    }
}

/// Draws every edge weight i.i.d. from `Uniform(low, high)`, flipping the
/// sign with probability one half when `signed`.
pub fn assign_weights(dag: &Dag, low: f64, high: f64, signed: bool, rng_seed: u64) -> Result<Dag> {
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(param(format!("weight interval needs low < high, got ({low}, {high})")));
    }
    let mut rng = rng_from_seed(rng_seed);
    let weights = (0..dag.edge_count())
        .map(|_| {
            let w = rng.random_range(low..high);
            if signed && rng.random::<bool>() {
                -w
            } else {
                w
            }
        })
        .collect();
    dag.clone().with_weights(weights)
}

/// `Sigma = (I - A)^-1 D (I - A)^-T`, computed by forward substitution over
/// the causal order: `Sigma[k, m] = sum_{j in pa(k)} rho_jk Sigma[j, m]` for
/// `m` earlier than `k`, plus `sigma_k^2` on the diagonal.
pub fn population_covariance(sem: &LinearSem) -> CovMatrix {
    let dag = sem.dag();
    let p = dag.p();
    let mut sigma = DMatrix::<f64>::zeros(p, p);
    let order = dag.order();
    for (pos, &k) in order.iter().enumerate() {
        let pa: Vec<(usize, f64)> =
            dag.parents(k).iter().map(|&j| (j, dag.weight(j, k).expect("weighted SEM"))).collect();
        for &m in &order[..pos] {
            let v: f64 = pa.iter().map(|&(j, w)| w * sigma[(j, m)]).sum();
            sigma[(k, m)] = v;
            sigma[(m, k)] = v;
        }
        let var: f64 = pa.iter().map(|&(j, w)| w * sigma[(j, k)]).sum::<f64>() + sem.noise_variances[k];
        sigma[(k, k)] = var;
    }
    CovMatrix::new_unchecked(sigma, None)
}

/// Sum over treks between `i` and `j` of length at most `max_length` that
/// avoid every node of `s`, of `sigma_top^2` times the product of edge
/// weights. With `s` empty and `max_length >= 2 (p - 1)` this equals the
/// population covariance; `i == j` gives the variance.
pub fn trek_covariance(sem: &LinearSem, i: usize, j: usize, s: &[usize], max_length: usize) -> Result<f64> {
    let p = sem.p();
    if i >= p || j >= p || s.iter().any(|&v| v >= p) {
        return Err(param("node index out of range"));
    }
    if s.contains(&i) || s.contains(&j) {
        return Err(param("conditioning set must exclude the endpoints"));
    }
    Ok(treks_between(sem.dag(), i, j, max_length)
        .iter()
        .filter(|t| !t.touches(s))
        .map(|t| sem.noise_variances[t.top] * t.weight_product(sem.dag()))
        .sum())
}

/// Draws `n` i.i.d. rows by evaluating the structural equations in causal
/// order.
pub fn sample_data(sem: &LinearSem, n: usize, rng_seed: u64) -> Result<DataMatrix> {
    if n < 1 {
        return Err(param("sample size must be at least 1"));
    }
    let dag = sem.dag();
    let p = dag.p();
    let parents: Vec<Vec<(usize, f64)>> = (0..p)
        .map(|k| dag.parents(k).iter().map(|&j| (j, dag.weight(j, k).expect("weighted SEM"))).collect())
        .collect();
    let mut rng = rng_from_seed(rng_seed);
    let mut values = DMatrix::<f64>::zeros(n, p);
    let mut row = vec![0.0; p];
    for r in 0..n {
        for &k in dag.order() {
            let mean: f64 = parents[k].iter().map(|&(j, w)| w * row[j]).sum();
            row[k] = mean + sem.noise.draw(sem.noise_variances[k], &mut rng);
        }
        for k in 0..p {
            values[(r, k)] = row[k];
        }
    }
    DataMatrix::new(values, None)
}

/// Rescales every variable to unit marginal variance:
/// `rho~_jk = sd(X_j) / sd(X_k) * rho_jk` and `sigma~_k^2 = sigma_k^2 / Var(X_k)`.
pub fn standardize_sem(sem: &LinearSem) -> LinearSem {
    let sigma = population_covariance(sem);
    let dag = sem.dag();
    let sd: Vec<f64> = (0..dag.p()).map(|k| sigma.get(k, k).sqrt()).collect();
    let weights: Vec<f64> = dag
        .edges()
        .iter()
        .zip(dag.weights().expect("weighted SEM"))
        .map(|(&(j, k), &w)| sd[j] / sd[k] * w)
        .collect();
    let noise = sem.noise_variances.iter().zip(&sd).map(|(v, s)| v / (s * s)).collect();
    LinearSem {
        dag: dag.clone().with_weights(weights).expect("same edge count"),
        noise_variances: noise,
        noise: sem.noise,
    }
}

/// Spectral norm of the weighted adjacency matrix; the model is directed
/// walk-summable when this is below one.
pub fn walk_summability_norm(dag: &Dag) -> f64 {
    if dag.edge_count() == 0 {
        return 0.0;
    }
    dag.weighted_adjacency().singular_values().max()
}

/// `sum_{l = gamma+1}^{p-1} N_l rho_max^l`, where `N_l` counts simple treks
/// (two sides meeting only at the top) of length `l` between `i` and `j`
/// and `rho_max` is the largest absolute weight in the whole graph.
pub fn long_trek_weight(sem: &LinearSem, i: usize, j: usize, gamma: usize) -> Result<f64> {
    let p = sem.p();
    if i >= p || j >= p || i == j {
        return Err(param(format!("invalid node pair ({i}, {j})")));
    }
    let max_len = p - 1;
    if gamma >= max_len {
        return Ok(0.0);
    }
    let rho_max = sem.dag().max_abs_weight();
    Ok(treks_between(sem.dag(), i, j, max_len)
        .iter()
        .filter(|t| t.is_simple() && t.length() > gamma)
        .map(|t| rho_max.powi(t.length() as i32))
        .sum())
}

/// Edge-list text with a `# noise=<family>` header and one `v,<node>,<variance>`
/// record per node.
pub fn write_sem(sem: &LinearSem) -> String {
    let mut s = write_dag(sem.dag());
    writeln!(s, "# noise={}", sem.noise).unwrap();
    for (k, v) in sem.noise_variances.iter().enumerate() {
        writeln!(s, "v,{k},{v}").unwrap();
    }
    s
}

pub fn parse_sem(text: &str) -> Result<LinearSem> {
    let doc = parse_edge_list_doc(text)?;
    let dag = dag_from_doc(&doc)?;
    let noise = match doc.headers.iter().find(|(k, _)| k == "noise") {
        Some((_, v)) => v.parse()?,
        None => NoiseFamily::Gaussian,
    };
    let mut vars = vec![1.0; doc.p];
    for (line, rec) in &doc.records {
        let bad = |message: &str| Error::Parse { line: *line, message: message.to_string() };
        if rec.first().map(String::as_str) != Some("v") || rec.len() != 3 {
            return Err(bad("expected 'v,<node>,<variance>'"));
        }
        let k: usize = rec[1].parse().map_err(|_| bad("bad node index"))?;
        let v: f64 = rec[2].parse().map_err(|_| bad("bad variance"))?;
        if k >= doc.p {
            return Err(bad("node index out of range"));
        }
        vars[k] = v;
    }
    let dag = if dag.is_weighted() {
        dag
    } else {
        let zeros = vec![0.0; dag.edge_count()];
        dag.with_weights(zeros)?
    };
    LinearSem::new(dag, vars, noise)
}
