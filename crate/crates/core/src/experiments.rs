//! Config-driven Monte Carlo runners: pROC curves, rPC vs PC timing, and
//! faithfulness proportion tables. Each run yields a [`ResultTable`] that is
//! written as CSV with a JSON metadata sidecar.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::faithfulness::{faithfulness_proportion, ProportionStudy, DEFAULT_BUDGET};
use crate::graph::{skeleton_of, Dag, GraphFamily, UndirectedGraph};
use crate::orient::{estimate_cpdag, extend_to_dag, gaussian_bic_from_cov, mle_covariance, BicPenalty};
use crate::pcor::{fisher_z_critical_r, sample_covariance};
use crate::rng::derive_seed;
use crate::sem::{assign_weights, sample_data, CovMatrix, LinearSem, NoiseFamily};
use crate::skeleton::{compare_graphs, pc_skeleton, rpc_skeleton};

/// Significance levels used for the PC baseline, and mapped to rPC
/// thresholds when no `alpha_grid` is given.
pub const DEFAULT_SIGNIFICANCE_GRID: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Proc,
    Timing,
    Faithfulness,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::Proc => "proc",
            ExperimentKind::Timing => "timing",
            ExperimentKind::Faithfulness => "faithfulness",
        })
    }
}

/// A fixed `eta`, or a grid from which BIC picks one per replicate and
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Fixed(usize),
    Grid(Vec<usize>),
}

impl Default for EtaSpec {
    fn default() -> Self {
        EtaSpec::Fixed(2)
    }
}

/// One row of a faithfulness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessRowSpec {
    pub family: GraphFamily,
    pub p: usize,
    pub expected_degree: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub family: GraphFamily,
    pub p: usize,
    pub n: usize,
    pub expected_degree: f64,
    /// rPC thresholds; defaults to the Fisher-z critical correlations of
    /// `significance_grid` at sample size `n`.
    pub alpha_grid: Option<Vec<f64>>,
    pub eta: EtaSpec,
    pub significance_grid: Vec<f64>,
    pub n_reps: usize,
    pub seed: u64,
    pub stable: bool,
    pub noise: NoiseFamily,
    /// Edge weight range; defaults to `Uniform(0.1, 1)` for estimation and
    /// `Uniform(-1, 1)` for faithfulness.
    pub weight_low: Option<f64>,
    pub weight_high: Option<f64>,
    pub signed: bool,
    pub lambda: f64,
    /// Faithfulness rows; when absent a single row is built from
    /// `family`, `p` and `expected_degree`.
    pub rows: Option<Vec<FaithfulnessRowSpec>>,
    pub budget: u128,
    /// Written into the metadata only; the CLI chooses the directory.
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            family: GraphFamily::Er,
            p: 100,
            n: 200,
            expected_degree: 2.0,
            alpha_grid: None,
            eta: EtaSpec::default(),
            significance_grid: DEFAULT_SIGNIFICANCE_GRID.to_vec(),
            n_reps: 20,
            seed: 1,
            stable: true,
            noise: NoiseFamily::Gaussian,
            weight_low: None,
            weight_high: None,
            signed: false,
            lambda: 1e-3,
            rows: None,
            budget: DEFAULT_BUDGET,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Sets `kind`, refusing a config written for another experiment.
    pub fn for_kind(mut self, kind: ExperimentKind) -> Result<Self> {
        match self.kind {
            Some(k) if k != kind => Err(param(format!("config is for '{k}', not '{kind}'"))),
            _ => {
                self.kind = Some(kind);
                Ok(self)
            }
        }
    }

    pub fn resolved_alpha_grid(&self) -> Result<Vec<f64>> {
        match &self.alpha_grid {
            Some(g) => Ok(g.clone()),
            None => self.significance_grid.iter().map(|&s| fisher_z_critical_r(s, self.n, 0)).collect(),
        }
    }

    pub fn eta_grid(&self) -> Vec<usize> {
        match &self.eta {
            EtaSpec::Fixed(e) => vec![*e],
            EtaSpec::Grid(g) => g.clone(),
        }
    }

    pub fn weight_range(&self, kind: ExperimentKind) -> (f64, f64) {
        let (lo, hi) = match kind {
            ExperimentKind::Faithfulness => (-1.0, 1.0),
            _ => (0.1, 1.0),
        };
        (self.weight_low.unwrap_or(lo), self.weight_high.unwrap_or(hi))
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.n_reps == 0 {
            return Err(param("n_reps must be at least 1"));
        }
        let (lo, hi) = self.weight_range(kind);
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(param(format!("invalid weight range [{lo}, {hi}]")));
        }
        if kind == ExperimentKind::Faithfulness {
            if !(self.lambda > 0.0 && self.lambda < 1.0) {
                return Err(param("lambda must lie in (0, 1)"));
            }
            if self.rows.as_ref().is_some_and(|r| r.is_empty()) {
                return Err(param("rows must be non-empty"));
            }
            if !matches!(self.eta, EtaSpec::Fixed(_)) {
                return Err(param("faithfulness studies take a single eta"));
            }
            return Ok(());
        }
        if self.p < 2 || self.n < 5 || !(self.expected_degree > 0.0) {
            return Err(param("p >= 2, n >= 5 and expected_degree > 0 are required"));
        }
        let alphas = self.resolved_alpha_grid()?;
        if alphas.is_empty() || self.significance_grid.is_empty() || self.eta_grid().is_empty() {
            return Err(param("grids must be non-empty"));
        }
        if alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(param("alpha values must be non-negative"));
        }
        if self.significance_grid.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
            return Err(param("significance levels must lie in (0, 1)"));
        }
        Ok(())
    }

    fn replicate(&self, r: usize) -> Result<(Dag, LinearSem, CovMatrix, Option<DataMatrixParts>)> {
        let rep_seed = self.seed.wrapping_add(r as u64);
        let (lo, hi) = self.weight_range(ExperimentKind::Proc);
        let dag = self.family.generate(self.p, self.expected_degree, derive_seed(rep_seed, 0))?;
        let dag = assign_weights(&dag, lo, hi, self.signed, derive_seed(rep_seed, 1))?;
        let sem = LinearSem::unit(dag.clone())?.with_noise(self.noise);
        let data = sample_data(&sem, self.n, derive_seed(rep_seed, 2))?;
        let cov = sample_covariance(&data, true)?;
        let parts = DataMatrixParts { mle: mle_covariance(&data), n: data.n() };
        Ok((dag, sem, cov, Some(parts)))
    }
}

struct DataMatrixParts {
    mle: nalgebra::DMatrix<f64>,
    n: usize,
}

fn wrap(seed: u64, r: usize, e: Error) -> Error {
    Error::Replicate { seed: seed.wrapping_add(r as u64), source: Box::new(e) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub version: String,
    pub timestamp_unix: u64,
    pub threads: usize,
    pub elapsed_s: f64,
    pub alpha_grid: Option<Vec<f64>>,
    pub config: ExperimentConfig,
}

impl Metadata {
    fn new(kind: ExperimentKind, config: &ExperimentConfig, alpha_grid: Option<Vec<f64>>, started: Instant) -> Self {
        Self {
            kind,
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            threads: rayon::current_num_threads(),
            elapsed_s: started.elapsed().as_secs_f64(),
            alpha_grid,
            config: config.clone(),
        }
    }
}

/// One grid point of a pROC curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcRow {
    pub family: GraphFamily,
    pub p: usize,
    pub n: usize,
    pub expected_degree: f64,
    pub method: String,
    pub parameter: String,
    pub value: f64,
    /// Fixed eta, `bic` for a tuned run, empty for PC.
    pub eta: String,
    pub mean_selected_eta: Option<f64>,
    pub n_reps: usize,
    pub mean_tpr: f64,
    pub se_tpr: f64,
    pub mean_fpr: f64,
    pub se_fpr: f64,
    pub mean_edges: f64,
    pub mean_wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub family: GraphFamily,
    pub p: usize,
    pub n: usize,
    pub expected_degree: f64,
    pub n_reps: usize,
    pub mean_speedup_pct: f64,
    pub median_speedup_pct: f64,
    pub se_speedup_pct: f64,
    pub mean_rpc_s: f64,
    pub mean_pc_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessRow {
    pub family: GraphFamily,
    pub p: usize,
    pub expected_degree: f64,
    pub lambda: f64,
    pub eta: usize,
    pub n_reps: usize,
    pub rsf_pct: f64,
    pub pf_pct: f64,
    pub evaluated: usize,
    pub budget_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "lowercase")]
pub enum Rows {
    Proc(Vec<ProcRow>),
    Timing(Vec<TimingRow>),
    Faithfulness(Vec<FaithfulnessRow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub metadata: Metadata,
    pub rows: Rows,
    /// Per-replicate speedups of a timing run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicate_speedups: Option<Vec<f64>>,
}

impl ResultTable {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        match &self.rows {
            Rows::Proc(r) => r.iter().try_for_each(|x| wtr.serialize(x))?,
            Rows::Timing(r) => r.iter().try_for_each(|x| wtr.serialize(x))?,
            Rows::Faithfulness(r) => r.iter().try_for_each(|x| wtr.serialize(x))?,
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes `<kind>.csv` and `<kind>.json` into `dir`, creating it.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let stem = self.metadata.kind.to_string();
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        let sidecar = serde_json::json!({
            "metadata": self.metadata,
            "replicate_speedups": self.replicate_speedups,
            "csv": csv_path.file_name().map(|s| s.to_string_lossy().into_owned()),
        });
        std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok((csv_path, json_path))
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

/// Outcome of one method at one grid point on one replicate.
#[derive(Debug, Clone, Copy)]
struct PointOutcome {
    tpr: f64,
    fpr: f64,
    edges: usize,
    wall_s: f64,
    eta: Option<usize>,
}

fn score(est: &UndirectedGraph, truth: &UndirectedGraph, wall_s: f64, eta: Option<usize>) -> Result<PointOutcome> {
    let m = compare_graphs(est, truth)?;
    Ok(PointOutcome { tpr: m.tpr, fpr: m.fpr, edges: est.edge_count(), wall_s, eta })
}

/// rPC at one threshold with `eta` picked by BIC; ties go to the smaller
/// `eta`.
fn rpc_bic_point(
    cov: &CovMatrix,
    parts: &DataMatrixParts,
    alpha: f64,
    etas: &[usize],
    stable: bool,
) -> Result<(UndirectedGraph, usize)> {
    let mut best: Option<(f64, usize, UndirectedGraph)> = None;
    let mut last_err = None;
    for &eta in etas {
        let sk = rpc_skeleton(cov, alpha, eta, stable)?;
        let fitted = estimate_cpdag(&sk)
            .and_then(|c| gaussian_bic_from_cov(&parts.mle, parts.n, &extend_to_dag(&c).dag, BicPenalty::Extended));
        match fitted {
            Ok(b) => {
                if best.as_ref().is_none_or(|(s, _, _)| b.score > *s) {
                    best = Some((b.score, eta, sk.graph));
                }
            }
            Err(e) => {
                log::warn!("alpha={alpha}, eta={eta}: {e}");
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((_, eta, g)) => Ok((g, eta)),
        None => Err(last_err.unwrap_or_else(|| param("empty eta grid"))),
    }
}

/// Average TPR/FPR of rPC over `alpha_grid` and PC over
/// `significance_grid` across replicates.
pub fn run_proc_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    let started = Instant::now();
    config.validate(ExperimentKind::Proc)?;
    let alphas = config.resolved_alpha_grid()?;
    let etas = config.eta_grid();
    let tuned = matches!(config.eta, EtaSpec::Grid(_));
    let per_rep: Vec<Result<(Vec<PointOutcome>, Vec<PointOutcome>)>> = (0..config.n_reps)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<_> {
                let (dag, _, cov, parts) = config.replicate(r)?;
                let parts = parts.expect("sampled data");
                let truth = skeleton_of(&dag);
                let mut rpc = Vec::with_capacity(alphas.len());
                for &alpha in &alphas {
                    let t = Instant::now();
                    let (g, eta) = if tuned {
                        rpc_bic_point(&cov, &parts, alpha, &etas, config.stable)?
                    } else {
                        (rpc_skeleton(&cov, alpha, etas[0], config.stable)?.graph, etas[0])
                    };
                    rpc.push(score(&g, &truth, t.elapsed().as_secs_f64(), Some(eta))?);
                }
                let mut pc = Vec::with_capacity(config.significance_grid.len());
                for &sig in &config.significance_grid {
                    let t = Instant::now();
                    let g = pc_skeleton(&cov, config.n, sig, config.stable)?.graph;
                    pc.push(score(&g, &truth, t.elapsed().as_secs_f64(), None)?);
                }
                Ok((rpc, pc))
            };
            run().map_err(|e| wrap(config.seed, r, e))
        })
        .collect();
    let per_rep: Vec<_> = per_rep.into_iter().collect::<Result<_>>()?;

    let row = |method: &str, parameter: &str, value: f64, eta: String, outs: Vec<PointOutcome>| {
        let tpr: Vec<f64> = outs.iter().map(|o| o.tpr).collect();
        let fpr: Vec<f64> = outs.iter().map(|o| o.fpr).collect();
        let (mean_tpr, se_tpr) = mean_se(&tpr);
        let (mean_fpr, se_fpr) = mean_se(&fpr);
        let k = outs.len() as f64;
        let mean_selected_eta = if method == "rpc" {
            Some(outs.iter().map(|o| o.eta.unwrap_or(0) as f64).sum::<f64>() / k)
        } else {
            None
        };
        ProcRow {
            family: config.family,
            p: config.p,
            n: config.n,
            expected_degree: config.expected_degree,
            method: method.to_string(),
            parameter: parameter.to_string(),
            value,
            eta,
            mean_selected_eta,
            n_reps: outs.len(),
            mean_tpr,
            se_tpr,
            mean_fpr,
            se_fpr,
            mean_edges: outs.iter().map(|o| o.edges as f64).sum::<f64>() / k,
            mean_wall_s: outs.iter().map(|o| o.wall_s).sum::<f64>() / k,
        }
    };
    let eta_label = if tuned { "bic".to_string() } else { etas[0].to_string() };
    let mut rows = Vec::new();
    for (a, &alpha) in alphas.iter().enumerate() {
        rows.push(row("rpc", "alpha", alpha, eta_label.clone(), per_rep.iter().map(|x| x.0[a]).collect()));
    }
    for (s, &sig) in config.significance_grid.iter().enumerate() {
        rows.push(row("pc", "significance", sig, String::new(), per_rep.iter().map(|x| x.1[s]).collect()));
    }
    Ok(ResultTable {
        metadata: Metadata::new(ExperimentKind::Proc, config, Some(alphas), started),
        rows: Rows::Proc(rows),
        replicate_speedups: None,
    })
}

/// Per replicate, total skeleton time of rPC over the threshold grid and PC
/// over the significance grid, reported as `100 (1 - t_rPC / t_PC)`.
/// Replicates run one after another on a single worker.
pub fn run_timing_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    let started = Instant::now();
    config.validate(ExperimentKind::Timing)?;
    let alphas = config.resolved_alpha_grid()?;
    let eta = config.eta_grid()[0];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| param(format!("thread pool: {e}")))?;
    let mut speedups = Vec::with_capacity(config.n_reps);
    let mut t_rpc = Vec::with_capacity(config.n_reps);
    let mut t_pc = Vec::with_capacity(config.n_reps);
    for r in 0..config.n_reps {
        let (_, _, cov, _) = config.replicate(r).map_err(|e| wrap(config.seed, r, e))?;
        let (a, b) = pool
            .install(|| -> Result<(f64, f64)> {
                let t = Instant::now();
                for &alpha in &alphas {
                    rpc_skeleton(&cov, alpha, eta, config.stable)?;
                }
                let a = t.elapsed().as_secs_f64();
                let t = Instant::now();
                for &sig in &config.significance_grid {
                    pc_skeleton(&cov, config.n, sig, config.stable)?;
                }
                Ok((a, t.elapsed().as_secs_f64()))
            })
            .map_err(|e| wrap(config.seed, r, e))?;
        t_rpc.push(a);
        t_pc.push(b);
        speedups.push(100.0 * (1.0 - a / b));
    }
    let (mean, se) = mean_se(&speedups);
    let k = config.n_reps as f64;
    let row = TimingRow {
        family: config.family,
        p: config.p,
        n: config.n,
        expected_degree: config.expected_degree,
        n_reps: config.n_reps,
        mean_speedup_pct: mean,
        median_speedup_pct: median(&speedups),
        se_speedup_pct: se,
        mean_rpc_s: t_rpc.iter().sum::<f64>() / k,
        mean_pc_s: t_pc.iter().sum::<f64>() / k,
    };
    let mut metadata = Metadata::new(ExperimentKind::Timing, config, Some(alphas), started);
    metadata.threads = 1;
    Ok(ResultTable { metadata, rows: Rows::Timing(vec![row]), replicate_speedups: Some(speedups) })
}

/// One faithfulness proportion per configured row.
pub fn run_faithfulness_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    let started = Instant::now();
    config.validate(ExperimentKind::Faithfulness)?;
    let specs = config.rows.clone().unwrap_or_else(|| {
        vec![FaithfulnessRowSpec { family: config.family, p: config.p, expected_degree: config.expected_degree }]
    });
    let eta = config.eta_grid()[0];
    let (lo, hi) = config.weight_range(ExperimentKind::Faithfulness);
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut study = ProportionStudy::new(spec.family, spec.p, spec.expected_degree);
        study.lambda = config.lambda;
        study.eta = eta;
        study.n_reps = config.n_reps;
        study.weight_low = lo;
        study.weight_high = hi;
        study.signed = config.signed;
        study.seed = config.seed;
        study.budget = config.budget;
        let res = faithfulness_proportion(&study)?;
        if res.budget_failures > 0 {
            log::warn!("{} replicates of {:?} exceeded the enumeration budget", res.budget_failures, spec);
        }
        rows.push(FaithfulnessRow {
            family: spec.family,
            p: spec.p,
            expected_degree: spec.expected_degree,
            lambda: config.lambda,
            eta,
            n_reps: config.n_reps,
            rsf_pct: res.rsf_pct,
            pf_pct: res.pf_pct,
            evaluated: res.evaluated,
            budget_failures: res.budget_failures,
        });
    }
    Ok(ResultTable {
        metadata: Metadata::new(ExperimentKind::Faithfulness, config, None, started),
        rows: Rows::Faithfulness(rows),
        replicate_speedups: None,
    })
}

pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig) -> Result<ResultTable> {
    match kind {
        ExperimentKind::Proc => run_proc_experiment(config),
        ExperimentKind::Timing => run_timing_experiment(config),
        ExperimentKind::Faithfulness => run_faithfulness_experiment(config),
    }
}
