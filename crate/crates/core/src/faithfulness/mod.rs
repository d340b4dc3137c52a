//! Population checks of restricted strong faithfulness and path
//! faithfulness, and the Monte Carlo proportion study over random DAGs.
//!
//! Both conditions bound `|rho(i, j | S)|` away from zero: part (i) over
//! true edges and every `S` up to a size bound (`d_max` for restricted
//! strong faithfulness, `eta` for path faithfulness), part (ii) over
//! non-adjacent pairs of unshielded triples and every `S` within the same
//! bound that does not d-separate them.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{d_separated, unshielded_triples, Dag, GraphFamily};
use crate::pcor::{PcorQuery, SINGULAR_TOL};
use crate::rng::derive_seed;
use crate::sem::{assign_weights, population_covariance, LinearSem};
use crate::subsets::binomial;

mod decompose;

use decompose::EdgeOracle;

/// Default cap on `sum_{s <= bound} C(p - 2, s) * |E|`.
pub const DEFAULT_BUDGET: u128 = 50_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessReport {
    pub min_edge_pcor: f64,
    pub edge_witness: Option<PcorQuery>,
    pub min_triple_pcor: Option<f64>,
    pub triple_witness: Option<PcorQuery>,
    pub lambda: f64,
    pub bound: usize,
    pub satisfied_part_i: bool,
    /// `None` when part (ii) was not evaluated; vacuously `true` when the
    /// graph has no unshielded triples.
    pub satisfied_part_ii: Option<bool>,
}

fn required_work(p: usize, edges: usize, bound: usize) -> u128 {
    let sets: u128 = (0..=bound.min(p.saturating_sub(2))).map(|s| binomial(p.saturating_sub(2), s)).fold(0, u128::saturating_add);
    sets.saturating_mul(edges as u128)
}

fn check_budget(p: usize, edges: usize, bound: usize, budget: u128) -> Result<()> {
    let required = required_work(p, edges, bound);
    if required > budget {
        return Err(Error::Budget { required, budget });
    }
    Ok(())
}

/// Depth-first enumeration of node sets `S` with `|S| <= max_size` in
/// lexicographic order, carrying the covariance of the remaining nodes
/// conditional on `S`.
///
/// When `v` is the largest member of `S`, later sweeps only read columns
/// above `v`, so a level stores entry `(a, b)` for `b > v` plus the diagonal
/// and the watched pairs. Sweeps into the last level touch only the latter.
struct SetSweep {
    p: usize,
    max_size: usize,
    min_size: usize,
    /// Watched pairs `(i, j)` with `i < j`.
    pairs: Vec<(usize, usize)>,
    base_diag: Vec<f64>,
    stack: Vec<Vec<f64>>,
    in_set: Vec<bool>,
    set: Vec<usize>,
}

impl SetSweep {
    fn new(cov: &nalgebra::DMatrix<f64>, pairs: &[(usize, usize)], min_size: usize, max_size: usize) -> Self {
        let p = cov.nrows();
        let mut base = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                base[a * p + b] = cov[(a, b)];
            }
        }
        let max_size = max_size.min(p.saturating_sub(2));
        let mut stack = vec![base];
        stack.resize(max_size + 1, vec![0.0; p * p]);
        Self {
            p,
            max_size,
            min_size,
            pairs: pairs.iter().map(|&(i, j)| if i < j { (i, j) } else { (j, i) }).collect(),
            base_diag: (0..p).map(|k| cov[(k, k)]).collect(),
            stack,
            in_set: vec![false; p],
            set: Vec::new(),
        }
    }

    fn run<F>(&mut self, visit: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&[usize], &[bool], &[f64], usize) -> ControlFlow<()>,
    {
        self.dfs(0, visit)
    }

    /// Fills level `depth + 1` from level `depth` by conditioning on `v`.
    /// Returns false when `v` is (numerically) determined by the set.
    fn sweep(&mut self, depth: usize, v: usize) -> bool {
        let p = self.p;
        let (lo, hi) = self.stack.split_at_mut(depth + 1);
        let cur = &lo[depth];
        let next = &mut hi[0];
        let pivot = cur[v * p + v];
        if !(pivot > SINGULAR_TOL * self.base_diag[v]) {
            return false;
        }
        let in_set = &self.in_set;
        let leaf = depth + 1 == self.max_size;
        if !leaf {
            for a in 0..p {
                if in_set[a] || a == v {
                    continue;
                }
                let fa = cur[a * p + v] / pivot;
                let row = a * p;
                for b in v + 1..p {
                    next[row + b] = cur[row + b] - fa * cur[v * p + b];
                }
            }
        }
        let lim = if leaf { p } else { v + 1 };
        for a in 0..lim {
            if !in_set[a] && a != v {
                let c = cur[a * p + v];
                next[a * p + a] = cur[a * p + a] - c * c / pivot;
            }
        }
        for &(i, j) in &self.pairs {
            if (leaf || j <= v) && !in_set[i] && !in_set[j] && i != v && j != v {
                next[i * p + j] = cur[i * p + j] - cur[i * p + v] * cur[j * p + v] / pivot;
            }
        }
        true
    }

    fn dfs<F>(&mut self, start: usize, visit: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&[usize], &[bool], &[f64], usize) -> ControlFlow<()>,
    {
        let depth = self.set.len();
        if depth >= self.min_size {
            visit(&self.set, &self.in_set, &self.stack[depth], self.p)?;
        }
        if depth == self.max_size {
            return ControlFlow::Continue(());
        }
        for v in start..self.p {
            // a degenerate pivot makes every superset degenerate too
            if !self.sweep(depth, v) {
                continue;
            }
            self.in_set[v] = true;
            self.set.push(v);
            let flow = self.dfs(v + 1, visit);
            self.set.pop();
            self.in_set[v] = false;
            flow?;
        }
        ControlFlow::Continue(())
    }
}

/// Partial correlation of a watched pair at the current level.
fn pcor_from(c: &[f64], p: usize, i: usize, j: usize) -> f64 {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    c[i * p + j] / (c[i * p + i] * c[j * p + j]).sqrt()
}
/// Exact `min |rho(i, j | S)|` over true edges `(i, j)` and all
/// `S ⊆ V \ {i, j}` with `|S| <= set_bound`, on the population covariance.
/// Returns `+inf` with no witness for a graph without edges.
pub fn min_edge_pcor(sem: &LinearSem, set_bound: usize, budget: u128) -> Result<(f64, Option<PcorQuery>)> {
    let dag = sem.dag();
    check_budget(dag.p(), dag.edge_count(), set_bound, budget)?;
    let oracle = EdgeOracle::new(sem);
    let mut best = f64::INFINITY;
    let mut witness = None;
    for &(i, j) in dag.edges() {
        let (r, set) = oracle.edge_min(i, j, set_bound, -1.0);
        if r.abs() < best {
            best = r.abs();
            witness = Some(PcorQuery { i, j, set, value: r });
        }
    }
    Ok((best, witness))
}

/// True when every true edge keeps `|rho(i, j | S)| > lambda` for all
/// `|S| <= set_bound`. Stops at the first violation.
pub fn edge_condition_holds(sem: &LinearSem, lambda: f64, set_bound: usize, budget: u128) -> Result<bool> {
    let dag = sem.dag();
    check_budget(dag.p(), dag.edge_count(), set_bound, budget)?;
    let oracle = EdgeOracle::new(sem);
    Ok(dag.edges().iter().all(|&(i, j)| oracle.edge_min(i, j, set_bound, lambda).0.abs() > lambda))
}

/// `min |rho(i, j | S)|` over non-adjacent pairs `(i, j)` that close an
/// unshielded triple and every `S` with `|S| <= set_bound` that does not
/// d-separate them. `None` when no such triple exists.
pub fn min_triple_pcor(sem: &LinearSem, set_bound: usize, budget: u128) -> Result<Option<(f64, PcorQuery)>> {
    let dag = sem.dag();
    let mut pairs: Vec<(usize, usize)> = unshielded_triples(dag).into_iter().map(|(i, _, j)| (i, j)).collect();
    pairs.dedup();
    check_budget(dag.p(), pairs.len(), set_bound, budget)?;
    if pairs.is_empty() {
        return Ok(None);
    }
    let cov = population_covariance(sem);
    let mut best: Option<(f64, PcorQuery)> = None;
    let mut err = None;
    let _ = SetSweep::new(cov.matrix(), &pairs, 0, set_bound).run(&mut |set, in_set, c, p| {
        for &(i, j) in &pairs {
            if in_set[i] || in_set[j] {
                continue;
            }
            match d_separated(dag, i, j, set) {
                Ok(true) => continue,
                Ok(false) => {}
                Err(e) => {
                    err = Some(e);
                    return ControlFlow::Break(());
                }
            }
            let r = pcor_from(c, p, i, j);
            if best.as_ref().is_none_or(|(b, _)| r.abs() < *b) {
                best = Some((r.abs(), PcorQuery { i, j, set: set.to_vec(), value: r }));
            }
        }
        ControlFlow::Continue(())
    });
    match err {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

/// Evaluates both parts of the faithfulness condition with conditioning sets
/// up to `bound`.
pub fn faithfulness_report(sem: &LinearSem, lambda: f64, bound: usize, budget: u128) -> Result<FaithfulnessReport> {
    let (min_edge, edge_witness) = min_edge_pcor(sem, bound, budget)?;
    let triple = min_triple_pcor(sem, bound, budget)?;
    Ok(FaithfulnessReport {
        min_edge_pcor: min_edge,
        edge_witness,
        min_triple_pcor: triple.as_ref().map(|t| t.0),
        triple_witness: triple.as_ref().map(|t| t.1.clone()),
        lambda,
        bound,
        satisfied_part_i: min_edge > lambda,
        satisfied_part_ii: Some(triple.is_none_or(|t| t.0 > lambda)),
    })
}

/// Restricted strong faithfulness: sets up to the realized `d_max`.
pub fn rsf_report(sem: &LinearSem, lambda: f64, budget: u128) -> Result<FaithfulnessReport> {
    faithfulness_report(sem, lambda, sem.dag().max_degree(), budget)
}

/// Path faithfulness: sets up to `eta`.
pub fn pf_report(sem: &LinearSem, lambda: f64, eta: usize, budget: u128) -> Result<FaithfulnessReport> {
    faithfulness_report(sem, lambda, eta, budget)
}

/// Which part-(i) conditions one SEM satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartOneOutcome {
    pub rsf: bool,
    pub pf: bool,
}

/// Part (i) under both bounds. The path-faithfulness bound is
/// `min(eta, d_max)`; the strong bound `d_max` only adds larger sets, so it is
/// checked only when path faithfulness holds.
pub fn part_one_outcome(sem: &LinearSem, lambda: f64, eta: usize, budget: u128) -> Result<PartOneOutcome> {
    let d_max = sem.dag().max_degree();
    let pf_bound = eta.min(d_max);
    check_budget(sem.p(), sem.dag().edge_count(), d_max, budget)?;
    let pf = edge_condition_holds(sem, lambda, pf_bound, budget)?;
    let rsf = pf && edge_condition_holds(sem, lambda, d_max, budget)?;
    Ok(PartOneOutcome { rsf, pf })
}

/// Settings of one row of the faithfulness proportion study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionStudy {
    pub family: GraphFamily,
    pub p: usize,
    pub expected_degree: f64,
    pub lambda: f64,
    pub eta: usize,
    pub n_reps: usize,
    pub weight_low: f64,
    pub weight_high: f64,
    pub signed: bool,
    pub seed: u64,
    pub budget: u128,
}

impl ProportionStudy {
    /// Unit-noise SEMs with `Uniform(-1, 1)` weights, `lambda = 0.001`,
    /// `eta = 2` and 1000 replicates.
    pub fn new(family: GraphFamily, p: usize, expected_degree: f64) -> Self {
        Self {
            family,
            p,
            expected_degree,
            lambda: 1e-3,
            eta: 2,
            n_reps: 1000,
            weight_low: -1.0,
            weight_high: 1.0,
            signed: false,
            seed: 0,
            budget: DEFAULT_BUDGET,
        }
    }

    /// SEM of replicate `r`, seeded from `seed + r`.
    pub fn replicate_sem(&self, r: usize) -> Result<LinearSem> {
        let rep_seed = self.seed.wrapping_add(r as u64);
        let dag: Dag = self.family.generate(self.p, self.expected_degree, derive_seed(rep_seed, 0))?;
        let dag = assign_weights(&dag, self.weight_low, self.weight_high, self.signed, derive_seed(rep_seed, 1))?;
        LinearSem::unit(dag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionResult {
    pub rsf_pct: f64,
    pub pf_pct: f64,
    pub evaluated: usize,
    pub budget_failures: usize,
}

/// Percentage of replicates satisfying part (i) of restricted strong
/// faithfulness and of path faithfulness. Replicates over budget are
/// excluded and counted.
pub fn faithfulness_proportion(study: &ProportionStudy) -> Result<ProportionResult> {
    let outcomes: Vec<Result<Option<PartOneOutcome>>> = (0..study.n_reps)
        .into_par_iter()
        .map(|r| {
            let sem = study.replicate_sem(r)?;
            match part_one_outcome(&sem, study.lambda, study.eta, study.budget) {
                Ok(o) => Ok(Some(o)),
                Err(Error::Budget { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut rsf = 0usize;
    let mut pf = 0usize;
    let mut evaluated = 0usize;
    let mut budget_failures = 0usize;
    for o in outcomes {
        match o? {
            Some(o) => {
                evaluated += 1;
                rsf += o.rsf as usize;
                pf += o.pf as usize;
            }
            None => budget_failures += 1,
        }
    }
    let pct = |k: usize| if evaluated == 0 { 0.0 } else { 100.0 * k as f64 / evaluated as f64 };
    Ok(ProportionResult { rsf_pct: pct(rsf), pf_pct: pct(pf), evaluated, budget_failures })
}
