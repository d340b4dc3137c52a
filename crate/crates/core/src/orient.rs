//! From skeleton to CPDAG to DAG, and the Gaussian BIC used to tune
//! `(alpha, eta)`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{param, Error, Result};
use crate::graph::{unshielded_triples, Adjacency, Dag, UndirectedGraph};
use crate::pcor::{sample_covariance, SINGULAR_TOL};
use crate::skeleton::{rpc_skeleton, SkeletonEstimate};

/// Partially directed graph. Undirected pairs are stored as `(a, b)` with
/// `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pdag {
    p: usize,
    directed: BTreeSet<(usize, usize)>,
    undirected: BTreeSet<(usize, usize)>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b { (a, b) } else { (b, a) }
}

impl Pdag {
    pub fn new(
        p: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        undirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut g = Self { p, directed: BTreeSet::new(), undirected: BTreeSet::new() };
        for (a, b) in undirected {
            g.check_pair(a, b)?;
            g.undirected.insert(key(a, b));
        }
        for (a, b) in directed {
            g.check_pair(a, b)?;
            if g.undirected.contains(&key(a, b)) || g.directed.contains(&(b, a)) {
                return Err(param(format!("pair ({a}, {b}) listed twice")));
            }
            g.directed.insert((a, b));
        }
        Ok(g)
    }

    /// All edges of `skeleton` left undirected.
    pub fn from_skeleton(skeleton: &UndirectedGraph) -> Self {
        Self { p: skeleton.p(), directed: BTreeSet::new(), undirected: skeleton.edges().into_iter().collect() }
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        if a == b || a >= self.p || b >= self.p {
            return Err(param(format!("invalid pair ({a}, {b}) for p = {}", self.p)));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn undirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.undirected
    }

    pub fn has_directed(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&(a, b))
    }

    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        a != b && self.undirected.contains(&key(a, b))
    }

    /// Turns the undirected edge `a - b` into `a -> b`.
    fn orient(&mut self, a: usize, b: usize) -> bool {
        if self.undirected.remove(&key(a, b)) {
            self.directed.insert((a, b));
            true
        } else {
            false
        }
    }

    pub fn skeleton(&self) -> UndirectedGraph {
        let mut g = UndirectedGraph::empty(self.p);
        for &(a, b) in self.directed.iter().chain(&self.undirected) {
            g.add_edge(a, b);
        }
        g
    }
}

impl Adjacency for Pdag {
    fn node_count(&self) -> usize {
        self.p
    }

    fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.has_undirected(a, b) || self.has_directed(a, b) || self.has_directed(b, a)
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.p).filter(|&u| u != v && self.is_adjacent(u, v)).collect()
    }
}

/// Orients `i -> k <- j` for every unshielded triple whose separating set
/// omits `k`. An edge claimed in both directions stays undirected.
pub fn orient_v_structures(skeleton: &UndirectedGraph, sepsets: &BTreeMap<(usize, usize), Vec<usize>>) -> Result<Pdag> {
    let mut proposals: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, k, j) in unshielded_triples(skeleton) {
        let sep = sepsets.get(&(i, j)).ok_or(Error::MissingSepset(i, j))?;
        if !sep.contains(&k) {
            proposals.insert((i, k));
            proposals.insert((j, k));
        }
    }
    let mut pdag = Pdag::from_skeleton(skeleton);
    for &(a, b) in &proposals {
        if proposals.contains(&(b, a)) {
            if a < b {
                log::debug!("conflicting v-structure orientations on {a} - {b}; left undirected");
            }
            continue;
        }
        pdag.orient(a, b);
    }
    Ok(pdag)
}

fn meek_pass(g: &mut Pdag) -> bool {
    let mut changed = false;
    let undirected: Vec<(usize, usize)> = g.undirected.iter().copied().collect();
    for (x, y) in undirected {
        for (a, b) in [(x, y), (y, x)] {
            if !g.has_undirected(a, b) {
                continue;
            }
            if should_orient(g, a, b) {
                g.orient(a, b);
                changed = true;
            }
        }
    }
    changed
}

/// Whether one of the four rules forces `a -> b` for the undirected `a - b`.
fn should_orient(g: &Pdag, a: usize, b: usize) -> bool {
    let p = g.p;
    // R1: c -> a - b with c, b non-adjacent
    if (0..p).any(|c| g.has_directed(c, a) && c != b && !g.is_adjacent(c, b)) {
        return true;
    }
    // R2: a -> c -> b
    if (0..p).any(|c| g.has_directed(a, c) && g.has_directed(c, b)) {
        return true;
    }
    // R3: a - c -> b and a - d -> b with c, d non-adjacent
    let mids: Vec<usize> = (0..p).filter(|&c| g.has_undirected(a, c) && g.has_directed(c, b)).collect();
    for (s, &c) in mids.iter().enumerate() {
        if mids[s + 1..].iter().any(|&d| !g.is_adjacent(c, d)) {
            return true;
        }
    }
    // R4: a - c -> d -> b with a, d adjacent and c, b non-adjacent
    for c in 0..p {
        if !g.has_undirected(a, c) || c == b || g.is_adjacent(c, b) {
            continue;
        }
        if (0..p).any(|d| g.has_directed(c, d) && g.has_directed(d, b) && g.is_adjacent(a, d)) {
            return true;
        }
    }
    false
}

/// Applies the four Meek rules until nothing changes.
pub fn apply_meek_rules(pdag: &Pdag) -> Pdag {
    let mut g = pdag.clone();
    while meek_pass(&mut g) {}
    g
}

/// v-structures followed by Meek closure.
pub fn estimate_cpdag(skeleton: &SkeletonEstimate) -> Result<Pdag> {
    Ok(apply_meek_rules(&orient_v_structures(&skeleton.graph, &skeleton.sepsets)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagExtension {
    pub dag: Dag,
    /// True when no consistent extension existed and the fallback ordering
    /// was used for the remaining nodes.
    pub fallback: bool,
}

/// Consistent extension by repeated sink elimination. A node qualifies as a
/// sink when it has no outgoing directed edge and each undirected neighbour
/// is adjacent to all its other neighbours; among qualifying nodes the
/// largest index is taken, so a lone `a - b` with `a < b` becomes `a -> b`.
pub fn extend_to_dag(pdag: &Pdag) -> DagExtension {
    let p = pdag.p;
    let mut g = pdag.clone();
    let mut alive = vec![true; p];
    let mut remaining = p;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    'outer: while remaining > 0 {
        for x in (0..p).rev() {
            if !alive[x] || (0..p).any(|y| alive[y] && g.has_directed(x, y)) {
                continue;
            }
            let und: Vec<usize> = (0..p).filter(|&y| alive[y] && g.has_undirected(x, y)).collect();
            let adj: Vec<usize> = (0..p).filter(|&y| alive[y] && g.is_adjacent(x, y)).collect();
            let ok = und.iter().all(|&y| adj.iter().all(|&z| z == y || g.is_adjacent(y, z)));
            if !ok {
                continue;
            }
            for &y in &adj {
                edges.push((y, x));
            }
            for y in und {
                g.orient(y, x);
            }
            alive[x] = false;
            remaining -= 1;
            continue 'outer;
        }
        break;
    }
    let fallback = remaining > 0;
    if fallback {
        log::debug!("no consistent extension; ordering {remaining} remaining nodes by index");
        let order = fallback_order(&g, &alive);
        let mut pos = vec![usize::MAX; p];
        for (r, &v) in order.iter().enumerate() {
            pos[v] = r;
        }
        for &(a, b) in g.directed.iter().chain(&g.undirected) {
            if alive[a] && alive[b] {
                edges.push(if pos[a] < pos[b] { (a, b) } else { (b, a) });
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let dag = Dag::new(p, edges).expect("sink elimination and fallback ordering are acyclic");
    DagExtension { dag, fallback }
}

/// Topological order of the alive nodes under their directed edges, taking
/// the smallest available index first. A directed cycle is broken by
/// releasing the smallest remaining node.
fn fallback_order(g: &Pdag, alive: &[bool]) -> Vec<usize> {
    let p = g.p;
    let mut placed = vec![false; p];
    let mut order = Vec::new();
    let target = alive.iter().filter(|&&a| a).count();
    while order.len() < target {
        let free = (0..p).find(|&v| {
            alive[v] && !placed[v] && !(0..p).any(|u| alive[u] && !placed[u] && g.has_directed(u, v))
        });
        let v = free.unwrap_or_else(|| (0..p).find(|&v| alive[v] && !placed[v]).expect("nodes remain"));
        placed[v] = true;
        order.push(v);
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BicPenalty {
    /// `0.5 |E| log n + 2 |E| log p`
    #[default]
    Extended,
    /// `0.5 |E| log n`
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicScore {
    pub loglik: f64,
    pub edge_count: usize,
    pub n: usize,
    pub p: usize,
    pub penalty: BicPenalty,
    pub score: f64,
}

impl BicScore {
    pub fn new(loglik: f64, edge_count: usize, n: usize, p: usize, penalty: BicPenalty) -> Self {
        let e = edge_count as f64;
        let mut pen = 0.5 * e * (n as f64).ln();
        if penalty == BicPenalty::Extended {
            pen += 2.0 * e * (p as f64).ln();
        }
        Self { loglik, edge_count, n, p, penalty, score: loglik - pen }
    }
}

/// Maximum-likelihood covariance of the centred columns (divisor `n`).
pub fn mle_covariance(data: &DataMatrix) -> DMatrix<f64> {
    let x = data.values();
    let n = x.nrows();
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    (c.transpose() * &c) / n as f64
}

/// Residual variance of node `k` regressed on `parents` under `s`.
fn residual_variance(s: &DMatrix<f64>, k: usize, parents: &[usize]) -> Result<f64> {
    let m = parents.len();
    let total = s[(k, k)];
    if m == 0 {
        return if total > 0.0 { Ok(total) } else { Err(Error::DegenerateFit { node: k }) };
    }
    let spp = DMatrix::from_fn(m, m, |a, b| s[(parents[a], parents[b])]);
    let spk = DMatrix::from_fn(m, 1, |a, _| s[(parents[a], k)]);
    let chol = spp.clone().cholesky().ok_or(Error::DegenerateFit { node: k })?;
    let l = chol.l();
    for a in 0..m {
        if l[(a, a)] * l[(a, a)] <= SINGULAR_TOL * spp[(a, a)].max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateFit { node: k });
        }
    }
    let w = l.solve_lower_triangular(&spk).ok_or(Error::DegenerateFit { node: k })?;
    let rss = total - w.norm_squared();
    if !(rss > SINGULAR_TOL * total) {
        return Err(Error::DegenerateFit { node: k });
    }
    Ok(rss)
}

/// BIC from a maximum-likelihood covariance. Each node is fitted by least
/// squares on its parents with an intercept.
pub fn gaussian_bic_from_cov(s: &DMatrix<f64>, n: usize, dag: &Dag, penalty: BicPenalty) -> Result<BicScore> {
    let p = dag.p();
    if s.nrows() != p || s.ncols() != p {
        return Err(param(format!("covariance is {}x{}, graph has {p} nodes", s.nrows(), s.ncols())));
    }
    let mut loglik = 0.0;
    let nf = n as f64;
    for k in 0..p {
        let parents = dag.parents(k);
        if n <= parents.len() + 1 {
            return Err(Error::SampleSize { n, set_size: parents.len() });
        }
        let var = residual_variance(s, k, parents)?;
        loglik += -0.5 * nf * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);
    }
    Ok(BicScore::new(loglik, dag.edge_count(), n, p, penalty))
}

/// Gaussian BIC with the extended penalty.
pub fn gaussian_bic(data: &DataMatrix, dag: &Dag) -> Result<BicScore> {
    gaussian_bic_with(data, dag, BicPenalty::Extended)
}

pub fn gaussian_bic_with(data: &DataMatrix, dag: &Dag, penalty: BicPenalty) -> Result<BicScore> {
    if dag.p() != data.p() {
        return Err(param(format!("data has {} columns, graph has {} nodes", data.p(), dag.p())));
    }
    gaussian_bic_from_cov(&mle_covariance(data), data.n(), dag, penalty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub eta: usize,
    pub score: Option<f64>,
    pub edge_count: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub alpha: f64,
    pub eta: usize,
    pub bic: BicScore,
    pub skeleton: SkeletonEstimate,
    pub cpdag: Pdag,
    pub extension: DagExtension,
    pub grid: Vec<GridPoint>,
}

struct Fitted {
    bic: BicScore,
    skeleton: SkeletonEstimate,
    cpdag: Pdag,
    extension: DagExtension,
}

fn fit_point(
    cov: &crate::sem::CovMatrix,
    mle: &DMatrix<f64>,
    n: usize,
    alpha: f64,
    eta: usize,
    stable: bool,
    penalty: BicPenalty,
) -> Result<Fitted> {
    let skeleton = rpc_skeleton(cov, alpha, eta, stable)?;
    let cpdag = estimate_cpdag(&skeleton)?;
    let extension = extend_to_dag(&cpdag);
    let bic = gaussian_bic_from_cov(mle, n, &extension.dag, penalty)?;
    Ok(Fitted { bic, skeleton, cpdag, extension })
}

/// Grid search over `alpha x eta` maximising the BIC of the extended rPC
/// estimate. Ties go to the smaller `eta`, then the larger `alpha`. Grid
/// points that fail are logged and skipped.
pub fn tune_parameters(data: &DataMatrix, alpha_grid: &[f64], eta_grid: &[usize], stable: bool) -> Result<TuneResult> {
    tune_parameters_with(data, alpha_grid, eta_grid, stable, BicPenalty::Extended)
}

pub fn tune_parameters_with(
    data: &DataMatrix,
    alpha_grid: &[f64],
    eta_grid: &[usize],
    stable: bool,
    penalty: BicPenalty,
) -> Result<TuneResult> {
    if alpha_grid.is_empty() || eta_grid.is_empty() {
        return Err(param("alpha and eta grids must be non-empty"));
    }
    let cov = sample_covariance(data, true)?;
    let mle = mle_covariance(data);
    let n = data.n();
    let mut grid = Vec::new();
    let mut best: Option<(f64, usize, Fitted)> = None;
    for &eta in eta_grid {
        for &alpha in alpha_grid {
            match fit_point(&cov, &mle, n, alpha, eta, stable, penalty) {
                Ok(f) => {
                    grid.push(GridPoint {
                        alpha,
                        eta,
                        score: Some(f.bic.score),
                        edge_count: Some(f.bic.edge_count),
                        error: None,
                    });
                    let better = match &best {
                        None => true,
                        Some((ba, be, bf)) => {
                            let (s, bs) = (f.bic.score, bf.bic.score);
                            s > bs || (s == bs && (eta < *be || (eta == *be && alpha > *ba)))
                        }
                    };
                    if better {
                        best = Some((alpha, eta, f));
                    }
                }
                Err(e) => {
                    log::warn!("grid point alpha={alpha}, eta={eta} skipped: {e}");
                    grid.push(GridPoint { alpha, eta, score: None, edge_count: None, error: Some(e.to_string()) });
                }
            }
        }
    }
    let (alpha, eta, f) = best.ok_or_else(|| param("every grid point failed"))?;
    Ok(TuneResult { alpha, eta, bic: f.bic, skeleton: f.skeleton, cpdag: f.cpdag, extension: f.extension, grid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::figure1_weighted;
    use crate::sem::{population_covariance, sample_data, LinearSem};

    fn sepsets(pairs: &[((usize, usize), Vec<usize>)]) -> BTreeMap<(usize, usize), Vec<usize>> {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn collider_and_chain() {
        let sk = UndirectedGraph::from_edges(3, [(0, 2), (1, 2)]).unwrap();
        let g = orient_v_structures(&sk, &sepsets(&[((0, 1), vec![])])).unwrap();
        assert!(g.has_directed(0, 2) && g.has_directed(1, 2));
        let g = orient_v_structures(&sk, &sepsets(&[((0, 1), vec![2])])).unwrap();
        assert!(g.directed().is_empty());
        assert!(matches!(orient_v_structures(&sk, &BTreeMap::new()), Err(Error::MissingSepset(0, 1))));
    }

    #[test]
    fn conflict_left_undirected() {
        // 0 - 1 - 2 - 3 with empty sepsets: both triples claim edge 1 - 2
        let sk = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = sepsets(&[((0, 2), vec![]), ((1, 3), vec![]), ((0, 3), vec![])]);
        let g = orient_v_structures(&sk, &s).unwrap();
        assert!(g.has_undirected(1, 2));
        assert!(g.has_directed(0, 1) && g.has_directed(3, 2));
    }

    #[test]
    fn meek_r1_r2() {
        let g = Pdag::new(3, [(0, 1)], [(1, 2)]).unwrap();
        assert!(apply_meek_rules(&g).has_directed(1, 2));
        let g = Pdag::new(3, [(0, 1), (1, 2)], [(0, 2)]).unwrap();
        assert!(apply_meek_rules(&g).has_directed(0, 2));
    }

    #[test]
    fn meek_r3_r4() {
        // R3: a=0, b=1, c=2, d=3
        let g = Pdag::new(4, [(2, 1), (3, 1)], [(0, 1), (0, 2), (0, 3)]).unwrap();
        assert!(apply_meek_rules(&g).has_directed(0, 1));
        // R4: a=0 - c=1 -> d=2 -> b=3, a adjacent to d and b, c and b non-adjacent
        let g = Pdag::new(4, [(1, 2), (2, 3)], [(0, 1), (0, 2), (0, 3)]).unwrap();
        assert!(apply_meek_rules(&g).has_directed(0, 3));
    }

    #[test]
    fn figure1_oracle_cpdag() {
        let dag = figure1_weighted(0.5);
        let cov = population_covariance(&LinearSem::unit(dag).unwrap());
        let est = rpc_skeleton(&cov, 1e-8, 2, false).unwrap();
        let cpdag = estimate_cpdag(&est).unwrap();
        assert!(cpdag.has_directed(0, 2) && cpdag.has_directed(3, 2));
    }

    #[test]
    fn extension_rules() {
        let g = Pdag::new(2, [], [(0, 1)]).unwrap();
        let ext = extend_to_dag(&g);
        assert_eq!(ext.dag.edges(), &[(0, 1)]);
        assert!(!ext.fallback);
        let g = Pdag::new(3, [(2, 0), (0, 1)], []).unwrap();
        assert_eq!(extend_to_dag(&g).dag.edges(), &[(0, 1), (2, 0)]);
    }

    #[test]
    fn fallback_breaks_cycles() {
        // a directed cycle and an undirected 4-cycle both block elimination
        let g = Pdag::new(3, [(0, 1), (1, 2), (2, 0)], []).unwrap();
        let ext = extend_to_dag(&g);
        assert!(ext.fallback && ext.dag.is_acyclic() && ext.dag.edge_count() == 3);
        let g = Pdag::new(4, [], [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let ext = extend_to_dag(&g);
        assert!(ext.fallback && ext.dag.edge_count() == 4);
    }

    #[test]
    fn bic_arithmetic() {
        let b = BicScore::new(-100.0, 3, 50, 10, BicPenalty::Extended);
        assert_eq!(b.score, -100.0 - 0.5 * 3.0 * 50f64.ln() - 2.0 * 3.0 * 10f64.ln());
        let b = BicScore::new(-100.0, 3, 50, 10, BicPenalty::Standard);
        assert_eq!(b.score, -100.0 - 1.5 * 50f64.ln());
    }

    #[test]
    fn bic_empty_graph_and_equivalence() {
        let sem = LinearSem::unit(Dag::from_weighted(3, &[(0, 1, 0.8), (1, 2, -0.6)]).unwrap()).unwrap();
        let data = sample_data(&sem, 500, 3).unwrap();
        let empty = Dag::new(3, []).unwrap();
        let b = gaussian_bic(&data, &empty).unwrap();
        let s = mle_covariance(&data);
        let expect: f64 = (0..3).map(|k| -250.0 * ((2.0 * std::f64::consts::PI * s[(k, k)]).ln() + 1.0)).sum();
        assert!((b.loglik - expect).abs() < 1e-9 * expect.abs());
        assert_eq!(b.score, b.loglik);
        let fwd = gaussian_bic(&data, &Dag::new(3, [(0, 1), (1, 2)]).unwrap()).unwrap();
        let rev = gaussian_bic(&data, &Dag::new(3, [(2, 1), (1, 0)]).unwrap()).unwrap();
        let fork = gaussian_bic(&data, &Dag::new(3, [(1, 0), (1, 2)]).unwrap()).unwrap();
        assert!((fwd.score - rev.score).abs() < 1e-8);
        assert!((fwd.score - fork.score).abs() < 1e-8);
        assert!(fwd.loglik > b.loglik);
    }

    #[test]
    fn degenerate_fit_names_node() {
        let values = DMatrix::from_fn(20, 3, |r, c| if c == 2 { 2.0 * r as f64 } else { (r * (c + 3)) as f64 % 7.0 + r as f64 });
        let mut v = values.clone();
        for r in 0..20 {
            v[(r, 1)] = 2.0 * v[(r, 0)];
        }
        let data = DataMatrix::new(v, None).unwrap();
        let dag = Dag::new(3, [(0, 2), (1, 2)]).unwrap();
        assert!(matches!(gaussian_bic(&data, &dag), Err(Error::DegenerateFit { node: 2 })));
    }

    #[test]
    fn tune_single_point_and_large_n() {
        let dag = figure1_weighted(0.5);
        let sem = LinearSem::unit(dag.clone()).unwrap();
        let data = sample_data(&sem, 100_000, 11).unwrap();
        let one = tune_parameters(&data, &[0.05], &[2], false).unwrap();
        assert_eq!((one.alpha, one.eta), (0.05, 2));
        let grid = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];
        let t = tune_parameters(&data, &grid, &[1, 2], false).unwrap();
        assert_eq!(t.skeleton.graph, crate::graph::skeleton_of(&dag));
        assert_eq!(t.grid.len(), 10);
    }
}
