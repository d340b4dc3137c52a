//! Skeleton estimation: the reduced PC-Algorithm and the PC baseline.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::graph::UndirectedGraph;
use crate::pcor::{fisher_z_pvalue, PcorScratch};
use crate::sem::CovMatrix;
use crate::subsets::Colex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rpc,
    Pc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rpc => "rpc",
            Method::Pc => "pc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonParams {
    pub method: Method,
    /// Partial-correlation threshold (rPC) or significance level (PC).
    pub threshold: f64,
    /// Largest conditioning-set size allowed; `None` for PC.
    pub eta: Option<usize>,
    pub stable: bool,
    /// `None` for a population covariance.
    pub sample_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkeletonStats {
    /// Partial correlations evaluated at each level.
    pub tests_per_level: Vec<usize>,
    /// Conditioning sets skipped as numerically singular at each level.
    pub singular_per_level: Vec<usize>,
}

impl SkeletonStats {
    fn bump(v: &mut Vec<usize>, level: usize, by: usize) {
        if v.len() <= level {
            v.resize(level + 1, 0);
        }
        v[level] += by;
    }

    pub fn total_tests(&self) -> usize {
        self.tests_per_level.iter().sum()
    }

    /// Largest set size at which any test was run.
    pub fn max_level_tested(&self) -> Option<usize> {
        self.tests_per_level.iter().rposition(|&c| c > 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonEstimate {
    pub graph: UndirectedGraph,
    /// Separating set for every removed pair `(i, j)`, `i < j`.
    pub sepsets: BTreeMap<(usize, usize), Vec<usize>>,
    pub params: SkeletonParams,
    pub stats: SkeletonStats,
}

impl SkeletonEstimate {
    pub fn sepset(&self, i: usize, j: usize) -> Option<&[usize]> {
        self.sepsets.get(&(i.min(j), i.max(j))).map(Vec::as_slice)
    }
}

enum Decision {
    Keep,
    Remove(Vec<usize>),
}

#[derive(Default)]
struct PairTally {
    tests: usize,
    singular: usize,
}

/// Scans `k`-subsets of `pool` in colex order until `remove` accepts one.
fn search_sets(
    pool: &[usize],
    k: usize,
    scratch: &mut PcorScratch,
    tally: &mut PairTally,
    mut test: impl FnMut(&mut PcorScratch, &[usize]) -> Option<bool>,
) -> Option<Vec<usize>> {
    let mut it = Colex::new(pool.len(), k);
    let mut set = Vec::with_capacity(k);
    while let Some(idx) = it.next() {
        set.clear();
        set.extend(idx.iter().map(|&t| pool[t]));
        match test(scratch, &set) {
            None => tally.singular += 1,
            Some(remove) => {
                tally.tests += 1;
                if remove {
                    return Some(set);
                }
            }
        }
    }
    None
}

struct Working {
    p: usize,
    adj: Vec<bool>,
}

impl Working {
    fn complete(p: usize) -> Self {
        Self { p, adj: (0..p * p).map(|x| x / p != x % p).collect() }
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.p + b]
    }

    fn degree(&self, v: usize) -> usize {
        self.adj[v * self.p..(v + 1) * self.p].iter().filter(|&&a| a).count()
    }

    /// Sorted `adj(v) \ {skip}`, written into `pool`.
    fn neighbors_into(&self, v: usize, skip: usize, pool: &mut Vec<usize>) {
        pool.clear();
        pool.extend((0..self.p).filter(|&u| u != skip && self.adjacent(v, u)));
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let p = self.p;
        (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).filter(|&(i, j)| self.adjacent(i, j)).collect()
    }

    fn remove(&mut self, i: usize, j: usize) {
        self.adj[i * self.p + j] = false;
        self.adj[j * self.p + i] = false;
    }

    /// Sorted `adj(i) ∪ adj(j) \ {i, j}`, written into `pool`.
    fn union_pool(&self, i: usize, j: usize, pool: &mut Vec<usize>) {
        pool.clear();
        let (ri, rj) = (&self.adj[i * self.p..(i + 1) * self.p], &self.adj[j * self.p..(j + 1) * self.p]);
        pool.extend((0..self.p).filter(|&u| u != i && u != j && (ri[u] || rj[u])));
    }

    fn into_graph(self) -> UndirectedGraph {
        let p = self.p;
        let mut g = UndirectedGraph::empty(p);
        for i in 0..p {
            for j in i + 1..p {
                if self.adjacent(i, j) {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }
}

/// Reduced PC-Algorithm.
///
/// Starting from the complete graph, for each level `l = 0..=eta` and each
/// adjacent pair `(i, j)` in lexicographic order, searches the `l`-subsets
/// `S` of `adj(i) ∪ adj(j) \ {i, j}` in colex order and deletes the edge as
/// soon as `|rho(i, j | S)| <= alpha`. With `stable` the neighbourhoods are
/// frozen at the start of each level (and pairs are tested in parallel);
/// otherwise deletions take effect immediately. Numerically singular sets
/// are skipped and counted.
///
/// `cov` may be a covariance or correlation matrix; the sample size it
/// carries is only recorded.
pub fn rpc_skeleton(cov: &CovMatrix, alpha: f64, eta: usize, stable: bool) -> Result<SkeletonEstimate> {
    if !(alpha >= 0.0) {
        return Err(param(format!("alpha must be non-negative, got {alpha}")));
    }
    let p = cov.p();
    let m = cov.matrix();
    let mut work = Working::complete(p);
    let mut sepsets = BTreeMap::new();
    let mut stats = SkeletonStats::default();

    let decide = |pool: &[usize], i: usize, j: usize, l: usize, scratch: &mut PcorScratch, tally: &mut PairTally| {
        match search_sets(pool, l, scratch, tally, |sc, s| sc.pcor(m, i, j, s).map(|r| r.abs() <= alpha)) {
            Some(s) => Decision::Remove(s),
            None => Decision::Keep,
        }
    };

    for l in 0..=eta {
        SkeletonStats::bump(&mut stats.tests_per_level, l, 0);
        SkeletonStats::bump(&mut stats.singular_per_level, l, 0);
        let pairs = work.pairs();
        if stable {
            let frozen = &work;
            let results: Vec<(Decision, PairTally)> = pairs
                .par_iter()
                .map_init(
                    || (PcorScratch::new(), Vec::new()),
                    |(scratch, pool), &(i, j)| {
                        let mut tally = PairTally::default();
                        if l > 0 {
                            frozen.union_pool(i, j, pool);
                        }
                        let d = decide(pool, i, j, l, scratch, &mut tally);
                        (d, tally)
                    },
                )
                .collect();
            for (&(i, j), (d, tally)) in pairs.iter().zip(results) {
                stats.tests_per_level[l] += tally.tests;
                stats.singular_per_level[l] += tally.singular;
                if let Decision::Remove(s) = d {
                    work.remove(i, j);
                    sepsets.insert((i, j), s);
                }
            }
        } else {
            let mut scratch = PcorScratch::new();
            let mut pool = Vec::new();
            for (i, j) in pairs {
                if l > 0 {
                    work.union_pool(i, j, &mut pool);
                }
                let mut tally = PairTally::default();
                let d = decide(&pool, i, j, l, &mut scratch, &mut tally);
                stats.tests_per_level[l] += tally.tests;
                stats.singular_per_level[l] += tally.singular;
                if let Decision::Remove(s) = d {
                    work.remove(i, j);
                    sepsets.insert((i, j), s);
                }
            }
        }
    }

    Ok(SkeletonEstimate {
        graph: work.into_graph(),
        sepsets,
        params: SkeletonParams {
            method: Method::Rpc,
            threshold: alpha,
            eta: Some(eta),
            stable,
            sample_size: cov.sample_size(),
        },
        stats,
    })
}

/// Skeleton phase of the PC-Algorithm with Fisher-z tests.
///
/// Level `l` tests every adjacent ordered pair `(i, j)` against the
/// `l`-subsets of `adj(i) \ {j}` and deletes the edge when the p-value
/// exceeds `significance`. Stops once no pair has `l` candidate neighbours
/// or the sample no longer supports a test of size `l`. The `stable` variant
/// freezes neighbourhoods per level.
pub fn pc_skeleton(cov: &CovMatrix, n: usize, significance: f64, stable: bool) -> Result<SkeletonEstimate> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(param(format!("significance must lie in (0, 1), got {significance}")));
    }
    if n <= 4 {
        return Err(param(format!("PC needs more than 4 observations, got {n}")));
    }
    let p = cov.p();
    let m = cov.matrix();
    let mut work = Working::complete(p);
    let mut sepsets = BTreeMap::new();
    let mut stats = SkeletonStats::default();

    let test = |i: usize, j: usize, l: usize| {
        move |sc: &mut PcorScratch, s: &[usize]| -> Option<bool> {
            let r = sc.pcor(m, i, j, s)?;
            fisher_z_pvalue(r, n, l).ok().map(|pv| pv > significance)
        }
    };

    let mut l = 0;
    while n >= l + 4 {
        SkeletonStats::bump(&mut stats.tests_per_level, l, 0);
        SkeletonStats::bump(&mut stats.singular_per_level, l, 0);
        if !(0..p).any(|v| work.degree(v) > l) {
            break;
        }
        let pairs = work.pairs();
        if stable {
            let frozen = &work;
            let results: Vec<(Option<Vec<usize>>, PairTally)> = pairs
                .par_iter()
                .map_init(
                    || (PcorScratch::new(), Vec::new()),
                    |(scratch, pool), &(i, j)| {
                        let mut tally = PairTally::default();
                        let mut found = None;
                        for (a, b) in [(i, j), (j, i)] {
                            if l > 0 {
                                frozen.neighbors_into(a, b, pool);
                            }
                            found = search_sets(pool, l, scratch, &mut tally, test(i, j, l));
                            if found.is_some() {
                                break;
                            }
                        }
                        (found, tally)
                    },
                )
                .collect();
            for (&(i, j), (found, tally)) in pairs.iter().zip(results) {
                stats.tests_per_level[l] += tally.tests;
                stats.singular_per_level[l] += tally.singular;
                if let Some(s) = found {
                    work.remove(i, j);
                    sepsets.insert((i, j), s);
                }
            }
        } else {
            let mut scratch = PcorScratch::new();
            let mut pool = Vec::new();
            for i in 0..p {
                for j in 0..p {
                    if !work.adjacent(i, j) {
                        continue;
                    }
                    if l > 0 {
                        work.neighbors_into(i, j, &mut pool);
                    }
                    let mut tally = PairTally::default();
                    let found = search_sets(&pool, l, &mut scratch, &mut tally, test(i, j, l));
                    stats.tests_per_level[l] += tally.tests;
                    stats.singular_per_level[l] += tally.singular;
                    if let Some(s) = found {
                        work.remove(i, j);
                        sepsets.insert((i.min(j), i.max(j)), s);
                    }
                }
            }
        }
        l += 1;
    }

    Ok(SkeletonEstimate {
        graph: work.into_graph(),
        sepsets,
        params: SkeletonParams {
            method: Method::Pc,
            threshold: significance,
            eta: None,
            stable,
            sample_size: Some(n),
        },
        stats,
    })
}

/// Confusion counts and rates of an estimated skeleton over all unordered
/// pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn compare_graphs(estimate: &UndirectedGraph, truth: &UndirectedGraph) -> Result<SkeletonMetrics> {
    let p = truth.p();
    if estimate.p() != p {
        return Err(param(format!("estimate has {} nodes, truth has {p}", estimate.p())));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for i in 0..p {
        for j in i + 1..p {
            match (estimate.has_edge(i, j), truth.has_edge(i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    let tpr = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = if precision + tpr > 0.0 { 2.0 * precision * tpr / (precision + tpr) } else { 0.0 };
    Ok(SkeletonMetrics { tp, fp, tn, fn_, tpr, fpr: ratio(fp, fp + tn), precision, recall: tpr, f1 })
}

pub fn compare_to_truth(estimate: &SkeletonEstimate, truth: &UndirectedGraph) -> Result<SkeletonMetrics> {
    compare_graphs(&estimate.graph, truth)
}
