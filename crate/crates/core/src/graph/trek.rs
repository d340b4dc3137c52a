use std::collections::BTreeMap;

use super::{Adjacency, Dag};
use crate::error::{param, Result};
use crate::subsets::Colex;

/// A trek between `i` and `j`: two directed paths leaving a common `top`.
///
/// `left_path` lists the nodes after `top` down to `i` and `right_path` the
/// nodes after `top` down to `j`, so a directed path `i -> ... -> j` has
/// `top = i` and an empty `left_path`. The two sides may meet again below
/// the top; such treks are not simple but still carry covariance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Trek {
    pub top: usize,
    pub left_path: Vec<usize>,
    pub right_path: Vec<usize>,
}

impl Trek {
    /// Number of edges `l(pi)`.
    pub fn length(&self) -> usize {
        self.left_path.len() + self.right_path.len()
    }

    /// True when the two sides share only the top node.
    pub fn is_simple(&self) -> bool {
        !self.left_path.iter().any(|v| self.right_path.contains(v))
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.top).chain(self.left_path.iter().copied()).chain(self.right_path.iter().copied())
    }

    pub fn touches(&self, set: &[usize]) -> bool {
        self.nodes().any(|v| set.contains(&v))
    }

    /// Product of edge weights along both sides.
    pub fn weight_product(&self, dag: &Dag) -> f64 {
        side_product(dag, self.top, &self.left_path) * side_product(dag, self.top, &self.right_path)
    }
}

fn side_product(dag: &Dag, top: usize, side: &[usize]) -> f64 {
    let mut prev = top;
    let mut acc = 1.0;
    for &v in side {
        acc *= dag.weight(prev, v).unwrap_or(0.0);
        prev = v;
    }
    acc
}

/// Directed paths ending at `end` with at most `max_len` edges, grouped by
/// their source. Each path is stored as the nodes after the source.
pub(crate) fn paths_into(dag: &Dag, end: usize, max_len: usize) -> BTreeMap<usize, Vec<Vec<usize>>> {
    let mut out: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    // reversed[0] = end, reversed[last] = current source
    let mut reversed = vec![end];
    fn walk(dag: &Dag, max_len: usize, rev: &mut Vec<usize>, out: &mut BTreeMap<usize, Vec<Vec<usize>>>) {
        let src = *rev.last().unwrap();
        let after: Vec<usize> = rev[..rev.len() - 1].iter().rev().copied().collect();
        out.entry(src).or_default().push(after);
        if rev.len() - 1 == max_len {
            return;
        }
        for &pa in dag.parents(src) {
            rev.push(pa);
            walk(dag, max_len, rev, out);
            rev.pop();
        }
    }
    walk(dag, max_len, &mut reversed, &mut out);
    out
}

/// Every trek between `i` and `j` (possibly equal) of length at most
/// `max_length`, sorted.
pub(crate) fn treks_between(dag: &Dag, i: usize, j: usize, max_length: usize) -> Vec<Trek> {
    let left = paths_into(dag, i, max_length);
    let right = paths_into(dag, j, max_length);
    let mut out = Vec::new();
    for (&top, lpaths) in &left {
        let Some(rpaths) = right.get(&top) else { continue };
        for l in lpaths {
            for r in rpaths {
                if l.len() + r.len() <= max_length {
                    out.push(Trek { top, left_path: l.clone(), right_path: r.clone() });
                }
            }
        }
    }
    out.sort();
    out
}

/// All treks between distinct nodes `i` and `j` with at most `max_length`
/// edges, each listed once.
pub fn enumerate_treks(dag: &Dag, i: usize, j: usize, max_length: usize) -> Result<Vec<Trek>> {
    if i >= dag.p() || j >= dag.p() || i == j {
        return Err(param(format!("trek endpoints must be distinct nodes, got ({i}, {j})")));
    }
    if max_length < 1 {
        return Err(param("max_length must be at least 1"));
    }
    Ok(treks_between(dag, i, j, max_length))
}

/// `N_l`: number of treks of each length `l = 0..=max_length` between `i`
/// and `j`.
pub fn trek_counts(dag: &Dag, i: usize, j: usize, max_length: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; max_length + 1];
    for t in enumerate_treks(dag, i, j, max_length)? {
        counts[t.length()] += 1;
    }
    Ok(counts)
}

/// A minimum-cardinality node set meeting every trek of length at most
/// `gamma` between non-adjacent `i` and `j`. Exhaustive search over subsets
/// of increasing size, so only suitable for small graphs.
pub fn local_separator(dag: &Dag, i: usize, j: usize, gamma: usize) -> Result<Vec<usize>> {
    if i >= dag.p() || j >= dag.p() || i == j {
        return Err(param(format!("invalid node pair ({i}, {j})")));
    }
    if dag.is_adjacent(i, j) {
        return Err(param(format!("nodes {i} and {j} are adjacent")));
    }
    let treks = if gamma == 0 { Vec::new() } else { treks_between(dag, i, j, gamma) };
    let blockable: Vec<Vec<usize>> = treks
        .iter()
        .map(|t| {
            let mut v: Vec<usize> = t.nodes().filter(|&x| x != i && x != j).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut candidates: Vec<usize> = blockable.iter().flatten().copied().collect();
    candidates.sort_unstable();
    candidates.dedup();

    for size in 0..=candidates.len() {
        let mut best: Option<Vec<usize>> = None;
        let mut it = Colex::new(candidates.len(), size);
        while let Some(idx) = it.next() {
            let set: Vec<usize> = idx.iter().map(|&k| candidates[k]).collect();
            if blockable.iter().all(|b| b.iter().any(|v| set.contains(v))) {
                // keep the lexicographically smallest set of this size
                if best.as_ref().is_none_or(|b| set < *b) {
                    best = Some(set);
                }
            }
        }
        if let Some(set) = best {
            return Ok(set);
        }
    }
    unreachable!("the full candidate set meets every trek of a non-adjacent pair")
}
