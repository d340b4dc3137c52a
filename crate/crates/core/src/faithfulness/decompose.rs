//! Exact `min_S |rho(i, j | S)|` for one pair without enumerating every
//! conditioning set of the whole graph.
//!
//! With `K` the precision matrix and `R` the nodes outside `{i, j} ∪ S`, the
//! precision of `(X_i, X_j) | X_S` is `P = K_QQ - K_QR K_RR^-1 K_RQ`. `K` is
//! supported on the moral graph, so `K_RR` splits along the components of
//! the moral graph minus `{i, j}` and each component adds its own term to
//! `P`. A component bordering only `i` lowers `P_ii` alone; conditioning on
//! more of it never hurts, and conditioning on all of its neighbours of `i`
//! zeroes the term. Those components are combined by a min-plus table over
//! set sizes. Components bordering both endpoints are enumerated jointly.

use std::ops::ControlFlow;

use nalgebra::DMatrix;

use crate::graph::Dag;
use crate::pcor::SINGULAR_TOL;
use crate::sem::LinearSem;

pub(super) struct EdgeOracle {
    p: usize,
    k: DMatrix<f64>,
    moral: Vec<bool>,
}

/// Contribution `(a, b, c)` of a marginalised block to
/// `(P_ii, P_ij, P_jj)`.
#[derive(Debug, Clone, Copy, Default)]
struct Term {
    a: f64,
    b: f64,
    c: f64,
}

/// Best term per set size for a one-sided component, as a non-increasing
/// table with the sets attaining it.
struct Table {
    value: Vec<f64>,
    sets: Vec<Vec<usize>>,
}

impl EdgeOracle {
    pub(super) fn new(sem: &LinearSem) -> Self {
        let dag = sem.dag();
        let p = dag.p();
        let a = dag.weighted_adjacency();
        let i_minus_a = DMatrix::<f64>::identity(p, p) - a;
        let d_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            p,
            sem.noise_variances().iter().map(|v| 1.0 / v),
        ));
        let k = i_minus_a.transpose() * d_inv * &i_minus_a;
        Self { p, k, moral: moral_graph(dag) }
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.moral[a * self.p + b]
    }

    fn components(&self, i: usize, j: usize) -> Vec<Vec<usize>> {
        let p = self.p;
        let mut seen = vec![false; p];
        seen[i] = true;
        seen[j] = true;
        let mut out = Vec::new();
        for s in 0..p {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for u in 0..p {
                    if !seen[u] && self.adjacent(v, u) {
                        seen[u] = true;
                        comp.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Signed `rho(i, j | S)` of smallest magnitude over `|S| <= bound`,
    /// with a set attaining it. Returns early with the first value whose
    /// magnitude is at most `stop_at`.
    pub(super) fn edge_min(&self, i: usize, j: usize, bound: usize, stop_at: f64) -> (f64, Vec<usize>) {
        let mut mixed = Vec::new();
        let mut side_i = Vec::new();
        let mut side_j = Vec::new();
        for comp in self.components(i, j) {
            let ti = comp.iter().any(|&v| self.adjacent(v, i));
            let tj = comp.iter().any(|&v| self.adjacent(v, j));
            match (ti, tj) {
                (true, true) => mixed.extend(comp),
                (true, false) => side_i.push(self.one_sided(&comp, i, bound)),
                (false, true) => side_j.push(self.one_sided(&comp, j, bound)),
                (false, false) => {}
            }
        }
        mixed.sort_unstable();
        let ta = combine(side_i, bound);
        let tb = combine(side_j, bound);
        let (kii, kij, kjj) = (self.k[(i, i)], self.k[(i, j)], self.k[(j, j)]);
        let mut best = (f64::INFINITY, Vec::new());
        let mut best_abs = f64::INFINITY;
        let mut en = Enumerator::new(&self.k, &mixed, i, Some(j), bound);
        let _ = en.run(&mut |set, t| {
            let rem = bound - set.len();
            for k1 in 0..=rem {
                let k2 = rem - k1;
                let pii = kii - t.a - ta.value[k1];
                let pjj = kjj - t.c - tb.value[k2];
                let r = -(kij - t.b) / (pii * pjj).sqrt();
                if r.abs() < best_abs {
                    best_abs = r.abs();
                    let mut s: Vec<usize> = set.iter().map(|&x| mixed[x]).collect();
                    s.extend_from_slice(&ta.sets[k1]);
                    s.extend_from_slice(&tb.sets[k2]);
                    s.sort_unstable();
                    best = (r, s);
                    if best_abs <= stop_at {
                        return ControlFlow::Break(());
                    }
                }
            }
            ControlFlow::Continue(())
        });
        best
    }

    /// Table for a component bordering only endpoint `e`.
    fn one_sided(&self, comp: &[usize], e: usize, bound: usize) -> Table {
        let border: Vec<usize> = comp.iter().copied().filter(|&v| self.adjacent(v, e)).collect();
        let cap = bound.min(border.len() - 1);
        let mut exact = vec![f64::INFINITY; cap + 1];
        let mut exact_sets = vec![Vec::new(); cap + 1];
        let mut en = Enumerator::new(&self.k, comp, e, None, cap);
        let _ = en.run(&mut |set, t| {
            if t.a < exact[set.len()] {
                exact[set.len()] = t.a;
                exact_sets[set.len()] = set.iter().map(|&x| comp[x]).collect();
            }
            ControlFlow::Continue(())
        });
        let mut value = Vec::with_capacity(bound + 1);
        let mut sets: Vec<Vec<usize>> = Vec::with_capacity(bound + 1);
        for k in 0..=bound {
            if k >= border.len() {
                value.push(0.0);
                sets.push(border.clone());
            } else if k > 0 && value[k - 1] <= exact[k] {
                value.push(value[k - 1]);
                sets.push(sets[k - 1].clone());
            } else {
                value.push(exact[k]);
                sets.push(exact_sets[k].clone());
            }
        }
        Table { value, sets }
    }
}

/// Skeleton plus edges between parents of a common child.
fn moral_graph(dag: &Dag) -> Vec<bool> {
    let p = dag.p();
    let mut m = vec![false; p * p];
    for &(a, b) in dag.edges() {
        m[a * p + b] = true;
        m[b * p + a] = true;
    }
    for k in 0..p {
        let pa = dag.parents(k);
        for (s, &a) in pa.iter().enumerate() {
            for &b in &pa[s + 1..] {
                m[a * p + b] = true;
                m[b * p + a] = true;
            }
        }
    }
    m
}

/// Min-plus combination of one-sided tables under a shared size budget.
fn combine(tables: Vec<Table>, bound: usize) -> Table {
    let mut acc = Table { value: vec![0.0; bound + 1], sets: vec![Vec::new(); bound + 1] };
    for t in tables {
        let mut value = vec![f64::INFINITY; bound + 1];
        let mut pick = vec![(0, 0); bound + 1];
        for k in 0..=bound {
            for k1 in 0..=k {
                let v = acc.value[k - k1] + t.value[k1];
                if v < value[k] {
                    value[k] = v;
                    pick[k] = (k - k1, k1);
                }
            }
        }
        let sets = pick
            .iter()
            .map(|&(ka, kt)| {
                let mut s = acc.sets[ka].clone();
                s.extend_from_slice(&t.sets[kt]);
                s
            })
            .collect();
        acc = Table { value, sets };
    }
    acc
}

/// Depth-first walk over subsets of a block `C` (up to `max_size`) carrying
/// `Cov(X_C | everything else)` and the term that marginalising the rest of
/// `C` adds to the endpoint precision.
struct Enumerator {
    m: usize,
    max_size: usize,
    two: bool,
    base_diag: Vec<f64>,
    levels: Vec<Level>,
    set: Vec<usize>,
}

#[derive(Clone)]
struct Level {
    sigma: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    term: Term,
}

impl Enumerator {
    fn new(k: &DMatrix<f64>, nodes: &[usize], e1: usize, e2: Option<usize>, max_size: usize) -> Self {
        let m = nodes.len();
        let max_size = max_size.min(m);
        let kcc = DMatrix::from_fn(m, m, |a, b| k[(nodes[a], nodes[b])]);
        let sigma = if m == 0 {
            kcc
        } else {
            kcc.cholesky().expect("principal blocks of a precision matrix are positive definite").inverse()
        };
        let k1 = nalgebra::DVector::from_fn(m, |a, _| k[(nodes[a], e1)]);
        let w1 = &sigma * &k1;
        let (w2, term) = match e2 {
            Some(e2) => {
                let k2 = nalgebra::DVector::from_fn(m, |a, _| k[(nodes[a], e2)]);
                let w2 = &sigma * &k2;
                let term = Term { a: k1.dot(&w1), b: k1.dot(&w2), c: k2.dot(&w2) };
                (w2.as_slice().to_vec(), term)
            }
            None => (Vec::new(), Term { a: k1.dot(&w1), ..Term::default() }),
        };
        let root = Level {
            sigma: (0..m * m).map(|x| sigma[(x / m, x % m)]).collect(),
            w1: w1.as_slice().to_vec(),
            w2,
            term,
        };
        let mut levels = vec![root.clone(); max_size + 1];
        levels[0] = root;
        Self { m, max_size, two: e2.is_some(), base_diag: (0..m).map(|a| sigma[(a, a)]).collect(), levels, set: Vec::new() }
    }

    fn run<F>(&mut self, visit: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&[usize], Term) -> ControlFlow<()>,
    {
        self.dfs(0, visit)
    }

    /// Conditions level `depth` on `v`. Later pivots exceed `v`, so only the
    /// block of indices above `v` is carried forward.
    fn sweep(&mut self, depth: usize, v: usize) -> bool {
        let m = self.m;
        let (lo, hi) = self.levels.split_at_mut(depth + 1);
        let cur = &lo[depth];
        let next = &mut hi[0];
        let s = cur.sigma[v * m + v];
        if !(s > SINGULAR_TOL * self.base_diag[v]) {
            return false;
        }
        let x1 = cur.w1[v];
        let mut t = cur.term;
        t.a -= x1 * x1 / s;
        if self.two {
            let x2 = cur.w2[v];
            t.b -= x1 * x2 / s;
            t.c -= x2 * x2 / s;
        }
        next.term = t;
        if depth + 1 == self.max_size {
            return true;
        }
        for x in v + 1..m {
            let f = cur.sigma[x * m + v] / s;
            for y in x..m {
                let val = cur.sigma[x * m + y] - f * cur.sigma[v * m + y];
                next.sigma[x * m + y] = val;
                next.sigma[y * m + x] = val;
            }
            next.w1[x] = cur.w1[x] - f * x1;
            if self.two {
                next.w2[x] = cur.w2[x] - f * cur.w2[v];
            }
        }
        true
    }

    fn dfs<F>(&mut self, start: usize, visit: &mut F) -> ControlFlow<()>
    where
        F: FnMut(&[usize], Term) -> ControlFlow<()>,
    {
        let depth = self.set.len();
        visit(&self.set, self.levels[depth].term)?;
        if depth == self.max_size {
            return ControlFlow::Continue(());
        }
        for v in start..self.m {
            if !self.sweep(depth, v) {
                continue;
            }
            self.set.push(v);
            let flow = self.dfs(v + 1, visit);
            self.set.pop();
            flow?;
        }
        ControlFlow::Continue(())
    }
}
