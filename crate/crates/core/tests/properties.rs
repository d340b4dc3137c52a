use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use proptest::prelude::*;

use trekpc::faithfulness::{min_edge_pcor, DEFAULT_BUDGET};
use trekpc::graph::{d_separated, d_separated_by_paths, generate_er_dag, skeleton_of, unshielded_triples, GraphFamily};
use trekpc::orient::{apply_meek_rules, extend_to_dag, orient_v_structures, Pdag};
use trekpc::pcor::{partial_correlation, partial_correlation_recursive};
use trekpc::rng::derive_seed;
use trekpc::sem::{assign_weights, population_covariance, standardize_sem};
use trekpc::skeleton::{rpc_skeleton, pc_skeleton};
use trekpc::subsets::{binomial, Colex};
use trekpc::{CovMatrix, Dag, LinearSem};

fn er_sem(p: usize, degree: f64, seed: u64, low: f64, high: f64) -> LinearSem {
    let dag = generate_er_dag(p, degree.min((p - 1) as f64), derive_seed(seed, 0)).unwrap();
    LinearSem::unit(assign_weights(&dag, low, high, false, derive_seed(seed, 1)).unwrap()).unwrap()
}

fn subsets_up_to(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in 0..=k.min(pool.len()) {
        let mut it = Colex::new(pool.len(), size);
        while let Some(idx) = it.next() {
            out.push(idx.iter().map(|&t| pool[t]).collect());
        }
    }
    out
}

fn others(p: usize, i: usize, j: usize) -> Vec<usize> {
    (0..p).filter(|&v| v != i && v != j).collect()
}

/// Separating sets found by d-separation over every subset, smallest first.
fn oracle_sepsets(dag: &Dag) -> BTreeMap<(usize, usize), Vec<usize>> {
    let p = dag.p();
    let sk = skeleton_of(dag);
    let mut out = BTreeMap::new();
    for i in 0..p {
        for j in i + 1..p {
            if sk.has_edge(i, j) {
                continue;
            }
            let s = subsets_up_to(&others(p, i, j), p).into_iter().find(|s| d_separated(dag, i, j, s).unwrap());
            out.insert((i, j), s.expect("non-adjacent pairs are separable"));
        }
    }
    out
}

fn v_structures(dag: &Dag) -> BTreeSet<(usize, usize, usize)> {
    unshielded_triples(&skeleton_of(dag))
        .into_iter()
        .filter(|&(i, k, j)| dag.has_edge(i, k) && dag.has_edge(j, k))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bayes_ball_matches_path_enumeration(p in 2usize..8, seed in 0u64..10_000, deg in 1.0f64..3.0) {
        let dag = generate_er_dag(p, deg.min((p - 1) as f64), seed).unwrap();
        for i in 0..p {
            for j in i + 1..p {
                for s in subsets_up_to(&others(p, i, j), 3) {
                    prop_assert_eq!(d_separated(&dag, i, j, &s).unwrap(), d_separated_by_paths(&dag, i, j, &s).unwrap());
                }
            }
        }
    }

    #[test]
    fn separation_forces_zero_partial_correlation(p in 3usize..8, seed in 0u64..10_000) {
        let sem = er_sem(p, 2.0, seed, -1.0, 1.0);
        let cov = population_covariance(&sem);
        for i in 0..p {
            for j in i + 1..p {
                for s in subsets_up_to(&others(p, i, j), 2) {
                    if d_separated(sem.dag(), i, j, &s).unwrap() {
                        prop_assert!(partial_correlation(&cov, i, j, &s).unwrap().abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_correlation_forms_agree_and_are_symmetric(
        p in 3usize..7,
        seed in 0u64..10_000,
        scale in 0.01f64..100.0,
    ) {
        let sem = er_sem(p, 2.5, seed, -1.0, 1.0);
        let cov = population_covariance(&sem);
        let scaled = cov.scaled(scale);
        let corr = cov.to_correlation().unwrap();
        for i in 0..p {
            for j in i + 1..p {
                for s in subsets_up_to(&others(p, i, j), 3) {
                    let r = partial_correlation(&cov, i, j, &s).unwrap();
                    prop_assert!((r - partial_correlation_recursive(&cov, i, j, &s).unwrap()).abs() < 1e-9);
                    prop_assert!((r - partial_correlation(&cov, j, i, &s).unwrap()).abs() < 1e-12);
                    prop_assert!((r - partial_correlation(&scaled, i, j, &s).unwrap()).abs() < 1e-9);
                    prop_assert!((r - partial_correlation(&corr, i, j, &s).unwrap()).abs() < 1e-9);
                    let mut rev = s.clone();
                    rev.reverse();
                    prop_assert!((r - partial_correlation(&cov, i, j, &rev).unwrap()).abs() < 1e-10);
                    prop_assert!(r.abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn standardizing_gives_unit_variances(p in 2usize..10, seed in 0u64..10_000) {
        let sem = er_sem(p, 3.0, seed, 0.1, 3.0);
        let st = standardize_sem(&sem);
        let cov = population_covariance(&st);
        for k in 0..p {
            prop_assert!((cov.get(k, k) - 1.0).abs() < 1e-10);
        }
        prop_assert_eq!(st.dag().edges(), sem.dag().edges());
        prop_assert!(st.dag().weights().unwrap().iter().all(|w| w.abs() < 1.0 && *w != 0.0));
    }

    #[test]
    fn level_zero_is_monotone_in_alpha(p in 3usize..12, seed in 0u64..10_000, a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let cov = population_covariance(&er_sem(p, 2.0, seed, -1.0, 1.0));
        let (lo, hi) = (a.min(b), a.max(b));
        let dense = rpc_skeleton(&cov, lo, 0, false).unwrap().graph;
        let sparse = rpc_skeleton(&cov, hi, 0, false).unwrap().graph;
        for (u, v) in sparse.edges() {
            prop_assert!(dense.has_edge(u, v));
        }
    }

    #[test]
    fn rpc_test_counts_are_bounded(p in 3usize..12, seed in 0u64..10_000, alpha in 0.0f64..0.3, eta in 0usize..4) {
        let cov = population_covariance(&er_sem(p, 2.5, seed, -1.0, 1.0));
        let est = rpc_skeleton(&cov, alpha, eta, false).unwrap();
        prop_assert!(est.stats.tests_per_level.len() <= eta + 1);
        let pairs = (p * (p - 1) / 2) as u128;
        for (l, &t) in est.stats.tests_per_level.iter().enumerate() {
            prop_assert!((t as u128) <= pairs * binomial(p - 2, l));
        }
        for (&(i, j), s) in &est.sepsets {
            prop_assert!(!est.graph.has_edge(i, j));
            prop_assert!(s.len() <= eta);
            prop_assert!(partial_correlation(&cov, i, j, s).unwrap().abs() <= alpha);
        }
    }

    #[test]
    fn stable_skeletons_follow_relabelling(p in 3usize..10, seed in 0u64..10_000, alpha in 0.01f64..0.2) {
        let cov = population_covariance(&er_sem(p, 2.5, seed, -1.0, 1.0));
        // perm[v] is the new label of v
        let perm: Vec<usize> = (0..p).map(|v| (v * 7 + seed as usize) % p).collect();
        if perm.iter().collect::<BTreeSet<_>>().len() != p {
            return Ok(());
        }
        let mut inv = vec![0; p];
        for (v, &w) in perm.iter().enumerate() {
            inv[w] = v;
        }
        let permuted = CovMatrix::new(DMatrix::from_fn(p, p, |a, b| cov.get(inv[a], inv[b])), None).unwrap();
        for eta in [1, 2] {
            let base = rpc_skeleton(&cov, alpha, eta, true).unwrap().graph;
            prop_assert_eq!(rpc_skeleton(&permuted, alpha, eta, true).unwrap().graph, base.relabel(&perm));
        }
        let base = pc_skeleton(&cov, 200, 0.01, true).unwrap().graph;
        prop_assert_eq!(pc_skeleton(&permuted, 200, 0.01, true).unwrap().graph, base.relabel(&perm));
    }

    #[test]
    fn oracle_cpdag_is_sound_and_meek_is_idempotent(p in 3usize..9, seed in 0u64..10_000) {
        let dag = generate_er_dag(p, 2.5f64.min((p - 1) as f64), seed).unwrap();
        let sk = skeleton_of(&dag);
        let pdag = orient_v_structures(&sk, &oracle_sepsets(&dag)).unwrap();
        let cpdag = apply_meek_rules(&pdag);
        prop_assert_eq!(&apply_meek_rules(&cpdag), &cpdag);
        prop_assert_eq!(cpdag.skeleton(), sk.clone());
        for &(a, b) in cpdag.directed() {
            prop_assert!(dag.has_edge(a, b), "{a} -> {b} contradicts the generating DAG");
        }
        let ext = extend_to_dag(&cpdag);
        prop_assert!(!ext.fallback);
        prop_assert_eq!(skeleton_of(&ext.dag), sk);
        prop_assert_eq!(v_structures(&ext.dag), v_structures(&dag));
    }

    #[test]
    fn edge_minimum_matches_exhaustive_search(
        p in 3usize..9,
        seed in 0u64..10_000,
        powerlaw in any::<bool>(),
        bound in 0usize..4,
    ) {
        let dag = if powerlaw {
            GraphFamily::Powerlaw.generate(p, 2.0, seed).unwrap()
        } else {
            generate_er_dag(p, 3.0f64.min((p - 1) as f64), seed).unwrap()
        };
        let sem = LinearSem::unit(assign_weights(&dag, -1.0, 1.0, false, seed + 1).unwrap()).unwrap();
        let cov = population_covariance(&sem);
        let mut brute = f64::INFINITY;
        for &(i, j) in sem.dag().edges() {
            for s in subsets_up_to(&others(p, i, j), bound) {
                brute = brute.min(partial_correlation(&cov, i, j, &s).unwrap().abs());
            }
        }
        let (fast, witness) = min_edge_pcor(&sem, bound, DEFAULT_BUDGET).unwrap();
        if sem.dag().edge_count() == 0 {
            prop_assert!(witness.is_none());
        } else {
            prop_assert!((fast - brute).abs() < 1e-9, "decomposition {fast} vs exhaustive {brute}");
            let w = witness.unwrap();
            prop_assert!(w.set.len() <= bound);
            prop_assert!((partial_correlation(&cov, w.i, w.j, &w.set).unwrap().abs() - fast).abs() < 1e-9);
        }
    }

    #[test]
    fn colex_yields_each_subset_once(n in 0usize..10, k in 0usize..5) {
        let mut it = Colex::new(n, k);
        let mut seen = BTreeSet::new();
        while let Some(idx) = it.next() {
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&v| v < n));
            prop_assert!(seen.insert(idx.to_vec()));
        }
        prop_assert_eq!(seen.len() as u128, binomial(n, k));
    }
}

#[test]
fn pdag_exposes_its_skeleton() {
    let sk = skeleton_of(&Dag::new(3, [(0, 1), (1, 2)]).unwrap());
    assert_eq!(Pdag::from_skeleton(&sk).skeleton(), sk);
}
