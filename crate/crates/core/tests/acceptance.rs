//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;

use trekpc::experiments::{run_proc_experiment, run_timing_experiment, ExperimentConfig, ExperimentKind, ProcRow, Rows};
use trekpc::faithfulness::{faithfulness_proportion, pf_report, ProportionStudy, DEFAULT_BUDGET};
use trekpc::graph::{d_separated, d_separated_by_paths, generate_er_dag, skeleton_of, GraphFamily};
use trekpc::orient::tune_parameters;
use trekpc::pcor::{partial_correlation, partial_correlation_recursive, sample_covariance};
use trekpc::rng::{derive_seed, rng_from_seed};
use trekpc::sem::{assign_weights, population_covariance, sample_data, standardize_sem, trek_covariance};
use trekpc::skeleton::{compare_graphs, rpc_skeleton};
use trekpc::subsets::Colex;
use trekpc::{CovMatrix, Dag, LinearSem, NoiseFamily};

const TREK_TOL: f64 = 1e-10;
const TREK_SECS: f64 = 10.0;
const DSEP_SECS: f64 = 30.0;
const PCOR_TOL: f64 = 1e-8;
const ORACLE_LAMBDA: f64 = 1e-4;
const ORACLE_ALPHA: f64 = 1e-8;
const ORACLE_SEEDS: usize = 100;
const TABLE_TOL: f64 = 4.0;
const TABLE_SECS: f64 = 600.0;
const PROC_FPR_CAP: f64 = 0.02;
const PROC_MIN_WINS: usize = 4;
const PROC_SECS: f64 = 900.0;
const TIMING_REPS: usize = 100;
const ER_SPEEDUP_FLOOR: f64 = -5.0;
const BIC_SEEDS: usize = 20;
const BIC_MIN_SHARE: f64 = 0.7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Random weighted DAG on `p` nodes with noise variances in `[0.5, 2)`.
fn random_sem(p: usize, degree: f64, low: f64, high: f64, signed: bool, seed: u64) -> LinearSem {
    let dag = generate_er_dag(p, degree.min((p - 1) as f64), derive_seed(seed, 0)).unwrap();
    let dag = assign_weights(&dag, low, high, signed, derive_seed(seed, 1)).unwrap();
    let mut rng = rng_from_seed(derive_seed(seed, 2));
    let vars = (0..p).map(|_| rng.random_range(0.5..2.0)).collect();
    LinearSem::new(dag, vars, NoiseFamily::Gaussian).unwrap()
}

/// `(I - A)^-1 D (I - A)^-T` by dense inversion.
fn inverse_form(sem: &LinearSem) -> DMatrix<f64> {
    let p = sem.p();
    let b = (DMatrix::<f64>::identity(p, p) - sem.dag().weighted_adjacency()).try_inverse().unwrap();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(sem.noise_variances()));
    &b * d * b.transpose()
}

/// Every subset of `pool` with at most `k` elements.
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

fn trek_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let p = 2 + (seed as usize % 7);
        let sem = random_sem(p, 2.5, -1.0, 1.0, false, seed);
        let sigma = population_covariance(&sem);
        let inv = inverse_form(&sem);
        for i in 0..p {
            for j in i..p {
                let treks = trek_covariance(&sem, i, j, &[], 2 * (p - 1)).unwrap();
                worst = worst.max((sigma.get(i, j) - treks).abs()).max((inv[(i, j)] - treks).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= TREK_TOL && secs < TREK_SECS, format!("max |matrix - trek sum| = {worst:.2e}, {secs:.1}s"))
}

fn dsep_equivalence() -> Outcome {
    let start = Instant::now();
    let (mut queries, mut mismatches) = (0usize, 0usize);
    for seed in 0..50u64 {
        let p = 3 + (seed as usize % 6);
        let dag = generate_er_dag(p, 2.0 + (seed % 3) as f64 * 0.5, derive_seed(seed, 7)).unwrap();
        for i in 0..p {
            for j in i + 1..p {
                let rest: Vec<usize> = (0..p).filter(|&v| v != i && v != j).collect();
                for s in subsets_up_to(&rest, 3) {
                    queries += 1;
                    if d_separated(&dag, i, j, &s).unwrap() != d_separated_by_paths(&dag, i, j, &s).unwrap() {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(mismatches == 0 && secs < DSEP_SECS, format!("{mismatches} mismatches over {queries} queries, {secs:.1}s"))
}

fn pcor_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut queries = 0usize;
    for seed in 0..100u64 {
        let p = 3 + (seed as usize % 5);
        let mut rng = rng_from_seed(derive_seed(seed, 11));
        let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let m = &b * b.transpose() + DMatrix::identity(p, p) * 0.1;
        let cov = CovMatrix::new(m, None).unwrap();
        for i in 0..p {
            for j in i + 1..p {
                let rest: Vec<usize> = (0..p).filter(|&v| v != i && v != j).collect();
                for s in subsets_up_to(&rest, 3) {
                    queries += 1;
                    let a = partial_correlation(&cov, i, j, &s).unwrap();
                    let r = partial_correlation_recursive(&cov, i, j, &s).unwrap();
                    worst = worst.max((a - r).abs());
                }
            }
        }
    }
    outcome(worst <= PCOR_TOL, format!("max |cholesky - recursive| = {worst:.2e} over {queries} queries"))
}

fn standardization() -> Outcome {
    let mut max_w: f64 = 0.0;
    let mut pattern_ok = true;
    for seed in 0..200u64 {
        let p = 2 + (seed as usize % 9);
        // Nonnegative weights; with signed weights and correlated parents
        // the bound does not hold in general (see the unit tests).
        let sem = random_sem(p, 3.0, 0.1, 2.0, false, 1000 + seed);
        let st = standardize_sem(&sem);
        pattern_ok &= st.dag().edges() == sem.dag().edges();
        for &(j, k) in sem.dag().edges() {
            let (w, v) = (sem.dag().weight(j, k).unwrap(), st.dag().weight(j, k).unwrap());
            pattern_ok &= (w == 0.0) == (v == 0.0);
            max_w = max_w.max(v.abs());
        }
    }
    outcome(pattern_ok && max_w < 1.0, format!("max |standardized weight| = {max_w:.6}, zero pattern kept: {pattern_ok}"))
}

/// Every non-adjacent pair is d-separated by at most two nodes of
/// `adj(i) ∪ adj(j)`.
fn locally_separable(dag: &Dag) -> bool {
    let sk = skeleton_of(dag);
    let p = dag.p();
    (0..p).all(|i| {
        (i + 1..p).all(|j| {
            if sk.has_edge(i, j) {
                return true;
            }
            let pool: Vec<usize> =
                sk.neighbor_set(i).union(sk.neighbor_set(j)).copied().filter(|&v| v != i && v != j).collect();
            subsets_up_to(&pool, 2).iter().any(|s| d_separated(dag, i, j, s).unwrap())
        })
    })
}

fn oracle_recovery() -> Outcome {
    let (mut tried, mut recovered, mut eligible) = (0u64, 0usize, 0usize);
    while eligible < ORACLE_SEEDS && tried < 10_000 {
        let seed = tried;
        tried += 1;
        let p = 6 + (seed as usize % 10);
        let dag = generate_er_dag(p, 2.0, derive_seed(seed, 0)).unwrap();
        let dag = assign_weights(&dag, -1.0, 1.0, false, derive_seed(seed, 1)).unwrap();
        let sem = LinearSem::unit(dag).unwrap();
        if !locally_separable(sem.dag()) || !pf_report(&sem, ORACLE_LAMBDA, 2, DEFAULT_BUDGET).unwrap().satisfied_part_i {
            continue;
        }
        eligible += 1;
        let cov = population_covariance(&sem);
        let est = rpc_skeleton(&cov, ORACLE_ALPHA, 2, false).unwrap();
        recovered += (est.graph == skeleton_of(sem.dag())) as usize;
    }
    outcome(
        eligible == ORACLE_SEEDS && recovered == ORACLE_SEEDS,
        format!("{recovered}/{eligible} exact skeletons ({tried} seeds drawn)"),
    )
}

fn faithfulness_tables() -> Outcome {
    let start = Instant::now();
    let targets = [
        (10, GraphFamily::Er, 2.0, 94.3, 97.6),
        (10, GraphFamily::Er, 5.0, 9.7, 61.1),
        (10, GraphFamily::Powerlaw, 2.0, 94.8, 97.4),
        (10, GraphFamily::Powerlaw, 6.0, 7.7, 59.9),
        (20, GraphFamily::Er, 2.0, 77.4, 91.5),
        (20, GraphFamily::Er, 5.0, 0.0, 7.5),
        (20, GraphFamily::Powerlaw, 2.0, 54.4, 84.9),
        (20, GraphFamily::Powerlaw, 6.0, 0.3, 8.3),
        (30, GraphFamily::Er, 2.0, 66.2, 86.1),
        (30, GraphFamily::Er, 5.0, 0.0, 1.0),
        (30, GraphFamily::Powerlaw, 2.0, 3.5, 50.6),
        (30, GraphFamily::Powerlaw, 6.0, 0.0, 0.9),
    ];
    let mut pass = true;
    let mut rows = Vec::new();
    for (p, family, deg, rsf, pf) in targets {
        let res = faithfulness_proportion(&ProportionStudy::new(family, p, deg)).unwrap();
        let ok = res.budget_failures == 0 && (res.rsf_pct - rsf).abs() <= TABLE_TOL && (res.pf_pct - pf).abs() <= TABLE_TOL;
        pass &= ok;
        rows.push(format!(
            "{}{family:?} p={p} d={deg}: {:.1}/{:.1} vs {rsf}/{pf}",
            if ok { "" } else { "*" },
            res.rsf_pct,
            res.pf_pct
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < TABLE_SECS, format!("{secs:.0}s; {}", rows.join("; ")))
}

fn proc_rows(family: GraphFamily) -> (Vec<ProcRow>, Vec<ProcRow>) {
    let cfg = ExperimentConfig { kind: Some(ExperimentKind::Proc), family, p: 100, n: 200, n_reps: 20, ..Default::default() };
    let Rows::Proc(rows) = run_proc_experiment(&cfg).unwrap().rows else { unreachable!() };
    rows.into_iter().partition(|r| r.method == "rpc")
}

/// Linear interpolation of `(x, y)` points sorted by `x`, extended along the
/// end segments.
fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let k = points.windows(2).position(|w| x <= w[1].0).unwrap_or(points.len() - 2);
    let ((x0, y0), (x1, y1)) = (points[k], points[k + 1]);
    if x1 == x0 { y0 } else { y0 + (x - x0) * (y1 - y0) / (x1 - x0) }
}

fn proc_curves() -> Outcome {
    let start = Instant::now();
    let (rpc, pc) = proc_rows(GraphFamily::Powerlaw);
    let wins = rpc
        .iter()
        .zip(&pc)
        .filter(|(r, c)| r.mean_fpr <= PROC_FPR_CAP && c.mean_fpr <= PROC_FPR_CAP && r.mean_tpr >= c.mean_tpr)
        .count();
    let pl_gaps: Vec<String> = rpc.iter().zip(&pc).map(|(r, c)| format!("{:+.3}", r.mean_tpr - c.mean_tpr)).collect();

    // The FPRs sit within a handful of false edges of zero, so the ER curves
    // are matched by mean estimated edge count.
    let (rpc_er, pc_er) = proc_rows(GraphFamily::Er);
    let mut by_edges: Vec<(f64, f64, f64)> = pc_er.iter().map(|c| (c.mean_edges, c.mean_tpr, c.se_tpr)).collect();
    by_edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tpr_pts: Vec<(f64, f64)> = by_edges.iter().map(|t| (t.0, t.1)).collect();
    let se_pts: Vec<(f64, f64)> = by_edges.iter().map(|t| (t.0, t.2)).collect();
    let mut er_ok = true;
    let mut er_gaps = Vec::new();
    for r in &rpc_er {
        let gap = r.mean_tpr - interpolate(&tpr_pts, r.mean_edges);
        let se = r.se_tpr.max(interpolate(&se_pts, r.mean_edges));
        er_ok &= gap.abs() <= se;
        er_gaps.push(format!("{gap:+.3}/{se:.3}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        wins >= PROC_MIN_WINS && er_ok && secs < PROC_SECS,
        format!(
            "power law rPC-PC TPR [{}] ({wins}/5 wins); ER gap/se at matched edges [{}]; {secs:.0}s",
            pl_gaps.join(" "),
            er_gaps.join(" ")
        ),
    )
}

fn timing_direction() -> Outcome {
    let run = |family, p, n| {
        let cfg = ExperimentConfig { kind: Some(ExperimentKind::Timing), family, p, n, n_reps: TIMING_REPS, ..Default::default() };
        let Rows::Timing(rows) = run_timing_experiment(&cfg).unwrap().rows else { unreachable!() };
        rows[0].mean_speedup_pct
    };
    let pl = run(GraphFamily::Powerlaw, 200, 100);
    let er = run(GraphFamily::Er, 100, 200);
    outcome(pl > 0.0 && er >= ER_SPEEDUP_FLOOR, format!("power law p=200 {pl:.1}%, ER p=100 {er:.1}%"))
}

/// Per seed, eta is chosen by BIC separately at every alpha; the reported
/// choice is the one at the alpha whose BIC-tuned skeleton has the best F1.
/// The jointly tuned `(alpha, eta)` is reported alongside.
fn bic_eta() -> Outcome {
    let cfg = ExperimentConfig { family: GraphFamily::Powerlaw, p: 100, n: 200, ..Default::default() };
    let alphas = cfg.resolved_alpha_grid().unwrap();
    let etas = [1, 2, 3, 4];
    let (mut picks, mut joint) = (Vec::new(), Vec::new());
    let mut per_alpha_low = 0;
    for seed in 0..BIC_SEEDS as u64 {
        let dag = GraphFamily::Powerlaw.generate(100, 2.0, derive_seed(seed, 0)).unwrap();
        let dag = assign_weights(&dag, 0.1, 1.0, false, derive_seed(seed, 1)).unwrap();
        let truth = skeleton_of(&dag);
        let data = sample_data(&LinearSem::unit(dag).unwrap(), 200, derive_seed(seed, 2)).unwrap();
        let tuned = tune_parameters(&data, &alphas, &etas, true).unwrap();
        joint.push(tuned.eta);
        let cov = sample_covariance(&data, true).unwrap();
        let mut best: Option<(f64, usize)> = None;
        for &alpha in &alphas {
            let eta = tuned
                .grid
                .iter()
                .filter(|g| g.alpha == alpha && g.score.is_some())
                .fold(None::<(f64, usize)>, |acc, g| match acc {
                    Some((s, _)) if s >= g.score.unwrap() => acc,
                    _ => Some((g.score.unwrap(), g.eta)),
                })
                .unwrap()
                .1;
            per_alpha_low += (eta <= 2) as usize;
            let f1 = compare_graphs(&rpc_skeleton(&cov, alpha, eta, true).unwrap().graph, &truth).unwrap().f1;
            if best.is_none_or(|(b, _)| f1 > b) {
                best = Some((f1, eta));
            }
        }
        picks.push(best.unwrap().1);
    }
    let low = picks.iter().filter(|&&e| e <= 2).count();
    let share = low as f64 / BIC_SEEDS as f64;
    outcome(
        share >= BIC_MIN_SHARE,
        format!(
            "eta <= 2 in {low}/{BIC_SEEDS} seeds at the best-F1 alpha, picks {picks:?}; \
             all alphas {per_alpha_low}/{}; joint alpha-eta tuning {}/{BIC_SEEDS}",
            BIC_SEEDS * alphas.len(),
            joint.iter().filter(|&&e| e <= 2).count()
        ),
    )
}

fn main() {
    // Keep the binary usable under `cargo test -- <filter>` style arguments.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 trek-matrix equivalence", trek_equivalence),
        ("2 d-separation oracle", dsep_equivalence),
        ("3 partial-correlation agreement", pcor_agreement),
        ("4 standardization", standardization),
        ("5 oracle skeleton recovery", oracle_recovery),
        ("6 faithfulness tables", faithfulness_tables),
        ("7 pROC dominance", proc_curves),
        ("8 timing direction", timing_direction),
        ("9 BIC-tuned eta", bic_eta),
    ];
    let mut failed = 0;
    let mut oracle_suite = true;
    let mut ran_suite = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = check();
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
        if name.as_bytes()[0] <= b'5' {
            ran_suite += 1;
            oracle_suite &= o.pass;
        }
    }
    if ran_suite == 5 {
        let pass = oracle_suite;
        println!(
            "{} criterion 10 desk-scale substitution: oracle and invariant suites 1-5 {}",
            if pass { "PASS" } else { "FAIL" },
            if pass { "hold" } else { "do not all hold" }
        );
        failed += (!pass) as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
