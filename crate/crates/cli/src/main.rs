use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use trekpc::experiments::{
    run_experiment, EtaSpec, ExperimentConfig, ExperimentKind, FaithfulnessRowSpec,
};
use trekpc::graph::io::write_undirected;
use trekpc::graph::GraphFamily;
use trekpc::orient::tune_parameters;
use trekpc::pcor::sample_covariance;
use trekpc::skeleton::{pc_skeleton, rpc_skeleton, SkeletonEstimate};
use trekpc::DataMatrix;

/// Skeleton estimation with the reduced PC-Algorithm and a PC baseline.
#[derive(Parser)]
#[command(name = "trekpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a skeleton from a CSV data file.
    Estimate(EstimateArgs),
    /// Pick (alpha, eta) by BIC and report the fitted model as JSON.
    Tune(TuneArgs),
    /// pROC curves of rPC against PC.
    Proc(RunArgs),
    /// Speed of rPC relative to PC.
    Timing(RunArgs),
    /// Proportions of random SEMs meeting the faithfulness conditions.
    Faithfulness(FaithArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rpc,
    Pc,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rpc")]
    method: MethodArg,
    /// Partial-correlation threshold for rPC.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 2)]
    eta: usize,
    /// Significance level for PC.
    #[arg(long, default_value_t = 0.01)]
    significance: f64,
    #[arg(long)]
    stable: bool,
    /// Edge list destination; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Separating-set file; defaults to `<output>.sepsets` when `--output`
    /// is given.
    #[arg(long)]
    sepsets: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    alpha_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    eta_grid: Vec<usize>,
    #[arg(long)]
    stable: bool,
    /// JSON destination; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving `<kind>.csv` and `<kind>.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FaithArgs {
    /// JSON experiment config; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    family: Option<GraphFamily>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    degree: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("TREKPC_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("TREKPC_THREADS={v:?} is not a thread count"))?;
        if n == 0 {
            bail!("TREKPC_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn read_data(path: &Path) -> Result<DataMatrix> {
    DataMatrix::from_csv_path(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// One `i,j,s1,s2,...` line per removed pair.
fn sepset_lines(est: &SkeletonEstimate) -> String {
    let mut out = String::new();
    for (&(i, j), set) in &est.sepsets {
        out.push_str(&format!("{i},{j}"));
        for s in set {
            out.push_str(&format!(",{s}"));
        }
        out.push('\n');
    }
    out
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let data = read_data(&args.input)?;
    let cov = sample_covariance(&data, true)?;
    let est = match args.method {
        MethodArg::Rpc => rpc_skeleton(&cov, args.alpha, args.eta, args.stable)?,
        MethodArg::Pc => pc_skeleton(&cov, data.n(), args.significance, args.stable)?,
    };
    log::info!("{} edges after {} tests", est.graph.edge_count(), est.stats.total_tests());
    emit(args.output.as_deref(), &write_undirected(&est.graph))?;
    let sidecar = args.sepsets.or_else(|| {
        args.output.as_ref().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".sepsets");
            PathBuf::from(s)
        })
    });
    if let Some(path) = sidecar {
        fs::write(&path, sepset_lines(&est)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn tune(args: TuneArgs) -> Result<()> {
    let data = read_data(&args.input)?;
    let t = tune_parameters(&data, &args.alpha_grid, &args.eta_grid, args.stable)?;
    let json = serde_json::json!({
        "alpha": t.alpha,
        "eta": t.eta,
        "bic": t.bic,
        "skeleton_edges": t.skeleton.graph.edges(),
        "cpdag_directed": t.cpdag.directed(),
        "cpdag_undirected": t.cpdag.undirected(),
        "dag_edges": t.extension.dag.edges(),
        "extension_fallback": t.extension.fallback,
        "grid": t.grid,
    });
    emit(args.output.as_deref(), &(serde_json::to_string_pretty(&json)? + "\n"))
}

fn load_config(path: &Path, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_path(path).with_context(|| format!("reading config {}", path.display()))?;
    Ok(cfg.for_kind(kind)?)
}

fn run(kind: ExperimentKind, cfg: ExperimentConfig, out: &Path) -> Result<()> {
    let table = run_experiment(kind, &cfg)?;
    let (csv, json) = table.write_to_dir(out)?;
    log::info!("wrote {} and {}", csv.display(), json.display());
    println!("{}", csv.display());
    Ok(())
}

fn faithfulness(args: FaithArgs) -> Result<()> {
    let kind = ExperimentKind::Faithfulness;
    let mut cfg = match &args.config {
        Some(p) => load_config(p, kind)?,
        None => ExperimentConfig { kind: Some(kind), p: 20, n_reps: 1000, ..Default::default() },
    };
    let row_flags = args.family.is_some() || args.p.is_some() || args.degree.is_some();
    if let Some(f) = args.family {
        cfg.family = f;
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(d) = args.degree {
        cfg.expected_degree = d;
    }
    if row_flags {
        cfg.rows = Some(vec![FaithfulnessRowSpec { family: cfg.family, p: cfg.p, expected_degree: cfg.expected_degree }]);
    }
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(e) = args.eta {
        cfg.eta = EtaSpec::Fixed(e);
    }
    if let Some(r) = args.reps {
        cfg.n_reps = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    run(kind, cfg, &args.out)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads()?;
    match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Tune(a) => tune(a),
        Command::Proc(a) => run(ExperimentKind::Proc, load_config(&a.config, ExperimentKind::Proc)?, &a.out),
        Command::Timing(a) => run(ExperimentKind::Timing, load_config(&a.config, ExperimentKind::Timing)?, &a.out),
        Command::Faithfulness(a) => faithfulness(a),
    }
}
