use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, warn};

use proxgraph::io::{
    load_index, load_ivecs_table, save_index, save_ivecs_table, save_vecs, ElemKind,
};
use proxgraph::knng::build_knng;
use proxgraph::nsg::CnaState;
use proxgraph::synth::{gen_synthetic, Distribution};
use proxgraph_bench::config::{BuildConfig, Builder, DataSource, DistKind};
use proxgraph_bench::report::{write_csv, write_json};
use proxgraph_bench::{
    cmd_alpha_grid, cmd_build, cmd_gen_gt, cmd_search_sweep, load_source, montecarlo, BenchError,
    Result,
};

/// Build and benchmark proximity-graph indexes.
#[derive(Parser)]
#[command(name = "pgbench", version)]
struct Cli {
    /// Worker threads for builds and ground truth (searches always use one).
    #[arg(long, global = true, env = "PROXGRAPH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as fvecs.
    GenSynthetic {
        #[arg(long, value_enum, default_value = "uniform")]
        dist: DistKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// Mixture components for the clustered distribution.
        #[arg(long, default_value_t = 10)]
        centers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact k-NN of every query, written as ivecs.
    GenGt {
        #[arg(long)]
        base: DataSource,
        #[arg(long)]
        queries: DataSource,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Queries are the base rows themselves; skip each query's own id.
        #[arg(long)]
        exclude_self: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an index and report its timing.
    Build {
        #[arg(long)]
        base: DataSource,
        #[command(flatten)]
        params: BuildArgs,
        #[arg(long)]
        out: PathBuf,
        /// JSON report path (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Recall and QPS over a list of beam widths.
    SearchSweep {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        base: DataSource,
        #[arg(long)]
        queries: DataSource,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long = "l", value_delimiter = ',', default_values_t = [10usize, 20, 40, 80, 160])]
        ls: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rebuild an iterative index over a range of alpha values and report
    /// build cost and recall at one beam width. `--alpha` is ignored.
    AlphaGrid {
        #[arg(long)]
        base: DataSource,
        #[arg(long)]
        queries: DataSource,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        params: BuildArgs,
        #[arg(long, default_value_t = 60.0)]
        from: f64,
        #[arg(long, default_value_t = 90.0)]
        to: f64,
        #[arg(long, default_value_t = 6.0)]
        step: f64,
        /// Neighbors per query scored for recall.
        #[arg(long, default_value_t = 10)]
        query_k: usize,
        /// Beam width of the recall measurement.
        #[arg(long = "l", default_value_t = 40)]
        search_l: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Monte-Carlo experiments.
    Montecarlo {
        #[command(subcommand)]
        experiment: Experiment,
        #[arg(long, global = true)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Experiment {
    /// How often the dominating neighbor is farther from a random query than
    /// both ends of the pruned edge, for a given angle at it.
    Wedge {
        #[arg(long, default_value_t = 90.0)]
        alpha: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean angle at the dominating neighbor over successful RNG prunings on
    /// uniform data.
    PruneAngle {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Coverage of the sampled quality estimate's error bound.
    SampleBound {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0.6)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 500)]
        resamples: usize,
        /// NN-Descent iterations for the candidate lists under test.
        #[arg(long, default_value_t = 3)]
        knng_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Whether search on an alpha-pruned KNN graph finds every target the
    /// full graph finds when both admit paths of the same least maximum rank.
    RankPath {
        #[arg(long, default_value_t = 300)]
        instances: usize,
        #[arg(long, default_value_t = 5)]
        queries: usize,
        #[arg(long, default_value_t = 200)]
        max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, value_enum, default_value = "fast-nsg")]
    builder: Builder,
    #[arg(long, default_value_t = 32)]
    k0: usize,
    #[arg(long, default_value_t = 64)]
    k: usize,
    /// Beam width of candidate searches.
    #[arg(long = "build-l", default_value_t = 64)]
    l: usize,
    #[arg(long = "m", default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 66.0)]
    alpha: f64,
    #[arg(long, default_value_t = 64)]
    ef: usize,
    /// Refinement rounds, or the cap on them with --target-recall.
    #[arg(long, default_value_t = 2)]
    iters: usize,
    #[arg(long)]
    target_recall: Option<f64>,
    #[arg(long, default_value_t = 0.6)]
    epsilon: f64,
    #[arg(long = "conf-l", default_value_t = 1.0)]
    l_conf: f64,
    #[arg(long)]
    m_factor: Option<f64>,
    #[arg(long, default_value_t = 10)]
    knng_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    parallel_insert: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl From<BuildArgs> for BuildConfig {
    fn from(a: BuildArgs) -> Self {
        BuildConfig {
            builder: a.builder,
            k0: a.k0,
            k: a.k,
            l: a.l,
            m: a.m,
            alpha: a.alpha,
            ef: a.ef,
            iters: a.iters,
            target_recall: a.target_recall,
            epsilon: a.epsilon,
            l_conf: a.l_conf,
            m_factor: a.m_factor,
            knng_iters: a.knng_iters,
            rho: a.rho,
            cache: !a.no_cache,
            parallel_insert: a.parallel_insert,
            seed: a.seed,
        }
    }
}

fn out_kind(path: &PathBuf) -> ElemKind {
    ElemKind::from_path(path).unwrap_or_else(|| {
        warn!("{}: unknown extension, writing fvecs", path.display());
        ElemKind::F32
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(BenchError::Usage("thread count must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            warn!("thread pool already initialised: {e}");
        }
    }
    match cli.cmd {
        Command::GenSynthetic {
            dist,
            n,
            d,
            centers,
            seed,
            out,
        } => {
            let dist = match dist {
                DistKind::Clustered => Distribution::clustered(centers),
                other => other.distribution(),
            };
            let ds = gen_synthetic(n, d, dist, seed)?;
            save_vecs(&out, &ds, out_kind(&out))?;
        }
        Command::GenGt {
            base,
            queries,
            k,
            exclude_self,
            out,
        } => {
            let ds = load_source(&base)?;
            let qs = load_source(&queries)?;
            save_ivecs_table(&out, &cmd_gen_gt(&ds, &qs, k, exclude_self)?)?;
        }
        Command::Build {
            base,
            params,
            out,
            report,
        } => {
            let cfg = BuildConfig::from(params);
            cfg.validate()?;
            let ds = load_source(&base)?;
            let built = cmd_build(&ds, &cfg, &base.to_string())?;
            save_index(&out, &built.index, ds.dim())?;
            write_json(&built.report, report.as_deref())?;
        }
        Command::SearchSweep {
            index,
            base,
            queries,
            truth,
            k,
            ls,
            report,
            csv,
        } => {
            let saved = load_index(&index)?;
            let ds = load_source(&base)?;
            if saved.dim != ds.dim() {
                return Err(BenchError::Usage(format!(
                    "index built on d = {}, dataset has d = {}",
                    saved.dim,
                    ds.dim()
                )));
            }
            let qs = load_source(&queries)?;
            let truth = load_ivecs_table(&truth)?;
            let r = cmd_search_sweep(&saved.index, &ds, &qs, &truth, k, &ls)?;
            if let Some(path) = csv {
                write_csv(&r.rows, &path)?;
            }
            write_json(&r, report.as_deref())?;
        }
        Command::AlphaGrid {
            base,
            queries,
            truth,
            params,
            from,
            to,
            step,
            query_k,
            search_l,
            report,
        } => {
            if !(step > 0.0 && from <= to) {
                return Err(BenchError::Usage("need step > 0 and from <= to".into()));
            }
            let alphas: Vec<f64> = (0..)
                .map(|i| from + step * i as f64)
                .take_while(|&a| a <= to + 1e-9)
                .collect();
            let ds = load_source(&base)?;
            let qs = load_source(&queries)?;
            let truth = load_ivecs_table(&truth)?;
            let r = cmd_alpha_grid(
                &ds,
                &qs,
                &truth,
                &BuildConfig::from(params),
                &alphas,
                query_k,
                search_l,
            )?;
            write_json(&r, report.as_deref())?;
        }
        Command::Montecarlo { experiment, report } => match experiment {
            Experiment::Wedge {
                alpha,
                trials,
                seed,
            } => {
                write_json(&montecarlo::wedge(alpha, trials, seed)?, report.as_deref())?;
            }
            Experiment::PruneAngle {
                n,
                d,
                k,
                nodes,
                seed,
            } => {
                let ds = gen_synthetic(n, d, Distribution::Uniform, seed)?;
                let r = montecarlo::prune_angle(&ds, k, nodes, seed)?;
                write_json(&r, report.as_deref())?;
            }
            Experiment::SampleBound {
                n,
                d,
                k,
                epsilon,
                l,
                resamples,
                knng_iters,
                seed,
            } => {
                let ds = gen_synthetic(n, d, Distribution::Uniform, seed)?;
                let state = CnaState::from_knng(build_knng(&ds, k, knng_iters, seed)?);
                let r = montecarlo::sample_bound(&ds, &state, k, epsilon, l, resamples, seed)?;
                write_json(&r, report.as_deref())?;
            }
            Experiment::RankPath {
                instances,
                queries,
                max_n,
                seed,
            } => {
                let r = montecarlo::rank_paths(instances, queries, max_n, seed)?;
                write_json(&r, report.as_deref())?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
