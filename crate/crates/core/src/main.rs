use clap::{Parser, Subcommand};
use musekit::cli::{cmd_search, cmd_tracediff, summary, CliError, RunConfig, TaskKind};
use musekit::preprocess::{Reducer, Scaler};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "muse", version, about = "Initial-point search for variational quantum learners")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the MUSE grid driver on a dataset.
    Search {
        #[arg(long, value_enum)]
        task: TaskKind,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        depth: i64,
        #[arg(long, default_value_t = 0.02)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Feature-map/ansatz repetition pairs, e.g. "1,2;2,3".
        #[arg(long)]
        feat_ans: Option<String>,
        /// Scaler/reducer pairs, e.g. "mm,f;std,pca".
        #[arg(long)]
        sca_red: Option<String>,
        /// Features after reduction (qubits). Defaults to 4 for
        /// classification and 2 for regression.
        #[arg(long)]
        dims: Option<usize>,
        /// Also run random search with 2×depth evaluations per combination.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean trace differences of each preprocessing variant.
    Tracediff {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `"a,b;c,d"` into pairs.
fn parse_pairs<A: FromStr, B: FromStr>(s: &str) -> Result<Vec<(A, B)>, CliError> {
    s.split(';')
        .map(|pair| {
            let parsed = pair.split_once(',').and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            parsed.ok_or_else(|| CliError::Config(format!("invalid pair '{pair}'")))
        })
        .collect()
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Search { task, dataset, seed, trials, depth, epsilon, alpha, beta, workers, feat_ans, sca_red, dims, baseline, out } => {
            let mut cfg = RunConfig::new(task, dataset);
            cfg.seed = seed;
            cfg.n_trials = trials;
            cfg.depth = depth;
            cfg.epsilon = epsilon;
            cfg.alpha = alpha;
            cfg.beta = beta;
            cfg.workers = workers;
            cfg.baseline = baseline;
            cfg.output = out;
            if let Some(g) = feat_ans {
                cfg.feat_ans = parse_pairs::<usize, usize>(&g)?;
            }
            if let Some(g) = sca_red {
                cfg.sca_red = parse_pairs::<Scaler, Reducer>(&g)?;
            }
            if let Some(d) = dims {
                cfg.out_dims = d;
            }
            let record = cmd_search(&cfg)?;
            print!("{}", summary(&record));
        }
        Command::Tracediff { dataset, k, out } => {
            for r in cmd_tracediff(&dataset, k, out.as_deref())? {
                println!("{:<10} {:.6}", r.variant, r.mean_trace_diff);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
