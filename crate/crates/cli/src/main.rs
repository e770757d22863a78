mod commands;
mod config;
mod files;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "celltraj", version, about = "Co-movement search over cell-tower trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// `key=value` config file, applied before the flags below
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Similarity threshold
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Global pruning tolerance
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Largest number of candidates per sequence
    #[arg(long, global = true)]
    m_max: Option<usize>,
    #[arg(long, global = true)]
    no_global_prune: bool,
    #[arg(long, global = true)]
    no_local_prune: bool,
    /// Benchmark seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

/// Input files. `--world` points at a generated world and fills in whichever
/// of the other paths are not given.
#[derive(Args, Debug, Clone, Default)]
pub struct Inputs {
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    towers: Option<PathBuf>,
    /// Cell records `id,time,lac,cid`
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build per-user sequences and filter them
    Preprocess {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Match sequences to the road network and write the candidate store
    Match {
        #[command(flatten)]
        inputs: Inputs,
        /// Filtered sequences from `preprocess` (records format); used instead of --records
        #[arg(long)]
        sequences: Option<PathBuf>,
        /// Also write a JSON export of every candidate set
        #[arg(long)]
        debug_json: bool,
    },
    /// Load a candidate store and list what the search index holds
    Index {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        store: PathBuf,
    },
    /// Find co-moving sequences in a candidate store
    Query {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        store: PathBuf,
        /// GPS trace `time,lon,lat` to use as the query
        #[arg(long, conflicts_with = "all")]
        gps: Option<PathBuf>,
        /// Query with every stored sequence in turn
        #[arg(long)]
        all: bool,
    },
    /// Generate a synthetic world
    Simulate,
    /// Score query results and matches against a generated world's truth
    Evaluate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// `results.csv` from `query --all`
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Time matching and querying across worker counts and dataset sizes
    Bench {
        /// Group counts of the generated datasets
        #[arg(long, value_delimiter = ',', default_value = "20,50")]
        groups: Vec<usize>,
        /// Worker counts to sweep
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        sweep: Vec<usize>,
        /// Queries per dataset
        #[arg(long, default_value_t = 20)]
        queries: usize,
    },
}

impl Global {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(t) = self.tau {
            cfg.search.tau = t;
        }
        if let Some(e) = self.epsilon {
            cfg.search.epsilon0 = e;
        }
        if let Some(m) = self.m_max {
            cfg.search.m_max = m;
            cfg.matching.m_max = m;
        }
        if self.no_global_prune {
            cfg.search.global_pruning = false;
        }
        if self.no_local_prune {
            cfg.search.local_pruning = false;
        }
        if let Some(s) = self.seed {
            cfg.benchmark.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = cli.global.run_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("starting worker pool")?;
    let out = cli.global.out.clone();
    pool.install(|| match cli.command {
        Command::Preprocess { inputs } => commands::preprocess(&cfg, &inputs, &out),
        Command::Match { inputs, sequences, debug_json } => commands::match_cmd(&cfg, &inputs, sequences.as_deref(), debug_json, &out),
        Command::Index { inputs, store } => commands::index(&cfg, &inputs, &store, &out),
        Command::Query { inputs, store, gps, all } => commands::query(&cfg, &inputs, &store, gps.as_deref(), all, &out),
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Evaluate { world, store, results } => commands::evaluate(&cfg, &world, &store, results.as_deref(), &out),
        Command::Bench { groups, sweep, queries } => commands::bench(&cfg, &groups, &sweep, queries, &out),
    })
}
