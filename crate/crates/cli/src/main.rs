//! Command-line front end: generate graphs, print thresholds, cluster,
//! sample, and run the experiment sweeps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::Value;

use sbm_active::experiments::{self, Fig1Config, Fig2Config, Fig3Config};
use sbm_active::sampler::run_algorithm1_refined;
use sbm_active::{
    auto_budget, generate_sbm, initial_labeling, run_algorithm1, ClusterFile, GraphFile,
    InitConfig, Labeling, Oracle, SbmParams, ThresholdReport,
};

#[derive(Debug, Parser)]
#[command(name = "sbm-active", version, about, arg_required_else_help = true)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw an SBM graph and write it as JSON.
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print thresholds and the label budget as JSON.
    Theory {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Compute the initial labeling of a graph file.
    Cluster {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        init: InitArgs,
    },
    /// Query the lowest-ranked nodes and write the sampling report as JSON.
    Sample {
        #[arg(long)]
        graph: PathBuf,
        /// Output of `cluster`.
        #[arg(long)]
        init: PathBuf,
        /// Node count, or `auto` for the budget implied by the graph's (n, a, b).
        #[arg(long)]
        budget: String,
        /// JSON object with a `labels` array; a graph file works.
        #[arg(long)]
        truth: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Majority pass over unsampled nodes after correction.
        #[arg(long)]
        refine: bool,
    },
    /// Run an experiment sweep and write CSV files.
    Experiment {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        opts: ExperimentArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("rate").required(true).args(["a", "divergence"])))]
struct ModelArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    a: Option<f64>,
    /// Divergence (sqrt(a) - sqrt(b))^2; a is derived from it and b.
    #[arg(long = "D")]
    divergence: Option<f64>,
    #[arg(long)]
    b: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<SbmParams> {
        let params = match (self.a, self.divergence) {
            (Some(a), None) => SbmParams::new(self.n, a, self.b)?,
            (None, Some(d)) => SbmParams::from_divergence(self.n, d, self.b)?,
            _ => unreachable!("clap enforces exactly one of --a / --D"),
        };
        Ok(params)
    }
}

#[derive(Debug, Args)]
struct InitArgs {
    #[arg(long, default_value_t = InitConfig::default().replicas)]
    replicas: usize,
    #[arg(long, default_value_t = InitConfig::default().max_iter)]
    max_iter: usize,
    #[arg(long, default_value_t = InitConfig::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = InitConfig::default().trim_multiplier)]
    trim: f64,
    /// One majority pass after the replica step.
    #[arg(long)]
    refine: bool,
}

impl InitArgs {
    fn config(&self) -> InitConfig {
        InitConfig {
            replicas: self.replicas,
            max_iter: self.max_iter,
            tol: self.tol,
            trim_multiplier: self.trim,
            refine: self.refine,
        }
    }
}

/// Experiment options. Values come from `--config` (a JSON object with the
/// same snake_case keys) and are overridden by flags.
#[derive(Debug, Default, Args, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    dmin: Option<f64>,
    #[arg(long)]
    dmax: Option<f64>,
    #[arg(long)]
    dstep: Option<f64>,
    /// Divergence for fig3.
    #[arg(long = "D")]
    #[serde(rename = "D")]
    divergence: Option<f64>,
    /// Comma-separated graph sizes n.
    #[arg(long, value_delimiter = ',')]
    nlist: Option<Vec<usize>>,
    /// Comma-separated M values for fig1.
    #[arg(long, value_delimiter = ',')]
    mlist: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Cap on concurrently running trials (default: all cores).
    #[arg(long)]
    trials_parallel: Option<usize>,
    /// Record wall time per trial in records.csv.
    #[arg(long)]
    #[serde(default)]
    timing: bool,
}

impl ExperimentArgs {
    fn merged(self) -> Result<Self> {
        let Some(path) = &self.config else {
            return Ok(self);
        };
        let file: ExperimentArgs = read_json(path)?;
        Ok(Self {
            config: self.config,
            b: self.b.or(file.b),
            dmin: self.dmin.or(file.dmin),
            dmax: self.dmax.or(file.dmax),
            dstep: self.dstep.or(file.dstep),
            divergence: self.divergence.or(file.divergence),
            nlist: self.nlist.or(file.nlist),
            mlist: self.mlist.or(file.mlist),
            trials: self.trials.or(file.trials),
            seed: self.seed.or(file.seed),
            replicas: self.replicas.or(file.replicas),
            out_dir: self.out_dir.or(file.out_dir),
            trials_parallel: self.trials_parallel.or(file.trials_parallel),
            timing: self.timing || file.timing,
        })
    }

    fn init_config(&self) -> InitConfig {
        let mut init = InitConfig::default();
        if let Some(k) = self.replicas {
            init.replicas = k;
        }
        init
    }

    fn divergence_grid(&self) -> Result<Vec<f64>> {
        let dmin = self.dmin.unwrap_or(0.30);
        let dmax = self.dmax.unwrap_or(0.60);
        let dstep = self.dstep.unwrap_or(0.05);
        if !(dstep > 0.0) || dmax < dmin {
            bail!("invalid divergence grid: dmin={dmin}, dmax={dmax}, dstep={dstep}");
        }
        let steps = ((dmax - dmin) / dstep + 1e-9).floor() as usize;
        // Round away accumulated binary noise so grid values print cleanly.
        Ok((0..=steps)
            .map(|k| ((dmin + k as f64 * dstep) * 1e12).round() / 1e12)
            .collect())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut out = BufWriter::new(file);
            serde_json::to_writer(&mut out, value)?;
            out.flush()?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn read_truth(path: &Path) -> Result<Labeling> {
    let value: Value = read_json(path)?;
    let labels = value
        .get("labels")
        .ok_or_else(|| anyhow!("{} has no \"labels\" array", path.display()))?;
    Ok(serde_json::from_value(labels.clone())?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { model, seed, out } => {
            let params = model.params()?;
            let (graph, labels) = generate_sbm(&params, seed);
            info!("generated {} nodes, {} edges", graph.num_nodes(), graph.num_edges());
            GraphFile::new(&graph, &labels).write(&out)?;
        }
        Command::Theory { model } => {
            write_json(None, &ThresholdReport::new(&model.params()?))?;
        }
        Command::Cluster { graph, out, seed, init } => {
            let (graph, _) = GraphFile::read(&graph)?.into_parts()?;
            let report = initial_labeling(&graph, &init.config(), seed)?;
            if !report.converged {
                log::warn!("eigenvector iteration did not converge");
            }
            write_json(Some(&out), &ClusterFile::from(&report))?;
        }
        Command::Sample { graph, init, budget, truth, out, refine } => {
            let file = GraphFile::read(&graph)?;
            let params = file.params()?;
            let (graph, _) = file.into_parts()?;
            let cluster: ClusterFile = read_json(&init)?;
            let truth = read_truth(&truth)?;
            let budget = if budget == "auto" {
                let params = params.ok_or_else(|| {
                    anyhow!("--budget auto needs n, a and b in the graph file")
                })?;
                auto_budget(&params)
            } else {
                budget
                    .parse::<usize>()
                    .with_context(|| format!("--budget must be a node count or `auto`, got {budget:?}"))?
            };
            let mut oracle = Oracle::new(truth);
            let report = if refine {
                run_algorithm1_refined(&graph, &cluster.tau_prime, budget, &mut oracle)?
            } else {
                run_algorithm1(&graph, &cluster.tau_prime, budget, &mut oracle)?
            };
            info!("queried {} nodes, flipped={}", report.budget_used, report.flipped);
            write_json(out.as_deref(), &report)?;
        }
        Command::Experiment { figure, opts } => {
            let opts = opts.merged()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.trials_parallel.unwrap_or(0))
                .build()?;
            pool.install(|| run_experiment(figure, &opts))?;
        }
    }
    Ok(())
}

fn run_experiment(figure: Figure, opts: &ExperimentArgs) -> Result<()> {
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let seed = opts.seed.unwrap_or(0);
    match figure {
        Figure::Fig1 => {
            let mut config = Fig1Config::default();
            if let Some(ms) = &opts.mlist {
                config.ms = ms.clone();
            }
            experiments::run_fig1(&config, &out_dir)?;
        }
        Figure::Fig2 => {
            let mut config = Fig2Config {
                divergences: opts.divergence_grid()?,
                master_seed: seed,
                init: opts.init_config(),
                record_runtime: opts.timing,
                ..Fig2Config::default()
            };
            if let Some(b) = opts.b {
                config.b = b;
            }
            if let Some(ns) = &opts.nlist {
                config.ns = ns.clone();
            }
            if let Some(t) = opts.trials {
                config.trials = t;
            }
            let output = experiments::run_fig2(&config, &out_dir)?;
            for fit in [&output.minority_fit, &output.sample_fit] {
                for e in &fit.exponents {
                    info!("{} D={} exponent={:.4}", fit.quantity.name(), e.divergence, e.exponent);
                }
            }
        }
        Figure::Fig3 => {
            let mut config = Fig3Config {
                master_seed: seed,
                init: opts.init_config(),
                ..Fig3Config::default()
            };
            if let Some(b) = opts.b {
                config.b = b;
            }
            if let Some(d) = opts.divergence {
                config.divergence = d;
            }
            if let Some(ns) = &opts.nlist {
                config.ns = ns.clone();
            }
            if let Some(t) = opts.trials {
                config.trials = t;
            }
            experiments::run_fig3(&config, &out_dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
