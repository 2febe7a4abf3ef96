//! `setsim` — set-similarity kernel pipelines from the command line.

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use setsim_cli::config::{GammaSpec, RunConfig};
use setsim_cli::outputs::{ensure_out_dir, write_run_manifest};
use setsim_cli::pipelines::{self, FitOverrides, StatsColumns, StatsMetric, SurvivalColumns};
use setsim_core::explain::ExtremeMode;
use setsim_core::fusion::FusionMode;
use setsim_core::machines::TaskKind;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "setsim", version, about = "Set-similarity kernels over bags of embeddings")]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Patch-kernel bandwidth.
    #[arg(long, global = true)]
    sigma: Option<f64>,

    /// Kernel decay: "median" or a nonnegative number.
    #[arg(long, global = true)]
    gamma: Option<GammaSpec>,

    /// Seed for fold shuffles and draw-breaking.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutArg {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the pairwise squared-MMD distance matrix of a dataset.
    Kernel {
        #[arg(long)]
        manifest: PathBuf,
        /// Tile edge for the pairwise engine.
        #[arg(long)]
        tile: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Transform a distance matrix into a similarity kernel.
    Transform {
        #[arg(long)]
        dist: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Top-k most similar bags for one query (or every bag).
    Retrieve {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Query bag id; omitted = run every bag as a query.
        #[arg(long)]
        query: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        /// Manifest column with ground-truth labels for neighbor annotation.
        #[arg(long)]
        label_column: Option<String>,
        /// Manifest column restricting retrieval pools per site.
        #[arg(long)]
        site_column: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Majority-vote retrieval accuracy at k over the whole matrix.
    EvalRetrieval {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        label_column: String,
        #[arg(long)]
        site_column: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Cross-validate a kernel machine and train a final model.
    Fit {
        /// One of svr, svc, surv.
        #[arg(long)]
        task: String,
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Target/label column (svr, svc).
        #[arg(long)]
        label_column: Option<String>,
        /// Survival time column.
        #[arg(long, default_value = "time")]
        time_column: String,
        /// Survival event column (0/1).
        #[arg(long, default_value = "event")]
        event_column: String,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        val_frac: Option<f64>,
        /// Fix the SVM regularization bound instead of searching the grid.
        #[arg(long = "C")]
        c: Option<f64>,
        /// Fix the regression tube half-width.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Fix the survival regularization weight.
        #[arg(long)]
        alpha: Option<f64>,
        /// Search the 13-point log-spaced alpha sweep (survival only).
        #[arg(long)]
        tune_alpha: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Score every kernel id against a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Per-patch sensitivity of one query bag under a saved model.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        query: String,
        /// Tile edge for the pairwise engine.
        #[arg(long)]
        tile: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Representative patches by PAM k-medoids over per-patient extremes.
    Medoids {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of `<bag>.sensitivity.csv` files from `explain`.
        #[arg(long)]
        scores: PathBuf,
        /// high = per-patient maximum score, low = minimum.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// RBF kernel over binary topic profiles.
    Topics {
        #[arg(long)]
        topics: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Unweighted combination of aligned kernels.
    Fuse {
        /// Kernel file; pass two or more times.
        #[arg(long = "kernel", required = true)]
        kernels: Vec<PathBuf>,
        /// sum or product.
        #[arg(long)]
        mode: String,
        /// Keep raw sums instead of dividing by the kernel count.
        #[arg(long)]
        no_rescale: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Ward dendrogram over 1 - K with flat labels at a cut.
    Cluster {
        #[arg(long)]
        dist: Option<PathBuf>,
        #[arg(long)]
        kernel: Option<PathBuf>,
        /// Number of flat clusters to cut.
        #[arg(long)]
        clusters: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Export a distance matrix as CSV for external embedding tools.
    Export {
        #[arg(long)]
        dist: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// One named statistic over CSV columns.
    Stats {
        /// spearman | auc | cindex | wilcoxon | logrank | km | aggregate-p.
        #[arg(long)]
        metric: StatsMetric,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        col_a: Option<String>,
        #[arg(long)]
        col_b: Option<String>,
        #[arg(long, default_value = "time")]
        time_column: String,
        #[arg(long, default_value = "event")]
        event_column: String,
        #[arg(long)]
        group_column: Option<String>,
        #[arg(long)]
        risk_column: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(sigma) = cli.sigma {
        config.sigma = sigma;
    }
    if let Some(gamma) = cli.gamma {
        config.gamma = gamma;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = build_config(&cli)?;
    let (out, command_name, files) = match &cli.command {
        Command::Kernel { manifest, tile, out } => {
            if let Some(t) = tile {
                config.tile = *t;
            }
            config.validate()?;
            ensure_out_dir(&out.out)?;
            (out.out.clone(), "kernel", pipelines::kernel(&config, manifest, &out.out)?)
        }
        Command::Transform { dist, out } => {
            ensure_out_dir(&out.out)?;
            (out.out.clone(), "transform", pipelines::transform(&config, dist, &out.out)?)
        }
        Command::Retrieve { kernel, manifest, query, k, label_column, site_column, out } => {
            if let Some(k) = k {
                config.k = *k;
            }
            config.validate()?;
            ensure_out_dir(&out.out)?;
            let files = pipelines::retrieve(
                &config,
                kernel,
                manifest,
                query.as_deref(),
                label_column.as_deref(),
                site_column.as_deref(),
                &out.out,
            )?;
            (out.out.clone(), "retrieve", files)
        }
        Command::EvalRetrieval { kernel, manifest, k, label_column, site_column, out } => {
            if let Some(k) = k {
                config.k = *k;
            }
            config.validate()?;
            ensure_out_dir(&out.out)?;
            let files = pipelines::eval_retrieval(
                &config,
                kernel,
                manifest,
                label_column,
                site_column.as_deref(),
                &out.out,
            )?;
            (out.out.clone(), "eval-retrieval", files)
        }
        Command::Fit {
            task,
            dist,
            manifest,
            label_column,
            time_column,
            event_column,
            folds,
            val_frac,
            c,
            epsilon,
            alpha,
            tune_alpha,
            out,
        } => {
            let task = match task.as_str() {
                "svr" => TaskKind::Svr,
                "svc" => TaskKind::Svc,
                "surv" | "survival" => TaskKind::Survival,
                other => bail!("unknown task '{other}' (expected svr, svc or surv)"),
            };
            if let Some(f) = folds {
                config.folds = *f;
            }
            if let Some(v) = val_frac {
                config.val_frac = *v;
            }
            config.validate()?;
            ensure_out_dir(&out.out)?;
            let overrides = FitOverrides {
                c: *c,
                epsilon: *epsilon,
                alpha: *alpha,
                gamma: cli.gamma,
                tune_alpha: *tune_alpha,
            };
            let files = pipelines::fit(
                &config,
                task,
                dist,
                manifest,
                label_column.as_deref(),
                Some(SurvivalColumns { time: time_column, event: event_column }),
                overrides,
                &out.out,
            )?;
            (out.out.clone(), "fit", files)
        }
        Command::Predict { model, kernel, out } => {
            ensure_out_dir(&out.out)?;
            (out.out.clone(), "predict", pipelines::predict(model, kernel, &out.out)?)
        }
        Command::Explain { model, manifest, query, tile, out } => {
            if let Some(t) = tile {
                config.tile = *t;
            }
            config.validate()?;
            ensure_out_dir(&out.out)?;
            let files = pipelines::explain(&config, model, manifest, query, &out.out)?;
            (out.out.clone(), "explain", files)
        }
        Command::Medoids { manifest, scores, mode, k, out } => {
            let mode = match mode.as_str() {
                "high" => ExtremeMode::Highest,
                "low" => ExtremeMode::Lowest,
                other => bail!("unknown medoids mode '{other}' (expected high or low)"),
            };
            if let Some(k) = k {
                config.medoid_k = *k;
            }
            config.validate()?;
            ensure_out_dir(&out.out)?;
            (out.out.clone(), "medoids", pipelines::medoids(&config, manifest, scores, mode, &out.out)?)
        }
        Command::Topics { topics, out } => {
            ensure_out_dir(&out.out)?;
            (out.out.clone(), "topics", pipelines::topics(&config, topics, &out.out)?)
        }
        Command::Fuse { kernels, mode, no_rescale, out } => {
            let mode = match mode.as_str() {
                "sum" => FusionMode::Sum,
                "product" => FusionMode::Product,
                other => bail!("unknown fusion mode '{other}' (expected sum or product)"),
            };
            if *no_rescale {
                config.rescale_sum = false;
            }
            ensure_out_dir(&out.out)?;
            (out.out.clone(), "fuse", pipelines::fuse(&config, kernels, mode, &out.out)?)
        }
        Command::Cluster { dist, kernel, clusters, out } => {
            ensure_out_dir(&out.out)?;
            let files = pipelines::cluster(&config, dist.as_deref(), kernel.as_deref(), *clusters, &out.out)?;
            (out.out.clone(), "cluster", files)
        }
        Command::Export { dist, out } => {
            ensure_out_dir(&out.out)?;
            (out.out.clone(), "export", pipelines::export(dist, &out.out)?)
        }
        Command::Stats {
            metric,
            input,
            col_a,
            col_b,
            time_column,
            event_column,
            group_column,
            risk_column,
            out,
        } => {
            ensure_out_dir(&out.out)?;
            let cols = StatsColumns {
                col_a: col_a.as_deref(),
                col_b: col_b.as_deref(),
                time: time_column,
                event: event_column,
                group: group_column.as_deref(),
                risk: risk_column.as_deref(),
            };
            (out.out.clone(), "stats", pipelines::stats(*metric, input, &cols, &out.out)?)
        }
    };
    write_run_manifest(&out, command_name, config.seed, &files)?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
