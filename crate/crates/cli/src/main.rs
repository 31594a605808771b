use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geoembed_cli::experiment::{self, RunSpec, Runner};
use geoembed_cli::error::io_err;
use geoembed_cli::{manifest, CliError, DataSource, ExperimentConfig, Result};
use geoembed_core::{data, eval, ModelBundle};

#[derive(Parser)]
#[command(name = "geoembed", about = "Metric learning with auxiliary-label geometric constraints")]
struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra settings, applied after the config file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset to a feature file
    Generate,
    /// Train one recipe and save the checkpoint, log and evaluation
    Train {
        #[arg(long)]
        recipe: String,
    },
    /// Evaluate a checkpoint on the test split
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Every configured recipe over every seed
    Matrix {
        /// Also run each recipe at every margin in experiment.margins
        #[arg(long)]
        margin_sweep: bool,
    },
    /// Baseline vs constrained recipe with real and shuffled auxiliary labels
    ReControl,
    /// AUC against the number of training triplets
    SizeSweep {
        /// Comma-separated triplet counts (overrides experiment.sizes)
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Comma-separated recipes (default: baseline and constrained recipe)
        #[arg(long, value_delimiter = ',')]
        recipes: Option<Vec<String>>,
    },
    /// Constrained recipe under auxiliary-label corruption
    CorruptionSweep {
        /// Comma-separated flip probabilities (overrides experiment.flip_probs)
        #[arg(long, value_delimiter = ',')]
        flip_probs: Option<Vec<f64>>,
    },
    /// PCA scatter of a checkpoint's test-set embeddings
    PcaPlot {
        #[arg(long)]
        model: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim()).map_err(CliError::Invalid)?;
    }
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig) -> Result<()> {
    experiment::write_file(&cfg.out_dir.join("config.txt"), &cfg.to_text())?;
    manifest::write_manifest(&cfg.out_dir)?;
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn write_report(dir: &Path, report: &eval::EvaluationReport) -> Result<()> {
    experiment::write_file(&dir.join("report.csv"), &report.summary_csv())?;
    experiment::write_file(&dir.join("roc.csv"), &report.roc_csv())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let seed = cfg.seeds[0];
    let dir = cfg.out_dir.clone();
    match &cli.command {
        Command::Generate => {
            let DataSource::Synthetic(spec) = &cfg.data else {
                return Err(CliError::Invalid("generate needs data.source = synthetic".into()));
            };
            let mut spec = spec.clone();
            spec.seed = spec.seed.wrapping_add(seed);
            let ds = data::generate_synthetic(&spec)?;
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            data::save_features(&ds, dir.join("features.txt"))?;
            println!("{} examples, {} classes", ds.len(), ds.num_classes());
        }
        Command::Train { recipe } => {
            let run = experiment::train_run(&cfg, &RunSpec::plain(recipe), seed)?;
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            run.model.save(dir.join("model.txt"))?;
            experiment::write_file(&dir.join("train_log.csv"), &run.log.to_csv())?;
            let ev = experiment::evaluate(&cfg, &run.model, &run.splits.test, seed)?;
            write_report(&dir, &ev.report)?;
            println!("{recipe} seed {seed}: auc {:.4}, best epoch {}", ev.auc, run.log.best_epoch);
        }
        Command::Eval { model } => {
            let m = ModelBundle::load(model)?;
            let splits = experiment::prepare_splits(&cfg, seed)?;
            let ev = experiment::evaluate(&cfg, &m, &splits.test, seed)?;
            write_report(&dir, &ev.report)?;
            println!("auc {:.4} ({} positive, {} negative pairs)", ev.auc, ev.report.num_pos, ev.report.num_neg);
        }
        Command::Matrix { margin_sweep } => {
            let mut runner = Runner::new(cfg.clone()).with_progress(true);
            let table = experiment::run_method_matrix(&mut runner);
            experiment::write_table(&dir, "results", "method matrix", &table)?;
            print!("{}", table.summary("method matrix"));
            if *margin_sweep {
                let sweep = experiment::run_margin_sweep(&mut runner, &cfg.margins)?;
                experiment::write_table(&dir, "margin_sweep", "margin sweep", &sweep)?;
                print!("\n{}", sweep.summary("margin sweep"));
            }
        }
        Command::ReControl => {
            let mut runner = Runner::new(cfg.clone()).with_progress(true);
            let table = experiment::run_re_control(&mut runner);
            experiment::write_table(&dir, "results", "random auxiliary label control", &table)?;
            print!("{}", table.summary("random auxiliary label control"));
        }
        Command::SizeSweep { sizes, recipes } => {
            let sizes = sizes.clone().unwrap_or_else(|| cfg.sizes.clone());
            let recipes = recipes
                .clone()
                .unwrap_or_else(|| vec![cfg.baseline.clone(), cfg.constrained_recipe.clone()]);
            let mut runner = Runner::new(cfg.clone()).with_progress(true);
            let table = experiment::run_size_sweep(&mut runner, &recipes, &sizes)?;
            let specs = experiment::size_specs(&recipes, &sizes);
            experiment::write_table(&dir, "results", "training size sweep", &table)?;
            experiment::write_file(&dir.join("auc_vs_size.csv"), &experiment::size_csv(&table, &specs))?;
            experiment::write_file(&dir.join("auc_vs_size.svg"), &experiment::size_plot(&table, &specs))?;
            print!("{}", table.summary("training size sweep"));
        }
        Command::CorruptionSweep { flip_probs } => {
            let probs = flip_probs.clone().unwrap_or_else(|| cfg.flip_probs.clone());
            let mut runner = Runner::new(cfg.clone()).with_progress(true);
            let table = experiment::run_corruption_sweep(&mut runner, &probs)?;
            experiment::write_table(&dir, "results", "auxiliary label corruption sweep", &table)?;
            experiment::write_file(
                &dir.join("auc_vs_flip.csv"),
                &experiment::corruption_csv(&table, &cfg.constrained_recipe, &probs),
            )?;
            print!("{}", table.summary("auxiliary label corruption sweep"));
        }
        Command::PcaPlot { model } => {
            let m = ModelBundle::load(model)?;
            let splits = experiment::prepare_splits(&cfg, seed)?;
            let emb = m.embed_dataset(&splits.test)?;
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let pts = eval::pca_export(&emb, &splits.test, dir.join("pca"))?;
            println!("{} points", pts.len());
        }
    }
    finish(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
