use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use ptclab::config::ExperimentConfig;
use ptclab::experiment::{
    self, ablation_csv, evaluate, load_checkpoint, ptc_matrix, ptc_summary_csv, run_experiment, with_seed, write_evaluation,
    write_run, CellScore, Suite,
};
use ptclab::formats::{bundle_dir, export_bundle, write_text};
use ptclab::simsensor::generate_bundle;

/// Desk-scale lab for stripe artifacts in sparse-supervised radar-camera depth completion.
#[derive(Parser)]
#[command(name = "ptclab", version)]
struct Cli {
    /// Base seed; falls back to PTCLAB_SEED, then to the config's training seed.
    #[arg(long, global = true, env = "PTCLAB_SEED")]
    seed: Option<u64>,

    /// Worker threads for scene generation and evaluation. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// Experiment config JSON file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in preset name instead of a file.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct Budget {
    /// Override the training steps of every run.
    #[arg(long)]
    steps: Option<usize>,

    /// Override the number of benchmark scenes of every run.
    #[arg(long)]
    scenes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Export simulated bundles as DCR1 rasters with JSON sidecars.
    GenData {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration and score it on the benchmark scenes.
    Train {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        budget: Budget,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint and write depth images.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the six-cell stripe-artifact matrix and summarise it.
    DemoPtc {
        #[command(flatten)]
        budget: Budget,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the disruption, compensation and supervision suites over three seeds.
    Ablate {
        #[command(flatten)]
        budget: Budget,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the built-in presets, optionally writing each as `<dir>/<name>.json`.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => Ok(ExperimentConfig::load(path)?),
            (None, Some(name)) => Ok(experiment::preset(name)?),
            (None, None) => bail!("pass --config <file> or --preset <name>"),
        }
    }
}

impl Budget {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.steps {
            cfg.train.steps = s;
        }
        if let Some(n) = self.scenes {
            cfg.eval.n_scenes = n;
            cfg.eval.viz_scenes = cfg.eval.viz_scenes.min(n);
        }
        cfg.validate()?;
        Ok(())
    }
}

fn seeded(mut cfg: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg
}

fn train_one(cfg: &ExperimentConfig, jobs: usize, out: &Path) -> Result<CellScore> {
    let every = (cfg.train.steps / 10).max(1);
    let name = cfg.name.clone();
    let run = run_experiment(cfg, jobs, &mut |row| {
        if (row.step + 1) % every == 0 {
            eprintln!("[{name}] step {}/{} loss {:.4}", row.step + 1, cfg.train.steps, row.loss);
        }
    })?;
    write_run(out, cfg, &run)?;
    Ok(CellScore::from_evaluation(&run.evaluation)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { source, n, out } => {
            let cfg = seeded(source.load()?, cli.seed);
            for i in 0..n {
                let b = generate_bundle(&cfg.sim, cfg.train.seed + i as u64, cfg.train.supervision)?;
                export_bundle(&bundle_dir(&out, i), &b)?;
            }
            write_text(&out.join("config.json"), &(cfg.to_json() + "\n"))?;
        }
        Command::Train { source, budget, out } => {
            let mut cfg = seeded(source.load()?, cli.seed);
            budget.apply(&mut cfg)?;
            let s = train_one(&cfg, cli.jobs, &out)?;
            println!("{}: mae_mm {:.1} artifact_ratio {:.3} stripe_score {:.3}", cfg.name, s.mae_mm, s.artifact_ratio, s.stripe_score);
        }
        Command::Eval { checkpoint, source, out } => {
            let cfg = source.load()?;
            let params = load_checkpoint(&checkpoint)?;
            let ev = evaluate(&cfg, &params, cli.jobs)?;
            write_evaluation(&out, &cfg, &ev)?;
            let s = CellScore::from_evaluation(&ev)?;
            println!("{}: mae_mm {:.1} artifact_ratio {:.3} stripe_score {:.3}", cfg.name, s.mae_mm, s.artifact_ratio, s.stripe_score);
        }
        Command::DemoPtc { budget, out } => {
            let mut scores = Vec::new();
            for cell in ptc_matrix()? {
                let mut cfg = seeded(cell.config, cli.seed);
                budget.apply(&mut cfg)?;
                let s = train_one(&cfg, cli.jobs, &out.join(&cfg.name))?;
                println!("{:<24} artifact_ratio {:.3} stripe_score {:.3}", cell.label, s.artifact_ratio, s.stripe_score);
                scores.push((cell.label, s));
            }
            write_text(&out.join("summary.csv"), &ptc_summary_csv(&scores))?;
        }
        Command::Ablate { budget, out } => {
            let base = cli.seed.unwrap_or(0);
            let seeds = [base, base + 1, base + 2];
            for suite in Suite::ALL {
                let mut mae = Vec::new();
                let mut ratio = Vec::new();
                for row in suite.rows()? {
                    let (mut m, mut r) = (Vec::new(), Vec::new());
                    for &seed in &seeds {
                        let mut cfg = with_seed(&row.config, seed);
                        budget.apply(&mut cfg)?;
                        let dir = out.join(suite.file_stem()).join(format!("{}_seed{seed}", cfg.name));
                        let s = train_one(&cfg, cli.jobs, &dir)?;
                        m.push(s.mae_mm);
                        r.push(s.artifact_ratio);
                    }
                    println!("{} {:<28} mae_mm {:?}", suite.file_stem(), row.label, m);
                    mae.push((row.label, m));
                    ratio.push((row.label, r));
                }
                let mut csv = ablation_csv("mae_mm", &seeds, &mae);
                csv.push_str(ablation_csv("artifact_ratio", &seeds, &ratio).split_once('\n').map_or("", |x| x.1));
                write_text(&out.join(format!("{}.csv", suite.file_stem())), &csv)?;
            }
        }
        Command::Presets { write } => {
            for name in experiment::PRESETS {
                println!("{name}");
                if let Some(dir) = &write {
                    write_text(&dir.join(format!("{name}.json")), &(experiment::preset(name)?.to_json() + "\n"))?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
