use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cfgpilot::config::{ActorKind, RunConfig};
use cfgpilot_cli::{commands, Settings};
use clap::{Args, Parser, Subcommand};

/// Learned classifier-free guidance control for a toy diffusion sampler.
#[derive(Parser, Debug)]
#[command(name = "cfgpilot", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true, env = "CFGPILOT_OUT")]
    out: Option<PathBuf>,
    /// Rollout worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    actor: Option<ActorKind>,
    /// Per-epoch and per-iteration progress on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the shape dataset.
    GenData,
    TrainDenoiser,
    TrainClassifier,
    /// Train the guidance controller with PPO.
    TrainController,
    /// Generate images and guidance traces.
    Sample {
        /// Number of images; overrides the configuration.
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated class labels to cycle through.
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<usize>>,
        #[arg(long)]
        png: bool,
    },
    /// Score the samples of one controller.
    Evaluate,
    /// Merge evaluation CSVs into a comparison table.
    Report {
        /// Eval CSVs; defaults to every CSV under the eval directory.
        inputs: Vec<PathBuf>,
    },
}

fn settings(common: &Common) -> Result<Settings> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if let Some(actor) = common.actor {
        config.actor = actor;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    let mut s = Settings::new(config.clone(), config.out_dir);
    s.verbose = common.verbose;
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    let mut s = settings(&cli.common)?;
    match cli.command {
        Command::GenData => {
            let d = commands::gen_data(&s)?;
            println!("wrote {} images {:?} to {}", d.count, d.class_counts, d.dir.display());
        }
        Command::TrainDenoiser => {
            let d = commands::train_denoiser(&s)?;
            println!(
                "denoiser: {} epochs, validation loss {:.5} -> {:.5}, saved {}",
                d.epochs,
                d.initial_val_loss,
                d.final_val_loss,
                d.checkpoint.display()
            );
        }
        Command::TrainClassifier => {
            let c = commands::train_classifier(&s)?;
            println!("classifier: {} epochs, saved {}", c.epochs, c.checkpoint.display());
            println!("classifier: test_accuracy={:.4}", c.test_accuracy);
        }
        Command::TrainController => {
            let c = commands::train_controller(&s)?;
            let o = &c.outcome;
            println!(
                "{} controller: {} iterations, best mean reward {:.5} at iteration {}, saved {}",
                s.config.actor,
                o.log.len(),
                o.best_reward,
                o.best_iteration,
                c.dir.display()
            );
        }
        Command::Sample { n, labels, png } => {
            if let Some(n) = n {
                s.config.sample.n = n;
            }
            if let Some(labels) = labels {
                s.config.sample.labels = labels;
            }
            s.config.sample.png |= png;
            s.config.validate()?;
            let r = commands::sample(&s)?;
            println!(
                "{} samples in {}: mean episodic reward {:.5}, proxy accuracy {:.4}",
                r.count,
                r.dir.display(),
                r.mean_reward,
                r.accuracy
            );
        }
        Command::Evaluate => {
            let e = commands::evaluate(&s)?;
            let r = &e.row;
            println!(
                "{}: psnr {:.4}±{:.4} ssim {:.4}±{:.4} lpips {:.4}±{:.4} params {} accuracy {:.4}; wrote {}",
                r.model,
                r.psnr_mean,
                r.psnr_std,
                r.ssim_mean,
                r.ssim_std,
                r.lpips_mean,
                r.lpips_std,
                r.params,
                r.accuracy,
                e.csv.display()
            );
        }
        Command::Report { inputs } => {
            let r = commands::report(&s, &inputs)?;
            print!("{}", r.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
