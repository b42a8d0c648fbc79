use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dada::cli::{self, ExperimentConfig, Overrides};
use dada::networks::Preset;
use dada::Error;

#[derive(Parser)]
#[command(name = "dada", version, about = "Cross-device super-resolution with dual adversarial adaptation")]
struct Args {
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Output directory; overrides `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Capacity preset; replaces `train.arch`.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic cameras into domain directories.
    PrepareData,
    /// Train the source model; with --baselines also Source-Only and Target-Only.
    Pretrain {
        #[arg(long)]
        baselines: bool,
    },
    /// Run the adaptation loop for every ablation row.
    TrainDada {
        /// Continue from each row's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Score checkpoints on every test domain.
    Eval {
        /// `name=path`; repeatable. Defaults to every checkpoint under the output directory.
        #[arg(long = "model", value_parser = parse_model)]
        models: Vec<(String, PathBuf)>,
    },
    /// Estimate blur kernels, for one pair or for the target test set.
    EstimateKernel {
        #[arg(long, requires = "lr")]
        hr: Option<PathBuf>,
        #[arg(long, requires = "hr")]
        lr: Option<PathBuf>,
        #[arg(long = "model", value_parser = parse_model)]
        models: Vec<(String, PathBuf)>,
    },
    /// Write loss curves, difference maps, kernel heatmaps and the cross-device matrix.
    Plot,
}

fn parse_model(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected name=path, got `{s}`"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected name=path, got `{s}`"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn run(args: Args) -> dada::Result<()> {
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        preset: args.preset,
    };
    let cfg = ExperimentConfig::load(&args.config, &overrides)?;
    match args.command {
        Command::PrepareData => {
            let m = cli::prepare_data(&cfg)?;
            println!("{} domains, {} train / {} test images", m.cameras.len(), m.train_ids.len(), m.test_ids.len());
        }
        Command::Pretrain { baselines } => {
            cli::pretrain(&cfg, baselines)?;
            println!("wrote {}", cfg.out.display());
        }
        Command::TrainDada { resume } => {
            for (row, o) in cli::train_dada(&cfg, resume)? {
                match o.evaluation {
                    Some(r) => println!("{row}: psnr_y {:.3} ssim {:.4}", r.psnr_y, r.ssim),
                    None => println!("{row}: finished at iteration {}", o.trainer.iteration),
                }
            }
        }
        Command::Eval { models } => {
            let m = cli::eval(&cfg, &models)?;
            for (r, row) in m.rows.iter().zip(m.psnr_grid()) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
                println!("{r}: {}", cells.join(" "));
            }
        }
        Command::EstimateKernel { hr, lr, models } => match (hr, lr) {
            (Some(hr), Some(lr)) => {
                cli::estimate_pair(&cfg, &hr, &lr)?;
            }
            _ => {
                let report = cli::estimate_kernels(&cfg, &models)?;
                for r in &report.records {
                    let d = r.distance.map_or("-".to_string(), |d| format!("{d:.5}"));
                    println!("{} {}: distance {d}", r.image, r.from);
                }
            }
        },
        Command::Plot => {
            let f = cli::plot(&cfg)?;
            let n = f.loss_curves.len() + f.difference_maps.len() + f.kernel_heatmaps.len() + f.matrices.len();
            println!("wrote {n} plots");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => 2,
                Error::NonFinite { .. } => 3,
                _ => 1,
            })
        }
    }
}
