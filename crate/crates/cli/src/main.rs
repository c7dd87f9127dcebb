use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use odp_cli::runners::print_rows;
use odp_cli::{plot, runners, Experiment, Overrides, Scale};
use odp_core::metrics::format_db;
use odp_core::OdpError;

#[derive(Parser)]
#[command(name = "odp", version, about = "Train and evaluate unrolled optimization networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Preset scale: `paper` uses the file as written, `desk` applies its [desk] overrides
    #[arg(long, default_value = "paper")]
    scale: Scale,
    /// Override train.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override output.dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write reconstructions and comparison panels as PNG
    #[arg(long)]
    dump_images: bool,
    /// Clamp reconstructions to [0, 1] before computing PSNR
    #[arg(long)]
    psnr_clip: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and evaluate its best snapshot
    Train(Common),
    /// Evaluate a checkpoint on the configured test protocol
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate (default: <out>/checkpoint_best.odp)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Proximal gradient against the prior-only network
    Ablate(Common),
    /// Proximal gradient, ADMM, LADMM and gradient descent
    CompareAlgs(Common),
    /// Render training curves and tables as SVG
    Plot {
        #[command(flatten)]
        common: Common,
        /// Plot this CSV instead of the artifacts in the output directory
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load(c: &Common) -> odp_core::Result<Experiment> {
    let ov = Overrides {
        seed: c.seed,
        out: c.out.clone(),
        dump_images: c.dump_images,
        psnr_clip: c.psnr_clip,
    };
    Experiment::load(&c.config, c.scale, &ov)
}

fn run(cli: Cli) -> odp_core::Result<()> {
    match cli.command {
        Command::Train(c) => {
            let exp = load(&c)?;
            let m = runners::cmd_train(&exp)?;
            for r in &m.evals {
                println!("{} mean_psnr={}", r.method, format_db(r.mean_psnr));
            }
            println!("artifacts: {}", exp.out_dir.display());
        }
        Command::Eval { common, checkpoint } => {
            let exp = load(&common)?;
            for r in runners::cmd_eval(&exp, checkpoint.as_deref())? {
                let extra = r
                    .max_constraint_residual
                    .map_or(String::new(), |v| format!(" max_residual={v:.3e}"));
                println!("{} mean_psnr={}{extra}", r.method, format_db(r.mean_psnr));
            }
        }
        Command::Ablate(c) => {
            let exp = load(&c)?;
            print_rows(&format!("{} ablation", exp.config.name), &runners::cmd_ablate(&exp)?);
        }
        Command::CompareAlgs(c) => {
            let exp = load(&c)?;
            print_rows(&format!("{} algorithms", exp.config.name), &runners::cmd_compare_algs(&exp)?);
        }
        Command::Plot { common, input } => {
            let written = match input {
                Some(p) => vec![plot::plot_file(&p)?],
                None => plot::plot_dir(&load(&common)?.out_dir)?,
            };
            for p in written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &OdpError) -> u8 {
    e.exit_code() as u8
}

// glibc malloc returns the large im2col buffers to the OS after every
// layer; mimalloc keeps them around
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
