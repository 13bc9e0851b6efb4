use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldct::fbp::RampFilter;
use ldct::pipeline::{cmd_evaluate, cmd_phantom, cmd_reconstruct, cmd_simulate, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "ldct", version, about = "Low-dose CT dataset simulation, reconstruction and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate observations for every slice of the input directory.
    Simulate(Flags),
    /// Filtered back-projection of every observation of a part.
    Reconstruct(Flags),
    /// PSNR/SSIM of reconstructions against ground truth.
    Evaluate {
        #[command(flatten)]
        flags: Flags,
        /// Directory with reconstruction shards (default: the input directory).
        #[arg(long)]
        reconstructions: Option<PathBuf>,
    },
    /// Write the Shepp-Logan phantom and its sinogram.
    Phantom(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    part: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n0: Option<f64>,
    #[arg(long)]
    min_photons: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    filter: Option<RampFilter>,
}

impl Flags {
    fn config(self) -> ldct::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(base.apply(Overrides {
            input: self.input,
            output: self.output,
            part: self.part,
            seed: self.seed,
            n0: self.n0,
            min_photons: self.min_photons,
            sigma: self.sigma,
            workers: self.workers,
            filter: self.filter,
        }))
    }
}

fn run(cli: Cli) -> ldct::Result<()> {
    match cli.command {
        Command::Simulate(flags) => {
            let m = cmd_simulate(&flags.config()?)?;
            println!("{} samples in {} shards", m.count, m.shards.len());
        }
        Command::Reconstruct(flags) => {
            let m = cmd_reconstruct(&flags.config()?)?;
            println!("{} reconstructions in {} shards", m.count, m.shards.len());
        }
        Command::Evaluate { flags, reconstructions } => {
            let mut config = flags.config()?;
            config.reconstructions = reconstructions.or(config.reconstructions);
            let report = cmd_evaluate(&config)?;
            match (report.mean_psnr(), report.mean_ssim()) {
                (Some(p), Some(s)) => println!("mean PSNR {p:.2} dB, mean SSIM {s:.3}"),
                _ => println!("no samples"),
            }
        }
        Command::Phantom(flags) => {
            let out = cmd_phantom(&flags.config()?)?;
            println!("{}", out.phantom_png.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
