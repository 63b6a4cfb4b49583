//! Command-line front end: experiment sweeps, channel-file utilities, and
//! the oracle self-test suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uwbsim::channels::{load_cir_taps, save_cir_file, COMPOSITE_SAMPLE_RATE_HZ};
use uwbsim::harness::{write_outputs, ExperimentConfig};
use uwbsim::rng::{stream, Purpose};
use uwbsim::Error;

#[derive(Parser)]
#[command(name = "uwbsim", version, about = "Multiband-OFDM link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo sweep described by a config file and write
    /// metrics.csv, diagnostics.csv, and metadata.json.
    Run {
        /// Experiment config (flat JSON; `{}` selects every default).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's frames_per_point.
        #[arg(long)]
        frames: Option<usize>,
        /// Output directory (default: the config's output_path).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Channel impulse response utilities.
    Channels {
        #[command(subcommand)]
        command: ChannelsCommand,
    },
    /// Run the quick oracle-backed self checks.
    Selftest,
}

#[derive(Subcommand)]
enum ChannelsCommand {
    /// Draw one realization from the configured channel model and write
    /// its taps as a CIR text file.
    Gen {
        /// Experiment config naming the channel model.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output tap file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a summary of a CIR text file.
    Inspect {
        /// Tap file to summarize.
        file: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    frames: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    if let Some(k) = frames {
        cfg.frames_per_point = k;
    }
    cfg.validate()?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_path));
    let output = uwbsim::harness::run_experiment(&cfg)?;
    write_outputs(&out_dir, &output)?;
    println!(
        "wrote {} metric rows and {} diagnostic rows to {}",
        output.metrics.len(),
        output.diagnostics.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_channels_gen(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), Error> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let resolved = cfg.resolve()?;
    let mut rng = stream(cfg.rng_seed, 0, 0, Purpose::Channel);
    let ch = resolved.model.draw(&resolved.op, &mut rng)?;
    save_cir_file(out, &ch.h_time)?;
    println!(
        "wrote {} taps ({}) to {}",
        ch.h_time.len(),
        ch.model_tag.as_str(),
        out.display()
    );
    Ok(())
}

fn cmd_channels_inspect(file: &Path) -> Result<(), Error> {
    let taps = load_cir_taps(file)?;
    let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    let (peak_idx, peak) = taps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .expect("loader rejects empty files");
    // Delay spread as the RMS of tap delay weighted by normalized power.
    let mean_delay: f64 =
        taps.iter().enumerate().map(|(l, t)| l as f64 * t.norm_sqr()).sum::<f64>() / energy;
    let rms_spread: f64 = (taps
        .iter()
        .enumerate()
        .map(|(l, t)| (l as f64 - mean_delay).powi(2) * t.norm_sqr())
        .sum::<f64>()
        / energy)
        .sqrt();
    let ns_per_tap = 1e9 / COMPOSITE_SAMPLE_RATE_HZ;
    println!("taps: {}", taps.len());
    println!("energy: {energy:.6}");
    println!("peak tap: {} (|h| = {:.6})", peak_idx, peak.norm());
    println!("mean excess delay: {:.3} ns", mean_delay * ns_per_tap);
    println!("rms delay spread: {:.3} ns", rms_spread * ns_per_tap);
    Ok(())
}

fn cmd_selftest() -> Result<(), Error> {
    let reports = uwbsim::selftest::run_quick_checks();
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed { "ok" } else { "FAIL" };
        println!("{status:4} {} — {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} self checks failed")));
    }
    println!("all {} checks passed", reports.len());
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err.category() {
        "config-invalid" => 2,
        "io" => 3,
        "channel-file" => 4,
        _ => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, frames, out } => cmd_run(&config, seed, frames, out),
        Command::Channels { command } => match command {
            ChannelsCommand::Gen { config, seed, out } => cmd_channels_gen(&config, seed, &out),
            ChannelsCommand::Inspect { file } => cmd_channels_inspect(&file),
        },
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}: {err}", err.category());
            ExitCode::from(exit_code_for(&err))
        }
    }
}
