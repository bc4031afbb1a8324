//! `nearfocus` command-line entry point.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nearfocus::harness::{figures, output, NoiseMode, ScenarioConfig};
use nearfocus::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "nearfocus", version, about = "Near-field MUSIC localization and beam-focusing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form two-antenna distance histograms and Gamma fits.
    Fig1(Common),
    /// Distance-estimate variance versus distance and the quartic fit.
    Fig2(Common),
    /// Three-antenna, two-user spectrum denominator versus distance.
    Fig3(Common),
    /// Sum-SE versus SNR for every strategy.
    Fig4(Common),
    /// Sum-SE versus carrier frequency (physical noise).
    Fig5(Common),
    /// Sum-SE trials for an arbitrary configuration (defaults to the fig4 preset).
    Run(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON object overriding preset fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use the full 512-element array for the sum-SE figures.
    #[arg(long)]
    paper_scale: bool,
}

fn load_config(preset: ScenarioConfig, args: &Common) -> Result<ScenarioConfig> {
    let mut cfg = if args.paper_scale { preset.paper_scale() } else { preset };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        cfg = cfg.with_overrides(&value)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run_spectrum_export(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let out = figures::run_sum_se(cfg)?;
    let x_column = match cfg.noise_mode {
        NoiseMode::Normalized => "snr_db",
        NoiseMode::Physical => "fc_hz",
    };
    let mut paths = output::write_sum_se(dir, "run", x_column, &out)?;
    if let Some(path) = nearfocus::harness::trials::write_trial_spectrum(cfg, 0, dir)? {
        paths.push(path);
    }
    Ok(paths)
}

fn execute(command: &Command) -> Result<Vec<PathBuf>> {
    let (preset, args) = match command {
        Command::Fig1(a) => (ScenarioConfig::fig1(), a),
        Command::Fig2(a) => (ScenarioConfig::fig2(), a),
        Command::Fig3(a) => (ScenarioConfig::fig3(), a),
        Command::Fig4(a) | Command::Run(a) => (ScenarioConfig::fig4(), a),
        Command::Fig5(a) => (ScenarioConfig::fig5(), a),
    };
    // Analysis figures pin their own array; --paper-scale only affects sum-SE runs.
    let preset_is_sum_se = matches!(command, Command::Fig4(_) | Command::Fig5(_) | Command::Run(_));
    let args = Common { paper_scale: args.paper_scale && preset_is_sum_se, ..args.clone() };
    let cfg = load_config(preset, &args)?;
    let dir = args.out.as_path();
    let work = || -> Result<Vec<PathBuf>> {
        match command {
            Command::Fig1(_) => output::write_fig1(dir, &figures::run_fig1(&cfg)?),
            Command::Fig2(_) => output::write_fig2(dir, &figures::run_fig2(&cfg)?),
            Command::Fig3(_) => output::write_fig3(dir, &figures::run_fig3(&cfg)?),
            Command::Fig4(_) => output::write_fig4(dir, &figures::run_fig4(&cfg)?),
            Command::Fig5(_) => output::write_fig5(dir, &figures::run_fig5(&cfg)?),
            Command::Run(_) => run_spectrum_export(&cfg, dir),
        }
    };
    match args.threads {
        Some(0) => Err(Error::InvalidParameter("--threads must be >= 1".into())),
        Some(n) => nearfocus::harness::trials::thread_pool(n)?.install(work),
        None => work(),
    }
}


fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(paths) => {
            report(&paths);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
