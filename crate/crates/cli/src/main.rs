use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use echomap::signal::RegionLabel;
use echomap_cli::commands::{self, read_manifest};
use echomap_cli::{CliResult, Overrides, PipelineConfig, Preset, RadiusSource, CONFIG_ENV};

#[derive(Parser)]
#[command(name = "echomap", version, about = "Impact-sounding inspection pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML config layered over the built-in defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    cutoff_hz: Option<f64>,
    #[arg(long, global = true)]
    fd_threshold: Option<f64>,
    #[arg(long, global = true)]
    wave_speed: Option<f64>,
    #[arg(long, global = true)]
    grid_res: Option<f64>,
    #[arg(long, global = true)]
    shell_tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    radius_source: Option<RadiusSource>,
    /// Output directory.
    #[arg(long, global = true, default_value = "echomap-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic survey: audio, poses and ground truth.
    Synth {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Detect impacts in a recording and build the FD map.
    Analyze { wav: PathBuf, poses: PathBuf },
    /// Build a labelled mel-segment dataset from a synth directory.
    Dataset { synth_dir: PathBuf },
    /// Train the joint pipe/depth model on a dataset CSV.
    Train { dataset: PathBuf },
    /// Localize subsurface targets from an analysis directory.
    Backproject {
        analysis_dir: PathBuf,
        /// Checkpoint for the model radius source.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn load(base: PipelineConfig, g: &Global, o: Overrides) -> CliResult<PipelineConfig> {
    let o = Overrides {
        seed: g.seed,
        cutoff_hz: g.cutoff_hz,
        fd_threshold: g.fd_threshold,
        wave_speed: g.wave_speed,
        grid_res: g.grid_res,
        shell_tol: g.shell_tol,
        radius_source: g.radius_source,
        ..o
    };
    PipelineConfig::load(base, g.config.as_deref(), None, &o)
}

/// Like `println!`, but a closed pipe (`echomap ... | head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    let out: &Path = &g.out;
    match cli.command {
        Command::Synth { preset } => {
            let cfg = load(PipelineConfig::default(), g, Overrides { preset, ..Overrides::default() })?;
            for p in commands::cmd_synth(&cfg, out)? {
                say!("{}", p.display());
            }
        }
        Command::Analyze { wav, poses } => {
            let cfg = load(PipelineConfig::default(), g, Overrides::default())?;
            let a = commands::cmd_analyze(&wav, &poses, &cfg, out)?;
            let subsurface = a.fd_map.iter().filter(|p| p.label == RegionLabel::SubsurfaceObject).count();
            say!(
                "{} SOIs, {} tap locations, {} labelled subsurface",
                a.soi_count(),
                a.groups.len(),
                subsurface
            );
        }
        Command::Dataset { synth_dir } => {
            let cfg = load(PipelineConfig::default(), g, Overrides::default())?;
            let n = commands::cmd_dataset(&synth_dir, &cfg, out)?;
            say!("{n} training pairs");
        }
        Command::Train { dataset } => {
            let cfg = load(PipelineConfig::default(), g, Overrides::default())?;
            let m = commands::cmd_train(&dataset, &cfg, out)?;
            say!(
                "held-out accuracy {:.4}, depth MAE {:.4} m ({} samples)",
                m.held_out.accuracy, m.held_out.depth_mae, m.held_out.samples
            );
        }
        Command::Backproject { analysis_dir, model } => {
            // The analysis settings are the starting point; file and flags
            // still override them.
            let base = read_manifest(&analysis_dir)?.config;
            let cfg = load(base, g, Overrides { model_path: model, ..Overrides::default() })?;
            let bp = commands::cmd_backproject(&analysis_dir, &cfg, out)?;
            say!("{} shells, {} targets", bp.used_groups.len(), bp.targets.len());
            for t in &bp.targets {
                say!("target {:.3} {:.3} {:.3} score {}", t.position.x, t.position.y, t.position.z, t.peak_score);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
