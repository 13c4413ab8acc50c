use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use planc_cli::{
    cmd_eval, cmd_export, cmd_rollout, cmd_terrain, EvalArgs, ExportArgs, RolloutArgs, RunFlags,
    TerrainArgs, EXIT_USAGE,
};

/// Reduced-order stepping-stone walking: terrain generation, closed-loop
/// rollouts, batch evaluation, and trace export.
#[derive(Parser)]
#[command(name = "planc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy, Default)]
struct AblationFlags {
    /// Pin the step duration (s) instead of the analytic timing inversion.
    #[arg(long = "fixed-T", value_name = "SECONDS")]
    fixed_t: Option<f64>,
    /// Pin the desired pre-impact vertical velocity (m/s); 0 disables
    /// momentum shaping.
    #[arg(long = "fixed-udes", value_name = "M_PER_S")]
    fixed_udes: Option<f64>,
    /// Enable landing/impact tracking noise (amplitudes from the config).
    #[arg(long)]
    noise: bool,
    /// Enable seeded random velocity pushes (parameters from the config).
    #[arg(long)]
    disturb: bool,
}

impl AblationFlags {
    fn to_run_flags(self) -> RunFlags {
        RunFlags {
            fixed_step_time: self.fixed_t,
            fixed_impact_velocity: self.fixed_udes,
            noise: self.noise,
            disturb: self.disturb,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stepping-stone course and write the terrain document.
    Terrain {
        /// Terrain family: upstairs, downstairs, flat_stones, height_varying.
        #[arg(long)]
        kind: String,
        /// Difficulty index in [0, 1].
        #[arg(long, default_value_t = 0.5)]
        difficulty: f64,
        /// Generator seed (falls back to PLANC_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of stones.
        #[arg(long, default_value_t = 20)]
        stones: usize,
        /// Lateral stone width (m).
        #[arg(long, default_value_t = 0.4)]
        width: f64,
        /// Output path for the terrain document.
        #[arg(long)]
        out: PathBuf,
        /// Optional Wavefront OBJ mesh output path.
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Run one closed-loop rollout; exit 0 on traversal success.
    Rollout {
        /// Config file (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Rollout seed (falls back to PLANC_SEED, then the config seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Trace output path (columnar text format).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: AblationFlags,
    },
    /// Run the evaluation grid and emit the success-rate table.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Base seed for every cell (falls back to PLANC_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to the available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        /// Machine-readable table output path (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: AblationFlags,
    },
    /// Convert a trace between the text format and JSON, losslessly.
    Export {
        /// Input trace file.
        #[arg(long)]
        input: PathBuf,
        /// Target format: csv or json.
        #[arg(long)]
        format: String,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Terrain {
            kind,
            difficulty,
            seed,
            stones,
            width,
            out,
            mesh,
        } => cmd_terrain(&TerrainArgs {
            kind,
            difficulty,
            seed,
            n_stones: stones,
            stone_width: width,
            out,
            mesh,
        }),
        Command::Rollout {
            config,
            seed,
            out,
            flags,
        } => cmd_rollout(&RolloutArgs {
            config,
            seed,
            out,
            flags: flags.to_run_flags(),
        }),
        Command::Eval {
            config,
            seed,
            jobs,
            out,
            flags,
        } => cmd_eval(&EvalArgs {
            config,
            seed,
            jobs,
            out,
            flags: flags.to_run_flags(),
        }),
        Command::Export { input, format, out } => cmd_export(&ExportArgs { input, format, out }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
