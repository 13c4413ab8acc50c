//! Command implementations for the `planc` binary.
//!
//! Exit-code contract: 0 on success, 1 when a rollout ends in a task
//! failure (miss, fall, divergence), 2 on usage or configuration errors.

// Validation deliberately uses negated comparisons (`!(x > 0.0)`) so NaN
// fails the checks too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod eval;
pub mod table;
pub mod trace;

use std::path::{Path, PathBuf};

use planc_core::sim::{evaluate_success, rollout, PlanOverridesConfig, RandomPushes};
use planc_core::terrain::{export, generate_terrain_with_width, TerrainKind};

use config::{Config, ConfigError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TASK_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] trace::TraceError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<planc_core::Error> for CliError {
    fn from(e: planc_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })
}

/// Seed resolution: explicit flag, then the `PLANC_SEED` environment
/// variable, then the fallback.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("PLANC_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("PLANC_SEED must be an integer, got `{text}`"))),
        Err(_) => Ok(fallback),
    }
}

/// Ablation and robustness flags shared by `rollout` and `eval`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunFlags {
    pub fixed_step_time: Option<f64>,
    pub fixed_impact_velocity: Option<f64>,
    pub noise: bool,
    pub disturb: bool,
}

impl RunFlags {
    fn apply(&self, cfg: &Config) -> planc_core::sim::SimConfig {
        let overrides = PlanOverridesConfig {
            fixed_step_time: self.fixed_step_time,
            fixed_impact_velocity: self.fixed_impact_velocity,
        };
        let mut sim = cfg.sim_config(&overrides);
        if self.noise {
            sim.noise.enabled = true;
        }
        // --disturb gates the seeded random pushes; the explicit schedule
        // from the config always applies.
        if self.disturb {
            sim.random_pushes = sim.random_pushes.or(Some(RandomPushes::default()));
        } else {
            sim.random_pushes = None;
        }
        sim
    }
}

pub struct TerrainArgs {
    pub kind: String,
    pub difficulty: f64,
    pub seed: Option<u64>,
    pub n_stones: usize,
    pub stone_width: f64,
    pub out: PathBuf,
    pub mesh: Option<PathBuf>,
}

/// `planc terrain`: generate a course and write the terrain document
/// (and optionally an OBJ mesh). Prints a one-line summary.
pub fn cmd_terrain(args: &TerrainArgs) -> Result<i32, CliError> {
    let kind = TerrainKind::parse(&args.kind)?;
    let seed = resolve_seed(args.seed, 0)?;
    let seq =
        generate_terrain_with_width(kind, args.difficulty, seed, args.n_stones, args.stone_width)?;
    write_file(&args.out, &export::write_document(&seq))?;
    if let Some(mesh_path) = &args.mesh {
        write_file(mesh_path, &export::write_obj_mesh(&seq))?;
    }
    // Abutting stair treads produce roundoff-negative gaps; normalize for
    // display.
    let gaps: Vec<f64> = (0..seq.stones.len() - 1)
        .map(|i| {
            let g = seq.gap(i);
            if g.abs() < 1e-12 {
                0.0
            } else {
                g
            }
        })
        .collect();
    let (gap_min, gap_max) = gaps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| {
            (lo.min(g), hi.max(g))
        });
    println!(
        "terrain {} d={} seed={}: {} stones, gaps {:.3}..{:.3} m -> {}",
        kind.name(),
        args.difficulty,
        seed,
        seq.stones.len(),
        gap_min,
        gap_max,
        args.out.display()
    );
    Ok(EXIT_OK)
}

pub struct RolloutArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub flags: RunFlags,
}

fn load_config(path: &Option<PathBuf>) -> Result<Config, CliError> {
    match path {
        Some(p) => Ok(Config::from_path(p)?),
        None => Ok(Config::default()),
    }
}

/// Build the course described by the config's terrain section, applying
/// the optional gap override by re-spacing the stones.
pub fn build_terrain(
    cfg: &Config,
    seed: u64,
) -> Result<planc_core::terrain::StoneSequence, CliError> {
    let mut seq = generate_terrain_with_width(
        cfg.terrain.kind,
        cfg.terrain.difficulty,
        seed,
        cfg.terrain.n_stones,
        cfg.terrain.stone_width,
    )?;
    if let Some(gap) = cfg.terrain.gap_override {
        let mut x = seq.stones[0].center[0];
        let mut prev_depth = seq.stones[0].depth_x;
        for stone in seq.stones.iter_mut().skip(1) {
            x += (prev_depth + stone.depth_x) / 2.0 + gap;
            prev_depth = stone.depth_x;
            stone.center[0] = x;
        }
    }
    Ok(seq)
}

/// `planc rollout`: run one closed-loop rollout and write the trace.
/// Exit status reflects the traversal outcome.
pub fn cmd_rollout(args: &RolloutArgs) -> Result<i32, CliError> {
    let cfg = load_config(&args.config)?;
    let seed = resolve_seed(args.seed, cfg.terrain.seed)?;
    let sim = args.flags.apply(&cfg);
    let seq = build_terrain(&cfg, seed)?;
    let trace = rollout(&seq, &sim, seed)?;
    let report = evaluate_success(&trace, &seq);
    if let Some(out) = &args.out {
        write_file(out, &trace::write_csv(&trace))?;
    }
    println!(
        "rollout {} d={} seed={}: {} ({} of {} stones, mean landing error {:.4} m, mean |E-E*| {:.2e})",
        cfg.terrain.kind.name(),
        cfg.terrain.difficulty,
        seed,
        trace.outcome.label(),
        report.stones_traversed,
        seq.stones.len() - 1,
        report.mean_landing_error(),
        report.mean_energy_error(cfg.planner.e_star),
    );
    if report.success {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_TASK_FAILURE)
    }
}

pub struct EvalArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub flags: RunFlags,
}

/// `planc eval`: run the evaluation grid, print the human-readable table,
/// and write the machine-readable JSON form.
pub fn cmd_eval(args: &EvalArgs) -> Result<i32, CliError> {
    let mut cfg = load_config(&args.config)?;
    cfg.terrain.seed = resolve_seed(args.seed, cfg.terrain.seed)?;
    let sim = args.flags.apply(&cfg);
    let jobs = args.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let table = eval::run_eval(&cfg, &sim, jobs);
    print!("{}", table.to_text());
    if let Some(out) = &args.out {
        write_file(out, &table.to_json())?;
    }
    Ok(EXIT_OK)
}

pub struct ExportArgs {
    pub input: PathBuf,
    pub format: String,
    pub out: PathBuf,
}

/// `planc export`: convert a trace between the columnar text format and
/// the structured JSON form, losslessly.
pub fn cmd_export(args: &ExportArgs) -> Result<i32, CliError> {
    let text = read_file(&args.input)?;
    let converted = match args.format.as_str() {
        "json" => {
            let rows = trace::parse_csv(&text)?;
            trace::rows_to_json(&rows)
        }
        "csv" => {
            let rows = trace::rows_from_json(&text)?;
            trace::rows_to_csv(&rows)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown export format `{other}`; expected `csv` or `json`"
            )))
        }
    };
    write_file(&args.out, &converted)?;
    println!(
        "exported {} -> {} ({})",
        args.input.display(),
        args.out.display(),
        args.format
    );
    Ok(EXIT_OK)
}
