//! Procedural stepping-stone terrain.
//!
//! Four families (upstairs, downstairs, flat stones, height-varying stones)
//! are generated from a difficulty index `d in [0, 1]` that widens the
//! sampling ranges: gaps grow from 0.3 m toward 0.7 m, height offsets expand
//! symmetrically up to +/-0.2 m, and stair rises up to 0.2 m. The supporting
//! platform sits a randomized drop below the stone tops. A monotonic,
//! success-gated curriculum maps ten discrete levels onto the difficulty
//! axis.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub mod export;

/// Terrain family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Upstairs,
    Downstairs,
    FlatStones,
    HeightVarying,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 4] = [
        TerrainKind::Upstairs,
        TerrainKind::Downstairs,
        TerrainKind::FlatStones,
        TerrainKind::HeightVarying,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TerrainKind::Upstairs => "upstairs",
            TerrainKind::Downstairs => "downstairs",
            TerrainKind::FlatStones => "flat_stones",
            TerrainKind::HeightVarying => "height_varying",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        TerrainKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                Error::invalid(
                    "kind",
                    format!(
                        "unknown terrain family `{name}`; expected one of upstairs, downstairs, flat_stones, height_varying"
                    ),
                )
            })
    }
}

/// One foothold: a box-shaped pillar whose top carries the foot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stone {
    /// Top-of-stone center, world coordinates (m).
    pub center: [f64; 3],
    /// Extent along the travel direction (m).
    pub depth_x: f64,
    /// Lateral extent (m).
    pub width_y: f64,
    /// Vertical extent of the supporting block below the top (m).
    pub block_height: f64,
}

impl Stone {
    /// Height of the walking surface.
    pub fn top(&self) -> f64 {
        self.center[2]
    }

    pub fn center_xy(&self) -> [f64; 2] {
        [self.center[0], self.center[1]]
    }

    /// Closed-boundary containment test: landing exactly on the edge
    /// counts as on-stone.
    pub fn contains(&self, point_xy: [f64; 2]) -> bool {
        (point_xy[0] - self.center[0]).abs() <= self.depth_x / 2.0
            && (point_xy[1] - self.center[1]).abs() <= self.width_y / 2.0
    }
}

/// An ordered stepping-stone course.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoneSequence {
    pub kind: TerrainKind,
    pub stones: Vec<Stone>,
    /// Pit depth below the lowest stone top (m).
    pub platform_drop: f64,
    pub difficulty: f64,
    pub seed: u64,
}

impl StoneSequence {
    /// Edge-to-edge gap between consecutive stones.
    pub fn gap(&self, i: usize) -> f64 {
        let a = &self.stones[i];
        let b = &self.stones[i + 1];
        b.center[0] - a.center[0] - (a.depth_x + b.depth_x) / 2.0
    }

    /// Height of the pit floor.
    pub fn floor_height(&self) -> f64 {
        let min_top = self
            .stones
            .iter()
            .map(Stone::top)
            .fold(f64::INFINITY, f64::min);
        min_top - self.platform_drop
    }

    /// Terrain surface height at a world point: the highest containing
    /// stone top, or the pit floor.
    pub fn surface_height(&self, point_xy: [f64; 2]) -> f64 {
        self.stones
            .iter()
            .filter(|s| s.contains(point_xy))
            .map(Stone::top)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(self.floor_height())
    }

    /// Structural checks used by generator tests.
    pub fn check_invariants(&self) -> Result<()> {
        if self.stones.len() < 2 {
            return Err(Error::invalid("stones", "need at least two stones"));
        }
        for (i, s) in self.stones.iter().enumerate() {
            if s.depth_x <= 0.0 || s.width_y <= 0.0 || s.block_height <= 0.0 {
                return Err(Error::invalid(
                    "stones",
                    format!("stone {i} has nonpositive extent"),
                ));
            }
        }
        for i in 0..self.stones.len() - 1 {
            if self.stones[i + 1].center[0] <= self.stones[i].center[0] {
                return Err(Error::invalid(
                    "stones",
                    format!("centers not increasing at {i}"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.platform_drop) {
            return Err(Error::invalid("platform_drop", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One draw of the difficulty-indexed parameter set. Uniform on
/// `lo + u * (hi - lo)` with `u in [0, 1)`, so degenerate ranges collapse
/// exactly to their lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainSample {
    /// Sagittal edge-to-edge gap, `[0.3, 0.3 + 0.4 d]` (m).
    pub gap: f64,
    /// Per-stone vertical offset, `[-0.2 d, 0.2 d]` (m).
    pub height_variation: f64,
    /// Stone extent along travel, `[0.13, 0.3]` (m).
    pub stone_depth: f64,
    /// Stone block vertical extent, `[0.75, 1.25]` (m).
    pub block_height: f64,
    /// Stair tread depth, `[0.2, 0.3]` (m).
    pub stair_depth: f64,
    /// Absolute stair rise, `[0, 0.2 d]` (m).
    pub stair_rise: f64,
    /// Pit depth below the stone tops, `[0, 1]` (m).
    pub platform_drop: f64,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

/// Draw one parameter set for the given family and difficulty.
pub fn sample_params(kind: TerrainKind, d: f64, rng: &mut ChaCha8Rng) -> Result<TerrainSample> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::invalid(
            "difficulty",
            format!("must lie in [0, 1], got {d}"),
        ));
    }
    let _ = kind; // all families share the parameter list; usage differs
    Ok(TerrainSample {
        gap: uniform(rng, 0.3, 0.3 + 0.4 * d),
        height_variation: uniform(rng, -0.2 * d, 0.2 * d),
        stone_depth: uniform(rng, 0.13, 0.3),
        block_height: uniform(rng, 0.75, 1.25),
        stair_depth: uniform(rng, 0.2, 0.3),
        stair_rise: uniform(rng, 0.0, 0.2 * d),
        platform_drop: uniform(rng, 0.0, 1.0),
    })
}

/// Default lateral stone width (m); the parameter list never fixes one.
pub const DEFAULT_STONE_WIDTH: f64 = 0.4;

/// Generate a course of `n_stones` footholds.
///
/// Stones are placed left to right along `+x`, centered on the travel
/// line. Flat stones share a single top height; height-varying stones add
/// per-stone offsets; stairs abut (zero gap) at the sampled tread depth
/// with monotone rises or drops.
pub fn generate_terrain(
    kind: TerrainKind,
    d: f64,
    seed: u64,
    n_stones: usize,
) -> Result<StoneSequence> {
    generate_terrain_with_width(kind, d, seed, n_stones, DEFAULT_STONE_WIDTH)
}

pub fn generate_terrain_with_width(
    kind: TerrainKind,
    d: f64,
    seed: u64,
    n_stones: usize,
    stone_width: f64,
) -> Result<StoneSequence> {
    if n_stones < 2 {
        return Err(Error::invalid("n_stones", "need at least two stones"));
    }
    if !(stone_width > 0.0) {
        return Err(Error::invalid("stone_width", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let platform_drop = sample_params(kind, d, &mut rng)?.platform_drop;

    let mut stones = Vec::with_capacity(n_stones);
    let mut x = 0.0;
    let mut top = 0.0;
    let mut prev_depth = 0.0;
    for i in 0..n_stones {
        let s = sample_params(kind, d, &mut rng)?;
        let depth = match kind {
            TerrainKind::Upstairs | TerrainKind::Downstairs => s.stair_depth,
            _ => s.stone_depth,
        };
        if i > 0 {
            let gap = match kind {
                // Stair treads abut: center spacing is the mean tread depth.
                TerrainKind::Upstairs | TerrainKind::Downstairs => 0.0,
                _ => s.gap,
            };
            x += (prev_depth + depth) / 2.0 + gap;
            top = match kind {
                TerrainKind::FlatStones => 0.0,
                TerrainKind::HeightVarying => s.height_variation,
                TerrainKind::Upstairs => top + s.stair_rise,
                TerrainKind::Downstairs => top - s.stair_rise,
            };
        } else {
            top = 0.0;
        }
        stones.push(Stone {
            center: [x, 0.0, top],
            depth_x: depth,
            width_y: stone_width,
            block_height: s.block_height,
        });
        prev_depth = depth;
    }

    let seq = StoneSequence {
        kind,
        stones,
        platform_drop,
        difficulty: d,
        seed,
    };
    seq.check_invariants()?;
    Ok(seq)
}

/// Local heightmap: an 11x11 grid of point-sampled surface heights covering
/// 1 m x 1 m at 0.1 m spacing (inclusive endpoints), centered on a query
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    /// World position of the grid's `[0][0]` sample.
    pub origin: [f64; 2],
    pub spacing: f64,
    /// `values[ix][iy]` is the height at `origin + (ix, iy) * spacing`.
    pub values: [[f64; 11]; 11],
}

pub fn heightmap(seq: &StoneSequence, center_xy: [f64; 2]) -> Heightmap {
    let spacing = 0.1;
    let origin = [center_xy[0] - 0.5, center_xy[1] - 0.5];
    let mut values = [[0.0; 11]; 11];
    for (ix, row) in values.iter_mut().enumerate() {
        for (iy, v) in row.iter_mut().enumerate() {
            let p = [
                origin[0] + ix as f64 * spacing,
                origin[1] + iy as f64 * spacing,
            ];
            *v = seq.surface_height(p);
        }
    }
    Heightmap {
        origin,
        spacing,
        values,
    }
}

/// Per-environment difficulty progression: ten levels, advancing only
/// after three consecutive successes, never regressing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub level: u8,
    pub consecutive_successes: u8,
}

pub const CURRICULUM_LEVELS: u8 = 10;
const ADVANCE_STREAK: u8 = 3;

impl CurriculumState {
    pub fn new() -> Self {
        Self {
            level: 0,
            consecutive_successes: 0,
        }
    }

    /// Difficulty index for this level: `d = level / 9`.
    pub fn difficulty(&self) -> f64 {
        f64::from(self.level) / f64::from(CURRICULUM_LEVELS - 1)
    }

    pub fn update(self, success: bool) -> CurriculumState {
        if !success {
            return CurriculumState {
                level: self.level,
                consecutive_successes: 0,
            };
        }
        let streak = self.consecutive_successes + 1;
        if streak >= ADVANCE_STREAK {
            CurriculumState {
                level: (self.level + 1).min(CURRICULUM_LEVELS - 1),
                consecutive_successes: 0,
            }
        } else {
            CurriculumState {
                level: self.level,
                consecutive_successes: streak,
            }
        }
    }
}

impl Default for CurriculumState {
    fn default() -> Self {
        Self::new()
    }
}

/// Functional form of [`CurriculumState::update`].
pub fn curriculum_update(state: CurriculumState, success: bool) -> CurriculumState {
    state.update(success)
}

/// Geometry of one step along the virtual slope connecting two stone
/// top-centers: horizontal distance, height difference, and heading.
pub fn virtual_slope(stance: &Stone, next: &Stone) -> (f64, f64, f64) {
    let dx = next.center[0] - stance.center[0];
    let dy = next.center[1] - stance.center[1];
    let l_des = (dx * dx + dy * dy).sqrt();
    let h_des = next.top() - stance.top();
    let heading = dy.atan2(dx);
    (l_des, h_des, heading)
}

/// Convenience: stone top center as a vector.
pub fn stone_top(stone: &Stone) -> Vector3<f64> {
    Vector3::new(stone.center[0], stone.center[1], stone.center[2])
}
