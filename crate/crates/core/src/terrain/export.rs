//! Terrain file formats: a TOML document describing the course and a
//! Wavefront OBJ mesh for visualization.
//!
//! Document schema (all lengths in meters):
//!
//! ```toml
//! kind = "flat_stones"         # terrain family
//! seed = 42                    # generator seed
//! difficulty = 0.5             # d in [0, 1]
//! platform_drop = 0.62         # pit depth below the lowest stone top
//!
//! [[stones]]
//! center = [0.0, 0.0, 0.0]     # top-of-stone center, world frame
//! depth_x = 0.21               # extent along travel
//! width_y = 0.4                # lateral extent
//! block_height = 1.1           # vertical extent of the supporting block
//! ```

use serde::{Deserialize, Serialize};

use super::{Stone, StoneSequence, TerrainKind};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerrainDoc {
    kind: TerrainKind,
    seed: u64,
    difficulty: f64,
    platform_drop: f64,
    stones: Vec<Stone>,
}

/// Serialize a stone sequence to the TOML terrain document.
pub fn write_document(seq: &StoneSequence) -> String {
    let doc = TerrainDoc {
        kind: seq.kind,
        seed: seq.seed,
        difficulty: seq.difficulty,
        platform_drop: seq.platform_drop,
        stones: seq.stones.clone(),
    };
    toml::to_string(&doc).expect("terrain document serialization cannot fail")
}

/// Parse a terrain document back into a stone sequence.
pub fn parse_document(text: &str) -> Result<StoneSequence> {
    let doc: TerrainDoc =
        toml::from_str(text).map_err(|e| Error::invalid("terrain document", e.to_string()))?;
    let seq = StoneSequence {
        kind: doc.kind,
        stones: doc.stones,
        platform_drop: doc.platform_drop,
        difficulty: doc.difficulty,
        seed: doc.seed,
    };
    seq.check_invariants()?;
    Ok(seq)
}

/// Export the course as a Wavefront OBJ triangle mesh: one box per stone
/// (from the top down to the pit floor level minus the block) plus a floor
/// quad spanning the course.
pub fn write_obj_mesh(seq: &StoneSequence) -> String {
    let mut out = String::from("# stepping-stone terrain mesh\n");
    let mut n_verts = 0usize;
    let mut boxes = Vec::new();
    for s in &seq.stones {
        let hx = s.depth_x / 2.0;
        let hy = s.width_y / 2.0;
        let top = s.top();
        let bottom = top - s.block_height;
        boxes.push((
            [s.center[0] - hx, s.center[1] - hy, bottom],
            [s.center[0] + hx, s.center[1] + hy, top],
        ));
    }
    // Floor quad with a margin around the course.
    let first = &seq.stones[0];
    let last = &seq.stones[seq.stones.len() - 1];
    let floor = seq.floor_height();
    let margin = 1.0;
    boxes.push((
        [first.center[0] - margin, -2.0, floor - 0.02],
        [last.center[0] + margin, 2.0, floor],
    ));

    let mut faces = String::new();
    for (lo, hi) in boxes {
        let verts = [
            [lo[0], lo[1], lo[2]],
            [hi[0], lo[1], lo[2]],
            [hi[0], hi[1], lo[2]],
            [lo[0], hi[1], lo[2]],
            [lo[0], lo[1], hi[2]],
            [hi[0], lo[1], hi[2]],
            [hi[0], hi[1], hi[2]],
            [lo[0], hi[1], hi[2]],
        ];
        for v in verts {
            out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        // Two triangles per box face, 1-based vertex indices.
        const QUADS: [[usize; 4]; 6] = [
            [0, 1, 2, 3], // bottom
            [4, 7, 6, 5], // top
            [0, 4, 5, 1],
            [1, 5, 6, 2],
            [2, 6, 7, 3],
            [3, 7, 4, 0],
        ];
        for q in QUADS {
            let i = |k: usize| n_verts + q[k] + 1;
            faces.push_str(&format!("f {} {} {}\n", i(0), i(1), i(2)));
            faces.push_str(&format!("f {} {} {}\n", i(0), i(2), i(3)));
        }
        n_verts += 8;
    }
    out.push_str(&faces);
    out
}
