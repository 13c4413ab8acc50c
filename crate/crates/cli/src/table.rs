//! Success-rate tables produced by batch evaluation, in a human-readable
//! text layout and a machine-readable JSON form carrying per-cell trial
//! counts.

use serde::{Deserialize, Serialize};

use planc_core::terrain::TerrainKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub family: TerrainKind,
    pub difficulty: f64,
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    pub mean_landing_error: f64,
    pub mean_energy_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessTable {
    pub rows: Vec<TableRow>,
}

impl SuccessTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialization cannot fail") + "\n"
    }

    pub fn from_json(text: &str) -> Result<SuccessTable, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<16} {:>10} {:>7} {:>9} {:>8} {:>18} {:>17}\n",
            "family",
            "difficulty",
            "trials",
            "successes",
            "rate",
            "mean_landing_err",
            "mean_energy_err"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>10.2} {:>7} {:>9} {:>8.4} {:>18.6} {:>17.6}\n",
                r.family.name(),
                r.difficulty,
                r.trials,
                r.successes,
                r.rate,
                r.mean_landing_error,
                r.mean_energy_error,
            ));
        }
        out
    }

    pub fn rate_for(&self, family: TerrainKind, difficulty: f64) -> Option<&TableRow> {
        self.rows
            .iter()
            .find(|r| r.family == family && (r.difficulty - difficulty).abs() < 1e-12)
    }
}
