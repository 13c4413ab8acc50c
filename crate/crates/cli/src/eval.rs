//! Batch evaluation: seeds x families x difficulties rollouts with a
//! bounded worker pool and order-independent aggregation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use planc_core::sim::{evaluate_success, rollout, SimConfig};
use planc_core::terrain::TerrainKind;

use crate::build_terrain;
use crate::config::Config;
use crate::table::{SuccessTable, TableRow};

/// Accumulated per-cell statistics; merging is commutative and
/// associative, so worker scheduling cannot affect the table.
#[derive(Debug, Clone, Copy, Default)]
struct CellAccum {
    trials: u64,
    successes: u64,
    landing_err_sum: f64,
    landing_err_count: u64,
    energy_err_sum: f64,
    energy_err_count: u64,
}

impl CellAccum {
    fn merge(&mut self, other: &CellAccum) {
        self.trials += other.trials;
        self.successes += other.successes;
        self.landing_err_sum += other.landing_err_sum;
        self.landing_err_count += other.landing_err_count;
        self.energy_err_sum += other.energy_err_sum;
        self.energy_err_count += other.energy_err_count;
    }
}

fn run_trial(
    cfg: &Config,
    sim: &SimConfig,
    kind: TerrainKind,
    difficulty: f64,
    seed: u64,
) -> CellAccum {
    let mut cell_cfg = cfg.clone();
    cell_cfg.terrain.kind = kind;
    cell_cfg.terrain.difficulty = difficulty;
    let seq = build_terrain(&cell_cfg, seed).expect("validated terrain parameters");
    let trace = rollout(&seq, sim, seed).expect("validated sim config");
    let report = evaluate_success(&trace, &seq);
    let mut acc = CellAccum {
        trials: 1,
        ..Default::default()
    };
    if report.success {
        acc.successes = 1;
    }
    for err in &report.landing_errors {
        acc.landing_err_sum += err;
        acc.landing_err_count += 1;
    }
    for (i, e) in report.post_impact_energies.iter().enumerate() {
        if i >= 1 {
            acc.energy_err_sum += (e - cfg.planner.e_star).abs();
            acc.energy_err_count += 1;
        }
    }
    acc
}

/// Run the evaluation grid from the config. Trials use seeds
/// `terrain.seed + k` for `k` in `0..seeds_per_cell`, identical in every
/// cell. `jobs = 1` runs inline; larger values fan trials across threads.
pub fn run_eval(cfg: &Config, sim: &SimConfig, jobs: usize) -> SuccessTable {
    let cells: Vec<(TerrainKind, f64)> = cfg
        .eval
        .families
        .iter()
        .flat_map(|&f| cfg.eval.difficulties.iter().map(move |&d| (f, d)))
        .collect();
    let trials: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.eval.seeds_per_cell).map(move |k| (c, cfg.terrain.seed + k)))
        .collect();

    // One result slot per trial; the final reduction walks the slots in
    // trial order, so the table is bit-identical for any worker count or
    // scheduling (float addition is not associative).
    let results = Mutex::new(vec![CellAccum::default(); trials.len()]);
    let cursor = AtomicUsize::new(0);
    let workers = jobs.max(1).min(trials.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= trials.len() {
                    break;
                }
                let (cell, seed) = trials[i];
                let (kind, difficulty) = cells[cell];
                let acc = run_trial(cfg, sim, kind, difficulty, seed);
                results.lock().unwrap()[i] = acc;
            });
        }
    });

    let results = results.into_inner().unwrap();
    let mut accums = vec![CellAccum::default(); cells.len()];
    for (&(cell, _), acc) in trials.iter().zip(results.iter()) {
        accums[cell].merge(acc);
    }
    let rows = cells
        .iter()
        .zip(accums.iter())
        .map(|(&(family, difficulty), acc)| TableRow {
            family,
            difficulty,
            trials: acc.trials,
            successes: acc.successes,
            rate: acc.successes as f64 / acc.trials.max(1) as f64,
            mean_landing_error: if acc.landing_err_count > 0 {
                acc.landing_err_sum / acc.landing_err_count as f64
            } else {
                0.0
            },
            mean_energy_error: if acc.energy_err_count > 0 {
                acc.energy_err_sum / acc.energy_err_count as f64
            } else {
                0.0
            },
        })
        .collect();
    SuccessTable { rows }
}

/// One-sided two-proportion z test: returns the z statistic for
/// `rate_a > rate_b` under the pooled null. Values above 1.645 reject the
/// null at 95% confidence.
pub fn two_proportion_z(successes_a: u64, n_a: u64, successes_b: u64, n_b: u64) -> f64 {
    let pa = successes_a as f64 / n_a as f64;
    let pb = successes_b as f64 / n_b as f64;
    let pooled = (successes_a + successes_b) as f64 / (n_a + n_b) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        if pa > pb {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        (pa - pb) / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use planc_core::sim::PlanOverridesConfig;

    fn small_config() -> Config {
        let mut cfg = Config::default();
        cfg.eval.families = vec![TerrainKind::FlatStones, TerrainKind::Upstairs];
        cfg.eval.difficulties = vec![0.3];
        cfg.eval.seeds_per_cell = 8;
        cfg.terrain.n_stones = 8;
        cfg
    }

    #[test]
    fn eval_is_deterministic_and_job_count_independent() {
        let cfg = small_config();
        let sim = cfg.sim_config(&PlanOverridesConfig::default());
        let serial = run_eval(&cfg, &sim, 1);
        let parallel = run_eval(&cfg, &sim, 4);
        assert_eq!(serial, parallel);
        assert_eq!(serial.rows.len(), 2);
        for row in &serial.rows {
            assert_eq!(row.trials, 8);
            assert_eq!(row.rate, 1.0);
        }
    }

    #[test]
    fn z_statistic_behaves() {
        assert!(two_proportion_z(95, 100, 60, 100) > 1.645);
        assert!(two_proportion_z(50, 100, 50, 100).abs() < 1e-12);
        assert_eq!(two_proportion_z(100, 100, 100, 100), 0.0);
    }
}
