//! Operating-point enumeration, cost ranking and outage labeling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sfr::{self, GeneratingUnit, OperatingPoint, SfrError, SimConfig, UflsScheme};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no generation combination falls inside [{gen_min}, {gen_max}] MW")]
    EmptyResult { gen_min: f64, gen_max: f64 },
    #[error("combination {combo_id}, outage of `{lost_unit}`: {source}")]
    Simulation {
        combo_id: usize,
        lost_unit: String,
        source: SfrError,
    },
}

/// One dispatch of every unit on the grid. `dispatch[i]` belongs to
/// `units[i]`; 0 MW means the unit is offline.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationCombination {
    pub id: usize,
    pub dispatch: Vec<f64>,
    pub total: f64,
    pub cost: f64,
}

impl GenerationCombination {
    pub fn online(&self) -> usize {
        self.dispatch.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn operating_point(&self, units: &[GeneratingUnit], load_damping: f64) -> OperatingPoint {
        let dispatch: BTreeMap<String, f64> = units
            .iter()
            .zip(&self.dispatch)
            .filter(|(_, &p)| p > 0.0)
            .map(|(u, &p)| (u.id.clone(), p))
            .collect();
        OperatingPoint {
            dispatch,
            demand: self.total,
            load_damping,
        }
    }
}

/// One labeled outage: post-outage features and the shed load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageSample {
    /// Remaining inertia, MW·s.
    pub h: f64,
    /// Remaining weighted governor gain, MW per pu frequency.
    pub k: f64,
    /// Lost generation, MW.
    pub p: f64,
    /// Remaining headroom, MW.
    pub r: f64,
    /// Shed load, MW.
    pub y: f64,
    pub combo_id: usize,
    pub lost_unit: String,
}

impl OutageSample {
    pub fn features(&self) -> [f64; 4] {
        [self.h, self.k, self.p, self.r]
    }
}

fn grid_ticks(value: f64, step: f64) -> (i64, i64) {
    // (ceil, floor) of value/step with a small tolerance for grid values
    let q = value / step;
    ((q - 1e-9).ceil() as i64, (q + 1e-9).floor() as i64)
}

/// Dispatch grid and operating window for the enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    /// Dispatch increment, MW.
    pub step: f64,
    /// Lowest total thermal generation kept, MW.
    pub gen_min: f64,
    /// Highest total thermal generation kept, MW.
    pub gen_max: f64,
    /// Largest share of the total any single unit may carry. Operating
    /// points above it cannot ride through the loss of that unit.
    #[serde(default = "ScenarioGrid::no_share_limit")]
    pub max_unit_share: f64,
}

impl ScenarioGrid {
    pub fn new(step: f64, gen_min: f64, gen_max: f64) -> Self {
        Self {
            step,
            gen_min,
            gen_max,
            max_unit_share: 1.0,
        }
    }

    fn no_share_limit() -> f64 {
        1.0
    }
}

/// All unit on/off × grid dispatch combinations whose total lies in
/// `[gen_min, gen_max]` and where no unit exceeds `max_unit_share` of the
/// total. Output is in odometer order over `units` (first unit varies
/// slowest); ids are positions in that order.
pub fn enumerate_combinations(
    units: &[GeneratingUnit],
    grid: &ScenarioGrid,
) -> Result<Vec<GenerationCombination>, ScenarioError> {
    let ScenarioGrid {
        step,
        gen_min,
        gen_max,
        max_unit_share,
    } = *grid;
    if !(step.is_finite() && step > 0.0) {
        return Err(ScenarioError::InvalidGrid("step must be positive".into()));
    }
    if !(gen_min <= gen_max) {
        return Err(ScenarioError::InvalidGrid("gen_min must not exceed gen_max".into()));
    }
    if !(max_unit_share > 0.0 && max_unit_share <= 1.0) {
        return Err(ScenarioError::InvalidGrid("max_unit_share must lie in (0, 1]".into()));
    }
    // Per unit: offline plus every grid multiple inside [p_min, p_max].
    let options: Vec<Vec<i64>> = units
        .iter()
        .map(|u| {
            let (lo, _) = grid_ticks(u.p_min, step);
            let (_, hi) = grid_ticks(u.p_max, step);
            std::iter::once(0).chain(lo.max(1)..=hi).collect()
        })
        .collect();
    let (win_lo, _) = grid_ticks(gen_min, step);
    let (_, win_hi) = grid_ticks(gen_max, step);

    let mut combos = Vec::new();
    let mut idx = vec![0usize; units.len()];
    if units.is_empty() {
        return Err(ScenarioError::EmptyResult { gen_min, gen_max });
    }
    'outer: loop {
        let ticks: i64 = idx.iter().zip(&options).map(|(&i, o)| o[i]).sum();
        let largest = idx.iter().zip(&options).map(|(&i, o)| o[i]).max().unwrap_or(0);
        let share_ok = largest as f64 <= max_unit_share * ticks as f64 + 1e-9;
        if ticks > 0 && ticks >= win_lo && ticks <= win_hi && share_ok {
            let dispatch: Vec<f64> = idx
                .iter()
                .zip(&options)
                .map(|(&i, o)| o[i] as f64 * step)
                .collect();
            let cost = units
                .iter()
                .zip(&dispatch)
                .filter(|(_, &p)| p > 0.0)
                .map(|(u, &p)| u.cost(p))
                .sum();
            combos.push(GenerationCombination {
                id: combos.len(),
                dispatch,
                total: ticks as f64 * step,
                cost,
            });
        }
        for pos in (0..units.len()).rev() {
            idx[pos] += 1;
            if idx[pos] < options[pos].len() {
                continue 'outer;
            }
            idx[pos] = 0;
        }
        break;
    }

    if combos.is_empty() {
        return Err(ScenarioError::EmptyResult { gen_min, gen_max });
    }
    Ok(combos)
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Keeps the `keep_per_level` cheapest combinations at every total level.
/// Ties in cost go to the lexicographically smaller dispatch vector. The
/// result is ordered by level, then rank, and renumbered from 0.
pub fn rank_and_prune(
    combos: &[GenerationCombination],
    keep_per_level: usize,
) -> Vec<GenerationCombination> {
    let keep = keep_per_level.max(1);
    let mut levels: BTreeMap<u64, Vec<&GenerationCombination>> = BTreeMap::new();
    for c in combos {
        // totals are exact grid multiples, and positive, so bit order is value order
        levels.entry(c.total.to_bits()).or_default().push(c);
    }
    let mut out = Vec::new();
    for (_, mut group) in levels {
        group.sort_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then_with(|| lexicographic(&a.dispatch, &b.dispatch))
        });
        out.extend(group.into_iter().take(keep).cloned());
    }
    for (i, c) in out.iter_mut().enumerate() {
        c.id = i;
    }
    out
}

/// Identifies one outage to label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutageJob {
    pub combo_index: usize,
    pub unit_index: usize,
}

/// Every outage of an online unit in every combination, skipping
/// combinations with a single online unit. Canonical order: combination,
/// then unit.
pub fn outage_jobs(combos: &[GenerationCombination]) -> Vec<OutageJob> {
    let mut jobs = Vec::new();
    for (combo_index, c) in combos.iter().enumerate() {
        if c.online() < 2 {
            continue;
        }
        for (unit_index, &p) in c.dispatch.iter().enumerate() {
            if p > 0.0 {
                jobs.push(OutageJob {
                    combo_index,
                    unit_index,
                });
            }
        }
    }
    jobs
}

/// Labeling context shared by all outages of a run.
#[derive(Debug, Clone, Copy)]
pub struct Labeler<'a> {
    pub units: &'a [GeneratingUnit],
    pub scheme: &'a UflsScheme,
    pub sim: &'a SimConfig,
    pub load_damping: f64,
}

impl Labeler<'_> {
    pub fn label(
        &self,
        combo: &GenerationCombination,
        unit_index: usize,
    ) -> Result<OutageSample, ScenarioError> {
        let lost = &self.units[unit_index].id;
        let wrap = |source| ScenarioError::Simulation {
            combo_id: combo.id,
            lost_unit: lost.clone(),
            source,
        };
        let op = combo.operating_point(self.units, self.load_damping);
        let h = sfr::post_outage_inertia(&op, self.units, lost).map_err(wrap)?;
        let k = sfr::weighted_gain(&op, self.units, lost).map_err(wrap)?;
        let r = sfr::available_reserve(&op, self.units, lost).map_err(wrap)?;
        let sim = sfr::simulate_outage(&op, self.units, lost, self.scheme, self.sim).map_err(wrap)?;
        Ok(OutageSample {
            h,
            k,
            p: op.dispatch[lost],
            r,
            y: sim.ufls_total,
            combo_id: combo.id,
            lost_unit: lost.clone(),
        })
    }

    pub fn label_jobs(
        &self,
        combos: &[GenerationCombination],
        jobs: &[OutageJob],
        workers: usize,
    ) -> Result<Vec<OutageSample>, ScenarioError> {
        crate::par::try_map(jobs, workers, |job| {
            self.label(&combos[job.combo_index], job.unit_index)
        })
    }
}

/// Labels every outage of every combination, in canonical order.
pub fn build_dataset(
    labeler: &Labeler<'_>,
    combos: &[GenerationCombination],
    workers: usize,
) -> Result<Vec<OutageSample>, ScenarioError> {
    labeler.label_jobs(combos, &outage_jobs(combos), workers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, p_min: f64, p_max: f64) -> GeneratingUnit {
        GeneratingUnit {
            id: id.into(),
            p_min,
            p_max,
            rated: p_max + 0.5,
            h: 2.0,
            k_gov: 20.0,
            t_gov: 5.0,
            cost_a: 0.02,
            cost_b: 90.0,
            cost_c: 100.0,
        }
    }

    #[test]
    fn single_unit_grid() {
        let units = [unit("A", 2.0, 3.0)];
        let combos = enumerate_combinations(&units, &ScenarioGrid::new(0.5, 2.0, 3.0)).unwrap();
        let totals: Vec<f64> = combos.iter().map(|c| c.total).collect();
        assert_eq!(totals, vec![2.0, 2.5, 3.0]);
    }

    #[test]
    fn two_unit_grid() {
        let units = [unit("A", 2.0, 3.0), unit("B", 2.0, 3.0)];
        let combos = enumerate_combinations(&units, &ScenarioGrid::new(0.5, 4.0, 6.0)).unwrap();
        assert_eq!(combos.len(), 9);
        assert!(combos.iter().all(|c| c.online() == 2));

        let grid = ScenarioGrid {
            max_unit_share: 0.5,
            ..ScenarioGrid::new(0.5, 4.0, 6.0)
        };
        let balanced = enumerate_combinations(&units, &grid).unwrap();
        assert_eq!(balanced.len(), 3);
        assert!(balanced.iter().all(|c| c.dispatch[0] == c.dispatch[1]));
    }

    #[test]
    fn empty_window() {
        let units = [unit("A", 2.0, 3.0)];
        assert!(matches!(
            enumerate_combinations(&units, &ScenarioGrid::new(0.5, 10.0, 12.0)),
            Err(ScenarioError::EmptyResult { .. })
        ));
        assert!(enumerate_combinations(&units, &ScenarioGrid::new(0.0, 1.0, 2.0)).is_err());
    }

    fn combo(dispatch: Vec<f64>, cost: f64) -> GenerationCombination {
        GenerationCombination {
            id: 0,
            total: dispatch.iter().sum(),
            dispatch,
            cost,
        }
    }

    #[test]
    fn prune_keeps_cheapest_then_lexicographic() {
        let kept = rank_and_prune(&[combo(vec![2.0, 3.0], 12.0), combo(vec![3.0, 2.0], 10.0)], 1);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].cost, 10.0);

        let kept = rank_and_prune(&[combo(vec![3.0, 2.0], 10.0), combo(vec![2.0, 3.0], 10.0)], 1);
        assert_eq!(kept[0].dispatch, vec![2.0, 3.0]);
    }

    #[test]
    fn jobs_skip_single_unit_and_offline() {
        let combos = vec![combo(vec![2.0, 0.0, 3.0, 2.5], 1.0), combo(vec![0.0, 4.0, 0.0, 0.0], 1.0)];
        let jobs = outage_jobs(&combos);
        assert_eq!(jobs.len(), 3);
        assert!(jobs.iter().all(|j| j.combo_index == 0 && combos[0].dispatch[j.unit_index] > 0.0));
    }
}
