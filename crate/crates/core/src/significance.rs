//! Permutation null for path scores.
//!
//! Each replicate shuffles the valid values of every field inside the analysis
//! window, independently per field, then re-scores the fixed path geometry with
//! the same weighting rule. Replicate `i` draws from a ChaCha8 stream seeded
//! with the first eight bytes of SHA-256 over the base seed and `i`, so results
//! do not depend on how replicates are scheduled.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{sign_weight, NodeKind, SpatialGraph};
use crate::grid::{Band, Cell, ChangeGrid, RegionWindow, ThresholdBands};
use crate::paths::LinkagePath;

pub const DEFAULT_M: usize = 999;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 42;
/// Name of the null model recorded in output metadata.
pub const NULL_MODEL: &str = "within-window-permutation";

#[derive(Debug, Error)]
pub enum SignificanceError {
    #[error("number of replicates must be at least 1")]
    NoReplicates,
    #[error("path {path} visits cell {cell}, which is not a valid cell of the {field} field inside the window")]
    CellOutsideNull {
        path: usize,
        cell: Cell,
        field: &'static str,
    },
    #[error("{paths} paths but {observed} observed scores")]
    LengthMismatch { paths: usize, observed: usize },
}

/// Derives per-replicate seeds from one base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub base_seed: u64,
}

impl SeedPolicy {
    pub fn new(base_seed: u64) -> Self {
        Self { base_seed }
    }

    pub fn replicate_seed(&self, replicate: u64) -> u64 {
        let digest = Sha256::new()
            .chain_update(b"spatial-link/replicate")
            .chain_update(self.base_seed.to_le_bytes())
            .chain_update(replicate.to_le_bytes())
            .finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Which field a path node reads its value from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

/// Path cells with the field each one belongs to, in path order.
pub type PathGeometry = Vec<(Side, Cell)>;

pub fn path_geometry(graph: &SpatialGraph, path: &LinkagePath) -> PathGeometry {
    path.nodes
        .iter()
        .map(|&n| {
            let node = &graph.nodes()[n];
            let side = if node.kind == NodeKind::Target {
                Side::Target
            } else {
                Side::Source
            };
            (side, node.cell)
        })
        .collect()
}

/// How an edge is weighted from the two endpoint values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightRule {
    /// +1 iff both values are non-zero with equal sign.
    SignMatch,
    /// Source values are mask bits; +1 iff every Source endpoint is anomalous
    /// and every Target endpoint lies in `band_target`.
    Cmad {
        bands_target: ThresholdBands,
        band_target: Band,
    },
    /// +1 iff both values are at least `threshold`.
    Elevated { threshold: f64 },
}

impl WeightRule {
    pub fn weight(&self, a: (Side, f64), b: (Side, f64)) -> i8 {
        match self {
            WeightRule::SignMatch => sign_weight(a.1, b.1),
            WeightRule::Cmad {
                bands_target,
                band_target,
            } => {
                let ok = |(side, v): (Side, f64)| match side {
                    Side::Source => v != 0.0,
                    Side::Target => bands_target.passes(v, *band_target),
                };
                if ok(a) && ok(b) {
                    1
                } else {
                    -1
                }
            }
            WeightRule::Elevated { threshold } => {
                if a.1 >= *threshold && b.1 >= *threshold {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

/// The fields a null is drawn from.
#[derive(Debug, Clone, Copy)]
pub struct NullFields<'a> {
    pub source: &'a ChangeGrid,
    pub target: &'a ChangeGrid,
    pub window: RegionWindow,
    pub rule: WeightRule,
}

/// Valid values of one field inside the window and where each cell sits in
/// that list.
struct Pool {
    indices: Vec<usize>,
    values: Vec<f64>,
    position: Vec<u32>,
}

impl Pool {
    fn new(grid: &ChangeGrid, window: &RegionWindow) -> Pool {
        let indices = grid.valid_indices_in(window);
        let values = indices.iter().map(|&i| grid.values()[i]).collect();
        let mut position = vec![u32::MAX; grid.len()];
        for (k, &i) in indices.iter().enumerate() {
            position[i] = k as u32;
        }
        Pool {
            indices,
            values,
            position,
        }
    }

    fn shuffled(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = self.values.clone();
        v.shuffle(rng);
        v
    }
}

fn replicate_rng(seeds: &SeedPolicy, replicate: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seeds.replicate_seed(replicate as u64))
}

/// Shuffles the valid in-window values of each field with one seed, source
/// first. Masks, registration and cells outside the window are untouched.
pub fn permute_fields(
    source: &ChangeGrid,
    target: &ChangeGrid,
    window: &RegionWindow,
    seed: u64,
) -> (ChangeGrid, ChangeGrid) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut apply = |grid: &ChangeGrid| {
        let pool = Pool::new(grid, window);
        let shuffled = pool.shuffled(&mut rng);
        let mut values = grid.values().to_vec();
        for (k, &i) in pool.indices.iter().enumerate() {
            values[i] = shuffled[k];
        }
        grid.with_values(values)
    };
    let s = apply(source);
    let t = apply(target);
    (s, t)
}

/// Path geometry resolved to positions in the two pools.
struct Resolved {
    sides: Vec<Side>,
    slots: Vec<u32>,
}

impl Resolved {
    fn positives(&self, rule: &WeightRule, src: &[f64], tgt: &[f64]) -> usize {
        let value = |k: usize| match self.sides[k] {
            Side::Source => src[self.slots[k] as usize],
            Side::Target => tgt[self.slots[k] as usize],
        };
        (1..self.slots.len())
            .filter(|&k| {
                rule.weight((self.sides[k - 1], value(k - 1)), (self.sides[k], value(k))) > 0
            })
            .count()
    }

    fn score(&self, rule: &WeightRule, src: &[f64], tgt: &[f64]) -> f64 {
        self.positives(rule, src, tgt) as f64 / (self.slots.len() - 1) as f64
    }
}

struct NullSetup {
    source: Pool,
    target: Pool,
    rule: WeightRule,
}

impl NullSetup {
    fn new(fields: &NullFields) -> NullSetup {
        NullSetup {
            source: Pool::new(fields.source, &fields.window),
            target: Pool::new(fields.target, &fields.window),
            rule: fields.rule,
        }
    }

    fn resolve(
        &self,
        index: usize,
        geometry: &[(Side, Cell)],
        fields: &NullFields,
    ) -> Result<Resolved, SignificanceError> {
        let mut slots = Vec::with_capacity(geometry.len());
        for &(side, cell) in geometry {
            let (grid, pool, field) = match side {
                Side::Source => (fields.source, &self.source, "source"),
                Side::Target => (fields.target, &self.target, "target"),
            };
            let slot = (cell.row < grid.rows() && cell.col < grid.cols())
                .then(|| pool.position[grid.index(cell)])
                .filter(|&s| s != u32::MAX)
                .ok_or(SignificanceError::CellOutsideNull {
                    path: index,
                    cell,
                    field,
                })?;
            slots.push(slot);
        }
        Ok(Resolved {
            sides: geometry.iter().map(|g| g.0).collect(),
            slots,
        })
    }

    fn replicate(&self, seeds: &SeedPolicy, i: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = replicate_rng(seeds, i);
        let s = self.source.shuffled(&mut rng);
        let t = self.target.shuffled(&mut rng);
        (s, t)
    }
}

/// Replicate scores of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub scores: Vec<f64>,
}

impl NullDistribution {
    pub fn m(&self) -> usize {
        self.scores.len()
    }
}

/// Scores of one path under `m` permutation replicates.
pub fn null_scores(
    geometry: &[(Side, Cell)],
    fields: &NullFields,
    m: usize,
    seeds: &SeedPolicy,
) -> Result<NullDistribution, SignificanceError> {
    if m == 0 {
        return Err(SignificanceError::NoReplicates);
    }
    let setup = NullSetup::new(fields);
    let resolved = setup.resolve(0, geometry, fields)?;
    let scores = (0..m)
        .into_par_iter()
        .map(|i| {
            let (s, t) = setup.replicate(seeds, i);
            resolved.score(&setup.rule, &s, &t)
        })
        .collect();
    Ok(NullDistribution { scores })
}

/// Add-one permutation p-value, one-sided towards high scores.
pub fn p_value(observed: f64, null: &[f64]) -> f64 {
    assert!(!null.is_empty(), "p-value needs a non-empty null");
    p_from_count(null.iter().filter(|&&s| s >= observed).count(), null.len())
}

fn p_from_count(at_least: usize, m: usize) -> f64 {
    (1 + at_least) as f64 / (1 + m) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub path_index: usize,
    pub observed: f64,
    pub p_value: f64,
    pub significant: bool,
    #[serde(skip_serializing, default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Reuse one null per distinct Source/Target pattern along the path.
    pub shared_null: bool,
    /// Benjamini-Hochberg control at `alpha` instead of raw `p < alpha`.
    pub bh: bool,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self {
            m: DEFAULT_M,
            alpha: DEFAULT_ALPHA,
            seed: DEFAULT_SEED,
            shared_null: false,
            bh: false,
        }
    }
}

/// Tests every path against one shared stream of replicates.
///
/// Counting is integer-valued and summed across workers, so the output is the
/// same for any thread count.
pub fn evaluate_paths(
    geometries: &[PathGeometry],
    observed: &[f64],
    fields: &NullFields,
    config: &SignificanceConfig,
) -> Result<Vec<SignificanceResult>, SignificanceError> {
    if config.m == 0 {
        return Err(SignificanceError::NoReplicates);
    }
    if geometries.len() != observed.len() {
        return Err(SignificanceError::LengthMismatch {
            paths: geometries.len(),
            observed: observed.len(),
        });
    }
    let n = geometries.len();
    let setup = NullSetup::new(fields);
    let resolved: Vec<Resolved> = geometries
        .iter()
        .enumerate()
        .map(|(i, g)| setup.resolve(i, g, fields))
        .collect::<Result<_, _>>()?;

    // group[i] = index of the path whose null path i uses
    let group: Vec<usize> = if config.shared_null {
        let mut first: HashMap<Vec<Side>, usize> = HashMap::new();
        resolved
            .iter()
            .enumerate()
            .map(|(i, r)| *first.entry(r.sides.clone()).or_insert(i))
            .collect()
    } else {
        (0..n).collect()
    };
    let mut reps: Vec<usize> = group.clone();
    reps.sort_unstable();
    reps.dedup();

    let seeds = SeedPolicy::new(config.seed);
    let counts = if n == 0 {
        Vec::new()
    } else {
        (0..config.m)
            .into_par_iter()
            .fold(
                || vec![0u32; n],
                |mut acc, i| {
                    let (s, t) = setup.replicate(&seeds, i);
                    let mut rep_score = vec![0.0; n];
                    for &r in &reps {
                        rep_score[r] = resolved[r].score(&setup.rule, &s, &t);
                    }
                    for (k, slot) in acc.iter_mut().enumerate() {
                        if rep_score[group[k]] >= observed[k] {
                            *slot += 1;
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u32; n],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    };

    let p: Vec<f64> = counts
        .iter()
        .map(|&c| p_from_count(c as usize, config.m))
        .collect();
    let flags = if config.bh {
        benjamini_hochberg(&p, config.alpha)
    } else {
        p.iter().map(|&v| v < config.alpha).collect()
    };
    Ok((0..n)
        .map(|i| SignificanceResult {
            path_index: i,
            observed: observed[i],
            p_value: p[i],
            significant: flags[i],
            alpha: config.alpha,
        })
        .collect())
}

/// Items whose result has `p_value < alpha`.
pub fn filter_significant<T: Clone>(
    items: &[T],
    results: &[SignificanceResult],
    alpha: f64,
) -> Vec<T> {
    results
        .iter()
        .filter(|r| r.p_value < alpha)
        .filter_map(|r| items.get(r.path_index).cloned())
        .collect()
}

/// Rejection flags of the Benjamini-Hochberg step-up procedure at level `q`.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Vec<bool> {
    let n = p_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let cutoff = (0..n)
        .rev()
        .find(|&k| p_values[order[k]] <= q * (k + 1) as f64 / n as f64);
    let mut flags = vec![false; n];
    if let Some(k) = cutoff {
        for &i in &order[..=k] {
            flags[i] = true;
        }
    }
    flags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridRegistration;

    fn grid(vals: &[f64]) -> ChangeGrid {
        ChangeGrid::from_values(1, vals.len(), vals.to_vec(), GridRegistration::default()).unwrap()
    }

    #[test]
    fn p_value_formula() {
        let lower = vec![0.5; 999];
        assert_eq!(p_value(1.0, &lower), 0.001);
        let tied = vec![0.7; 9];
        assert_eq!(p_value(0.7, &tied), 1.0);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s = SeedPolicy::new(7);
        assert_eq!(s.replicate_seed(3), SeedPolicy::new(7).replicate_seed(3));
        let set: std::collections::HashSet<u64> = (0..1000).map(|i| s.replicate_seed(i)).collect();
        assert_eq!(set.len(), 1000);
        assert_ne!(s.replicate_seed(0), SeedPolicy::new(8).replicate_seed(0));
    }

    #[test]
    fn permutation_keeps_multiset_and_mask() {
        let mut vals: Vec<f64> = (0..20).map(|v| v as f64 - 10.0).collect();
        vals[3] = f64::NAN;
        let mut valid = vec![true; 20];
        valid[3] = false;
        let g = ChangeGrid::new(1, 20, vals, valid, GridRegistration::default()).unwrap();
        let (a, b) = permute_fields(&g, &g, &g.window(), 5);
        for p in [&a, &b] {
            assert_eq!(p.valid_mask(), g.valid_mask());
            let mut x: Vec<f64> = (0..20).filter(|&i| i != 3).map(|i| p.values()[i]).collect();
            let mut y: Vec<f64> = (0..20).filter(|&i| i != 3).map(|i| g.values()[i]).collect();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            assert_eq!(x, y);
        }
        let (a2, _) = permute_fields(&g, &g, &g.window(), 5);
        assert_eq!(a.values()[0].to_bits(), a2.values()[0].to_bits());
        assert!(a.values() != g.values() || b.values() != g.values());
    }

    #[test]
    fn single_cell_permutation_is_identity() {
        let g = grid(&[-0.4]);
        let (a, _) = permute_fields(&g, &g, &g.window(), 1);
        assert_eq!(a.values(), g.values());
    }

    #[test]
    fn constant_field_nulls_are_one() {
        let g = grid(&[-1.0; 10]);
        let fields = NullFields {
            source: &g,
            target: &g,
            window: g.window(),
            rule: WeightRule::SignMatch,
        };
        let geom = vec![
            (Side::Source, Cell::new(0, 0)),
            (Side::Source, Cell::new(0, 1)),
            (Side::Target, Cell::new(0, 2)),
        ];
        let null = null_scores(&geom, &fields, 5, &SeedPolicy::new(1)).unwrap();
        assert_eq!(null.scores, vec![1.0; 5]);
        let one = null_scores(&geom, &fields, 1, &SeedPolicy::new(1)).unwrap();
        assert_eq!(one.m(), 1);
    }

    #[test]
    fn batch_matches_single_path() {
        let vals: Vec<f64> = (0..40)
            .map(|i| {
                if i % 3 == 0 {
                    0.2
                } else {
                    -0.1 - i as f64 * 0.01
                }
            })
            .collect();
        let g = grid(&vals);
        let fields = NullFields {
            source: &g,
            target: &g,
            window: g.window(),
            rule: WeightRule::SignMatch,
        };
        let geoms: Vec<PathGeometry> = (0..5)
            .map(|k| {
                (0..4)
                    .map(|j| {
                        let side = if j == 3 { Side::Target } else { Side::Source };
                        (side, Cell::new(0, k * 7 + j))
                    })
                    .collect()
            })
            .collect();
        let observed = vec![1.0, 2.0 / 3.0, 1.0, 1.0 / 3.0, 1.0];
        let cfg = SignificanceConfig {
            m: 99,
            seed: 11,
            ..Default::default()
        };
        let res = evaluate_paths(&geoms, &observed, &fields, &cfg).unwrap();
        for (k, g) in geoms.iter().enumerate() {
            let null = null_scores(g, &fields, 99, &SeedPolicy::new(11)).unwrap();
            assert_eq!(res[k].p_value, p_value(observed[k], &null.scores));
        }
    }

    #[test]
    fn significance_filter_is_strict() {
        let r = |i, p| SignificanceResult {
            path_index: i,
            observed: 1.0,
            p_value: p,
            significant: p < 0.05,
            alpha: 0.05,
        };
        let items = vec!["a", "b"];
        let kept = filter_significant(&items, &[r(0, 0.001), r(1, 0.05)], 0.05);
        assert_eq!(kept, vec!["a"]);
        assert!(filter_significant::<&str>(&[], &[], 0.05).is_empty());
    }

    #[test]
    fn bh_step_up() {
        let p = [0.01, 0.04, 0.03, 0.2];
        // thresholds 0.0125, 0.025, 0.0375, 0.05 on sorted p 0.01, 0.03, 0.04, 0.2
        assert_eq!(
            benjamini_hochberg(&p, 0.05),
            vec![true, false, false, false]
        );
        assert_eq!(benjamini_hochberg(&[0.01, 0.02], 0.05), vec![true, true]);
        assert!(benjamini_hochberg(&[], 0.05).is_empty());
    }
}
