//! Comparison harness: repeated seeded tuner runs, per-cell min-max
//! normalization, and Scott-Knott ESD ranking into statistically
//! distinct groups.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::rng::derive_seed_path;
use crate::space::ConfigSpace;
use crate::tuner::{run, run_random_search, run_without_rules, TunerConfig, TunerError, TunerResult};

use super::objective::Objective;

/// Effect sizes below this are negligible: a candidate split is
/// rejected and the groups share a rank.
pub const NEGLIGIBLE_EFFECT_SIZE: f64 = 0.2;

/// Significance level for the split's distinctness test.
pub const SPLIT_ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("group {0:?} needs at least 2 observations")]
    TooFewObservations(String),
    #[error("ranking needs at least one group")]
    EmptyGroups,
    #[error("comparison needs at least 2 repeats")]
    TooFewRepeats,
    #[error(transparent)]
    Tuner(#[from] TunerError),
}

/// The three tuners this crate ships.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TunerKind {
    PromiseTune,
    WithoutRules,
    RandomSearch,
}

impl TunerKind {
    pub fn all() -> [TunerKind; 3] {
        [TunerKind::PromiseTune, TunerKind::WithoutRules, TunerKind::RandomSearch]
    }

    pub fn label(&self) -> &'static str {
        match self {
            TunerKind::PromiseTune => "promisetune",
            TunerKind::WithoutRules => "without-rules",
            TunerKind::RandomSearch => "random-search",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "promisetune" => Some(TunerKind::PromiseTune),
            "without-rules" => Some(TunerKind::WithoutRules),
            "random-search" => Some(TunerKind::RandomSearch),
            _ => None,
        }
    }

    pub fn run(
        &self,
        space: &ConfigSpace,
        objective: &dyn Objective,
        cfg: &TunerConfig,
    ) -> Result<TunerResult, TunerError> {
        match self {
            TunerKind::PromiseTune => run(space, objective, cfg),
            TunerKind::WithoutRules => run_without_rules(space, objective, cfg),
            TunerKind::RandomSearch => run_random_search(space, objective, cfg),
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

fn cohens_d(left: &[f64], right: &[f64]) -> f64 {
    let diff = (mean(left) - mean(right)).abs();
    let nl = left.len() as f64;
    let nr = right.len() as f64;
    let pooled = (((nl - 1.0) * sample_variance(left) + (nr - 1.0) * sample_variance(right))
        / (nl + nr - 2.0))
        .sqrt();
    if pooled <= 0.0 {
        if diff > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        diff / pooled
    }
}

/// Two-sided Welch t-test p-value for a difference in means.
fn welch_p_value(left: &[f64], right: &[f64]) -> f64 {
    let nl = left.len() as f64;
    let nr = right.len() as f64;
    let vl = sample_variance(left) / nl;
    let vr = sample_variance(right) / nr;
    let diff = (mean(left) - mean(right)).abs();
    let se = (vl + vr).sqrt();
    if se <= 0.0 {
        return if diff > 0.0 { 0.0 } else { 1.0 };
    }
    let t = diff / se;
    let df = (vl + vr).powi(2) / (vl * vl / (nl - 1.0) + vr * vr / (nr - 1.0));
    let dist = statrs::distribution::StudentsT::new(0.0, 1.0, df.max(1.0))
        .expect("valid t distribution");
    use statrs::distribution::ContinuousCDF;
    2.0 * (1.0 - dist.cdf(t))
}

/// A split stands only when the two sides are statistically distinct
/// and the effect size is non-negligible.
fn split_is_distinct(left: &[f64], right: &[f64]) -> bool {
    cohens_d(left, right) >= NEGLIGIBLE_EFFECT_SIZE && welch_p_value(left, right) < SPLIT_ALPHA
}

fn pool(entries: &[(String, f64, Vec<f64>)]) -> Vec<f64> {
    entries.iter().flat_map(|(_, _, obs)| obs.iter().copied()).collect()
}

fn partition(entries: &[(String, f64, Vec<f64>)], out: &mut Vec<Vec<String>>) {
    if entries.len() <= 1 {
        if let Some((name, _, _)) = entries.first() {
            out.push(vec![name.clone()]);
        }
        return;
    }
    // split point maximizing the between-group sum of squares
    let all = pool(entries);
    let grand = mean(&all);
    let mut best_split = 0usize;
    let mut best_bss = f64::NEG_INFINITY;
    for t in 1..entries.len() {
        let left = pool(&entries[..t]);
        let right = pool(&entries[t..]);
        let bss = left.len() as f64 * (mean(&left) - grand).powi(2)
            + right.len() as f64 * (mean(&right) - grand).powi(2);
        if bss > best_bss {
            best_bss = bss;
            best_split = t;
        }
    }
    let left = pool(&entries[..best_split]);
    let right = pool(&entries[best_split..]);
    if split_is_distinct(&left, &right) {
        partition(&entries[..best_split], out);
        partition(&entries[best_split..], out);
    } else {
        out.push(entries.iter().map(|(name, _, _)| name.clone()).collect());
    }
}

/// Scott-Knott ESD ranking: order groups by mean, recursively split the
/// ordered list where the between-group sum of squares peaks, and accept
/// a split only when the sides are statistically distinct (Welch test
/// at 0.05) with a non-negligible effect size (Cohen's d >= 0.2).
/// Tuners in the same cluster share a rank; ranks follow mean order,
/// best (smallest) first.
pub fn scott_knott_esd(
    groups: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, usize>, BenchError> {
    if groups.is_empty() {
        return Err(BenchError::EmptyGroups);
    }
    for (name, obs) in groups {
        if obs.len() < 2 {
            return Err(BenchError::TooFewObservations(name.clone()));
        }
    }
    let mut entries: Vec<(String, f64, Vec<f64>)> = groups
        .iter()
        .map(|(name, obs)| (name.clone(), mean(obs), obs.clone()))
        .collect();
    entries.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut clusters: Vec<Vec<String>> = Vec::new();
    partition(&entries, &mut clusters);
    let mut ranks = BTreeMap::new();
    for (rank0, cluster) in clusters.iter().enumerate() {
        for name in cluster {
            ranks.insert(name.clone(), rank0 + 1);
        }
    }
    Ok(ranks)
}

/// Min-max normalization within one (objective, budget) cell: the best
/// observation maps to 0 and the worst to 1; an all-equal cell maps
/// to all zeros.
pub(crate) fn normalize_cell(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
}

/// One (objective, budget, tuner) row of a comparison.
#[derive(Debug, Clone, Serialize)]
pub struct RankCell {
    pub objective: String,
    pub budget: usize,
    pub tuner: String,
    pub rank: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankTable {
    pub cells: Vec<RankCell>,
}

impl RankTable {
    pub fn rank_of(&self, objective: &str, budget: usize, tuner: &str) -> Option<usize> {
        self.cells
            .iter()
            .find(|c| c.objective == objective && c.budget == budget && c.tuner == tuner)
            .map(|c| c.rank)
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["objective", "budget", "tuner", "rank", "mean", "stddev"])
            .expect("csv write");
        for cell in &self.cells {
            writer
                .write_record([
                    cell.objective.clone(),
                    cell.budget.to_string(),
                    cell.tuner.clone(),
                    cell.rank.to_string(),
                    format!("{}", cell.mean),
                    format!("{}", cell.stddev),
                ])
                .expect("csv write");
        }
        String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rank table serializes")
    }

    /// Markdown summary with "[rank] mean (std)" cells, one row per
    /// (objective, budget).
    pub fn to_markdown(&self) -> String {
        let mut tuners: Vec<String> = Vec::new();
        for cell in &self.cells {
            if !tuners.contains(&cell.tuner) {
                tuners.push(cell.tuner.clone());
            }
        }
        let mut rows: Vec<(String, usize)> = Vec::new();
        for cell in &self.cells {
            let key = (cell.objective.clone(), cell.budget);
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
        let mut out = String::new();
        out.push_str("| Objective | Budget |");
        for t in &tuners {
            out.push_str(&format!(" {t} |"));
        }
        out.push('\n');
        out.push_str("|---|---|");
        for _ in &tuners {
            out.push_str("---|");
        }
        out.push('\n');
        for (objective, budget) in rows {
            out.push_str(&format!("| {objective} | {budget} |"));
            for t in &tuners {
                let cell = self
                    .cells
                    .iter()
                    .find(|c| c.objective == objective && c.budget == budget && &c.tuner == t);
                match cell {
                    Some(c) => out.push_str(&format!(
                        " [{}] {:.3} ({:.3}) |",
                        c.rank, c.mean, c.stddev
                    )),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A named objective with the space it is tuned over.
pub struct ComparisonObjective<'a> {
    pub name: String,
    pub space: &'a ConfigSpace,
    pub objective: &'a dyn Objective,
}

/// Run every (objective, budget, tuner) combination `repeats` times
/// with derived seeds, normalize best-found performance within each
/// (objective, budget) cell, and rank tuners with Scott-Knott ESD.
/// Independent runs execute in parallel; aggregation order is
/// canonical.
pub fn run_comparison(
    objectives: &[ComparisonObjective<'_>],
    tuners: &[TunerKind],
    budgets: &[usize],
    repeats: usize,
    base: &TunerConfig,
) -> Result<RankTable, BenchError> {
    if repeats < 2 {
        return Err(BenchError::TooFewRepeats);
    }
    let mut cells = Vec::new();
    for (obj_idx, comparison) in objectives.iter().enumerate() {
        for &budget in budgets {
            // all runs of one cell, canonical (tuner, repeat) order
            let specs: Vec<(usize, usize)> = (0..tuners.len())
                .flat_map(|t| (0..repeats).map(move |r| (t, r)))
                .collect();
            let bests: Vec<Result<f64, TunerError>> = specs
                .par_iter()
                .map(|&(tuner_idx, repeat)| {
                    let mut cfg = base.clone();
                    cfg.budget = budget;
                    cfg.initial_size = cfg.initial_size.min(budget);
                    cfg.seed = derive_seed_path(
                        base.seed,
                        &[
                            obj_idx as u64,
                            budget as u64,
                            tuner_idx as u64,
                            repeat as u64,
                        ],
                    );
                    tuners[tuner_idx]
                        .run(comparison.space, comparison.objective, &cfg)
                        .map(|r| r.best_performance)
                })
                .collect();
            let mut values = Vec::with_capacity(specs.len());
            for best in bests {
                values.push(best?);
            }
            normalize_cell(&mut values);
            let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (&(tuner_idx, _), &v) in specs.iter().zip(&values) {
                groups.entry(tuners[tuner_idx].label().to_string()).or_default().push(v);
            }
            let ranks = scott_knott_esd(&groups)?;
            for kind in tuners {
                let label = kind.label().to_string();
                let obs = &groups[&label];
                cells.push(RankCell {
                    objective: comparison.name.clone(),
                    budget,
                    tuner: label.clone(),
                    rank: ranks[&label],
                    mean: mean(obs),
                    stddev: population_std(obs),
                });
            }
        }
    }
    Ok(RankTable { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::objective::{synthetic_landscape, LandscapeKind};
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, Normal};

    fn groups(pairs: &[(&str, Vec<f64>)]) -> BTreeMap<String, Vec<f64>> {
        pairs.iter().map(|(n, v)| (n.to_string(), v.clone())).collect()
    }

    #[test]
    fn identical_groups_share_rank_one() {
        let ranks =
            scott_knott_esd(&groups(&[("A", vec![1.0; 3]), ("B", vec![1.0; 3])])).unwrap();
        assert_eq!(ranks["A"], 1);
        assert_eq!(ranks["B"], 1);
    }

    #[test]
    fn similar_pair_beats_clearly_worse_third() {
        let ranks = scott_knott_esd(&groups(&[
            ("A", vec![1.0, 1.1, 0.9, 1.05]),
            ("B", vec![1.02, 0.95, 1.0, 1.08]),
            ("C", vec![2.0, 2.1, 1.9, 2.05]),
        ]))
        .unwrap();
        assert_eq!(ranks["A"], 1);
        assert_eq!(ranks["B"], 1);
        assert_eq!(ranks["C"], 2);
    }

    #[test]
    fn separated_normals_get_distinct_ranks() {
        let mut rng = rng_from_seed(33);
        let near = Normal::new(0.0, 0.1).unwrap();
        let far = Normal::new(1.0, 0.1).unwrap();
        let a: Vec<f64> = (0..30).map(|_| near.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..30).map(|_| far.sample(&mut rng)).collect();
        let ranks = scott_knott_esd(&groups(&[("A", a), ("B", b)])).unwrap();
        assert_eq!(ranks["A"], 1);
        assert_eq!(ranks["B"], 2);
    }

    #[test]
    fn ranks_respect_mean_order() {
        let g = groups(&[
            ("fast", vec![0.1, 0.2, 0.15]),
            ("mid", vec![0.5, 0.55, 0.45]),
            ("slow", vec![0.9, 0.95, 0.85]),
        ]);
        let ranks = scott_knott_esd(&g).unwrap();
        assert!(ranks["fast"] <= ranks["mid"]);
        assert!(ranks["mid"] <= ranks["slow"]);
    }

    #[test]
    fn too_few_observations_is_an_error() {
        let err = scott_knott_esd(&groups(&[("A", vec![1.0])])).unwrap_err();
        assert!(matches!(err, BenchError::TooFewObservations(_)));
        assert!(matches!(scott_knott_esd(&BTreeMap::new()), Err(BenchError::EmptyGroups)));
    }

    #[test]
    fn normalization_maps_best_to_zero_and_worst_to_one() {
        let mut values = vec![5.0, 1.0, 3.0];
        normalize_cell(&mut values);
        assert_eq!(values, vec![1.0, 0.0, 0.5]);
        let mut flat = vec![2.0, 2.0];
        normalize_cell(&mut flat);
        assert_eq!(flat, vec![0.0, 0.0]);
    }

    #[test]
    fn single_tuner_ranks_first_everywhere() {
        let land = synthetic_landscape(LandscapeKind::Flat, 3, 1);
        let objectives = [ComparisonObjective {
            name: "flat".into(),
            space: land.space(),
            objective: &land,
        }];
        let mut base = TunerConfig::new(12, 5);
        base.initial_size = 4;
        base.tree_count = 5;
        let table = run_comparison(
            &objectives,
            &[TunerKind::RandomSearch],
            &[8, 12],
            2,
            &base,
        )
        .unwrap();
        assert!(table.cells.iter().all(|c| c.rank == 1));
        assert_eq!(table.cells.len(), 2);
    }

    #[test]
    fn random_search_ties_with_itself_across_seed_sets() {
        let land = synthetic_landscape(LandscapeKind::RuggedWells { boxes: 1 }, 4, 3);
        let space = land.space();
        let run_best = |seed: u64| {
            let mut cfg = TunerConfig::new(20, seed);
            cfg.initial_size = 5;
            run_random_search(space, &land, &cfg).unwrap().best_performance
        };
        let a: Vec<f64> = (0..10).map(|i| run_best(1000 + i)).collect();
        let b: Vec<f64> = (0..10).map(|i| run_best(2000 + i)).collect();
        let ranks = scott_knott_esd(&groups(&[("rs-a", a), ("rs-b", b)])).unwrap();
        assert_eq!(ranks["rs-a"], ranks["rs-b"]);
    }

    #[test]
    fn markdown_cells_use_rank_mean_std_format() {
        let table = RankTable {
            cells: vec![RankCell {
                objective: "flat".into(),
                budget: 20,
                tuner: "random-search".into(),
                rank: 1,
                mean: 0.0,
                stddev: 0.0,
            }],
        };
        let md = table.to_markdown();
        assert!(md.contains("[1] 0.000 (0.000)"), "got: {md}");
    }
}
