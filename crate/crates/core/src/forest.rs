//! Bagged CART regression forest. Used twice by the tuner: as the rule
//! learner (paths become rules, leaf size governed by `l`) and as the
//! surrogate model (fully grown, `l = 1`, mean and spread prediction).

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};
use crate::rules::{RawPath, RawPredicate};
use crate::space::{ConfigSpace, Configuration, SampleSet};

/// Gains below this fraction of the node's squared error are treated as
/// no reduction; guards against float noise creating fake splits.
const MIN_GAIN_FRACTION: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training needs at least 2 samples, got {0}")]
    InsufficientData(usize),
    #[error("leaf parameter l must be at least 1")]
    InvalidLeafParam,
    #[error("tree count must be at least 1")]
    InvalidTreeCount,
}

/// Split predicate; the left child holds rows where it is true.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPredicate {
    /// `value < threshold`, threshold strictly between two observed
    /// values (midpoint).
    NumericLt { threshold: f64 },
    /// `value == v` versus `value != v` (binary/enumerated options).
    EnumEq { value: i64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split { option_index: usize, predicate: SplitPredicate, left: usize, right: usize },
    Leaf { prediction: f64, sample_count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, config: &Configuration) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { prediction, .. } => return *prediction,
                Node::Split { option_index, predicate, left, right } => {
                    let value = config.value(*option_index);
                    let goes_left = match predicate {
                        SplitPredicate::NumericLt { threshold } => (value as f64) < *threshold,
                        SplitPredicate::EnumEq { value: v } => value == *v,
                    };
                    at = if goes_left { *left } else { *right };
                }
            }
        }
    }

    fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Root-to-leaf predicate sequences, left branch first.
    fn paths(&self) -> Vec<RawPath> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, RawPath)> = vec![(0, RawPath::new())];
        while let Some((at, path)) = stack.pop() {
            match &self.nodes[at] {
                Node::Leaf { .. } => out.push(path),
                Node::Split { option_index, predicate, left, right } => {
                    let (on_left, on_right) = match predicate {
                        SplitPredicate::NumericLt { threshold } => {
                            (RawPredicate::Lt(*threshold), RawPredicate::Ge(*threshold))
                        }
                        SplitPredicate::EnumEq { value } => {
                            (RawPredicate::Eq(*value), RawPredicate::Ne(*value))
                        }
                    };
                    // push right first so the left path pops first
                    let mut right_path = path.clone();
                    right_path.push((*option_index, on_right));
                    stack.push((*right, right_path));
                    let mut left_path = path;
                    left_path.push((*option_index, on_left));
                    stack.push((*left, left_path));
                }
            }
        }
        out
    }

    fn leaves(&self) -> Vec<(f64, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { prediction, sample_count } => Some((*prediction, *sample_count)),
                _ => None,
            })
            .collect()
    }
}

/// A trained forest; immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest {
    trees: Vec<Tree>,
    min_leaf: usize,
    seed: u64,
}

impl RegressionForest {
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }

    /// Mean of per-tree predictions and population standard deviation
    /// across trees (0 when all trees agree).
    pub fn predict(&self, config: &Configuration) -> (f64, f64) {
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict(config)).collect();
        aggregate(&preds)
    }

    /// One path per leaf per tree, in tree order then left-first leaf
    /// order; total path count equals total leaf count.
    pub fn extract_paths(&self) -> Vec<RawPath> {
        self.trees.iter().flat_map(|t| t.paths()).collect()
    }

    pub fn total_leaf_count(&self) -> usize {
        self.trees.iter().map(|t| t.leaf_count()).sum()
    }

    /// `(prediction, sample_count)` of every leaf across all trees.
    pub fn leaves(&self) -> Vec<(f64, usize)> {
        self.trees.iter().flat_map(|t| t.leaves()).collect()
    }
}

fn aggregate(preds: &[f64]) -> (f64, f64) {
    let n = preds.len() as f64;
    let mean = preds.iter().sum::<f64>() / n;
    let var = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct TrainingData {
    rows: Vec<Vec<i64>>,
    targets: Vec<f64>,
    numeric: Vec<bool>,
}

struct BestSplit {
    gain: f64,
    option_index: usize,
    predicate: SplitPredicate,
}

fn sse(sum: f64, sumsq: f64, n: f64) -> f64 {
    sumsq - sum * sum / n
}

/// Exhaustive best-split search over all options; ties resolve to the
/// first candidate in (option, threshold/value) order via strict
/// comparison.
fn find_best_split(data: &TrainingData, indices: &[usize], min_leaf: usize) -> Option<BestSplit> {
    let n = indices.len() as f64;
    let sum: f64 = indices.iter().map(|&i| data.targets[i]).sum();
    let sumsq: f64 = indices.iter().map(|&i| data.targets[i].powi(2)).sum();
    let parent_sse = sse(sum, sumsq, n);
    if parent_sse <= 0.0 {
        return None;
    }
    let min_gain = parent_sse * MIN_GAIN_FRACTION;

    let mut best: Option<BestSplit> = None;
    let mut consider = |gain: f64, option_index: usize, predicate: SplitPredicate| {
        if gain > min_gain && best.as_ref().map_or(true, |b| gain > b.gain) {
            best = Some(BestSplit { gain, option_index, predicate });
        }
    };

    for opt in 0..data.numeric.len() {
        if data.numeric[opt] {
            let mut pairs: Vec<(i64, f64)> =
                indices.iter().map(|&i| (data.rows[i][opt], data.targets[i])).collect();
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            let mut left_sum = 0.0;
            let mut left_sumsq = 0.0;
            for split_at in 1..pairs.len() {
                let (v, t) = pairs[split_at - 1];
                left_sum += t;
                left_sumsq += t * t;
                if v == pairs[split_at].0 {
                    continue; // not a boundary between distinct values
                }
                let left_n = split_at;
                let right_n = pairs.len() - split_at;
                if left_n < min_leaf || right_n < min_leaf {
                    continue;
                }
                let left = sse(left_sum, left_sumsq, left_n as f64);
                let right = sse(sum - left_sum, sumsq - left_sumsq, right_n as f64);
                let threshold = (v as f64 + pairs[split_at].0 as f64) / 2.0;
                consider(
                    parent_sse - left - right,
                    opt,
                    SplitPredicate::NumericLt { threshold },
                );
            }
        } else {
            let mut values: Vec<i64> = indices.iter().map(|&i| data.rows[i][opt]).collect();
            values.sort();
            values.dedup();
            if values.len() < 2 {
                continue;
            }
            for v in values {
                let mut left_sum = 0.0;
                let mut left_sumsq = 0.0;
                let mut left_n = 0usize;
                for &i in indices {
                    if data.rows[i][opt] == v {
                        left_sum += data.targets[i];
                        left_sumsq += data.targets[i] * data.targets[i];
                        left_n += 1;
                    }
                }
                let right_n = indices.len() - left_n;
                if left_n < min_leaf || right_n < min_leaf {
                    continue;
                }
                let left = sse(left_sum, left_sumsq, left_n as f64);
                let right = sse(sum - left_sum, sumsq - left_sumsq, right_n as f64);
                consider(parent_sse - left - right, opt, SplitPredicate::EnumEq { value: v });
            }
        }
    }
    best
}

fn grow(data: &TrainingData, indices: Vec<usize>, min_leaf: usize, nodes: &mut Vec<Node>) -> usize {
    let make_leaf = |indices: &[usize], nodes: &mut Vec<Node>| {
        let mean = indices.iter().map(|&i| data.targets[i]).sum::<f64>() / indices.len() as f64;
        nodes.push(Node::Leaf { prediction: mean, sample_count: indices.len() });
        nodes.len() - 1
    };

    if indices.len() < 2 * min_leaf {
        return make_leaf(&indices, nodes);
    }
    let Some(split) = find_best_split(data, &indices, min_leaf) else {
        return make_leaf(&indices, nodes);
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.into_iter().partition(|&i| match &split.predicate {
            SplitPredicate::NumericLt { threshold } => (data.rows[i][split.option_index] as f64) < *threshold,
            SplitPredicate::EnumEq { value } => data.rows[i][split.option_index] == *value,
        });
    // reserve the split slot before growing children
    let at = nodes.len();
    nodes.push(Node::Leaf { prediction: 0.0, sample_count: 0 });
    let left = grow(data, left_idx, min_leaf, nodes);
    let right = grow(data, right_idx, min_leaf, nodes);
    nodes[at] = Node::Split {
        option_index: split.option_index,
        predicate: split.predicate,
        left,
        right,
    };
    at
}

fn grow_tree(data: &TrainingData, indices: Vec<usize>, min_leaf: usize) -> Tree {
    let mut nodes = Vec::new();
    // grow() always places the subtree root at the next free slot, so
    // the tree root is node 0
    grow(data, indices, min_leaf, &mut nodes);
    let tree = Tree { nodes };
    // any split respects the leaf minimum; only a splitless root leaf
    // may hold fewer rows than min_leaf (training set smaller than l)
    debug_assert!(
        tree.leaf_count() == 1 || tree.leaves().iter().all(|&(_, count)| count >= min_leaf)
    );
    tree
}

/// Train a forest: each tree is grown by CART variance-reduction
/// splitting on a bootstrap resample, stopping when a node has fewer
/// than `2 * l` rows, no split keeps `l` rows per side, or no split
/// reduces the squared error. Integer options split by threshold,
/// binary and enumerated options by equality. Deterministic for a
/// fixed seed, no matter how many threads train the trees.
pub fn train(
    space: &ConfigSpace,
    samples: &SampleSet,
    l: usize,
    tree_count: usize,
    seed: u64,
) -> Result<RegressionForest, ForestError> {
    if samples.len() < 2 {
        return Err(ForestError::InsufficientData(samples.len()));
    }
    if l == 0 {
        return Err(ForestError::InvalidLeafParam);
    }
    if tree_count == 0 {
        return Err(ForestError::InvalidTreeCount);
    }
    let rows: Vec<Vec<i64>> =
        samples.samples().iter().map(|s| s.config.values().to_vec()).collect();
    let targets: Vec<f64> = samples.samples().iter().map(|s| s.performance).collect();
    let numeric: Vec<bool> = space.options().iter().map(|o| o.is_numeric()).collect();
    assert_eq!(numeric.len(), rows[0].len());
    train_inner(TrainingData { rows, targets, numeric }, l, tree_count, seed)
}

fn train_inner(
    data: TrainingData,
    l: usize,
    tree_count: usize,
    seed: u64,
) -> Result<RegressionForest, ForestError> {
    let n = data.rows.len();
    let trees: Vec<Tree> = (0..tree_count)
        .into_par_iter()
        .map(|tree_idx| {
            let mut rng = rng_from_seed(derive_seed(seed, tree_idx as u64));
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(&data, indices, l)
        })
        .collect();
    Ok(RegressionForest { trees, min_leaf: l, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{canonicalize, dedupe};
    use crate::space::{ConfigSpace, OptionDef, Sample};

    fn sample_set(rows: &[(Vec<i64>, f64)]) -> SampleSet {
        let mut set = SampleSet::new(rows.len() + 1);
        for (values, perf) in rows {
            set.insert_initial(
                Sample::new(Configuration::from_values(values.clone()), *perf).unwrap(),
            )
            .unwrap();
        }
        set
    }

    fn int_space(bounds: &[(i64, i64)]) -> ConfigSpace {
        let options = bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| OptionDef::int_range(format!("o{i}"), lo, hi))
            .collect();
        ConfigSpace::new(options).unwrap()
    }

    #[test]
    fn constant_targets_give_single_leaf_trees() {
        let space = int_space(&[(0, 9)]);
        let rows: Vec<(Vec<i64>, f64)> = (0..10).map(|i| (vec![i], 7.0)).collect();
        let forest = train(&space, &sample_set(&rows), 1, 5, 3).unwrap();
        assert_eq!(forest.total_leaf_count(), 5);
        let (mean, std) = forest.predict(&Configuration::from_values(vec![4]));
        assert_eq!(mean, 7.0);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn leaf_parameter_pigeonholes_to_single_leaf() {
        // 10 samples, l = 10: no split can satisfy two leaves of >= 10
        let space = int_space(&[(0, 9)]);
        let rows: Vec<(Vec<i64>, f64)> = (0..10).map(|i| (vec![i], i as f64)).collect();
        let forest = train(&space, &sample_set(&rows), 10, 3, 1).unwrap();
        assert_eq!(forest.total_leaf_count(), 3);
        for path in forest.extract_paths() {
            assert!(path.is_empty());
        }
    }

    #[test]
    fn split_search_matches_hand_oracle() {
        // {(x=0, y=0), (x=1, y=10)} x5 copies each, l=1: the only
        // boundary is between 0 and 1, so the split is x < 0.5 with
        // leaf means 0 and 10. Exhaustive search oracle: one candidate
        // threshold, gain = parent SSE = 250.
        let data = TrainingData {
            rows: vec![vec![0], vec![1]],
            targets: vec![0.0, 10.0],
            numeric: vec![true],
        };
        let indices = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let split = find_best_split(&data, &indices, 1).unwrap();
        assert_eq!(split.option_index, 0);
        assert_eq!(split.predicate, SplitPredicate::NumericLt { threshold: 0.5 });
        assert!((split.gain - 250.0).abs() < 1e-9);

        let tree = grow_tree(&data, indices, 1);
        let mut leaves = tree.leaves();
        leaves.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(leaves, vec![(0.0, 5), (10.0, 5)]);
    }

    #[test]
    fn stump_paths_are_the_two_branches() {
        let data = TrainingData {
            rows: (0..10).map(|i| vec![i]).collect(),
            targets: (0..10).map(|i| if i < 5 { 0.0 } else { 10.0 }).collect(),
            numeric: vec![true],
        };
        let tree = grow_tree(&data, (0..10).collect(), 5);
        let paths = tree.paths();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0], vec![(0, RawPredicate::Lt(4.5))]);
        assert_eq!(paths[1], vec![(0, RawPredicate::Ge(4.5))]);
    }

    #[test]
    fn depth_two_tree_paths_match_hand_trace() {
        // y depends on x (0/1 split) then on z within x < 0.5
        let rows: Vec<Vec<i64>> = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        let targets = vec![0.0, 2.0, 10.0, 10.0];
        let data = TrainingData { rows, targets, numeric: vec![true, true] };
        let tree = grow_tree(&data, vec![0, 0, 1, 1, 2, 2, 3, 3], 2);
        let paths = tree.paths();
        assert_eq!(paths.len(), 3);
        assert_eq!(paths[0], vec![(0, RawPredicate::Lt(0.5)), (1, RawPredicate::Lt(0.5))]);
        assert_eq!(paths[1], vec![(0, RawPredicate::Lt(0.5)), (1, RawPredicate::Ge(0.5))]);
        assert_eq!(paths[2], vec![(0, RawPredicate::Ge(0.5))]);
    }

    #[test]
    fn single_leaf_tree_has_one_empty_path() {
        let space = int_space(&[(0, 3)]);
        let rows: Vec<(Vec<i64>, f64)> = (0..4).map(|i| (vec![i], 1.0)).collect();
        let forest = train(&space, &sample_set(&rows), 1, 1, 9).unwrap();
        let paths = forest.extract_paths();
        assert_eq!(paths, vec![RawPath::new()]);
    }

    #[test]
    fn aggregate_matches_hand_arithmetic() {
        // 2 trees predicting 4 and 6: mean 5, population stddev 1
        assert_eq!(aggregate(&[4.0, 6.0]), (5.0, 1.0));
        assert_eq!(aggregate(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn insufficient_data_is_rejected() {
        let space = int_space(&[(0, 9)]);
        let rows = vec![(vec![0], 1.0)];
        assert!(matches!(
            train(&space, &sample_set(&rows), 1, 1, 0),
            Err(ForestError::InsufficientData(1))
        ));
    }

    #[test]
    fn path_count_equals_leaf_count() {
        let space = int_space(&[(0, 5), (0, 4)]);
        let rows: Vec<(Vec<i64>, f64)> =
            (0..30).map(|i| (vec![i % 6, i / 6], (i % 7) as f64)).collect();
        let forest = train(&space, &sample_set(&rows), 2, 10, 5).unwrap();
        assert_eq!(forest.extract_paths().len(), forest.total_leaf_count());
    }

    #[test]
    fn every_leaf_holds_at_least_l_samples() {
        let space = int_space(&[(0, 7), (0, 4)]);
        let rows: Vec<(Vec<i64>, f64)> =
            (0..40).map(|i| (vec![i % 8, i / 8], ((i * 13) % 11) as f64)).collect();
        for l in [1, 3, 10] {
            let forest = train(&space, &sample_set(&rows), l, 20, 7).unwrap();
            for (_, count) in forest.leaves() {
                assert!(count >= l, "leaf with {count} samples under l={l}");
            }
        }
    }

    #[test]
    fn forest_mean_stays_within_target_range() {
        let space = int_space(&[(0, 4), (0, 4)]);
        let rows: Vec<(Vec<i64>, f64)> =
            (0..25).map(|i| (vec![i % 5, i / 5], ((i * 7) % 13) as f64)).collect();
        let set = sample_set(&rows);
        let forest = train(&space, &set, 2, 15, 21).unwrap();
        let lo = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        for i in 0..5 {
            for j in 0..5 {
                let (mean, _) = forest.predict(&Configuration::from_values(vec![i, j]));
                assert!(mean >= lo && mean <= hi);
            }
        }
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let space = int_space(&[(0, 5), (0, 4)]);
        let rows: Vec<(Vec<i64>, f64)> =
            (0..30).map(|i| (vec![i % 6, i / 6], ((i * 5) % 9) as f64)).collect();
        let set = sample_set(&rows);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let f1 = pool1.install(|| train(&space, &set, 2, 16, 77).unwrap());
        let f4 = pool4.install(|| train(&space, &set, 2, 16, 77).unwrap());
        assert_eq!(f1, f4);
    }

    #[test]
    fn identical_trees_dedupe_to_half_the_rules() {
        // constant targets make every tree a single leaf, so a 2-tree
        // forest produces 2 identical empty paths that dedupe to 1 rule
        let space = int_space(&[(0, 9)]);
        let rows: Vec<(Vec<i64>, f64)> = (0..6).map(|i| (vec![i], 3.0)).collect();
        let forest = train(&space, &sample_set(&rows), 1, 2, 13).unwrap();
        let paths = forest.extract_paths();
        assert_eq!(paths.len(), 2);
        let rules: Vec<_> =
            paths.iter().map(|p| canonicalize(p, &space).unwrap()).collect();
        assert_eq!(dedupe(rules).len(), 1);
    }

    #[test]
    fn enum_splits_partition_by_equality() {
        let data = TrainingData {
            rows: vec![vec![0], vec![1], vec![2]],
            targets: vec![0.0, 10.0, 10.0],
            numeric: vec![false],
        };
        let split = find_best_split(&data, &[0, 0, 1, 1, 2, 2], 1).unwrap();
        assert_eq!(split.predicate, SplitPredicate::EnumEq { value: 0 });
    }
}
