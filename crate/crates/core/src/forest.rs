//! Random forest of CART trees: Gini splits at midpoints between consecutive
//! distinct values, bootstrap samples per tree, random slot subsets per split,
//! and a majority vote with ties going to class 1.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureVector, Layout};
use crate::rng::{mix, rng_from, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    /// max(1, floor(sqrt(p)))
    Sqrt,
    All,
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, n_slots: usize) -> usize {
        let m = match self {
            FeaturesPerSplit::Sqrt => (n_slots as f64).sqrt().floor() as usize,
            FeaturesPerSplit::All => n_slots,
            FeaturesPerSplit::Count(m) => m,
        };
        m.clamp(1, n_slots.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub features_per_split: FeaturesPerSplit,
    /// Draw a bootstrap sample per tree; when false each tree sees every row.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 16,
            min_samples_leaf: 1,
            min_samples_split: 2,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Argument(what.to_owned()))
            }
        };
        check(self.n_trees >= 1, "n_trees must be ≥ 1")?;
        check(self.max_depth >= 1, "max_depth must be ≥ 1")?;
        check(self.min_samples_leaf >= 1, "min_samples_leaf must be ≥ 1")?;
        check(self.min_samples_split >= 2, "min_samples_split must be ≥ 2")?;
        check(
            !matches!(self.features_per_split, FeaturesPerSplit::Count(0)),
            "features_per_split must be ≥ 1",
        )
    }
}

/// Gini impurity 1 − p₀² − p₁² of a binary label multiset.
pub fn gini(labels: &[u8]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Argument("gini of an empty label set".into()));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    Ok(gini_counts(labels.len() - ones, ones))
}

fn gini_counts(zeros: usize, ones: usize) -> f64 {
    let n = (zeros + ones) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = zeros as f64 / n;
    let p1 = ones as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub slot: usize,
    pub threshold: f64,
    /// Size-weighted Gini impurity of the two children.
    pub impurity: f64,
}

const GAIN_EPS: f64 = 1e-12;

/// Exhaustive search over midpoints of consecutive distinct values of each
/// candidate slot. Returns the split with the lowest weighted child impurity
/// (ties: lower slot, then lower threshold), or `None` when nothing reduces
/// impurity while leaving at least `min_samples_leaf` rows on each side.
pub fn best_split(
    rows: &[Vec<f64>],
    labels: &[u8],
    candidate_slots: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    let idx: Vec<usize> = (0..rows.len()).collect();
    best_split_among(rows, labels, &idx, candidate_slots, min_samples_leaf)
}

fn best_split_among(
    rows: &[Vec<f64>],
    labels: &[u8],
    idx: &[usize],
    candidate_slots: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    let n = idx.len();
    if n < 2 {
        return None;
    }
    let total_ones = idx.iter().filter(|&&i| labels[i] == 1).count();
    let parent = gini_counts(n - total_ones, total_ones);
    if parent == 0.0 {
        return None;
    }

    let mut slots = candidate_slots.to_vec();
    slots.sort_unstable();
    slots.dedup();

    let mut best: Option<Split> = None;
    let mut order = idx.to_vec();
    for &slot in &slots {
        order.sort_by(|&a, &b| rows[a][slot].total_cmp(&rows[b][slot]));
        let mut left_ones = 0usize;
        for pos in 0..n - 1 {
            left_ones += usize::from(labels[order[pos]] == 1);
            let lo = rows[order[pos]][slot];
            let hi = rows[order[pos + 1]][slot];
            if lo == hi {
                continue;
            }
            let n_left = pos + 1;
            let n_right = n - n_left;
            if n_left < min_samples_leaf || n_right < min_samples_leaf {
                continue;
            }
            let right_ones = total_ones - left_ones;
            let impurity = (n_left as f64 * gini_counts(n_left - left_ones, left_ones)
                + n_right as f64 * gini_counts(n_right - right_ones, right_ones))
                / n as f64;
            if impurity >= parent - GAIN_EPS {
                continue;
            }
            if best.is_none_or(|b| impurity < b.impurity - GAIN_EPS) {
                best = Some(Split {
                    slot,
                    threshold: midpoint(lo, hi),
                    impurity,
                });
            }
        }
    }
    best
}

/// Midpoint of `lo < hi` that still routes `lo` left and `hi` right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// `value ≤ threshold` goes left.
    Internal {
        slot: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training rows per class, `[zeros, ones]`.
        counts: [usize; 2],
    },
}

impl Node {
    fn leaf_class(counts: [usize; 2]) -> u8 {
        u8::from(counts[1] >= counts[0])
    }
}

/// Binary tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf_for(&self, x: &[f64]) -> [usize; 2] {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Internal {
                    slot,
                    threshold,
                    left,
                    right,
                } => i = if x[slot] <= threshold { left } else { right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the leaf reached by `x` (leaf ties → 1).
    pub fn predict(&self, x: &[f64]) -> u8 {
        Node::leaf_class(self.leaf_for(x))
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Internal { .. })).count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts } => Some(*counts),
            Node::Internal { .. } => None,
        })
    }
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    params: &'a ForestParams,
    n_candidates: usize,
    rng: Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let ones = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        let counts = [idx.len() - ones, ones];
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });

        let pure = ones == 0 || ones == idx.len();
        if pure || depth >= self.params.max_depth || idx.len() < self.params.min_samples_split {
            return at;
        }
        let n_slots = self.rows[idx[0]].len();
        let mut slots = sample(&mut self.rng, n_slots, self.n_candidates).into_vec();
        slots.sort_unstable();
        let Some(split) = best_split_among(self.rows, self.labels, idx, &slots, self.params.min_samples_leaf)
        else {
            return at;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][split.slot] <= split.threshold);
        let left = self.grow(&left_idx, depth + 1);
        let right = self.grow(&right_idx, depth + 1);
        self.nodes[at] = Node::Internal {
            slot: split.slot,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

/// Grows one tree on all given rows; `tree_seed` drives the slot subsets.
pub fn train_tree(rows: &[Vec<f64>], labels: &[u8], params: &ForestParams, tree_seed: u64) -> Result<DecisionTree> {
    let idx: Vec<usize> = (0..rows.len()).collect();
    train_tree_on(rows, labels, &idx, params, rng_from(tree_seed))
}

fn train_tree_on(
    rows: &[Vec<f64>],
    labels: &[u8],
    idx: &[usize],
    params: &ForestParams,
    rng: Rng,
) -> Result<DecisionTree> {
    params.validate()?;
    if idx.is_empty() {
        return Err(Error::Argument("cannot grow a tree on zero rows".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Argument("rows and labels differ in length".into()));
    }
    let n_slots = rows[idx[0]].len();
    if n_slots == 0 {
        return Err(Error::Argument("rows have no slots".into()));
    }
    let mut g = Grower {
        rows,
        labels,
        params,
        n_candidates: params.features_per_split.resolve(n_slots),
        rng,
        nodes: Vec::new(),
    };
    g.grow(idx, 0);
    Ok(DecisionTree { nodes: g.nodes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub layout: Layout,
    pub layout_fingerprint: String,
    pub trees: Vec<DecisionTree>,
}

/// Tree `i` draws its bootstrap sample and slot subsets from
/// `mix(params.seed, i)`, so the forest does not depend on scheduling.
pub fn train_forest(matrix: &FeatureMatrix, params: &ForestParams) -> Result<RandomForest> {
    params.validate()?;
    if matrix.is_empty() {
        return Err(Error::Argument("cannot train a forest on an empty matrix".into()));
    }
    let rows = matrix.rows();
    let labels = matrix.labels();
    let n = rows.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(mix(params.seed, i as u64));
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            train_tree_on(rows, labels, &idx, params, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        params: *params,
        layout: (**matrix.layout()).clone(),
        layout_fingerprint: matrix.layout().fingerprint(),
        trees,
    })
}

impl RandomForest {
    fn check_layout(&self, x: &FeatureVector) -> Result<()> {
        if x.layout.fingerprint() != self.layout_fingerprint {
            return Err(Error::Layout("feature vector layout differs from the forest's".into()));
        }
        Ok(())
    }

    pub fn votes(&self, x: &[f64]) -> Vec<u8> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> u8 {
        majority(&self.votes(x))
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> f64 {
        let v = self.votes(x);
        v.iter().filter(|&&l| l == 1).count() as f64 / v.len() as f64
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<u8> {
        self.check_layout(x)?;
        Ok(self.predict_row(&x.values))
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        self.check_layout(x)?;
        Ok(self.predict_proba_row(&x.values))
    }

    pub fn predict_matrix(&self, m: &FeatureMatrix) -> Result<Vec<u8>> {
        if m.layout().fingerprint() != self.layout_fingerprint {
            return Err(Error::Layout("feature matrix layout differs from the forest's".into()));
        }
        Ok(m.rows().iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let forest: RandomForest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if forest.layout.fingerprint() != forest.layout_fingerprint {
            return Err(Error::Layout(format!("{}: layout fingerprint is stale", path.display())));
        }
        Ok(forest)
    }
}

/// Majority vote; an exact tie predicts 1.
pub fn majority(votes: &[u8]) -> u8 {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    u8::from(2 * ones >= votes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[0, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(gini(&[1, 1, 1]).unwrap(), 0.0);
        assert!((gini(&[0, 0, 0, 1]).unwrap() - 0.375).abs() < 1e-15);
        assert!(gini(&[]).is_err());
    }

    #[test]
    fn best_split_finds_clean_cut() {
        // midpoints 1.5, 2.5, 3.5 give weighted impurity 1/3, 0, 1/3
        let s = best_split(&col(&[1.0, 2.0, 3.0, 4.0]), &[0, 0, 1, 1], &[0], 1).unwrap();
        assert_eq!(s.slot, 0);
        assert_eq!(s.threshold, 2.5);
        assert_eq!(s.impurity, 0.0);
    }

    #[test]
    fn best_split_none_cases() {
        assert!(best_split(&col(&[1.0, 2.0, 3.0]), &[1, 1, 1], &[0], 1).is_none());
        assert!(best_split(&col(&[5.0, 5.0]), &[0, 1], &[0], 1).is_none());
        // only split leaves a single row on one side
        assert!(best_split(&col(&[1.0, 2.0, 3.0, 4.0]), &[0, 0, 1, 1], &[0], 3).is_none());
    }

    #[test]
    fn best_split_tie_prefers_lower_slot() {
        let rows = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![4.0, 4.0]];
        let s = best_split(&rows, &[0, 0, 1, 1], &[1, 0], 1).unwrap();
        assert_eq!(s.slot, 0);
    }

    #[test]
    fn midpoint_stays_between_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
    }

    fn params() -> ForestParams {
        ForestParams {
            n_trees: 1,
            max_depth: 16,
            features_per_split: FeaturesPerSplit::All,
            bootstrap: false,
            ..ForestParams::default()
        }
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let t = train_tree(&col(&[1.0, 2.0, 3.0]), &[1, 1, 1], &params(), 0).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { counts: [0, 3] }]);
    }

    #[test]
    fn clean_cut_gives_depth_one_tree() {
        let t = train_tree(&col(&[1.0, 2.0, 3.0, 4.0]), &[0, 0, 1, 1], &params(), 0).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.n_internal(), 1);
        let leaves: Vec<_> = t.leaves().collect();
        assert_eq!(leaves, vec![[2, 0], [0, 2]]);
        assert_eq!(t.predict(&[2.5]), 0);
        assert_eq!(t.predict(&[2.6]), 1);
    }

    #[test]
    fn depth_cap_limits_internal_nodes() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<u8> = (0..20).map(|i| (i % 3 == 0) as u8).collect();
        let p = ForestParams {
            max_depth: 1,
            ..params()
        };
        let t = train_tree(&col(&xs), &ys, &p, 4).unwrap();
        assert!(t.n_internal() <= 1);
    }

    #[test]
    fn majority_votes() {
        assert_eq!(majority(&[1, 1, 0]), 1);
        assert_eq!(majority(&[0, 0, 0, 0]), 0);
        assert_eq!(majority(&[1, 0]), 1);
    }

    #[test]
    fn params_validation() {
        assert!(ForestParams { n_trees: 0, ..params() }.validate().is_err());
        assert!(ForestParams { min_samples_split: 1, ..params() }.validate().is_err());
        assert!(ForestParams {
            features_per_split: FeaturesPerSplit::Count(0),
            ..params()
        }
        .validate()
        .is_err());
        assert_eq!(FeaturesPerSplit::Sqrt.resolve(11), 3);
        assert_eq!(FeaturesPerSplit::Count(40).resolve(11), 11);
    }
}
