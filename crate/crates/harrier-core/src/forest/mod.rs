//! Random forest classifier over feature vectors, with per-sample
//! out-of-bag probability estimates used downstream for emission
//! training. Trees use axis-aligned threshold splits chosen by Gini
//! impurity; prediction aggregates leaf class-frequency vectors (soft
//! voting). Training is deterministic for a given (data, config) and
//! independent of thread count.

mod io;

pub use io::{load_forest, save_forest};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FEATURE_MANIFEST_VERSION, FEATURE_NAMES};
use crate::label::{argmax_label, IntensityLabel, N_CLASSES};

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Shape {
                expected: format!("{n_rows}x{n_cols}"),
                got: format!("{} values", values.len()),
            });
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows(rows: &[crate::features::FeatureVector]) -> Self {
        let n_cols = crate::features::N_FEATURES;
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            values.extend_from_slice(&r.values);
        }
        FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            values,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 1000,
            max_features: 7,
            max_depth: None,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

/// Flattened tree node. `feature < 0` marks a leaf; children always
/// have larger indices than their parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub feature: i32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub counts: [u32; N_CLASSES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Routes a feature row to its leaf (x <= threshold goes left).
    pub fn leaf_for(&self, row: &[f64]) -> &TreeNode {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.feature < 0 {
                return node;
            }
            idx = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    fn leaf_probs(&self, row: &[f64]) -> [f64; N_CLASSES] {
        let leaf = self.leaf_for(row);
        let total: u32 = leaf.counts.iter().sum();
        std::array::from_fn(|c| leaf.counts[c] as f64 / total as f64)
    }
}

/// Out-of-bag class-probability estimates for the training rows. Rows
/// that landed in every bootstrap have no estimate and are masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct OobEstimates {
    pub probs: Vec<[f64; N_CLASSES]>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
    pub manifest_version: String,
    pub trees: Vec<Tree>,
    pub oob: OobEstimates,
    /// Bootstrap membership per tree (not persisted).
    pub in_bag: Vec<Vec<bool>>,
}

/// Per-tree RNG stream keyed on (seed, tree index) so parallel and
/// serial training agree and distinct seeds give disjoint streams.
fn tree_rng(seed: u64, tree_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tree_index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    labels: &'a [u8],
    max_features: usize,
    min_samples_leaf: usize,
    max_depth: Option<usize>,
}

impl TreeBuilder<'_> {
    fn class_counts(&self, idx: &[u32]) -> [u32; N_CLASSES] {
        let mut counts = [0u32; N_CLASSES];
        for &i in idx {
            counts[self.labels[i as usize] as usize] += 1;
        }
        counts
    }

    fn build(&self, rng: &mut ChaCha8Rng, idx: Vec<u32>) -> Tree {
        let mut nodes = Vec::new();
        self.build_node(rng, idx, 0, &mut nodes);
        Tree { nodes }
    }

    fn build_node(
        &self,
        rng: &mut ChaCha8Rng,
        idx: Vec<u32>,
        depth: usize,
        nodes: &mut Vec<TreeNode>,
    ) -> u32 {
        let counts = self.class_counts(&idx);
        let node_index = nodes.len() as u32;
        nodes.push(TreeNode {
            feature: -1,
            threshold: 0.0,
            left: 0,
            right: 0,
            counts,
        });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_stop = self.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_stop || idx.len() < 2 * self.min_samples_leaf.max(1) {
            return node_index;
        }

        let Some((feature, threshold)) = self.best_split(rng, &idx) else {
            return node_index;
        };

        let mut left_idx = Vec::new();
        let mut right_idx = Vec::new();
        for &i in &idx {
            if self.x.row(i as usize)[feature] <= threshold {
                left_idx.push(i);
            } else {
                right_idx.push(i);
            }
        }
        drop(idx);
        let left = self.build_node(rng, left_idx, depth + 1, nodes);
        let right = self.build_node(rng, right_idx, depth + 1, nodes);
        let node = &mut nodes[node_index as usize];
        node.feature = feature as i32;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        node_index
    }

    /// Samples `max_features` features without replacement and returns
    /// the best Gini split among them. Candidate thresholds are
    /// midpoints between consecutive distinct sorted values. Ties keep
    /// the first candidate in sampled order.
    fn best_split(&self, rng: &mut ChaCha8Rng, idx: &[u32]) -> Option<(usize, f64)> {
        let n_cols = self.x.n_cols;
        let mtry = self.max_features.min(n_cols);
        let mut pool: Vec<usize> = (0..n_cols).collect();
        for k in 0..mtry {
            let j = rng.random_range(k..n_cols);
            pool.swap(k, j);
        }

        let n = idx.len();
        let msl = self.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, u8)> = Vec::with_capacity(n);
        for &feature in &pool[..mtry] {
            vals.clear();
            for &i in idx {
                vals.push((self.x.row(i as usize)[feature], self.labels[i as usize]));
            }
            vals.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left = [0u32; N_CLASSES];
            let mut right = self.class_counts(idx);
            for i in 0..n - 1 {
                let c = vals[i].1 as usize;
                left[c] += 1;
                right[c] -= 1;
                if vals[i].0 >= vals[i + 1].0 {
                    continue;
                }
                let n_left = (i + 1) as f64;
                let n_right = (n - i - 1) as f64;
                if (i + 1) < msl || (n - i - 1) < msl {
                    continue;
                }
                let sum_sq = |c: &[u32; N_CLASSES]| {
                    c.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>()
                };
                // Maximizing sum of squared class fractions minimizes
                // the weighted Gini impurity.
                let score = sum_sq(&left) / n_left + sum_sq(&right) / n_right;
                if best.is_none_or(|(s, _, _)| score > s) {
                    let (a, b) = (vals[i].0, vals[i + 1].0);
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a; // midpoint rounded up to b; keep split non-empty
                    }
                    best = Some((score, feature, threshold));
                }
            }
        }
        best.map(|(_, feature, threshold)| (feature, threshold))
    }
}

fn validate_features(x: &FeatureMatrix) -> Result<()> {
    if let Some(pos) = x.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!(
            "non-finite feature value at row {}, column {}",
            pos / x.n_cols,
            pos % x.n_cols
        )));
    }
    Ok(())
}

/// Trains a forest: each tree fits a bootstrap sample (n draws with
/// replacement) with `max_features` candidate features per node.
pub fn train_forest(
    x: &FeatureMatrix,
    labels: &[IntensityLabel],
    config: &ForestConfig,
) -> Result<ForestModel> {
    if x.n_rows != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", x.n_rows),
            got: format!("{}", labels.len()),
        });
    }
    if x.n_rows < 2 {
        return Err(Error::Input("need at least 2 training rows".into()));
    }
    if config.n_trees == 0 || config.max_features == 0 {
        return Err(Error::Config("n_trees and max_features must be positive".into()));
    }
    if config.max_features > x.n_cols {
        return Err(Error::Config(format!(
            "max_features {} exceeds feature count {}",
            config.max_features, x.n_cols
        )));
    }
    validate_features(x)?;
    let label_ids: Vec<u8> = labels.iter().map(|l| l.index() as u8).collect();
    {
        let mut seen = [false; N_CLASSES];
        for &l in &label_ids {
            seen[l as usize] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::DegenerateTraining(
                "training labels contain a single class".into(),
            ));
        }
    }

    let n = x.n_rows;
    let builder = TreeBuilder {
        x,
        labels: &label_ids,
        max_features: config.max_features,
        min_samples_leaf: config.min_samples_leaf,
        max_depth: config.max_depth,
    };

    let trained: Vec<(Tree, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(config.seed, t as u64);
            let mut in_bag = vec![false; n];
            let mut idx = Vec::with_capacity(n);
            for _ in 0..n {
                let i = rng.random_range(0..n);
                in_bag[i] = true;
                idx.push(i as u32);
            }
            (builder.build(&mut rng, idx), in_bag)
        })
        .collect();

    // Serial OOB accumulation in tree order keeps results independent
    // of the parallel schedule.
    let mut oob_sum = vec![[0.0f64; N_CLASSES]; n];
    let mut oob_count = vec![0u32; n];
    for (tree, in_bag) in &trained {
        for i in 0..n {
            if !in_bag[i] {
                let p = tree.leaf_probs(x.row(i));
                for c in 0..N_CLASSES {
                    oob_sum[i][c] += p[c];
                }
                oob_count[i] += 1;
            }
        }
    }
    let valid: Vec<bool> = oob_count.iter().map(|&c| c > 0).collect();
    let probs: Vec<[f64; N_CLASSES]> = oob_sum
        .iter()
        .zip(&oob_count)
        .map(|(sum, &cnt)| {
            if cnt > 0 {
                std::array::from_fn(|c| sum[c] / cnt as f64)
            } else {
                [0.0; N_CLASSES]
            }
        })
        .collect();

    let (trees, in_bag) = trained.into_iter().unzip();
    Ok(ForestModel {
        config: config.clone(),
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        manifest_version: FEATURE_MANIFEST_VERSION.to_string(),
        trees,
        oob: OobEstimates { probs, valid },
        in_bag,
    })
}

/// Average of the leaf class-frequency vectors over all trees; each row
/// sums to 1 within float error.
pub fn predict_proba(model: &ForestModel, x: &FeatureMatrix) -> Result<Vec<[f64; N_CLASSES]>> {
    if x.n_cols != model.feature_names.len() {
        return Err(Error::Shape {
            expected: format!("{} feature columns", model.feature_names.len()),
            got: format!("{}", x.n_cols),
        });
    }
    validate_features(x)?;
    let n_trees = model.trees.len() as f64;
    Ok((0..x.n_rows)
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let mut acc = [0.0f64; N_CLASSES];
            for tree in &model.trees {
                let p = tree.leaf_probs(row);
                for c in 0..N_CLASSES {
                    acc[c] += p[c];
                }
            }
            std::array::from_fn(|c| acc[c] / n_trees)
        })
        .collect())
}

/// Argmax of `predict_proba` per row, ties toward the lower canonical
/// label index.
pub fn predict_labels(model: &ForestModel, x: &FeatureMatrix) -> Result<Vec<IntensityLabel>> {
    Ok(predict_proba(model, x)?.iter().map(argmax_label).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::ALL_LABELS;

    /// Separable toy data: feature 0 decides sleep vs light, the rest
    /// is noise.
    fn separable(n: usize, seed: u64) -> (FeatureMatrix, Vec<IntensityLabel>) {
        let mut rng = tree_rng(seed, 999);
        let n_cols = 10;
        let mut values = Vec::with_capacity(n * n_cols);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let f0: f64 = rng.random_range(-1.0..1.0);
            labels.push(if f0 < 0.0 {
                IntensityLabel::Sleep
            } else {
                IntensityLabel::Light
            });
            values.push(f0);
            for _ in 1..n_cols {
                values.push(rng.random_range(-1.0..1.0));
            }
        }
        (FeatureMatrix::new(n, n_cols, values).unwrap(), labels)
    }

    fn small_config() -> ForestConfig {
        ForestConfig {
            n_trees: 50,
            max_features: 3,
            max_depth: None,
            min_samples_leaf: 1,
            seed: 7,
        }
    }

    #[test]
    fn oob_accuracy_on_separable_data() {
        let (x, labels) = separable(100, 1);
        let model = train_forest(&x, &labels, &small_config()).unwrap();
        let mut correct = 0;
        let mut total = 0;
        for i in 0..x.n_rows {
            if model.oob.valid[i] {
                total += 1;
                if argmax_label(&model.oob.probs[i]) == labels[i] {
                    correct += 1;
                }
            }
        }
        assert!(total > 90, "almost every row should have OOB trees");
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.95, "OOB accuracy {acc}");
    }

    #[test]
    fn oob_rows_sum_to_one_and_masking_holds() {
        let (x, labels) = separable(60, 2);
        let model = train_forest(&x, &labels, &small_config()).unwrap();
        for i in 0..x.n_rows {
            if model.oob.valid[i] {
                let s: f64 = model.oob.probs[i].iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "row {i} sums to {s}");
            }
        }
        // Recompute OOB from scratch using only out-of-bag trees; any
        // in-bag contribution would break the equality.
        for i in 0..x.n_rows {
            let mut acc = [0.0; N_CLASSES];
            let mut cnt = 0u32;
            for (tree, in_bag) in model.trees.iter().zip(&model.in_bag) {
                if !in_bag[i] {
                    let p = tree.leaf_probs(x.row(i));
                    for c in 0..N_CLASSES {
                        acc[c] += p[c];
                    }
                    cnt += 1;
                }
            }
            assert_eq!(cnt > 0, model.oob.valid[i]);
            if cnt > 0 {
                for c in 0..N_CLASSES {
                    assert!((acc[c] / cnt as f64 - model.oob.probs[i][c]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn identical_features_give_single_leaf_and_class_frequencies() {
        let n = 40;
        let x = FeatureMatrix::new(n, 5, vec![0.5; n * 5]).unwrap();
        let labels: Vec<IntensityLabel> = (0..n).map(|i| ALL_LABELS[i % 3]).collect();
        let model = train_forest(&x, &labels, &small_config()).unwrap();
        // No split is possible: every tree is a single leaf whose
        // probabilities are its bootstrap class frequencies.
        let mut expect = [0.0f64; N_CLASSES];
        for (tree, in_bag) in model.trees.iter().zip(&model.in_bag) {
            assert_eq!(tree.nodes.len(), 1, "every tree is a single leaf");
            let leaf = &tree.nodes[0];
            let total: u32 = leaf.counts.iter().sum();
            assert_eq!(total as usize, n, "bootstrap draws n samples");
            assert!(in_bag.iter().any(|&b| b));
            for c in 0..N_CLASSES {
                expect[c] += leaf.counts[c] as f64 / total as f64;
            }
        }
        for e in &mut expect {
            *e /= model.trees.len() as f64;
        }
        let probs = predict_proba(&model, &x).unwrap();
        for row in &probs {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            for c in 0..N_CLASSES {
                assert!((row[c] - expect[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (x, labels) = separable(80, 3);
        let cfg = small_config();
        let a = train_forest(&x, &labels, &cfg).unwrap();
        let b = train_forest(&x, &labels, &cfg).unwrap();
        assert_eq!(a.trees.len(), b.trees.len());
        for (ta, tb) in a.trees.iter().zip(&b.trees) {
            assert_eq!(ta, tb);
        }
        assert_eq!(a.oob, b.oob);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = FeatureMatrix::new(4, 2, vec![0.0; 8]).unwrap();
        let labels = vec![IntensityLabel::Sleep; 4];
        assert!(matches!(
            train_forest(&x, &labels, &small_config()),
            Err(Error::DegenerateTraining(_))
        ));
    }

    #[test]
    fn non_finite_feature_is_input_error() {
        let mut values = vec![0.0; 8];
        values[3] = f64::NAN;
        let x = FeatureMatrix::new(4, 2, values).unwrap();
        let labels = vec![
            IntensityLabel::Sleep,
            IntensityLabel::Light,
            IntensityLabel::Sleep,
            IntensityLabel::Light,
        ];
        assert!(matches!(
            train_forest(&x, &labels, &small_config()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn predictions_are_confident_on_separable_side() {
        let (x, labels) = separable(200, 4);
        let model = train_forest(&x, &labels, &small_config()).unwrap();
        let mut query = vec![0.0; 10];
        query[0] = -0.9; // clearly on the sleep side
        let q = FeatureMatrix::new(1, 10, query).unwrap();
        let probs = predict_proba(&model, &q).unwrap();
        assert!(probs[0][0] >= 0.95, "sleep prob {}", probs[0][0]);
        assert_eq!(
            predict_labels(&model, &q).unwrap(),
            vec![IntensityLabel::Sleep]
        );

        let preds = predict_labels(&model, &x).unwrap();
        let correct = preds.iter().zip(&labels).filter(|(a, b)| a == b).count();
        assert!(correct >= 195, "{correct}/200 correct");
    }

    #[test]
    fn single_tree_pure_leaf_is_one_hot() {
        let (x, labels) = separable(50, 5);
        let cfg = ForestConfig {
            n_trees: 1,
            ..small_config()
        };
        let model = train_forest(&x, &labels, &cfg).unwrap();
        let mut query = vec![0.0; 10];
        query[0] = 0.95;
        let q = FeatureMatrix::new(1, 10, query).unwrap();
        let probs = predict_proba(&model, &q).unwrap();
        assert_eq!(probs[0], [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn column_mismatch_is_shape_error() {
        let (x, labels) = separable(30, 6);
        let model = train_forest(&x, &labels, &small_config()).unwrap();
        let q = FeatureMatrix::new(1, 4, vec![0.0; 4]).unwrap();
        assert!(matches!(
            predict_proba(&model, &q),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn parallel_and_serial_training_agree() {
        let (x, labels) = separable(60, 8);
        let cfg = small_config();
        let serial_pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = serial_pool.install(|| train_forest(&x, &labels, &cfg).unwrap());
        let b = train_forest(&x, &labels, &cfg).unwrap();
        for (ta, tb) in a.trees.iter().zip(&b.trees) {
            assert_eq!(ta, tb);
        }
        assert_eq!(a.oob, b.oob);
    }
}
