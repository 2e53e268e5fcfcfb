//! Regression random forest: bootstrapped, unpruned CART trees with random
//! feature subsampling at every node.
//!
//! Each tree draws from its own ChaCha stream (`seed`, tree index), so the
//! ensemble is identical whatever the rayon pool size. Aggregation always
//! sums tree outputs in tree-index order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub ntree: usize,
    /// Candidate predictors per node; `None` means `floor(sqrt(p))`, at least 1.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            ntree: 100,
            mtry: None,
            min_node_size: 5,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, n_predictors: usize) -> Result<usize> {
        let mtry = self
            .mtry
            .unwrap_or_else(|| ((n_predictors as f64).sqrt().floor() as usize).max(1));
        if mtry == 0 || mtry > n_predictors {
            return Err(Error::InvalidParameter(format!(
                "mtry must lie in 1..={n_predictors}, got {mtry}"
            )));
        }
        Ok(mtry)
    }

    fn validate(&self) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::InvalidParameter("ntree must be at least 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidParameter(
                "min_node_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Dense predictor matrix stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl Features {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || n_rows == 0 {
            return Err(Error::Shape("predictor matrix is empty".into()));
        }
        for (c, column) in columns.iter().enumerate() {
            if column.len() != n_rows {
                return Err(Error::Shape(format!(
                    "predictor column {c} has {} rows, expected {n_rows}",
                    column.len()
                )));
            }
            if let Some(r) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
        Ok(Self { n_rows, columns })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::RaggedRow {
                    row: r,
                    expected: p,
                    found: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                columns[c].push(v);
            }
        }
        Self::from_columns(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        prediction: f64,
        size: usize,
    },
    /// Rows with `x[col] <= threshold` go left.
    Split {
        col: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Predictors sampled as split candidates at this node (mtry).
        n_candidates: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    /// How often each training row was drawn into the bootstrap sample.
    in_bag: Vec<u32>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn in_bag_counts(&self) -> &[u32] {
        &self.in_bag
    }

    pub fn is_out_of_bag(&self, row: usize) -> bool {
        self.in_bag[row] == 0
    }

    fn predict_row(&self, x: &Features, row: usize) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { prediction, .. } => return prediction,
                Node::Split {
                    col,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if x.get(row, col) <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionForest {
    trees: Vec<RegressionTree>,
    params: ForestParams,
    n_predictors: usize,
    oob_mse: Option<f64>,
}

impl RegressionForest {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    /// Parameters with `mtry` resolved for the training predictors.
    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    /// Out-of-bag MSE on the training data; `None` if no row was ever out of bag.
    pub fn oob_mse(&self) -> Option<f64> {
        self.oob_mse
    }

    /// Mean prediction of the trees for which each training row was out of bag.
    pub fn oob_predictions(&self, x: &Features) -> Result<Vec<Option<f64>>> {
        self.check_input(x)?;
        if let Some(tree) = self.trees.first() {
            if tree.in_bag.len() != x.n_rows() {
                return Err(Error::Shape(format!(
                    "forest was trained on {} rows, got {}",
                    tree.in_bag.len(),
                    x.n_rows()
                )));
            }
        }
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|row| {
                let (sum, count) = self
                    .trees
                    .iter()
                    .filter(|t| t.is_out_of_bag(row))
                    .fold((0.0, 0usize), |(s, k), t| {
                        (s + t.predict_row(x, row), k + 1)
                    });
                (count > 0).then(|| sum / count as f64)
            })
            .collect())
    }

    fn check_input(&self, x: &Features) -> Result<()> {
        if x.n_cols() != self.n_predictors {
            return Err(Error::Shape(format!(
                "forest expects {} predictors, got {}",
                self.n_predictors,
                x.n_cols()
            )));
        }
        Ok(())
    }
}

pub fn fit_forest(x: &Features, y: &[f64], params: &ForestParams) -> Result<RegressionForest> {
    params.validate()?;
    if y.len() != x.n_rows() {
        return Err(Error::Shape(format!(
            "response has {} entries, predictors have {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if let Some(r) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: r, col: 0 });
    }
    let mtry = params.resolved_mtry(x.n_cols())?;
    let resolved = ForestParams {
        mtry: Some(mtry),
        ..params.clone()
    };

    let trees: Vec<RegressionTree> = (0..params.ntree)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            grow_tree(x, y, mtry, params.min_node_size, &mut rng)
        })
        .collect();

    let mut forest = RegressionForest {
        trees,
        params: resolved,
        n_predictors: x.n_cols(),
        oob_mse: None,
    };
    forest.oob_mse = mse_over_defined(&forest.oob_predictions(x)?, y);
    Ok(forest)
}

pub fn predict_forest(forest: &RegressionForest, x_new: &Features) -> Result<Vec<f64>> {
    forest.check_input(x_new)?;
    let ntree = forest.trees.len() as f64;
    Ok((0..x_new.n_rows())
        .into_par_iter()
        .map(|row| {
            forest
                .trees
                .iter()
                .map(|t| t.predict_row(x_new, row))
                .sum::<f64>()
                / ntree
        })
        .collect())
}

/// OOB mean squared error of `forest` on its training data (`x`, `y`).
pub fn oob_error(forest: &RegressionForest, x: &Features, y: &[f64]) -> Result<Option<f64>> {
    if y.len() != x.n_rows() {
        return Err(Error::Shape(format!(
            "response has {} entries, predictors have {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    Ok(mse_over_defined(&forest.oob_predictions(x)?, y))
}

fn mse_over_defined(pred: &[Option<f64>], y: &[f64]) -> Option<f64> {
    let (sum, count) = pred
        .iter()
        .zip(y)
        .filter_map(|(p, &t)| p.map(|p| (p - t).powi(2)))
        .fold((0.0, 0usize), |(s, k), e| (s + e, k + 1));
    (count > 0).then(|| sum / count as f64)
}

struct SplitChoice {
    col: usize,
    threshold: f64,
    gain: f64,
}

fn grow_tree(
    x: &Features,
    y: &[f64],
    mtry: usize,
    min_node_size: usize,
    rng: &mut ChaCha8Rng,
) -> RegressionTree {
    let n = x.n_rows();
    let mut in_bag = vec![0u32; n];
    let mut rows: Vec<usize> = (0..n)
        .map(|_| {
            let r = rng.gen_range(0..n);
            in_bag[r] += 1;
            r
        })
        .collect();

    let mut builder = TreeBuilder {
        x,
        y,
        mtry,
        min_node_size,
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(n),
    };
    builder.grow(&mut rows);
    RegressionTree {
        nodes: builder.nodes,
        in_bag,
    }
}

struct TreeBuilder<'a> {
    x: &'a Features,
    y: &'a [f64],
    mtry: usize,
    min_node_size: usize,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: &mut [usize]) -> usize {
        let idx = self.nodes.len();
        let size = rows.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / size as f64;
        self.nodes.push(Node::Leaf {
            prediction: mean,
            size,
        });

        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == first);
        if size <= self.min_node_size || pure {
            return idx;
        }

        let mut candidates =
            rand::seq::index::sample(&mut *self.rng, self.x.n_cols(), self.mtry).into_vec();
        candidates.sort_unstable();
        let Some(split) = self.best_split(rows, &candidates, mean) else {
            return idx;
        };

        let mut left_len = 0;
        for i in 0..size {
            if self.x.get(rows[i], split.col) <= split.threshold {
                rows.swap(i, left_len);
                left_len += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(left_len);
        let left = self.grow(left_rows);
        let right = self.grow(right_rows);
        self.nodes[idx] = Node::Split {
            col: split.col,
            threshold: split.threshold,
            left,
            right,
            n_candidates: candidates.len(),
        };
        idx
    }

    /// Exhaustive search over midpoints between consecutive distinct values.
    /// Candidates are scanned in ascending column order and thresholds in
    /// ascending order; only a strictly larger gain replaces the incumbent.
    fn best_split(
        &mut self,
        rows: &[usize],
        candidates: &[usize],
        mean: f64,
    ) -> Option<SplitChoice> {
        let n = rows.len() as f64;
        let mut best: Option<SplitChoice> = None;
        for &col in candidates {
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&r| (self.x.get(r, col), self.y[r] - mean)));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (lo, hi) = (self.scratch[0].0, self.scratch[rows.len() - 1].0);
            if lo == hi {
                continue;
            }
            let total: f64 = self.scratch.iter().map(|p| p.1).sum();
            let base = total * total / n;
            let mut left_sum = 0.0;
            for i in 0..rows.len() - 1 {
                left_sum += self.scratch[i].1;
                let (a, b) = (self.scratch[i].0, self.scratch[i + 1].0);
                if a == b {
                    continue;
                }
                let n_left = (i + 1) as f64;
                let right_sum = total - left_sum;
                let gain =
                    left_sum * left_sum / n_left + right_sum * right_sum / (n - n_left) - base;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(SplitChoice {
                        col,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_column(values: &[f64]) -> Features {
        Features::from_columns(vec![values.to_vec()]).unwrap()
    }

    #[test]
    fn constant_response_predicts_constant() {
        let x = Features::from_columns(vec![
            (0..30).map(f64::from).collect(),
            (0..30).map(|i| (i * 7 % 11) as f64).collect(),
        ])
        .unwrap();
        let y = vec![7.0; 30];
        let forest = fit_forest(&x, &y, &ForestParams::default()).unwrap();
        for tree in forest.trees() {
            for node in tree.nodes() {
                match node {
                    Node::Leaf { prediction, .. } => assert_eq!(*prediction, 7.0),
                    Node::Split { .. } => panic!("pure node was split"),
                }
            }
        }
        let probe = Features::from_rows(&[vec![-5.0, 3.0], vec![100.0, 0.0]]).unwrap();
        assert_eq!(predict_forest(&forest, &probe).unwrap(), vec![7.0, 7.0]);
        assert_eq!(forest.oob_mse(), Some(0.0));
    }

    #[test]
    fn splits_partition_rows_strictly() {
        let x = one_column(&[1.0, 1.0, 2.0, 3.0, 3.0, 4.0]);
        let y = [0.0, 0.5, 1.0, 5.0, 5.5, 6.0];
        let params = ForestParams {
            ntree: 20,
            min_node_size: 1,
            ..Default::default()
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        for tree in forest.trees() {
            for node in tree.nodes() {
                if let Node::Split { threshold, .. } = node {
                    // Thresholds are midpoints of two distinct observed values.
                    let values = [1.0, 2.0, 3.0, 4.0];
                    let is_midpoint = values
                        .iter()
                        .any(|a| values.iter().any(|b| a < b && (a + b) / 2.0 == *threshold));
                    assert!(is_midpoint, "{threshold}");
                }
            }
        }
    }

    #[test]
    fn two_row_single_tree_fits_training_rows() {
        // Hand trace: bootstrap of 2 rows drawn with seed 0; whenever both
        // rows are drawn the root splits at 1.5 into two pure leaves.
        let x = one_column(&[1.0, 2.0]);
        let y = [10.0, 20.0];
        let mut seed = 0;
        let forest = loop {
            let params = ForestParams {
                ntree: 1,
                mtry: Some(1),
                min_node_size: 1,
                seed,
            };
            let forest = fit_forest(&x, &y, &params).unwrap();
            if forest.trees()[0].in_bag_counts() == [1, 1] {
                break forest;
            }
            seed += 1;
        };
        assert_eq!(
            forest.trees()[0].nodes()[0],
            Node::Split {
                col: 0,
                threshold: 1.5,
                left: 1,
                right: 2,
                n_candidates: 1
            }
        );
        assert_eq!(predict_forest(&forest, &x).unwrap(), vec![10.0, 20.0]);
    }

    #[test]
    fn tie_break_prefers_lowest_column() {
        // Two identical predictors give identical gains.
        let col: Vec<f64> = (0..12).map(f64::from).collect();
        let x = Features::from_columns(vec![col.clone(), col]).unwrap();
        let y: Vec<f64> = (0..12).map(|i| if i < 6 { 0.0 } else { 1.0 }).collect();
        let params = ForestParams {
            ntree: 10,
            mtry: Some(2),
            min_node_size: 1,
            seed: 3,
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        for tree in forest.trees() {
            if let Node::Split { col, .. } = tree.nodes()[0] {
                assert_eq!(col, 0);
            }
        }
    }

    #[test]
    fn mtry_one_offers_single_candidate() {
        let x = Features::from_columns(
            (0..5)
                .map(|c| (0..40).map(|r| ((r * (c + 3)) % 17) as f64).collect())
                .collect(),
        )
        .unwrap();
        let y: Vec<f64> = (0..40).map(|r| (r % 9) as f64).collect();
        let params = ForestParams {
            ntree: 5,
            mtry: Some(1),
            min_node_size: 2,
            seed: 1,
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        let mut splits = 0;
        for tree in forest.trees() {
            for node in tree.nodes() {
                if let Node::Split { n_candidates, .. } = node {
                    assert_eq!(*n_candidates, 1);
                    splits += 1;
                }
            }
        }
        assert!(splits > 0);
    }

    #[test]
    fn leaves_hold_in_bag_means_and_respect_min_node_size() {
        let x = one_column(&(0..50).map(|i| ((i * 37) % 50) as f64).collect::<Vec<_>>());
        let y: Vec<f64> = (0..50).map(|i| ((i * 13) % 7) as f64).collect();
        let params = ForestParams {
            ntree: 3,
            min_node_size: 5,
            ..Default::default()
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        for tree in forest.trees() {
            let total: usize = tree
                .nodes()
                .iter()
                .map(|n| match n {
                    Node::Leaf { size, .. } => *size,
                    _ => 0,
                })
                .sum();
            assert_eq!(total, 50);
            // Every split node had more than min_node_size rows, so each of
            // its children holds at least one row.
            for node in tree.nodes() {
                if let Node::Leaf { size, .. } = node {
                    assert!(*size >= 1);
                }
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let x = Features::from_columns(
            (0..4)
                .map(|c| {
                    (0..60)
                        .map(|r| ((r * (2 * c + 5)) % 23) as f64 * 0.5)
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let y: Vec<f64> = (0..60).map(|r| (r as f64).sin()).collect();
        let params = ForestParams::default();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let f = fit_forest(&x, &y, &params).unwrap();
                (predict_forest(&f, &x).unwrap(), f.oob_mse())
            })
        };
        let (p1, o1) = run(1);
        let (p4, o4) = run(4);
        assert_eq!(
            p1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            p4.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(o1.map(f64::to_bits), o4.map(f64::to_bits));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = one_column(&[1.0, 2.0, 3.0]);
        assert!(fit_forest(&x, &[1.0, 2.0], &ForestParams::default()).is_err());
        assert!(matches!(
            fit_forest(&x, &[1.0, f64::NAN, 2.0], &ForestParams::default()),
            Err(Error::NonFinite { .. })
        ));
        let bad_mtry = ForestParams {
            mtry: Some(2),
            ..Default::default()
        };
        assert!(fit_forest(&x, &[1.0, 2.0, 3.0], &bad_mtry).is_err());
        assert!(Features::from_columns(vec![]).is_err());
        assert!(Features::from_columns(vec![vec![1.0, f64::INFINITY]]).is_err());

        let forest = fit_forest(&x, &[1.0, 2.0, 3.0], &ForestParams::default()).unwrap();
        let wide = Features::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(predict_forest(&forest, &wide).is_err());
    }

    #[test]
    fn default_mtry_is_floor_sqrt() {
        let p = ForestParams::default();
        assert_eq!(p.resolved_mtry(1).unwrap(), 1);
        assert_eq!(p.resolved_mtry(3).unwrap(), 1);
        assert_eq!(p.resolved_mtry(19).unwrap(), 4);
        assert_eq!(p.resolved_mtry(253).unwrap(), 15);
    }
}
