use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mifo_core::forest::Node;
use mifo_core::{fit_forest, oob_error, predict_forest, Features, ForestParams};

fn params(ntree: usize, mtry: Option<usize>, min_node_size: usize, seed: u64) -> ForestParams {
    ForestParams {
        ntree,
        mtry,
        min_node_size,
        seed,
    }
}

/// Best single split of one column by exhaustive search over midpoints,
/// minimizing the summed squared deviation of both sides.
fn cart_stump(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for w in xs.windows(2) {
        let t = (w[0] + w[1]) / 2.0;
        let left: Vec<f64> = x
            .iter()
            .zip(y)
            .filter(|(a, _)| **a <= t)
            .map(|(_, b)| *b)
            .collect();
        let right: Vec<f64> = x
            .iter()
            .zip(y)
            .filter(|(a, _)| **a > t)
            .map(|(_, b)| *b)
            .collect();
        let total = sse(&left) + sse(&right);
        if total < best.0 {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            best = (total, t, mean(&left), mean(&right));
        }
    }
    (best.1, best.2, best.3)
}

#[test]
fn step_function_matches_cart_oracle() {
    let x: Vec<f64> = (1..=20).map(f64::from).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| if v <= 10.0 { 0.0 } else { 10.0 })
        .collect();
    let (threshold, left, right) = cart_stump(&x, &y);
    assert_eq!((threshold, left, right), (10.5, 0.0, 10.0));

    let features = Features::from_columns(vec![x.clone()]).unwrap();
    let forest = fit_forest(&features, &y, &params(50, None, 5, 42)).unwrap();
    let probe = Features::from_columns(vec![vec![5.0, 15.0]]).unwrap();
    let pred = predict_forest(&forest, &probe).unwrap();
    assert!((0.0..=2.0).contains(&pred[0]), "{pred:?}");
    assert!((8.0..=10.0).contains(&pred[1]), "{pred:?}");
    assert!((pred[0] - left).abs() <= 2.0 && (pred[1] - right).abs() <= 2.0);
}

#[test]
fn fitting_twice_gives_identical_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cols: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..50).map(|_| rng.gen()).collect())
        .collect();
    let y: Vec<f64> = (0..50).map(|i| cols[0][i] * 3.0 - cols[2][i]).collect();
    let x = Features::from_columns(cols).unwrap();
    let p = params(30, Some(2), 5, 11);
    let a = predict_forest(&fit_forest(&x, &y, &p).unwrap(), &x).unwrap();
    let b = predict_forest(&fit_forest(&x, &y, &p).unwrap(), &x).unwrap();
    assert_eq!(a, b);
}

/// Routes every in-bag draw down the tree and checks leaf means and sizes,
/// and that each split sends draws both ways.
fn check_tree_structure(nodes: &[Node], in_bag: &[u32], x: &Features, y: &[f64]) {
    let mut sums = vec![0.0; nodes.len()];
    let mut counts = vec![0usize; nodes.len()];
    for (row, &k) in in_bag.iter().enumerate() {
        let mut idx = 0;
        loop {
            sums[idx] += y[row] * k as f64;
            counts[idx] += k as usize;
            match nodes[idx] {
                Node::Leaf { .. } => break,
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
    for (idx, node) in nodes.iter().enumerate() {
        match *node {
            Node::Leaf { prediction, size } => {
                assert_eq!(size, counts[idx]);
                let mean = sums[idx] / counts[idx] as f64;
                assert!((prediction - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            }
            Node::Split { left, right, .. } => {
                assert!(counts[left] > 0 && counts[right] > 0);
                assert_eq!(counts[left] + counts[right], counts[idx]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn trees_partition_rows_and_predictions_stay_in_range(
        seed in any::<u64>(),
        n in 6usize..40,
        p in 1usize..5,
        min_node_size in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| (rng.gen_range(0..8) as f64) / 2.0).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x = Features::from_columns(cols).unwrap();
        let forest = fit_forest(&x, &y, &params(8, None, min_node_size, seed)).unwrap();
        for tree in forest.trees() {
            check_tree_structure(tree.nodes(), tree.in_bag_counts(), &x, &y);
        }
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let probe: Vec<Vec<f64>> = (0..p).map(|_| (0..10).map(|_| rng.gen_range(-1.0..5.0)).collect()).collect();
        for v in predict_forest(&forest, &Features::from_columns(probe).unwrap()).unwrap() {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
        if let Some(mse) = forest.oob_mse() {
            prop_assert!(mse >= 0.0);
        }
    }
}

#[test]
fn single_tree_oob_rows_are_those_never_drawn() {
    let n = 1000;
    let x = Features::from_columns(vec![(0..n).map(|i| i as f64).collect()]).unwrap();
    let y: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
    let forest = fit_forest(&x, &y, &params(1, None, 5, 5)).unwrap();
    let in_bag = forest.trees()[0].in_bag_counts();
    assert_eq!(in_bag.iter().map(|&k| k as usize).sum::<usize>(), n);
    let never_drawn = in_bag.iter().filter(|&&k| k == 0).count();
    let oob = forest.oob_predictions(&x).unwrap();
    assert_eq!(oob.iter().filter(|p| p.is_some()).count(), never_drawn);
    // (1 - 1/n)^n is about 0.368.
    let frac = never_drawn as f64 / n as f64;
    assert!((frac - 0.368).abs() < 0.05, "{frac}");
}

#[test]
fn constant_response_has_zero_oob_error() {
    let x = Features::from_columns(vec![(0..30).map(f64::from).collect()]).unwrap();
    let y = vec![7.0; 30];
    let forest = fit_forest(&x, &y, &params(20, None, 5, 1)).unwrap();
    assert_eq!(oob_error(&forest, &x, &y).unwrap(), Some(0.0));
}

#[test]
fn oob_error_tracks_holdout_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let gen = |rng: &mut ChaCha8Rng, n: usize| {
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * cols[0][i] - cols[1][i] + 0.5 * cols[2][i] + rng.gen_range(-0.2..0.2))
            .collect();
        (Features::from_columns(cols).unwrap(), y)
    };
    let (x_train, y_train) = gen(&mut rng, 200);
    let (x_test, y_test) = gen(&mut rng, 200);
    let forest = fit_forest(&x_train, &y_train, &params(100, None, 5, 9)).unwrap();
    let oob = forest.oob_mse().unwrap();
    let pred = predict_forest(&forest, &x_test).unwrap();
    let test_mse = pred
        .iter()
        .zip(&y_test)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y_test.len() as f64;
    let ratio = oob / test_mse;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "oob {oob} vs holdout {test_mse}"
    );
}

#[test]
fn prediction_variance_shrinks_with_more_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let y: Vec<f64> = (0..80)
        .map(|i| cols[0][i].sin() + cols[1][i] + rng.gen_range(-0.3..0.3))
        .collect();
    let x = Features::from_columns(cols).unwrap();
    let probe = Features::from_columns(vec![vec![0.1], vec![-0.2], vec![0.3]]).unwrap();
    let spread = |ntree: usize| {
        let preds: Vec<f64> = (0..10)
            .map(|s| {
                predict_forest(
                    &fit_forest(&x, &y, &params(ntree, None, 5, 1000 + s)).unwrap(),
                    &probe,
                )
                .unwrap()[0]
            })
            .collect();
        let m = preds.iter().sum::<f64>() / 10.0;
        preds.iter().map(|p| (p - m).powi(2)).sum::<f64>() / 10.0
    };
    let (v10, v100) = (spread(10), spread(100));
    assert!(
        v100 <= v10,
        "variance at 100 trees {v100} > at 10 trees {v10}"
    );
}

#[test]
fn mtry_one_offers_a_single_candidate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cols: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..60).map(|_| rng.gen()).collect())
        .collect();
    let y: Vec<f64> = (0..60).map(|i| cols[3][i] * 4.0).collect();
    let x = Features::from_columns(cols).unwrap();
    let forest = fit_forest(&x, &y, &params(10, Some(1), 5, 4)).unwrap();
    let splits = forest
        .trees()
        .iter()
        .flat_map(|t| t.nodes())
        .filter_map(|n| match n {
            Node::Split { n_candidates, .. } => Some(*n_candidates),
            Node::Leaf { .. } => None,
        })
        .collect::<Vec<_>>();
    assert!(!splits.is_empty());
    assert!(splits.iter().all(|&k| k == 1));
}
