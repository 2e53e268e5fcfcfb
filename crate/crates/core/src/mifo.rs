//! MiFoImpute: iterative imputation by per-column random forests.
//!
//! Starting from a column-mean fill, every sweep visits the incomplete
//! columns in order of increasing missingness, fits a forest on the rows
//! where the column is observed (all other columns as predictors, with their
//! current imputations) and overwrites the missing rows with its
//! predictions. Updates are visible to later columns of the same sweep.
//!
//! After sweep k the relative change
//!
//! ```text
//! delta_k = sum (X_k - X_{k-1})^2 / sum X_k^2
//! ```
//!
//! is recorded. The first time it grows, the run stops and returns the
//! matrix from sweep k-1. Runs that never see an increase stop after
//! `max_iter` sweeps and are flagged as not converged.

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, predict_forest, Features, ForestParams};
use crate::inject::MIN_OBSERVED_PER_COLUMN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialGuess {
    #[default]
    ColumnMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MifoParams {
    pub forest: ForestParams,
    pub max_iter: usize,
    pub initial_guess: InitialGuess,
}

impl Default for MifoParams {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            max_iter: 10,
            initial_guess: InitialGuess::ColumnMean,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImputationResult {
    pub imputed: DataMatrix,
    pub delta_trace: Vec<f64>,
    pub iterations_run: usize,
    /// True when the run stopped on the first increase of the change statistic.
    pub converged: bool,
    pub oob_nrmse_estimate: Option<f64>,
    pub oob_nmae_estimate: Option<f64>,
    /// OOB mean squared error of each column's final forest; `None` for
    /// complete columns.
    pub per_column_oob_mse: Vec<Option<f64>>,
}

/// Column indices by ascending missing count, ties in original order.
pub fn sort_columns_by_missingness(m: &DataMatrix) -> Vec<usize> {
    let counts = m.missing_per_column();
    let mut order: Vec<usize> = (0..m.n_cols()).collect();
    order.sort_by_key(|&c| counts[c]);
    order
}

/// Fills every missing entry with the mean of its column's observed values.
pub fn initial_guess(m: &DataMatrix) -> Result<DataMatrix> {
    m.require_observed(1)?;
    let mut filled = m.clone();
    for c in 0..m.n_cols() {
        let observed = m.observed_column(c);
        if observed.len() == m.n_rows() {
            continue;
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for r in 0..m.n_rows() {
            if m.is_missing(r, c) {
                filled.set(r, c, mean);
            }
        }
    }
    Ok(filled)
}

/// Sum of squared differences over the sum of squares of `new`, across all entries.
pub fn delta_n(new: &DataMatrix, old: &DataMatrix) -> Result<f64> {
    new.same_shape(old)?;
    delta_dense(new.dense()?, old.dense()?)
}

fn delta_dense(new: &[f64], old: &[f64]) -> Result<f64> {
    let num: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = new.iter().map(|a| a * a).sum();
    if den <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

pub fn mifo_impute(m: &DataMatrix, params: &MifoParams) -> Result<ImputationResult> {
    mifo_impute_observed(m, params, |_, _| {})
}

/// Like [`mifo_impute`], additionally handing every completed sweep's matrix
/// to `observer` as `(sweep, matrix)` with sweeps numbered from 1.
pub fn mifo_impute_observed(
    m: &DataMatrix,
    params: &MifoParams,
    mut observer: impl FnMut(usize, &DataMatrix),
) -> Result<ImputationResult> {
    if params.max_iter == 0 {
        return Err(Error::InvalidParameter(
            "max_iter must be at least 1".into(),
        ));
    }
    let p = m.n_cols();
    if m.is_complete() {
        return Ok(ImputationResult {
            imputed: m.clone(),
            delta_trace: Vec::new(),
            iterations_run: 0,
            converged: true,
            oob_nrmse_estimate: None,
            oob_nmae_estimate: None,
            per_column_oob_mse: vec![None; p],
        });
    }
    if p < 2 {
        return Err(Error::Shape(
            "random-forest imputation needs at least 2 columns".into(),
        ));
    }
    m.require_observed(MIN_OBSERVED_PER_COLUMN)?;

    let splits: Vec<_> = sort_columns_by_missingness(m)
        .into_iter()
        .map(|c| m.column_split(c))
        .filter(|s| !s.rows_mis.is_empty())
        .collect();

    let InitialGuess::ColumnMean = params.initial_guess;
    let start = initial_guess(m)?;
    let mut work = Working::from_matrix(&start);

    let mut trace = Vec::with_capacity(params.max_iter);
    let mut previous_oob: Option<Vec<ColumnOob>> = None;
    for sweep in 1..=params.max_iter {
        let old = work.clone();
        let mut oob = Vec::with_capacity(splits.len());
        for split in &splits {
            let t = split.target_col;
            let train = work.predictors(t, &split.rows_obs)?;
            let y: Vec<f64> = split.rows_obs.iter().map(|&r| work.cols[t][r]).collect();
            let forest_params = ForestParams {
                seed: derive_seed(params.forest.seed, sweep as u64, t as u64),
                ..params.forest.clone()
            };
            let with_column = |e| Error::Column {
                column: m.col_names()[t].clone(),
                source: Box::new(e),
            };
            let forest = fit_forest(&train, &y, &forest_params).map_err(with_column)?;
            let predicted = predict_forest(&forest, &work.predictors(t, &split.rows_mis)?)
                .map_err(with_column)?;
            for (&r, v) in split.rows_mis.iter().zip(predicted) {
                work.cols[t][r] = v;
            }
            oob.push(ColumnOob::measure(t, &forest, &train, &y)?);
        }

        let delta = delta_dense(&work.row_major(), &old.row_major())?;
        observer(sweep, &work.to_matrix(m)?);
        trace.push(delta);

        if trace.len() >= 2 && delta > trace[trace.len() - 2] {
            return finish(m, &old, trace, sweep, true, previous_oob.unwrap_or(oob));
        }
        previous_oob = Some(oob);
    }
    let oob = previous_oob.unwrap_or_default();
    finish(m, &work, trace, params.max_iter, false, oob)
}

fn finish(
    m: &DataMatrix,
    work: &Working,
    delta_trace: Vec<f64>,
    iterations_run: usize,
    converged: bool,
    oob: Vec<ColumnOob>,
) -> Result<ImputationResult> {
    let mut per_column_oob_mse = vec![None; m.n_cols()];
    for col in &oob {
        per_column_oob_mse[col.col] = col.mse;
    }
    let (oob_nrmse_estimate, oob_nmae_estimate) = oob_estimates(m, &oob);
    Ok(ImputationResult {
        imputed: work.to_matrix(m)?,
        delta_trace,
        iterations_run,
        converged,
        oob_nrmse_estimate,
        oob_nmae_estimate,
        per_column_oob_mse,
    })
}

#[derive(Debug, Clone)]
struct ColumnOob {
    col: usize,
    mse: Option<f64>,
    mae: Option<f64>,
}

impl ColumnOob {
    fn measure(
        col: usize,
        forest: &crate::forest::RegressionForest,
        x: &Features,
        y: &[f64],
    ) -> Result<Self> {
        let pred = forest.oob_predictions(x)?;
        let residuals: Vec<f64> = pred
            .iter()
            .zip(y)
            .filter_map(|(p, &t)| p.map(|p| p - t))
            .collect();
        if residuals.is_empty() {
            return Ok(Self {
                col,
                mse: None,
                mae: None,
            });
        }
        let k = residuals.len() as f64;
        Ok(Self {
            col,
            mse: Some(residuals.iter().map(|e| e * e).sum::<f64>() / k),
            mae: Some(residuals.iter().map(|e| e.abs()).sum::<f64>() / k),
        })
    }
}

/// Pools per-column OOB errors into the scale of the evaluation metrics.
///
/// NRMSE: the missing-count-weighted mean OOB MSE over the population
/// variance of all observed values of the incomplete columns taken together.
/// NMAE: per column, OOB mean absolute error over the observed range,
/// averaged across incomplete columns.
fn oob_estimates(m: &DataMatrix, oob: &[ColumnOob]) -> (Option<f64>, Option<f64>) {
    let missing = m.missing_per_column();
    let mut weighted = 0.0;
    let mut weight = 0.0;
    let mut pooled = Vec::new();
    let mut nmae_terms = Vec::new();
    for col in oob {
        let observed = m.observed_column(col.col);
        pooled.extend_from_slice(&observed);
        if let Some(mse) = col.mse {
            weighted += missing[col.col] as f64 * mse;
            weight += missing[col.col] as f64;
        }
        if let Some(mae) = col.mae {
            let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
            if max > min {
                nmae_terms.push(mae / (max - min));
            }
        }
    }

    let nrmse = (weight > 0.0 && !pooled.is_empty()).then(|| {
        let k = pooled.len() as f64;
        let mean = pooled.iter().sum::<f64>() / k;
        let var = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
        (weighted / weight / var).sqrt()
    });
    let nrmse = nrmse.filter(|v| v.is_finite());
    let nmae =
        (!nmae_terms.is_empty()).then(|| nmae_terms.iter().sum::<f64>() / nmae_terms.len() as f64);
    (nrmse, nmae)
}

/// Column-major working copy of the matrix being imputed.
#[derive(Debug, Clone)]
struct Working {
    cols: Vec<Vec<f64>>,
}

impl Working {
    fn from_matrix(m: &DataMatrix) -> Self {
        let cols = (0..m.n_cols())
            .map(|c| {
                (0..m.n_rows())
                    .map(|r| m.get(r, c).expect("working matrix starts complete"))
                    .collect()
            })
            .collect();
        Self { cols }
    }

    fn predictors(&self, target: usize, rows: &[usize]) -> Result<Features> {
        Features::from_columns(
            self.cols
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != target)
                .map(|(_, col)| rows.iter().map(|&r| col[r]).collect())
                .collect(),
        )
    }

    fn row_major(&self) -> Vec<f64> {
        let n = self.cols[0].len();
        (0..n)
            .flat_map(|r| self.cols.iter().map(move |col| col[r]))
            .collect()
    }

    fn to_matrix(&self, like: &DataMatrix) -> Result<DataMatrix> {
        like.with_values(self.row_major())
    }
}

/// Seed for the forest fitted to `column` during `sweep`.
fn derive_seed(base: u64, sweep: u64, column: u64) -> u64 {
    let mut z = base ^ sweep.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ column.rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_names;

    fn with_counts(counts: &[usize]) -> DataMatrix {
        let n = 6;
        let rows: Vec<Vec<Option<f64>>> = (0..n)
            .map(|r| {
                counts
                    .iter()
                    .enumerate()
                    .map(|(c, &k)| (r >= k).then_some((r * 3 + c) as f64))
                    .collect()
            })
            .collect();
        DataMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn column_order_by_missingness() {
        assert_eq!(
            sort_columns_by_missingness(&with_counts(&[3, 0, 1])),
            vec![1, 2, 0]
        );
        assert_eq!(
            sort_columns_by_missingness(&with_counts(&[1, 1, 1])),
            vec![0, 1, 2]
        );
        assert_eq!(
            sort_columns_by_missingness(&with_counts(&[2, 2, 1])),
            vec![2, 0, 1]
        );
    }

    #[test]
    fn column_order_matches_stable_sort_oracle() {
        // Oracle: selection by repeated minimum scan, first index wins ties.
        let counts = [4, 1, 4, 0, 2, 1, 0, 3];
        let mut remaining: Vec<usize> = (0..counts.len()).collect();
        let mut expected = Vec::new();
        while !remaining.is_empty() {
            let (pos, _) = remaining
                .iter()
                .enumerate()
                .min_by_key(|&(i, &c)| (counts[c], i))
                .unwrap();
            expected.push(remaining.remove(pos));
        }
        assert_eq!(sort_columns_by_missingness(&with_counts(&counts)), expected);
    }

    #[test]
    fn initial_guess_uses_column_means() {
        let m = DataMatrix::from_rows(&[
            vec![Some(1.0), Some(2.0)],
            vec![None, Some(2.0)],
            vec![Some(3.0), None],
        ])
        .unwrap();
        let g = initial_guess(&m).unwrap();
        assert_eq!(g.dense().unwrap(), &[1.0, 2.0, 2.0, 2.0, 3.0, 2.0]);
        let complete = initial_guess(&g).unwrap();
        assert_eq!(complete, g);

        let empty = DataMatrix::from_rows(&[vec![Some(1.0), None], vec![Some(1.0), None]]).unwrap();
        assert!(matches!(
            initial_guess(&empty),
            Err(Error::FullyMissingColumn(_))
        ));
    }

    #[test]
    fn delta_worked_values() {
        let a = DataMatrix::complete(2, 2, vec![1.0, 2.0, 3.0, 4.0], default_names(2)).unwrap();
        let b = DataMatrix::complete(2, 2, vec![1.0, 2.0, 3.0, 5.0], default_names(2)).unwrap();
        assert_eq!(delta_n(&a, &a).unwrap(), 0.0);
        assert!((delta_n(&a, &b).unwrap() - 1.0 / 30.0).abs() < 1e-15);

        let scale = |m: &DataMatrix, k: f64| {
            let v = m.dense().unwrap().iter().map(|x| x * k).collect();
            DataMatrix::complete(2, 2, v, default_names(2)).unwrap()
        };
        let scaled = delta_n(&scale(&a, -3.5), &scale(&b, -3.5)).unwrap();
        assert!((scaled - 1.0 / 30.0).abs() < 1e-15);

        let zero = DataMatrix::complete(2, 2, vec![0.0; 4], default_names(2)).unwrap();
        assert!(matches!(delta_n(&zero, &a), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn complete_input_is_returned_unchanged() {
        let m = DataMatrix::complete(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 7.0], default_names(2))
            .unwrap();
        let res = mifo_impute(&m, &MifoParams::default()).unwrap();
        assert_eq!(res.imputed, m);
        assert_eq!(res.iterations_run, 0);
        assert!(res.delta_trace.is_empty());
    }

    #[test]
    fn rejects_single_column_and_sparse_columns() {
        let one = DataMatrix::from_rows(&[vec![Some(1.0)], vec![None], vec![Some(2.0)]]).unwrap();
        assert!(mifo_impute(&one, &MifoParams::default()).is_err());
        let sparse = DataMatrix::from_rows(&[
            vec![Some(1.0), None],
            vec![Some(2.0), None],
            vec![Some(3.0), Some(1.0)],
        ])
        .unwrap();
        assert!(matches!(
            mifo_impute(&sparse, &MifoParams::default()),
            Err(Error::TooFewObserved { .. })
        ));
    }

    #[test]
    fn linear_pair_beats_mean_fill() {
        use crate::inject::inject_missing;
        use crate::metrics::nrmse;

        let values: Vec<f64> = (1..=100).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let truth = DataMatrix::complete(100, 2, values, default_names(2)).unwrap();
        // Mask 10 entries of column 2 only.
        let col2 = DataMatrix::complete(
            100,
            1,
            (1..=100).map(|i| 2.0 * i as f64).collect(),
            default_names(1),
        )
        .unwrap();
        let holes = inject_missing(&col2, 0.10, 11).unwrap().injected_positions;
        let mut observed = truth.clone();
        let positions: Vec<(usize, usize)> = holes.iter().map(|&(r, _)| (r, 1)).collect();
        for &(r, c) in &positions {
            observed.mark_missing(r, c);
        }

        let mifo = mifo_impute(&observed, &MifoParams::default()).unwrap();
        let mean = initial_guess(&observed).unwrap();
        let e_mifo = nrmse(&truth, &mifo.imputed, &positions).unwrap();
        let e_mean = nrmse(&truth, &mean, &positions).unwrap();
        assert!(e_mifo < 0.25, "mifo nrmse {e_mifo}");
        assert!(e_mifo < e_mean, "{e_mifo} vs {e_mean}");
        assert!((0.7..1.3).contains(&e_mean), "mean nrmse {e_mean}");
        for r in 0..100 {
            assert_eq!(
                mifo.imputed.value(r, 0).unwrap(),
                truth.value(r, 0).unwrap()
            );
        }
    }
}
