//! Imputation error metrics computed over the injected positions only.

use crate::data::DataMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub nrmse: f64,
    /// `None` for columns with no evaluated position.
    pub nmae_per_col: Vec<Option<f64>>,
    pub nmae_overall: f64,
    pub n_missing: usize,
}

fn pairs(
    truth: &DataMatrix,
    imputed: &DataMatrix,
    positions: &[(usize, usize)],
) -> Result<Vec<(usize, f64, f64)>> {
    if positions.is_empty() {
        return Err(Error::EmptyPositions);
    }
    truth.same_shape(imputed)?;
    positions
        .iter()
        .map(|&(r, c)| Ok((c, truth.value(r, c)?, imputed.value(r, c)?)))
        .collect()
}

/// Root mean squared error at `positions`, normalized by the population
/// variance of the true values at those positions.
pub fn nrmse(
    truth: &DataMatrix,
    imputed: &DataMatrix,
    positions: &[(usize, usize)],
) -> Result<f64> {
    let pairs = pairs(truth, imputed, positions)?;
    let count = pairs.len() as f64;
    let mse = pairs.iter().map(|(_, t, i)| (t - i).powi(2)).sum::<f64>() / count;
    let mean = pairs.iter().map(|(_, t, _)| t).sum::<f64>() / count;
    let var = pairs
        .iter()
        .map(|(_, t, _)| (t - mean).powi(2))
        .sum::<f64>()
        / count;
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((mse / var).sqrt())
}

/// Per-column mean absolute error scaled by the range of the complete true
/// column, and the unweighted mean over columns with at least one position.
pub fn nmae(
    truth: &DataMatrix,
    imputed: &DataMatrix,
    positions: &[(usize, usize)],
) -> Result<(Vec<Option<f64>>, f64)> {
    let pairs = pairs(truth, imputed, positions)?;
    let p = truth.n_cols();
    let mut abs_sum = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for &(c, t, i) in &pairs {
        abs_sum[c] += (i - t).abs();
        counts[c] += 1;
    }

    let mut per_col = vec![None; p];
    for c in (0..p).filter(|&c| counts[c] > 0) {
        let column = (0..truth.n_rows())
            .map(|r| truth.value(r, c))
            .collect::<Result<Vec<_>>>()?;
        let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = column.iter().copied().fold(f64::INFINITY, f64::min);
        let range = max - min;
        if range <= 0.0 {
            return Err(Error::ZeroRange(truth.col_names()[c].clone()));
        }
        per_col[c] = Some(abs_sum[c] / counts[c] as f64 / range);
    }
    let affected: Vec<f64> = per_col.iter().flatten().copied().collect();
    let overall = affected.iter().sum::<f64>() / affected.len() as f64;
    Ok((per_col, overall))
}

pub fn evaluate(
    truth: &DataMatrix,
    imputed: &DataMatrix,
    positions: &[(usize, usize)],
) -> Result<EvaluationReport> {
    let nrmse = nrmse(truth, imputed, positions)?;
    let (nmae_per_col, nmae_overall) = nmae(truth, imputed, positions)?;
    Ok(EvaluationReport {
        nrmse,
        nmae_per_col,
        nmae_overall,
        n_missing: positions.len(),
    })
}
