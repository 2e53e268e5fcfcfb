//! Comparison imputers: column mean, k-nearest-neighbour rows, iterative
//! low-rank SVD, singular value thresholding and local least squares.

use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, shrink, svd, Matrix};
use crate::mifo::initial_guess;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub knn_k: usize,
    pub svd_rank: usize,
    pub svd_max_iter: usize,
    pub svd_tol: f64,
    /// `None` means `5 * sqrt(n * p)`.
    pub svt_tau: Option<f64>,
    /// `None` means `1.2 * n * p / observed`.
    pub svt_step: Option<f64>,
    pub svt_max_iter: usize,
    pub svt_tol: f64,
    pub lls_k: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            knn_k: 10,
            svd_rank: 5,
            svd_max_iter: 100,
            svd_tol: 1e-6,
            svt_tau: None,
            svt_step: None,
            svt_max_iter: 200,
            svt_tol: 1e-4,
            lls_k: 15,
        }
    }
}

impl BaselineParams {
    pub fn svt_tau_for(&self, n: usize, p: usize) -> f64 {
        self.svt_tau.unwrap_or(5.0 * ((n * p) as f64).sqrt())
    }

    pub fn svt_step_for(&self, n: usize, p: usize, observed: usize) -> f64 {
        self.svt_step
            .unwrap_or(1.2 * (n * p) as f64 / observed.max(1) as f64)
    }
}

fn positive(name: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive")))
    }
}

/// Outcome of an iterative baseline.
#[derive(Debug, Clone)]
pub struct IterativeFit {
    pub imputed: DataMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iteration convergence statistic (relative masked-entry change for
    /// SVD, relative observed residual for SVT).
    pub trace: Vec<f64>,
}

pub fn mean_impute(m: &DataMatrix) -> Result<DataMatrix> {
    initial_guess(m)
}

/// Row-wise kNN: each missing entry becomes the inverse-distance weighted mean
/// of the column values of the `k` nearest rows that observe that column.
///
/// Distance is the root mean squared difference over columns both rows
/// observe (excluding the target column). Entries with no usable neighbour
/// fall back to the column mean, with a warning.
pub fn knn_impute(m: &DataMatrix, k: usize) -> Result<DataMatrix> {
    if k == 0 || k >= m.n_rows() {
        return Err(Error::InvalidParameter(format!(
            "knn k must lie in 1..{}, got {k}",
            m.n_rows()
        )));
    }
    if m.is_complete() {
        return Ok(m.clone());
    }
    let (n, p) = m.shape();
    let positions = m.missing_positions();
    let column_means: Vec<Option<f64>> = (0..p)
        .map(|c| {
            let obs = m.observed_column(c);
            (!obs.is_empty()).then(|| obs.iter().sum::<f64>() / obs.len() as f64)
        })
        .collect();

    let filled: Vec<(usize, usize, Option<f64>)> = positions
        .par_iter()
        .map(|&(i, t)| {
            let mut neighbours: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i && !m.is_missing(j, t))
                .filter_map(|j| {
                    let (sum, shared) = (0..p)
                        .filter(|&c| c != t)
                        .filter_map(|c| Some((m.get(i, c)? - m.get(j, c)?).powi(2)))
                        .fold((0.0, 0usize), |(s, k), d| (s + d, k + 1));
                    (shared > 0).then(|| ((sum / shared as f64).sqrt(), j))
                })
                .collect();
            neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            neighbours.truncate(k);
            if neighbours.is_empty() {
                return (i, t, None);
            }
            let (num, den) = neighbours.iter().fold((0.0, 0.0), |(num, den), &(d, j)| {
                let w = 1.0 / (d + 1e-12);
                (
                    num + w * m.get(j, t).expect("neighbour observes t"),
                    den + w,
                )
            });
            (i, t, Some(num / den))
        })
        .collect();

    let mut out = m.clone();
    for (i, t, value) in filled {
        let value = match value {
            Some(v) => v,
            None => {
                log::warn!(
                    "knn: no neighbour for ({i}, {t}); using the mean of column {:?}",
                    m.col_names()[t]
                );
                column_means[t]
                    .ok_or_else(|| Error::FullyMissingColumn(m.col_names()[t].clone()))?
            }
        };
        out.set(i, t, value);
    }
    Ok(out)
}

pub fn svd_impute(m: &DataMatrix, params: &BaselineParams) -> Result<DataMatrix> {
    svd_impute_detailed(m, params).map(|f| f.imputed)
}

/// Iterative rank-`svd_rank` reconstruction that only ever rewrites the
/// missing positions, starting from column means.
pub fn svd_impute_detailed(m: &DataMatrix, params: &BaselineParams) -> Result<IterativeFit> {
    let (n, p) = m.shape();
    if params.svd_rank == 0 || params.svd_rank > n.min(p) {
        return Err(Error::InvalidParameter(format!(
            "svd rank must lie in 1..={}, got {}",
            n.min(p),
            params.svd_rank
        )));
    }
    positive("svd_max_iter", params.svd_max_iter > 0)?;
    positive("svd_tol", params.svd_tol > 0.0)?;
    if m.is_complete() {
        return Ok(IterativeFit {
            imputed: m.clone(),
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        });
    }
    let start = mean_impute(m)?;
    let mut x = Matrix::from_row_major(n, p, start.dense()?.to_vec())?;
    let holes = m.missing_positions();

    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..params.svd_max_iter {
        let approx = svd(&x, params.svd_rank)?.reconstruct();
        let (mut diff, mut norm) = (0.0, 0.0);
        for &(r, c) in &holes {
            diff += (approx[(r, c)] - x[(r, c)]).powi(2);
            norm += x[(r, c)].powi(2);
            x[(r, c)] = approx[(r, c)];
        }
        let change = if norm > 0.0 {
            (diff / norm).sqrt()
        } else {
            diff.sqrt()
        };
        trace.push(change);
        if change < params.svd_tol {
            converged = true;
            break;
        }
    }
    if trace.len() > 4 && trace[3..].windows(2).any(|w| w[1] > w[0]) {
        log::debug!("svd impute: masked-entry change not monotone after iteration 3");
    }
    Ok(IterativeFit {
        imputed: m.with_values(x.into_vec())?,
        iterations: trace.len(),
        converged,
        trace,
    })
}

pub fn svt_impute(m: &DataMatrix, params: &BaselineParams) -> Result<DataMatrix> {
    svt_impute_detailed(m, params).map(|f| f.imputed)
}

/// Singular value thresholding: `Y <- Y + step * P(X - shrink(Y, tau))` from
/// `Y = 0`, where `P` keeps the observed positions.
pub fn svt_impute_detailed(m: &DataMatrix, params: &BaselineParams) -> Result<IterativeFit> {
    let (n, p) = m.shape();
    positive("svt_max_iter", params.svt_max_iter > 0)?;
    positive("svt_tol", params.svt_tol > 0.0)?;
    m.require_observed(1)?;
    if m.is_complete() {
        return Ok(IterativeFit {
            imputed: m.clone(),
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        });
    }
    let observed = n * p - m.missing_count();
    let tau = params.svt_tau_for(n, p);
    let step = params.svt_step_for(n, p, observed);
    positive("svt_tau", tau > 0.0)?;
    positive("svt_step", step > 0.0)?;

    let obs_norm = m
        .raw_values()
        .iter()
        .zip(m.mask())
        .filter(|(_, &miss)| !miss)
        .map(|(v, _)| v * v)
        .sum::<f64>()
        .sqrt();
    let mut y = Matrix::zeros(n, p);
    let mut estimate = Matrix::zeros(n, p);
    let mut trace = Vec::new();
    let mut converged = false;
    let initial = 1.0;
    if obs_norm > 0.0 {
        for _ in 0..params.svt_max_iter {
            estimate = shrink(&y, tau)?;
            let mut resid = 0.0;
            for r in 0..n {
                for c in 0..p {
                    if let Some(v) = m.get(r, c) {
                        let e = v - estimate[(r, c)];
                        resid += e * e;
                        y[(r, c)] += step * e;
                    }
                }
            }
            let rel = resid.sqrt() / obs_norm;
            trace.push(rel);
            if rel < params.svt_tol {
                converged = true;
                break;
            }
            if !rel.is_finite() || rel > 10.0 * initial {
                return Err(Error::Diverged { residual: rel });
            }
        }
    } else {
        converged = true;
    }

    let mut out = m.clone();
    for (r, c) in m.missing_positions() {
        out.set(r, c, estimate[(r, c)]);
    }
    Ok(IterativeFit {
        imputed: out,
        iterations: trace.len(),
        converged,
        trace,
    })
}

/// Local least squares over rows.
///
/// For each row with missing set `M`, the `lls_k` rows closest on the
/// columns outside `M` (neighbours taken from the mean-filled matrix) are
/// combined linearly to match the row's observed part; the same combination
/// of the neighbours' values at `M` fills the holes.
pub fn lls_impute(m: &DataMatrix, params: &BaselineParams) -> Result<DataMatrix> {
    let (n, p) = m.shape();
    let k = params.lls_k;
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "lls k must lie in 1..{n}, got {k}"
        )));
    }
    if m.is_complete() {
        return Ok(m.clone());
    }
    m.require_observed(2)?;
    let filled = mean_impute(m)?;
    let full = filled.dense()?;

    let rows_with_holes: Vec<usize> = (0..n)
        .filter(|&r| (0..p).any(|c| m.is_missing(r, c)))
        .collect();
    let solved: Vec<(usize, Vec<usize>, Option<Vec<f64>>)> = rows_with_holes
        .par_iter()
        .map(|&i| {
            let (miss, obs): (Vec<usize>, Vec<usize>) = (0..p).partition(|&c| m.is_missing(i, c));
            if obs.is_empty() {
                return Ok((i, miss, None));
            }
            let mut neighbours: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = obs
                        .iter()
                        .map(|&c| (full[i * p + c] - full[j * p + c]).powi(2))
                        .sum();
                    (d2.sqrt(), j)
                })
                .collect();
            neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            neighbours.truncate(k);
            if neighbours.is_empty() {
                return Ok((i, miss, None));
            }

            let mut a = Matrix::zeros(obs.len(), neighbours.len());
            for (row, &c) in obs.iter().enumerate() {
                for (col, &(_, j)) in neighbours.iter().enumerate() {
                    a[(row, col)] = full[j * p + c];
                }
            }
            let b: Vec<f64> = obs.iter().map(|&c| full[i * p + c]).collect();
            let w = lstsq_min_norm(&a, &b)?;
            let values = miss
                .iter()
                .map(|&c| {
                    neighbours
                        .iter()
                        .zip(&w)
                        .map(|(&(_, j), wj)| wj * full[j * p + c])
                        .sum()
                })
                .collect();
            Ok((i, miss, Some(values)))
        })
        .collect::<Result<_>>()?;

    let mut out = m.clone();
    for (i, miss, values) in solved {
        match values {
            Some(values) => {
                for (c, v) in miss.into_iter().zip(values) {
                    out.set(i, c, v);
                }
            }
            None => {
                log::warn!("lls: row {i} has no usable neighbour; using column means");
                for c in miss {
                    out.set(i, c, full[i * p + c]);
                }
            }
        }
    }
    Ok(out)
}
