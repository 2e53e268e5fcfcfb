//! Benchmark harness: synthetic low-rank data, method x missing-rate grids
//! scored by NRMSE/NMAE with wall-clock timings, and ntree x mtry sweeps of
//! the forest imputer.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::baselines::{
    knn_impute, lls_impute, mean_impute, svd_impute_detailed, svt_impute_detailed, BaselineParams,
};
use crate::data::{default_names, DataMatrix};
use crate::error::{Error, Result};
use crate::inject::inject_missing;
use crate::metrics::evaluate;
use crate::mifo::{mifo_impute, MifoParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub latent_rank: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// `A B^T + noise` with standard normal factors `A` (n x r) and `B` (p x r).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DataMatrix> {
    let (n, p, r) = (spec.n_rows, spec.n_cols, spec.latent_rank);
    if r == 0 || r > n.min(p) {
        return Err(Error::InvalidParameter(format!(
            "latent rank must lie in 1..={}, got {r}",
            n.min(p)
        )));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be a nonnegative finite number, got {}",
            spec.noise_sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw =
        |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let a = draw(n * r);
    let b = draw(p * r);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut values = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            let signal: f64 = (0..r).map(|k| a[i * r + k] * b[j * r + k]).sum();
            values.push(signal + noise.sample(&mut rng));
        }
    }
    DataMatrix::complete(n, p, values, default_names(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mifo,
    Mean,
    Knn,
    Svd,
    Svt,
    Lls,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mifo,
        Method::Mean,
        Method::Knn,
        Method::Svd,
        Method::Svt,
        Method::Lls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mifo => "mifo",
            Method::Mean => "mean",
            Method::Knn => "knn",
            Method::Svd => "svd",
            Method::Svt => "svt",
            Method::Lls => "lls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodParams {
    pub mifo: MifoParams,
    pub baseline: BaselineParams,
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub imputed: DataMatrix,
    pub converged: bool,
}

pub fn run_method(method: Method, m: &DataMatrix, params: &MethodParams) -> Result<MethodOutcome> {
    let (imputed, converged) = match method {
        Method::Mifo => {
            let r = mifo_impute(m, &params.mifo)?;
            (r.imputed, r.converged)
        }
        Method::Mean => (mean_impute(m)?, true),
        Method::Knn => (knn_impute(m, params.baseline.knn_k)?, true),
        Method::Svd => {
            let f = svd_impute_detailed(m, &params.baseline)?;
            (f.imputed, f.converged)
        }
        Method::Svt => {
            let f = svt_impute_detailed(m, &params.baseline)?;
            (f.imputed, f.converged)
        }
        Method::Lls => (lls_impute(m, &params.baseline)?, true),
    };
    Ok(MethodOutcome { imputed, converged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub methods: Vec<Method>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Run one cell at a time so timings are not disturbed by other cells.
    pub timing_strict: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            rates: vec![0.10, 0.20, 0.30],
            seeds: (1..=5).collect(),
            timing_strict: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetrics {
    pub nrmse: f64,
    pub nmae: f64,
    pub wall_seconds: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Free-form so externally produced results can be merged in.
    pub method: String,
    pub rate: f64,
    pub seed: u64,
    pub outcome: std::result::Result<CellMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkGrid {
    pub methods: Vec<String>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
}

impl BenchmarkGrid {
    pub fn cell(&self, method: &str, rate: f64, seed: u64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.rate == rate && c.seed == seed)
    }

    fn completed(&self, method: &str, rate: f64) -> impl Iterator<Item = &CellMetrics> {
        let method = method.to_string();
        self.cells
            .iter()
            .filter(move |c| c.method == method && c.rate == rate)
            .filter_map(|c| c.outcome.as_ref().ok())
    }

    /// Median NRMSE over seeds of the completed cells.
    pub fn median_nrmse(&self, method: &str, rate: f64) -> Option<f64> {
        median(self.completed(method, rate).map(|c| c.nrmse).collect())
    }

    pub fn median_nmae(&self, method: &str, rate: f64) -> Option<f64> {
        median(self.completed(method, rate).map(|c| c.nmae).collect())
    }
}

pub fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

fn validate_grid(data: &DataMatrix, config: &GridConfig) -> Result<()> {
    if config.methods.is_empty() || config.rates.is_empty() || config.seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "benchmark needs at least one method, rate and seed".into(),
        ));
    }
    if let Some(r) = config.rates.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "missing rate must lie in (0, 1), got {r}"
        )));
    }
    let k = data.missing_count();
    if k > 0 {
        return Err(Error::NotComplete(k));
    }
    Ok(())
}

pub fn run_benchmark(
    data: &DataMatrix,
    config: &GridConfig,
    params: &MethodParams,
) -> Result<BenchmarkGrid> {
    run_benchmark_observed(data, config, params, |_, _, _, _| {})
}

/// Like [`run_benchmark`]; `observer` sees the exact observed matrix each
/// method receives, as `(method, rate, seed, observed)`.
pub fn run_benchmark_observed(
    data: &DataMatrix,
    config: &GridConfig,
    params: &MethodParams,
    observer: impl Fn(Method, f64, u64, &DataMatrix) + Sync,
) -> Result<BenchmarkGrid> {
    validate_grid(data, config)?;
    let jobs: Vec<(f64, u64)> = config
        .rates
        .iter()
        .flat_map(|&rate| config.seeds.iter().map(move |&seed| (rate, seed)))
        .collect();

    let run_job = |&(rate, seed): &(f64, u64)| -> Vec<Cell> {
        let pair = match inject_missing(data, rate, seed) {
            Ok(pair) => pair,
            Err(e) => {
                return config
                    .methods
                    .iter()
                    .map(|m| Cell {
                        method: m.name().to_string(),
                        rate,
                        seed,
                        outcome: Err(format!("injection: {e}")),
                    })
                    .collect()
            }
        };
        config
            .methods
            .iter()
            .map(|&method| {
                observer(method, rate, seed, &pair.observed);
                let mut cell_params = params.clone();
                cell_params.mifo.forest.seed = params.mifo.forest.seed.wrapping_add(seed);
                let start = Instant::now();
                let result = run_method(method, &pair.observed, &cell_params);
                let wall_seconds = start.elapsed().as_secs_f64().max(1e-9);
                let outcome = result
                    .and_then(|out| {
                        let report = evaluate(&pair.truth, &out.imputed, &pair.injected_positions)?;
                        Ok(CellMetrics {
                            nrmse: report.nrmse,
                            nmae: report.nmae_overall,
                            wall_seconds,
                            converged: out.converged,
                        })
                    })
                    .map_err(|e| e.to_string());
                if let Err(e) = &outcome {
                    log::warn!("{method} at rate {rate}, seed {seed}: {e}");
                }
                Cell {
                    method: method.name().to_string(),
                    rate,
                    seed,
                    outcome,
                }
            })
            .collect()
    };

    let cells: Vec<Cell> = if config.timing_strict {
        jobs.iter().flat_map(run_job).collect()
    } else {
        jobs.par_iter().map(run_job).collect::<Vec<_>>().concat()
    };
    Ok(BenchmarkGrid {
        methods: config
            .methods
            .iter()
            .map(|m| m.name().to_string())
            .collect(),
        rates: config.rates.clone(),
        seeds: config.seeds.clone(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ntree_values: Vec<usize>,
    pub mtry_values: Vec<usize>,
    pub rate: f64,
    pub seed: u64,
    /// Forest settings other than ntree/mtry, plus `max_iter`.
    pub base: MifoParams,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ntree_values: vec![10, 50, 100, 250, 500],
            mtry_values: vec![1, 2, 4, 8, 16],
            rate: 0.10,
            seed: 42,
            base: MifoParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepMetrics {
    pub nrmse_pct: f64,
    pub nmae_pct: f64,
    pub wall_seconds: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub ntree: usize,
    pub mtry: usize,
    /// Value actually used after clamping to the predictor count.
    pub mtry_used: usize,
    pub clamped: bool,
    pub outcome: std::result::Result<SweepMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub ntree_values: Vec<usize>,
    pub mtry_values: Vec<usize>,
    pub rate: f64,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, ntree: usize, mtry: usize) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.ntree == ntree && c.mtry == mtry)
    }
}

/// Runs the forest imputer over every (ntree, mtry) pair on a single
/// injected mask. Cells run one after another so their timings are clean.
pub fn run_sweep(data: &DataMatrix, config: &SweepConfig) -> Result<SweepGrid> {
    if config.ntree_values.is_empty() || config.mtry_values.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs at least one ntree and one mtry value".into(),
        ));
    }
    if config.ntree_values.contains(&0) || config.mtry_values.contains(&0) {
        return Err(Error::InvalidParameter(
            "ntree and mtry must be positive".into(),
        ));
    }
    let k = data.missing_count();
    if k > 0 {
        return Err(Error::NotComplete(k));
    }
    if data.n_cols() < 2 {
        return Err(Error::Shape("sweep needs at least 2 columns".into()));
    }
    let pair = inject_missing(data, config.rate, config.seed)?;
    let max_mtry = data.n_cols() - 1;

    let mut cells = Vec::new();
    for &mtry in &config.mtry_values {
        for &ntree in &config.ntree_values {
            let mtry_used = mtry.min(max_mtry);
            let mut params = config.base.clone();
            params.forest.ntree = ntree;
            params.forest.mtry = Some(mtry_used);
            let start = Instant::now();
            let result = mifo_impute(&pair.observed, &params);
            let wall_seconds = start.elapsed().as_secs_f64().max(1e-9);
            let outcome = result
                .and_then(|r| {
                    let report = evaluate(&pair.truth, &r.imputed, &pair.injected_positions)?;
                    Ok(SweepMetrics {
                        nrmse_pct: 100.0 * report.nrmse,
                        nmae_pct: 100.0 * report.nmae_overall,
                        wall_seconds,
                        iterations: r.iterations_run,
                    })
                })
                .map_err(|e| e.to_string());
            cells.push(SweepCell {
                ntree,
                mtry,
                mtry_used,
                clamped: mtry_used != mtry,
                outcome,
            });
        }
    }
    Ok(SweepGrid {
        ntree_values: config.ntree_values.clone(),
        mtry_values: config.mtry_values.clone(),
        rate: config.rate,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Grid(&'a BenchmarkGrid),
    Sweep(&'a SweepGrid),
}

pub const GRID_CSV_HEADER: &str = "method,rate,seed,nrmse,nmae,seconds,converged";
pub const SWEEP_CSV_HEADER: &str = "ntree,mtry,mtry_used,nrmse_pct,nmae_pct,seconds,iterations";

pub fn render_report(report: Report<'_>, format: ReportFormat) -> String {
    match (report, format) {
        (Report::Grid(g), ReportFormat::Csv) => grid_csv(g),
        (Report::Grid(g), ReportFormat::Markdown) => grid_markdown(g),
        (Report::Sweep(s), ReportFormat::Csv) => sweep_csv(s),
        (Report::Sweep(s), ReportFormat::Markdown) => sweep_markdown(s),
    }
}

/// Error cells leave the metric fields empty and put `error` in the last column.
fn grid_csv(grid: &BenchmarkGrid) -> String {
    let mut out = format!("{GRID_CSV_HEADER}\n");
    for cell in &grid.cells {
        match &cell.outcome {
            Ok(m) => writeln!(
                out,
                "{},{},{},{},{},{},{}",
                cell.method, cell.rate, cell.seed, m.nrmse, m.nmae, m.wall_seconds, m.converged
            ),
            Err(_) => writeln!(out, "{},{},{},,,,error", cell.method, cell.rate, cell.seed),
        }
        .expect("writing to a String");
    }
    out
}

fn pct_label(rate: f64) -> String {
    format!("{}%", (rate * 1e4).round() / 1e2)
}

fn grid_markdown(grid: &BenchmarkGrid) -> String {
    let mut out = String::new();
    for (title, stat) in [
        (
            "NRMSE",
            BenchmarkGrid::median_nrmse as fn(&BenchmarkGrid, &str, f64) -> Option<f64>,
        ),
        ("NMAE", BenchmarkGrid::median_nmae),
    ] {
        writeln!(
            out,
            "### Median {title} over {} seed(s)\n",
            grid.seeds.len()
        )
        .unwrap();
        let header: Vec<String> = grid.rates.iter().map(|&r| pct_label(r)).collect();
        writeln!(out, "| method | {} |", header.join(" | ")).unwrap();
        writeln!(out, "|---|{}", "---:|".repeat(grid.rates.len())).unwrap();
        for method in &grid.methods {
            let row: Vec<String> = grid
                .rates
                .iter()
                .map(|&r| stat(grid, method, r).map_or("error".into(), |v| format!("{v:.4}")))
                .collect();
            writeln!(out, "| {method} | {} |", row.join(" | ")).unwrap();
        }
        out.push('\n');
    }
    out
}

fn sweep_csv(sweep: &SweepGrid) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for cell in &sweep.cells {
        match &cell.outcome {
            Ok(m) => writeln!(
                out,
                "{},{},{},{},{},{},{}",
                cell.ntree,
                cell.mtry,
                cell.mtry_used,
                m.nrmse_pct,
                m.nmae_pct,
                m.wall_seconds,
                m.iterations
            ),
            Err(_) => writeln!(
                out,
                "{},{},{},,,,error",
                cell.ntree, cell.mtry, cell.mtry_used
            ),
        }
        .expect("writing to a String");
    }
    out
}

fn sweep_markdown(sweep: &SweepGrid) -> String {
    let mut out = format!(
        "### NRMSE/NMAE (percent) and runtime, {} missing\n\n",
        pct_label(sweep.rate)
    );
    let header: Vec<String> = sweep
        .ntree_values
        .iter()
        .map(|n| format!("ntree={n}"))
        .collect();
    writeln!(out, "| mtry | {} |", header.join(" | ")).unwrap();
    writeln!(out, "|---|{}", "---:|".repeat(sweep.ntree_values.len())).unwrap();
    for &mtry in &sweep.mtry_values {
        let mut label = mtry.to_string();
        let row: Vec<String> = sweep
            .ntree_values
            .iter()
            .map(|&ntree| match sweep.cell(ntree, mtry) {
                Some(cell) => {
                    if cell.clamped {
                        label = format!("{mtry} (clamped to {})", cell.mtry_used);
                    }
                    match &cell.outcome {
                        Ok(m) => format!(
                            "{:.2}/{:.2} {:.2}s",
                            m.nrmse_pct, m.nmae_pct, m.wall_seconds
                        ),
                        Err(_) => "error".into(),
                    }
                }
                None => "-".into(),
            })
            .collect();
        writeln!(out, "| {label} | {} |", row.join(" | ")).unwrap();
    }
    out
}

/// Reads a grid CSV produced by [`render_report`] (or supplied externally).
pub fn parse_grid_csv(text: &str) -> Result<BenchmarkGrid> {
    let mut lines = text.lines();
    if lines.next() != Some(GRID_CSV_HEADER) {
        return Err(Error::Shape(format!(
            "grid CSV must start with {GRID_CSV_HEADER:?}"
        )));
    }
    let mut grid = BenchmarkGrid::default();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let row = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::RaggedRow {
                row,
                expected: 7,
                found: f.len(),
            });
        }
        let num = |col: usize| -> Result<f64> {
            f[col].parse().map_err(|_| Error::Parse {
                row,
                col: col + 1,
                field: f[col].to_string(),
            })
        };
        let rate = num(1)?;
        let seed = f[2].parse().map_err(|_| Error::Parse {
            row,
            col: 3,
            field: f[2].to_string(),
        })?;
        let outcome = if f[6] == "error" {
            Err("error".to_string())
        } else {
            Ok(CellMetrics {
                nrmse: num(3)?,
                nmae: num(4)?,
                wall_seconds: num(5)?,
                converged: f[6] == "true",
            })
        };
        if !grid.methods.iter().any(|m| m == f[0]) {
            grid.methods.push(f[0].to_string());
        }
        if !grid.rates.contains(&rate) {
            grid.rates.push(rate);
        }
        if !grid.seeds.contains(&seed) {
            grid.seeds.push(seed);
        }
        grid.cells.push(Cell {
            method: f[0].to_string(),
            rate,
            seed,
            outcome,
        });
    }
    Ok(grid)
}
