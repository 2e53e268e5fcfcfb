use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mifo_core::baselines::BaselineParams;
use mifo_core::bench::{
    generate_synthetic, render_report, run_benchmark, run_method, run_sweep, GridConfig, Method,
    MethodParams, Report, ReportFormat, SweepConfig, SyntheticSpec,
};
use mifo_core::csv_io::{load_csv, load_positions, write_csv, write_positions, DEFAULT_NA};
use mifo_core::{evaluate, inject_missing, mifo_impute_observed, DataMatrix, MifoParams};

#[derive(Debug, Parser)]
#[command(
    name = "mifoimpute",
    version,
    about = "Random-forest imputation of missing values, with baselines and benchmarks"
)]
struct Cli {
    /// Seed for every stochastic step (injection, forests, synthetic data).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Token marking a missing cell in CSV input and output.
    #[arg(long, global = true, default_value = DEFAULT_NA)]
    na_token: String,

    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic low-rank-plus-noise matrix.
    Generate(GenerateArgs),
    /// Hide a random fraction of cells of a complete matrix.
    ///
    /// The positions file has a "row,col" header and 0-based indices
    /// counting data rows (header excluded) and columns.
    Inject(InjectArgs),
    /// Fill the missing cells of a CSV matrix.
    Impute(ImputeArgs),
    /// Score an imputation against the truth at the given positions.
    Evaluate(EvaluateArgs),
    /// Run a method x missing-rate grid and write grid.csv and grid.md.
    Benchmark(BenchmarkArgs),
    /// Run an ntree x mtry grid of the forest imputer and write sweep.csv and sweep.md.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 100)]
    rows: usize,
    #[arg(long, default_value_t = 254)]
    cols: usize,
    /// Rank of the noiseless signal.
    #[arg(long, default_value_t = 3)]
    rank: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    synthetic: SyntheticArgs,
}

#[derive(Debug, Args)]
struct InjectArgs {
    /// Complete input matrix.
    #[arg(long = "in")]
    input: PathBuf,
    /// Fraction of cells to hide, in (0, 1).
    #[arg(long)]
    rate: f64,
    /// Observed matrix with the hidden cells written as the NA token.
    #[arg(long)]
    out: PathBuf,
    /// Hidden positions, "row,col" header, 0-based.
    #[arg(long)]
    positions: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Mifo,
    Mean,
    Knn,
    Svd,
    Svt,
    Lls,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mifo => Method::Mifo,
            MethodArg::Mean => Method::Mean,
            MethodArg::Knn => Method::Knn,
            MethodArg::Svd => Method::Svd,
            MethodArg::Svt => Method::Svt,
            MethodArg::Lls => Method::Lls,
        }
    }
}

#[derive(Debug, Args, Default)]
struct ForestArgs {
    /// Trees per forest [mifo, default 100].
    #[arg(long)]
    ntree: Option<usize>,
    /// Candidate columns per split [mifo, default floor(sqrt(predictors))].
    #[arg(long)]
    mtry: Option<usize>,
    /// Nodes at or below this size become leaves [mifo, default 5].
    #[arg(long)]
    min_node_size: Option<usize>,
    /// Maximum sweeps [mifo, default 10].
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct BaselineArgs {
    /// Neighbours [knn, default 10].
    #[arg(long)]
    knn_k: Option<usize>,
    /// Rank of the approximation [svd, default 5].
    #[arg(long)]
    svd_rank: Option<usize>,
    /// Iteration cap [svd, default 100].
    #[arg(long)]
    svd_max_iter: Option<usize>,
    /// Relative change tolerance [svd, default 1e-6].
    #[arg(long)]
    svd_tol: Option<f64>,
    /// Singular value threshold [svt, default 5*sqrt(n*p)].
    #[arg(long)]
    svt_tau: Option<f64>,
    /// Step size [svt, default 1.2*n*p/observed].
    #[arg(long)]
    svt_step: Option<f64>,
    /// Iteration cap [svt, default 200].
    #[arg(long)]
    svt_max_iter: Option<usize>,
    /// Relative residual tolerance [svt, default 1e-4].
    #[arg(long)]
    svt_tol: Option<f64>,
    /// Neighbour rows [lls, default 15].
    #[arg(long)]
    lls_k: Option<usize>,
}

#[derive(Debug, Args)]
struct ImputeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// JSON-lines diagnostics for mifo [default: <out> with extension .diagnostics.jsonl].
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    forest: ForestArgs,
    #[command(flatten)]
    baseline: BaselineArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    imputed: PathBuf,
    /// Positions file, "row,col" header, 0-based.
    #[arg(long)]
    positions: PathBuf,
    /// Per-column NMAE CSV ("column,nmae"; empty for columns without positions).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Complete input matrix [default: synthetic data from --rows/--cols/--rank/--noise].
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Mifo, MethodArg::Mean, MethodArg::Knn, MethodArg::Svd, MethodArg::Svt, MethodArg::Lls])]
    methods: Vec<MethodArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.10, 0.20, 0.30])]
    rates: Vec<f64>,
    /// Injection seeds, one grid cell per (method, rate, seed).
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    /// Time each cell with nothing else running.
    #[arg(long)]
    timing_strict: bool,
    #[command(flatten)]
    synthetic: SyntheticArgs,
    #[command(flatten)]
    forest: ForestArgs,
    #[command(flatten)]
    baseline: BaselineArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Complete input matrix [default: synthetic data from --rows/--cols/--rank/--noise].
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100, 250, 500])]
    ntrees: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8, 16])]
    mtrys: Vec<usize>,
    #[arg(long, default_value_t = 0.10)]
    rate: f64,
    /// Nodes at or below this size become leaves.
    #[arg(long, default_value_t = 5)]
    min_node_size: usize,
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    #[command(flatten)]
    synthetic: SyntheticArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

type CliResult<T> = Result<T, CliError>;

fn data_err(context: impl std::fmt::Display) -> impl FnOnce(mifo_core::Error) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

/// Parameter errors are usage errors; anything else is a data error.
fn compute_err(context: impl std::fmt::Display) -> impl FnOnce(mifo_core::Error) -> CliError {
    move |e| {
        let mut root = &e;
        while let mifo_core::Error::Column { source, .. } = root {
            root = source;
        }
        match root {
            mifo_core::Error::InvalidParameter(_) => CliError::Usage(format!("{context}: {e}")),
            _ => CliError::Data(format!("{context}: {e}")),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let na = cli.na_token.as_str();
    if na.contains(',') || na.contains('"') || na.contains('\n') {
        return Err(CliError::Usage(format!(
            "--na-token {na:?} cannot contain a comma, quote or newline"
        )));
    }
    match cli.command {
        Command::Generate(a) => generate(a, cli.seed, na),
        Command::Inject(a) => inject(a, cli.seed, na),
        Command::Impute(a) => impute(a, cli.seed, na),
        Command::Evaluate(a) => evaluate_cmd(a, na),
        Command::Benchmark(a) => benchmark(a, cli.seed, na),
        Command::Sweep(a) => sweep(a, cli.seed, na),
    }
}

/// Resolves a path for comparison even when the file does not exist yet.
fn normalized(path: &Path) -> PathBuf {
    if let Ok(p) = path.canonicalize() {
        return p;
    }
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    match (parent.canonicalize(), path.file_name()) {
        (Ok(dir), Some(name)) => dir.join(name),
        _ => path.to_path_buf(),
    }
}

fn check_outputs(inputs: &[(&str, &Path)], outputs: &[(&str, &Path)]) -> CliResult<()> {
    for (i, (out_flag, out)) in outputs.iter().enumerate() {
        let out_n = normalized(out);
        for (in_flag, input) in inputs {
            if normalized(input) == out_n {
                return Err(CliError::Usage(format!(
                    "{out_flag} {} would overwrite the {in_flag} input",
                    out.display()
                )));
            }
        }
        for (other_flag, other) in &outputs[..i] {
            if normalized(other) == out_n {
                return Err(CliError::Usage(format!(
                    "{out_flag} and {other_flag} both name {}",
                    out.display()
                )));
            }
        }
    }
    Ok(())
}

fn synthetic_spec(a: &SyntheticArgs, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_rows: a.rows,
        n_cols: a.cols,
        latent_rank: a.rank,
        noise_sigma: a.noise,
        seed,
    }
}

fn load(path: &Path, na: &str) -> CliResult<DataMatrix> {
    load_csv(path, na).map_err(data_err(path.display()))
}

fn generate(a: GenerateArgs, seed: u64, na: &str) -> CliResult<()> {
    let m = generate_synthetic(&synthetic_spec(&a.synthetic, seed))
        .map_err(|e| CliError::Usage(format!("--rows/--cols/--rank/--noise: {e}")))?;
    write_csv(&m, &a.out, na).map_err(data_err(a.out.display()))
}

fn inject(a: InjectArgs, seed: u64, na: &str) -> CliResult<()> {
    if !(a.rate > 0.0 && a.rate < 1.0) {
        return Err(CliError::Usage(format!(
            "--rate must lie in (0, 1), got {}",
            a.rate
        )));
    }
    check_outputs(
        &[("--in", &a.input)],
        &[("--out", &a.out), ("--positions", &a.positions)],
    )?;
    let truth = load(&a.input, na)?;
    let pair = inject_missing(&truth, a.rate, seed).map_err(compute_err(a.input.display()))?;
    write_csv(&pair.observed, &a.out, na).map_err(data_err(a.out.display()))?;
    write_positions(&pair.injected_positions, &a.positions).map_err(data_err(a.positions.display()))
}

fn reject_foreign_flags(
    method: MethodArg,
    forest: &ForestArgs,
    baseline: &BaselineArgs,
) -> CliResult<()> {
    let flags: [(&str, bool, MethodArg); 13] = [
        ("--ntree", forest.ntree.is_some(), MethodArg::Mifo),
        ("--mtry", forest.mtry.is_some(), MethodArg::Mifo),
        (
            "--min-node-size",
            forest.min_node_size.is_some(),
            MethodArg::Mifo,
        ),
        ("--max-iter", forest.max_iter.is_some(), MethodArg::Mifo),
        ("--knn-k", baseline.knn_k.is_some(), MethodArg::Knn),
        ("--svd-rank", baseline.svd_rank.is_some(), MethodArg::Svd),
        (
            "--svd-max-iter",
            baseline.svd_max_iter.is_some(),
            MethodArg::Svd,
        ),
        ("--svd-tol", baseline.svd_tol.is_some(), MethodArg::Svd),
        ("--svt-tau", baseline.svt_tau.is_some(), MethodArg::Svt),
        ("--svt-step", baseline.svt_step.is_some(), MethodArg::Svt),
        (
            "--svt-max-iter",
            baseline.svt_max_iter.is_some(),
            MethodArg::Svt,
        ),
        ("--svt-tol", baseline.svt_tol.is_some(), MethodArg::Svt),
        ("--lls-k", baseline.lls_k.is_some(), MethodArg::Lls),
    ];
    for (flag, given, owner) in flags {
        if given && owner != method {
            return Err(CliError::Usage(format!(
                "{flag} applies to --method {}, not {}",
                Method::from(owner),
                Method::from(method)
            )));
        }
    }
    Ok(())
}

fn method_params(seed: u64, forest: &ForestArgs, baseline: &BaselineArgs) -> MethodParams {
    let mut mifo = MifoParams::default();
    mifo.forest.seed = seed;
    if let Some(v) = forest.ntree {
        mifo.forest.ntree = v;
    }
    if forest.mtry.is_some() {
        mifo.forest.mtry = forest.mtry;
    }
    if let Some(v) = forest.min_node_size {
        mifo.forest.min_node_size = v;
    }
    if let Some(v) = forest.max_iter {
        mifo.max_iter = v;
    }
    let d = BaselineParams::default();
    let b = BaselineParams {
        knn_k: baseline.knn_k.unwrap_or(d.knn_k),
        svd_rank: baseline.svd_rank.unwrap_or(d.svd_rank),
        svd_max_iter: baseline.svd_max_iter.unwrap_or(d.svd_max_iter),
        svd_tol: baseline.svd_tol.unwrap_or(d.svd_tol),
        svt_tau: baseline.svt_tau.or(d.svt_tau),
        svt_step: baseline.svt_step.or(d.svt_step),
        svt_max_iter: baseline.svt_max_iter.unwrap_or(d.svt_max_iter),
        svt_tol: baseline.svt_tol.unwrap_or(d.svt_tol),
        lls_k: baseline.lls_k.unwrap_or(d.lls_k),
    };
    MethodParams { mifo, baseline: b }
}

fn impute(a: ImputeArgs, seed: u64, na: &str) -> CliResult<()> {
    reject_foreign_flags(a.method, &a.forest, &a.baseline)?;
    if a.diagnostics.is_some() && a.method != MethodArg::Mifo {
        return Err(CliError::Usage(
            "--diagnostics applies to --method mifo only".into(),
        ));
    }
    let diagnostics = (a.method == MethodArg::Mifo).then(|| {
        a.diagnostics
            .clone()
            .unwrap_or_else(|| a.out.with_extension("diagnostics.jsonl"))
    });
    let mut outputs = vec![("--out", a.out.as_path())];
    if let Some(d) = &diagnostics {
        outputs.push(("--diagnostics", d.as_path()));
    }
    check_outputs(&[("--in", &a.input)], &outputs)?;

    let params = method_params(seed, &a.forest, &a.baseline);
    let m = load(&a.input, na)?;
    let context = format!(
        "{} (--method {})",
        a.input.display(),
        Method::from(a.method)
    );
    match diagnostics {
        Some(path) => {
            let mut lines = Vec::new();
            let mut previous: Option<DataMatrix> = None;
            let result = mifo_impute_observed(&m, &params.mifo, |sweep, current| {
                let delta = previous
                    .as_ref()
                    .and_then(|prev| mifo_core::delta_n(current, prev).ok());
                lines.push(json!({ "sweep": sweep, "delta": delta }).to_string());
                previous = Some(current.clone());
            })
            .map_err(compute_err(&context))?;
            lines.push(
                json!({
                    "iterations_run": result.iterations_run,
                    "converged": result.converged,
                    "delta_trace": result.delta_trace,
                    "oob_nrmse_estimate": result.oob_nrmse_estimate,
                    "oob_nmae_estimate": result.oob_nmae_estimate,
                    "per_column_oob_mse": result.per_column_oob_mse,
                })
                .to_string(),
            );
            write_csv(&result.imputed, &a.out, na).map_err(data_err(a.out.display()))?;
            let mut text = lines.join("\n");
            text.push('\n');
            fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        }
        None => {
            let out = run_method(a.method.into(), &m, &params).map_err(compute_err(&context))?;
            write_csv(&out.imputed, &a.out, na).map_err(data_err(a.out.display()))
        }
    }
}

fn evaluate_cmd(a: EvaluateArgs, na: &str) -> CliResult<()> {
    check_outputs(
        &[
            ("--truth", &a.truth),
            ("--imputed", &a.imputed),
            ("--positions", &a.positions),
        ],
        &[("--out", &a.out)],
    )?;
    let truth = load(&a.truth, na)?;
    let imputed = load(&a.imputed, na)?;
    let positions = load_positions(&a.positions).map_err(data_err(a.positions.display()))?;
    let report = evaluate(&truth, &imputed, &positions).map_err(data_err(format!(
        "evaluating {} against {}",
        a.imputed.display(),
        a.truth.display()
    )))?;
    let mut csv = String::from("column,nmae\n");
    for (name, v) in truth.col_names().iter().zip(&report.nmae_per_col) {
        match v {
            Some(v) => csv.push_str(&format!("{name},{v}\n")),
            None => csv.push_str(&format!("{name},\n")),
        }
    }
    fs::write(&a.out, csv).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    println!("nrmse={} nmae={}", report.nrmse, report.nmae_overall);
    Ok(())
}

fn bench_data(
    input: &Option<PathBuf>,
    synthetic: &SyntheticArgs,
    seed: u64,
    na: &str,
) -> CliResult<DataMatrix> {
    match input {
        Some(path) => load(path, na),
        None => generate_synthetic(&synthetic_spec(synthetic, seed))
            .map_err(|e| CliError::Usage(format!("--rows/--cols/--rank/--noise: {e}"))),
    }
}

fn write_report(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn benchmark(a: BenchmarkArgs, seed: u64, na: &str) -> CliResult<()> {
    if let Some(input) = &a.input {
        check_outputs(
            &[("--in", input)],
            &[
                ("--out-dir/grid.csv", &a.out_dir.join("grid.csv")),
                ("--out-dir/grid.md", &a.out_dir.join("grid.md")),
            ],
        )?;
    }
    let config = GridConfig {
        methods: a.methods.iter().map(|&m| m.into()).collect(),
        rates: a.rates.clone(),
        seeds: a.seeds.clone(),
        timing_strict: a.timing_strict,
    };
    let params = method_params(seed, &a.forest, &a.baseline);
    let data = bench_data(&a.input, &a.synthetic, seed, na)?;
    let grid = run_benchmark(&data, &config, &params).map_err(|e| match e {
        mifo_core::Error::InvalidParameter(msg) => {
            CliError::Usage(format!("--methods/--rates/--seeds: {msg}"))
        }
        other => CliError::Data(format!("benchmark input: {other}")),
    })?;
    create_dir(&a.out_dir)?;
    write_report(
        &a.out_dir,
        "grid.csv",
        &render_report(Report::Grid(&grid), ReportFormat::Csv),
    )?;
    write_report(
        &a.out_dir,
        "grid.md",
        &render_report(Report::Grid(&grid), ReportFormat::Markdown),
    )
}

fn sweep(a: SweepArgs, seed: u64, na: &str) -> CliResult<()> {
    if !(a.rate > 0.0 && a.rate < 1.0) {
        return Err(CliError::Usage(format!(
            "--rate must lie in (0, 1), got {}",
            a.rate
        )));
    }
    if let Some(input) = &a.input {
        check_outputs(
            &[("--in", input)],
            &[
                ("--out-dir/sweep.csv", &a.out_dir.join("sweep.csv")),
                ("--out-dir/sweep.md", &a.out_dir.join("sweep.md")),
            ],
        )?;
    }
    let mut base = MifoParams::default();
    base.forest.seed = seed;
    base.forest.min_node_size = a.min_node_size;
    base.max_iter = a.max_iter;
    let config = SweepConfig {
        ntree_values: a.ntrees.clone(),
        mtry_values: a.mtrys.clone(),
        rate: a.rate,
        seed,
        base,
    };
    let data = bench_data(&a.input, &a.synthetic, seed, na)?;
    let grid = run_sweep(&data, &config).map_err(|e| match e {
        mifo_core::Error::InvalidParameter(msg) => {
            CliError::Usage(format!("--ntrees/--mtrys: {msg}"))
        }
        other => CliError::Data(format!("sweep input: {other}")),
    })?;
    create_dir(&a.out_dir)?;
    write_report(
        &a.out_dir,
        "sweep.csv",
        &render_report(Report::Sweep(&grid), ReportFormat::Csv),
    )?;
    write_report(
        &a.out_dir,
        "sweep.md",
        &render_report(Report::Sweep(&grid), ReportFormat::Markdown),
    )
}
