mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use rankdisc::discrepancy::sliding_diphoragram_of;
use rankdisc::harness::{
    diphoragram_csv, load_csv, matrix_csv, metrics_csv, ranks_csv, report_csv, run_experiment, runs_csv, CsvSchema,
    ExperimentCell, NullTable, Preset, ReportDocument, SimulationSpec,
};
use rankdisc::lds::sobol_prefix;
use rankdisc::nulldist::nystrom_spectrum;
use rankdisc::transport::vector_ranks;
use rankdisc::{DetectionParams, Detector, Error, KernelFamily, KernelSpec, Method, NullTestParams};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "rankdisc",
    version,
    about = "Multivariate change-point detection with vector ranks and quadratic discrepancy"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Flat `key = value` file of default flag values; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test for change points and locate them.
    Detect(DetectArgs),
    /// Draw observations from a piecewise-stationary model.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo grid and tabulate confidence, power and errors.
    Experiment(ExperimentArgs),
    /// Replace observations by their vector ranks.
    Rank(RankArgs),
    /// Write the sliding-window discrepancy series.
    Diphoragram(DiphoragramArgs),
    /// Tabulate the null spectrum and its quantiles for reuse by `detect`.
    NullTable(NullTableArgs),
    /// Write a prefix of the Sobol sequence.
    Lds(LdsArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Observation CSV, one row per time step.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// The first row is a header (detected from non-numeric cells by default).
    #[arg(long, conflicts_with = "no_header")]
    header: bool,
    #[arg(long)]
    no_header: bool,
    /// The first column holds time labels.
    #[arg(long)]
    time_column: bool,
}

impl InputArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            has_header: if self.header {
                Some(true)
            } else if self.no_header {
                Some(false)
            } else {
                None
            },
            time_column: self.time_column,
        }
    }
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long, default_value = "star", value_parser = parse_kernel)]
    kernel: KernelFamily,
    /// Kernel weight.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args, Debug)]
struct NullArgs {
    /// Series step of the distribution function.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Series length of the distribution function.
    #[arg(long, default_value_t = 100)]
    terms: usize,
    /// Eigenvalues kept from the Nyström approximation.
    #[arg(long, default_value_t = 50)]
    eigen_count: usize,
    /// Nyström nodes.
    #[arg(long, default_value_t = 512)]
    nodes: usize,
    /// Test against the truncated eigenvalue series without the remainder shift.
    #[arg(long)]
    no_remainder: bool,
}

impl NullArgs {
    fn params(&self, gamma: f64) -> NullTestParams {
        NullTestParams {
            gamma,
            terms: self.terms,
            alpha: self.alpha,
            eigen_count: self.eigen_count,
            nodes: self.nodes,
            remainder: !self.no_remainder,
            ..NullTestParams::default()
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Window bandwidth.
    #[arg(long)]
    tau: Option<usize>,
    /// Level of the acceptance test.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    null: NullArgs,
    /// diphoragram, distance, ratio or sma.
    #[arg(long, default_value = "diphoragram", value_parser = parse_method)]
    method: Method,
    /// Most change points tried by the smallest accepted model.
    #[arg(long, default_value_t = 10)]
    kmax: usize,
    /// Readjustment rounds for multiple change points.
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    /// Spectrum cached by `null-table`.
    #[arg(long, value_name = "PATH")]
    null_table: Option<PathBuf>,
    /// Report destination; standard output when absent.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Also write the diphoragram as `t,delta` CSV.
    #[arg(long, value_name = "PATH")]
    diphoragram_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// JSON model description.
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
    /// Replication index to draw.
    #[arg(long, default_value_t = 0)]
    replication: u64,
    /// Overrides the seed in the model file.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// calibration, mean-power, variance-power, single, midpoint or multi.
    #[arg(long, conflicts_with = "cells", required_unless_present = "cells")]
    preset: Option<String>,
    /// JSON list of experiment cells.
    #[arg(long, value_name = "PATH")]
    cells: Option<PathBuf>,
    #[arg(long, default_value = "star", value_parser = parse_kernel)]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 20)]
    replications: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Metrics destination; standard output when absent.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Also write per-replication records as CSV.
    #[arg(long, value_name = "PATH")]
    runs: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RankArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiphoragramArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    tau: Option<usize>,
    #[command(flatten)]
    kernel: KernelArgs,
    /// The input already holds points of the unit cube; skip ranking.
    #[arg(long)]
    ranked: bool,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NullTableArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    dim: usize,
    #[command(flatten)]
    null: NullArgs,
    /// Disjoint windows `a` of the tabulated law.
    #[arg(long, default_value_t = 1)]
    windows: usize,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LdsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

fn parse_kernel(s: &str) -> Result<KernelFamily, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Library(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Library(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::UnsupportedDimension { .. } | Error::UnsupportedOrder(_) => EXIT_USAGE,
        Error::NumericFailure(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })?;
        }
    }
    Ok(())
}

fn require_tau(tau: Option<usize>) -> Result<usize, Failure> {
    tau.ok_or_else(|| usage("--tau is required (as a flag or in the config file)"))
}

fn detect(args: DetectArgs) -> Result<(), Failure> {
    let tau = require_tau(args.tau)?;
    let data = load_csv(&args.input.input, args.input.schema())?;
    let x = &data.observations;
    let mut params = DetectionParams::new(tau, args.gamma, args.kernel.kernel);
    params.beta = args.kernel.beta;
    params.null = args.null.params(args.gamma);
    params.k_max = args.kmax;
    params.max_iter = args.max_iter;
    let detector = match &args.null_table {
        Some(path) => {
            let table = NullTable::load(path)?;
            if table.spectrum.dim() != x.cols() {
                return Err(Error::DimensionMismatch {
                    expected: table.spectrum.dim(),
                    found: x.cols(),
                }
                .into());
            }
            Detector::with_spectrum(params.clone(), table.spectrum)?
        }
        None => Detector::new(params.clone(), x.cols())?,
    };
    let report = if args.method == Method::Diphoragram {
        let ranked = vector_ranks(x)?;
        if let Some(path) = &args.diphoragram_out {
            let test = detector.test_kernel(&detector.sample_kernel(ranked.y())?)?;
            emit(Some(path), &diphoragram_csv(&test.diphoragram)?)?;
        }
        detector.detect_single_ranked(ranked.y())?
    } else {
        if let Some(path) = &args.diphoragram_out {
            let ranked = vector_ranks(x)?;
            let test = detector.test_kernel(&detector.sample_kernel(ranked.y())?)?;
            emit(Some(path), &diphoragram_csv(&test.diphoragram)?)?;
        }
        detector.detect(x, args.method)?
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut doc = ReportDocument::new(params, report, x.rows(), x.cols());
    if data.time_labels.is_some() {
        doc.change_point_labels = Some(doc.report.change_points.iter().map(|&c| data.label(c)).collect());
    }
    let bytes = match args.format {
        Format::Json => doc.to_json()?.into_bytes(),
        Format::Csv => report_csv(&doc)?,
    };
    emit(args.report.as_deref(), &bytes)
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.spec).map_err(|e| Error::Io {
        path: args.spec.clone(),
        source: e,
    })?;
    let mut spec: SimulationSpec = serde_json::from_str(&text).map_err(Error::from)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let x = spec.sample(args.replication)?;
    emit(args.output.as_deref(), &matrix_csv(&x)?)
}

fn experiment(args: ExperimentArgs) -> Result<(), Failure> {
    let cells: Vec<ExperimentCell> = match (&args.preset, &args.cells) {
        (Some(name), _) => {
            let preset: Preset = name.parse().map_err(|e: Error| usage(e.to_string()))?;
            preset.cells(args.kernel, args.replications, args.seed)
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(Error::from)?
        }
        (None, None) => return Err(usage("one of --preset or --cells is required")),
    };
    let metrics = run_experiment(&cells)?;
    let bytes = match args.format {
        Format::Csv => metrics_csv(&metrics)?,
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&metrics).map_err(Error::from)?;
            s.push('\n');
            s.into_bytes()
        }
    };
    if let Some(path) = &args.runs {
        emit(Some(path), &runs_csv(&metrics)?)?;
    }
    emit(args.output.as_deref(), &bytes)
}

fn rank(args: RankArgs) -> Result<(), Failure> {
    let data = load_csv(&args.input.input, args.input.schema())?;
    let ranked = vector_ranks(&data.observations)?;
    emit(args.output.as_deref(), &ranks_csv(&ranked)?)
}

fn diphoragram(args: DiphoragramArgs) -> Result<(), Failure> {
    let tau = require_tau(args.tau)?;
    let data = load_csv(&args.input.input, args.input.schema())?;
    let spec = KernelSpec::new(args.kernel.kernel, args.kernel.beta, data.observations.cols())?;
    let points = if args.ranked {
        data.observations
    } else {
        vector_ranks(&data.observations)?.into_points()
    };
    let diph = sliding_diphoragram_of(&spec, &points, tau)?;
    emit(args.output.as_deref(), &diphoragram_csv(&diph)?)
}

fn null_table(args: NullTableArgs) -> Result<(), Failure> {
    let params = args.null.params(0.1);
    params.validate()?;
    let spec = KernelSpec::new(args.kernel.kernel, args.kernel.beta, args.dim)?;
    let spectrum = nystrom_spectrum(&spec, params.nodes, params.eigen_count)?;
    let table = NullTable::new(spectrum, args.windows, &params)?;
    emit(args.output.as_deref(), &table.to_csv()?)
}

fn lds(args: LdsArgs) -> Result<(), Failure> {
    emit(args.output.as_deref(), &matrix_csv(&sobol_prefix(args.n, args.dim)?)?)
}

/// Parses the command line with the config file's pairs spliced in right
/// after the subcommand; explicit flags override them.
fn merged_args(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(&args)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let Some(path) = cli.config.clone() else {
        return Ok(cli);
    };
    let pairs = config::load(&path)
        .map_err(|e| Cli::command().error(clap::error::ErrorKind::Io, format!("config file {}", e.0)))?;
    let Some(sub) = matches.subcommand_name() else {
        return Ok(cli);
    };
    let at = args.iter().position(|a| a == sub).map_or(args.len(), |i| i + 1);
    let mut spliced = args[..at].to_vec();
    spliced.extend(config::to_args(&pairs).into_iter().map(OsString::from));
    spliced.extend_from_slice(&args[at..]);
    Cli::try_parse_from(spliced)
}

fn main() -> ExitCode {
    let cli = match merged_args(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Detect(a) => detect(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::Rank(a) => rank(a),
        Command::Diphoragram(a) => diphoragram(a),
        Command::NullTable(a) => null_table(a),
        Command::Lds(a) => lds(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Library(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
