use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use idg_core::analysis::{bound_report, conditional_stat, StatKind};
use idg_core::decode::{decode_adaptive_from_outcomes, decode_nonadaptive, DecodeConfig};
use idg_core::design::plan_adaptive;
use idg_core::matrix::{format_outcomes, parse_outcomes};
use idg_core::oracle::{enumerate_consistent, exact_error_probability};
use idg_core::sim::{run_cell, run_sweep, CellSummary};
use idg_core::{
    compute_params, generate_matrix, sample_graph, AssociationGraph, Cell, DesignKind, DesignParams, DesignSpec,
    IdgError, ParamOverrides, PoolingMatrix, SideInfo, SweepConfig,
};

const FORMATS: &str = "\
File formats:
  matrix   text; first line \"T n\", then T lines of n characters over {0,1}
  graph    JSON {\"n\":5,\"inhibitors\":[0,2],\"defectives\":[1,3],\"edges\":[[0,1],[2,3]]}, 0-based items
  outcomes string over {0,1} ordered by test index (files: one character per test)";

/// Group testing with inhibitors under the immune defectives graph model.
///
/// Items are 0-based indices. Probabilities are per-entry Bernoulli
/// densities in [0, 1]; test counts are numbers of pooled tests.
#[derive(Parser)]
#[command(name = "idg", version, after_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Designed constants (p1, p2, tau, threshold, betas, test counts) as JSON.
    #[command(after_help = FORMATS)]
    Params(ParamsArgs),
    /// Random Bernoulli(p) pooling matrix in the matrix text format.
    #[command(after_help = FORMATS)]
    GenMatrix(GenMatrixArgs),
    /// Uniformly random association graph as JSON.
    #[command(after_help = FORMATS)]
    GenGraph(GenGraphArgs),
    /// Outcome string of a graph on a matrix.
    #[command(after_help = FORMATS)]
    Outcome(OutcomeArgs),
    /// Decode defectives, inhibitors and associations from outcomes.
    #[command(after_help = FORMATS)]
    Decode(DecodeArgs),
    /// Conditional positive-outcome probability of one item in a graph.
    #[command(after_help = FORMATS)]
    Stats(StatsArgs),
    /// Counting lower bound and asymptotic reference terms (tests, log2).
    #[command(after_help = FORMATS)]
    Bounds(BoundsArgs),
    /// Brute-force references for tiny instances.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Monte Carlo trials of one cell; per-trial reports and a summary as JSON.
    #[command(after_help = FORMATS)]
    Simulate(SimulateArgs),
    /// Grid of Monte Carlo cells from a JSON config, as CSV or JSON.
    ///
    /// Config keys: n, r, d (lists), models (e.g. [{"model":"nsi"},{"model":"wsi","i_max":1}]),
    /// deltas, designs (["adaptive","nonadaptive"]), trials, master_seed, overrides.
    /// IDG_THREADS caps the worker threads; output does not depend on it.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Every graph with the given sizes that reproduces the outcomes (JSON).
    #[command(after_help = FORMATS)]
    Consistent(ConsistentArgs),
    /// Exact failure probability of a design on a graph, over the random matrices.
    #[command(after_help = FORMATS)]
    ErrorProb(ErrorProbArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Nsi,
    Wsi,
}

#[derive(Args)]
struct ModelArgs {
    /// Side information; defaults to wsi when --i-max is given, nsi otherwise.
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Maximum inhibitors per defective (WSI).
    #[arg(long)]
    i_max: Option<usize>,
}

impl ModelArgs {
    fn side(&self) -> Result<SideInfo, CliError> {
        match (self.model, self.i_max) {
            (Some(Model::Nsi), None) | (None, None) => Ok(SideInfo::Nsi),
            (Some(Model::Wsi) | None, Some(i_max)) => Ok(SideInfo::Wsi { i_max }),
            (Some(Model::Wsi), None) => Err(CliError::usage("--model wsi needs --i-max")),
            (Some(Model::Nsi), Some(_)) => Err(CliError::usage("--i-max only applies to --model wsi")),
        }
    }
}

#[derive(Args)]
struct SizeArgs {
    /// Number of items.
    #[arg(long)]
    n: usize,
    /// Number of inhibitors.
    #[arg(long)]
    r: usize,
    /// Number of defectives.
    #[arg(long)]
    d: usize,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct OverrideArgs {
    /// Override the density of the non-adaptive / stage-1 matrix.
    #[arg(long)]
    p: Option<f64>,
    /// Override the density of the stage-2 matrix.
    #[arg(long)]
    p2: Option<f64>,
    /// Override the number of non-adaptive / stage-1 tests.
    #[arg(long)]
    t: Option<usize>,
    /// Override the number of stage-2 tests per defective.
    #[arg(long)]
    t2: Option<usize>,
    /// Override the Step-1 threshold fraction, in (0, 1).
    #[arg(long)]
    threshold: Option<f64>,
}

impl OverrideArgs {
    fn to_overrides(&self, design: DesignKind) -> ParamOverrides {
        let (t_na, t1) = match design {
            DesignKind::Nonadaptive => (self.t, None),
            DesignKind::Adaptive => (None, self.t),
        };
        ParamOverrides { p1: self.p, p2: self.p2, t_na, t1, t2: self.t2, threshold: self.threshold }
    }
}

#[derive(Args)]
struct Output {
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    size: SizeArgs,
    /// Error exponent: designs target failure probability O(n^-delta).
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenMatrixArgs {
    /// Number of tests (rows).
    #[arg(long)]
    tests: usize,
    /// Number of items (columns).
    #[arg(long)]
    n: usize,
    /// Probability that an item joins a test.
    #[arg(long)]
    p: f64,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GenGraphArgs {
    #[command(flatten)]
    size: SizeArgs,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OutcomeArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,
    /// Matrix text file.
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OutcomeSource {
    /// Outcomes as a string over {0,1}.
    #[arg(long, conflicts_with = "outcomes_file")]
    outcomes: Option<String>,
    /// File holding the outcome string.
    #[arg(long)]
    outcomes_file: Option<PathBuf>,
}

impl OutcomeSource {
    fn load(&self) -> Result<Vec<bool>, CliError> {
        match (&self.outcomes, &self.outcomes_file) {
            (Some(s), _) => Ok(parse_outcomes(s)?),
            (None, Some(path)) => Ok(parse_outcomes(&read(path)?)?),
            (None, None) => Err(CliError::usage("one of --outcomes or --outcomes-file is required")),
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    /// Matrix text file (stage 1 for the adaptive design).
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    outcomes: OutcomeSource,
    /// Known number of defectives.
    #[arg(long)]
    expected_d: usize,
    /// Step-1 threshold fraction in (0, 1). Without it the designed value
    /// for (n, --r, --expected-d, model, --delta) is used.
    #[arg(long)]
    threshold: Option<f64>,
    /// Number of inhibitors, for the designed threshold.
    #[arg(long)]
    r: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, value_enum, default_value = "nonadaptive")]
    design: DesignArg,
    /// Stage-2 matrix over the n - d items left after Step 1 (adaptive).
    #[arg(long)]
    stage2_matrix: Option<PathBuf>,
    /// Stage-2 outcomes, one {0,1} string per declared defective in
    /// ascending order, separated by commas.
    #[arg(long)]
    stage2_outcomes: Option<String>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Nonadaptive,
    Adaptive,
}

impl From<DesignArg> for DesignKind {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Nonadaptive => DesignKind::Nonadaptive,
            DesignArg::Adaptive => DesignKind::Adaptive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Q1Exact,
    Q1Lb,
    Q2Exact,
    Q2Ub,
    Q3Exact,
}

impl From<KindArg> for StatKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Q1Exact => StatKind::Q1Exact,
            KindArg::Q1Lb => StatKind::Q1Lb,
            KindArg::Q2Exact => StatKind::Q2Exact,
            KindArg::Q2Ub => StatKind::Q2Ub,
            KindArg::Q3Exact => StatKind::Q3Exact,
        }
    }
}

#[derive(Args)]
struct StatsArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,
    /// Probability that an item joins the test.
    #[arg(long)]
    p: f64,
    /// Item the probability is conditioned on.
    #[arg(long)]
    item: usize,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    size: SizeArgs,
    /// Render a text table next to the designed test counts instead of JSON.
    #[arg(long)]
    table: bool,
    /// Error exponent for the designed test counts in --table.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ConsistentArgs {
    /// Matrix text file.
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    outcomes: OutcomeSource,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    d: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ErrorProbArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "nonadaptive")]
    design: DesignArg,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[command(flatten)]
    overrides: OverrideArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    size: SizeArgs,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, value_enum, default_value = "adaptive")]
    design: DesignArg,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Master seed; trial t uses a seed derived from (seed, 0, t).
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    overrides: OverrideArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config JSON file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    output: Output,
}

enum CliError {
    Usage(String),
    Domain(IdgError),
    Io(String),
}

impl CliError {
    fn usage(msg: &str) -> Self {
        CliError::Usage(msg.to_string())
    }
}

impl From<IdgError> for CliError {
    fn from(e: IdgError) -> Self {
        CliError::Domain(e)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> Result<PoolingMatrix, CliError> {
    Ok(read(path)?.parse()?)
}

fn read_graph(path: &Path) -> Result<AssociationGraph, CliError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Domain(IdgError::Parse(format!("{}: {e}", path.display()))))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("values serialize");
    s.push('\n');
    s
}

fn emit(output: &Output, text: &str) -> Result<(), CliError> {
    match &output.out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn params_for(n: usize, r: usize, d: usize, side: SideInfo, delta: f64) -> Result<DesignParams, CliError> {
    Ok(compute_params(n, r, d, side, delta)?)
}

fn cmd_params(a: ParamsArgs) -> Result<(), CliError> {
    let s = &a.size;
    let prm = params_for(s.n, s.r, s.d, s.model.side()?, a.delta)?;
    #[derive(Serialize)]
    struct Out {
        #[serde(flatten)]
        params: DesignParams,
        adaptive_total_tests: usize,
    }
    let total = plan_adaptive(&prm).total_tests;
    emit(&a.output, &to_json(&Out { params: prm, adaptive_total_tests: total }))
}

fn cmd_gen_matrix(a: GenMatrixArgs) -> Result<(), CliError> {
    let m = generate_matrix(a.tests, a.n, a.p, a.seed)?;
    emit(&a.output, &m.to_string())
}

fn cmd_gen_graph(a: GenGraphArgs) -> Result<(), CliError> {
    let s = &a.size;
    let g = sample_graph(s.n, s.r, s.d, s.model.side()?, a.seed)?;
    emit(&a.output, &to_json(&g))
}

fn cmd_outcome(a: OutcomeArgs) -> Result<(), CliError> {
    let g = read_graph(&a.graph)?;
    let m = read_matrix(&a.matrix)?;
    let y = g.outcome_vector(&m)?;
    emit(&a.output, &format!("{}\n", format_outcomes(&y)))
}

fn cmd_decode(a: DecodeArgs) -> Result<(), CliError> {
    let y = a.outcomes.load()?;
    let m = read_matrix(&a.matrix)?;
    let threshold = match (a.threshold, a.r) {
        (Some(t), _) => t,
        (None, Some(r)) => params_for(m.cols(), r, a.expected_d, a.model.side()?, a.delta)?.threshold_fraction,
        (None, None) => return Err(CliError::usage("give --threshold, or --r to use the designed threshold")),
    };
    let cfg = DecodeConfig { threshold_fraction: threshold, expected_d: a.expected_d };
    let result = match a.design {
        DesignArg::Nonadaptive => decode_nonadaptive(&m, &y, cfg)?,
        DesignArg::Adaptive => {
            let (Some(m2), Some(y2)) = (&a.stage2_matrix, &a.stage2_outcomes) else {
                return Err(CliError::usage("adaptive decoding needs --stage2-matrix and --stage2-outcomes"));
            };
            let m2 = read_matrix(m2)?;
            let y2 = y2.split(',').map(parse_outcomes).collect::<Result<Vec<_>, _>>()?;
            decode_adaptive_from_outcomes(&m, &y, &m2, &y2, cfg)?
        }
    };
    emit(&a.output, &to_json(&result))
}

fn cmd_stats(a: StatsArgs) -> Result<(), CliError> {
    let g = read_graph(&a.graph)?;
    let stat = conditional_stat(&g, a.p, a.item, a.kind.into())?;
    emit(&a.output, &to_json(&stat))
}

fn cmd_bounds(a: BoundsArgs) -> Result<(), CliError> {
    let s = &a.size;
    let side = s.model.side()?;
    let report = bound_report(s.n, s.r, s.d, side)?;
    if !a.table {
        return emit(&a.output, &to_json(&report));
    }
    let t = &report.asymptotic_terms;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
    let mut out = String::new();
    out.push_str(&format!("n={} r={} d={} model={}\n", s.n, s.r, s.d, side.label()));
    out.push_str(&format!("{:<34}{:>12}\n", "counting lower bound", report.counting_lb));
    out.push_str(&format!("{:<34}{:>12.1}\n", "entropy term (reference only)", t.entropy_term));
    out.push_str(&format!("{:<34}{:>12}\n", "inhibitor term (reference only)", opt(t.inhibitor_term)));
    out.push_str(&format!("{:<34}{:>12}\n", "defective term (reference only)", opt(t.defective_term)));
    match compute_params(s.n, s.r, s.d, side, a.delta) {
        Ok(prm) => {
            out.push_str(&format!("{:<34}{:>12}\n", format!("designed T_NA (delta={})", a.delta), prm.t_na));
            let total = plan_adaptive(&prm).total_tests;
            out.push_str(&format!("{:<34}{:>12}\n", format!("designed T_A (delta={})", a.delta), total));
        }
        Err(e) => out.push_str(&format!("{:<34}{:>12}\n", "designed tests", format!("n/a: {e}"))),
    }
    emit(&a.output, &out)
}

fn cmd_consistent(a: ConsistentArgs) -> Result<(), CliError> {
    let y = a.outcomes.load()?;
    let m = read_matrix(&a.matrix)?;
    let set = enumerate_consistent(&m, &y, m.cols(), a.r, a.d, a.model.side()?)?;
    emit(&a.output, &to_json(&set))
}

fn cmd_error_prob(a: ErrorProbArgs) -> Result<(), CliError> {
    let g = read_graph(&a.graph)?;
    let design = a.design.into();
    let prm = params_for(g.n(), g.r(), g.d(), a.model.side()?, a.delta)?;
    let prm = a.overrides.to_overrides(design).apply(&prm)?;
    let spec = DesignSpec::from_params(&prm, design);
    let probability = exact_error_probability(&spec, &g)?;
    #[derive(Serialize)]
    struct Out {
        spec: DesignSpec,
        error_probability: f64,
    }
    emit(&a.output, &to_json(&Out { spec, error_probability: probability }))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let s = &a.size;
    if a.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let design = a.design.into();
    let cell = Cell {
        n: s.n,
        r: s.r,
        d: s.d,
        side: s.model.side()?,
        delta: a.delta,
        design,
        overrides: a.overrides.to_overrides(design),
    };
    let spec = cell.design_spec()?;
    let reports = run_cell(&cell, 0, a.trials, a.seed)?;
    let summary = CellSummary::from_reports(&cell, &reports);
    #[derive(Serialize)]
    struct Out<'a> {
        spec: DesignSpec,
        summary: CellSummary,
        reports: &'a [idg_core::TrialReport],
    }
    emit(&a.output, &to_json(&Out { spec, summary, reports: &reports }))
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    let cfg: SweepConfig = serde_json::from_str(&read(&a.config)?)
        .map_err(|e| CliError::Domain(IdgError::Parse(format!("{}: {e}", a.config.display()))))?;
    let table = run_sweep(&cfg)?;
    let text = match a.format {
        Format::Csv => table.to_csv()?,
        Format::Json => format!("{}\n", table.to_json()),
    };
    emit(&a.output, &text)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("IDG_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("IDG_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| CliError::Io(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Params(a) => cmd_params(a),
        Command::GenMatrix(a) => cmd_gen_matrix(a),
        Command::GenGraph(a) => cmd_gen_graph(a),
        Command::Outcome(a) => cmd_outcome(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Oracle(OracleCommand::Consistent(a)) => cmd_consistent(a),
        Command::Oracle(OracleCommand::ErrorProb(a)) => cmd_error_prob(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(err) => {
            let (kind, message) = match err {
                CliError::Domain(e) => (e.kind(), e.to_string()),
                CliError::Io(msg) => ("io", msg),
                CliError::Usage(_) => unreachable!(),
            };
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            ExitCode::from(1)
        }
    }
}
