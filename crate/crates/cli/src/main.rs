use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use maxent_merge::causal::decide_edges;
use maxent_merge::effects::{ace_bounds, ace_from_solution};
use maxent_merge::eval::{
    run_ace_fig, run_roc, run_tpr_vs_ace, write_repetitions_csv, AceFigConfig, CauseMoments, MomentSource, PipelineConfig,
    PxMode, RocConfig, TprConfig,
};
use maxent_merge::formats::{read_constraints, read_distribution, write_sample, ModelSpec};
use maxent_merge::simulate::{derive_seed, draw_instance, Family, ForcedEdges, NO_FORCING, N_CAUSES};
use maxent_merge::{fit, CauseMarginal, Error, MaxEntProblem, MaxEntSolution, Objective, SolverConfig};
use serde::Serialize;

mod manifest;

use manifest::RunManifest;

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_ALL_DROPPED: u8 = 4;

/// Seed stream for `simulate` instances.
const STREAM_SIMULATE: u64 = 10;

#[derive(Parser)]
#[command(name = "maxent-merge", version, about = "Merge overlapping statistics by maximum entropy and read causal structure off the fit")]
struct Cli {
    /// Worker threads for experiments (0 = all cores).
    #[arg(long, global = true, env = "MAXENT_MERGE_JOBS", default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a maximum-entropy model to a constraint table.
    Fit(FitArgs),
    /// Edge report for a conditional fit.
    Edges(EdgesArgs),
    /// Bounds (and optionally a model-based point value) for an average causal effect.
    Ace(AceArgs),
    /// Sample synthetic datasets.
    Simulate(SimulateArgs),
    /// ROC sweep of the edge statistic.
    Roc(RocArgs),
    /// Detection rate of a forced edge against its effect size.
    TprVsAce(TprArgs),
    /// True, model-based and bounded ACE on forced-edge variants.
    AceFig(AceFigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Joint,
    Conditional,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Dual,
    SquaredResidual,
}

#[derive(Args)]
struct FitArgs {
    /// Constraint table (CSV).
    #[arg(long)]
    constraints: PathBuf,
    /// Variable and feature declarations (JSON).
    #[arg(long)]
    variables: PathBuf,
    #[arg(long, value_enum, default_value = "joint")]
    mode: ModeArg,
    /// Target variable of a conditional fit.
    #[arg(long)]
    target: Option<String>,
    /// Distribution of the non-target variables (CSV with a `p` column); estimated from the constraints when absent.
    #[arg(long)]
    cause_marginal: Option<PathBuf>,
    /// Slack `c / sqrt(n)` for constraints with an `n` column.
    #[arg(long)]
    epsilon_scale: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    #[arg(long, value_enum, default_value = "dual")]
    objective: ObjectiveArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

#[derive(Args)]
struct EdgesArgs {
    #[arg(long)]
    solution: PathBuf,
    /// Must match the fit's target when given.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 0.15)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AceArgs {
    /// Variable declarations (JSON) covering every column of the marginal files.
    #[arg(long)]
    variables: PathBuf,
    /// Marginal of treatment and target (CSV with a `p` column).
    #[arg(long)]
    pair: PathBuf,
    /// Marginal of treatment and adjustment set (CSV with a `p` column).
    #[arg(long)]
    adjustment: PathBuf,
    #[arg(long)]
    treatment: String,
    #[arg(long)]
    target: String,
    /// Conditional fit for the point value; adjusts for the adjustment file's other variables.
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Force dashed edges, e.g. `X1=1,X3=0`.
    #[arg(long, value_parser = parse_forced, default_value = "")]
    force: ForcedEdges,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PxArg {
    Known,
    Estimated,
}

#[derive(Clone, Copy, ValueEnum)]
enum CauseMomentsArg {
    Univariate,
    Pairwise,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, value_enum, default_value = "known")]
    mode: PxArg,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Use population moments of the exact joint instead of sampling.
    #[arg(long)]
    exact: bool,
    /// Slack scale `c` in `c / sqrt(M)`; defaults to 1 for sampled moments and 0 for exact ones.
    #[arg(long)]
    slack_scale: Option<f64>,
    #[arg(long, value_enum, default_value = "univariate")]
    cause_moments: CauseMomentsArg,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        let px = match self.mode {
            PxArg::Known => PxMode::Known,
            PxArg::Estimated => PxMode::Estimated,
        };
        let moments = if self.exact {
            MomentSource::Exact
        } else {
            MomentSource::Sampled { n: self.n }
        };
        let mut cfg = PipelineConfig::new(px, moments);
        if let Some(c) = self.slack_scale {
            cfg.slack_scale = c;
        }
        if let Some(t) = self.tol {
            cfg.solver.tolerance = t;
        }
        if let Some(m) = self.max_iterations {
            cfg.solver.max_iterations = m;
        }
        cfg.cause_moments = match self.cause_moments {
            CauseMomentsArg::Univariate => CauseMoments::Univariate,
            CauseMomentsArg::Pairwise => CauseMoments::Pairwise,
        };
        cfg
    }
}

#[derive(Args)]
struct RocArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 101)]
    thresholds: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TprArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.15)]
    threshold: f64,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AceFigArgs {
    #[arg(long, value_parser = parse_family, default_value = "c")]
    family: Family,
    #[arg(long, default_value_t = 10)]
    variants: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cause index (1-5) whose effect is estimated.
    #[arg(long, default_value_t = 3)]
    treatment: usize,
    /// Sample this many rows instead of using exact moments.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

fn parse_forced(s: &str) -> Result<ForcedEdges, String> {
    let mut forced = NO_FORCING;
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (name, value) = item.split_once('=').ok_or_else(|| format!("`{item}` is not NAME=0|1"))?;
        let i: usize = name
            .trim()
            .strip_prefix('X')
            .and_then(|d| d.parse().ok())
            .filter(|i| (1..=N_CAUSES).contains(i))
            .ok_or_else(|| format!("`{name}` is not one of X1..X{N_CAUSES}"))?;
        forced[i - 1] = Some(match value.trim() {
            "1" => true,
            "0" => false,
            v => return Err(format!("edge value `{v}` is not 0 or 1")),
        });
    }
    Ok(forced)
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.chain().find_map(|e| e.downcast_ref::<Error>()) {
            Some(Error::NotConverged(_)) => EXIT_NOT_CONVERGED,
            Some(Error::AllRepetitionsDropped(_)) => EXIT_ALL_DROPPED,
            // output errors are wrapped with context and never reach here as bare `Io`
            Some(_) => EXIT_INPUT,
            None => 1,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Edges(a) => cmd_edges(a),
        Command::Ace(a) => cmd_ace(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Roc(a) => cmd_roc(a),
        Command::TprVsAce(a) => cmd_tpr(a),
        Command::AceFig(a) => cmd_ace_fig(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn json_bytes<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn input_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: e.into(),
    }
}

fn cmd_fit(a: &FitArgs) -> CmdResult {
    let spec = ModelSpec::read(&a.variables)?;
    let mut set = read_constraints(&a.constraints, &spec.variables, &spec.features)?;
    if let Some(c) = a.epsilon_scale {
        set.apply_slack_scale(c);
    }
    let mut problem = match (a.mode, &a.target) {
        (ModeArg::Joint, None) => MaxEntProblem::joint(spec.variables.clone(), set),
        (ModeArg::Joint, Some(_)) => return Err(input_error(anyhow::anyhow!("--target only applies to --mode conditional"))),
        (ModeArg::Conditional, None) => return Err(input_error(anyhow::anyhow!("--mode conditional needs --target"))),
        (ModeArg::Conditional, Some(t)) => {
            let marginal = match &a.cause_marginal {
                Some(p) => CauseMarginal::Known(read_distribution(p, &spec.variables)?),
                None => CauseMarginal::Estimated,
            };
            MaxEntProblem::conditional(spec.variables.clone(), set, t, marginal)
        }
    };
    let objective = match a.objective {
        ObjectiveArg::Dual => Objective::Dual,
        ObjectiveArg::SquaredResidual => Objective::SquaredResidual,
    };
    problem = problem.with_config(SolverConfig {
        objective,
        tolerance: a.tol,
        max_iterations: a.max_iterations,
        ..SolverConfig::default()
    });
    if let Some(s) = a.seed {
        problem = problem.with_seed(s);
    }
    match fit(&problem) {
        Ok(sol) => {
            write_file(&a.out, sol.to_json()?.as_bytes())?;
            Ok(())
        }
        Err(Error::NotConverged(sol)) => {
            write_file(&a.out, sol.to_json()?.as_bytes())?;
            Err(Error::NotConverged(sol).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn read_solution(path: &Path) -> Result<MaxEntSolution, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(input_error)?;
    Ok(MaxEntSolution::from_json(&text)?)
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).context("writing to stdout")
        }
    }
}

fn cmd_edges(a: &EdgesArgs) -> CmdResult {
    let sol = read_solution(&a.solution)?;
    if let (Some(t), Some(fitted)) = (&a.target, sol.target()) {
        if t != fitted {
            return Err(input_error(anyhow::anyhow!("solution was fitted with target `{fitted}`, not `{t}`")));
        }
    }
    let report = decide_edges(&sol, a.threshold)?;
    let bytes = match a.format {
        FormatArg::Table => report.to_string().into_bytes(),
        FormatArg::Json => json_bytes(&report)?,
    };
    emit(&a.out, &bytes)?;
    Ok(())
}

#[derive(Serialize)]
struct AceOutput {
    treatment: String,
    target: String,
    adjustment: Vec<String>,
    #[serde(flatten)]
    bounds: maxent_merge::effects::AceBounds,
}

fn cmd_ace(a: &AceArgs) -> CmdResult {
    let spec = ModelSpec::read(&a.variables)?;
    let pair = read_distribution(&a.pair, &spec.variables)?;
    let adj = read_distribution(&a.adjustment, &spec.variables)?;
    let mut bounds = ace_bounds(&pair, &adj, &a.treatment, &a.target)?;
    let adjustment: Vec<String> = adj.variables().names().filter(|n| *n != a.treatment).map(str::to_string).collect();
    if let Some(path) = &a.solution {
        let sol = read_solution(path)?;
        let point = ace_from_solution(&sol, &a.treatment, &a.target, &adjustment)?;
        bounds = bounds.with_point(point);
    }
    let out = AceOutput {
        treatment: a.treatment.clone(),
        target: a.target.clone(),
        adjustment,
        bounds,
    };
    emit(&a.out, &json_bytes(&out)?)?;
    Ok(())
}

/// Collects artifacts written under one directory for the run manifest.
struct OutDir {
    root: PathBuf,
    artifacts: Vec<(String, Vec<u8>)>,
}

impl OutDir {
    fn new(root: &Path) -> Self {
        OutDir {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) -> anyhow::Result<()> {
        write_file(&self.root.join(name), &bytes)?;
        self.artifacts.push((name.to_string(), bytes));
        Ok(())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> maxent_merge::Result<()>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.put(name, buf)
    }

    fn finish<C: Serialize>(self, command: &str, config: &C, seed: u64, started: Instant) -> anyhow::Result<()> {
        let manifest = RunManifest::new(command, config, seed, &self.artifacts, started.elapsed().as_secs_f64())?;
        write_file(&self.root.join(manifest::MANIFEST_FILE), &json_bytes(&manifest)?)
    }
}

fn reps_at_least_one(reps: usize) -> CmdResult {
    if reps == 0 {
        return Err(input_error(anyhow::anyhow!("--reps must be at least 1")));
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    family: Family,
    n: usize,
    reps: usize,
    seed: u64,
    forced: &'a ForcedEdges,
}

fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    reps_at_least_one(a.reps)?;
    if a.n == 0 {
        return Err(input_error(anyhow::anyhow!("--n must be at least 1")));
    }
    let started = Instant::now();
    let mut out = OutDir::new(&a.out_dir);
    for rep in 0..a.reps {
        let inst = draw_instance(a.family, derive_seed(a.seed, STREAM_SIMULATE, rep as u64), &a.force);
        let table = inst.sample(a.n);
        out.csv(&format!("sample_{rep:04}.csv"), |b| write_sample(&table, b))?;
        out.put(&format!("instance_{rep:04}.json"), json_bytes(&inst)?)?;
    }
    let config = SimulateConfig {
        family: a.family,
        n: a.n,
        reps: a.reps,
        seed: a.seed,
        forced: &a.force,
    };
    out.finish("simulate", &config, a.seed, started)?;
    Ok(())
}

#[derive(Serialize)]
struct RocSummary<'a> {
    config: &'a RocConfig,
    auc: f64,
    retained: usize,
    dropped: usize,
}

fn cmd_roc(a: &RocArgs) -> CmdResult {
    reps_at_least_one(a.reps)?;
    let started = Instant::now();
    let mut cfg = RocConfig::new(a.family, a.pipeline.config());
    cfg.reps = a.reps;
    cfg.seed = a.seed;
    cfg.thresholds = a.thresholds;
    let roc = run_roc(&cfg)?;
    let mut out = OutDir::new(&a.out_dir);
    out.csv("roc.csv", |b| roc.write_csv(b))?;
    out.csv("repetitions.csv", |b| write_repetitions_csv(&roc.repetitions, b))?;
    let summary = RocSummary {
        config: &cfg,
        auc: roc.auc,
        retained: roc.retained,
        dropped: roc.dropped,
    };
    out.put("summary.json", json_bytes(&summary)?)?;
    out.finish("roc", &cfg, a.seed, started)?;
    Ok(())
}

#[derive(Serialize)]
struct TprSummary<'a> {
    config: &'a TprConfig,
    bins: &'a [maxent_merge::eval::TprBin],
    inversions: usize,
    retained: usize,
    dropped: usize,
}

fn cmd_tpr(a: &TprArgs) -> CmdResult {
    reps_at_least_one(a.reps)?;
    let started = Instant::now();
    let mut cfg = TprConfig::new(a.family, a.pipeline.config());
    cfg.reps = a.reps;
    cfg.seed = a.seed;
    cfg.threshold = a.threshold;
    cfg.bins = a.bins;
    let curve = run_tpr_vs_ace(&cfg)?;
    let mut out = OutDir::new(&a.out_dir);
    out.csv("tpr_vs_ace.csv", |b| curve.write_csv(b))?;
    out.csv("repetitions.csv", |b| write_repetitions_csv(&curve.repetitions, b))?;
    let summary = TprSummary {
        config: &cfg,
        bins: &curve.bins,
        inversions: curve.inversions(),
        retained: curve.retained,
        dropped: curve.dropped,
    };
    out.put("summary.json", json_bytes(&summary)?)?;
    out.finish("tpr-vs-ace", &cfg, a.seed, started)?;
    Ok(())
}

fn cmd_ace_fig(a: &AceFigArgs) -> CmdResult {
    if a.variants == 0 {
        return Err(input_error(anyhow::anyhow!("--variants must be at least 1")));
    }
    let started = Instant::now();
    let mut cfg = AceFigConfig::new();
    cfg.family = a.family;
    cfg.variants = a.variants;
    cfg.seed = a.seed;
    cfg.treatment = a.treatment;
    if let Some(n) = a.n {
        cfg.moments = MomentSource::Sampled { n };
        cfg.solver = SolverConfig::default();
    }
    let table = run_ace_fig(&cfg)?;
    let mut out = OutDir::new(&a.out_dir);
    out.csv("ace_fig.csv", |b| table.write_csv(b))?;
    out.put("ace_fig.json", json_bytes(&table)?)?;
    out.finish("ace-fig", &cfg, a.seed, started)?;
    Ok(())
}
