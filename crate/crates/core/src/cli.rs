//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 aborted campaign.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use regex::Regex;
use serde::Deserialize;

use crate::ensemble::{progress_snapshot, run_campaign, CampaignConfig, Evaluator, Termination};
use crate::harness::{default_timeout, CodeMold, MetricKind, MetricSource, MetricSpec, ScriptEvaluator};
use crate::optimizer::{Direction, Optimizer, DEFAULT_CANDIDATE_POOL, DEFAULT_KAPPA};
use crate::space::{ParameterSpace, Sampler};
use crate::store::{
    export_table_trace, export_trace, read_table, render_report, write_trace, BaselineSpec,
    ResultsWriter,
};
use crate::surrogate::ForestParams;
use crate::synthbench::{SyntheticEvaluator, SyntheticObjective};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_ABORTED: u8 = 3;

const SYNTHETIC_PREFIX: &str = "synthetic:";

#[derive(Debug, Parser)]
#[command(name = "autotune", version, about = "Asynchronous Bayesian autotuning of external programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a campaign described by a TOML file.
    Run(RunArgs),
    /// Summarize a results.csv.
    Report(ReportArgs),
    /// Print seeded random configurations of a space.
    Sample(SampleArgs),
    /// Export the objective-over-time trace of a results.csv.
    Trace(TraceArgs),
    /// Check a space file, a campaign file or a single configuration.
    Validate(ValidateArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    campaign: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_evals: Option<usize>,
    /// Per-evaluation timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    kappa: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    direction: Option<Direction>,
    /// Objective recorded for timed-out and failed evaluations.
    #[arg(long, allow_negative_numbers = true)]
    penalty: Option<f64>,
    /// Stop dispatching new evaluations after this many seconds.
    #[arg(long)]
    wall_clock_budget: Option<f64>,
    /// Print the launcher lines of the first batch without executing anything.
    #[arg(long)]
    dry_run: bool,
    /// Record a logical tick counter instead of wall-clock timestamps.
    #[arg(long)]
    reproducible_timestamps: bool,
    /// Output directory (overrides `output_dir` in the campaign file).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct ReportArgs {
    results: PathBuf,
    /// Take direction and baseline from this campaign file.
    #[arg(long)]
    campaign: Option<PathBuf>,
    #[arg(long)]
    direction: Option<Direction>,
    #[arg(long, allow_negative_numbers = true)]
    baseline: Option<f64>,
    #[arg(long)]
    baseline_provenance: Option<String>,
}

#[derive(Debug, clap::Args)]
struct SampleArgs {
    /// Space file (.toml or .json) or `synthetic:<name>`.
    space: String,
    #[arg(short = 'n', long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, clap::Args)]
struct TraceArgs {
    results: PathBuf,
    /// Destination file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    baseline: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct ValidateArgs {
    /// Space file (.toml or .json) or `synthetic:<name>`.
    space: Option<String>,
    #[arg(long, conflicts_with = "space")]
    campaign: Option<PathBuf>,
    /// Configuration as `name=value` pairs separated by commas.
    #[arg(long)]
    config: Option<String>,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

type CliResult = Result<u8, CliError>;

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::Sample(a) => cmd_sample(&a, out),
        Command::Trace(a) => cmd_trace(&a, out),
        Command::Validate(a) => cmd_validate(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

// ---------------------------------------------------------------------------
// campaign file

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignFile {
    space: Option<PathBuf>,
    evaluator: Option<String>,
    output_dir: Option<PathBuf>,
    mold: Option<MoldSection>,
    metric: Option<MetricSection>,
    #[serde(default)]
    campaign: CampaignSection,
    #[serde(default)]
    forest: ForestSection,
    #[serde(default)]
    synthetic: SyntheticSection,
    baseline: Option<BaselineSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MoldSection {
    script: PathBuf,
    #[serde(default)]
    launcher: String,
    #[serde(default)]
    launcher_program: String,
    pre_command: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricSection {
    kind: MetricKind,
    /// Stdout regex with one capture group.
    pattern: Option<String>,
    /// Metrics file path; `{eval_dir}` and `{eval_id}` are substituted.
    file: Option<String>,
    /// Stdout regex for the runtime used by EDP.
    runtime_pattern: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignSection {
    workers: Option<usize>,
    max_evals: Option<usize>,
    timeout: Option<f64>,
    kappa: Option<f64>,
    seed: Option<u64>,
    direction: Option<Direction>,
    penalty: Option<f64>,
    wall_clock_budget: Option<f64>,
    n_initial: Option<usize>,
    candidate_pool_size: Option<usize>,
    worker_labels: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestSection {
    n_trees: Option<usize>,
    min_samples_split: Option<usize>,
    max_depth: Option<usize>,
    bootstrap: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticSection {
    noise_std: Option<f64>,
    /// Seconds each evaluation sleeps.
    sleep: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineSection {
    objective: f64,
    #[serde(default)]
    provenance: Option<String>,
    /// Baseline runtime in seconds; sets the default timeout.
    runtime: Option<f64>,
}

enum EvaluatorKind {
    Mold { mold: CodeMold, metric: MetricSpec },
    Synthetic(SyntheticObjective),
}

/// Everything needed to run, resolved and validated.
struct Plan {
    space: Arc<ParameterSpace>,
    evaluator: EvaluatorKind,
    config: CampaignConfig,
    output_dir: PathBuf,
    baseline: Option<BaselineSpec>,
}

fn seconds(what: &str, s: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(s)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| invalid(format!("{what} must be a positive number of seconds, got {s}")))
}

fn read_campaign_file(path: &Path) -> Result<CampaignFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read campaign file {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("campaign file {}: {e}", path.display())))
}

fn load_space_arg(arg: &str) -> Result<Arc<ParameterSpace>, CliError> {
    if let Some(name) = arg.strip_prefix(SYNTHETIC_PREFIX) {
        return synthetic(name).map(|o| Arc::clone(o.space()));
    }
    ParameterSpace::load(Path::new(arg))
        .map(Arc::new)
        .map_err(|e| invalid(format!("space {arg}: {e}")))
}

fn synthetic(name: &str) -> Result<SyntheticObjective, CliError> {
    SyntheticObjective::named(name).ok_or_else(|| {
        invalid(format!(
            "unknown synthetic evaluator `{name}` (known: {})",
            SyntheticObjective::catalog().join(", ")
        ))
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn build_metric(section: &MetricSection) -> Result<MetricSpec, CliError> {
    let regex = |p: &str| Regex::new(p).map_err(|e| invalid(format!("metric pattern: {e}")));
    let source = match (&section.pattern, &section.file) {
        (Some(_), Some(_)) => return Err(invalid("metric: give either `pattern` or `file`, not both")),
        (Some(p), None) => MetricSource::StdoutRegex(regex(p)?),
        (None, Some(f)) => MetricSource::MetricsFile(f.clone()),
        (None, None) if section.kind == MetricKind::Runtime => MetricSource::WallClock,
        (None, None) => {
            return Err(invalid(format!(
                "metric `{}` needs a `pattern` or a `file`",
                section.kind
            )))
        }
    };
    let runtime = section.runtime_pattern.as_deref().map(regex).transpose()?;
    MetricSpec::new(section.kind, source, runtime).map_err(|e| invalid(e.to_string()))
}

/// Merges flags over file values over defaults and checks the result.
fn plan_campaign(path: &Path, flags: &RunArgs) -> Result<Plan, CliError> {
    let file = read_campaign_file(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let evaluator_name = file.evaluator.as_deref().unwrap_or("mold");

    let (space, evaluator, implied_direction) =
        if let Some(name) = evaluator_name.strip_prefix(SYNTHETIC_PREFIX) {
            if file.space.is_some() {
                return Err(invalid("a synthetic evaluator defines its own space; remove `space`"));
            }
            let mut objective = synthetic(name)?;
            if let Some(s) = file.synthetic.noise_std {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(invalid(format!("synthetic.noise_std must be >= 0, got {s}")));
                }
                objective.noise_std = s;
            }
            if let Some(s) = file.synthetic.sleep {
                objective.sleep = Duration::try_from_secs_f64(s)
                    .map_err(|_| invalid(format!("synthetic.sleep must be >= 0, got {s}")))?;
            }
            (Arc::clone(objective.space()), EvaluatorKind::Synthetic(objective), None)
        } else if evaluator_name == "mold" {
            let space_path = file
                .space
                .as_deref()
                .map(|p| resolve(base, p))
                .ok_or_else(|| invalid("campaign file needs `space` for the mold evaluator"))?;
            let space = ParameterSpace::load(&space_path)
                .map_err(|e| invalid(format!("space {}: {e}", space_path.display())))?;
            let section = file
                .mold
                .as_ref()
                .ok_or_else(|| invalid("campaign file needs a [mold] section"))?;
            let script_path = resolve(base, &section.script);
            let template_text = fs::read_to_string(&script_path).map_err(|e| {
                invalid(format!("cannot read mold script {}: {e}", script_path.display()))
            })?;
            let mold = CodeMold {
                template_text,
                launcher_template: section.launcher.clone(),
                launcher_program: section.launcher_program.clone(),
                pre_command: section.pre_command.clone(),
            };
            mold.check(&space).map_err(|e| invalid(format!("mold: {e}")))?;
            let metric_section = file
                .metric
                .as_ref()
                .ok_or_else(|| invalid("campaign file needs a [metric] section"))?;
            let metric = build_metric(metric_section)?;
            let dir = metric.direction();
            (Arc::new(space), EvaluatorKind::Mold { mold, metric }, Some(dir))
        } else {
            return Err(invalid(format!(
                "unknown evaluator `{evaluator_name}`; use `mold` or `synthetic:<name>`"
            )));
        };

    let c = &file.campaign;
    let direction = flags
        .direction
        .or(c.direction)
        .or(implied_direction)
        .unwrap_or(Direction::Minimize);

    let baseline = match &file.baseline {
        Some(b) => Some(
            BaselineSpec::new(
                b.objective,
                b.provenance.as_deref().unwrap_or("campaign file"),
                direction,
            )
            .map_err(|e| invalid(format!("baseline: {e}")))?,
        ),
        None => None,
    };
    let baseline_runtime = file.baseline.as_ref().and_then(|b| b.runtime);

    let defaults = CampaignConfig::default();
    let eval_timeout = match flags.timeout.or(c.timeout) {
        Some(t) => seconds("timeout", t)?,
        None => match baseline_runtime {
            Some(r) => {
                let t = default_timeout(r).map_err(|e| invalid(format!("baseline.runtime: {e}")))?;
                seconds("timeout", t)?
            }
            None => defaults.eval_timeout,
        },
    };
    let wall_clock_budget = flags
        .wall_clock_budget
        .or(c.wall_clock_budget)
        .map(|s| seconds("wall_clock_budget", s))
        .transpose()?;

    let mut forest = ForestParams::default();
    if let Some(v) = file.forest.n_trees {
        forest.n_trees = v;
    }
    if let Some(v) = file.forest.min_samples_split {
        forest.min_samples_split = v;
    }
    if file.forest.max_depth.is_some() {
        forest.max_depth = file.forest.max_depth;
    }
    if let Some(v) = file.forest.bootstrap {
        forest.bootstrap = v;
    }

    let metric_name = match &evaluator {
        EvaluatorKind::Mold { metric, .. } => metric.kind.to_string(),
        EvaluatorKind::Synthetic(_) => evaluator_name.to_string(),
    };

    let config = CampaignConfig {
        n_workers: flags.workers.or(c.workers).unwrap_or(defaults.n_workers),
        max_evals: flags.max_evals.or(c.max_evals).unwrap_or(defaults.max_evals),
        eval_timeout,
        kappa: flags.kappa.or(c.kappa).unwrap_or(DEFAULT_KAPPA),
        n_initial: c.n_initial,
        candidate_pool_size: c.candidate_pool_size.unwrap_or(DEFAULT_CANDIDATE_POOL),
        seed: flags.seed.or(c.seed).unwrap_or(defaults.seed),
        direction,
        timeout_penalty: flags.penalty.or(c.penalty),
        metric_name,
        forest,
        wall_clock_budget,
        worker_labels: c.worker_labels.clone().unwrap_or_default(),
        logical_clock: flags.reproducible_timestamps,
    };
    config.check().map_err(|e| invalid(e.to_string()))?;
    Optimizer::new(Arc::clone(&space), config.optimizer_settings())
        .map_err(|e| invalid(e.to_string()))?;

    let output_dir = match &flags.output {
        Some(p) => p.clone(),
        None => resolve(base, file.output_dir.as_deref().unwrap_or(Path::new("results"))),
    };

    Ok(Plan {
        space,
        evaluator,
        config,
        output_dir,
        baseline,
    })
}

// ---------------------------------------------------------------------------
// commands

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> CliResult {
    let plan = plan_campaign(&args.campaign, args)?;
    if args.dry_run {
        return dry_run(&plan, out);
    }

    let results_path = plan.output_dir.join("results.csv");
    if results_path.exists() {
        return Err(invalid(format!(
            "{} already exists; choose another output directory",
            results_path.display()
        )));
    }
    fs::create_dir_all(&plan.output_dir).map_err(|e| {
        invalid(format!("cannot create output directory {}: {e}", plan.output_dir.display()))
    })?;

    let evaluator: Box<dyn Evaluator> = match &plan.evaluator {
        EvaluatorKind::Mold { mold, metric } => Box::new(
            ScriptEvaluator::new(
                Arc::clone(&plan.space),
                mold.clone(),
                metric.clone(),
                &plan.output_dir,
            )
            .map_err(|e| invalid(e.to_string()))?,
        ),
        EvaluatorKind::Synthetic(objective) => Box::new(SyntheticEvaluator::new(objective.clone())),
    };
    let mut writer = ResultsWriter::create(&results_path, Arc::clone(&plan.space))
        .map_err(|e| invalid(format!("{}: {e}", results_path.display())))?;

    let start = Instant::now();
    let outcome = run_campaign(Arc::clone(&plan.space), evaluator.as_ref(), &plan.config, &mut writer)
        .map_err(|e| invalid(e.to_string()))?;
    drop(writer);

    let trace_path = plan.output_dir.join("trace.csv");
    let trace = export_trace(&outcome.records, plan.baseline.as_ref());
    let trace_file = fs::File::create(&trace_path)
        .map_err(|e| invalid(format!("{}: {e}", trace_path.display())))?;
    write_trace(&trace, trace_file).map_err(|e| invalid(format!("{}: {e}", trace_path.display())))?;

    let snap = progress_snapshot(&outcome.records, plan.config.direction, start);
    let _ = writeln!(out, "termination: {}", termination_text(&outcome.termination));
    let _ = writeln!(out, "evaluations done: {}", snap.n_done);
    match (&snap.best_objective, &snap.best_config) {
        (Some(b), Some(cfg)) => {
            let _ = writeln!(out, "incumbent: {b}");
            let _ = writeln!(out, "incumbent configuration: {}", plan.space.display(cfg));
        }
        _ => {
            let _ = writeln!(out, "incumbent: none");
        }
    }
    let _ = writeln!(out, "results: {}", results_path.display());
    let _ = writeln!(out, "trace: {}", trace_path.display());

    if let Termination::Aborted(reason) = &outcome.termination {
        return Err(CliError {
            code: EXIT_ABORTED,
            message: format!("campaign aborted: {reason}"),
        });
    }
    Ok(EXIT_OK)
}

fn termination_text(t: &Termination) -> String {
    match t {
        Termination::Completed => "completed".into(),
        Termination::SpaceExhausted => "space exhausted".into(),
        Termination::WallClockBudget => "wall-clock budget reached".into(),
        Termination::Aborted(r) => format!("aborted ({r})"),
    }
}

fn dry_run(plan: &Plan, out: &mut dyn Write) -> CliResult {
    let mut optimizer = Optimizer::new(Arc::clone(&plan.space), plan.config.optimizer_settings())
        .map_err(|e| invalid(e.to_string()))?;
    for worker in 0..plan.config.n_workers {
        let cfg = match optimizer.ask() {
            Ok(cfg) => cfg,
            Err(e) => {
                let _ = writeln!(out, "# {e}");
                break;
            }
        };
        let _ = writeln!(out, "# eval {worker}: {}", plan.space.display(&cfg));
        if let EvaluatorKind::Mold { mold, .. } = &plan.evaluator {
            let rendered = mold
                .render(&plan.space, &cfg)
                .map_err(|e| invalid(format!("mold: {e}")))?;
            let script = plan.output_dir.join("evals").join(worker.to_string()).join("script");
            if let Some(pre) = &rendered.pre_command {
                let _ = writeln!(out, "{pre}");
            }
            let _ = writeln!(out, "{}", mold.launch_line(&rendered, &script.display().to_string()));
            for line in rendered.script_text.lines() {
                let _ = writeln!(out, "    {line}");
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> CliResult {
    let table = read_table(&args.results)
        .map_err(|e| invalid(format!("{}: {e}", args.results.display())))?;
    if table.rows.is_empty() {
        return Err(invalid(format!("{} has no evaluations", args.results.display())));
    }
    let (mut direction, mut baseline) = (None, None);
    if let Some(path) = &args.campaign {
        let flags = RunArgs {
            campaign: path.clone(),
            workers: None,
            max_evals: None,
            timeout: None,
            kappa: None,
            seed: None,
            direction: args.direction,
            penalty: None,
            wall_clock_budget: None,
            dry_run: false,
            reproducible_timestamps: false,
            output: None,
        };
        let plan = plan_campaign(path, &flags)?;
        direction = Some(plan.config.direction);
        baseline = plan.baseline;
    }
    let direction = args.direction.or(direction).unwrap_or(Direction::Minimize);
    if let Some(b) = args.baseline {
        let provenance = args.baseline_provenance.as_deref().unwrap_or("command line");
        baseline = Some(BaselineSpec::new(b, provenance, direction).map_err(|e| invalid(e.to_string()))?);
    } else if let Some(b) = baseline.take() {
        baseline = Some(BaselineSpec::new(b.objective, &b.provenance, direction).map_err(|e| invalid(e.to_string()))?);
    }
    let text = render_report(&table, direction, baseline.as_ref()).map_err(|e| invalid(e.to_string()))?;
    let _ = write!(out, "{text}");
    Ok(EXIT_OK)
}

fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> CliResult {
    let space = load_space_arg(&args.space)?;
    let mut sampler = Sampler::new(args.seed);
    for _ in 0..args.n {
        let cfg = sampler.sample(&space);
        let _ = writeln!(out, "{}", space.display(&cfg));
    }
    Ok(EXIT_OK)
}

fn cmd_trace(args: &TraceArgs, out: &mut dyn Write) -> CliResult {
    let table = read_table(&args.results)
        .map_err(|e| invalid(format!("{}: {e}", args.results.display())))?;
    if args.baseline.is_some_and(|b| !b.is_finite()) {
        return Err(invalid("baseline must be finite"));
    }
    let trace = export_table_trace(&table, args.baseline);
    match &args.out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            write_trace(&trace, f).map_err(|e| invalid(e.to_string()))?;
        }
        None => {
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).map_err(|e| invalid(e.to_string()))?;
            let _ = out.write_all(&buf);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> CliResult {
    let space = match (&args.space, &args.campaign) {
        (Some(s), None) => load_space_arg(s)?,
        (None, Some(path)) => {
            let flags = RunArgs {
                campaign: path.clone(),
                workers: None,
                max_evals: None,
                timeout: None,
                kappa: None,
                seed: None,
                direction: None,
                penalty: None,
                wall_clock_budget: None,
                dry_run: false,
                reproducible_timestamps: false,
                output: None,
            };
            plan_campaign(path, &flags)?.space
        }
        _ => return Err(invalid("give a space file or --campaign")),
    };
    match &args.config {
        None => {
            let _ = writeln!(
                out,
                "ok: {} parameters, {} configurations",
                space.len(),
                space.cardinality()
            );
        }
        Some(text) => {
            let pairs = parse_pairs(text)?;
            let cfg = space.assign(&pairs).map_err(|v| invalid(v.to_string()))?;
            space.validate(&cfg).map_err(|v| invalid(v.to_string()))?;
            let _ = writeln!(out, "ok: {}", space.display(&cfg));
        }
    }
    Ok(EXIT_OK)
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| invalid(format!("expected name=value, got `{item}`")))
        })
        .collect()
}
