//! Running a rendered mold as a child process under a wall-clock timeout.
//!
//! Each evaluation gets its own directory (`evals/<eval_id>/`) holding the
//! script, its captured output and, for energy metrics, `metrics.txt`. The
//! child is started in a fresh process group so that the whole tree can be
//! killed on timeout and swept after a normal exit.

use std::fs::{self, File};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::debug;

use super::metrics::{aggregate_energy, compute_edp, last_match, parse_metrics_file};
use super::{timeout_objective, CodeMold, HarnessError, MetricKind, MetricSource, MetricSpec, RenderedMold};
use crate::ensemble::{EvalJob, EvalOutcome, Evaluator, EvaluatorError};
use crate::optimizer::{Direction, EvalStatus};
use crate::space::ParameterSpace;

const POLL_INTERVAL: Duration = Duration::from_millis(5);

pub struct ExecRequest<'a> {
    pub work_dir: &'a Path,
    pub rendered: &'a RenderedMold,
    /// Recorded to `launch.txt`; not executed.
    pub launch_line: Option<&'a str>,
    pub timeout: Duration,
    pub penalty: f64,
    pub direction: Direction,
    pub metric: &'a MetricSpec,
    pub env: &'a [(String, String)],
    pub eval_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOutcome {
    pub objective: f64,
    pub status: EvalStatus,
    pub elapsed: Duration,
    pub detail: Option<String>,
}

fn setup_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Setup {
        path: path.display().to_string(),
        source,
    }
}

/// Runs the rendered script. Only failures to prepare the evaluation
/// directory are errors; everything that goes wrong in the child is reported
/// as a `fail` or `timeout` outcome.
pub fn execute_with_timeout(req: &ExecRequest<'_>) -> Result<ExecOutcome, HarnessError> {
    fs::create_dir_all(req.work_dir).map_err(setup_err(req.work_dir))?;
    let script_path = req.work_dir.join("script");
    fs::write(&script_path, &req.rendered.script_text).map_err(setup_err(&script_path))?;
    let launch_path = req.work_dir.join("launch.txt");
    let launch = req.launch_line.unwrap_or(&req.rendered.launcher_args);
    fs::write(&launch_path, format!("{launch}\n")).map_err(setup_err(&launch_path))?;
    let stdout_path = req.work_dir.join("stdout.log");
    let stderr_path = req.work_dir.join("stderr.log");

    let start = Instant::now();
    let deadline = start + req.timeout;
    let fail = |detail: String| ExecOutcome {
        objective: req.penalty,
        status: EvalStatus::Fail,
        elapsed: start.elapsed(),
        detail: Some(detail),
    };
    let timed_out = || ExecOutcome {
        objective: timeout_objective(req.direction, req.timeout, req.penalty),
        status: EvalStatus::Timeout,
        elapsed: start.elapsed(),
        detail: None,
    };

    if let Some(pre) = &req.rendered.pre_command {
        let log = req.work_dir.join("build.log");
        let mut cmd = Command::new("/bin/sh");
        cmd.arg("-c").arg(pre);
        match run_until(cmd, req, &log, &log, deadline)? {
            Run::SpawnFailed(e) => return Ok(fail(format!("pre-command: {e}"))),
            Run::TimedOut => return Ok(timed_out()),
            Run::Exited(st) if !st.success() => return Ok(fail(format!("pre-command exited with {st}"))),
            Run::Exited(_) => {}
        }
    }

    let cmd = script_command(&script_path, &req.rendered.script_text);
    let status = match run_until(cmd, req, &stdout_path, &stderr_path, deadline)? {
        Run::SpawnFailed(e) => return Ok(fail(format!("spawn: {e}"))),
        Run::TimedOut => return Ok(timed_out()),
        Run::Exited(st) => st,
    };
    let elapsed = start.elapsed();
    if !status.success() {
        return Ok(fail(format!("script exited with {status}")));
    }

    match read_objective(req, &stdout_path, elapsed) {
        Ok(objective) if objective.is_finite() => Ok(ExecOutcome {
            objective,
            status: EvalStatus::Ok,
            elapsed,
            detail: None,
        }),
        Ok(objective) => Ok(fail(format!("metric is not finite: {objective}"))),
        Err(detail) => Ok(fail(detail)),
    }
}

enum Run {
    Exited(ExitStatus),
    TimedOut,
    SpawnFailed(std::io::Error),
}

fn run_until(
    mut cmd: Command,
    req: &ExecRequest<'_>,
    stdout: &Path,
    stderr: &Path,
    deadline: Instant,
) -> Result<Run, HarnessError> {
    let out = File::options()
        .create(true)
        .append(true)
        .open(stdout)
        .map_err(setup_err(stdout))?;
    let err = if stderr == stdout {
        out.try_clone().map_err(setup_err(stderr))?
    } else {
        File::options()
            .create(true)
            .append(true)
            .open(stderr)
            .map_err(setup_err(stderr))?
    };
    cmd.current_dir(req.work_dir)
        .stdin(Stdio::null())
        .stdout(out)
        .stderr(err)
        .process_group(0);
    for (k, v) in req.env {
        cmd.env(k, v);
    }
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return Ok(Run::SpawnFailed(e)),
    };
    let result = wait_until(&mut child, deadline);
    // Sweep the whole group in either case so no descendant outlives us.
    kill_group(&child);
    match result {
        Some(status) => Ok(Run::Exited(status)),
        None => {
            let _ = child.wait();
            debug!("eval {} killed at timeout", req.eval_id);
            Ok(Run::TimedOut)
        }
    }
}

fn wait_until(child: &mut Child, deadline: Instant) -> Option<ExitStatus> {
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Some(status),
            Ok(None) => {}
            // Unknown state; treat like a hang and let the caller kill it.
            Err(_) => return None,
        }
        let now = Instant::now();
        if now >= deadline {
            return None;
        }
        thread::sleep(POLL_INTERVAL.min(deadline - now));
    }
}

fn kill_group(child: &Child) {
    let pgid = child.id() as libc::pid_t;
    // SAFETY: plain syscall; a stale group id yields ESRCH, which is ignored.
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

/// Runs the script through the interpreter named by its shebang, or `sh`.
fn script_command(path: &Path, text: &str) -> Command {
    let shebang = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("#!"))
        .map(str::trim)
        .filter(|l| !l.is_empty());
    let mut cmd = match shebang {
        Some(line) => {
            let mut parts = line.splitn(2, char::is_whitespace);
            let program = parts.next().unwrap_or("/bin/sh");
            let mut c = Command::new(program);
            if let Some(arg) = parts.next().map(str::trim).filter(|a| !a.is_empty()) {
                c.arg(arg);
            }
            c
        }
        None => Command::new("/bin/sh"),
    };
    cmd.arg(path);
    cmd
}

fn metrics_path(template: &str, req: &ExecRequest<'_>) -> PathBuf {
    let text = template
        .replace("{eval_dir}", &req.work_dir.display().to_string())
        .replace("{eval_id}", &req.eval_id.to_string());
    let path = PathBuf::from(text);
    if path.is_absolute() {
        path
    } else {
        req.work_dir.join(path)
    }
}

fn read_objective(req: &ExecRequest<'_>, stdout_path: &Path, elapsed: Duration) -> Result<f64, String> {
    let stdout = || fs::read_to_string(stdout_path).map_err(|e| format!("reading stdout: {e}"));
    let metric = req.metric;
    match (&metric.kind, &metric.source) {
        (_, MetricSource::StdoutRegex(re)) => {
            last_match(re, &stdout()?).ok_or_else(|| format!("no match for `{}` in stdout", re.as_str()))
        }
        (_, MetricSource::WallClock) => Ok(elapsed.as_secs_f64()),
        (kind, MetricSource::MetricsFile(template)) => {
            let path = metrics_path(template, req);
            let text = fs::read_to_string(&path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            let nodes = parse_metrics_file(&text).map_err(|e| e.to_string())?;
            let energy = aggregate_energy(&nodes).map_err(|e| e.to_string())?;
            match kind {
                MetricKind::Edp => {
                    let runtime = match &metric.runtime_pattern {
                        Some(re) => last_match(re, &stdout()?)
                            .ok_or_else(|| format!("no runtime match for `{}`", re.as_str()))?,
                        None => elapsed.as_secs_f64(),
                    };
                    compute_edp(energy, runtime).map_err(|e| e.to_string())
                }
                _ => Ok(energy),
            }
        }
    }
}

/// Evaluates configurations by rendering a mold into `<root>/evals/<id>/`
/// and running it.
pub struct ScriptEvaluator {
    space: Arc<ParameterSpace>,
    mold: CodeMold,
    metric: MetricSpec,
    root: PathBuf,
}

impl ScriptEvaluator {
    pub fn new(
        space: Arc<ParameterSpace>,
        mold: CodeMold,
        metric: MetricSpec,
        root: impl Into<PathBuf>,
    ) -> Result<Self, HarnessError> {
        mold.check(&space)?;
        Ok(ScriptEvaluator {
            space,
            mold,
            metric,
            root: root.into(),
        })
    }

    pub fn eval_dir(&self, eval_id: u64) -> PathBuf {
        self.root.join("evals").join(eval_id.to_string())
    }
}

impl Evaluator for ScriptEvaluator {
    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvalOutcome, EvaluatorError> {
        let rendered = self
            .mold
            .render(&self.space, job.config)
            .map_err(|e| EvaluatorError(e.to_string()))?;
        let dir = self.eval_dir(job.eval_id);
        let script = dir.join("script");
        let launch = self.mold.launch_line(&rendered, &script.display().to_string());
        let env = vec![
            ("AUTOTUNE_EVAL_ID".to_string(), job.eval_id.to_string()),
            ("AUTOTUNE_WORKER_ID".to_string(), job.worker_id.to_string()),
            ("AUTOTUNE_WORKER_LABEL".to_string(), job.worker_label.to_string()),
            ("AUTOTUNE_LAUNCHER_ARGS".to_string(), rendered.launcher_args.clone()),
            ("AUTOTUNE_EVAL_DIR".to_string(), dir.display().to_string()),
            (
                "AUTOTUNE_METRICS_FILE".to_string(),
                dir.join("metrics.txt").display().to_string(),
            ),
        ];
        let outcome = execute_with_timeout(&ExecRequest {
            work_dir: &dir,
            rendered: &rendered,
            launch_line: Some(&launch),
            timeout: job.timeout,
            penalty: job.penalty,
            direction: job.direction,
            metric: &self.metric,
            env: &env,
            eval_id: job.eval_id,
        })
        .map_err(|e| EvaluatorError(e.to_string()))?;
        if let Some(detail) = &outcome.detail {
            debug!("eval {}: {detail}", job.eval_id);
        }
        Ok(EvalOutcome {
            objective: outcome.objective,
            status: outcome.status,
            elapsed: outcome.elapsed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rendered(script: &str) -> RenderedMold {
        RenderedMold {
            script_text: script.to_string(),
            launcher_args: String::new(),
            pre_command: None,
        }
    }

    fn run(script: &str, metric: &MetricSpec, timeout: f64, direction: Direction) -> ExecOutcome {
        let dir = tempfile::tempdir().unwrap();
        let r = rendered(script);
        execute_with_timeout(&ExecRequest {
            work_dir: &dir.path().join("evals/0"),
            rendered: &r,
            launch_line: None,
            timeout: Duration::from_secs_f64(timeout),
            penalty: -1.0,
            direction,
            metric,
            env: &[],
            eval_id: 0,
        })
        .unwrap()
    }

    #[test]
    fn parses_fom_from_stdout() {
        let metric = MetricSpec::stdout_regex(MetricKind::Fom, r"FOM: ([0-9.]+)").unwrap();
        let out = run(
            "#!/bin/sh\necho 'FOM: 1000 particles/s'\necho 'FOM: 562288 particles/s'\n",
            &metric,
            10.0,
            Direction::Maximize,
        );
        assert_eq!(out.status, EvalStatus::Ok);
        assert_eq!(out.objective, 562288.0);
    }

    #[test]
    fn timeout_for_minimize_returns_timeout_value() {
        let metric = MetricSpec::wall_clock();
        let out = run("sleep 10\n", &metric, 1.0, Direction::Minimize);
        assert_eq!(out.status, EvalStatus::Timeout);
        assert_eq!(out.objective, 1.0);
        assert!(out.elapsed >= Duration::from_secs(1));
        assert!(out.elapsed < Duration::from_secs(2));
    }

    #[test]
    fn nonzero_exit_is_failure_with_penalty() {
        let metric = MetricSpec::stdout_regex(MetricKind::Fom, r"FOM: ([0-9.]+)").unwrap();
        let out = run("exit 3\n", &metric, 5.0, Direction::Maximize);
        assert_eq!(out.status, EvalStatus::Fail);
        assert_eq!(out.objective, -1.0);
        let out = run("echo nothing\n", &metric, 5.0, Direction::Maximize);
        assert_eq!(out.status, EvalStatus::Fail);
    }

    #[test]
    fn missing_interpreter_is_failure() {
        let metric = MetricSpec::wall_clock();
        let out = run("#!/definitely/not/here\n", &metric, 5.0, Direction::Minimize);
        assert_eq!(out.status, EvalStatus::Fail);
        assert_eq!(out.objective, -1.0);
    }

    #[test]
    fn energy_and_edp_from_metrics_file() {
        let script = "#!/bin/sh\nprintf '100 20\\n110 30\\n' > metrics.txt\necho 'runtime: 2'\n";
        let energy = MetricSpec::metrics_file(MetricKind::Energy, "metrics.txt", None).unwrap();
        let out = run(script, &energy, 5.0, Direction::Minimize);
        assert_eq!((out.status, out.objective), (EvalStatus::Ok, 130.0));
        let edp =
            MetricSpec::metrics_file(MetricKind::Edp, "{eval_dir}/metrics.txt", Some(r"runtime: ([0-9.]+)"))
                .unwrap();
        let out = run(script, &edp, 5.0, Direction::Minimize);
        assert_eq!((out.status, out.objective), (EvalStatus::Ok, 260.0));
    }

    #[test]
    fn pre_command_runs_first() {
        let dir = tempfile::tempdir().unwrap();
        let metric = MetricSpec::stdout_regex(MetricKind::Runtime, r"v=([0-9]+)").unwrap();
        let r = RenderedMold {
            script_text: "cat built.txt\n".into(),
            launcher_args: "-c 2".into(),
            pre_command: Some("echo v=42 > built.txt".into()),
        };
        let work = dir.path().join("e");
        let out = execute_with_timeout(&ExecRequest {
            work_dir: &work,
            rendered: &r,
            launch_line: Some("srun -c 2 e/script"),
            timeout: Duration::from_secs(5),
            penalty: 99.0,
            direction: Direction::Minimize,
            metric: &metric,
            env: &[],
            eval_id: 7,
        })
        .unwrap();
        assert_eq!(out.objective, 42.0);
        assert_eq!(fs::read_to_string(work.join("launch.txt")).unwrap(), "srun -c 2 e/script\n");
        assert!(work.join("stdout.log").exists());
        assert!(work.join("stderr.log").exists());
    }
}
