use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn autotune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autotune"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_synthetic_campaign(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("campaign.toml");
    fs::write(
        &path,
        format!("evaluator = \"synthetic:openmc-like\"\noutput_dir = \"out\"\n{extra}"),
    )
    .unwrap();
    path
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn synthetic_run_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let campaign = write_synthetic_campaign(dir.path(), "");
    let o = autotune(&["run", s(&campaign), "--workers", "4", "--max-evals", "16", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let results = dir.path().join("out/results.csv");
    assert_eq!(data_rows(&results), 16);
    assert!(dir.path().join("out/trace.csv").exists());
    assert!(stdout(&o).contains("evaluations done: 16"));
    assert!(stdout(&o).contains("incumbent configuration: P0="));
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let campaign = write_synthetic_campaign(dir.path(), "[campaign]\nmax_evals = 12\nworkers = 2\n");
    let out = dir.path().join("flagged");
    let o = autotune(&["run", s(&campaign), "--max-evals", "5", "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&out.join("results.csv")), 5);

    let o = autotune(&["run", s(&campaign)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&dir.path().join("out/results.csv")), 12);
}

#[test]
fn reproducible_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let campaign = write_synthetic_campaign(dir.path(), "[synthetic]\nnoise_std = 0.01\n");
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = autotune(&[
            "run",
            s(&campaign),
            "--workers",
            "1",
            "--max-evals",
            "24",
            "--seed",
            "11",
            "--reproducible-timestamps",
            "--output",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        files.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn missing_mold_is_rejected_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(assets().join("toy/space.toml"), dir.path().join("space.toml")).unwrap();
    let campaign = dir.path().join("campaign.toml");
    fs::write(
        &campaign,
        "space = \"space.toml\"\noutput_dir = \"out\"\n[mold]\nscript = \"missing.sh\"\n\
         [metric]\nkind = \"runtime\"\n",
    )
    .unwrap();
    let o = autotune(&["run", s(&campaign)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.sh"), "{}", stderr(&o));
    assert!(!dir.path().join("out/results.csv").exists());
}

#[test]
fn invalid_settings_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let campaign = write_synthetic_campaign(dir.path(), "");
    for args in [
        vec!["--kappa", "-1"],
        vec!["--workers", "0"],
        vec!["--timeout", "0"],
        vec!["--workers", "8", "--max-evals", "4"],
    ] {
        let mut full = vec!["run", s(&campaign)];
        full.extend(args.iter().copied());
        let o = autotune(&full);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    assert!(!dir.path().join("out/results.csv").exists());
}

#[test]
fn toy_mold_campaign_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let campaign = assets().join("toy/campaign.toml");
    let o = autotune(&["run", s(&campaign), "--output", s(&out), "--max-evals", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(text.starts_with("mode,block,unroll,prefetch,objective,status,"));
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().skip(1).all(|l| l.contains(",ok,")), "{text}");
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().nth(1).unwrap().ends_with(",800,baseline"));
    assert!(out.join("evals/0/script").exists());

    let o = autotune(&["report", s(&out.join("results.csv")), "--campaign", s(&campaign)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("best objective (maximize)"), "{text}");
    assert!(text.contains("improvement: "), "{text}");
}

#[test]
fn evaluator_setup_failure_aborts_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("blocked");
    fs::create_dir_all(&out).unwrap();
    // a file where the per-evaluation directories should go
    fs::write(out.join("evals"), "").unwrap();
    let o = autotune(&["run", s(&assets().join("toy/campaign.toml")), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("aborted"));
}

#[test]
fn dry_run_prints_launcher_lines_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dry");
    let o = autotune(&[
        "run",
        s(&assets().join("openmc_campaign.toml")),
        "--dry-run",
        "--workers",
        "3",
        "--output",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("srun -c ")).count(), 3, "{text}");
    assert!(text.contains("--ntasks-per-gpu="));
    assert!(!text.contains("#P"));
    assert!(!out.exists());
}

const PARAMS: &str = "P0,P1,P2,P3,P4,P5,P6";
const META: &str = "objective,status,elapsed_sec,worker_id,eval_id,started_at,finished_at";

fn results_file(dir: &Path, rows: &[(&str, f64, &str)]) -> PathBuf {
    let mut text = format!("{PARAMS},{META}\n");
    for (i, (cfg, objective, status)) in rows.iter().enumerate() {
        text.push_str(&format!("{cfg},{objective},{status},1.5,0,{i},{i}.000,{i}.500\n"));
    }
    let path = dir.join("results.csv");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn report_shows_improvement_over_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let path = results_file(
        dir.path(),
        &[
            ("openmc,1000000,4000,20000,8,1,threads", 483033.0, "ok"),
            ("openmc-queueless,2000000,8000,nan,4,2,cores", 562288.0, "ok"),
            ("openmc,3000000,100,0,2,1,sockets", 8.0, "timeout"),
        ],
    );
    let o = autotune(&["report", s(&path), "--direction", "maximize", "--baseline", "483033"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("improvement: 16.41%"), "{text}");
    assert!(text.contains("status: ok=2 timeout=1 fail=0"), "{text}");
    assert!(text.contains("P3 = nan"), "{text}");
    assert!(text.contains("best objective (maximize): 562288"), "{text}");
    assert!(text.contains("total autotuning time (s): 2.500"), "{text}");
}

#[test]
fn report_minimize_and_all_timeouts() {
    let dir = tempfile::tempdir().unwrap();
    let path = results_file(
        dir.path(),
        &[
            ("openmc,1000000,4000,20000,8,1,threads", 100.0, "ok"),
            ("openmc,1000000,4000,21000,8,1,threads", 83.0, "ok"),
        ],
    );
    let o = autotune(&["report", s(&path), "--direction", "minimize", "--baseline", "100"]);
    assert!(stdout(&o).contains("improvement: 17.00%"), "{}", stdout(&o));

    let path = results_file(
        dir.path(),
        &[
            ("openmc,1000000,4000,20000,8,1,threads", 60.0, "timeout"),
            ("openmc,1000000,4000,21000,8,1,threads", 60.0, "timeout"),
        ],
    );
    let o = autotune(&["report", s(&path)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("status: ok=0 timeout=2 fail=0"));
    assert!(stdout(&o).contains("best: none"));
}

#[test]
fn report_on_empty_results_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = results_file(dir.path(), &[]);
    let o = autotune(&["report", s(&path)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("no evaluations"));
}

#[test]
fn sample_is_seeded_and_lawful() {
    let space = assets().join("openmc_space.toml");
    let a = autotune(&["sample", s(&space), "-n", "40", "--seed", "5"]);
    let b = autotune(&["sample", s(&space), "-n", "40", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 40);
    let mut queueless = 0;
    for line in text.lines() {
        let fields: Vec<&str> = line.split(' ').collect();
        let p1: i64 = fields[1].strip_prefix("P1=").unwrap().parse().unwrap();
        assert!(p1 % 1000 == 0 && (100_000..=8_000_000).contains(&p1));
        if fields[0] == "P0=openmc-queueless" {
            queueless += 1;
            assert_eq!(fields[3], "P3=nan");
        } else {
            assert_ne!(fields[3], "P3=nan");
        }
    }
    assert!(queueless > 0);

    let builtin = autotune(&["sample", "synthetic:openmc", "-n", "40", "--seed", "5"]);
    assert_eq!(stdout(&builtin), text);
}

#[test]
fn validate_names_the_offending_parameter() {
    let space = assets().join("openmc_space.toml");
    let ok = autotune(&[
        "validate",
        s(&space),
        "--config",
        "P0=openmc-queueless,P1=100000,P2=100,P3=nan,P4=2,P5=2,P6=cores",
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));

    let bad = autotune(&[
        "validate",
        s(&space),
        "--config",
        "P0=openmc-queueless,P1=100000,P2=100,P3=5000,P4=2,P5=2,P6=cores",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("P3"), "{}", stderr(&bad));

    let off_lattice = autotune(&[
        "validate",
        s(&space),
        "--config",
        "P0=openmc,P1=100500,P2=100,P3=0,P4=2,P5=2,P6=cores",
    ]);
    assert_eq!(off_lattice.status.code(), Some(2));
    assert!(stderr(&off_lattice).contains("P1"));

    let campaign = autotune(&["validate", "--campaign", s(&assets().join("openmc_campaign.toml"))]);
    assert_eq!(campaign.status.code(), Some(0), "{}", stderr(&campaign));
}

#[test]
fn trace_export_includes_baseline_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = results_file(
        dir.path(),
        &[
            ("openmc,1000000,4000,20000,8,1,threads", 10.0, "ok"),
            ("openmc,1000000,4000,21000,8,1,threads", 60.0, "timeout"),
        ],
    );
    let o = autotune(&["trace", s(&path), "--baseline", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "t_sec,objective,status\n0.000,12,baseline\n0.500,10,ok\n1.500,60,timeout\n"
    );
}

#[test]
fn unknown_subcommand_is_invalid_input() {
    let o = autotune(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}
