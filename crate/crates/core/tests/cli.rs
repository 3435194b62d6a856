use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use optstop::cli::{self, ExperimentConfig, ExperimentKind, RunOptions};
use optstop::exact::{build_table, verify_markov_bound, FiniteModel, DEFAULT_BUDGET};
use optstop::{SignificanceLevel, StoppingRule};

fn optstop(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_optstop"));
    cmd.args(args).env_remove("OPTSTOP_THREADS");
    if let Some(t) = threads {
        cmd.env("OPTSTOP_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn markov_example_writes_one_row_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "# two levels\nalpha = 0.05, 0.1\n");
    let out = dir.path().join("out");
    let o = optstop(
        &[
            "exact-markov",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(out.join("records.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);

    let model = FiniteModel::bernoulli_point_vs_uniform(0.5, 10_000, 12).unwrap();
    for (row, alpha) in rows.iter().zip([0.05, 0.1]) {
        let a = SignificanceLevel::new(alpha).unwrap();
        let rule = StoppingRule::bf_threshold(a.bf_threshold(), None, 12).unwrap();
        let table = build_table(&model, &rule, DEFAULT_BUDGET).unwrap();
        let p = verify_markov_bound(&table, &[a]).rows[0].probability;
        let field: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(field, p);
        assert!(row.ends_with(",true"));
    }
    assert!(out.join("summary.json").exists());
    let verdict = fs::read_to_string(out.join("verdict.txt")).unwrap();
    assert!(verdict.ends_with("verdict: PASS\n"));
}

#[test]
fn point_mass_null_effect_never_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "prior = point\nprior_delta = 0\nn_trials = 500\n",
    );
    let out = dir.path().join("out");
    let o = optstop(
        &["mc-type1", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for g in summary["results"]["per_g"].as_array().unwrap() {
        assert_eq!(g["type1"][0]["rate"], 0.0);
    }
}

#[test]
fn alpha_outside_unit_interval_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "alpha = 1.5\n");
    let o = optstop(&["mc-type1", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("(0, 1]"), "{err}");
}

#[test]
fn usage_and_io_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(optstop(&["mc-type1"], None).status.code(), Some(1));
    assert_eq!(
        optstop(&["bogus-kind", "--config", "x"], None)
            .status
            .code(),
        Some(1)
    );

    let missing = dir.path().join("missing.cfg");
    let o = optstop(
        &["exact-markov", "--config", missing.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.cfg"));

    let cfg = write_config(dir.path(), "horizon = 4\n");
    let blocker = dir.path().join("occupied");
    fs::write(&blocker, "").unwrap();
    let o = optstop(
        &[
            "exact-calibration",
            "--config",
            &cfg,
            "--out",
            blocker.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("occupied"));

    let cfg = write_config(dir.path(), "horizon = 4\nwidth = 3\n");
    let o = optstop(&["exact-calibration", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));

    let o = optstop(&["exact-markov", "--config", &cfg], Some("zero"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn contract_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // A tolerance below the rounding floor cannot be met.
    let cfg = write_config(dir.path(), "horizon = 8\ntol = 1e-300\n");
    let out = dir.path().join("out");
    let o = optstop(
        &[
            "exact-expectation",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(fs::read_to_string(out.join("verdict.txt"))
        .unwrap()
        .contains("verdict: FAIL"));
}

#[test]
fn describe_lists_every_experiment() {
    let o = optstop(&["mc-bf-mean", "--describe"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for kind in ExperimentKind::ALL {
        assert!(text.contains(&format!("{kind} ->")), "{kind} missing");
    }
    assert!(text.starts_with("mc-bf-mean -> montecarlo::estimate_stopped_bf_mean"));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n_trials = 400\nrule_cap = 60\ng = 1, 3\n");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("out{threads}"));
        let o = optstop(
            &[
                "mc-bf-mean",
                "--config",
                &cfg,
                "--seed",
                "9",
                "--out",
                out.to_str().unwrap(),
            ],
            Some(threads),
        );
        assert!(o.status.code() == Some(0) || o.status.code() == Some(2));
        outputs.push(
            ["records.csv", "summary.json", "verdict.txt"].map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    let summary: serde_json::Value = serde_json::from_slice(&outputs[0][1]).unwrap();
    assert_eq!(summary["config"]["seed"], 9);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::parse(
        ExperimentKind::McType1,
        "n_trials = 50\nrule_cap = 30\ng = 1\nseed = 3",
    )
    .unwrap();
    let run = |seed: Option<u64>, name: &str| {
        let out = dir.path().join(name);
        cli::run(
            &config,
            &RunOptions {
                seed,
                out: Some(out.clone()),
                threads: Some(1),
            },
        )
        .unwrap();
        fs::read_to_string(out.join("records.csv")).unwrap()
    };
    assert_eq!(run(None, "a"), run(Some(3), "b"));
    assert_ne!(run(None, "a"), run(Some(4), "c"));
}

#[test]
fn invariance_check_reports_raw_counterexample_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rule = raw_statistic\nrule_stat = sum_sq\nrule_threshold = 20\nrule_cap = 50\ntrials = 2000\n",
    );
    let out = dir.path().join("out");
    let o = optstop(
        &[
            "invariance-check",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",true"));
}
