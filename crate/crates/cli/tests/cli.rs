use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use posfuse_core::channel_sim::{Dataset, Environment};
use posfuse_core::metrics::MetricsReport;
use posfuse_core::training::ModelBundle;
use tempfile::TempDir;

fn posfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posfuse"))
        .args(args)
        .env("POSFUSE_THREADS", "0")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(&o),
        stderr(&o)
    );
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small 4-anchor environment: 4 elements, 16 subcarriers.
fn small_env(dir: &Path) -> PathBuf {
    let mut env = Environment::desk_default(3);
    env.subcarriers = 16;
    for a in &mut env.anchors {
        a.array.elements = 4;
    }
    let path = dir.join("env.json");
    fs::write(&path, env.to_json_pretty()).unwrap();
    path
}

fn gen(dir: &Path, name: &str, scenario: &str) -> PathBuf {
    let env = small_env(dir);
    let out = dir.join(name);
    ok(posfuse(&[
        "gen",
        "--env",
        s(&env),
        "--samples",
        "150",
        "--test",
        "40",
        "--scenario",
        scenario,
        "--out",
        s(&out),
    ]));
    out
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

const SMALL_CFG: &str = r#"{"epochs": 4, "patience": 2, "batch_size": 32, "trunk_widths": [16], "head_widths": [8]}"#;

fn train(dir: &Path, data: &Path, mode: &str, loss: &str, cfg: &str, out: &str) -> (PathBuf, Output) {
    let cfg = write_config(dir, &format!("{out}.json"), cfg);
    let out = dir.join(out);
    let o = ok(posfuse(&[
        "train",
        "--data",
        s(data),
        "--config",
        s(&cfg),
        "--mode",
        mode,
        "--loss",
        loss,
        "--out",
        s(&out),
    ]));
    (out, o)
}

fn read_report(path: &Path) -> MetricsReport {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_round_trips_and_reports_splits() {
    let dir = TempDir::new().unwrap();
    let env = small_env(dir.path());
    let out = dir.path().join("d.pfds");
    let o = ok(posfuse(&[
        "gen",
        "--env",
        s(&env),
        "--samples",
        "100",
        "--out",
        s(&out),
    ]));
    let text = stdout(&o);
    assert!(text.contains("train 90, validation 10, test 0"), "{text}");
    let ds = Dataset::load(&out).unwrap();
    assert!(text.contains(&format!("content hash {}", ds.content_hash())), "{text}");
    assert_eq!(ds.splits.train.len(), 90);

    let exact = dir.path().join("e.pfds");
    let o = ok(posfuse(&[
        "gen",
        "--env",
        s(&env),
        "--n-train",
        "200",
        "--test",
        "5",
        "--out",
        s(&exact),
    ]));
    assert!(stdout(&o).contains("train 200,"), "{}", stdout(&o));
}

#[test]
fn gen_rejects_unknown_anchor_with_config_exit() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d.pfds");
    let o = posfuse(&[
        "gen",
        "--samples",
        "50",
        "--test",
        "5",
        "--scenario",
        "dynamic:7",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("anchor id 7"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn train_structures_and_determinism() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.pfds", "static");

    let (mtl, o) = train(dir.path(), &data, "mtl", "nll", SMALL_CFG, "mtl.pfmb");
    assert!(stdout(&o).contains("shared: best validation loss"), "{}", stdout(&o));
    let b = ModelBundle::load(&mtl).unwrap();
    assert_eq!(b.groups.len(), 1);
    assert_eq!(b.groups[0].heads.len(), 4);
    let history = fs::read_to_string(dir.path().join("mtl.pfmb.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 5);

    let (stl, _) = train(dir.path(), &data, "stl", "nll", SMALL_CFG, "stl.pfmb");
    let b = ModelBundle::load(&stl).unwrap();
    assert_eq!(b.groups.len(), 4);
    assert!(b.groups.iter().all(|g| g.heads.len() == 1));

    let (again, _) = train(dir.path(), &data, "mtl", "nll", SMALL_CFG, "mtl2.pfmb");
    assert_eq!(fs::read(&mtl).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn divergence_exits_numeric_with_last_good_epoch() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.pfds", "static");
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"epochs": 3, "patience": 1, "learning_rate": 1e300, "trunk_widths": [8], "head_widths": [4]}"#,
    );
    let out = dir.path().join("m.pfmb");
    let o = posfuse(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("last good epoch"), "{}", stderr(&o));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let garbage = write_config(dir.path(), "garbage.pfds", "not a dataset");
    let out = dir.path().join("m.pfmb");
    let o = posfuse(&["train", "--data", s(&garbage), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let data = gen(dir.path(), "d.pfds", "static");
    let cfg = write_config(dir.path(), "c.json", r#"{"epochs": 3, "bogus": 1}"#);
    let o = posfuse(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_posfuse"))
        .args(["gen", "--samples", "20", "--out", s(&out)])
        .env("POSFUSE_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_equal_variances_make_ivw_match_average() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.pfds", "static");
    let cfg = r#"{"epochs": 3, "patience": 1, "dropout": 0.0, "trunk_widths": [16], "head_widths": [8]}"#;
    let (model, _) = train(dir.path(), &data, "mtl", "mse", cfg, "m.pfmb");
    let out = dir.path().join("eval");
    ok(posfuse(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--fusion",
        "avg,ivw",
        "--no-ir",
        "--out",
        s(&out),
    ]));
    let avg = read_report(&out.join("report-static-avg.json"));
    let ivw = read_report(&out.join("report-static-ivw.json"));
    assert!((avg.mean_error.mean - ivw.mean_error.mean).abs() < 1e-9);
    assert!(avg.integrity_risk.is_none() && avg.threshold.is_none());
    assert!(!out.join("report-static-sp.json").exists());
    let curves = fs::read_to_string(out.join("curves-static-avg.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("N,O_N,S_N,S_N_minus_O_N"));
    assert_eq!(curves.lines().count(), 40);
    let anchors = fs::read_to_string(out.join("anchors-static.csv")).unwrap();
    assert_eq!(anchors.lines().count(), 5);
}

#[test]
fn eval_dynamic_needs_static_reference_for_ir() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.pfds", "static");
    let dynamic = gen(dir.path(), "dyn.pfds", "dynamic:2");
    let (model, _) = train(dir.path(), &data, "mtl", "nll", SMALL_CFG, "m.pfmb");
    let out = dir.path().join("eval");

    let o = posfuse(&["eval", "--model", s(&model), "--data", s(&dynamic), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("static reference"), "{}", stderr(&o));

    let o = posfuse(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&dynamic),
        "--static-ref",
        s(&data),
        "--lambda",
        "0.05",
        "--alert-limit",
        "0.5",
        "--out",
        s(&out),
    ]);
    // The tiny model may leave one error class empty; both outcomes are explicit.
    if o.status.success() {
        let r = read_report(&out.join("report-dynamic-2-sp.json"));
        assert_eq!(r.changed_anchors, vec![posfuse_core::AnchorId(2)]);
        assert_eq!(r.scenario, "dynamic-2");
        assert_eq!(r.provenance.lambda, 0.05);
        assert!(r.integrity_risk.is_some());
    } else {
        assert!(stderr(&o).contains("widen"), "{}", stderr(&o));
    }

    let o = ok(posfuse(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&dynamic),
        "--no-ir",
        "--lambda",
        "0.05",
        "--out",
        s(&out),
    ]));
    assert!(stdout(&o).contains("scenario dynamic-2"));
    let r = read_report(&out.join("report-dynamic-2-sp.json"));
    assert_eq!(r.changed_anchors, vec![posfuse_core::AnchorId(2)]);
    assert_eq!(r.provenance.lambda, 0.05);
    assert_eq!(r.provenance.mc_passes, 30);
    assert_eq!(
        r.provenance.dataset_hash,
        Dataset::load(&dynamic).unwrap().content_hash()
    );
    assert_eq!(r.provenance.version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn eval_early_reports_single_method() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.pfds", "static");
    let (model, _) = train(dir.path(), &data, "early", "nll", SMALL_CFG, "e.pfmb");
    let out = dir.path().join("eval");
    ok(posfuse(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--no-ir",
        "--out",
        s(&out),
    ]));
    let reports: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("report-"))
        .collect();
    assert_eq!(reports, vec!["report-static-early.json".to_string()]);
    assert!(!out.join("anchors-static.csv").exists());
}

fn matrix_spec(dir: &Path, extra: &str) -> PathBuf {
    let env = small_env(dir);
    let spec = format!(
        r#"{{"environment": "{}", "modes": ["early", "mtl"], "losses": ["mse", "nll"],
            "train_sizes": [120], "seeds": [5], "n_test": 30,
            "train": {{"epochs": 3, "patience": 1, "trunk_widths": [16], "head_widths": [8]}},
            "eval": {{"passes": 5, "integrity": false}},
            "output": "out"{extra}}}"#,
        s(&env)
    );
    let p = dir.join("spec.json");
    fs::write(&p, spec).unwrap();
    p
}

#[test]
fn matrix_counts_rows_and_skips_completed_cells() {
    let dir = TempDir::new().unwrap();
    let spec = matrix_spec(dir.path(), "");
    let o = ok(posfuse(&["matrix", s(&spec)]));
    assert!(
        stdout(&o).contains("cells run 4, skipped 0, failed 0"),
        "{}",
        stdout(&o)
    );
    let out = dir.path().join("out");
    assert_eq!(fs::read_dir(out.join("cells")).unwrap().count(), 4);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(
        lines[0],
        "mode,loss,fusion,scenario,n_train,seed,me,ause,ir,runtime_s,status"
    );
    // early: one method per loss; mtl: three fusion methods per loss.
    assert_eq!(lines.len() - 1, 2 + 2 * 3);
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));

    let o = ok(posfuse(&["matrix", s(&spec)]));
    assert!(
        stdout(&o).contains("cells run 0, skipped 4, failed 0"),
        "{}",
        stdout(&o)
    );
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap(), summary);
}

#[test]
fn matrix_records_failed_cells() {
    let dir = TempDir::new().unwrap();
    let env = small_env(dir.path());
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        format!(
            r#"{{"environment": "{}", "modes": ["mtl"], "losses": ["nll"], "train_sizes": [60], "n_test": 10,
                "train": {{"epochs": 2, "patience": 1, "learning_rate": 1e300, "trunk_widths": [8], "head_widths": [4]}},
                "output": "out"}}"#,
            s(&env)
        ),
    )
    .unwrap();
    let o = posfuse(&["matrix", s(&spec)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.contains("error: non-finite loss")), "{summary}");
}

#[test]
fn matrix_rejects_invalid_spec() {
    let dir = TempDir::new().unwrap();
    let spec = matrix_spec(dir.path(), r#", "scenarios": [{"kind": "dynamic", "anchors": [9]}]"#);
    let o = posfuse(&["matrix", s(&spec)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("anchor id 9"), "{}", stderr(&o));
}
