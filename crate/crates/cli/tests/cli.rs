mod common;

use std::fs;
use std::path::Path;

use common::{http, pedrisk, run_ok, small_model, spawn_server, FIXTURE};
use pedrisk_service::mock::MockFhir;
use serde_json::Value;

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn bundle_count(cohort: &Path) -> usize {
    fs::read_dir(cohort)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("syn"))
        .count()
}

#[test]
fn synth_with_same_seed_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_ok(pedrisk(a.path()).args(["synth", "--seed", "7", "--n-patients", "40"]));
    // Same run from elsewhere, pointed at the second directory with --workdir.
    run_ok(pedrisk(Path::new("/")).args(["synth", "--seed", "7", "--n-patients", "40", "--workdir"]).arg(b.path()));
    let (ca, cb) = (a.path().join("cohort"), b.path().join("cohort"));
    assert_eq!(fs::read(ca.join("manifest.psv")).unwrap(), fs::read(cb.join("manifest.psv")).unwrap());
    assert_eq!(bundle_count(&ca), 40);
    for entry in fs::read_dir(&ca).unwrap() {
        let name = entry.unwrap().file_name();
        if name != "run-manifest.json" {
            assert_eq!(fs::read(ca.join(&name)).unwrap(), fs::read(cb.join(&name)).unwrap(), "{name:?}");
        }
    }
    let (ma, mb) = (manifest(&ca.join("run-manifest.json")), manifest(&cb.join("run-manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["seed"], 7);
    assert_eq!(ma["command"], "synth");
    assert!(ma["started_at"].as_str().unwrap() <= ma["finished_at"].as_str().unwrap());

    let c = tempfile::tempdir().unwrap();
    run_ok(pedrisk(c.path()).args(["synth", "--seed", "8", "--n-patients", "40"]));
    assert_ne!(
        fs::read(ca.join("manifest.psv")).unwrap(),
        fs::read(c.path().join("cohort/manifest.psv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["synth", "--no-such-flag"][..], &["frobnicate"], &[]] {
        let out = pedrisk(dir.path()).args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage:"), "{args:?}");
    }
    let out = pedrisk(dir.path()).args(["synth", "--n-patients", "many"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let help = pedrisk(dir.path()).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in ["synth", "train", "eval", "serve", "predict"] {
        assert!(text.contains(cmd));
    }

    fs::write(dir.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    fs::write(dir.path().join("invalid.toml"), "[synth]\nbase_obesity_rate = 2.0\n").unwrap();
    for cfg in ["bad.toml", "invalid.toml", "missing.toml"] {
        let out = pedrisk(dir.path()).args(["synth", "--n-patients", "3", "--config", cfg]).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{cfg}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = pedrisk(dir.path()).args(["--workdir", "does/not/exist", "synth"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["train", "--in", "nowhere"],
        &["eval", "--in", "nowhere"],
        &["predict", "--in", "nowhere.json"],
        &["predict", "--in", FIXTURE],
    ];
    for args in cases {
        let out = pedrisk(dir.path()).args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }
    // Too few patients to split.
    run_ok(pedrisk(dir.path()).args(["-q", "synth", "--n-patients", "5"]));
    let out = pedrisk(dir.path()).args(["-q", "train"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flag_beats_env_beats_config_beats_default() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("demo.toml"), "seed = 3\n\n[synth]\nn_patients = 12\n").unwrap();
    let run = |args: &[&str], env: &[(&str, &str)]| {
        let _ = fs::remove_dir_all(dir.path().join("cohort"));
        let mut cmd = pedrisk(dir.path());
        cmd.arg("-q").arg("synth").args(args).envs(env.iter().copied());
        run_ok(&mut cmd);
        let cohort = dir.path().join("cohort");
        (manifest(&cohort.join("run-manifest.json"))["seed"].as_u64().unwrap(), bundle_count(&cohort))
    };
    assert_eq!(run(&["--n-patients", "4"], &[]), (0, 4));
    assert_eq!(run(&["--config", "demo.toml"], &[]), (3, 12));
    assert_eq!(run(&[], &[("PEDRISK_CONFIG", "demo.toml")]), (3, 12));
    let env = [("PEDRISK_CONFIG", "demo.toml"), ("PEDRISK_SEED", "5"), ("PEDRISK_N_PATIENTS", "9")];
    assert_eq!(run(&[], &env), (5, 9));
    assert_eq!(run(&["--seed", "9", "--n-patients", "7"], &env), (9, 7));
}

#[test]
fn synth_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    small_model(dir.path(), 300, 2);
    let model = dir.path().join("model");
    for f in ["model.prsk", "registry.txt", "eval_report.json", "metrics.psv", "history.psv", "run-manifest.json"] {
        assert!(model.join(f).is_file(), "{f}");
    }
    let m = manifest(&model.join("run-manifest.json"));
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["inputs"][0].as_str().unwrap(), dir.path().join("cohort").to_str().unwrap());
    assert!(m["versions"]["model"].as_str().unwrap().len() >= 8);
    assert_eq!(fs::read_to_string(model.join("history.psv")).unwrap().lines().count(), 3);

    // Re-deriving the test split from the saved model reproduces the training report.
    let out = run_ok(pedrisk(dir.path()).args(["-q", "--seed", "5", "eval", "--split", "test"]));
    let metrics = fs::read_to_string(model.join("metrics.psv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), metrics);
    assert_eq!(fs::read_to_string(dir.path().join("eval/metrics.psv")).unwrap(), metrics);
    assert_eq!(
        fs::read(dir.path().join("eval/eval_report.json")).unwrap(),
        fs::read(model.join("eval_report.json")).unwrap()
    );
    assert!(dir.path().join("eval/run-manifest.json").is_file());

    run_ok(pedrisk(dir.path()).args(["-q", "eval", "--split", "all", "--out", "eval-all", "--bootstrap-reps", "10"]));
    let all: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eval-all/eval_report.json")).unwrap()).unwrap();
    let test: Value = serde_json::from_str(&metrics_json(&model)).unwrap();
    assert!(all["meta"]["n_patients"].as_u64() > test["meta"]["n_patients"].as_u64());
    assert_eq!(all["meta"]["bootstrap_reps"], 10);
}

fn metrics_json(model: &Path) -> String {
    fs::read_to_string(model.join("eval_report.json")).unwrap()
}

#[test]
fn predict_matches_post_and_fetched_documents() {
    let dir = tempfile::tempdir().unwrap();
    small_model(dir.path(), 300, 2);
    let cli = run_ok(pedrisk(dir.path()).args(["-q", "predict", "--in", FIXTURE])).stdout;
    run_ok(pedrisk(dir.path()).args(["-q", "predict", "--in", FIXTURE, "--out", "pred.json"]));
    assert_eq!(fs::read(dir.path().join("pred.json")).unwrap(), cli);
    let m = manifest(&dir.path().join("pred.json.manifest.json"));
    assert_eq!(m["command"], "predict");

    let raw = fs::read(FIXTURE).unwrap();
    let server = spawn_server(dir.path(), &["--model", "model"]);
    let posted = http(server.addr, "POST", "/v1/predict", &raw, &[("Content-Type", "application/fhir+json")]);
    assert_eq!(posted.status, 200);
    assert_eq!(posted.body, cli);

    let rt = tokio::runtime::Runtime::new().unwrap();
    let bundle: Value = serde_json::from_slice(&raw).unwrap();
    let mock = rt.block_on(MockFhir::new(7).with_bundle(&bundle).spawn()).unwrap();
    let path = format!("/v1/patients/syn000003/predict?server={}", mock.base_url);
    let fetched = http(server.addr, "GET", &path, b"", &[]);
    assert_eq!(fetched.status, 200, "{}", String::from_utf8_lossy(&fetched.body));
    assert_eq!(fetched.body, cli);
}

#[test]
fn serve_without_model_is_degraded_and_token_comes_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let server = spawn_server(dir.path(), &[]);
    let health = http(server.addr, "GET", "/v1/health", b"", &[]).json();
    assert_eq!(health["status"], "degraded");
    assert_eq!(http(server.addr, "POST", "/v1/predict", b"{}", &[]).status, 503);
    drop(server);

    small_model(dir.path(), 200, 1);
    let mut cmd = pedrisk(dir.path());
    cmd.env("PEDRISK_TOKEN", "s3cret");
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr: std::net::SocketAddr = format!("127.0.0.1:{port}").parse().unwrap();
    let mut child = cmd
        .args(["-q", "serve", "--listen", &addr.to_string()])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(30);
    while std::net::TcpStream::connect(addr).is_err() {
        assert!(std::time::Instant::now() < deadline, "server did not start");
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    assert_eq!(http(addr, "GET", "/v1/health", b"", &[]).json()["status"], "ok");
    assert_eq!(http(addr, "GET", "/v1/model", b"", &[]).status, 401);
    assert_eq!(http(addr, "GET", "/v1/model", b"", &[("Authorization", "Bearer s3cret")]).status, 200);
    let _ = child.kill();
    let _ = child.wait();
}

#[test]
fn shipped_demo_config_loads() {
    let dir = tempfile::tempdir().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/demo.toml");
    run_ok(pedrisk(dir.path()).args(["-q", "--config", config, "synth", "--n-patients", "3"]));
    let m = manifest(&dir.path().join("cohort/run-manifest.json"));
    assert_eq!(m["seed"], 2024);
}
