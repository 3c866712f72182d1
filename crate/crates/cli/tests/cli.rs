use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use fockfb::policy::{save_policy, write_policy, Hyperparameters, ObservationSpec, PolicyManifest, PolicyNet};
use fockfb_cli::output::read_csv;
use serde_json::Value;

fn fockfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fockfb")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn printed_config_reloads_to_the_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let first = stdout(&fockfb(&["--set", "target.dim=24", "--set", "controller.alpha_max=0.25", "config"]));
    assert!(first.contains("alpha_max = 0.25"));
    let file = dir.path().join("exp.toml");
    std::fs::write(&file, &first).unwrap();
    let second = stdout(&fockfb(&["--config", path(&file), "config"]));
    assert_eq!(first, second);
    let third = stdout(&fockfb(&["--config", path(&file), "--workers", "7", "config"]));
    assert_eq!(first.lines().last(), third.lines().last());
}

#[test]
fn invalid_configuration_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = fockfb(&["--out", path(dir.path()), "--set", "measurement.delta_n=0", "run", "--n-traj", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let o = fockfb(&["--set", "no.such.key=1", "config"]);
    assert!(!o.status.success());
}

#[test]
fn run_artifacts_carry_provenance_and_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        stdout(&fockfb(&[
            "--seed",
            "5",
            "--out",
            path(out),
            "--set",
            "target.dim=20",
            "run",
            "--n-traj",
            "12",
            "--cycles",
            "15",
        ]));
    }
    let hash_line = stdout(&fockfb(&[
        "--seed",
        "5",
        "--set",
        "target.dim=20",
        "--set",
        "run.n_traj=12",
        "--set",
        "episode.max_cycles=15",
        "config",
    ]));
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["final.csv", "manifest.json", "per_cycle.csv", "summary.json", "trajectories.csv"]
    );
    for n in &names {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n}");
    }

    let summary: Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    let hash = summary["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash_line.contains(hash));
    assert_eq!(summary["seed"], 5);

    let per_cycle = std::fs::read_to_string(a.join("per_cycle.csv")).unwrap();
    assert!(per_cycle.lines().next().unwrap().ends_with(&format!("config_hash={hash} seed=5")));
    let (_, rows) = read_csv(&a.join("final.csv")).unwrap();
    assert_eq!(rows.len(), 12);
}

#[test]
fn eval_policy_accepts_a_matching_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let dim = 8;
    let net = PolicyNet::zeros(&[dim * dim, 4, 1], 1).unwrap();
    let weights = dir.path().join("actor.bin");
    save_policy(&net, &weights).unwrap();
    let manifest = PolicyManifest::describe(
        &net,
        "actor.bin",
        &write_policy(&net),
        ObservationSpec::new(dim, false),
        Hyperparameters::tqc(),
    );
    let mpath = dir.path().join("actor.json");
    manifest.save(&mpath).unwrap();
    let out = dir.path().join("out");
    let text = stdout(&fockfb(&[
        "--out",
        path(&out),
        "--set",
        "target.dim=8",
        "eval-policy",
        "--weights",
        path(&weights),
        "--manifest",
        path(&mpath),
        "--n-traj",
        "3",
        "--cycles",
        "5",
    ]));
    assert!(text.starts_with("3 trajectories"));

    let mut wrong = manifest.clone();
    wrong.weights_sha256 = "00".repeat(32);
    wrong.save(&mpath).unwrap();
    let o = fockfb(&[
        "--out",
        path(&out),
        "--set",
        "target.dim=8",
        "eval-policy",
        "--weights",
        path(&weights),
        "--manifest",
        path(&mpath),
    ]);
    assert!(!o.status.success());
}

#[test]
fn stdio_server_answers_each_line() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_fockfb"))
        .args(["--set", "target.dim=10", "serve"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let input = concat!(
        r#"{"v":1,"id":1,"kind":"spec","payload":{}}"#,
        "\n",
        r#"{"v":1,"id":2,"kind":"reset","payload":{"seed":3}}"#,
        "\n",
        "not json\n",
        r#"{"v":1,"id":3,"kind":"step","payload":{"action":[0.0]}}"#,
        "\n",
        r#"{"v":1,"id":4,"kind":"close","payload":{}}"#,
        "\n",
    );
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let replies: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(replies.len(), 5);
    assert_eq!(replies[0]["spec"]["dim"], 10);
    assert_eq!(replies[2]["ok"], false);
    assert_eq!(replies[2]["error"]["code"], "protocol");
    assert_eq!(replies[3]["ok"], true);
    assert_eq!(replies[4]["kind"], "close");
}

#[test]
fn documented_bridge_transcript_is_exact() {
    let doc = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/bridge-protocol.md")).unwrap();
    let requests: String = doc.lines().filter_map(|l| l.strip_prefix("> ")).map(|l| format!("{l}\n")).collect();
    let expected: String = doc.lines().filter_map(|l| l.strip_prefix("< ")).map(|l| format!("{l}\n")).collect();
    assert!(!requests.is_empty());
    let mut child = Command::new(env!("CARGO_BIN_EXE_fockfb"))
        .args(["--set", "target.dim=6", "--set", "target.state=\"fock:1\"", "serve"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(requests.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), expected);
}
