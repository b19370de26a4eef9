use std::path::Path;
use std::process::Command;

use serde_json::json;

fn ctl(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ctl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("ctl binary runs")
}

fn forum_fixture(dir: &Path, threads: usize) -> std::path::PathBuf {
    let topics = [
        "Paris",
        "Rome",
        "Istanbul",
        "Barcelona",
        "Madrid",
        "Amsterdam",
        "Prague",
        "Lisbon",
    ];
    let mut lines = Vec::new();
    for i in 0..threads {
        lines.push(
            json!({
                "source_id": format!("t{i}"),
                "topic": topics[i % topics.len()],
                "creator_message": format!("Where should I eat near the station, visit {i}?"),
                "replies": [format!("Try the place on the corner {i}."), "Anything near the river is fine!"],
            })
            .to_string(),
        );
    }
    lines.push("{not json".into());
    lines.push(json!({"source_id": "empty", "topic": "Rome", "creator_message": "  ", "replies": ["x"]}).to_string());
    let p = dir.join("threads.jsonl");
    std::fs::write(&p, lines.join("\n")).unwrap();
    p
}

#[test]
fn hack_writes_parseable_corpus_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    forum_fixture(dir.path(), 50);
    let out = ctl(
        dir.path(),
        &[
            "hack",
            "--threads",
            "threads.jsonl",
            "--seed",
            "4",
            "--out",
            "pseudo.txt",
            "--plain-out",
            "plain.txt",
            "--grammar-out",
            "g.toml",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("50 threads loaded, 2 lines skipped"), "{stderr}");
    let corpus = std::fs::read_to_string(dir.path().join("pseudo.txt")).unwrap();
    // "prague" is not a built-in topic, so the grammar is derived from the dump
    let spec = ctl_core::grammar::GrammarSpec::resolve(dir.path().join("g.toml").to_str().unwrap()).unwrap();
    assert!(std::fs::read_to_string(dir.path().join("g.toml"))
        .unwrap()
        .contains("prague"));
    let mut turns = 0;
    for line in corpus.lines() {
        let parsed = ctl_core::codec::parse_sequence(line, &spec, ctl_core::codec::ParseMode::Strict).unwrap();
        assert!(parsed.diagnostics.is_empty());
        turns += parsed.session.turns.len();
    }
    assert_eq!(turns, 100);
    let plain = std::fs::read_to_string(dir.path().join("plain.txt")).unwrap();
    assert!(!plain.contains("<sos_u>"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pseudo.txt.run.json")).unwrap()).unwrap();
    assert_eq!(sidecar["command"], "hack");
    assert_eq!(sidecar["seeds"]["shuffle"], 4);
    assert_eq!(sidecar["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn hack_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    forum_fixture(dir.path(), 60);
    for out in ["a.txt", "b.txt"] {
        assert_eq!(
            ctl(
                dir.path(),
                &["hack", "--threads", "threads.jsonl", "--seed", "9", "--out", out]
            )
            .status
            .code(),
            Some(0)
        );
    }
    let a = std::fs::read(dir.path().join("a.txt")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.txt")).unwrap());
}

#[test]
fn synth_is_byte_identical_across_runs_and_modes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec![
            "synth",
            "--grammar",
            "target",
            "--n",
            "200",
            "--seed",
            "11",
            "--out",
            out,
        ];
        args.extend_from_slice(extra);
        let o = ctl(dir.path(), &args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("a.txt", &[]);
    assert_eq!(a, run("b.txt", &[]));
    assert_eq!(a, run("c.txt", &["--sequential"]));
}

#[test]
fn missing_manifest_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctl(dir.path(), &["curriculum", "--manifest", "absent.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ctl(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        ctl(dir.path(), &["synth", "--grammar", "target"]).status.code(),
        Some(1)
    );
    let help = ctl(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("curriculum"));
}

#[test]
fn manifest_violations_exit_one_and_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        ctl(
            d,
            &[
                "synth",
                "--grammar",
                "target",
                "--n",
                "20",
                "--seed",
                "1",
                "--out",
                "t.txt"
            ]
        )
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        ctl(d, &["vocab", "--corpus", "t.txt", "--out", "v.txt"]).status.code(),
        Some(0)
    );
    // target before pseudo: complexity decreases
    let manifest = r#"
name = "reversed"
seed = 1
vocab = "v.txt"
[model]
preset = "small"
[[stages]]
name = "target"
corpus = "t.txt"
grammar = "target"
max_epochs = 1
eval_every = 1
[[stages]]
name = "pseudo"
corpus = "t.txt"
grammar = "pseudo"
max_epochs = 1
eval_every = 1
"#;
    std::fs::write(d.join("m.toml"), manifest).unwrap();
    let out = ctl(d, &["curriculum", "--manifest", "m.toml", "--validate-only"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("violation"));
}

#[test]
fn ingest_eval_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dialogs: Vec<_> = (0..20)
        .map(|i| {
            json!({
                "dialog_id": format!("D{i:02}.json"),
                "goal": {"restaurant": {"inform": {"food": "thai"}, "request": ["phone"]}},
                "turns": [{
                    "user_utterance": "I want thai food.",
                    "belief_annotation": {"restaurant": {"food": "thai"}},
                    "dialog_acts": [{"act": "inform", "slots": ["name", "phone"]}],
                    "delexicalized_response": "[restaurant_name] serves thai , call [restaurant_phone] ."
                }]
            })
        })
        .collect();
    std::fs::write(d.join("data.json"), serde_json::to_string(&dialogs).unwrap()).unwrap();
    std::fs::write(
        d.join("db.jsonl"),
        json!({"domain": "restaurant", "name": "bangkok city", "food": "thai"}).to_string(),
    )
    .unwrap();
    let ok = |args: &[&str]| {
        let o = ctl(d, args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    };
    ok(&[
        "ingest",
        "--input",
        "data.json",
        "--out",
        "data",
        "--split",
        "0.5,0.25,0.25",
    ]);
    for f in [
        "grammar.toml",
        "train.txt",
        "val.txt",
        "test.txt",
        "test.sessions.jsonl",
        "run.json",
    ] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    ok(&[
        "vocab",
        "--corpus",
        "data/train.txt",
        "--grammar",
        "data/grammar.toml",
        "--out",
        "v.txt",
    ]);
    let manifest = r#"
name = "tiny"
seed = 2
vocab = "v.txt"
[model]
preset = "small"
context_len = 64
[training]
batch_size = 2
window = 64
[[stages]]
name = "target"
corpus = "data/train.txt"
val_corpus = "data/val.txt"
grammar = "data/grammar.toml"
max_epochs = 1
eval_every = 2
max_steps = 3
"#;
    std::fs::write(d.join("m.toml"), manifest).unwrap();
    ok(&["curriculum", "--manifest", "m.toml"]);
    assert!(d.join("runs/tiny/final.ckpt").exists());
    ok(&[
        "eval",
        "--checkpoint",
        "runs/tiny/final.ckpt",
        "--vocab",
        "v.txt",
        "--sessions",
        "data/test.sessions.jsonl",
        "--grammar",
        "data/grammar.toml",
        "--db",
        "db.jsonl",
        "--max-new-tokens",
        "8",
        "--out",
        "eval.json",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["counts"]["evaluated_dialogs"], 5);
    ok(&[
        "report",
        "--run",
        "tiny=runs/tiny/trace.csv",
        "--metrics",
        "tiny:small=eval.json",
        "--out",
        "rep",
    ]);
    let svg = std::fs::read_to_string(d.join("rep/val_loss.svg")).unwrap();
    assert!(svg.contains("data-curriculum=\"tiny\""));

    // a vocabulary the checkpoint was not trained with is refused
    ok(&[
        "vocab",
        "--corpus",
        "data/train.txt",
        "--corpus",
        "m.toml",
        "--grammar",
        "data/grammar.toml",
        "--out",
        "v2.txt",
    ]);
    let o = ctl(
        d,
        &[
            "eval",
            "--checkpoint",
            "runs/tiny/final.ckpt",
            "--vocab",
            "v2.txt",
            "--sessions",
            "data/test.sessions.jsonl",
            "--grammar",
            "data/grammar.toml",
            "--out",
            "eval2.json",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn library_entry_point_reports_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.txt");
    let r = ctl_cli::run([
        "ctl",
        "synth",
        "--grammar",
        "pseudo",
        "--n",
        "5",
        "--seed",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.exit_code, ctl_cli::EXIT_OK, "{}", r.log);
    assert_eq!(r.artifacts.len(), 2);
    assert_eq!(r.artifacts[0], out);
}
