use std::path::Path;
use std::process::{Command, Output};

use vocadapt::autodiff::checkpoint::CheckpointBundle;
use vocadapt::eval::ComparisonTable;
use vocadapt::training::read_step_log;

const SMALL: &str = r#"
[data]
source_speakers = 2
utterances_per_speaker = 2
target_utterances = 4
target_train = 2
utterance_seconds = 0.4

[train]
steps = 3
crop_frames = 8
log_interval = 1

[finetune]
steps = 2

[cdc]
batch_size = 2
"#;

fn vocadapt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vocadapt"))
        .current_dir(dir)
        .env_remove("VOCADAPT_RUN_ROOT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    o
}

#[test]
fn help_and_bad_flags() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&vocadapt(d.path(), &["--help"])), 0);
    assert_eq!(code(&vocadapt(d.path(), &["pretrain", "--bogus"])), 2);
    assert_eq!(code(&vocadapt(d.path(), &["finetune", "--data", "x", "--out", "y", "--mode", "sideways"])), 2);
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let o = vocadapt(p, &["pretrain", "--data", "missing.jsonl", "--out", "m.avck"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("missing.jsonl"));

    std::fs::write(p.join("bad.toml"), "[train]\nsteps = 0\n").unwrap();
    std::fs::write(p.join("m.jsonl"), "").unwrap();
    let o = vocadapt(p, &["pretrain", "--config", "bad.toml", "--data", "m.jsonl", "--out", "m.avck"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = vocadapt(p, &["finetune", "--data", "m.jsonl", "--mode", "cdc", "--out", "f.avck"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = vocadapt(p, &["gradcheck", "--module", "nonsense"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = vocadapt(p, &["compare", "--ckpt", "no-equals-sign", "--data", "m.jsonl", "--out", "c"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn runtime_failure_exits_1() {
    let d = tempfile::tempdir().unwrap();
    let o = vocadapt(d.path(), &["synth-data", "--out", "no/such/parent/data"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn gradcheck_reports_and_catches_faults() {
    let d = tempfile::tempdir().unwrap();
    let o = ok(vocadapt(d.path(), &["gradcheck", "--module", "prob"]));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("softmax"), "{out}");
    let o = vocadapt(d.path(), &["gradcheck", "--module", "conv", "--inject-fault", "conv1d"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("conv1d"), "{}", stderr(&o));
}

#[test]
fn end_to_end_small_run() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("small.toml"), SMALL).unwrap();
    ok(vocadapt(p, &["synth-data", "--config", "small.toml", "--out", "data", "--seed", "4"]));
    assert!(p.join("data/source.jsonl").is_file());
    assert!(p.join("data/config.toml").is_file());

    ok(vocadapt(
        p,
        &["pretrain", "--config", "small.toml", "--data", "data/source.jsonl", "--model", "melgan", "--out", "runs/pre.avck"],
    ));
    assert_eq!(read_step_log(&p.join("runs/pre.log.jsonl")).unwrap().len(), 3);
    assert!(p.join("runs/pre.config.toml").is_file());

    // a checkpoint carries its config; cdc needs the source pool by default
    let o = vocadapt(p, &["finetune", "--from", "runs/pre.avck", "--data", "data/target.jsonl", "--mode", "cdc", "--out", "runs/cdc.avck"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    for mode in ["none", "traditional", "cdc"] {
        let out = format!("runs/{mode}.avck");
        let mut args = vec!["finetune", "--from", "runs/pre.avck", "--data", "data/target.jsonl", "--mode", mode, "--out", &out];
        if mode == "cdc" {
            args.extend(["--source-data", "data/source.jsonl"]);
        }
        ok(vocadapt(p, &args));
    }
    let pre = CheckpointBundle::load(&p.join("runs/pre.avck")).unwrap();
    let none = CheckpointBundle::load(&p.join("runs/none.avck")).unwrap();
    assert_eq!(pre.params, none.params);
    let cdc_log = read_step_log(&p.join("runs/cdc.log.jsonl")).unwrap();
    assert_eq!(cdc_log.len(), 2);
    assert!(cdc_log.iter().all(|l| l.losses["cdc"] >= 0.0));

    // kind mismatch between checkpoint and config
    std::fs::write(p.join("hifi.toml"), format!("{SMALL}\n[model]\nkind = \"hifigan_like\"\n")).unwrap();
    let o = vocadapt(
        p,
        &["finetune", "--from", "runs/pre.avck", "--config", "hifi.toml", "--data", "data/target.jsonl", "--mode", "traditional", "--out", "runs/x.avck"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let wav = std::fs::read_dir(p.join("data/target")).unwrap().next().unwrap().unwrap().path();
    ok(vocadapt(p, &["synthesize", "--ckpt", "runs/cdc.avck", "--wav", wav.to_str().unwrap(), "--out", "out/x.wav"]));
    assert!(p.join("out/x.wav").is_file());

    ok(vocadapt(p, &["evaluate", "--ckpt", "runs/traditional.avck", "--data", "data/target.jsonl", "--out", "eval"]));
    let reports = std::fs::read_dir(p.join("eval")).unwrap().count();
    assert_eq!(reports, 3, "train, test and the config snapshot");

    ok(vocadapt(
        p,
        &[
            "compare",
            "--ckpt",
            "none=runs/none.avck",
            "--ckpt",
            "traditional=runs/traditional.avck",
            "--ckpt",
            "cdc=runs/cdc.avck",
            "--data",
            "data/target.jsonl",
            "--out",
            "cmp",
        ],
    ));
    let table: ComparisonTable = serde_json::from_str(&std::fs::read_to_string(p.join("cmp/comparison.json")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 3);
    for r in &table.rows {
        assert_eq!(r.gap_mr_stft, r.test_mr_stft - r.train_mr_stft);
    }
    assert!(p.join("cmp/comparison.txt").is_file());
}

#[test]
fn run_root_resolves_relative_outputs() {
    let d = tempfile::tempdir().unwrap();
    let root = d.path().join("root");
    std::fs::create_dir(&root).unwrap();
    std::fs::write(d.path().join("small.toml"), SMALL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vocadapt"))
        .current_dir(d.path())
        .env("VOCADAPT_RUN_ROOT", &root)
        .args(["synth-data", "--config", "small.toml", "--out", "data"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(root.join("data/target.jsonl").is_file());
}
