use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvn_core::data::manifest::Manifest;
use mvn_core::room::RoomScene;
use mvn_core::pipeline::parse_curve_csv;

const TINY: &str = r#"
version = 1
seed = 3

[bank]
synthetic_speech = 4
synthetic_noise = 3

[data]
mixtures = 10
validation_mixtures = 4

[train]
hidden = 4
epochs = 2
batches_per_epoch = 2
batch_size = 2
validation_size = 2

[eval]
schemes = ["decreasing", "increasing"]
ks = [2, 3, 4]
runs = 2
mixtures = 2
"#;

fn mvn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvn")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = mvn(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), TINY).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn config(&self) -> String {
        s(&self.path("run.toml")).to_string()
    }

    fn train(&self, out: &str, extra: &[&str]) -> PathBuf {
        let cfg = self.config();
        let out = self.path(out);
        let mut args = vec!["train", "--config", &cfg, "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn recipe_lines(text: &str) -> usize {
    text.lines().filter(|l| !l.starts_with("#!") && !l.trim().is_empty()).count()
}

#[test]
fn gen_data_writes_one_line_per_mixture() {
    let sb = Sandbox::new();
    let a = sb.path("a");
    let b = sb.path("b");
    ok(&["gen-data", "--config", &sb.config(), "--out", s(&a)]);
    ok(&["gen-data", "--config", &sb.config(), "--out", s(&b)]);
    let text = std::fs::read_to_string(a.join("dataset.manifest")).unwrap();
    assert_eq!(recipe_lines(&text), 10);
    assert_eq!(Manifest::parse(&text).unwrap().recipes.len(), 10);
    assert_eq!(text, std::fs::read_to_string(b.join("dataset.manifest")).unwrap());
    assert_eq!(
        std::fs::read(a.join("validation.manifest")).unwrap(),
        std::fs::read(b.join("validation.manifest")).unwrap()
    );
    assert!(a.join("resolved_config.toml").exists());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let sb = Sandbox::new();
    let a = sb.path("a");
    let b = sb.path("b");
    ok(&["gen-data", "--config", &sb.config(), "--out", s(&a), "--set", "data.channels=6", "--seed", "9"]);
    let resolved = a.join("resolved_config.toml");
    ok(&["gen-data", "--config", s(&resolved), "--out", s(&b)]);
    assert_eq!(
        std::fs::read(a.join("dataset.manifest")).unwrap(),
        std::fs::read(b.join("dataset.manifest")).unwrap()
    );
    let m = Manifest::parse(&std::fs::read_to_string(b.join("dataset.manifest")).unwrap()).unwrap();
    assert_eq!(m.header_value("seed").unwrap(), "9");
    assert!(m.recipes.iter().all(|r| r.channels() == 6));
}

#[test]
fn gen_data_can_dump_wavs() {
    let sb = Sandbox::new();
    let out = sb.path("w");
    ok(&[
        "gen-data", "--config", &sb.config(), "--out", s(&out),
        "--set", "data.mixtures=2", "--set", "data.write_wavs=true",
    ]);
    let reader = hound_free_channels(&out.join("wavs/mix_00001.wav"));
    assert_eq!(reader, 4);
}

/// Channel count from the WAV header (bytes 22..24).
fn hound_free_channels(path: &Path) -> u16 {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[0..4], b"RIFF");
    u16::from_le_bytes([bytes[22], bytes[23]])
}

#[test]
fn zero_channels_is_a_config_error_naming_the_field() {
    let sb = Sandbox::new();
    let out = sb.path("z");
    let o = mvn(&["gen-data", "--config", &sb.config(), "--out", s(&out), "--set", "data.channels=0"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[config]: data.channels"), "{err}");
    assert!(!out.join("dataset.manifest").exists());
}

#[test]
fn malformed_config_reports_the_line() {
    let sb = Sandbox::new();
    let bad = sb.path("bad.toml");
    std::fs::write(&bad, "version = 1\n[train]\nhidden = \"many\"\n").unwrap();
    let o = mvn(&["gen-data", "--config", s(&bad), "--out", s(&sb.path("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[config]:") && err.contains("line 3"), "{err}");
    std::fs::write(&bad, "version = 1\nbogus = 2\n").unwrap();
    let err = stderr(&mvn(&["gen-data", "--config", s(&bad)]));
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn simulate_writes_parseable_scenes() {
    let sb = Sandbox::new();
    let out = sb.path("sim");
    ok(&["simulate", "--config", &sb.config(), "--out", s(&out), "--set", "simulate.scenes=3"]);
    let mut files: Vec<PathBuf> = std::fs::read_dir(out.join("scenes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert_eq!(files.len(), 3);
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        let scene = RoomScene::parse(&text).unwrap();
        assert_eq!(scene.to_text(), text);
        assert_eq!(scene.mics.len(), 4);
    }
    let corrupted = std::fs::read_to_string(&files[0]).unwrap().replace("absorption=", "absorption=abc");
    let err = RoomScene::parse(&corrupted).unwrap_err().to_string();
    assert!(err.contains("absorption"), "{err}");
}

#[test]
fn simulate_can_render_wavs() {
    let sb = Sandbox::new();
    let out = sb.path("sim");
    ok(&[
        "simulate", "--config", &sb.config(), "--out", s(&out),
        "--set", "simulate.scenes=1", "--set", "simulate.mics=3", "--set", "simulate.render_wavs=true",
    ]);
    assert_eq!(hound_free_channels(&out.join("scenes/scene_00000_speech.wav")), 3);
    assert_eq!(hound_free_channels(&out.join("scenes/scene_00000_noise.wav")), 3);
}

#[test]
fn train_writes_checkpoint_and_curve() {
    let sb = Sandbox::new();
    let out = sb.train("t", &[]);
    let curve = parse_curve_csv(&std::fs::read_to_string(out.join("curve.csv")).unwrap()).unwrap();
    assert_eq!(curve.len(), 2);
    assert!(out.join("model.ckpt").exists() && out.join("state.ckpt").exists());
    let again = sb.train("t2", &[]);
    assert_eq!(
        std::fs::read(out.join("model.ckpt")).unwrap(),
        std::fs::read(again.join("model.ckpt")).unwrap()
    );
}

#[test]
fn resume_continues_the_uninterrupted_run() {
    let sb = Sandbox::new();
    let full = sb.train("full", &["--set", "train.epochs=3"]);
    let part = sb.train("part", &["--set", "train.epochs=1"]);
    let state = part.join("state.ckpt");
    let resumed = sb.train("resumed", &["--set", "train.epochs=3", "--resume", s(&state)]);
    let a = parse_curve_csv(&std::fs::read_to_string(full.join("curve.csv")).unwrap()).unwrap();
    let b = parse_curve_csv(&std::fs::read_to_string(resumed.join("curve.csv")).unwrap()).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(b.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert!((x.train_loss - y.train_loss).abs() < 1e-6 && (x.val_loss - y.val_loss).abs() < 1e-6);
    }
    assert_eq!(
        std::fs::read(full.join("model.ckpt")).unwrap(),
        std::fs::read(resumed.join("model.ckpt")).unwrap()
    );
}

#[test]
fn train_from_manifests() {
    let sb = Sandbox::new();
    let data = sb.path("data");
    ok(&["gen-data", "--config", &sb.config(), "--out", s(&data)]);
    let t = format!("train.train_manifest=\"{}\"", s(&data.join("dataset.manifest")));
    let v = format!("train.validation_manifest=\"{}\"", s(&data.join("validation.manifest")));
    let out = sb.train("m", &["--set", &t, "--set", &v]);
    assert!(out.join("model.ckpt").exists());
}

#[test]
fn missing_manifest_fails_before_training() {
    let sb = Sandbox::new();
    let out = sb.path("m");
    let o = mvn(&[
        "train", "--config", &sb.config(), "--out", s(&out),
        "--set", "train.train_manifest=\"/nonexistent/train.manifest\"",
        "--set", "train.validation_manifest=\"/nonexistent/val.manifest\"",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[io]:"), "{}", stderr(&o));
    assert!(!out.join("state.ckpt").exists() && !out.join("curve.csv").exists());
}

#[test]
fn eval_combines_four_models_into_one_csv() {
    let sb = Sandbox::new();
    let mut ckpts = Vec::new();
    for kind in ["mvn", "avg_input", "avg_output", "max_output"] {
        let out = sb.train(kind, &["--set", &format!("train.model=\"{kind}\"")]);
        ckpts.push(out.join("model.ckpt"));
    }
    let before: Vec<Vec<u8>> = ckpts.iter().map(|c| std::fs::read(c).unwrap()).collect();
    let out = sb.path("eval");
    let cfg = sb.config();
    let mut args = vec!["eval", "--config", &cfg, "--out", s(&out)];
    for c in &ckpts {
        args.push("--checkpoint");
        args.push(s(c));
    }
    ok(&args);
    let after: Vec<Vec<u8>> = ckpts.iter().map(|c| std::fs::read(c).unwrap()).collect();
    assert_eq!(before, after);

    let raw = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = raw.lines();
    assert_eq!(lines.next(), Some("model,scheme,K,run,accuracy"));
    // 4 models × 2 schemes × 3 K × 2 runs
    assert_eq!(lines.count(), 48);
    for kind in ["mvn", "avg_input", "avg_output", "max_output"] {
        assert!(raw.lines().any(|l| l.starts_with(&format!("{kind},"))));
    }
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("model,scheme,K,mean,std\n"));
    assert_eq!(agg.lines().count(), 1 + 24);

    let again = sb.path("eval2");
    let mut args2 = vec!["eval", "--config", &cfg, "--out", s(&again)];
    for c in &ckpts {
        args2.push("--checkpoint");
        args2.push(s(c));
    }
    ok(&args2);
    assert_eq!(raw, std::fs::read_to_string(again.join("report.csv")).unwrap());
}

#[test]
fn per_channel_checkpoint_evaluates_under_either_fusion() {
    let sb = Sandbox::new();
    let out = sb.train("pc", &["--set", "train.model=\"avg_output\""]);
    let ck = out.join("model.ckpt");
    let as_max = format!("{}:max_output", s(&ck));
    let e = sb.path("e");
    ok(&["eval", "--config", &sb.config(), "--out", s(&e), "--checkpoint", s(&ck), "--checkpoint", &as_max]);
    let raw = std::fs::read_to_string(e.join("report.csv")).unwrap();
    assert!(raw.contains("\nmax_output,") && raw.contains("\navg_output,"));
    let mvn_ck = sb.train("mvn", &[]).join("model.ckpt");
    let bad = format!("{}:max_output", s(&mvn_ck));
    let o = mvn(&["eval", "--config", &sb.config(), "--out", s(&e), "--checkpoint", &bad]);
    assert!(stderr(&o).starts_with("error[contract]:"), "{}", stderr(&o));
}

#[test]
fn single_model_report_has_no_model_column() {
    let sb = Sandbox::new();
    let ck = sb.train("mvn", &[]).join("model.ckpt");
    let e = sb.path("e");
    ok(&["eval", "--config", &sb.config(), "--out", s(&e), "--checkpoint", s(&ck), "--set", "eval.ks=[2]", "--set", "eval.runs=1", "--set", "eval.schemes=[\"increasing\"]"]);
    let raw = std::fs::read_to_string(e.join("report.csv")).unwrap();
    assert_eq!(raw.lines().count(), 2);
    assert!(raw.starts_with("scheme,K,run,accuracy\nincreasing,2,0,"));
}

#[test]
fn plot_draws_one_polyline_per_model() {
    let sb = Sandbox::new();
    let csv = sb.path("mvn.csv");
    std::fs::write(
        &csv,
        "scheme,K,run,accuracy\nincreasing,2,0,0.600000\nincreasing,2,1,0.620000\nincreasing,4,0,0.700000\nincreasing,8,0,0.800000\n",
    )
    .unwrap();
    let out = sb.path("plots");
    ok(&["plot", s(&csv), "--out", s(&out)]);
    let svg = std::fs::read_to_string(out.join("accuracy_increasing.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("well-formed SVG");
    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0].attribute("points").unwrap().split_whitespace().count(), 3);
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polygon")).count(), 1);
}

#[test]
fn plot_of_an_eval_report_parses() {
    let sb = Sandbox::new();
    let mut args_ck = Vec::new();
    for kind in ["mvn", "avg_input"] {
        args_ck.push(sb.train(kind, &["--set", &format!("train.model=\"{kind}\"")]).join("model.ckpt"));
    }
    let e = sb.path("e");
    let cfg = sb.config();
    ok(&["eval", "--config", &cfg, "--out", s(&e), "--checkpoint", s(&args_ck[0]), "--checkpoint", s(&args_ck[1])]);
    let plots = sb.path("p");
    ok(&["plot", s(&e.join("report.csv")), "--out", s(&plots)]);
    for scheme in ["decreasing", "increasing"] {
        let svg = std::fs::read_to_string(plots.join(format!("accuracy_{scheme}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 2);
    }
}

#[test]
fn plot_rejects_empty_csv_without_writing() {
    let sb = Sandbox::new();
    let csv = sb.path("empty.csv");
    std::fs::write(&csv, "").unwrap();
    let out = sb.path("plots");
    let o = mvn(&["plot", s(&csv), "--out", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error[parse]:"), "{}", stderr(&o));
    let written = std::fs::read_dir(&out).map(|d| d.count()).unwrap_or(0);
    assert_eq!(written, 0);
    std::fs::write(&csv, "scheme,K,run,accuracy\nincreasing,two,0,0.5\n").unwrap();
    assert!(!mvn(&["plot", s(&csv), "--out", s(&out)]).status.success());
}

#[test]
fn unknown_command_is_a_usage_error() {
    let o = mvn(&["frobnicate"]);
    assert!(!o.status.success());
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.toml", "full.toml", "room.toml"] {
        let sb = Sandbox::new();
        let cfg = root.join(name);
        let out = sb.path("out");
        ok(&[
            "gen-data",
            "--config",
            s(&cfg),
            "--out",
            s(&out),
            "--set",
            "data.mixtures=1",
            "--set",
            "data.validation_mixtures=0",
            "--set",
            "bank.synthetic_speech=2",
            "--set",
            "bank.synthetic_noise=2",
        ]);
        assert!(out.join("dataset.manifest").exists(), "{name}");
    }
}
