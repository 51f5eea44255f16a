use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lunet::data::sample_dir;
use lunet::model::{load_checkpoint, ModelGraph};

fn lunet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lunet")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(out: Output) -> String {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join(format!("run{}.ini", extra.len()));
    let text = format!(
        "# small run\n[model]\narch = lunet\ndepth = 2\nbase_channels = 4\n[data]\nwidth = 16\nheight = 16\n\
         object_min_size = 3\nobject_max_size = 8\nsamples = 4\n[train]\nbatch_size = 2\nepochs = 1\n{extra}\n"
    );
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn losses(ndjson: &str) -> Vec<f64> {
    ndjson
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["loss"].as_f64().unwrap())
        .collect()
}

#[test]
fn generate_train_eval_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = root.join("data");
    let cfg = write_config(root, "");
    ok(lunet(&["generate-data", "--config", &cfg, "--out", p(&data)]));
    for i in 0..4 {
        assert!(sample_dir(&data, i).join("phase_2.png").exists());
        assert!(sample_dir(&data, i).join("label.png").exists());
    }
    assert!(data.join("config.ini").exists());

    // zero epochs: a valid checkpoint and an empty log
    let untrained = root.join("untrained");
    ok(lunet(&["train", "--config", &cfg, "--epochs", "0", "--out", p(&untrained)]));
    assert_eq!(fs::read_to_string(untrained.join("train.ndjson")).unwrap(), "");
    let m: ModelGraph<f32> = load_checkpoint(untrained.join("model.ckpt")).unwrap();
    assert_eq!(m.config().base_channels, 4);

    let with_data = write_config(root, &format!("data = {}", data.display()));
    let trained = root.join("trained");
    ok(lunet(&["train", "--config", &with_data, "--seed", "3", "--out", p(&trained)]));
    // 4 samples, one held out, batches of 2 → 2 steps
    assert_eq!(losses(&fs::read_to_string(trained.join("train.ndjson")).unwrap()).len(), 2);

    let ckpt = format!("data = {}\ncheckpoint = {}", data.display(), trained.join("model.ckpt").display());
    let scored = root.join("scored");
    let text = ok(lunet(&["eval", "--config", &write_config(root, &ckpt), "--out", p(&scored)]));
    assert!(text.contains("Accuracy") && text.contains("Kappa"));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(scored.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["confusion"].as_array().unwrap().len(), 2);

    let predicted = root.join("predicted");
    ok(lunet(&["predict", "--config", &write_config(root, &ckpt), "--out", p(&predicted)]));
    for i in 0..4 {
        for f in ["phase_1.png", "prediction.png", "change.png"] {
            assert!(sample_dir(&predicted, i).join(f).exists(), "{f}");
        }
    }

    // eval from saved predictions: the labels themselves score perfectly
    let perfect = root.join("perfect");
    for i in 0..4 {
        fs::create_dir_all(sample_dir(&perfect, i)).unwrap();
        fs::copy(sample_dir(&data, i).join("label.png"), sample_dir(&perfect, i).join("prediction.png")).unwrap();
    }
    let preds = format!("data = {}\npredictions = {}", data.display(), perfect.display());
    let out = root.join("perfect_eval");
    ok(lunet(&["eval", "--config", &write_config(root, &preds), "--out", p(&out)]));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["accuracy"].as_f64().unwrap(), 1.0);
    assert_eq!(metrics["oe"].as_f64().unwrap(), 0.0);
}

#[test]
fn config_echo_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = write_config(root, "epochs = 2\nvalidation_fraction = 0.25");
    let first = root.join("first");
    ok(lunet(&["train", "--config", &cfg, "--seed", "7", "--lr", "0.003", "--out", p(&first)]));
    let echo = first.join("config.ini");
    let text = fs::read_to_string(&echo).unwrap();
    assert!(text.contains("seed = 7") && text.contains("learning_rate = 0.003"));
    let second = root.join("second");
    ok(lunet(&["train", "--config", p(&echo), "--out", p(&second)]));
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&first, "model.ckpt"), read(&second, "model.ckpt"));
    assert_eq!(read(&first, "config.ini"), read(&second, "config.ini"));
    let trace = |d: &Path| losses(&fs::read_to_string(d.join("train.ndjson")).unwrap());
    assert_eq!(trace(&first), trace(&second));
    assert!(!trace(&first).is_empty());
}

#[test]
fn gradcheck_passes() {
    let tmp = tempfile::tempdir().unwrap();
    for arch in ["unet", "lunet", "alunet"] {
        let out = tmp.path().join(arch);
        let text = ok(lunet(&["gradcheck", "--arch", arch, "--out", p(&out)]));
        assert!(text.lines().skip(1).all(|l| l.ends_with("pass")), "{text}");
        let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("gradcheck.json")).unwrap()).unwrap();
        assert!(!rows.as_array().unwrap().is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&lunet(&[])), 1);
    assert_eq!(code(&lunet(&["frobnicate"])), 1);
    assert_eq!(code(&lunet(&["train", "--arch", "resnet", "--out", "/tmp/x"])), 1);
    assert_eq!(code(&lunet(&["train", "--config", "/nonexistent/run.ini", "--out", "/tmp/x"])), 1);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "colour = blue");
    let out = lunet(&["train", "--config", &cfg, "--out", p(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    assert_eq!(code(&lunet(&["train"])), 1);
    assert_eq!(code(&lunet(&["eval", "--out", p(&tmp.path().join("e"))])), 1);
    assert_eq!(code(&lunet(&["--help"])), 0);
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "data = /nonexistent/data\ncheckpoint = /nonexistent/model.ckpt");
    let out = lunet(&["eval", "--config", &cfg, "--out", p(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
}
