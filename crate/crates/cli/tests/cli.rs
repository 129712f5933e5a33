//! Drives the `qfid` binary against a small synthetic IDX dataset.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qfid_cli::checkpoint::parse_metrics;
use qfid_core::data::{write_idx, LabeledImage, PIXELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const PER_CLASS: usize = 30;

/// Digit `label` is a bright vertical band at a label-dependent column, plus noise.
fn synthetic_images() -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = Vec::new();
    for _ in 0..PER_CLASS {
        for label in [0u8, 1, 5] {
            let band = 4 + 4 * label as usize;
            let pixels = (0..PIXELS)
                .map(|p| {
                    let col = p % 28;
                    if col.abs_diff(band) <= 2 {
                        rng.random_range(180..=255)
                    } else {
                        rng.random_range(0..40)
                    }
                })
                .collect();
            out.push(LabeledImage {
                index: out.len(),
                pixels,
                label,
            });
        }
    }
    out
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        fs::create_dir(&data).unwrap();
        let (images, labels) = write_idx(&synthetic_images());
        fs::write(data.join("images-idx3-ubyte"), images).unwrap();
        fs::write(data.join("labels-idx1-ubyte"), labels).unwrap();
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn data(&self) -> PathBuf {
        self.path("data")
    }

    /// Writes a config named `name`; `data_dir` of `None` leaves `data.dir` unset.
    fn config(&self, name: &str, classes: &[u8], data_dir: Option<&Path>, extra_train: &str) -> PathBuf {
        let dir_line = data_dir
            .map(|d| format!("dir = {:?}\n", d.display().to_string()))
            .unwrap_or_default();
        let classes: Vec<String> = classes.iter().map(u8::to_string).collect();
        let text = format!(
            r#"out_dir = {out:?}

[data]
{dir_line}classes = [{classes}]
test_fraction = 0.3

[model]
layers = ["single", "dual", "entangle"]
n_out = {n_out}
bond_dim = 2

[train]
learning_rate = 0.002
epochs = 2
seed = 3
{extra_train}
"#,
            out = self.path(&format!("runs/{name}")).display().to_string(),
            classes = classes.join(", "),
            n_out = if classes.len() == 2 { 4 } else { 6 },
        );
        let path = self.path(&format!("{name}.toml"));
        fs::write(&path, text).unwrap();
        path
    }
}

fn qfid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfid"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("QFID_DATA_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key:?} in\n{text}"))
        .trim()
        .to_string()
}

#[test]
fn train_eval_inspect_round_trip() {
    let fx = Fixture::new();
    let cfg = fx.config("bin", &[1, 5], Some(&fx.data()), "");
    let out = ok(qfid(&["train", "--config", s(&cfg)]));
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch")).count(), 2);

    let run = fx.path("runs/bin");
    let ckpt = run.join("checkpoint.json");
    let records = parse_metrics(&fs::read_to_string(run.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.test_accuracy.is_some()));

    let eval = ok(qfid(&["eval", "--checkpoint", s(&ckpt), "--split", "train"]));
    let acc: f64 = field(&eval, "accuracy:").parse().unwrap();
    assert!((acc - records[1].train_accuracy).abs() < 1e-4, "{acc} vs {records:?}");
    assert_eq!(field(&eval, "samples:"), "42");

    let eval = ok(qfid(&["eval", "--checkpoint", s(&ckpt)]));
    let acc: f64 = field(&eval, "accuracy:").parse().unwrap();
    assert!((acc - records[1].test_accuracy.unwrap()).abs() < 1e-4);

    let info = ok(qfid(&["inspect", "--checkpoint", s(&ckpt)]));
    assert_eq!(field(&info, "qubits:"), "2 data + 2 trained + 1 ancilla = 5");
    assert_eq!(field(&info, "tn tensors:"), "784");
    assert_eq!(field(&info, "quantum params:"), "8 per circuit, 8 total");
    assert_eq!(field(&info, "epochs completed:"), "2");
    assert_eq!(field(&info, "seed:"), "3");
}

#[test]
fn reruns_are_byte_identical() {
    let fx = Fixture::new();
    let cfg = fx.config("a", &[1, 5], Some(&fx.data()), "");
    let run = fx.path("runs/a");
    let read = |f: &str| fs::read(run.join(f)).unwrap();
    ok(qfid(&["train", "--config", s(&cfg)]));
    let first = (read("checkpoint.json"), read("metrics.csv"));
    ok(qfid(&["train", "--config", s(&cfg)]));
    assert!(first.0 == read("checkpoint.json"), "checkpoint differs");
    assert!(first.1 == read("metrics.csv"), "metrics differ");

    ok(qfid(&["train", "--config", s(&cfg), "--seed", "4"]));
    assert!(first.0 != read("checkpoint.json"));
}

#[test]
fn three_classes_give_square_confusion_and_probabilities() {
    let fx = Fixture::new();
    let cfg = fx.config("tri", &[0, 1, 5], Some(&fx.data()), "");
    ok(qfid(&["train", "--config", s(&cfg), "--epochs", "1"]));
    let ckpt = fx.path("runs/tri/checkpoint.json");

    let eval = ok(qfid(&["eval", "--checkpoint", s(&ckpt), "--split", "all"]));
    assert_eq!(field(&eval, "samples:"), "90");
    let rows: Vec<Vec<usize>> = eval
        .lines()
        .skip_while(|l| !l.starts_with("confusion"))
        .skip(2)
        .map(|l| l.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.len() == 3));
    assert_eq!(rows.iter().flatten().sum::<usize>(), 90);
    assert!(rows.iter().all(|r| r.iter().sum::<usize>() == 30));

    let pred = ok(qfid(&["predict", "--checkpoint", s(&ckpt), "--index", "4", "--data", s(&fx.data())]));
    assert_eq!(field(&pred, "true:"), "1");
    let probs: Vec<f64> = pred
        .lines()
        .filter(|l| l.starts_with("class"))
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 3);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    let predicted: u8 = field(&pred, "predicted:").parse().unwrap();
    assert!([0, 1, 5].contains(&predicted));

    let raw = fx.path("img.raw");
    fs::write(&raw, &synthetic_images()[4].pixels).unwrap();
    let from_file = ok(qfid(&["predict", "--checkpoint", s(&ckpt), "--image", s(&raw)]));
    assert_eq!(field(&from_file, "predicted:"), predicted.to_string());
}

#[test]
fn data_directory_from_environment() {
    let fx = Fixture::new();
    let cfg = fx.config("env", &[1, 5], None, "");
    let missing = qfid(&["train", "--config", s(&cfg), "--epochs", "1"]);
    assert_eq!(missing.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_qfid"))
        .args(["train", "--config", s(&cfg), "--epochs", "1"])
        .env("RUST_LOG", "warn")
        .env("QFID_DATA_DIR", fx.data())
        .output()
        .unwrap();
    ok(o);
    assert!(fx.path("runs/env/checkpoint.json").is_file());
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();

    let cfg = fx.config("nodata", &[1, 5], Some(&fx.path("nowhere")), "");
    assert_eq!(qfid(&["train", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(qfid(&["train", "--config", s(&fx.path("absent.toml"))]).status.code(), Some(2));
    let bad = fx.path("bad.toml");
    fs::write(&bad, "[model]\nn_out = 3\n").unwrap();
    assert_eq!(qfid(&["train", "--config", s(&bad)]).status.code(), Some(2));

    let broken = fx.path("broken");
    fs::create_dir(&broken).unwrap();
    let images = fs::read(fx.data().join("images-idx3-ubyte")).unwrap();
    fs::write(broken.join("images-idx3-ubyte"), &images[..images.len() - 100]).unwrap();
    fs::copy(fx.data().join("labels-idx1-ubyte"), broken.join("labels-idx1-ubyte")).unwrap();
    let cfg = fx.config("trunc", &[1, 5], Some(&broken), "");
    assert_eq!(qfid(&["train", "--config", s(&cfg)]).status.code(), Some(3));

    let cfg = fx.config("diverge", &[1, 5], Some(&fx.data()), "");
    let raw = fs::read_to_string(&cfg).unwrap().replace("bond_dim = 2", "bond_dim = 2\ncontraction = \"raw\"");
    fs::write(&cfg, raw).unwrap();
    let o = qfid(&["train", "--config", s(&cfg), "--learning-rate", "1e300"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = fx.config("ok", &[1, 5], Some(&fx.data()), "");
    ok(qfid(&["train", "--config", s(&cfg), "--epochs", "1"]));
    let ckpt = fx.path("runs/ok/checkpoint.json");
    let text = fs::read_to_string(&ckpt).unwrap();

    let corrupt = fx.path("corrupt.json");
    fs::write(&corrupt, &text[..text.len() / 2]).unwrap();
    assert_eq!(qfid(&["inspect", "--checkpoint", s(&corrupt)]).status.code(), Some(3));
    let future = fx.path("future.json");
    fs::write(&future, text.replacen("\"format_version\": 1", "\"format_version\": 99", 1)).unwrap();
    assert_eq!(qfid(&["inspect", "--checkpoint", s(&future)]).status.code(), Some(3));

    let o = qfid(&["predict", "--checkpoint", s(&ckpt), "--index", "100000"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("out of range"));
    let short = fx.path("short.raw");
    fs::write(&short, [0u8; 10]).unwrap();
    assert_eq!(qfid(&["predict", "--checkpoint", s(&ckpt), "--image", s(&short)]).status.code(), Some(3));
    assert_eq!(qfid(&["eval", "--checkpoint", s(&ckpt), "--split", "bogus"]).status.code(), Some(2));
}
