use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn boostdec(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boostdec"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("BOOSTDEC_SEED")
        .env_remove("BOOSTDEC_BUDGET")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value of `key` in the last summary line.
fn field(o: &Output, key: &str) -> String {
    let out = stdout(o);
    let line = out.lines().last().unwrap_or_default().to_string();
    line.split(' ')
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} in {line:?}"))
}

fn toy_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"
schema_version = 1
seed = 3

[code]
path = "{code}"

[decoder]
rule = "min_sum"
quantizer = {{ mode = "uniform", step = 0.5, max_magnitude = 7.5 }}

[plan]
base_iterations = 5
base_mode = "spatial"
post = [{{ iterations = 4, mode = "dynamic" }}]

[channel]
kind = "awgn"
ebno_db = 2.0

[train]
schedule = {{ kind = "block_wise", delta1 = 2, delta2 = 1, epochs_per_stage = 2, batch_size = 32 }}
loss = {{ kind = "fer" }}
base_ebno_db = [1.5, 2.5]
frames_per_epoch = 64

[collect]
target = 66
beta = 0.5
per_source = 2

[fer]
ebno_db = [2.0, 3.0]
stop_errors = 20
chunk_frames = 128

[paths]
weights_in = "base.json"
weights_out = "out.json"
dataset_out = "uc.bin"
dataset_in = "uc.bin"
metrics = "metrics.csv"
fer_csv = "fer.csv"
{extra}
"#,
        code = data("mackay_96_33_964.alist").display()
    );
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn missing_code_file_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("mackay_96_33_964", "absent");
    std::fs::write(&cfg, text).unwrap();
    let o = boostdec(&cfg, &["fer"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
}

#[test]
fn complexity_matches_reference_totals() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/wimax_boost.toml");
    let o = boostdec(&cfg, &["complexity"]);
    ok(&o);
    assert_eq!(field(&o, "total"), "676800");
    assert_eq!(field(&o, "weight_memory"), "130");
    assert_eq!(field(&o, "additions"), "4224");
    assert_eq!(field(&o, "comparisons"), "2256");
}

#[test]
fn fer_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    std::fs::remove_file(dir.path().join("base.json")).ok();
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("weights_in = \"base.json\"\n", "");
    std::fs::write(&cfg, text).unwrap();
    ok(&boostdec(&cfg, &["fer"]));
    let a = std::fs::read(dir.path().join("fer.csv")).unwrap();
    ok(&boostdec(&cfg, &["fer", "--workers", "1"]));
    let b = std::fs::read(dir.path().join("fer.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 3);
}

#[test]
fn exhausted_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("ebno_db = 2.0", "ebno_db = 40.0")
        .replace("weights_in = \"base.json\"\n", "");
    std::fs::write(&cfg, text).unwrap();
    let o = boostdec(&cfg, &["collect", "--budget", "512"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(field(&o, "budget_exceeded"), "true");
    assert!(dir.path().join("uc.bin").exists());
}

#[test]
fn overrides_reach_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    let o = Command::new(env!("CARGO_BIN_EXE_boostdec"))
        .args(["--config", cfg.to_str().unwrap(), "show-config", "--budget", "77"])
        .env("BOOSTDEC_SEED", "99")
        .output()
        .unwrap();
    ok(&o);
    let text = stdout(&o);
    assert!(text.contains("seed = 99"), "{text}");
    assert!(text.contains("budget = 77"), "{text}");
}

#[test]
fn boosting_workflow_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    let base = dir.path().join("base.json");
    // train-base writes to weights_out; rename it into the base slot
    let o = boostdec(&cfg, &["train-base"]);
    ok(&o);
    assert_eq!(field(&o, "params"), "10");
    std::fs::rename(dir.path().join("out.json"), &base).unwrap();
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,stage,lr,mean_loss,test_fer"));

    let o = boostdec(&cfg, &["collect"]);
    ok(&o);
    assert_eq!(field(&o, "frames"), "66");
    assert_eq!(field(&o, "test"), "6");
    let first = std::fs::read(dir.path().join("uc.bin")).unwrap();
    ok(&boostdec(&cfg, &["collect"]));
    assert_eq!(std::fs::read(dir.path().join("uc.bin")).unwrap(), first);

    let o = boostdec(&cfg, &["train-post"]);
    ok(&o);
    let before: f64 = field(&o, "test_fer_initial").parse().unwrap();
    let after: f64 = field(&o, "test_fer").parse().unwrap();
    assert!((0.0..=1.0).contains(&before) && (0.0..=1.0).contains(&after));
    assert_eq!(field(&o, "params"), "22");

    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"base.json\"", "\"out.json\"");
    std::fs::write(&cfg, text).unwrap();
    let o = boostdec(&cfg, &["test-fer"]);
    ok(&o);
    assert_eq!(field(&o, "test_fer").parse::<f64>().unwrap(), after);
    assert_eq!(field(&o, "iterations"), "9");

    let o = boostdec(&cfg, &["histogram"]);
    ok(&o);
    assert_eq!(field(&o, "frames"), "66");
}

#[test]
fn augment_and_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("weights_in = \"base.json\"\n", "")
        .replace("target = 66", "target = 3");
    std::fs::write(&cfg, &text).unwrap();
    ok(&boostdec(&cfg, &["collect"]));
    let text = text.replace("dataset_out = \"uc.bin\"", "dataset_out = \"aug.bin\"");
    std::fs::write(&cfg, &text).unwrap();
    let o = boostdec(&cfg, &["augment"]);
    ok(&o);
    assert_eq!(field(&o, "frames"), "6");

    let src = dir.path().join("src.json");
    std::fs::write(&src, "").unwrap();
    let text = text + "source_weights = \"src.json\"\n";
    std::fs::write(&cfg, &text).unwrap();
    // a non-weight file is rejected
    assert_ne!(boostdec(&cfg, &["transfer"]).status.code(), Some(0));
    ok(&boostdec(&cfg, &["train-base"]));
    std::fs::rename(dir.path().join("out.json"), &src).unwrap();
    let o = boostdec(&cfg, &["transfer"]);
    ok(&o);
    assert_eq!(field(&o, "params"), "22");
}
