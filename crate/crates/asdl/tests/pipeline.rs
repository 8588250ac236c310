use std::path::Path;
use std::process::Command;

use asdl::pipeline::Pipeline;
use asdl::{AppError, ExperimentConfig};

fn tiny_toml(out: &Path) -> String {
    format!(
        r#"
name = "tiny"
seeds = [0]

[paths]
output = "{}"

[scenes]
n_train = 2
n_test = 1
train_duration_s = 3.0
test_duration_s = 2.0

[model]
conv_channels = [2, 2, 4, 4]
gru_hidden = 4
fc1_dim = 4

[train]
epochs = 2
batch_size = 2
"#,
        out.display()
    )
}

fn tiny(out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&tiny_toml(out)).unwrap()
}

#[test]
fn full_run_closes_manifests_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = Pipeline::new(tiny(&dir.path().join("a")), 2).unwrap();
    let runs = a.run_all().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].metrics.len(), 2);
    let out = dir.path().join("a");
    for f in [
        "scenes/split.json",
        "scenes/train000.json",
        "audio/train000.wav",
        "labels/gt/test000.csv",
        "labels/va/test000.csv",
        "vad/clean/train001.csv",
        "features/clean/GCC-PHAT/index.json",
        "features/clean/GCC-PHAT/norm.json",
        "targets/clean/Gt-Gt/s0/train000.json",
        "report.json",
        "report.md",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let run = out.join("runs/clean/GCC-PHAT_CRNN_Gt-Gt_s0");
    for f in ["model.ckpt", "curve.csv", "eval/metrics_2deg.json", "eval/pr_2deg.csv", "eval/pr_5deg.svg", "eval/predictions/test000.csv", "eval/summary.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert!(a.check_manifests().unwrap().is_empty());

    let b = Pipeline::new(tiny(&dir.path().join("b")), 1).unwrap();
    b.run_all().unwrap();
    let rb = dir.path().join("b/runs/clean/GCC-PHAT_CRNN_Gt-Gt_s0");
    for f in ["eval/metrics_2deg.json", "eval/metrics_5deg.json", "model.ckpt"] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(rb.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn up_to_date_stages_are_skipped_and_tampering_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path()), 1).unwrap();
    p.simulate().unwrap();
    p.features().unwrap();
    let feat = dir.path().join("features/clean/GCC-PHAT/train000_000.feat");
    let before = std::fs::metadata(&feat).unwrap().modified().unwrap();
    std::thread::sleep(std::time::Duration::from_millis(20));
    p.features().unwrap();
    assert_eq!(std::fs::metadata(&feat).unwrap().modified().unwrap(), before);

    let mut bytes = std::fs::read(&feat).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 0x40;
    std::fs::write(&feat, bytes).unwrap();
    let problems = p.check_manifests().unwrap();
    assert!(problems.iter().any(|m| m.contains("train000_000.feat")), "{problems:?}");
}

#[test]
fn missing_prerequisite_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(dir.path()), 1).unwrap();
    match p.train() {
        Err(AppError::Missing { stage, .. }) => assert_eq!(stage, "features"),
        other => panic!("{other:?}"),
    }
    p.simulate().unwrap();
    match p.labels() {
        Err(e @ AppError::Missing { .. }) => assert_eq!(e.exit_code(), 3),
        Ok(()) => {}
        Err(e) => panic!("{e}"),
    }
    match p.eval() {
        Err(AppError::Missing { stage, .. }) => assert_eq!(stage, "train"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn external_teacher_labels_are_ingested() {
    let dir = tempfile::tempdir().unwrap();
    let teacher = dir.path().join("teacher");
    std::fs::create_dir_all(&teacher).unwrap();
    let mut cfg = tiny(&dir.path().join("out"));
    cfg.paths.teacher_dir = Some(teacher.clone());
    cfg.supervision.name = "Asc-Gt".parse().unwrap();
    let p = Pipeline::new(cfg, 1).unwrap();
    p.simulate().unwrap();
    // The teacher sees every frame active at the image center.
    for name in ["train000", "train001"] {
        let mut s = String::from("frame,view,active,x_left_px,x_right_px,confidence\n");
        let gt = std::fs::read_to_string(dir.path().join(format!("out/labels/gt/{name}.csv"))).unwrap();
        let view: usize = gt.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        for f in 0..90 {
            s.push_str(&format!("{f},{view},1,1200,1248,0.9\n"));
        }
        std::fs::write(teacher.join(format!("{name}.csv")), s).unwrap();
    }
    p.labels().unwrap();
    let target: asdl_core::TrainingTarget =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/targets/clean/Asc-Gt/s0/train000.json")).unwrap()).unwrap();
    let active: Vec<_> = target.frames.iter().filter(|f| f.c_hat).collect();
    assert!(!active.is_empty());
    assert!(active.iter().all(|f| (f.x_hat.unwrap() - 0.5).abs() < 1e-12));
    assert!(p.check_manifests().unwrap().is_empty());
}

fn cli(args: &[&str], envs: &[(&str, &str)]) -> i32 {
    let mut c = Command::new(env!("CARGO_BIN_EXE_asdl"));
    c.args(args).env("RUST_LOG", "off").stdout(std::process::Stdio::null()).stderr(std::process::Stdio::null());
    for (k, v) in envs {
        c.env(k, v);
    }
    c.status().unwrap().code().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.toml");
    std::fs::write(&cfg_path, tiny_toml(&dir.path().join("out"))).unwrap();
    let c = cfg_path.to_str().unwrap();
    assert_eq!(cli(&["config", "--config", c], &[]), 0);
    assert_eq!(cli(&["config", "--config", c], &[("ASDL_TRAIN__EPOHCS", "3")]), 2);
    assert_eq!(cli(&["config", "--config", c], &[("ASDL_SUPERVISION__NAME", "nope")]), 2);
    assert_eq!(cli(&["train", "--config", c], &[]), 3);
    assert_eq!(cli(&["run", "--config", c, "--workers", "2"], &[]), 0);
    assert!(dir.path().join("out/report.md").exists());
    let diverge = dir.path().join("diverge");
    assert_eq!(cli(&["run", "--config", c, "--out", diverge.to_str().unwrap()], &[("ASDL_TRAIN__LR", "1e30")]), 4);
}
