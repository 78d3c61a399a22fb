use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ceb_core::evalkit::MixtureSpec;
use ceb_core::info::DiscreteJoint;
use ceb_core::objectives::{Architecture, ObjectiveKind};
use ceb_lab::{Budget, DatasetConfig, ExperimentConfig, Manifest, ObjectiveConfig};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ceb-lab")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        vec![ObjectiveConfig::new(ObjectiveKind::Vceb), ObjectiveConfig::new(ObjectiveKind::Determ)],
        vec![0.0, 2.0],
        vec![0],
    );
    cfg.dataset = DatasetConfig {
        mixture: MixtureSpec {
            classes: 3,
            per_class: 20,
            dim: 3,
            separation: 3.0,
            label_noise: 0.0,
        },
        test_per_class: 10,
        seed: 2,
    };
    cfg.architecture = Architecture {
        hidden: vec![8],
        latent_dim: 2,
        classifier_hidden: vec![4],
        mixture_components: 2,
        ..Architecture::default()
    };
    cfg.training = Budget {
        steps: 30,
        batch_size: 10,
        learning_rate: 1e-2,
        eval_every: 10,
    };
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    path
}

#[test]
fn tabular_writes_plane_csv() {
    let dir = tempfile::tempdir().unwrap();
    let joint = dir.path().join("j.csv");
    DiscreteJoint::<f64>::uniform_deterministic(8, 4)
        .unwrap()
        .write_csv(fs::File::create(&joint).unwrap())
        .unwrap();
    let out = dir.path().join("plane.csv");
    let o = lab(&[
        "tabular", "--joint", s(&joint), "--objective", "ceb", "--rho-min", "-2", "--rho-max", "5", "--rho-step",
        "0.5", "--restarts", "3", "--seed", "1", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rho,i_xz,i_yz,residual,converged"));
    assert_eq!(lines.count(), 15);
}

#[test]
fn plane_with_empty_input_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "rho,i_xz,i_yz,residual,converged\n").unwrap();
    let out = dir.path().join("out");
    let o = lab(&["plane", "--input", s(&input), "--units", "bits", "--out-dir", s(&out)]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out.join("plane.csv")).unwrap(), "rho,i_xz,i_yz,residual,converged\n");
    assert!(fs::read_to_string(out.join("plane.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn training_commands_require_a_seed() {
    assert!(!lab(&["train", "--out", "/nonexistent/x"]).status.success());
    assert!(!lab(&["memorize"]).status.success());
    assert!(!lab(&["sweep", "--config", "c.json"]).status.success());
    assert!(!lab(&["attack", "--model", "/nonexistent/run"]).status.success());
}

#[test]
fn sweep_is_bit_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let cfg = write_config(dir.path(), &tiny_config(&out));
        let o = lab(&["sweep", "--config", s(&cfg), "--seed", "4", "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    let ma = Manifest::load(&a.join("manifest.json")).unwrap();
    let mb = Manifest::load(&b.join("manifest.json")).unwrap();
    assert_eq!(ma.runs.len(), 3);
    assert!(ma.runs.iter().all(|r| r.seed == 4));
    assert!(ma.missing_artifacts(&a).is_empty());
    for r in &ma.runs {
        for f in ["trace.csv", "model.bin", "metrics.json"] {
            let p = Path::new(&r.id).join(f);
            assert_eq!(fs::read(a.join(&p)).unwrap(), fs::read(b.join(&p)).unwrap(), "{}", p.display());
        }
    }
    assert_eq!(
        ma.runs.iter().map(|r| (&r.id, r.metrics)).collect::<Vec<_>>(),
        mb.runs.iter().map(|r| (&r.id, r.metrics)).collect::<Vec<_>>()
    );
}

#[test]
fn sweep_with_a_failed_run_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    fs::create_dir_all(&out).unwrap();
    // a plain file where one run directory should go
    fs::write(out.join("determ_seed0"), b"").unwrap();
    let cfg = write_config(dir.path(), &tiny_config(&out));
    let o = lab(&["sweep", "--config", s(&cfg), "--seed", "0"]);
    assert!(!o.status.success());
    let m = Manifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.failures().count(), 1);
    assert_eq!(m.runs.len(), 3);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut json = serde_json::to_value(tiny_config(dir.path())).unwrap();
    json["unexpected"] = serde_json::json!(1);
    fs::write(&path, json.to_string()).unwrap();
    let o = lab(&["sweep", "--config", s(&path), "--seed", "0"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn trained_run_feeds_attack_ood_and_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let spec = dir.path().join("mixture.json");
    fs::write(
        &spec,
        r#"{"classes": 3, "per_class": 20, "dim": 3, "separation": 3.0, "label_noise": 0.0}"#,
    )
    .unwrap();
    let o = lab(&[
        "train", "--seed", "1", "--objective", "vceb", "--rho", "0", "--dataset", s(&spec), "--test-per-class", "10",
        "--steps", "40", "--batch-size", "10", "--learning-rate", "0.01", "--eval-every", "20", "--latent-dim", "2",
        "--out", s(&run),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run.json", "trace.csv", "metrics.json", "model.json", "model.bin"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,loss,train_acc,test_acc,R,Re_X,R_X,consistency\n"));

    let curve = dir.path().join("curve.csv");
    let o = lab(&[
        "attack", "--model", s(&run.join("model")), "--norm", "linf", "--eps-grid", "0:0.5:3", "--steps", "3",
        "--target", "1", "--out", s(&curve),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().next(), Some("epsilon,accuracy,success_rate"));
    assert_eq!(text.lines().count(), 4);

    let scores = dir.path().join("scores.csv");
    let metrics = dir.path().join("detection.json");
    let o = lab(&["ood", "--model", s(&run), "--seed", "3", "--out", s(&scores), "--metrics", s(&metrics)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(&metrics).unwrap()).unwrap();
    assert!(m["H"]["auroc"].is_number() && m["R"]["auroc"].is_number());
    assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), 61);

    let cal = dir.path().join("cal.csv");
    let o = lab(&["calibrate", "--model", s(&run), "--out", s(&cal)]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&cal).unwrap().lines().count(), 21);
}

#[test]
fn memorize_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mem.json");
    fs::write(
        &cfg,
        r#"{"examples": 30, "classes": 3, "dim": 2,
            "architecture": {"hidden": [6], "latent_dim": 2, "classifier_hidden": [4],
                             "activation": "elu", "covariance": "diagonal", "mixture_components": 2},
            "training": {"steps": 20, "batch_size": 10, "learning_rate": 0.01, "eval_every": 10}}"#,
    )
    .unwrap();
    let out = dir.path().join("report.json");
    let o = lab(&["memorize", "--config", s(&cfg), "--seed", "0", "--seed", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["runs"].as_array().unwrap().len(), 4);
}

#[test]
fn readme_sweep_config_parses() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```json\n").unwrap() + 8;
    let end = start + readme[start..].find("```").unwrap();
    let cfg = ExperimentConfig::from_json(&readme[start..end]).unwrap();
    assert_eq!(cfg.runs().len(), 4);
}
