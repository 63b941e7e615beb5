//! Run and sweep artifacts, determinism, and variant equivalences.

use std::fs;

use epo_lab::envs::{tabular_preset, Environment};
use epo_lab::epo::{train, PenaltyConfig, Variant};
use epo_lab::harness::{run_experiment, sweep_cost_limit, ExperimentConfig, CONFIG_KEYS};
use epo_lab::metrics::{read_csv, CSV_HEADER};

fn small(dir: &std::path::Path, extra: &[&str]) -> ExperimentConfig {
    let mut overrides: Vec<String> = vec![
        "epochs=3".into(),
        "steps_per_epoch=200".into(),
        "hidden=8".into(),
        "inner_iters=5".into(),
        format!("out_dir={}", dir.display()),
    ];
    overrides.extend(extra.iter().map(|s| s.to_string()));
    ExperimentConfig::from_text("env = chain3\nseeds = 1, 2\n", &overrides).unwrap()
}

#[test]
fn run_writes_one_csv_per_seed_and_an_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &[]);
    let art = run_experiment(&cfg).unwrap();
    assert_eq!(art.csv_paths.len(), 2);
    assert!(art.csv_paths[0].ends_with("chain3_epo_smooth_seed1.csv"));
    for p in &art.csv_paths {
        let rows = read_csv(p).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(rows.iter().all(|r| r.cost_limit == 30.0));
    }
    let first_line = fs::read_to_string(&art.csv_paths[0]).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(first_line, CSV_HEADER.join(","));

    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(&art.config_path).unwrap()).unwrap();
    for key in CONFIG_KEYS.iter().filter(|k| **k != "seed") {
        assert!(echo.get(*key).is_some(), "run.json lacks {key}");
    }
    assert_eq!(echo["epochs"], 3);
    assert_eq!(echo["variant"], "epo_smooth");
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = run_experiment(&small(a.path(), &["variant=ppo_lagrangian"])).unwrap().csv_paths;
    let pb = run_experiment(&small(b.path(), &["variant=ppo_lagrangian"])).unwrap().csv_paths;
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    assert_ne!(fs::read(&pa[0]).unwrap(), fs::read(&pa[1]).unwrap());
}

#[test]
fn zero_epochs_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let art = run_experiment(&small(dir.path(), &["epochs=0"])).unwrap();
    let text = fs::read_to_string(&art.csv_paths[0]).unwrap();
    assert_eq!(text.trim_end(), CSV_HEADER.join(","));
    assert!(read_csv(&art.csv_paths[0]).unwrap().is_empty());
}

#[test]
fn sweep_writes_suffixed_files_per_limit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &["seeds=4", "epochs=1"]);
    let arts = sweep_cost_limit(&cfg, &[10.0, 25.0]).unwrap();
    assert_eq!(arts.len(), 2);
    assert!(dir.path().join("run_d10.json").exists());
    assert!(dir.path().join("chain3_epo_smooth_seed4_d25.csv").exists());
    assert_eq!(read_csv(&arts[1].csv_paths[0]).unwrap()[0].cost_limit, 25.0);
    assert!(sweep_cost_limit(&cfg, &[]).is_err());
    assert!(sweep_cost_limit(&cfg, &[-1.0]).is_err());
}

#[test]
fn relu_matches_unconstrained_without_costs() {
    let spec = tabular_preset("chain3").unwrap().scaled_costs(0.0);
    let base = PenaltyConfig {
        epochs: 4,
        steps_per_epoch: 200,
        hidden: vec![8],
        inner_iters: 6,
        gamma: spec.gamma,
        cost_limit: 1.0,
        ..PenaltyConfig::default()
    };
    let run = |variant| {
        let mut env = Environment::tabular(spec.clone()).unwrap();
        train(&mut env, &PenaltyConfig { variant, ..base.clone() }, 5).unwrap()
    };
    let relu = run(Variant::EpoRelu);
    let free = run(Variant::PpoUnconstrained);
    assert_eq!(relu.policy.flat(), free.policy.flat());
    for (a, b) in relu.metrics.iter().zip(&free.metrics) {
        assert_eq!(a.loss_pi.to_bits(), b.loss_pi.to_bits());
        assert_eq!(a.mean_return.to_bits(), b.mean_return.to_bits());
    }
}
