use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use augunlearn::augment::Scenario;
use augunlearn::experiment::{
    preset, read_csv_report, DatasetSpec, ExperimentConfig, RunManifest, MANIFEST_FILE,
    REPORT_COLUMNS, SEED_ENV,
};

fn cli(dir: &Path, args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_augunlearn"));
    cmd.current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove(SEED_ENV);
    if let Some(v) = seed_env {
        cmd.env(SEED_ENV, v);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = preset("desk").unwrap();
    cfg.name = "tiny".into();
    cfg.output_dir = PathBuf::from("out");
    cfg.dataset = DatasetSpec::Synthetic {
        classes: 3,
        train_per_class: 12,
        test_per_class: 6,
        image_shape: [3, 8, 8],
        noise: 0.1,
        max_shift: 1,
        bumps: 2,
        data_seed: 1,
    };
    cfg.baseline.epochs = 2;
    cfg.baseline.batch_size = 8;
    cfg.unlearn.epochs = 1;
    cfg.unlearn.batch_size = 8;
    cfg.policies = vec![Scenario::NoAug, Scenario::Default];
    cfg.seeds = vec![0, 1];
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn preset_writes_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["desk", "paper-cifar10", "paper-cifar100"] {
        let out = cli(dir.path(), &["preset", name, "--write", "p.toml"], None);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let mut back = ExperimentConfig::load(&dir.path().join("p.toml")).unwrap();
        back.output_dir = preset(name).unwrap().output_dir;
        let mut want = preset(name).unwrap();
        if let (DatasetSpec::Cifar10 { path: a, .. }, DatasetSpec::Cifar10 { path: b, .. })
        | (DatasetSpec::Cifar100 { path: a, .. }, DatasetSpec::Cifar100 { path: b, .. }) =
            (&mut want.dataset, &back.dataset)
        {
            *a = b.clone();
        }
        assert_eq!(back, want, "{name}");
    }
    assert_eq!(
        code(&cli(
            dir.path(),
            &["preset", "imagenet", "--write", "x.toml"],
            None
        )),
        1
    );
}

#[test]
fn config_errors_exit_1_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = tiny_config()
        .to_toml()
        .unwrap()
        .replace("epochs = 2", "epochs = \"two\"");
    fs::write(dir.path().join("bad.toml"), text).unwrap();
    let out = cli(dir.path(), &["run", "bad.toml"], None);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("baseline.epochs"));

    let text = tiny_config().to_toml().unwrap() + "\nunknown_knob = 1\n";
    fs::write(dir.path().join("extra.toml"), text).unwrap();
    assert_eq!(code(&cli(dir.path(), &["run", "extra.toml"], None)), 1);

    write_config(dir.path(), &tiny_config());
    assert_eq!(
        code(&cli(dir.path(), &["run", "tiny.toml"], Some("zero"))),
        1
    );
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(dir.path(), &["run", "nope.toml"], None)), 3);
    assert_eq!(
        code(&cli(dir.path(), &["verify", "nope/manifest.json"], None)),
        3
    );
    assert_eq!(
        code(&cli(
            dir.path(),
            &["report", "nope/manifest.json", "--format", "csv"],
            None
        )),
        3
    );
}

#[test]
fn run_report_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    write_config(dir.path(), &cfg);
    let out = cli(dir.path(), &["run", "tiny.toml"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let run_dir = dir.path().join("out");
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let manifest = RunManifest::load(&manifest_path).unwrap();
    assert_eq!(manifest.runs.len(), RunManifest::expected_rows(&cfg));
    assert_eq!(manifest.runs.len(), 2 * 2 * 4);
    assert_eq!(manifest.failures(), 0);

    // CSV: fixed header and one row per run, values within 1e-4 of the manifest
    let text = fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), REPORT_COLUMNS.join(","));
    let rows = read_csv_report(&run_dir.join("report.csv")).unwrap();
    assert_eq!(rows.len(), manifest.runs.len());
    for row in &rows {
        let run = manifest
            .runs
            .iter()
            .find(|r| {
                r.method.name() == row.method && r.policy.name() == row.policy && r.seed == row.seed
            })
            .unwrap();
        let m = run.metrics.as_ref().unwrap();
        for (a, b) in [
            (row.ua, m.ua),
            (row.ra, m.ra),
            (row.ta, m.ta),
            (row.mia, m.mia),
            (row.rte, m.rte),
        ] {
            assert!((a - b).abs() <= 1e-4, "{a} vs {b}");
        }
        if row.method == "retrain" {
            assert_eq!(row.ag, 0.0);
        }
    }

    fs::remove_file(run_dir.join("report.json")).unwrap();
    let out = cli(
        dir.path(),
        &["report", "out/manifest.json", "--format", "json"],
        None,
    );
    assert_eq!(code(&out), 0);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), manifest.runs.len());

    let out = cli(dir.path(), &["verify", "out/manifest.json"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    // tampered metrics are caught
    let mut bad = manifest.clone();
    bad.runs[1].metrics.as_mut().unwrap().ua += 0.5;
    bad.save(&manifest_path).unwrap();
    let out = cli(dir.path(), &["verify", "out/manifest.json"], None);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    manifest.save(&manifest_path).unwrap();

    // a damaged checkpoint is caught
    let ckpt = run_dir.join(manifest.runs[2].checkpoint.as_ref().unwrap());
    let bytes = fs::read(&ckpt).unwrap();
    fs::write(&ckpt, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(
        code(&cli(dir.path(), &["verify", "out/manifest.json"], None)),
        2
    );
}

#[test]
fn seed_override_replaces_configured_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config();
    cfg.policies = vec![Scenario::NoAug];
    write_config(dir.path(), &cfg);
    let out = cli(dir.path(), &["run", "tiny.toml"], Some("7"));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = RunManifest::load(&dir.path().join("out").join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.config.seeds, vec![7]);
    assert!(manifest.runs.iter().all(|r| r.seed == 7));
    assert_eq!(manifest.runs.len(), 4);
}
