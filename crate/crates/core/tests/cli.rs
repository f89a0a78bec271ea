use std::fs;
use std::path::Path;
use std::process::Command;

use degrade_mt::cli::{cmd_report, cmd_run, cmd_synth, summary_text, ExperimentConfig, ManifestRow};
use degrade_mt::train::RunRecord;

fn small_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.paths.out_dir = out.to_path_buf();
    cfg.data.synthetic_count = 14;
    cfg.data.synthetic_size = 56;
    cfg.data.val_images = 4;
    cfg.taskspace.val_count = 2;
    cfg.train.intervals = 3;
    cfg.train.iterations_per_interval = 4;
    cfg.train.batch_size = 4;
    cfg.train.samples_per_interval = 16;
    cfg.train.patch = 32;
    cfg.train.reference_iterations = 4;
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_degrade-mt"))
}

#[test]
fn synth_writes_pairs_and_a_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.taskspace.val_count = 8;
    let a = dir.path().join("a");
    let rows = cmd_synth(&cfg, &a).unwrap();
    assert_eq!(rows.len(), 32);
    let pngs: usize = cfg
        .taskspace
        .partition()
        .unwrap()
        .iter()
        .map(|s| fs::read_dir(a.join(&s.name)).unwrap().count())
        .sum();
    assert_eq!(pngs, 64);

    let specs = cfg.taskspace.partition().unwrap();
    let mut reader = csv::Reader::from_path(a.join("manifest.csv")).unwrap();
    let parsed: Vec<ManifestRow> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(parsed, rows);
    for r in &parsed {
        let s = &specs[r.task];
        assert!(s.contains(r.blur_sigma, r.noise_sigma), "{r:?} outside {s:?}");
        assert!((s.quality_range.0..=s.quality_range.1).contains(&r.jpeg_quality));
        assert!(a.join(&r.hr_file).exists() && a.join(&r.lr_file).exists());
    }

    let b = dir.path().join("b");
    cmd_synth(&cfg, &b).unwrap();
    assert_eq!(fs::read(a.join("manifest.csv")).unwrap(), fs::read(b.join("manifest.csv")).unwrap());
    let ts = fs::read_to_string(a.join("taskset.toml")).unwrap();
    assert_eq!(degrade_mt::taskspace::TaskSpaceConfig::from_toml(&ts).unwrap(), cfg.taskspace);
}

#[test]
fn run_produces_checkpoints_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let outcomes = cmd_run(&cfg).unwrap();
    assert_eq!(outcomes.len(), 1);
    let seed_dir = dir.path().join("seed_0");
    let ckpts: Vec<_> = fs::read_dir(&seed_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "ckpt"))
        .collect();
    assert_eq!(ckpts.len(), 3);
    let refs = degrade_mt::sr_model::load_checkpoint(&seed_dir.join("reference.ckpt")).unwrap();
    assert_eq!(refs.len(), 4);
    for regime in ["uniform", "rebalanced"] {
        let rec = RunRecord::read_csv(&seed_dir, regime).unwrap();
        assert_eq!(rec.rows.len(), 3 * 4);
        assert!(rec.rows.iter().all(|r| r.psnr_single.is_some() && r.distance.is_some()));
    }
    let summary: toml::Table = fs::read_to_string(dir.path().join("summary.txt")).unwrap().parse().unwrap();
    let seed0 = summary["seed_0"].as_table().unwrap();
    for task in ["mild", "blur", "noise", "severe"] {
        let t = seed0[task].as_table().unwrap();
        assert!(t["uniform_psnr"].as_float().is_some());
        assert!(t["rebalanced_psnr"].as_float().is_some());
    }
    assert!(!summary.contains_key("aggregate"));
    let config_copy = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&config_copy).unwrap(), cfg);
}

#[test]
fn several_seeds_add_an_aggregate_block() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.seed.count = 3;
    cfg.train.intervals = 1;
    let outcomes = cmd_run(&cfg).unwrap();
    let text = summary_text(&outcomes);
    let summary: toml::Table = text.parse().unwrap();
    for s in 0..3 {
        assert!(summary.contains_key(&format!("seed_{s}")));
    }
    let agg = summary["aggregate"].as_table().unwrap();
    assert_eq!(agg["seeds"].as_integer(), Some(3));
    assert!(agg["rebalanced_min_psnr_std"].as_float().unwrap() >= 0.0);
    assert_ne!(outcomes[0].references, outcomes[1].references);
}

#[test]
fn report_plots_every_task_and_interval() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.train.intervals = 8;
    cmd_run(&cfg).unwrap();
    let written = cmd_report(dir.path()).unwrap();
    assert_eq!(written.len(), 7);
    let seed_dir = dir.path().join("seed_0");
    for regime in ["uniform", "rebalanced"] {
        let svg = fs::read_to_string(seed_dir.join(format!("{regime}_weights.svg"))).unwrap();
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(lines.len(), 4);
        for l in &lines {
            let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(pts.split(' ').count(), 8);
        }
    }
    let rec = RunRecord::read_csv(&seed_dir, "uniform").unwrap();
    assert!(rec.rows.iter().all(|r| r.weight == 0.25));
    let uniform_svg = fs::read_to_string(seed_dir.join("uniform_weights.svg")).unwrap();
    for l in uniform_svg.lines().filter(|l| l.starts_with("<polyline")) {
        let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]), "flat trajectory expected: {pts}");
    }
    let table = fs::read_to_string(seed_dir.join("report.txt")).unwrap();
    assert!(table.contains("regime: uniform") && table.contains("regime: rebalanced"));
}

#[test]
fn report_names_the_corrupted_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_run(&cfg).unwrap();
    let path = RunRecord::rows_path(&dir.path().join("seed_0"), "rebalanced");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    let fields: Vec<&str> = lines[5].split(',').collect();
    let mut broken: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
    broken[8] = "many".into();
    lines[5] = broken.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = cmd_report(dir.path()).unwrap_err().to_string();
    assert!(err.contains("line 6"), "{err}");

    let out = bin().args(["report", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 6"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["report", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success(), "missing records must fail");

    let out = bin().args(["oracle", "--instances", "100"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("100 instances"));

    let out = bin().args(["gradcheck", "--probes", "4"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[paths]\nhr_dir = \"/definitely/not/here\"\n").unwrap();
    let out = bin().arg("synth").arg("--config").arg(&bad).output().unwrap();
    assert!(!out.status.success());

    let out = bin().env("DEGRADE_MT_THREADS", "zero").arg("oracle").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn binary_runs_a_small_config_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("ignored"));
    let cfg_path = dir.path().join("exp.toml");
    fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .env("DEGRADE_MT_THREADS", "1")
        .args(["run", "--seeds", "2", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("seed_1").join("rebalanced.ckpt").exists());
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("[aggregate]"));

    let out = bin().args(["synth", "--scale", "4", "--config"]).arg(&cfg_path).arg("--out").arg(dir.path().join("s4")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(dir.path().join("s4").join("manifest.csv")).unwrap();
    assert!(reader.deserialize::<ManifestRow>().all(|r| r.unwrap().scale == 4));
}

#[test]
fn unreadable_hr_directory_fails_synth() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    fs::create_dir(&hr).unwrap();
    fs::write(hr.join("broken.png"), b"not an image").unwrap();
    let mut cfg = small_config(&dir.path().join("out"));
    cfg.paths.hr_dir = Some(hr);
    assert!(cmd_synth(&cfg, &dir.path().join("out")).is_err());
}
