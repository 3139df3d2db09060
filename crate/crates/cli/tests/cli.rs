use std::path::{Path, PathBuf};

use vpdense_cli::run;
use vpdense_core::io::{read_depth, write_depth};
use vpdense_core::metrics::DepthMap;

fn bundled() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/synth3")
        .to_str()
        .unwrap()
        .to_string()
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["vpdense"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json_lines(text: &str) -> Vec<serde_json::Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_2() {
    let (code, _, err) = cli(&["frobnicate"]);
    assert_eq!(code, 2);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn help_exits_0() {
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("gen-gt") && out.contains("selftest"));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = cli(&["--config", p(&dir.path().join("nope.toml")), "selftest", "--only", "8"]);
    assert_eq!(code, 2);
    assert!(err.contains("nope.toml"), "{err}");
}

#[test]
fn invalid_config_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[gt]\nalpha_small = -1.0\n").unwrap();
    assert_eq!(cli(&["--config", p(&cfg), "selftest", "--only", "8"]).0, 2);
    std::fs::write(&cfg, "[gt]\nbogus = 1\n").unwrap();
    assert_eq!(cli(&["--config", p(&cfg), "selftest", "--only", "8"]).0, 2);
    assert_eq!(cli(&["--set", "densify.max_iters", "selftest", "--only", "8"]).0, 2);
    assert_eq!(cli(&["--set", "densify.max_iters=0", "selftest", "--only", "8"]).0, 2);
}

#[test]
fn set_overrides_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[densify]\nmax_iters = 300\nomega_edge = 3.0\n").unwrap();
    let c = vpdense_cli::load_config(Some(&cfg), &["densify.max_iters=12".into()]).unwrap();
    assert_eq!(c.densify.max_iters, 12);
    assert_eq!(c.densify.omega_edge, 3.0);
    assert_eq!(c.gt.alpha_small, 1.2);
}

#[test]
fn missing_frame_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = cli(&["--data", p(dir.path()), "segment", "000123"]);
    assert_eq!(code, 1);
    assert!(err.contains("000123"), "{err}");
}

#[test]
fn eval_on_identical_dirs_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = DepthMap::empty(20, 10);
    for (k, d) in m.data.iter_mut().enumerate() {
        if k % 3 != 0 {
            *d = 5.0 + 0.01 * k as f64;
        }
    }
    let a = dir.path().join("a");
    write_depth(&a.join("x_1.png"), &m).unwrap();
    write_depth(&a.join("x_2.png"), &m).unwrap();
    let (code, out, _) = cli(&["eval", "--pred", p(&a), "--gt", p(&a)]);
    assert_eq!(code, 0);
    let lines = json_lines(&out);
    let total = &lines[lines.len() - 2];
    assert_eq!(total["name"], "rmse");
    assert_eq!(total["value"], 0.0);
    assert_eq!(total["support"], 2 * m.data.iter().filter(|d| **d > 0.0).count());
    let (code, out, _) = cli(&["eval", "--pred", p(&a), "--gt", p(&a), "--foreground"]);
    assert_eq!(code, 0);
    assert_eq!(json_lines(&out)[2]["name"], "rmse_foreground");
}

#[test]
fn eval_pools_squared_errors_and_counts_missing_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    let mut g = DepthMap::empty(4, 1);
    g.data = vec![10.0, 10.0, 10.0, 0.0];
    let mut q = g.clone();
    q.data = vec![11.0, 10.0, 10.0, 3.0];
    write_depth(&gt.join("a.png"), &g).unwrap();
    write_depth(&pred.join("a.png"), &q).unwrap();
    let mut g2 = DepthMap::empty(4, 1);
    g2.data = vec![20.0, 0.0, 0.0, 0.0];
    let mut q2 = g2.clone();
    q2.data = vec![22.0, 0.0, 0.0, 0.0];
    write_depth(&gt.join("b.png"), &g2).unwrap();
    write_depth(&pred.join("b.png"), &q2).unwrap();
    write_depth(&gt.join("c.png"), &g2).unwrap();
    let (code, out, err) = cli(&["eval", "--pred", p(&pred), "--gt", p(&gt)]);
    assert_eq!(code, 0);
    assert!(err.contains("1 ground-truth"));
    let lines = json_lines(&out);
    // (1 + 0 + 0 + 4) / 4
    let want = (5.0f64 / 4.0).sqrt();
    assert!((lines[2]["value"].as_f64().unwrap() - want).abs() < 1e-12);
    assert_eq!(lines[3]["missing_pred"], 1);
    // per-object mean of the two files: (sqrt(1/3) + 2) / 2
    let (code, out, _) = cli(&["--set", "eval.per_object=true", "eval", "--pred", p(&pred), "--gt", p(&gt), "--foreground"]);
    assert_eq!(code, 0);
    let total = &json_lines(&out)[2];
    assert_eq!(total["name"], "rmse_foreground_per_object");
    assert!((total["value"].as_f64().unwrap() - ((1.0f64 / 3.0).sqrt() + 2.0) / 2.0).abs() < 1e-12);
}

#[test]
fn eval_without_overlap_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    let mut g = DepthMap::empty(2, 1);
    g.data[0] = 4.0;
    write_depth(&gt.join("a.png"), &g).unwrap();
    assert_eq!(cli(&["eval", "--pred", p(&pred), "--gt", p(&gt)]).0, 1);
}

#[test]
fn gen_gt_on_the_bundled_split_writes_a_bijective_depth_file_per_object() {
    let data = bundled();
    let out = tempfile::tempdir().unwrap();
    let (code, stdout, err) = cli(&["--data", &data, "gen-gt", "demo", "--out", p(out.path())]);
    assert_eq!(code, 0, "{err}");
    let summary = &json_lines(&stdout)[0];
    assert_eq!(summary["frames"], 3);
    assert_eq!(summary["failed"], 0);
    let manifest = json_lines(&std::fs::read_to_string(out.path().join("manifest.jsonl")).unwrap());
    assert_eq!(manifest.len() as u64, summary["objects"].as_u64().unwrap());
    let frames: std::collections::BTreeSet<&str> = manifest.iter().map(|r| r["frame"].as_str().unwrap()).collect();
    assert_eq!(frames.len(), 3);
    for r in &manifest {
        let file: PathBuf = out.path().join(format!("{}_{}.png", r["frame"].as_str().unwrap(), r["instance"]));
        let map = read_depth(&file).unwrap();
        let valid = map.data.iter().filter(|d| **d > 0.0).count();
        assert_eq!(valid as u64, r["mask_pixels"].as_u64().unwrap(), "{}", file.display());
        assert!(r["alpha_used"].as_f64().unwrap() >= 1.05);
        assert!(r.get("retries").is_some());
    }
    // stats from the manifest agrees with its own arithmetic
    let (code, stdout, _) = cli(&["--data", &data, "stats", "demo", "--manifest", p(&out.path().join("manifest.jsonl"))]);
    assert_eq!(code, 0);
    let lines = json_lines(&stdout);
    let vp: u64 = manifest.iter().map(|r| r["mask_pixels"].as_u64().unwrap()).sum();
    let fs: u64 = manifest.iter().map(|r| r["full_shape_points"].as_u64().unwrap()).sum();
    assert_eq!(lines[1]["vp_pixels"], vp);
    assert_eq!(lines[2]["name"], "vp_point_ratio");
    assert!((lines[2]["value"].as_f64().unwrap() - vp as f64 / fs as f64).abs() < 1e-12);
    assert_eq!(lines[0]["objects"].as_u64().unwrap(), manifest.len() as u64);
}

#[test]
fn segment_reports_every_object_with_iou() {
    let (code, out, err) = cli(&["--data", &bundled(), "segment", "000000"]);
    assert_eq!(code, 0, "{err}");
    let lines = json_lines(&out);
    assert!(!lines.is_empty());
    for l in &lines {
        let n = l["points"].as_u64().unwrap() as usize;
        assert_eq!(l["result"]["scores"].as_array().unwrap().len(), n);
        assert_eq!(l["result"]["foreground"].as_array().unwrap().len(), n);
        if n > 0 {
            assert!(l["mean_iou"].as_f64().is_some());
        }
    }
}

#[test]
fn densify_writes_one_depth_file_per_densified_object() {
    let out = tempfile::tempdir().unwrap();
    let (code, stdout, err) = cli(&["--data", &bundled(), "--set", "densify.max_iters=20", "densify", "000001", "--out", p(out.path())]);
    assert_eq!(code, 0, "{err}");
    let records = json_lines(&stdout);
    let manifest = std::fs::read_to_string(out.path().join("000001.jsonl")).unwrap();
    assert_eq!(json_lines(&manifest), records);
    for r in records.iter().filter(|r| r["skipped"] == false) {
        let map = read_depth(&out.path().join(format!("000001_{}.png", r["instance"]))).unwrap();
        assert_eq!(map.data.iter().filter(|d| **d > 0.0).count() as u64, r["mask_pixels"].as_u64().unwrap());
        assert!(r["iterations"].as_u64().unwrap() <= 60);
    }
}

#[test]
fn synth_is_seeded() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, seed) in dirs.iter().zip(["3", "3", "4"]) {
        assert_eq!(cli(&["--data", p(d.path()), "--seed", seed, "synth", "s", "--frames", "1"]).0, 0);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("velodyne/000000.bin")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let data = bundled();
    let outs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (o, t) in outs.iter().zip(["1", "3"]) {
        assert_eq!(cli(&["--data", &data, "--threads", t, "gen-gt", "demo", "--out", p(o.path())]).0, 0);
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&outs[0], "manifest.jsonl"), read(&outs[1], "manifest.jsonl"));
    assert_eq!(read(&outs[0], "000002_1.png"), read(&outs[1], "000002_1.png"));
}

#[test]
fn selftest_runs_selected_checks() {
    let (code, out, _) = cli(&["selftest", "--only", "2,8"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().all(|l| l.starts_with("[PASS]")));
    assert_eq!(cli(&["selftest", "--only", "9"]).0, 2);
}
