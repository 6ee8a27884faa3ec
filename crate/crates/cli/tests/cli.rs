use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flare_cli::{BatchReport, EvalReport, SynthMeta};
use flare_core::io::{load_image, save_image};
use flare_core::scenes::{night_scene, texture_scene};

fn flare(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flare")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

/// A fast solver config for small frames.
fn quick_config(dir: &Path) -> PathBuf {
    let path = dir.join("quick.json");
    std::fs::write(
        &path,
        r#"{"solver": {"iterations": 80, "mse_only_iters": 40, "kernel_size": 9}, "optics": {"kernel_size": 9, "halo_sigma": 3.0}}"#,
    )
    .unwrap();
    path
}

fn write_clean(dir: &Path, n: usize) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n)
        .map(|i| {
            let p = dir.join(format!("clean{i}.png"));
            save_image(&night_scene(i as u64, 48, 48), &p).unwrap();
            p
        })
        .collect()
}

#[test]
fn synth_writes_triplets_with_gamma_in_range() {
    let tmp = tempfile::tempdir().unwrap();
    write_clean(&tmp.path().join("clean"), 3);
    let o = flare(&["synth", "clean", "--out", "data", "--seed", "4", "--json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metas: Vec<SynthMeta> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(metas.len(), 3);
    for (i, m) in metas.iter().enumerate() {
        assert_eq!(m.seed, 4 + i as u64);
        assert!((1.4..=1.8).contains(&m.gamma));
        for suffix in ["flare.png", "gt.png", "meta.json"] {
            assert!(tmp.path().join("data").join(format!("clean{i}_{suffix}")).is_file());
        }
        let on_disk: SynthMeta =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join(format!("data/clean{i}_meta.json"))).unwrap()).unwrap();
        assert_eq!(&on_disk, m);
    }
}

#[test]
fn synth_is_reproducible_and_guards_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = flare(&["synth", "--procedural", "2", "--size", "64", "--out", "a"], tmp.path());
    let b = flare(&["synth", "--procedural", "2", "--size", "64", "--out", "b"], tmp.path());
    assert_eq!((code(&a), code(&b)), (0, 0));
    for name in ["scene_000_flare.png", "scene_001_gt.png", "scene_001_meta.json"] {
        assert_eq!(std::fs::read(tmp.path().join("a").join(name)).unwrap(), std::fs::read(tmp.path().join("b").join(name)).unwrap());
    }
    let again = flare(&["synth", "--procedural", "2", "--size", "64", "--out", "a"], tmp.path());
    assert_eq!(code(&again), 2);
    let forced = flare(&["synth", "--procedural", "2", "--size", "64", "--out", "a", "--force"], tmp.path());
    assert_eq!(code(&forced), 0);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&flare(&["synth"], tmp.path())), 2);
    assert_eq!(code(&flare(&["joint", "missing.png"], tmp.path())), 2);
    assert_eq!(code(&flare(&["eval", "."], tmp.path())), 2);
    assert_eq!(code(&flare(&["nonsense"], tmp.path())), 2);
    assert_eq!(code(&flare(&["joint", "x.png", "--jobs", "0"], tmp.path())), 2);
    std::fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&flare(&["synth", "--procedural", "1", "--config", "bad.json"], tmp.path())), 2);
}

#[test]
fn pipeline_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("junk.png"), b"not a png").unwrap();
    let o = flare(&["joint", "junk.png", "--out", "res"], tmp.path());
    assert_eq!(code(&o), 1);
    // too small for the default 33 px kernel: reported with the stage name
    save_image(&night_scene(0, 20, 20), &tmp.path().join("tiny.png")).unwrap();
    let o = flare(&["joint", "tiny.png", "--out", "res2", "--json"], tmp.path());
    assert_eq!(code(&o), 1);
    let rep: BatchReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep.failures.len(), 1);
    assert!(rep.failures[0].contains("stage"), "{}", rep.failures[0]);
}

#[test]
fn joint_with_and_without_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&flare(&["synth", "--procedural", "2", "--size", "64", "--out", "data", "--config", cfg], tmp.path())), 0);

    let o = flare(&["joint", "data/scene_000_flare.png", "data/scene_001_flare.png", "--out", "res", "--gt", "data", "--config", cfg, "--json", "--jobs", "2"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: BatchReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep.images.len(), 2);
    for img in &rep.images {
        assert!(img.psnr_in.is_some() && img.psnr_out.is_some() && img.ssim_out.is_some());
        assert_eq!(img.loss_history.len(), 80);
        assert!(img.wall_ms_per_stage.is_none());
    }
    let mean = (rep.images[0].psnr_out.unwrap() + rep.images[1].psnr_out.unwrap()) / 2.0;
    assert!((rep.mean_psnr_out.unwrap() - mean).abs() < 1e-12);
    for s in ["D", "L", "y"] {
        assert!(tmp.path().join(format!("res/scene_001_{s}.png")).is_file());
    }

    let o = flare(&["joint", "data/scene_000_flare.png", "--out", "nogt", "--config", cfg, "--json", "--timings"], tmp.path());
    assert_eq!(code(&o), 0);
    let rep: BatchReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rep.images[0].psnr_in.is_none() && rep.mean_psnr_out.is_none());
    assert!(rep.images[0].wall_ms_per_stage.as_ref().is_some_and(|t| t.contains_key("solver")));
    assert!(tmp.path().join("nogt/scene_000_D.png").is_file());
}

#[test]
fn flare_free_input_is_preserved() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    std::fs::create_dir(tmp.path().join("in")).unwrap();
    save_image(&texture_scene(2, 48, 48), &tmp.path().join("in/plain.png")).unwrap();
    let o = flare(&["joint", "in/plain.png", "--gt", "in", "--out", "res", "--config", cfg.to_str().unwrap(), "--json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: BatchReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rep.images[0].psnr_out.unwrap() >= 40.0, "{:?}", rep.images[0].psnr_out);
}

#[test]
fn deglow_and_deghost_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&flare(&["synth", "--procedural", "1", "--size", "64", "--out", "data", "--config", cfg], tmp.path())), 0);

    let o = flare(&["deghost", "data", "--out", "dg", "--config", cfg, "--json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // the directory holds a flared and a clean image; both are processed
    let rep: BatchReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep.images.len(), 2);
    let names: Vec<String> = std::fs::read_dir(tmp.path().join("dg")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.contains(&"scene_000_y.png".to_string()));
    assert!(!names.iter().any(|n| n.ends_with("_D.png")));

    let o = flare(&["deglow", "data/scene_000_flare.png", "--out", "dl", "--config", cfg, "--json"], tmp.path());
    assert_eq!(code(&o), 0);
    let rep: BatchReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!rep.images[0].stages.ghost && rep.images[0].ghost_area == 0);
    // with the ghost stage off the target is the input itself
    let y = load_image(tmp.path().join("dl/scene_000_y.png"), false).unwrap();
    let r = load_image(tmp.path().join("data/scene_000_flare.png"), false).unwrap();
    assert_eq!(y, r);
}

#[test]
fn masks_command() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&flare(&["synth", "--procedural", "1", "--out", "data"], tmp.path())), 0);
    let o = flare(&["masks", "data/scene_000_flare.png", "--out", "m", "--json"], tmp.path());
    assert_eq!(code(&o), 0);
    let rows: Vec<flare_cli::MaskSummary> = serde_json::from_slice(&o.stdout).unwrap();
    let meta: SynthMeta = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("data/scene_000_meta.json")).unwrap()).unwrap();
    assert_eq!(rows[0].source_area, meta.source_area);
    assert!(tmp.path().join("m/scene_000_ms.png").is_file() && tmp.path().join("m/scene_000_mr.png").is_file());
}

#[test]
fn eval_pairs_by_stem() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::create_dir_all(dir.join("gt")).unwrap();
    std::fs::create_dir_all(dir.join("res")).unwrap();
    let a = texture_scene(1, 32, 32);
    let b = texture_scene(2, 32, 32);
    save_image(&a, &dir.join("gt/a_gt.png")).unwrap();
    save_image(&b, &dir.join("gt/b_gt.png")).unwrap();
    save_image(&a.map(|v| v * 0.9), &dir.join("res/a_D.png")).unwrap();
    save_image(&b.map(|v| v * 0.8), &dir.join("res/b_D.png")).unwrap();
    save_image(&b, &dir.join("res/c_D.png")).unwrap();
    save_image(&b, &dir.join("res/a_L.png")).unwrap();

    let o = flare(&["eval", "res", "--gt", "gt", "--json"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: EvalReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep.rows.len(), 2);
    assert_eq!(rep.warnings, 1);
    assert!(rep.unmatched[0].ends_with("c_D.png"));
    let mean = (rep.rows[0].psnr.unwrap() + rep.rows[1].psnr.unwrap()) / 2.0;
    assert!((rep.mean_psnr.unwrap() - mean).abs() < 1e-12);
    let mean_ssim = (rep.rows[0].ssim + rep.rows[1].ssim) / 2.0;
    assert!((rep.mean_ssim.unwrap() - mean_ssim).abs() < 1e-12);

    let same = flare(&["eval", "gt", "--gt", "gt", "--json"], dir);
    let text = String::from_utf8_lossy(&same.stdout);
    assert!(text.contains("\"mean_psnr\": \"inf\""), "{text}");
    let rep: EvalReport = serde_json::from_slice(&same.stdout).unwrap();
    assert!(rep.rows.iter().all(|r| r.psnr == Some(f64::INFINITY) && r.ssim == 1.0));

    std::fs::create_dir_all(dir.join("other")).unwrap();
    save_image(&a, &dir.join("other/zzz.png")).unwrap();
    assert_eq!(code(&flare(&["eval", "other", "--gt", "gt"], dir)), 1);
}
