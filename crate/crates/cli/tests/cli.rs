use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use viewsynth::{io, BinaryMask, FlowDirection};

const SCENE: &str = r#"
angles = [-20.0, 30.0]

[[figure]]
name = "a"
seed = 5
pose = { shoulder = [1.0, 0.4], elbow = [0.5, 0.2] }
"#;

fn viewsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Renders the test scene, optionally with high-resolution views.
fn rendered(dir: &Path, hr: bool) -> PathBuf {
    let cfg = dir.join("scene.toml");
    fs::write(&cfg, SCENE).unwrap();
    let data = dir.join("data");
    let mut args = vec!["render", "--config", s(&cfg), "--out-dir", s(&data)];
    if hr {
        args.extend(["--scale", "2.5"]);
    }
    let o = viewsynth(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    data.join("a")
}

fn synth_args<'a>(scene: &'a Path, target: &'a Path, out: &'a Path) -> Vec<String> {
    let src = scene.join("source");
    [
        ("--src-rgb", src.join("rgb.png")),
        ("--src-depth", src.join("depth.png")),
        ("--src-mask", src.join("mask.png")),
        ("--cam-src", src.join("camera.txt")),
        ("--cam-tgt", target.join("camera.txt")),
        ("--out-dir", out.to_path_buf()),
    ]
    .into_iter()
    .flat_map(|(flag, p)| [flag.to_string(), p.to_str().unwrap().to_string()])
    .collect()
}

fn run_synth(args: &[String], extra: &[&str]) -> Output {
    let mut all: Vec<&str> = vec!["synth"];
    all.extend(args.iter().map(String::as_str));
    all.extend(extra);
    viewsynth(&all)
}

#[test]
fn render_writes_every_view() {
    let dir = tempfile::tempdir().unwrap();
    let scene = rendered(dir.path(), false);
    for sub in ["source", "target_-20", "target_30"] {
        for f in ["rgb.png", "depth.png", "mask.png", "camera.txt"] {
            assert!(scene.join(sub).join(f).is_file(), "{sub}/{f}");
        }
    }
    let gt = io::read_flow(scene.join("target_30/gt_backward.flo"), FlowDirection::Backward).unwrap();
    let mask = io::read_mask(scene.join("target_30/mask.png")).unwrap();
    assert!(gt.valid_mask().is_subset_of(&mask));
    assert!(gt.valid_count() > 0);
}

#[test]
fn synth_is_deterministic_and_scores_well() {
    let dir = tempfile::tempdir().unwrap();
    let scene = rendered(dir.path(), false);
    let target = scene.join("target_30");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run_synth(&synth_args(&scene, &target, out), &["--report", "structured"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["rgb.png", "mask.png", "backward.flo", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["width"], 200);
    assert_eq!(report["unfilled"], 0);

    let o = viewsynth(&[
        "eval",
        "--pred-rgb",
        s(&a.join("rgb.png")),
        "--pred-flow",
        s(&a.join("backward.flo")),
        "--pred-mask",
        s(&a.join("mask.png")),
        "--gt-rgb",
        s(&target.join("rgb.png")),
        "--gt-flow",
        s(&target.join("gt_backward.flo")),
        "--gt-mask",
        s(&target.join("mask.png")),
        "--report",
        "structured",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["iou"].as_f64().unwrap() > 0.85, "{r}");
    assert!(r["flow_mse"].as_f64().unwrap() < 1.0, "{r}");
}

#[test]
fn eval_of_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let target = rendered(dir.path(), false).join("target_30");
    let (rgb, flow, mask) = (
        target.join("rgb.png"),
        target.join("gt_backward.flo"),
        target.join("mask.png"),
    );
    let out = dir.path().join("report");
    let o = viewsynth(&[
        "eval",
        "--pred-rgb",
        s(&rgb),
        "--pred-flow",
        s(&flow),
        "--pred-mask",
        s(&mask),
        "--gt-rgb",
        s(&rgb),
        "--gt-flow",
        s(&flow),
        "--gt-mask",
        s(&mask),
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(text, String::from_utf8(o.stdout).unwrap());
    for line in ["image_mse=0", "ssim=1", "flow_mse=0", "delta_1_25=1", "ncc=1", "iou=1"] {
        assert!(text.lines().any(|l| l == line), "{line} missing from\n{text}");
    }
}

#[test]
fn identity_cameras_reproduce_the_source() {
    let dir = tempfile::tempdir().unwrap();
    let scene = rendered(dir.path(), false);
    let out = dir.path().join("out");
    let o = run_synth(
        &synth_args(&scene, &scene.join("source"), &out),
        &["--dump-intermediates"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let src_mask = io::read_mask(scene.join("source/mask.png")).unwrap();
    let m_tran = io::read_mask(out.join("intermediates/mask_transformed.png")).unwrap();
    assert!(m_tran == src_mask, "transformed mask differs from the source mask");
    // The closing residual may add concavities such as armpits on top.
    assert!(src_mask.is_subset_of(&io::read_mask(out.join("mask.png")).unwrap()));
    let src = io::read_rgb(scene.join("source/rgb.png")).unwrap();
    let got = io::read_rgb(out.join("rgb.png")).unwrap();
    for y in 0..200 {
        for x in 0..200 {
            if src_mask.get(x, y) {
                assert_eq!(got.pixel(x, y), src.pixel(x, y));
            }
        }
    }
}

#[test]
fn intermediates_satisfy_their_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let scene = rendered(dir.path(), false);
    let out = dir.path().join("out");
    let o = run_synth(
        &synth_args(&scene, &scene.join("target_-20"), &out),
        &["--dump-intermediates"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let i = out.join("intermediates");
    let src_mask = io::read_mask(scene.join("source/mask.png")).unwrap();
    let forward = io::read_flow(i.join("forward.flo"), FlowDirection::Forward).unwrap();
    let transformed = io::read_flow(i.join("transformed.flo"), FlowDirection::Backward).unwrap();
    let completed = io::read_flow(i.join("completed.flo"), FlowDirection::Backward).unwrap();
    let m_tran = io::read_mask(i.join("mask_transformed.png")).unwrap();
    let m_res = io::read_mask(i.join("mask_residual.png")).unwrap();
    let m_final = io::read_mask(i.join("mask_final.png")).unwrap();

    assert!(forward.valid_mask().is_subset_of(&src_mask));
    assert!(transformed.valid_mask() == m_tran);
    assert!(m_res.and(&m_tran).unwrap().is_empty());
    assert!(m_res.or(&m_tran).unwrap() == m_final);
    assert!(completed.valid_mask().is_subset_of(&m_final));
    assert!(io::read_mask(out.join("mask.png")).unwrap() == m_final);
    for idx in 0..m_tran.bits().len() {
        if transformed.valid()[idx] {
            assert_eq!(completed.u()[idx], transformed.u()[idx]);
            assert_eq!(completed.v()[idx], transformed.v()[idx]);
        }
    }
}

#[test]
fn high_resolution_path_writes_500px_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = rendered(dir.path(), true);
    let out = dir.path().join("out");
    let src = scene.join("source");
    let o = run_synth(
        &synth_args(&scene, &scene.join("target_30"), &out),
        &[
            "--scale",
            "2.5",
            "--hr-src-rgb",
            s(&src.join("rgb_hr.png")),
            "--hr-src-mask",
            s(&src.join("mask_hr.png")),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(io::read_rgb(out.join("rgb.png")).unwrap().size(), (500, 500));
    assert_eq!(
        io::read_flow(out.join("backward.flo"), FlowDirection::Backward)
            .unwrap()
            .size(),
        (500, 500)
    );

    let missing = dir.path().join("missing");
    let o = run_synth(
        &synth_args(&scene, &scene.join("target_30"), &missing),
        &["--scale", "2.5"],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[args]"), "{}", stderr(&o));
    assert!(!missing.exists());

    let wrong_size = dir.path().join("wrong");
    let o = run_synth(
        &synth_args(&scene, &scene.join("target_30"), &wrong_size),
        &["--scale", "2.5", "--hr-src-rgb", s(&src.join("rgb.png"))],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[load]"), "{}", stderr(&o));
}

#[test]
fn missing_input_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = rendered(dir.path(), false);
    let out = dir.path().join("out");
    let mut args = synth_args(&scene, &scene.join("target_30"), &out);
    args[1] = s(&dir.path().join("nope.png")).to_string();
    let o = run_synth(&args, &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: [load]"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn pipeline_failure_is_stage_tagged_and_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = rendered(dir.path(), false);
    // Foreground everywhere, but the depth is zero off the figure.
    let full = dir.path().join("full.png");
    io::write_mask(&full, &BinaryMask::filled(200, 200, true)).unwrap();
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "old").unwrap();
    let mut args = synth_args(&scene, &scene.join("target_30"), &out);
    args[5] = s(&full).to_string();
    let o = run_synth(&args, &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: [projection]"), "{}", stderr(&o));
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec!["keep.txt"]);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "[[figure]]\nname = \"a\"\nseed = 1\npose = { knee = [3.0, 0.0] }\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = viewsynth(&["render", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[config]"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn pipeline_test_reports_all_six_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.toml");
    fs::write(&cfg, SCENE).unwrap();
    let out = dir.path().join("out");
    let o = viewsynth(&[
        "pipeline-test",
        "--config",
        s(&cfg),
        "--report",
        "structured",
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["pairs"].as_array().unwrap().len(), 2);
    for key in ["image_mse", "ssim", "flow_mse", "delta_1_25", "ncc", "iou"] {
        assert!(r["mean"][key].is_number(), "mean.{key}");
        for p in r["pairs"].as_array().unwrap() {
            assert!(p[key].is_number(), "{key}");
        }
    }
    assert!(r["mean"]["iou"].as_f64().unwrap() > 0.85);
}

#[test]
fn pipeline_test_high_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.toml");
    fs::write(&cfg, SCENE).unwrap();
    let o = viewsynth(&["pipeline-test", "--config", s(&cfg), "--scale", "2.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l == "scale=2.5"), "{text}");
    assert!(text.lines().any(|l| l == "image_pixels=500000"), "{text}");
}
