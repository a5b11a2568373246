use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vkhom_cli::pipeline::{Manifest, StageStatus};

const BASE: &str = r#"
seed = 3

[geometry]
kind = "frame"
kappa = 0.25
resolution = [6, 6, 6]

[material.frame]
lambda = 1.0
mu = 1.0

[material.matrix]
lambda = 0.02
mu = 0.02
"#;

const PLATE: &str = r#"
[plate]
L = 1.0
grid = [8, 8]
clamp = "disc:0,0,0.3"
load = "f3=const:0.05"
prestrain = [[0.01, 0.0, 0.0], [0.0, -0.005, 0.0], [0.0, 0.0, 0.0]]

[recover]
points = "grid:2x1"
"#;

fn vkhom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vkhom")).args(args).output().expect("spawn vkhom")
}

fn write_config(dir: &Path, body: &str, out: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{body}\n[output]\ndir = \"{out}\"\n")).unwrap();
    path
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn second_pipeline_run_is_fully_cached() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE}{PLATE}"), "out");
    let cfg = cfg.to_str().unwrap();
    let first = vkhom(&["pipeline", cfg]);
    assert!(first.status.success(), "{}", stderr(&first));
    let m1 = manifest(&tmp.path().join("out"));
    assert_eq!(m1.stages.len(), 4);
    assert!(m1.stages.iter().all(|s| s.status == StageStatus::Ran));

    let second = vkhom(&["pipeline", cfg]);
    assert!(second.status.success());
    let m2 = manifest(&tmp.path().join("out"));
    assert!(m2.stages.iter().all(|s| s.status == StageStatus::Cached));
    assert_eq!(m1.outputs, m2.outputs);

    let forced = vkhom(&["pipeline", cfg, "--force"]);
    assert!(forced.status.success());
    let m3 = manifest(&tmp.path().join("out"));
    assert!(m3.stages.iter().all(|s| s.status == StageStatus::Ran));
    assert_eq!(m1.outputs, m3.outputs);
}

#[test]
fn changing_the_plate_block_reruns_only_downstream_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE}{PLATE}"), "out");
    assert!(vkhom(&["pipeline", cfg.to_str().unwrap()]).status.success());
    let changed = PLATE.replace("f3=const:0.05", "f3=const:0.04");
    let cfg = write_config(tmp.path(), &format!("{BASE}{changed}"), "out");
    assert!(vkhom(&["pipeline", cfg.to_str().unwrap()]).status.success());
    let status: Vec<_> = manifest(&tmp.path().join("out")).stages.iter().map(|s| (s.name.clone(), s.status)).collect();
    assert_eq!(
        status,
        vec![
            ("cell".into(), StageStatus::Cached),
            ("homogenize".into(), StageStatus::Cached),
            ("plate".into(), StageStatus::Ran),
            ("recover".into(), StageStatus::Ran),
        ]
    );
}

#[test]
fn independent_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    for d in [&a, &b] {
        let cfg = write_config(d, &format!("{BASE}{PLATE}"), "out");
        let o = vkhom(&["pipeline", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["tensors.json", "solution.json", "recover.json", "correctors.bin", "vtk/plate.vtk"] {
        let x = fs::read(a.join("out").join(f)).unwrap();
        let y = fs::read(b.join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn without_a_plate_block_the_pipeline_stops_after_homogenize() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE, "out");
    let o = vkhom(&["pipeline", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    let names: Vec<_> = manifest(&out).stages.into_iter().map(|s| s.name).collect();
    assert_eq!(names, ["cell", "homogenize"]);
    assert!(out.join("tensors.json").is_file());
    assert!(!out.join("solution.json").exists());
}

#[test]
fn subcommands_chain_like_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), BASE, "cellout");
    let d = tmp.path();
    let s = |p: &str| d.join(p).to_str().unwrap().to_owned();
    let o = vkhom(&["cell", "--config", &s("run.toml"), "-o", &s("cell")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = vkhom(&["homogenize", "--correctors", &s("cell/correctors.bin"), "-o", &s("tensors.json")]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = vkhom(&["verify", &s("tensors.json")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("min_eigenvalue"));
    assert!(text.contains("verify: passed"));

    let o = vkhom(&[
        "plate",
        "--tensors",
        &s("tensors.json"),
        "--L",
        "1",
        "--grid",
        "8x8",
        "--clamp",
        "edge:all",
        "--load",
        "f3=gauss:0,0,0.3,0.1",
        "-o",
        &s("solution.json"),
        "--vtk",
        &s("plate.vtk"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("plate.vtk").is_file());

    let o = vkhom(&[
        "recover",
        "--solution",
        &s("solution.json"),
        "--correctors",
        &s("cell/correctors.bin"),
        "--points",
        "at:0.1,0.2",
        "--vtk",
        &s("micro"),
        "-o",
        &s("recover.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("micro/micro_000.vtk").is_file());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("recover.json")).unwrap()).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_fails_on_tampered_tensors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE, "out");
    assert!(vkhom(&["pipeline", cfg.to_str().unwrap()]).status.success());
    let path = tmp.path().join("out/tensors.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let a11 = v["A"][0][0].as_f64().unwrap();
    v["A"][0][0] = serde_json::json!(a11 * 1.01);
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let o = vkhom(&["verify", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn invalid_config_exits_with_2_and_lists_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let body = BASE.replace("kappa = 0.25", "kappa = 0.5").replace("mu = 0.02", "mu = -1.0");
    let cfg = write_config(tmp.path(), &body, "out");
    let o = vkhom(&["pipeline", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("0 < kappa < 1/2"), "{err}");
    assert!(err.contains("material.matrix"), "{err}");
}

#[test]
fn missing_input_file_exits_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = vkhom(&["verify", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn newton_budget_exhaustion_exits_with_3_and_marks_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let plate = PLATE.replace("f3=const:0.05", "f3=const:5") + "\n[plate.newton]\nmax_newton = 1\n";
    // the recover block must follow plate.newton, so rebuild it
    let plate = plate.replace("\n[recover]\npoints = \"grid:2x1\"\n", "\n");
    let cfg = write_config(tmp.path(), &format!("{BASE}{plate}"), "out");
    let o = vkhom(&["pipeline", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let out = tmp.path().join("out");
    assert!(out.join("plate.failed").is_file());
    assert!(out.join("tensors.json").is_file());
}

#[test]
fn undersized_clamp_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let plate = PLATE.replace("disc:0,0,0.3", "disc:0.01,0.01,0.02");
    let cfg = write_config(tmp.path(), &format!("{BASE}{plate}"), "out");
    let o = vkhom(&["pipeline", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("clamp"));
}
