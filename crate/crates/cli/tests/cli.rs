use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecsk_cli::artifact::Artifact;
use ecsk_cli::commands::{run_pipeline, write_pipeline};
use ecsk_cli::PipelineConfig;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecsk"))
}

fn tiny_config(out: &Path, r_sense: Option<f64>) -> Value {
    let pi = std::f64::consts::PI;
    json!({
        "internal": {"model": "dubins", "control_bounds": [[0.0, 4.0], [-1.0, 1.0]]},
        "external": {"model": "dubins", "control_bounds": [[0.0, 3.0], [-0.75, 0.75]]},
        "grid": {"mins": [-8.0, -8.0, -pi], "maxs": [8.0, 8.0, pi],
                 "counts": [21, 21, 16], "periodic": [false, false, true]},
        "t0": 0.0, "tf": 0.5, "snapshot_dt": 0.25,
        "r0": 1.3, "collision_radius": 1.0, "r_sense": r_sense,
        "cfl_factor": 0.5, "switch_tolerance": null, "rng_seed": 7,
        "output_dir": out
    })
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, v.to_string()).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    cmd.env_remove("ECSK_OUTPUT_DIR").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{ not json").unwrap();
    let o = run(bin().arg("reach").arg(&p));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn tf_before_t0_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = tiny_config(&dir.path().join("out"), None);
    v["tf"] = json!(-1.0);
    let p = write_config(dir.path(), &v);
    let o = run(bin().arg("pipeline").arg(&p));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`tf`"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_collision_radius_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = tiny_config(&dir.path().join("out"), None);
    v.as_object_mut().unwrap().remove("collision_radius");
    let p = write_config(dir.path(), &v);
    let o = run(bin().arg("reach").arg(&p));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("collision_radius"), "{}", stderr(&o));
}

#[test]
fn unreadable_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().arg("reach").arg(dir.path().join("absent.json")));
    assert_eq!(o.status.code(), Some(3));
    let o = run(bin().args(["verify", "", "--trials", "1"]));
    assert_eq!(o.status.code(), Some(3));
    let o = run(bin().args(["export", "", "--format", "vtk", "--out"]).arg(dir.path()));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_subcommand_exits_2() {
    let o = run(bin().arg("bogus"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reach_writes_artifact_summary_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reach_out");
    let p = write_config(dir.path(), &tiny_config(&out, None));
    let o = run(bin().arg("reach").arg(&p).args(["--threads", "1"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("reach_summary.json")).unwrap()).unwrap();
    let snaps = summary["snapshots"].as_array().unwrap();
    assert_eq!(snaps.len(), 3);
    assert_eq!(snaps[2]["time"], 0.5);
    assert!(snaps[0]["min"].as_f64().unwrap() < 0.0);
    let echo = PipelineConfig::from_json(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo.output_dir, out);
    assert_eq!(echo.rng_seed, 7);
}

#[test]
fn output_dir_env_and_seed_flag_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), &tiny_config(&dir.path().join("ignored"), None));
    let env_out = dir.path().join("from_env");
    let o = bin()
        .arg("reach")
        .arg(&p)
        .args(["--seed", "99"])
        .env("ECSK_OUTPUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!dir.path().join("ignored").exists());
    let echo = PipelineConfig::from_json(&fs::read_to_string(env_out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo.output_dir, env_out);
    assert_eq!(echo.rng_seed, 99);
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn pipeline_is_deterministic_and_emits_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let p = write_config(dir.path(), &tiny_config(out, Some(6.0)));
        let o = run(bin().arg("pipeline").arg(&p));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let names: Vec<String> = files_in(&a).into_iter().map(|f| f.0).collect();
    for want in [
        "avoid.bin",
        "avoid.json",
        "config.json",
        "convergence.json",
        "kernel.bin",
        "kernel.json",
        "reach.bin",
        "reach.json",
        "sensing_reach.bin",
        "sensing_reach.json",
        "unsafe_tube.bin",
        "unsafe_tube.json",
    ] {
        assert!(names.iter().any(|n| n == want), "missing {want}: {names:?}");
    }
    for ((na, da), (nb, db)) in files_in(&a).into_iter().zip(files_in(&b)) {
        assert_eq!(na, nb);
        if na != "config.json" {
            assert!(da == db, "{na} differs between identical runs");
        }
    }
    let conv: Value =
        serde_json::from_str(&fs::read_to_string(a.join("convergence.json")).unwrap()).unwrap();
    assert!(conv["cap_violation"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn artifacts_round_trip_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = PipelineConfig::from_json(&tiny_config(&out, Some(6.0)).to_string()).unwrap();
    let run = run_pipeline(&cfg).unwrap();
    let outputs = write_pipeline(&cfg, &run).unwrap();
    let reach = Artifact::load(&outputs.reach).unwrap();
    assert_eq!(reach.to_reach().unwrap(), run.reach);
    let tube = Artifact::load(&outputs.unsafe_tube).unwrap();
    assert_eq!(tube.to_unsafe_tube().unwrap(), *run.unsafe_tube);
    let avoid = Artifact::load(&outputs.avoid).unwrap();
    assert_eq!(avoid.field, run.avoid.tube);
    let kernel = Artifact::load(outputs.kernel.as_ref().unwrap()).unwrap();
    assert_eq!(kernel.to_kernel().unwrap().0.values(), &run.avoid.tube);
    let sensing = Artifact::load(outputs.sensing.as_ref().unwrap()).unwrap();
    assert_eq!(sensing.to_reach().unwrap(), *run.sensing.as_ref().unwrap());
    // Saving what was loaded reproduces the files byte for byte.
    let again = dir.path().join("again");
    for (art, path) in [
        (&reach, &outputs.reach),
        (&tube, &outputs.unsafe_tube),
        (&avoid, &outputs.avoid),
        (&kernel, outputs.kernel.as_ref().unwrap()),
        (&sensing, outputs.sensing.as_ref().unwrap()),
    ] {
        let stem = path.file_stem().unwrap().to_str().unwrap();
        art.save(&again, stem).unwrap();
        for ext in ["json", "bin"] {
            let f = format!("{stem}.{ext}");
            assert!(fs::read(out.join(&f)).unwrap() == fs::read(again.join(&f)).unwrap(), "{f}");
        }
    }
}

fn small_kernel(dir: &Path) -> PathBuf {
    let out = dir.join("k");
    let p = write_config(dir, &tiny_config(&out, None));
    let o = run(bin().arg("pipeline").arg(&p));
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("kernel.json")
}

#[test]
fn verify_exit_code_tracks_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = small_kernel(dir.path());
    let report = dir.path().join("empty.json");
    let o = run(bin().arg("verify").arg(&kernel).args(["--trials", "0", "--report"]).arg(&report));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["trials"], 0);
    assert!(r["outcomes"].as_array().unwrap().is_empty());
    assert!(r["worst_min_d"].is_null());

    let report = dir.path().join("few.json");
    let o = run(bin()
        .arg("verify")
        .arg(&kernel)
        .args(["--trials", "4", "--margin", "0.5", "--seed", "3", "--report"])
        .arg(&report));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["outcomes"].as_array().unwrap().len(), 4);
    assert_eq!(r["seed"], 3);
    let passed = r["passed"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if passed { 0 } else { 4 }), "{}", stderr(&o));

    let o = run(bin().arg("verify").arg(&kernel).args(["--trials", "1", "--margin", "0"]));
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn verify_rejects_non_kernel_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = small_kernel(dir.path());
    let reach = kernel.with_file_name("reach.json");
    let o = run(bin().arg("verify").arg(&reach).args(["--trials", "1"]));
    assert_eq!(o.status.code(), Some(2));
}

const VTK_HEADER: &str = "# vtk DataFile Version 3.0
avoid t=0
ASCII
DATASET STRUCTURED_POINTS
DIMENSIONS 21 21 16
ORIGIN -8 -8 -3.141592653589793
SPACING 0.8 0.8 0.39269908169872414
POINT_DATA 7056
SCALARS value double 1
LOOKUP_TABLE default
";

#[test]
fn exports_vtk_and_csv_slices() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = small_kernel(dir.path());
    let avoid = kernel.with_file_name("avoid.json");
    let vtk_dir = dir.path().join("vtk");
    let o = run(bin().arg("export").arg(&avoid).args(["--format", "vtk", "--out"]).arg(&vtk_dir));
    assert!(o.status.success(), "{}", stderr(&o));
    let mut files: Vec<_> = fs::read_dir(&vtk_dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 3);
    let text = fs::read_to_string(&files[0]).unwrap();
    assert!(text.starts_with(VTK_HEADER), "{}", &text[..400]);
    assert_eq!(text.lines().count(), 10 + 7056);

    let csv = dir.path().join("slice.csv");
    let o = run(bin()
        .arg("export")
        .arg(&avoid)
        .args(["--format", "csv-slice", "--slice-dim", "2", "--slice-coord", "3.141592653589793", "--out"])
        .arg(&csv));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 22);
    assert_eq!(rows[0].split(',').count(), 22);
    assert!(rows[1].starts_with("-8,"));

    let o = run(bin()
        .arg("export")
        .arg(&avoid)
        .args(["--format", "csv-slice", "--slice-dim", "0", "--slice-coord", "9.5", "--out"])
        .arg(&csv));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin()
        .arg("export")
        .arg(&avoid)
        .args(["--format", "csv-slice", "--slice-dim", "2", "--slice-coord", "0", "--time", "3", "--out"])
        .arg(&csv));
    assert_eq!(o.status.code(), Some(2));
}
