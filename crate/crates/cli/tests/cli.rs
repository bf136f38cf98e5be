use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn voxrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxrec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn synth(out: &Path, preset: &str, seed: u64) {
    let o = voxrec(&["synth", preset, "--seed", &seed.to_string(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

#[test]
fn synth_reconstruct_evaluate_single_room() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "single_room", 0);
    assert!(dir.path().join("gt/room_1").is_dir());
    let input = dir.path().join("input.obj");
    let model = dir.path().join("room.voxrec");
    let ply = dir.path().join("room.ply");
    let o = voxrec(&[
        "reconstruct",
        input.to_str().unwrap(),
        "-o",
        model.to_str().unwrap(),
        "--export-ply",
        ply.to_str().unwrap(),
    ]);
    let report = json(&o);
    assert_eq!(report["rooms"], 1);
    assert_eq!(report["completed_stage"], "refine");
    let text = fs::read_to_string(&model).unwrap();
    assert!(text.starts_with("version VOXREC1\nvoxel_size 0.05\n"));
    assert!(fs::metadata(&ply).unwrap().len() > 0);

    let gt = dir.path().join("gt");
    let o = voxrec(&["evaluate", model.to_str().unwrap(), "--gt", gt.to_str().unwrap()]);
    let r = json(&o);
    for key in ["correct_vx_pct", "correct_in_rc_ne_pct", "correct_in_gt_and_rc_ne_pct"] {
        assert_eq!(r[key], 100.0, "{key}");
    }
    assert_eq!(r["rooms_gt"], 1);
    assert_eq!(r["wrong_rooms_from_gt"], 0);
}

#[test]
fn coarser_voxels_still_find_one_room() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "single_room", 0);
    let input = dir.path().join("input.obj");
    let fine = json(&voxrec(&["reconstruct", input.to_str().unwrap()]));
    let coarse = json(&voxrec(&["reconstruct", input.to_str().unwrap(), "--voxel-size", "0.10"]));
    assert_eq!(coarse["rooms"], 1);
    assert!(coarse["grid_dims"][0].as_u64() < fine["grid_dims"][0].as_u64());
}

#[test]
fn evaluate_from_mesh_reports_vertices() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "office_small", 1);
    let input = dir.path().join("input.obj");
    let gt = dir.path().join("gt");
    let r = json(&voxrec(&["evaluate", input.to_str().unwrap(), "--gt", gt.to_str().unwrap()]));
    assert_eq!(r["rooms_gt"], 3);
    assert_eq!(r["rooms_rc"], 3);
    assert!(r["mesh_vertices"].as_u64().unwrap() > 0);
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "office_small", 9);
    synth(b.path(), "office_small", 9);
    assert_eq!(
        fs::read(a.path().join("input.obj")).unwrap(),
        fs::read(b.path().join("input.obj")).unwrap()
    );
    assert_eq!(
        fs::read(a.path().join("gt/room_2/wall.obj")).unwrap(),
        fs::read(b.path().join("gt/room_2/wall.obj")).unwrap()
    );
}

#[test]
fn reconstruction_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "office_small", 2);
    let input = dir.path().join("input.obj");
    let mut models = Vec::new();
    for t in ["1", "3"] {
        let out = dir.path().join(format!("m{t}.voxrec"));
        json(&voxrec(&["--threads", t, "reconstruct", input.to_str().unwrap(), "-o", out.to_str().unwrap()]));
        models.push(fs::read(out).unwrap());
    }
    assert_eq!(models[0], models[1]);
}

#[test]
fn stop_after_dumps_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "single_room", 0);
    let input = dir.path().join("input.obj");
    let out = dir.path().join("m.voxrec");
    let r = json(&voxrec(&["reconstruct", input.to_str().unwrap(), "-o", out.to_str().unwrap(), "--stop-after", "voxelize"]));
    assert_eq!(r["completed_stage"], "voxelize");
    let dump = fs::read_to_string(dir.path().join("m.voxelize.voxgrid")).unwrap();
    assert!(dump.starts_with("version VOXGRID1\n"));
    assert!(!out.exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "single_room", 0);
    let input = dir.path().join("input.obj");
    let cfg = dir.path().join("recon.cfg");
    // a ceiling area larger than the room leaves nothing to reconstruct
    fs::write(&cfg, "# test\nmin_ceiling_area = 100\n").unwrap();
    let r = json(&voxrec(&["reconstruct", input.to_str().unwrap(), "--config", cfg.to_str().unwrap()]));
    assert_eq!(r["rooms"], 0);
    let r = json(&voxrec(&[
        "reconstruct",
        input.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--min-ceiling-area",
        "0.5",
    ]));
    assert_eq!(r["rooms"], 1);

    fs::write(&cfg, "bogus = 1\n").unwrap();
    let o = voxrec(&["reconstruct", input.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn usage_and_input_errors_exit_2() {
    let o = voxrec(&["reconstruct", "/nonexistent/mesh.obj"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("input not found"));

    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "single_room", 0);
    let input = dir.path().join("input.obj");
    let o = voxrec(&["evaluate", input.to_str().unwrap(), "--gt", "/nonexistent/gt"]);
    assert_eq!(o.status.code(), Some(2));

    let o = voxrec(&["reconstruct", input.to_str().unwrap(), "--up-axis", "w"]);
    assert_eq!(o.status.code(), Some(2));
    let o = voxrec(&["reconstruct", input.to_str().unwrap(), "--stop-after", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
    let o = voxrec(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_scene_spec_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/scenes/single_room.toml")).unwrap();
    let bad = format!(
        "{text}\n[[openings]]\nroom = 0\nface = \"x_max\"\nu = [4.5, 6.0]\nv = [0.0, 2.0]\n"
    );
    fs::write(&spec, bad).unwrap();
    let o = voxrec(&["synth", spec.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("openings"), "{}", String::from_utf8_lossy(&o.stderr));
}
