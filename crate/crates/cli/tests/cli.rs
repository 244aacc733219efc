use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retarget_core::field::{DeformationField, FieldChain, MeshCorrespondence};
use retarget_core::{Dims, ImportanceMap, RasterImage};

fn retarget(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retarget"))
        .args(args)
        .current_dir(dir)
        .env_remove("RETARGET_ENERGY_CMD")
        .output()
        .unwrap()
}

fn noise(seed: u64, w: usize, h: usize) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RasterImage::from_fn(w, h, |_, _| rng.random()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

#[test]
fn seam_half_width() {
    let dir = tempfile::tempdir().unwrap();
    noise(1, 40, 30).save(dir.path().join("a.png")).unwrap();
    let o = retarget(&["retarget", "--in", "a.png", "--width", "50%", "--op", "seam", "--energy", "gradient", "--out", "b.png"], dir.path());
    assert!(o.status.success(), "{o:?}");
    assert_eq!(RasterImage::load(dir.path().join("b.png")).unwrap().dims(), Dims::new(20, 30));
}

#[test]
fn mismatched_map_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    noise(2, 40, 30).save(dir.path().join("a.png")).unwrap();
    ImportanceMap::uniform(41, 30, 0.5).unwrap().save(dir.path().join("a.pgm")).unwrap();
    let o = retarget(&["retarget", "--in", "a.png", "--width", "50%", "--op", "warp", "--energy", "map:a.pgm", "--out", "b.png"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension mismatch"));
}

#[test]
fn full_size_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let img = noise(3, 33, 21);
    img.save(dir.path().join("a.png")).unwrap();
    for op in ["seam", "warp"] {
        let o = retarget(&["retarget", "--in", "a.png", "--width", "100%", "--op", op, "--out", "b.png"], dir.path());
        assert!(o.status.success());
        assert_eq!(RasterImage::load(dir.path().join("b.png")).unwrap(), img);
    }
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    noise(4, 10, 10).save(dir.path().join("a.png")).unwrap();
    for args in [
        vec!["retarget", "--in", "a.png", "--width", "401%", "--out", "b.png"],
        vec!["retarget", "--in", "a.png", "--width", "50%", "--energy", "sobel", "--out", "b.png"],
        vec!["retarget", "--in", "a.png", "--width", "50%", "--energy", "cmd", "--out", "b.png"],
        vec!["enlarge", "--in", "a.png", "--width", "50%", "--out", "b.png"],
        vec!["nonsense"],
    ] {
        assert_eq!(retarget(&args, dir.path()).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = retarget(&["retarget", "--in", "nope.png", "--width", "50%", "--out", "b.png"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn enlarge_grows_both_axes() {
    let dir = tempfile::tempdir().unwrap();
    noise(5, 20, 16).save(dir.path().join("a.png")).unwrap();
    let o = retarget(&["enlarge", "--in", "a.png", "--width", "150%", "--height", "20", "--out", "b.png", "--emit-deformation"], dir.path());
    assert!(o.status.success(), "{o:?}");
    assert_eq!(RasterImage::load(dir.path().join("b.png")).unwrap().dims(), Dims::new(30, 20));
    let chain = FieldChain::load(dir.path().join("b.field")).unwrap();
    assert_eq!(chain.steps.len(), 2);
}

#[test]
fn ars_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let dims = Dims::new(64, 48);
    noise(6, 64, 48).save(dir.path().join("a.png")).unwrap();
    ImportanceMap::uniform(64, 48, 1.0).unwrap().save(dir.path().join("a.pgm")).unwrap();
    FieldChain::single(DeformationField::Mesh(MeshCorrespondence::identity(dims, 16)))
        .save(dir.path().join("id.field"))
        .unwrap();
    let mut half = MeshCorrespondence::identity(dims, 16);
    half.target.iter_mut().for_each(|p| p[0] *= 0.5);
    FieldChain::single(DeformationField::Mesh(half)).save(dir.path().join("half.field")).unwrap();

    let o = retarget(&["ars", "--original", "a.png", "--field", "id.field", "--map", "a.pgm"], dir.path());
    assert_eq!(stdout(&o), "1.000000");
    let o = retarget(&["ars", "--original", "a.png", "--field", "half.field", "--map", "a.pgm", "--csv", "cells.csv"], dir.path());
    assert_eq!(stdout(&o), "0.500000");
    let csv = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    assert!(csv.starts_with("cell_id,omega,r,contribution\n"));
    assert!(csv.ends_with("score,0.500000\n"));
    assert_eq!(csv.lines().count(), 1 + 12 + 1);
    let o = retarget(&["ars", "--original", "a.png", "--field", "missing.field"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ars_rejects_field_for_other_image() {
    let dir = tempfile::tempdir().unwrap();
    noise(7, 20, 20).save(dir.path().join("a.png")).unwrap();
    FieldChain::single(DeformationField::Mesh(MeshCorrespondence::identity(Dims::new(30, 20), 10)))
        .save(dir.path().join("f.field"))
        .unwrap();
    let o = retarget(&["ars", "--original", "a.png", "--field", "f.field"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seam_field_scores_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    noise(8, 48, 32).save(dir.path().join("a.png")).unwrap();
    let o = retarget(&["retarget", "--in", "a.png", "--width", "75%", "--out", "b.png", "--emit-deformation"], dir.path());
    assert!(o.status.success());
    let o = retarget(&["ars", "--original", "a.png", "--field", "b.field"], dir.path());
    let score: f64 = stdout(&o).parse().unwrap();
    assert!((0.0..=1.0).contains(&score));
}

fn write_frames(dir: &Path, frames: &[RasterImage]) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, f) in frames.iter().enumerate() {
        f.save(dir.join(format!("frame_{i:04}.png"))).unwrap();
    }
}

#[test]
fn video_identical_frames() {
    let dir = tempfile::tempdir().unwrap();
    let frame = RasterImage::from_fn(60, 40, |x, y| if (20..40).contains(&x) && (10..30).contains(&y) { [250, 200, 0] } else { [(2 * x) as u8, 80, 120] }).unwrap();
    write_frames(&dir.path().join("in"), &vec![frame; 3]);
    let o = retarget(&["video", "--in", "in", "--out", "out", "--width", "75%"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let outs: Vec<RasterImage> = (0..3)
        .map(|i| RasterImage::load(dir.path().join(format!("out/frame_{i:04}.png"))).unwrap())
        .collect();
    assert_eq!(outs[0].dims(), Dims::new(45, 40));
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[1], outs[2]);
}

#[test]
fn video_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = retarget(&["video", "--in", "empty", "--out", "out", "--width", "75%"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    write_frames(&dir.path().join("mixed"), &[noise(1, 20, 20), noise(2, 21, 20)]);
    let o = retarget(&["video", "--in", "mixed", "--out", "out", "--width", "75%"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn segment_and_energy_outputs() {
    let dir = tempfile::tempdir().unwrap();
    RasterImage::from_fn(16, 8, |x, _| if x < 8 { [0; 3] } else { [255; 3] }).unwrap().save(dir.path().join("a.png")).unwrap();
    let o = retarget(&["segment", "--in", "a.png", "--out", "l.pgm", "--k", "50", "--min-size", "20"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "2");
    let bytes = std::fs::read(dir.path().join("l.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5\n16 8\n65535\n"));
    assert_eq!(bytes.len(), b"P5\n16 8\n65535\n".len() + 16 * 8 * 2);

    let o = retarget(&["energy", "--in", "a.png", "--out", "e.pgm"], dir.path());
    assert!(o.status.success());
    let map = ImportanceMap::load(dir.path().join("e.pgm"), Dims::new(16, 8)).unwrap();
    // A full black-to-white step in one direction is half the maximum.
    assert_eq!(map.get(7, 3), 128.0 / 255.0);
    assert_eq!(map.get(0, 3), 0.0);
}

#[cfg(unix)]
#[test]
fn command_provider_from_environment() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    noise(9, 24, 16).save(dir.path().join("a.png")).unwrap();
    let script = dir.path().join("flat.sh");
    std::fs::write(&script, "#!/bin/sh\nprintf 'P5\\n24 16\\n255\\n' > \"$2\"\nhead -c 384 /dev/zero >> \"$2\"\n").unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_retarget"))
        .args(["retarget", "--in", "a.png", "--width", "20", "--energy", "cmd", "--out", "b.png"])
        .current_dir(dir.path())
        .env("RETARGET_ENERGY_CMD", script.to_str().unwrap())
        .output()
        .unwrap();
    assert!(o.status.success(), "{o:?}");
    assert_eq!(RasterImage::load(dir.path().join("b.png")).unwrap().dims(), Dims::new(20, 16));
}

#[test]
fn batch_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    write_frames(&input, &[noise(1, 20, 20), noise(2, 30, 10), noise(3, 12, 12)]);
    let o = retarget(&["batch", "--in", "in", "--out", "out", "--width", "50%", "--jobs", "2"], dir.path());
    assert!(o.status.success(), "{o:?}");
    assert_eq!(std::fs::read_dir(dir.path().join("out")).unwrap().count(), 3);

    std::fs::write(input.join("broken.png"), b"not a png").unwrap();
    let o = retarget(&["batch", "--in", "in", "--out", "out2", "--width", "50%"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.png"));
}
