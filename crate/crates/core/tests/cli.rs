use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deformrecon"))
}

fn scratch_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("deformrecon-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.spec");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn phantom_project_and_metrics() {
    let dir = scratch_dir("basic");
    let img = dir.join("p.img");
    let out = run(bin().args(["phantom", "--name", "shepp-logan", "--m", "32", "--deform", "swirl", "--square", "--out"]).arg(&img));
    assert!(out.status.success());
    assert!(img.exists() && dir.join("p.png").exists());

    let csv = dir.join("g.csv");
    let out = run(bin().args(["project", "--angles", "6", "--noise", "0.05", "--image"]).arg(&img).arg("--out").arg(&csv));
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("angles=0,30,60,90,120,150;q=48;level=5"));
    assert_eq!(text.lines().count(), 7);

    let out = run(bin().arg("metrics").arg(&img).arg(&img));
    let s = String::from_utf8_lossy(&out.stdout);
    assert!(s.contains("ssd = 0.000000e0") && s.contains("ssim = 1.000000"), "{s}");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = scratch_dir("codes");
    let bad = write_spec(&dir, "[data]\nm = 16\nangels = 4\n");
    let out = bin().args(["reconstruct", "--spec"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = bin().args(["phantom", "--name", "teapot", "--out"]).arg(dir.join("x.img")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["metrics"]).arg(dir.join("missing.img")).arg(dir.join("missing.img")).output().unwrap();
    assert_eq!(out.status.code(), Some(4));

    let out = bin().args(["reconstruct", "--spec"]).arg(dir.join("missing.spec")).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn reconstruct_writes_artifacts() {
    let dir = scratch_dir("rec");
    let spec = write_spec(
        &dir,
        "[data]\ntemplate = shepp-logan\ndeform = bend\nadd_square = true\nm = 16\nangles = 6\n\n[solver]\nmax_iter = 20\n\n[output]\ndir = result\n",
    );
    let out = run(bin().args(["reconstruct", "--level-coarsest", "8", "--seed", "5", "--spec"]).arg(&spec).arg("--log").arg(dir.join("logs")));
    assert!(out.status.success());
    let res = dir.join("result");
    for f in ["reconstruction", "deformation", "source", "error", "truth"] {
        assert!(res.join(format!("{f}.img")).exists(), "{f}");
        assert!(res.join(format!("{f}.png")).exists(), "{f}");
    }
    let report = std::fs::read_to_string(res.join("report.txt")).unwrap();
    assert!(report.contains("seed = 5") && report.contains("[level 8]") && report.contains("[level 16]"));
    assert!(res.join("sinogram.csv").exists());
    assert!(dir.join("logs").join("ipalm_m16.tsv").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn baseline_and_sweep_commands() {
    let dir = scratch_dir("bs");
    let spec = write_spec(
        &dir,
        "[data]\ntemplate = shepp-logan\nm = 16\nangles = 6\n\n[solver]\nmax_iter = 10\ncoarsest_m = 16\n\n[sweep]\nlambda1_scale = 1\nlambda2 = 0.2, 2\n\n[baseline]\nlambda = 0.3, 3\n",
    );
    let out = run(bin().args(["baseline", "--spec"]).arg(&spec).arg("--out").arg(dir.join("b")));
    assert!(out.status.success());
    let s = String::from_utf8_lossy(&out.stdout);
    assert!(s.contains("best lambda") && dir.join("b").join("baseline.img").exists(), "{s}");

    let out = run(bin().args(["--threads", "1", "sweep", "--spec"]).arg(&spec).arg("--out").arg(dir.join("s")));
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("s").join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    std::fs::remove_dir_all(dir).unwrap();
}
