//! End-to-end checks of the `spect` binary through temporary files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spect_core::cli::{four_significant, read_field, read_sinogram, write_field};
use spect_core::recon::ReconState;
use spect_core::GridSpec;

fn spect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spect"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = spect(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Self(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_owned()
    }
}

fn header(path: &Path) -> String {
    let bytes = fs::read(path).unwrap();
    let end = bytes.iter().position(|b| *b == b'\n').unwrap();
    String::from_utf8(bytes[..end].to_vec()).unwrap()
}

fn phantom(dir: &Dir, family: &str, n: usize) -> (String, String) {
    let (a, f) = (dir.arg(&format!("{family}_a")), dir.arg(&format!("{family}_f")));
    ok(&[
        "phantom",
        "--family",
        family,
        "--n",
        &n.to_string(),
        "--out-a",
        &a,
        "--out-f",
        &f,
    ]);
    (a, f)
}

fn forward(dir: &Dir, a: &str, f: &str, ntheta: usize) -> (String, String) {
    let (a0, a1) = (dir.arg("a0"), dir.arg("a1"));
    ok(&[
        "forward",
        "--a",
        a,
        "--f",
        f,
        "--ntheta",
        &ntheta.to_string(),
        "--out-a0",
        &a0,
        "--out-a1",
        &a1,
    ]);
    (a0, a1)
}

fn data_rows(log: &str) -> Vec<Vec<String>> {
    log.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn phantom_header_and_determinism() {
    let dir = Dir::new();
    let (a, f) = phantom(&dir, "discs", 128);
    assert_eq!(header(Path::new(&a)), "SPFLD 128 128 -1 1 -1 1");
    assert_eq!(header(Path::new(&f)), "SPFLD 128 128 -1 1 -1 1");
    let first = (fs::read(&a).unwrap(), fs::read(&f).unwrap());
    phantom(&dir, "discs", 128);
    assert_eq!(first, (fs::read(&a).unwrap(), fs::read(&f).unwrap()));
}

#[test]
fn bogus_family_fails_with_usage() {
    let dir = Dir::new();
    let out = spect(&[
        "phantom",
        "--family",
        "bogus",
        "--n",
        "32",
        "--out-a",
        &dir.arg("a"),
        "--out-f",
        &dir.arg("f"),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("--help"), "{err}");
}

#[test]
fn forward_of_zero_source_is_zero() {
    let dir = Dir::new();
    let (a, _) = phantom(&dir, "trapping", 32);
    let zero = dir.path("zero_f");
    write_field(&zero, &spect_core::ScalarField::zeros(GridSpec::unit(32).unwrap())).unwrap();
    let (a0, a1) = forward(&dir, &a, zero.to_str().unwrap(), 24);
    assert!(read_sinogram(Path::new(&a0))
        .unwrap()
        .values()
        .iter()
        .all(|v| *v == 0.0));
    assert!(read_sinogram(Path::new(&a1))
        .unwrap()
        .values()
        .iter()
        .all(|v| *v == 0.0));
}

#[test]
fn forward_of_radial_pair_has_constant_columns() {
    let dir = Dir::new();
    let (a, f) = phantom(&dir, "radial", 128);
    let (a0, _) = forward(&dir, &a, &f, 48);
    assert_eq!(header(Path::new(&a0)), "SPSIN 128 48 -1 1");
    let s = read_sinogram(Path::new(&a0)).unwrap();
    let peak = s.values().iter().fold(0.0f64, |m, v| m.max(*v));
    for i in 0..128 {
        let (lo, hi) = (0..48)
            .map(|k| s.get(i, k))
            .fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(v), h.max(v)));
        assert!(hi - lo <= 1e-3 * peak, "s index {i}: spread {}", hi - lo);
    }
}

#[test]
fn noise_passes_through_and_is_seeded() {
    let dir = Dir::new();
    let (a, f) = phantom(&dir, "discs", 32);
    let (a0, _) = forward(&dir, &a, &f, 32);
    let copy = dir.arg("copy");
    ok(&[
        "noise", "--in", &a0, "--amp", "0", "--bias", "0", "--seed", "3", "--out", &copy,
    ]);
    assert_eq!(fs::read(&a0).unwrap(), fs::read(&copy).unwrap());
    let (x, y, z) = (dir.arg("x"), dir.arg("y"), dir.arg("z"));
    for (out, seed) in [(&x, "7"), (&y, "7"), (&z, "8")] {
        ok(&[
            "noise", "--in", &a0, "--amp", "0.2", "--bias", "0.5", "--seed", seed, "--out", out,
        ]);
    }
    assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap());
    assert_ne!(fs::read(&x).unwrap(), fs::read(&z).unwrap());
    let ratio = read_sinogram(Path::new(&x)).unwrap().sum() / read_sinogram(Path::new(&a0)).unwrap().sum();
    assert!((0.4..=1.6).contains(&ratio), "mass ratio {ratio}");
}

#[test]
fn zero_iterations_return_the_initial_guess() {
    let dir = Dir::new();
    let (a, f) = phantom(&dir, "discs", 32);
    let (a0, a1) = forward(&dir, &a, &f, 32);
    let (ra, rf, log) = (dir.arg("ra"), dir.arg("rf"), dir.arg("log"));
    ok(&[
        "recon", "--a0", &a0, "--a1", &a1, "--iters", "0", "--out-a", &ra, "--out-f", &rf, "--log", &log,
    ]);
    let init = ReconState::initial(GridSpec::unit(32).unwrap(), None).unwrap().iterate;
    assert_eq!(read_field(Path::new(&ra)).unwrap(), *init.a());
    assert_eq!(read_field(Path::new(&rf)).unwrap(), *init.f());
    assert_eq!(data_rows(&fs::read_to_string(&log).unwrap()).len(), 1);
}

#[test]
fn pipeline_reproduces_logged_rms() {
    let dir = Dir::new();
    let (a, f) = phantom(&dir, "radial", 48);
    let (a0, a1) = forward(&dir, &a, &f, 48);
    let (ra, rf, log, cut) = (dir.arg("ra"), dir.arg("rf"), dir.arg("log"), dir.arg("cut"));
    let run = |ra: &str, rf: &str, log: &str| {
        ok(&[
            "recon",
            "--a0",
            &a0,
            "--a1",
            &a1,
            "--iters",
            "3",
            "--truth-a",
            &a,
            "--truth-f",
            &f,
            "--out-a",
            ra,
            "--out-f",
            rf,
            "--log",
            log,
            "--cut-x0",
            &cut,
        ]);
    };
    run(&ra, &rf, &log);
    let text = fs::read_to_string(&log).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "iteration,residual0,residual1,rms_a,rms_f,neumann_ratio"
    );
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 4);
    let last = rows.last().unwrap();
    for (col, rec, truth) in [(3, &ra, &a), (4, &rf, &f)] {
        let logged: f64 = last[col].parse().unwrap();
        let printed = ok(&["metrics", "--rec", rec, "--truth", truth]);
        assert_eq!(printed.trim(), four_significant(logged));
    }
    let cut_rows = fs::read_to_string(&cut).unwrap().lines().count();
    assert_eq!(cut_rows, 49);

    let (rb, rg, log2) = (dir.arg("rb"), dir.arg("rg"), dir.arg("log2"));
    run(&rb, &rg, &log2);
    assert_eq!(fs::read(&ra).unwrap(), fs::read(&rb).unwrap());
    assert_eq!(fs::read(&rf).unwrap(), fs::read(&rg).unwrap());
    assert_eq!(fs::read(&log).unwrap(), fs::read(&log2).unwrap());
}

#[test]
fn metrics_prints_four_significant_digits() {
    let dir = Dir::new();
    let (_, f) = phantom(&dir, "discs", 32);
    assert_eq!(ok(&["metrics", "--rec", &f, "--truth", &f]).trim(), "0.000");
    let scaled = dir.path("scaled");
    write_field(&scaled, &read_field(Path::new(&f)).unwrap().scale(1.1)).unwrap();
    assert_eq!(
        ok(&["metrics", "--rec", scaled.to_str().unwrap(), "--truth", &f]).trim(),
        "10.00"
    );
}

#[test]
fn pgm_export_layout() {
    let dir = Dir::new();
    let (a, f) = phantom(&dir, "discs", 32);
    let (a0, _) = forward(&dir, &a, &f, 20);
    for (input, w, h) in [(&f, 32, 32), (&a0, 20, 32)] {
        let out = dir.path("img.pgm");
        ok(&["export-pgm", "--in", input, "--out", out.to_str().unwrap()]);
        let bytes = fs::read(&out).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("P5"));
        assert!(lines.next().unwrap().starts_with("# min"));
        assert_eq!(lines.next(), Some(format!("{w} {h}").as_str()));
        assert_eq!(lines.next(), Some("65535"));
        assert!(bytes.len() >= 2 * w * h);
    }
}

#[test]
fn unreadable_input_is_a_nonzero_exit() {
    let dir = Dir::new();
    let out = spect(&["metrics", "--rec", &dir.arg("missing"), "--truth", &dir.arg("missing")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
