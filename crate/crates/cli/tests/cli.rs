//! Behaviour of the `mgd` binary on well-formed inputs.

use std::path::Path;
use std::process::{Command, Output};

use mgd_core::{GaussianEnsemble, LowRankGaussian, Matrix, MgdFile, SeededRng};

fn mgd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgd"))
        .current_dir(dir)
        .env_remove("MGD_THREADS")
        .args(args)
        .output()
        .expect("spawn mgd")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, f: &MgdFile) {
    f.write(dir.join(name)).unwrap();
}

/// 8×8 mean, 4-channel factor and a 3-channel observation file.
fn seeded_instance(dir: &Path) -> LowRankGaussian<f64> {
    let mut rng = SeededRng::new(9);
    let mu = rng.normal_vec(64);
    let psi = Matrix::from_vec(64, 4, rng.normal_vec(256)).unwrap();
    write(
        dir,
        "mu.mgd",
        &MgdFile::from_vector(8, 8, mu.clone()).unwrap(),
    );
    write(dir, "psi.mgd", &MgdFile::from_matrix(8, 8, &psi).unwrap());
    let z = Matrix::from_vec(64, 3, rng.normal_vec(192)).unwrap();
    write(dir, "z.mgd", &MgdFile::from_matrix(8, 8, &z).unwrap());
    LowRankGaussian::new(mu, psi, 0.5).unwrap()
}

#[test]
fn nll_of_zero_raster() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "z.mgd",
        &MgdFile::from_vector(1, 2, vec![0.0, 0.0]).unwrap(),
    );
    let out = mgd(dir.path(), &["--sigma", "1", "nll", "z.mgd", "z.mgd"]);
    assert_eq!(stdout(&out), "1.837877066409\n");
}

#[test]
fn nll_dense_check() {
    let dir = tempfile::tempdir().unwrap();
    let g = seeded_instance(dir.path());
    let out = stdout(&mgd(
        dir.path(),
        &[
            "--sigma",
            "0.5",
            "--rank",
            "4",
            "nll",
            "mu.mgd",
            "psi.mgd",
            "z.mgd",
            "--dense-check",
        ],
    ));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 6);
    let z = MgdFile::read(dir.path().join("z.mgd")).unwrap().to_matrix();
    for (k, pair) in lines.chunks(2).enumerate() {
        let value: f64 = pair[0].parse().unwrap();
        assert!((value - g.nll(&z.column(k)).unwrap()).abs() < 1e-9);
        let gap: f64 = pair[1].strip_prefix("dense_gap ").unwrap().parse().unwrap();
        assert!(gap <= 1e-9, "{gap}");
    }
}

#[test]
fn output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    seeded_instance(dir.path());
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_mgd"))
            .current_dir(dir.path())
            .env("MGD_THREADS", threads)
            .args(["nll", "mu.mgd", "psi.mgd", "z.mgd"])
            .output()
            .unwrap();
        stdout(&out)
    };
    let single = run("0");
    assert_eq!(single, run("3"));
    assert_eq!(single, run("8"));
    let bad = Command::new(env!("CARGO_BIN_EXE_mgd"))
        .current_dir(dir.path())
        .env("MGD_THREADS", "lots")
        .args(["nll", "mu.mgd", "z.mgd"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn metrics_of_identical_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let gt = MgdFile::from_vector(2, 3, vec![1.0, 2.0, 3.5, 0.0, 7.0, 9.5]).unwrap();
    write(dir.path(), "gt.mgd", &gt);
    let out = stdout(&mgd(dir.path(), &["metrics", "gt.mgd", "gt.mgd"]));
    let expected =
        "silog 0\nabs_rel 0\nrms 0\nrms_log 0\nsq_rel 0\nirms 0\ndelta1 1\ndelta2 1\ndelta3 1\n";
    assert_eq!(out, expected);

    // An affinely corrupted prediction is restored by alignment.
    let pred =
        MgdFile::from_vector(2, 3, gt.data().iter().map(|v| 0.5 * v + 1.0).collect()).unwrap();
    write(dir.path(), "pred.mgd", &pred);
    let aligned = stdout(&mgd(
        dir.path(),
        &["metrics", "pred.mgd", "gt.mgd", "--align"],
    ));
    let rms: f64 = aligned
        .lines()
        .nth(2)
        .unwrap()
        .strip_prefix("rms ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(rms < 1e-12);
}

#[test]
fn fuse_identical_components() {
    let dir = tempfile::tempdir().unwrap();
    let g = seeded_instance(dir.path());
    let out = stdout(&mgd(
        dir.path(),
        &[
            "--sigma", "0.5", "--out", "fused", "fuse", "mu.mgd", "psi.mgd", "mu.mgd", "psi.mgd",
            "--probe", "z.mgd",
        ],
    ));
    let values: Vec<f64> = out
        .lines()
        .filter(|l| l.contains("_nll "))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    let z = MgdFile::read(dir.path().join("z.mgd")).unwrap().to_matrix();
    for k in 0..3 {
        let single = g.nll(&z.column(k)).unwrap();
        assert!((values[2 * k] - single).abs() <= 1e-9);
        assert!((values[2 * k + 1] - single).abs() <= 1e-9);
    }
    let psi = MgdFile::read(dir.path().join("fused/psi.mgd")).unwrap();
    assert_eq!(psi.channels(), 2 * 4 + 2);
    let ensemble = GaussianEnsemble::new(vec![g.clone(), g]).unwrap();
    assert_eq!(psi.to_matrix(), ensemble.fuse().unwrap().psi().clone());
}

#[test]
fn sample_is_deterministic_and_fit_reads_it_back() {
    let dir = tempfile::tempdir().unwrap();
    seeded_instance(dir.path());
    let args = [
        "--sigma", "0.5", "--seed", "3", "sample", "mu.mgd", "psi.mgd", "--count", "40",
    ];
    stdout(&mgd(dir.path(), &[&["--out", "a"][..], &args[..]].concat()));
    stdout(&mgd(dir.path(), &[&["--out", "b"][..], &args[..]].concat()));
    for i in 0..40 {
        let name = format!("sample_{i:04}.mgd");
        let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b);
    }

    let samples: Vec<String> = (0..40).map(|i| format!("a/sample_{i:04}.mgd")).collect();
    let mut fit_args = vec![
        "--rank",
        "2",
        "--out",
        "fit",
        "fit",
        "--iterations",
        "20",
        "--fit-sigma",
    ];
    fit_args.extend(samples.iter().map(String::as_str));
    let out = stdout(&mgd(dir.path(), &fit_args));
    assert!(out.starts_with("final_mean_nll "));
    let log = std::fs::read_to_string(dir.path().join("fit/fit.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("iteration 20 mean_nll")));
    assert!(log.lines().any(|l| l.starts_with("sigma ")));
    assert_eq!(
        MgdFile::read(dir.path().join("fit/psi.mgd"))
            .unwrap()
            .channels(),
        2
    );
    assert_eq!(
        MgdFile::read(dir.path().join("fit/mu.mgd"))
            .unwrap()
            .pixels(),
        64
    );
}

#[test]
fn covrow_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let g = seeded_instance(dir.path());
    stdout(&mgd(
        dir.path(),
        &[
            "--sigma", "0.5", "--out", "row.mgd", "covrow", "psi.mgd", "--index", "9",
        ],
    ));
    let row = MgdFile::read(dir.path().join("row.mgd")).unwrap();
    assert_eq!((row.rows(), row.cols(), row.channels()), (8, 8, 1));
    assert_eq!(row.data(), g.covariance_row(9).unwrap().as_slice());
}

#[test]
fn reduce_check_reports_each_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&mgd(
        dir.path(),
        &["--sigma", "0.01", "reduce-check", "--n", "32"],
    ));
    let names: Vec<&str> = out
        .lines()
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(names, ["l2", "si", "gradient"]);
    let l2_gap: f64 = out
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(l2_gap <= 1e-9);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mgd(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        mgd(dir.path(), &["--sigma", "-1", "reduce-check"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        mgd(dir.path(), &["bench", "--n-sweep", "9"]).status.code(),
        Some(2)
    );
    assert_eq!(mgd(dir.path(), &["--help"]).status.code(), Some(0));
}
