use std::fs;
use std::path::Path;

use assert_cmd::Command;
use debut::io;
use debut::DenseMatrix;
use predicates::prelude::*;

const BUTTERFLY: &str = "16 <-(2,2,8)- 16 <-(2,2,4)- 16 <-(2,2,2)- 16 <-(2,2,1)- 16\n";

fn debut() -> Command {
    Command::cargo_bin("debut").unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout_of(cmd: &mut Command) -> String {
    String::from_utf8(cmd.assert().success().get_output().stdout.clone()).unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.txt", BUTTERFLY);
    let broken = write(dir.path(), "broken.txt", "16 16 2 2 8\n32 32 2 2 4\n");
    let garbage = write(dir.path(), "garbage.txt", "16 <-(2,2");

    debut().args(["validate", &good]).assert().code(0).stdout(predicate::str::contains("valid: yes"));
    debut()
        .args(["validate", &broken])
        .assert()
        .code(1)
        .stdout(predicate::str::contains("junction 1"));
    debut().args(["validate", &garbage]).assert().code(2);
    debut().args(["validate", "no/such/file"]).assert().code(2);
}

#[test]
fn info_reports_compression() {
    let out = stdout_of(debut().args(["info", "lenet_fc1", "--manifest", "lenet", "--layer", "fc1"]));
    assert!(out.contains("LC: 85.00%"), "{out}");
    assert!(out.contains("MC: 70.78%"), "{out}");
    assert!(out.contains("params: 17962 of 61482"), "{out}");

    let out = stdout_of(debut().args(["info", "vgg_conv13"]));
    assert!(out.contains("LC: 96.79%"), "{out}");
    assert!(out.contains("ratio 0.0321"), "{out}");

    let out = stdout_of(debut().args(["info", "8 <-(1,1,1)- 8"]));
    assert!(out.contains("LC: 87.50%"), "{out}");

    let out = stdout_of(debut().args(["info", "lenet_conv2_b", "--conv", "8,16,3,1,0,13,13"]));
    assert!(out.contains("121 columns"), "{out}");

    debut().args(["info", "lenet_fc1", "--manifest", "lenet", "--layer", "fc9"]).assert().code(2);
}

#[test]
fn bipolar_is_deterministic() {
    let a = stdout_of(debut().args(["bipolar", "butterfly16", "--seed", "3", "--pattern"]));
    let b = stdout_of(debut().args(["bipolar", "butterfly16", "--seed", "3", "--pattern"]));
    assert_eq!(a, b);
    assert!(a.contains("PASS"));
    assert_eq!(a.lines().skip(1).count(), 16);
    debut()
        .args(["bipolar", "4 <-(2,2,1)- 4 <-(2,2,1)- 4"])
        .assert()
        .code(1)
        .stdout(predicate::str::contains("FAIL"));
}

#[test]
fn materialize_writes_bipolar_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.dbmt");
    debut().args(["materialize", "butterfly16", "-o", out.to_str().unwrap()]).assert().success();
    let m = io::read_matrix(&out).unwrap();
    assert_eq!((m.rows(), m.cols()), (16, 16));
    assert!(m.data().iter().all(|v| v.abs() == 1.0));

    let csv = dir.path().join("m.csv");
    debut().args(["materialize", "butterfly16", "-o", csv.to_str().unwrap()]).assert().success();
    assert_eq!(io::read_matrix_any(&csv).unwrap(), m);
}

#[test]
fn apply_matches_materialized_product() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["butterfly16", "lenet_conv2_b", "lenet_fc2"] {
        let spec = debut::fixtures::get(name).unwrap().spec();
        let x = DenseMatrix::from_fn(spec.cols_in(), 5, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let xp = dir.path().join("x.dbmt");
        io::write_matrix(&xp, &x).unwrap();
        let m = dir.path().join("m.dbmt");
        let y = dir.path().join("y.dbmt");
        let yd = dir.path().join("yd.dbmt");
        let x_arg = xp.to_str().unwrap();
        debut().args(["materialize", name, "--seed", "4", "-o", m.to_str().unwrap()]).assert().success();
        debut()
            .args(["apply", name, "--seed", "4", "-i", x_arg, "-o", y.to_str().unwrap()])
            .assert()
            .success();
        debut()
            .args(["apply", name, "--seed", "4", "--dense", "-i", x_arg, "-o", yd.to_str().unwrap()])
            .assert()
            .success();
        let product = io::read_matrix(&m).unwrap().matmul(&x).unwrap();
        let expect = io::encode_matrix(&product).unwrap();
        assert_eq!(fs::read(&y).unwrap(), expect, "{name}");
        assert_eq!(fs::read(&yd).unwrap(), expect, "{name}");
    }
}

#[test]
fn fit_recovers_representable_target() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.dbmt");
    debut()
        .args(["materialize", "butterfly16", "--init", "gaussian:1", "--seed", "9"])
        .args(["-o", target.to_str().unwrap()])
        .assert()
        .success();
    let out = dir.path().join("fit");
    let text = stdout_of(
        debut()
            .args(["fit", "butterfly16", "-t", target.to_str().unwrap(), "-o", out.to_str().unwrap()])
            .args(["--sweeps", "10", "--tol", "0"]),
    );
    let err: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("final relative error: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 1e-3, "{text}");
    assert!(out.join("factor_01.dbf1").is_file());
    assert!(out.join("factor_04.dbf1").is_file());
    let history = fs::read_to_string(out.join("error_history.csv")).unwrap();
    let sweeps: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("sweeps: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((1..=10).contains(&sweeps));
    assert_eq!(history.lines().count(), 1 + 2 * sweeps);

    // Fitted factors feed back into materialize.
    let again = dir.path().join("again.dbmt");
    debut()
        .args(["materialize", "butterfly16", "--factors", out.to_str().unwrap()])
        .args(["-o", again.to_str().unwrap()])
        .assert()
        .success();
    let f = io::read_matrix(&target).unwrap();
    let g = io::read_matrix(&again).unwrap();
    assert!(f.distance(&g).unwrap() / f.frobenius_norm() < 1e-3);

    debut()
        .args(["materialize", "lenet_fc2", "--factors", out.to_str().unwrap(), "-o", "unused.dbmt"])
        .assert()
        .code(2);
}

#[test]
fn bench_reports_mac_ratio() {
    let out = stdout_of(debut().args(["bench", "butterfly16", "--columns", "8", "--repeats", "1"]));
    assert!(out.contains("MAC ratio: 0.5000"), "{out}");
    assert!(out.contains("chain MACs: 1024"), "{out}");
}

#[test]
fn conv_identity_pointwise() {
    let dir = tempfile::tempdir().unwrap();
    let x = debut::Tensor3::from_vec(2, 2, 3, (0..12).map(|v| v as f64).collect()).unwrap();
    let xp = dir.path().join("x.dbt3");
    io::write_tensor(&xp, &x).unwrap();
    let bias = write(dir.path(), "b.csv", "1,-1\n");
    let yp = dir.path().join("y.dbt3");
    debut()
        .args(["conv", "2 <-(1,1,1)- 2", "--init", "uniform:1,1", "--shape", "2,2,1,1,0,2,3"])
        .args(["-i", xp.to_str().unwrap(), "--bias", &bias, "-o", yp.to_str().unwrap()])
        .assert()
        .success();
    let y = io::read_tensor(&yp).unwrap();
    let want: Vec<f64> = (0..12).map(|v| v as f64 + if v < 6 { 1.0 } else { -1.0 }).collect();
    assert_eq!(y.data(), &want[..]);
}

#[test]
fn generate_lists_candidates() {
    let out = stdout_of(debut().args(["generate", "16", "16", "--max-factors", "4", "--max-candidates", "50"]));
    assert!(out.lines().any(|l| l.starts_with(BUTTERFLY.trim())), "{out}");
    assert!(out.lines().all(|l| l.contains("LC ")));
    debut().args(["generate", "7", "7", "--style", "bulging"]).assert().code(1);
    debut().args(["generate", "7", "7", "--style", "wavy"]).assert().code(2);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.dbmt");
    let b = dir.path().join("b.dbmt");
    for (threads, path) in [("1", &a), ("3", &b)] {
        debut()
            .args(["materialize", "vgg_conv8", "--init", "gaussian:1", "--threads", threads])
            .args(["-o", path.to_str().unwrap()])
            .assert()
            .success();
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}
