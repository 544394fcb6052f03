use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rcdlms"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A small configuration written into `dir`.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("cfg.toml");
    run_ok(bin().args(["generate", "--K", "6", "--L", "2", "--degree-max", "3", "--trials", "20", "--window", "50"]).arg("-o").arg(&path));
    path
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn generate_is_byte_identical_across_invocations() {
    let dir = TempDir::new().unwrap();
    for name in ["a.toml", "b.toml"] {
        run_ok(bin().args(["generate", "--K", "8", "--L", "2", "--topology-seed", "4"]).arg("-o").arg(dir.path().join(name)));
    }
    assert_eq!(read(dir.path().join("a.toml")), read(dir.path().join("b.toml")));
    assert_eq!(read(dir.path().join("a.model.toml")), read(dir.path().join("b.model.toml")));
}

#[test]
fn generate_defaults_describe_the_twenty_node_network() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("default.toml");
    run_ok(bin().arg("generate").arg("-o").arg(&path));
    let text = read(&path);
    for line in ["nodes = 20", "degree_min = 1", "degree_max = 7", "weights = \"relative-degree\"", "dimension = 4"] {
        assert!(text.contains(line), "missing `{line}`");
    }
    assert!(text.contains("nodes 20\n"));
}

#[test]
fn invalid_configurations_are_rejected_with_field_names() {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/invalid");
    let mut seen = 0;
    for entry in fs::read_dir(&corpus).unwrap() {
        let path = entry.unwrap().path();
        let text = read(&path);
        let expect = text.lines().next().unwrap().strip_prefix("# expect: ").unwrap().to_string();
        let dir = TempDir::new().unwrap();
        let out = bin().arg("run").arg("-c").arg(&path).arg("-o").arg(dir.path()).output().unwrap();
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(1), "{}: {stderr}", path.display());
        assert!(stderr.contains(&expect), "{}: expected `{expect}` in {stderr}", path.display());
        seen += 1;
    }
    assert!(seen >= 10);
}

#[test]
fn run_writes_all_artifacts_in_the_documented_formats() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    run_ok(bin().arg("run").arg("-c").arg(&cfg).args(["--mode", "rc", "--M", "1", "--iterations", "300"]).arg("-o").arg(&out));
    let curve = read(out.join("curve.csv"));
    let mut lines = curve.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,msd_db_network,msd_db_node_1,msd_db_node_2,msd_db_node_3,msd_db_node_4,msd_db_node_5,msd_db_node_6"
    );
    assert_eq!(curve.lines().count(), 301);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    // 17 significant digits in scientific notation.
    let mantissa = first[1].split('e').next().unwrap().trim_start_matches('-');
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);

    let steady = read(out.join("steady.csv"));
    assert!(steady.starts_with("node,eta_theory,eta_exp,eta_theory_db,eta_exp_db,delta_db\n"));
    assert_eq!(steady.lines().count(), 8);
    assert!(steady.lines().last().unwrap().starts_with("network,"));

    let theory: serde_json::Value = serde_json::from_str(&read(out.join("theory.json"))).unwrap();
    assert_eq!(theory["label"], "rc M=1");
    assert_eq!(theory["eta_theory"].as_array().unwrap().len(), 6);
    assert!(theory["rho_fd"].as_f64().unwrap() < 1.0);
    assert_eq!(theory["config_sha256"].as_str().unwrap().len(), 64);
    assert!(read(out.join("manifest.toml")).contains("[[artifacts]]"));
}

#[test]
fn replay_reproduces_artifacts_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let first = dir.path().join("first");
    run_ok(bin().arg("run").arg("-c").arg(&cfg).args(["--mode", "pdlms", "--p", "0.5", "--iterations", "200"]).arg("-o").arg(&first));
    let second = dir.path().join("second");
    let out = run_ok(bin().arg("replay").arg("--manifest").arg(first.join("manifest.toml")).arg("-o").arg(&second));
    assert!(String::from_utf8_lossy(&out.stdout).contains("bit-exactly"));
    for name in ["curve.csv", "steady.csv", "theory.json"] {
        assert_eq!(read(first.join(name)), read(second.join(name)), "{name}");
    }
}

#[test]
fn rc_modes_collapse_to_lms_and_dlms() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let run = |args: &[&str], name: &str| {
        let out = dir.path().join(name);
        let o = run_ok(bin().arg("run").arg("-c").arg(&cfg).args(args).args(["--iterations", "200"]).arg("-o").arg(&out));
        (String::from_utf8_lossy(&o.stdout).into_owned(), read(out.join("curve.csv")), read(out.join("steady.csv")))
    };
    let (label0, curve0, steady0) = run(&["--mode", "rc", "--M", "0"], "rc0");
    let (_, lms_curve, lms_steady) = run(&["--mode", "lms"], "lms");
    assert!(label0.contains("non-cooperative LMS equivalent"));
    assert_eq!(curve0, lms_curve);
    assert_eq!(steady0, lms_steady);

    let (label_max, curve_max, steady_max) = run(&["--mode", "rc", "--M", "50"], "rcmax");
    let (_, dlms_curve, dlms_steady) = run(&["--mode", "dlms"], "dlms");
    assert!(label_max.contains("DLMS equivalent"));
    assert_eq!(curve_max, dlms_curve);
    assert_eq!(steady_max, dlms_steady);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let mut curves = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        run_ok(
            bin()
                .env("RCDLMS_THREADS", threads)
                .arg("run")
                .arg("-c")
                .arg(&cfg)
                .args(["--mode", "rc", "--M", "2", "--iterations", "200", "--trials", "64"])
                .arg("-o")
                .arg(&out),
        );
        curves.push(read(out.join("curve.csv")));
    }
    assert_eq!(curves[0], curves[1]);
}

#[test]
fn sweep_shape_and_single_point_consistency() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let sweep = dir.path().join("sweep");
    run_ok(
        bin()
            .arg("sweep")
            .arg("-c")
            .arg(&cfg)
            .args(["--M", "0,1,2", "--mu", "0.01,0.02", "--iterations", "200"])
            .arg("-o")
            .arg(&sweep),
    );
    let rows = read(sweep.join("sweep.csv"));
    assert_eq!(rows.lines().count() - 1, 3 * 2 * (6 + 1));
    assert_eq!(read(sweep.join("curves.csv")).lines().count() - 1, 3 * 2 * 200);
    assert!(read(sweep.join("plot.py")).contains("matplotlib"));

    let single = dir.path().join("single");
    run_ok(bin().arg("sweep").arg("-c").arg(&cfg).args(["--M", "1", "--mu", "0.01", "--iterations", "200"]).arg("-o").arg(&single));
    let run = dir.path().join("run");
    run_ok(bin().arg("run").arg("-c").arg(&cfg).args(["--mode", "rc", "--M", "1", "--iterations", "200"]).arg("-o").arg(&run));
    let sweep_rows: Vec<String> = read(single.join("sweep.csv"))
        .lines()
        .skip(1)
        .map(|l| {
            // Drop the leading `mu,M` and trailing status columns.
            let f: Vec<&str> = l.split(',').collect();
            f[2..f.len() - 1].join(",")
        })
        .collect();
    let run_rows: Vec<String> = read(run.join("steady.csv")).lines().skip(1).map(String::from).collect();
    assert_eq!(sweep_rows, run_rows);
}

#[test]
fn unstable_grid_points_are_recorded_not_fatal() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let sweep = dir.path().join("sweep");
    run_ok(bin().arg("sweep").arg("-c").arg(&cfg).args(["--M", "1", "--mu", "0.01,10", "--iterations", "100"]).arg("-o").arg(&sweep));
    let rows = read(sweep.join("sweep.csv"));
    assert_eq!(rows.lines().filter(|l| l.contains("mean-unstable")).count(), 7);
    assert_eq!(rows.lines().filter(|l| l.ends_with(",ok")).count(), 7);
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let unstable = dir.path().join("unstable.toml");
    fs::write(&unstable, read(&cfg).replace("step_size = 0.01", "step_size = 10.0")).unwrap();
    let out = bin().arg("run").arg("-c").arg(&unstable).arg("-o").arg(dir.path().join("u")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho(I - MR)"));

    let missing = bin().args(["run", "-c", "/definitely/not/here.toml", "-o"]).arg(dir.path()).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));

    let out = bin().args(["generate", "--K", "5", "--degree-max", "9", "-o"]).arg(dir.path().join("x.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("network.degree_max"));

    let out = bin().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
