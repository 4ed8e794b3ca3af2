use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use sndc::runner::CSV_HEADER;
use sndc::{ArchiveError, ExperimentConfig, RunError, Runner, SolutionArchive};
use sndc_core::coefficients::{check_assumptions, default_x_samples, default_y_samples, ParametricProblem};

fn config(text: &str, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(text).unwrap();
    cfg.output_dir = dir.to_path_buf();
    cfg.record_timing = false;
    cfg
}

const SMALL_CHECK: &str = "[check]\nx_samples = 11\ny_samples = 5\n";

#[test]
fn solve_writes_one_block_per_node_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("n = 8\nk = 1\np = [1, 1]\n{SMALL_CHECK}"), dir.path());
    let first = Runner::new(cfg.clone(), false).unwrap().run_solve().unwrap();
    assert_eq!(first.archive.nodes.len(), 4);
    let second = Runner::new(cfg, false).unwrap().run_solve().unwrap();
    assert_eq!(first.checksum, second.checksum);
    assert_eq!(std::fs::read(&first.path).unwrap(), first.archive.to_bytes());
}

#[test]
fn gaussian_grid_with_p8_has_81_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &format!("problem = \"section6-gaussian\"\nn = 4\nk = 1\np = [8, 8]\n[reference]\np = [8, 8]\n{SMALL_CHECK}"),
        dir.path(),
    );
    let out = Runner::new(cfg, false).unwrap().run_solve().unwrap();
    assert_eq!(out.archive.nodes.len(), 81);
}

#[test]
fn archive_round_trip_is_bitwise_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("n = 4\nk = 2\np = [2, 1]\n{SMALL_CHECK}"), dir.path());
    let out = Runner::new(cfg, false).unwrap().run_solve().unwrap();
    let bytes = std::fs::read(&out.path).unwrap();
    let loaded = SolutionArchive::from_bytes(&bytes).unwrap();
    assert_eq!(loaded, out.archive);
    let bits = |a: &SolutionArchive| -> Vec<u64> {
        a.nodes.iter().flat_map(|n| n.u.iter().chain(&n.g)).map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&loaded), bits(&out.archive));

    let rebuilt = loaded.clone().into_solution().unwrap();
    assert_eq!(rebuilt.nodes, out.solution.nodes);
    assert_eq!(rebuilt.grid.degrees(), vec![2, 1]);
    assert_eq!(rebuilt.disc.space().dim(), out.solution.disc.space().dim());

    let mut tampered = bytes.clone();
    let mid = tampered.len() / 2;
    tampered[mid] ^= 1;
    assert!(matches!(SolutionArchive::from_bytes(&tampered), Err(ArchiveError::Checksum)));
    assert!(matches!(SolutionArchive::from_bytes(b"garbage"), Err(ArchiveError::BadMagic)));

    let mut other = loaded.descriptor.clone();
    other.k = 3;
    assert!(matches!(loaded.descriptor.ensure_matches(&other), Err(ArchiveError::Mismatch(_))));
}

fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with('#'));
    text.split_once('\n').unwrap().1.to_string()
}

#[test]
fn h_study_csv_is_deterministic_sorted_and_reuses_the_reference() {
    let text =
        format!("n = 4\nk = 1\np = [1, 1]\nlevels = [2, 4]\n[reference]\nn = 8\nk = 2\np = [2, 2]\n{SMALL_CHECK}");
    let dir = tempfile::tempdir().unwrap();
    let runner = Runner::new(config(&text, dir.path()), false).unwrap();
    let first = runner.run_h_study().unwrap();
    let csv1 = body(&first.csv_path);
    let eoc1 = body(&first.summary_path);
    let second = runner.run_h_study().unwrap();
    assert_eq!(csv1, body(&second.csv_path));
    assert_eq!(eoc1, body(&second.summary_path));

    // a fresh directory recomputes the reference and gets the same bytes
    let dir2 = tempfile::tempdir().unwrap();
    let third = Runner::new(config(&text, dir2.path()), false).unwrap().run_h_study().unwrap();
    assert_eq!(csv1, body(&third.csv_path));

    let mut lines = csv1.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 2);
    let hs: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(hs[0] > hs[1]);
    for r in &rows {
        assert_eq!(r.len(), 9);
        assert_eq!(r[0], "h-study");
        assert_eq!(r[3], "1x1");
        assert!(r[4].parse::<f64>().unwrap() > 0.0);
        assert_eq!(r[8], "0");
    }
    assert!(second.records[1].error < second.records[0].error);
    assert_eq!(second.eoc.len(), 1);
}

#[test]
fn h_study_rejects_non_nested_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("levels = [3, 4]\n[reference]\nn = 8\n{SMALL_CHECK}"), dir.path());
    let err = Runner::new(cfg, false).unwrap().run_h_study().unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn p_study_of_y_independent_problem_has_roundoff_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &format!(
            "problem = \"manufactured-identity\"\nn = 4\nk = 1\np = [1, 1]\np_sweep = [0, 1, 2]\np_pinned = 1\n\
             [reference]\np = [3, 3]\n{SMALL_CHECK}"
        ),
        dir.path(),
    );
    let out = Runner::new(cfg, false).unwrap().run_p_study().unwrap();
    assert_eq!(out.records.len(), 3);
    for r in &out.records {
        assert!(r.error < 1e-12, "{}", r.error);
    }
    let ps: Vec<usize> = out.records.iter().map(|r| r.p[0]).collect();
    assert_eq!(ps, vec![0, 1, 2]);
}

#[test]
fn p_study_requires_a_finer_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("p = [1, 1]\np_sweep = [0, 1, 2, 6]\n{SMALL_CHECK}"), dir.path());
    let err = Runner::new(cfg, false).unwrap().run_p_study().unwrap_err();
    assert!(matches!(err, RunError::Config(_)));
}

#[test]
fn check_reports_identity_as_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("problem = \"manufactured-identity\"\n[check]\nx_samples = 21\ny_samples = 5", dir.path());
    let out = Runner::new(cfg, false).unwrap().run_check().unwrap();
    assert_eq!(out.report.lambda_est, 1.0);
    assert!((out.report.eps_est - 1.0).abs() < 1e-15);
    assert!(out.report.passed);
    let csv = std::fs::read_to_string(out.csv_path).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("manufactured-identity,1,"));
}

#[test]
fn strongly_anisotropic_matrix_still_satisfies_cordes_in_2d() {
    let mut problem = ParametricProblem::manufactured_identity();
    problem.diffusion = Arc::new(|_, _| [[1.0, 0.0], [0.0, 100.0]]);
    let xs = default_x_samples(&problem.domain, 5);
    let ys = default_y_samples(&problem.dims, 3);
    let r = check_assumptions(&problem, &xs, &ys).unwrap();
    // |A|^2 / (tr A)^2 = 10001 / 10201
    assert!((r.eps_est - (10201.0 / 10001.0 - 1.0)).abs() < 1e-14);
    assert!((r.lambda_est - 0.01).abs() < 1e-15);
    assert!(r.passed && r.eps_est < 0.03);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    assert_eq!(RunError::Assumption("x".into()).exit_code(), 3);
    assert_eq!(RunError::Solver("x".into()).exit_code(), 4);
    let cfg_err = ExperimentConfig::from_toml("k = 9").unwrap_err();
    assert_eq!(RunError::from(cfg_err).exit_code(), 2);
}

fn sndc() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sndc"));
    c.env_remove("SNDC_OUT").env("RUST_LOG", "warn");
    c
}

#[test]
fn binary_exit_codes_and_output_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "k = 0\n").unwrap();
    let status = sndc().args(["check", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let good = dir.path().join("good.toml");
    let from_config = dir.path().join("cfg-out");
    std::fs::write(
        &good,
        format!(
            "problem = \"manufactured-identity\"\noutput_dir = \"{}\"\n[check]\nx_samples = 5\ny_samples = 3\n",
            from_config.display()
        ),
    )
    .unwrap();
    let env_out = dir.path().join("env-out");
    let flag_out = dir.path().join("flag-out");

    let out = sndc().args(["check", "--threads", "2", "--config"]).arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict pass"));
    assert!(from_config.join("check.csv").exists());

    let status = sndc().args(["check", "--config"]).arg(&good).env("SNDC_OUT", &env_out).status().unwrap();
    assert!(status.success());
    assert!(env_out.join("check.csv").exists());

    let status = sndc()
        .args(["check", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&flag_out)
        .env("SNDC_OUT", &env_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(flag_out.join("check.csv").exists());
}
