use std::process::{Command, Output};

fn relaxrk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaxrk"))
        .args(args)
        .env_remove("RUST_BACKTRACE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

const HEADER: &str = "problem,method,strategy,variant,tol_or_dt,final_error,entropy_drift,rhs_calls,accepted,rejected,gamma_min,gamma_max,status,runtime_ns";

#[test]
fn single_run_writes_header_and_one_row() {
    let o = relaxrk(&["--problem", "harmonic_oscillator", "--strategy", "fsal-r", "--tend", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), HEADER);
    let r = rows(&out);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][2], "fsal-r");
    assert_eq!(r[0][3], "interpolation");
    assert_eq!(r[0][12], "ok");
    let drift: f64 = r[0][6].parse().unwrap();
    assert!(drift < 1e-12, "{drift}");
}

#[test]
fn convergence_rows_follow_the_ladder() {
    let o = relaxrk(&[
        "--mode",
        "convergence",
        "--problem",
        "harmonic_oscillator",
        "--method",
        "rk4",
        "--strategy",
        "naive",
        "--dts",
        "0.2,0.1,0.05",
        "--tend",
        "2",
    ]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    let dts: Vec<f64> = r.iter().map(|row| row[4].parse().unwrap()).collect();
    assert_eq!(dts, vec![0.2, 0.1, 0.05]);
    let errs: Vec<f64> = r.iter().map(|row| row[5].parse().unwrap()).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("observed slope"));
}

#[test]
fn work_precision_writes_file_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let o = relaxrk(&[
            "--mode",
            "work-precision",
            "--problem",
            "nonlinear_oscillator",
            "--method",
            "dp5",
            "--strategy",
            "baseline,naive,fsal-r,r-fsal",
            "--tols",
            "1e-4,1e-6",
            "--tend",
            "10",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        assert!(o.stdout.is_empty());
    }
    let strip = |p: &std::path::Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let (ra, rb) = (strip(&a), strip(&b));
    assert_eq!(ra.len(), 9);
    assert_eq!(ra, rb);
}

#[test]
fn trajectory_dump_has_one_line_per_accepted_step() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let o = relaxrk(&[
        "--problem",
        "nonlinear_pendulum",
        "--strategy",
        "naive",
        "--dts",
        "0.1",
        "--tend",
        "1",
        "--no-error",
        "--trajectory",
        traj.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let accepted: usize = rows(&stdout(&o))[0][8].parse().unwrap();
    let text = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,gamma,dt,entropy,u0,u1");
    // header plus the initial state
    assert_eq!(text.lines().count(), accepted + 2);
}

#[test]
fn all_relaxation_expands_to_every_variant() {
    let o = relaxrk(&["--problem", "harmonic_oscillator", "--strategy", "all-relaxation", "--tend", "1"]);
    assert!(o.status.success());
    assert_eq!(rows(&stdout(&o)).len(), 15);
}

#[test]
fn bad_arguments_fail_with_message() {
    let o = relaxrk(&["--problem", "no_such_problem"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_problem"));

    let o = relaxrk(&["--mode", "convergence"]);
    assert!(!o.status.success());

    let o = relaxrk(&["--strategy", "fsal-r", "--method", "rk4"]);
    assert!(!o.status.success(), "fsal strategies need an fsal pair");
}

#[test]
fn failed_rows_set_the_exit_code() {
    let o = relaxrk(&["--problem", "harmonic_oscillator", "--tend", "100", "--max-steps", "3"]);
    assert!(!o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r[0][12], "failed");
}

#[test]
fn controller_overrides_change_the_run() {
    let base = relaxrk(&["--problem", "nonlinear_oscillator", "--tend", "10"]);
    let tuned = relaxrk(&["--problem", "nonlinear_oscillator", "--tend", "10", "--beta", "1,0,0"]);
    assert!(base.status.success() && tuned.status.success());
    assert_ne!(rows(&stdout(&base))[0][7], rows(&stdout(&tuned))[0][7]);
}
