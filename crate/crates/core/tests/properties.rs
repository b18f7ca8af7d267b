use proptest::prelude::*;
use relaxrk::harness::{self, ExperimentSpec, Mode, CSV_HEADER};
use relaxrk::problems::{self, ProblemOptions};
use relaxrk::stepper::{integrate, IntegrateOptions, Strategy};
use relaxrk::{RelaxationConfig, Tableau, Tolerances};

const ODES: [&str; 4] = [
    "harmonic_oscillator",
    "nonlinear_oscillator",
    "nonlinear_pendulum",
    "conserved_exponential_entropy",
];

fn strategy_strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    let mut all = vec![Strategy::Baseline];
    all.extend(Strategy::all_relaxation());
    proptest::sample::select(all)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rhs_counts_follow_the_contract(
        name in proptest::sample::select(ODES.to_vec()),
        method in proptest::sample::select(vec!["bs3", "dp5"]),
        s in strategy_strategy(),
        log_tol in -9.0f64..-3.0,
    ) {
        let p = problems::by_name(name, &ProblemOptions::default()).unwrap();
        let t = Tableau::by_name(method).unwrap();
        let opts = IntegrateOptions {
            compute_error: false,
            ..IntegrateOptions::adaptive(3.0, Tolerances::uniform(10f64.powf(log_tol)).unwrap())
        };
        let r = integrate(p.as_ref(), &t, s, &opts);
        prop_assert!(r.succeeded(), "{:?}", r.failure);
        let m = t.main_stage_count() as u64;
        let mut expected = m * (r.accepted + r.rejected) + 2;
        if s == Strategy::Naive {
            expected += r.accepted - 1;
        }
        prop_assert_eq!(r.rhs_calls, expected);
    }

    #[test]
    fn relaxed_runs_keep_entropy_within_per_step_bound(
        name in proptest::sample::select(vec!["harmonic_oscillator", "nonlinear_oscillator", "nonlinear_pendulum"]),
        method in proptest::sample::select(vec!["bs3", "dp5"]),
        s in proptest::sample::select(Strategy::all_relaxation()),
        log_tol in -9.0f64..-3.0,
    ) {
        let p = problems::by_name(name, &ProblemOptions::default()).unwrap();
        let t = Tableau::by_name(method).unwrap();
        let opts = IntegrateOptions {
            compute_error: false,
            ..IntegrateOptions::adaptive(10.0, Tolerances::uniform(10f64.powf(log_tol)).unwrap())
        };
        let r = integrate(p.as_ref(), &t, s, &opts);
        prop_assert!(r.succeeded());
        let eta0 = p.entropy(&p.initial_state());
        let bound = r.accepted as f64 * RelaxationConfig::default().residual_bound(eta0);
        prop_assert!(r.entropy_drift <= bound, "{} > {}", r.entropy_drift, bound);
        prop_assert!(r.relaxation_fallbacks == 0);
    }

    #[test]
    fn identical_inputs_give_identical_records(
        name in proptest::sample::select(ODES.to_vec()),
        s in strategy_strategy(),
        log_tol in -8.0f64..-3.0,
    ) {
        let p = problems::by_name(name, &ProblemOptions::default()).unwrap();
        let opts = IntegrateOptions::adaptive(2.0, Tolerances::uniform(10f64.powf(log_tol)).unwrap());
        let mut a = integrate(p.as_ref(), &Tableau::bs3(), s, &opts);
        let mut b = integrate(p.as_ref(), &Tableau::bs3(), s, &opts);
        a.runtime_ns = 0;
        b.runtime_ns = 0;
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

#[test]
fn slope_window_ties_prefer_coarse_steps() {
    // two equally long consistent runs: order 3 at coarse, order 1 at fine
    let pts = [(0.4, 6.4e-2), (0.2, 8e-3), (0.1, 1e-3), (0.05, 2e-4), (0.025, 1e-4), (0.0125, 5e-5)];
    let s = harness::fit_slope(&pts, 1e-12).unwrap();
    assert!((s - 3.0).abs() < 1e-9, "{s}");
}

#[test]
fn work_precision_csv_is_deterministic_and_well_formed() {
    let mut spec = ExperimentSpec::new(
        Mode::WorkPrecision,
        "nonlinear_pendulum",
        "bs3",
        vec![Strategy::Baseline, Strategy::fsal_r(), Strategy::r_fsal()],
        5.0,
    );
    spec.tols = vec![1e-4, 1e-6];
    let csv_of = |spec: &ExperimentSpec| {
        let rows = harness::run(spec).unwrap();
        assert!(harness::all_rows_pass(&rows));
        let mut buf = Vec::new();
        harness::write_csv(&rows, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let (a, b) = (csv_of(&spec), csv_of(&spec));

    let mut reader = csv::Reader::from_reader(a.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, CSV_HEADER);
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 6);
    for r in &records {
        assert_eq!(r.len(), CSV_HEADER.len());
        assert_eq!(&r[12], "ok");
        let err: f64 = r[5].parse().unwrap();
        assert!(err.is_finite() && err > 0.0);
    }

    let strip = |s: &str| -> Vec<String> { s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect() };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn convergence_marks_non_convergent_series_failed() {
    let mut spec = ExperimentSpec::new(Mode::Convergence, "zero", "bs3", vec![Strategy::Naive], 1.0);
    spec.dts = vec![0.1, 0.05, 0.025];
    let series = harness::run_convergence(&spec).unwrap();
    // zero error everywhere: no slope can be fitted
    assert_eq!(series[0].slope, None);
    assert!(!harness::all_rows_pass(&series[0].rows));
}

#[test]
fn conservation_check_is_seeded() {
    let mut spec = ExperimentSpec::new(Mode::Single, "bbm_quadratic", "dp5", vec![Strategy::Naive], 1.0);
    spec.seed = 7;
    let a = harness::conservation_check(&spec, 8).unwrap();
    let b = harness::conservation_check(&spec, 8).unwrap();
    assert_eq!(a, b);
    assert!(a < 1e-11);
}
