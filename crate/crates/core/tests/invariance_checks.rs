use invaria::analysis::e2_point;
use invaria::integrate::Settings;
use invaria::invariance::{
    builtin_candidate, check_equivariance, dc_coordinate_check, ConditionGrid, DcOutputTest, Decision, InvarianceError,
    Thresholds,
};
use invaria::model::ExtendedParams;
use invaria::signals::{paper_schedule_d, paper_schedule_r};

const SEED: u64 = 42;

fn output_test(param: &str, from: f64, to: f64) -> Result<invaria::invariance::DcOutcome, InvarianceError> {
    let r = paper_schedule_r(SEED);
    let d = paper_schedule_d(SEED);
    DcOutputTest {
        params: ExtendedParams::paper(),
        param,
        from,
        to,
        r: &r,
        d: &d,
        settings: Settings::default(),
        transient: 50.0,
        thresholds: Thresholds::default(),
    }
    .run()
}

#[test]
fn s_change_leaves_output_unchanged_and_scales_z() {
    let out = output_test("s", 0.25, 1.5).unwrap();
    assert!(out.verdict.max_output_residual < 1e-5, "{}", out.verdict.max_output_residual);
    assert_eq!(out.verdict.decision, Decision::Invariant);
    let z_from = out.run_from.component(1);
    let z_to = out.run_to.component(1);
    for (a, b) in z_from.iter().zip(&z_to) {
        assert!((b - a * 0.25 / 1.5).abs() < 1e-6, "{a} {b}");
    }
}

#[test]
fn b_and_c_changes_move_the_output() {
    // regression baselines at seed 42: b 7.37, c 5.66
    for (param, from, to, baseline) in [("b", 0.3, 0.6, 7.37), ("c", 2.0, 4.0, 5.66)] {
        let v = output_test(param, from, to).unwrap().verdict;
        assert_eq!(v.decision, Decision::NotInvariant, "{param}");
        assert!(v.max_output_residual > 1e-2);
        assert!((v.max_output_residual - baseline).abs() < 0.01, "{param}: {}", v.max_output_residual);
    }
}

#[test]
fn coordinate_checks() {
    let p = ExtendedParams::paper();
    let r = paper_schedule_r(SEED);
    let d = paper_schedule_d(SEED);
    let settings = Settings::default();
    let s = dc_coordinate_check(&p, "s", 0.25, 1.0, &r, &d, &settings).unwrap();
    assert!(s.eliminates_param);
    assert!(s.max_discrepancy < 1e-8, "{}", s.max_discrepancy);
    let b = dc_coordinate_check(&p, "b", 0.6, 0.3, &r, &d, &settings).unwrap();
    assert!(!b.eliminates_param && b.max_discrepancy > 1e-2, "{}", b.max_discrepancy);
    let c = dc_coordinate_check(&p, "c", 4.0, 1.0, &r, &d, &settings).unwrap();
    assert!(!c.eliminates_param && c.max_discrepancy > 1e-2, "{}", c.max_discrepancy);
}

#[test]
fn transformed_initial_condition_is_substitution_of_nominal_start() {
    let p = ExtendedParams::paper();
    let r = paper_schedule_r(SEED);
    let d = paper_schedule_d(SEED);
    let settings = Settings::new(0.01, 10.0, 10);
    for (param, value) in [("s", 0.25), ("b", 0.6), ("c", 4.0)] {
        let check = dc_coordinate_check(&p, param, value, 1.0, &r, &d, &settings).unwrap();
        let [y0, z0] = e2_point(&p.with(param, value).unwrap(), 11.0, 0.01);
        let expected = match param {
            "b" => [z0, value * y0],
            _ => [value * z0, y0],
        };
        assert_eq!(check.initial, expected, "{param}");
    }
}

#[test]
fn zero_substitution_value_is_rejected() {
    let r = paper_schedule_r(SEED);
    let d = paper_schedule_d(SEED);
    let err = dc_coordinate_check(&ExtendedParams::paper(), "s", 0.0, 1.0, &r, &d, &Settings::default());
    assert_eq!(err.unwrap_err(), InvarianceError::ZeroValue);
}

#[test]
fn condition_residuals_on_default_grid() {
    let p = ExtendedParams::paper();
    let grid = ConditionGrid::default();
    let mut maxima = Vec::new();
    for param in ["s", "b", "c"] {
        let eq = builtin_candidate(param).unwrap();
        let pts = grid.points_for(&eq, &p).unwrap();
        assert!(!pts.is_empty());
        maxima.push(check_equivariance(&p, &eq, &pts).unwrap().max_residual());
    }
    assert!(maxima[0] < 1e-6, "s {}", maxima[0]);
    assert!(maxima[1] > 1e-2, "b {}", maxima[1]);
    assert!(maxima[2] > 1e-2, "c {}", maxima[2]);
}

#[test]
fn tightening_thresholds_never_turns_not_invariant_into_invariant() {
    let residuals = [1e-9, 1e-6, 3e-3, 0.02, 0.5, 7.0];
    let bands = [(1e-5, 1e-2), (1e-6, 1e-2), (1e-7, 1e-3), (1e-10, 1e-4)];
    for r in residuals {
        let mut seen_not = false;
        for (lo, hi) in bands {
            let t = Thresholds { invariant_below: lo, not_invariant_above: hi };
            match t.decide(r) {
                Ok(Decision::NotInvariant) => seen_not = true,
                Ok(Decision::Invariant) => assert!(!seen_not, "residual {r} flipped at {lo}"),
                Err(_) => {}
            }
        }
    }
}
