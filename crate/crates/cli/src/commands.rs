//! Subcommand implementations. Each writes its artifacts plus a manifest
//! into the resolved output directory.

use std::fmt::Write as _;

use invaria::analysis::{basin_sample, stability_report, vector_field, Equilibrium, StabilityReport};
use invaria::integrate::{integrate, Settings};
use invaria::invariance::{
    check_equivariance, dc_coordinate_check, CoordinateCheck, DcOutputTest, Decision, InvarianceVerdict,
};
use invaria::model::{ExtendedParams, Model, State};
use invaria::output::{basin_csv, field_csv, phase_svg, residual_csv, trajectory_csv};
use invaria::signals::Schedule;
use serde::Serialize;

use crate::config::{PhaseSpec, Resolved};
use crate::manifest::Emitter;
use crate::CliError;

/// Tolerance for comparisons against the published values, which carry
/// three decimals.
pub const PAPER_TOL: f64 = 1e-3;

fn config_echo(run: &Resolved) -> serde_json::Value {
    let mut cfg = run.config.clone();
    cfg.output = None;
    serde_json::to_value(cfg).expect("config serializes")
}

fn finish(em: Emitter, command: &str, run: &Resolved) -> Result<(), CliError> {
    em.finish(command, run.seed, config_echo(run))?;
    Ok(())
}

/// `a, b` for real pairs, `a±bi` for conjugate pairs.
fn pair(e: &Equilibrium) -> String {
    let [l1, l2] = e.eigenvalues;
    if l1.im == 0.0 && l2.im == 0.0 {
        format!("{:.4}, {:.4}", l1.re, l2.re)
    } else {
        format!("{:.4}±{:.4}i", l1.re, l1.im.abs())
    }
}

pub fn equilibria_table(report: &StabilityReport) -> String {
    let p = &report.params;
    let mut s = String::new();
    let _ = writeln!(s, "r = {}, d = {}, b = {}, c = {}, s = {}, l = {}", report.r, report.d, p.b, p.c, p.s, p.l);
    let _ = writeln!(s, "{:<6}{:>12}{:>12}  {:<28}class", "point", "y", "z", "eigenvalues");
    for (name, e) in [("E1", &report.e1), ("E2", &report.e2)] {
        let _ = writeln!(
            s,
            "{name:<6}{:>12.4}{:>12.4}  {:<28}{}",
            e.point.0[0],
            e.point.0[1],
            pair(e),
            e.classification.as_str()
        );
    }
    let _ = writeln!(s, "E2: tau = {:.4}, delta = {:.4}", report.e2.tau, report.e2.delta);
    s
}

pub fn equilibria(run: &Resolved) -> Result<(), CliError> {
    let p = run.extended()?;
    let report = stability_report(&p, p.r0, p.d0)?;
    print!("{}", equilibria_table(&report));
    let mut em = Emitter::new(&run.out)?;
    em.write_json("equilibria.json", &report)?;
    finish(em, "equilibria", run)
}

pub fn simulate(run: &Resolved) -> Result<(), CliError> {
    let traj = integrate(&run.model, &run.initial, &run.schedule_refs(), &run.config.integrator)?;
    let mut em = Emitter::new(&run.out)?;
    em.write("trajectory.csv", &trajectory_csv(&traj))?;
    println!("{} rows written to {}", traj.len(), em.dir().join("trajectory.csv").display());
    finish(em, "simulate", run)
}

/// Field, equilibria, basin and SVG for one parameterization under constant
/// inputs `r`, `d`. File names are prefixed with `prefix`.
fn phase_artifacts(
    em: &mut Emitter,
    prefix: &str,
    p: &ExtendedParams,
    r: f64,
    d: f64,
    spec: &PhaseSpec,
    settings: &Settings,
) -> Result<StabilityReport, CliError> {
    let report = stability_report(p, r, d)?;
    em.write_json(&format!("{prefix}equilibria.json"), &report)?;
    let field = vector_field(p, r, d, &spec.grid)?;
    em.write(&format!("{prefix}field.csv"), &field_csv(&field))?;
    if spec.basin {
        let basin = basin_sample(p, r, d, &spec.grid, spec.basin_t_max, settings.h)?;
        em.write(&format!("{prefix}basin.csv"), &basin_csv(&basin))?;
    }
    if spec.svg {
        let traj_settings = Settings::new(settings.h, spec.trajectory_t_end, settings.decimate);
        let rs = Schedule::constant(r, spec.trajectory_t_end).map_err(|e| CliError::Config(e.to_string()))?;
        let ds = Schedule::constant(d, spec.trajectory_t_end).map_err(|e| CliError::Config(e.to_string()))?;
        let model = Model::Extended2(*p);
        let mut paths = Vec::new();
        for start in &spec.trajectories {
            let traj = integrate(&model, &State::new(*start), &[&rs, &ds], &traj_settings)?;
            paths.push(traj.states.iter().map(|s| [s.0[0], s.0[1]]).collect());
        }
        let g = &spec.grid;
        let inside = |e: &Equilibrium| {
            let [y, z] = [e.point.0[0], e.point.0[1]];
            y >= g.y.min && y <= g.y.max && z >= g.z.min && z <= g.z.max
        };
        let markers: Vec<([f64; 2], String)> = [("E1", &report.e1), ("E2", &report.e2)]
            .into_iter()
            .filter(|(_, e)| inside(e))
            .map(|(n, e)| ([e.point.0[0], e.point.0[1]], n.to_string()))
            .collect();
        em.write(&format!("{prefix}phase.svg"), &phase_svg(g, &field, &paths, &markers))?;
    }
    Ok(report)
}

pub fn phase(run: &Resolved) -> Result<(), CliError> {
    let p = run.extended()?;
    let mut em = Emitter::new(&run.out)?;
    let report = phase_artifacts(&mut em, "", &p, p.r0, p.d0, &run.config.experiment.phase, &run.config.integrator)?;
    print!("{}", equilibria_table(&report));
    finish(em, "phase", run)
}

fn invariance_artifacts(em: &mut Emitter, run: &Resolved) -> Result<Vec<InvarianceVerdict>, CliError> {
    let p = run.extended()?;
    let spec = &run.config.experiment.invariance;
    let mut verdicts = Vec::new();
    for test in &spec.tests {
        let outcome = DcOutputTest {
            params: p,
            param: &test.param,
            from: test.from,
            to: test.to,
            r: run.schedule("r"),
            d: run.schedule("d"),
            settings: run.config.integrator,
            transient: spec.transient,
            thresholds: spec.thresholds,
        }
        .run()?;
        let mut verdict = outcome.verdict;
        if let Some(eq) = spec.candidate(&test.param)? {
            let eq = if spec.candidates.iter().any(|c| c.param == test.param) { eq } else { eq.with_target(test.to) };
            let points = spec.grid.points_for(&eq, &p)?;
            verdict.max_condition_residual = Some(check_equivariance(&p, &eq, &points)?.max_residual());
        }
        println!(
            "{}: {} -> {}  max |dy| = {:.3e}  condition = {}  {}",
            verdict.param,
            verdict.from,
            verdict.to,
            verdict.max_output_residual,
            verdict.max_condition_residual.map_or("n/a".to_string(), |v| format!("{v:.3e}")),
            match verdict.decision {
                Decision::Invariant => "invariant",
                Decision::NotInvariant => "not-invariant",
            }
        );
        em.write(&format!("residual_{}.csv", test.param), &residual_csv(&outcome.series))?;
        em.write_json(&format!("verdict_{}.json", test.param), &verdict)?;
        verdicts.push(verdict);
    }
    Ok(verdicts)
}

pub fn invariance(run: &Resolved) -> Result<(), CliError> {
    let mut em = Emitter::new(&run.out)?;
    invariance_artifacts(&mut em, run)?;
    finish(em, "invariance", run)
}

fn dc_check_artifacts(em: &mut Emitter, run: &Resolved) -> Result<Vec<CoordinateCheck>, CliError> {
    let p = run.extended()?;
    let mut checks = Vec::new();
    for c in &run.config.experiment.dc_check.checks {
        let check = dc_coordinate_check(
            &p,
            &c.param,
            c.value,
            c.reference,
            run.schedule("r"),
            run.schedule("d"),
            &run.config.integrator,
        )?;
        println!(
            "{}: {} vs {}  eliminates {}: {}  max discrepancy = {:.3e}",
            check.param, check.value, check.reference, check.param, check.eliminates_param, check.max_discrepancy
        );
        checks.push(check);
    }
    em.write_json("dc_check.json", &checks)?;
    Ok(checks)
}

pub fn dc_check(run: &Resolved) -> Result<(), CliError> {
    let mut em = Emitter::new(&run.out)?;
    dc_check_artifacts(&mut em, run)?;
    finish(em, "dc-check", run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub name: String,
    pub computed: f64,
    pub paper: f64,
    pub abs_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictCheck {
    pub param: String,
    pub decision: Decision,
    pub expected: Decision,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub tolerance: f64,
    pub comparisons: Vec<Comparison>,
    pub verdicts: Vec<VerdictCheck>,
    pub all_pass: bool,
}

/// The four parameterizations of the phase-portrait figure.
pub const VARIANTS: [(&str, Option<(&str, f64)>); 4] =
    [("baseline", None), ("s", Some(("s", 1.5))), ("b", Some(("b", 0.6))), ("c", Some(("c", 4.0)))];

/// Published equilibrium coordinates and eigenvalues per variant, as
/// `(quantity, value)`. Complex pairs are listed by the upper member.
pub fn paper_values(variant: &str) -> &'static [(&'static str, f64)] {
    match variant {
        "baseline" => &[
            ("E1.y", -0.033),
            ("E1.z", 0.0),
            ("E2.y", 11.0),
            ("E2.z", 4.012),
            ("E1.lambda1", 0.300),
            ("E1.lambda2", -22.067),
            ("E2.re", -0.351),
            ("E2.im", 2.549),
        ],
        "s" => &[("E2.y", 11.0), ("E2.z", 0.669), ("E2.re", -0.351), ("E2.im", 2.549)],
        "b" => &[
            ("E1.y", -0.017),
            ("E1.z", 0.0),
            ("E2.y", 11.0),
            ("E2.z", 8.012),
            ("E1.lambda1", 0.6),
            ("E1.lambda2", -22.033),
            ("E2.re", -0.701),
            ("E2.im", 3.568),
        ],
        "c" => &[("E1.lambda1", 0.300), ("E1.lambda2", -44.133), ("E2.re", -0.351), ("E2.im", 3.622)],
        _ => &[],
    }
}

pub fn computed_value(report: &StabilityReport, quantity: &str) -> f64 {
    match quantity {
        "E1.y" => report.e1.point.0[0],
        "E1.z" => report.e1.point.0[1],
        "E2.y" => report.e2.point.0[0],
        "E2.z" => report.e2.point.0[1],
        "E1.lambda1" => report.e1.eigenvalues[0].re,
        "E1.lambda2" => report.e1.eigenvalues[1].re,
        "E2.re" => report.e2.eigenvalues[0].re,
        "E2.im" => report.e2.eigenvalues[0].im.abs(),
        other => panic!("unknown quantity {other}"),
    }
}

pub fn compare(variant: &str, report: &StabilityReport) -> Vec<Comparison> {
    paper_values(variant)
        .iter()
        .map(|(q, paper)| {
            let computed = computed_value(report, q);
            let abs_error = (computed - paper).abs();
            Comparison {
                name: format!("{variant}.{q}"),
                computed,
                paper: *paper,
                abs_error,
                pass: abs_error <= PAPER_TOL,
            }
        })
        .collect()
}

fn expected_decision(param: &str) -> Option<Decision> {
    match param {
        "s" => Some(Decision::Invariant),
        "b" | "c" => Some(Decision::NotInvariant),
        _ => None,
    }
}

/// Start points for portrait trajectories when the config lists none.
const DEFAULT_STARTS: [[f64; 2]; 4] = [[2.0, 8.0], [18.0, 1.0], [5.0, 0.5], [15.0, 9.0]];

pub fn reproduce_paper(run: &Resolved) -> Result<(), CliError> {
    let base = run.extended()?;
    let mut em = Emitter::new(&run.out)?;
    let mut phase = run.config.experiment.phase.clone();
    if phase.trajectories.is_empty() {
        phase.trajectories = DEFAULT_STARTS.to_vec();
    }

    let mut comparisons = Vec::new();
    for (name, change) in VARIANTS {
        let p = match change {
            Some((param, value)) => base.with(param, value)?,
            None => base,
        };
        let report = phase_artifacts(&mut em, &format!("{name}/"), &p, p.r0, p.d0, &phase, &run.config.integrator)?;
        println!("[{name}]");
        print!("{}", equilibria_table(&report));
        comparisons.extend(compare(name, &report));
    }

    let verdicts = invariance_artifacts(&mut em, run)?;
    dc_check_artifacts(&mut em, run)?;

    let verdict_checks: Vec<VerdictCheck> = verdicts
        .iter()
        .filter_map(|v| {
            expected_decision(&v.param).map(|expected| VerdictCheck {
                param: v.param.clone(),
                decision: v.decision,
                expected,
                pass: v.decision == expected,
            })
        })
        .collect();
    let all_pass = comparisons.iter().all(|c| c.pass) && verdict_checks.iter().all(|v| v.pass);
    let passed = comparisons.iter().filter(|c| c.pass).count();
    println!("paper comparison: {passed}/{} within {PAPER_TOL:e}", comparisons.len());
    em.write_json("summary.json", &Summary { tolerance: PAPER_TOL, comparisons, verdicts: verdict_checks, all_pass })?;
    finish(em, "reproduce-paper", run)
}
