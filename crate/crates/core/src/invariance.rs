//! Numerical checks of P-invariance and dynamical compensation for the
//! extended model.
//!
//! Two coordinate systems are in use. For the `s` and `b` candidates the
//! output is `y`, so `x1 = z` and `x2 = y`. For the `c` candidate the output
//! is `z`, so `x1 = y` and `x2 = z`. [`Coordinates`] owns that permutation;
//! everything else in the crate works in `(y, z)`.
//!
//! A candidate equivariance is `eta(x1, x2) = (alpha(x1, x2), x2)`. Keeping
//! the second component equal to `x2` makes the output map invariant by
//! construction, so only `alpha` is user-supplied.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{e2_point, Axis};
use crate::expr::{self, default_step, partial_fd, Bindings, Expr, ExprError};
use crate::integrate::{integrate, IntegrateError, Settings, Trajectory};
use crate::model::{from_expressions, rhs_extended, ExtendedParams, Model, ModelError, State, System};
use crate::signals::Schedule;

/// Grid points closer than this to a candidate's singular set are rejected.
pub const SINGULAR_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvarianceError {
    #[error("grid point (x1={x1}, x2={x2}, r={r}) is within {SINGULAR_EPS:e} of the singular set `{set}`")]
    Singular { x1: f64, x2: f64, r: f64, set: String },
    #[error("output residual {residual:e} falls between the invariant ({invariant_below:e}) and not-invariant ({not_invariant_above:e}) thresholds")]
    Undecided { residual: f64, invariant_below: f64, not_invariant_above: f64 },
    #[error("thresholds must satisfy 0 < invariant_below <= not_invariant_above")]
    BadThresholds,
    #[error("no coordinate substitution is known for parameter `{0}`")]
    NoSubstitution(String),
    #[error("substitution value must be non-zero")]
    ZeroValue,
    #[error("transient {transient} leaves no samples in a run of length {t_end}")]
    Transient { transient: f64, t_end: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coordinates {
    /// `x1 = z`, `x2 = y`.
    YOutput,
    /// `x1 = y`, `x2 = z`.
    ZOutput,
}

impl Coordinates {
    pub fn to_x(self, yz: [f64; 2]) -> [f64; 2] {
        match self {
            Coordinates::YOutput => [yz[1], yz[0]],
            Coordinates::ZOutput => yz,
        }
    }

    pub fn to_yz(self, x: [f64; 2]) -> [f64; 2] {
        // the permutation is an involution
        self.to_x(x)
    }

    /// Extended right-hand side expressed in these coordinates.
    pub fn rhs(self, x: [f64; 2], r: f64, d: f64, p: &ExtendedParams) -> [f64; 2] {
        self.to_x(rhs_extended(self.to_yz(x), r, d, p))
    }
}

/// Candidate equivariance for a change of one parameter from `param_from`
/// to `param_to`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equivariance {
    pub param: String,
    pub param_from: f64,
    pub param_to: f64,
    /// First component of eta over `x1`, `x2`, `r`, `d` and the model
    /// parameters (bound at `param_to`).
    pub alpha: Expr,
    pub coords: Coordinates,
    /// Expression that must stay away from zero for `alpha` to be defined.
    pub singular: Option<Expr>,
}

impl Equivariance {
    pub fn new(
        param: &str,
        param_from: f64,
        param_to: f64,
        alpha: &str,
        coords: Coordinates,
        singular: Option<&str>,
    ) -> Result<Self, InvarianceError> {
        Ok(Equivariance {
            param: param.to_string(),
            param_from,
            param_to,
            alpha: expr::parse(alpha)?,
            coords,
            singular: singular.map(expr::parse).transpose()?,
        })
    }

    /// Second component of eta; always `x2` so the output is preserved.
    pub fn beta(&self) -> Expr {
        Expr::sym("x2")
    }

    pub fn with_target(mut self, param_to: f64) -> Self {
        self.param_to = param_to;
        self
    }

    fn env(&self, p_to: &ExtendedParams, x: [f64; 2], r: f64, d: f64) -> Bindings {
        let mut env = p_to.bindings();
        env.set("x1", x[0]).set("x2", x[1]).set("r", r).set("d", d);
        env
    }

    /// eta(x) in x-coordinates.
    pub fn eta(&self, p: &ExtendedParams, x: [f64; 2], r: f64, d: f64) -> Result<[f64; 2], InvarianceError> {
        let p_to = p.with(&self.param, self.param_to)?;
        let env = self.env(&p_to, x, r, d);
        Ok([self.alpha.eval(&env)?, self.beta().eval(&env)?])
    }
}

/// The closed-form candidates for `s`, `b` and `c`, each normalized to a
/// nominal parameter value of 1:
///
/// * `alpha_s = x1/s` in y-output coordinates,
/// * `alpha_b = (x2 + s x1 (l r - x2) - b x2) / (s (l r - x2))` in y-output
///   coordinates,
/// * `alpha_c = ((c - 1) r + x1) / c` in z-output coordinates.
///
/// Targets are s = 1.5, b = 0.6 and c = 4.
pub fn builtin_candidates() -> Vec<Equivariance> {
    vec![
        Equivariance::new("s", 1.0, 1.5, "x1/s", Coordinates::YOutput, Some("l*r - x2")),
        Equivariance::new(
            "b",
            1.0,
            0.6,
            "(x2 + s*x1*(l*r - x2) - b*x2)/(s*(l*r - x2))",
            Coordinates::YOutput,
            Some("l*r - x2"),
        ),
        Equivariance::new("c", 1.0, 4.0, "((c - 1)*r + x1)/c", Coordinates::ZOutput, Some("c*x2")),
    ]
    .into_iter()
    .map(|e| e.expect("built-in candidate parses"))
    .collect()
}

pub fn builtin_candidate(param: &str) -> Option<Equivariance> {
    builtin_candidates().into_iter().find(|e| e.param == param)
}

/// State and input samples for condition checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionGrid {
    pub x1: Axis,
    pub x2: Axis,
    pub r: Vec<f64>,
    pub d: Vec<f64>,
}

impl Default for ConditionGrid {
    fn default() -> Self {
        ConditionGrid {
            x1: Axis::new(0.1, 20.0, 20),
            x2: Axis::new(0.1, 20.0, 20),
            r: vec![8.0, 11.0, 16.0],
            d: vec![0.01, 5.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub x1: f64,
    pub x2: f64,
    pub r: f64,
    pub d: f64,
}

impl ConditionGrid {
    pub fn points(&self) -> Result<Vec<GridPoint>, InvarianceError> {
        for axis in [&self.x1, &self.x2] {
            axis.validate().map_err(|e| InvarianceError::Grid(e.to_string()))?;
        }
        if self.r.is_empty() || self.d.is_empty() {
            return Err(InvarianceError::Grid("r and d sample lists must be non-empty".into()));
        }
        let mut out = Vec::new();
        for x1 in self.x1.values() {
            for x2 in self.x2.values() {
                for &r in &self.r {
                    for &d in &self.d {
                        out.push(GridPoint { x1, x2, r, d });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Grid points with those near the candidate's singular set removed.
    pub fn points_for(&self, eq: &Equivariance, p: &ExtendedParams) -> Result<Vec<GridPoint>, InvarianceError> {
        let p_to = p.with(&eq.param, eq.param_to)?;
        let mut keep = Vec::new();
        for pt in self.points()? {
            if singular_distance(eq, &p_to, &pt)? >= SINGULAR_EPS {
                keep.push(pt);
            }
        }
        Ok(keep)
    }
}

fn singular_distance(eq: &Equivariance, p_to: &ExtendedParams, pt: &GridPoint) -> Result<f64, InvarianceError> {
    match &eq.singular {
        None => Ok(f64::INFINITY),
        Some(e) => Ok(e.eval(&eq.env(p_to, [pt.x1, pt.x2], pt.r, pt.d))?.abs()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub point: GridPoint,
    pub residual: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualField {
    pub points: Vec<ResidualPoint>,
    pub max: [f64; 2],
    pub mean: [f64; 2],
}

impl ResidualField {
    pub fn max_residual(&self) -> f64 {
        self.max[0].max(self.max[1])
    }
}

/// Evaluate `|f(eta(x), u, p_to) - D eta(x) f(x, u, p_from)|` componentwise
/// at every grid point. `D eta` comes from central differences of `alpha`.
pub fn check_equivariance(
    p: &ExtendedParams,
    eq: &Equivariance,
    points: &[GridPoint],
) -> Result<ResidualField, InvarianceError> {
    let p_from = p.with(&eq.param, eq.param_from)?;
    let p_to = p.with(&eq.param, eq.param_to)?;
    let beta = eq.beta();
    let residuals = points
        .par_iter()
        .map(|pt| -> Result<ResidualPoint, InvarianceError> {
            if singular_distance(eq, &p_to, pt)? < SINGULAR_EPS {
                let set = eq.singular.as_ref().map(|e| e.to_string()).unwrap_or_default();
                return Err(InvarianceError::Singular { x1: pt.x1, x2: pt.x2, r: pt.r, set });
            }
            let x = [pt.x1, pt.x2];
            let env = eq.env(&p_to, x, pt.r, pt.d);
            let eta = [eq.alpha.eval(&env)?, beta.eval(&env)?];
            let lhs = eq.coords.rhs(eta, pt.r, pt.d, &p_to);
            let f = eq.coords.rhs(x, pt.r, pt.d, &p_from);
            let mut jac = [[0.0; 2]; 2];
            for (row, component) in jac.iter_mut().zip([&eq.alpha, &beta]) {
                for (entry, (sym, v)) in row.iter_mut().zip([("x1", x[0]), ("x2", x[1])]) {
                    *entry = partial_fd(component, &env, sym, default_step(v))?;
                }
            }
            let rhs = [jac[0][0] * f[0] + jac[0][1] * f[1], jac[1][0] * f[0] + jac[1][1] * f[1]];
            Ok(ResidualPoint { point: *pt, residual: [(lhs[0] - rhs[0]).abs(), (lhs[1] - rhs[1]).abs()] })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = residuals.len().max(1) as f64;
    let mut max = [0.0f64; 2];
    let mut sum = [0.0f64; 2];
    for rp in &residuals {
        for i in 0..2 {
            max[i] = max[i].max(rp.residual[i]);
            sum[i] += rp.residual[i];
        }
    }
    Ok(ResidualField { points: residuals, max, mean: [sum[0] / n, sum[1] / n] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Invariant,
    NotInvariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Residuals strictly below this are invariant.
    pub invariant_below: f64,
    /// Residuals strictly above this are not invariant.
    pub not_invariant_above: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { invariant_below: 1e-5, not_invariant_above: 1e-2 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), InvarianceError> {
        if self.invariant_below > 0.0 && self.invariant_below <= self.not_invariant_above {
            Ok(())
        } else {
            Err(InvarianceError::BadThresholds)
        }
    }

    /// Residuals inside the band between the thresholds are an error rather
    /// than a guess.
    pub fn decide(&self, residual: f64) -> Result<Decision, InvarianceError> {
        self.validate()?;
        if residual < self.invariant_below {
            Ok(Decision::Invariant)
        } else if residual > self.not_invariant_above {
            Ok(Decision::NotInvariant)
        } else {
            Err(InvarianceError::Undecided {
                residual,
                invariant_below: self.invariant_below,
                not_invariant_above: self.not_invariant_above,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceVerdict {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub max_condition_residual: Option<f64>,
    pub max_output_residual: f64,
    pub decision: Decision,
    pub thresholds: Thresholds,
    pub seed: u64,
}

/// Output residual time series from a paired simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSeries {
    pub t: Vec<f64>,
    pub y_from: Vec<f64>,
    pub y_to: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcOutcome {
    pub verdict: InvarianceVerdict,
    pub series: ResidualSeries,
    pub run_from: Trajectory,
    pub run_to: Trajectory,
}

/// Paired-simulation test of dynamical compensation in `param`.
#[derive(Debug, Clone)]
pub struct DcOutputTest<'a> {
    pub params: ExtendedParams,
    pub param: &'a str,
    pub from: f64,
    pub to: f64,
    pub r: &'a Schedule,
    pub d: &'a Schedule,
    pub settings: Settings,
    pub transient: f64,
    pub thresholds: Thresholds,
}

impl DcOutputTest<'_> {
    /// Start each parameterization at its own E2 for the inputs at t = 0,
    /// drive both with the same schedules, and compare outputs after the
    /// transient.
    pub fn run(&self) -> Result<DcOutcome, InvarianceError> {
        let p_from = self.params.with(self.param, self.from)?;
        let p_to = self.params.with(self.param, self.to)?;
        let r0 = self.r.sample(0.0).map_err(IntegrateError::from)?;
        let d0 = self.d.sample(0.0).map_err(IntegrateError::from)?;
        let run = |p: &ExtendedParams| {
            let x0 = State::new(e2_point(p, r0, d0));
            integrate(&Model::Extended2(*p), &x0, &[self.r, self.d], &self.settings)
        };
        let run_from = run(&p_from)?;
        let run_to = run(&p_to)?;

        let y_from = run_from.component(0);
        let y_to = run_to.component(0);
        let residual: Vec<f64> = y_to.iter().zip(&y_from).map(|(a, b)| a - b).collect();
        let window: Vec<f64> =
            run_from.times.iter().zip(&residual).filter(|(t, _)| **t >= self.transient).map(|(_, r)| r.abs()).collect();
        if window.is_empty() {
            return Err(InvarianceError::Transient { transient: self.transient, t_end: self.settings.t_end });
        }
        let max_output_residual = window.into_iter().fold(0.0, f64::max);
        let decision = self.thresholds.decide(max_output_residual)?;
        Ok(DcOutcome {
            verdict: InvarianceVerdict {
                param: self.param.to_string(),
                from: self.from,
                to: self.to,
                max_condition_residual: None,
                max_output_residual,
                decision,
                thresholds: self.thresholds,
                seed: self.r.seed(),
            },
            series: ResidualSeries { t: run_from.times.clone(), y_from, y_to, residual },
            run_from,
            run_to,
        })
    }
}

/// Change of variables `v = T(x)` in y-output coordinates together with the
/// right-hand side of the transformed system.
#[derive(Debug, Clone, PartialEq)]
pub struct Substitution {
    pub param: &'static str,
    pub forward: [&'static str; 2],
    pub rhs: [&'static str; 2],
}

/// `v1 = s x1`, `v2 = b x2` and `v1 = c x1`.
pub fn substitution(param: &str) -> Result<Substitution, InvarianceError> {
    let sub = match param {
        "s" => {
            Substitution { param: "s", forward: ["s*x1", "x2"], rhs: ["-c*x1*(r - x2)", "b*x2 + d + x1*(l*r - x2)"] }
        }
        "b" => Substitution {
            param: "b",
            forward: ["x1", "b*x2"],
            rhs: ["-c*x1*(r - x2/b)", "b*x2 + b*d + b*s*x1*(l*r - x2/b)"],
        },
        "c" => Substitution {
            param: "c",
            forward: ["c*x1", "x2"],
            rhs: ["-c*x1*(r - x2)", "b*x2 + d + s/c*x1*(l*r - x2)"],
        },
        other => return Err(InvarianceError::NoSubstitution(other.to_string())),
    };
    Ok(sub)
}

impl Substitution {
    /// True when the transformed system no longer mentions the parameter.
    pub fn eliminates_param(&self) -> Result<bool, InvarianceError> {
        for text in self.rhs {
            if expr::parse(text)?.symbols().contains(self.param) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn apply(&self, p: &ExtendedParams, x: [f64; 2]) -> Result<[f64; 2], InvarianceError> {
        let mut env = p.bindings();
        env.set("x1", x[0]).set("x2", x[1]);
        Ok([expr::parse(self.forward[0])?.eval(&env)?, expr::parse(self.forward[1])?.eval(&env)?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateCheck {
    pub param: String,
    pub value: f64,
    pub reference: f64,
    pub eliminates_param: bool,
    /// Transformed initial condition `T(x0)` in `(v1, v2)`.
    pub initial: [f64; 2],
    pub max_discrepancy: f64,
}

/// Simulate the model at `param = value`, map the trajectory through the
/// substitution, and compare it with the substituted system simulated at
/// `param = reference` from the mapped initial state. If the substitution
/// removes the parameter the two agree up to rounding.
pub fn dc_coordinate_check(
    base: &ExtendedParams,
    param: &str,
    value: f64,
    reference: f64,
    r: &Schedule,
    d: &Schedule,
    settings: &Settings,
) -> Result<CoordinateCheck, InvarianceError> {
    if value == 0.0 {
        return Err(InvarianceError::ZeroValue);
    }
    let sub = substitution(param)?;
    let p_val = base.with(param, value)?;
    let p_ref = base.with(param, reference)?;
    let coords = Coordinates::YOutput;

    let r0 = r.sample(0.0).map_err(IntegrateError::from)?;
    let d0 = d.sample(0.0).map_err(IntegrateError::from)?;
    let yz0 = e2_point(&p_val, r0, d0);
    let original = integrate(&Model::Extended2(p_val), &State::new(yz0), &[r, d], settings)?;

    let initial = sub.apply(&p_val, coords.to_x(yz0))?;
    let mut sub_params = p_ref.bindings();
    sub_params.set(param, reference);
    let transformed =
        Model::Custom(from_expressions(2, &sub.rhs, 1, sub_params)?.with_name(format!("substituted-{param}")));
    let inputs: Vec<&Schedule> = transformed.input_names().iter().map(|n| if n == "r" { r } else { d }).collect();
    let image = integrate(&transformed, &State::new(initial), &inputs, settings)?;

    let mut max_discrepancy = 0.0f64;
    for (x, w) in original.states.iter().zip(&image.states) {
        let v = sub.apply(&p_val, coords.to_x([x.0[0], x.0[1]]))?;
        max_discrepancy = max_discrepancy.max((v[0] - w.0[0]).abs()).max((v[1] - w.0[1]).abs());
    }
    Ok(CoordinateCheck {
        param: param.to_string(),
        value,
        reference,
        eliminates_param: sub.eliminates_param()?,
        initial,
        max_discrepancy,
    })
}
