//! Equilibria, Jacobians and local stability of the extended model, plus
//! phase-portrait and basin data.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{integrate, IntegrateError, Settings};
use crate::model::{rhs_extended, ExtendedParams, Model, ModelError, State};
use crate::signals::{Schedule, SignalError};

pub type Matrix2 = [[f64; 2]; 2];

/// Real parts at or below this magnitude classify as degenerate.
pub const DEFAULT_RE_TOL: f64 = 1e-9;
/// |tau^2 - 4 delta| at or below this (scaled by the operands) is case 1.
pub const DISCRIMINANT_TOL: f64 = 1e-12;
/// A basin node is converged when it ends within this distance of E2.
pub const BASIN_RADIUS: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("reference r must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("disturbance d must be finite and non-negative, got {0}")]
    BadDisturbance(f64),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    E1,
    E2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Saddle,
    StableNode,
    StableSpiral,
    UnstableNode,
    UnstableSpiral,
    Degenerate,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Saddle => "saddle",
            Classification::StableNode => "stable-node",
            Classification::StableSpiral => "stable-spiral",
            Classification::UnstableNode => "unstable-node",
            Classification::UnstableSpiral => "unstable-spiral",
            Classification::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub kind: EquilibriumKind,
    pub point: State,
    pub eigenvalues: [Complex64; 2],
    pub classification: Classification,
    pub tau: f64,
    pub delta: f64,
    pub discriminant_case: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub params: ExtendedParams,
    pub r: f64,
    pub d: f64,
    pub e1: Equilibrium,
    pub e2: Equilibrium,
}

fn check_inputs(p: &ExtendedParams, r: f64, d: f64) -> Result<(), AnalysisError> {
    p.validate()?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(AnalysisError::NonPositiveReference(r));
    }
    if !(d >= 0.0 && d.is_finite()) {
        return Err(AnalysisError::BadDisturbance(d));
    }
    Ok(())
}

/// E1 = (-d/b, 0), the saddle.
pub fn e1_point(p: &ExtendedParams, d: f64) -> [f64; 2] {
    [-d / p.b, 0.0]
}

/// E2 = (r, (d + b r) / (s r (1 - l))), the operating point.
pub fn e2_point(p: &ExtendedParams, r: f64, d: f64) -> [f64; 2] {
    [r, (d + p.b * r) / (p.s * r * (1.0 - p.l))]
}

/// Trace of J at E2: (d + b l r) / (r (l - 1)).
pub fn tau_e2(p: &ExtendedParams, r: f64, d: f64) -> f64 {
    (d + p.b * p.l * r) / (r * (p.l - 1.0))
}

/// Determinant of J at E2: c (d + b r).
pub fn delta_e2(p: &ExtendedParams, r: f64, d: f64) -> f64 {
    p.c * (d + p.b * r)
}

pub fn equilibria(p: &ExtendedParams, r: f64, d: f64) -> Result<(Equilibrium, Equilibrium), AnalysisError> {
    check_inputs(p, r, d)?;

    let e1 = e1_point(p, d);
    let j1 = jacobian(p, e1, r);
    let (tau1, delta1) = trace_det(&j1);
    let mut eig1 = [Complex64::new(p.b, 0.0), Complex64::new(-p.c * (d + p.b * r) / p.b, 0.0)];
    order_pair(&mut eig1);

    let e2 = e2_point(p, r, d);
    let tau2 = tau_e2(p, r, d);
    let delta2 = delta_e2(p, r, d);
    let eig2 = eigen2(&jacobian(p, e2, r));

    Ok((
        Equilibrium {
            kind: EquilibriumKind::E1,
            point: State::new(e1),
            eigenvalues: eig1,
            classification: classify(&eig1, DEFAULT_RE_TOL),
            tau: tau1,
            delta: delta1,
            discriminant_case: discriminant_case(tau1, delta1),
        },
        Equilibrium {
            kind: EquilibriumKind::E2,
            point: State::new(e2),
            eigenvalues: eig2,
            classification: classify(&eig2, DEFAULT_RE_TOL),
            tau: tau2,
            delta: delta2,
            discriminant_case: discriminant_case(tau2, delta2),
        },
    ))
}

pub fn stability_report(p: &ExtendedParams, r: f64, d: f64) -> Result<StabilityReport, AnalysisError> {
    let (e1, e2) = equilibria(p, r, d)?;
    Ok(StabilityReport { params: *p, r, d, e1, e2 })
}

/// Jacobian of the extended right-hand side at `st = (y, z)`:
///
/// ```text
/// [ b - s z    s (l r - y) ]
/// [ c z       -c (r - y)   ]
/// ```
pub fn jacobian(p: &ExtendedParams, st: [f64; 2], r: f64) -> Matrix2 {
    let [y, z] = st;
    [[p.b - p.s * z, p.s * (p.l * r - y)], [p.c * z, -p.c * (r - y)]]
}

pub fn trace_det(m: &Matrix2) -> (f64, f64) {
    (m[0][0] + m[1][1], m[0][0] * m[1][1] - m[0][1] * m[1][0])
}

/// Roots of `lambda^2 - tau lambda + delta`, larger real part (or positive
/// imaginary part) first.
pub fn eigen2(m: &Matrix2) -> [Complex64; 2] {
    let (tau, delta) = trace_det(m);
    let disc = tau * tau - 4.0 * delta;
    let mut out = if disc < 0.0 {
        let re = 0.5 * tau;
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(re, im), Complex64::new(re, -im)]
    } else {
        // larger-magnitude root first, the other from the product delta
        let q = 0.5 * (tau + tau.signum() * disc.sqrt());
        if q == 0.0 {
            [Complex64::new(0.0, 0.0); 2]
        } else {
            [Complex64::new(q, 0.0), Complex64::new(delta / q, 0.0)]
        }
    };
    order_pair(&mut out);
    out
}

fn order_pair(pair: &mut [Complex64; 2]) {
    if (pair[1].re, pair[1].im) > (pair[0].re, pair[0].im) {
        pair.swap(0, 1);
    }
}

pub fn classify(eigs: &[Complex64; 2], re_tol: f64) -> Classification {
    let [a, b] = eigs;
    if a.im != 0.0 || b.im != 0.0 {
        return if a.re.abs() <= re_tol {
            Classification::Degenerate
        } else if a.re < 0.0 {
            Classification::StableSpiral
        } else {
            Classification::UnstableSpiral
        };
    }
    if a.re.abs() <= re_tol || b.re.abs() <= re_tol {
        Classification::Degenerate
    } else if (a.re > 0.0) != (b.re > 0.0) {
        Classification::Saddle
    } else if a.re < 0.0 {
        Classification::StableNode
    } else {
        Classification::UnstableNode
    }
}

/// 1: repeated root, 2: complex pair, 3: distinct real roots.
pub fn discriminant_case(tau: f64, delta: f64) -> u8 {
    let disc = tau * tau - 4.0 * delta;
    let scale = (tau * tau).max(4.0 * delta.abs()).max(1.0);
    if disc.abs() <= DISCRIMINANT_TOL * scale {
        1
    } else if disc < 0.0 {
        2
    } else {
        3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Axis { min, max, count }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.count == 0 || !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(AnalysisError::Grid(format!("axis {self:?}")));
        }
        if self.count > 1 && self.min == self.max {
            return Err(AnalysisError::Grid(format!("degenerate axis {self:?}")));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.count == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// Rectangular grid over the (y, z) plane; nodes are enumerated y-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub y: Axis,
    pub z: Axis,
}

impl Grid {
    pub fn new(y: Axis, z: Axis) -> Self {
        Grid { y, z }
    }

    /// 21 x 21 nodes over y in [-2, 20], z in [0, 10].
    pub fn paper() -> Self {
        Grid::new(Axis::new(-2.0, 20.0, 21), Axis::new(0.0, 10.0, 21))
    }

    pub fn nodes(&self) -> Result<Vec<[f64; 2]>, AnalysisError> {
        self.y.validate()?;
        self.z.validate()?;
        let zs = self.z.values();
        Ok(self.y.values().into_iter().flat_map(|y| zs.iter().map(move |&z| [y, z])).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub y: f64,
    pub z: f64,
    pub dy: f64,
    pub dz: f64,
    pub magnitude: f64,
}

impl FieldSample {
    /// Unit direction, or zero at a rest point.
    pub fn normalized(&self) -> [f64; 2] {
        if self.magnitude == 0.0 {
            [0.0, 0.0]
        } else {
            [self.dy / self.magnitude, self.dz / self.magnitude]
        }
    }
}

pub fn vector_field(p: &ExtendedParams, r: f64, d: f64, grid: &Grid) -> Result<Vec<FieldSample>, AnalysisError> {
    check_inputs(p, r, d)?;
    Ok(grid
        .nodes()?
        .into_iter()
        .map(|[y, z]| {
            let [dy, dz] = rhs_extended([y, z], r, d, p);
            FieldSample { y, z, dy, dz, magnitude: dy.hypot(dz) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasinLabel {
    ConvergedToE2,
    Diverged,
    Undecided,
}

impl BasinLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BasinLabel::ConvergedToE2 => "converged-to-E2",
            BasinLabel::Diverged => "diverged",
            BasinLabel::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasinSample {
    pub y0: f64,
    pub z0: f64,
    pub label: BasinLabel,
    /// Earliest recorded time after which the trajectory stays within the
    /// convergence radius of E2.
    pub t_converge: Option<f64>,
}

/// Integrate from every grid node under constant `r`, `d` for `t_max` and
/// label the outcome. Nodes run in parallel; output order is node order.
pub fn basin_sample(
    p: &ExtendedParams,
    r: f64,
    d: f64,
    grid: &Grid,
    t_max: f64,
    h: f64,
) -> Result<Vec<BasinSample>, AnalysisError> {
    check_inputs(p, r, d)?;
    let target = e2_point(p, r, d);
    let settings = Settings::new(h, t_max, 10);
    settings.steps()?;
    let rs = Schedule::constant(r, t_max)?;
    let ds = Schedule::constant(d, t_max)?;
    let model = Model::Extended2(*p);
    grid.nodes()?
        .into_par_iter()
        .map(|[y0, z0]| {
            let dist = |s: &State| (s.0[0] - target[0]).hypot(s.0[1] - target[1]);
            match integrate(&model, &State::new([y0, z0]), &[&rs, &ds], &settings) {
                Ok(traj) => {
                    let within: Vec<bool> = traj.states.iter().map(|s| dist(s) < BASIN_RADIUS).collect();
                    let converged = *within.last().unwrap_or(&false);
                    let t_converge = converged.then(|| {
                        let first_inside = within.iter().rposition(|w| !w).map_or(0, |i| i + 1);
                        traj.times[first_inside]
                    });
                    let label = if converged { BasinLabel::ConvergedToE2 } else { BasinLabel::Undecided };
                    Ok(BasinSample { y0, z0, label, t_converge })
                }
                Err(IntegrateError::Divergence { .. }) | Err(IntegrateError::NonFinite { .. }) => {
                    Ok(BasinSample { y0, z0, label: BasinLabel::Diverged, t_converge: None })
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}
