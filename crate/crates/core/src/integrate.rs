//! Fixed-step classical Runge-Kutta integration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, State, System};
use crate::signals::{Schedule, SignalError};

/// States whose magnitude exceeds this are reported as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("trajectory diverged at t = {t} (|x| = {magnitude:e})")]
    Divergence { t: f64, magnitude: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("did not settle within t = {t_max} (final max |rhs| = {residual:e})")]
    NoSettle { t_max: f64, residual: f64 },
    #[error("invalid integrator settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Schedule(#[from] SignalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl IntegrateError {
    /// True for failures of the numerics rather than of the request.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            IntegrateError::Divergence { .. } | IntegrateError::NonFinite { .. } | IntegrateError::NoSettle { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default = "Settings::default_h")]
    pub h: f64,
    #[serde(default = "Settings::default_t_end")]
    pub t_end: f64,
    /// Record every `decimate`-th step.
    #[serde(default = "Settings::default_decimate")]
    pub decimate: usize,
}

impl Settings {
    fn default_h() -> f64 {
        0.01
    }

    fn default_t_end() -> f64 {
        400.0
    }

    fn default_decimate() -> usize {
        10
    }

    pub fn new(h: f64, t_end: f64, decimate: usize) -> Self {
        Settings { h, t_end, decimate }
    }

    /// Number of steps, requiring `t_end` to be a whole number of steps.
    pub fn steps(&self) -> Result<usize, IntegrateError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(IntegrateError::Settings(format!("step h must be positive, got {}", self.h)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(IntegrateError::Settings(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.decimate == 0 {
            return Err(IntegrateError::Settings("decimate must be at least 1".into()));
        }
        let n = (self.t_end / self.h).round();
        if n < 1.0 || ((n * self.h - self.t_end).abs() > 1e-9 * self.t_end) {
            return Err(IntegrateError::Settings(format!(
                "t_end = {} is not a whole number of steps of h = {}",
                self.t_end, self.h
            )));
        }
        Ok(n as usize)
    }
}

impl Default for Settings {
    fn default() -> Self {
        Settings::new(Self::default_h(), Self::default_t_end(), Self::default_decimate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub seeds: Vec<u64>,
    pub h: f64,
    pub decimate: usize,
}

/// Recorded solution: uniformly spaced samples with the inputs that drove them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub inputs: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// One state component over time.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.0[i]).collect()
    }
}

/// Scratch buffers for one RK4 step.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    fn step(&mut self, sys: &dyn System, t: f64, x: &mut [f64], u: &[f64], h: f64) -> Result<(), ModelError> {
        let half = 0.5 * h;
        sys.rhs(t, x, u, &mut self.k1)?;
        offset(&mut self.tmp, x, half, &self.k1);
        sys.rhs(t + half, &self.tmp, u, &mut self.k2)?;
        offset(&mut self.tmp, x, half, &self.k2);
        sys.rhs(t + half, &self.tmp, u, &mut self.k3)?;
        offset(&mut self.tmp, x, h, &self.k3);
        sys.rhs(t + h, &self.tmp, u, &mut self.k4)?;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// `out = x + a k`.
fn offset(out: &mut [f64], x: &[f64], a: f64, k: &[f64]) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + a * ki;
    }
}

fn guard(t: f64, x: &[f64]) -> Result<(), IntegrateError> {
    let mut magnitude = 0.0f64;
    for v in x {
        if !v.is_finite() {
            return Err(IntegrateError::NonFinite { t });
        }
        magnitude = magnitude.max(v.abs());
    }
    if magnitude > DIVERGENCE_LIMIT {
        return Err(IntegrateError::Divergence { t, magnitude });
    }
    Ok(())
}

/// Integrate `sys` from `x0` over `[0, settings.t_end]`.
///
/// `inputs` must supply one schedule per entry of [`System::input_names`].
/// Inputs are zero-order held across each step: all four stages see the
/// schedule value at the start of the step, so a switch that lands on the
/// step grid takes effect exactly at the switch time.
pub fn integrate(
    sys: &dyn System,
    x0: &State,
    inputs: &[&Schedule],
    settings: &Settings,
) -> Result<Trajectory, IntegrateError> {
    let steps = settings.steps()?;
    let n = sys.dim();
    if x0.dim() != n {
        return Err(ModelError::Dimension { expected: n, got: x0.dim() }.into());
    }
    let names = sys.input_names();
    if inputs.len() != names.len() {
        return Err(IntegrateError::Settings(format!(
            "model {} takes inputs {:?}, got {} schedules",
            sys.name(),
            names,
            inputs.len()
        )));
    }
    guard(0.0, x0.as_slice())?;

    let h = settings.h;
    let rows = steps / settings.decimate + 1;
    let mut times = Vec::with_capacity(rows);
    let mut states = Vec::with_capacity(rows);
    let mut recorded_inputs = Vec::with_capacity(rows);

    let mut x = x0.0.clone();
    let mut u = vec![0.0; inputs.len()];
    let mut rk = Rk4::new(n);
    let sample = |t: f64, u: &mut [f64]| -> Result<(), SignalError> {
        for (slot, sch) in u.iter_mut().zip(inputs) {
            *slot = sch.sample(t)?;
        }
        Ok(())
    };

    sample(0.0, &mut u)?;
    times.push(0.0);
    states.push(State(x.clone()));
    recorded_inputs.push(u.clone());

    for k in 0..steps {
        let t = k as f64 * h;
        sample(t, &mut u)?;
        rk.step(sys, t, &mut x, &u, h)?;
        let t_next = (k + 1) as f64 * h;
        guard(t_next, &x)?;
        if (k + 1) % settings.decimate == 0 {
            sample(t_next, &mut u)?;
            times.push(t_next);
            states.push(State(x.clone()));
            recorded_inputs.push(u.clone());
        }
    }

    Ok(Trajectory {
        times,
        states,
        inputs: recorded_inputs,
        meta: TrajectoryMeta {
            model: sys.name().to_string(),
            state_names: sys.state_names(),
            input_names: names,
            seeds: inputs.iter().map(|s| s.seed()).collect(),
            h,
            decimate: settings.decimate,
        },
    })
}

/// Result of [`settle`].
#[derive(Debug, Clone, PartialEq)]
pub struct Settled {
    pub state: State,
    pub t: f64,
    pub steps: usize,
    pub residual: f64,
}

fn rhs_norm(sys: &dyn System, t: f64, x: &[f64], u: &[f64], buf: &mut [f64]) -> Result<f64, IntegrateError> {
    sys.rhs(t, x, u, buf)?;
    Ok(buf.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Integrate under constant inputs until `max |rhs| < tol`.
pub fn settle(
    sys: &dyn System,
    x0: &State,
    inputs: &[f64],
    h: f64,
    tol: f64,
    t_max: f64,
) -> Result<Settled, IntegrateError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(IntegrateError::Settings(format!("tolerance must be positive, got {tol}")));
    }
    if !(h > 0.0 && h.is_finite() && t_max > 0.0) {
        return Err(IntegrateError::Settings(format!("need h > 0 and t_max > 0, got h = {h}, t_max = {t_max}")));
    }
    let n = sys.dim();
    if x0.dim() != n {
        return Err(ModelError::Dimension { expected: n, got: x0.dim() }.into());
    }
    guard(0.0, x0.as_slice())?;
    let mut x = x0.0.clone();
    let mut buf = vec![0.0; n];
    let mut rk = Rk4::new(n);
    let max_steps = (t_max / h).ceil() as usize;
    let mut steps = 0;
    loop {
        let t = steps as f64 * h;
        let residual = rhs_norm(sys, t, &x, inputs, &mut buf)?;
        if residual < tol {
            return Ok(Settled { state: State(x), t, steps, residual });
        }
        if steps >= max_steps {
            return Err(IntegrateError::NoSettle { t_max, residual });
        }
        rk.step(sys, t, &mut x, inputs, h)?;
        steps += 1;
        guard(steps as f64 * h, &x)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Bindings;
    use crate::model::{from_expressions, ExtendedParams, Model};

    fn decay() -> Model {
        Model::Custom(from_expressions(1, &["-x1"], 0, Bindings::new()).unwrap())
    }

    #[test]
    fn exponential_decay() {
        let traj = integrate(&decay(), &State::new([1.0]), &[], &Settings::new(0.01, 1.0, 1)).unwrap();
        assert_eq!(traj.len(), 101);
        assert!((traj.last().0[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert_eq!(traj.times[100], 1.0);
    }

    #[test]
    fn extended_converges_to_operating_point() {
        let p = ExtendedParams::paper();
        let r = Schedule::constant(11.0, 40.0).unwrap();
        let d = Schedule::constant(0.01, 40.0).unwrap();
        let traj = integrate(&Model::Extended2(p), &State::new([10.0, 4.0]), &[&r, &d], &Settings::new(0.01, 40.0, 10))
            .unwrap();
        let end = traj.last();
        assert!((end.0[0] - 11.0).abs() < 1e-3 && (end.0[1] - 4.012).abs() < 1e-3, "{end}");
        assert_eq!(traj.len(), 401);
    }

    #[test]
    fn settings_are_validated() {
        let m = decay();
        let x0 = State::new([1.0]);
        for s in [
            Settings::new(0.01, 0.0, 1),
            Settings::new(0.0, 1.0, 1),
            Settings::new(0.3, 1.0, 1),
            Settings::new(0.1, 1.0, 0),
        ] {
            assert!(matches!(integrate(&m, &x0, &[], &s), Err(IntegrateError::Settings(_))), "{s:?}");
        }
        assert!(matches!(
            integrate(&m, &State::new([1.0, 2.0]), &[], &Settings::default()),
            Err(IntegrateError::Model(_))
        ));
    }

    #[test]
    fn schedule_domain_is_checked() {
        let p = ExtendedParams::paper();
        let r = Schedule::constant(11.0, 10.0).unwrap();
        let d = Schedule::constant(0.01, 10.0).unwrap();
        let err = integrate(&Model::Extended2(p), &State::new([11.0, 4.0]), &[&r, &d], &Settings::new(0.01, 20.0, 1));
        assert!(matches!(err, Err(IntegrateError::Schedule(_))));
    }

    #[test]
    fn divergence_guard_trips() {
        let grow = Model::Custom(from_expressions(1, &["x1"], 0, Bindings::new()).unwrap());
        let err = integrate(&grow, &State::new([1.0]), &[], &Settings::new(0.01, 40.0, 1)).unwrap_err();
        match err {
            IntegrateError::Divergence { t, .. } => assert!((t - 1e9f64.ln()).abs() < 0.05, "t = {t}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.is_numeric());
    }

    #[test]
    fn settle_examples() {
        let p = ExtendedParams::paper();
        let m = Model::Extended2(p);
        let s = settle(&m, &State::new([10.0, 4.0]), &[11.0, 0.01], 0.01, 1e-9, 400.0).unwrap();
        assert!((s.state.0[0] - 11.0).abs() < 1e-3 && (s.state.0[1] - 4.012).abs() < 1e-3);
        let z2 = (0.01 + 0.3 * 11.0) / (0.25 * 11.0 * 0.3);
        let at = settle(&m, &State::new([11.0, z2]), &[11.0, 0.01], 0.01, 1e-9, 400.0).unwrap();
        assert_eq!(at.steps, 0);
        let err = settle(&m, &State::new([10.0, 4.0]), &[11.0, 0.01], 0.01, 1e-9, 0.5).unwrap_err();
        assert!(matches!(err, IntegrateError::NoSettle { .. }));
    }
}
