//! Built-in ODE systems and expression-defined systems.
//!
//! State ordering is fixed per model:
//!
//! | model          | state          | inputs | output |
//! |----------------|----------------|--------|--------|
//! | `original3`    | `(y, x, z)`    | `u`    | `y`    |
//! | `simplified2`  | `(y, z)`       | `u`    | `y`    |
//! | `substituted2` | `(y, z~)`      | `u`    | `y`    |
//! | `extended2`    | `(y, z)`       | `r, d` | `y`    |
//! | `custom`       | `(x1, .., xn)` | any of `r, d, u` | configurable |
//!
//! Any mapping to the `(x1, x2)` coordinates used by equivariance checks is
//! owned by [`crate::invariance`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Bindings, Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("z2 singular at l=1")]
    SingularL,
    #[error("parameter {name} = {value} is invalid: {reason}")]
    InvalidParam { name: String, value: f64, reason: &'static str },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("state has {got} components, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value in model evaluation")]
    NonFinite,
    #[error("custom model: {0}")]
    Custom(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Parameters of the adaptive proportional-integral feedback model, plus the
/// baseline reference and disturbance levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedParams {
    pub b: f64,
    pub c: f64,
    pub s: f64,
    pub l: f64,
    pub r0: f64,
    pub d0: f64,
}

impl ExtendedParams {
    pub fn new(b: f64, c: f64, s: f64, l: f64, r0: f64, d0: f64) -> Result<Self, ModelError> {
        let p = ExtendedParams { b, c, s, l, r0, d0 };
        p.validate()?;
        Ok(p)
    }

    /// b=0.3, c=2, s=0.25, l=0.7 with r0=11, d0=0.01.
    pub fn paper() -> Self {
        ExtendedParams { b: 0.3, c: 2.0, s: 0.25, l: 0.7, r0: 11.0, d0: 0.01 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("b", self.b)?;
        positive("c", self.c)?;
        positive("s", self.s)?;
        positive("r0", self.r0)?;
        if !(self.d0.is_finite() && self.d0 >= 0.0) {
            return Err(invalid("d0", self.d0, "must be finite and non-negative"));
        }
        if self.l == 1.0 {
            return Err(ModelError::SingularL);
        }
        if !(self.l > 0.0 && self.l < 1.0) {
            return Err(invalid("l", self.l, "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<f64, ModelError> {
        Ok(match name {
            "b" => self.b,
            "c" => self.c,
            "s" => self.s,
            "l" => self.l,
            "r0" => self.r0,
            "d0" => self.d0,
            _ => return Err(ModelError::UnknownParam(name.to_string())),
        })
    }

    /// Copy with one parameter replaced; the result is validated.
    pub fn with(&self, name: &str, value: f64) -> Result<Self, ModelError> {
        let mut p = *self;
        match name {
            "b" => p.b = value,
            "c" => p.c = value,
            "s" => p.s = value,
            "l" => p.l = value,
            "r0" => p.r0 = value,
            "d0" => p.d0 = value,
            _ => return Err(ModelError::UnknownParam(name.to_string())),
        }
        p.validate()?;
        Ok(p)
    }

    pub fn bindings(&self) -> Bindings {
        [("b", self.b), ("c", self.c), ("s", self.s), ("l", self.l), ("r0", self.r0), ("d0", self.d0)]
            .into_iter()
            .collect()
    }
}

/// Parameters of the three-state hormonal circuit and its two-state
/// reductions (which ignore `p`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginalParams {
    pub u0: f64,
    pub s: f64,
    pub p: f64,
    pub y0: f64,
}

impl OriginalParams {
    pub fn new(u0: f64, s: f64, p: f64, y0: f64) -> Result<Self, ModelError> {
        let out = OriginalParams { u0, s, p, y0 };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("u0", self.u0)?;
        positive("s", self.s)?;
        positive("p", self.p)?;
        positive("y0", self.y0)
    }

    pub fn bindings(&self) -> Bindings {
        [("u0", self.u0), ("s", self.s), ("p", self.p), ("y0", self.y0)].into_iter().collect()
    }
}

fn positive(name: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, v, "must be finite and positive"))
    }
}

fn invalid(name: &str, value: f64, reason: &'static str) -> ModelError {
    ModelError::InvalidParam { name: name.to_string(), value, reason }
}

/// A point in state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub Vec<f64>);

impl State {
    pub fn new(components: impl Into<Vec<f64>>) -> Self {
        State(components.into())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Indices of negative components. Negative states are legal for the
    /// evaluator (the saddle sits at negative y) but biologically infeasible.
    pub fn negative_components(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, v)| **v < 0.0).map(|(i, _)| i).collect()
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v:.3}")?;
        }
        f.write_str(")")
    }
}

/// dy/dt = b y + d + s z (l r - y),  dz/dt = -c z (r - y)
pub fn rhs_extended(st: [f64; 2], r: f64, d: f64, p: &ExtendedParams) -> [f64; 2] {
    let [y, z] = st;
    [p.b * y + d + p.s * z * (p.l * r - y), -p.c * z * (r - y)]
}

/// dy/dt = u0 + u - s x y,  dx/dt = p z y - x,  dz/dt = z (y - y0)
pub fn rhs_original(st: [f64; 3], u: f64, p: &OriginalParams) -> [f64; 3] {
    let [y, x, z] = st;
    [p.u0 + u - p.s * x * y, p.p * z * y - x, z * (y - p.y0)]
}

/// dy/dt = u0 + u - s z y,  dz/dt = z (y - y0)
pub fn rhs_simplified(st: [f64; 2], u: f64, p: &OriginalParams) -> [f64; 2] {
    let [y, z] = st;
    [p.u0 + u - p.s * z * y, z * (y - p.y0)]
}

/// Simplified model after z~ = s z; `s` no longer appears.
pub fn rhs_substituted(st: [f64; 2], u: f64, p: &OriginalParams) -> [f64; 2] {
    let [y, zt] = st;
    [p.u0 + u - zt * y, zt * (y - p.y0)]
}

/// Uniform right-hand-side interface used by the integrator.
pub trait System: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn state_names(&self) -> Vec<String>;
    /// Input channels, in the order the integrator passes them to [`System::rhs`].
    fn input_names(&self) -> Vec<String>;
    fn output_index(&self) -> usize;
    fn rhs(&self, t: f64, x: &[f64], inputs: &[f64], dx: &mut [f64]) -> Result<(), ModelError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Original3(OriginalParams),
    Simplified2(OriginalParams),
    Substituted2(OriginalParams),
    Extended2(ExtendedParams),
    Custom(CustomModel),
}

pub const MODEL_NAMES: [&str; 5] = ["original3", "simplified2", "substituted2", "extended2", "custom"];

impl System for Model {
    fn name(&self) -> &str {
        match self {
            Model::Original3(_) => "original3",
            Model::Simplified2(_) => "simplified2",
            Model::Substituted2(_) => "substituted2",
            Model::Extended2(_) => "extended2",
            Model::Custom(m) => m.name(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Model::Original3(_) => 3,
            Model::Custom(m) => m.dim(),
            _ => 2,
        }
    }

    fn state_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            Model::Original3(_) => &["y", "x", "z"],
            Model::Substituted2(_) => &["y", "zt"],
            Model::Simplified2(_) | Model::Extended2(_) => &["y", "z"],
            Model::Custom(m) => return m.state_names(),
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    fn input_names(&self) -> Vec<String> {
        match self {
            Model::Extended2(_) => vec!["r".into(), "d".into()],
            Model::Custom(m) => m.input_names(),
            _ => vec!["u".into()],
        }
    }

    fn output_index(&self) -> usize {
        match self {
            Model::Custom(m) => m.output_index(),
            _ => 0,
        }
    }

    fn rhs(&self, t: f64, x: &[f64], inputs: &[f64], dx: &mut [f64]) -> Result<(), ModelError> {
        let n = self.dim();
        if x.len() != n || dx.len() != n {
            return Err(ModelError::Dimension { expected: n, got: x.len() });
        }
        if let Model::Custom(m) = self {
            return m.rhs(t, x, inputs, dx);
        }
        if x.iter().chain(inputs).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        match self {
            Model::Original3(p) => dx.copy_from_slice(&rhs_original([x[0], x[1], x[2]], inputs[0], p)),
            Model::Simplified2(p) => dx.copy_from_slice(&rhs_simplified([x[0], x[1]], inputs[0], p)),
            Model::Substituted2(p) => dx.copy_from_slice(&rhs_substituted([x[0], x[1]], inputs[0], p)),
            Model::Extended2(p) => dx.copy_from_slice(&rhs_extended([x[0], x[1]], inputs[0], inputs[1], p)),
            Model::Custom(_) => unreachable!(),
        }
        if dx.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ModelError::NonFinite)
        }
    }
}

const CUSTOM_INPUTS: [&str; 3] = ["r", "d", "u"];

/// A system whose right-hand side is given as expression text over
/// `x1..xn`, the inputs `r`, `d`, `u`, time `t`, and named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomModel {
    name: String,
    rhs: Vec<Expr>,
    params: Bindings,
    inputs: Vec<String>,
    output_index: usize,
}

impl CustomModel {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn params(&self) -> &Bindings {
        &self.params
    }

    pub fn expressions(&self) -> &[Expr] {
        &self.rhs
    }
}

/// Parse `rhs_texts` into a [`CustomModel`]. Unbound symbols surface at the
/// first evaluation.
pub fn from_expressions(
    dim: usize,
    rhs_texts: &[&str],
    output_index: usize,
    params: Bindings,
) -> Result<CustomModel, ModelError> {
    if dim == 0 || rhs_texts.len() != dim {
        return Err(ModelError::Custom(format!("dimension {dim} does not match {} right-hand sides", rhs_texts.len())));
    }
    if output_index >= dim {
        return Err(ModelError::Custom(format!("output index {output_index} out of range for dimension {dim}")));
    }
    let rhs = rhs_texts.iter().map(|t| expr::parse(t)).collect::<Result<Vec<_>, _>>()?;
    let used: std::collections::BTreeSet<String> = rhs.iter().flat_map(|e| e.symbols()).collect();
    let inputs = CUSTOM_INPUTS.iter().filter(|n| used.contains(**n)).map(|n| n.to_string()).collect();
    Ok(CustomModel { name: "custom".into(), rhs, params, inputs, output_index })
}

impl CustomModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.rhs.len()
    }

    fn state_names(&self) -> Vec<String> {
        (1..=self.rhs.len()).map(|i| format!("x{i}")).collect()
    }

    fn input_names(&self) -> Vec<String> {
        self.inputs.clone()
    }

    fn output_index(&self) -> usize {
        self.output_index
    }

    fn rhs(&self, t: f64, x: &[f64], inputs: &[f64], dx: &mut [f64]) -> Result<(), ModelError> {
        if inputs.len() != self.inputs.len() {
            return Err(ModelError::Custom(format!(
                "expected {} input values, got {}",
                self.inputs.len(),
                inputs.len()
            )));
        }
        let mut env = self.params.clone();
        env.set("t", t);
        for (i, v) in x.iter().enumerate() {
            env.set(format!("x{}", i + 1), *v);
        }
        for (name, v) in self.inputs.iter().zip(inputs) {
            env.set(name.as_str(), *v);
        }
        for (out, e) in dx.iter_mut().zip(&self.rhs) {
            *out = e.eval(&env)?;
        }
        Ok(())
    }
}
