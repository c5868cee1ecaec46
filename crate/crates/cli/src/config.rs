//! JSON run configuration and its validation.
//!
//! Every key is optional except where a model needs it. Unknown keys are
//! rejected at every level.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use invaria::analysis::{e2_point, Grid};
use invaria::expr;
use invaria::integrate::Settings;
use invaria::invariance::{builtin_candidate, substitution, ConditionGrid, Coordinates, Equivariance, Thresholds};
use invaria::model::{from_expressions, ExtendedParams, Model, OriginalParams, State, System, MODEL_NAMES};
use invaria::signals::{input_seed, paper_schedule_d, paper_schedule_r, Schedule, Segment, DEFAULT_SAMPLE_DT};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_OUTPUT: &str = "out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub integrator: Settings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomSpec>,
    #[serde(default)]
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_model() -> String {
    "extended2".into()
}

impl Default for Config {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config parses")
    }
}

/// `"paper"` or a map from input name to a constant or a segment list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inputs {
    Named(String),
    Explicit(BTreeMap<String, Signal>),
}

impl Default for Inputs {
    fn default() -> Self {
        Inputs::Named("paper".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Signal {
    Constant(f64),
    Segments(Vec<Segment>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSpec {
    pub rhs: Vec<String>,
    #[serde(default)]
    pub output_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub phase: PhaseSpec,
    #[serde(default)]
    pub invariance: InvarianceSpec,
    #[serde(default)]
    pub dc_check: DcCheckSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    #[serde(default = "Grid::paper")]
    pub grid: Grid,
    #[serde(default = "yes")]
    pub basin: bool,
    /// Horizon for each basin run.
    #[serde(default = "default_basin_t_max")]
    pub basin_t_max: f64,
    #[serde(default = "yes")]
    pub svg: bool,
    /// Start points of trajectories drawn on the portrait.
    #[serde(default)]
    pub trajectories: Vec<[f64; 2]>,
    #[serde(default = "default_trajectory_t_end")]
    pub trajectory_t_end: f64,
}

fn yes() -> bool {
    true
}

fn default_basin_t_max() -> f64 {
    400.0
}

fn default_trajectory_t_end() -> f64 {
    50.0
}

impl Default for PhaseSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty phase block parses")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamChange {
    pub param: String,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub alpha: String,
    pub coords: Coordinates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular: Option<String>,
}

impl CandidateSpec {
    pub fn build(&self) -> Result<Equivariance, CliError> {
        Equivariance::new(&self.param, self.from, self.to, &self.alpha, self.coords, self.singular.as_deref())
            .map_err(|e| CliError::Config(format!("candidate for `{}`: {e}", self.param)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceSpec {
    #[serde(default = "default_tests")]
    pub tests: Vec<ParamChange>,
    #[serde(default = "default_transient")]
    pub transient: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub grid: ConditionGrid,
    /// Candidates replacing the built-in ones for their parameter.
    #[serde(default)]
    pub candidates: Vec<CandidateSpec>,
}

fn default_tests() -> Vec<ParamChange> {
    [("s", 0.25, 1.5), ("b", 0.3, 0.6), ("c", 2.0, 4.0)]
        .into_iter()
        .map(|(p, from, to)| ParamChange { param: p.into(), from, to })
        .collect()
}

fn default_transient() -> f64 {
    50.0
}

impl Default for InvarianceSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty invariance block parses")
    }
}

impl InvarianceSpec {
    /// The configured candidate for `param`, else the built-in one.
    pub fn candidate(&self, param: &str) -> Result<Option<Equivariance>, CliError> {
        match self.candidates.iter().find(|c| c.param == param) {
            Some(spec) => spec.build().map(Some),
            None => Ok(builtin_candidate(param)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateSpec {
    pub param: String,
    pub value: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcCheckSpec {
    #[serde(default = "default_checks")]
    pub checks: Vec<CoordinateSpec>,
}

fn default_checks() -> Vec<CoordinateSpec> {
    [("s", 0.25, 1.0), ("b", 0.6, 0.3), ("c", 4.0, 2.0)]
        .into_iter()
        .map(|(p, value, reference)| CoordinateSpec { param: p.into(), value, reference })
        .collect()
}

impl Default for DcCheckSpec {
    fn default() -> Self {
        DcCheckSpec { checks: default_checks() }
    }
}

/// A validated configuration with everything needed to run built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
    pub model: Model,
    /// In the order of `model.input_names()`.
    pub schedules: Vec<Schedule>,
    pub initial: State,
}

impl Resolved {
    pub fn extended(&self) -> Result<ExtendedParams, CliError> {
        match &self.model {
            Model::Extended2(p) => Ok(*p),
            m => Err(CliError::Config(format!("this command needs model `extended2`, not `{}`", m.name()))),
        }
    }

    pub fn schedule(&self, name: &str) -> &Schedule {
        let i = self.model.input_names().iter().position(|n| n == name).expect("input exists");
        &self.schedules[i]
    }

    pub fn schedule_refs(&self) -> Vec<&Schedule> {
        self.schedules.iter().collect()
    }
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Validate `config` and build the model, schedules and initial state.
/// `seed` and `out` are the already-resolved overrides.
pub fn resolve(mut config: Config, seed: u64, out: Option<PathBuf>) -> Result<Resolved, CliError> {
    config.integrator.steps().map_err(config_err)?;
    let t_end = config.integrator.t_end;
    config.seed = Some(seed);
    let out = out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));

    if !MODEL_NAMES.contains(&config.model.as_str()) {
        return Err(CliError::Config(format!(
            "unknown model `{}`; expected one of {}",
            config.model,
            MODEL_NAMES.join(", ")
        )));
    }
    if config.custom.is_some() && config.model != "custom" {
        return Err(CliError::Config("`custom` block is only allowed with model `custom`".into()));
    }

    let input_names: Vec<String> = match config.model.as_str() {
        "extended2" => vec!["r".into(), "d".into()],
        "custom" => {
            let spec = config
                .custom
                .as_ref()
                .ok_or_else(|| CliError::Config("model `custom` needs a `custom` block".into()))?;
            let texts: Vec<&str> = spec.rhs.iter().map(String::as_str).collect();
            Model::Custom(
                from_expressions(texts.len(), &texts, spec.output_index, Default::default()).map_err(config_err)?,
            )
            .input_names()
        }
        _ => vec!["u".into()],
    };
    let schedules = build_schedules(&config.inputs, &input_names, seed, t_end)?;

    let model = match config.model.as_str() {
        "extended2" => {
            let get = |k: &str, paper: f64| config.params.get(k).copied().unwrap_or(paper);
            check_keys(&config.params, &["b", "c", "s", "l"])?;
            let base = ExtendedParams::paper();
            let r0 = schedules[0].sample(0.0).map_err(config_err)?;
            let d0 = schedules[1].sample(0.0).map_err(config_err)?;
            let p = ExtendedParams::new(get("b", base.b), get("c", base.c), get("s", base.s), get("l", base.l), r0, d0)
                .map_err(config_err)?;
            Model::Extended2(p)
        }
        "custom" => {
            let spec = config.custom.as_ref().expect("checked above");
            let texts: Vec<&str> = spec.rhs.iter().map(String::as_str).collect();
            let params = config.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
            let m = from_expressions(texts.len(), &texts, spec.output_index, params).map_err(config_err)?;
            check_custom_symbols(&texts, &config.params)?;
            Model::Custom(m)
        }
        name => {
            check_keys(&config.params, &["u0", "s", "p", "y0"])?;
            let get = |k: &str| {
                config
                    .params
                    .get(k)
                    .copied()
                    .ok_or_else(|| CliError::Config(format!("model `{name}` needs parameter `{k}`")))
            };
            let p = OriginalParams::new(get("u0")?, get("s")?, get("p")?, get("y0")?).map_err(config_err)?;
            match name {
                "original3" => Model::Original3(p),
                "simplified2" => Model::Simplified2(p),
                _ => Model::Substituted2(p),
            }
        }
    };

    let initial = match (&config.initial, &model) {
        (Some(v), m) => {
            if v.len() != m.dim() {
                return Err(CliError::Config(format!(
                    "`initial` has {} components, model `{}` has {}",
                    v.len(),
                    m.name(),
                    m.dim()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Config("`initial` must be finite".into()));
            }
            State::new(v.clone())
        }
        (None, Model::Extended2(p)) => State::new(e2_point(p, p.r0, p.d0)),
        (None, m) => return Err(CliError::Config(format!("model `{}` needs an `initial` state", m.name()))),
    };

    validate_experiment(&config.experiment)?;
    Ok(Resolved { config, seed, out, model, schedules, initial })
}

fn check_keys(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<(), CliError> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(CliError::Config(format!("unknown parameter `{k}`; expected one of {}", allowed.join(", "))));
        }
    }
    Ok(())
}

fn check_custom_symbols(texts: &[&str], params: &BTreeMap<String, f64>) -> Result<(), CliError> {
    let mut known: BTreeSet<String> = params.keys().cloned().collect();
    known.extend(["t", "r", "d", "u"].map(String::from));
    known.extend((1..=texts.len()).map(|i| format!("x{i}")));
    for t in texts {
        for sym in expr::parse(t).map_err(config_err)?.symbols() {
            if !known.contains(&sym) {
                return Err(CliError::Config(format!("custom right-hand side `{t}` uses unbound symbol `{sym}`")));
            }
        }
    }
    Ok(())
}

fn build_schedules(inputs: &Inputs, names: &[String], seed: u64, t_end: f64) -> Result<Vec<Schedule>, CliError> {
    let schedules: Vec<Schedule> = match inputs {
        Inputs::Named(n) if n == "paper" => names
            .iter()
            .map(|n| match n.as_str() {
                "r" => Ok(paper_schedule_r(seed)),
                "d" => Ok(paper_schedule_d(seed)),
                other => Err(CliError::Config(format!("inputs \"paper\" defines r and d only, model needs `{other}`"))),
            })
            .collect::<Result<_, _>>()?,
        Inputs::Named(n) => {
            return Err(CliError::Config(format!("unknown input set \"{n}\"; expected \"paper\" or an object")))
        }
        Inputs::Explicit(map) => {
            for k in map.keys() {
                if !names.contains(k) {
                    return Err(CliError::Config(format!("input `{k}` is not used by the model")));
                }
            }
            names
                .iter()
                .map(|n| {
                    let sig = map.get(n).ok_or_else(|| CliError::Config(format!("missing input `{n}`")))?;
                    let segments = match sig {
                        Signal::Constant(v) => vec![Segment::constant(0.0, t_end, *v)],
                        Signal::Segments(s) => s.clone(),
                    };
                    Schedule::new(segments, input_seed(n, seed), DEFAULT_SAMPLE_DT)
                        .map_err(|e| CliError::Config(format!("input `{n}`: {e}")))
                })
                .collect::<Result<_, _>>()?
        }
    };
    for (n, s) in names.iter().zip(&schedules) {
        if s.start() > 0.0 || s.end() < t_end {
            return Err(CliError::Config(format!(
                "input `{n}` covers [{}, {}] but the run needs [0, {t_end}]",
                s.start(),
                s.end()
            )));
        }
    }
    Ok(schedules)
}

fn validate_experiment(exp: &Experiment) -> Result<(), CliError> {
    exp.phase.grid.nodes().map_err(config_err)?;
    for v in [exp.phase.basin_t_max, exp.phase.trajectory_t_end] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("phase horizons must be positive, got {v}")));
        }
    }

    let inv = &exp.invariance;
    inv.thresholds.validate().map_err(config_err)?;
    if !(inv.transient >= 0.0 && inv.transient.is_finite()) {
        return Err(CliError::Config(format!("transient must be finite and non-negative, got {}", inv.transient)));
    }
    inv.grid.points().map_err(config_err)?;
    let mut seen = BTreeSet::new();
    for t in &inv.tests {
        if !seen.insert(t.param.as_str()) {
            return Err(CliError::Config(format!("parameter `{}` is tested twice", t.param)));
        }
        let base = ExtendedParams::paper();
        base.with(&t.param, t.from).and_then(|_| base.with(&t.param, t.to)).map_err(config_err)?;
    }
    for c in &inv.candidates {
        c.build()?;
    }

    for c in &exp.dc_check.checks {
        substitution(&c.param).map_err(config_err)?;
        let base = ExtendedParams::paper();
        base.with(&c.param, c.value).and_then(|_| base.with(&c.param, c.reference)).map_err(config_err)?;
    }
    Ok(())
}
