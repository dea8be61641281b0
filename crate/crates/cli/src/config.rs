//! Run configuration, read from TOML.
//!
//! Every key is optional; an empty file gives the default study: printed model,
//! 1% steps in each area, the three controllers, a ±0.0005 Hz settling band
//! and a 100 × 100 swarm.
//!
//! ```toml
//! seed = 7
//! settling_band = 0.0005
//! output_dir = "out"
//!
//! [model]
//! kind = "paper"            # or "params", then any of tp, kp, tt, tr, kr,
//!                           # tg, droop_r, bias_b, tie_coeff
//! [pso]                     # swarm defaults for PSO-tuned controllers
//! population = 100
//! iterations = 100
//! c1 = 1.5
//! c2 = 1.5
//! range_lo = -3.0
//! range_hi = 3.0
//! vmax = 3.0
//! inertia = 1.0
//! penalty = 1e6
//! workers = 1
//!
//! [fitness]                 # the ISE objective the swarms minimize
//! horizon = 60.0
//! dt = 0.005
//! magnitude = 0.01
//! scenarios = "both"        # or "area1"
//!
//! [[controllers]]
//! name = "lqr_pi"
//! kind = "lqr_pi"           # integral | lqr_pi | pso_k
//! q_diag = [1.0, ...]       # 11 entries, lqr_pi only
//! r_diag = [1.0, 1.0]
//! [controllers.pso]         # per-controller swarm overrides
//! iterations = 50
//!
//! [[scenarios]]
//! area = 1
//! magnitude = 0.01
//! horizon = 120.0
//! dt = 0.005
//! ```

use std::path::{Path, PathBuf};

use agc_core::psoopt::FitnessScenarios;
use agc_core::simkit::{DEFAULT_DT, DEFAULT_HORIZON, DEFAULT_SETTLING_BAND};
use agc_core::{
    from_params, paper_model, Area, FitnessSettings, Matrix, PlantParams, Scenario, SwarmConfig,
    TwoAreaModel,
};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    settling_band: Option<f64>,
    output_dir: Option<PathBuf>,
    model: Option<RawModel>,
    pso: Option<RawSwarm>,
    fitness: Option<RawFitness>,
    controllers: Option<Vec<RawController>>,
    scenarios: Option<Vec<RawScenario>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    tp: Option<f64>,
    kp: Option<f64>,
    tt: Option<f64>,
    tr: Option<f64>,
    kr: Option<f64>,
    tg: Option<f64>,
    droop_r: Option<f64>,
    bias_b: Option<f64>,
    tie_coeff: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSwarm {
    population: Option<usize>,
    iterations: Option<usize>,
    c1: Option<f64>,
    c2: Option<f64>,
    range_lo: Option<f64>,
    range_hi: Option<f64>,
    vmax: Option<f64>,
    inertia: Option<f64>,
    penalty: Option<f64>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFitness {
    horizon: Option<f64>,
    dt: Option<f64>,
    magnitude: Option<f64>,
    scenarios: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    name: Option<String>,
    kind: String,
    q_diag: Option<Vec<f64>>,
    r_diag: Option<Vec<f64>>,
    pso: Option<RawSwarm>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    area: u8,
    magnitude: Option<f64>,
    horizon: Option<f64>,
    dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Paper,
    Params(PlantParams),
}

impl ModelSpec {
    pub fn build(&self) -> Result<TwoAreaModel, CliError> {
        match self {
            ModelSpec::Paper => Ok(paper_model()),
            ModelSpec::Params(p) => from_params(p).map_err(|e| match e {
                agc_core::plant::PlantError::InvalidParameter { name, .. } => {
                    CliError::invalid(format!("model.{name}"), e.to_string())
                }
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerKind {
    /// PSO over `(Ki1, Ki2)`.
    Integral(SwarmConfig),
    /// LQR on the augmented state with the given weights.
    LqrPi { q: Matrix, r: Matrix },
    /// PSO over all 22 entries of K.
    PsoK(SwarmConfig),
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Integral(_) => "integral",
            ControllerKind::LqrPi { .. } => "lqr_pi",
            ControllerKind::PsoK(_) => "pso_k",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    pub name: String,
    pub kind: ControllerKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub controllers: Vec<ControllerSpec>,
    pub scenarios: Vec<Scenario>,
    pub settling_band: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub fitness: FitnessSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl RunConfig {
    /// Overrides the seed of the run and of every swarm.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        for c in &mut self.controllers {
            match &mut c.kind {
                ControllerKind::Integral(s) | ControllerKind::PsoK(s) => s.seed = seed,
                ControllerKind::LqrPi { .. } => {}
            }
        }
    }

    /// Stable text form of everything that influences results (not the output path).
    pub fn canonical(&self) -> String {
        format!(
            "model={:?}\ncontrollers={:?}\nscenarios={:?}\nsettling_band={:?}\nseed={}\nfitness={:?}\n",
            self.model, self.controllers, self.scenarios, self.settling_band, self.seed, self.fitness
        )
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Parse { message, .. } => CliError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        path: PathBuf::from("<inline>"),
        message: e.to_string(),
    })?;

    let seed = raw.seed.unwrap_or(0);
    let settling_band = raw.settling_band.unwrap_or(DEFAULT_SETTLING_BAND);
    if !(settling_band.is_finite() && settling_band > 0.0) {
        return Err(CliError::invalid("settling_band", "must be positive"));
    }

    let model = build_model(raw.model.unwrap_or_default())?;
    let base_swarm = apply_swarm(SwarmConfig { seed, ..SwarmConfig::default() }, raw.pso.as_ref(), "pso")?;
    let fitness = build_fitness(raw.fitness.unwrap_or_default())?;

    let controllers = match raw.controllers {
        None => default_controllers(&base_swarm)?,
        Some(list) => list
            .into_iter()
            .enumerate()
            .map(|(i, c)| build_controller(i, c, &base_swarm))
            .collect::<Result<Vec<_>, _>>()?,
    };
    if controllers.is_empty() {
        return Err(CliError::invalid("controllers", "at least one controller is required"));
    }
    for (i, c) in controllers.iter().enumerate() {
        if controllers[..i].iter().any(|o| o.name == c.name) {
            return Err(CliError::invalid(
                "controller.name",
                format!("duplicate controller name `{}`", c.name),
            ));
        }
    }

    let scenarios = match raw.scenarios {
        None => vec![
            Scenario::step(Area::One, 0.01),
            Scenario::step(Area::Two, 0.01),
        ],
        Some(list) => list
            .into_iter()
            .enumerate()
            .map(|(i, s)| build_scenario(i, s))
            .collect::<Result<Vec<_>, _>>()?,
    };
    if scenarios.is_empty() {
        return Err(CliError::invalid("scenarios", "at least one scenario is required"));
    }

    Ok(RunConfig {
        model,
        controllers,
        scenarios,
        settling_band,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("agc-out")),
        seed,
        fitness,
    })
}

fn build_model(raw: RawModel) -> Result<ModelSpec, CliError> {
    let has_params = [
        raw.tp, raw.kp, raw.tt, raw.tr, raw.kr, raw.tg, raw.droop_r, raw.bias_b, raw.tie_coeff,
    ]
    .iter()
    .any(Option::is_some);
    match raw.kind.as_deref() {
        None | Some("paper") if !has_params => Ok(ModelSpec::Paper),
        None | Some("paper") => Err(CliError::invalid(
            "model.kind",
            "physical parameters given; set kind = \"params\"",
        )),
        Some("params") => {
            let d = PlantParams::PAPER;
            let p = PlantParams {
                tp: raw.tp.unwrap_or(d.tp),
                kp: raw.kp.unwrap_or(d.kp),
                tt: raw.tt.unwrap_or(d.tt),
                tr: raw.tr.unwrap_or(d.tr),
                kr: raw.kr.unwrap_or(d.kr),
                tg: raw.tg.unwrap_or(d.tg),
                droop_r: raw.droop_r.unwrap_or(d.droop_r),
                bias_b: raw.bias_b.unwrap_or(d.bias_b),
                tie_coeff: raw.tie_coeff.unwrap_or(d.tie_coeff),
            };
            let spec = ModelSpec::Params(p);
            spec.build()?;
            Ok(spec)
        }
        Some(other) => Err(CliError::invalid(
            "model.kind",
            format!("expected \"paper\" or \"params\", got \"{other}\""),
        )),
    }
}

fn apply_swarm(mut cfg: SwarmConfig, raw: Option<&RawSwarm>, prefix: &str) -> Result<SwarmConfig, CliError> {
    if let Some(r) = raw {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = r.$f { cfg.$f = v; } )* };
        }
        take!(population, iterations, c1, c2, range_lo, range_hi, vmax, inertia, penalty, workers);
    }
    cfg.validate().map_err(|e| match e {
        agc_core::psoopt::PsoError::InvalidConfig { field, reason } => {
            CliError::invalid(format!("{prefix}.{field}"), reason)
        }
        other => CliError::invalid(prefix, other.to_string()),
    })?;
    Ok(cfg)
}

fn build_fitness(raw: RawFitness) -> Result<FitnessSettings, CliError> {
    let d = FitnessSettings::default();
    let scenarios = match raw.scenarios.as_deref() {
        None | Some("both") => FitnessScenarios::BothAreas,
        Some("area1") => FitnessScenarios::Area1Only,
        Some(other) => {
            return Err(CliError::invalid(
                "fitness.scenarios",
                format!("expected \"both\" or \"area1\", got \"{other}\""),
            ))
        }
    };
    let f = FitnessSettings {
        horizon: raw.horizon.unwrap_or(d.horizon),
        dt: raw.dt.unwrap_or(d.dt),
        magnitude: raw.magnitude.unwrap_or(d.magnitude),
        scenarios,
        penalty: d.penalty,
    };
    for s in f.scenario_list() {
        s.validate().map_err(|e| scenario_error("fitness", &e))?;
    }
    Ok(f)
}

fn scenario_error(prefix: &str, e: &agc_core::simkit::SimError) -> CliError {
    match e {
        agc_core::simkit::SimError::InvalidScenario { field, reason } => {
            CliError::invalid(format!("{prefix}.{field}"), reason.clone())
        }
        other => CliError::invalid(prefix, other.to_string()),
    }
}

fn default_controllers(base: &SwarmConfig) -> Result<Vec<ControllerSpec>, CliError> {
    Ok(vec![
        ControllerSpec {
            name: "integral".into(),
            kind: ControllerKind::Integral(integral_swarm(base, None)?),
        },
        ControllerSpec {
            name: "lqr_pi".into(),
            kind: ControllerKind::LqrPi {
                q: Matrix::identity(11),
                r: Matrix::identity(2),
            },
        },
        ControllerSpec {
            name: "pso_k".into(),
            kind: ControllerKind::PsoK(base.clone()),
        },
    ])
}

/// Integral gains are searched over `[0, range_hi]` unless overridden.
fn integral_swarm(base: &SwarmConfig, raw: Option<&RawSwarm>) -> Result<SwarmConfig, CliError> {
    let start = SwarmConfig {
        range_lo: 0.0,
        ..base.clone()
    };
    apply_swarm(start, raw, "controller.pso")
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn build_controller(index: usize, raw: RawController, base: &SwarmConfig) -> Result<ControllerSpec, CliError> {
    let name = raw.name.unwrap_or_else(|| raw.kind.clone());
    if !valid_name(&name) {
        return Err(CliError::invalid(
            "controller.name",
            format!("`{name}` (controllers[{index}]) must be non-empty ASCII letters, digits, '_' or '-'"),
        ));
    }
    let weights_given = raw.q_diag.is_some() || raw.r_diag.is_some();
    let kind = match raw.kind.as_str() {
        "integral" | "pso_k" if weights_given => {
            return Err(CliError::invalid(
                "controller.q_diag",
                format!("weights only apply to lqr_pi (controllers[{index}])"),
            ))
        }
        "integral" => ControllerKind::Integral(integral_swarm(base, raw.pso.as_ref())?),
        "pso_k" => ControllerKind::PsoK(apply_swarm(base.clone(), raw.pso.as_ref(), "controller.pso")?),
        "lqr_pi" => {
            if raw.pso.is_some() {
                return Err(CliError::invalid(
                    "controller.pso",
                    format!("swarm settings do not apply to lqr_pi (controllers[{index}])"),
                ));
            }
            let q = diag_weight("controller.q_diag", raw.q_diag, 11, false)?;
            let r = diag_weight("controller.r_diag", raw.r_diag, 2, true)?;
            ControllerKind::LqrPi { q, r }
        }
        other => {
            return Err(CliError::invalid(
                "controller.kind",
                format!("unknown kind \"{other}\" (controllers[{index}]); expected integral, lqr_pi or pso_k"),
            ))
        }
    };
    Ok(ControllerSpec { name, kind })
}

fn diag_weight(key: &str, diag: Option<Vec<f64>>, n: usize, strict: bool) -> Result<Matrix, CliError> {
    let Some(d) = diag else {
        return Ok(Matrix::identity(n));
    };
    if d.len() != n {
        return Err(CliError::invalid(key, format!("expected {n} entries, got {}", d.len())));
    }
    let ok = |v: &f64| v.is_finite() && if strict { *v > 0.0 } else { *v >= 0.0 };
    if !d.iter().all(ok) {
        let need = if strict { "positive" } else { "non-negative" };
        return Err(CliError::invalid(key, format!("entries must be finite and {need}")));
    }
    Ok(Matrix::diagonal(&d))
}

fn build_scenario(index: usize, raw: RawScenario) -> Result<Scenario, CliError> {
    let area = Area::from_number(raw.area).ok_or_else(|| {
        CliError::invalid("scenario.area", format!("must be 1 or 2, got {} (scenarios[{index}])", raw.area))
    })?;
    let s = Scenario {
        disturbance_area: area,
        disturbance_magnitude: raw.magnitude.unwrap_or(0.01),
        horizon: raw.horizon.unwrap_or(DEFAULT_HORIZON),
        dt: raw.dt.unwrap_or(DEFAULT_DT),
    };
    s.validate().map_err(|e| match scenario_error("scenario", &e) {
        CliError::Invalid { key, reason } => CliError::Invalid {
            key,
            reason: format!("{reason} (scenarios[{index}])"),
        },
        other => other,
    })?;
    Ok(s)
}
