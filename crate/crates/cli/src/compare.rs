//! Tunes every configured controller and simulates it against every scenario.

use agc_core::lqrsyn::{lqr_gain, solve_care};
use agc_core::psoopt::optimize;
use agc_core::{metrics, simulate, Area, Channel, FeedbackGain, GainMask, ResponseMetrics, Scenario, Trajectory};

use crate::config::{ControllerKind, RunConfig};
use crate::error::CliError;

/// How a controller was tuned.
#[derive(Debug, Clone, PartialEq)]
pub enum Tuning {
    Swarm {
        history: Vec<f64>,
        best_fitness: f64,
        evaluations: usize,
    },
    Riccati {
        residual: f64,
        iterations: usize,
        newton_steps: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunedController {
    pub name: String,
    pub kind: &'static str,
    pub gain: FeedbackGain,
    pub tuning: Tuning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub controller: String,
    pub scenario_index: usize,
    pub trajectory: Trajectory,
    /// Indexed like [`Channel::ALL`].
    pub metrics: [ResponseMetrics; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub controllers: Vec<TunedController>,
    pub scenarios: Vec<Scenario>,
    pub settling_band: f64,
    /// Controller-major, scenario-minor.
    pub runs: Vec<ScenarioRun>,
}

/// One (controller, scenario, channel) entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow<'a> {
    pub controller: &'a str,
    pub scenario_index: usize,
    pub disturbance_area: Area,
    pub channel: Channel,
    pub metrics: &'a ResponseMetrics,
}

impl ComparisonReport {
    pub fn run(&self, controller: &str, scenario_index: usize) -> Option<&ScenarioRun> {
        self.runs
            .iter()
            .find(|r| r.controller == controller && r.scenario_index == scenario_index)
    }

    pub fn metrics(&self, controller: &str, scenario_index: usize, channel: Channel) -> Option<&ResponseMetrics> {
        self.run(controller, scenario_index)
            .map(|r| &r.metrics[channel as usize])
    }

    pub fn controller(&self, name: &str) -> Option<&TunedController> {
        self.controllers.iter().find(|c| c.name == name)
    }

    pub fn rows(&self) -> impl Iterator<Item = MetricsRow<'_>> {
        self.runs.iter().flat_map(move |run| {
            Channel::ALL.into_iter().map(move |channel| MetricsRow {
                controller: &run.controller,
                scenario_index: run.scenario_index,
                disturbance_area: self.scenarios[run.scenario_index].disturbance_area,
                channel,
                metrics: &run.metrics[channel as usize],
            })
        })
    }
}

/// `delfXY`: frequency of area X under a load step in area Y.
pub fn delf_label(channel: Channel, disturbance: Area) -> String {
    format!("delf{}{}", channel.area().number(), disturbance.number())
}

/// Progress events while tuning.
pub trait Progress {
    fn swarm_iteration(&mut self, controller: &str, iteration: usize, gbest: f64);
}

impl Progress for () {
    fn swarm_iteration(&mut self, _: &str, _: usize, _: f64) {}
}

impl<F: FnMut(&str, usize, f64)> Progress for F {
    fn swarm_iteration(&mut self, controller: &str, iteration: usize, gbest: f64) {
        self(controller, iteration, gbest)
    }
}

fn solver_error(controller: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Solver {
        controller: controller.to_string(),
        message: e.to_string(),
    }
}

pub fn tune_controller(
    cfg: &RunConfig,
    model: &agc_core::TwoAreaModel,
    spec: &crate::config::ControllerSpec,
    progress: &mut dyn Progress,
) -> Result<TunedController, CliError> {
    let name = spec.name.as_str();
    let (gain, tuning) = match &spec.kind {
        ControllerKind::LqrPi { q, r } => {
            let sol = solve_care(&model.a, &model.b, q, r).map_err(|e| solver_error(name, e))?;
            let gain = lqr_gain(&sol, &model.b, r).map_err(|e| solver_error(name, e))?;
            (
                gain,
                Tuning::Riccati {
                    residual: sol.residual,
                    iterations: sol.iterations,
                    newton_steps: sol.newton_steps,
                },
            )
        }
        ControllerKind::Integral(swarm) | ControllerKind::PsoK(swarm) => {
            let mask = match spec.kind {
                ControllerKind::Integral(_) => GainMask::IntegralOnly,
                _ => GainMask::Full,
            };
            let res = optimize(swarm, mask, model, &cfg.fitness, |i, f| {
                progress.swarm_iteration(name, i, f)
            })
            .map_err(|e| solver_error(name, e))?;
            (
                res.best_gain,
                Tuning::Swarm {
                    history: res.history,
                    best_fitness: res.best_fitness,
                    evaluations: res.evaluations,
                },
            )
        }
    };
    Ok(TunedController {
        name: spec.name.clone(),
        kind: spec.kind.label(),
        gain,
        tuning,
    })
}

pub fn run_comparison(cfg: &RunConfig, progress: &mut dyn Progress) -> Result<ComparisonReport, CliError> {
    let model = cfg.model.build()?;
    let mut controllers = Vec::with_capacity(cfg.controllers.len());
    for spec in &cfg.controllers {
        controllers.push(tune_controller(cfg, &model, spec, progress)?);
    }

    let mut runs = Vec::with_capacity(controllers.len() * cfg.scenarios.len());
    for c in &controllers {
        for (idx, s) in cfg.scenarios.iter().enumerate() {
            let trajectory = simulate(&model, &c.gain, s).map_err(|e| solver_error(&c.name, e))?;
            if let Some(t) = trajectory.diverged_at {
                return Err(solver_error(
                    &c.name,
                    format!("closed loop diverged at t = {t} s in scenario {}", idx + 1),
                ));
            }
            let m = |ch| metrics(&trajectory, ch, cfg.settling_band).map_err(|e| solver_error(&c.name, e));
            let metrics = [m(Channel::Df1)?, m(Channel::Df2)?];
            runs.push(ScenarioRun {
                controller: c.name.clone(),
                scenario_index: idx,
                trajectory,
                metrics,
            });
        }
    }

    Ok(ComparisonReport {
        controllers,
        scenarios: cfg.scenarios.clone(),
        settling_band: cfg.settling_band,
        runs,
    })
}
