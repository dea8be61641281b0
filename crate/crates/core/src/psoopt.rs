//! Particle swarm optimization of state-feedback gains.
//!
//! The update is the plain two-attractor form
//!
//! ```text
//! v ← w·v + c1·φ1∘(pbest − x) + c2·φ2∘(gbest − x),   v clamped to ±vmax
//! x ← x + v,                                         x clamped to the box
//! ```
//!
//! with `w = 1` by default. Random numbers come from ChaCha8 seeded with
//! `SwarmConfig::seed`; every draw of an iteration is taken, in a fixed order,
//! before that iteration's fitness evaluations are dispatched, so the number
//! of worker threads never changes the result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::numkern::Vector;
use crate::plant::TwoAreaModel;
use crate::simkit::{simulate_ise, Area, FeedbackGain, GainMask, IseOutcome, Scenario, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PsoError {
    #[error("invalid swarm setting `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("failed to start worker pool: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig {
    pub population: usize,
    pub iterations: usize,
    pub c1: f64,
    pub c2: f64,
    pub range_lo: f64,
    pub range_hi: f64,
    pub vmax: f64,
    /// Weight on the previous velocity.
    pub inertia: f64,
    pub seed: u64,
    /// Fitness floor for candidates whose closed loop diverges.
    pub penalty: f64,
    /// Threads used for fitness evaluation. Does not affect results.
    pub workers: usize,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            population: 100,
            iterations: 100,
            c1: 1.5,
            c2: 1.5,
            range_lo: -3.0,
            range_hi: 3.0,
            vmax: 3.0,
            inertia: 1.0,
            seed: 0,
            penalty: 1e6,
            workers: 1,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), PsoError> {
        let bad = |field: &'static str, reason: String| Err(PsoError::InvalidConfig { field, reason });
        // A single particle is allowed so the degenerate swarm can be exercised.
        if self.population < 1 {
            return bad("population", "must be at least 1".into());
        }
        if self.iterations < 1 {
            return bad("iterations", "must be at least 1".into());
        }
        if !(self.range_lo.is_finite() && self.range_hi.is_finite() && self.range_lo < self.range_hi) {
            return bad(
                "range",
                format!("need range_lo < range_hi, got [{}, {}]", self.range_lo, self.range_hi),
            );
        }
        if !(self.vmax.is_finite() && self.vmax > 0.0) {
            return bad("vmax", format!("must be positive, got {}", self.vmax));
        }
        if !(self.c1.is_finite() && self.c1 >= 0.0) {
            return bad("c1", format!("must be non-negative, got {}", self.c1));
        }
        if !(self.c2.is_finite() && self.c2 >= 0.0) {
            return bad("c2", format!("must be non-negative, got {}", self.c2));
        }
        if !self.inertia.is_finite() {
            return bad("inertia", "must be finite".into());
        }
        if !self.penalty.is_finite() {
            return bad("penalty", "must be finite".into());
        }
        if self.workers < 1 {
            return bad("workers", "must be at least 1".into());
        }
        Ok(())
    }

    fn clamp_position(&self, v: f64) -> f64 {
        v.clamp(self.range_lo, self.range_hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vector,
    pub velocity: Vector,
    pub pbest_position: Vector,
    pub pbest_fitness: f64,
}

/// Velocity update followed by the ±vmax clamp.
pub fn update_velocity(
    p: &Particle,
    gbest: &[f64],
    cfg: &SwarmConfig,
    phi1: &[f64],
    phi2: &[f64],
) -> Result<Vector, PsoError> {
    let d = p.position.len();
    for len in [p.velocity.len(), p.pbest_position.len(), gbest.len(), phi1.len(), phi2.len()] {
        if len != d {
            return Err(PsoError::Dimension { expected: d, got: len });
        }
    }
    Ok(Vector(
        (0..d)
            .map(|i| {
                let x = p.position[i];
                let v = cfg.inertia * p.velocity[i]
                    + cfg.c1 * phi1[i] * (p.pbest_position[i] - x)
                    + cfg.c2 * phi2[i] * (gbest[i] - x);
                v.clamp(-cfg.vmax, cfg.vmax)
            })
            .collect(),
    ))
}

/// `x + v`, clamped to the search box.
pub fn update_position(p: &Particle, cfg: &SwarmConfig) -> Vector {
    Vector(
        p.position
            .iter()
            .zip(p.velocity.iter())
            .map(|(x, v)| cfg.clamp_position(x + v))
            .collect(),
    )
}

/// Something to minimize over a box.
pub trait Objective: Sync {
    fn dimension(&self) -> usize;
    fn evaluate(&self, position: &[f64]) -> f64;
}

/// Adapts a closure into an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, position: &[f64]) -> f64 {
        (self.f)(position)
    }
}

/// Which load steps the gain fitness simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessScenarios {
    /// A step in area 1 and, separately, a step in area 2.
    BothAreas,
    Area1Only,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessSettings {
    pub horizon: f64,
    pub dt: f64,
    pub magnitude: f64,
    pub scenarios: FitnessScenarios,
    pub penalty: f64,
}

impl Default for FitnessSettings {
    fn default() -> Self {
        Self {
            horizon: 60.0,
            dt: crate::simkit::DEFAULT_DT,
            magnitude: 0.01,
            scenarios: FitnessScenarios::BothAreas,
            penalty: 1e6,
        }
    }
}

impl FitnessSettings {
    pub fn scenario_list(&self) -> Vec<Scenario> {
        let areas: &[Area] = match self.scenarios {
            FitnessScenarios::BothAreas => &[Area::One, Area::Two],
            FitnessScenarios::Area1Only => &[Area::One],
        };
        areas
            .iter()
            .map(|&a| Scenario {
                disturbance_area: a,
                disturbance_magnitude: self.magnitude,
                horizon: self.horizon,
                dt: self.dt,
            })
            .collect()
    }
}

/// Summed ISE of the configured load steps under `u = -Kx`.
///
/// A diverging run scores `penalty + (horizon - divergence time)` so earlier
/// blow-ups rank worse.
pub fn fitness(
    position: &[f64],
    mask: GainMask,
    m: &TwoAreaModel,
    settings: &FitnessSettings,
) -> Result<f64, PsoError> {
    let gain = FeedbackGain::from_position(position, mask)?;
    let mut total = 0.0;
    let mut penalty = 0.0;
    let mut diverged = false;
    for s in settings.scenario_list() {
        match simulate_ise(m, &gain, &s)? {
            IseOutcome::Finite(v) if v.is_finite() => total += v,
            IseOutcome::Finite(_) => {
                diverged = true;
                penalty += s.horizon;
            }
            IseOutcome::Diverged { time } => {
                diverged = true;
                penalty += s.horizon - time;
            }
        }
    }
    Ok(if diverged {
        settings.penalty + penalty
    } else {
        total
    })
}

/// The gain fitness as an [`Objective`].
pub struct GainObjective<'a> {
    pub model: &'a TwoAreaModel,
    pub mask: GainMask,
    pub settings: FitnessSettings,
}

impl Objective for GainObjective<'_> {
    fn dimension(&self) -> usize {
        self.mask.dimension()
    }

    fn evaluate(&self, position: &[f64]) -> f64 {
        // Position length is guaranteed by the optimizer and scenarios by settings.
        fitness(position, self.mask, self.model, &self.settings)
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmOutcome {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// gbest fitness after each iteration; entry 0 is the initial swarm.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub best_gain: FeedbackGain,
    pub best_fitness: f64,
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn evaluate_all(
    positions: &[Vector],
    objective: &dyn Objective,
    pool: Option<&rayon::ThreadPool>,
) -> Vec<f64> {
    let eval = |p: &Vector| {
        let f = objective.evaluate(p);
        if f.is_nan() {
            f64::INFINITY
        } else {
            f
        }
    };
    match pool {
        Some(pool) => pool.install(|| positions.par_iter().map(eval).collect()),
        None => positions.iter().map(eval).collect(),
    }
}

/// Minimizes `objective` over the box. Deterministic for a fixed seed.
pub fn optimize_objective(
    cfg: &SwarmConfig,
    objective: &dyn Objective,
    mut progress: impl FnMut(usize, f64),
) -> Result<SwarmOutcome, PsoError> {
    cfg.validate()?;
    let dim = objective.dimension();
    let pool = if cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| PsoError::Workers(e.to_string()))?,
        )
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v0 = cfg.vmax / 10.0;

    let mut particles: Vec<Particle> = (0..cfg.population)
        .map(|i| {
            let position: Vector = if i == 0 {
                Vector((0..dim).map(|_| cfg.clamp_position(0.0)).collect())
            } else {
                Vector((0..dim).map(|_| rng.gen_range(cfg.range_lo..=cfg.range_hi)).collect())
            };
            let velocity = Vector((0..dim).map(|_| rng.gen_range(-v0..=v0)).collect());
            Particle {
                pbest_position: position.clone(),
                position,
                velocity,
                pbest_fitness: f64::INFINITY,
            }
        })
        .collect();

    let positions: Vec<Vector> = particles.iter().map(|p| p.position.clone()).collect();
    let scores = evaluate_all(&positions, objective, pool.as_ref());
    let mut evaluations = scores.len();
    for (p, f) in particles.iter_mut().zip(&scores) {
        p.pbest_fitness = *f;
    }
    let (mut gbest_idx, mut gbest_fitness) = (0, particles[0].pbest_fitness);
    for (i, p) in particles.iter().enumerate().skip(1) {
        if p.pbest_fitness < gbest_fitness {
            gbest_idx = i;
            gbest_fitness = p.pbest_fitness;
        }
    }
    let mut gbest = particles[gbest_idx].pbest_position.clone();
    let mut history = vec![gbest_fitness];
    progress(1, gbest_fitness);

    for iter in 2..=cfg.iterations {
        let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.population)
            .map(|_| {
                let phi1 = (0..dim).map(|_| rng.gen::<f64>()).collect();
                let phi2 = (0..dim).map(|_| rng.gen::<f64>()).collect();
                (phi1, phi2)
            })
            .collect();
        for (p, (phi1, phi2)) in particles.iter_mut().zip(&draws) {
            p.velocity = update_velocity(p, &gbest, cfg, phi1, phi2)?;
            p.position = update_position(p, cfg);
        }

        let positions: Vec<Vector> = particles.iter().map(|p| p.position.clone()).collect();
        let scores = evaluate_all(&positions, objective, pool.as_ref());
        evaluations += scores.len();

        for (i, (p, f)) in particles.iter_mut().zip(&scores).enumerate() {
            if *f < p.pbest_fitness {
                p.pbest_fitness = *f;
                p.pbest_position = p.position.clone();
            }
            if p.pbest_fitness < gbest_fitness {
                gbest_fitness = p.pbest_fitness;
                gbest_idx = i;
            }
        }
        gbest = particles[gbest_idx].pbest_position.clone();
        debug_assert!(history.last().is_some_and(|prev| gbest_fitness <= *prev));
        history.push(gbest_fitness);
        progress(iter, gbest_fitness);
    }

    Ok(SwarmOutcome {
        best_position: gbest.into_inner(),
        best_fitness: gbest_fitness,
        history,
        evaluations,
    })
}

/// Tunes a gain of the given mask against the ISE fitness.
pub fn optimize(
    cfg: &SwarmConfig,
    mask: GainMask,
    m: &TwoAreaModel,
    settings: &FitnessSettings,
    progress: impl FnMut(usize, f64),
) -> Result<PsoResult, PsoError> {
    let settings = FitnessSettings {
        penalty: cfg.penalty,
        ..*settings
    };
    for s in settings.scenario_list() {
        s.validate()?;
    }
    let objective = GainObjective {
        model: m,
        mask,
        settings,
    };
    let out = optimize_objective(cfg, &objective, progress)?;
    Ok(PsoResult {
        best_gain: FeedbackGain::from_position(&out.best_position, mask)?,
        best_fitness: out.best_fitness,
        history: out.history,
        evaluations: out.evaluations,
    })
}
