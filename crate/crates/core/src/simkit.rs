//! Closed-loop step-response simulation and response metrics.
//!
//! The closed loop `dx/dt = (A - BK)x + F d` is linear time-invariant with a
//! constant disturbance, so one classical RK4 step is the fixed affine map
//! `x ↦ Φx + g` with `Φ = Σ_{k≤4} (hM)^k/k!`. [`LinearRk4`] precomputes it
//! once per run; [`crate::numkern::rk4_step`] gives the same map step by step.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::numkern::{mat_mul, KernelError, Matrix};
use crate::plant::{TwoAreaModel, DF1, DF2, IACE1, IACE2, N_INPUTS, N_STATES, STATE_LABELS};

pub const DEFAULT_DT: f64 = 0.005;
pub const DEFAULT_HORIZON: f64 = 120.0;
pub const DEFAULT_SETTLING_BAND: f64 = 0.0005;
pub const DIVERGENCE_LIMIT: f64 = 1e6;

pub type StateVector = [f64; N_STATES];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid scenario `{field}`: {reason}")]
    InvalidScenario {
        field: &'static str,
        reason: String,
    },
    #[error("gain violates {mask} mask: entry ({row}, {col}) = {value}")]
    MaskViolation {
        mask: GainMask,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("gain must be {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    GainShape {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("position has {got} coordinates but the {mask} mask needs {expected}")]
    PositionLength {
        mask: GainMask,
        expected: usize,
        got: usize,
    },
    #[error("trajectory diverged at t = {time} s; use the penalty path instead")]
    Diverged { time: f64 },
    #[error("settling band must be positive, got {0}")]
    InvalidBand(f64),
    #[error("invalid weight matrix `{name}`: {reason}")]
    InvalidWeight { name: &'static str, reason: String },
}

/// Which entries of the 2×11 gain are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GainMask {
    /// All 22 entries.
    Full,
    /// Only `K[0][∫ACE1]` and `K[1][∫ACE2]`.
    IntegralOnly,
}

impl GainMask {
    pub fn dimension(self) -> usize {
        match self {
            GainMask::Full => N_INPUTS * N_STATES,
            GainMask::IntegralOnly => 2,
        }
    }

    pub fn allows(self, row: usize, col: usize) -> bool {
        match self {
            GainMask::Full => true,
            GainMask::IntegralOnly => (row, col) == (0, IACE1) || (row, col) == (1, IACE2),
        }
    }
}

impl fmt::Display for GainMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GainMask::Full => "full",
            GainMask::IntegralOnly => "integral_only",
        })
    }
}

/// State feedback `u = -K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGain {
    k: Matrix,
    mask: GainMask,
}

impl FeedbackGain {
    pub fn new(k: Matrix, mask: GainMask) -> Result<Self, SimError> {
        if k.shape() != (N_INPUTS, N_STATES) {
            return Err(SimError::GainShape {
                expected_rows: N_INPUTS,
                expected_cols: N_STATES,
                rows: k.rows(),
                cols: k.cols(),
            });
        }
        for row in 0..N_INPUTS {
            for col in 0..N_STATES {
                let value = k[(row, col)];
                if value != 0.0 && !mask.allows(row, col) {
                    return Err(SimError::MaskViolation {
                        mask,
                        row,
                        col,
                        value,
                    });
                }
            }
        }
        Ok(Self { k, mask })
    }

    pub fn full(k: Matrix) -> Result<Self, SimError> {
        Self::new(k, GainMask::Full)
    }

    pub fn integral(ki1: f64, ki2: f64) -> Self {
        let mut k = Matrix::zeros(N_INPUTS, N_STATES);
        k[(0, IACE1)] = ki1;
        k[(1, IACE2)] = ki2;
        Self {
            k,
            mask: GainMask::IntegralOnly,
        }
    }

    pub fn zero() -> Self {
        Self {
            k: Matrix::zeros(N_INPUTS, N_STATES),
            mask: GainMask::Full,
        }
    }

    /// Unpacks a search-space position: row-major K for `Full`, `(Ki1, Ki2)` otherwise.
    pub fn from_position(position: &[f64], mask: GainMask) -> Result<Self, SimError> {
        if position.len() != mask.dimension() {
            return Err(SimError::PositionLength {
                mask,
                expected: mask.dimension(),
                got: position.len(),
            });
        }
        Ok(match mask {
            GainMask::Full => Self {
                k: Matrix::from_row_major(N_INPUTS, N_STATES, position.to_vec()),
                mask,
            },
            GainMask::IntegralOnly => Self::integral(position[0], position[1]),
        })
    }

    pub fn to_position(&self) -> Vec<f64> {
        match self.mask {
            GainMask::Full => self.k.as_slice().to_vec(),
            GainMask::IntegralOnly => vec![self.k[(0, IACE1)], self.k[(1, IACE2)]],
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.k
    }

    pub fn mask(&self) -> GainMask {
        self.mask
    }

    /// The same controller with the two areas relabelled.
    pub fn area_swap(&self) -> Self {
        let mut k = Matrix::zeros(N_INPUTS, N_STATES);
        for r in 0..N_INPUTS {
            for j in 0..N_STATES {
                let (sj, sign) = crate::plant::swap_map(j);
                k[(1 - r, sj)] = sign * self.k[(r, j)];
            }
        }
        Self { k, mask: self.mask }
    }

    pub fn control(&self, x: &[f64]) -> [f64; N_INPUTS] {
        let mut u = [0.0; N_INPUTS];
        for (r, ur) in u.iter_mut().enumerate() {
            *ur = -crate::numkern::dot(self.k.row(r), x);
        }
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Area {
    One,
    Two,
}

impl Area {
    pub fn index(self) -> usize {
        match self {
            Area::One => 0,
            Area::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Area::One),
            2 => Some(Area::Two),
            _ => None,
        }
    }
}

/// Frequency channel of a metrics query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Df1,
    Df2,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Df1, Channel::Df2];

    pub fn state_index(self) -> usize {
        match self {
            Channel::Df1 => DF1,
            Channel::Df2 => DF2,
        }
    }

    pub fn area(self) -> Area {
        match self {
            Channel::Df1 => Area::One,
            Channel::Df2 => Area::Two,
        }
    }
}

/// A load step from the nominal operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub disturbance_area: Area,
    /// Load step in p.u.; 0.01 is a 1% step.
    pub disturbance_magnitude: f64,
    pub horizon: f64,
    pub dt: f64,
}

impl Scenario {
    pub fn step(area: Area, magnitude: f64) -> Self {
        Self {
            disturbance_area: area,
            disturbance_magnitude: magnitude,
            horizon: DEFAULT_HORIZON,
            dt: DEFAULT_DT,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::InvalidScenario {
                field: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.horizon.is_finite() && self.horizon >= 10.0 * self.dt) {
            return Err(SimError::InvalidScenario {
                field: "horizon",
                reason: format!("must be at least 10 * dt, got {}", self.horizon),
            });
        }
        if !self.disturbance_magnitude.is_finite() {
            return Err(SimError::InvalidScenario {
                field: "magnitude",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Sampled closed-loop response. Sample `k` is at `k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub controls: Vec<[f64; N_INPUTS]>,
    /// Time at which `‖x‖∞` first exceeded [`DIVERGENCE_LIMIT`]; samples stop before it.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn channel(&self, channel: Channel) -> impl Iterator<Item = f64> + '_ {
        let idx = channel.state_index();
        self.states.iter().map(move |x| x[idx])
    }

    /// Builds a trajectory from frequency traces alone (other states zero,
    /// no control). Used for synthetic metric checks.
    pub fn from_frequencies(dt: f64, df1: &[f64], df2: &[f64]) -> Self {
        assert_eq!(df1.len(), df2.len());
        let states = df1
            .iter()
            .zip(df2)
            .map(|(&a, &b)| {
                let mut x = [0.0; N_STATES];
                x[DF1] = a;
                x[DF2] = b;
                x
            })
            .collect();
        Self {
            dt,
            times: (0..df1.len()).map(|k| k as f64 * dt).collect(),
            states,
            controls: vec![[0.0; N_INPUTS]; df1.len()],
            diverged_at: None,
        }
    }

    pub fn csv_header() -> String {
        let mut h = String::from("t");
        for label in STATE_LABELS {
            h.push(',');
            h.push_str(label);
        }
        h.push_str(",u1,u2");
        h
    }

    /// Writes one row per sample with shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::csv_header())?;
        for ((t, x), u) in self.times.iter().zip(&self.states).zip(&self.controls) {
            write!(out, "{t}")?;
            for v in x {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{},{}", u[0], u[1])?;
        }
        Ok(())
    }
}

/// `A - B K`.
pub fn closed_loop_matrix(m: &TwoAreaModel, g: &FeedbackGain) -> Result<Matrix, SimError> {
    let bk = mat_mul(&m.b, g.matrix())?;
    Ok(m.a.sub(&bk)?)
}

/// Precomputed RK4 map for `dx/dt = M x + w` with constant `w`.
#[derive(Debug, Clone)]
pub struct LinearRk4 {
    phi: Matrix,
    offset: StateVector,
}

impl LinearRk4 {
    pub fn new(m: &Matrix, w: &[f64], dt: f64) -> Result<Self, SimError> {
        let n = m.rows();
        if !m.is_square() || n != N_STATES || w.len() != n {
            return Err(KernelError::DimensionMismatch {
                op: "LinearRk4",
                left: m.shape(),
                right: (w.len(), 1),
            }
            .into());
        }
        let hm = m.scale(dt);
        let id = Matrix::identity(n);
        // Horner: Φ = I + hM(I + hM/2(I + hM/3(I + hM/4)))
        let mut phi = id.clone();
        for k in [4.0, 3.0, 2.0, 1.0] {
            phi = id.add(&mat_mul(&hm, &phi)?.scale(1.0 / k))?;
        }
        // g = h(I + hM/2(I + hM/3(I + hM/4)))w
        let mut g = w.to_vec();
        for k in [4.0, 3.0, 2.0] {
            let hg = hm.mul_vec(&g)?;
            g = w.iter().zip(hg.iter()).map(|(wi, v)| wi + v / k).collect();
        }
        let mut offset = [0.0; N_STATES];
        for (o, gi) in offset.iter_mut().zip(&g) {
            *o = dt * gi;
        }
        Ok(Self { phi, offset })
    }

    #[inline]
    pub fn step(&self, x: &StateVector) -> StateVector {
        let mut next = self.offset;
        for (i, out) in next.iter_mut().enumerate() {
            let row = self.phi.row(i);
            let mut s = 0.0;
            for j in 0..N_STATES {
                s += row[j] * x[j];
            }
            *out += s;
        }
        next
    }
}

/// Trapezoidal quadrature accumulated one sample at a time.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Trapezoid {
    dt: f64,
    interior: f64,
    first: Option<f64>,
    last: f64,
}

impl Trapezoid {
    pub(crate) fn new(dt: f64) -> Self {
        Self {
            dt,
            interior: 0.0,
            first: None,
            last: 0.0,
        }
    }

    pub(crate) fn push(&mut self, v: f64) {
        if self.first.is_none() {
            self.first = Some(v);
        } else {
            self.interior += self.last;
        }
        self.last = v;
    }

    pub(crate) fn total(&self) -> f64 {
        match self.first {
            None => 0.0,
            Some(first) => {
                // `interior` holds every sample except the last; remove the first's half.
                self.dt * (self.interior - 0.5 * first + 0.5 * self.last)
            }
        }
    }
}

fn ise_integrand(x: &StateVector) -> f64 {
    0.5 * (x[DF1] * x[DF1] + x[DF2] * x[DF2])
}

/// Outcome of a run that only accumulates ISE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IseOutcome {
    Finite(f64),
    Diverged { time: f64 },
}

/// Integrates the scenario and reports every sample to `sink`. Returns the
/// divergence time, if any.
fn integrate(
    m: &TwoAreaModel,
    g: &FeedbackGain,
    s: &Scenario,
    mut sink: impl FnMut(f64, &StateVector),
) -> Result<Option<f64>, SimError> {
    s.validate()?;
    let cl = closed_loop_matrix(m, g)?;
    let w: Vec<f64> = m
        .f
        .column(s.disturbance_area.index())
        .iter()
        .map(|v| v * s.disturbance_magnitude)
        .collect();
    let prop = LinearRk4::new(&cl, &w, s.dt)?;

    let mut x = [0.0; N_STATES];
    sink(0.0, &x);
    for k in 1..=s.steps() {
        x = prop.step(&x);
        let t = k as f64 * s.dt;
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must count as divergence
        if x.iter().any(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
            return Ok(Some(t));
        }
        sink(t, &x);
    }
    Ok(None)
}

/// Simulates the closed loop from the zero state under a load step at `t = 0`.
pub fn simulate(m: &TwoAreaModel, g: &FeedbackGain, s: &Scenario) -> Result<Trajectory, SimError> {
    let n = s.steps() + 1;
    let mut traj = Trajectory {
        dt: s.dt,
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        controls: Vec::with_capacity(n),
        diverged_at: None,
    };
    traj.diverged_at = integrate(m, g, s, |t, x| {
        traj.times.push(t);
        traj.states.push(*x);
        traj.controls.push(g.control(x));
    })?;
    Ok(traj)
}

/// ISE of a scenario without storing the trajectory. Bitwise equal to
/// `ise(&simulate(..))` for non-diverged runs.
pub fn simulate_ise(
    m: &TwoAreaModel,
    g: &FeedbackGain,
    s: &Scenario,
) -> Result<IseOutcome, SimError> {
    let mut acc = Trapezoid::new(s.dt);
    let diverged = integrate(m, g, s, |_, x| acc.push(ise_integrand(x)))?;
    Ok(match diverged {
        Some(time) => IseOutcome::Diverged { time },
        None => IseOutcome::Finite(acc.total()),
    })
}

/// `½∫(Δf1² + Δf2²) dt` by the trapezoidal rule.
pub fn ise(traj: &Trajectory) -> Result<f64, SimError> {
    if let Some(time) = traj.diverged_at {
        return Err(SimError::Diverged { time });
    }
    let mut acc = Trapezoid::new(traj.dt);
    for x in &traj.states {
        acc.push(ise_integrand(x));
    }
    Ok(acc.total())
}

fn check_symmetric(name: &'static str, m: &Matrix, n: usize) -> Result<(), SimError> {
    if m.shape() != (n, n) {
        return Err(SimError::InvalidWeight {
            name,
            reason: format!("expected {n}x{n}, got {}x{}", m.rows(), m.cols()),
        });
    }
    let asym = m.asymmetry();
    if asym > 1e-12 {
        return Err(SimError::InvalidWeight {
            name,
            reason: format!("not symmetric (max asymmetry {asym:.3e})"),
        });
    }
    Ok(())
}

/// `½∫(xᵀQx + uᵀRu) dt` by the trapezoidal rule.
pub fn quadratic_cost(traj: &Trajectory, q: &Matrix, r: &Matrix) -> Result<f64, SimError> {
    if let Some(time) = traj.diverged_at {
        return Err(SimError::Diverged { time });
    }
    check_symmetric("q", q, N_STATES)?;
    check_symmetric("r", r, N_INPUTS)?;
    // Small shift admits PSD Q with zero eigenvalues.
    let shift = 1e-12 * (1.0 + q.max_abs());
    let q_shifted = q.add(&Matrix::identity(N_STATES).scale(shift))?;
    crate::numkern::cholesky(&q_shifted).map_err(|_| SimError::InvalidWeight {
        name: "q",
        reason: "not positive semidefinite".into(),
    })?;
    crate::numkern::cholesky(r).map_err(|_| SimError::InvalidWeight {
        name: "r",
        reason: "not positive definite".into(),
    })?;

    let mut acc = Trapezoid::new(traj.dt);
    for (x, u) in traj.states.iter().zip(&traj.controls) {
        let qx = q.mul_vec(x)?;
        let ru = r.mul_vec(u)?;
        let xqx: f64 = x.iter().zip(qx.iter()).map(|(a, b)| a * b).sum();
        let uru: f64 = u.iter().zip(ru.iter()).map(|(a, b)| a * b).sum();
        acc.push(0.5 * (xqx + uru));
    }
    Ok(acc.total())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settling {
    At(f64),
    NotSettled,
}

impl Settling {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Settling::At(t) => Some(t),
            Settling::NotSettled => None,
        }
    }
}

impl fmt::Display for Settling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Settling::At(t) => write!(f, "{t:.3}"),
            Settling::NotSettled => f.write_str("not settled"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseMetrics {
    /// Most negative excursion, Hz (≤ 0).
    pub peak_undershoot: f64,
    /// Most positive excursion, Hz (≥ 0).
    pub peak_overshoot: f64,
    pub settling_time: Settling,
    /// Two-channel ISE of the whole trajectory.
    pub ise: f64,
}

/// Undershoot, overshoot and band-based settling time of one frequency channel.
///
/// Settling time is the earliest sample time after which the channel stays
/// inside `±band` through the end of the trajectory.
pub fn metrics(traj: &Trajectory, channel: Channel, band: f64) -> Result<ResponseMetrics, SimError> {
    if band.is_nan() || band <= 0.0 {
        return Err(SimError::InvalidBand(band));
    }
    let ise = ise(traj)?;
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    let mut last_outside = None;
    for (k, v) in traj.channel(channel).enumerate() {
        lo = lo.min(v);
        hi = hi.max(v);
        if v.abs() > band {
            last_outside = Some(k);
        }
    }
    let settling_time = match last_outside {
        None => Settling::At(traj.times.first().copied().unwrap_or(0.0)),
        Some(k) if k + 1 < traj.len() => Settling::At(traj.times[k + 1]),
        Some(_) => Settling::NotSettled,
    };
    Ok(ResponseMetrics {
        peak_undershoot: lo,
        peak_overshoot: hi,
        settling_time,
        ise,
    })
}
