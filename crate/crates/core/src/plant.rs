//! Linearized two-area reheat-thermal power system.
//!
//! State ordering (0-based indices):
//!
//! | idx | state        | units      |
//! |-----|--------------|------------|
//! | 0   | Δf1          | Hz         |
//! | 1   | ΔPt1         | p.u.       |
//! | 2   | ΔPr1         | p.u.       |
//! | 3   | ΔPg1         | p.u.       |
//! | 4   | Δf2          | Hz         |
//! | 5   | ΔPt2         | p.u.       |
//! | 6   | ΔPr2         | p.u.       |
//! | 7   | ΔPg2         | p.u.       |
//! | 8   | ΔPtie(1,2)   | p.u.       |
//! | 9   | ∫ACE1        | p.u.·s     |
//! | 10  | ∫ACE2        | p.u.·s     |
//!
//! Inputs are the two area control signals `u1, u2`; disturbances are the
//! per-area load steps `ΔPd1, ΔPd2` (a positive load step lowers frequency).

use thiserror::Error;

use crate::numkern::Matrix;

pub const N_STATES: usize = 11;
pub const N_INPUTS: usize = 2;

pub const DF1: usize = 0;
pub const DF2: usize = 4;
pub const PTIE: usize = 8;
pub const IACE1: usize = 9;
pub const IACE2: usize = 10;

pub const STATE_LABELS: [&str; N_STATES] = [
    "df1", "dpt1", "dpr1", "dpg1", "df2", "dpt2", "dpr2", "dpg2", "dptie", "iace1", "iace2",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid plant parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Physical parameters of one area (both areas are identical), plus the tie line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// Power-system time constant Tp, s.
    pub tp: f64,
    /// Power-system gain Kp, Hz/p.u.
    pub kp: f64,
    /// Turbine time constant Tt, s.
    pub tt: f64,
    /// Reheat time constant Tr, s.
    pub tr: f64,
    /// Reheat gain Kr.
    pub kr: f64,
    /// Governor time constant Tg, s.
    pub tg: f64,
    /// Speed regulation R, Hz/p.u.
    pub droop_r: f64,
    /// Frequency bias b, p.u./Hz.
    pub bias_b: f64,
    /// Synchronizing coefficient 2πT12.
    pub tie_coeff: f64,
}

impl PlantParams {
    /// Parameter set that reproduces the printed 2000 MW state matrix.
    pub const PAPER: PlantParams = PlantParams {
        tp: 20.0,
        kp: 120.0,
        tt: 0.3,
        tr: 10.0,
        kr: 0.5,
        tg: 0.08,
        droop_r: 3.005,
        bias_b: 2.0,
        tie_coeff: 3.42,
    };

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("tp", self.tp),
            ("kp", self.kp),
            ("tt", self.tt),
            ("tr", self.tr),
            ("tg", self.tg),
            ("droop_r", self.droop_r),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(PlantError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and strictly positive",
                });
            }
        }
        if !(self.kr.is_finite() && self.kr > 0.0 && self.kr <= 1.0) {
            return Err(PlantError::InvalidParameter {
                name: "kr",
                value: self.kr,
                reason: "must lie in (0, 1]",
            });
        }
        if !self.bias_b.is_finite() {
            return Err(PlantError::InvalidParameter {
                name: "bias_b",
                value: self.bias_b,
                reason: "must be finite",
            });
        }
        // Zero coupling is allowed: it decouples the areas, which tests rely on.
        if !(self.tie_coeff.is_finite() && self.tie_coeff >= 0.0) {
            return Err(PlantError::InvalidParameter {
                name: "tie_coeff",
                value: self.tie_coeff,
                reason: "must be finite and non-negative",
            });
        }
        Ok(())
    }
}

impl Default for PlantParams {
    fn default() -> Self {
        Self::PAPER
    }
}

/// `dx/dt = A x + B u + F d`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoAreaModel {
    pub a: Matrix,
    pub b: Matrix,
    pub f: Matrix,
    pub c: Matrix,
    pub state_labels: [&'static str; N_STATES],
}

#[rustfmt::skip]
const PAPER_A: [[f64; N_STATES]; N_STATES] = [
    [-0.05,  6.0,   0.0,   0.0,   0.0,   0.0,   0.0,   0.0,  -6.0, 0.0, 0.0],
    [ 0.0,  -3.33,  3.33,  0.0,   0.0,   0.0,   0.0,   0.0,   0.0, 0.0, 0.0],
    [-2.08,  0.0,  -0.1,  -6.1,   0.0,   0.0,   0.0,   0.0,   0.0, 0.0, 0.0],
    [-4.16,  0.0,   0.0, -12.5,   0.0,   0.0,   0.0,   0.0,   0.0, 0.0, 0.0],
    [ 0.0,   0.0,   0.0,   0.0,  -0.05,  6.0,   0.0,   0.0,   6.0, 0.0, 0.0],
    [ 0.0,   0.0,   0.0,   0.0,   0.0,  -3.33,  3.33,  0.0,   0.0, 0.0, 0.0],
    [ 0.0,   0.0,   0.0,   0.0,  -2.08,  0.0,  -0.1,  -6.1,   0.0, 0.0, 0.0],
    [ 0.0,   0.0,   0.0,   0.0,  -4.16,  0.0,   0.0, -12.5,   0.0, 0.0, 0.0],
    [ 3.42,  0.0,   0.0,   0.0,  -3.42,  0.0,   0.0,   0.0,   0.0, 0.0, 0.0],
    [ 2.0,   0.0,   0.0,   0.0,   0.0,   0.0,   0.0,   0.0,   1.0, 0.0, 0.0],
    [ 0.0,   0.0,   0.0,   0.0,   2.0,   0.0,   0.0,   0.0,  -1.0, 0.0, 0.0],
];

/// The state-space model with the printed (rounded) 2000 MW coefficients.
pub fn paper_model() -> TwoAreaModel {
    let a = Matrix::from_rows(&PAPER_A);

    let mut b = Matrix::zeros(N_STATES, N_INPUTS);
    b[(2, 0)] = 6.25;
    b[(3, 0)] = 12.5;
    b[(6, 1)] = 6.25;
    b[(7, 1)] = 12.5;

    // Load enters each frequency equation with the same -Kp/Tp as the turbine power.
    let mut f = Matrix::zeros(N_STATES, N_INPUTS);
    f[(DF1, 0)] = -6.0;
    f[(DF2, 1)] = -6.0;

    TwoAreaModel {
        a,
        b,
        f,
        c: frequency_selector(),
        state_labels: STATE_LABELS,
    }
}

/// Builds the model from block-diagram parameters with unrounded coefficients.
pub fn from_params(p: &PlantParams) -> Result<TwoAreaModel, PlantError> {
    p.validate()?;
    let mut a = Matrix::zeros(N_STATES, N_STATES);
    let mut b = Matrix::zeros(N_STATES, N_INPUTS);
    let mut f = Matrix::zeros(N_STATES, N_INPUTS);

    let rg = 1.0 / (p.droop_r * p.tg);
    for area in 0..2 {
        let base = 4 * area;
        let (df, dpt, dpr, dpg) = (base, base + 1, base + 2, base + 3);
        // Area 1 exports +ΔPtie, area 2 imports it.
        let tie_sign = if area == 0 { -1.0 } else { 1.0 };

        a[(df, df)] = -1.0 / p.tp;
        a[(df, dpt)] = p.kp / p.tp;
        a[(df, PTIE)] = tie_sign * p.kp / p.tp;
        f[(df, area)] = -p.kp / p.tp;

        a[(dpt, dpt)] = -1.0 / p.tt;
        a[(dpt, dpr)] = 1.0 / p.tt;

        a[(dpr, df)] = -p.kr * rg;
        a[(dpr, dpr)] = -1.0 / p.tr;
        a[(dpr, dpg)] = 1.0 / p.tr - p.kr / p.tg;
        b[(dpr, area)] = p.kr / p.tg;

        a[(dpg, df)] = -rg;
        a[(dpg, dpg)] = -1.0 / p.tg;
        b[(dpg, area)] = 1.0 / p.tg;

        let iace = IACE1 + area;
        a[(iace, df)] = p.bias_b;
        a[(iace, PTIE)] = -tie_sign;
    }
    a[(PTIE, DF1)] = p.tie_coeff;
    a[(PTIE, DF2)] = -p.tie_coeff;

    Ok(TwoAreaModel {
        a,
        b,
        f,
        c: frequency_selector(),
        state_labels: STATE_LABELS,
    })
}

fn frequency_selector() -> Matrix {
    let mut c = Matrix::zeros(2, N_STATES);
    c[(0, DF1)] = 1.0;
    c[(1, DF2)] = 1.0;
    c
}

/// Target index and sign of each state under the area exchange.
pub(crate) fn swap_map(i: usize) -> (usize, f64) {
    match i {
        0..=3 => (i + 4, 1.0),
        4..=7 => (i - 4, 1.0),
        PTIE => (PTIE, -1.0),
        IACE1 => (IACE2, 1.0),
        IACE2 => (IACE1, 1.0),
        _ => unreachable!("state index {i} out of range"),
    }
}

/// Relabels area 1 as area 2 and vice versa. Tie-line flow changes sign.
pub fn area_swap(m: &TwoAreaModel) -> TwoAreaModel {
    let mut a = Matrix::zeros(N_STATES, N_STATES);
    let mut b = Matrix::zeros(N_STATES, N_INPUTS);
    let mut f = Matrix::zeros(N_STATES, N_INPUTS);
    let mut c = Matrix::zeros(m.c.rows(), N_STATES);

    for i in 0..N_STATES {
        let (si, sign_i) = swap_map(i);
        for j in 0..N_STATES {
            let (sj, sign_j) = swap_map(j);
            a[(si, sj)] = sign_i * sign_j * m.a[(i, j)];
        }
        for k in 0..N_INPUTS {
            b[(si, 1 - k)] = sign_i * m.b[(i, k)];
            f[(si, 1 - k)] = sign_i * m.f[(i, k)];
        }
        for r in 0..m.c.rows() {
            let target = if m.c.rows() == 2 { 1 - r } else { r };
            c[(target, si)] = sign_i * m.c[(r, i)];
        }
    }
    TwoAreaModel {
        a,
        b,
        f,
        c,
        state_labels: m.state_labels,
    }
}
