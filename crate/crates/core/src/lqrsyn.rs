//! Continuous algebraic Riccati equation and LQR gain.
//!
//! `solve_care` integrates the Riccati differential equation
//! `dP/dτ = AᵀP + PA − PBR⁻¹BᵀP + Q` from `P = 0` with RK4 until the
//! derivative vanishes. From a zero start the flow converges monotonically to
//! the stabilizing solution whenever `(A, B)` is stabilizable and `(A, Q)`
//! detectable. The result is then polished with Newton–Kleinman steps, each of
//! which solves a Lyapunov equation exactly through its Kronecker form.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::numkern::{cholesky, frobenius_norm, mat_mul, solve_linear, transpose, KernelError, Matrix};
use crate::simkit::{FeedbackGain, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LqrError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Gain(#[from] SimError),
    #[error("invalid weight `{name}`: {reason}")]
    InvalidWeight { name: &'static str, reason: String },
    #[error("Riccati {phase} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NotConverged {
        phase: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("Riccati solve cancelled after {iterations} iterations")]
    Cancelled { iterations: usize },
}

/// Knobs for [`solve_care_with`].
#[derive(Debug, Clone)]
pub struct CareOptions {
    /// RK4 step in pseudo-time.
    pub step: f64,
    /// Stop when `‖dP/dτ‖_F` falls to this.
    pub tolerance: f64,
    pub max_steps: usize,
    pub newton_refine: bool,
    pub max_newton_steps: usize,
    /// Checked between iterations; setting it aborts with [`LqrError::Cancelled`].
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for CareOptions {
    fn default() -> Self {
        Self {
            step: 0.002,
            tolerance: 1e-10,
            max_steps: 10_000_000,
            newton_refine: true,
            max_newton_steps: 50,
            cancel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: Matrix,
    /// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
    pub residual: f64,
    /// RK4 steps taken on the differential equation.
    pub iterations: usize,
    pub newton_steps: usize,
}

impl CareSolution {
    pub fn is_symmetric(&self) -> bool {
        self.p.asymmetry() <= 1e-10 * (1.0 + self.p.max_abs())
    }

    /// Cholesky of `P + εI` with `ε = 1e-10·(1 + ‖P‖_F)` succeeds.
    pub fn is_positive_semidefinite(&self) -> bool {
        let n = self.p.rows();
        let shift = 1e-10 * (1.0 + frobenius_norm(&self.p));
        self.p
            .add(&Matrix::identity(n).scale(shift))
            .ok()
            .and_then(|m| cholesky(&m).ok())
            .is_some()
    }

    pub fn residual_within_bound(&self) -> bool {
        self.residual <= 1e-8 * (1.0 + frobenius_norm(&self.p))
    }
}

struct Problem {
    a: Matrix,
    at: Matrix,
    q: Matrix,
    /// `B R⁻¹ Bᵀ`
    g: Matrix,
}

impl Problem {
    fn new(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Self, LqrError> {
        let n = a.rows();
        if !a.is_square() {
            return Err(KernelError::DimensionMismatch {
                op: "solve_care(a)",
                left: a.shape(),
                right: a.shape(),
            }
            .into());
        }
        if b.rows() != n {
            return Err(KernelError::DimensionMismatch {
                op: "solve_care(a, b)",
                left: a.shape(),
                right: b.shape(),
            }
            .into());
        }
        let m = b.cols();
        validate_weight("q", q, n, false)?;
        validate_weight("r", r, m, true)?;
        let rinv_bt = solve_linear(r, &transpose(b))?;
        let g = mat_mul(b, &rinv_bt)?.symmetrized();
        Ok(Self {
            a: a.clone(),
            at: transpose(a),
            q: q.clone(),
            g,
        })
    }

    /// Right-hand side of the Riccati differential equation for symmetric `p`.
    fn rhs(&self, p: &Matrix) -> Matrix {
        let pa = mat_mul(p, &self.a).expect("shapes checked");
        let at_p = mat_mul(&self.at, p).expect("shapes checked");
        let pg = mat_mul(p, &self.g).expect("shapes checked");
        let pgp = mat_mul(&pg, p).expect("shapes checked");
        let mut out = at_p;
        let n = p.rows();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += pa[(i, j)] - pgp[(i, j)] + self.q[(i, j)];
            }
        }
        out
    }
}

fn validate_weight(name: &'static str, w: &Matrix, n: usize, definite: bool) -> Result<(), LqrError> {
    if w.shape() != (n, n) {
        return Err(LqrError::InvalidWeight {
            name,
            reason: format!("expected {n}x{n}, got {}x{}", w.rows(), w.cols()),
        });
    }
    let asym = w.asymmetry();
    if asym > 1e-12 * (1.0 + w.max_abs()) {
        return Err(LqrError::InvalidWeight {
            name,
            reason: format!("not symmetric (max asymmetry {asym:.3e})"),
        });
    }
    let probe = if definite {
        w.clone()
    } else {
        w.add(&Matrix::identity(n).scale(1e-12 * (1.0 + w.max_abs())))?
    };
    if cholesky(&probe).is_err() {
        return Err(LqrError::InvalidWeight {
            name,
            reason: if definite {
                "not positive definite".into()
            } else {
                "not positive semidefinite".into()
            },
        });
    }
    Ok(())
}

fn cancelled(opts: &CareOptions) -> bool {
    opts.cancel
        .as_ref()
        .is_some_and(|c| c.load(Ordering::Relaxed))
}

/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64, LqrError> {
    if p.shape() != a.shape() {
        return Err(KernelError::DimensionMismatch {
            op: "care_residual",
            left: a.shape(),
            right: p.shape(),
        }
        .into());
    }
    let prob = Problem::new(a, b, q, r)?;
    Ok(frobenius_norm(&prob.rhs(p)))
}

/// Stabilizing solution of the CARE with default options.
pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<CareSolution, LqrError> {
    solve_care_with(a, b, q, r, &CareOptions::default())
}

pub fn solve_care_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    opts: &CareOptions,
) -> Result<CareSolution, LqrError> {
    let prob = Problem::new(a, b, q, r)?;
    let n = a.rows();
    let h = opts.step;
    let mut p = Matrix::zeros(n, n);
    let mut iterations = 0;

    loop {
        let k1 = prob.rhs(&p);
        let rate = frobenius_norm(&k1);
        if !rate.is_finite() {
            return Err(LqrError::NotConverged {
                phase: "integration",
                iterations,
                residual: rate,
            });
        }
        if rate <= opts.tolerance {
            break;
        }
        if iterations >= opts.max_steps {
            return Err(LqrError::NotConverged {
                phase: "integration",
                iterations,
                residual: rate,
            });
        }
        if iterations % 1024 == 0 && cancelled(opts) {
            return Err(LqrError::Cancelled { iterations });
        }
        let stage = |k: &Matrix, scale: f64| p.add(&k.scale(scale)).expect("same shape");
        let k2 = prob.rhs(&stage(&k1, 0.5 * h));
        let k3 = prob.rhs(&stage(&k2, 0.5 * h));
        let k4 = prob.rhs(&stage(&k3, h));
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] += h / 6.0
                    * (k1[(i, j)] + 2.0 * k2[(i, j)] + 2.0 * k3[(i, j)] + k4[(i, j)]);
            }
        }
        p = p.symmetrized();
        iterations += 1;
    }

    let mut residual = frobenius_norm(&prob.rhs(&p));
    let mut newton_steps = 0;
    if opts.newton_refine {
        while newton_steps < opts.max_newton_steps {
            if cancelled(opts) {
                return Err(LqrError::Cancelled {
                    iterations: iterations + newton_steps,
                });
            }
            let next = kleinman_step(&prob, b, r, &p)?;
            newton_steps += 1;
            let next_residual = frobenius_norm(&prob.rhs(&next));
            let delta = frobenius_norm(&next.sub(&p)?);
            if next_residual.is_finite() && next_residual <= residual {
                p = next;
                residual = next_residual;
            } else {
                break;
            }
            if delta <= 1e-13 * (1.0 + frobenius_norm(&p)) {
                break;
            }
        }
    }

    let sol = CareSolution {
        p,
        residual,
        iterations,
        newton_steps,
    };
    if !sol.residual_within_bound() {
        return Err(LqrError::NotConverged {
            phase: "refinement",
            iterations: iterations + newton_steps,
            residual,
        });
    }
    Ok(sol)
}

/// One Newton–Kleinman update: solve `AkᵀX + XAk = −(Q + KᵀRK)` with
/// `K = R⁻¹BᵀP`, `Ak = A − BK`.
fn kleinman_step(prob: &Problem, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix, LqrError> {
    let k = lqr_gain_matrix(p, b, r)?;
    let ak = prob.a.sub(&mat_mul(b, &k)?)?;
    let rhs = prob
        .q
        .add(&mat_mul(&transpose(&k), &mat_mul(r, &k)?)?)?
        .scale(-1.0);
    Ok(solve_lyapunov(&ak, &rhs)?.symmetrized())
}

/// Solves `AᵀX + XA = C` through the `n² × n²` Kronecker system.
pub fn solve_lyapunov(a: &Matrix, c: &Matrix) -> Result<Matrix, KernelError> {
    let n = a.rows();
    if !a.is_square() || c.shape() != (n, n) {
        return Err(KernelError::DimensionMismatch {
            op: "solve_lyapunov",
            left: a.shape(),
            right: c.shape(),
        });
    }
    let nn = n * n;
    let mut op = Matrix::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                // (AᵀX)_ij = Σ_k A_ki X_kj ; (XA)_ij = Σ_k X_ik A_kj
                op[(row, k * n + j)] += a[(k, i)];
                op[(row, i * n + k)] += a[(k, j)];
            }
        }
    }
    let rhs = Matrix::from_row_major(nn, 1, c.as_slice().to_vec());
    let x = solve_linear(&op, &rhs)?;
    Ok(Matrix::from_row_major(n, n, x.as_slice().to_vec()))
}

/// `K = R⁻¹BᵀP` for any dimensions.
pub fn lqr_gain_matrix(p: &Matrix, b: &Matrix, r: &Matrix) -> Result<Matrix, KernelError> {
    let bt_p = mat_mul(&transpose(b), p)?;
    solve_linear(r, &bt_p)
}

/// Full-mask feedback gain for the two-area plant.
pub fn lqr_gain(sol: &CareSolution, b: &Matrix, r: &Matrix) -> Result<FeedbackGain, LqrError> {
    let k = lqr_gain_matrix(&sol.p, b, r)?;
    Ok(FeedbackGain::full(k)?)
}
