//! Riccati feedback control for the linear-quadratic particle problem.
//!
//! For `N` particles with state `(x_i, v_i)` and the joint objective
//! `int_0^T (1/N) sum_i (v_i^2/2 + alpha q_i^2/2) dt`, the optimal control
//! is the state feedback `q = -(2N/alpha) B^T K w` where the symmetric
//! matrix `K(t)` solves the backward matrix Riccati equation
//!
//! ```text
//! -K' = M/(2N) + K A + A^T K - (2N/alpha) K B B^T K,   K(T) = 0.
//! ```
//!
//! Structurally the solution collapses: every block except `K22` vanishes
//! and `K22 = d(t) Id` with a scalar `d` obeying
//! `-d' = 1/(2N) - (2N/alpha) d^2`. With the rescaled gain `y = N d`
//! the closed loop is `q_i = -(2/alpha) y(t) v_i`, and
//!
//! ```text
//! y(t) = (sqrt(alpha)/2) tanh((T - t)/sqrt(alpha)),
//! r(t) = int_0^t (2/alpha) y(s) ds
//!      = ln cosh(T/sqrt(alpha)) - ln cosh((T - t)/sqrt(alpha)).
//! ```
//!
//! This module provides the scalar gain (closed form and backward
//! integration), the decay rate `r` (exact and by the midpoint rule on a
//! grid), the dense block Riccati solve used to verify the structural
//! collapse, and the feedback law.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ode::rk4_step_autonomous;

/// Largest `N` accepted by the dense matrix Riccati solve by default.
pub const DEFAULT_DENSE_N_CAP: usize = 8;

/// Problem parameters of the linear-quadratic control problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlProblem {
    /// Control-cost weight, `alpha > 0`.
    pub alpha: f64,
    /// Terminal time, `T > 0`.
    pub horizon_t: f64,
    /// Number of particles, `N >= 1`.
    pub n_particles: usize,
}

impl ControlProblem {
    pub fn new(alpha: f64, horizon_t: f64, n_particles: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(horizon_t > 0.0) || !horizon_t.is_finite() {
            return Err(Error::domain(format!(
                "horizon_t must be positive, got {horizon_t}"
            )));
        }
        if n_particles == 0 {
            return Err(Error::domain("n_particles must be at least 1"));
        }
        Ok(ControlProblem {
            alpha,
            horizon_t,
            n_particles,
        })
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon_t).contains(&t) {
            return Err(Error::domain(format!(
                "time {t} outside horizon [0, {}]",
                self.horizon_t
            )));
        }
        Ok(())
    }

    /// Damping coefficient `(2/alpha) y(t)` of the closed loop at time `t`.
    pub fn damping_coefficient(&self, t: f64) -> Result<f64> {
        Ok(2.0 / self.alpha * closed_form_y(t, self)?)
    }
}

/// Numerically stable `ln cosh`.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Closed-form scalar gain `y(t) = (sqrt(alpha)/2) tanh((T-t)/sqrt(alpha))`.
///
/// Independent of `N`: the rescaling `y = N d` removes the particle count.
pub fn closed_form_y(t: f64, problem: &ControlProblem) -> Result<f64> {
    problem.check_time(t)?;
    let sa = problem.alpha.sqrt();
    Ok(0.5 * sa * ((problem.horizon_t - t) / sa).tanh())
}

/// Closed-form Riccati diagonal entry `d(t) = y(t)/N`.
pub fn closed_form_d(t: f64, problem: &ControlProblem) -> Result<f64> {
    Ok(closed_form_y(t, problem)? / problem.n_particles as f64)
}

/// Exact accumulated decay rate `r(t) = int_0^t (2/alpha) y(s) ds`,
/// evaluated from the antiderivative in a form stable for small `alpha`.
pub fn exact_rate(t: f64, problem: &ControlProblem) -> Result<f64> {
    problem.check_time(t)?;
    let sa = problem.alpha.sqrt();
    Ok(ln_cosh(problem.horizon_t / sa) - ln_cosh((problem.horizon_t - t) / sa))
}

/// `exp(-r(t))` with the exact rate; the velocity contraction factor of
/// the closed loop.
pub fn exp_neg_rate(t: f64, problem: &ControlProblem) -> Result<f64> {
    Ok((-exact_rate(t, problem)?).exp())
}

/// Cumulative midpoint-rule approximation of `r` on `grid`, using the
/// exact closed-form `y` at each interval midpoint. `r[0] = 0` relative
/// to the first grid point; the result is non-decreasing.
pub fn decay_rate(problem: &ControlProblem, grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid, problem)?;
    let mut r = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    r.push(0.0);
    for w in grid.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let y = closed_form_y(mid, problem)?;
        acc += (w[1] - w[0]) * 2.0 / problem.alpha * y;
        r.push(acc);
    }
    Ok(r)
}

fn check_grid(grid: &[f64], problem: &ControlProblem) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("time grid is empty"));
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::domain("time grid must be strictly ascending"));
        }
    }
    problem.check_time(grid[0])?;
    problem.check_time(*grid.last().unwrap())
}

/// How [`solve_scalar_gain`] obtains the gain values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMethod {
    /// Evaluate the explicit tanh solution (default path).
    ClosedForm,
    /// Backward fixed-step fourth-order integration of
    /// `-y' = 1/2 - (2/alpha) y^2` from `y(T) = 0`, landing exactly on the
    /// grid points; `steps` substeps are distributed over `[0, T]`.
    /// Verification mode for cross-checking the closed form.
    BackwardRk4 { steps: usize },
}

/// The scalar gain schedule on a time grid: `y`, `d = y/N` and the
/// midpoint-rule rate `r`.
#[derive(Debug, Clone)]
pub struct ControlSchedule {
    pub problem: ControlProblem,
    pub time_grid: Vec<f64>,
    pub y_values: Vec<f64>,
    pub d_values: Vec<f64>,
    pub r_values: Vec<f64>,
}

/// Fills a [`ControlSchedule`] on `grid` (ascending, inside `[0, T]`).
pub fn solve_scalar_gain(
    problem: &ControlProblem,
    grid: &[f64],
    method: GainMethod,
) -> Result<ControlSchedule> {
    check_grid(grid, problem)?;
    let y_values = match method {
        GainMethod::ClosedForm => grid
            .iter()
            .map(|&t| closed_form_y(t, problem))
            .collect::<Result<Vec<_>>>()?,
        GainMethod::BackwardRk4 { steps } => {
            if steps < 100 {
                return Err(Error::domain(format!(
                    "backward integration needs at least 100 steps, got {steps}"
                )));
            }
            backward_gain(problem, grid, steps)
        }
    };
    let d_values = y_values
        .iter()
        .map(|y| y / problem.n_particles as f64)
        .collect();
    let r_values = decay_rate(problem, grid)?;
    Ok(ControlSchedule {
        problem: *problem,
        time_grid: grid.to_vec(),
        y_values,
        d_values,
        r_values,
    })
}

/// Marches `-y' = 1/2 - (2/alpha) y^2` backward from `y(T) = 0`, emitting
/// the value at every grid point. In the backward variable `tau = T - t`
/// the equation reads `dy/dtau = 1/2 - (2/alpha) y^2`.
fn backward_gain(problem: &ControlProblem, grid: &[f64], steps: usize) -> Vec<f64> {
    let alpha = problem.alpha;
    let rhs = |y: &f64| 0.5 - 2.0 / alpha * y * y;
    let h_target = problem.horizon_t / steps as f64;

    let mut out = vec![0.0; grid.len()];
    let mut y = 0.0f64;
    let mut t = problem.horizon_t;
    for (slot, &tg) in out.iter_mut().zip(grid.iter()).rev() {
        let span = t - tg;
        if span > 0.0 {
            let n_sub = (span / h_target).ceil().max(1.0) as usize;
            let h = span / n_sub as f64;
            for _ in 0..n_sub {
                y = rk4_step_autonomous(&y, h, &rhs);
            }
            t = tg;
        }
        *slot = y;
    }
    out
}

/// Closed-loop feedback `q_i = -(2/alpha) y v_i` for all particles.
pub fn feedback_control(y: f64, velocities: &[f64], problem: &ControlProblem) -> Vec<f64> {
    let c = -2.0 / problem.alpha * y;
    velocities.iter().map(|v| c * v).collect()
}

/// The four `N x N` blocks of the symmetric `2N x 2N` Riccati matrix at
/// one time, split along the position/velocity state decomposition.
#[derive(Debug, Clone)]
pub struct RiccatiBlocks {
    pub k11: DMatrix<f64>,
    pub k12: DMatrix<f64>,
    pub k21: DMatrix<f64>,
    pub k22: DMatrix<f64>,
}

impl RiccatiBlocks {
    fn zeros(n: usize) -> Self {
        RiccatiBlocks {
            k11: DMatrix::zeros(n, n),
            k12: DMatrix::zeros(n, n),
            k21: DMatrix::zeros(n, n),
            k22: DMatrix::zeros(n, n),
        }
    }

    /// Assembles the full `2N x 2N` matrix.
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.k11.nrows();
        let mut k = DMatrix::zeros(2 * n, 2 * n);
        k.view_mut((0, 0), (n, n)).copy_from(&self.k11);
        k.view_mut((0, n), (n, n)).copy_from(&self.k12);
        k.view_mut((n, 0), (n, n)).copy_from(&self.k21);
        k.view_mut((n, n), (n, n)).copy_from(&self.k22);
        k
    }
}

impl std::ops::Add for RiccatiBlocks {
    type Output = RiccatiBlocks;
    fn add(self, rhs: RiccatiBlocks) -> RiccatiBlocks {
        RiccatiBlocks {
            k11: self.k11 + rhs.k11,
            k12: self.k12 + rhs.k12,
            k21: self.k21 + rhs.k21,
            k22: self.k22 + rhs.k22,
        }
    }
}

impl std::ops::Mul<f64> for RiccatiBlocks {
    type Output = RiccatiBlocks;
    fn mul(self, s: f64) -> RiccatiBlocks {
        RiccatiBlocks {
            k11: self.k11 * s,
            k12: self.k12 * s,
            k21: self.k21 * s,
            k22: self.k22 * s,
        }
    }
}

/// Backward trajectory of the matrix Riccati solution, stored per time on
/// an ascending grid with `K(T) = 0`.
#[derive(Debug, Clone)]
pub struct MatrixRiccatiSolution {
    pub time_grid: Vec<f64>,
    pub blocks: Vec<RiccatiBlocks>,
}

/// Solves the matrix Riccati equation backward from `K(T) = 0` by
/// classical fixed-step fourth-order integration with `steps` steps,
/// using the default dense cap on `N`.
pub fn solve_matrix_riccati(
    problem: &ControlProblem,
    steps: usize,
) -> Result<MatrixRiccatiSolution> {
    solve_matrix_riccati_with_cap(problem, steps, DEFAULT_DENSE_N_CAP)
}

/// As [`solve_matrix_riccati`] with an explicit cap on `N`.
pub fn solve_matrix_riccati_with_cap(
    problem: &ControlProblem,
    steps: usize,
    n_cap: usize,
) -> Result<MatrixRiccatiSolution> {
    let n = problem.n_particles;
    if n > n_cap {
        return Err(Error::Capacity(format!(
            "dense Riccati solve capped at N = {n_cap}, got N = {n}"
        )));
    }
    if steps < 100 {
        return Err(Error::domain(format!(
            "matrix Riccati solve needs at least 100 steps, got {steps}"
        )));
    }

    let nf = n as f64;
    let coef = 2.0 * nf / problem.alpha;
    // In tau = T - t the blocks satisfy dK/dtau = G(K):
    //   G11 = -(2N/a) K12 K21
    //   G12 = K11 - (2N/a) K12 K22
    //   G21 = K11 - (2N/a) K22 K21
    //   G22 = Id/(2N) + K12 + K21 - (2N/a) K22 K22
    let source = DMatrix::<f64>::identity(n, n) / (2.0 * nf);
    let rhs = move |k: &RiccatiBlocks| RiccatiBlocks {
        k11: &k.k12 * &k.k21 * (-coef),
        k12: &k.k11 - &k.k12 * &k.k22 * coef,
        k21: &k.k11 - &k.k22 * &k.k21 * coef,
        k22: &source + &k.k12 + &k.k21 - &k.k22 * &k.k22 * coef,
    };

    let h = problem.horizon_t / steps as f64;
    let mut backward = Vec::with_capacity(steps + 1);
    let mut k = RiccatiBlocks::zeros(n);
    backward.push(k.clone());
    for _ in 0..steps {
        k = rk4_step_autonomous(&k, h, &rhs);
        backward.push(k.clone());
    }

    // backward[j] holds K at t = T - j h; reverse onto an ascending grid.
    backward.reverse();
    // Clamp guards against float dust pushing the first point below zero.
    let time_grid = (0..=steps)
        .map(|j| (problem.horizon_t - (steps - j) as f64 * h).clamp(0.0, problem.horizon_t))
        .collect();
    Ok(MatrixRiccatiSolution {
        time_grid,
        blocks: backward,
    })
}

/// Quantities verifying the structural lemmas and the matrix invariants,
/// maximized over every stored time.
#[derive(Debug, Clone, Copy)]
pub struct StructureReport {
    /// Largest absolute entry over the `K11`, `K12`, `K21` blocks.
    pub max_offdiag_block: f64,
    /// Largest absolute entry of `K22 - d(t) Id` with the closed-form `d`.
    pub max_k22_vs_closed_form: f64,
    /// Largest spread between diagonal entries of `K22`.
    pub max_k22_diag_spread: f64,
    /// Largest absolute entry of the full `K22` off-diagonal.
    pub max_k22_offdiag: f64,
    /// Largest entry of `|K - K^T|`.
    pub max_asymmetry: f64,
    /// Smallest eigenvalue of the (symmetrized) assembled matrix.
    pub min_eigenvalue: f64,
}

/// Scans a matrix solution and reports the structural deviations.
pub fn structure_report(
    solution: &MatrixRiccatiSolution,
    problem: &ControlProblem,
) -> Result<StructureReport> {
    let mut report = StructureReport {
        max_offdiag_block: 0.0,
        max_k22_vs_closed_form: 0.0,
        max_k22_diag_spread: 0.0,
        max_k22_offdiag: 0.0,
        max_asymmetry: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    for (t, blocks) in solution.time_grid.iter().zip(solution.blocks.iter()) {
        let d = closed_form_d(*t, problem)?;
        for m in [&blocks.k11, &blocks.k12, &blocks.k21] {
            report.max_offdiag_block = report.max_offdiag_block.max(m.amax());
        }
        let n = blocks.k22.nrows();
        let mut diag_min = f64::INFINITY;
        let mut diag_max = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                let e = blocks.k22[(i, j)];
                let target = if i == j { d } else { 0.0 };
                report.max_k22_vs_closed_form =
                    report.max_k22_vs_closed_form.max((e - target).abs());
                if i == j {
                    diag_min = diag_min.min(e);
                    diag_max = diag_max.max(e);
                } else {
                    report.max_k22_offdiag = report.max_k22_offdiag.max(e.abs());
                }
            }
        }
        report.max_k22_diag_spread = report.max_k22_diag_spread.max(diag_max - diag_min);

        let full = blocks.assemble();
        report.max_asymmetry = report.max_asymmetry.max((&full - full.transpose()).amax());
        let sym = (&full + full.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        report.min_eigenvalue = report.min_eigenvalue.min(eig.min());
    }
    Ok(report)
}
