//! Second-order alignment models under instantaneous receding-horizon
//! control.
//!
//! The dynamics for `N` agents with scalar positions and velocities are
//!
//! ```text
//! x_i' = v_i,
//! v_i' = (1/N) sum_j P(x_i, x_j) (v_j - v_i) + q,
//! ```
//!
//! with the Cucker-Smale kernel `P = K / (gamma^2 + |x_i - x_j|^2)^delta`
//! or its Motsch-Tadmor normalization. The scalar control `q` is the
//! minimizer of the one-Euler-step discretization of a quadratic tracking
//! objective over a short horizon `dt`, recomputed at every horizon
//! boundary and held constant in between:
//!
//! ```text
//! q* = -dt * mean(v + dt A - v_d) / (beta + dt^2),
//! ```
//!
//! where `A` is the alignment term at the current state.

use crate::error::{Error, Result};

/// Interaction kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Symmetric distance-decaying weights.
    CuckerSmale,
    /// Cucker-Smale weights normalized by the local total interaction.
    MotschTadmor,
}

/// Kernel parameters: `P` or `H` equals `K / (gamma^2 + r^2)^delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentKernelSpec {
    pub kind: KernelKind,
    pub strength_k: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl AlignmentKernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength_k > 0.0) {
            return Err(Error::domain(format!(
                "kernel strength must be positive, got {}",
                self.strength_k
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::domain(format!(
                "kernel gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::domain(format!(
                "kernel delta must be non-negative, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Parameters of the instantaneous control: regularization `beta`, target
/// velocity and the receding horizon length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstantaneousControlSpec {
    pub beta: f64,
    pub v_desired: f64,
    pub horizon_dt: f64,
}

impl InstantaneousControlSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::domain(format!(
                "regularization beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.horizon_dt > 0.0) {
            return Err(Error::domain(format!(
                "control horizon must be positive, got {}",
                self.horizon_dt
            )));
        }
        Ok(())
    }
}

/// Pairwise weight `K / (gamma^2 + |x_i - x_j|^2)^delta`. For
/// Motsch-Tadmor this is the unnormalized `H`; normalization happens in
/// [`alignment_rhs`].
pub fn kernel_value(xi: f64, xj: f64, spec: &AlignmentKernelSpec) -> f64 {
    let r2 = (xi - xj) * (xi - xj);
    spec.strength_k / (spec.gamma * spec.gamma + r2).powf(spec.delta)
}

/// Alignment acceleration `A_i = (1/N) sum_j P_ij (v_j - v_i)` without
/// the control.
pub fn alignment_accel(x: &[f64], v: &[f64], spec: &AlignmentKernelSpec) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    let mut accel = vec![0.0f64; n];
    match spec.kind {
        KernelKind::CuckerSmale => {
            for i in 0..n {
                let mut sum = 0.0;
                for j in 0..n {
                    sum += kernel_value(x[i], x[j], spec) * (v[j] - v[i]);
                }
                accel[i] = sum / nf;
            }
        }
        KernelKind::MotschTadmor => {
            for i in 0..n {
                let mut row = 0.0;
                let mut sum = 0.0;
                for j in 0..n {
                    let h = kernel_value(x[i], x[j], spec);
                    row += h;
                    sum += h * (v[j] - v[i]);
                }
                // H > 0 makes a zero row impossible; guard anyway.
                let norm = row / nf;
                accel[i] = if norm > 0.0 { sum / nf / norm } else { 0.0 };
            }
        }
    }
    accel
}

/// Full right-hand side `(dx, dv)` with the common scalar control `q`.
pub fn alignment_rhs(
    x: &[f64],
    v: &[f64],
    q: f64,
    spec: &AlignmentKernelSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != v.len() || x.is_empty() {
        return Err(Error::domain(
            "positions and velocities must have equal nonzero length",
        ));
    }
    let mut dv = alignment_accel(x, v, spec);
    for a in dv.iter_mut() {
        *a += q;
    }
    Ok((v.to_vec(), dv))
}

/// Closed-form minimizer of the one-Euler-step objective
/// `J(q) = (dt/2) [(1/N) sum_i (v_i + dt A_i + dt q - v_d)^2 + beta q^2]`:
///
/// ```text
/// q* = -dt * mean(v + dt A - v_d) / (beta + dt^2)
/// ```
pub fn instantaneous_control(
    x: &[f64],
    v: &[f64],
    spec: &AlignmentKernelSpec,
    ctrl: &InstantaneousControlSpec,
) -> f64 {
    let dt = ctrl.horizon_dt;
    let accel = alignment_accel(x, v, spec);
    let n = v.len() as f64;
    let mean_dev: f64 = v
        .iter()
        .zip(accel.iter())
        .map(|(&vi, &ai)| vi + dt * ai - ctrl.v_desired)
        .sum::<f64>()
        / n;
    -dt * mean_dev / (ctrl.beta + dt * dt)
}

/// Mean squared deviation from the target velocity,
/// `(1/N) sum_i (v_i - v_d)^2`.
pub fn tracking_cost(v: &[f64], v_desired: f64) -> f64 {
    let n = v.len() as f64;
    v.iter()
        .map(|&vi| (vi - v_desired) * (vi - v_desired))
        .sum::<f64>()
        / n
}

/// Trajectory of a controlled alignment run on a fixed step grid.
#[derive(Debug, Clone)]
pub struct AlignmentTrajectory {
    /// `t_k = k dt`, including the initial time.
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Control value in effect on the step starting at `times[k]`
    /// (one entry per step).
    pub controls: Vec<f64>,
    /// Times at which the control was recomputed.
    pub recompute_times: Vec<f64>,
}

/// Integrates the controlled alignment model to `t_final` with explicit
/// two-stage second-order steps of size `dt`; the control is recomputed
/// at every horizon boundary and held constant in between.
pub fn integrate_alignment(
    x0: &[f64],
    v0: &[f64],
    spec: &AlignmentKernelSpec,
    ctrl: &InstantaneousControlSpec,
    t_final: f64,
    dt: f64,
) -> Result<AlignmentTrajectory> {
    spec.validate()?;
    ctrl.validate()?;
    if x0.len() != v0.len() || x0.is_empty() {
        return Err(Error::domain(
            "positions and velocities must have equal nonzero length",
        ));
    }
    if !(dt > 0.0) || dt > ctrl.horizon_dt * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "step {dt} must be positive and no larger than the control horizon {}",
            ctrl.horizon_dt
        )));
    }
    if !(t_final > 0.0) {
        return Err(Error::domain("final time must be positive"));
    }

    let n = x0.len();
    let steps = (t_final / dt).round().max(1.0) as usize;
    let dt = t_final / steps as f64;

    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut q = 0.0;
    let mut next_recompute = 0.0f64;

    let mut traj = AlignmentTrajectory {
        times: Vec::with_capacity(steps + 1),
        positions: Vec::with_capacity(steps + 1),
        velocities: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps),
        recompute_times: Vec::new(),
    };
    traj.times.push(0.0);
    traj.positions.push(x.clone());
    traj.velocities.push(v.clone());

    for k in 0..steps {
        let t = k as f64 * dt;
        if t >= next_recompute - 1e-12 {
            q = instantaneous_control(&x, &v, spec, ctrl);
            traj.recompute_times.push(t);
            next_recompute += ctrl.horizon_dt;
        }
        traj.controls.push(q);

        // Heun step with the control frozen.
        let a1 = alignment_accel(&x, &v, spec);
        let x1: Vec<f64> = (0..n).map(|i| x[i] + dt * v[i]).collect();
        let v1: Vec<f64> = (0..n).map(|i| v[i] + dt * (a1[i] + q)).collect();
        let a2 = alignment_accel(&x1, &v1, spec);
        for i in 0..n {
            x[i] += 0.5 * dt * (v[i] + v1[i]);
            v[i] += 0.5 * dt * (a1[i] + q + a2[i] + q);
        }

        traj.times.push((k + 1) as f64 * dt);
        traj.positions.push(x.clone());
        traj.velocities.push(v.clone());
    }
    Ok(traj)
}
