//! Embedded explicit Runge-Kutta integration with local error control.
//!
//! The driver implements a four-stage embedded pair of orders 2 and 3
//! (Bogacki-Shampine tableau, first-same-as-last structure). The
//! third-order solution is propagated; the difference to the embedded
//! second-order solution drives the step controller:
//!
//! ```text
//! err_norm = max_i |e_i| / (abs_tol + rel_tol * max(|y_i|, |y_new_i|))
//! h_new    = h * clamp(0.9 * err_norm^(-1/3), 0.2, 5.0)
//! ```
//!
//! Systems may carry parameters that are frozen per step (piecewise
//! constant control): [`OdeSystem::begin_step`] is called once with the
//! left endpoint of every attempted step before any stage evaluation.
//! Because the right-hand side may change between steps, the last stage
//! is not reused across step boundaries.

use crate::error::{Error, Result};

/// Right-hand side of an ODE system with per-step setup.
pub trait OdeSystem {
    /// Called once per attempted step with the step's left endpoint and
    /// size. Parameters frozen here stay constant across the step's
    /// stages.
    fn begin_step(&mut self, _t_left: f64, _h: f64) {}

    /// Writes dy/dt at `(t, y)` into `dydt`.
    fn rhs(&mut self, t: f64, y: &[f64], dydt: &mut [f64]);
}

/// Blanket impl so plain closures `(t, y, dydt)` work as systems without
/// per-step state.
impl<F: FnMut(f64, &[f64], &mut [f64])> OdeSystem for F {
    fn rhs(&mut self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self(t, y, dydt)
    }
}

/// Tolerances and step bounds for the adaptive driver.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Hard cap on the step size (`None` = only the forced landings cap).
    pub max_step: Option<f64>,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            max_step: None,
        }
    }
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Steps below `UNDERFLOW_FRAC * (tf - t0)` abort with a stiffness error.
const UNDERFLOW_FRAC: f64 = 1e-14;

/// Integrates `system` from `t0` to `tf` with the embedded 2(3) pair.
///
/// `forced_times` must be ascending and inside `[t0, tf]`; accepted steps
/// are shortened to land exactly on each of them (and on `tf`).
/// `observer` is invoked for the initial state and after every accepted
/// step.
pub fn integrate_rk23<S: OdeSystem>(
    system: &mut S,
    t0: f64,
    tf: f64,
    y0: &[f64],
    forced_times: &[f64],
    control: &StepControl,
    mut observer: impl FnMut(f64, &[f64]),
) -> Result<()> {
    if !(tf > t0) {
        return Err(Error::domain(format!(
            "integration span must be positive, got [{t0}, {tf}]"
        )));
    }
    if !(control.abs_tol > 0.0 && control.rel_tol > 0.0) {
        return Err(Error::domain("tolerances must be positive"));
    }
    for w in forced_times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::domain("forced output times must be ascending"));
        }
    }
    if let (Some(&first), Some(&last)) = (forced_times.first(), forced_times.last()) {
        if first < t0 || last > tf {
            return Err(Error::domain(
                "forced output times outside integration span",
            ));
        }
    }

    let n = y0.len();
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];

    let mut t = t0;
    observer(t, &y);

    // Skip forced times at or before the start.
    let mut next_forced = forced_times
        .iter()
        .position(|&ft| ft > t0)
        .unwrap_or(forced_times.len());

    let floor = UNDERFLOW_FRAC * (tf - t0);
    let mut h = initial_step(tf - t0, control);

    while t < tf {
        // Shorten to land on the next forced time or the endpoint.
        let target = if next_forced < forced_times.len() {
            forced_times[next_forced].min(tf)
        } else {
            tf
        };
        let mut landing = false;
        if t + h >= target - 1e-14 * (tf - t0) {
            h = target - t;
            landing = true;
        }
        if h < floor {
            return Err(Error::StepSizeUnderflow { t, step: h, floor });
        }

        system.begin_step(t, h);
        system.rhs(t, &y, &mut k1);
        for i in 0..n {
            stage[i] = y[i] + 0.5 * h * k1[i];
        }
        system.rhs(t + 0.5 * h, &stage, &mut k2);
        for i in 0..n {
            stage[i] = y[i] + 0.75 * h * k2[i];
        }
        system.rhs(t + 0.75 * h, &stage, &mut k3);
        for i in 0..n {
            y_new[i] = y[i] + h * (2.0 * k1[i] + 3.0 * k2[i] + 4.0 * k3[i]) / 9.0;
        }
        system.rhs(t + h, &y_new, &mut k4);

        // e = h * (b - b_hat) . k  with  b - b_hat = (-5/72, 1/12, 1/9, -1/8)
        let mut err_norm: f64 = 0.0;
        for i in 0..n {
            let e = h * (-5.0 / 72.0 * k1[i] + k2[i] / 12.0 + k3[i] / 9.0 - k4[i] / 8.0);
            let scale = control.abs_tol + control.rel_tol * y[i].abs().max(y_new[i].abs());
            err_norm = err_norm.max(e.abs() / scale);
        }

        let factor = if err_norm == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err_norm.powf(-1.0 / 3.0)).clamp(MIN_FACTOR, MAX_FACTOR)
        };

        if err_norm <= 1.0 {
            t = if landing { target } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            observer(t, &y);
            if landing && next_forced < forced_times.len() && t >= forced_times[next_forced] {
                next_forced += 1;
            }
            h *= factor;
        } else {
            h *= factor.min(1.0);
        }
        if let Some(hmax) = control.max_step {
            h = h.min(hmax);
        }
    }
    Ok(())
}

fn initial_step(span: f64, control: &StepControl) -> f64 {
    let h = (span * 1e-3).min(control.max_step.unwrap_or(f64::INFINITY));
    h.max(span * UNDERFLOW_FRAC * 10.0)
}

/// One classical fourth-order Runge-Kutta step for `dy/dt = f(y)`
/// (autonomous form), used by the fixed-step backward Riccati solves.
pub fn rk4_step_autonomous<T, F>(y: &T, h: f64, f: &F) -> T
where
    T: Clone + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(&T) -> T,
{
    let k1 = f(y);
    let k2 = f(&(y.clone() + k1.clone() * (0.5 * h)));
    let k3 = f(&(y.clone() + k2.clone() * (0.5 * h)));
    let k4 = f(&(y.clone() + k3.clone() * h));
    y.clone() + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}
