//! Mean-field description of the controlled system: empirical measures,
//! exact characteristic flows, Wasserstein distances and the Dobrushin
//! stability estimate.
//!
//! The mean-field PDE is transported along characteristics
//!
//! ```text
//! Xi_1' = Xi_2,    Xi_2' = -(2/alpha) y(t) Xi_2,
//! ```
//!
//! which integrate in closed form: `Xi_2(t) = xi_2 exp(-r(t))` and
//! `Xi_1(t) = xi_1 + xi_2 int_0^t exp(-r(s)) ds`. Measures evolve by
//! push-forward under this map, so the representation is exact and
//! grid-free. The 1-Wasserstein distance between two empirical measures
//! is computed as an exact minimum-cost matching (uniform weights, equal
//! counts) or an exact transportation LP (small weighted inputs).

use crate::assignment::{neumaier_sum, solve_assignment, solve_transport};
use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::riccati::{exp_neg_rate, ControlProblem};

/// Point-count cap for the minimum-cost matching path.
pub const MATCHING_CAP: usize = 2048;
/// Per-side point-count cap for the transportation LP path.
pub const LP_CAP: usize = 64;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weighted point cloud in phase space `(x, v)`; weights are
/// non-negative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Uniform measure `1/N` on the given points.
    pub fn uniform(points: Vec<[f64; 2]>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::domain("empirical measure needs at least one point"));
        }
        let weights = vec![1.0 / n as f64; n];
        Self::weighted(points, weights)
    }

    /// Measure with explicit weights (must sum to one within `1e-12`).
    pub fn weighted(points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::domain(
                "points and weights must have equal nonzero length",
            ));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::domain("measure points must be finite"));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::domain("weights must be non-negative"));
        }
        let total = neumaier_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::domain(format!("weights must sum to 1, got {total}")));
        }
        Ok(EmpiricalMeasure { points, weights })
    }

    /// Uniform measure on the phase-space points of a particle ensemble.
    pub fn from_ensemble(ensemble: &crate::particle::ParticleEnsemble) -> Result<Self> {
        let points = ensemble
            .x
            .iter()
            .zip(ensemble.v.iter())
            .map(|(&x, &v)| [x, v])
            .collect();
        Self::uniform(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every weight equals `1/N` (within `1e-12`).
    pub fn is_uniform(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights
            .iter()
            .all(|&w| (w - w0).abs() <= WEIGHT_SUM_TOL)
    }

    /// Parses the plain-text format: one `x v [weight]` row per point,
    /// `#` starts a comment, blank lines are skipped. Either every row
    /// carries a weight or none does.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut has_weights: Option<bool> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 && fields.len() != 3 {
                return Err(Error::domain(format!(
                    "line {}: expected `x v [weight]`, got {} fields",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| {
                    Error::domain(format!("line {}: unparsable number `{s}`", lineno + 1))
                })
            };
            let x = parse(fields[0])?;
            let v = parse(fields[1])?;
            let weighted_row = fields.len() == 3;
            match has_weights {
                None => has_weights = Some(weighted_row),
                Some(h) if h != weighted_row => {
                    return Err(Error::domain(format!(
                        "line {}: inconsistent weight column",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            points.push([x, v]);
            if weighted_row {
                weights.push(parse(fields[2])?);
            }
        }
        if has_weights == Some(true) {
            Self::weighted(points, weights)
        } else {
            Self::uniform(points)
        }
    }

    /// Serializes to the plain-text row format; weights are written only
    /// when the measure is non-uniform.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let uniform = self.is_uniform();
        for (p, w) in self.points.iter().zip(self.weights.iter()) {
            if uniform {
                out.push_str(&format!("{:.17e} {:.17e}\n", p[0], p[1]));
            } else {
                out.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", p[0], p[1], w));
            }
        }
        out
    }
}

/// Exact solution map of the mean-field characteristics for a given
/// control problem.
#[derive(Debug, Clone, Copy)]
pub struct CharacteristicFlow {
    pub problem: ControlProblem,
}

impl CharacteristicFlow {
    pub fn new(problem: ControlProblem) -> Self {
        CharacteristicFlow { problem }
    }

    /// `int_0^t exp(-r(s)) ds` by adaptive Simpson quadrature to `1e-10`;
    /// the drift accumulated by a unit initial velocity.
    pub fn displacement_integral(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        // Validate t through the rate before integrating.
        exp_neg_rate(t, &self.problem)?;
        Ok(adaptive_simpson(
            &|s| exp_neg_rate(s, &self.problem).expect("s inside [0, t]"),
            0.0,
            t,
            1e-10,
        ))
    }
}

/// Evaluates the characteristic flow at time `t` for one phase point.
pub fn characteristic_flow(xi0: [f64; 2], t: f64, flow: &CharacteristicFlow) -> Result<[f64; 2]> {
    let decay = exp_neg_rate(t, &flow.problem)?;
    let drift = flow.displacement_integral(t)?;
    Ok([xi0[0] + xi0[1] * drift, xi0[1] * decay])
}

/// Push-forward of an empirical measure under the characteristic flow:
/// points move, weights stay.
pub fn push_forward(
    measure: &EmpiricalMeasure,
    t: f64,
    flow: &CharacteristicFlow,
) -> Result<EmpiricalMeasure> {
    let decay = exp_neg_rate(t, &flow.problem)?;
    let drift = flow.displacement_integral(t)?;
    let points = measure
        .points
        .iter()
        .map(|&[x, v]| [x + v * drift, v * decay])
        .collect();
    EmpiricalMeasure::weighted(points, measure.weights.clone())
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Exact 1-Wasserstein distance between two empirical measures with
/// Euclidean ground cost.
///
/// Uniform weights with equal point counts (`n <= 2048`) are solved as a
/// minimum-cost perfect matching; other inputs with at most 64 points per
/// side go through an exact transportation LP; anything larger is
/// rejected.
pub fn wasserstein1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    let n = mu.len();
    let m = nu.len();
    if n == m && mu.is_uniform() && nu.is_uniform() {
        if n > MATCHING_CAP {
            return Err(Error::Capacity(format!(
                "matching path capped at {MATCHING_CAP} points, got {n}"
            )));
        }
        let mut cost = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                cost[i * n + j] = euclid(mu.points[i], nu.points[j]);
            }
        }
        let perm = solve_assignment(n, &cost)?;
        let total = neumaier_sum((0..n).map(|i| cost[i * n + perm[i]]));
        return Ok(total / n as f64);
    }
    if n.max(m) > LP_CAP {
        return Err(Error::UnsupportedInput(format!(
            "weighted/unequal inputs are limited to {LP_CAP} points per side, got {n} and {m}"
        )));
    }
    let sol = solve_transport(&mu.weights, &nu.weights, &|i, j| {
        euclid(mu.points[i], nu.points[j])
    })?;
    Ok(sol.cost)
}

/// The Lipschitz constant of the characteristic field and the Dobrushin
/// stability constant derived from it.
#[derive(Debug, Clone, Copy)]
pub struct DobrushinBound {
    /// `C_L = max(1, 1/sqrt(alpha))`.
    pub lipschitz_cl: f64,
    /// `C_1 = max(1, 4 T exp(C_L T / 2))`.
    pub constant_c1: f64,
}

/// Evaluates both stability constants for a problem.
pub fn dobrushin_constant(problem: &ControlProblem) -> DobrushinBound {
    let cl = 1.0f64.max(1.0 / problem.alpha.sqrt());
    let c1 = 1.0f64.max(4.0 * problem.horizon_t * (0.5 * cl * problem.horizon_t).exp());
    DobrushinBound {
        lipschitz_cl: cl,
        constant_c1: c1,
    }
}

/// One checked time of a Dobrushin verification run.
#[derive(Debug, Clone, Copy)]
pub struct DobrushinRow {
    pub t: f64,
    pub distance: f64,
    pub bound: f64,
}

/// Result of checking `W(mu(t), nu(t)) <= C_1 W(mu_0, nu_0)` on a set of
/// times.
#[derive(Debug, Clone)]
pub struct DobrushinReport {
    pub initial_distance: f64,
    pub constants: DobrushinBound,
    pub rows: Vec<DobrushinRow>,
    /// Largest observed `W(t) / (C_1 W(0))`; zero when both measures
    /// coincide initially.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Pushes both measures to each requested time and checks the Dobrushin
/// inequality.
pub fn verify_dobrushin(
    mu0: &EmpiricalMeasure,
    nu0: &EmpiricalMeasure,
    times: &[f64],
    flow: &CharacteristicFlow,
) -> Result<DobrushinReport> {
    let constants = dobrushin_constant(&flow.problem);
    let w0 = wasserstein1(mu0, nu0)?;
    let bound = constants.constant_c1 * w0;
    let mut rows = Vec::with_capacity(times.len());
    let mut max_ratio = 0.0f64;
    let mut pass = true;
    for &t in times {
        let mu_t = push_forward(mu0, t, flow)?;
        let nu_t = push_forward(nu0, t, flow)?;
        let distance = wasserstein1(&mu_t, &nu_t)?;
        let ok = distance <= bound + 1e-12 * (1.0 + w0);
        pass &= ok;
        if bound > 0.0 {
            max_ratio = max_ratio.max(distance / bound);
        } else if distance > 0.0 {
            max_ratio = f64::INFINITY;
        }
        rows.push(DobrushinRow { t, distance, bound });
    }
    Ok(DobrushinReport {
        initial_distance: w0,
        constants,
        rows,
        max_ratio,
        pass,
    })
}

/// Mean-field Lyapunov function `L = y sum_i w_i v_i^2`.
pub fn meanfield_lyapunov(measure: &EmpiricalMeasure, y: f64) -> f64 {
    y * measure
        .points
        .iter()
        .zip(measure.weights.iter())
        .map(|(p, w)| w * p[1] * p[1])
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::lyapunov_particle;
    use crate::riccati::closed_form_y;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn problem(alpha: f64) -> ControlProblem {
        ControlProblem::new(alpha, 1.0, 1).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha12Rng, n: usize) -> EmpiricalMeasure {
        let points = (0..n)
            .map(|_| [rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0])
            .collect();
        EmpiricalMeasure::uniform(points).unwrap()
    }

    /// Exhaustive permutation minimum of the mean matched distance.
    fn brute_force_w1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        let n = mu.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = (0..n)
                .map(|i| euclid(mu.points()[i], nu.points()[p[i]]))
                .sum();
            best = best.min(total / n as f64);
        });
        best
    }

    fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == perm.len() {
            visit(perm);
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(perm, k + 1, visit);
            perm.swap(k, i);
        }
    }

    #[test]
    fn distance_to_self_is_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mu = random_cloud(&mut rng, 12);
        assert_eq!(wasserstein1(&mu, &mu).unwrap(), 0.0);
    }

    #[test]
    fn two_diracs() {
        let a = EmpiricalMeasure::uniform(vec![[0.0, 0.0]]).unwrap();
        let b = EmpiricalMeasure::uniform(vec![[3.0, 4.0]]).unwrap();
        assert!((wasserstein1(&a, &b).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_small() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for n in 2..=6 {
            for _ in 0..10 {
                let mu = random_cloud(&mut rng, n);
                let nu = random_cloud(&mut rng, n);
                let fast = wasserstein1(&mu, &nu).unwrap();
                let slow = brute_force_w1(&mu, &nu);
                assert!((fast - slow).abs() < 1e-13, "n = {n}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..25 {
            let a = random_cloud(&mut rng, 16);
            let b = random_cloud(&mut rng, 16);
            let c = random_cloud(&mut rng, 16);
            let ab = wasserstein1(&a, &b).unwrap();
            let ba = wasserstein1(&b, &a).unwrap();
            let bc = wasserstein1(&b, &c).unwrap();
            let ac = wasserstein1(&a, &c).unwrap();
            assert!((ab - ba).abs() <= 1e-12);
            assert!(ac <= ab + bc + 1e-10);
            assert!(ab > 0.0);
        }
    }

    #[test]
    fn lp_path_handles_unequal_counts() {
        // A dirac against its own half-half split between two points.
        let mu = EmpiricalMeasure::uniform(vec![[0.0, 0.0]]).unwrap();
        let nu = EmpiricalMeasure::uniform(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let w = wasserstein1(&mu, &nu).unwrap();
        assert!((w - 0.5).abs() < 1e-14);
    }

    #[test]
    fn lp_path_handles_weights() {
        let mu = EmpiricalMeasure::weighted(vec![[0.0, 0.0]], vec![1.0]).unwrap();
        let nu =
            EmpiricalMeasure::weighted(vec![[0.0, 0.0], [2.0, 0.0]], vec![0.75, 0.25]).unwrap();
        let w = wasserstein1(&mu, &nu).unwrap();
        assert!((w - 0.5).abs() < 1e-14);
    }

    #[test]
    fn oversized_inputs_are_rejected() {
        let big = EmpiricalMeasure::uniform(vec![[0.0, 0.0]; 65]).unwrap();
        let one = EmpiricalMeasure::uniform(vec![[0.0, 0.0]]).unwrap();
        match wasserstein1(&big, &one) {
            Err(Error::UnsupportedInput(_)) => {}
            other => panic!("expected unsupported-input error, got {other:?}"),
        }

        // Uniform equal counts above the matching cap.
        let huge = EmpiricalMeasure::uniform(vec![[0.0, 0.0]; MATCHING_CAP + 1]).unwrap();
        match wasserstein1(&huge, &huge.clone()) {
            Err(Error::Capacity(_)) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn measure_validation() {
        assert!(EmpiricalMeasure::uniform(vec![]).is_err());
        assert!(EmpiricalMeasure::weighted(vec![[0.0, 0.0]], vec![0.5]).is_err());
        assert!(EmpiricalMeasure::weighted(vec![[0.0, 0.0], [1.0, 1.0]], vec![1.5, -0.5]).is_err());
        assert!(EmpiricalMeasure::uniform(vec![[f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn characteristic_flow_values() {
        let flow = CharacteristicFlow::new(problem(1.0));
        let id = characteristic_flow([0.4, -1.2], 0.0, &flow).unwrap();
        assert_eq!(id, [0.4, -1.2]);

        let moved = characteristic_flow([0.0, 1.0], 1.0, &flow).unwrap();
        assert!((moved[0] - 1.0f64.tanh()).abs() < 1e-9, "x = {}", moved[0]);
        assert!((moved[1] - 1.0 / 1.0f64.cosh()).abs() < 1e-12);

        let frozen = characteristic_flow([0.7, 0.0], 0.9, &flow).unwrap();
        assert_eq!(frozen, [0.7, 0.0]);

        assert!(characteristic_flow([0.0, 0.0], 1.5, &flow).is_err());
    }

    #[test]
    fn push_forward_identity_and_dirac() {
        let flow = CharacteristicFlow::new(problem(0.25));
        let mu =
            EmpiricalMeasure::weighted(vec![[0.0, 1.0], [0.5, -2.0]], vec![0.25, 0.75]).unwrap();
        let same = push_forward(&mu, 0.0, &flow).unwrap();
        assert_eq!(same, mu);

        let dirac = EmpiricalMeasure::uniform(vec![[0.3, 0.7]]).unwrap();
        let moved = push_forward(&dirac, 0.5, &flow).unwrap();
        let direct = characteristic_flow([0.3, 0.7], 0.5, &flow).unwrap();
        assert_eq!(moved.points()[0], direct);
        assert_eq!(moved.weights(), dirac.weights());
    }

    #[test]
    fn dobrushin_constants_hand_values() {
        let b = dobrushin_constant(&problem(1.0));
        assert_eq!(b.lipschitz_cl, 1.0);
        assert!((b.constant_c1 - 4.0 * 0.5f64.exp()).abs() < 1e-12);

        let b = dobrushin_constant(&problem(0.25));
        assert_eq!(b.lipschitz_cl, 2.0);
        assert!((b.constant_c1 - 4.0 * 1.0f64.exp()).abs() < 1e-12);

        let tiny = ControlProblem::new(1.0, 1e-9, 1).unwrap();
        assert_eq!(dobrushin_constant(&tiny).constant_c1, 1.0);
    }

    #[test]
    fn dobrushin_identical_measures() {
        let flow = CharacteristicFlow::new(problem(1.0));
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mu = random_cloud(&mut rng, 8);
        let report = verify_dobrushin(&mu, &mu.clone(), &[0.25, 0.5, 1.0], &flow).unwrap();
        assert!(report.pass);
        assert_eq!(report.initial_distance, 0.0);
        assert!(report.rows.iter().all(|r| r.distance == 0.0));
    }

    #[test]
    fn dobrushin_translation_invariance_of_equal_velocities() {
        // Equal velocities, different positions: the gap is constant in t.
        let flow = CharacteristicFlow::new(problem(1e-2));
        let a = EmpiricalMeasure::uniform(vec![[0.0, 0.8]]).unwrap();
        let b = EmpiricalMeasure::uniform(vec![[0.4, 0.8]]).unwrap();
        let w0 = wasserstein1(&a, &b).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let at = push_forward(&a, t, &flow).unwrap();
            let bt = push_forward(&b, t, &flow).unwrap();
            let wt = wasserstein1(&at, &bt).unwrap();
            assert!((wt - w0).abs() < 1e-12, "t = {t}: {wt} vs {w0}");
        }
    }

    #[test]
    fn dobrushin_seeded_clouds_within_bound() {
        let flow = CharacteristicFlow::new(problem(1.0));
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let mu = random_cloud(&mut rng, 64);
        let nu = random_cloud(&mut rng, 64);
        let report = verify_dobrushin(&mu, &nu, &[0.25, 0.5, 1.0], &flow).unwrap();
        assert!(report.pass);
        assert!(report.max_ratio <= 1.0, "ratio = {}", report.max_ratio);
    }

    #[test]
    fn lyapunov_matches_particle_formula_on_uniform_weights() {
        let e =
            crate::particle::ParticleEnsemble::new(vec![0.1, 0.2, 0.3], vec![1.0, -2.0, 0.5], 0.0)
                .unwrap();
        let mu = EmpiricalMeasure::from_ensemble(&e).unwrap();
        let y = 0.37;
        assert!((meanfield_lyapunov(&mu, y) - lyapunov_particle(&e, y)).abs() < 1e-15);
        assert_eq!(meanfield_lyapunov(&mu, 0.0), 0.0);
    }

    #[test]
    fn pushed_measure_lyapunov_decays_below_envelope() {
        let p = problem(1e-2);
        let flow = CharacteristicFlow::new(p);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mu0 = random_cloud(&mut rng, 32);
        let l0 = meanfield_lyapunov(&mu0, closed_form_y(0.0, &p).unwrap());
        for k in 1..=10 {
            let t = k as f64 / 10.0;
            let mu_t = push_forward(&mu0, t, &flow).unwrap();
            let lt = meanfield_lyapunov(&mu_t, closed_form_y(t, &p).unwrap());
            let envelope = l0 * (-crate::riccati::exact_rate(t, &p).unwrap()).exp();
            assert!(
                lt <= envelope * (1.0 + 1e-10),
                "t = {t}: {lt} vs {envelope}"
            );
        }
    }

    #[test]
    fn text_roundtrip_uniform_and_weighted() {
        let mu = EmpiricalMeasure::uniform(vec![[0.25, -1.5], [0.75, 2.0]]).unwrap();
        let back = EmpiricalMeasure::from_text(&mu.to_text()).unwrap();
        assert_eq!(mu, back);

        let w =
            EmpiricalMeasure::weighted(vec![[0.0, 1.0], [1.0, -1.0]], vec![0.25, 0.75]).unwrap();
        let back = EmpiricalMeasure::from_text(&w.to_text()).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn text_parsing_comments_and_errors() {
        let parsed =
            EmpiricalMeasure::from_text("# a comment\n0.0 1.0\n\n0.5 2.0 # inline comment\n")
                .unwrap();
        assert_eq!(parsed.len(), 2);
        assert!(parsed.is_uniform());

        assert!(EmpiricalMeasure::from_text("0.0\n").is_err());
        assert!(EmpiricalMeasure::from_text("0.0 nope\n").is_err());
        assert!(EmpiricalMeasure::from_text("0.0 1.0 0.5\n1.0 1.0\n").is_err());
        assert!(EmpiricalMeasure::from_text("").is_err());
    }
}
