//! Experiment orchestration: runs the configured scale, writes CSV
//! series, plot scripts and a human-readable summary, and reports whether
//! every declared invariant held.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crowdctl_core::alignment::{
    integrate_alignment, tracking_cost, AlignmentKernelSpec, InstantaneousControlSpec,
};
use crowdctl_core::hydro::{run_hydro_experiment, Closure, HydroExperiment};
use crowdctl_core::meanfield::{
    dobrushin_constant, meanfield_lyapunov, push_forward, verify_dobrushin, CharacteristicFlow,
    EmpiricalMeasure,
};
use crowdctl_core::particle::{
    run_particle_experiment, sample_initial_conditions, InitialConditionSpec, ParticleExperiment,
};
use crowdctl_core::riccati::{
    closed_form_y, decay_rate, exact_rate, solve_matrix_riccati_with_cap, solve_scalar_gain,
    structure_report, ControlProblem, GainMethod,
};

use crate::config::{ExperimentConfig, Scale};
use crate::plot::{write_overlay_plot_script, write_series_csv, Column, PlotEntry};

/// Harness-level failure: configuration/IO problems map to exit code 2.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Core(crowdctl_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(msg) => write!(f, "{msg}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<crowdctl_core::Error> for CliError {
    fn from(e: crowdctl_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type RunnerResult<T> = Result<T, CliError>;

/// Result of a run: per-check lines plus the overall verdict.
pub struct RunReport {
    pub pass: bool,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

struct Summary {
    lines: String,
    pass: bool,
}

impl Summary {
    fn new(title: &str) -> Self {
        Summary {
            lines: format!("{title}\n"),
            pass: true,
        }
    }

    fn check(&mut self, ok: bool, text: &str) {
        let tag = if ok { "ok  " } else { "FAIL" };
        let _ = writeln!(self.lines, "  [{tag}] {text}");
        self.pass &= ok;
    }

    fn note(&mut self, text: &str) {
        let _ = writeln!(self.lines, "  [note] {text}");
    }
}

/// Extra inputs for the meanfield scale: measures loaded from files
/// instead of seeded clouds.
#[derive(Debug, Default, Clone)]
pub struct MeasureInputs {
    pub mu: Option<PathBuf>,
    pub nu: Option<PathBuf>,
}

fn alpha_tag(alpha: f64) -> String {
    format!("{alpha:e}")
}

fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn write_text(path: &Path, text: &str) -> RunnerResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Runs the scale selected in `config` and writes all artifacts into
/// `out_dir`.
pub fn run(
    scale: Scale,
    config: &ExperimentConfig,
    out_dir: &Path,
    measures: &MeasureInputs,
) -> RunnerResult<RunReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    match scale {
        Scale::Particle => run_particle(config, out_dir),
        Scale::Hydro => run_hydro(config, out_dir),
        Scale::Meanfield => run_meanfield(config, out_dir, measures),
        Scale::Nonlinear => run_nonlinear(config, out_dir),
        Scale::RiccatiCheck => run_riccati_check(config, out_dir),
    }
}

fn run_particle(config: &ExperimentConfig, out_dir: &Path) -> RunnerResult<RunReport> {
    let mut summary = Summary::new("particle-scale Lyapunov decay");
    let mut artifacts = Vec::new();
    let mut plot_entries = Vec::new();

    for &alpha in &config.alphas {
        let problem = ControlProblem::new(alpha, config.horizon_t, config.n_particles)?;
        let mut experiment = ParticleExperiment::new(problem, config.seed);
        experiment.initial.n_particles = config.n_particles;
        experiment.initial.noise_low = config.noise_low;
        experiment.initial.noise_high = config.noise_high;
        experiment.initial.noise_in_exponent = config.noise_in_exponent;
        experiment.abs_tol = config.abs_tol;
        experiment.rel_tol = config.rel_tol;
        experiment.n_outputs = config.n_outputs;
        let series = run_particle_experiment(&experiment)?;

        let name = format!("particle_alpha{}.csv", alpha_tag(alpha));
        let path = out_path(out_dir, &name);
        write_series_csv(
            &path,
            &series.times,
            &[
                Column {
                    name: "L",
                    values: &series.lyapunov,
                },
                Column {
                    name: "bound",
                    values: &series.bound,
                },
                Column {
                    name: "r",
                    values: &series.rate,
                },
            ],
        )?;
        artifacts.push(path);
        plot_entries.push(PlotEntry {
            csv_name: name,
            alpha,
        });

        let l0 = series.lyapunov[0];
        let worst = series
            .lyapunov
            .iter()
            .zip(series.bound.iter())
            .map(|(l, b)| if *b > 0.0 { l / b } else { 0.0 })
            .fold(0.0f64, f64::max);
        summary.check(
            series
                .lyapunov
                .iter()
                .zip(series.bound.iter())
                .all(|(l, b)| *l <= b * (1.0 + 1e-6)),
            &format!("alpha={alpha:e}: L(t) <= L(0)exp(-r(t)), max ratio {worst:.6}"),
        );
        summary.check(
            series.lyapunov.windows(2).all(|w| w[1] < w[0]),
            &format!(
                "alpha={alpha:e}: L strictly decreasing over {} steps",
                series.times.len()
            ),
        );
        summary.note(&format!(
            "alpha={alpha:e}: L(0) = {l0:.6e}, L(T) = {:.6e}",
            series.lyapunov.last().unwrap()
        ));
    }

    let plot = out_path(out_dir, "particle_decay.py");
    write_overlay_plot_script(&plot, &plot_entries, "L", "bound", "L(t)")?;
    artifacts.push(plot);

    let summary_path = out_path(out_dir, "particle_summary.txt");
    write_text(&summary_path, &summary.lines)?;
    artifacts.push(summary_path);
    Ok(RunReport {
        pass: summary.pass,
        summary: summary.lines,
        artifacts,
    })
}

fn run_hydro(config: &ExperimentConfig, out_dir: &Path) -> RunnerResult<RunReport> {
    let mut summary = Summary::new("hydrodynamic Lyapunov decay and conservation");
    let mut artifacts = Vec::new();
    let mut plot_entries = Vec::new();

    for &alpha in &config.alphas {
        let problem = ControlProblem::new(alpha, config.horizon_t, 1)?;
        let mut experiment = HydroExperiment::new(problem, config.seed);
        experiment.nx = config.nx;
        experiment.noise_low = config.noise_low;
        experiment.noise_high = config.noise_high;
        experiment.cfl = config.cfl;
        experiment.closure = config.closure;
        experiment.n_outputs = config.n_outputs;
        let series = run_hydro_experiment(&experiment)?;

        let name = format!("hydro_alpha{}.csv", alpha_tag(alpha));
        let path = out_path(out_dir, &name);
        write_series_csv(
            &path,
            &series.times,
            &[
                Column {
                    name: "L",
                    values: &series.lyapunov,
                },
                Column {
                    name: "bound",
                    values: &series.bound,
                },
                Column {
                    name: "r",
                    values: &series.rate,
                },
                Column {
                    name: "mass",
                    values: &series.mass,
                },
                Column {
                    name: "momentum",
                    values: &series.momentum,
                },
            ],
        )?;
        artifacts.push(path);
        plot_entries.push(PlotEntry {
            csv_name: name,
            alpha,
        });

        let m0 = series.mass[0];
        let mass_drift = series
            .mass
            .iter()
            .map(|m| (m - m0).abs() / m0.abs())
            .fold(0.0f64, f64::max);
        summary.check(
            mass_drift <= 1e-12,
            &format!("alpha={alpha:e}: mass conserved, max relative drift {mass_drift:.3e}"),
        );

        let p0 = series.momentum[0];
        let mut momentum_err = 0.0f64;
        for (k, &p) in series.momentum.iter().enumerate() {
            let expect = p0 * (-exact_rate(series.times[k], &problem)?).exp();
            momentum_err = momentum_err.max((p - expect).abs() / p0.abs().max(1e-300));
        }
        summary.check(
            momentum_err <= 1e-10,
            &format!(
                "alpha={alpha:e}: momentum tracks M(0)exp(-r(t)), max relative error {momentum_err:.3e}"
            ),
        );

        match config.closure {
            Closure::MonoKinetic => {
                let l0 = series.lyapunov[0];
                let ok = series
                    .lyapunov
                    .iter()
                    .zip(series.bound.iter())
                    .all(|(l, b)| *l <= b + 5e-2 * l0);
                summary.check(
                    ok,
                    &format!("alpha={alpha:e}: Lyapunov below envelope (+5e-2 L(0) scheme slack)"),
                );
            }
            Closure::Grad { .. } => {
                summary.note(&format!(
                    "alpha={alpha:e}: Lyapunov bound check skipped (no decay estimate under the Grad closure)"
                ));
            }
        }
    }

    let plot = out_path(out_dir, "hydro_decay.py");
    write_overlay_plot_script(&plot, &plot_entries, "L", "bound", "L(t)")?;
    artifacts.push(plot);

    let summary_path = out_path(out_dir, "hydro_summary.txt");
    write_text(&summary_path, &summary.lines)?;
    artifacts.push(summary_path);
    Ok(RunReport {
        pass: summary.pass,
        summary: summary.lines,
        artifacts,
    })
}

fn load_measure(path: &Path) -> RunnerResult<EmpiricalMeasure> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    EmpiricalMeasure::from_text(&text).map_err(CliError::Core)
}

fn run_meanfield(
    config: &ExperimentConfig,
    out_dir: &Path,
    measures: &MeasureInputs,
) -> RunnerResult<RunReport> {
    let mut summary = Summary::new("mean-field Dobrushin stability and Lyapunov decay");
    let mut artifacts = Vec::new();

    let (mu0, nu0) = match (&measures.mu, &measures.nu) {
        (Some(mu), Some(nu)) => (load_measure(mu)?, load_measure(nu)?),
        (None, None) => {
            let sample = |seed: u64| -> RunnerResult<EmpiricalMeasure> {
                let mut spec = InitialConditionSpec::new(config.mf_points, seed);
                spec.noise_low = config.noise_low;
                spec.noise_high = config.noise_high;
                spec.noise_in_exponent = config.noise_in_exponent;
                Ok(EmpiricalMeasure::from_ensemble(
                    &sample_initial_conditions(&spec)?,
                )?)
            };
            (sample(config.seed)?, sample(config.seed + 1)?)
        }
        _ => {
            return Err(CliError::Invalid(
                "provide both --mu and --nu, or neither".to_string(),
            ))
        }
    };

    for &alpha in &config.alphas {
        let problem = ControlProblem::new(alpha, config.horizon_t, config.mf_points)?;
        let flow = CharacteristicFlow::new(problem);
        let grid: Vec<f64> = (1..=config.n_outputs)
            .map(|k| k as f64 * config.horizon_t / config.n_outputs as f64)
            .collect();
        let report = verify_dobrushin(&mu0, &nu0, &grid, &flow)?;

        let constants = dobrushin_constant(&problem);
        summary.check(
            report.pass,
            &format!(
                "alpha={alpha:e}: W(mu(t),nu(t)) <= C1 W0 (C_L={:.4e}, C1={:.4e}, W0={:.6e}, max ratio {:.4e})",
                constants.lipschitz_cl, constants.constant_c1, report.initial_distance,
                report.max_ratio
            ),
        );

        // Lyapunov decay of the pushed-forward measure.
        let y0 = closed_form_y(0.0, &problem)?;
        let l0 = meanfield_lyapunov(&mu0, y0);
        let mut lyap = vec![l0];
        let mut envelope = vec![l0];
        let mut lyap_ok = true;
        for &t in &grid {
            let mu_t = push_forward(&mu0, t, &flow)?;
            let lt = meanfield_lyapunov(&mu_t, closed_form_y(t, &problem)?);
            let env = l0 * (-exact_rate(t, &problem)?).exp();
            lyap_ok &= lt <= env * (1.0 + 1e-10);
            lyap.push(lt);
            envelope.push(env);
        }
        summary.check(
            lyap_ok,
            &format!("alpha={alpha:e}: mean-field Lyapunov below exp(-r(t)) envelope"),
        );

        let mut times = vec![0.0];
        times.extend_from_slice(&grid);
        let mut distances = vec![report.initial_distance];
        distances.extend(report.rows.iter().map(|r| r.distance));
        let mut bounds = vec![report.initial_distance * constants.constant_c1];
        bounds.extend(report.rows.iter().map(|r| r.bound));

        let name = format!("meanfield_alpha{}.csv", alpha_tag(alpha));
        let path = out_path(out_dir, &name);
        write_series_csv(
            &path,
            &times,
            &[
                Column {
                    name: "W",
                    values: &distances,
                },
                Column {
                    name: "dobrushin_bound",
                    values: &bounds,
                },
                Column {
                    name: "L",
                    values: &lyap,
                },
                Column {
                    name: "L_envelope",
                    values: &envelope,
                },
            ],
        )?;
        artifacts.push(path);

        // Final pushed measures in the plain-text row format.
        let mu_path = out_path(out_dir, &format!("mu_final_alpha{}.txt", alpha_tag(alpha)));
        write_text(
            &mu_path,
            &push_forward(&mu0, config.horizon_t, &flow)?.to_text(),
        )?;
        artifacts.push(mu_path);
        let nu_path = out_path(out_dir, &format!("nu_final_alpha{}.txt", alpha_tag(alpha)));
        write_text(
            &nu_path,
            &push_forward(&nu0, config.horizon_t, &flow)?.to_text(),
        )?;
        artifacts.push(nu_path);
    }

    let summary_path = out_path(out_dir, "meanfield_summary.txt");
    write_text(&summary_path, &summary.lines)?;
    artifacts.push(summary_path);
    Ok(RunReport {
        pass: summary.pass,
        summary: summary.lines,
        artifacts,
    })
}

fn run_nonlinear(config: &ExperimentConfig, out_dir: &Path) -> RunnerResult<RunReport> {
    let mut summary = Summary::new("nonlinear alignment under instantaneous control");
    let mut artifacts = Vec::new();

    let spec = AlignmentKernelSpec {
        kind: config.kernel_kind,
        strength_k: config.kernel_strength,
        gamma: config.kernel_gamma,
        delta: config.kernel_delta,
    };
    let ctrl = InstantaneousControlSpec {
        beta: config.beta,
        v_desired: config.v_desired,
        horizon_dt: config.control_dt,
    };
    // Same seeded ensemble recipe as the particle scale.
    let mut ic = InitialConditionSpec::new(config.n_particles, config.seed);
    ic.noise_low = config.noise_low;
    ic.noise_high = config.noise_high;
    ic.noise_in_exponent = config.noise_in_exponent;
    let ensemble = sample_initial_conditions(&ic)?;
    let traj = integrate_alignment(
        &ensemble.x,
        &ensemble.v,
        &spec,
        &ctrl,
        config.horizon_t,
        config.dt,
    )?;

    let costs: Vec<f64> = traj
        .velocities
        .iter()
        .map(|v| tracking_cost(v, ctrl.v_desired))
        .collect();
    let mut controls = traj.controls.clone();
    controls.push(*controls.last().unwrap_or(&0.0)); // align with times

    let path = out_path(out_dir, "nonlinear.csv");
    write_series_csv(
        &path,
        &traj.times,
        &[
            Column {
                name: "cost",
                values: &costs,
            },
            Column {
                name: "q",
                values: &controls,
            },
        ],
    )?;
    artifacts.push(path);

    let mut decreasing = true;
    let mut recompute_costs = Vec::new();
    for &t in &traj.recompute_times {
        let k = traj
            .times
            .iter()
            .position(|&tk| (tk - t).abs() < 1e-12)
            .expect("recompute instants lie on the step grid");
        recompute_costs.push(costs[k]);
    }
    for w in recompute_costs.windows(2) {
        decreasing &= w[1] < w[0];
    }
    summary.check(
        decreasing,
        &format!(
            "tracking cost decreases across all {} recompute instants ({:.6e} -> {:.6e})",
            recompute_costs.len(),
            recompute_costs.first().unwrap_or(&0.0),
            recompute_costs.last().unwrap_or(&0.0)
        ),
    );

    let summary_path = out_path(out_dir, "nonlinear_summary.txt");
    write_text(&summary_path, &summary.lines)?;
    artifacts.push(summary_path);
    Ok(RunReport {
        pass: summary.pass,
        summary: summary.lines,
        artifacts,
    })
}

fn run_riccati_check(config: &ExperimentConfig, out_dir: &Path) -> RunnerResult<RunReport> {
    let mut summary = Summary::new("matrix Riccati structural checks");
    let mut artifacts = Vec::new();

    for &alpha in &config.alphas {
        // Gain schedule artifact on the output grid.
        let problem = ControlProblem::new(alpha, config.horizon_t, 1)?;
        let grid: Vec<f64> = (0..=config.n_outputs)
            .map(|k| {
                if k == config.n_outputs {
                    config.horizon_t
                } else {
                    k as f64 * config.horizon_t / config.n_outputs as f64
                }
            })
            .collect();
        let schedule = solve_scalar_gain(&problem, &grid, GainMethod::ClosedForm)?;
        let rate = decay_rate(&problem, &grid)?;
        let name = format!("riccati_gain_alpha{}.csv", alpha_tag(alpha));
        let path = out_path(out_dir, &name);
        write_series_csv(
            &path,
            &grid,
            &[
                Column {
                    name: "y",
                    values: &schedule.y_values,
                },
                Column {
                    name: "d",
                    values: &schedule.d_values,
                },
                Column {
                    name: "r",
                    values: &rate,
                },
            ],
        )?;
        artifacts.push(path);

        // Closed form vs backward integration.
        let numeric = solve_scalar_gain(
            &problem,
            &grid,
            GainMethod::BackwardRk4 {
                steps: config.riccati_steps,
            },
        )?;
        let gain_err = schedule
            .y_values
            .iter()
            .zip(numeric.y_values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        summary.check(
            gain_err <= 1e-6,
            &format!(
                "alpha={alpha:e}: closed-form gain matches backward ODE, max error {gain_err:.3e}"
            ),
        );

        for &n in &config.riccati_n {
            let problem = ControlProblem::new(alpha, config.horizon_t, n)?;
            let solution = solve_matrix_riccati_with_cap(&problem, config.riccati_steps, 8)?;
            let report = structure_report(&solution, &problem)?;
            summary.check(
                report.max_offdiag_block <= 1e-8,
                &format!(
                    "alpha={alpha:e} N={n}: K11,K12,K21 vanish, max entry {:.3e}",
                    report.max_offdiag_block
                ),
            );
            summary.check(
                report.max_k22_vs_closed_form <= 1e-6,
                &format!(
                    "alpha={alpha:e} N={n}: K22 = d(t) Id, max deviation {:.3e}",
                    report.max_k22_vs_closed_form
                ),
            );
            summary.check(
                report.max_asymmetry <= 1e-10,
                &format!(
                    "alpha={alpha:e} N={n}: symmetry, max |K - K^T| = {:.3e}",
                    report.max_asymmetry
                ),
            );
            summary.check(
                report.min_eigenvalue >= -1e-10,
                &format!(
                    "alpha={alpha:e} N={n}: positive semi-definite, eigenvalue floor {:.3e}",
                    report.min_eigenvalue
                ),
            );
        }
    }

    let summary_path = out_path(out_dir, "riccati_summary.txt");
    write_text(&summary_path, &summary.lines)?;
    artifacts.push(summary_path);
    Ok(RunReport {
        pass: summary.pass,
        summary: summary.lines,
        artifacts,
    })
}
