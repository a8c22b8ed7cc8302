//! Experiment configuration: `key = value` files with `#` comments,
//! unknown keys rejected, every value range-checked against the consuming
//! module. Defaults mirror the reference experiments (alpha 1e-2, T = 1,
//! N = 250, Nx = 250, CFL 0.9, seed 42).

use std::fmt;
use std::path::PathBuf;

use crowdctl_core::alignment::KernelKind;
use crowdctl_core::hydro::Closure;

/// Which experiment the harness runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Particle,
    Meanfield,
    Hydro,
    Nonlinear,
    RiccatiCheck,
}

impl Scale {
    pub fn name(&self) -> &'static str {
        match self {
            Scale::Particle => "particle",
            Scale::Meanfield => "meanfield",
            Scale::Hydro => "hydro",
            Scale::Nonlinear => "nonlinear",
            Scale::RiccatiCheck => "riccati-check",
        }
    }
}

/// A configuration problem: always names the offending key, and the line
/// when it came from a file.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(
                f,
                "config line {}: key `{}`: {}",
                line, self.key, self.message
            ),
            None => write!(f, "config key `{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        line,
        message: message.into(),
    }
}

/// Full harness configuration; field ranges are validated on assignment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scale: Option<Scale>,
    /// One or more control weights; sweeps write one series per entry.
    pub alphas: Vec<f64>,
    pub horizon_t: f64,
    pub n_particles: usize,
    pub nx: usize,
    pub seed: u64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub cfl: f64,
    pub closure: Closure,
    pub kernel_kind: KernelKind,
    pub kernel_strength: f64,
    pub kernel_gamma: f64,
    pub kernel_delta: f64,
    pub beta: f64,
    pub v_desired: f64,
    pub control_dt: f64,
    pub dt: f64,
    pub noise_low: f64,
    pub noise_high: f64,
    pub noise_in_exponent: bool,
    pub n_outputs: usize,
    pub riccati_n: Vec<usize>,
    pub riccati_steps: usize,
    pub mf_points: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scale: None,
            alphas: vec![1e-2],
            horizon_t: 1.0,
            n_particles: 250,
            nx: 250,
            seed: 42,
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            cfl: 0.9,
            closure: Closure::MonoKinetic,
            kernel_kind: KernelKind::CuckerSmale,
            kernel_strength: 1.0,
            kernel_gamma: 1.0,
            kernel_delta: 1.0,
            beta: 1e-2,
            v_desired: 0.0,
            control_dt: 0.02,
            dt: 0.005,
            noise_low: 0.0,
            noise_high: 0.2,
            noise_in_exponent: false,
            n_outputs: 100,
            riccati_n: vec![1, 2, 3, 5],
            riccati_steps: 10_000,
            mf_points: 64,
            out_dir: None,
        }
    }
}

/// Grad-closure pressure coefficients live in the config as two scalar
/// keys; this folds them into the closure enum.
#[derive(Debug, Clone, Copy)]
struct PendingClosure {
    grad: bool,
    g1: f64,
    g2: f64,
}

/// Parses configuration text (`key = value` per line, `#` comments).
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut config = ExperimentConfig::default();
    let mut closure = PendingClosure {
        grad: false,
        g1: 1.0,
        g2: 1.0,
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(line, Some(line_no), "expected `key = value`"));
        };
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut config, &mut closure, key, value, Some(line_no))?;
    }
    config.closure = if closure.grad {
        Closure::Grad {
            g1: closure.g1,
            g2: closure.g2,
        }
    } else {
        Closure::MonoKinetic
    };
    validate(&config)?;
    Ok(config)
}

fn apply_key(
    config: &mut ExperimentConfig,
    closure: &mut PendingClosure,
    key: &str,
    value: &str,
    line: Option<usize>,
) -> Result<(), ConfigError> {
    let parse_f64 = |v: &str| -> Result<f64, ConfigError> {
        v.parse::<f64>()
            .map_err(|_| err(key, line, format!("unparsable number `{v}`")))
    };
    let parse_usize = |v: &str| -> Result<usize, ConfigError> {
        v.parse::<usize>()
            .map_err(|_| err(key, line, format!("unparsable integer `{v}`")))
    };
    match key {
        "scale" => {
            config.scale = Some(match value {
                "particle" => Scale::Particle,
                "meanfield" => Scale::Meanfield,
                "hydro" => Scale::Hydro,
                "nonlinear" => Scale::Nonlinear,
                "riccati-check" => Scale::RiccatiCheck,
                other => return Err(err(key, line, format!("unknown scale `{other}`"))),
            });
        }
        "alpha" => {
            let mut alphas = Vec::new();
            for part in value.split(',') {
                let a = parse_f64(part.trim())?;
                if !(a > 0.0) || !a.is_finite() {
                    return Err(err(key, line, format!("alpha must be positive, got {a}")));
                }
                alphas.push(a);
            }
            if alphas.is_empty() {
                return Err(err(key, line, "need at least one alpha"));
            }
            config.alphas = alphas;
        }
        "horizon_t" => {
            let t = parse_f64(value)?;
            if !(t > 0.0) || !t.is_finite() {
                return Err(err(key, line, format!("horizon must be positive, got {t}")));
            }
            config.horizon_t = t;
        }
        "n_particles" => {
            let n = parse_usize(value)?;
            if n == 0 {
                return Err(err(key, line, "need at least one particle"));
            }
            config.n_particles = n;
        }
        "nx" => {
            let n = parse_usize(value)?;
            if n < 4 {
                return Err(err(key, line, format!("need at least 4 cells, got {n}")));
            }
            config.nx = n;
        }
        "seed" => {
            config.seed = value
                .parse::<u64>()
                .map_err(|_| err(key, line, format!("unparsable seed `{value}`")))?;
        }
        "abs_tol" | "rel_tol" => {
            let t = parse_f64(value)?;
            if !(t > 0.0) || !t.is_finite() {
                return Err(err(
                    key,
                    line,
                    format!("tolerance must be positive, got {t}"),
                ));
            }
            if key == "abs_tol" {
                config.abs_tol = t;
            } else {
                config.rel_tol = t;
            }
        }
        "cfl" => {
            let c = parse_f64(value)?;
            if !(c > 0.0 && c <= 1.0) {
                return Err(err(
                    key,
                    line,
                    format!("CFL number must be in (0, 1], got {c}"),
                ));
            }
            config.cfl = c;
        }
        "closure" => match value {
            "mono-kinetic" => closure.grad = false,
            "grad" => closure.grad = true,
            other => return Err(err(key, line, format!("unknown closure `{other}`"))),
        },
        "grad_g1" => {
            let g = parse_f64(value)?;
            if !(g >= 0.0) {
                return Err(err(
                    key,
                    line,
                    format!("grad g1 must be non-negative, got {g}"),
                ));
            }
            closure.g1 = g;
        }
        "grad_g2" => {
            let g = parse_f64(value)?;
            if !(1.0..=3.0).contains(&g) {
                return Err(err(
                    key,
                    line,
                    format!("grad g2 must lie in [1, 3], got {g}"),
                ));
            }
            closure.g2 = g;
        }
        "kernel" => {
            config.kernel_kind = match value {
                "cucker-smale" => KernelKind::CuckerSmale,
                "motsch-tadmor" => KernelKind::MotschTadmor,
                other => return Err(err(key, line, format!("unknown kernel `{other}`"))),
            };
        }
        "kernel_strength" => {
            let k = parse_f64(value)?;
            if !(k > 0.0) {
                return Err(err(
                    key,
                    line,
                    format!("kernel strength must be positive, got {k}"),
                ));
            }
            config.kernel_strength = k;
        }
        "kernel_gamma" => {
            let g = parse_f64(value)?;
            if !(g > 0.0) {
                return Err(err(
                    key,
                    line,
                    format!("kernel gamma must be positive, got {g}"),
                ));
            }
            config.kernel_gamma = g;
        }
        "kernel_delta" => {
            let d = parse_f64(value)?;
            if !(d >= 0.0) {
                return Err(err(
                    key,
                    line,
                    format!("kernel delta must be non-negative, got {d}"),
                ));
            }
            config.kernel_delta = d;
        }
        "beta" => {
            let b = parse_f64(value)?;
            if !(b > 0.0) {
                return Err(err(key, line, format!("beta must be positive, got {b}")));
            }
            config.beta = b;
        }
        "v_desired" => config.v_desired = parse_f64(value)?,
        "control_dt" => {
            let d = parse_f64(value)?;
            if !(d > 0.0) {
                return Err(err(
                    key,
                    line,
                    format!("control horizon must be positive, got {d}"),
                ));
            }
            config.control_dt = d;
        }
        "dt" => {
            let d = parse_f64(value)?;
            if !(d > 0.0) {
                return Err(err(key, line, format!("step must be positive, got {d}")));
            }
            config.dt = d;
        }
        "noise_low" => config.noise_low = parse_f64(value)?,
        "noise_high" => config.noise_high = parse_f64(value)?,
        "noise_in_exponent" => {
            config.noise_in_exponent = match value {
                "true" | "1" => true,
                "false" | "0" => false,
                other => {
                    return Err(err(
                        key,
                        line,
                        format!("expected true/false, got `{other}`"),
                    ))
                }
            };
        }
        "n_outputs" => {
            let n = parse_usize(value)?;
            if n == 0 {
                return Err(err(key, line, "need at least one output interval"));
            }
            config.n_outputs = n;
        }
        "riccati_n" => {
            let mut ns = Vec::new();
            for part in value.split(',') {
                let n = part
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| err(key, line, format!("unparsable integer `{part}`")))?;
                if n == 0 {
                    return Err(err(key, line, "particle counts must be at least 1"));
                }
                ns.push(n);
            }
            if ns.is_empty() {
                return Err(err(key, line, "need at least one particle count"));
            }
            config.riccati_n = ns;
        }
        "riccati_steps" => {
            let n = parse_usize(value)?;
            if n < 100 {
                return Err(err(key, line, format!("need at least 100 steps, got {n}")));
            }
            config.riccati_steps = n;
        }
        "mf_points" => {
            let n = parse_usize(value)?;
            if n == 0 || n > 2048 {
                return Err(err(
                    key,
                    line,
                    format!("point count must be in 1..=2048, got {n}"),
                ));
            }
            config.mf_points = n;
        }
        "out_dir" => config.out_dir = Some(PathBuf::from(value)),
        other => return Err(err(other, line, "unknown key")),
    }
    Ok(())
}

fn validate(config: &ExperimentConfig) -> Result<(), ConfigError> {
    if config.noise_low > config.noise_high {
        return Err(err(
            "noise_low",
            None,
            format!(
                "noise interval [{}, {}] is empty",
                config.noise_low, config.noise_high
            ),
        ));
    }
    if config.dt > config.control_dt {
        return Err(err(
            "dt",
            None,
            format!(
                "step {} exceeds the control horizon {}",
                config.dt, config.control_dt
            ),
        ));
    }
    Ok(())
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub alpha: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_particles: Option<usize>,
    pub nx: Option<usize>,
    pub horizon_t: Option<f64>,
    pub cfl: Option<f64>,
    pub closure: Option<String>,
}

pub fn apply_overrides(
    config: &mut ExperimentConfig,
    overrides: &Overrides,
) -> Result<(), ConfigError> {
    let mut pending = match config.closure {
        Closure::MonoKinetic => PendingClosure {
            grad: false,
            g1: 1.0,
            g2: 1.0,
        },
        Closure::Grad { g1, g2 } => PendingClosure { grad: true, g1, g2 },
    };
    if let Some(alpha) = &overrides.alpha {
        apply_key(config, &mut pending, "alpha", alpha, None)?;
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.out_dir = Some(out.clone());
    }
    if let Some(n) = overrides.n_particles {
        apply_key(config, &mut pending, "n_particles", &n.to_string(), None)?;
    }
    if let Some(nx) = overrides.nx {
        apply_key(config, &mut pending, "nx", &nx.to_string(), None)?;
    }
    if let Some(t) = overrides.horizon_t {
        apply_key(config, &mut pending, "horizon_t", &t.to_string(), None)?;
    }
    if let Some(c) = overrides.cfl {
        apply_key(config, &mut pending, "cfl", &c.to_string(), None)?;
    }
    if let Some(cl) = &overrides.closure {
        apply_key(config, &mut pending, "closure", cl, None)?;
    }
    config.closure = if pending.grad {
        Closure::Grad {
            g1: pending.g1,
            g2: pending.g2,
        }
    } else {
        Closure::MonoKinetic
    };
    validate(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_reference_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.alphas, vec![1e-2]);
        assert_eq!(c.horizon_t, 1.0);
        assert_eq!(c.n_particles, 250);
        assert_eq!(c.nx, 250);
        assert_eq!(c.cfl, 0.9);
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn single_override_keeps_other_defaults() {
        let c = parse_config("cfl = 0.5\n").unwrap();
        assert_eq!(c.cfl, 0.5);
        assert_eq!(c.nx, 250);
    }

    #[test]
    fn range_error_names_key_and_line() {
        let e = parse_config("# comment\nalpha = -1\n").unwrap_err();
        assert_eq!(e.key, "alpha");
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn unknown_key_rejected() {
        let e = parse_config("alhpa = 1\n").unwrap_err();
        assert_eq!(e.key, "alhpa");
        assert!(e.message.contains("unknown key"));
    }

    #[test]
    fn alpha_sweep_and_closure() {
        let c = parse_config("alpha = 1e-2, 1e-3 ,1e-4\nclosure = grad\ngrad_g2 = 2\n").unwrap();
        assert_eq!(c.alphas, vec![1e-2, 1e-3, 1e-4]);
        assert_eq!(c.closure, Closure::Grad { g1: 1.0, g2: 2.0 });
    }

    #[test]
    fn overrides_win() {
        let mut c = parse_config("seed = 1\nalpha = 1\n").unwrap();
        let o = Overrides {
            alpha: Some("1e-3".into()),
            seed: Some(7),
            ..Default::default()
        };
        apply_overrides(&mut c, &o).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.alphas, vec![1e-3]);
    }

    #[test]
    fn cross_field_validation() {
        assert!(parse_config("noise_low = 0.5\nnoise_high = 0.1\n").is_err());
        assert!(parse_config("dt = 0.05\ncontrol_dt = 0.01\n").is_err());
    }
}
