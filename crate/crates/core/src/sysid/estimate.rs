use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::likelihood::{negative_log_likelihood_multi, FilterSetup};
use super::nelder_mead::{minimize, NelderMeadOptions};
use super::Dataset;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{stream, Stream};

/// A parameter that the estimator may adjust. Density and gravity are never
/// estimated and have no variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    OutletArea(usize),
    TankArea(usize),
    Valve(usize),
    Diffusion(usize),
}

impl Param {
    pub fn get(&self, p: &ModelParams) -> f64 {
        match *self {
            Param::OutletArea(i) => p.outlet_area[i],
            Param::TankArea(i) => p.tank_area[i],
            Param::Valve(j) => p.gamma[j],
            Param::Diffusion(i) => p.sigma[i],
        }
    }

    pub fn set(&self, p: &mut ModelParams, v: f64) {
        match *self {
            Param::OutletArea(i) => p.outlet_area[i] = v,
            Param::TankArea(i) => p.tank_area[i] = v,
            Param::Valve(j) => p.gamma[j] = v,
            Param::Diffusion(i) => p.sigma[i] = v,
        }
    }

    pub fn default_bounds(&self) -> (f64, f64) {
        match self {
            Param::OutletArea(_) => (0.05, 20.0),
            Param::TankArea(_) => (10.0, 5000.0),
            Param::Valve(_) => (1e-3, 1.0 - 1e-3),
            Param::Diffusion(_) => (1e-6, 1e3),
        }
    }

    /// Unconstrained coordinate: logit for valve fractions, log otherwise.
    fn to_free(self, v: f64) -> f64 {
        match self {
            Param::Valve(_) => (v / (1.0 - v)).ln(),
            _ => v.ln(),
        }
    }

    fn from_free(self, z: f64) -> f64 {
        match self {
            Param::Valve(_) => 1.0 / (1.0 + (-z).exp()),
            _ => z.exp(),
        }
    }

    /// Expands `a`, `A`, `gamma`, `sigma` or a single name such as `a3`.
    pub fn parse_group(s: &str) -> Result<Vec<Param>> {
        let all = |f: fn(usize) -> Param, n: usize| (0..n).map(f).collect::<Vec<_>>();
        match s {
            "a" => Ok(all(Param::OutletArea, 4)),
            "A" => Ok(all(Param::TankArea, 4)),
            "gamma" => Ok(all(Param::Valve, 2)),
            "sigma" => Ok(all(Param::Diffusion, 4)),
            single => single.parse().map(|p| vec![p]),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::OutletArea(i) => write!(f, "a{}", i + 1),
            Param::TankArea(i) => write!(f, "A{}", i + 1),
            Param::Valve(j) => write!(f, "gamma{}", j + 1),
            Param::Diffusion(i) => write!(f, "sigma{}", i + 1),
        }
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
        let (name, idx) = s.split_at(split);
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::Config(format!("parameter `{s}` needs a 1-based index")))?;
        let (ctor, n): (fn(usize) -> Param, usize) = match name {
            "a" => (Param::OutletArea, 4),
            "A" => (Param::TankArea, 4),
            "gamma" => (Param::Valve, 2),
            "sigma" => (Param::Diffusion, 4),
            "rho" | "g_a" => {
                return Err(Error::Config(format!(
                    "`{name}` is a physical constant and is never estimated"
                )))
            }
            _ => return Err(Error::Config(format!("unknown parameter `{s}`"))),
        };
        if idx == 0 || idx > n {
            return Err(Error::Config(format!(
                "parameter `{s}` index out of range 1..={n}"
            )));
        }
        Ok(ctor(idx - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationOptions {
    /// Number of simplex starts; the first is `θ₀` itself.
    pub starts: usize,
    /// Standard deviation of the start perturbations in free coordinates.
    pub perturbation: f64,
    pub nelder_mead: NelderMeadOptions,
    pub seed: u64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            starts: 3,
            perturbation: 0.1,
            nelder_mead: NelderMeadOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    /// Independent experiments; the filter restarts on each.
    pub data: Vec<Dataset>,
    pub free: Vec<Param>,
    pub theta0: ModelParams,
    /// One `(lower, upper)` pair per free parameter.
    pub bounds: Vec<(f64, f64)>,
    pub setup: FilterSetup,
    pub options: EstimationOptions,
}

impl EstimationProblem {
    /// Problem with default bounds and options.
    pub fn new(data: Vec<Dataset>, free: Vec<Param>, theta0: ModelParams) -> Self {
        let bounds = free.iter().map(Param::default_bounds).collect();
        Self {
            data,
            free,
            theta0,
            bounds,
            setup: FilterSetup::default(),
            options: EstimationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub evals: usize,
    /// Best objective after each simplex iteration of the winning start.
    pub best_trace: Vec<f64>,
    /// Final objective of every start.
    pub start_values: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta: ModelParams,
    pub v_ml: f64,
    pub diagnostics: Diagnostics,
}

/// Maximum-likelihood estimate by multi-start Nelder–Mead in transformed
/// coordinates. Box bounds are enforced by clamping the free coordinates.
pub fn estimate_parameters(problem: &EstimationProblem) -> Result<Estimate> {
    let free = &problem.free;
    if problem.bounds.len() != free.len() {
        return Err(Error::InvalidArgument(format!(
            "{} bounds for {} free parameters",
            problem.bounds.len(),
            free.len()
        )));
    }
    problem.theta0.validate()?;
    for (p, (lo, hi)) in free.iter().zip(&problem.bounds) {
        let v = p.get(&problem.theta0);
        if !(lo < hi) || v < *lo || v > *hi {
            return Err(Error::InvalidArgument(format!(
                "initial {p} = {v} is outside its bounds [{lo}, {hi}]"
            )));
        }
    }

    let z_bounds: Vec<(f64, f64)> = free
        .iter()
        .zip(&problem.bounds)
        .map(|(p, (lo, hi))| (p.to_free(*lo), p.to_free(*hi)))
        .collect();
    let theta_at = |z: &[f64]| {
        let mut theta = problem.theta0;
        for ((p, (lo, hi)), zi) in free.iter().zip(&z_bounds).zip(z) {
            p.set(&mut theta, p.from_free(zi.clamp(*lo, *hi)));
        }
        theta
    };
    let objective = |z: &[f64]| -> f64 {
        match negative_log_likelihood_multi(&theta_at(z), &problem.data, &problem.setup) {
            Ok(l) if l.is_finite() => l.value,
            _ => f64::INFINITY,
        }
    };

    let z0: Vec<f64> = free
        .iter()
        .map(|p| p.to_free(p.get(&problem.theta0)))
        .collect();
    if free.is_empty() {
        let v = objective(&z0);
        if !v.is_finite() {
            return Err(Error::Estimation(
                "objective is not finite at the initial guess".into(),
            ));
        }
        return Ok(Estimate {
            theta: problem.theta0,
            v_ml: v,
            diagnostics: Diagnostics {
                evals: 1,
                best_trace: vec![v],
                start_values: vec![v],
                converged: true,
            },
        });
    }

    let mut rng = stream(problem.options.seed, Stream::MultiStart);
    let mut starts = vec![z0.clone()];
    for _ in 1..problem.options.starts.max(1) {
        starts.push(
            z0.iter()
                .zip(&z_bounds)
                .map(|(z, (lo, hi))| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    (z + problem.options.perturbation * xi).clamp(*lo, *hi)
                })
                .collect(),
        );
    }

    let nm = problem.options.nelder_mead;
    let mut evals = 0;
    let mut start_values = Vec::new();
    let mut best: Option<(Vec<f64>, f64, Vec<f64>, bool)> = None;
    for start in &starts {
        let (z, v, trace, converged, used) = restarted_simplex(&objective, start, &nm);
        evals += used;
        start_values.push(v);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((z, v, trace, converged));
        }
    }
    let (z, v, trace, converged) = best.expect("at least one start");
    if !v.is_finite() {
        return Err(Error::Estimation(format!(
            "all {evals} likelihood evaluations were non-finite"
        )));
    }
    Ok(Estimate {
        theta: theta_at(&z),
        v_ml: v,
        diagnostics: Diagnostics {
            evals,
            best_trace: trace,
            start_values,
            converged,
        },
    })
}

/// Runs the simplex and restarts it from its own optimum until a restart no
/// longer improves or the evaluation budget is spent.
fn restarted_simplex<F>(
    f: &F,
    start: &[f64],
    opts: &NelderMeadOptions,
) -> (Vec<f64>, f64, Vec<f64>, bool, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let mut used = 0;
    let mut x = start.to_vec();
    let mut value = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut step = opts.initial_step;
    while used < opts.max_evals {
        let run_opts = NelderMeadOptions {
            initial_step: step,
            max_evals: opts.max_evals - used,
            ..*opts
        };
        let r = minimize(f, &x, &run_opts);
        used += r.evals;
        trace.extend(r.trace.iter().map(|v| v.min(value)));
        let improved = r.value < value - 1e-9 * value.abs().max(1.0);
        if r.value < value {
            value = r.value;
            x = r.x;
        }
        converged = r.converged;
        if !r.converged || !improved {
            break;
        }
        step = (step * 0.5).max(10.0 * opts.diameter_tol);
    }
    (x, value, trace, converged, used)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names_and_groups() {
        assert_eq!("a3".parse::<Param>().unwrap(), Param::OutletArea(2));
        assert_eq!("gamma2".parse::<Param>().unwrap(), Param::Valve(1));
        assert_eq!(Param::parse_group("sigma").unwrap().len(), 4);
        assert!("rho".parse::<Param>().is_err());
        assert!("g_a1".parse::<Param>().is_err());
        assert!("gamma3".parse::<Param>().is_err());
        assert_eq!(Param::TankArea(3).to_string(), "A4");
    }

    #[test]
    fn transforms_invert() {
        for (p, v) in [
            (Param::Valve(0), 0.26),
            (Param::OutletArea(1), 1.249),
            (Param::Diffusion(3), 1e-4),
        ] {
            assert!((p.from_free(p.to_free(v)) - v).abs() < 1e-14);
        }
    }
}
