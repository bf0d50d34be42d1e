//! Expected Improvement, the constraint-gated acquisition, and its
//! maximization by multi-restart Nelder-Mead over the unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use crate::constraint::{ConstraintModel, ErrorInjector};
use crate::error::{Error, Result};
use crate::gp::GpState;
use crate::knobspace::{Configuration, KnobSpace};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_GATE_PENALTY: f64 = 1e-3;

const SIGMA_FLOOR: f64 = 1e-12;
const NEGATIVE_VARIANCE_TOL: f64 = 1e-10;

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// EI for minimization. Zero when the posterior is (numerically) certain.
pub fn expected_improvement(mean: f64, variance: f64, incumbent: f64) -> Result<f64> {
    if variance < -NEGATIVE_VARIANCE_TOL {
        return Err(Error::Numerical(format!("negative posterior variance {variance}")));
    }
    let sigma = variance.max(0.0).sqrt();
    if sigma < SIGMA_FLOOR {
        return Ok(0.0);
    }
    let gap = incumbent - mean;
    let z = gap / sigma;
    Ok((gap * std_normal_cdf(z) + sigma * std_normal_pdf(z)).max(0.0))
}

/// Closed interval `[min, max]` for the constrained metric; ends may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleInterval {
    pub min: f64,
    pub max: f64,
}

impl FeasibleInterval {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if min.is_nan() || max.is_nan() || min > max {
            return Err(Error::Domain(format!("invalid feasible interval [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn at_most(max: f64) -> Self {
        Self {
            min: f64::NEG_INFINITY,
            max,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Constraint estimate plumbing for the gate.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintGate<'a> {
    pub model: &'a ConstraintModel,
    pub injector: &'a ErrorInjector,
    pub iteration: usize,
    pub interval: FeasibleInterval,
    pub penalty: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct AcquisitionContext<'a> {
    pub gp: &'a GpState,
    pub space: &'a KnobSpace,
    pub incumbent: f64,
    pub gate: Option<ConstraintGate<'a>>,
}

impl AcquisitionContext<'_> {
    /// `EI(u) * gate(u)`; the gate is 1 when no trained model is available.
    pub fn evaluate(&self, u: &[f64]) -> Result<f64> {
        let (mean, var) = self.gp.posterior(u)?;
        let ei = expected_improvement(mean, var, self.incumbent)?;
        Ok(ei * self.gate_factor(u)?)
    }

    pub fn gate_factor(&self, u: &[f64]) -> Result<f64> {
        let Some(gate) = &self.gate else {
            return Ok(1.0);
        };
        let x = self.space.denormalize_round(u)?;
        let features = self.space.quality_features(&x)?;
        match gate.model.predict(&features, gate.injector, gate.iteration) {
            Ok(g) if gate.interval.contains(g) => Ok(1.0),
            Ok(_) => Ok(gate.penalty),
            Err(Error::Untrained) => {
                log::warn!("constraint model untrained; acquisition falls back to plain EI");
                Ok(1.0)
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadSettings {
    pub initial_edge: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_iterations: usize,
    pub diameter_tol: f64,
}

impl Default for NelderMeadSettings {
    fn default() -> Self {
        Self {
            initial_edge: 0.1,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_iterations: 200,
            diameter_tol: 1e-4,
        }
    }
}

fn clamp_unit(x: &mut [f64]) {
    for c in x {
        *c = c.clamp(0.0, 1.0);
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..simplex.len() {
        for j in i + 1..simplex.len() {
            let s: f64 = simplex[i]
                .iter()
                .zip(&simplex[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d = d.max(s.sqrt());
        }
    }
    d
}

/// Minimizes `f` inside the unit cube from `start`; vertices are clamped to the cube.
pub fn nelder_mead<F>(f: &mut F, start: &[f64], settings: &NelderMeadSettings) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut origin = start.to_vec();
    clamp_unit(&mut origin);
    simplex.push(origin.clone());
    for k in 0..d {
        let mut v = origin.clone();
        // step inward when the edge would leave the cube
        v[k] = if v[k] + settings.initial_edge <= 1.0 {
            v[k] + settings.initial_edge
        } else {
            v[k] - settings.initial_edge
        };
        clamp_unit(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect::<Result<_>>()?;

    for _ in 0..settings.max_iterations {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) < settings.diameter_tol {
            break;
        }

        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|v| v[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            clamp_unit(&mut p);
            p
        };

        let reflected = along(settings.reflection);
        let fr = f(&reflected)?;
        if fr < values[0] {
            let expanded = along(settings.reflection * settings.expansion);
            let fe = f(&expanded)?;
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
            continue;
        }
        if fr < values[d] {
            let outside = along(settings.reflection * settings.contraction);
            let fo = f(&outside)?;
            if fo <= fr {
                simplex[d] = outside;
                values[d] = fo;
                continue;
            }
        } else {
            let inside = along(-settings.contraction);
            let fi = f(&inside)?;
            if fi < values[d] {
                simplex[d] = inside;
                values[d] = fi;
                continue;
            }
        }
        // shrink toward the best vertex
        for i in 1..=d {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + settings.shrink * (v - b))
                .collect();
            simplex[i] = shrunk;
            values[i] = f(&simplex[i])?;
        }
    }

    let best = (0..=d)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is never empty");
    Ok((simplex[best].clone(), values[best]))
}

/// Best unit-cube point found by [`maximize`], before rounding.
#[derive(Debug, Clone)]
pub struct Maximum {
    pub point: Vec<f64>,
    pub value: f64,
    pub restart: usize,
}

/// Maximizes an arbitrary acquisition over the unit cube with seeded restarts.
pub fn maximize_fn<F>(mut acquisition: F, dim: usize, restarts: usize, seed: u64, nm: &NelderMeadSettings) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let restarts = restarts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..restarts)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut best: Option<Maximum> = None;
    for (restart, start) in starts.iter().enumerate() {
        let mut neg = |u: &[f64]| acquisition(u).map(|a| -a);
        let (point, neg_value) = nelder_mead(&mut neg, start, nm)?;
        let value = -neg_value;
        // a later restart must beat the incumbent by more than 1e-12 to win
        if best.as_ref().is_none_or(|b| value > b.value + 1e-12) {
            best = Some(Maximum { point, value, restart });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Maximizes the gated acquisition and rounds the best vertex onto the lattice.
pub fn maximize(ctx: &AcquisitionContext<'_>, restarts: usize, seed: u64) -> Result<Configuration> {
    let best = maximize_fn(|u| ctx.evaluate(u), ctx.space.dim(), restarts, seed, &NelderMeadSettings::default())?;
    ctx.space.denormalize_round(&best.point)
}
