//! Exact Gaussian-process regression over unit-cube inputs.
//!
//! Targets are standardized before fitting, so the prior mean is zero in
//! standardized space. The kernel is an isotropic squared exponential whose
//! length scale is picked from a fixed grid by exact log marginal likelihood.
//! The kernel family and grid are stand-ins: nothing upstream pins them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const DEFAULT_LENGTH_SCALES: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.5, 1.0];
const STD_FLOOR: f64 = 1e-12;
const JITTER_LADDER: [f64; 3] = [1e-6, 1e-4, 1e-2];

#[derive(Debug, Clone, PartialEq)]
pub struct GpSettings {
    /// Candidate length scales; a single entry fixes the length scale.
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self {
            length_scales: DEFAULT_LENGTH_SCALES.to_vec(),
            signal_variance: 1.0,
            noise_variance: 1e-6,
        }
    }
}

impl GpSettings {
    pub fn fixed(length_scale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            length_scales: vec![length_scale],
            signal_variance,
            noise_variance,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpState {
    train_inputs: Vec<Vec<f64>>,
    train_targets: Vec<f64>,
    length_scale: f64,
    signal_variance: f64,
    noise_variance: f64,
    /// Extra diagonal added beyond `noise_variance` to make the factorization succeed.
    jitter: f64,
    target_mean: f64,
    target_std: f64,
    log_marginal_likelihood: f64,
    cholesky: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_unit(u: &[f64], dim: usize) -> Result<()> {
    if u.len() != dim {
        return Err(Error::Domain(format!("query has {} components, expected {dim}", u.len())));
    }
    if u.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("non-finite query coordinate".into()));
    }
    Ok(())
}

struct Factorized {
    cholesky: Cholesky<f64, Dyn>,
    jitter: f64,
}

fn factorize(sq: &DMatrix<f64>, length_scale: f64, signal: f64, noise: f64) -> Option<Factorized> {
    let n = sq.nrows();
    let inv = -0.5 / (length_scale * length_scale);
    let base = DMatrix::from_fn(n, n, |i, j| signal * (sq[(i, j)] * inv).exp());
    for jitter in std::iter::once(0.0).chain(JITTER_LADDER) {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += noise + jitter;
        }
        if let Some(cholesky) = k.cholesky() {
            return Some(Factorized { cholesky, jitter });
        }
    }
    None
}

impl GpState {
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], settings: &GpSettings) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Domain("cannot fit a GP without observations".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Domain(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let dim = inputs[0].len();
        for u in inputs {
            check_unit(u, dim)?;
            if u.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Domain("training input outside the unit cube".into()));
            }
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::Domain("non-finite training target".into()));
        }
        if settings.length_scales.is_empty() {
            return Err(Error::Settings("empty length-scale grid".into()));
        }

        let n = inputs.len();
        let target_mean = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|y| (y - target_mean).powi(2)).sum::<f64>() / n as f64;
        let target_std = var.sqrt().max(STD_FLOOR);
        let y = DVector::from_iterator(n, targets.iter().map(|t| (t - target_mean) / target_std));
        let sq = DMatrix::from_fn(n, n, |i, j| sq_dist(&inputs[i], &inputs[j]));

        let mut grid = settings.length_scales.clone();
        grid.sort_by(f64::total_cmp);

        let mut best: Option<(f64, f64, Factorized, DVector<f64>)> = None;
        for &ls in &grid {
            let Some(fact) = factorize(&sq, ls, settings.signal_variance, settings.noise_variance)
            else {
                continue;
            };
            let alpha = fact.cholesky.solve(&y);
            let log_det: f64 = fact.cholesky.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
            let lml = -0.5 * y.dot(&alpha)
                - log_det
                - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            // strict comparison keeps the smaller length scale on ties
            if best.as_ref().is_none_or(|(_, b, _, _)| lml > *b) {
                best = Some((ls, lml, fact, alpha));
            }
        }
        let (length_scale, lml, fact, alpha) = best.ok_or_else(|| {
            Error::Numerical("Cholesky factorization failed for every length scale after jitter".into())
        })?;

        Ok(Self {
            train_inputs: inputs.to_vec(),
            train_targets: y.iter().copied().collect(),
            length_scale,
            signal_variance: settings.signal_variance,
            noise_variance: settings.noise_variance,
            jitter: fact.jitter,
            target_mean,
            target_std,
            log_marginal_likelihood: lml,
            cholesky: fact.cholesky,
            alpha,
        })
    }

    fn kernel_vector(&self, u: &[f64]) -> Vec<f64> {
        let inv = -0.5 / (self.length_scale * self.length_scale);
        self.train_inputs
            .iter()
            .map(|x| self.signal_variance * (sq_dist(x, u) * inv).exp())
            .collect()
    }

    /// Mean and variance in standardized target units.
    pub fn posterior_standardized(&self, u: &[f64]) -> Result<(f64, f64)> {
        check_unit(u, self.dim())?;
        let k = self.kernel_vector(u);
        let mean: f64 = k.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum();

        // forward substitution L v = k, column-major sweep
        let n = k.len();
        let l = self.cholesky.l_dirty().as_slice();
        let mut v = k;
        for j in 0..n {
            let col = &l[j * n..(j + 1) * n];
            let vj = v[j] / col[j];
            v[j] = vj;
            for (vi, lij) in v[j + 1..].iter_mut().zip(&col[j + 1..]) {
                *vi -= lij * vj;
            }
        }
        let explained: f64 = v.iter().map(|x| x * x).sum();
        let mut var = self.signal_variance - explained;
        if var < 0.0 {
            if var < -1e-10 {
                log::debug!("posterior variance {var} clamped to zero");
            }
            var = 0.0;
        }
        Ok((mean, var))
    }

    /// Unstandardized posterior mean and variance of the objective at `u`.
    pub fn posterior(&self, u: &[f64]) -> Result<(f64, f64)> {
        let (m, v) = self.posterior_standardized(u)?;
        Ok((
            self.target_mean + self.target_std * m,
            v * self.target_std * self.target_std,
        ))
    }

    pub fn dim(&self) -> usize {
        self.train_inputs[0].len()
    }

    pub fn len(&self) -> usize {
        self.train_inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_inputs.is_empty()
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_std(&self) -> f64 {
        self.target_std
    }

    pub fn standardized_targets(&self) -> &[f64] {
        &self.train_targets
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Prior variance in objective units.
    pub fn prior_variance(&self) -> f64 {
        self.signal_variance * self.target_std * self.target_std
    }
}
