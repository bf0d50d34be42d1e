//! Online ridge estimator of the constrained metric, its error-injection
//! wrapper, and the MAPE bookkeeping on newly chosen configurations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RIDGE_ALPHA: f64 = 1.0;
pub const DEFAULT_TRAINING_PERIOD: usize = 3;

/// Linear model `g(x) = w·x + b` fit by ridge regression with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub ridge_alpha: f64,
    pub trained: bool,
    pub train_count: usize,
}

impl ConstraintModel {
    pub fn untrained(alpha: f64) -> Self {
        Self {
            weights: Vec::new(),
            intercept: 0.0,
            ridge_alpha: alpha,
            trained: false,
            train_count: 0,
        }
    }

    /// Fits on `(features, value)` rows. Fewer than two rows leaves the model untrained.
    pub fn train(observations: &[(Vec<f64>, f64)], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Settings(format!("ridge alpha must be positive, got {alpha}")));
        }
        if observations.len() < 2 {
            return Ok(Self::untrained(alpha));
        }
        let n = observations.len();
        let p = observations[0].0.len();
        if observations.iter().any(|(f, _)| f.len() != p) {
            return Err(Error::Domain("inconsistent constraint feature length".into()));
        }

        // centering removes the intercept from the penalized system
        let x_mean: Vec<f64> = (0..p)
            .map(|k| observations.iter().map(|(f, _)| f[k]).sum::<f64>() / n as f64)
            .collect();
        let y_mean = observations.iter().map(|(_, y)| y).sum::<f64>() / n as f64;
        let xc = DMatrix::from_fn(n, p, |i, k| observations[i].0[k] - x_mean[k]);
        let yc = DVector::from_iterator(n, observations.iter().map(|(_, y)| y - y_mean));

        let mut gram = xc.tr_mul(&xc);
        for k in 0..p {
            gram[(k, k)] += alpha;
        }
        let rhs = xc.tr_mul(&yc);
        let w = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge normal equations not positive definite".into()))?
            .solve(&rhs);
        let weights: Vec<f64> = w.iter().copied().collect();
        let intercept = y_mean - weights.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
        Ok(Self {
            weights,
            intercept,
            ridge_alpha: alpha,
            trained: true,
            train_count: n,
        })
    }

    pub fn predict_raw(&self, features: &[f64]) -> Result<f64> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        if features.len() != self.weights.len() {
            return Err(Error::Domain(format!(
                "expected {} constraint features, got {}",
                self.weights.len(),
                features.len()
            )));
        }
        Ok(self.intercept + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>())
    }

    /// Prediction as seen by the acquisition gate, scaled by the injector when enabled.
    pub fn predict(&self, features: &[f64], injector: &ErrorInjector, iteration: usize) -> Result<f64> {
        let g = self.predict_raw(features)?;
        if injector.enabled {
            Ok(g * injector.factor(iteration))
        } else {
            Ok(g)
        }
    }
}

/// Multiplicative prediction error decaying linearly from `epsilon0` to 1 over `n_err` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorInjector {
    pub enabled: bool,
    pub epsilon0: f64,
    pub n_err: usize,
}

impl Default for ErrorInjector {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon0: 1.5,
            n_err: 50,
        }
    }
}

impl ErrorInjector {
    pub fn enabled(epsilon0: f64, n_err: usize) -> Self {
        Self {
            enabled: true,
            epsilon0,
            n_err,
        }
    }

    pub fn factor(&self, iteration: usize) -> f64 {
        if self.n_err == 0 {
            return 1.0;
        }
        let progress = iteration.min(self.n_err) as f64;
        self.epsilon0 - (self.epsilon0 - 1.0) * progress / self.n_err as f64
    }
}

/// A prediction taken at selection time, awaiting its observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub iteration: usize,
    pub predicted: f64,
    pub predicted_at: f64,
    /// Number of true observations the predicting model was trained on.
    pub trained_on: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeRecord {
    pub iteration: usize,
    pub predicted: f64,
    pub observed: f64,
    pub ape: f64,
    pub predicted_at: f64,
    pub observed_at: f64,
    pub trained_on: usize,
    /// Position of the observation among true observations, in arrival order.
    pub observation_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapeTracker {
    pub records: Vec<MapeRecord>,
}

impl MapeTracker {
    /// Appends the absolute percentage error; skipped when `observed == 0`.
    pub fn record(
        &mut self,
        prediction: Prediction,
        observed: f64,
        observed_at: f64,
        observation_index: usize,
    ) -> Option<f64> {
        if observed == 0.0 {
            log::warn!("iteration {}: observed constraint is zero, APE skipped", prediction.iteration);
            return None;
        }
        let ape = (prediction.predicted - observed).abs() / observed.abs();
        self.records.push(MapeRecord {
            iteration: prediction.iteration,
            predicted: prediction.predicted,
            observed,
            ape,
            predicted_at: prediction.predicted_at,
            observed_at,
            trained_on: prediction.trained_on,
            observation_index,
        });
        Some(ape)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.records.is_empty() {
            None
        } else {
            Some(self.records.iter().map(|r| r.ape).sum::<f64>() / self.records.len() as f64)
        }
    }

    pub fn series(&self) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.iteration, r.ape)).collect()
    }
}
