//! Tuning strategies: sequential constrained BO, the asynchronous centralized
//! driver with Kriging-Believer placeholders, the independent-agent ensemble,
//! and a random-search baseline.

mod engine;
mod ensemble;
mod history;
mod pamaliboo;
mod random;
mod sequential;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use ensemble::{agent_settings, min_trace, run_emaliboo};
pub use history::{History, HistoryEntry};
pub use pamaliboo::{run_pamaliboo, AsyncDriver, StepOutcome};
pub use random::run_random;
pub use sequential::{run_sequential, run_sequential_with};

use crate::acquisition::{DEFAULT_GATE_PENALTY, DEFAULT_RESTARTS};
use crate::constraint::{ErrorInjector, MapeTracker, DEFAULT_RIDGE_ALPHA, DEFAULT_TRAINING_PERIOD};
use crate::error::{Error, Result};
use crate::executor::{
    Executor, JobId, LocalExecutor, VirtualExecutor, DEFAULT_OVERHEAD_SECONDS, DEFAULT_POLLING_SECONDS,
    DEFAULT_WORKERS,
};
use crate::gp::GpSettings;
use crate::knobspace::{Configuration, KnobSpace};
use crate::target::{Target, DEFAULT_RMSD_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sequential,
    Pamaliboo,
    Emaliboo,
    Random,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Sequential => "sequential",
            Strategy::Pamaliboo => "pamaliboo",
            Strategy::Emaliboo => "emaliboo",
            Strategy::Random => "random",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Strategy::Sequential),
            "pamaliboo" => Ok(Strategy::Pamaliboo),
            "emaliboo" => Ok(Strategy::Emaliboo),
            "random" => Ok(Strategy::Random),
            other => Err(Error::Settings(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Virtual,
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSettings {
    /// Total evaluations, initial design included.
    pub total_iterations: usize,
    pub initial_points: usize,
    pub workers: usize,
    pub training_period: usize,
    pub polling_seconds: f64,
    /// Driver compute charged per model-guided selection (virtual backend).
    pub overhead_seconds: f64,
    pub rmsd_max: f64,
    pub seed: u64,
    pub restarts: usize,
    pub gate_penalty: f64,
    pub ridge_alpha: f64,
    pub error_injection: ErrorInjector,
    pub gp: GpSettings,
    pub backend: Backend,
    /// Label written to transcripts; ensemble members get their index.
    pub agent_id: usize,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        Self {
            total_iterations: 1000,
            initial_points: 30,
            workers: DEFAULT_WORKERS,
            training_period: DEFAULT_TRAINING_PERIOD,
            polling_seconds: DEFAULT_POLLING_SECONDS,
            overhead_seconds: DEFAULT_OVERHEAD_SECONDS,
            rmsd_max: DEFAULT_RMSD_MAX,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            gate_penalty: DEFAULT_GATE_PENALTY,
            ridge_alpha: DEFAULT_RIDGE_ALPHA,
            error_injection: ErrorInjector::default(),
            gp: GpSettings::default(),
            backend: Backend::Virtual,
            agent_id: 0,
        }
    }
}

impl CampaignSettings {
    /// Every violated constraint, for the given strategy.
    pub fn diagnostics(&self, strategy: Strategy) -> Vec<String> {
        let mut out = Vec::new();
        if self.workers == 0 {
            out.push("workers (q) must be at least 1".to_string());
        }
        if self.training_period == 0 {
            out.push("training period P must be positive".to_string());
        }
        if !(self.rmsd_max > 0.0) {
            out.push(format!("rmsd_max must be positive, got {}", self.rmsd_max));
        }
        if self.total_iterations == 0 {
            out.push("total iterations N must be positive".to_string());
        }
        if self.initial_points == 0 {
            out.push("initial points n0 must be positive".to_string());
        }
        if self.initial_points > self.total_iterations {
            out.push(format!(
                "initial points n0 = {} exceed total iterations N = {}",
                self.initial_points, self.total_iterations
            ));
        }
        if self.restarts == 0 {
            out.push("acquisition restarts must be at least 1".to_string());
        }
        if !(self.gate_penalty > 0.0 && self.gate_penalty <= 1.0) {
            out.push(format!("gate penalty must lie in (0, 1], got {}", self.gate_penalty));
        }
        if !(self.ridge_alpha > 0.0) {
            out.push(format!("ridge alpha must be positive, got {}", self.ridge_alpha));
        }
        if self.polling_seconds < 0.0 || self.overhead_seconds < 0.0 {
            out.push("polling and overhead seconds must be non-negative".to_string());
        }
        if self.error_injection.enabled && self.error_injection.epsilon0 <= 0.0 {
            out.push("error injection epsilon0 must be positive".to_string());
        }
        if strategy == Strategy::Emaliboo && self.workers > 0 {
            if self.total_iterations % self.workers != 0 {
                out.push(format!(
                    "N = {} is not divisible by q = {}",
                    self.total_iterations, self.workers
                ));
            }
            if self.initial_points % self.workers != 0 {
                out.push(format!(
                    "n0 = {} is not divisible by q = {}",
                    self.initial_points, self.workers
                ));
            }
        }
        out
    }

    pub fn check(&self, strategy: Strategy) -> Result<()> {
        let diags = self.diagnostics(strategy);
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::Settings(diags.join("; ")))
        }
    }
}

/// Builds an executor for `settings.backend` with `workers` slots.
pub fn make_executor(
    settings: &CampaignSettings,
    target: Arc<dyn Target>,
    workers: usize,
) -> Result<Box<dyn Executor + Send>> {
    Ok(match settings.backend {
        Backend::Virtual => Box::new(VirtualExecutor::new(
            target,
            workers,
            settings.polling_seconds,
            settings.overhead_seconds,
        )?),
        Backend::Local => Box::new(LocalExecutor::new(
            target,
            workers,
            Duration::from_secs_f64(settings.polling_seconds),
        )?),
    })
}

/// Driver-side record of what happened, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriverEvent {
    Retrained {
        iteration: usize,
        time: f64,
        train_count: usize,
    },
    Submitted {
        iteration: usize,
        job: JobId,
        time: f64,
        config: Configuration,
        placeholder_mean: f64,
        /// Constraint estimate used by the gate, when a model was trained.
        predicted_constraint: Option<f64>,
        running_after: usize,
        placeholders_after: usize,
    },
    Completed {
        job: JobId,
        time: f64,
        failed: bool,
    },
    Waited {
        from: f64,
        to: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestConfiguration {
    pub config: Configuration,
    pub objective: f64,
    pub constraint_value: Option<f64>,
    /// False when no feasible configuration was observed.
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time: f64,
    pub best_feasible: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignResult {
    pub strategy: Strategy,
    #[serde(skip)]
    pub space: KnobSpace,
    pub seed: u64,
    pub history: Vec<HistoryEntry>,
    /// Best feasible objective at each time it improved.
    pub incumbent_trace: Vec<TracePoint>,
    pub mape: MapeTracker,
    /// Ensemble members, empty for single-agent strategies.
    pub agents: Vec<CampaignResult>,
    pub best: Option<BestConfiguration>,
    pub events: Vec<DriverEvent>,
    pub failures: usize,
    pub end_time: f64,
    pub max_running: usize,
}

impl CampaignResult {
    pub fn final_feasible_objective(&self) -> Option<f64> {
        self.incumbent_trace.last().map(|p| p.best_feasible)
    }

    /// Incumbent value in effect at `time`, if any feasible point was seen by then.
    pub fn incumbent_at(&self, time: f64) -> Option<f64> {
        incumbent_at(&self.incumbent_trace, time)
    }
}

pub(crate) fn incumbent_at(trace: &[TracePoint], time: f64) -> Option<f64> {
    trace.iter().take_while(|p| p.time <= time).last().map(|p| p.best_feasible)
}

/// Step trace of the running best feasible objective, ordered by completion time.
pub fn incumbent_trace(history: &[HistoryEntry]) -> Vec<TracePoint> {
    let mut rows: Vec<(f64, f64)> = history
        .iter()
        .filter(|e| !e.is_placeholder && e.feasible)
        .filter_map(|e| e.complete_time.map(|t| (t, e.objective)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<TracePoint> = Vec::new();
    for (time, f) in rows {
        match out.last() {
            Some(last) if f >= last.best_feasible => {}
            Some(last) if last.time == time => {
                out.last_mut().expect("non-empty").best_feasible = f;
            }
            _ => out.push(TracePoint { time, best_feasible: f }),
        }
    }
    out
}

/// Argmin over true feasible entries, else over all true entries with the flag cleared.
pub fn estimated_optimum(history: &[HistoryEntry]) -> Option<BestConfiguration> {
    let argmin = |feasible_only: bool| {
        history
            .iter()
            .filter(|e| !e.is_placeholder && (!feasible_only || e.feasible))
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
    };
    let (entry, feasible) = match argmin(true) {
        Some(e) => (e, true),
        None => (argmin(false)?, false),
    };
    Some(BestConfiguration {
        config: entry.config.clone(),
        objective: entry.objective,
        constraint_value: entry.constraint_value,
        feasible,
    })
}

/// SplitMix64 mixing of a campaign seed with a stream and a counter.
pub fn derive_seed(seed: u64, stream: u64, counter: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(counter.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) const STREAM_ACQUISITION: u64 = 1;
