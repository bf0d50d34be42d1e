//! Campaign configuration, validation and the multi-seed runner that writes
//! transcripts, constraint-model error records and summaries.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::constraint::ErrorInjector;
use crate::error::{Error, Result};
use crate::gp::GpSettings;
use crate::knobspace::KnobSpace;
use crate::optimizers::{
    make_executor, run_emaliboo, run_pamaliboo, run_random, run_sequential, Backend, CampaignResult,
    CampaignSettings, Strategy,
};
use crate::target::{CachedTarget, ExternalTarget, QualityCache, SurrogateSpec, SurrogateTarget, Target};
use crate::transcript::{save_mape, save_transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Surrogate,
    External,
}

/// Everything one `tune` invocation needs. Unset fields take the published defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub strategy: Strategy,
    /// Built-in space name or path to a TOML/JSON knob list.
    pub knobspace: String,
    pub target: TargetKind,
    /// Command template for the external target, with `{knob}` placeholders.
    pub command: Option<String>,
    pub timeout_seconds: f64,
    /// JSON file persisting known quality values across campaigns.
    pub cache_file: Option<PathBuf>,
    pub backend: Backend,
    pub workers: usize,
    pub polling_seconds: f64,
    pub overhead_seconds: f64,
    pub total_iterations: usize,
    pub initial_points: usize,
    pub training_period: usize,
    pub rmsd_max: f64,
    pub restarts: usize,
    pub gate_penalty: f64,
    pub ridge_alpha: f64,
    pub error_injection: bool,
    pub epsilon0: f64,
    pub n_err: usize,
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub concurrent_seeds: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let s = CampaignSettings::default();
        let inj = ErrorInjector::default();
        Self {
            strategy: Strategy::Pamaliboo,
            knobspace: "ligen8".into(),
            target: TargetKind::Surrogate,
            command: None,
            timeout_seconds: 3600.0,
            cache_file: None,
            backend: s.backend,
            workers: s.workers,
            polling_seconds: s.polling_seconds,
            overhead_seconds: s.overhead_seconds,
            total_iterations: s.total_iterations,
            initial_points: s.initial_points,
            training_period: s.training_period,
            rmsd_max: s.rmsd_max,
            restarts: s.restarts,
            gate_penalty: s.gate_penalty,
            ridge_alpha: s.ridge_alpha,
            error_injection: inj.enabled,
            epsilon0: inj.epsilon0,
            n_err: inj.n_err,
            length_scales: s.gp.length_scales.clone(),
            signal_variance: s.gp.signal_variance,
            noise_variance: s.gp.noise_variance,
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            concurrent_seeds: false,
        }
    }
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn settings(&self, seed: u64) -> CampaignSettings {
        CampaignSettings {
            total_iterations: self.total_iterations,
            initial_points: self.initial_points,
            workers: self.workers,
            training_period: self.training_period,
            polling_seconds: self.polling_seconds,
            overhead_seconds: self.overhead_seconds,
            rmsd_max: self.rmsd_max,
            seed,
            restarts: self.restarts,
            gate_penalty: self.gate_penalty,
            ridge_alpha: self.ridge_alpha,
            error_injection: ErrorInjector {
                enabled: self.error_injection,
                epsilon0: self.epsilon0,
                n_err: self.n_err,
            },
            gp: GpSettings {
                length_scales: self.length_scales.clone(),
                signal_variance: self.signal_variance,
                noise_variance: self.noise_variance,
            },
            backend: self.backend,
            agent_id: 0,
        }
    }

    pub fn space(&self) -> Result<KnobSpace> {
        KnobSpace::by_name(&self.knobspace).or_else(|_| {
            let path = Path::new(&self.knobspace);
            if path.exists() {
                KnobSpace::from_file(path)
            } else {
                Err(Error::Settings(format!(
                    "knob space `{}` is neither a built-in name nor an existing file",
                    self.knobspace
                )))
            }
        })
    }

    /// Builds the target without evaluating anything.
    pub fn build_target(&self) -> Result<Arc<dyn Target>> {
        let space = self.space()?;
        Ok(match self.target {
            TargetKind::Surrogate => Arc::new(SurrogateTarget::new(
                space,
                SurrogateSpec {
                    rmsd_max: self.rmsd_max,
                    ..SurrogateSpec::default()
                },
            )?),
            TargetKind::External => {
                let command = self
                    .command
                    .as_deref()
                    .ok_or_else(|| Error::Settings("external target needs `command`".into()))?;
                let timeout = Duration::try_from_secs_f64(self.timeout_seconds)
                    .map_err(|e| Error::Settings(format!("timeout_seconds: {e}")))?;
                Arc::new(ExternalTarget::new(command, space, self.rmsd_max, timeout)?)
            }
        })
    }
}

/// Every violated constraint; nothing is evaluated.
pub fn validate(config: &CampaignConfig) -> Vec<String> {
    let mut out = config.settings(0).diagnostics(config.strategy);
    if config.seeds.is_empty() {
        out.push("at least one seed is required".into());
    }
    if config.length_scales.is_empty() || config.length_scales.iter().any(|l| !(*l > 0.0)) {
        out.push("GP length scales must be a non-empty list of positive values".into());
    }
    if !(config.signal_variance > 0.0) || config.noise_variance < 0.0 {
        out.push("GP signal variance must be positive and noise variance non-negative".into());
    }
    if !(config.timeout_seconds > 0.0) {
        out.push(format!("timeout_seconds must be positive, got {}", config.timeout_seconds));
    }
    if config.target == TargetKind::Surrogate && config.command.is_some() {
        out.push("`command` is only meaningful with target = \"external\"".into());
    }
    if let Some(cache) = &config.cache_file {
        if let Some(parent) = cache.parent().filter(|p| !p.as_os_str().is_empty()) {
            if !parent.is_dir() {
                out.push(format!("cache file directory {} does not exist", parent.display()));
            }
        }
    }
    match config.space() {
        Err(e) => out.push(e.to_string()),
        Ok(_) => {
            if let Err(e) = config.build_target() {
                out.push(e.to_string());
            }
        }
    }
    out
}

/// Per-seed summary written next to the transcript.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub strategy: Strategy,
    pub seed: u64,
    pub best_configuration: Option<serde_json::Map<String, serde_json::Value>>,
    pub best_objective: Option<f64>,
    pub best_constraint_value: Option<f64>,
    pub best_is_feasible: bool,
    pub evaluations: usize,
    pub feasible_evaluations: usize,
    pub failures: usize,
    pub mape_records: usize,
    pub mean_ape: Option<f64>,
    pub cache_hit_rate: Option<f64>,
    pub cache_entries: Option<usize>,
    pub virtual_time_seconds: f64,
    pub real_time_seconds: f64,
}

impl SeedSummary {
    fn new(result: &CampaignResult, cache: Option<(f64, usize)>, real_time: f64) -> Self {
        let best_configuration = result.best.as_ref().map(|b| {
            result
                .space
                .knobs()
                .iter()
                .zip(&b.config.0)
                .map(|(k, v)| (k.name.clone(), serde_json::Value::from(*v)))
                .collect()
        });
        Self {
            strategy: result.strategy,
            seed: result.seed,
            best_configuration,
            best_objective: result.best.as_ref().map(|b| b.objective),
            best_constraint_value: result.best.as_ref().and_then(|b| b.constraint_value),
            best_is_feasible: result.best.as_ref().is_some_and(|b| b.feasible),
            evaluations: result.history.iter().filter(|e| !e.is_placeholder).count(),
            feasible_evaluations: result.history.iter().filter(|e| !e.is_placeholder && e.feasible).count(),
            failures: result.failures,
            mape_records: result.mape.records.len(),
            mean_ape: result.mape.mean(),
            cache_hit_rate: cache.map(|c| c.0),
            cache_entries: cache.map(|c| c.1),
            virtual_time_seconds: result.end_time,
            real_time_seconds: real_time,
        }
    }
}

/// Outcome of a whole campaign: the summaries of the seeds that finished.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub summaries: Vec<SeedSummary>,
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("invalid campaign configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("campaign failed for seed {seed}: {source}")]
    Failed { seed: u64, source: Error },
}

impl CampaignError {
    /// 2 for validation failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CampaignError::Invalid(_) => 2,
            CampaignError::Failed { .. } => 1,
        }
    }
}

/// Runs one strategy for one seed on `target`.
pub fn run_strategy(
    strategy: Strategy,
    target: Arc<dyn Target>,
    settings: &CampaignSettings,
) -> Result<CampaignResult> {
    match strategy {
        Strategy::Sequential => run_sequential(target, settings),
        Strategy::Emaliboo => run_emaliboo(|_| target.clone(), settings),
        Strategy::Pamaliboo | Strategy::Random => {
            let space = target.space().clone();
            let mut ex = make_executor(settings, target, settings.workers)?;
            if strategy == Strategy::Pamaliboo {
                run_pamaliboo(&space, ex.as_mut(), settings)
            } else {
                run_random(&space, ex.as_mut(), settings)
            }
        }
    }
}

/// Writes `transcript_<seed>.csv` and `mape_<seed>.csv` for one result.
pub fn write_outputs(dir: &Path, result: &CampaignResult) -> Result<()> {
    save_transcript(
        &dir.join(format!("transcript_{}.csv", result.seed)),
        &result.space,
        &result.history,
    )?;
    save_mape(&dir.join(format!("mape_{}.csv", result.seed)), &result.mape.records)
}

fn run_seed(
    config: &CampaignConfig,
    target: &Arc<dyn Target>,
    cached: Option<&Arc<CachedTarget<Arc<dyn Target>>>>,
    seed: u64,
) -> Result<SeedSummary> {
    let start = Instant::now();
    let before = cached.map(|c| c.cache());
    let result = run_strategy(config.strategy, target.clone(), &config.settings(seed))?;
    write_outputs(&config.output_dir, &result)?;
    let cache_stats = cached.zip(before).map(|(c, b)| {
        let now = c.cache();
        let hits = now.hits - b.hits;
        let total = hits + now.misses - b.misses;
        let rate = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
        (rate, now.len())
    });
    let summary = SeedSummary::new(&result, cache_stats, start.elapsed().as_secs_f64());
    std::fs::write(
        config.output_dir.join(format!("summary_{seed}.json")),
        serde_json::to_string_pretty(&summary)?,
    )?;
    log::info!(
        "seed {seed}: best feasible {:?} after {} evaluations",
        result.final_feasible_objective(),
        summary.evaluations
    );
    Ok(summary)
}

/// Validates, then runs every seed. Outputs of finished seeds stay on disk when a later one fails.
pub fn run_campaign(config: &CampaignConfig) -> std::result::Result<CampaignReport, CampaignError> {
    let diags = validate(config);
    if !diags.is_empty() {
        return Err(CampaignError::Invalid(diags));
    }
    let fail = |seed| move |source| CampaignError::Failed { seed, source };
    let first = config.seeds[0];
    std::fs::create_dir_all(&config.output_dir).map_err(|e| fail(first)(e.into()))?;

    let base = config.build_target().map_err(fail(first))?;
    let cached = match &config.cache_file {
        Some(path) => {
            let cache = if path.exists() {
                QualityCache::load(path).map_err(fail(first))?
            } else {
                QualityCache::default()
            };
            Some(Arc::new(CachedTarget::with_cache(base.clone(), cache)))
        }
        None => None,
    };
    let target: Arc<dyn Target> = match &cached {
        Some(c) => c.clone(),
        None => base,
    };
    let save_cache = || -> std::result::Result<(), CampaignError> {
        if let (Some(c), Some(path)) = (&cached, &config.cache_file) {
            c.cache().save(path).map_err(fail(first))?;
        }
        Ok(())
    };

    let results: Vec<(u64, Result<SeedSummary>)> = if config.concurrent_seeds {
        std::thread::scope(|scope| {
            let handles: Vec<_> = config
                .seeds
                .iter()
                .map(|&seed| {
                    let (target, cached) = (&target, cached.as_ref());
                    (seed, scope.spawn(move || run_seed(config, target, cached, seed)))
                })
                .collect();
            handles
                .into_iter()
                .map(|(seed, h)| {
                    let r = h.join().unwrap_or_else(|_| Err(Error::Evaluation("seed worker panicked".into())));
                    (seed, r)
                })
                .collect()
        })
    } else {
        let mut out = Vec::new();
        for &seed in &config.seeds {
            let r = run_seed(config, &target, cached.as_ref(), seed);
            let failed = r.is_err();
            out.push((seed, r));
            if failed {
                break;
            }
        }
        out
    };

    save_cache()?;
    let mut summaries = Vec::new();
    for (seed, r) in results {
        summaries.push(r.map_err(fail(seed))?);
    }
    Ok(CampaignReport { summaries })
}
