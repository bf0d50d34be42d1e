use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    derive_seed, estimated_optimum, incumbent_trace, CampaignResult, CampaignSettings, DriverEvent, History,
    HistoryEntry, Strategy, STREAM_ACQUISITION,
};
use crate::acquisition::{maximize, AcquisitionContext, ConstraintGate, FeasibleInterval};
use crate::constraint::{ConstraintModel, MapeTracker, Prediction};
use crate::error::{Error, Result};
use crate::executor::{Completion, Executor, JobId, JobOutcome};
use crate::gp::GpState;
use crate::knobspace::{Configuration, KnobSpace};

struct PendingJob {
    iteration: usize,
    submit_time: f64,
    prediction: Option<Prediction>,
}

pub(crate) struct Selection {
    pub config: Configuration,
    pub posterior_mean: f64,
    pub prediction: Option<Prediction>,
}

/// State shared by every model-guided agent: history, surrogate, constraint model.
pub(crate) struct Engine {
    pub space: KnobSpace,
    pub settings: CampaignSettings,
    pub history: History,
    gp: Option<GpState>,
    gp_stale: bool,
    model: ConstraintModel,
    pub mape: MapeTracker,
    pending: HashMap<JobId, PendingJob>,
    pub events: Vec<DriverEvent>,
    pub failures: usize,
    initial_rng: ChaCha8Rng,
    submissions: usize,
    pub max_running: usize,
}

impl Engine {
    pub fn new(space: KnobSpace, settings: CampaignSettings) -> Self {
        let initial_rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let model = ConstraintModel::untrained(settings.ridge_alpha);
        Self {
            space,
            settings,
            history: History::default(),
            gp: None,
            gp_stale: true,
            model,
            mape: MapeTracker::default(),
            pending: HashMap::new(),
            events: Vec::new(),
            failures: 0,
            initial_rng,
            submissions: 0,
            max_running: 0,
        }
    }

    pub fn sample_random(&mut self) -> Configuration {
        self.space.sample_uniform(&mut self.initial_rng)
    }

    pub fn constraint_model(&self) -> &ConstraintModel {
        &self.model
    }

    pub fn gp(&self) -> Option<&GpState> {
        self.gp.as_ref()
    }

    /// Submits `config`; a placeholder entry is added when `placeholder_mean` is set.
    pub fn submit(
        &mut self,
        ex: &mut dyn Executor,
        config: &Configuration,
        placeholder_mean: Option<f64>,
        prediction: Option<Prediction>,
        bo_iteration: Option<usize>,
    ) -> Result<JobId> {
        let time = ex.now();
        let job = ex.submit(config)?;
        let iteration = self.submissions;
        self.submissions += 1;
        self.max_running = self.max_running.max(ex.running());
        self.pending.insert(
            job,
            PendingJob {
                iteration,
                submit_time: time,
                prediction,
            },
        );
        if let Some(mean) = placeholder_mean {
            self.history.push(HistoryEntry {
                config: config.clone(),
                objective: mean,
                constraint_value: None,
                feasible: false,
                is_placeholder: true,
                iteration,
                submit_time: time,
                complete_time: None,
                agent_id: self.settings.agent_id,
                job: Some(job),
            });
            self.gp_stale = true;
        }
        if let Some(n) = bo_iteration {
            self.events.push(DriverEvent::Submitted {
                iteration: n,
                job,
                time,
                config: config.clone(),
                placeholder_mean: placeholder_mean.unwrap_or(f64::NAN),
                predicted_constraint: prediction.map(|p| p.predicted),
                running_after: ex.running(),
                placeholders_after: self.history.placeholder_count(),
            });
        }
        Ok(job)
    }

    /// Strips every placeholder and appends the completed true evaluations.
    pub fn absorb(&mut self, completions: Vec<Completion>) {
        if completions.is_empty() {
            return;
        }
        self.history.strip_placeholders();
        for c in completions {
            let pending = self
                .pending
                .remove(&c.id)
                .expect("completion for a job this agent submitted");
            match c.outcome {
                JobOutcome::Done(r) => {
                    if let Some(p) = pending.prediction {
                        let index = self.history.true_count();
                        self.mape.record(p, r.rmsd_p75, c.completed_at, index);
                    }
                    self.history.push(HistoryEntry {
                        config: c.config,
                        objective: r.objective,
                        constraint_value: Some(r.rmsd_p75),
                        feasible: r.feasible,
                        is_placeholder: false,
                        iteration: pending.iteration,
                        submit_time: pending.submit_time,
                        complete_time: Some(c.completed_at),
                        agent_id: self.settings.agent_id,
                        job: Some(c.id),
                    });
                    self.events.push(DriverEvent::Completed {
                        job: c.id,
                        time: c.completed_at,
                        failed: false,
                    });
                }
                JobOutcome::Failed(msg) => {
                    log::warn!("evaluation of {:?} failed, point skipped: {msg}", c.config.0);
                    self.failures += 1;
                    self.events.push(DriverEvent::Completed {
                        job: c.id,
                        time: c.completed_at,
                        failed: true,
                    });
                }
            }
        }
        self.gp_stale = true;
    }

    pub fn wait(&mut self, ex: &mut dyn Executor) -> Result<()> {
        let from = ex.now();
        ex.wait_for_completion()?;
        self.events.push(DriverEvent::Waited { from, to: ex.now() });
        Ok(())
    }

    /// Evaluates `initial_points` random configurations before any model is used.
    pub fn run_initial_design(&mut self, ex: &mut dyn Executor) -> Result<()> {
        let wanted = self.settings.initial_points;
        let attempt_cap = wanted.saturating_mul(10).max(10);
        let mut attempts = 0usize;
        loop {
            while ex.idle() > 0 && self.history.true_count() + ex.running() < wanted {
                if attempts >= attempt_cap {
                    return Err(Error::Evaluation(format!(
                        "initial design: {} of {attempts} evaluations failed",
                        self.failures
                    )));
                }
                attempts += 1;
                let x = self.sample_random();
                self.submit(ex, &x, None, None, None)?;
            }
            if ex.running() == 0 {
                break;
            }
            self.wait(ex)?;
            let done = ex.collect_completed();
            self.absorb(done);
        }
        Ok(())
    }

    pub fn refit_gp(&mut self) -> Result<()> {
        let (inputs, targets) = self.history.gp_data(&self.space)?;
        self.gp = Some(GpState::fit(&inputs, &targets, &self.settings.gp)?);
        self.gp_stale = false;
        Ok(())
    }

    pub fn ensure_gp(&mut self) -> Result<()> {
        if self.gp_stale || self.gp.is_none() {
            self.refit_gp()?;
        }
        Ok(())
    }

    pub fn retrain_if_due(&mut self, n: usize, now: f64) -> Result<()> {
        if n % self.settings.training_period == 0 {
            let rows = self.history.constraint_data(&self.space)?;
            self.model = ConstraintModel::train(&rows, self.settings.ridge_alpha)?;
            self.events.push(DriverEvent::Retrained {
                iteration: n,
                time: now,
                train_count: self.model.train_count,
            });
        }
        Ok(())
    }

    /// Maximizes the gated acquisition for BO iteration `n` under the current models.
    pub fn select(&mut self, n: usize, ex: &mut dyn Executor) -> Result<Selection> {
        self.ensure_gp()?;
        let gp = self.gp.as_ref().expect("fitted above");
        let incumbent = self
            .history
            .incumbent()
            .ok_or_else(|| Error::Evaluation("no true observation to compare against".into()))?;
        let injector = self.settings.error_injection;
        let gate = if self.model.trained {
            Some(ConstraintGate {
                model: &self.model,
                injector: &injector,
                iteration: n,
                interval: FeasibleInterval::at_most(self.settings.rmsd_max),
                penalty: self.settings.gate_penalty,
            })
        } else {
            log::warn!("iteration {n}: constraint model untrained, using plain EI");
            None
        };
        let ctx = AcquisitionContext {
            gp,
            space: &self.space,
            incumbent,
            gate,
        };
        let seed = derive_seed(self.settings.seed, STREAM_ACQUISITION, n as u64);
        let config = maximize(&ctx, self.settings.restarts, seed)?;
        ex.charge_overhead();

        let u = self.space.normalize(&config)?;
        let (posterior_mean, _) = gp.posterior(&u)?;
        let prediction = if self.model.trained {
            let features = self.space.quality_features(&config)?;
            Some(Prediction {
                iteration: n,
                predicted: self.model.predict(&features, &injector, n)?,
                predicted_at: ex.now(),
                trained_on: self.model.train_count,
            })
        } else {
            None
        };
        Ok(Selection {
            config,
            posterior_mean,
            prediction,
        })
    }

    pub fn finish(self, strategy: Strategy, end_time: f64) -> CampaignResult {
        let history = self.history.into_entries();
        CampaignResult {
            strategy,
            space: self.space,
            seed: self.settings.seed,
            incumbent_trace: incumbent_trace(&history),
            best: estimated_optimum(&history),
            history,
            mape: self.mape,
            agents: Vec::new(),
            events: self.events,
            failures: self.failures,
            end_time,
            max_running: self.max_running,
        }
    }
}
