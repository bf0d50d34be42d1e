use super::engine::Engine;
use super::{CampaignResult, CampaignSettings, History, Strategy};
use crate::error::{Error, Result};
use crate::executor::{Executor, JobId};
use crate::gp::GpState;
use crate::knobspace::KnobSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// All workers were busy, or the budget is spent and jobs are draining.
    Waited,
    Submitted { iteration: usize, job: JobId },
    Finished,
}

/// Centralized asynchronous driver with Kriging-Believer placeholders.
///
/// Each [`step`](AsyncDriver::step) is one pass of the main loop: absorb
/// completions (dropping every placeholder), then either wait one polling
/// interval when saturated or select, submit, and record a placeholder at the
/// current posterior mean.
pub struct AsyncDriver<'a> {
    engine: Engine,
    ex: &'a mut dyn Executor,
    n: usize,
    initialized: bool,
}

impl<'a> AsyncDriver<'a> {
    pub fn new(space: &KnobSpace, ex: &'a mut dyn Executor, settings: &CampaignSettings) -> Result<Self> {
        settings.check(Strategy::Pamaliboo)?;
        Ok(Self {
            engine: Engine::new(space.clone(), settings.clone()),
            ex,
            n: 0,
            initialized: false,
        })
    }

    fn initialize(&mut self) -> Result<()> {
        self.engine.run_initial_design(self.ex)?;
        self.engine.refit_gp()?;
        self.initialized = true;
        Ok(())
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        if !self.initialized {
            self.initialize()?;
        }
        let total = self.engine.settings.total_iterations;
        if self.engine.failures > total {
            return Err(Error::Evaluation(format!("{} evaluations failed", self.engine.failures)));
        }

        let done = self.ex.collect_completed();
        self.engine.absorb(done);

        if self.engine.history.true_count() + self.ex.running() >= total {
            if self.ex.running() == 0 {
                return Ok(StepOutcome::Finished);
            }
            self.engine.wait(self.ex)?;
            return Ok(StepOutcome::Waited);
        }
        if self.ex.idle() == 0 {
            self.engine.wait(self.ex)?;
            return Ok(StepOutcome::Waited);
        }

        let n = self.n;
        self.engine.retrain_if_due(n, self.ex.now())?;
        let sel = self.engine.select(n, self.ex)?;
        let job = self
            .engine
            .submit(self.ex, &sel.config, Some(sel.posterior_mean), sel.prediction, Some(n))
            .map_err(|e| Error::Executor(format!("submit rejected despite an idle worker: {e}")))?;
        self.engine.refit_gp()?;
        self.n += 1;
        Ok(StepOutcome::Submitted { iteration: n, job })
    }

    pub fn run(mut self) -> Result<CampaignResult> {
        while self.step()? != StepOutcome::Finished {}
        Ok(self.finish())
    }

    pub fn history(&self) -> &History {
        &self.engine.history
    }

    pub fn gp(&self) -> Option<&GpState> {
        self.engine.gp()
    }

    pub fn constraint_model(&self) -> &crate::constraint::ConstraintModel {
        self.engine.constraint_model()
    }

    pub fn executor(&self) -> &dyn Executor {
        self.ex
    }

    pub fn iteration(&self) -> usize {
        self.n
    }

    pub fn finish(self) -> CampaignResult {
        let end = self.ex.now();
        self.engine.finish(Strategy::Pamaliboo, end)
    }
}

/// Runs the asynchronous centralized strategy to completion on `ex`.
pub fn run_pamaliboo(space: &KnobSpace, ex: &mut dyn Executor, settings: &CampaignSettings) -> Result<CampaignResult> {
    AsyncDriver::new(space, ex, settings)?.run()
}
