use std::sync::Arc;

use super::engine::Engine;
use super::{make_executor, CampaignResult, CampaignSettings, Strategy};
use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::knobspace::KnobSpace;
use crate::target::Target;

/// Sequential constrained BO on a single-worker executor of `settings.backend`.
pub fn run_sequential(target: Arc<dyn Target>, settings: &CampaignSettings) -> Result<CampaignResult> {
    let space = target.space().clone();
    let mut ex = make_executor(settings, target, 1)?;
    run_sequential_with(&space, ex.as_mut(), settings)
}

/// Sequential BO on any executor; every evaluation is awaited before the next selection.
pub fn run_sequential_with(
    space: &KnobSpace,
    ex: &mut dyn Executor,
    settings: &CampaignSettings,
) -> Result<CampaignResult> {
    settings.check(Strategy::Sequential)?;
    let mut engine = Engine::new(space.clone(), settings.clone());
    engine.run_initial_design(ex)?;

    let mut n = 0usize;
    while engine.history.true_count() < settings.total_iterations {
        if engine.failures > settings.total_iterations {
            return Err(Error::Evaluation(format!("{} evaluations failed", engine.failures)));
        }
        engine.retrain_if_due(n, ex.now())?;
        let sel = engine.select(n, ex)?;
        engine.submit(ex, &sel.config, None, sel.prediction, Some(n))?;
        while ex.running() > 0 {
            engine.wait(ex)?;
            let done = ex.collect_completed();
            engine.absorb(done);
        }
        n += 1;
    }
    Ok(engine.finish(Strategy::Sequential, ex.now()))
}
