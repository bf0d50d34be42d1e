use super::engine::Engine;
use super::{CampaignResult, CampaignSettings, Strategy};
use crate::error::{Error, Result};
use crate::executor::Executor;
use crate::knobspace::KnobSpace;

/// Uniform random search dispatched asynchronously. The first `initial_points`
/// draws coincide with the model-guided strategies' initial design.
pub fn run_random(space: &KnobSpace, ex: &mut dyn Executor, settings: &CampaignSettings) -> Result<CampaignResult> {
    settings.check(Strategy::Random)?;
    let mut engine = Engine::new(space.clone(), settings.clone());
    let total = settings.total_iterations;
    let mut n = 0usize;
    loop {
        if engine.failures > total {
            return Err(Error::Evaluation(format!("{} evaluations failed", engine.failures)));
        }
        let done = ex.collect_completed();
        engine.absorb(done);
        if engine.history.true_count() + ex.running() >= total {
            if ex.running() == 0 {
                break;
            }
            engine.wait(ex)?;
            continue;
        }
        if ex.idle() == 0 {
            engine.wait(ex)?;
            continue;
        }
        let x = engine.sample_random();
        engine.submit(ex, &x, None, None, Some(n))?;
        n += 1;
    }
    Ok(engine.finish(Strategy::Random, ex.now()))
}
