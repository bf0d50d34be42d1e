use std::sync::Arc;

use super::{
    estimated_optimum, incumbent_at, run_sequential, CampaignResult, CampaignSettings, Strategy, TracePoint,
};
use crate::constraint::MapeTracker;
use crate::error::{Error, Result};
use crate::target::Target;

/// Settings of ensemble member `agent`: an equal share of the budget and seed `seed + agent`.
pub fn agent_settings(settings: &CampaignSettings, agent: usize) -> CampaignSettings {
    let q = settings.workers;
    CampaignSettings {
        total_iterations: settings.total_iterations / q,
        initial_points: settings.initial_points / q,
        workers: 1,
        seed: settings.seed.wrapping_add(agent as u64),
        agent_id: agent,
        ..settings.clone()
    }
}

/// Pointwise minimum of step traces.
pub fn min_trace(traces: &[&[TracePoint]]) -> Vec<TracePoint> {
    let mut times: Vec<f64> = traces.iter().flat_map(|t| t.iter().map(|p| p.time)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut out: Vec<TracePoint> = Vec::new();
    for t in times {
        let best = traces
            .iter()
            .filter_map(|tr| incumbent_at(tr, t))
            .min_by(f64::total_cmp);
        if let Some(v) = best {
            if out.last().is_none_or(|p| v < p.best_feasible) {
                out.push(TracePoint { time: t, best_feasible: v });
            }
        }
    }
    out
}

/// `q` independent sequential agents that share nothing; results are merged afterwards.
pub fn run_emaliboo<F>(target_factory: F, settings: &CampaignSettings) -> Result<CampaignResult>
where
    F: Fn(usize) -> Arc<dyn Target> + Sync,
{
    settings.check(Strategy::Emaliboo)?;
    let q = settings.workers;
    let results: Vec<Result<CampaignResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..q)
            .map(|k| {
                let factory = &target_factory;
                scope.spawn(move || run_sequential(factory(k), &agent_settings(settings, k)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Evaluation("ensemble agent panicked".into()))))
            .collect()
    });
    let agents: Vec<CampaignResult> = results.into_iter().collect::<Result<_>>()?;

    let mut history: Vec<_> = agents.iter().flat_map(|a| a.history.iter().cloned()).collect();
    history.sort_by(|a, b| {
        a.complete_time
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.complete_time.unwrap_or(f64::INFINITY))
            .then(a.agent_id.cmp(&b.agent_id))
            .then(a.iteration.cmp(&b.iteration))
    });
    let traces: Vec<&[TracePoint]> = agents.iter().map(|a| a.incumbent_trace.as_slice()).collect();
    let incumbent_trace = min_trace(&traces);
    let mut mape = MapeTracker::default();
    for a in &agents {
        mape.records.extend(a.mape.records.iter().copied());
    }
    mape.records.sort_by_key(|r| r.iteration);

    Ok(CampaignResult {
        strategy: Strategy::Emaliboo,
        space: agents[0].space.clone(),
        seed: settings.seed,
        best: estimated_optimum(&history),
        incumbent_trace,
        history,
        mape,
        events: Vec::new(),
        failures: agents.iter().map(|a| a.failures).sum(),
        end_time: agents.iter().map(|a| a.end_time).fold(0.0, f64::max),
        max_running: agents.len(),
        agents,
    })
}
