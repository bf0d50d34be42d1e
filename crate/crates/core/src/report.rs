//! Post-processing of campaign histories: feasible-regret curves, constraint
//! model error series, central-versus-ensemble ranking and multi-seed averages.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constraint::MapeRecord;
use crate::error::{Error, Result};
use crate::optimizers::{incumbent_trace, CampaignResult, HistoryEntry, TracePoint};

pub const DEFAULT_GRID_SECONDS: f64 = 60.0;

/// Value of the running feasible minimum at one completion. `None` marks
/// times before the first feasible observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub time: f64,
    pub best_feasible_objective: Option<f64>,
    pub regret: Option<f64>,
}

/// Step curve over true completions, in completion order.
pub fn feasible_regret_curve(history: &[HistoryEntry], ground_truth: Option<f64>) -> Vec<RegretPoint> {
    let mut done: Vec<&HistoryEntry> = history
        .iter()
        .filter(|e| !e.is_placeholder && e.complete_time.is_some())
        .collect();
    done.sort_by(|a, b| a.complete_time.unwrap_or(0.0).total_cmp(&b.complete_time.unwrap_or(0.0)));
    let mut best: Option<f64> = None;
    done.iter()
        .map(|e| {
            if e.feasible && best.is_none_or(|b| e.objective < b) {
                best = Some(e.objective);
            }
            RegretPoint {
                time: e.complete_time.unwrap_or(0.0),
                best_feasible_objective: best,
                regret: best.zip(ground_truth).map(|(b, g)| b - g),
            }
        })
        .collect()
}

/// Incumbent trace of every agent found in a merged history.
pub fn agent_traces(history: &[HistoryEntry]) -> BTreeMap<usize, Vec<TracePoint>> {
    let mut by_agent: BTreeMap<usize, Vec<HistoryEntry>> = BTreeMap::new();
    for e in history {
        by_agent.entry(e.agent_id).or_default().push(e.clone());
    }
    by_agent.into_iter().map(|(k, h)| (k, incumbent_trace(&h))).collect()
}

fn value_at(trace: &[TracePoint], time: f64) -> Option<f64> {
    trace.iter().take_while(|p| p.time <= time).last().map(|p| p.best_feasible)
}

/// `0, grid, 2 grid, ...` up to and including `horizon`.
pub fn time_grid(grid: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(grid > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!("invalid time grid step {grid} or horizon {horizon}")));
    }
    let steps = (horizon / grid).floor().max(0.0) as usize;
    Ok((0..=steps).map(|i| i as f64 * grid).collect())
}

/// `1 +` the number of agents whose incumbent is strictly better than the central one.
/// An agent without a feasible incumbent never beats anyone; any agent with one
/// beats a central agent that has none.
pub fn rank_at(central: Option<f64>, agents: &[Option<f64>]) -> usize {
    1 + agents
        .iter()
        .filter(|a| match (a, central) {
            (Some(a), Some(c)) => *a < c,
            (Some(_), None) => true,
            (None, _) => false,
        })
        .count()
}

/// Rank of the central trace among agent traces at each sampled time.
pub fn ranking_from_traces(central: &[TracePoint], agents: &[Vec<TracePoint>], times: &[f64]) -> Vec<(f64, usize)> {
    times
        .iter()
        .map(|&t| {
            let others: Vec<Option<f64>> = agents.iter().map(|a| value_at(a, t)).collect();
            (t, rank_at(value_at(central, t), &others))
        })
        .collect()
}

/// Ranking on a `grid` restricted to the window both campaigns cover.
pub fn ranking_series(central: &CampaignResult, ensemble: &CampaignResult, grid: f64) -> Result<Vec<(f64, usize)>> {
    let agents: Vec<Vec<TracePoint>> = if ensemble.agents.is_empty() {
        agent_traces(&ensemble.history).into_values().collect()
    } else {
        ensemble.agents.iter().map(|a| a.incumbent_trace.clone()).collect()
    };
    let horizon = central.end_time.min(ensemble.end_time);
    let times = time_grid(grid, horizon)?;
    Ok(ranking_from_traces(&central.incumbent_trace, &agents, &times))
}

/// Pointwise mean of step curves; `coverage` counts the curves defined at that time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub time: f64,
    pub mean: Option<f64>,
    pub coverage: usize,
}

/// Resamples each curve onto `times` with last-value-carried-forward and averages the defined values.
pub fn aggregate_curves(curves: &[Vec<TracePoint>], times: &[f64]) -> Result<Vec<AggregatePoint>> {
    if curves.is_empty() {
        return Err(Error::Domain("nothing to aggregate".into()));
    }
    Ok(times
        .iter()
        .map(|&t| {
            let vals: Vec<f64> = curves.iter().filter_map(|c| value_at(c, t)).collect();
            AggregatePoint {
                time: t,
                mean: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
                coverage: vals.len(),
            }
        })
        .collect())
}

/// Averages incumbent curves of several seeded runs on a shared grid reaching the latest end time.
pub fn aggregate_seeds(results: &[CampaignResult], grid: f64) -> Result<Vec<AggregatePoint>> {
    if results.is_empty() {
        return Err(Error::Domain("nothing to aggregate".into()));
    }
    let horizon = results.iter().map(|r| r.end_time).fold(0.0, f64::max);
    let curves: Vec<Vec<TracePoint>> = results.iter().map(|r| r.incumbent_trace.clone()).collect();
    aggregate_curves(&curves, &time_grid(grid, horizon)?)
}

/// Mean of fractional ranks across seeds, sample by sample; series are truncated to the shortest.
pub fn average_ranks(series: &[Vec<(f64, usize)>]) -> Result<Vec<(f64, f64)>> {
    let shortest = series
        .iter()
        .map(Vec::len)
        .min()
        .ok_or_else(|| Error::Domain("nothing to aggregate".into()))?;
    Ok((0..shortest)
        .map(|i| {
            let sum: usize = series.iter().map(|s| s[i].1).sum();
            (series[0][i].0, sum as f64 / series.len() as f64)
        })
        .collect())
}

/// Mean absolute percentage error per iteration across seeds, with the number of contributing seeds.
pub fn aggregate_mape(series: &[Vec<MapeRecord>]) -> Result<Vec<(usize, f64, usize)>> {
    if series.is_empty() {
        return Err(Error::Domain("nothing to aggregate".into()));
    }
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for s in series {
        for r in s {
            let slot = acc.entry(r.iteration).or_insert((0.0, 0));
            slot.0 += r.ape;
            slot.1 += 1;
        }
    }
    Ok(acc.into_iter().map(|(i, (sum, n))| (i, sum / n as f64, n)).collect())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `series,time,best_feasible_objective,regret`
pub fn write_regret_csv<W: Write>(out: W, series: &[(String, Vec<RegretPoint>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "time", "best_feasible_objective", "regret"])?;
    for (name, pts) in series {
        for p in pts {
            w.write_record([
                name.clone(),
                p.time.to_string(),
                cell(p.best_feasible_objective),
                cell(p.regret),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `series,iteration,ape,coverage`; the `mean` series averages across inputs.
pub fn write_mape_csv<W: Write>(out: W, series: &[(String, Vec<MapeRecord>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "iteration", "ape", "coverage"])?;
    for (name, recs) in series {
        for r in recs {
            w.write_record([name.clone(), r.iteration.to_string(), r.ape.to_string(), "1".into()])?;
        }
    }
    let all: Vec<Vec<MapeRecord>> = series.iter().map(|(_, r)| r.clone()).collect();
    for (i, mean, n) in aggregate_mape(&all)? {
        w.write_record(["mean".to_string(), i.to_string(), mean.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `series,time,rank`; the `mean` series holds fractional ranks across inputs.
pub fn write_ranking_csv<W: Write>(out: W, series: &[(String, Vec<(f64, usize)>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "time", "rank"])?;
    for (name, pts) in series {
        for (t, r) in pts {
            w.write_record([name.clone(), t.to_string(), r.to_string()])?;
        }
    }
    let all: Vec<Vec<(f64, usize)>> = series.iter().map(|(_, s)| s.clone()).collect();
    for (t, r) in average_ranks(&all)? {
        w.write_record(["mean".to_string(), t.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `time,mean_best_feasible,mean_regret,coverage`
pub fn write_aggregate_csv<W: Write>(out: W, points: &[AggregatePoint], ground_truth: Option<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "mean_best_feasible", "mean_regret", "coverage"])?;
    for p in points {
        w.write_record([
            p.time.to_string(),
            cell(p.mean),
            cell(p.mean.zip(ground_truth).map(|(m, g)| m - g)),
            p.coverage.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
