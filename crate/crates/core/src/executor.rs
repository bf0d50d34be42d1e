//! Asynchronous evaluation on `q` workers.
//!
//! Two backends share the [`Executor`] contract: [`VirtualExecutor`] advances
//! a simulated clock (job duration = reported wall clock of the evaluation),
//! and [`LocalExecutor`] runs each job on its own thread. Submissions never
//! queue; a submit with no idle worker is rejected.

use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knobspace::Configuration;
use crate::target::{EvaluationResult, Target};

pub const DEFAULT_WORKERS: usize = 10;
pub const DEFAULT_POLLING_SECONDS: f64 = 1.0;
pub const DEFAULT_OVERHEAD_SECONDS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JobId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobState {
    /// Legal moves are pending -> running -> done | failed.
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Pending, JobState::Running)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: JobId,
    pub config: Configuration,
    pub submitted_at: f64,
    pub state: JobState,
    pub result: Option<EvaluationResult>,
}

impl Job {
    fn new(id: JobId, config: Configuration, submitted_at: f64) -> Self {
        Self {
            id,
            config,
            submitted_at,
            state: JobState::Pending,
            result: None,
        }
    }

    fn transition(&mut self, next: JobState) {
        assert!(self.state.can_become(next), "illegal job transition {:?} -> {next:?}", self.state);
        self.state = next;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobOutcome {
    Done(EvaluationResult),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub id: JobId,
    pub config: Configuration,
    pub submitted_at: f64,
    pub completed_at: f64,
    pub outcome: JobOutcome,
}

pub trait Executor {
    fn workers(&self) -> usize;

    /// Jobs submitted and not yet returned by `collect_completed`.
    fn running(&self) -> usize;

    fn idle(&self) -> usize {
        self.workers() - self.running()
    }

    /// Seconds since the executor started.
    fn now(&self) -> f64;

    fn submit(&mut self, config: &Configuration) -> Result<JobId>;

    /// Returns and forgets finished jobs, ordered by completion time. Non-blocking.
    fn collect_completed(&mut self) -> Vec<Completion>;

    /// Waits in polling steps until at least one running job has finished.
    fn wait_for_completion(&mut self) -> Result<f64>;

    /// Accounts for driver-side compute time spent choosing a configuration.
    fn charge_overhead(&mut self);
}

#[derive(Debug)]
struct VirtualJob {
    job: Job,
    finish_at: f64,
    outcome: JobOutcome,
}

/// Deterministic discrete-event backend; evaluation happens at submission.
pub struct VirtualExecutor {
    target: Arc<dyn Target>,
    workers: usize,
    polling: f64,
    overhead: f64,
    clock: f64,
    next_id: u64,
    jobs: Vec<VirtualJob>,
}

impl VirtualExecutor {
    pub fn new(target: Arc<dyn Target>, workers: usize, polling: f64, overhead: f64) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Settings("executor needs at least one worker".into()));
        }
        if polling < 0.0 || overhead < 0.0 {
            return Err(Error::Settings("polling and overhead must be non-negative".into()));
        }
        Ok(Self {
            target,
            workers,
            polling,
            overhead,
            clock: 0.0,
            next_id: 0,
            jobs: Vec::new(),
        })
    }

    /// Jumps to the earliest completion, rounded up to the next polling tick.
    pub fn advance_until_any_completion(&mut self) -> Result<f64> {
        let earliest = self
            .jobs
            .iter()
            .map(|j| j.finish_at)
            .min_by(f64::total_cmp)
            .ok_or_else(|| Error::Executor("no running jobs to wait for".into()))?;
        if earliest <= self.clock {
            return Ok(0.0);
        }
        let target = if self.polling > 0.0 {
            (earliest / self.polling).ceil() * self.polling
        } else {
            earliest
        };
        let elapsed = target - self.clock;
        self.clock = target;
        Ok(elapsed)
    }

    pub fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.jobs.iter().map(|j| &j.job)
    }
}

impl Executor for VirtualExecutor {
    fn workers(&self) -> usize {
        self.workers
    }

    fn running(&self) -> usize {
        self.jobs.len()
    }

    fn now(&self) -> f64 {
        self.clock
    }

    fn submit(&mut self, config: &Configuration) -> Result<JobId> {
        if self.jobs.len() >= self.workers {
            return Err(Error::Executor(format!(
                "all {} workers busy; poll before submitting",
                self.workers
            )));
        }
        let id = JobId(self.next_id);
        self.next_id += 1;
        let mut job = Job::new(id, config.clone(), self.clock);
        job.transition(JobState::Running);
        let (finish_at, outcome) = match self.target.evaluate(config) {
            Ok(r) => (self.clock + r.wall_clock, JobOutcome::Done(r)),
            Err(e) => (self.clock, JobOutcome::Failed(e.to_string())),
        };
        self.jobs.push(VirtualJob { job, finish_at, outcome });
        Ok(id)
    }

    fn collect_completed(&mut self) -> Vec<Completion> {
        let now = self.clock;
        let (finished, running): (Vec<_>, Vec<_>) = self.jobs.drain(..).partition(|j| j.finish_at <= now);
        self.jobs = running;
        let mut out: Vec<Completion> = finished
            .into_iter()
            .map(|mut j| {
                match &j.outcome {
                    JobOutcome::Done(r) => {
                        j.job.transition(JobState::Done);
                        j.job.result = Some(*r);
                    }
                    JobOutcome::Failed(_) => j.job.transition(JobState::Failed),
                }
                Completion {
                    id: j.job.id,
                    config: j.job.config,
                    submitted_at: j.job.submitted_at,
                    completed_at: j.finish_at,
                    outcome: j.outcome,
                }
            })
            .collect();
        out.sort_by(|a, b| a.completed_at.total_cmp(&b.completed_at).then(a.id.cmp(&b.id)));
        out
    }

    fn wait_for_completion(&mut self) -> Result<f64> {
        self.advance_until_any_completion()
    }

    fn charge_overhead(&mut self) {
        self.clock += self.overhead;
    }
}

/// Real backend: one thread per running job, results returned over a channel.
pub struct LocalExecutor {
    target: Arc<dyn Target>,
    workers: usize,
    polling: Duration,
    started: Instant,
    next_id: u64,
    in_flight: usize,
    tx: Sender<Completion>,
    rx: Receiver<Completion>,
    ready: Vec<Completion>,
}

impl LocalExecutor {
    pub fn new(target: Arc<dyn Target>, workers: usize, polling: Duration) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Settings("executor needs at least one worker".into()));
        }
        let (tx, rx) = mpsc::channel();
        Ok(Self {
            target,
            workers,
            polling,
            started: Instant::now(),
            next_id: 0,
            in_flight: 0,
            tx,
            rx,
            ready: Vec::new(),
        })
    }

    fn drain_channel(&mut self) {
        while let Ok(c) = self.rx.try_recv() {
            self.ready.push(c);
        }
    }
}

impl Executor for LocalExecutor {
    fn workers(&self) -> usize {
        self.workers
    }

    fn running(&self) -> usize {
        self.in_flight
    }

    fn now(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn submit(&mut self, config: &Configuration) -> Result<JobId> {
        if self.in_flight >= self.workers {
            return Err(Error::Executor(format!(
                "all {} workers busy; poll before submitting",
                self.workers
            )));
        }
        let id = JobId(self.next_id);
        self.next_id += 1;
        self.in_flight += 1;
        let submitted_at = self.now();
        let target = Arc::clone(&self.target);
        let tx = self.tx.clone();
        let started = self.started;
        let config = config.clone();
        std::thread::spawn(move || {
            let outcome = match target.evaluate(&config) {
                Ok(r) => JobOutcome::Done(r),
                Err(e) => JobOutcome::Failed(e.to_string()),
            };
            let _ = tx.send(Completion {
                id,
                config,
                submitted_at,
                completed_at: started.elapsed().as_secs_f64(),
                outcome,
            });
        });
        Ok(id)
    }

    fn collect_completed(&mut self) -> Vec<Completion> {
        self.drain_channel();
        let mut out = std::mem::take(&mut self.ready);
        self.in_flight -= out.len();
        out.sort_by(|a, b| a.completed_at.total_cmp(&b.completed_at).then(a.id.cmp(&b.id)));
        out
    }

    fn wait_for_completion(&mut self) -> Result<f64> {
        if self.in_flight == 0 {
            return Err(Error::Executor("no running jobs to wait for".into()));
        }
        let start = Instant::now();
        loop {
            self.drain_channel();
            if !self.ready.is_empty() {
                return Ok(start.elapsed().as_secs_f64());
            }
            std::thread::sleep(self.polling);
        }
    }

    fn charge_overhead(&mut self) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knobspace::KnobSpace;

    /// Duration is the first knob value in seconds (tenths when `tenths` is set).
    struct Timed {
        space: KnobSpace,
        tenths: bool,
    }

    impl Target for Timed {
        fn space(&self) -> &KnobSpace {
            &self.space
        }
        fn rmsd_max(&self) -> f64 {
            2.1
        }
        fn evaluate(&self, x: &Configuration) -> Result<EvaluationResult> {
            if x.0[0] == 0 {
                return Err(Error::Evaluation("boom".into()));
            }
            let t = if self.tenths { x.0[0] as f64 / 10.0 } else { x.0[0] as f64 };
            Ok(EvaluationResult::from_measurements(t, 1.0, 2.1, t))
        }
    }

    fn timed(tenths: bool) -> Arc<dyn Target> {
        let space = KnobSpace::new(vec![crate::knobspace::KnobSpec::new(
            "d",
            0,
            1000,
            false,
            crate::knobspace::Dynamism::Runtime,
        )])
        .unwrap();
        Arc::new(Timed { space, tenths })
    }

    fn cfg(v: i64) -> Configuration {
        Configuration(vec![v])
    }

    #[test]
    fn submit_respects_worker_limit() {
        let mut ex = VirtualExecutor::new(timed(false), 3, 1.0, 0.0).unwrap();
        ex.submit(&cfg(5)).unwrap();
        assert_eq!(ex.idle(), 2);
        ex.submit(&cfg(6)).unwrap();
        ex.submit(&cfg(7)).unwrap();
        assert!(matches!(ex.submit(&cfg(8)), Err(Error::Executor(_))));
        ex.wait_for_completion().unwrap();
        assert_eq!(ex.collect_completed().len(), 1);
        assert!(ex.submit(&cfg(8)).is_ok());
    }

    #[test]
    fn shorter_job_completes_first() {
        let mut ex = VirtualExecutor::new(timed(false), 2, 1.0, 0.0).unwrap();
        assert!(ex.collect_completed().is_empty());
        let slow = ex.submit(&cfg(10)).unwrap();
        let fast = ex.submit(&cfg(5)).unwrap();
        ex.advance_until_any_completion().unwrap();
        let done = ex.collect_completed();
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].id, fast);
        ex.advance_until_any_completion().unwrap();
        assert_eq!(ex.collect_completed()[0].id, slow);
    }

    #[test]
    fn clock_rounds_to_polling_tick() {
        let mut ex = VirtualExecutor::new(timed(true), 2, 1.0, 0.0).unwrap();
        ex.submit(&cfg(72)).unwrap();
        assert_eq!(ex.advance_until_any_completion().unwrap(), 8.0);

        let mut ex = VirtualExecutor::new(timed(false), 2, 1.0, 0.0).unwrap();
        ex.submit(&cfg(3)).unwrap();
        ex.submit(&cfg(9)).unwrap();
        assert_eq!(ex.advance_until_any_completion().unwrap(), 3.0);
        assert_eq!(ex.collect_completed().len(), 1);
        assert_eq!(ex.running(), 1);

        let mut ex = VirtualExecutor::new(timed(true), 1, 1.0, 0.0).unwrap();
        ex.submit(&cfg(40)).unwrap();
        assert_eq!(ex.advance_until_any_completion().unwrap(), 4.0);
    }

    #[test]
    fn advance_without_jobs_errors() {
        let mut ex = VirtualExecutor::new(timed(false), 1, 1.0, 0.0).unwrap();
        assert!(ex.advance_until_any_completion().is_err());
    }

    #[test]
    fn simultaneous_completions_are_ordered() {
        let mut ex = VirtualExecutor::new(timed(false), 3, 1.0, 0.0).unwrap();
        ex.submit(&cfg(4)).unwrap();
        ex.submit(&cfg(2)).unwrap();
        ex.submit(&cfg(9)).unwrap();
        ex.set_clock(5.0);
        let done = ex.collect_completed();
        let times: Vec<f64> = done.iter().map(|c| c.completed_at).collect();
        assert_eq!(times, vec![2.0, 4.0]);
    }

    #[test]
    fn failure_is_reported_without_result() {
        let mut ex = VirtualExecutor::new(timed(false), 1, 1.0, 0.0).unwrap();
        ex.submit(&cfg(0)).unwrap();
        let done = ex.collect_completed();
        assert!(matches!(done[0].outcome, JobOutcome::Failed(_)));
    }

    #[test]
    fn local_backend_runs_and_returns_each_job_once() {
        let mut ex = LocalExecutor::new(timed(false), 2, Duration::from_millis(1)).unwrap();
        ex.submit(&cfg(1)).unwrap();
        ex.submit(&cfg(2)).unwrap();
        assert!(ex.submit(&cfg(3)).is_err());
        let mut seen = Vec::new();
        while seen.len() < 2 {
            ex.wait_for_completion().unwrap();
            seen.extend(ex.collect_completed().into_iter().map(|c| c.id));
        }
        seen.sort();
        assert_eq!(seen, vec![JobId(0), JobId(1)]);
        assert_eq!(ex.running(), 0);
    }

    #[test]
    fn job_state_machine() {
        assert!(JobState::Pending.can_become(JobState::Running));
        assert!(JobState::Running.can_become(JobState::Failed));
        assert!(!JobState::Done.can_become(JobState::Running));
        assert!(!JobState::Pending.can_become(JobState::Done));
    }
}
