//! Black-box targets: an analytic docking-application surrogate, an
//! external-command adapter, and the quality-projection cache in front of
//! either of them.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knobspace::{CacheKey, Configuration, KnobSpace};

pub const DEFAULT_RMSD_MAX: f64 = 2.1;

/// Outcome of one configuration evaluation: `objective = rmsd_p75^3 * exec_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub exec_time: f64,
    pub rmsd_p75: f64,
    pub objective: f64,
    pub feasible: bool,
    pub wall_clock: f64,
}

impl EvaluationResult {
    pub fn from_measurements(exec_time: f64, rmsd_p75: f64, rmsd_max: f64, wall_clock: f64) -> Self {
        Self {
            exec_time,
            rmsd_p75,
            objective: rmsd_p75.powi(3) * exec_time,
            feasible: rmsd_p75 <= rmsd_max,
            wall_clock,
        }
    }
}

/// Execution-time-only measurement, used on quality-cache hits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMeasurement {
    pub exec_time: f64,
    pub wall_clock: f64,
}

pub trait Target: Send + Sync {
    fn space(&self) -> &KnobSpace;

    fn rmsd_max(&self) -> f64;

    fn evaluate(&self, x: &Configuration) -> Result<EvaluationResult>;

    /// Measures only `T(x)`. The default runs a full evaluation.
    fn evaluate_time(&self, x: &Configuration) -> Result<TimeMeasurement> {
        let r = self.evaluate(x)?;
        Ok(TimeMeasurement {
            exec_time: r.exec_time,
            wall_clock: r.wall_clock,
        })
    }
}

impl<T: Target + ?Sized> Target for Arc<T> {
    fn space(&self) -> &KnobSpace {
        (**self).space()
    }
    fn rmsd_max(&self) -> f64 {
        (**self).rmsd_max()
    }
    fn evaluate(&self, x: &Configuration) -> Result<EvaluationResult> {
        (**self).evaluate(x)
    }
    fn evaluate_time(&self, x: &Configuration) -> Result<TimeMeasurement> {
        (**self).evaluate_time(x)
    }
}

/// Coefficients of the analytic surrogate.
///
/// With `q` the mean normalized quality knob, `c` normalized `cuda_threads`
/// and `b` normalized `buffer_size`:
/// `R = r_floor + r_amplitude * exp(-r_decay * q)` and
/// `T = t_base + t_quality * q + t_cuda * |c - cuda_optimum| + t_buffer * |b - buffer_optimum|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub r_floor: f64,
    pub r_amplitude: f64,
    pub r_decay: f64,
    pub t_base: f64,
    pub t_quality: f64,
    pub t_cuda: f64,
    pub cuda_optimum: f64,
    pub t_buffer: f64,
    pub buffer_optimum: f64,
    pub rmsd_max: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self {
            r_floor: 0.8,
            r_amplitude: 2.6,
            r_decay: 2.5,
            t_base: 30.0,
            t_quality: 300.0,
            t_cuda: 80.0,
            cuda_optimum: 0.6,
            t_buffer: 40.0,
            buffer_optimum: 0.5,
            rmsd_max: DEFAULT_RMSD_MAX,
        }
    }
}

impl SurrogateSpec {
    pub fn rmsd(&self, mean_quality: f64) -> f64 {
        self.r_floor + self.r_amplitude * (-self.r_decay * mean_quality).exp()
    }

    pub fn exec_time(&self, mean_quality: f64, cuda: f64, buffer: f64) -> f64 {
        self.t_base
            + self.t_quality * mean_quality
            + self.t_cuda * (cuda - self.cuda_optimum).abs()
            + self.t_buffer * (buffer - self.buffer_optimum).abs()
    }

    /// Smallest mean quality level meeting `rmsd_max`.
    pub fn feasibility_threshold(&self) -> f64 {
        ((self.rmsd_max - self.r_floor) / self.r_amplitude).ln() / -self.r_decay
    }
}

/// The analytic surrogate over a space that contains `cuda_threads`,
/// `buffer_size` and at least one quality knob.
#[derive(Debug)]
pub struct SurrogateTarget {
    spec: SurrogateSpec,
    space: KnobSpace,
    quality: Vec<usize>,
    cuda: usize,
    buffer: usize,
    full_evaluations: AtomicUsize,
    time_evaluations: AtomicUsize,
}

impl SurrogateTarget {
    pub fn new(space: KnobSpace, spec: SurrogateSpec) -> Result<Self> {
        let cuda = space
            .index_of("cuda_threads")
            .ok_or_else(|| Error::Domain("surrogate needs a `cuda_threads` knob".into()))?;
        let buffer = space
            .index_of("buffer_size")
            .ok_or_else(|| Error::Domain("surrogate needs a `buffer_size` knob".into()))?;
        let quality = space.quality_indices();
        if quality.is_empty() {
            return Err(Error::Domain("surrogate needs at least one quality knob".into()));
        }
        Ok(Self {
            spec,
            space,
            quality,
            cuda,
            buffer,
            full_evaluations: AtomicUsize::new(0),
            time_evaluations: AtomicUsize::new(0),
        })
    }

    pub fn ligen() -> Self {
        Self::new(KnobSpace::ligen8(), SurrogateSpec::default()).expect("built-in space fits the surrogate")
    }

    pub fn spec(&self) -> &SurrogateSpec {
        &self.spec
    }

    /// Returns `(mean quality, normalized cuda_threads, normalized buffer_size)`.
    fn coordinates(&self, x: &Configuration) -> Result<(f64, f64, f64)> {
        let u = self.space.normalize(x)?;
        let q = self.quality.iter().map(|&k| u[k]).sum::<f64>() / self.quality.len() as f64;
        Ok((q, u[self.cuda], u[self.buffer]))
    }

    /// Number of full evaluations, i.e. `R(x)` computations.
    pub fn rmsd_computations(&self) -> usize {
        self.full_evaluations.load(Ordering::Relaxed)
    }

    pub fn time_only_computations(&self) -> usize {
        self.time_evaluations.load(Ordering::Relaxed)
    }
}

impl Target for SurrogateTarget {
    fn space(&self) -> &KnobSpace {
        &self.space
    }

    fn rmsd_max(&self) -> f64 {
        self.spec.rmsd_max
    }

    fn evaluate(&self, x: &Configuration) -> Result<EvaluationResult> {
        let (q, c, b) = self.coordinates(x)?;
        self.full_evaluations.fetch_add(1, Ordering::Relaxed);
        let t = self.spec.exec_time(q, c, b);
        Ok(EvaluationResult::from_measurements(t, self.spec.rmsd(q), self.spec.rmsd_max, t))
    }

    fn evaluate_time(&self, x: &Configuration) -> Result<TimeMeasurement> {
        let (q, c, b) = self.coordinates(x)?;
        self.time_evaluations.fetch_add(1, Ordering::Relaxed);
        let t = self.spec.exec_time(q, c, b);
        Ok(TimeMeasurement {
            exec_time: t,
            wall_clock: t,
        })
    }
}

/// Exposes a subset of an inner target's knobs; the rest stay at fixed values.
pub struct SubspaceTarget<T> {
    inner: T,
    space: KnobSpace,
    free: Vec<usize>,
    base: Configuration,
}

impl<T: Target> SubspaceTarget<T> {
    pub fn new(inner: T, free_knobs: &[&str], base: Configuration) -> Result<Self> {
        inner.space().validate(&base)?;
        let mut free = Vec::with_capacity(free_knobs.len());
        for name in free_knobs {
            free.push(
                inner
                    .space()
                    .index_of(name)
                    .ok_or_else(|| Error::Domain(format!("unknown knob `{name}`")))?,
            );
        }
        let space = KnobSpace::new(free.iter().map(|&k| inner.space().knobs()[k].clone()).collect())?;
        Ok(Self {
            inner,
            space,
            free,
            base,
        })
    }

    pub fn embed(&self, x: &Configuration) -> Result<Configuration> {
        self.space.validate(x)?;
        let mut full = self.base.clone();
        for (&k, &v) in self.free.iter().zip(&x.0) {
            full.0[k] = v;
        }
        Ok(full)
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Target> Target for SubspaceTarget<T> {
    fn space(&self) -> &KnobSpace {
        &self.space
    }
    fn rmsd_max(&self) -> f64 {
        self.inner.rmsd_max()
    }
    fn evaluate(&self, x: &Configuration) -> Result<EvaluationResult> {
        self.inner.evaluate(&self.embed(x)?)
    }
    fn evaluate_time(&self, x: &Configuration) -> Result<TimeMeasurement> {
        self.inner.evaluate_time(&self.embed(x)?)
    }
}

#[derive(Debug, Deserialize)]
struct AdapterOutput {
    exec_time: f64,
    rmsd_p75: f64,
}

/// Runs a shell command per evaluation and reads one JSON line from its stdout:
/// `{"exec_time": <seconds>, "rmsd_p75": <value>}`.
#[derive(Debug, Clone)]
pub struct ExternalTarget {
    template: String,
    space: KnobSpace,
    rmsd_max: f64,
    timeout: Duration,
}

impl ExternalTarget {
    pub fn new(template: &str, space: KnobSpace, rmsd_max: f64, timeout: Duration) -> Result<Self> {
        for knob in space.knobs() {
            let token = format!("{{{}}}", knob.name);
            if !template.contains(&token) {
                return Err(Error::Settings(format!("command template lacks placeholder {token}")));
            }
        }
        Ok(Self {
            template: template.to_string(),
            space,
            rmsd_max,
            timeout,
        })
    }

    pub fn render(&self, x: &Configuration) -> Result<String> {
        self.space.validate(x)?;
        let mut cmd = self.template.clone();
        for (knob, v) in self.space.knobs().iter().zip(&x.0) {
            cmd = cmd.replace(&format!("{{{}}}", knob.name), &v.to_string());
        }
        Ok(cmd)
    }

    fn run(&self, command: &str) -> Result<(String, f64)> {
        let started = Instant::now();
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if started.elapsed() > self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Evaluation(format!(
                    "`{command}` timed out after {:.1} s",
                    self.timeout.as_secs_f64()
                )));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(Error::Evaluation(format!(
                "`{command}` exited with {status}; stderr: {}",
                err.trim()
            )));
        }
        Ok((out, started.elapsed().as_secs_f64()))
    }
}

fn parse_adapter_output(stdout: &str) -> Result<AdapterOutput> {
    let line = stdout
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Evaluation("adapter printed nothing".into()))?;
    serde_json::from_str(line.trim())
        .map_err(|e| Error::Evaluation(format!("unparseable adapter output `{}`: {e}", line.trim())))
}

impl Target for ExternalTarget {
    fn space(&self) -> &KnobSpace {
        &self.space
    }

    fn rmsd_max(&self) -> f64 {
        self.rmsd_max
    }

    fn evaluate(&self, x: &Configuration) -> Result<EvaluationResult> {
        let command = self.render(x)?;
        let (stdout, wall) = self.run(&command)?;
        let parsed = parse_adapter_output(&stdout)?;
        if !(parsed.exec_time > 0.0 && parsed.rmsd_p75 > 0.0) {
            return Err(Error::Evaluation(format!(
                "adapter reported non-positive metrics: {stdout}"
            )));
        }
        Ok(EvaluationResult::from_measurements(
            parsed.exec_time,
            parsed.rmsd_p75,
            self.rmsd_max,
            wall,
        ))
    }
}

/// Known `R(x)` values keyed by quality projection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityCache {
    entries: BTreeMap<CacheKey, f64>,
    pub hits: usize,
    pub misses: usize,
}

impl QualityCache {
    pub fn get(&self, key: &CacheKey) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn insert(&mut self, key: CacheKey, rmsd: f64) {
        self.entries.insert(key, rmsd);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }

    /// Loads a JSON map `{ "<joined quality values>": rmsd }`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let raw: BTreeMap<String, f64> = serde_json::from_str(&text)?;
        Ok(Self {
            entries: raw.into_iter().map(|(k, v)| (CacheKey(k), v)).collect(),
            hits: 0,
            misses: 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw: BTreeMap<&str, f64> = self.entries.iter().map(|(k, v)| (k.0.as_str(), *v)).collect();
        std::fs::write(path, serde_json::to_string_pretty(&raw)?)?;
        Ok(())
    }
}

/// Evaluates through `inner`, reusing `R(x)` whenever the quality projection was seen before.
pub fn cached_evaluate<T: Target + ?Sized>(
    cache: &mut QualityCache,
    inner: &T,
    x: &Configuration,
) -> Result<EvaluationResult> {
    let key = inner.space().quality_key(x);
    if let Some(rmsd) = cache.get(&key) {
        let t = inner.evaluate_time(x)?;
        cache.hits += 1;
        return Ok(EvaluationResult::from_measurements(t.exec_time, rmsd, inner.rmsd_max(), t.wall_clock));
    }
    let r = inner.evaluate(x)?;
    cache.misses += 1;
    cache.insert(key, r.rmsd_p75);
    Ok(r)
}

/// A [`Target`] wrapper that owns a [`QualityCache`].
pub struct CachedTarget<T> {
    inner: T,
    cache: Mutex<QualityCache>,
}

impl<T: Target> CachedTarget<T> {
    pub fn new(inner: T) -> Self {
        Self::with_cache(inner, QualityCache::default())
    }

    pub fn with_cache(inner: T, cache: QualityCache) -> Self {
        Self {
            inner,
            cache: Mutex::new(cache),
        }
    }

    pub fn cache(&self) -> QualityCache {
        self.cache.lock().expect("cache lock").clone()
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Target> Target for CachedTarget<T> {
    fn space(&self) -> &KnobSpace {
        self.inner.space()
    }

    fn rmsd_max(&self) -> f64 {
        self.inner.rmsd_max()
    }

    fn evaluate(&self, x: &Configuration) -> Result<EvaluationResult> {
        let key = self.inner.space().quality_key(x);
        let cached = self.cache.lock().expect("cache lock").get(&key);
        match cached {
            Some(rmsd) => {
                let t = self.inner.evaluate_time(x)?;
                self.cache.lock().expect("cache lock").hits += 1;
                Ok(EvaluationResult::from_measurements(t.exec_time, rmsd, self.rmsd_max(), t.wall_clock))
            }
            None => {
                let r = self.inner.evaluate(x)?;
                let mut cache = self.cache.lock().expect("cache lock");
                cache.misses += 1;
                cache.insert(key, r.rmsd_p75);
                Ok(r)
            }
        }
    }
}
