//! The integer configuration domain and its unit-cube embedding.
//!
//! Every knob is an inclusive integer range. Optimizers work on the unit cube
//! and project back with [`KnobSpace::denormalize_round`]. Knobs flagged
//! `affects_quality` form the quality projection used as the cache key and as
//! the feature set of the constraint model.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamism {
    CompileTime,
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnobSpec {
    pub name: String,
    pub lower: i64,
    pub upper: i64,
    pub affects_quality: bool,
    #[serde(default = "default_dynamism")]
    pub dynamism: Dynamism,
}

fn default_dynamism() -> Dynamism {
    Dynamism::Runtime
}

impl KnobSpec {
    pub fn new(name: &str, lower: i64, upper: i64, affects_quality: bool, dynamism: Dynamism) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            affects_quality,
            dynamism,
        }
    }

    fn span(&self) -> f64 {
        (self.upper - self.lower) as f64
    }
}

/// A point of the integer box, one value per knob in space order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration(pub Vec<i64>);

impl Configuration {
    pub fn values(&self) -> &[i64] {
        &self.0
    }
}

impl From<Vec<i64>> for Configuration {
    fn from(values: Vec<i64>) -> Self {
        Self(values)
    }
}

/// Key of the quality projection; equal keys share the same `R(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum KnobDocument {
    List(Vec<KnobSpec>),
    Table { knobs: Vec<KnobSpec> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnobSpace {
    knobs: Vec<KnobSpec>,
}

impl KnobSpace {
    pub fn new(knobs: Vec<KnobSpec>) -> Result<Self> {
        if knobs.is_empty() {
            return Err(Error::Domain("knob space must contain at least one knob".into()));
        }
        let mut seen = HashSet::new();
        for knob in &knobs {
            if knob.lower >= knob.upper {
                return Err(Error::Domain(format!(
                    "knob `{}`: lower bound {} must be below upper bound {}",
                    knob.name, knob.lower, knob.upper
                )));
            }
            if !seen.insert(knob.name.as_str()) {
                return Err(Error::Domain(format!("duplicate knob name `{}`", knob.name)));
            }
        }
        Ok(Self { knobs })
    }

    /// The eight LiGen docking knobs; `buffer_size` is expressed in MB.
    pub fn ligen8() -> Self {
        use Dynamism::*;
        let knobs = vec![
            KnobSpec::new("align_split", 8, 72, true, CompileTime),
            KnobSpec::new("optimize_split", 8, 72, true, CompileTime),
            KnobSpec::new("repetitions", 1, 5, true, CompileTime),
            KnobSpec::new("cuda_threads", 32, 256, false, Runtime),
            KnobSpec::new("num_restarts", 32, 256, true, Runtime),
            KnobSpec::new("clipping", 10, 256, true, Runtime),
            KnobSpec::new("sim_thresh", 1, 4, true, Runtime),
            KnobSpec::new("buffer_size", 1, 20, false, Runtime),
        ];
        Self { knobs }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "ligen8" => Ok(Self::ligen8()),
            other => Err(Error::Domain(format!("unknown built-in knob space `{other}`"))),
        }
    }

    /// Parses a TOML (`[[knobs]]` tables) or JSON (array or `{"knobs": [...]}`) document.
    pub fn from_str_with_format(text: &str, json: bool) -> Result<Self> {
        let doc: KnobDocument = if json {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text)?
        };
        let knobs = match doc {
            KnobDocument::List(k) | KnobDocument::Table { knobs: k } => k,
        };
        Self::new(knobs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::from_str_with_format(&text, json)
    }

    pub fn knobs(&self) -> &[KnobSpec] {
        &self.knobs
    }

    pub fn dim(&self) -> usize {
        self.knobs.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.knobs.iter().position(|k| k.name == name)
    }

    pub fn quality_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&k| self.knobs[k].affects_quality).collect()
    }

    pub fn validate(&self, x: &Configuration) -> Result<()> {
        if x.0.len() != self.dim() {
            return Err(Error::Domain(format!(
                "configuration has {} values, space has {} knobs",
                x.0.len(),
                self.dim()
            )));
        }
        for (knob, &v) in self.knobs.iter().zip(&x.0) {
            if v < knob.lower || v > knob.upper {
                return Err(Error::Domain(format!(
                    "knob `{}` = {} outside [{}, {}]",
                    knob.name, v, knob.lower, knob.upper
                )));
            }
        }
        Ok(())
    }

    pub fn normalize(&self, x: &Configuration) -> Result<Vec<f64>> {
        self.validate(x)?;
        Ok(self
            .knobs
            .iter()
            .zip(&x.0)
            .map(|(k, &v)| (v - k.lower) as f64 / k.span())
            .collect())
    }

    /// Clamps to the cube, scales, and rounds half-up to the integer grid.
    pub fn denormalize_round(&self, u: &[f64]) -> Result<Configuration> {
        if u.len() != self.dim() {
            return Err(Error::Domain(format!(
                "unit point has {} components, space has {} knobs",
                u.len(),
                self.dim()
            )));
        }
        let mut values = Vec::with_capacity(self.dim());
        for (knob, &c) in self.knobs.iter().zip(u) {
            if !c.is_finite() {
                return Err(Error::Domain(format!("non-finite coordinate for knob `{}`", knob.name)));
            }
            let scaled = knob.lower as f64 + c.clamp(0.0, 1.0) * knob.span();
            let v = (scaled + 0.5).floor() as i64;
            values.push(v.clamp(knob.lower, knob.upper));
        }
        Ok(Configuration(values))
    }

    pub fn quality_key(&self, x: &Configuration) -> CacheKey {
        let parts: Vec<String> = self
            .knobs
            .iter()
            .zip(&x.0)
            .filter(|(k, _)| k.affects_quality)
            .map(|(_, v)| v.to_string())
            .collect();
        CacheKey(parts.join(","))
    }

    /// Normalized quality projection, the constraint-model feature vector.
    pub fn quality_features(&self, x: &Configuration) -> Result<Vec<f64>> {
        let u = self.normalize(x)?;
        Ok(self
            .knobs
            .iter()
            .zip(u)
            .filter(|(k, _)| k.affects_quality)
            .map(|(_, v)| v)
            .collect())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        Configuration(
            self.knobs
                .iter()
                .map(|k| rng.random_range(k.lower..=k.upper))
                .collect(),
        )
    }

    /// Total number of lattice points (saturating).
    pub fn cardinality(&self) -> u128 {
        self.knobs
            .iter()
            .fold(1u128, |acc, k| acc.saturating_mul((k.upper - k.lower + 1) as u128))
    }
}
