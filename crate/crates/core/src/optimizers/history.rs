use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::executor::JobId;
use crate::knobspace::{Configuration, KnobSpace};

/// One row of the observation history. Placeholders carry the GP posterior
/// mean recorded at submission and no constraint value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub config: Configuration,
    pub objective: f64,
    pub constraint_value: Option<f64>,
    pub feasible: bool,
    pub is_placeholder: bool,
    /// Submission index within the campaign; initial points come first.
    pub iteration: usize,
    pub submit_time: f64,
    pub complete_time: Option<f64>,
    pub agent_id: usize,
    #[serde(skip)]
    pub job: Option<JobId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    entries: Vec<HistoryEntry>,
}

impl History {
    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<HistoryEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: HistoryEntry) {
        self.entries.push(entry);
    }

    /// Removes every placeholder; true observations keep their order.
    pub fn strip_placeholders(&mut self) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| !e.is_placeholder);
        before - self.entries.len()
    }

    pub fn placeholder_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_placeholder).count()
    }

    pub fn true_entries(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter().filter(|e| !e.is_placeholder)
    }

    pub fn true_count(&self) -> usize {
        self.true_entries().count()
    }

    /// Best feasible objective, falling back to the best observed one.
    pub fn incumbent(&self) -> Option<f64> {
        let best_feasible = self
            .true_entries()
            .filter(|e| e.feasible)
            .map(|e| e.objective)
            .min_by(f64::total_cmp);
        best_feasible.or_else(|| self.true_entries().map(|e| e.objective).min_by(f64::total_cmp))
    }

    /// GP training data over every entry, placeholders included.
    pub fn gp_data(&self, space: &KnobSpace) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut inputs = Vec::with_capacity(self.entries.len());
        let mut targets = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            inputs.push(space.normalize(&e.config)?);
            targets.push(e.objective);
        }
        Ok((inputs, targets))
    }

    /// Constraint-model training rows from true observations only.
    pub fn constraint_data(&self, space: &KnobSpace) -> Result<Vec<(Vec<f64>, f64)>> {
        self.true_entries()
            .filter_map(|e| e.constraint_value.map(|g| (e, g)))
            .map(|(e, g)| Ok((space.quality_features(&e.config)?, g)))
            .collect()
    }
}
