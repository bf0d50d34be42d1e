#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use knobtune::knobspace::{Configuration, Dynamism, KnobSpace, KnobSpec};
use knobtune::target::{EvaluationResult, Target};
use knobtune::Result;

/// Two-knob target whose wall-clock durations follow a fixed script, in call order.
pub struct ScriptedTarget {
    space: KnobSpace,
    durations: Vec<f64>,
    calls: AtomicUsize,
}

impl ScriptedTarget {
    pub fn new(durations: Vec<f64>) -> Self {
        let space = KnobSpace::new(vec![
            KnobSpec::new("quality", 0, 20, true, Dynamism::Runtime),
            KnobSpec::new("speed", 0, 20, false, Dynamism::Runtime),
        ])
        .unwrap();
        Self {
            space,
            durations,
            calls: AtomicUsize::new(0),
        }
    }
}

impl Target for ScriptedTarget {
    fn space(&self) -> &KnobSpace {
        &self.space
    }

    fn rmsd_max(&self) -> f64 {
        2.1
    }

    fn evaluate(&self, x: &Configuration) -> Result<EvaluationResult> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        let wall = self.durations[i % self.durations.len()];
        let (q, s) = (x.0[0] as f64, x.0[1] as f64);
        let rmsd = 3.0 - q / 10.0;
        let exec = 10.0 + 2.0 * q + (s - 7.0).powi(2);
        Ok(EvaluationResult::from_measurements(exec, rmsd, 2.1, wall))
    }
}
