//! Machine-readable record of one inference run.

use std::path::Path;

use serde::Serialize;
use smite_core::GuidanceConfig;

use crate::energy::EnergyTerms;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub timestep: usize,
    pub learning_rate: f64,
    /// Attention cells that received a temporal vote at this step.
    pub tracked_cells: usize,
    /// Energy at every iterate, evaluated before its update.
    pub energies: Vec<EnergyTerms>,
}

/// Frame span processed as one unit, with the leading frames whose state
/// was carried in from the previous span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SliceRecord {
    pub start: usize,
    pub end: usize,
    pub carried: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub model_id: String,
    pub num_segments: usize,
    pub frames: usize,
    pub frame_size: (usize, usize),
    pub score_resolution: (usize, usize),
    pub guidance: bool,
    pub config: GuidanceConfig,
    pub steps: Vec<StepRecord>,
    pub slices: Vec<SliceRecord>,
    /// Per-frame `(y0, x0, y1, x1)` crop boxes when the run was refined.
    pub crops: Option<Vec<(usize, usize, usize, usize)>>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
