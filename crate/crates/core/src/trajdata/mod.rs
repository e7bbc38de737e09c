//! Trajectory ingestion: annotation files, resampling onto the 0.4 s grid,
//! 20-frame windowing and conversion between positions and displacements.

mod cache;
mod parse;
mod resample;
mod window;

pub use cache::{read_windows, write_windows, CACHE_MAGIC, CACHE_VERSION};
pub use parse::{parse_annotations, parse_annotations_str};
pub use resample::{resample, Resampled};
pub use window::{
    build_windows, to_absolute, to_displacements, DisplacementTensor, SequenceWindow, WindowMode,
};

/// One annotated position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawAnnotation {
    pub frame: i64,
    pub agent: i64,
    pub x: f64,
    pub y: f64,
}

/// All annotations of one recording, sorted by `(frame, agent)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub annotations: Vec<RawAnnotation>,
    /// Seconds per unit of frame id.
    pub frame_period: f64,
    /// Agent id of the recording robot, when the log identifies one.
    pub robot_id: Option<i64>,
}

impl Scene {
    pub fn new(name: impl Into<String>, mut annotations: Vec<RawAnnotation>, frame_period: f64) -> Self {
        annotations.sort_by_key(|a| (a.frame, a.agent));
        Self { name: name.into(), annotations, frame_period, robot_id: None }
    }

    /// Smallest spacing between consecutive distinct frame ids (1 when the
    /// scene has fewer than two distinct frames).
    pub fn frame_step(&self) -> i64 {
        let mut frames: Vec<i64> = self.annotations.iter().map(|a| a.frame).collect();
        frames.dedup();
        frames.windows(2).map(|w| w[1] - w[0]).fold(0, gcd).max(1)
    }

    /// Declares that consecutive annotated frames are `hz` apart.
    pub fn with_source_rate(mut self, hz: f64) -> Self {
        self.frame_period = 1.0 / (hz * self.frame_step() as f64);
        self
    }

    pub fn agent_ids(&self) -> Vec<i64> {
        let mut ids: Vec<i64> = self.annotations.iter().map(|a| a.agent).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn frame_count(&self) -> usize {
        let mut frames: Vec<i64> = self.annotations.iter().map(|a| a.frame).collect();
        frames.dedup();
        frames.len()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}
