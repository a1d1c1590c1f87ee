//! Timestamped point clouds tagged with their frame and source sensor.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Microseconds since scenario start.
pub type Micros = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SensorId(pub u32);

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sensor-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    SensorLocal,
    VehicleBody,
    World,
}

/// Azimuth x elevation layout of a rotating lidar. Beam index is
/// `channel * azimuth_count + azimuth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamGrid {
    pub azimuth_count: u32,
    pub channels: u32,
}

impl BeamGrid {
    pub fn len(&self) -> usize {
        self.azimuth_count as usize * self.channels as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, channel: u32, azimuth: u32) -> u32 {
        channel * self.azimuth_count + azimuth
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("timestamp mismatch: {0} vs {1}")]
    TimestampMismatch(Micros, Micros),
}

/// A contiguous run of points that came from one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub source: SensorId,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub frame: Frame,
    pub timestamp: Micros,
    pub source: SensorId,
    /// Per-point beam index, present on raw scans.
    pub beams: Option<Vec<u32>>,
    pub grid: Option<BeamGrid>,
    /// Source runs; a single-sensor cloud has exactly one.
    pub segments: Vec<Segment>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, frame: Frame, timestamp: Micros, source: SensorId) -> Self {
        let segments = vec![Segment { source, len: points.len() }];
        Self { points, frame, timestamp, source, beams: None, grid: None, segments }
    }

    pub fn empty(frame: Frame, timestamp: Micros, source: SensorId) -> Self {
        Self::new(Vec::new(), frame, timestamp, source)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sources(&self) -> Vec<SensorId> {
        let mut out: Vec<SensorId> = Vec::new();
        for s in &self.segments {
            if !out.contains(&s.source) {
                out.push(s.source);
            }
        }
        out
    }

    /// Applies `f` to every point and retags the frame. Beam bookkeeping is kept.
    pub fn map_points(&self, frame: Frame, f: impl Fn(Vec3) -> Vec3) -> PointCloud {
        PointCloud { points: self.points.iter().map(|p| f(*p)).collect(), frame, ..self.clone() }
    }

    /// Keeps every `k`-th point.
    pub fn downsample(&self, k: usize) -> PointCloud {
        let k = k.max(1);
        if k == 1 {
            return self.clone();
        }
        let points: Vec<Vec3> = self.points.iter().step_by(k).copied().collect();
        let beams = self.beams.as_ref().map(|b| b.iter().step_by(k).copied().collect());
        PointCloud { segments: vec![Segment { source: self.source, len: points.len() }], points, beams, ..self.clone() }
    }
}
