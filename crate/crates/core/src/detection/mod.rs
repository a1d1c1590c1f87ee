//! Geometric object detection: single-linkage clustering, minimum-area box
//! fitting and footprint-size classification, plus background subtraction for
//! fixed roadside sensors.

mod cluster;
mod fit;

pub use cluster::euclidean_clusters;
pub use fit::{convex_hull, min_area_rect, Rect};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Micros, PointCloud, SensorId};
use crate::geometry::{ClassLabel, OrientedBox, Vec3};
use crate::world::Background;

/// Smallest half-extent a fitted box may have, meters.
pub const MIN_HALF_EXTENT: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("cloud and background come from different beam grids")]
    GridMismatch,
    #[error("cloud carries no beam indices")]
    MissingBeams,
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: OrientedBox,
    pub source: SensorId,
    pub timestamp: Micros,
    pub point_count: u32,
}

/// Full footprint dimensions (meters) a class may not exceed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeBound {
    pub max_length: f64,
    pub max_width: f64,
}

impl SizeBound {
    fn admits(&self, length: f64, width: f64) -> bool {
        length <= self.max_length && width <= self.max_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassTable {
    pub pedestrian: SizeBound,
    pub bicycle: SizeBound,
    pub vehicle: SizeBound,
}

impl Default for ClassTable {
    fn default() -> Self {
        Self {
            pedestrian: SizeBound { max_length: 1.0, max_width: 1.0 },
            bicycle: SizeBound { max_length: 2.2, max_width: 1.0 },
            vehicle: SizeBound { max_length: 6.0, max_width: 2.6 },
        }
    }
}

impl ClassTable {
    /// Smallest admitting class wins: pedestrian, then bicycle, then vehicle.
    pub fn classify(&self, length: f64, width: f64) -> ClassLabel {
        let (length, width) = if width > length { (width, length) } else { (length, width) };
        if self.pedestrian.admits(length, width) {
            ClassLabel::Pedestrian
        } else if self.bicycle.admits(length, width) {
            ClassLabel::Bicycle
        } else if self.vehicle.admits(length, width) {
            ClassLabel::Vehicle
        } else {
            ClassLabel::Unknown
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Single-linkage distance in xy, meters.
    pub cluster_radius: f64,
    pub min_cluster_size: usize,
    pub classes: ClassTable,
    /// Max range difference to a background return for a point to count as static, meters.
    pub background_tolerance: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { cluster_radius: 0.7, min_cluster_size: 5, classes: ClassTable::default(), background_tolerance: 0.15 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(self.cluster_radius > 0.0) {
            return Err(DetectionError::InvalidConfig("cluster_radius must be positive".into()));
        }
        if self.min_cluster_size < 3 {
            return Err(DetectionError::InvalidConfig("min_cluster_size must be at least 3".into()));
        }
        if !(self.background_tolerance >= 0.0) {
            return Err(DetectionError::InvalidConfig("background_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Drops every point whose range is within `tolerance` of the background
/// return on the same beam. The cloud must be a raw sensor-frame scan.
pub fn eliminate_static(cloud: &PointCloud, background: &Background, tolerance: f64) -> Result<PointCloud, DetectionError> {
    let beams = cloud.beams.as_ref().ok_or(DetectionError::MissingBeams)?;
    if cloud.grid != Some(background.grid) {
        return Err(DetectionError::GridMismatch);
    }
    let mut points = Vec::with_capacity(cloud.points.len());
    let mut kept_beams = Vec::with_capacity(beams.len());
    for (p, &b) in cloud.points.iter().zip(beams) {
        let is_static = background.ranges.get(b as usize).copied().flatten().is_some_and(|bg| (p.norm() - bg).abs() <= tolerance);
        if !is_static {
            points.push(*p);
            kept_beams.push(b);
        }
    }
    let mut out = PointCloud::new(points, cloud.frame, cloud.timestamp, cloud.source);
    out.beams = Some(kept_beams);
    out.grid = cloud.grid;
    Ok(out)
}

/// Fits a box to one cluster. `None` for empty input.
pub fn fit_box(points: &[Vec3], classes: &ClassTable) -> Option<OrientedBox> {
    let xy: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
    let rect = min_area_rect(&xy)?.canonical();
    let (zmin, zmax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
    let extent = Vec3::new(
        rect.half[0].max(MIN_HALF_EXTENT),
        rect.half[1].max(MIN_HALF_EXTENT),
        ((zmax - zmin) / 2.0).max(MIN_HALF_EXTENT),
    );
    let class_label = classes.classify(2.0 * extent.x, 2.0 * extent.y);
    let center = Vec3::new(rect.center[0], rect.center[1], (zmin + zmax) / 2.0);
    OrientedBox::new(center, extent, rect.yaw, class_label).ok()
}

/// Clusters a metric-frame cloud and fits one classified box per cluster.
/// Detections come back sorted by descending point count, ties by center.
pub fn detect(cloud: &PointCloud, config: &DetectorConfig) -> Vec<Detection> {
    let clusters = euclidean_clusters(&cloud.points, config.cluster_radius);
    let mut out: Vec<Detection> = clusters
        .into_iter()
        .filter(|c| c.len() >= config.min_cluster_size)
        .filter_map(|c| {
            let pts: Vec<Vec3> = c.iter().map(|&i| cloud.points[i]).collect();
            let bbox = fit_box(&pts, &config.classes)?;
            Some(Detection { bbox, source: cloud.source, timestamp: cloud.timestamp, point_count: pts.len() as u32 })
        })
        .collect();
    sort_detections(&mut out);
    out
}

/// Descending point count; ties by source, then center x, y.
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.point_count
            .cmp(&a.point_count)
            .then(a.source.cmp(&b.source))
            .then(a.bbox.center.x.total_cmp(&b.bbox.center.x))
            .then(a.bbox.center.y.total_cmp(&b.bbox.center.y))
    });
}
