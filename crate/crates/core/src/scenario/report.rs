//! Run metrics, analytic braking check, occlusion sectors and report output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionMode;
use crate::geometry::{normalize_angle, OrientedBox, Pose, Vec3};
use crate::world::{ray_box_entry, LidarConfig};

/// Deceleration used by the braking check, m/s^2.
pub const BRAKING_DECELERATION: f64 = 5.0;
/// Driver plus system reaction time, seconds.
pub const REACTION_TIME: f64 = 0.69;

/// Stopping distance from `speed` m/s: reaction travel plus braking travel.
pub fn required_braking_distance(speed: f64) -> f64 {
    let v = speed.max(0.0);
    v * v / (2.0 * BRAKING_DECELERATION) + v * REACTION_TIME
}

/// Contiguous blocked sector in ego-right degrees: 0 is straight ahead,
/// 90 is the right side, negative values are on the left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AzimuthInterval {
    pub from_deg: f64,
    pub to_deg: f64,
}

impl AzimuthInterval {
    pub fn contains(&self, deg: f64) -> bool {
        deg >= self.from_deg && deg <= self.to_deg
    }

    pub fn width(&self) -> f64 {
        self.to_deg - self.from_deg
    }
}

/// Bearing of `point` from `ego` in ego-right degrees.
pub fn ego_right_bearing(ego: &Pose, point: Vec3) -> f64 {
    let d = point - ego.position;
    -normalize_angle(d.y.atan2(d.x) - ego.yaw).to_degrees()
}

/// Sectors of the horizontal lidar ring (sensor height, zero elevation) whose
/// rays hit `blocker` within range. Sorted by start; a sector crossing the
/// rear is reported once with `to_deg` above 180.
pub fn occlusion_profile(ego: &Pose, mount: Vec3, blocker: &OrientedBox, lidar: &LidarConfig) -> Vec<AzimuthInterval> {
    let origin = ego.transform_point(mount);
    let n = (std::f64::consts::TAU / lidar.horizontal_resolution).round().max(1.0) as usize;
    let step = 360.0 / n as f64;
    // Beam k points k*step degrees to the right of the heading.
    let blocked: Vec<bool> = (0..n)
        .map(|k| {
            let right = k as f64 * step;
            let a = ego.yaw - right.to_radians();
            let dir = Vec3::new(a.cos(), a.sin(), 0.0);
            ray_box_entry(origin, dir, blocker).is_some_and(|t| t <= lidar.max_range)
        })
        .collect();
    if blocked.iter().all(|b| *b) {
        return vec![AzimuthInterval { from_deg: 0.0, to_deg: 360.0 - step }];
    }
    // Start scanning just after a clear beam so no run is split.
    let start = blocked.iter().position(|b| !b).expect("some beam is clear");
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    for i in 1..=n {
        let k = start + i;
        let hit = blocked[k % n];
        match (hit, run) {
            (true, None) => run = Some(k),
            (false, Some(s)) => {
                out.push((s, k - 1));
                run = None;
            }
            _ => {}
        }
    }
    let mut intervals: Vec<AzimuthInterval> = out
        .into_iter()
        .map(|(s, e)| {
            let mut from = (s % n) as f64 * step;
            let mut to = from + (e - s) as f64 * step;
            if from > 180.0 {
                from -= 360.0;
                to -= 360.0;
            }
            AzimuthInterval { from_deg: from, to_deg: to }
        })
        .collect();
    intervals.sort_by(|a, b| a.from_deg.total_cmp(&b.from_deg));
    intervals
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionReport {
    pub time_s: f64,
    pub blocked: Vec<AzimuthInterval>,
    /// Bearing of the target from the ego, ego-right degrees.
    pub target_bearing_deg: f64,
    pub target_hidden: bool,
}

/// Per-source overlap triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SourceOverlap {
    pub vehicle: Option<f64>,
    pub road: Option<f64>,
    pub fused: Option<f64>,
}

/// One row of the per-tick time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time_s: f64,
    pub ego_x: f64,
    pub ego_y: f64,
    pub target_x: f64,
    pub target_y: f64,
    /// Footprint gap between ego and target, meters.
    pub distance: f64,
    pub seen_by_vehicle: bool,
    pub seen_by_road: bool,
    pub target_confirmed: bool,
    pub confirmed_tracks: usize,
    pub overlap: SourceOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LinkStats {
    pub accepted: u64,
    pub parse_errors: u64,
    pub stale: u64,
    pub superseded: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solo,
    Coop,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "solo" => Ok(Mode::Solo),
            "coop" => Ok(Mode::Coop),
            other => Err(format!("unknown mode {other:?}, expected solo or coop")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub mode: Mode,
    pub fusion: FusionMode,
    pub seed: u64,
    pub tick_period_s: f64,
    pub ticks: u64,
    /// Ego-to-target footprint gap when the target's track is first confirmed.
    pub first_detection_distance: Option<f64>,
    pub first_detection_time_s: Option<f64>,
    /// Seconds from first confirmed detection to first footprint contact.
    pub time_to_collision_at_first_detection: Option<f64>,
    pub min_approach_distance: f64,
    pub collision_flag: bool,
    pub collision_time_s: Option<f64>,
    /// Ego ground speed at first detection (or at closest approach when never detected).
    pub ego_speed: f64,
    pub required_braking_distance: f64,
    pub braking_feasible: bool,
    /// Means over ticks where all three sources matched the target.
    pub mean_overlap: SourceOverlap,
    pub evaluated_ticks: usize,
    /// Published reference values; the geometric detector is not expected to reproduce them.
    pub reference_overlap: SourceOverlap,
    pub occlusion: Option<OcclusionReport>,
    pub link: LinkStats,
    pub series: Vec<TickRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?}, expected json or csv")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const CSV_HEADER: [&str; 14] = [
    "tick",
    "time_s",
    "ego_x",
    "ego_y",
    "target_x",
    "target_y",
    "distance",
    "seen_by_vehicle",
    "seen_by_road",
    "target_confirmed",
    "confirmed_tracks",
    "overlap_vehicle",
    "overlap_road",
    "overlap_fused",
];

impl MetricsReport {
    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    /// One row per tick under [`CSV_HEADER`].
    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.series {
            w.write_record([
                r.tick.to_string(),
                format!("{:.3}", r.time_s),
                format!("{:.6}", r.ego_x),
                format!("{:.6}", r.ego_y),
                format!("{:.6}", r.target_x),
                format!("{:.6}", r.target_y),
                format!("{:.6}", r.distance),
                r.seen_by_vehicle.to_string(),
                r.seen_by_road.to_string(),
                r.target_confirmed.to_string(),
                r.confirmed_tracks.to_string(),
                opt(r.overlap.vehicle),
                opt(r.overlap.road),
                opt(r.overlap.fused),
            ])?;
        }
        w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
    }
}

/// Writes the report to `path`, creating parent directories.
pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: &Path) -> Result<(), ReportError> {
    let io = |source| ReportError::Io { path: path.display().to_string(), source };
    let bytes = match format {
        ReportFormat::Json => {
            let mut s = report.to_json()?;
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Csv => report.to_csv()?,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    Ok(())
}
