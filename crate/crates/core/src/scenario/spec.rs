//! Scenario files: TOML, one document per scenario, unknown fields rejected.
//!
//! Units: seconds and degrees in the file, converted to microseconds and
//! radians on load. Waypoints are `[t_s, x_m, y_m, yaw_deg]` rows.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Micros, SensorId};
use crate::detection::{DetectionError, DetectorConfig};
use crate::fusion::DEFAULT_IOU_THRESHOLD;
use crate::geometry::{ClassLabel, OrientedBox, Pose, Vec3};
use crate::tracking::{TrackerConfig, TrackingError};
use crate::world::{Actor, ActorId, ActorKind, GnssError, GnssPair, LidarConfig, Trajectory, Waypoint, World, WorldError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Gnss(#[from] GnssError),
}

fn default_tick_ms() -> u64 {
    100
}

fn default_vehicle_sensor() -> u32 {
    1
}

fn default_roadside_sensor() -> u32 {
    100
}

fn default_mount() -> [f64; 3] {
    [0.0, 0.0, 2.0]
}

fn default_cadence() -> u64 {
    1
}

fn default_iou() -> f64 {
    DEFAULT_IOU_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub id: ActorId,
    pub kind: ActorKind,
    /// Full length, width, height in meters. The body origin is the center
    /// of the footprint at ground level.
    pub size: [f64; 3],
    /// `[t_s, x_m, y_m, yaw_deg]`, strictly increasing in time.
    pub waypoints: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    #[serde(default = "default_vehicle_sensor")]
    pub sensor_id: u32,
    /// Lidar offset from the body origin, meters.
    #[serde(default = "default_mount")]
    pub mount: [f64; 3],
    #[serde(default)]
    pub lidar: LidarConfig,
    #[serde(default)]
    pub gnss: GnssPair,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self {
            sensor_id: default_vehicle_sensor(),
            mount: default_mount(),
            lidar: LidarConfig::default(),
            gnss: GnssPair::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadsideSpec {
    #[serde(default = "default_roadside_sensor")]
    pub sensor_id: u32,
    /// Sensor origin in the world, meters.
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw_deg: f64,
    /// Publish every `cadence` ticks.
    #[serde(default = "default_cadence")]
    pub cadence: u64,
    #[serde(default)]
    pub lidar: LidarConfig,
}

impl RoadsideSpec {
    pub fn placement(&self) -> Pose {
        Pose::new(Vec3::from(self.position), self.yaw_deg.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    #[serde(default = "default_iou")]
    pub iou_threshold: f64,
}

impl Default for FusionSpec {
    fn default() -> Self {
        Self { iou_threshold: default_iou() }
    }
}

/// Where and when to measure the ego lidar's blind sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionSpec {
    pub blocker: ActorId,
    /// Seconds.
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_tick_ms")]
    pub tick_period_ms: u64,
    pub duration_ticks: u64,
    /// Used when the caller does not supply one.
    #[serde(default)]
    pub seed: u64,
    pub ego: ActorId,
    pub target: ActorId,
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub vehicle: VehicleSpec,
    #[serde(default)]
    pub roadside: Option<RoadsideSpec>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub fusion: FusionSpec,
    #[serde(default)]
    pub occlusion: Option<OcclusionSpec>,
}

const BUILTIN: [(&str, &str); 3] = [
    ("curve_range", include_str!("../../../../scenarios/curve_range.toml")),
    ("blind_area", include_str!("../../../../scenarios/blind_area.toml")),
    ("accuracy", include_str!("../../../../scenarios/accuracy.toml")),
];

/// Names of the scenarios shipped with the crate.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub(crate) fn seconds_to_micros(s: f64) -> Result<Micros, ScenarioError> {
    if !s.is_finite() || s < 0.0 {
        return Err(ScenarioError::Invalid(format!("time {s} s must be finite and non-negative")));
    }
    Ok((s * 1e6).round() as Micros)
}

impl ScenarioSpec {
    pub fn from_toml(source: &str) -> Result<Self, ScenarioError> {
        let spec: Self = toml::from_str(source)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let src = builtin_source(name).ok_or_else(|| ScenarioError::UnknownScenario(name.to_string()))?;
        Self::from_toml(src)
    }

    /// A built-in name, else a path to a scenario file.
    pub fn load(name_or_path: &str) -> Result<Self, ScenarioError> {
        if builtin_source(name_or_path).is_some() {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::from_file(path);
        }
        Err(ScenarioError::UnknownScenario(name_or_path.to_string()))
    }

    pub fn tick_period(&self) -> Micros {
        self.tick_period_ms * 1000
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.tick_period_ms == 0 {
            return invalid("tick_period_ms must be positive".into());
        }
        if self.duration_ticks == 0 {
            return invalid("duration_ticks must be positive".into());
        }
        for id in [self.ego, self.target] {
            if !self.actors.iter().any(|a| a.id == id) {
                return invalid(format!("referenced actor {id} does not exist"));
            }
        }
        if self.ego == self.target {
            return invalid("ego and target must differ".into());
        }
        if let Some(o) = &self.occlusion {
            if !self.actors.iter().any(|a| a.id == o.blocker) {
                return invalid(format!("occlusion blocker {} does not exist", o.blocker));
            }
            seconds_to_micros(o.at)?;
        }
        self.vehicle.lidar.validate().map_err(|e| ScenarioError::Invalid(format!("vehicle lidar: {e}")))?;
        self.vehicle.gnss.validate()?;
        if let Some(r) = &self.roadside {
            r.lidar.validate().map_err(|e| ScenarioError::Invalid(format!("roadside lidar: {e}")))?;
            if r.cadence == 0 {
                return invalid("roadside cadence must be positive".into());
            }
            if r.sensor_id == self.vehicle.sensor_id {
                return invalid("roadside and vehicle sensor ids must differ".into());
            }
        }
        if !(self.fusion.iou_threshold.is_finite() && self.fusion.iou_threshold > 0.0) {
            return invalid("fusion iou_threshold must be positive".into());
        }
        self.detector.validate()?;
        self.tracker.validate()?;
        self.build_world()?;
        Ok(())
    }

    pub fn build_world(&self) -> Result<World, ScenarioError> {
        let mut actors = Vec::with_capacity(self.actors.len());
        for a in &self.actors {
            actors.push(build_actor(a)?);
        }
        Ok(World::new(actors, self.tick_period())?)
    }

    pub fn vehicle_sensor(&self) -> SensorId {
        SensorId(self.vehicle.sensor_id)
    }
}

fn class_for(kind: ActorKind) -> ClassLabel {
    match kind {
        ActorKind::Car => ClassLabel::Vehicle,
        ActorKind::Pedestrian => ClassLabel::Pedestrian,
        ActorKind::Bicycle => ClassLabel::Bicycle,
        ActorKind::StaticObstacle => ClassLabel::Unknown,
    }
}

fn build_actor(a: &ActorSpec) -> Result<Actor, ScenarioError> {
    let [l, w, h] = a.size;
    let shape = OrientedBox::new(Vec3::new(0.0, 0.0, h / 2.0), Vec3::new(l / 2.0, w / 2.0, h / 2.0), 0.0, class_for(a.kind))
        .map_err(|_| WorldError::InvalidShape(a.id))?;
    let mut waypoints = Vec::with_capacity(a.waypoints.len());
    for &[t, x, y, yaw_deg] in &a.waypoints {
        if ![x, y, yaw_deg].iter().all(|v| v.is_finite()) {
            return Err(ScenarioError::Invalid(format!("actor {}: non-finite waypoint", a.id)));
        }
        waypoints.push(Waypoint { t: seconds_to_micros(t)?, position: Vec3::new(x, y, 0.0), yaw: yaw_deg.to_radians() });
    }
    let trajectory = Trajectory::new(waypoints).map_err(|e| match e {
        WorldError::EmptyTrajectory(_) => WorldError::EmptyTrajectory(a.id),
        WorldError::NonMonotonicTrajectory(_) => WorldError::NonMonotonicTrajectory(a.id),
        other => other,
    })?;
    Ok(Actor::new(a.id, a.kind, shape, trajectory)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "mini"
        duration_ticks = 10
        ego = 1
        target = 2

        [[actors]]
        id = 1
        kind = "car"
        size = [4.5, 1.8, 1.5]
        waypoints = [[0.0, 0.0, 0.0, 0.0], [1.0, 8.0, 0.0, 0.0]]

        [[actors]]
        id = 2
        kind = "pedestrian"
        size = [0.5, 0.5, 1.8]
        waypoints = [[0.0, 15.0, 3.0, 90.0]]
    "#;

    #[test]
    fn minimal_file_loads_with_defaults() {
        let s = ScenarioSpec::from_toml(MINIMAL).unwrap();
        assert_eq!(s.tick_period(), 100_000);
        assert_eq!(s.vehicle.mount, [0.0, 0.0, 2.0]);
        assert!(s.roadside.is_none());
        let w = s.build_world().unwrap();
        let p = w.snapshot_at(500_000).actor(1).unwrap().pose;
        assert!((p.position.x - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = MINIMAL.replacen("duration_ticks = 10", "duration_ticks = 10\nspeed = 3", 1);
        assert!(matches!(ScenarioSpec::from_toml(&bad), Err(ScenarioError::Parse(_))));
        let nested = format!("{MINIMAL}\n[vehicle.lidar]\nrange = 20.0\n");
        assert!(matches!(ScenarioSpec::from_toml(&nested), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn missing_reference_rejected() {
        let bad = MINIMAL.replacen("target = 2", "target = 9", 1);
        assert!(matches!(ScenarioSpec::from_toml(&bad), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn zero_duration_rejected() {
        let bad = MINIMAL.replacen("duration_ticks = 10", "duration_ticks = 0", 1);
        assert!(matches!(ScenarioSpec::from_toml(&bad), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn trajectory_errors_name_the_actor() {
        let bad = MINIMAL.replacen("[1.0, 8.0, 0.0, 0.0]", "[0.0, 8.0, 0.0, 0.0]", 1);
        match ScenarioSpec::from_toml(&bad) {
            Err(ScenarioError::World(WorldError::NonMonotonicTrajectory(1))) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn builtins_parse() {
        for name in builtin_names() {
            let s = ScenarioSpec::builtin(name).unwrap();
            assert_eq!(s.name, name);
        }
    }
}
