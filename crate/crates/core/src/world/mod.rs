//! Deterministic scenario world: actors on scripted piecewise-linear
//! trajectories, a shared clock, ray-cast lidar and the dual-antenna GNSS model.

mod gnss;
mod lidar;

pub use gnss::{fuse_gnss, GnssError, GnssPair, GnssReadings};
pub use lidar::{capture_background, ray_box_entry, scan_lidar, Background, LidarConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::Micros;
use crate::geometry::{angle_diff, normalize_angle, OrientedBox, Pose, Vec3};

pub type ActorId = u32;

/// 100 ms, 10 Hz.
pub const DEFAULT_TICK_PERIOD_US: Micros = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("step duration must be positive")]
    ZeroStep,
    #[error("actor {0}: trajectory is empty")]
    EmptyTrajectory(ActorId),
    #[error("actor {0}: trajectory timestamps must be strictly increasing")]
    NonMonotonicTrajectory(ActorId),
    #[error("actor {0}: shape extents must be positive")]
    InvalidShape(ActorId),
    #[error("duplicate actor id {0}")]
    DuplicateActor(ActorId),
    #[error("tick period must be positive")]
    ZeroTickPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Car,
    Pedestrian,
    Bicycle,
    StaticObstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: Micros,
    pub position: Vec3,
    pub yaw: f64,
}

/// Piecewise-linear position and yaw. Yaw is interpolated along the shortest arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, WorldError> {
        if waypoints.is_empty() {
            return Err(WorldError::EmptyTrajectory(0));
        }
        if waypoints.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(WorldError::NonMonotonicTrajectory(0));
        }
        Ok(Self { waypoints })
    }

    pub fn stationary(pose: Pose) -> Self {
        Self { waypoints: vec![Waypoint { t: 0, position: pose.position, yaw: pose.yaw }] }
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    /// Pose at `t`. Before the first sample and after the last the actor holds
    /// the boundary pose.
    pub fn pose_at(&self, t: Micros) -> Pose {
        let wps = &self.waypoints;
        let first = wps[0];
        if t <= first.t {
            return Pose::new(first.position, first.yaw);
        }
        let last = wps[wps.len() - 1];
        if t >= last.t {
            return Pose::new(last.position, last.yaw);
        }
        // First waypoint strictly after t.
        let hi = wps.partition_point(|w| w.t <= t);
        let (a, b) = (wps[hi - 1], wps[hi]);
        let s = (t - a.t) as f64 / (b.t - a.t) as f64;
        let position = a.position + (b.position - a.position) * s;
        let yaw = normalize_angle(a.yaw + angle_diff(b.yaw, a.yaw) * s);
        Pose::new(position, yaw)
    }

    pub fn end_time(&self) -> Micros {
        self.waypoints[self.waypoints.len() - 1].t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub id: ActorId,
    pub kind: ActorKind,
    /// Bounding box in the actor's body frame.
    pub shape: OrientedBox,
    pub trajectory: Trajectory,
}

impl Actor {
    pub fn new(id: ActorId, kind: ActorKind, shape: OrientedBox, trajectory: Trajectory) -> Result<Self, WorldError> {
        if shape.validate().is_err() {
            return Err(WorldError::InvalidShape(id));
        }
        Ok(Self { id, kind, shape, trajectory })
    }

    pub fn state_at(&self, t: Micros) -> ActorState {
        let pose = self.trajectory.pose_at(t);
        ActorState { id: self.id, kind: self.kind, pose, bounds: self.shape.transformed(&pose) }
    }
}

/// An actor frozen at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorState {
    pub id: ActorId,
    pub kind: ActorKind,
    pub pose: Pose,
    /// World-frame bounding box.
    pub bounds: OrientedBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorldClock {
    pub tick_period: Micros,
    pub current: Micros,
}

impl WorldClock {
    pub fn new(tick_period: Micros) -> Result<Self, WorldError> {
        if tick_period == 0 {
            return Err(WorldError::ZeroTickPeriod);
        }
        Ok(Self { tick_period, current: 0 })
    }

    pub fn tick_index(&self) -> u64 {
        self.current / self.tick_period
    }
}

/// Immutable view of the world at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: Micros,
    pub actors: Vec<ActorState>,
}

impl Snapshot {
    pub fn actor(&self, id: ActorId) -> Option<&ActorState> {
        self.actors.iter().find(|a| a.id == id)
    }

    /// Only the static obstacles, as used for background capture.
    pub fn statics_only(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            actors: self.actors.iter().filter(|a| a.kind == ActorKind::StaticObstacle).copied().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    actors: Vec<Actor>,
    clock: WorldClock,
}

impl World {
    pub fn new(mut actors: Vec<Actor>, tick_period: Micros) -> Result<Self, WorldError> {
        let clock = WorldClock::new(tick_period)?;
        actors.sort_by_key(|a| a.id);
        if let Some(w) = actors.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(WorldError::DuplicateActor(w[0].id));
        }
        Ok(Self { actors, clock })
    }

    pub fn actors(&self) -> &[Actor] {
        &self.actors
    }

    pub fn actor(&self, id: ActorId) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn clock(&self) -> WorldClock {
        self.clock
    }

    pub fn snapshot_at(&self, t: Micros) -> Snapshot {
        Snapshot { time: t, actors: self.actors.iter().map(|a| a.state_at(t)).collect() }
    }

    pub fn snapshot(&self) -> Snapshot {
        self.snapshot_at(self.clock.current)
    }

    /// Advances the clock by `dt` and returns the snapshot at the new time.
    pub fn step(&mut self, dt: Micros) -> Result<Snapshot, WorldError> {
        if dt == 0 {
            return Err(WorldError::ZeroStep);
        }
        self.clock.current += dt;
        Ok(self.snapshot())
    }

    /// One tick of the configured period.
    pub fn tick(&mut self) -> Snapshot {
        self.clock.current += self.clock.tick_period;
        self.snapshot()
    }
}
