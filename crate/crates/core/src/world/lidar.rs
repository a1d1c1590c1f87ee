//! Beam-grid ray-cast lidar.
//!
//! Each beam returns the nearest box surface along its ray within range, so
//! nearer actors occlude farther ones. Range noise is Gaussian, truncated at
//! four sigma, and seeded from the sensor seed and the snapshot time.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ActorId, Snapshot};
use crate::cloud::{BeamGrid, Frame, PointCloud, SensorId};
use crate::geometry::{rotate_z, OrientedBox, Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarConfig {
    /// Meters.
    pub max_range: f64,
    /// Radians between adjacent azimuth beams.
    pub horizontal_resolution: f64,
    /// Number of elevation rings.
    pub channels: u32,
    /// Lowest ring elevation, radians.
    pub elevation_min: f64,
    /// Highest ring elevation, radians.
    pub elevation_max: f64,
    /// Range noise standard deviation, meters.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            max_range: 20.0,
            horizontal_resolution: 0.4f64.to_radians(),
            channels: 16,
            elevation_min: (-15.0f64).to_radians(),
            elevation_max: 15.0f64.to_radians(),
            noise_sigma: 0.01,
            seed: 0,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_range > 0.0) {
            return Err("max_range must be positive".into());
        }
        if !(self.horizontal_resolution > 0.0) || self.horizontal_resolution > PI {
            return Err("horizontal_resolution must be in (0, pi]".into());
        }
        if self.channels < 1 {
            return Err("channels must be at least 1".into());
        }
        if !(self.elevation_max >= self.elevation_min) {
            return Err("elevation_max must not be below elevation_min".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return Err("noise_sigma must be non-negative".into());
        }
        Ok(())
    }

    pub fn elevation_span(&self) -> f64 {
        self.elevation_max - self.elevation_min
    }

    pub fn grid(&self) -> BeamGrid {
        BeamGrid { azimuth_count: (2.0 * PI / self.horizontal_resolution).round().max(1.0) as u32, channels: self.channels }
    }

    pub fn azimuth(&self, index: u32) -> f64 {
        let n = self.grid().azimuth_count;
        2.0 * PI * index as f64 / n as f64
    }

    pub fn elevation(&self, channel: u32) -> f64 {
        if self.channels == 1 {
            (self.elevation_min + self.elevation_max) / 2.0
        } else {
            self.elevation_min + self.elevation_span() * channel as f64 / (self.channels - 1) as f64
        }
    }

    /// Unit beam direction in the sensor frame.
    pub fn direction(&self, channel: u32, azimuth: u32) -> Vec3 {
        let (se, ce) = self.elevation(channel).sin_cos();
        let (sa, ca) = self.azimuth(azimuth).sin_cos();
        Vec3::new(ce * ca, ce * sa, se)
    }
}

/// Entry distance of a ray into a box, `None` on a miss or when the origin is
/// inside the box.
pub fn ray_box_entry(origin: Vec3, dir: Vec3, b: &OrientedBox) -> Option<f64> {
    let o = rotate_z(origin - b.center, -b.yaw);
    let d = rotate_z(dir, -b.yaw);
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (oi, di, ei) in [(o.x, d.x, b.extent.x), (o.y, d.y, b.extent.y), (o.z, d.z, b.extent.z)] {
        if di.abs() < 1e-15 {
            if oi.abs() > ei {
                return None;
            }
        } else {
            let t1 = (-ei - oi) / di;
            let t2 = (ei - oi) / di;
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            t_near = t_near.max(lo);
            t_far = t_far.min(hi);
            if t_near > t_far {
                return None;
            }
        }
    }
    if t_near < 0.0 {
        return None;
    }
    Some(t_near)
}

struct Candidate {
    bounds: OrientedBox,
    /// Azimuth window in the sensor frame, `None` when every azimuth may hit.
    window: Option<(f64, f64)>,
}

impl Candidate {
    fn covers(&self, az: f64) -> bool {
        match self.window {
            None => true,
            Some((center, half)) => {
                let d = crate::geometry::angle_diff(az, center).abs();
                d <= half
            }
        }
    }
}

fn candidates(config: &LidarConfig, sensor_pose: &Pose, snapshot: &Snapshot, exclude: &[ActorId]) -> Vec<Candidate> {
    let origin = sensor_pose.position;
    snapshot
        .actors
        .iter()
        .filter(|a| !exclude.contains(&a.id))
        .filter_map(|a| {
            let b = a.bounds;
            let radius = b.extent.norm();
            let dist = origin.distance(&b.center);
            if dist - radius > config.max_range {
                return None;
            }
            if b.contains_xy(origin.x, origin.y, 0.0) {
                let (lo, hi) = b.z_range();
                if origin.z >= lo && origin.z <= hi {
                    // Sensor inside the box: it cannot see out.
                    return None;
                }
            }
            let radius_xy = b.extent.x.hypot(b.extent.y);
            let dxy = origin.distance_xy(&b.center);
            let window = if dxy <= radius_xy + 1e-9 {
                None
            } else {
                let center = (b.center.y - origin.y).atan2(b.center.x - origin.x) - sensor_pose.yaw;
                // Pad by a beam so edge rays are never culled.
                Some((center, (radius_xy / dxy).asin() + config.horizontal_resolution))
            };
            Some(Candidate { bounds: b, window })
        })
        .collect()
}

/// Per-beam nearest-hit range, `None` for beams with no return. Noise-free.
pub(crate) fn cast_ranges(
    config: &LidarConfig,
    sensor_pose: &Pose,
    snapshot: &Snapshot,
    exclude: &[ActorId],
) -> Vec<Option<f64>> {
    let grid = config.grid();
    let cands = candidates(config, sensor_pose, snapshot, exclude);
    let mut out = vec![None; grid.len()];
    if cands.is_empty() {
        return out;
    }
    let origin = sensor_pose.position;
    let mut active: Vec<&Candidate> = Vec::with_capacity(cands.len());
    for az in 0..grid.azimuth_count {
        let az_angle = config.azimuth(az);
        active.clear();
        active.extend(cands.iter().filter(|c| c.covers(az_angle)));
        if active.is_empty() {
            continue;
        }
        for ch in 0..grid.channels {
            let dir = rotate_z(config.direction(ch, az), sensor_pose.yaw);
            let mut best: Option<f64> = None;
            for c in &active {
                if let Some(t) = ray_box_entry(origin, dir, &c.bounds) {
                    if t <= config.max_range && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                }
            }
            out[grid.index(ch, az) as usize] = best;
        }
    }
    out
}

fn noise_seed(seed: u64, time: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ time.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scans `snapshot` from `sensor_pose` (sensor origin and heading in the
/// world). Points are returned in the sensor frame with per-beam indices.
/// Actors listed in `exclude` are invisible (the ego carrying the sensor).
pub fn scan_lidar(
    config: &LidarConfig,
    sensor: SensorId,
    sensor_pose: &Pose,
    snapshot: &Snapshot,
    exclude: &[ActorId],
) -> PointCloud {
    let grid = config.grid();
    let ranges = cast_ranges(config, sensor_pose, snapshot, exclude);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(config.seed, snapshot.time));
    let normal = (config.noise_sigma > 0.0).then(|| Normal::new(0.0, config.noise_sigma).expect("finite sigma"));
    let limit = 4.0 * config.noise_sigma;
    let mut points = Vec::new();
    let mut beams = Vec::new();
    for (idx, range) in ranges.iter().enumerate() {
        let Some(r) = range else { continue };
        let noise = normal.as_ref().map_or(0.0, |n| n.sample(&mut rng).clamp(-limit, limit));
        let r = (r + noise).max(0.0);
        let idx = idx as u32;
        let (ch, az) = (idx / grid.azimuth_count, idx % grid.azimuth_count);
        points.push(config.direction(ch, az) * r);
        beams.push(idx);
    }
    let mut cloud = PointCloud::new(points, Frame::SensorLocal, snapshot.time, sensor);
    cloud.beams = Some(beams);
    cloud.grid = Some(grid);
    cloud
}

/// Reference ranges of a fixed sensor over the static scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub grid: BeamGrid,
    pub ranges: Vec<Option<f64>>,
}

impl Background {
    pub fn empty(grid: BeamGrid) -> Self {
        Self { grid, ranges: vec![None; grid.len()] }
    }

    pub fn from_cloud(cloud: &PointCloud) -> Option<Self> {
        let grid = cloud.grid?;
        let beams = cloud.beams.as_ref()?;
        let mut ranges = vec![None; grid.len()];
        for (p, b) in cloud.points.iter().zip(beams) {
            ranges[*b as usize] = Some(p.norm());
        }
        Some(Self { grid, ranges })
    }

    pub fn hit_count(&self) -> usize {
        self.ranges.iter().filter(|r| r.is_some()).count()
    }
}

/// Scans only the static obstacles of `snapshot` and stores the per-beam range.
pub fn capture_background(config: &LidarConfig, sensor: SensorId, sensor_pose: &Pose, snapshot: &Snapshot) -> Background {
    let statics = snapshot.statics_only();
    let cloud = scan_lidar(config, sensor, sensor_pose, &statics, &[]);
    Background::from_cloud(&cloud).expect("raw scans carry beam indices")
}
