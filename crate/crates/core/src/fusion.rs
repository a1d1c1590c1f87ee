//! Vehicle-road data fusion.
//!
//! Pixel-level fusion maps every raw cloud into the world frame and
//! concatenates them so detection runs once on the union. Feature-level fusion
//! detects per sensor, moves the boxes into the world and merges boxes of the
//! same class that overlap strongly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{CloudError, Frame, Micros, PointCloud, SensorId};
use crate::detection::{detect, sort_detections, Detection, DetectorConfig};
use crate::geometry::{box_iou, normalize_angle, road_to_world_posed, vehicle_to_world, OrientedBox, Pose, Vec3};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;
/// Remote geometry older than this many ticks never enters a fused frame.
pub const MAX_AGE_TICKS: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("vehicle-mounted sensor {0} needs a vehicle pose")]
    MissingVehiclePose(SensorId),
    #[error("no registration for sensor {0}")]
    UnregisteredSensor(SensorId),
    #[error("sensor {0} has more than one registration")]
    DuplicateRegistration(SensorId),
    #[error("cloud from sensor {sensor} is in frame {found:?}, expected {expected:?}")]
    WrongFrame { sensor: SensorId, expected: Frame, found: Frame },
    #[error("input from sensor {sensor} at {timestamp} is stale for frame {frame_time}")]
    StaleInput { sensor: SensorId, timestamp: Micros, frame_time: Micros },
    #[error("input from sensor {sensor} at {timestamp} is ahead of frame {frame_time}")]
    FutureInput { sensor: SensorId, timestamp: Micros, frame_time: Micros },
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mount {
    /// Offset of the lidar origin in the vehicle body frame.
    VehicleMounted { offset: Vec3 },
    /// Placement of the pole-mounted lidar in the world.
    Roadside { placement: Pose },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRegistration {
    pub sensor: SensorId,
    pub mount: Mount,
}

impl SensorRegistration {
    pub fn vehicle(sensor: SensorId, offset: Vec3) -> Self {
        Self { sensor, mount: Mount::VehicleMounted { offset } }
    }

    pub fn roadside(sensor: SensorId, placement: Pose) -> Self {
        Self { sensor, mount: Mount::Roadside { placement } }
    }

    /// World pose of the sensor origin.
    pub fn sensor_pose(&self, vehicle_pose: Option<&Pose>) -> Result<Pose, FusionError> {
        match self.mount {
            Mount::Roadside { placement } => Ok(placement),
            Mount::VehicleMounted { offset } => {
                let pose = vehicle_pose.ok_or(FusionError::MissingVehiclePose(self.sensor))?;
                Ok(Pose::new(pose.transform_point(offset), pose.yaw))
            }
        }
    }
}

/// Maps a sensor-frame cloud into the world frame.
pub fn unify_cloud(
    cloud: &PointCloud,
    registration: &SensorRegistration,
    vehicle_pose: Option<&Pose>,
) -> Result<PointCloud, FusionError> {
    if cloud.frame != Frame::SensorLocal {
        return Err(FusionError::WrongFrame { sensor: cloud.source, expected: Frame::SensorLocal, found: cloud.frame });
    }
    match registration.mount {
        Mount::Roadside { placement } => Ok(cloud.map_points(Frame::World, |p| road_to_world_posed(p, &placement))),
        Mount::VehicleMounted { offset } => {
            let pose = *vehicle_pose.ok_or(FusionError::MissingVehiclePose(registration.sensor))?;
            Ok(cloud.map_points(Frame::World, |p| vehicle_to_world(p, offset, &pose)))
        }
    }
}

/// Concatenates world-frame clouds that share a timestamp.
pub fn merge_clouds(clouds: &[PointCloud]) -> Result<PointCloud, FusionError> {
    let Some(first) = clouds.first() else {
        return Ok(PointCloud::empty(Frame::World, 0, SensorId(0)));
    };
    let mut out = PointCloud::new(Vec::new(), Frame::World, first.timestamp, first.source);
    out.segments.clear();
    for c in clouds {
        if c.frame != Frame::World {
            return Err(CloudError::FrameMismatch { expected: Frame::World, found: c.frame }.into());
        }
        if c.timestamp != first.timestamp {
            return Err(CloudError::TimestampMismatch(first.timestamp, c.timestamp).into());
        }
        out.points.extend_from_slice(&c.points);
        out.segments.extend(c.segments.iter().copied());
    }
    Ok(out)
}

/// Weighted combination of same-object boxes: point-count weighted center and
/// axis heading, componentwise max of extents.
fn merge_group(group: &[Detection]) -> Detection {
    let seed = group[0];
    let total: u32 = group.iter().map(|d| d.point_count).sum();
    let weight = |d: &Detection| if total == 0 { 1.0 / group.len() as f64 } else { d.point_count as f64 / total as f64 };
    let mut center = Vec3::ZERO;
    let mut yaw_offset = 0.0;
    let mut extent = Vec3::ZERO;
    for d in group {
        let w = weight(d);
        center += d.bbox.center * w;
        // Boxes are symmetric under a half turn, so headings are compared mod pi.
        yaw_offset += w * axis_diff(d.bbox.yaw, seed.bbox.yaw);
        extent = Vec3::new(extent.x.max(d.bbox.extent.x), extent.y.max(d.bbox.extent.y), extent.z.max(d.bbox.extent.z));
    }
    let bbox =
        OrientedBox { center, extent, yaw: normalize_angle(seed.bbox.yaw + yaw_offset), class_label: seed.bbox.class_label };
    Detection { bbox, source: seed.source, timestamp: seed.timestamp, point_count: total }
}

/// Shortest signed difference between two box headings modulo pi.
fn axis_diff(a: f64, b: f64) -> f64 {
    normalize_angle(2.0 * (a - b)) / 2.0
}

fn merge_pass(sorted: &[Detection], iou_threshold: f64) -> (Vec<Detection>, bool) {
    let mut absorbed = vec![false; sorted.len()];
    let mut out = Vec::with_capacity(sorted.len());
    let mut merged_any = false;
    for i in 0..sorted.len() {
        if absorbed[i] {
            continue;
        }
        let mut group = vec![sorted[i]];
        for j in (i + 1)..sorted.len() {
            if absorbed[j] || sorted[j].bbox.class_label != sorted[i].bbox.class_label {
                continue;
            }
            if box_iou(&sorted[i].bbox, &sorted[j].bbox) >= iou_threshold {
                absorbed[j] = true;
                group.push(sorted[j]);
            }
        }
        if group.len() > 1 {
            merged_any = true;
            out.push(merge_group(&group));
        } else {
            out.push(sorted[i]);
        }
    }
    (out, merged_any)
}

/// Greedy same-class agglomeration of world-frame boxes.
///
/// Seeds are visited by descending point count; each absorbs every later box of
/// its class with IoU at least `iou_threshold`. Passes repeat until nothing
/// merges, so the result contains no mergeable pair.
pub fn fuse_boxes(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut current = detections.to_vec();
    sort_detections(&mut current);
    loop {
        let (mut next, merged) = merge_pass(&current, iou_threshold);
        sort_detections(&mut next);
        if !merged {
            return next;
        }
        current = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Pixel,
    Feature,
}

impl std::str::FromStr for FusionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pixel" => Ok(FusionMode::Pixel),
            "feature" => Ok(FusionMode::Feature),
            other => Err(format!("unknown fusion mode '{other}'")),
        }
    }
}

/// One sensor's contribution to a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum SensorInput {
    /// Raw scan in the sensor frame; needs a registration.
    Raw(PointCloud),
    /// Remote cloud already in the world frame.
    WorldCloud(PointCloud),
    /// Remote boxes already in the world frame.
    WorldDetections { source: SensorId, timestamp: Micros, detections: Vec<Detection> },
}

impl SensorInput {
    fn source(&self) -> SensorId {
        match self {
            SensorInput::Raw(c) | SensorInput::WorldCloud(c) => c.source,
            SensorInput::WorldDetections { source, .. } => *source,
        }
    }

    fn timestamp(&self) -> Micros {
        match self {
            SensorInput::Raw(c) | SensorInput::WorldCloud(c) => c.timestamp,
            SensorInput::WorldDetections { timestamp, .. } => *timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub iou_threshold: f64,
    pub tick_period: Micros,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::Feature,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            tick_period: crate::world::DEFAULT_TICK_PERIOD_US,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFrame {
    pub timestamp: Micros,
    pub mode: FusionMode,
    /// Merged world cloud, pixel mode only.
    pub world_cloud: Option<PointCloud>,
    /// World-frame detections for either mode.
    pub detections: Vec<Detection>,
    pub sources: Vec<SensorId>,
}

fn find_registration(regs: &[SensorRegistration], sensor: SensorId) -> Result<&SensorRegistration, FusionError> {
    let mut it = regs.iter().filter(|r| r.sensor == sensor);
    let reg = it.next().ok_or(FusionError::UnregisteredSensor(sensor))?;
    if it.next().is_some() {
        return Err(FusionError::DuplicateRegistration(sensor));
    }
    Ok(reg)
}

fn check_age(input: &SensorInput, frame_time: Micros, tick: Micros) -> Result<(), FusionError> {
    let (ts, sensor) = (input.timestamp(), input.source());
    if ts > frame_time + tick / 2 {
        return Err(FusionError::FutureInput { sensor, timestamp: ts, frame_time });
    }
    if frame_time.saturating_sub(ts) > MAX_AGE_TICKS * tick {
        return Err(FusionError::StaleInput { sensor, timestamp: ts, frame_time });
    }
    Ok(())
}

/// Detects on one raw scan and returns world-frame boxes.
pub fn detect_in_world(
    cloud: &PointCloud,
    registration: &SensorRegistration,
    vehicle_pose: Option<&Pose>,
    detector: &DetectorConfig,
) -> Result<Vec<Detection>, FusionError> {
    match registration.mount {
        Mount::VehicleMounted { offset } => {
            let pose = *vehicle_pose.ok_or(FusionError::MissingVehiclePose(registration.sensor))?;
            let body = cloud.map_points(Frame::VehicleBody, |p| p + offset);
            Ok(detect(&body, detector).into_iter().map(|d| Detection { bbox: d.bbox.transformed(&pose), ..d }).collect())
        }
        Mount::Roadside { .. } => {
            let world = unify_cloud(cloud, registration, None)?;
            Ok(detect(&world, detector))
        }
    }
}

/// Fuses one tick's inputs. Every input must be at most two ticks old and no
/// more than half a tick ahead of `frame_time`; geometry is restamped to it.
pub fn fuse_frame(
    config: &FusionConfig,
    frame_time: Micros,
    inputs: &[SensorInput],
    registrations: &[SensorRegistration],
    vehicle_pose: Option<&Pose>,
    detector: &DetectorConfig,
) -> Result<FusedFrame, FusionError> {
    let mut sources = Vec::new();
    for input in inputs {
        check_age(input, frame_time, config.tick_period)?;
        if !sources.contains(&input.source()) {
            sources.push(input.source());
        }
    }
    match config.mode {
        FusionMode::Pixel => {
            let mut clouds = Vec::new();
            for input in inputs {
                let mut world = match input {
                    SensorInput::Raw(c) => unify_cloud(c, find_registration(registrations, c.source)?, vehicle_pose)?,
                    SensorInput::WorldCloud(c) => {
                        if c.frame != Frame::World {
                            return Err(FusionError::WrongFrame { sensor: c.source, expected: Frame::World, found: c.frame });
                        }
                        c.clone()
                    }
                    // Boxes cannot be re-clustered; they pass straight through below.
                    SensorInput::WorldDetections { .. } => continue,
                };
                world.timestamp = frame_time;
                world.beams = None;
                world.grid = None;
                clouds.push(world);
            }
            let mut merged = merge_clouds(&clouds)?;
            merged.timestamp = frame_time;
            let mut detections = detect(&merged, detector);
            let passthrough: Vec<Detection> = inputs
                .iter()
                .filter_map(|i| match i {
                    SensorInput::WorldDetections { detections, .. } => Some(detections.clone()),
                    _ => None,
                })
                .flatten()
                .collect();
            if !passthrough.is_empty() {
                detections.extend(passthrough);
                detections = fuse_boxes(&detections, config.iou_threshold);
            }
            for d in &mut detections {
                d.timestamp = frame_time;
            }
            Ok(FusedFrame { timestamp: frame_time, mode: FusionMode::Pixel, world_cloud: Some(merged), detections, sources })
        }
        FusionMode::Feature => {
            let mut all = Vec::new();
            for input in inputs {
                match input {
                    SensorInput::Raw(c) => {
                        let reg = find_registration(registrations, c.source)?;
                        all.extend(detect_in_world(c, reg, vehicle_pose, detector)?);
                    }
                    SensorInput::WorldCloud(c) => all.extend(detect(c, detector)),
                    SensorInput::WorldDetections { detections, .. } => all.extend(detections.iter().copied()),
                }
            }
            for d in &mut all {
                d.timestamp = frame_time;
            }
            let detections = fuse_boxes(&all, config.iou_threshold);
            Ok(FusedFrame { timestamp: frame_time, mode: FusionMode::Feature, world_cloud: None, detections, sources })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ClassLabel;
    use std::f64::consts::FRAC_PI_2;

    fn det(x: f64, y: f64, half: f64, class: ClassLabel, n: u32) -> Detection {
        Detection {
            bbox: OrientedBox::new(Vec3::new(x, y, 0.75), Vec3::new(half, half, 0.75), 0.0, class).unwrap(),
            source: SensorId(1),
            timestamp: 0,
            point_count: n,
        }
    }

    #[test]
    fn unify_examples() {
        let road = SensorRegistration::roadside(SensorId(2), Pose::from_translation(Vec3::new(10.0, 0.0, 3.0)));
        let c = PointCloud::new(vec![Vec3::ZERO], Frame::SensorLocal, 0, SensorId(2));
        assert_eq!(unify_cloud(&c, &road, None).unwrap().points, vec![Vec3::new(10.0, 0.0, 3.0)]);

        let veh = SensorRegistration::vehicle(SensorId(1), Vec3::new(0.0, 0.0, 2.0));
        let c = PointCloud::new(vec![Vec3::new(5.0, 0.0, 0.0)], Frame::SensorLocal, 0, SensorId(1));
        let out = unify_cloud(&c, &veh, Some(&Pose::IDENTITY)).unwrap();
        assert_eq!(out.points, vec![Vec3::new(5.0, 0.0, 2.0)]);
        assert_eq!(out.frame, Frame::World);

        let veh = SensorRegistration::vehicle(SensorId(1), Vec3::new(1.0, 0.0, 2.0));
        let c = PointCloud::new(vec![Vec3::new(1.0, 0.0, 0.0)], Frame::SensorLocal, 0, SensorId(1));
        let pose = Pose::new(Vec3::new(3.0, 4.0, 0.0), FRAC_PI_2);
        let p = unify_cloud(&c, &veh, Some(&pose)).unwrap().points[0];
        assert!((p - Vec3::new(3.0, 6.0, 2.0)).norm() < 1e-12);

        assert_eq!(unify_cloud(&c, &veh, None), Err(FusionError::MissingVehiclePose(SensorId(1))));
    }

    #[test]
    fn merge_examples() {
        assert!(merge_clouds(&[]).unwrap().is_empty());
        let a = PointCloud::new(vec![Vec3::ZERO; 100], Frame::World, 5, SensorId(1));
        assert_eq!(merge_clouds(std::slice::from_ref(&a)).unwrap().points, a.points);
        let b = PointCloud::new(vec![Vec3::new(1.0, 0.0, 0.0); 250], Frame::World, 5, SensorId(2));
        let m = merge_clouds(&[a.clone(), b]).unwrap();
        assert_eq!(m.len(), 350);
        assert_eq!(m.sources(), vec![SensorId(1), SensorId(2)]);

        let local = PointCloud::new(vec![], Frame::SensorLocal, 5, SensorId(3));
        assert!(merge_clouds(&[a.clone(), local]).is_err());
        let late = PointCloud::new(vec![], Frame::World, 6, SensorId(3));
        assert!(merge_clouds(&[a, late]).is_err());
    }

    #[test]
    fn fuse_boxes_examples() {
        let a = det(0.0, 0.0, 1.0, ClassLabel::Vehicle, 10);
        let b = det(20.0, 0.0, 1.0, ClassLabel::Vehicle, 5);
        assert_eq!(fuse_boxes(&[a, b], 0.3), vec![a, b]);

        let out = fuse_boxes(&[a, a], 0.3);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].point_count, 20);
        assert_eq!(out[0].bbox, a.bbox);

        // 2x2 squares shifted by s: inter = 4 - 2s, union = 4 + 2s, so s = 2/19 gives IoU 0.9.
        let s = 2.0 / 19.0;
        let c = det(s, 0.0, 1.0, ClassLabel::Pedestrian, 3);
        assert!((box_iou(&a.bbox, &c.bbox) - 0.9).abs() < 1e-12);
        assert_eq!(fuse_boxes(&[a, c], 0.3).len(), 2);
    }

    #[test]
    fn merged_box_covers_weighted_views() {
        let mut a = det(0.0, 0.0, 1.0, ClassLabel::Vehicle, 30);
        a.bbox.extent = Vec3::new(2.0, 0.8, 0.7);
        let mut b = det(0.4, 0.0, 1.0, ClassLabel::Vehicle, 10);
        b.bbox.extent = Vec3::new(1.5, 1.0, 0.75);
        let out = fuse_boxes(&[b, a], 0.3);
        assert_eq!(out.len(), 1);
        let m = out[0].bbox;
        assert!((m.center.x - 0.1).abs() < 1e-12);
        assert_eq!(m.extent, Vec3::new(2.0, 1.0, 0.75));
    }

    #[test]
    fn heading_mean_wraps_mod_pi() {
        let mut a = det(0.0, 0.0, 1.0, ClassLabel::Vehicle, 10);
        a.bbox.extent.x = 2.0;
        a.bbox.yaw = FRAC_PI_2 - 0.05;
        let mut b = a;
        b.bbox.yaw = -FRAC_PI_2 + 0.05;
        let out = fuse_boxes(&[a, b], 0.3);
        assert_eq!(out.len(), 1);
        assert!(axis_diff(out[0].bbox.yaw, FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn threshold_above_one_is_identity() {
        let a = det(0.0, 0.0, 1.0, ClassLabel::Vehicle, 10);
        assert_eq!(fuse_boxes(&[a, a], 1.01).len(), 2);
    }

    #[test]
    fn feature_frame_single_sensor_matches_solo() {
        let road = SensorRegistration::roadside(SensorId(2), Pose::from_translation(Vec3::new(0.0, 0.0, 3.0)));
        let pts: Vec<Vec3> = (0..30).map(|i| Vec3::new(5.0 + 0.1 * (i % 6) as f64, 0.1 * (i / 6) as f64, -2.0)).collect();
        let cloud = PointCloud::new(pts, Frame::SensorLocal, 100_000, SensorId(2));
        let cfg = FusionConfig::default();
        let det = DetectorConfig::default();
        let frame = fuse_frame(&cfg, 100_000, &[SensorInput::Raw(cloud.clone())], &[road], None, &det).unwrap();
        let solo = detect_in_world(&cloud, &road, None, &det).unwrap();
        assert_eq!(frame.detections, solo);
        let pixel = fuse_frame(
            &FusionConfig { mode: FusionMode::Pixel, ..cfg },
            100_000,
            &[SensorInput::Raw(cloud)],
            &[road],
            None,
            &det,
        )
        .unwrap();
        assert_eq!(pixel.detections, solo);
    }

    #[test]
    fn stale_and_future_inputs_rejected() {
        let cfg = FusionConfig::default();
        let old = SensorInput::WorldDetections { source: SensorId(9), timestamp: 0, detections: vec![] };
        let err = fuse_frame(&cfg, 300_000, &[old], &[], None, &DetectorConfig::default()).unwrap_err();
        assert!(matches!(err, FusionError::StaleInput { .. }));
        let ahead = SensorInput::WorldDetections { source: SensorId(9), timestamp: 200_000, detections: vec![] };
        let err = fuse_frame(&cfg, 100_000, &[ahead], &[], None, &DetectorConfig::default()).unwrap_err();
        assert!(matches!(err, FusionError::FutureInput { .. }));
    }

    #[test]
    fn unregistered_source_rejected() {
        let c = PointCloud::new(vec![], Frame::SensorLocal, 0, SensorId(4));
        let err =
            fuse_frame(&FusionConfig::default(), 0, &[SensorInput::Raw(c)], &[], None, &DetectorConfig::default()).unwrap_err();
        assert_eq!(err, FusionError::UnregisteredSensor(SensorId(4)));
    }
}
