//! Roadside publisher and vehicle subscriber.

use std::collections::BTreeMap;

use crate::cloud::{Frame, Micros, PointCloud, SensorId};
use crate::detection::{detect, eliminate_static, Detection, DetectionError, DetectorConfig};
use crate::fusion::{
    detect_in_world, fuse_frame, unify_cloud, FusedFrame, FusionConfig, FusionError, FusionMode, SensorInput, SensorRegistration,
    MAX_AGE_TICKS,
};
use crate::geometry::{Pose, Vec3};
use crate::tracking::{TrackReport, Tracker, TrackerConfig, TrackingError};
use crate::world::{capture_background, fuse_gnss, scan_lidar, ActorId, Background, GnssError, GnssPair, LidarConfig, Snapshot};

use super::codec::{BoxRecord, Payload, PerceptionMessage, WireError, MAX_DATAGRAM_POINTS};
use super::transport::DatagramSink;

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Gnss(#[from] GnssError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Pole-mounted lidar that publishes world-frame geometry.
#[derive(Debug, Clone)]
pub struct RoadsideNode {
    pub registration: SensorRegistration,
    pub lidar: LidarConfig,
    pub detector: DetectorConfig,
    pub background: Background,
    /// Publish every `cadence` ticks.
    pub cadence: u64,
    pub mode: FusionMode,
}

impl RoadsideNode {
    /// Builds the node and captures its background from the statics in `snapshot`.
    pub fn new(
        sensor: SensorId,
        placement: Pose,
        lidar: LidarConfig,
        detector: DetectorConfig,
        cadence: u64,
        mode: FusionMode,
        snapshot: &Snapshot,
    ) -> Self {
        let background = capture_background(&lidar, sensor, &placement, snapshot);
        Self {
            registration: SensorRegistration::roadside(sensor, placement),
            lidar,
            detector,
            background,
            cadence: cadence.max(1),
            mode,
        }
    }

    pub fn sensor(&self) -> SensorId {
        self.registration.sensor
    }

    pub fn placement(&self) -> Pose {
        self.registration.sensor_pose(None).expect("roadside registration")
    }

    /// Scan, static elimination, and mapping to the world frame.
    pub fn sense(&self, snapshot: &Snapshot) -> Result<PointCloud, NodeError> {
        let scan = scan_lidar(&self.lidar, self.sensor(), &self.placement(), snapshot, &[]);
        let moving = eliminate_static(&scan, &self.background, self.detector.background_tolerance)?;
        Ok(unify_cloud(&moving, &self.registration, None)?)
    }

    /// The message this node would publish for `snapshot`.
    pub fn build_message(&self, snapshot: &Snapshot) -> Result<PerceptionMessage, NodeError> {
        let world = self.sense(snapshot)?;
        let sender = self.sensor().0;
        Ok(match self.mode {
            FusionMode::Feature => {
                let boxes = detect(&world, &self.detector)
                    .into_iter()
                    .map(|d| BoxRecord { bbox: d.bbox, point_count: d.point_count })
                    .collect();
                PerceptionMessage::boxes(sender, snapshot.time, boxes)
            }
            FusionMode::Pixel => {
                let k = world.len().div_ceil(MAX_DATAGRAM_POINTS).max(1);
                PerceptionMessage::cloud(sender, snapshot.time, world.downsample(k).points)
            }
        })
    }

    /// Publishes on cadence ticks. Transport failures are logged and do not
    /// fail the call; the built message is returned either way.
    pub fn publish(
        &self,
        tick: u64,
        snapshot: &Snapshot,
        sink: &dyn DatagramSink,
    ) -> Result<Option<PerceptionMessage>, NodeError> {
        if !tick.is_multiple_of(self.cadence) {
            return Ok(None);
        }
        let msg = self.build_message(snapshot)?;
        let bytes = msg.encode_datagram()?;
        if let Err(e) = sink.send(&bytes) {
            log::warn!("roadside {} publish at tick {tick} failed: {e}", self.sensor());
        }
        Ok(Some(msg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestStats {
    pub accepted: u64,
    pub parse_errors: u64,
    pub stale: u64,
    /// Messages dropped because the same sender has a newer one.
    pub superseded: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Buffered,
    Stale,
    Superseded,
    Malformed,
}

/// Newest message per sender, keyed by (sender, timestamp).
#[derive(Debug, Clone, Default)]
pub struct ReceiveBuffer {
    entries: BTreeMap<u32, PerceptionMessage>,
}

impl ReceiveBuffer {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, sender: u32) -> Option<&PerceptionMessage> {
        self.entries.get(&sender)
    }

    pub fn keys(&self) -> Vec<(u32, Micros)> {
        self.entries.iter().map(|(s, m)| (*s, m.timestamp)).collect()
    }

    fn purge(&mut self, now: Micros, tick: Micros) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, m| !is_stale(m.timestamp, now, tick));
        before - self.entries.len()
    }
}

fn is_stale(ts: Micros, now: Micros, tick: Micros) -> bool {
    now.saturating_sub(ts) > MAX_AGE_TICKS * tick || ts > now + tick / 2
}

/// Everything the vehicle perceived in one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct VehiclePerception {
    pub time: Micros,
    pub pose_estimate: Pose,
    /// Own-sensor detections, world frame.
    pub own: Vec<Detection>,
    /// Roadside detections received this tick, world frame.
    pub remote: Vec<Detection>,
    pub fused: FusedFrame,
    pub tracks: Vec<TrackReport>,
}

/// Ego vehicle: GNSS pose, roof lidar, detection, fusion and tracking.
#[derive(Debug, Clone)]
pub struct VehicleNode {
    pub ego: ActorId,
    pub sensor: SensorId,
    pub mount_offset: Vec3,
    pub lidar: LidarConfig,
    pub gnss: GnssPair,
    pub detector: DetectorConfig,
    pub fusion: FusionConfig,
    /// When false, received messages are never fused.
    pub cooperative: bool,
    tracker: Tracker,
    buffer: ReceiveBuffer,
    stats: IngestStats,
}

impl VehicleNode {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ego: ActorId,
        sensor: SensorId,
        mount_offset: Vec3,
        lidar: LidarConfig,
        gnss: GnssPair,
        detector: DetectorConfig,
        fusion: FusionConfig,
        tracker: TrackerConfig,
        cooperative: bool,
    ) -> Result<Self, NodeError> {
        Ok(Self {
            ego,
            sensor,
            mount_offset,
            lidar,
            gnss,
            detector,
            fusion,
            cooperative,
            tracker: Tracker::new(tracker)?,
            buffer: ReceiveBuffer::default(),
            stats: IngestStats::default(),
        })
    }

    pub fn registration(&self) -> SensorRegistration {
        SensorRegistration::vehicle(self.sensor, self.mount_offset)
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn buffer(&self) -> &ReceiveBuffer {
        &self.buffer
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Validates and buffers one untrusted datagram. Never panics.
    pub fn ingest(&mut self, bytes: &[u8], now: Micros) -> IngestOutcome {
        let msg = match PerceptionMessage::decode(bytes) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("dropping malformed datagram: {e}");
                self.stats.parse_errors += 1;
                return IngestOutcome::Malformed;
            }
        };
        if is_stale(msg.timestamp, now, self.fusion.tick_period) {
            self.stats.stale += 1;
            return IngestOutcome::Stale;
        }
        if let Some(existing) = self.buffer.entries.get(&msg.sender_id) {
            if existing.timestamp >= msg.timestamp {
                self.stats.superseded += 1;
                return IngestOutcome::Superseded;
            }
            self.stats.superseded += 1;
        }
        self.stats.accepted += 1;
        self.buffer.entries.insert(msg.sender_id, msg);
        IngestOutcome::Buffered
    }

    fn remote_inputs(&self) -> Vec<SensorInput> {
        self.buffer
            .entries
            .values()
            .map(|m| match &m.payload {
                Payload::Boxes(boxes) => SensorInput::WorldDetections {
                    source: SensorId(m.sender_id),
                    timestamp: m.timestamp,
                    detections: boxes
                        .iter()
                        .map(|b| Detection {
                            bbox: b.bbox,
                            source: SensorId(m.sender_id),
                            timestamp: m.timestamp,
                            point_count: b.point_count,
                        })
                        .collect(),
                },
                Payload::Cloud(points) => {
                    SensorInput::WorldCloud(PointCloud::new(points.clone(), Frame::World, m.timestamp, SensorId(m.sender_id)))
                }
            })
            .collect()
    }

    /// One perception tick against the true world state.
    pub fn perceive(&mut self, snapshot: &Snapshot) -> Result<VehiclePerception, NodeError> {
        let now = snapshot.time;
        let dropped = self.buffer.purge(now, self.fusion.tick_period);
        self.stats.stale += dropped as u64;

        let truth = snapshot.actor(self.ego).map(|a| a.pose).unwrap_or_default();
        let pose_estimate = fuse_gnss(&self.gnss.read(&truth, now))?;
        let sensor_pose = Pose::new(truth.transform_point(self.mount_offset), truth.yaw);
        let scan = scan_lidar(&self.lidar, self.sensor, &sensor_pose, snapshot, &[self.ego]);

        let registration = self.registration();
        let own = detect_in_world(&scan, &registration, Some(&pose_estimate), &self.detector)?;

        let remote_inputs = if self.cooperative { self.remote_inputs() } else { Vec::new() };
        let mut remote = Vec::new();
        for input in &remote_inputs {
            match input {
                SensorInput::WorldDetections { detections, .. } => remote.extend(detections.iter().copied()),
                SensorInput::WorldCloud(c) => remote.extend(detect(c, &self.detector)),
                SensorInput::Raw(_) => {}
            }
        }

        let mut inputs = vec![SensorInput::Raw(scan)];
        inputs.extend(remote_inputs);
        let fused = fuse_frame(&self.fusion, now, &inputs, &[registration], Some(&pose_estimate), &self.detector)?;
        let tracks = self.tracker.update(now, &fused.detections)?;
        Ok(VehiclePerception { time: now, pose_estimate, own, remote, fused, tracks })
    }
}
