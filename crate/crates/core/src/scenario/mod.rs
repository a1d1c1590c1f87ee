//! End-to-end scenario runs: world, roadside and vehicle nodes, link, metrics.

mod checks;
mod report;
mod spec;

pub use checks::{check_report, Check};

pub use report::{
    ego_right_bearing, emit_report, occlusion_profile, required_braking_distance, AzimuthInterval, LinkStats, MetricsReport,
    Mode, OcclusionReport, ReportError, ReportFormat, SourceOverlap, TickRecord, BRAKING_DECELERATION, CSV_HEADER, REACTION_TIME,
};
pub use spec::{
    builtin_names, builtin_source, ActorSpec, FusionSpec, OcclusionSpec, RoadsideSpec, ScenarioError, ScenarioSpec, VehicleSpec,
};

use std::time::Duration;

use crate::cloud::{Micros, SensorId};
use crate::detection::Detection;
use crate::fusion::{FusionConfig, FusionMode};
use crate::geometry::{box_overlap_ratio, footprint_gap, footprint_intersection_area, OrientedBox, Vec3};
use crate::net::transport::{in_process, udp_loopback, DatagramSink, DatagramSource, SeveredSink, SilentSource};
use crate::net::{NodeError, RoadsideNode, TransportError, VehicleNode};
use crate::world::{ActorId, Snapshot, World};

/// Radius within which a detection or track is attributed to a ground-truth actor.
pub const ASSOCIATION_RADIUS: f64 = 2.0;

/// Published overlap figures for the accuracy experiment.
pub const REFERENCE_OVERLAP: SourceOverlap = SourceOverlap { vehicle: Some(0.929), road: Some(0.928), fused: Some(0.937) };

/// How roadside datagrams reach the vehicle in a cooperative run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    InProcess,
    /// Loopback UDP; port 0 picks a free port.
    Udp {
        port: u16,
    },
    /// The roadside publishes into a dead link.
    Severed,
    /// No roadside node at all.
    NoRoadside,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub fusion: FusionMode,
    pub seed: u64,
    pub link: Link,
}

impl RunOptions {
    pub fn new(mode: Mode, fusion: FusionMode, seed: u64) -> Self {
        Self { mode, fusion, seed, link: Link::InProcess }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Independent stream seed for one consumer of the run seed.
fn stream_seed(run_seed: u64, stream: u64) -> u64 {
    let mut z = run_seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type Endpoints = (Box<dyn DatagramSink>, Box<dyn DatagramSource>);

fn link_endpoints(link: Link) -> Result<Endpoints, TransportError> {
    Ok(match link {
        Link::InProcess => {
            let (tx, rx) = in_process();
            (Box::new(tx), Box::new(rx))
        }
        Link::Udp { port } => {
            let (tx, rx) = udp_loopback(port)?;
            (Box::new(tx), Box::new(rx))
        }
        Link::Severed | Link::NoRoadside => (Box::new(SeveredSink), Box::new(SilentSource)),
    })
}

fn nearest_detection<'a>(dets: &'a [Detection], truth: &OrientedBox) -> Option<&'a Detection> {
    dets.iter()
        .map(|d| (d.bbox.center.distance_xy(&truth.center), d))
        .filter(|(dist, _)| *dist <= ASSOCIATION_RADIUS)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, d)| d)
}

/// Ground-truth actor nearest to `center`, within the association radius.
fn attribute(snapshot: &Snapshot, center: Vec3) -> Option<ActorId> {
    snapshot
        .actors
        .iter()
        .map(|a| (a.bounds.center.distance_xy(&center), a.id))
        .filter(|(d, _)| *d <= ASSOCIATION_RADIUS)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

fn overlap_of(dets: &[Detection], truth: &OrientedBox) -> Option<f64> {
    nearest_detection(dets, truth).and_then(|d| box_overlap_ratio(&d.bbox, truth).ok())
}

fn ego_speed(world: &World, ego: ActorId, t: Micros, dt: Micros) -> f64 {
    let Some(actor) = world.actor(ego) else { return 0.0 };
    let (a, b) = if t >= dt { (t - dt, t) } else { (t, t + dt) };
    let pa = actor.trajectory.pose_at(a).position;
    let pb = actor.trajectory.pose_at(b).position;
    pa.distance_xy(&pb) / (dt as f64 / 1e6)
}

fn occlusion_report(spec: &ScenarioSpec, world: &World) -> Result<Option<OcclusionReport>, ScenarioError> {
    let Some(o) = spec.occlusion else { return Ok(None) };
    let at = spec::seconds_to_micros(o.at)?;
    let snap = world.snapshot_at(at);
    let (Some(ego), Some(blocker), Some(target)) = (snap.actor(spec.ego), snap.actor(o.blocker), snap.actor(spec.target)) else {
        return Ok(None);
    };
    let blocked = occlusion_profile(&ego.pose, Vec3::from(spec.vehicle.mount), &blocker.bounds, &spec.vehicle.lidar);
    let bearing = ego_right_bearing(&ego.pose, target.bounds.center);
    let target_hidden = blocked.iter().any(|i| i.contains(bearing) || i.contains(bearing + 360.0));
    Ok(Some(OcclusionReport { time_s: o.at, blocked, target_bearing_deg: bearing, target_hidden }))
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Runs `spec` to completion. Configuration errors surface before tick 0.
pub fn run_scenario(spec: &ScenarioSpec, options: &RunOptions) -> Result<MetricsReport, RunError> {
    spec.validate()?;
    let world = spec.build_world()?;
    let period = spec.tick_period();

    let mut vehicle_lidar = spec.vehicle.lidar;
    vehicle_lidar.seed = vehicle_lidar.seed.wrapping_add(stream_seed(options.seed, 1));
    let mut gnss = spec.vehicle.gnss;
    gnss.seed = gnss.seed.wrapping_add(stream_seed(options.seed, 3));
    let fusion = FusionConfig { mode: options.fusion, iou_threshold: spec.fusion.iou_threshold, tick_period: period };
    let cooperative = options.mode == Mode::Coop;
    let mut vehicle = VehicleNode::new(
        spec.ego,
        spec.vehicle_sensor(),
        Vec3::from(spec.vehicle.mount),
        vehicle_lidar,
        gnss,
        spec.detector,
        fusion,
        spec.tracker,
        cooperative,
    )?;

    let with_roadside = cooperative && options.link != Link::NoRoadside;
    let roadside = match (&spec.roadside, with_roadside) {
        (Some(r), true) => {
            let mut lidar = r.lidar;
            lidar.seed = lidar.seed.wrapping_add(stream_seed(options.seed, 2));
            Some(RoadsideNode::new(
                SensorId(r.sensor_id),
                r.placement(),
                lidar,
                spec.detector,
                r.cadence,
                options.fusion,
                &world.snapshot_at(0),
            ))
        }
        _ => None,
    };
    let (sink, source) = link_endpoints(if roadside.is_some() { options.link } else { Link::NoRoadside })?;

    let occlusion = occlusion_report(spec, &world)?;
    let mut series = Vec::with_capacity(spec.duration_ticks as usize);
    let mut first_detection: Option<(f64, Micros)> = None;
    let mut collision: Option<Micros> = None;
    let mut closest = (f64::INFINITY, 0);

    for tick in 0..spec.duration_ticks {
        let now = tick * period;
        let snap = world.snapshot_at(now);
        if let Some(node) = &roadside {
            let sent = node.publish(tick, &snap, sink.as_ref())?.is_some();
            let expected = usize::from(sent && options.link != Link::Severed);
            for datagram in source.drain_expecting(expected, Duration::from_secs(2)) {
                vehicle.ingest(&datagram, now);
            }
        }
        let perception = vehicle.perceive(&snap)?;

        let ego = snap.actor(spec.ego).expect("validated ego").bounds;
        let target = snap.actor(spec.target).expect("validated target").bounds;
        let gap = footprint_gap(&ego, &target);
        if gap < closest.0 {
            closest = (gap, now);
        }
        if collision.is_none() && footprint_intersection_area(&ego, &target) > 0.0 {
            collision = Some(now);
        }
        let target_confirmed = perception.tracks.iter().any(|t| attribute(&snap, t.bbox.center) == Some(spec.target));
        if target_confirmed && first_detection.is_none() {
            first_detection = Some((gap, now));
        }
        let overlap = SourceOverlap {
            vehicle: overlap_of(&perception.own, &target),
            road: overlap_of(&perception.remote, &target),
            fused: overlap_of(&perception.fused.detections, &target),
        };
        series.push(TickRecord {
            tick,
            time_s: now as f64 / 1e6,
            ego_x: ego.center.x,
            ego_y: ego.center.y,
            target_x: target.center.x,
            target_y: target.center.y,
            distance: gap,
            seen_by_vehicle: overlap.vehicle.is_some(),
            seen_by_road: overlap.road.is_some(),
            target_confirmed,
            confirmed_tracks: perception.tracks.len(),
            overlap,
        });
    }

    let (mut v, mut r, mut f) = (Vec::new(), Vec::new(), Vec::new());
    for rec in &series {
        if let (Some(a), Some(b), Some(c)) = (rec.overlap.vehicle, rec.overlap.road, rec.overlap.fused) {
            v.push(a);
            r.push(b);
            f.push(c);
        }
    }
    let seconds = |t: Micros| t as f64 / 1e6;
    let speed_at = first_detection.map_or(closest.1, |(_, t)| t);
    let speed = ego_speed(&world, spec.ego, speed_at, period);
    let required = required_braking_distance(speed);
    let ttc = match (first_detection, collision) {
        (Some((_, td)), Some(tc)) if tc >= td => Some(seconds(tc - td)),
        _ => None,
    };
    let stats = vehicle.stats();
    Ok(MetricsReport {
        scenario: spec.name.clone(),
        mode: options.mode,
        fusion: options.fusion,
        seed: options.seed,
        tick_period_s: seconds(period),
        ticks: spec.duration_ticks,
        first_detection_distance: first_detection.map(|(d, _)| d),
        first_detection_time_s: first_detection.map(|(_, t)| seconds(t)),
        time_to_collision_at_first_detection: ttc,
        min_approach_distance: closest.0,
        collision_flag: collision.is_some(),
        collision_time_s: collision.map(seconds),
        ego_speed: speed,
        required_braking_distance: required,
        braking_feasible: first_detection.is_some_and(|(d, _)| d >= required),
        mean_overlap: SourceOverlap { vehicle: mean(&v), road: mean(&r), fused: mean(&f) },
        evaluated_ticks: f.len(),
        reference_overlap: REFERENCE_OVERLAP,
        occlusion,
        link: LinkStats {
            accepted: stats.accepted,
            parse_errors: stats.parse_errors,
            stale: stats.stale,
            superseded: stats.superseded,
        },
        series,
    })
}
