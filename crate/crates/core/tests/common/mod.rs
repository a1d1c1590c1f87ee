//! Oracles, generators and property bodies shared by the integration suites
//! and the acceptance runner.

#![allow(dead_code)]

use std::f64::consts::PI;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use coopsense::detection::{Detection, DetectorConfig};
use coopsense::fusion::{fuse_boxes, fuse_frame, FusionConfig, FusionMode, SensorInput, SensorRegistration};
use coopsense::geometry::{
    angle_diff, road_to_world, road_to_world_posed, vehicle_to_world, world_to_vehicle, ClassLabel, OrientedBox, Pose, Vec3,
};
use coopsense::net::{BoxRecord, PerceptionMessage};
use coopsense::tracking::{associate, smooth_update, Tracker, TrackerConfig};
use coopsense::world::{fuse_gnss, scan_lidar, Actor, ActorKind, GnssReadings, LidarConfig, Trajectory, World};
use coopsense::SensorId;

pub const TRANSFORM_TOL: f64 = 1e-9;
pub const GNSS_TOL: f64 = 1e-9;
pub const VELOCITY_REL_TOL: f64 = 0.05;

// ---------------------------------------------------------------- oracles

type Mat4 = [[f64; 4]; 4];

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn translation(t: Vec3) -> Mat4 {
    [[1.0, 0.0, 0.0, t.x], [0.0, 1.0, 0.0, t.y], [0.0, 0.0, 1.0, t.z], [0.0, 0.0, 0.0, 1.0]]
}

fn rotation(yaw: f64) -> Mat4 {
    let (s, c) = yaw.sin_cos();
    [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn apply(m: &Mat4, p: Vec3) -> Vec3 {
    let v = [p.x, p.y, p.z, 1.0];
    let r: Vec<f64> = (0..3).map(|i| (0..4).map(|k| m[i][k] * v[k]).sum()).collect();
    Vec3::new(r[0], r[1], r[2])
}

/// Homogeneous-matrix form of the vehicle transform: T(L) Rz(yaw) T(D).
pub fn oracle_vehicle_to_world(p: Vec3, mount: Vec3, pose: &Pose) -> Vec3 {
    let m = mat_mul(&mat_mul(&translation(pose.position), &rotation(pose.yaw)), &translation(mount));
    apply(&m, p)
}

pub fn oracle_road_to_world(p: Vec3, placement: &Pose) -> Vec3 {
    apply(&mat_mul(&translation(placement.position), &rotation(placement.yaw)), p)
}

/// Heading of (dx, dy) built from single-argument arctangents by quadrant.
pub fn oracle_heading(dx: f64, dy: f64) -> f64 {
    if dx.abs() >= dy.abs() {
        let base = (dy / dx).atan();
        if dx > 0.0 {
            base
        } else if dy >= 0.0 {
            base + PI
        } else {
            base - PI
        }
    } else {
        let base = (dx / dy).atan();
        if dy > 0.0 {
            PI / 2.0 - base
        } else {
            -PI / 2.0 - base
        }
    }
}

fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
    (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol && (a.z - b.z).abs() <= tol
}

// ------------------------------------------------------------- strategies

pub fn coord() -> impl Strategy<Value = f64> {
    -1000.0..1000.0f64
}

pub fn vec3() -> impl Strategy<Value = Vec3> {
    (coord(), coord(), -50.0..50.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

pub fn yaw() -> impl Strategy<Value = f64> {
    -PI..PI
}

pub fn pose() -> impl Strategy<Value = Pose> {
    (vec3(), yaw()).prop_map(|(p, y)| Pose::new(p, y))
}

pub fn class_label() -> impl Strategy<Value = ClassLabel> {
    prop_oneof![Just(ClassLabel::Vehicle), Just(ClassLabel::Pedestrian), Just(ClassLabel::Bicycle), Just(ClassLabel::Unknown),]
}

/// Boxes clustered in a small area so that many pairs overlap.
pub fn crowded_box() -> impl Strategy<Value = OrientedBox> {
    (
        -6.0..6.0f64,
        -6.0..6.0f64,
        0.3..2.5f64,
        0.3..1.2f64,
        yaw(),
        prop_oneof![Just(ClassLabel::Vehicle), Just(ClassLabel::Pedestrian)],
    )
        .prop_map(|(x, y, hl, hw, yaw, class)| {
            OrientedBox::new(Vec3::new(x, y, 0.75), Vec3::new(hl, hw, 0.75), yaw, class).expect("valid box")
        })
}

pub fn detection_set() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((crowded_box(), 1u32..400, 1u32..4), 0..12).prop_map(|v| {
        v.into_iter().map(|(bbox, point_count, s)| Detection { bbox, source: SensorId(s), timestamp: 0, point_count }).collect()
    })
}

pub fn wire_box() -> impl Strategy<Value = BoxRecord> {
    (vec3(), (0.01..10.0f64, 0.01..10.0f64, 0.01..10.0f64), -10.0..10.0f64, class_label(), any::<u32>()).prop_map(
        |(center, (ex, ey, ez), yaw, class_label, point_count)| {
            let bbox = OrientedBox { center, extent: Vec3::new(ex, ey, ez), yaw, class_label };
            BoxRecord { bbox, point_count }
        },
    )
}

pub fn message() -> impl Strategy<Value = PerceptionMessage> {
    let boxes = (any::<u32>(), any::<u64>(), prop::collection::vec(wire_box(), 0..20))
        .prop_map(|(s, t, b)| PerceptionMessage::boxes(s, t, b));
    let cloud = (any::<u32>(), any::<u64>(), prop::collection::vec(vec3(), 0..200))
        .prop_map(|(s, t, p)| PerceptionMessage::cloud(s, t, p));
    prop_oneof![boxes, cloud]
}

// ------------------------------------------------------- property bodies

pub fn prop_vehicle_transform(p: Vec3, mount: Vec3, pose: Pose) -> Result<(), TestCaseError> {
    let got = vehicle_to_world(p, mount, &pose);
    let want = oracle_vehicle_to_world(p, mount, &pose);
    prop_assert!(close(got, want, TRANSFORM_TOL), "{got:?} vs {want:?}");
    let back = world_to_vehicle(got, mount, &pose);
    prop_assert!(close(back, p, TRANSFORM_TOL), "inverse {back:?} vs {p:?}");
    Ok(())
}

pub fn prop_road_transform(p: Vec3, placement: Pose) -> Result<(), TestCaseError> {
    let translated = road_to_world(p, placement.position);
    let want = oracle_road_to_world(p, &Pose::from_translation(placement.position));
    prop_assert!(close(translated, want, TRANSFORM_TOL), "{translated:?} vs {want:?}");
    let posed = road_to_world_posed(p, &placement);
    let want = oracle_road_to_world(p, &placement);
    prop_assert!(close(posed, want, TRANSFORM_TOL), "{posed:?} vs {want:?}");
    Ok(())
}

/// Antennas placed from a known pose and baseline; fusion must recover both.
pub fn prop_gnss(pose: Pose, half_baseline: f64) -> Result<(), TestCaseError> {
    let (s, c) = pose.yaw.sin_cos();
    let (x, y) = (pose.position.x, pose.position.y);
    let readings = GnssReadings {
        rear: [x - half_baseline * c, y - half_baseline * s],
        front: [x + half_baseline * c, y + half_baseline * s],
    };
    let fused = fuse_gnss(&readings).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((fused.position.x - x).abs() <= GNSS_TOL && (fused.position.y - y).abs() <= GNSS_TOL);
    prop_assert!(angle_diff(fused.yaw, pose.yaw).abs() <= GNSS_TOL, "{} vs {}", fused.yaw, pose.yaw);
    Ok(())
}

/// Arbitrary antenna fixes against the midpoint and quadrant-arctangent oracle.
pub fn prop_gnss_readings(rear: [f64; 2], front: [f64; 2]) -> Result<(), TestCaseError> {
    let (dx, dy) = (front[0] - rear[0], front[1] - rear[1]);
    prop_assume!(dx.hypot(dy) > 1e-3);
    let fused = fuse_gnss(&GnssReadings { rear, front }).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mid = [(rear[0] + front[0]) / 2.0, (rear[1] + front[1]) / 2.0];
    prop_assert!((fused.position.x - mid[0]).abs() <= GNSS_TOL && (fused.position.y - mid[1]).abs() <= GNSS_TOL);
    prop_assert!(angle_diff(fused.yaw, oracle_heading(dx, dy)).abs() <= GNSS_TOL);
    Ok(())
}

pub fn prop_smoothing(s_n: Vec3, s_prev: Vec3, t: f64) -> Result<(), TestCaseError> {
    let s = smooth_update(s_n, s_prev, t);
    for (got, a, b) in [(s.x, s_n.x, s_prev.x), (s.y, s_n.y, s_prev.y), (s.z, s_n.z, s_prev.z)] {
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        prop_assert!(got >= a.min(b) - slack && got <= a.max(b) + slack, "{got} outside [{a}, {b}]");
    }
    prop_assert_eq!(smooth_update(s_n, s_prev, 0.0), s_prev);
    prop_assert_eq!(smooth_update(s_n, s_prev, 1.0), s_n);
    Ok(())
}

fn class_totals(dets: &[Detection]) -> Vec<(ClassLabel, u64)> {
    let mut out: Vec<(ClassLabel, u64)> = Vec::new();
    for d in dets {
        match out.iter_mut().find(|(c, _)| *c == d.bbox.class_label) {
            Some((_, n)) => *n += u64::from(d.point_count),
            None => out.push((d.bbox.class_label, u64::from(d.point_count))),
        }
    }
    out.sort_by_key(|(c, _)| c.code());
    out
}

pub fn prop_fuse_boxes(dets: Vec<Detection>, threshold: f64) -> Result<(), TestCaseError> {
    let once = fuse_boxes(&dets, threshold);
    prop_assert!(once.len() <= dets.len());
    prop_assert_eq!(&fuse_boxes(&once, threshold), &once);
    // Point counts are summed only within a class.
    prop_assert_eq!(class_totals(&once), class_totals(&dets));
    let identity = fuse_boxes(&dets, 1.0 + 1e-9);
    prop_assert_eq!(identity.len(), dets.len());
    Ok(())
}

/// Exact position samples of a constant-velocity target; returns the relative
/// velocity error after `settle` ticks and the set of confirmed ids seen.
pub fn run_constant_velocity(start: Vec3, velocity: Vec3, ticks: u64, settle: u64) -> (f64, Vec<u64>) {
    let mut tracker = Tracker::new(TrackerConfig::default()).expect("default config");
    let period = 100_000u64;
    let mut ids = Vec::new();
    let mut rel_err = f64::NAN;
    for k in 0..ticks {
        let t = k * period;
        let c = start + velocity * (t as f64 / 1e6);
        let bbox = OrientedBox::new(c, Vec3::new(2.25, 0.9, 0.75), velocity.y.atan2(velocity.x), ClassLabel::Vehicle).unwrap();
        let det = Detection { bbox, source: SensorId(1), timestamp: t, point_count: 100 };
        let reports = tracker.update(t, &[det]).expect("ordered frames");
        for r in &reports {
            if !ids.contains(&r.id) {
                ids.push(r.id);
            }
        }
        if k == settle {
            let v = reports.first().map_or(Vec3::ZERO, |r| r.velocity);
            rel_err = (v - velocity).norm_xy() / velocity.norm_xy();
        }
    }
    (rel_err, ids)
}

pub fn prop_greedy_matches_exhaustive(
    anchors: [(f64, f64); 3],
    jitter: [(f64, f64); 3],
    perm: usize,
) -> Result<(), TestCaseError> {
    let config = TrackerConfig::default();
    let mut tracker = Tracker::new(config).unwrap();
    let boxes: Vec<Detection> = anchors
        .iter()
        .map(|&(x, y)| Detection {
            bbox: OrientedBox::new(Vec3::new(x, y, 0.75), Vec3::new(2.25, 0.9, 0.75), 0.0, ClassLabel::Vehicle).unwrap(),
            source: SensorId(1),
            timestamp: 0,
            point_count: 50,
        })
        .collect();
    tracker.update(0, &boxes).unwrap();
    let order = PERMUTATIONS[perm % PERMUTATIONS.len()];
    let dets: Vec<Detection> = order
        .iter()
        .map(|&i| {
            let mut d = boxes[i];
            d.bbox.center += Vec3::new(jitter[i].0, jitter[i].1, 0.0);
            d.timestamp = 100_000;
            d
        })
        .collect();
    let tracks = tracker.tracks();
    let m = associate(tracks, &dets, 100_000, &config);
    let cost = |pairs: &[(usize, usize)]| -> f64 {
        pairs.iter().map(|&(t, d)| tracks[t].history[0].1.center.distance_xy(&dets[d].bbox.center)).sum()
    };
    let best = PERMUTATIONS
        .iter()
        .map(|p| (0..3).map(|t| (t, p[t])).collect::<Vec<_>>())
        .filter(|pairs| {
            pairs.iter().all(|&(t, d)| tracks[t].history[0].1.center.distance_xy(&dets[d].bbox.center) <= config.gate_distance)
        })
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .expect("the identity pairing is gated");
    let mut greedy = m.pairs.clone();
    greedy.sort_unstable();
    prop_assert_eq!(greedy, best);
    Ok(())
}

pub const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Three anchors at least 10 m apart.
pub fn separated_anchors() -> impl Strategy<Value = [(f64, f64); 3]> {
    ((-40.0..40.0f64, -40.0..40.0f64), (-40.0..40.0f64, -40.0..40.0f64), (-40.0..40.0f64, -40.0..40.0f64))
        .prop_map(|(a, b, c)| [a, b, c])
        .prop_filter("anchors 10 m apart", |a| {
            let d = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).hypot(p.1 - q.1);
            d(a[0], a[1]) >= 10.0 && d(a[0], a[2]) >= 10.0 && d(a[1], a[2]) >= 10.0
        })
}

pub fn jitter() -> impl Strategy<Value = [(f64, f64); 3]> {
    let j = || (-1.0..1.0f64, -1.0..1.0f64);
    (j(), j(), j()).prop_map(|(a, b, c)| [a, b, c])
}

// ------------------------------------------------------------ scenes

/// Up to four cars on a ring, each at least 60 degrees from the next, scanned
/// by a vehicle-mounted lidar and a pole on opposite sides of the ring center.
/// Each car is turned so that both sensors see one of its corners, never a
/// single face. Returns the true boxes and the pixel and feature detections.
pub fn fusion_scene(seed: u64) -> (Vec<OrientedBox>, Vec<Detection>, Vec<Detection>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let car = Vec3::new(2.25, 0.9, 0.75);
    let shape = OrientedBox::new(Vec3::new(0.0, 0.0, 0.75), car, 0.0, ClassLabel::Vehicle).unwrap();
    let ego_pose = Pose::new(Vec3::ZERO, 0.0);
    let hub = Vec3::new(3.0, 3.0, 0.0);
    let mut actors = Vec::new();
    let count = rng.random_range(1..=4);
    let base = rng.random_range(-PI..PI);
    for i in 0..count {
        let bearing = base + i as f64 * 2.0 * PI / count as f64 + rng.random_range(-0.2..0.2);
        let r = rng.random_range(8.0..11.0);
        let center = hub + Vec3::new(r * bearing.cos(), r * bearing.sin(), 0.0);
        let corner_view = |yaw: f64, sensor: Vec3| {
            let a = ((sensor.y - center.y).atan2(sensor.x - center.x) - yaw).rem_euclid(PI / 2.0);
            (PI / 6.0..=PI / 3.0).contains(&a)
        };
        let yaws: Vec<f64> = (0..360)
            .map(|d| (d as f64).to_radians())
            .filter(|&y| corner_view(y, Vec3::ZERO) && corner_view(y, Vec3::new(6.0, 6.0, 0.0)))
            .collect();
        if yaws.is_empty() {
            continue;
        }
        let pose = Pose::new(center, yaws[rng.random_range(0..yaws.len())]);
        actors.push(Actor::new(i as u32 + 2, ActorKind::Car, shape, Trajectory::stationary(pose)).unwrap());
    }
    let world = World::new(actors, 100_000).unwrap();
    let snap = world.snapshot_at(0);

    let mount = Vec3::new(0.0, 0.0, 2.0);
    let vehicle_lidar = LidarConfig { seed, ..LidarConfig::default() };
    // Tilted down so the nearest ring still reaches car height next to the pole.
    let road_lidar = LidarConfig {
        max_range: 40.0,
        horizontal_resolution: 0.1f64.to_radians(),
        channels: 32,
        elevation_min: (-25.0f64).to_radians(),
        elevation_max: 5.0f64.to_radians(),
        seed: seed ^ 0xA5,
        ..LidarConfig::default()
    };
    let placement = Pose::new(Vec3::new(6.0, 6.0, 3.0), 0.0);
    let vehicle_sensor = SensorId(1);
    let road_sensor = SensorId(100);
    let regs = [SensorRegistration::vehicle(vehicle_sensor, mount), SensorRegistration::roadside(road_sensor, placement)];
    let sensor_pose = Pose::new(ego_pose.transform_point(mount), ego_pose.yaw);
    let inputs = [
        SensorInput::Raw(scan_lidar(&vehicle_lidar, vehicle_sensor, &sensor_pose, &snap, &[1])),
        SensorInput::Raw(scan_lidar(&road_lidar, road_sensor, &placement, &snap, &[])),
    ];
    let detector = DetectorConfig::default();
    let run = |mode| {
        let config = FusionConfig { mode, ..FusionConfig::default() };
        fuse_frame(&config, 0, &inputs, &regs, Some(&ego_pose), &detector).unwrap().detections
    };
    let truth = snap.actors.iter().map(|a| a.bounds).collect();
    (truth, run(FusionMode::Pixel), run(FusionMode::Feature))
}

pub fn fusion_count_scene(seed: u64) -> (usize, usize) {
    let (_, pixel, feature) = fusion_scene(seed);
    (pixel.len(), feature.len())
}

// ------------------------------------------------------------- wire

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Messages frozen in `tests/fixtures`; any change to their encoding is a
/// protocol change.
pub fn golden_messages() -> Vec<(&'static str, PerceptionMessage)> {
    let car = OrientedBox::new(Vec3::new(12.5, -3.25, 0.75), Vec3::new(2.25, 0.9, 0.75), 0.5, ClassLabel::Vehicle).unwrap();
    let walker = OrientedBox::new(Vec3::new(-4.0, 8.0, 0.9), Vec3::new(0.25, 0.25, 0.9), -1.25, ClassLabel::Pedestrian).unwrap();
    vec![
        (
            "boxes_v1.bin",
            PerceptionMessage::boxes(
                100,
                1_500_000,
                vec![BoxRecord { bbox: car, point_count: 412 }, BoxRecord { bbox: walker, point_count: 37 }],
            ),
        ),
        (
            "cloud_v1.bin",
            PerceptionMessage::cloud(
                7,
                42,
                vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.25, 0.0), Vec3::new(30.0, -12.125, 1.5)],
            ),
        ),
        ("empty_v1.bin", PerceptionMessage::boxes(1, 0, Vec::new())),
    ]
}

/// Every single-byte substitution and every strict prefix of `bytes` must be
/// rejected. Returns the number of mutants tried.
pub fn reject_all_mutants(bytes: &[u8]) -> Result<usize, String> {
    let mut tried = 0;
    for i in 0..bytes.len() {
        for delta in 1..=255u8 {
            let mut m = bytes.to_vec();
            m[i] = m[i].wrapping_add(delta);
            tried += 1;
            if PerceptionMessage::decode(&m).is_ok() {
                return Err(format!("byte {i} + {delta} accepted"));
            }
        }
    }
    for len in 0..bytes.len() {
        tried += 1;
        if PerceptionMessage::decode(&bytes[..len]).is_ok() {
            return Err(format!("prefix of {len} bytes accepted"));
        }
    }
    Ok(tried)
}
