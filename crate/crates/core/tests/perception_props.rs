//! Lidar occlusion soundness and detector permutation invariance.

use proptest::prelude::*;

use coopsense::cloud::Frame;
use coopsense::detection::{detect, DetectorConfig};
use coopsense::geometry::{ClassLabel, OrientedBox, Pose, Vec3};
use coopsense::world::{scan_lidar, Actor, ActorKind, LidarConfig, Trajectory, World};
use coopsense::{PointCloud, SensorId};

/// Slab-method entry distance of a unit ray into `b`, in the box's own frame.
fn slab_entry(origin: Vec3, dir: Vec3, b: &OrientedBox) -> Option<f64> {
    let (s, c) = (-b.yaw).sin_cos();
    let rel = origin - b.center;
    let o = [c * rel.x - s * rel.y, s * rel.x + c * rel.y, rel.z];
    let d = [c * dir.x - s * dir.y, s * dir.x + c * dir.y, dir.z];
    let e = [b.extent.x, b.extent.y, b.extent.z];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k].abs() > e[k] {
                return None;
            }
            continue;
        }
        let (a, bb) = ((-e[k] - o[k]) / d[k], (e[k] - o[k]) / d[k]);
        lo = lo.max(a.min(bb));
        hi = hi.min(a.max(bb));
    }
    (lo <= hi && hi >= 0.0).then_some(lo.max(0.0))
}

fn scene_box() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (3.0..15.0f64, -3.1..3.1f64, 0.3..2.5f64, 0.3..1.2f64, -3.1..3.1f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn no_return_lies_behind_another_surface(boxes in prop::collection::vec(scene_box(), 1..5), sensor_yaw in -3.1..3.1f64) {
        let actors: Vec<Actor> = boxes
            .iter()
            .enumerate()
            .map(|(i, &(r, bearing, hl, hw, yaw))| {
                let shape = OrientedBox::new(Vec3::new(0.0, 0.0, 0.8), Vec3::new(hl, hw, 0.8), 0.0, ClassLabel::Unknown).unwrap();
                let pose = Pose::new(Vec3::new(r * bearing.cos(), r * bearing.sin(), 0.0), yaw);
                Actor::new(i as u32 + 1, ActorKind::StaticObstacle, shape, Trajectory::stationary(pose)).unwrap()
            })
            .collect();
        let world = World::new(actors, 100_000).unwrap();
        let snap = world.snapshot_at(0);
        let config = LidarConfig { horizontal_resolution: 1.5f64.to_radians(), channels: 8, noise_sigma: 0.0, ..LidarConfig::default() };
        let sensor = Pose::new(Vec3::new(0.0, 0.0, 1.0), sensor_yaw);
        let cloud = scan_lidar(&config, SensorId(1), &sensor, &snap, &[]);
        prop_assert_eq!(cloud.frame, Frame::SensorLocal);
        for p in &cloud.points {
            let w = sensor.transform_point(*p);
            let range = w.distance(&sensor.position);
            prop_assert!(range <= config.max_range + 1e-9);
            let dir = (w - sensor.position) * (1.0 / range);
            let entries: Vec<f64> = snap.actors.iter().filter_map(|a| slab_entry(sensor.position, dir, &a.bounds)).collect();
            let nearest = entries.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!((nearest - range).abs() <= 1e-6, "return at {range}, nearest surface at {nearest}");
        }
    }

    #[test]
    fn detection_ignores_point_order(
        blobs in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64, 0.2..2.0f64, 0.2..1.0f64, -3.1..3.1f64), 1..4),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut points = Vec::new();
        for &(x, y, hl, hw, yaw) in &blobs {
            let (s, c) = yaw.sin_cos();
            for i in 0..12 {
                for j in 0..4 {
                    let (u, v) = (-hl + 2.0 * hl * i as f64 / 11.0, -hw + 2.0 * hw * j as f64 / 3.0);
                    points.push(Vec3::new(x + c * u - s * v, y + s * u + c * v, 0.2 * j as f64));
                }
            }
        }
        let cloud = PointCloud::new(points.clone(), Frame::World, 0, SensorId(1));
        let mut shuffled = points;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let other = PointCloud::new(shuffled, Frame::World, 0, SensorId(1));
        let config = DetectorConfig::default();
        let (a, b) = (detect(&cloud, &config), detect(&other, &config));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.point_count, y.point_count);
            prop_assert_eq!(x.bbox.class_label, y.bbox.class_label);
            prop_assert!(x.bbox.center.distance(&y.bbox.center) <= 1e-9);
            prop_assert!((x.bbox.extent - y.bbox.extent).norm() <= 1e-9);
            prop_assert!(coopsense::geometry::angle_diff(x.bbox.yaw, y.bbox.yaw).abs() <= 1e-9);
        }
    }
}
