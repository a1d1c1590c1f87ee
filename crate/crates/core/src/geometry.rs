//! Frames, poses, rigid transforms about the vertical axis, oriented boxes and
//! footprint overlap.
//!
//! Every transform in the crate rotates only about +z. A roadside sensor is
//! placed with a full [`Pose`] whose yaw defaults to zero; with zero yaw the
//! roadside mapping is a pure translation.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Footprints smaller than this are treated as degenerate.
pub const MIN_FOOTPRINT_AREA: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("ground-truth footprint is degenerate (area {0:e} m^2)")]
    DegenerateTruth(f64),
    #[error("invalid box: {0}")]
    InvalidBox(String),
}

/// A point or displacement in meters, right-handed, z up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_xy(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        (*self - *other).norm()
    }

    pub fn distance_xy(&self, other: &Vec3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.z)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Signed shortest-arc difference `a - b`, in (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Rotation about +z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationZ {
    pub yaw: f64,
}

impl RotationZ {
    pub const IDENTITY: RotationZ = RotationZ { yaw: 0.0 };

    pub fn new(yaw: f64) -> Self {
        Self { yaw }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        rotate_z(p, self.yaw)
    }

    pub fn inverse(&self) -> RotationZ {
        RotationZ { yaw: -self.yaw }
    }

    /// Row-major 3x3 matrix.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.yaw.sin_cos();
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    }
}

/// `(x cos - y sin, x sin + y cos, z)`.
pub fn rotate_z(p: Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    Vec3::new(p.x * c - p.y * s, p.x * s + p.y * c, p.z)
}

/// Rigid placement of an actor or sensor: position plus yaw about +z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, yaw: 0.0 };

    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self { position, yaw: normalize_angle(yaw) }
    }

    pub fn from_translation(position: Vec3) -> Self {
        Self { position, yaw: 0.0 }
    }

    /// Maps a point expressed in this pose's local frame into the parent frame.
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        rotate_z(p, self.yaw) + self.position
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: Vec3) -> Vec3 {
        rotate_z(p - self.position, -self.yaw)
    }

    /// `self * local`: places `local` (given in this pose's frame) in the parent frame.
    pub fn compose(&self, local: &Pose) -> Pose {
        Pose::new(self.transform_point(local.position), self.yaw + local.yaw)
    }
}

/// Roadside sensor point into the world frame: `p + L`.
pub fn road_to_world(p_road: Vec3, l_road: Vec3) -> Vec3 {
    p_road + l_road
}

/// Roadside mapping for a pole with a yaw. Zero yaw reduces to [`road_to_world`].
pub fn road_to_world_posed(p_road: Vec3, placement: &Pose) -> Vec3 {
    placement.transform_point(p_road)
}

/// Vehicle sensor point into the world frame: `R(yaw) (p + D) + L`.
///
/// The mount offset is added first (sensor frame to body frame), then the body
/// frame is rotated and translated to the world.
pub fn vehicle_to_world(p_vehicle: Vec3, mount_offset: Vec3, vehicle_pose: &Pose) -> Vec3 {
    rotate_z(p_vehicle + mount_offset, vehicle_pose.yaw) + vehicle_pose.position
}

/// Inverse of [`vehicle_to_world`].
pub fn world_to_vehicle(p_world: Vec3, mount_offset: Vec3, vehicle_pose: &Pose) -> Vec3 {
    rotate_z(p_world - vehicle_pose.position, -vehicle_pose.yaw) - mount_offset
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Vehicle,
    Pedestrian,
    Bicycle,
    Unknown,
}

impl ClassLabel {
    pub fn code(self) -> u8 {
        match self {
            ClassLabel::Vehicle => 0,
            ClassLabel::Pedestrian => 1,
            ClassLabel::Bicycle => 2,
            ClassLabel::Unknown => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ClassLabel::Vehicle),
            1 => Some(ClassLabel::Pedestrian),
            2 => Some(ClassLabel::Bicycle),
            3 => Some(ClassLabel::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Vehicle => "vehicle",
            ClassLabel::Pedestrian => "pedestrian",
            ClassLabel::Bicycle => "bicycle",
            ClassLabel::Unknown => "unknown",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A 3D boundary: center, half-lengths along the local axes, yaw and class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Half-lengths along local x, y, z.
    pub extent: Vec3,
    pub yaw: f64,
    pub class_label: ClassLabel,
}

impl OrientedBox {
    pub fn new(center: Vec3, extent: Vec3, yaw: f64, class_label: ClassLabel) -> Result<Self, GeometryError> {
        let b = Self { center, extent, yaw: normalize_angle(yaw), class_label };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.center.is_finite() || !self.extent.is_finite() || !self.yaw.is_finite() {
            return Err(GeometryError::InvalidBox("non-finite field".into()));
        }
        if self.extent.x <= 0.0 || self.extent.y <= 0.0 || self.extent.z <= 0.0 {
            return Err(GeometryError::InvalidBox(format!("extents must be positive, got {}", self.extent)));
        }
        Ok(())
    }

    /// The eight corners: bottom face counter-clockwise starting at local
    /// (-x, -y), then the top face in the same order.
    pub fn corners(&self) -> [Vec3; 8] {
        let e = self.extent;
        let local = [
            Vec3::new(-e.x, -e.y, -e.z),
            Vec3::new(e.x, -e.y, -e.z),
            Vec3::new(e.x, e.y, -e.z),
            Vec3::new(-e.x, e.y, -e.z),
            Vec3::new(-e.x, -e.y, e.z),
            Vec3::new(e.x, -e.y, e.z),
            Vec3::new(e.x, e.y, e.z),
            Vec3::new(-e.x, e.y, e.z),
        ];
        local.map(|p| rotate_z(p, self.yaw) + self.center)
    }

    /// Rebuilds a box from corners laid out as [`OrientedBox::corners`] returns them.
    pub fn from_corners(corners: &[Vec3; 8], class_label: ClassLabel) -> Result<Self, GeometryError> {
        let sum = corners.iter().fold(Vec3::ZERO, |acc, c| acc + *c);
        let center = sum * (1.0 / 8.0);
        let ex = corners[1] - corners[0];
        let ey = corners[3] - corners[0];
        let ez = corners[4] - corners[0];
        let yaw = ex.y.atan2(ex.x);
        Self::new(center, Vec3::new(ex.norm_xy() / 2.0, ey.norm_xy() / 2.0, ez.z / 2.0), yaw, class_label)
    }

    /// Counter-clockwise xy footprint.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let c = self.corners();
        [[c[0].x, c[0].y], [c[1].x, c[1].y], [c[2].x, c[2].y], [c[3].x, c[3].y]]
    }

    pub fn footprint_area(&self) -> f64 {
        4.0 * self.extent.x * self.extent.y
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.center.z - self.extent.z, self.center.z + self.extent.z)
    }

    /// Whether an xy point lies inside the footprint, with `margin` meters of slack.
    pub fn contains_xy(&self, x: f64, y: f64, margin: f64) -> bool {
        let local = rotate_z(Vec3::new(x - self.center.x, y - self.center.y, 0.0), -self.yaw);
        local.x.abs() <= self.extent.x + margin && local.y.abs() <= self.extent.y + margin
    }

    /// The same box placed by `pose` (box given in the pose's local frame).
    pub fn transformed(&self, pose: &Pose) -> OrientedBox {
        OrientedBox {
            center: pose.transform_point(self.center),
            extent: self.extent,
            yaw: normalize_angle(self.yaw + pose.yaw),
            class_label: self.class_label,
        }
    }

    /// The same box shifted by `offset` without rotation.
    pub fn translated(&self, offset: Vec3) -> OrientedBox {
        OrientedBox { center: self.center + offset, ..*self }
    }
}

/// Shoelace area of a simple polygon, positive when counter-clockwise.
pub fn polygon_signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc / 2.0
}

/// Intersection of two convex counter-clockwise polygons (Sutherland-Hodgman).
pub fn convex_intersection(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let side = |p: &[f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let s_cur = side(&cur);
            let s_prev = side(&prev);
            if s_cur >= 0.0 {
                if s_prev < 0.0 {
                    output.push(lerp_at_zero(prev, cur, s_prev, s_cur));
                }
                output.push(cur);
            } else if s_prev >= 0.0 {
                output.push(lerp_at_zero(prev, cur, s_prev, s_cur));
            }
        }
    }
    output
}

fn lerp_at_zero(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Area of the intersection of two box footprints.
pub fn footprint_intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    // Cheap reject on bounding circles.
    let ra = a.extent.x.hypot(a.extent.y);
    let rb = b.extent.x.hypot(b.extent.y);
    if a.center.distance_xy(&b.center) > ra + rb {
        return 0.0;
    }
    let poly = convex_intersection(&a.footprint(), &b.footprint());
    polygon_signed_area(&poly).max(0.0)
}

/// Area of `detected ∩ truth` over the area of `truth`, on xy footprints.
pub fn box_overlap_ratio(detected: &OrientedBox, truth: &OrientedBox) -> Result<f64, GeometryError> {
    let truth_area = truth.footprint_area();
    if !(truth_area >= MIN_FOOTPRINT_AREA) {
        return Err(GeometryError::DegenerateTruth(truth_area));
    }
    let inter = footprint_intersection_area(detected, truth);
    Ok((inter / truth_area).clamp(0.0, 1.0))
}

/// Footprint intersection over union. Symmetric; zero when both are degenerate.
pub fn box_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let area_a = a.footprint_area();
    let area_b = b.footprint_area();
    if area_a < MIN_FOOTPRINT_AREA && area_b < MIN_FOOTPRINT_AREA {
        return 0.0;
    }
    let inter = footprint_intersection_area(a, b);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Volumetric IoU: footprint intersection times z-interval overlap.
pub fn box_iou_3d(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (a_lo, a_hi) = a.z_range();
    let (b_lo, b_hi) = b.z_range();
    let dz = (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0);
    let inter = footprint_intersection_area(a, b) * dz;
    let vol_a = a.footprint_area() * 2.0 * a.extent.z;
    let vol_b = b.footprint_area() * 2.0 * b.extent.z;
    let union = vol_a + vol_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Minimum xy distance between two footprints; zero when they intersect.
pub fn footprint_gap(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if footprint_intersection_area(a, b) > 0.0 {
        return 0.0;
    }
    let pa = a.footprint();
    let pb = b.footprint();
    let mut best = f64::INFINITY;
    for i in 0..4 {
        for j in 0..4 {
            best = best.min(point_segment_distance(pa[i], pb[j], pb[(j + 1) % 4]));
            best = best.min(point_segment_distance(pb[j], pa[i], pa[(i + 1) % 4]));
        }
    }
    best
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}
