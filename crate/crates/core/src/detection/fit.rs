use std::f64::consts::FRAC_PI_2;

use crate::geometry::normalize_angle;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// A rectangle in the plane: center, half-lengths along its own axes, heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: [f64; 2],
    pub half: [f64; 2],
    pub yaw: f64,
}

impl Rect {
    /// Long axis first, yaw folded into (-pi/2, pi/2].
    pub fn canonical(self) -> Rect {
        let (mut half, mut yaw) = (self.half, self.yaw);
        if half[1] > half[0] {
            half.swap(0, 1);
            yaw += FRAC_PI_2;
        }
        let mut yaw = normalize_angle(yaw);
        if yaw > FRAC_PI_2 {
            yaw -= std::f64::consts::PI;
        } else if yaw <= -FRAC_PI_2 {
            yaw += std::f64::consts::PI;
        }
        Rect { center: self.center, half, yaw }
    }
}

fn bounding_rect_along(points: &[[f64; 2]], yaw: f64) -> (Rect, f64) {
    let (s, c) = yaw.sin_cos();
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let u = p[0] * c + p[1] * s;
        let v = -p[0] * s + p[1] * c;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let (uc, vc) = ((umin + umax) / 2.0, (vmin + vmax) / 2.0);
    let center = [uc * c - vc * s, uc * s + vc * c];
    let half = [(umax - umin) / 2.0, (vmax - vmin) / 2.0];
    let area = (umax - umin) * (vmax - vmin);
    (Rect { center, half, yaw }, area)
}

/// Minimum-area enclosing rectangle. One side of the optimum is collinear with
/// a hull edge, so every hull edge direction is tried.
pub fn min_area_rect(points: &[[f64; 2]]) -> Option<Rect> {
    let hull = convex_hull(points);
    match hull.len() {
        0 => None,
        1 => Some(Rect { center: hull[0], half: [0.0, 0.0], yaw: 0.0 }),
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let yaw = (b[1] - a[1]).atan2(b[0] - a[0]);
            Some(bounding_rect_along(&hull, yaw).0)
        }
        n => {
            let mut best: Option<(Rect, f64)> = None;
            for i in 0..n {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                let yaw = (b[1] - a[1]).atan2(b[0] - a[0]);
                let (rect, area) = bounding_rect_along(&hull, yaw);
                if best.as_ref().is_none_or(|(_, a)| area < *a - 1e-12) {
                    best = Some((rect, area));
                }
            }
            best.map(|(r, _)| r)
        }
    }
}
