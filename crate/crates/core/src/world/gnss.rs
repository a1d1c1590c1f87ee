//! Front/rear antenna pair. Position is the antenna midpoint and yaw is the
//! heading of the rear-to-front baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::Micros;
use crate::geometry::{Pose, Vec3};

const COINCIDENT_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnssError {
    #[error("antennas coincide; heading is undefined")]
    CoincidentAntennas,
    #[error("non-finite antenna reading")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnssPair {
    /// Front antenna, body frame (x, y) meters.
    pub front: [f64; 2],
    /// Rear antenna, body frame (x, y) meters.
    pub rear: [f64; 2],
    /// Per-antenna, per-axis noise, meters.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GnssPair {
    fn default() -> Self {
        Self { front: [1.5, 0.0], rear: [-1.5, 0.0], noise_sigma: 0.0, seed: 0 }
    }
}

/// World-frame antenna fixes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssReadings {
    pub rear: [f64; 2],
    pub front: [f64; 2],
}

impl GnssPair {
    pub fn validate(&self) -> Result<(), GnssError> {
        let d = (self.front[0] - self.rear[0]).hypot(self.front[1] - self.rear[1]);
        if !d.is_finite() {
            return Err(GnssError::NonFinite);
        }
        if d < COINCIDENT_EPS {
            return Err(GnssError::CoincidentAntennas);
        }
        Ok(())
    }

    /// Simulated fixes for a vehicle at `pose`.
    pub fn read(&self, pose: &Pose, time: Micros) -> GnssReadings {
        let place = |a: [f64; 2]| {
            let w = pose.transform_point(Vec3::new(a[0], a[1], 0.0));
            [w.x, w.y]
        };
        let mut rear = place(self.rear);
        let mut front = place(self.front);
        if self.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ time.rotate_left(17));
            let n = Normal::new(0.0, self.noise_sigma).expect("finite sigma");
            for v in rear.iter_mut().chain(front.iter_mut()) {
                *v += n.sample(&mut rng);
            }
        }
        GnssReadings { rear, front }
    }
}

/// Midpoint position and two-argument arctangent heading.
pub fn fuse_gnss(r: &GnssReadings) -> Result<Pose, GnssError> {
    let [x1, y1] = r.rear;
    let [x2, y2] = r.front;
    if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
        return Err(GnssError::NonFinite);
    }
    let (dx, dy) = (x2 - x1, y2 - y1);
    if dx.hypot(dy) < COINCIDENT_EPS {
        return Err(GnssError::CoincidentAntennas);
    }
    let position = Vec3::new(x1 / 2.0 + x2 / 2.0, y1 / 2.0 + y2 / 2.0, 0.0);
    Ok(Pose::new(position, dy.atan2(dx)))
}
