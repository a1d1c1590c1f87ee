//! Cooperative vehicle-infrastructure perception: a simulated world with
//! lidar and GNSS, object detection, multi-sensor fusion, tracking, a wire
//! format for sharing perception between nodes, and a scenario harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod detection;
pub mod fusion;
pub mod geometry;
pub mod net;
pub mod scenario;
pub mod tracking;
pub mod world;

pub use cloud::{Frame, Micros, PointCloud, SensorId};
pub use geometry::{ClassLabel, OrientedBox, Pose, Vec3};
