//! Persistent identities across frames and short-horizon motion prediction.
//!
//! Association is greedy nearest-neighbour on predicted centers, gated and
//! class-consistent. The motion estimate is a planar velocity: each update
//! measures the instantaneous velocity between consecutive centers and blends
//! it with [`smooth_update`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::Micros;
use crate::detection::Detection;
use crate::geometry::{ClassLabel, OrientedBox, Pose, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("track {0} has fewer than two observations")]
    InsufficientHistory(u64),
    #[error("frame at {frame} is not after the previous frame at {previous}")]
    OutOfOrder { frame: Micros, previous: Micros },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
}

/// Which pair of velocities the smoothing step blends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingForm {
    /// `S = t * v_n + (1 - t) * v_{n-1}` over the two latest measured velocities.
    #[default]
    TwoSample,
    /// `S = t * v_n + (1 - t) * S_prev`, blending the measurement into the running estimate.
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    /// Meters between a predicted center and a detection for them to match.
    pub gate_distance: f64,
    /// Weight of the newest velocity, in [0, 1].
    pub smoothing: f64,
    /// Consecutive unmatched frames after which a track is retired.
    pub max_misses: u32,
    /// Matches needed before a track is reported.
    pub min_hits: u32,
    pub smoothing_form: SmoothingForm,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { gate_distance: 3.0, smoothing: 0.7, max_misses: 3, min_hits: 2, smoothing_form: SmoothingForm::TwoSample }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackingError> {
        if !(self.gate_distance > 0.0) {
            return Err(TrackingError::InvalidConfig("gate_distance must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return Err(TrackingError::InvalidConfig("smoothing must lie in [0, 1]".into()));
        }
        if self.max_misses == 0 {
            return Err(TrackingError::InvalidConfig("max_misses must be at least 1".into()));
        }
        Ok(())
    }
}

/// `t * s_n + (1 - t) * s_prev`, componentwise.
pub fn smooth_update(s_n: Vec3, s_prev: Vec3, t: f64) -> Vec3 {
    s_n * t + s_prev * (1.0 - t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub class_label: ClassLabel,
    pub history: Vec<(Micros, OrientedBox)>,
    /// Smoothed planar velocity, m/s, z always 0.
    pub smoothed_velocity: Vec3,
    last_measured: Option<Vec3>,
    pub hits: u32,
    pub misses: u32,
}

impl Track {
    fn spawn(id: u64, at: Micros, bbox: OrientedBox) -> Self {
        Self {
            id,
            class_label: bbox.class_label,
            history: vec![(at, bbox)],
            smoothed_velocity: Vec3::ZERO,
            last_measured: None,
            hits: 1,
            misses: 0,
        }
    }

    pub fn last(&self) -> (Micros, OrientedBox) {
        *self.history.last().expect("tracks are never empty")
    }

    pub fn last_seen(&self) -> Micros {
        self.last().0
    }

    /// Center extrapolated to `at` with the smoothed velocity.
    pub fn predicted_center(&self, at: Micros) -> Vec3 {
        let (t0, b) = self.last();
        let dt = (at as f64 - t0 as f64) / 1e6;
        b.center + self.smoothed_velocity * dt
    }

    fn observe(&mut self, at: Micros, bbox: OrientedBox, config: &TrackerConfig) {
        let (t0, prev) = self.last();
        let dt = (at - t0) as f64 / 1e6;
        let d = bbox.center - prev.center;
        let measured = Vec3::new(d.x / dt, d.y / dt, 0.0);
        self.smoothed_velocity = match (config.smoothing_form, self.last_measured) {
            (_, None) => measured,
            (SmoothingForm::TwoSample, Some(v_prev)) => smooth_update(measured, v_prev, config.smoothing),
            (SmoothingForm::Recursive, Some(_)) => smooth_update(measured, self.smoothed_velocity, config.smoothing),
        };
        self.last_measured = Some(measured);
        self.history.push((at, bbox));
        self.hits += 1;
        self.misses = 0;
    }

    pub fn is_confirmed(&self, config: &TrackerConfig) -> bool {
        self.hits >= config.min_hits
    }

    /// Center plus velocity times `horizon` seconds, yaw held.
    pub fn predict(&self, horizon: f64) -> Result<Pose, TrackingError> {
        predict(self, horizon)
    }
}

pub fn predict(track: &Track, horizon: f64) -> Result<Pose, TrackingError> {
    if track.history.len() < 2 {
        return Err(TrackingError::InsufficientHistory(track.id));
    }
    let (_, b) = track.last();
    Ok(Pose::new(b.center + track.smoothed_velocity * horizon, b.yaw))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// (track index, detection index)
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Greedy gated nearest-neighbour matching of detections to tracks predicted
/// forward to `at`. Shortest distance first; ties by track id then detection
/// index.
pub fn associate(tracks: &[Track], detections: &[Detection], at: Micros, config: &TrackerConfig) -> Matching {
    let mut candidates: Vec<(f64, u64, usize, usize)> = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        let predicted = t.predicted_center(at);
        for (di, d) in detections.iter().enumerate() {
            if d.bbox.class_label != t.class_label {
                continue;
            }
            let dist = predicted.distance_xy(&d.bbox.center);
            if dist <= config.gate_distance {
                candidates.push((dist, t.id, ti, di));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.3.cmp(&b.3)));
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    let mut m = Matching::default();
    for (_, _, ti, di) in candidates {
        if track_used[ti] || det_used[di] {
            continue;
        }
        track_used[ti] = true;
        det_used[di] = true;
        m.pairs.push((ti, di));
    }
    m.pairs.sort_unstable();
    m.unmatched_tracks = (0..tracks.len()).filter(|i| !track_used[*i]).collect();
    m.unmatched_detections = (0..detections.len()).filter(|i| !det_used[*i]).collect();
    m
}

/// A confirmed track as seen after one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackReport {
    pub id: u64,
    pub class_label: ClassLabel,
    pub bbox: OrientedBox,
    pub velocity: Vec3,
    /// Whether a detection was matched in this frame.
    pub updated: bool,
}

/// Sequential tracker state. Frames must arrive in strictly increasing time.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<Micros>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackingError> {
        config.validate()?;
        Ok(Self { config, tracks: Vec::new(), next_id: 1, last_frame: None })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn update(&mut self, at: Micros, detections: &[Detection]) -> Result<Vec<TrackReport>, TrackingError> {
        if let Some(prev) = self.last_frame {
            if at <= prev {
                return Err(TrackingError::OutOfOrder { frame: at, previous: prev });
            }
        }
        self.last_frame = Some(at);
        let m = associate(&self.tracks, detections, at, &self.config);
        let mut updated = vec![false; self.tracks.len()];
        for &(ti, di) in &m.pairs {
            self.tracks[ti].observe(at, detections[di].bbox, &self.config);
            updated[ti] = true;
        }
        for &ti in &m.unmatched_tracks {
            self.tracks[ti].misses += 1;
        }
        let max_misses = self.config.max_misses;
        let mut keep = updated.into_iter();
        let mut survivors = Vec::with_capacity(self.tracks.len());
        for t in self.tracks.drain(..) {
            let was_updated = keep.next().unwrap_or(false);
            if t.misses < max_misses {
                survivors.push((t, was_updated));
            }
        }
        for &di in &m.unmatched_detections {
            let t = Track::spawn(self.next_id, at, detections[di].bbox);
            self.next_id += 1;
            survivors.push((t, true));
        }
        let reports = survivors
            .iter()
            .filter(|(t, _)| t.is_confirmed(&self.config))
            .map(|(t, upd)| TrackReport {
                id: t.id,
                class_label: t.class_label,
                bbox: t.last().1,
                velocity: t.smoothed_velocity,
                updated: *upd,
            })
            .collect();
        self.tracks = survivors.into_iter().map(|(t, _)| t).collect();
        Ok(reports)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::SensorId;

    fn det_at(x: f64, y: f64) -> Detection {
        Detection {
            bbox: OrientedBox::new(Vec3::new(x, y, 0.75), Vec3::new(2.0, 0.9, 0.75), 0.0, ClassLabel::Vehicle).unwrap(),
            source: SensorId(1),
            timestamp: 0,
            point_count: 10,
        }
    }

    #[test]
    fn smooth_update_examples() {
        let (a, b) = (Vec3::new(10.0, 1.0, 0.0), Vec3::new(20.0, -3.0, 0.0));
        assert_eq!(smooth_update(a, b, 1.0), a);
        assert_eq!(smooth_update(a, b, 0.0), b);
        let r = smooth_update(Vec3::new(10.0, 0.0, 0.0), Vec3::new(20.0, 0.0, 0.0), 0.7);
        assert!((r.x - 13.0).abs() < 1e-12 && r.y == 0.0 && r.z == 0.0);
    }

    #[test]
    fn gate_examples() {
        let mut tr = Tracker::new(TrackerConfig { gate_distance: 2.0, ..TrackerConfig::default() }).unwrap();
        tr.update(0, &[det_at(0.0, 0.0)]).unwrap();
        tr.update(100_000, &[det_at(0.5, 0.0)]).unwrap();
        assert_eq!(tr.tracks().len(), 1);
        assert_eq!(tr.tracks()[0].history.len(), 2);
        tr.update(200_000, &[det_at(10.5, 0.0)]).unwrap();
        assert_eq!(tr.tracks().len(), 2);
    }

    #[test]
    fn confirmation_and_retirement() {
        let cfg = TrackerConfig::default();
        let mut tr = Tracker::new(cfg).unwrap();
        assert!(tr.update(0, &[det_at(0.0, 0.0)]).unwrap().is_empty());
        let r = tr.update(100_000, &[det_at(0.1, 0.0)]).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].updated);
        for k in 0..cfg.max_misses {
            assert_eq!(tr.tracks().len(), 1, "retired too early at miss {k}");
            tr.update(200_000 + k as u64 * 100_000, &[]).unwrap();
        }
        assert!(tr.tracks().is_empty());
    }

    #[test]
    fn class_gate_blocks_match() {
        let mut tr = Tracker::new(TrackerConfig::default()).unwrap();
        tr.update(0, &[det_at(0.0, 0.0)]).unwrap();
        let mut ped = det_at(0.1, 0.0);
        ped.bbox.class_label = ClassLabel::Pedestrian;
        tr.update(100_000, &[ped]).unwrap();
        assert_eq!(tr.tracks().len(), 2);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut tr = Tracker::new(TrackerConfig::default()).unwrap();
        tr.update(100, &[]).unwrap();
        assert!(matches!(tr.update(100, &[]), Err(TrackingError::OutOfOrder { .. })));
    }

    #[test]
    fn predict_examples() {
        let mut tr = Tracker::new(TrackerConfig::default()).unwrap();
        tr.update(0, &[det_at(0.0, 0.0)]).unwrap();
        assert!(matches!(tr.tracks()[0].predict(1.0), Err(TrackingError::InsufficientHistory(_))));
        tr.update(100_000, &[det_at(0.0, 0.0)]).unwrap();
        let p = tr.tracks()[0].predict(3.0).unwrap();
        assert_eq!(p.position, Vec3::new(0.0, 0.0, 0.75));

        let mut t = tr.tracks()[0].clone();
        t.smoothed_velocity = Vec3::new(2.0, 0.0, 0.0);
        assert!((t.predict(0.5).unwrap().position.x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_velocity_prediction() {
        // Closed form: x(k) = 5 m/s * 0.1 s * k.
        let mut tr = Tracker::new(TrackerConfig::default()).unwrap();
        for k in 0..10u64 {
            tr.update(k * 100_000, &[det_at(0.5 * k as f64, 0.0)]).unwrap();
        }
        let p = tr.tracks()[0].predict(0.1).unwrap();
        assert!((p.position.x - 5.0).abs() < 0.2, "predicted {}", p.position.x);
    }

    #[test]
    fn recursive_form_converges() {
        let cfg = TrackerConfig { smoothing_form: SmoothingForm::Recursive, ..TrackerConfig::default() };
        let mut tr = Tracker::new(cfg).unwrap();
        for k in 0..20u64 {
            tr.update(k * 100_000, &[det_at(0.5 * k as f64, 0.0)]).unwrap();
        }
        assert!((tr.tracks()[0].smoothed_velocity.x - 5.0).abs() < 0.25);
    }

    #[test]
    fn config_validation() {
        assert!(TrackerConfig { smoothing: 1.5, ..TrackerConfig::default() }.validate().is_err());
        assert!(TrackerConfig { gate_distance: 0.0, ..TrackerConfig::default() }.validate().is_err());
    }
}
