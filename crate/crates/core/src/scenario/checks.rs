//! Pass/fail expectations for the shipped scenarios.

use super::report::{MetricsReport, Mode};

/// Extended range: solo limit and cooperative target distance.
pub const SOLO_RANGE_LIMIT: f64 = 20.0;
pub const COOP_RANGE_TARGET: f64 = 30.0;
pub const COOP_RANGE_TOLERANCE: f64 = 1.0;
/// Blind area: late solo detection.
pub const BLIND_DISTANCE: f64 = 8.0;
pub const BLIND_DISTANCE_TOLERANCE: f64 = 1.0;
pub const BLIND_TTC: f64 = 1.0;
pub const BLIND_TTC_TOLERANCE: f64 = 0.2;
pub const BLIND_COOP_MIN_DISTANCE: f64 = 20.0;
/// Occlusion sector bounds, ego-right degrees.
pub const OCCLUSION_FROM: f64 = 10.0;
pub const OCCLUSION_TO: f64 = 160.0;
pub const OCCLUSION_TOLERANCE: f64 = 5.0;
pub const PEDESTRIAN_BEARING: f64 = 30.0;
/// Band every mean overlap must lie in.
pub const OVERLAP_BAND: (f64, f64) = (0.6, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), passed, detail }
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.3}"))
}

/// Expectations that apply to `report`'s scenario and mode. Unknown scenarios
/// have none.
pub fn check_report(report: &MetricsReport) -> Vec<Check> {
    let fdd = report.first_detection_distance;
    let mut out = Vec::new();
    match (report.scenario.as_str(), report.mode) {
        ("curve_range", Mode::Solo) => {
            out.push(check(
                "solo detection within vehicle range",
                fdd.is_some_and(|d| d <= SOLO_RANGE_LIMIT),
                format!("first_detection_distance {} m <= {SOLO_RANGE_LIMIT}", show(fdd)),
            ));
        }
        ("curve_range", Mode::Coop) => {
            out.push(check(
                "coop detection at extended range",
                fdd.is_some_and(|d| (d - COOP_RANGE_TARGET).abs() <= COOP_RANGE_TOLERANCE),
                format!("first_detection_distance {} m, want {COOP_RANGE_TARGET} +- {COOP_RANGE_TOLERANCE}", show(fdd)),
            ));
        }
        ("blind_area", mode) => {
            if let Some(o) = &report.occlusion {
                let covers = o.blocked.iter().any(|i| {
                    (i.from_deg - OCCLUSION_FROM).abs() <= OCCLUSION_TOLERANCE
                        && (i.to_deg - OCCLUSION_TO).abs() <= OCCLUSION_TOLERANCE
                });
                let sectors: Vec<String> = o.blocked.iter().map(|i| format!("{:.1}..{:.1}", i.from_deg, i.to_deg)).collect();
                out.push(check(
                    "blocked sector",
                    covers,
                    format!("blocked [{}], want {OCCLUSION_FROM}..{OCCLUSION_TO} +- {OCCLUSION_TOLERANCE}", sectors.join(", ")),
                ));
                out.push(check(
                    "pedestrian hidden at spawn",
                    o.target_hidden && (o.target_bearing_deg - PEDESTRIAN_BEARING).abs() <= 1.0,
                    format!("bearing {:.2} deg right, hidden {}", o.target_bearing_deg, o.target_hidden),
                ));
            }
            let ttc = report.time_to_collision_at_first_detection;
            if mode == Mode::Solo {
                out.push(check(
                    "late solo detection",
                    fdd.is_some_and(|d| (d - BLIND_DISTANCE).abs() <= BLIND_DISTANCE_TOLERANCE)
                        && ttc.is_some_and(|t| (t - BLIND_TTC).abs() <= BLIND_TTC_TOLERANCE),
                    format!("first_detection_distance {} m, time to collision {} s", show(fdd), show(ttc)),
                ));
                out.push(check(
                    "solo cannot brake in time",
                    !report.braking_feasible,
                    format!("needs {:.2} m at {:.2} m/s", report.required_braking_distance, report.ego_speed),
                ));
            } else {
                out.push(check(
                    "coop detects early and can brake",
                    fdd.is_some_and(|d| d >= BLIND_COOP_MIN_DISTANCE) && report.braking_feasible,
                    format!("first_detection_distance {} m, needs {:.2} m", show(fdd), report.required_braking_distance),
                ));
            }
        }
        ("accuracy", Mode::Coop) => {
            let m = report.mean_overlap;
            let in_band = |v: Option<f64>| v.is_some_and(|x| x >= OVERLAP_BAND.0 && x <= OVERLAP_BAND.1);
            let better = match (m.vehicle, m.road, m.fused) {
                (Some(v), Some(r), Some(f)) => f > v && f > r,
                _ => false,
            };
            out.push(check(
                "fusion improves overlap",
                better && in_band(m.vehicle) && in_band(m.road) && in_band(m.fused),
                format!(
                    "vehicle {} road {} fused {} over {} ticks",
                    show(m.vehicle),
                    show(m.road),
                    show(m.fused),
                    report.evaluated_ticks
                ),
            ));
        }
        _ => {}
    }
    out
}
