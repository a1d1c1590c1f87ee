//! Python bindings: scenario runs, box geometry, frame transforms and the
//! wire codec.
//!
//! Boxes cross the boundary as `(cx, cy, cz, hx, hy, hz, yaw)` tuples with
//! half-extents; poses as `(x, y, z, yaw)`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use coopsense::fusion::FusionMode;
use coopsense::geometry::{self, ClassLabel, OrientedBox, Pose, Vec3};
use coopsense::net::{BoxRecord, Payload, PerceptionMessage};
use coopsense::scenario::{self, builtin_names, check_report, Mode, RunOptions, ScenarioSpec};

pub type BoxTuple = (f64, f64, f64, f64, f64, f64, f64);
pub type PoseTuple = (f64, f64, f64, f64);
/// `(name, passed, detail)` for each scenario check.
pub type CheckRow = (String, bool, String);

pub fn to_box(t: BoxTuple, class: ClassLabel) -> Result<OrientedBox, String> {
    OrientedBox::new(Vec3::new(t.0, t.1, t.2), Vec3::new(t.3, t.4, t.5), t.6, class).map_err(|e| e.to_string())
}

pub fn from_box(b: &OrientedBox) -> BoxTuple {
    (b.center.x, b.center.y, b.center.z, b.extent.x, b.extent.y, b.extent.z, b.yaw)
}

fn triple(v: Vec3) -> (f64, f64, f64) {
    (v.x, v.y, v.z)
}

fn class_from_name(name: &str) -> Result<ClassLabel, String> {
    [ClassLabel::Vehicle, ClassLabel::Pedestrian, ClassLabel::Bicycle, ClassLabel::Unknown]
        .into_iter()
        .find(|c| c.as_str() == name)
        .ok_or_else(|| format!("unknown class '{name}'"))
}

/// Runs a scenario and returns its JSON report and check lines.
pub fn run_to_json(scenario: &str, mode: &str, fusion: &str, seed: Option<u64>) -> Result<(String, Vec<CheckRow>), String> {
    let spec = ScenarioSpec::load(scenario).map_err(|e| e.to_string())?;
    let mode: Mode = mode.parse()?;
    let fusion: FusionMode = fusion.parse()?;
    let options = RunOptions::new(mode, fusion, seed.unwrap_or(spec.seed));
    let report = scenario::run_scenario(&spec, &options).map_err(|e| e.to_string())?;
    let checks = check_report(&report).into_iter().map(|c| (c.name, c.passed, c.detail)).collect();
    Ok((report.to_json().map_err(|e| e.to_string())?, checks))
}

pub fn encode_box_message(sender: u32, timestamp: u64, boxes: &[(BoxTuple, String, u32)]) -> Result<Vec<u8>, String> {
    let records = boxes
        .iter()
        .map(|(t, class, n)| Ok(BoxRecord { bbox: to_box(*t, class_from_name(class)?)?, point_count: *n }))
        .collect::<Result<Vec<_>, String>>()?;
    PerceptionMessage::boxes(sender, timestamp, records).encode_datagram().map_err(|e| e.to_string())
}

fn err(e: String) -> PyErr {
    PyValueError::new_err(e)
}

/// Names of the built-in scenarios.
#[pyfunction]
fn list_scenarios() -> Vec<&'static str> {
    builtin_names()
}

/// Runs a built-in scenario (or a scenario file) and returns
/// `(report_json, [(check, passed, detail), ...])`.
#[pyfunction]
#[pyo3(signature = (scenario, mode = "coop", fusion = "feature", seed = None))]
fn run_scenario(
    py: Python<'_>,
    scenario: &str,
    mode: &str,
    fusion: &str,
    seed: Option<u64>,
) -> PyResult<(String, Vec<CheckRow>)> {
    let (scenario, mode, fusion) = (scenario.to_owned(), mode.to_owned(), fusion.to_owned());
    py.detach(move || run_to_json(&scenario, &mode, &fusion, seed)).map_err(err)
}

/// Intersection footprint area over the truth footprint area.
#[pyfunction]
fn box_overlap_ratio(detected: BoxTuple, truth: BoxTuple) -> PyResult<f64> {
    let d = to_box(detected, ClassLabel::Unknown).map_err(err)?;
    let t = to_box(truth, ClassLabel::Unknown).map_err(err)?;
    geometry::box_overlap_ratio(&d, &t).map_err(|e| err(e.to_string()))
}

#[pyfunction]
fn box_iou(a: BoxTuple, b: BoxTuple) -> PyResult<f64> {
    let a = to_box(a, ClassLabel::Unknown).map_err(err)?;
    let b = to_box(b, ClassLabel::Unknown).map_err(err)?;
    Ok(geometry::box_iou(&a, &b))
}

/// World coordinates of a point given in the vehicle lidar frame.
#[pyfunction]
fn vehicle_to_world(point: (f64, f64, f64), mount: (f64, f64, f64), pose: PoseTuple) -> (f64, f64, f64) {
    let pose = Pose::new(Vec3::new(pose.0, pose.1, pose.2), pose.3);
    triple(geometry::vehicle_to_world(Vec3::new(point.0, point.1, point.2), Vec3::new(mount.0, mount.1, mount.2), &pose))
}

/// World coordinates of a point given in a roadside lidar frame.
#[pyfunction]
fn road_to_world(point: (f64, f64, f64), placement: PoseTuple) -> (f64, f64, f64) {
    let pose = Pose::new(Vec3::new(placement.0, placement.1, placement.2), placement.3);
    triple(geometry::road_to_world_posed(Vec3::new(point.0, point.1, point.2), &pose))
}

#[pyfunction]
fn required_braking_distance(speed: f64) -> f64 {
    scenario::required_braking_distance(speed)
}

/// Encodes a box message; `boxes` holds `(box, class_name, point_count)`.
#[pyfunction]
fn encode_boxes<'py>(
    py: Python<'py>,
    sender: u32,
    timestamp: u64,
    boxes: Vec<(BoxTuple, String, u32)>,
) -> PyResult<Bound<'py, PyBytes>> {
    let bytes = encode_box_message(sender, timestamp, &boxes).map_err(err)?;
    Ok(PyBytes::new(py, &bytes))
}

/// Decodes a datagram into a dict with `sender`, `timestamp` and either
/// `boxes` or `points`.
#[pyfunction]
fn decode_message<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Bound<'py, PyDict>> {
    let msg = PerceptionMessage::decode(data).map_err(|e| err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("version", msg.version)?;
    out.set_item("sender", msg.sender_id)?;
    out.set_item("timestamp", msg.timestamp)?;
    match msg.payload {
        Payload::Boxes(boxes) => {
            let rows: Vec<(BoxTuple, &str, u32)> =
                boxes.iter().map(|r| (from_box(&r.bbox), r.bbox.class_label.as_str(), r.point_count)).collect();
            out.set_item("boxes", rows)?;
        }
        Payload::Cloud(points) => {
            let rows: Vec<(f64, f64, f64)> = points.into_iter().map(triple).collect();
            out.set_item("points", rows)?;
        }
    }
    Ok(out)
}

#[pymodule]
fn coopsense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(box_overlap_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(box_iou, m)?)?;
    m.add_function(wrap_pyfunction!(vehicle_to_world, m)?)?;
    m.add_function(wrap_pyfunction!(road_to_world, m)?)?;
    m.add_function(wrap_pyfunction!(required_braking_distance, m)?)?;
    m.add_function(wrap_pyfunction!(encode_boxes, m)?)?;
    m.add_function(wrap_pyfunction!(decode_message, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_tuples_round_trip() {
        let t = (1.0, 2.0, 0.75, 2.25, 0.9, 0.75, 0.5);
        assert_eq!(from_box(&to_box(t, ClassLabel::Vehicle).unwrap()), t);
        assert!(to_box((0.0, 0.0, 0.0, -1.0, 1.0, 1.0, 0.0), ClassLabel::Vehicle).is_err());
    }

    #[test]
    fn encoded_boxes_decode() {
        let bytes = encode_box_message(9, 100, &[((1.0, 2.0, 0.75, 2.25, 0.9, 0.75, 0.5), "vehicle".into(), 40)]).unwrap();
        let msg = PerceptionMessage::decode(&bytes).unwrap();
        assert_eq!(msg.sender_id, 9);
        assert!(encode_box_message(9, 100, &[((1.0, 2.0, 0.75, 2.25, 0.9, 0.75, 0.5), "lorry".into(), 40)]).is_err());
    }

    #[test]
    fn bad_mode_is_reported() {
        assert!(run_to_json("accuracy", "convoy", "feature", None).is_err());
        assert!(run_to_json("nowhere", "coop", "feature", None).is_err());
    }
}
