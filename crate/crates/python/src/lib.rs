//! Python bindings: `import c2f_grasp`.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use c2f_grasp::codec::{self, C2FCell, CellIndex, GridShape, CHANNELS};
use c2f_grasp::geometry::{self, EulerAngles, Rotation, Vec3};
use c2f_grasp::sampler::{GraspLabelSet, GraspQuality, PointCloud, SamplerConfig};
use c2f_grasp::{io, losses, metrics, sampler, Error};

type Matrix = [[f64; 3]; 3];
type Point = (f64, f64, f64);
type Cell = (usize, usize, usize);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vec3(p: Point) -> Vec3 {
    Vec3::new(p.0, p.1, p.2)
}

fn point(v: &Vec3) -> Point {
    (v.x, v.y, v.z)
}

fn rotation(m: Matrix) -> PyResult<Rotation> {
    Rotation::from_rows(m).map_err(to_py)
}

fn check_confidence(c: f64) -> PyResult<f64> {
    if (0.0..=1.0).contains(&c) {
        Ok(c)
    } else {
        Err(PyValueError::new_err(format!("confidence {c} outside [0, 1]")))
    }
}

fn quality(s: &str) -> PyResult<GraspQuality> {
    s.parse().map_err(to_py)
}

/// A 6-DoF grasp: extrinsic x-y-z Euler angles (roll, pitch, yaw) in
/// radians, a translation in meters and a confidence.
#[pyclass(name = "GraspPose", module = "c2f_grasp", from_py_object)]
#[derive(Clone)]
struct PyGraspPose(geometry::GraspPose);

#[pymethods]
impl PyGraspPose {
    #[new]
    #[pyo3(signature = (roll, pitch, yaw, x, y, z, confidence = 1.0))]
    fn new(roll: f64, pitch: f64, yaw: f64, x: f64, y: f64, z: f64, confidence: f64) -> PyResult<Self> {
        let pose = geometry::GraspPose::from_euler(EulerAngles::new(roll, pitch, yaw), Vec3::new(x, y, z))
            .map_err(to_py)?;
        Ok(Self(pose.with_confidence(check_confidence(confidence)?)))
    }

    /// Builds a pose from a row-major rotation matrix.
    #[staticmethod]
    #[pyo3(signature = (rotation, translation, confidence = 1.0))]
    fn from_matrix(rotation: Matrix, translation: Point, confidence: f64) -> PyResult<Self> {
        let r = self::rotation(rotation)?;
        let pose = geometry::GraspPose::from_rotation(r, vec3(translation)).map_err(to_py)?;
        Ok(Self(pose.with_confidence(check_confidence(confidence)?)))
    }

    #[getter]
    fn euler(&self) -> (f64, f64, f64) {
        let e = self.0.euler();
        (e.roll, e.pitch, e.yaw)
    }

    #[getter]
    fn translation(&self) -> Point {
        point(&self.0.translation)
    }

    #[getter]
    fn rotation(&self) -> Matrix {
        self.0.rotation().to_rows()
    }

    #[getter]
    fn confidence(&self) -> f64 {
        self.0.confidence
    }

    /// Same grasp with roll in [-pi/2, pi/2) and yaw in [-pi, pi).
    fn canonicalized(&self) -> Self {
        Self(self.0.canonicalized())
    }

    fn __repr__(&self) -> String {
        let (r, p, y) = self.euler();
        let t = self.0.translation;
        format!(
            "GraspPose(roll={r}, pitch={p}, yaw={y}, x={}, y={}, z={}, confidence={})",
            t.x, t.y, t.z, self.0.confidence
        )
    }
}

fn poses(list: &[PyGraspPose]) -> Vec<geometry::GraspPose> {
    list.iter().map(|p| p.0).collect()
}

fn wrap_poses(list: impl IntoIterator<Item = geometry::GraspPose>) -> Vec<PyGraspPose> {
    list.into_iter().map(PyGraspPose).collect()
}

/// Parallel-jaw gripper dimensions in meters.
#[pyclass(name = "GripperGeometry", module = "c2f_grasp", from_py_object)]
#[derive(Clone)]
struct PyGripper(geometry::GripperGeometry);

#[pymethods]
impl PyGripper {
    #[new]
    #[pyo3(signature = (max_width = 0.0986, finger_depth = 0.06, finger_height = 0.02, finger_thickness = 0.01))]
    fn new(max_width: f64, finger_depth: f64, finger_height: f64, finger_thickness: f64) -> PyResult<Self> {
        let g = geometry::GripperGeometry {
            max_width,
            finger_depth,
            finger_height,
            finger_thickness,
            ..Default::default()
        };
        g.validate().map_err(to_py)?;
        Ok(Self(g))
    }

    #[getter]
    fn max_width(&self) -> f64 {
        self.0.max_width
    }

    #[getter]
    fn finger_depth(&self) -> f64 {
        self.0.finger_depth
    }

    #[getter]
    fn finger_height(&self) -> f64 {
        self.0.finger_height
    }

    #[getter]
    fn finger_thickness(&self) -> f64 {
        self.0.finger_thickness
    }
}

fn gripper(g: Option<PyGripper>) -> geometry::GripperGeometry {
    g.map_or_else(Default::default, |g| g.0)
}

/// One grasp point's `n_y x n_z x 8` grid. Cell channels are
/// `(confidence, dx, dy, dz, d_pitch, d_yaw, cos 2roll, sin 2roll)`.
#[pyclass(name = "Volume", module = "c2f_grasp", from_py_object)]
#[derive(Clone)]
struct PyVolume(codec::C2FVolume);

#[pymethods]
impl PyVolume {
    /// An all-negative volume.
    #[new]
    #[pyo3(signature = (grasp_point, n_y = 24, n_z = 25))]
    fn new(grasp_point: Point, n_y: usize, n_z: usize) -> PyResult<Self> {
        let shape = GridShape::new(n_y, n_z).map_err(to_py)?;
        Ok(Self(codec::C2FVolume::empty(vec3(grasp_point), shape)))
    }

    /// Builds a volume from `n_y * n_z * 8` values in row-major order.
    #[staticmethod]
    fn from_flat(grasp_point: Point, n_y: usize, n_z: usize, values: Vec<f64>) -> PyResult<Self> {
        let shape = GridShape::new(n_y, n_z).map_err(to_py)?;
        Ok(Self(codec::C2FVolume::from_flat(vec3(grasp_point), shape, &values).map_err(to_py)?))
    }

    #[getter]
    fn grasp_point(&self) -> Point {
        point(&self.0.grasp_point)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let s = self.0.shape();
        (s.n_y, s.n_z, CHANNELS)
    }

    fn flatten(&self) -> Vec<f64> {
        self.0.flatten()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<[f64; CHANNELS]> {
        self.0.shape().check(i, j).map_err(to_py)?;
        Ok(self.0.cell(i, j).to_array())
    }

    fn set(&mut self, i: usize, j: usize, values: [f64; CHANNELS]) -> PyResult<()> {
        self.0.shape().check(i, j).map_err(to_py)?;
        *self.0.cell_mut(i, j) = C2FCell::from_array(values);
        Ok(())
    }
}

fn volumes(list: &[PyVolume]) -> Vec<codec::C2FVolume> {
    list.iter().map(|v| v.0.clone()).collect()
}

/// Encoded targets: volumes, the positive cells `(point, i, j)` and the
/// ground-truth index assigned to each positive cell.
#[pyclass(name = "TargetSet", module = "c2f_grasp", from_py_object)]
#[derive(Clone)]
struct PyTargetSet(codec::TargetSet);

#[pymethods]
impl PyTargetSet {
    /// Rebuilds targets from volumes; cells with confidence >= 0.5 are positive.
    #[staticmethod]
    fn from_volumes(volumes: Vec<PyVolume>) -> Self {
        Self(codec::TargetSet::from_volumes(self::volumes(&volumes)))
    }

    #[getter]
    fn volumes(&self) -> Vec<PyVolume> {
        self.0.volumes.iter().cloned().map(PyVolume).collect()
    }

    #[getter]
    fn positives(&self) -> Vec<Cell> {
        self.0.positives.iter().map(|c| (c.point, c.i, c.j)).collect()
    }

    #[getter]
    fn assignments(&self) -> Vec<(Cell, usize)> {
        self.0.assignments.iter().map(|(c, g)| ((c.point, c.i, c.j), *g)).collect()
    }
}

/// Focal, rotation and translation loss weights.
#[pyclass(name = "LossConfig", module = "c2f_grasp", from_py_object, get_all, set_all)]
#[derive(Clone)]
struct PyLossConfig {
    alpha: f64,
    gamma: f64,
    lambda_x: f64,
    lambda_y: f64,
    lambda_z: f64,
    lambda_cls: f64,
    lambda_rot: f64,
}

#[pymethods]
impl PyLossConfig {
    #[new]
    #[pyo3(signature = (alpha = 0.25, gamma = 2.0, lambda_x = 1.0, lambda_y = 1.0, lambda_z = 1.0, lambda_cls = 1.0, lambda_rot = 1.0))]
    fn new(alpha: f64, gamma: f64, lambda_x: f64, lambda_y: f64, lambda_z: f64, lambda_cls: f64, lambda_rot: f64) -> PyResult<Self> {
        let cfg = Self { alpha, gamma, lambda_x, lambda_y, lambda_z, lambda_cls, lambda_rot };
        cfg.inner().validate().map_err(to_py)?;
        Ok(cfg)
    }
}

impl PyLossConfig {
    fn inner(&self) -> losses::LossConfig {
        losses::LossConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            lambda_x: self.lambda_x,
            lambda_y: self.lambda_y,
            lambda_z: self.lambda_z,
            lambda_cls: self.lambda_cls,
            lambda_rot: self.lambda_rot,
        }
    }
}

fn loss_config(c: Option<PyLossConfig>) -> losses::LossConfig {
    c.map_or_else(Default::default, |c| c.inner())
}

#[pyfunction]
fn euler_to_rotmat(roll: f64, pitch: f64, yaw: f64) -> PyResult<Matrix> {
    Ok(geometry::euler_to_rotmat(EulerAngles::new(roll, pitch, yaw)).map_err(to_py)?.to_rows())
}

/// Returns `(roll, pitch, yaw, gimbal_locked)`.
#[pyfunction]
fn rotmat_to_euler(rotation: Matrix) -> PyResult<(f64, f64, f64, bool)> {
    let d = geometry::rotmat_to_euler(&self::rotation(rotation)?);
    Ok((d.angles.roll, d.angles.pitch, d.angles.yaw, d.gimbal_locked))
}

/// `arcsin(|I - A B^T|_F / (2 sqrt 2))`, half the relative turn angle.
#[pyfunction]
fn rotation_distance(a: Matrix, b: Matrix) -> PyResult<f64> {
    Ok(geometry::rotation_distance(&rotation(a)?, &rotation(b)?))
}

/// [`rotation_distance`] minimized over the gripper's half-turn symmetry.
#[pyfunction]
fn symmetric_rotation_distance(a: Matrix, b: Matrix) -> PyResult<f64> {
    Ok(geometry::symmetric_rotation_distance(&rotation(a)?, &rotation(b)?))
}

fn label_set(grasps: &[PyGraspPose], labels: &[String], source: &str) -> PyResult<GraspLabelSet> {
    let labels = labels.iter().map(|s| quality(s)).collect::<PyResult<Vec<_>>>()?;
    GraspLabelSet::new(poses(grasps), labels, source).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (grasp_points, grasps, labels, gripper = None, n_y = 24, n_z = 25))]
fn encode_labels(
    grasp_points: Vec<Point>,
    grasps: Vec<PyGraspPose>,
    labels: Vec<String>,
    gripper: Option<PyGripper>,
    n_y: usize,
    n_z: usize,
) -> PyResult<PyTargetSet> {
    let set = label_set(&grasps, &labels, "")?;
    let points: Vec<Vec3> = grasp_points.into_iter().map(vec3).collect();
    let shape = GridShape::new(n_y, n_z).map_err(to_py)?;
    let targets = codec::encode_labels(&points, &set, &self::gripper(gripper), shape).map_err(to_py)?;
    Ok(PyTargetSet(targets))
}

/// Decoded grasps, highest confidence first, each with its `(point, i, j)` cell.
#[pyfunction]
#[pyo3(signature = (volumes, conf_threshold = 0.5, gripper = None))]
fn decode_volume(
    volumes: Vec<PyVolume>,
    conf_threshold: f64,
    gripper: Option<PyGripper>,
) -> PyResult<Vec<(PyGraspPose, Cell)>> {
    let out = codec::decode_volume(&self::volumes(&volumes), &self::gripper(gripper), conf_threshold)
        .map_err(to_py)?;
    Ok(out
        .grasps
        .into_iter()
        .map(|g| (PyGraspPose(g.pose), (g.cell.point, g.cell.i, g.cell.j)))
        .collect())
}

/// Loss values and the per-cell gradient grid (volume, cell, channel).
#[pyfunction]
#[pyo3(signature = (pred, targets, config = None))]
fn total_loss<'py>(
    py: Python<'py>,
    pred: Vec<PyVolume>,
    targets: PyTargetSet,
    config: Option<PyLossConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = losses::total_loss(&volumes(&pred), &targets.0, &loss_config(config)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("cls", r.cls)?;
    d.set_item("rot", r.rot)?;
    d.set_item("trans", r.trans)?;
    d.set_item("total", r.total)?;
    d.set_item("gradients", r.gradients)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (pred, positives, config = None))]
fn focal_loss(pred: Vec<PyVolume>, positives: Vec<Cell>, config: Option<PyLossConfig>) -> PyResult<f64> {
    let s: BTreeSet<CellIndex> = positives.into_iter().map(|(p, i, j)| CellIndex::new(p, i, j)).collect();
    Ok(losses::focal_loss(&volumes(&pred), &s, &loss_config(config)).map_err(to_py)?.value)
}

/// Maximum relative error between analytic and central-difference gradients.
#[pyfunction]
#[pyo3(signature = (pred, targets, step = 1e-6, seed = 0, config = None))]
fn gradcheck(pred: Vec<PyVolume>, targets: PyTargetSet, step: f64, seed: u64, config: Option<PyLossConfig>) -> PyResult<f64> {
    let r = losses::gradcheck(&volumes(&pred), &targets.0, &loss_config(config), step, seed).map_err(to_py)?;
    Ok(r.max_rel_error)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, trans_tol = 0.02, rot_tol = 5f64.to_radians()))]
fn pose_match(pred: PyGraspPose, gt: PyGraspPose, trans_tol: f64, rot_tol: f64) -> PyResult<bool> {
    let th = metrics::MatchThresholds::new(trans_tol, rot_tol).map_err(to_py)?;
    Ok(metrics::pose_match(&pred.0, &gt.0, &th))
}

#[pyfunction]
#[pyo3(signature = (poses, trans_tol = 0.02, rot_tol = 5f64.to_radians()))]
fn nms(poses: Vec<PyGraspPose>, trans_tol: f64, rot_tol: f64) -> Vec<PyGraspPose> {
    wrap_poses(metrics::nms(&self::poses(&poses), trans_tol, rot_tol))
}

/// AP of the top-10 predictions after NMS, at 5 (hard) and 10 (easy) degrees.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, preds: Vec<PyGraspPose>, gts: Vec<PyGraspPose>) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::evaluate(&poses(&preds), &poses(&gts)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("ap_hard", r.ap_hard)?;
    d.set_item("ap_easy", r.ap_easy)?;
    d.set_item("hard_matches", r.hard.matches)?;
    d.set_item("easy_matches", r.easy.matches)?;
    d.set_item("hard_precision", r.hard.precision_at_rank)?;
    d.set_item("easy_precision", r.easy.precision_at_rank)?;
    d.set_item("evaluated", wrap_poses(r.evaluated))?;
    Ok(d)
}

#[pyfunction]
fn perturb_gt(grasps: Vec<PyGraspPose>, labels: Vec<String>, sigma_t: f64, sigma_r: f64, seed: u64) -> PyResult<Vec<PyGraspPose>> {
    let set = label_set(&grasps, &labels, "")?;
    Ok(wrap_poses(metrics::perturb_gt(&set, sigma_t, sigma_r, seed).map_err(to_py)?))
}

/// Samples and labels grasps on a cloud; returns `(grasps, labels)`.
#[pyfunction]
#[pyo3(signature = (
    points, seed = 0, gripper = None, neighbors_k = 30, num_seed_points = 500, roll_steps = 8,
    depth_steps = 5, friction_mu = 0.3, min_contact_points = 5, contact_tolerance = 0.002,
    max_surface_variation = 0.005, viewpoint = None
))]
#[allow(clippy::too_many_arguments)]
fn generate_dataset(
    points: Vec<Point>,
    seed: u64,
    gripper: Option<PyGripper>,
    neighbors_k: usize,
    num_seed_points: usize,
    roll_steps: usize,
    depth_steps: usize,
    friction_mu: f64,
    min_contact_points: usize,
    contact_tolerance: f64,
    max_surface_variation: f64,
    viewpoint: Option<Point>,
) -> PyResult<(Vec<PyGraspPose>, Vec<String>)> {
    let cloud = PointCloud::new(points.into_iter().map(vec3).collect()).map_err(to_py)?;
    let cfg = SamplerConfig {
        neighbors_k,
        num_seed_points,
        roll_steps,
        depth_steps,
        friction_mu,
        min_contact_points,
        contact_tolerance,
        max_surface_variation,
        viewpoint: viewpoint.map(vec3),
        rng_seed: seed,
    };
    let set = sampler::generate_dataset(&cloud, &self::gripper(gripper), &cfg).map_err(to_py)?;
    Ok((wrap_poses(set.grasps), set.labels.iter().map(|l| l.to_string()).collect()))
}

/// Returns `(points, normals or None)`.
#[pyfunction]
fn read_ply(path: &str) -> PyResult<(Vec<Point>, Option<Vec<Point>>)> {
    let cloud = io::read_ply(path).map_err(to_py)?;
    let normals = cloud.normals.as_ref().map(|ns| ns.iter().map(point).collect());
    Ok((cloud.points.iter().map(point).collect(), normals))
}

#[pyfunction]
#[pyo3(signature = (path, points, normals = None))]
fn write_ply(path: &str, points: Vec<Point>, normals: Option<Vec<Point>>) -> PyResult<()> {
    let pts = points.into_iter().map(vec3).collect();
    let cloud = match normals {
        Some(ns) => PointCloud::with_normals(pts, ns.into_iter().map(vec3).collect()),
        None => PointCloud::new(pts),
    }
    .map_err(to_py)?;
    io::write_ply(&cloud, path).map_err(to_py)
}

/// Returns `(grasps, labels, source)`.
#[pyfunction]
fn read_grasps(path: &str) -> PyResult<(Vec<PyGraspPose>, Vec<String>, String)> {
    let set = io::read_grasps(path).map_err(to_py)?;
    let labels = set.labels.iter().map(|l| l.to_string()).collect();
    Ok((wrap_poses(set.grasps), labels, set.source))
}

#[pyfunction]
#[pyo3(signature = (path, grasps, labels, source = String::new()))]
fn write_grasps(path: &str, grasps: Vec<PyGraspPose>, labels: Vec<String>, source: String) -> PyResult<()> {
    io::write_grasps(&label_set(&grasps, &labels, &source)?, path).map_err(to_py)
}

#[pyfunction]
fn read_volume(path: &str) -> PyResult<Vec<PyVolume>> {
    Ok(io::read_volume(path).map_err(to_py)?.into_iter().map(PyVolume).collect())
}

#[pyfunction]
fn write_volume(path: &str, volumes: Vec<PyVolume>) -> PyResult<()> {
    io::write_volume(&self::volumes(&volumes), path).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "c2f_grasp")]
fn c2f_grasp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraspPose>()?;
    m.add_class::<PyGripper>()?;
    m.add_class::<PyVolume>()?;
    m.add_class::<PyTargetSet>()?;
    m.add_class::<PyLossConfig>()?;
    m.add_function(wrap_pyfunction!(euler_to_rotmat, m)?)?;
    m.add_function(wrap_pyfunction!(rotmat_to_euler, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_distance, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_rotation_distance, m)?)?;
    m.add_function(wrap_pyfunction!(encode_labels, m)?)?;
    m.add_function(wrap_pyfunction!(decode_volume, m)?)?;
    m.add_function(wrap_pyfunction!(focal_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(pose_match, m)?)?;
    m.add_function(wrap_pyfunction!(nms, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_gt, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(read_ply, m)?)?;
    m.add_function(wrap_pyfunction!(write_ply, m)?)?;
    m.add_function(wrap_pyfunction!(read_grasps, m)?)?;
    m.add_function(wrap_pyfunction!(write_grasps, m)?)?;
    m.add_function(wrap_pyfunction!(read_volume, m)?)?;
    m.add_function(wrap_pyfunction!(write_volume, m)?)?;
    Ok(())
}
