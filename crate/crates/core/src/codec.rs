//! Coarse-to-fine grasp volumes: label assignment (encoding) and decoding.
//!
//! Each grasp point owns an `n_y x n_z` grid of coarse orientations. Cell
//! `(i, j)` anchors pitch `pi/n_y * i - pi/2` and yaw `2pi/n_z * j - pi`; the
//! eight channels of the cell refine that anchor into a full grasp.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{
    canonicalize_roll, enclosed, euler_to_rotmat, rotation_distance, EulerAngles, GraspPose,
    GripperGeometry, Vec3,
};
use crate::sampler::{GraspLabelSet, GraspQuality};

pub const DEFAULT_N_Y: usize = 24;
pub const DEFAULT_N_Z: usize = 25;
pub const CHANNELS: usize = 8;

/// Channel order inside a cell.
pub mod channel {
    pub const CONFIDENCE: usize = 0;
    pub const DX: usize = 1;
    pub const DY: usize = 2;
    pub const DZ: usize = 3;
    pub const D_PITCH: usize = 4;
    pub const D_YAW: usize = 5;
    pub const ROLL_COS: usize = 6;
    pub const ROLL_SIN: usize = 7;
}

/// One grid entry. Translations are normalized closing-region coordinates,
/// the residuals are fractions of a coarse bin, and the roll is encoded as
/// `(cos 2 roll, sin 2 roll)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2FCell {
    pub confidence: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub d_pitch: f64,
    pub d_yaw: f64,
    pub roll_cos: f64,
    pub roll_sin: f64,
}

impl Default for C2FCell {
    /// An empty (negative) target cell.
    fn default() -> Self {
        Self {
            confidence: 0.0,
            dx: 0.0,
            dy: 0.0,
            dz: 0.0,
            d_pitch: 0.0,
            d_yaw: 0.0,
            roll_cos: 1.0,
            roll_sin: 0.0,
        }
    }
}

impl C2FCell {
    pub fn to_array(&self) -> [f64; CHANNELS] {
        [
            self.confidence,
            self.dx,
            self.dy,
            self.dz,
            self.d_pitch,
            self.d_yaw,
            self.roll_cos,
            self.roll_sin,
        ]
    }

    pub fn from_array(a: [f64; CHANNELS]) -> Self {
        Self {
            confidence: a[0],
            dx: a[1],
            dy: a[2],
            dz: a[3],
            d_pitch: a[4],
            d_yaw: a[5],
            roll_cos: a[6],
            roll_sin: a[7],
        }
    }

    pub fn get(&self, ch: usize) -> f64 {
        self.to_array()[ch]
    }

    pub fn set(&mut self, ch: usize, v: f64) {
        let mut a = self.to_array();
        a[ch] = v;
        *self = Self::from_array(a);
    }
}

/// Grid dimensions of a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridShape {
    pub n_y: usize,
    pub n_z: usize,
}

impl Default for GridShape {
    fn default() -> Self {
        Self {
            n_y: DEFAULT_N_Y,
            n_z: DEFAULT_N_Z,
        }
    }
}

impl GridShape {
    pub fn new(n_y: usize, n_z: usize) -> Result<Self> {
        if n_y == 0 || n_z == 0 {
            return Err(Error::invalid(format!("grid shape must be positive, got {n_y}x{n_z}")));
        }
        Ok(Self { n_y, n_z })
    }

    pub fn cells(&self) -> usize {
        self.n_y * self.n_z
    }

    pub fn check(&self, i: usize, j: usize) -> Result<()> {
        if i < self.n_y && j < self.n_z {
            Ok(())
        } else {
            Err(Error::CellOutOfRange {
                i,
                j,
                n_y: self.n_y,
                n_z: self.n_z,
            })
        }
    }
}

/// Addresses one cell across a list of volumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellIndex {
    pub point: usize,
    pub i: usize,
    pub j: usize,
}

impl CellIndex {
    pub const fn new(point: usize, i: usize, j: usize) -> Self {
        Self { point, i, j }
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "point {} cell ({}, {})", self.point, self.i, self.j)
    }
}

/// The grid of cells attached to one grasp point.
#[derive(Debug, Clone, PartialEq)]
pub struct C2FVolume {
    pub grasp_point: Vec3,
    shape: GridShape,
    cells: Vec<C2FCell>,
}

impl C2FVolume {
    /// All-negative volume.
    pub fn empty(grasp_point: Vec3, shape: GridShape) -> Self {
        Self {
            grasp_point,
            shape,
            cells: vec![C2FCell::default(); shape.cells()],
        }
    }

    pub fn from_cells(grasp_point: Vec3, shape: GridShape, cells: Vec<C2FCell>) -> Result<Self> {
        if cells.len() != shape.cells() {
            return Err(Error::ShapeMismatch(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                shape.n_y,
                shape.n_z
            )));
        }
        Ok(Self {
            grasp_point,
            shape,
            cells,
        })
    }

    /// Inverse of [`C2FVolume::flatten`].
    pub fn from_flat(grasp_point: Vec3, shape: GridShape, values: &[f64]) -> Result<Self> {
        if values.len() != shape.cells() * CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{}x{CHANNELS} volume",
                values.len(),
                shape.n_y,
                shape.n_z
            )));
        }
        let cells = values
            .chunks_exact(CHANNELS)
            .map(|c| C2FCell::from_array(c.try_into().expect("chunk of CHANNELS")))
            .collect();
        Ok(Self {
            grasp_point,
            shape,
            cells,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn cell(&self, i: usize, j: usize) -> &C2FCell {
        &self.cells[i * self.shape.n_z + j]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut C2FCell {
        &mut self.cells[i * self.shape.n_z + j]
    }

    /// Cells in row-major `(i, j)` order.
    pub fn cells(&self) -> &[C2FCell] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [C2FCell] {
        &mut self.cells
    }

    /// Row-major `(i, j, channel)` values; `n_y * n_z * 8` of them.
    pub fn flatten(&self) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.to_array()).collect()
    }
}

/// Coarse bin and in-bin fraction for a pitch/yaw pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseBin {
    pub i: usize,
    pub j: usize,
    pub d_pitch: f64,
    pub d_yaw: f64,
}

fn split_bin(scaled: f64, n: usize) -> (usize, f64) {
    let idx = (scaled.floor().max(0.0) as usize).min(n - 1);
    (idx, scaled - idx as f64)
}

pub fn quantize_orientation(pitch: f64, yaw: f64, shape: GridShape) -> Result<CoarseBin> {
    if !(-FRAC_PI_2..=FRAC_PI_2).contains(&pitch) {
        return Err(Error::invalid(format!("pitch {pitch} outside [-pi/2, pi/2]")));
    }
    if !(-PI..PI).contains(&yaw) {
        return Err(Error::invalid(format!("yaw {yaw} outside [-pi, pi)")));
    }
    let (i, d_pitch) = split_bin((pitch + FRAC_PI_2) * shape.n_y as f64 / PI, shape.n_y);
    let (j, d_yaw) = split_bin((yaw + PI) * shape.n_z as f64 / (2.0 * PI), shape.n_z);
    Ok(CoarseBin { i, j, d_pitch, d_yaw })
}

/// Pitch and yaw of `(i + d_pitch, j + d_yaw)`.
pub fn bin_angles(i: usize, j: usize, d_pitch: f64, d_yaw: f64, shape: GridShape) -> (f64, f64) {
    let pitch = PI / shape.n_y as f64 * (i as f64 + d_pitch) - FRAC_PI_2;
    let yaw = 2.0 * PI / shape.n_z as f64 * (j as f64 + d_yaw) - PI;
    (pitch, yaw)
}

/// Roll in `[-pi/2, pi/2)` from an (unnormalized) `(cos 2r, sin 2r)` pair.
/// `None` for a zero or non-finite pair.
pub fn roll_from_pair(cos2: f64, sin2: f64) -> Option<f64> {
    let n = cos2.hypot(sin2);
    if !(n.is_finite() && n > 0.0) {
        return None;
    }
    let mut roll = 0.5 * (sin2 / n).atan2(cos2 / n);
    if roll >= FRAC_PI_2 {
        roll -= PI;
    }
    Some(roll)
}

/// Euler angles encoded by a cell at `(i, j)`.
pub fn cell_euler(cell: &C2FCell, i: usize, j: usize, shape: GridShape) -> Option<EulerAngles> {
    let roll = roll_from_pair(cell.roll_cos, cell.roll_sin)?;
    let (pitch, yaw) = bin_angles(i, j, cell.d_pitch, cell.d_yaw, shape);
    Some(EulerAngles::new(roll, pitch, yaw))
}

/// Closing-region coordinates of a normalized translation.
fn denormalize(cell: &C2FCell, gripper: &GripperGeometry) -> Vec3 {
    gripper.closing_region_origin
        + Vec3::new(
            cell.dx * gripper.finger_depth,
            (cell.dy - 0.5) * gripper.max_width,
            (cell.dz - 0.5) * gripper.finger_height,
        )
}

fn normalize(local: &Vec3, gripper: &GripperGeometry) -> Vec3 {
    let c = gripper.closing_coords(local);
    Vec3::new(
        c.x / gripper.finger_depth,
        c.y / gripper.max_width + 0.5,
        c.z / gripper.finger_height + 0.5,
    )
}

fn decode_at(
    volume: &C2FVolume,
    at: CellIndex,
    gripper: &GripperGeometry,
) -> Result<GraspPose> {
    volume.shape.check(at.i, at.j)?;
    let cell = volume.cell(at.i, at.j);
    let euler = cell_euler(cell, at.i, at.j, volume.shape).ok_or(Error::DegenerateRoll(at))?;
    let rotation = euler_to_rotmat(euler)?;
    let local = denormalize(cell, gripper);
    let translation = volume.grasp_point - rotation.apply(&local);
    Ok(GraspPose::from_euler(euler, translation)?.with_confidence(cell.confidence.clamp(0.0, 1.0)))
}

/// Grasp pose represented by cell `(i, j)` of `volume`.
pub fn decode_cell(
    volume: &C2FVolume,
    i: usize,
    j: usize,
    gripper: &GripperGeometry,
) -> Result<GraspPose> {
    decode_at(volume, CellIndex::new(0, i, j), gripper)
}

/// Encoded training targets for a set of grasp points.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub volumes: Vec<C2FVolume>,
    pub positives: BTreeSet<CellIndex>,
    /// Source ground-truth grasp of every positive cell.
    pub assignments: BTreeMap<CellIndex, usize>,
}

impl TargetSet {
    /// Rebuilds the positive set from target confidences (`>= 0.5`). Used
    /// when targets are read back from a volume file.
    pub fn from_volumes(volumes: Vec<C2FVolume>) -> Self {
        let mut positives = BTreeSet::new();
        for (p, v) in volumes.iter().enumerate() {
            for i in 0..v.shape.n_y {
                for j in 0..v.shape.n_z {
                    if v.cell(i, j).confidence >= 0.5 {
                        positives.insert(CellIndex::new(p, i, j));
                    }
                }
            }
        }
        Self {
            volumes,
            positives,
            assignments: BTreeMap::new(),
        }
    }
}

/// Ordering key for competing ground truths on the same cell.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    residual_rotation: f64,
    centre_offset: f64,
    grasp: usize,
    cell: C2FCell,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        self.residual_rotation
            .total_cmp(&other.residual_rotation)
            .then(self.centre_offset.total_cmp(&other.centre_offset))
            .then(self.grasp.cmp(&other.grasp))
            .is_lt()
    }
}

/// Assigns every good ground-truth grasp to the cells of the grasp points it
/// encloses. When several grasps land on the same cell, the one whose
/// rotation is closest to the cell's coarse rotation wins, then the one whose
/// normalized translation is closest to the box centre, then the lowest index.
pub fn encode_labels(
    grasp_points: &[Vec3],
    gt: &GraspLabelSet,
    gripper: &GripperGeometry,
    shape: GridShape,
) -> Result<TargetSet> {
    gripper.validate()?;
    if grasp_points.is_empty() {
        return Err(Error::invalid("no grasp points to encode"));
    }
    gt.validate()?;

    // Per-grasp quantities do not depend on the point.
    struct Prepared {
        index: usize,
        pose: GraspPose,
        bin: CoarseBin,
        euler: EulerAngles,
        residual_rotation: f64,
    }
    let mut prepared = Vec::new();
    for (index, (pose, label)) in gt.grasps.iter().zip(&gt.labels).enumerate() {
        if *label != GraspQuality::Good {
            continue;
        }
        let canonical = pose.canonicalized();
        let euler = canonicalize_roll(canonical.euler());
        let bin = quantize_orientation(euler.pitch, euler.yaw, shape)?;
        let (anchor_pitch, anchor_yaw) = bin_angles(bin.i, bin.j, 0.0, 0.0, shape);
        let coarse = euler_to_rotmat(EulerAngles::new(euler.roll, anchor_pitch, anchor_yaw))?;
        prepared.push(Prepared {
            index,
            pose: canonical,
            bin,
            euler,
            residual_rotation: rotation_distance(canonical.rotation(), &coarse),
        });
    }

    let mut volumes = Vec::with_capacity(grasp_points.len());
    let mut positives = BTreeSet::new();
    let mut assignments = BTreeMap::new();
    for (p, point) in grasp_points.iter().enumerate() {
        let mut best: BTreeMap<(usize, usize), Candidate> = BTreeMap::new();
        for g in &prepared {
            if !enclosed(point, &g.pose, gripper) {
                continue;
            }
            let norm = normalize(&g.pose.to_local(point), gripper);
            let (s, c) = (2.0 * g.euler.roll).sin_cos();
            let cand = Candidate {
                residual_rotation: g.residual_rotation,
                centre_offset: (norm - Vec3::repeat(0.5)).norm(),
                grasp: g.index,
                cell: C2FCell {
                    confidence: 1.0,
                    dx: norm.x,
                    dy: norm.y,
                    dz: norm.z,
                    d_pitch: g.bin.d_pitch,
                    d_yaw: g.bin.d_yaw,
                    roll_cos: c,
                    roll_sin: s,
                },
            };
            best.entry((g.bin.i, g.bin.j))
                .and_modify(|cur| {
                    if cand.beats(cur) {
                        *cur = cand;
                    }
                })
                .or_insert(cand);
        }
        let mut volume = C2FVolume::empty(*point, shape);
        for ((i, j), cand) in best {
            *volume.cell_mut(i, j) = cand.cell;
            let at = CellIndex::new(p, i, j);
            positives.insert(at);
            assignments.insert(at, cand.grasp);
        }
        volumes.push(volume);
    }
    Ok(TargetSet {
        volumes,
        positives,
        assignments,
    })
}

/// A decoded grasp together with the cell it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedGrasp {
    pub pose: GraspPose,
    pub cell: CellIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Sorted by confidence, highest first; ties by cell index.
    pub grasps: Vec<DecodedGrasp>,
    /// Cells above the threshold that were skipped for a degenerate roll pair.
    pub degenerate_cells: usize,
}

impl DecodeOutput {
    pub fn poses(&self) -> Vec<GraspPose> {
        self.grasps.iter().map(|g| g.pose).collect()
    }
}

/// Decodes every cell whose confidence reaches `conf_threshold`.
pub fn decode_volume(
    volumes: &[C2FVolume],
    gripper: &GripperGeometry,
    conf_threshold: f64,
) -> Result<DecodeOutput> {
    gripper.validate()?;
    if !(0.0..=1.0).contains(&conf_threshold) {
        return Err(Error::invalid(format!(
            "confidence threshold {conf_threshold} outside [0, 1]"
        )));
    }
    let mut grasps = Vec::new();
    let mut degenerate_cells = 0;
    for (p, volume) in volumes.iter().enumerate() {
        for i in 0..volume.shape.n_y {
            for j in 0..volume.shape.n_z {
                let confidence = volume.cell(i, j).confidence;
                if confidence.is_nan() || confidence < conf_threshold {
                    continue;
                }
                let at = CellIndex::new(p, i, j);
                match decode_at(volume, at, gripper) {
                    Ok(pose) => grasps.push(DecodedGrasp { pose, cell: at }),
                    Err(Error::DegenerateRoll(_)) => degenerate_cells += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    // stable: equal confidences keep (point, i, j) order
    grasps.sort_by(|a, b| {
        let ca = volumes[a.cell.point].cell(a.cell.i, a.cell.j).confidence;
        let cb = volumes[b.cell.point].cell(b.cell.i, b.cell.j).confidence;
        cb.total_cmp(&ca)
    });
    Ok(DecodeOutput {
        grasps,
        degenerate_cells,
    })
}
