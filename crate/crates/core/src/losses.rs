//! Training losses on prediction/target volume pairs, with analytic
//! gradients for all eight channels of every cell.
//!
//! * classification: focal loss over every cell, normalized by `|S|`;
//! * rotation: `|I - R_pred R_target^T|_F` over the positive cells `S`;
//! * translation: weighted L1 on the normalized offsets over `S`;
//! * total: `lambda_cls * cls + lambda_rot * rot + trans`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::{cell_euler, channel, C2FCell, C2FVolume, CellIndex, GridShape, TargetSet, CHANNELS};
use crate::error::{Error, Result};
use crate::geometry::{euler_to_rotmat, Rotation};

/// Confidences are clipped to `[EPS, 1 - EPS]` before taking logs.
pub const CONFIDENCE_EPS: f64 = 1e-7;

/// Per-volume, per-cell gradient with respect to the eight channels.
pub type ChannelGrid = Vec<Vec<[f64; CHANNELS]>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub lambda_z: f64,
    pub lambda_cls: f64,
    pub lambda_rot: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            lambda_x: 1.0,
            lambda_y: 1.0,
            lambda_z: 1.0,
            lambda_cls: 1.0,
            lambda_rot: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("lambda_x", self.lambda_x),
            ("lambda_y", self.lambda_y),
            ("lambda_z", self.lambda_z),
            ("lambda_cls", self.lambda_cls),
            ("lambda_rot", self.lambda_rot),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("loss {name} must be finite and non-negative, got {v}")));
            }
        }
        if self.alpha == 0.0 {
            return Err(Error::invalid("focal alpha must be positive"));
        }
        Ok(())
    }
}

/// A loss value with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub gradient: ChannelGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub cls: f64,
    pub rot: f64,
    pub trans: f64,
    pub total: f64,
    pub gradients: ChannelGrid,
}

fn zero_grid(volumes: &[C2FVolume]) -> ChannelGrid {
    volumes
        .iter()
        .map(|v| vec![[0.0; CHANNELS]; v.shape().cells()])
        .collect()
}

fn positive_mask(volumes: &[C2FVolume], positives: &BTreeSet<CellIndex>) -> Result<Vec<Vec<bool>>> {
    let mut mask: Vec<Vec<bool>> = volumes.iter().map(|v| vec![false; v.shape().cells()]).collect();
    for at in positives {
        let v = volumes.get(at.point).ok_or_else(|| {
            Error::ShapeMismatch(format!("positive {at} refers to a missing grasp point"))
        })?;
        v.shape().check(at.i, at.j)?;
        mask[at.point][at.i * v.shape().n_z + at.j] = true;
    }
    Ok(mask)
}

fn check_pair(pred: &[C2FVolume], target: &[C2FVolume]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted volumes vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    for (p, (a, b)) in pred.iter().zip(target).enumerate() {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch(format!(
                "volume {p}: predicted {:?} vs target {:?}",
                a.shape(),
                b.shape()
            )));
        }
    }
    Ok(())
}

/// Unnormalized focal term of one cell and its derivative in the raw
/// confidence (zero where the clip is active).
pub(crate) fn focal_cell(confidence: f64, positive: bool, cfg: &LossConfig) -> (f64, f64) {
    let c = confidence.clamp(CONFIDENCE_EPS, 1.0 - CONFIDENCE_EPS);
    let (q, dq_dc) = if positive { (c, 1.0) } else { (1.0 - c, -1.0) };
    let one_minus = 1.0 - q;
    let value = -cfg.alpha * one_minus.powf(cfg.gamma) * q.ln();
    let clipped = !(CONFIDENCE_EPS..=1.0 - CONFIDENCE_EPS).contains(&confidence);
    if clipped {
        return (value, 0.0);
    }
    let d_weight = if cfg.gamma == 0.0 {
        0.0
    } else {
        cfg.alpha * cfg.gamma * one_minus.powf(cfg.gamma - 1.0) * q.ln()
    };
    let d_dq = d_weight - cfg.alpha * one_minus.powf(cfg.gamma) / q;
    (value, d_dq * dq_dc)
}

/// Target rotation of a positive cell.
fn target_rotation(cell: &C2FCell, at: CellIndex, shape: GridShape) -> Result<Rotation> {
    let e = cell_euler(cell, at.i, at.j, shape).ok_or(Error::DegenerateRoll(at))?;
    euler_to_rotmat(e)
}

/// `|I - R_pred R_target^T|_F` for one cell and its gradient with respect to
/// `[d_pitch, d_yaw, roll_cos, roll_sin]`.
pub(crate) fn rotation_cell(
    pred: &C2FCell,
    target: &Rotation,
    at: CellIndex,
    shape: GridShape,
) -> Result<(f64, [f64; 4])> {
    let e = cell_euler(pred, at.i, at.j, shape).ok_or(Error::DegenerateRoll(at))?;
    let r_pred = euler_to_rotmat(e)?;
    let diff = Matrix3::identity() - r_pred.matrix() * target.matrix().transpose();
    let value = diff.norm();
    if value == 0.0 {
        return Ok((0.0, [0.0; 4]));
    }
    // d|A|/dR_pred with A = I - R_pred R^T
    let g = -(diff * target.matrix()) / value;

    let (rx, ry, rz) = (
        Rotation::about_x(e.roll),
        Rotation::about_y(e.pitch),
        Rotation::about_z(e.yaw),
    );
    let (sx, cx) = e.roll.sin_cos();
    let (sy, cy) = e.pitch.sin_cos();
    let (sz, cz) = e.yaw.sin_cos();
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sx, -cx, 0.0, cx, -sx);
    let dry = Matrix3::new(-sy, 0.0, cy, 0.0, 0.0, 0.0, -cy, 0.0, -sy);
    let drz = Matrix3::new(-sz, -cz, 0.0, cz, -sz, 0.0, 0.0, 0.0, 0.0);
    let d_roll = g.dot(&(rz.matrix() * ry.matrix() * drx));
    let d_pitch = g.dot(&(rz.matrix() * dry * rx.matrix()));
    let d_yaw = g.dot(&(drz * ry.matrix() * rx.matrix()));

    let (c, s) = (pred.roll_cos, pred.roll_sin);
    let r2 = c * c + s * s;
    Ok((
        value,
        [
            d_pitch * PI / shape.n_y as f64,
            d_yaw * 2.0 * PI / shape.n_z as f64,
            d_roll * (-s / (2.0 * r2)),
            d_roll * (c / (2.0 * r2)),
        ],
    ))
}

/// Weighted L1 translation term and its subgradient (zero at equality).
pub(crate) fn translation_cell(pred: &C2FCell, target: &C2FCell, cfg: &LossConfig) -> (f64, [f64; 3]) {
    let diffs = [pred.dx - target.dx, pred.dy - target.dy, pred.dz - target.dz];
    let weights = [cfg.lambda_x, cfg.lambda_y, cfg.lambda_z];
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    for k in 0..3 {
        value += weights[k] * diffs[k].abs();
        grad[k] = if diffs[k] == 0.0 { 0.0 } else { weights[k] * diffs[k].signum() };
    }
    (value, grad)
}

pub fn focal_loss(
    pred: &[C2FVolume],
    positives: &BTreeSet<CellIndex>,
    cfg: &LossConfig,
) -> Result<LossTerm> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::EmptyPositives);
    }
    let mask = positive_mask(pred, positives)?;
    let norm = positives.len() as f64;
    let mut gradient = zero_grid(pred);
    let mut value = 0.0;
    for (p, v) in pred.iter().enumerate() {
        for (k, cell) in v.cells().iter().enumerate() {
            let (f, df) = focal_cell(cell.confidence, mask[p][k], cfg);
            value += f;
            gradient[p][k][channel::CONFIDENCE] = df / norm;
        }
    }
    Ok(LossTerm {
        value: value / norm,
        gradient,
    })
}

fn positive_cells(targets: &TargetSet) -> impl Iterator<Item = (CellIndex, usize)> + '_ {
    targets.positives.iter().map(|at| {
        let n_z = targets.volumes[at.point].shape().n_z;
        (*at, at.i * n_z + at.j)
    })
}

pub fn rotation_loss(pred: &[C2FVolume], targets: &TargetSet, cfg: &LossConfig) -> Result<LossTerm> {
    cfg.validate()?;
    check_pair(pred, &targets.volumes)?;
    if targets.positives.is_empty() {
        return Err(Error::EmptyPositives);
    }
    positive_mask(pred, &targets.positives)?;
    let norm = targets.positives.len() as f64;
    let mut gradient = zero_grid(pred);
    let mut value = 0.0;
    for (at, k) in positive_cells(targets) {
        let shape = pred[at.point].shape();
        let target = target_rotation(&targets.volumes[at.point].cells()[k], at, shape)?;
        let (f, g) = rotation_cell(&pred[at.point].cells()[k], &target, at, shape)?;
        value += f;
        let cell = &mut gradient[at.point][k];
        cell[channel::D_PITCH] = g[0] / norm;
        cell[channel::D_YAW] = g[1] / norm;
        cell[channel::ROLL_COS] = g[2] / norm;
        cell[channel::ROLL_SIN] = g[3] / norm;
    }
    Ok(LossTerm {
        value: value / norm,
        gradient,
    })
}

pub fn translation_loss(pred: &[C2FVolume], targets: &TargetSet, cfg: &LossConfig) -> Result<LossTerm> {
    cfg.validate()?;
    check_pair(pred, &targets.volumes)?;
    if targets.positives.is_empty() {
        return Err(Error::EmptyPositives);
    }
    positive_mask(pred, &targets.positives)?;
    let norm = targets.positives.len() as f64;
    let mut gradient = zero_grid(pred);
    let mut value = 0.0;
    for (at, k) in positive_cells(targets) {
        let (f, g) = translation_cell(&pred[at.point].cells()[k], &targets.volumes[at.point].cells()[k], cfg);
        value += f;
        let cell = &mut gradient[at.point][k];
        cell[channel::DX] = g[0] / norm;
        cell[channel::DY] = g[1] / norm;
        cell[channel::DZ] = g[2] / norm;
    }
    Ok(LossTerm {
        value: value / norm,
        gradient,
    })
}

pub fn total_loss(pred: &[C2FVolume], targets: &TargetSet, cfg: &LossConfig) -> Result<LossReport> {
    check_pair(pred, &targets.volumes)?;
    let cls = focal_loss(pred, &targets.positives, cfg)?;
    let rot = rotation_loss(pred, targets, cfg)?;
    let trans = translation_loss(pred, targets, cfg)?;
    let mut gradients = zero_grid(pred);
    for (p, vol) in gradients.iter_mut().enumerate() {
        for (k, cell) in vol.iter_mut().enumerate() {
            for (ch, g) in cell.iter_mut().enumerate() {
                *g = cfg.lambda_cls * cls.gradient[p][k][ch]
                    + cfg.lambda_rot * rot.gradient[p][k][ch]
                    + trans.gradient[p][k][ch];
            }
        }
    }
    Ok(LossReport {
        cls: cls.value,
        rot: rot.value,
        trans: trans.value,
        total: cfg.lambda_cls * cls.value + cfg.lambda_rot * rot.value + trans.value,
        gradients,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Channels left out for sitting next to an L1 kink, the confidence
    /// clip, the roll branch cut, or a zero rotation error.
    pub skipped: usize,
}

const KINK_MARGIN: f64 = 1e-4;
const REL_ERROR_FLOOR: f64 = 1e-6;

/// Applies the gradcheck perturbation to a copy of `pred`.
pub fn perturb_prediction(pred: &[C2FVolume], seed: u64) -> Vec<C2FVolume> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conf = Normal::new(0.0, 0.1).expect("valid sigma");
    let other = Normal::new(0.0, 0.05).expect("valid sigma");
    let mut out = pred.to_vec();
    for v in &mut out {
        for cell in v.cells_mut() {
            let mut a = cell.to_array();
            a[0] = (a[0] + conf.sample(&mut rng)).clamp(0.02, 0.98);
            for x in &mut a[1..] {
                *x += other.sample(&mut rng);
            }
            *cell = C2FCell::from_array(a);
        }
    }
    out
}

/// Compares [`total_loss`] gradients with central differences of the loss
/// value at a seeded random perturbation of `pred`.
///
/// The total loss is a sum of independent per-cell terms, so each
/// difference quotient only re-evaluates the cell whose channel moved.
pub fn gradcheck(
    pred: &[C2FVolume],
    targets: &TargetSet,
    cfg: &LossConfig,
    step: f64,
    seed: u64,
) -> Result<GradcheckReport> {
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::invalid(format!("gradcheck step {step} outside (0, 1e-3]")));
    }
    let point = perturb_prediction(pred, seed);
    let report = total_loss(&point, targets, cfg)?;
    let mask = positive_mask(&point, &targets.positives)?;
    let norm = targets.positives.len() as f64;

    let contribution = |cell: &C2FCell, target: &C2FCell, at: CellIndex, positive: bool| -> Result<f64> {
        let shape = point[at.point].shape();
        let mut v = cfg.lambda_cls * focal_cell(cell.confidence, positive, cfg).0;
        if positive {
            let target_rot = target_rotation(target, at, shape)?;
            v += cfg.lambda_rot * rotation_cell(cell, &target_rot, at, shape)?.0;
            v += translation_cell(cell, target, cfg).0;
        }
        Ok(v / norm)
    };

    let mut max_rel_error: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    for (p, vol) in point.iter().enumerate() {
        let shape = vol.shape();
        for (k, cell) in vol.cells().iter().enumerate() {
            let at = CellIndex::new(p, k / shape.n_z, k % shape.n_z);
            let positive = mask[p][k];
            let target = &targets.volumes[p].cells()[k];
            let channels: &[usize] = if positive { &[0, 1, 2, 3, 4, 5, 6, 7] } else { &[0] };
            let rot_near_singular = positive && {
                let target_rot = target_rotation(target, at, shape)?;
                let (f, _) = rotation_cell(cell, &target_rot, at, shape)?;
                let r = cell.roll_cos.hypot(cell.roll_sin);
                f < KINK_MARGIN
                    || r < 1e-3
                    || (cell.roll_cos < 0.0 && cell.roll_sin.abs() < KINK_MARGIN * r)
            };
            for &ch in channels {
                let x = cell.get(ch);
                let near_kink = match ch {
                    channel::CONFIDENCE => {
                        x - step <= CONFIDENCE_EPS || x + step >= 1.0 - CONFIDENCE_EPS
                    }
                    channel::DX | channel::DY | channel::DZ => (x - target.get(ch)).abs() < KINK_MARGIN,
                    _ => rot_near_singular,
                };
                if near_kink {
                    skipped += 1;
                    continue;
                }
                let mut plus = *cell;
                plus.set(ch, x + step);
                let mut minus = *cell;
                minus.set(ch, x - step);
                let numeric = (contribution(&plus, target, at, positive)?
                    - contribution(&minus, target, at, positive)?)
                    / (2.0 * step);
                let analytic = report.gradients[p][k][ch];
                let rel = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
                max_rel_error = max_rel_error.max(rel);
                checked += 1;
            }
        }
    }
    Ok(GradcheckReport {
        max_rel_error,
        checked,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_labels, GridShape};
    use crate::geometry::{EulerAngles, GraspPose, GripperGeometry, Vec3};
    use crate::sampler::{GraspLabelSet, GraspQuality};
    use rand::Rng;

    fn single_positive(c_pos: f64, c_neg: f64) -> (Vec<C2FVolume>, BTreeSet<CellIndex>) {
        let shape = GridShape::new(2, 3).unwrap();
        let mut v = C2FVolume::empty(Vec3::zeros(), shape);
        for c in v.cells_mut() {
            c.confidence = c_neg;
        }
        v.cell_mut(1, 2).confidence = c_pos;
        (vec![v], BTreeSet::from([CellIndex::new(0, 1, 2)]))
    }

    /// Targets for a few random grasps, with one grasp point inside each.
    fn random_targets(seed: u64, points: usize) -> TargetSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GripperGeometry::default();
        let mut grasps = Vec::new();
        let mut pts = Vec::new();
        for _ in 0..points {
            let e = EulerAngles::new(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0));
            let pose = GraspPose::from_euler(e, Vec3::new(rng.random(), rng.random(), rng.random())).unwrap();
            pts.push(pose.to_world(&Vec3::new(0.03, 0.01, 0.002)));
            grasps.push(pose);
        }
        let n = grasps.len();
        let set = GraspLabelSet::new(grasps, vec![GraspQuality::Good; n], "t").unwrap();
        encode_labels(&pts, &set, &g, GridShape::default()).unwrap()
    }

    fn perfect(targets: &TargetSet) -> Vec<C2FVolume> {
        let mut pred = targets.volumes.clone();
        for v in &mut pred {
            for c in v.cells_mut() {
                c.confidence = if c.confidence > 0.5 { 1.0 - CONFIDENCE_EPS } else { CONFIDENCE_EPS };
            }
        }
        pred
    }

    #[test]
    fn focal_perfect_prediction() {
        let (pred, s) = single_positive(1.0 - CONFIDENCE_EPS, CONFIDENCE_EPS);
        assert!(focal_loss(&pred, &s, &LossConfig::default()).unwrap().value < 1e-5);
    }

    #[test]
    fn focal_single_cell_value() {
        let (pred, s) = single_positive(0.5, 0.2);
        let cfg = LossConfig::default();
        let neg = -0.25 * 0.2f64.powi(2) * 0.8f64.ln();
        let expected = 0.25 * 0.25 * 2f64.ln() + 5.0 * neg;
        assert!((0.25 * 0.25 * 2f64.ln() - 0.043321).abs() < 1e-6);
        let got = focal_loss(&pred, &s, &cfg).unwrap().value;
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn focal_empty_positive_set() {
        let (pred, _) = single_positive(0.5, 0.5);
        assert!(matches!(
            focal_loss(&pred, &BTreeSet::new(), &LossConfig::default()),
            Err(Error::EmptyPositives)
        ));
    }

    #[test]
    fn focal_reduces_to_cross_entropy() {
        let cfg = LossConfig { alpha: 1.0, gamma: 0.0, ..Default::default() };
        let (pred, s) = single_positive(0.7, 0.1);
        let bce = -(0.7f64.ln()) - 5.0 * 0.9f64.ln();
        assert!((focal_loss(&pred, &s, &cfg).unwrap().value - bce).abs() < 1e-12);
    }

    #[test]
    fn focal_duplication_keeps_the_mean() {
        let cfg = LossConfig::default();
        let (pred, s) = single_positive(0.6, 0.3);
        let single = focal_loss(&pred, &s, &cfg).unwrap().value;
        let doubled_pred = vec![pred[0].clone(), pred[0].clone()];
        let doubled_s = BTreeSet::from([CellIndex::new(0, 1, 2), CellIndex::new(1, 1, 2)]);
        // twice the terms over twice the normalizer
        let doubled = focal_loss(&doubled_pred, &doubled_s, &cfg).unwrap().value;
        assert!((doubled - single).abs() < 1e-15);
        let per_cell = focal_cell(0.6, true, &cfg).0;
        assert!((single - (per_cell + 5.0 * focal_cell(0.3, false, &cfg).0)).abs() < 1e-15);
    }

    #[test]
    fn focal_is_permutation_invariant() {
        let cfg = LossConfig::default();
        let shape = GridShape::new(3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut v = C2FVolume::empty(Vec3::zeros(), shape);
        for c in v.cells_mut() {
            c.confidence = rng.random_range(0.01..0.99);
        }
        let s = BTreeSet::from([CellIndex::new(0, 0, 1), CellIndex::new(0, 2, 3)]);
        let a = focal_loss(&[v.clone()], &s, &cfg).unwrap().value;
        // reverse the cell order and map the positives accordingly
        let cells: Vec<C2FCell> = v.cells().iter().rev().copied().collect();
        let r = C2FVolume::from_cells(Vec3::zeros(), shape, cells).unwrap();
        let flip = |i: usize, j: usize| CellIndex::new(0, 2 - i, 3 - j);
        let s2 = BTreeSet::from([flip(0, 1), flip(2, 3)]);
        let b = focal_loss(&[r], &s2, &cfg).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn identical_predictions_have_zero_regression_loss() {
        let targets = random_targets(1, 3);
        let cfg = LossConfig::default();
        assert!(rotation_loss(&targets.volumes, &targets, &cfg).unwrap().value < 1e-12);
        assert_eq!(translation_loss(&targets.volumes, &targets, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn half_turn_rotation_error() {
        let targets = random_targets(2, 1);
        let at = *targets.positives.iter().next().unwrap();
        let shape = targets.volumes[0].shape();
        let mut pred = targets.volumes.clone();
        // yaw + pi is a half-turn about the world z-axis
        pred[0].cell_mut(at.i, at.j).d_yaw += shape.n_z as f64 / 2.0;
        let r = rotation_loss(&pred, &targets, &LossConfig::default()).unwrap();
        assert!((r.value - 2.0 * 2f64.sqrt()).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn degenerate_roll_names_the_cell() {
        let targets = random_targets(3, 1);
        let at = *targets.positives.iter().next().unwrap();
        let mut pred = targets.volumes.clone();
        pred[0].cell_mut(at.i, at.j).roll_cos = 0.0;
        pred[0].cell_mut(at.i, at.j).roll_sin = 0.0;
        match rotation_loss(&pred, &targets, &LossConfig::default()) {
            Err(Error::DegenerateRoll(c)) => assert_eq!(c, at),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn translation_examples() {
        let targets = random_targets(5, 1);
        let at = *targets.positives.iter().next().unwrap();
        let mut pred = targets.volumes.clone();
        {
            let c = pred[0].cell_mut(at.i, at.j);
            c.dx += 0.1;
            c.dy -= 0.1;
            c.dz += 0.1;
        }
        let cfg = LossConfig::default();
        assert!((translation_loss(&pred, &targets, &cfg).unwrap().value - 0.3).abs() < 1e-12);
        let mut pred = targets.volumes.clone();
        pred[0].cell_mut(at.i, at.j).dx += 0.1;
        let cfg = LossConfig { lambda_x: 2.0, ..Default::default() };
        assert!((translation_loss(&pred, &targets, &cfg).unwrap().value - 0.2).abs() < 1e-12);
    }

    #[test]
    fn total_combines_terms() {
        let targets = random_targets(6, 4);
        let pred = perturb_prediction(&targets.volumes, 11);
        let cfg = LossConfig::default();
        let r = total_loss(&pred, &targets, &cfg).unwrap();
        assert!((r.total - (r.cls + r.rot + r.trans)).abs() < 1e-12);
        let weighted = LossConfig { lambda_cls: 0.5, lambda_rot: 3.0, ..Default::default() };
        let w = total_loss(&pred, &targets, &weighted).unwrap();
        assert!((w.total - (0.5 * w.cls + 3.0 * w.rot + w.trans)).abs() < 1e-12);
    }

    #[test]
    fn perfect_total_loss_is_tiny() {
        let targets = random_targets(7, 4);
        let r = total_loss(&perfect(&targets), &targets, &LossConfig::default()).unwrap();
        assert!(r.total < 1e-5);
    }

    #[test]
    fn zero_classification_weight_ignores_confidence() {
        let targets = random_targets(8, 2);
        let pred = perturb_prediction(&targets.volumes, 1);
        let cfg = LossConfig { lambda_cls: 0.0, ..Default::default() };
        let r = total_loss(&pred, &targets, &cfg).unwrap();
        assert!(r.gradients.iter().flatten().all(|c| c[channel::CONFIDENCE] == 0.0));
        let mut other = pred.clone();
        for c in other[0].cells_mut() {
            c.confidence = 0.5;
        }
        assert_eq!(total_loss(&other, &targets, &cfg).unwrap().total, r.total);
    }

    #[test]
    fn gradients_vanish_at_exact_targets() {
        let targets = random_targets(9, 4);
        let r = total_loss(&targets.volumes, &targets, &LossConfig::default()).unwrap();
        for at in &targets.positives {
            let n_z = targets.volumes[at.point].shape().n_z;
            let g = r.gradients[at.point][at.i * n_z + at.j];
            assert!(g[1..].iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn gradcheck_smooth_points() {
        let targets = random_targets(10, 4);
        for seed in [1, 2] {
            let r = gradcheck(&targets.volumes, &targets, &LossConfig::default(), 1e-6, seed).unwrap();
            assert!(r.max_rel_error < 1e-5, "{r:?}");
            assert!(r.checked > 2000);
        }
        assert!(gradcheck(&targets.volumes, &targets, &LossConfig::default(), 0.0, 1).is_err());
        assert!(gradcheck(&targets.volumes, &targets, &LossConfig::default(), 1e-2, 1).is_err());
    }

    #[test]
    fn descent_along_negative_gradient() {
        let cfg = LossConfig::default();
        for seed in 0..10 {
            let targets = random_targets(100 + seed, 3);
            let pred = perturb_prediction(&targets.volumes, seed);
            let r = total_loss(&pred, &targets, &cfg).unwrap();
            let mut stepped = pred.clone();
            for (p, v) in stepped.iter_mut().enumerate() {
                for (k, c) in v.cells_mut().iter_mut().enumerate() {
                    let mut a = c.to_array();
                    for (x, d) in a.iter_mut().zip(&r.gradients[p][k]) {
                        *x -= 1e-4 * d;
                    }
                    *c = C2FCell::from_array(a);
                }
            }
            let after = total_loss(&stepped, &targets, &cfg).unwrap().total;
            assert!(after < r.total, "seed {seed}: {after} >= {}", r.total);
        }
    }

    #[test]
    fn rotation_term_is_bounded() {
        let targets = random_targets(12, 4);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pred = targets.volumes.clone();
            for at in &targets.positives {
                let c = pred[at.point].cell_mut(at.i, at.j);
                c.d_pitch = rng.random_range(-5.0..5.0);
                c.d_yaw = rng.random_range(-5.0..5.0);
                c.roll_cos = rng.random_range(-1.0..1.0);
                c.roll_sin = rng.random_range(-1.0..1.0);
            }
            let r = rotation_loss(&pred, &targets, &LossConfig::default()).unwrap();
            assert!(r.value >= 0.0 && r.value <= 2.0 * 2f64.sqrt() + 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let targets = random_targets(13, 2);
        assert!(matches!(
            total_loss(&targets.volumes[..1], &targets, &LossConfig::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { gamma: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }
}
