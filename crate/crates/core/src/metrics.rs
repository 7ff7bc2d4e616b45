//! Pose matching, non-maximum suppression and top-10 average precision.
//!
//! Rotation errors are measured with [`symmetric_rotation_distance`], i.e.
//! the `arcsin(|I - R1 R2^T|_F / 2 sqrt 2)` distance taken modulo the
//! gripper's half-turn symmetry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{symmetric_rotation_distance, GraspPose, Rotation, Vec3};
use crate::sampler::GraspLabelSet;

pub const TOP_K: usize = 10;
pub const TRANSLATION_TOL: f64 = 0.02;
pub const HARD_ROTATION_TOL_DEG: f64 = 5.0;
pub const EASY_ROTATION_TOL_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchThresholds {
    /// Meters.
    pub trans_tol: f64,
    /// Radians.
    pub rot_tol: f64,
}

impl MatchThresholds {
    pub fn new(trans_tol: f64, rot_tol: f64) -> Result<Self> {
        if !(trans_tol.is_finite() && trans_tol > 0.0 && rot_tol.is_finite() && rot_tol > 0.0) {
            return Err(Error::invalid(format!(
                "match thresholds must be positive, got {trans_tol} m / {rot_tol} rad"
            )));
        }
        Ok(Self { trans_tol, rot_tol })
    }

    /// 2 cm / 5 degrees.
    pub fn hard() -> Self {
        Self {
            trans_tol: TRANSLATION_TOL,
            rot_tol: HARD_ROTATION_TOL_DEG.to_radians(),
        }
    }

    /// 2 cm / 10 degrees.
    pub fn easy() -> Self {
        Self {
            trans_tol: TRANSLATION_TOL,
            rot_tol: EASY_ROTATION_TOL_DEG.to_radians(),
        }
    }
}

/// Translation and symmetric rotation error between two poses.
pub fn pose_errors(a: &GraspPose, b: &GraspPose) -> (f64, f64) {
    (
        (a.translation - b.translation).norm(),
        symmetric_rotation_distance(a.rotation(), b.rotation()),
    )
}

/// Both errors strictly below their tolerances.
pub fn pose_match(pred: &GraspPose, gt: &GraspPose, th: &MatchThresholds) -> bool {
    let (dt, dr) = pose_errors(pred, gt);
    dt < th.trans_tol && dr < th.rot_tol
}

/// Greedy suppression in confidence order. A pose is dropped when it is
/// within `trans_tol` AND `rot_tol` of an already kept pose.
pub fn nms(poses: &[GraspPose], trans_tol: f64, rot_tol: f64) -> Vec<GraspPose> {
    let mut ranked = poses.to_vec();
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let th = MatchThresholds { trans_tol, rot_tol };
    let mut kept: Vec<GraspPose> = Vec::new();
    for pose in ranked {
        if !kept.iter().any(|k| pose_match(&pose, k, &th)) {
            kept.push(pose);
        }
    }
    kept
}

/// Matching result for one difficulty level.
#[derive(Debug, Clone, PartialEq)]
pub struct ApDetail {
    pub ap: f64,
    /// Ground-truth index matched by each ranked prediction.
    pub matches: Vec<Option<usize>>,
    /// Fraction of matched predictions among the first `k + 1`.
    pub precision_at_rank: Vec<f64>,
    /// `min(|gts|, 10)`.
    pub denominator: usize,
}

/// Greedy rank-order matching: each prediction takes the unmatched ground
/// truth with the smallest rotation error (then translation error, then
/// index) among those it matches. Only the first ten predictions count.
pub fn average_precision(
    preds: &[GraspPose],
    gts: &[GraspPose],
    th: &MatchThresholds,
) -> Result<ApDetail> {
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let mut taken = vec![false; gts.len()];
    let mut matches = Vec::new();
    let mut precision_at_rank = Vec::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, pred) in preds.iter().take(TOP_K).enumerate() {
        let mut best: Option<(f64, f64, usize)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let (dt, dr) = pose_errors(pred, gt);
            if !(dt < th.trans_tol && dr < th.rot_tol) {
                continue;
            }
            let better = match best {
                None => true,
                Some((br, bt, _)) => dr.total_cmp(&br).then(dt.total_cmp(&bt)).is_lt(),
            };
            if better {
                best = Some((dr, dt, g));
            }
        }
        let m = best.map(|(_, _, g)| g);
        if let Some(g) = m {
            taken[g] = true;
            hits += 1;
        }
        let precision = hits as f64 / (rank + 1) as f64;
        if m.is_some() {
            sum += precision;
        }
        matches.push(m);
        precision_at_rank.push(precision);
    }
    let denominator = gts.len().min(TOP_K);
    Ok(ApDetail {
        ap: sum / denominator as f64,
        matches,
        precision_at_rank,
        denominator,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ap_hard: f64,
    pub ap_easy: f64,
    pub hard: ApDetail,
    pub easy: ApDetail,
    /// Predictions left after NMS and top-10 truncation.
    pub evaluated: Vec<GraspPose>,
    pub num_predictions: usize,
    pub num_ground_truth: usize,
}

/// NMS at 2 cm / 5 degrees, top-10 truncation, then AP at both difficulties.
pub fn evaluate(preds: &[GraspPose], gts: &[GraspPose]) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let hard_th = MatchThresholds::hard();
    let mut kept = nms(preds, hard_th.trans_tol, hard_th.rot_tol);
    kept.truncate(TOP_K);
    let hard = average_precision(&kept, gts, &hard_th)?;
    let easy = average_precision(&kept, gts, &MatchThresholds::easy())?;
    Ok(EvalReport {
        ap_hard: hard.ap,
        ap_easy: easy.ap,
        hard,
        easy,
        evaluated: kept,
        num_predictions: preds.len(),
        num_ground_truth: gts.len(),
    })
}

/// Synthetic detections from the good ground truths: Gaussian translation
/// noise per axis, and a rotation about a uniformly random axis whose
/// [`rotation_distance`](crate::geometry::rotation_distance) to the source is
/// `|N(0, sigma_r)|` (a turn of twice that angle). Confidence is `1/(1+rank)`.
pub fn perturb_gt(
    gts: &GraspLabelSet,
    sigma_t: f64,
    sigma_r: f64,
    seed: u64,
) -> Result<Vec<GraspPose>> {
    if !(sigma_t.is_finite() && sigma_t >= 0.0 && sigma_r.is_finite() && sigma_r >= 0.0) {
        return Err(Error::invalid("perturbation scales must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trans_noise = Normal::new(0.0, sigma_t).expect("validated sigma");
    let rot_noise = Normal::new(0.0, sigma_r).expect("validated sigma");
    let mut out = Vec::new();
    for (rank, gt) in gts.good().enumerate() {
        let dt = Vec3::new(
            trans_noise.sample(&mut rng),
            trans_noise.sample(&mut rng),
            trans_noise.sample(&mut rng),
        );
        let axis = random_unit(&mut rng);
        let angle = 2.0 * rot_noise.sample(&mut rng).abs();
        let rotation = Rotation::from_axis_angle(&axis, angle)?.compose(gt.rotation());
        let pose = if sigma_r == 0.0 {
            GraspPose::from_euler(gt.euler(), gt.translation + dt)?
        } else {
            GraspPose::from_rotation(rotation, gt.translation + dt)?
        };
        out.push(pose.with_confidence(1.0 / (1.0 + rank as f64)));
    }
    Ok(out)
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{EulerAngles, Rotation};
    use crate::sampler::GraspQuality;

    fn pose(x: f64, yaw: f64) -> GraspPose {
        GraspPose::from_euler(EulerAngles::new(0.0, 0.0, yaw), Vec3::new(x, 0.0, 0.0)).unwrap()
    }

    /// Rotation whose symmetric distance from `p` is `err` radians.
    fn rotated(p: &GraspPose, err: f64) -> GraspPose {
        let r = Rotation::about_z(2.0 * err).compose(p.rotation());
        GraspPose::from_rotation(r, p.translation).unwrap()
    }

    #[test]
    fn match_examples() {
        let a = pose(0.0, 0.3);
        assert!(pose_match(&a, &a, &MatchThresholds::hard()));
        assert!(!pose_match(&pose(0.03, 0.3), &a, &MatchThresholds::hard()));
        let seven = rotated(&a, 7f64.to_radians());
        assert!((pose_errors(&seven, &a).1.to_degrees() - 7.0).abs() < 1e-9);
        assert!(!pose_match(&seven, &a, &MatchThresholds::hard()));
        assert!(pose_match(&seven, &a, &MatchThresholds::easy()));
    }

    #[test]
    fn match_is_symmetric_under_roll_flip() {
        let a = pose(0.0, 0.3);
        let flipped = GraspPose::from_rotation(a.rotation().compose(&Rotation::roll_flip()), a.translation).unwrap();
        assert!(pose_match(&flipped, &a, &MatchThresholds::hard()));
    }

    #[test]
    fn threshold_validation() {
        assert!(MatchThresholds::new(0.0, 0.1).is_err());
        assert!(MatchThresholds::new(0.02, -1.0).is_err());
        assert!(MatchThresholds::new(0.02, 0.1).is_ok());
    }

    #[test]
    fn nms_examples() {
        let (t, r) = (0.02, 5f64.to_radians());
        let a = pose(0.0, 0.0);
        assert_eq!(nms(&[a, a], t, r).len(), 1);
        assert_eq!(nms(&[a, pose(0.1, 0.0)], t, r).len(), 2);
        // chain: A-B and B-C overlap, A-C do not
        let a = pose(0.0, 0.0).with_confidence(0.9);
        let b = pose(0.015, 0.0).with_confidence(0.8);
        let c = pose(0.03, 0.0).with_confidence(0.7);
        let kept = nms(&[c, b, a], t, r);
        assert_eq!(kept, vec![a, c]);
    }

    #[test]
    fn ap_examples() {
        let th = MatchThresholds::hard();
        let gts: Vec<GraspPose> = (0..12).map(|k| pose(0.1 * k as f64, 0.0)).collect();
        let preds: Vec<GraspPose> = gts[..10].to_vec();
        assert_eq!(average_precision(&preds, &gts, &th).unwrap().ap, 1.0);
        let far: Vec<GraspPose> = (0..10).map(|k| pose(5.0 + k as f64, 0.0)).collect();
        assert_eq!(average_precision(&far, &gts, &th).unwrap().ap, 0.0);
        // only the rank-2 prediction matches the single ground truth
        let gt = [pose(0.0, 0.0)];
        let d = average_precision(&[pose(1.0, 0.0), pose(0.0, 0.0)], &gt, &th).unwrap();
        assert_eq!(d.ap, 0.5);
        assert_eq!(d.matches, vec![None, Some(0)]);
        assert_eq!(d.precision_at_rank, vec![0.0, 0.5]);
        assert!(matches!(average_precision(&preds, &[], &th), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn each_ground_truth_matches_once() {
        let th = MatchThresholds::hard();
        let gt = [pose(0.0, 0.0)];
        let d = average_precision(&[pose(0.0, 0.0), pose(0.001, 0.0)], &gt, &th).unwrap();
        assert_eq!(d.matches, vec![Some(0), None]);
        assert_eq!(d.ap, 1.0);
    }

    #[test]
    fn nearest_rotation_wins() {
        let th = MatchThresholds::easy();
        let p = pose(0.0, 0.0);
        let gts = [rotated(&p, 4f64.to_radians()), rotated(&p, 1f64.to_radians())];
        let d = average_precision(&[p], &gts, &th).unwrap();
        assert_eq!(d.matches, vec![Some(1)]);
    }

    #[test]
    fn evaluate_examples() {
        let gts: Vec<GraspPose> = (0..6).map(|k| pose(0.1 * k as f64, 0.2 * k as f64)).collect();
        let r = evaluate(&gts, &gts).unwrap();
        assert_eq!((r.ap_hard, r.ap_easy), (1.0, 1.0));

        let small: Vec<GraspPose> = gts
            .iter()
            .map(|g| {
                let q = rotated(g, 3f64.to_radians());
                GraspPose::from_rotation(*q.rotation(), q.translation + Vec3::new(0.0, 0.01, 0.0)).unwrap()
            })
            .collect();
        assert_eq!(evaluate(&small, &gts).unwrap().ap_hard, 1.0);

        let seven: Vec<GraspPose> = gts.iter().map(|g| rotated(g, 7f64.to_radians())).collect();
        let r = evaluate(&seven, &gts).unwrap();
        assert_eq!((r.ap_hard, r.ap_easy), (0.0, 1.0));
        assert!(evaluate(&gts, &[]).is_err());
    }

    #[test]
    fn evaluate_truncates_to_ten() {
        let gts: Vec<GraspPose> = (0..15).map(|k| pose(0.1 * k as f64, 0.0)).collect();
        let r = evaluate(&gts, &gts).unwrap();
        assert_eq!(r.evaluated.len(), 10);
        assert_eq!(r.hard.denominator, 10);
        assert_eq!(r.ap_hard, 1.0);
    }

    fn label_set(n: usize) -> GraspLabelSet {
        let grasps: Vec<GraspPose> = (0..n).map(|k| pose(0.05 * k as f64, 0.1 * k as f64)).collect();
        GraspLabelSet::new(grasps, vec![GraspQuality::Good; n], "t").unwrap()
    }

    #[test]
    fn perturb_examples() {
        let set = label_set(20);
        let same = perturb_gt(&set, 0.0, 0.0, 1).unwrap();
        for (k, (p, g)) in same.iter().zip(&set.grasps).enumerate() {
            assert_eq!(p.translation, g.translation);
            assert_eq!(p.rotation(), g.rotation());
            assert_eq!(p.confidence, 1.0 / (1.0 + k as f64));
        }
        assert_eq!(perturb_gt(&set, 0.01, 0.1, 9).unwrap(), perturb_gt(&set, 0.01, 0.1, 9).unwrap());
        assert_ne!(perturb_gt(&set, 0.01, 0.1, 9).unwrap(), perturb_gt(&set, 0.01, 0.1, 10).unwrap());
        assert!(perturb_gt(&set, -1.0, 0.1, 9).is_err());
    }

    #[test]
    fn perturb_skips_bad_grasps() {
        let mut set = label_set(4);
        set.labels[1] = GraspQuality::Bad;
        assert_eq!(perturb_gt(&set, 0.0, 0.0, 0).unwrap().len(), 3);
    }
}
