//! Geometric ground-truth grasp generation.
//!
//! Candidates are built in a local frame at seeded surface points: the
//! gripper approaches against the surface normal, its closing axis starts
//! along the principal curvature direction and is swept about the normal,
//! and the hand is tried at several depths. Colliding candidates are dropped
//! and the rest are labelled with an antipodal friction-cone test.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{GraspPose, GripperGeometry, GripperRegion, Rotation, Vec3};
use crate::spatial::KdTree;

const DEFAULT_CONTACT_TOLERANCE: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid(format!("point {i} has non-finite coordinates")));
        }
        Ok(Self {
            points,
            normals: None,
        })
    }

    /// Normals are re-normalized; zero or non-finite normals are rejected.
    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::invalid(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        let mut cloud = Self::new(points)?;
        let mut unit = Vec::with_capacity(normals.len());
        for (i, n) in normals.iter().enumerate() {
            let len = n.norm();
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::invalid(format!("normal {i} cannot be normalized")));
            }
            unit.push(n / len);
        }
        cloud.normals = Some(unit);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::zeros();
        }
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }

    fn normals_or_err(&self) -> Result<&[Vec3]> {
        self.normals
            .as_deref()
            .ok_or_else(|| Error::invalid("point cloud has no normals"))
    }

    /// The cloud after the rigid motion `x -> rot * x + trans`.
    pub fn transformed(&self, rot: &Rotation, trans: &Vec3) -> Self {
        Self {
            points: self.points.iter().map(|p| rot.apply(p) + trans).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| rot.apply(n)).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraspQuality {
    Good,
    Bad,
}

impl fmt::Display for GraspQuality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraspQuality::Good => "good",
            GraspQuality::Bad => "bad",
        })
    }
}

impl FromStr for GraspQuality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "good" => Ok(GraspQuality::Good),
            "bad" => Ok(GraspQuality::Bad),
            other => Err(Error::invalid(format!(
                "grasp quality must be `good` or `bad`, got `{other}`"
            ))),
        }
    }
}

/// Labelled ground-truth grasps for one object or scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraspLabelSet {
    pub grasps: Vec<GraspPose>,
    pub labels: Vec<GraspQuality>,
    pub source: String,
}

impl GraspLabelSet {
    pub fn new(
        grasps: Vec<GraspPose>,
        labels: Vec<GraspQuality>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let set = Self {
            grasps,
            labels,
            source: source.into(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grasps.len() != self.labels.len() {
            return Err(Error::invalid(format!(
                "{} grasps but {} labels",
                self.grasps.len(),
                self.labels.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.grasps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grasps.is_empty()
    }

    pub fn good(&self) -> impl Iterator<Item = &GraspPose> {
        self.grasps
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == GraspQuality::Good)
            .map(|(g, _)| g)
    }

    pub fn count(&self, quality: GraspQuality) -> usize {
        self.labels.iter().filter(|l| **l == quality).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Neighbourhood size for normal and curvature estimation.
    pub neighbors_k: usize,
    pub num_seed_points: usize,
    /// Closing-axis orientations tried about each normal, spread over a half-turn.
    pub roll_steps: usize,
    /// Approach depths tried per orientation.
    pub depth_steps: usize,
    pub friction_mu: f64,
    pub min_contact_points: usize,
    /// Band (meters) next to each closed finger in which points count as contacts.
    pub contact_tolerance: f64,
    /// Largest surface variation `l0 / (l0 + l1 + l2)` of a neighbourhood
    /// whose normal is trusted for seeding and contacts. Sharp edges exceed it.
    pub max_surface_variation: f64,
    /// Normals are oriented towards this point; `None` orients them away
    /// from the cloud centroid.
    pub viewpoint: Option<Vec3>,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            neighbors_k: 30,
            num_seed_points: 500,
            roll_steps: 8,
            depth_steps: 5,
            friction_mu: 0.3,
            min_contact_points: 5,
            contact_tolerance: DEFAULT_CONTACT_TOLERANCE,
            max_surface_variation: 0.005,
            viewpoint: None,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("neighbors_k", self.neighbors_k),
            ("num_seed_points", self.num_seed_points),
            ("roll_steps", self.roll_steps),
            ("depth_steps", self.depth_steps),
            ("min_contact_points", self.min_contact_points),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("sampler {name} must be positive")));
            }
        }
        if !(self.friction_mu.is_finite() && self.friction_mu > 0.0) {
            return Err(Error::invalid("friction coefficient must be positive"));
        }
        if !(self.contact_tolerance.is_finite() && self.contact_tolerance >= 0.0) {
            return Err(Error::invalid("contact tolerance must be non-negative"));
        }
        if !(self.max_surface_variation.is_finite() && self.max_surface_variation >= 0.0) {
            return Err(Error::invalid("maximum surface variation must be non-negative"));
        }
        if let Some(v) = self.viewpoint {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid("viewpoint is not finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalOrientation {
    Viewpoint(Vec3),
    AwayFrom(Vec3),
}

/// A cloud with estimated normals and a per-point validity flag. Normals of
/// degenerate neighbourhoods (rank < 2) are still unit vectors but flagged
/// invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    pub valid: Vec<bool>,
    /// `l0 / (l0 + l1 + l2)` of each neighbourhood covariance: zero on planes,
    /// large on edges and corners.
    pub surface_variation: Vec<f64>,
}

fn covariance(points: &[Vec3], idx: &[usize]) -> Matrix3<f64> {
    let mean = idx.iter().map(|&i| points[i]).sum::<Vec3>() / idx.len() as f64;
    idx.iter().fold(Matrix3::zeros(), |acc, &i| {
        let d = points[i] - mean;
        acc + d * d.transpose()
    })
}

/// Eigenpairs sorted by ascending eigenvalue.
fn sorted_eigen(m: Matrix3<f64>) -> [(f64, Vec3); 3] {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec3)> = (0..3)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    [pairs[0], pairs[1], pairs[2]]
}

/// Normals from the smallest-eigenvalue eigenvector of each point's
/// `k`-nearest-neighbour covariance, flipped to face `viewpoint`.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Vec3) -> Result<NormalEstimate> {
    estimate_normals_oriented(cloud, k, NormalOrientation::Viewpoint(*viewpoint))
}

pub fn estimate_normals_oriented(
    cloud: &PointCloud,
    k: usize,
    orientation: NormalOrientation,
) -> Result<NormalEstimate> {
    if k == 0 || cloud.len() < k {
        return Err(Error::invalid(format!(
            "normal estimation needs at least k = {k} points, cloud has {}",
            cloud.len()
        )));
    }
    let tree = KdTree::new(&cloud.points);
    let mut normals = Vec::with_capacity(cloud.len());
    let mut valid = Vec::with_capacity(cloud.len());
    let mut surface_variation = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        let nbrs = tree.nearest(p, k);
        let [(l0, mut n), (l1, _), (l2, _)] = sorted_eigen(covariance(&cloud.points, &nbrs));
        valid.push(l2 > 0.0 && l1 > 1e-12 * l2);
        let total = l0.max(0.0) + l1 + l2;
        surface_variation.push(if total > 0.0 { l0.max(0.0) / total } else { 0.0 });
        let towards = match orientation {
            NormalOrientation::Viewpoint(v) => v - p,
            NormalOrientation::AwayFrom(c) => p - c,
        };
        if n.dot(&towards) < 0.0 {
            n = -n;
        }
        normals.push(n.normalize());
    }
    Ok(NormalEstimate {
        cloud: PointCloud {
            points: cloud.points.clone(),
            normals: Some(normals),
        },
        valid,
        surface_variation,
    })
}

/// True iff some cloud point lies inside a finger or the palm.
pub fn collides(pose: &GraspPose, cloud: &PointCloud, gripper: &GripperGeometry) -> bool {
    collides_subset(pose, &cloud.points, (0..cloud.len()).collect::<Vec<_>>().as_slice(), gripper)
}

fn collides_subset(pose: &GraspPose, points: &[Vec3], idx: &[usize], gripper: &GripperGeometry) -> bool {
    idx.iter()
        .any(|&i| gripper.classify(&pose.to_local(&points[i])) == GripperRegion::Body)
}

/// Closing-region contents of a grasp, in gripper-frame coordinates.
struct Enclosed {
    local: Vec<Vec3>,
    normals: Vec<Vec3>,
}

fn enclosed_subset(
    pose: &GraspPose,
    points: &[Vec3],
    normals: Option<&[Vec3]>,
    idx: &[usize],
    gripper: &GripperGeometry,
) -> Enclosed {
    let mut out = Enclosed {
        local: Vec::new(),
        normals: Vec::new(),
    };
    let rt = pose.rotation().transpose();
    for &i in idx {
        let local = pose.to_local(&points[i]);
        if gripper.classify(&local) == GripperRegion::Closing {
            out.local.push(gripper.closing_coords(&local));
            if let Some(ns) = normals {
                out.normals.push(rt.apply(&ns[i]));
            }
        }
    }
    out
}

fn antipodal(enc: &Enclosed, mu: f64, tolerance: f64) -> GraspQuality {
    if enc.local.is_empty() || enc.normals.len() != enc.local.len() {
        return GraspQuality::Bad;
    }
    let (y_min, y_max) = enc
        .local
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.y), hi.max(c.y)));
    let cos_cone = 1.0 / (1.0 + mu * mu).sqrt();
    // (outward, inward) friction-cone hits on the -y and +y fingers
    let mut left = (false, false);
    let mut right = (false, false);
    for (c, n) in enc.local.iter().zip(&enc.normals) {
        if c.y <= y_min + tolerance {
            left.0 |= n.y <= -cos_cone;
            left.1 |= n.y >= cos_cone;
        }
        if c.y >= y_max - tolerance {
            right.0 |= n.y >= cos_cone;
            right.1 |= n.y <= -cos_cone;
        }
    }
    if (left.0 && right.0) || (left.1 && right.1) {
        GraspQuality::Good
    } else {
        GraspQuality::Bad
    }
}

/// Antipodal test with the default 2 mm contact band.
pub fn label_antipodal(
    pose: &GraspPose,
    cloud: &PointCloud,
    gripper: &GripperGeometry,
    mu: f64,
) -> Result<GraspQuality> {
    label_antipodal_with_tolerance(pose, cloud, gripper, mu, DEFAULT_CONTACT_TOLERANCE)
}

/// Closes the fingers onto the enclosed points and checks that both
/// contact bands hold a point whose normal lies in the friction cone of
/// half-angle `atan(mu)` around the closing axis, with opposite senses on
/// the two fingers.
pub fn label_antipodal_with_tolerance(
    pose: &GraspPose,
    cloud: &PointCloud,
    gripper: &GripperGeometry,
    mu: f64,
    contact_tolerance: f64,
) -> Result<GraspQuality> {
    let normals = cloud.normals_or_err()?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let enc = enclosed_subset(pose, &cloud.points, Some(normals), &all, gripper);
    Ok(antipodal(&enc, mu, contact_tolerance))
}

/// Tangent along which neighbouring normals vary most; falls back to a
/// fixed construction on flat patches.
fn closing_direction(normal: &Vec3, neighbour_normals: &[Vec3]) -> Vec3 {
    let proj = Matrix3::identity() - normal * normal.transpose();
    let m = neighbour_normals.iter().fold(Matrix3::zeros(), |acc, n| {
        let t = proj * n;
        acc + t * t.transpose()
    });
    let [_, _, (lmax, v)] = sorted_eigen(m);
    let t = proj * v;
    if lmax > 1e-10 && t.norm() > 1e-6 {
        return t.normalize();
    }
    let helper = if normal.x.abs() <= normal.y.abs() && normal.x.abs() <= normal.z.abs() {
        Vec3::x()
    } else if normal.y.abs() <= normal.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    normal.cross(&helper).normalize()
}

struct Candidate {
    pose: GraspPose,
    quality: GraspQuality,
}

fn sample_internal(
    cloud: &PointCloud,
    valid: &[bool],
    gripper: &GripperGeometry,
    cfg: &SamplerConfig,
) -> Result<Vec<Candidate>> {
    use rand::seq::index::sample;

    gripper.validate()?;
    cfg.validate()?;
    let normals = cloud.normals_or_err()?;
    // untrusted normals never fall inside a friction cone
    let contact_normals: Vec<Vec3> = normals
        .iter()
        .zip(valid)
        .map(|(n, &ok)| if ok { *n } else { Vec3::zeros() })
        .collect();
    let seeds_pool: Vec<usize> = (0..cloud.len()).filter(|&i| valid[i]).collect();
    let count = cfg.num_seed_points.min(seeds_pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let seeds: Vec<usize> = sample(&mut rng, seeds_pool.len(), count)
        .into_iter()
        .map(|k| seeds_pool[k])
        .collect();

    let tree = KdTree::new(&cloud.points);
    // every gripper point is within this distance of the seed for all tried offsets
    let reach = gripper.bounding_radius()
        + gripper.finger_depth
        + 0.5 * gripper.max_width
        + gripper.closing_region_origin.norm();
    let k = cfg.neighbors_k.min(cloud.len());
    let half_w = 0.5 * gripper.max_width;
    let half_h = 0.5 * gripper.finger_height;

    let mut out = Vec::new();
    for &s in &seeds {
        let seed = cloud.points[s];
        let normal = normals[s];
        let nbr_normals: Vec<Vec3> = tree
            .nearest(&seed, k)
            .into_iter()
            .filter(|&i| valid[i])
            .map(|i| normals[i])
            .collect();
        let approach = -normal;
        let tangent = closing_direction(&normal, &nbr_normals);
        let binormal = approach.cross(&tangent);
        let nearby = tree.within_radius(&seed, reach);

        for r in 0..cfg.roll_steps {
            let phi = std::f64::consts::PI * r as f64 / cfg.roll_steps as f64;
            let (sp, cp) = phi.sin_cos();
            let closing = tangent * cp + binormal * sp;
            let third = approach.cross(&closing);
            let rotation =
                Rotation::from_matrix(Matrix3::from_columns(&[approach, closing, third]))?;
            for d in 0..cfg.depth_steps {
                let depth = gripper.finger_depth * (d + 1) as f64 / (cfg.depth_steps + 1) as f64;
                let seed_local = gripper.closing_region_origin + Vec3::new(depth, 0.0, 0.0);
                let trial = GraspPose::from_rotation(rotation, seed - rotation.apply(&seed_local))?;

                // centre the opening on what lies between the fingers
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &i in &nearby {
                    let c = gripper.closing_coords(&trial.to_local(&cloud.points[i]));
                    if (0.0..=gripper.finger_depth).contains(&c.x)
                        && c.y.abs() <= half_w
                        && c.z.abs() <= half_h
                    {
                        lo = lo.min(c.y);
                        hi = hi.max(c.y);
                    }
                }
                if lo > hi {
                    continue;
                }
                let shift = 0.5 * (lo + hi);
                let pose = GraspPose::from_rotation(
                    rotation,
                    trial.translation + rotation.apply(&Vec3::new(0.0, shift, 0.0)),
                )?;

                if collides_subset(&pose, &cloud.points, &nearby, gripper) {
                    continue;
                }
                let enc = enclosed_subset(&pose, &cloud.points, Some(&contact_normals), &nearby, gripper);
                if enc.local.len() < cfg.min_contact_points {
                    continue;
                }
                out.push(Candidate {
                    pose,
                    quality: antipodal(&enc, cfg.friction_mu, cfg.contact_tolerance),
                });
            }
        }
    }
    Ok(out)
}

/// Collision-free candidates holding at least `min_contact_points` points,
/// in seed order. Every normal of `cloud` is treated as valid.
pub fn sample_candidates(
    cloud: &PointCloud,
    gripper: &GripperGeometry,
    cfg: &SamplerConfig,
) -> Result<Vec<GraspPose>> {
    let valid = vec![true; cloud.len()];
    Ok(sample_internal(cloud, &valid, gripper, cfg)?
        .into_iter()
        .map(|c| c.pose)
        .collect())
}

/// Normal estimation, candidate sampling and antipodal labelling in one
/// pass. Points whose normals are degenerate or sit on sharp features
/// (surface variation above the configured limit) neither seed grasps nor
/// count as contacts. Clouds smaller than the neighbourhood size use all
/// their points as the neighbourhood; clouds with fewer than three points
/// yield an empty set.
pub fn generate_dataset(
    cloud: &PointCloud,
    gripper: &GripperGeometry,
    cfg: &SamplerConfig,
) -> Result<GraspLabelSet> {
    cfg.validate()?;
    gripper.validate()?;
    let source = format!("sampler seed {}", cfg.rng_seed);
    if cloud.len() < 3 {
        return GraspLabelSet::new(Vec::new(), Vec::new(), source);
    }
    let orientation = match cfg.viewpoint {
        Some(v) => NormalOrientation::Viewpoint(v),
        None => NormalOrientation::AwayFrom(cloud.centroid()),
    };
    let est = estimate_normals_oriented(cloud, cfg.neighbors_k.min(cloud.len()), orientation)?;
    let trusted: Vec<bool> = est
        .valid
        .iter()
        .zip(&est.surface_variation)
        .map(|(&v, &sv)| v && sv <= cfg.max_surface_variation)
        .collect();
    let candidates = sample_internal(&est.cloud, &trusted, gripper, cfg)?;
    let (grasps, labels) = candidates.into_iter().map(|c| (c.pose, c.quality)).unzip();
    GraspLabelSet::new(grasps, labels, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_to_rotmat, EulerAngles};
    use rand::Rng;
    use std::f64::consts::PI;

    fn plate(centre_y: f64, normal: Vec3, n: usize) -> (Vec<Vec3>, Vec<Vec3>) {
        // a small square patch in the plane y = centre_y (before tilting normals)
        let mut pts = Vec::new();
        let mut ns = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let x = 0.01 + 0.04 * a as f64 / (n - 1) as f64;
                let z = -0.008 + 0.016 * b as f64 / (n - 1) as f64;
                pts.push(Vec3::new(x, centre_y, z));
                ns.push(normal);
            }
        }
        (pts, ns)
    }

    fn identity_pose() -> GraspPose {
        GraspPose::from_euler(EulerAngles::new(0.0, 0.0, 0.0), Vec3::zeros()).unwrap()
    }

    #[test]
    fn parallel_plates_are_antipodal() {
        let (mut p, mut n) = plate(-0.02, -Vec3::y(), 6);
        let (p2, n2) = plate(0.02, Vec3::y(), 6);
        p.extend(p2);
        n.extend(n2);
        let cloud = PointCloud::with_normals(p, n).unwrap();
        let g = GripperGeometry::default();
        assert_eq!(label_antipodal(&identity_pose(), &cloud, &g, 0.3).unwrap(), GraspQuality::Good);
    }

    #[test]
    fn inclined_plates_are_not_antipodal() {
        let s = 0.5f64.sqrt();
        let (mut p, mut n) = plate(-0.02, Vec3::new(s, -s, 0.0), 6);
        let (p2, n2) = plate(0.02, Vec3::new(s, s, 0.0), 6);
        p.extend(p2);
        n.extend(n2);
        let cloud = PointCloud::with_normals(p, n).unwrap();
        let g = GripperGeometry::default();
        assert!(45f64.to_radians() > 0.3f64.atan());
        assert_eq!(label_antipodal(&identity_pose(), &cloud, &g, 0.3).unwrap(), GraspQuality::Bad);
    }

    #[test]
    fn one_sided_contact_is_not_antipodal() {
        let (p, n) = plate(0.02, Vec3::y(), 6);
        let cloud = PointCloud::with_normals(p, n).unwrap();
        let g = GripperGeometry::default();
        assert_eq!(label_antipodal(&identity_pose(), &cloud, &g, 0.3).unwrap(), GraspQuality::Bad);
        let empty = PointCloud::with_normals(vec![], vec![]).unwrap();
        assert_eq!(label_antipodal(&identity_pose(), &empty, &g, 0.3).unwrap(), GraspQuality::Bad);
        assert!(label_antipodal(&identity_pose(), &PointCloud::new(vec![]).unwrap(), &g, 0.3).is_err());
    }

    #[test]
    fn collision_examples() {
        let g = GripperGeometry::default();
        let pose = identity_pose();
        assert!(!collides(&pose, &PointCloud::default(), &g));
        let finger = Vec3::new(0.03, 0.5 * g.max_width + 0.5 * g.finger_thickness, 0.0);
        assert!(collides(&pose, &PointCloud::new(vec![finger]).unwrap(), &g));
        let centre = Vec3::new(0.03, 0.0, 0.0);
        assert!(!collides(&pose, &PointCloud::new(vec![centre]).unwrap(), &g));
    }

    #[test]
    fn plane_normals_face_viewpoint() {
        let mut pts = Vec::new();
        for a in 0..20 {
            for b in 0..20 {
                pts.push(Vec3::new(a as f64 * 0.01, b as f64 * 0.013, 0.0));
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let est = estimate_normals(&cloud, 10, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(est.valid.iter().all(|v| *v));
        for n in est.cloud.normals.unwrap() {
            assert!((n - Vec3::z()).norm() < 1e-6);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..3000)
            .map(|_| {
                let v = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                v.normalize() * 0.1
            })
            .collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let est = estimate_normals_oriented(&cloud, 30, NormalOrientation::AwayFrom(Vec3::zeros())).unwrap();
        let viewpoint = Vec3::new(0.0, 0.0, 5.0);
        let est_vp = estimate_normals(&cloud, 30, &viewpoint).unwrap();
        let normals = est.cloud.normals.unwrap();
        let normals_vp = est_vp.cloud.normals.unwrap();
        for (i, p) in pts.iter().enumerate() {
            let radial = p.normalize();
            let angle = normals[i].dot(&radial).clamp(-1.0, 1.0).acos();
            assert!(angle < 5f64.to_radians(), "{}", angle.to_degrees());
            // towards the viewpoint: the same line, flipped on the far side
            assert!(normals_vp[i].dot(&(viewpoint - p)) >= 0.0);
            assert!(normals_vp[i].dot(&radial).abs().acos() < 5f64.to_radians());
        }
    }

    #[test]
    fn too_few_points_for_k() {
        let cloud = PointCloud::new(vec![Vec3::zeros(); 5]).unwrap();
        assert!(estimate_normals(&cloud, 6, &Vec3::z()).is_err());
    }

    #[test]
    fn collinear_neighbourhood_is_flagged() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let est = estimate_normals(&PointCloud::new(pts).unwrap(), 5, &Vec3::z()).unwrap();
        assert!(est.valid.iter().all(|v| !*v));
    }

    #[test]
    fn isolated_seed_contributes_nothing() {
        let cloud = PointCloud::with_normals(vec![Vec3::zeros()], vec![Vec3::z()]).unwrap();
        let cfg = SamplerConfig {
            neighbors_k: 1,
            ..Default::default()
        };
        assert!(sample_candidates(&cloud, &GripperGeometry::default(), &cfg).unwrap().is_empty());
    }

    #[test]
    fn sampling_needs_normals() {
        let cloud = PointCloud::new(vec![Vec3::zeros(); 4]).unwrap();
        assert!(sample_candidates(&cloud, &GripperGeometry::default(), &SamplerConfig::default()).is_err());
    }

    #[test]
    fn tiny_clouds_give_empty_sets() {
        let g = GripperGeometry::default();
        for n in 0..4 {
            let pts: Vec<Vec3> = (0..n).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.0)).collect();
            let set = generate_dataset(&PointCloud::new(pts).unwrap(), &g, &SamplerConfig::default()).unwrap();
            assert!(set.is_empty() || set.count(GraspQuality::Good) == 0);
        }
    }

    #[test]
    fn closing_direction_follows_cylinder_curvature() {
        // a cylinder along z: normals vary in the x-y plane, so the closing
        // axis at (r, 0, 0) is +-y
        let normals: Vec<Vec3> = (-5..=5)
            .map(|k| {
                let a = 0.05 * k as f64;
                Vec3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        let t = closing_direction(&Vec3::x(), &normals);
        assert!((t.dot(&Vec3::y()).abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert!(SamplerConfig { roll_steps: 0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { friction_mu: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn label_set_length_mismatch() {
        let pose = identity_pose();
        assert!(GraspLabelSet::new(vec![pose], vec![], "x").is_err());
        let r = euler_to_rotmat(EulerAngles::new(0.0, PI / 4.0, 0.0)).unwrap();
        let p2 = GraspPose::from_rotation(r, Vec3::zeros()).unwrap();
        let set = GraspLabelSet::new(vec![pose, p2], vec![GraspQuality::Good, GraspQuality::Bad], "x").unwrap();
        assert_eq!(set.good().count(), 1);
        assert_eq!("good".parse::<GraspQuality>().unwrap(), GraspQuality::Good);
        assert!("fine".parse::<GraspQuality>().is_err());
    }
}
