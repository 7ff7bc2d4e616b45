//! Rotations, Euler angles and the parallel-jaw gripper model.
//!
//! Euler triples use the extrinsic X-Y-Z convention throughout the crate:
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)`. The gripper frame has its x-axis
//! along the approach direction (which is also the gripper's two-fold
//! symmetry axis), y across the finger opening and z along the finger height.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;
const GIMBAL_TOL: f64 = 1e-9;

/// Roll, pitch and yaw in radians (rotations about x, y and z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub const fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.roll.is_finite() && self.pitch.is_finite() && self.yaw.is_finite()
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor();
    if w >= PI {
        w -= 2.0 * PI;
    }
    if w < -PI {
        w += 2.0 * PI;
    }
    w
}

/// A proper rotation matrix (orthonormal, determinant one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and handedness within 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("rotation matrix has non-finite entries"));
        }
        let ortho = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if ortho > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "matrix is not a rotation (|R^T R - I| = {ortho:.3e}, det = {det})"
            )));
        }
        Ok(Self(m))
    }

    /// Rotation from a row-major 3x3 array.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rodrigues rotation; `axis` need not be normalized but must be non-zero.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n.is_nan() || n <= 0.0 || !angle.is_finite() {
            return Err(Error::invalid("axis-angle needs a non-zero axis and finite angle"));
        }
        let k = axis / n;
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        let (s, c) = angle.sin_cos();
        Ok(Self(Matrix3::identity() + kx * s + kx * kx * (1.0 - c)))
    }

    /// The half-turn about the gripper's x-axis that maps the gripper onto itself.
    pub fn roll_flip() -> Self {
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, rhs: &Rotation) -> Self {
        Self(self.0 * rhs.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Column `k` of the matrix, i.e. the world direction of body axis `k`.
    pub fn axis(&self, k: usize) -> Vec3 {
        self.0.column(k).into_owned()
    }
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn euler_to_rotmat(e: EulerAngles) -> Result<Rotation> {
    if !e.is_finite() {
        return Err(Error::invalid(format!("non-finite Euler angles {e:?}")));
    }
    let (sx, cx) = e.roll.sin_cos();
    let (sy, cy) = e.pitch.sin_cos();
    let (sz, cz) = e.yaw.sin_cos();
    Ok(Rotation(Matrix3::new(
        cz * cy,
        cz * sy * sx - sz * cx,
        cz * sy * cx + sz * sx,
        sz * cy,
        sz * sy * sx + cz * cx,
        sz * sy * cx - cz * sx,
        -sy,
        cy * sx,
        cy * cx,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    /// Set when `|cos pitch| < 1e-9`; roll is then forced to zero and the
    /// whole in-plane rotation is carried by yaw.
    pub gimbal_locked: bool,
}

/// Inverse of [`euler_to_rotmat`]. Roll and yaw come back in `[-pi, pi)`,
/// pitch in `[-pi/2, pi/2]`.
pub fn rotmat_to_euler(r: &Rotation) -> EulerDecomposition {
    let m = &r.0;
    let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
    let pitch = (-m[(2, 0)]).atan2(cos_pitch).clamp(-FRAC_PI_2, FRAC_PI_2);
    if cos_pitch < GIMBAL_TOL {
        let yaw = wrap_angle((-m[(0, 1)]).atan2(m[(1, 1)]));
        return EulerDecomposition {
            angles: EulerAngles::new(0.0, pitch, yaw),
            gimbal_locked: true,
        };
    }
    EulerDecomposition {
        angles: EulerAngles::new(
            wrap_angle(m[(2, 1)].atan2(m[(2, 2)])),
            pitch,
            wrap_angle(m[(1, 0)].atan2(m[(0, 0)])),
        ),
        gimbal_locked: false,
    }
}

/// `arcsin(|I - R1 R2^T|_F / (2 sqrt 2))`, in `[0, pi/2]`. For a relative
/// rotation of angle `theta` this is `theta / 2`.
pub fn rotation_distance(a: &Rotation, b: &Rotation) -> f64 {
    let diff = Matrix3::identity() - a.0 * b.0.transpose();
    let arg = diff.norm() / (2.0 * std::f64::consts::SQRT_2);
    arg.clamp(0.0, 1.0).asin()
}

/// Rotation distance modulo the gripper's two-fold symmetry about its x-axis.
pub fn symmetric_rotation_distance(a: &Rotation, b: &Rotation) -> f64 {
    let flipped = b.compose(&Rotation::roll_flip());
    rotation_distance(a, b).min(rotation_distance(a, &flipped))
}

/// Maps roll into `[-pi/2, pi/2)` by adding or subtracting half-turns. The
/// result describes the same physical gripper pose.
pub fn canonicalize_roll(e: EulerAngles) -> EulerAngles {
    let mut roll = e.roll;
    while roll >= FRAC_PI_2 {
        roll -= PI;
    }
    while roll < -FRAC_PI_2 {
        roll += PI;
    }
    EulerAngles { roll, ..e }
}

/// Where a gripper-frame point falls relative to the gripper body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GripperRegion {
    /// Between the fingers (closed box).
    Closing,
    /// Inside a finger or the palm.
    Body,
    Outside,
}

/// Parallel-jaw gripper dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperGeometry {
    pub max_width: f64,
    pub finger_depth: f64,
    pub finger_height: f64,
    pub finger_thickness: f64,
    /// Centre of the closing region's back face, in the gripper frame. It must
    /// lie on the roll axis (y = z = 0) for the gripper to stay symmetric.
    pub closing_region_origin: Vec3,
}

impl Default for GripperGeometry {
    fn default() -> Self {
        Self {
            max_width: 0.0986,
            finger_depth: 0.06,
            finger_height: 0.02,
            finger_thickness: 0.01,
            closing_region_origin: Vec3::zeros(),
        }
    }
}

impl GripperGeometry {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("max_width", self.max_width),
            ("finger_depth", self.finger_depth),
            ("finger_height", self.finger_height),
            ("finger_thickness", self.finger_thickness),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("gripper {name} must be positive, got {v}")));
            }
        }
        let o = &self.closing_region_origin;
        if !o.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("gripper closing-region origin is not finite"));
        }
        if o.y != 0.0 || o.z != 0.0 {
            return Err(Error::invalid(
                "gripper closing region must be centred on the roll axis (origin y = z = 0)",
            ));
        }
        Ok(())
    }

    /// Coordinates relative to the closing region's back-face centre.
    pub fn closing_coords(&self, local: &Vec3) -> Vec3 {
        local - self.closing_region_origin
    }

    pub fn classify(&self, local: &Vec3) -> GripperRegion {
        let c = self.closing_coords(local);
        let half_w = 0.5 * self.max_width;
        let half_h = 0.5 * self.finger_height;
        let outer = half_w + self.finger_thickness;
        if c.z.abs() > half_h {
            return GripperRegion::Outside;
        }
        let ay = c.y.abs();
        if (0.0..=self.finger_depth).contains(&c.x) {
            if ay <= half_w {
                GripperRegion::Closing
            } else if ay <= outer {
                GripperRegion::Body
            } else {
                GripperRegion::Outside
            }
        } else if c.x < 0.0 && c.x >= -self.finger_thickness && ay <= outer {
            GripperRegion::Body
        } else {
            GripperRegion::Outside
        }
    }

    /// Radius of a sphere around the closing-region origin containing the
    /// whole gripper body.
    pub fn bounding_radius(&self) -> f64 {
        let dx = self.finger_depth.max(self.finger_thickness);
        let dy = 0.5 * self.max_width + self.finger_thickness;
        let dz = 0.5 * self.finger_height;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// A 6-DoF grasp. The Euler triple and the matrix describe the same rotation;
/// the triple is kept so that file round-trips are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose {
    euler: EulerAngles,
    rotation: Rotation,
    /// Gripper-frame origin in world coordinates (meters).
    pub translation: Vec3,
    pub confidence: f64,
}

impl GraspPose {
    pub fn from_euler(euler: EulerAngles, translation: Vec3) -> Result<Self> {
        let rotation = euler_to_rotmat(euler)?;
        Self::check_translation(&translation)?;
        Ok(Self {
            euler,
            rotation,
            translation,
            confidence: 1.0,
        })
    }

    pub fn from_rotation(rotation: Rotation, translation: Vec3) -> Result<Self> {
        Self::check_translation(&translation)?;
        Ok(Self {
            euler: rotmat_to_euler(&rotation).angles,
            rotation,
            translation,
            confidence: 1.0,
        })
    }

    fn check_translation(t: &Vec3) -> Result<()> {
        if t.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("grasp translation is not finite"))
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn euler(&self) -> EulerAngles {
        self.euler
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    /// Same physical grasp with roll in `[-pi/2, pi/2)` and yaw in `[-pi, pi)`.
    pub fn canonicalized(&self) -> Self {
        let e = canonicalize_roll(self.euler);
        let e = EulerAngles { yaw: wrap_angle(e.yaw), ..e };
        if e == self.euler {
            return *self;
        }
        Self {
            euler: e,
            rotation: euler_to_rotmat(e).expect("finite angles stay finite"),
            ..*self
        }
    }

    /// World point expressed in the gripper frame.
    pub fn to_local(&self, point: &Vec3) -> Vec3 {
        self.rotation.0.tr_mul(&(point - self.translation))
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation.0 * local + self.translation
    }

    /// The pose after a rigid motion `x -> rot * x + trans` of the world.
    pub fn transformed(&self, rot: &Rotation, trans: &Vec3) -> Self {
        let rotation = rot.compose(&self.rotation);
        Self {
            euler: rotmat_to_euler(&rotation).angles,
            rotation,
            translation: rot.apply(&self.translation) + trans,
            confidence: self.confidence,
        }
    }
}

/// True iff `point` lies in the (closed) closing region of the gripper at `pose`.
pub fn enclosed(point: &Vec3, pose: &GraspPose, gripper: &GripperGeometry) -> bool {
    gripper.classify(&pose.to_local(point)) == GripperRegion::Closing
}
