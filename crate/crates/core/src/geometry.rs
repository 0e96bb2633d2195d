//! Rigid poses, observer frames and world/observer coordinate transforms.
//!
//! Camera convention: +x right, +y down, +z forward into the scene. Every
//! observer frame (camera or agent) uses the same axes, so an observer's
//! forward is `(0,0,1)`, left is `(-1,0,0)` and up is `(0,-1,0)` in its own
//! coordinates.

use nalgebra::{Matrix3, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance for orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Half-angle (degrees) of the cone around the reference up axis inside
/// which an agent frame cannot be built from it.
pub const GIMBAL_CONE_DEG: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("rotation determinant {det} is not +1")]
    NotProperRotation { det: f64 },
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
    #[error("orientation out of range: {0}")]
    OrientationRange(String),
    #[error("agent forward is within {GIMBAL_CONE_DEG} deg of the reference up axis")]
    GimbalDegenerate,
}

/// A proper 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates orthonormality and `det = +1` within [`ROTATION_TOLERANCE`].
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        let deviation = (m.transpose() * m - Matrix3::identity()).amax();
        if deviation > ROTATION_TOLERANCE {
            return Err(GeometryError::NotOrthonormal { deviation });
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotProperRotation { det });
        }
        Ok(Rotation(m))
    }

    /// Rotation from row-major nested arrays, as stored in annotation files.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Right-handed rotation of `angle_deg` about `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle_deg: f64) -> Self {
        let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle_deg.to_radians());
        Rotation(*q.to_rotation_matrix().matrix())
    }

    pub fn rot_x(angle_deg: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle_deg)
    }

    pub fn rot_y(angle_deg: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle_deg)
    }

    pub fn rot_z(angle_deg: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle_deg)
    }

    /// Builds a rotation from its three column axes without validation.
    /// Callers guarantee a right-handed orthonormal triple.
    pub(crate) fn from_columns_unchecked(x: Vec3, y: Vec3, z: Vec3) -> Self {
        Rotation(Matrix3::from_columns(&[x, y, z]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn then(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Frame-to-world rigid transform: `p_world = R p_frame + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    pub fn identity() -> Self {
        Pose::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose::new(Rotation::identity(), t)
    }

    /// Maps a point from this pose's frame into world coordinates.
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    /// Maximum absolute element difference to another pose.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        let r = (self.rotation.matrix() - other.rotation.matrix()).amax();
        let t = (self.translation - other.translation).amax();
        r.max(t)
    }
}

/// `compose(a, b)` maps b-frame coordinates through `b`, then through `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation.then(&b.rotation),
        translation: a.rotation.apply(&b.translation) + a.translation,
    }
}

pub fn invert(p: &Pose) -> Pose {
    let rt = p.rotation.transpose();
    Pose {
        rotation: rt,
        translation: -rt.apply(&p.translation),
    }
}

/// Expresses a world point in the observer's frame: `Rᵀ (p − t)`.
pub fn world_to_observer(p_world: &Vec3, observer: &Pose) -> Vec3 {
    observer.rotation.transpose().apply(&(p_world - observer.translation))
}

/// Expresses a world direction (free vector) in the observer's frame.
pub fn direction_to_observer(d_world: &Vec3, observer: &Pose) -> Vec3 {
    observer.rotation.transpose().apply(d_world)
}

/// Agent facing angles relative to the camera, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationTriple {
    pub azimuth: f64,
    pub elevation: f64,
    pub roll: f64,
}

impl OrientationTriple {
    /// Checks azimuth ∈ [0, 360), elevation ∈ [−90, 90], roll ∈ (−180, 180].
    pub fn new(azimuth: f64, elevation: f64, roll: f64) -> Result<Self, GeometryError> {
        let o = OrientationTriple { azimuth, elevation, roll };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.azimuth.is_finite() && self.elevation.is_finite() && self.roll.is_finite()) {
            return Err(GeometryError::NonFinite("orientation"));
        }
        if !(0.0..360.0).contains(&self.azimuth) {
            return Err(GeometryError::OrientationRange(format!(
                "azimuth {} not in [0, 360)",
                self.azimuth
            )));
        }
        if !(-90.0..=90.0).contains(&self.elevation) {
            return Err(GeometryError::OrientationRange(format!(
                "elevation {} not in [-90, 90]",
                self.elevation
            )));
        }
        if !(self.roll > -180.0 && self.roll <= 180.0) {
            return Err(GeometryError::OrientationRange(format!(
                "roll {} not in (-180, 180]",
                self.roll
            )));
        }
        Ok(())
    }

    /// Agent forward in camera coordinates.
    ///
    /// Azimuth 0 faces the camera, azimuth 90 faces camera-right, positive
    /// elevation tilts toward camera-up.
    pub fn forward_in_camera(&self) -> Vec3 {
        let (sa, ca) = self.azimuth.to_radians().sin_cos();
        let (se, ce) = self.elevation.to_radians().sin_cos();
        Vec3::new(sa * ce, -se, -ca * ce)
    }
}

/// How agent frames are completed when the forward axis is (nearly)
/// parallel to camera up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GimbalPolicy {
    /// Surface [`GeometryError::GimbalDegenerate`].
    Fail,
    /// Use camera forward `(0,0,1)` as the reference vector instead.
    CameraForwardFallback,
}

impl Default for GimbalPolicy {
    fn default() -> Self {
        GimbalPolicy::CameraForwardFallback
    }
}

const CAMERA_UP: Vec3 = Vec3::new(0.0, -1.0, 0.0);
const CAMERA_FORWARD: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Agent axes (forward, left, up) in camera coordinates.
fn agent_axes_in_camera(o: &OrientationTriple, policy: GimbalPolicy) -> Result<[Vec3; 3], GeometryError> {
    let f = o.forward_in_camera();
    let reference = if f.dot(&CAMERA_UP).abs() > GIMBAL_CONE_DEG.to_radians().cos() {
        match policy {
            GimbalPolicy::Fail => return Err(GeometryError::GimbalDegenerate),
            GimbalPolicy::CameraForwardFallback => CAMERA_FORWARD,
        }
    } else {
        CAMERA_UP
    };
    let mut left = reference.cross(&f).normalize();
    let mut up = f.cross(&left);
    if o.roll != 0.0 {
        let roll = Rotation::from_axis_angle(&f, o.roll);
        left = roll.apply(&left);
        up = roll.apply(&up);
    }
    Ok([f, left, up])
}

/// Agent pose in world coordinates from its camera-relative facing angles.
///
/// The returned frame uses the camera axis convention (x = right = −left,
/// y = down = −up, z = forward) and is rotated into world by the camera pose.
/// Fails with [`GeometryError::GimbalDegenerate`] when forward lies within
/// [`GIMBAL_CONE_DEG`] of camera up; see [`frame_from_orientation_with`].
pub fn frame_from_orientation(
    o: &OrientationTriple,
    camera: &Pose,
    position_world: &Vec3,
) -> Result<Pose, GeometryError> {
    frame_from_orientation_with(o, camera, position_world, GimbalPolicy::Fail)
}

pub fn frame_from_orientation_with(
    o: &OrientationTriple,
    camera: &Pose,
    position_world: &Vec3,
    policy: GimbalPolicy,
) -> Result<Pose, GeometryError> {
    let [f, l, u] = agent_axes_in_camera(o, policy)?;
    let in_camera = Rotation::from_columns_unchecked(-l, -u, f);
    Ok(Pose {
        rotation: camera.rotation.then(&in_camera),
        translation: *position_world,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pose_close(a: &Pose, b: &Pose, tol: f64) -> bool {
        a.max_abs_diff(b) <= tol
    }

    fn sample_pose() -> Pose {
        let r = Rotation::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 37.0);
        Pose::new(r, Vec3::new(0.3, -1.2, 4.0))
    }

    #[test]
    fn compose_identity_is_noop() {
        let p = sample_pose();
        assert!(pose_close(&compose(&Pose::identity(), &p), &p, 1e-12));
        assert!(pose_close(&compose(&p, &Pose::identity()), &p, 1e-12));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = sample_pose();
        assert!(pose_close(&compose(&p, &invert(&p)), &Pose::identity(), 1e-9));
        assert!(pose_close(&compose(&invert(&p), &p), &Pose::identity(), 1e-9));
    }

    #[test]
    fn two_quarter_turns_about_z() {
        let q = Pose::new(Rotation::rot_z(90.0), Vec3::zeros());
        let half = compose(&q, &q);
        // rotZ(180) = diag(-1, -1, 1)
        let expected = Rotation::from_rows([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(pose_close(&half, &Pose::new(expected, Vec3::zeros()), 1e-12));
    }

    #[test]
    fn invert_cases() {
        assert!(pose_close(&invert(&Pose::identity()), &Pose::identity(), 0.0));
        let t = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(invert(&t).translation, Vec3::new(-1.0, 0.0, 0.0));
        let p = sample_pose();
        assert!(pose_close(&invert(&invert(&p)), &p, 1e-9));
    }

    #[test]
    fn world_to_observer_cases() {
        let obs = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(world_to_observer(&Vec3::new(1.0, 2.0, 3.0), &obs), Vec3::new(0.0, 2.0, 3.0));
        let p = sample_pose();
        assert_relative_eq!(world_to_observer(&p.translation, &p), Vec3::zeros(), epsilon = 1e-12);

        // rotZ(90) = [[0,-1,0],[1,0,0],[0,0,1]]; its transpose applied to (0,0,2) leaves it fixed,
        // so use an off-axis point too: Rᵀ (1,0,2) = (0,-1,2).
        let rz = Pose::new(Rotation::rot_z(90.0), Vec3::zeros());
        assert_relative_eq!(world_to_observer(&Vec3::new(0.0, 0.0, 2.0), &rz), Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
        assert_relative_eq!(world_to_observer(&Vec3::new(1.0, 0.0, 2.0), &rz), Vec3::new(0.0, -1.0, 2.0), epsilon = 1e-12);
        // round trip
        let q = Vec3::new(-2.0, 0.5, 7.0);
        assert_relative_eq!(p.transform_point(&world_to_observer(&q, &p)), q, epsilon = 1e-12);
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]).is_err());
        assert!(Rotation::from_rows([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(Rotation::from_rows([[f64::NAN, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn orientation_ranges() {
        assert!(OrientationTriple::new(0.0, 0.0, 0.0).is_ok());
        assert!(OrientationTriple::new(360.0, 0.0, 0.0).is_err());
        assert!(OrientationTriple::new(10.0, 90.5, 0.0).is_err());
        assert!(OrientationTriple::new(10.0, 0.0, -180.0).is_err());
        assert!(OrientationTriple::new(10.0, 0.0, 180.0).is_ok());
    }

    fn axes(p: &Pose) -> (Vec3, Vec3, Vec3) {
        let m = p.rotation.matrix();
        let forward = m.column(2).into_owned();
        let left = -m.column(0).into_owned();
        let up = -m.column(1).into_owned();
        (forward, left, up)
    }

    #[test]
    fn facing_camera_convention() {
        let o = OrientationTriple::new(0.0, 0.0, 0.0).unwrap();
        let p = frame_from_orientation(&o, &Pose::identity(), &Vec3::zeros()).unwrap();
        let (f, l, u) = axes(&p);
        assert_relative_eq!(f, Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
        assert_relative_eq!(l, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(u, Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-12);

        let back = OrientationTriple::new(180.0, 0.0, 0.0).unwrap();
        let (f, _, _) = axes(&frame_from_orientation(&back, &Pose::identity(), &Vec3::zeros()).unwrap());
        assert_relative_eq!(f, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);

        let side = OrientationTriple::new(90.0, 0.0, 0.0).unwrap();
        let (f, _, _) = axes(&frame_from_orientation(&side, &Pose::identity(), &Vec3::zeros()).unwrap());
        assert_relative_eq!(f, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn frame_is_rotated_into_world_by_camera() {
        let cam = Pose::new(Rotation::rot_y(90.0), Vec3::new(1.0, 2.0, 3.0));
        let o = OrientationTriple::new(0.0, 0.0, 0.0).unwrap();
        let pos = Vec3::new(5.0, 0.0, 0.0);
        let p = frame_from_orientation(&o, &cam, &pos).unwrap();
        assert_eq!(p.translation, pos);
        let (f, _, _) = axes(&p);
        assert_relative_eq!(f, cam.rotation.apply(&Vec3::new(0.0, 0.0, -1.0)), epsilon = 1e-12);
    }

    #[test]
    fn gimbal_degenerate_and_fallback() {
        let straight_up = OrientationTriple::new(30.0, 90.0, 0.0).unwrap();
        assert_eq!(
            frame_from_orientation(&straight_up, &Pose::identity(), &Vec3::zeros()),
            Err(GeometryError::GimbalDegenerate)
        );
        let near = OrientationTriple::new(30.0, 89.6, 0.0).unwrap();
        assert!(frame_from_orientation(&near, &Pose::identity(), &Vec3::zeros()).is_err());
        let ok = OrientationTriple::new(30.0, 89.4, 0.0).unwrap();
        assert!(frame_from_orientation(&ok, &Pose::identity(), &Vec3::zeros()).is_ok());

        let p = frame_from_orientation_with(
            &straight_up,
            &Pose::identity(),
            &Vec3::zeros(),
            GimbalPolicy::CameraForwardFallback,
        )
        .unwrap();
        assert!(Rotation::new(*p.rotation.matrix()).is_ok());
        let (f, _, _) = axes(&p);
        assert_relative_eq!(f, Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn roll_keeps_forward() {
        let o = OrientationTriple::new(45.0, 20.0, 30.0).unwrap();
        let rolled = frame_from_orientation(&o, &Pose::identity(), &Vec3::zeros()).unwrap();
        let flat = frame_from_orientation(
            &OrientationTriple::new(45.0, 20.0, 0.0).unwrap(),
            &Pose::identity(),
            &Vec3::zeros(),
        )
        .unwrap();
        let (f1, l1, _) = axes(&rolled);
        let (f0, l0, _) = axes(&flat);
        assert_relative_eq!(f1, f0, epsilon = 1e-12);
        assert_relative_eq!(l1.dot(&l0), 30f64.to_radians().cos(), epsilon = 1e-12);
    }
}
