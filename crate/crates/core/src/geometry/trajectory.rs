use nalgebra::{Matrix3, Vector3};

use super::GeometryError;
use crate::scene::Camera;

/// Parameters of the predefined camera sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    /// Number of trajectory cameras N (including the initial pose).
    pub num_cameras: usize,
    /// Yaw step between consecutive sweep positions, radians.
    pub rotation_step: f64,
    /// Rotation pivot; `None` rotates in place about the camera center.
    pub pivot: Option<Vector3<f64>>,
    /// Total number of support views M (two per base camera).
    pub support_count: usize,
    /// Angular displacement of support views on their depth spheres, degrees.
    pub support_shift_deg: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            num_cameras: 7,
            rotation_step: 0.63,
            pivot: None,
            support_count: 14,
            support_shift_deg: 5.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.num_cameras < 1 {
            return Err(GeometryError::InvalidArgument("num_cameras must be >= 1".into()));
        }
        if !(self.rotation_step > 0.0 && self.rotation_step < std::f64::consts::PI) {
            return Err(GeometryError::InvalidArgument(format!(
                "rotation_step {} must lie in (0, pi)",
                self.rotation_step
            )));
        }
        Ok(())
    }
}

/// Rodrigues rotation about a unit axis, built with libm trig so camera
/// poses are identical on every platform.
pub(crate) fn axis_angle_matrix(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let a = axis.normalize();
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    let t = 1.0 - c;
    Matrix3::new(
        t * a.x * a.x + c,
        t * a.x * a.y - s * a.z,
        t * a.x * a.z + s * a.y,
        t * a.x * a.y + s * a.z,
        t * a.y * a.y + c,
        t * a.y * a.z - s * a.x,
        t * a.x * a.z - s * a.y,
        t * a.y * a.z + s * a.x,
        t * a.z * a.z + c,
    )
}

/// Rotates a camera pose by `angle` about `axis` through `pivot`.
fn rotate_pose(camera: &Camera, axis: Vector3<f64>, angle: f64, pivot: Vector3<f64>) -> Result<Camera, GeometryError> {
    let a = axis_angle_matrix(axis, angle);
    let center = pivot + a * (camera.center() - pivot);
    let rotation = camera.rotation() * a.transpose();
    let translation = -(rotation * center);
    Ok(camera.with_pose(rotation, translation)?)
}

/// Generates the camera sweep: yaw offsets 0, +d, -d, +2d, -2d, ...
/// truncated to N entries. Positive yaw turns the camera toward its right
/// axis (rotation about the camera's down axis); intrinsics are shared.
pub fn build_trajectory(
    initial_camera: &Camera,
    config: &TrajectoryConfig,
) -> Result<Vec<Camera>, GeometryError> {
    config.validate()?;
    let pivot = config.pivot.unwrap_or_else(|| initial_camera.center());
    let down = initial_camera.down_axis();
    let mut cameras = Vec::with_capacity(config.num_cameras);
    for i in 0..config.num_cameras {
        let yaw = yaw_offset(i, config.rotation_step);
        if yaw == 0.0 {
            cameras.push(initial_camera.clone());
        } else {
            cameras.push(rotate_pose(initial_camera, down, yaw, pivot)?);
        }
    }
    Ok(cameras)
}

/// Yaws a camera in place about its down axis (positive turns right).
pub fn yaw_camera(camera: &Camera, yaw: f64) -> Result<Camera, GeometryError> {
    if yaw == 0.0 {
        return Ok(camera.clone());
    }
    rotate_pose(camera, camera.down_axis(), yaw, camera.center())
}

/// The alternating sweep offset for position `i`.
pub fn yaw_offset(i: usize, step: f64) -> f64 {
    if i == 0 {
        return 0.0;
    }
    let k = (i + 1) / 2;
    let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
    sign * k as f64 * step
}

/// Which spherical direction support views are displaced along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportAxis {
    Azimuth,
    Elevation,
}

/// For each base camera, produces two cameras displaced by
/// `+/- shift_degrees` along the sphere whose center sits `center_depth`
/// in front of the camera, re-aimed at the sphere center. Output length
/// is `2 * base_cameras.len()`.
pub fn support_cameras(
    base_cameras: &[Camera],
    center_depths: &[f64],
    shift_degrees: f64,
    axis: SupportAxis,
) -> Result<Vec<Camera>, GeometryError> {
    if base_cameras.len() != center_depths.len() {
        return Err(GeometryError::InvalidArgument(format!(
            "{} cameras but {} center depths",
            base_cameras.len(),
            center_depths.len()
        )));
    }
    let shift = shift_degrees.to_radians();
    let mut out = Vec::with_capacity(2 * base_cameras.len());
    for (camera, &radius) in base_cameras.iter().zip(center_depths) {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidArgument(format!(
                "sphere radius {radius} must be positive"
            )));
        }
        let center = camera.center() + radius * camera.forward_axis();
        let rot_axis = match axis {
            SupportAxis::Azimuth => camera.down_axis(),
            SupportAxis::Elevation => camera.right_axis(),
        };
        for sign in [1.0, -1.0] {
            out.push(aim_from_sphere(camera, center, rot_axis, sign * shift)?);
        }
    }
    Ok(out)
}

/// Moves the camera along the sphere around `center` and re-aims at it.
fn aim_from_sphere(
    camera: &Camera,
    center: Vector3<f64>,
    axis: Vector3<f64>,
    angle: f64,
) -> Result<Camera, GeometryError> {
    let a = axis_angle_matrix(axis, angle);
    let position = center + a * (camera.center() - center);
    let forward = (center - position).normalize();
    let down_hint = camera.down_axis();
    let right = down_hint.cross(&forward);
    if right.norm() < 1e-12 {
        return Err(GeometryError::InvalidArgument(
            "support view would look along its own down axis".into(),
        ));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let translation = -(rotation * position);
    Ok(camera.with_pose(rotation, translation)?)
}
