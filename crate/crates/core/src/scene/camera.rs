use nalgebra::{Matrix3, Vector3};

use super::SceneError;

const ORTHO_TOL: f64 = 1e-9;

/// Pinhole camera: intrinsics `K`, world-to-camera extrinsics `[R|t]`,
/// and the image resolution. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    intrinsic: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    width: usize,
    height: usize,
}

impl Camera {
    pub fn new(
        intrinsic: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::InvalidCamera("resolution must be positive".into()));
        }
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ORTHO_TOL {
            return Err(SceneError::InvalidCamera(format!(
                "rotation is not orthonormal (max deviation {ortho_err:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(SceneError::InvalidCamera(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        let cam = Self { intrinsic, rotation, translation, width, height };
        let (fx, fy, cx, cy) = (cam.fx(), cam.fy(), cam.cx(), cam.cy());
        if fx <= 0.0 || fy <= 0.0 {
            return Err(SceneError::InvalidCamera(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if cx < 0.0 || cx >= width as f64 || cy < 0.0 || cy >= height as f64 {
            return Err(SceneError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside image {width}x{height}"
            )));
        }
        Ok(cam)
    }

    /// Builds a camera from focal lengths and principal point.
    pub fn from_params(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self, SceneError> {
        let k = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
        Self::new(k, rotation, translation, width, height)
    }

    pub fn intrinsic(&self) -> &Matrix3<f64> {
        &self.intrinsic
    }
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn fx(&self) -> f64 {
        self.intrinsic[(0, 0)]
    }
    pub fn fy(&self) -> f64 {
        self.intrinsic[(1, 1)]
    }
    pub fn cx(&self) -> f64 {
        self.intrinsic[(0, 2)]
    }
    pub fn cy(&self) -> f64 {
        self.intrinsic[(1, 2)]
    }

    /// Camera center in world coordinates: `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Camera axes in world coordinates (x right, y down, z forward).
    pub fn right_axis(&self) -> Vector3<f64> {
        self.rotation.transpose() * Vector3::x()
    }
    pub fn down_axis(&self) -> Vector3<f64> {
        self.rotation.transpose() * Vector3::y()
    }
    pub fn forward_axis(&self) -> Vector3<f64> {
        self.rotation.transpose() * Vector3::z()
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Camera-frame ray direction through pixel (u, v): `K^-1 (u+0.5, v+0.5, 1)`
    /// with unit z component.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vector3<f64> {
        let x = (u as f64 + 0.5 - self.cx()) / self.fx();
        let y = (v as f64 + 0.5 - self.cy()) / self.fy();
        Vector3::new(x, y, 1.0)
    }

    /// Projects a world point to continuous pixel coordinates and camera
    /// z-depth. Points at or behind the camera plane return `None`.
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let c = self.world_to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        let px = self.fx() * c.x / c.z + self.cx();
        let py = self.fy() * c.y / c.z + self.cy();
        Some((px, py, c.z))
    }

    /// Same pose, new intrinsics/resolution.
    pub fn with_pose(&self, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, SceneError> {
        Self::new(self.intrinsic, rotation, translation, self.width, self.height)
    }
}
