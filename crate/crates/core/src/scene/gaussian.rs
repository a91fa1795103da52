use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::SceneError;

const QUAT_TOL: f64 = 1e-9;

/// One anisotropic 3D Gaussian: mean, per-axis scale, rotation, opacity,
/// and view-independent color.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub mean: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Gaussian3D {
    pub fn new(
        mean: Vector3<f64>,
        scale: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        opacity: f64,
        color: [f64; 3],
    ) -> Result<Self, SceneError> {
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(SceneError::InvalidArgument(format!(
                "gaussian scale must be positive, got {scale:?}"
            )));
        }
        if (rotation.norm() - 1.0).abs() > QUAT_TOL {
            return Err(SceneError::InvalidArgument("quaternion is not normalized".into()));
        }
        if !(opacity > 0.0 && opacity < 1.0) {
            return Err(SceneError::InvalidArgument(format!(
                "opacity {opacity} must lie in (0, 1)"
            )));
        }
        if color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(SceneError::InvalidArgument("color out of [0,1]".into()));
        }
        Ok(Self { mean, scale, rotation, opacity, color })
    }

    /// World-space covariance `R S S^T R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_from_factors(self.scale, self.rotation)
            .expect("constructor validated the factors")
    }
}

/// Builds the covariance `R diag(s) diag(s) R^T` from scale and rotation
/// factors. Symmetric positive semi-definite by construction.
pub fn covariance_from_factors(
    scale: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
) -> Result<Matrix3<f64>, SceneError> {
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(SceneError::InvalidArgument(format!(
            "scale components must be positive, got {scale:?}"
        )));
    }
    let r = rotation.to_rotation_matrix();
    let m = r.matrix() * Matrix3::from_diagonal(&scale.component_mul(&scale)) * r.matrix().transpose();
    // enforce exact symmetry against round-off
    let sym = 0.5 * (m + m.transpose());
    Ok(sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Quaternion;
    use proptest::prelude::*;

    #[test]
    fn identity_factors_give_identity() {
        let cov =
            covariance_from_factors(Vector3::new(1.0, 1.0, 1.0), UnitQuaternion::identity())
                .unwrap();
        assert!((cov - Matrix3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn axis_aligned_scales_square() {
        let cov =
            covariance_from_factors(Vector3::new(2.0, 1.0, 1.0), UnitQuaternion::identity())
                .unwrap();
        let expect = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
        assert!((cov - expect).abs().max() < 1e-15);
    }

    #[test]
    fn rotated_covariance_matches_matrix_product_oracle() {
        // s = (1, 2, 3), q = 90 degrees about z; oracle multiplies the
        // 3x3 factors out explicitly, element by element.
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let cov = covariance_from_factors(Vector3::new(1.0, 2.0, 3.0), q).unwrap();

        let rm = q.to_rotation_matrix();
        let r = rm.matrix();
        let d = [1.0, 4.0, 9.0];
        let mut oracle = [[0.0f64; 3]; 3];
        #[allow(clippy::needless_range_loop)]
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += r[(i, k)] * d[k] * r[(j, k)];
                }
                oracle[i][j] = acc;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((cov[(i, j)] - oracle[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_scale() {
        let err = covariance_from_factors(Vector3::new(1.0, 0.0, 1.0), UnitQuaternion::identity());
        assert!(err.is_err());
    }

    #[test]
    fn symmetric_within_tolerance() {
        let q = UnitQuaternion::from_axis_angle(
            &nalgebra::Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5)),
            0.77,
        );
        let cov = covariance_from_factors(Vector3::new(0.3, 1.7, 2.2), q).unwrap();
        assert!((cov - cov.transpose()).abs().max() < 1e-12);
        let eig = cov.symmetric_eigenvalues();
        assert!(eig.iter().all(|&l| l > -1e-12));
    }

    proptest! {
        #[test]
        fn quaternion_sign_flip_is_invariant(
            w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            sx in 0.1f64..3.0, sy in 0.1f64..3.0, sz in 0.1f64..3.0,
        ) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
            let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
            let qneg = UnitQuaternion::from_quaternion(Quaternion::new(-w, -x, -y, -z));
            let s = Vector3::new(sx, sy, sz);
            let a = covariance_from_factors(s, q).unwrap();
            let b = covariance_from_factors(s, qneg).unwrap();
            prop_assert!((a - b).abs().max() < 1e-12);
        }
    }
}
