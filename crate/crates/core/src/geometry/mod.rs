//! Geometric primitives for progressive scene generation: unprojection,
//! masked z-buffer reprojection, affine depth alignment, point-cloud
//! merging, camera trajectories, and support-view generation.

mod align;
mod reproject;
mod trajectory;

pub use align::{align_depth, AlignedDepth, MIN_OVERLAP_DEFAULT};
pub use reproject::{merge_cloud, project, render_training_set, unproject, Projection};
pub use trajectory::{build_trajectory, support_cameras, yaw_camera, yaw_offset, SupportAxis, TrajectoryConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{count} selected pixels have invalid depth")]
    InvalidDepthSelected { count: usize },
    #[error("depth alignment failed: only {overlap} usable overlap pixels (need {required})")]
    AlignmentFailed { overlap: usize, required: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
}
