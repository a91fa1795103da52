//! Camera assembly shared by the pipeline commands: the initial pose,
//! the trajectory, support views on per-view depth spheres, and the
//! held-out midpoint views used for evaluation.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::config::RunConfig;
use super::PipelineError;
use crate::geometry::{build_trajectory, support_cameras, yaw_camera, yaw_offset, SupportAxis};
use crate::scene::{io, Camera, DepthMap, PointCloud};

pub fn initial_camera(cfg: &RunConfig) -> Result<Camera, PipelineError> {
    let f = 0.5 * cfg.width as f64 / libm::tan(0.5 * cfg.fov_deg.to_radians());
    Camera::from_params(
        f,
        f,
        cfg.width as f64 / 2.0,
        cfg.height as f64 / 2.0,
        Matrix3::identity(),
        Vector3::zeros(),
        cfg.width,
        cfg.height,
    )
    .map_err(|e| PipelineError::Config(e.to_string()))
}

pub fn trajectory_cameras(cfg: &RunConfig) -> Result<Vec<Camera>, PipelineError> {
    let cam0 = initial_camera(cfg)?;
    Ok(build_trajectory(&cam0, &cfg.trajectory)?)
}

/// Center depth of each aligned trajectory depth map (central pixel,
/// falling back to the mean of valid entries).
pub fn center_depths(depths: &[DepthMap]) -> Result<Vec<f64>, PipelineError> {
    depths
        .iter()
        .enumerate()
        .map(|(i, d)| {
            d.get(d.width() / 2, d.height() / 2)
                .or_else(|| d.mean_valid())
                .ok_or_else(|| {
                    PipelineError::Format(format!("aligned depth {i} has no valid pixels"))
                })
        })
        .collect()
}

/// Support cameras: two per base camera, on spheres of the per-view
/// center depth.
pub fn support_views(
    cfg: &RunConfig,
    trajectory: &[Camera],
    depths: &[f64],
) -> Result<Vec<Camera>, PipelineError> {
    let bases = cfg.trajectory.support_count / 2;
    if bases > trajectory.len() || bases > depths.len() {
        return Err(PipelineError::Config(format!(
            "support_count {} needs {} base cameras, trajectory has {}",
            cfg.trajectory.support_count,
            bases,
            trajectory.len()
        )));
    }
    Ok(support_cameras(
        &trajectory[..bases],
        &depths[..bases],
        cfg.trajectory.support_shift_deg,
        SupportAxis::Azimuth,
    )?)
}

/// Held-out cameras at the midpoints between adjacent trajectory yaws.
pub fn holdout_cameras(cfg: &RunConfig) -> Result<Vec<(f64, Camera)>, PipelineError> {
    let cam0 = initial_camera(cfg)?;
    let n = cfg.trajectory.num_cameras;
    let step = cfg.trajectory.rotation_step;
    let mut yaws: Vec<f64> = (0..n).map(|i| yaw_offset(i, step)).collect();
    yaws.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for pair in yaws.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        out.push((mid, yaw_camera(&cam0, mid)?));
    }
    Ok(out)
}

pub fn load_cloud(out_dir: &Path) -> Result<PointCloud, PipelineError> {
    let path = out_dir.join("cloud.ply");
    io::read_ply(&path).map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))
}

pub fn load_aligned_depths(out_dir: &Path, n: usize) -> Result<Vec<DepthMap>, PipelineError> {
    (0..n)
        .map(|i| {
            let path = out_dir.join("depth").join(format!("aligned_{i:03}.pfm"));
            io::read_pfm(&path)
                .map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))
        })
        .collect()
}
