//! The progressive generation loop: initial frame, then per trajectory
//! camera reproject -> inpaint -> depth -> align -> merge, persisting
//! every intermediate.

use std::path::Path;

use super::config::RunConfig;
use super::provider::{check_mask_preservation, FrameProvider};
use super::report::{GenerateReport, Report};
use super::views::{initial_camera, trajectory_cameras};
use super::PipelineError;
use crate::geometry::{align_depth, merge_cloud, project, unproject, MIN_OVERLAP_DEFAULT};
use crate::scene::{io, Camera, ColorImage, DepthMap, Mask, PointCloud};

#[derive(Debug)]
pub struct GenerateOutput {
    pub cloud: PointCloud,
    pub cameras: Vec<Camera>,
    pub frames: Vec<ColorImage>,
    pub aligned_depths: Vec<DepthMap>,
    pub masks: Vec<Mask>,
    pub points_per_step: Vec<usize>,
}

fn step_err(camera: usize, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Generate { camera, message: e.to_string() }
}

pub fn generate(
    cfg: &RunConfig,
    provider: &mut dyn FrameProvider,
    out_dir: &Path,
) -> Result<GenerateOutput, PipelineError> {
    cfg.validate()?;
    for sub in ["frames", "depth", "masks", "checkpoints"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    std::fs::write(out_dir.join("config.txt"), cfg.dump())?;

    let cam0 = initial_camera(cfg)?;
    let cameras = trajectory_cameras(cfg)?;
    let (w, h) = (cfg.width, cfg.height);

    let mut frames = Vec::with_capacity(cameras.len());
    let mut aligned_depths = Vec::with_capacity(cameras.len());
    let mut masks = Vec::with_capacity(cameras.len());
    let mut points_per_step = Vec::with_capacity(cameras.len());

    // step 0: initial image, depth, and cloud
    let image0 = provider.initial_image(&cfg.prompt, &cam0).map_err(|e| step_err(0, e))?;
    let depth0 = provider.estimate_depth(&image0, &cam0).map_err(|e| step_err(0, e))?;
    let full = Mask::filled(w, h, true);
    let mut cloud =
        unproject(&image0, &depth0, &cam0, &full, 0).map_err(|e| step_err(0, e))?;
    points_per_step.push(cloud.len());
    persist_step(out_dir, 0, &image0, &depth0, &depth0, &full)?;
    frames.push(image0);
    aligned_depths.push(depth0);
    masks.push(full);

    for (i, camera) in cameras.iter().enumerate().skip(1) {
        let proj = project(&cloud, camera);
        let image = provider
            .complete_image(&proj.image, &proj.mask, camera, &cfg.prompt)
            .map_err(|e| step_err(i, e))?;
        check_mask_preservation(&proj.image, &proj.mask, &image)
            .map_err(|e| step_err(i, e))?;
        let depth = provider.estimate_depth(&image, camera).map_err(|e| step_err(i, e))?;
        let aligned = align_depth(&depth, &proj.depth, &proj.mask, MIN_OVERLAP_DEFAULT)
            .map_err(|e| step_err(i, e))?;
        cloud = merge_cloud(&cloud, &image, &aligned.depth, camera, &proj.mask, i as u32)
            .map_err(|e| step_err(i, e))?;
        points_per_step.push(cloud.len());
        eprintln!(
            "generate: camera {i} scale {:.6} shift {:.6} overlap {} points {}",
            aligned.scale,
            aligned.shift,
            aligned.overlap_count,
            cloud.len()
        );
        persist_step(out_dir, i, &image, &depth, &aligned.depth, &proj.mask)?;
        frames.push(image);
        aligned_depths.push(aligned.depth);
        masks.push(proj.mask);
    }

    io::write_ply(&cloud, &out_dir.join("cloud.ply"))
        .map_err(|e| PipelineError::Format(e.to_string()))?;

    let mut report = Report::load(out_dir)?;
    report.generate = Some(GenerateReport {
        seed: cfg.seed,
        num_cameras: cameras.len(),
        point_count: cloud.len(),
        points_per_step: points_per_step.clone(),
    });
    report.save(out_dir)?;

    Ok(GenerateOutput { cloud, cameras, frames, aligned_depths, masks, points_per_step })
}

fn persist_step(
    out_dir: &Path,
    i: usize,
    image: &ColorImage,
    raw_depth: &DepthMap,
    aligned_depth: &DepthMap,
    mask: &Mask,
) -> Result<(), PipelineError> {
    let fmt = |e: crate::scene::SceneError| PipelineError::Format(e.to_string());
    io::write_png(image, &out_dir.join("frames").join(format!("frame_{i:03}.png"))).map_err(fmt)?;
    io::write_pfm(raw_depth, &out_dir.join("depth").join(format!("raw_{i:03}.pfm"))).map_err(fmt)?;
    io::write_pfm(aligned_depth, &out_dir.join("depth").join(format!("aligned_{i:03}.pfm")))
        .map_err(fmt)?;
    io::write_mask_png(mask, &out_dir.join("masks").join(format!("mask_{i:03}.png"))).map_err(fmt)?;
    Ok(())
}
