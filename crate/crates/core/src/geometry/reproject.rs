use super::GeometryError;
use crate::scene::{Camera, ColorImage, DepthMap, Mask, PointCloud};

/// Fill color written to pixels no projected point covers.
pub const UNCOVERED_FILL: [f64; 3] = [0.5, 0.5, 0.5];

/// Result of reprojecting a point cloud: partial image, coverage mask,
/// and the z-buffer depth.
#[derive(Debug, Clone)]
pub struct Projection {
    pub image: ColorImage,
    pub mask: Mask,
    pub depth: DepthMap,
}

/// Lifts selected pixels to world-space points:
/// `p = R^T (z * K^-1 (u+0.5, v+0.5, 1) - t)`, colors copied from the
/// image. `source_frame` tags the provenance of every produced point.
pub fn unproject(
    image: &ColorImage,
    depth: &DepthMap,
    camera: &Camera,
    select: &Mask,
    source_frame: u32,
) -> Result<PointCloud, GeometryError> {
    let (w, h) = (camera.width(), camera.height());
    if image.width() != w
        || image.height() != h
        || !depth.same_shape(&DepthMap::invalid(w, h))
        || !select.same_shape_as_image(image)
    {
        return Err(GeometryError::ShapeMismatch(format!(
            "image {}x{}, depth {}x{}, mask {}x{}, camera {}x{}",
            image.width(),
            image.height(),
            depth.width(),
            depth.height(),
            select.width(),
            select.height(),
            w,
            h
        )));
    }
    let bad = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| select.get(x, y) && depth.get(x, y).is_none())
        .count();
    if bad > 0 {
        return Err(GeometryError::InvalidDepthSelected { count: bad });
    }

    let mut cloud = PointCloud::new();
    for y in 0..h {
        for x in 0..w {
            if !select.get(x, y) {
                continue;
            }
            let z = depth.get(x, y).expect("validated above");
            let p_cam = z * camera.pixel_ray(x, y);
            let p_world = camera.camera_to_world(&p_cam);
            cloud.push(p_world, image.get(x, y), source_frame);
        }
    }
    Ok(cloud)
}

/// Projects a cloud through a camera with a 1-pixel z-buffer. The nearest
/// point (smallest camera-z) wins each pixel; ties keep the lower point
/// index. Points at or behind the camera plane are culled. Uncovered
/// pixels carry the mid-gray fill and invalid depth.
pub fn project(cloud: &PointCloud, camera: &Camera) -> Projection {
    let (w, h) = (camera.width(), camera.height());
    let mut image = ColorImage::new(w, h, UNCOVERED_FILL);
    let mut mask = Mask::filled(w, h, false);
    let mut depth = DepthMap::invalid(w, h);

    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        let Some((px, py, z)) = camera.project_point(p) else {
            continue;
        };
        if !(px >= 0.0 && py >= 0.0) {
            continue;
        }
        let (x, y) = (px.floor() as usize, py.floor() as usize);
        if x >= w || y >= h {
            continue;
        }
        let closer = match depth.get(x, y) {
            Some(existing) => z < existing,
            None => true,
        };
        if closer {
            depth.set(x, y, z);
            image.set(x, y, *c);
            mask.set(x, y, true);
        }
    }
    Projection { image, mask, depth }
}

/// Merges the unprojection of newly inpainted pixels (`inpaint_mask`
/// false, depth valid) into the existing cloud. Existing points are
/// never touched or reordered.
pub fn merge_cloud(
    existing: &PointCloud,
    image: &ColorImage,
    aligned_depth: &DepthMap,
    camera: &Camera,
    inpaint_mask: &Mask,
    source_frame: u32,
) -> Result<PointCloud, GeometryError> {
    if !inpaint_mask.same_shape_as_image(image) {
        return Err(GeometryError::ShapeMismatch("mask does not match image".into()));
    }
    let (w, h) = (inpaint_mask.width(), inpaint_mask.height());
    let mut select = Mask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            select.set(x, y, !inpaint_mask.get(x, y) && aligned_depth.get(x, y).is_some());
        }
    }
    let new_points = unproject(image, aligned_depth, camera, &select, source_frame)?;
    let mut merged = existing.clone();
    merged.extend_from(&new_points);
    Ok(merged)
}

/// Reprojects the cloud through every camera; each mask tells the trainer
/// which pixels carry real content (losses on support views are
/// restricted to them).
pub fn render_training_set(cloud: &PointCloud, cameras: &[Camera]) -> Vec<(ColorImage, Mask)> {
    cameras
        .iter()
        .map(|cam| {
            let p = project(cloud, cam);
            (p.image, p.mask)
        })
        .collect()
}
