//! File formats: binary little-endian PLY point clouds (f32 positions,
//! u8 colors), single-channel little-endian PFM depth (f32, invalid
//! entries stored as 0), and 8-bit RGB / grayscale PNG.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{ColorImage, DepthMap, Mask, PointCloud, SceneError};

/// Writes a point cloud as binary little-endian PLY with properties
/// x y z (f32) and red green blue (u8). Narrowing to f32/u8 is the
/// declared precision of this format.
pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<(), SceneError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )?;
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        for v in [p.x, p.y, p.z] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for ch in c {
            w.write_all(&[(ch * 255.0).round().clamp(0.0, 255.0) as u8])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud, SceneError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(SceneError::format("ply", "truncated header"));
        }
        let trimmed = line.trim_end();
        if trimmed == "end_header" {
            break;
        }
        if line.starts_with("ply") || trimmed.is_empty() || trimmed.starts_with("comment") {
            continue;
        }
        if let Some(fmt) = trimmed.strip_prefix("format ") {
            if !fmt.starts_with("binary_little_endian") {
                return Err(SceneError::format("ply", format!("unsupported format '{fmt}'")));
            }
        } else if let Some(rest) = trimmed.strip_prefix("element vertex ") {
            vertex_count = Some(
                rest.parse()
                    .map_err(|_| SceneError::format("ply", "bad vertex count"))?,
            );
        } else if let Some(rest) = trimmed.strip_prefix("element ") {
            return Err(SceneError::format("ply", format!("unsupported element '{rest}'")));
        } else if let Some(rest) = trimmed.strip_prefix("property ") {
            properties.push(rest.to_string());
        }
    }
    let expected = [
        "float x", "float y", "float z", "uchar red", "uchar green", "uchar blue",
    ];
    if properties != expected {
        return Err(SceneError::format(
            "ply",
            format!("unexpected property layout {properties:?}"),
        ));
    }
    let n = vertex_count.ok_or_else(|| SceneError::format("ply", "missing vertex element"))?;
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut buf = [0u8; 15];
    for i in 0..n {
        r.read_exact(&mut buf)
            .map_err(|_| SceneError::format("ply", format!("truncated at vertex {i}")))?;
        let x = f32::from_le_bytes(buf[0..4].try_into().unwrap()) as f64;
        let y = f32::from_le_bytes(buf[4..8].try_into().unwrap()) as f64;
        let z = f32::from_le_bytes(buf[8..12].try_into().unwrap()) as f64;
        positions.push(Vector3::new(x, y, z));
        colors.push([
            f64::from(buf[12]) / 255.0,
            f64::from(buf[13]) / 255.0,
            f64::from(buf[14]) / 255.0,
        ]);
    }
    let frames = vec![0u32; n];
    PointCloud::from_parts(positions, colors, frames)
}

/// Writes a depth map as single-channel PFM (f32, little-endian via the
/// negative scale convention, rows bottom-to-top). Invalid pixels are
/// stored as 0.
pub fn write_pfm(depth: &DepthMap, path: &Path) -> Result<(), SceneError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", depth.width(), depth.height())?;
    for y in (0..depth.height()).rev() {
        for x in 0..depth.width() {
            let v = depth.get(x, y).unwrap_or(0.0) as f32;
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<DepthMap, SceneError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [String::new(), String::new(), String::new()];
    for part in header.iter_mut() {
        if r.read_line(part)? == 0 {
            return Err(SceneError::format("pfm", "truncated header"));
        }
    }
    if header[0].trim() != "Pf" {
        return Err(SceneError::format("pfm", "expected single-channel 'Pf' magic"));
    }
    let dims: Vec<&str> = header[1].split_whitespace().collect();
    if dims.len() != 2 {
        return Err(SceneError::format("pfm", "bad dimensions line"));
    }
    let width: usize = dims[0].parse().map_err(|_| SceneError::format("pfm", "bad width"))?;
    let height: usize = dims[1].parse().map_err(|_| SceneError::format("pfm", "bad height"))?;
    let scale: f64 = header[2]
        .trim()
        .parse()
        .map_err(|_| SceneError::format("pfm", "bad scale"))?;
    if scale >= 0.0 {
        return Err(SceneError::format("pfm", "big-endian PFM is not supported"));
    }
    let mut values = vec![0.0f64; width * height];
    let mut valid = vec![false; width * height];
    let mut buf = [0u8; 4];
    for y in (0..height).rev() {
        for x in 0..width {
            r.read_exact(&mut buf)
                .map_err(|_| SceneError::format("pfm", "truncated payload"))?;
            let v = f64::from(f32::from_le_bytes(buf));
            let i = y * width + x;
            if v > 0.0 && v.is_finite() {
                values[i] = v;
                valid[i] = true;
            }
        }
    }
    DepthMap::from_values(width, height, values, valid)
}

/// Writes an 8-bit RGB PNG (values rounded from [0,1]).
pub fn write_png(image: &ColorImage, path: &Path) -> Result<(), SceneError> {
    let mut img = image::RgbImage::new(image.width() as u32, image.height() as u32);
    for y in 0..image.height() {
        for x in 0..image.width() {
            let c = image.get(x, y);
            img.put_pixel(
                x as u32,
                y as u32,
                image::Rgb(c.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)),
            );
        }
    }
    img.save(path)
        .map_err(|e| SceneError::format("png", e.to_string()))
}

pub fn read_png(path: &Path) -> Result<ColorImage, SceneError> {
    let img = image::open(path)
        .map_err(|e| SceneError::format("png", e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = ColorImage::new(w, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            let p = img.get_pixel(x as u32, y as u32);
            out.set(x, y, [0, 1, 2].map(|i| f64::from(p.0[i]) / 255.0));
        }
    }
    Ok(out)
}

/// Writes a mask as an 8-bit grayscale PNG (255 = covered, 0 = inpaint).
pub fn write_mask_png(mask: &Mask, path: &Path) -> Result<(), SceneError> {
    let mut img = image::GrayImage::new(mask.width() as u32, mask.height() as u32);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            img.put_pixel(x as u32, y as u32, image::Luma([if mask.get(x, y) { 255 } else { 0 }]));
        }
    }
    img.save(path)
        .map_err(|e| SceneError::format("png", e.to_string()))
}

pub fn read_mask_png(path: &Path) -> Result<Mask, SceneError> {
    let img = image::open(path)
        .map_err(|e| SceneError::format("png", e.to_string()))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut mask = Mask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            mask.set(x, y, img.get_pixel(x as u32, y as u32).0[0] > 127);
        }
    }
    Ok(mask)
}
