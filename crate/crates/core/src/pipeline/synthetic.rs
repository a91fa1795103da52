//! Hermetic frame provider: a procedural room (textured walls, floor,
//! ceiling, and a few spheres) with analytic z-depth. Completions
//! ray-cast the same scene, so frames are consistent across views and
//! fully deterministic in the seed.

use nalgebra::Vector3;

use super::provider::{FrameProvider, ProviderError};
use crate::scene::{Camera, ColorImage, DepthMap, Mask};

const ROOM_HALF_X: f64 = 4.0;
const ROOM_HALF_Z: f64 = 4.0;
/// y points down: the floor is at +y.
const FLOOR_Y: f64 = 1.5;
const CEIL_Y: f64 = -1.5;

pub struct SyntheticProvider {
    phase: [f64; 3],
    hue_shift: usize,
}

/// Builds the provider for a known scene id (currently `room`).
pub fn provider_synthetic(scene_id: &str, seed: u64) -> Result<SyntheticProvider, ProviderError> {
    if scene_id != "room" {
        return Err(ProviderError::UnknownScene(scene_id.to_string()));
    }
    let mut rng = crate::scene::Rng::seed_from(seed ^ 0x0517_ee1d);
    Ok(SyntheticProvider {
        phase: [rng.uniform_in(0.0, 6.28), rng.uniform_in(0.0, 6.28), rng.uniform_in(0.0, 6.28)],
        hue_shift: rng.index(3),
    })
}

struct Hit {
    t: f64,
    color: [f64; 3],
}

impl SyntheticProvider {
    fn palette(&self, i: usize) -> [f64; 3] {
        const BASE: [[f64; 3]; 6] = [
            [0.85, 0.35, 0.30],
            [0.30, 0.65, 0.85],
            [0.40, 0.80, 0.40],
            [0.90, 0.75, 0.30],
            [0.65, 0.45, 0.85],
            [0.90, 0.55, 0.70],
        ];
        let c = BASE[(i + self.hue_shift) % BASE.len()];
        [c[0], c[1], c[2]]
    }

    fn spheres(&self) -> [(Vector3<f64>, f64, [f64; 3]); 3] {
        [
            (Vector3::new(1.3, 0.9, 2.4), 0.55, self.palette(3)),
            (Vector3::new(-1.6, 0.7, 2.9), 0.7, self.palette(4)),
            (Vector3::new(0.2, 1.0, -2.6), 0.5, self.palette(5)),
        ]
    }

    fn wall_color(&self, wall: usize, a: f64, b: f64) -> [f64; 3] {
        let base = self.palette(wall % 3);
        let m = 0.72
            + 0.22
                * libm::sin(2.1 * a + self.phase[wall % 3])
                * libm::sin(1.7 * b + self.phase[(wall + 1) % 3]);
        base.map(|c| (c * m).clamp(0.02, 0.98))
    }

    fn floor_color(&self, x: f64, z: f64) -> [f64; 3] {
        let cell = ((x + 16.0).floor() as i64 + (z + 16.0).floor() as i64) % 2;
        if cell == 0 {
            [0.82, 0.78, 0.70]
        } else {
            [0.35, 0.30, 0.28]
        }
    }

    fn cast(&self, origin: Vector3<f64>, dir: Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut consider = |t: f64, color: [f64; 3]| {
            if t > 1e-9 && best.as_ref().map_or(true, |h| t < h.t) {
                best = Some(Hit { t, color });
            }
        };

        // axis-aligned room shell
        if dir.x.abs() > 1e-12 {
            for (sign, wall) in [(1.0, 0usize), (-1.0, 1usize)] {
                let t = (sign * ROOM_HALF_X - origin.x) / dir.x;
                let p = origin + t * dir;
                if t > 1e-9 && p.y >= CEIL_Y && p.y <= FLOOR_Y && p.z.abs() <= ROOM_HALF_Z {
                    consider(t, self.wall_color(wall, p.z, p.y));
                }
            }
        }
        if dir.z.abs() > 1e-12 {
            for (sign, wall) in [(1.0, 2usize), (-1.0, 3usize)] {
                let t = (sign * ROOM_HALF_Z - origin.z) / dir.z;
                let p = origin + t * dir;
                if t > 1e-9 && p.y >= CEIL_Y && p.y <= FLOOR_Y && p.x.abs() <= ROOM_HALF_X {
                    consider(t, self.wall_color(wall, p.x, p.y));
                }
            }
        }
        if dir.y.abs() > 1e-12 {
            let t = (FLOOR_Y - origin.y) / dir.y;
            let p = origin + t * dir;
            if t > 1e-9 && p.x.abs() <= ROOM_HALF_X && p.z.abs() <= ROOM_HALF_Z {
                consider(t, self.floor_color(p.x, p.z));
            }
            let t = (CEIL_Y - origin.y) / dir.y;
            let p = origin + t * dir;
            if t > 1e-9 && p.x.abs() <= ROOM_HALF_X && p.z.abs() <= ROOM_HALF_Z {
                let m = 0.8 + 0.1 * libm::sin(0.9 * p.x + self.phase[0]);
                consider(t, [0.55 * m, 0.55 * m, 0.60 * m]);
            }
        }

        for (center, radius, color) in self.spheres() {
            let oc = origin - center;
            let a = dir.dot(&dir);
            let half_b = oc.dot(&dir);
            let c = oc.dot(&oc) - radius * radius;
            let disc = half_b * half_b - a * c;
            if disc > 0.0 {
                let t = (-half_b - disc.sqrt()) / a;
                if t > 1e-9 {
                    let p = origin + t * dir;
                    let band = 0.85 + 0.15 * libm::sin(7.0 * (p.y - center.y) / radius);
                    consider(t, color.map(|v| (v * band).clamp(0.02, 0.98)));
                }
            }
        }
        best
    }

    /// Ray-casts pixel (x, y); returns (color, z-depth along the camera
    /// axis). The camera-frame ray has unit z, so the ray parameter is
    /// the z-depth directly.
    fn sample(&self, camera: &Camera, x: usize, y: usize) -> ([f64; 3], f64) {
        let dir_cam = camera.pixel_ray(x, y);
        let dir_world = camera.rotation().transpose() * dir_cam;
        let origin = camera.center();
        match self.cast(origin, dir_world) {
            Some(hit) => (hit.color, hit.t),
            // open geometry should not happen inside the room; fall back
            // to a distant dark backdrop
            None => ([0.02, 0.02, 0.02], 50.0),
        }
    }
}

impl FrameProvider for SyntheticProvider {
    fn initial_image(
        &mut self,
        _prompt: &str,
        camera: &Camera,
    ) -> Result<ColorImage, ProviderError> {
        let mut img = ColorImage::new(camera.width(), camera.height(), [0.0; 3]);
        for y in 0..camera.height() {
            for x in 0..camera.width() {
                img.set(x, y, self.sample(camera, x, y).0);
            }
        }
        Ok(img)
    }

    fn complete_image(
        &mut self,
        partial: &ColorImage,
        mask: &Mask,
        camera: &Camera,
        _prompt: &str,
    ) -> Result<ColorImage, ProviderError> {
        if !mask.same_shape_as_image(partial) {
            return Err(ProviderError::Malformed("mask/image shape mismatch".into()));
        }
        let mut img = partial.clone();
        for y in 0..camera.height() {
            for x in 0..camera.width() {
                if !mask.get(x, y) {
                    img.set(x, y, self.sample(camera, x, y).0);
                }
            }
        }
        Ok(img)
    }

    fn estimate_depth(
        &mut self,
        _image: &ColorImage,
        camera: &Camera,
    ) -> Result<DepthMap, ProviderError> {
        let mut depth = DepthMap::invalid(camera.width(), camera.height());
        for y in 0..camera.height() {
            for x in 0..camera.width() {
                depth.set(x, y, self.sample(camera, x, y).1);
            }
        }
        Ok(depth)
    }
}
