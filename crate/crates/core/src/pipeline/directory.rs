//! File-protocol provider bridging to an out-of-process model: each
//! request writes the inputs plus a JSON descriptor into the exchange
//! directory and polls for the response file.
//!
//! Protocol (NNN = request counter, zero-padded):
//! - initial:  write `NNN_initial_request.json` -> read `NNN_initial.png`
//! - inpaint:  write `NNN_partial.png`, `NNN_mask.png`,
//!   `NNN_inpaint_request.json` -> read `NNN_inpainted.png`
//! - depth:    write `NNN_image.png`, `NNN_depth_request.json`
//!   -> read `NNN_depth.pfm`

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::provider::{FrameProvider, ProviderError};
use crate::scene::{io, Camera, ColorImage, DepthMap, Mask};

pub struct DirectoryProvider {
    dir: PathBuf,
    timeout: Duration,
    poll: Duration,
    counter: usize,
}

pub fn provider_directory(dir: &Path, timeout_ms: u64) -> Result<DirectoryProvider, ProviderError> {
    std::fs::create_dir_all(dir)?;
    Ok(DirectoryProvider {
        dir: dir.to_path_buf(),
        timeout: Duration::from_millis(timeout_ms),
        poll: Duration::from_millis(20),
        counter: 0,
    })
}

impl DirectoryProvider {
    fn next_id(&mut self) -> String {
        let id = format!("{:03}", self.counter);
        self.counter += 1;
        id
    }

    fn wait_for(&self, path: &Path) -> Result<(), ProviderError> {
        let start = Instant::now();
        loop {
            if path.exists() {
                // grace period so a writer can finish the file
                std::thread::sleep(self.poll);
                return Ok(());
            }
            if start.elapsed() >= self.timeout {
                return Err(ProviderError::Timeout {
                    path: path.display().to_string(),
                    waited_ms: self.timeout.as_millis() as u64,
                });
            }
            std::thread::sleep(self.poll);
        }
    }

    fn write_request(
        &self,
        id: &str,
        kind: &str,
        prompt: &str,
        camera: &Camera,
    ) -> Result<(), ProviderError> {
        let c = camera.center();
        let f = camera.forward_axis();
        let body = format!(
            "{{\n  \"kind\": \"{kind}\",\n  \"id\": \"{id}\",\n  \"prompt\": {},\n  \
             \"width\": {},\n  \"height\": {},\n  \"fx\": {},\n  \"fy\": {},\n  \
             \"camera_center\": [{}, {}, {}],\n  \"camera_forward\": [{}, {}, {}]\n}}\n",
            serde_json::to_string(prompt).unwrap_or_else(|_| "\"\"".into()),
            camera.width(),
            camera.height(),
            camera.fx(),
            camera.fy(),
            c.x,
            c.y,
            c.z,
            f.x,
            f.y,
            f.z,
        );
        std::fs::write(self.dir.join(format!("{id}_{kind}_request.json")), body)?;
        Ok(())
    }
}

impl FrameProvider for DirectoryProvider {
    fn initial_image(
        &mut self,
        prompt: &str,
        camera: &Camera,
    ) -> Result<ColorImage, ProviderError> {
        let id = self.next_id();
        self.write_request(&id, "initial", prompt, camera)?;
        let path = self.dir.join(format!("{id}_initial.png"));
        self.wait_for(&path)?;
        let img = io::read_png(&path).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        if img.width() != camera.width() || img.height() != camera.height() {
            return Err(ProviderError::Malformed(format!(
                "initial image is {}x{}, expected {}x{}",
                img.width(),
                img.height(),
                camera.width(),
                camera.height()
            )));
        }
        Ok(img)
    }

    fn complete_image(
        &mut self,
        partial: &ColorImage,
        mask: &Mask,
        camera: &Camera,
        prompt: &str,
    ) -> Result<ColorImage, ProviderError> {
        let id = self.next_id();
        io::write_png(partial, &self.dir.join(format!("{id}_partial.png")))
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        io::write_mask_png(mask, &self.dir.join(format!("{id}_mask.png")))
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        self.write_request(&id, "inpaint", prompt, camera)?;
        let path = self.dir.join(format!("{id}_inpainted.png"));
        self.wait_for(&path)?;
        let img = io::read_png(&path).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        super::provider::check_mask_preservation(partial, mask, &img)?;
        Ok(img)
    }

    fn estimate_depth(
        &mut self,
        image: &ColorImage,
        camera: &Camera,
    ) -> Result<DepthMap, ProviderError> {
        let id = self.next_id();
        io::write_png(image, &self.dir.join(format!("{id}_image.png")))
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        self.write_request(&id, "depth", "", camera)?;
        let path = self.dir.join(format!("{id}_depth.pfm"));
        self.wait_for(&path)?;
        let depth = io::read_pfm(&path).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        if depth.width() != camera.width() || depth.height() != camera.height() {
            return Err(ProviderError::Malformed("depth map resolution mismatch".into()));
        }
        Ok(depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    fn camera() -> Camera {
        Camera::from_params(
            20.0,
            20.0,
            8.0,
            8.0,
            Matrix3::identity(),
            Vector3::zeros(),
            16,
            16,
        )
        .unwrap()
    }

    #[test]
    fn replay_mode_consumes_prepopulated_responses() {
        let dir = tempfile::tempdir().unwrap();
        let cam = camera();
        let img = ColorImage::new(16, 16, [0.25, 0.5, 0.75]);
        io::write_png(&img, &dir.path().join("000_initial.png")).unwrap();
        let mut p = provider_directory(dir.path(), 500).unwrap();
        let got = p.initial_image("prompt", &cam).unwrap();
        assert_eq!(got, img);
        assert!(dir.path().join("000_initial_request.json").exists());
    }

    #[test]
    fn missing_response_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let cam = camera();
        let mut p = provider_directory(dir.path(), 80).unwrap();
        let err = p.initial_image("prompt", &cam).unwrap_err();
        assert!(matches!(err, ProviderError::Timeout { .. }), "{err}");
    }

    #[test]
    fn mask_violating_response_is_rejected_with_diff() {
        let dir = tempfile::tempdir().unwrap();
        let cam = camera();
        let partial = ColorImage::new(16, 16, [0.2, 0.2, 0.2]);
        let mut mask = Mask::filled(16, 16, true);
        mask.set(3, 3, false);
        // response alters a preserved pixel
        let mut bad = partial.clone();
        bad.set(5, 5, [1.0, 0.0, 0.0]);
        bad.set(3, 3, [0.9, 0.9, 0.9]); // allowed: mask=0
        io::write_png(&bad, &dir.path().join("000_inpainted.png")).unwrap();
        let mut p = provider_directory(dir.path(), 500).unwrap();
        let err = p.complete_image(&partial, &mask, &cam, "x").unwrap_err();
        match err {
            ProviderError::MaskViolation { changed, first } => {
                assert_eq!(changed, 1);
                assert_eq!(first, (5, 5));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn malformed_response_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cam = camera();
        std::fs::write(dir.path().join("000_initial.png"), b"not a png").unwrap();
        let mut p = provider_directory(dir.path(), 500).unwrap();
        let err = p.initial_image("x", &cam).unwrap_err();
        assert!(matches!(err, ProviderError::Malformed(_)), "{err}");
    }
}
