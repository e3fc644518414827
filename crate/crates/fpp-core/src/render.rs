//! The virtual fringe projection rig: per-camera-pixel fringe rendering
//! with exact ground truth.
//!
//! For each camera pixel the renderer casts a ray, intersects the scene,
//! projects the hit point into the projector and evaluates
//! `I = I' + I'' * cos(2*pi*u_p/pitch + delta_n)`. The geometric part is
//! independent of the pattern, so it is traced once into a
//! [`SceneGeometry`] and reused across steps, pitches and noise seeds.

use crate::error::{FppError, Result};
use crate::geometry::RigCalibration;
use crate::par::for_each_row_of;
use crate::pattern::PatternSpec;
use crate::raster::{Raster, RasterKind, TAU};
use crate::rng::pixel_gaussian;
use crate::surface::Surface;
use serde::{Deserialize, Serialize};

/// Default uniform-albedo reflectance: average intensity and modulation.
pub const DEFAULT_I_AVG: f64 = 100.0;
pub const DEFAULT_I_MOD: f64 = 100.0;

/// Additive Gaussian intensity noise plus optional 8-bit quantization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub quantize: bool,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec { sigma: 0.0, quantize: false, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(FppError::InvalidArgument(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct PixelGeom {
    /// Projector column of the surface point seen by this pixel.
    u_p: f64,
    /// Camera-ray hit with the projector pixel in bounds.
    visible: bool,
    /// Hit point is shadowed from the projector by the surface itself.
    occluded: bool,
    /// Depth (world z) of the hit point, meters.
    z: f64,
    /// Hit point world coordinates.
    point: [f64; 3],
}

impl PixelGeom {
    fn miss() -> Self {
        PixelGeom { u_p: 0.0, visible: false, occluded: false, z: 0.0, point: [0.0; 3] }
    }
}

/// Pattern-independent raster of scene geometry under a fixed rig.
pub struct SceneGeometry {
    width: usize,
    height: usize,
    pixels: Vec<PixelGeom>,
}

impl SceneGeometry {
    /// Casts one camera ray per pixel and projects hits into the projector.
    pub fn trace(rig: &RigCalibration, surface: &Surface) -> Result<Self> {
        rig.validate()?;
        surface.validate()?;
        let (width, height) = (rig.camera.width, rig.camera.height);
        let mut pixels = vec![PixelGeom::miss(); width * height];
        let proj_center = rig.projector.center();
        for_each_row_of(&mut pixels, width, |v, row| {
            for (u, px) in row.iter_mut().enumerate() {
                let ray = rig.camera.backproject_ray(u as f64 + 0.5, v as f64 + 0.5);
                let Some(p) = surface.intersect(&ray) else {
                    continue;
                };
                let Ok((u_p, v_p)) = rig.projector.project(p) else {
                    continue;
                };
                if !rig.projector.contains_pixel(u_p, v_p) {
                    continue;
                }
                // self-shadowing: is the line of sight from the projector blocked?
                let to_p = p - proj_center;
                let dist = to_p.norm();
                let shadow_ray =
                    crate::geometry::Ray { origin: proj_center, direction: to_p / dist };
                let occluded = match surface.intersect(&shadow_ray) {
                    Some(q) => (q - proj_center).norm() < dist - 1e-6,
                    None => false,
                };
                *px = PixelGeom {
                    u_p,
                    visible: true,
                    occluded,
                    z: p.z,
                    point: [p.x, p.y, p.z],
                };
            }
        });
        Ok(SceneGeometry { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Geometric validity: hit with an in-bounds projector pixel.
    pub fn mask_raster(&self) -> Raster {
        let mut m = Raster::new(self.width, self.height, RasterKind::Mask).unwrap();
        for (px, out) in self.pixels.iter().zip(m.data_mut()) {
            *out = if px.visible { 1.0 } else { 0.0 };
        }
        m
    }

    /// True projector column per pixel (the quantity fringes encode).
    pub fn projector_column_raster(&self) -> Raster {
        let mut r = Raster::new(self.width, self.height, RasterKind::Depth).unwrap();
        r.set_kind(RasterKind::Depth);
        for (i, px) in self.pixels.iter().enumerate() {
            if px.visible {
                r.data_mut()[i] = px.u_p;
            } else {
                r.invalidate_idx(i);
            }
        }
        r
    }

    /// Depth (world z, meters) per pixel.
    pub fn depth_raster(&self) -> Raster {
        let mut r = Raster::new(self.width, self.height, RasterKind::Depth).unwrap();
        for (i, px) in self.pixels.iter().enumerate() {
            if px.visible {
                r.data_mut()[i] = px.z;
            } else {
                r.invalidate_idx(i);
            }
        }
        r
    }

    /// Hit point for a pixel, if any.
    pub fn point(&self, u: usize, v: usize) -> Option<[f64; 3]> {
        let px = &self.pixels[v * self.width + u];
        px.visible.then_some(px.point)
    }

    /// Continuous ground-truth unwrapped phase `2*pi*u_p/pitch`, masked.
    pub fn ground_truth_phase(&self, pitch: f64) -> Result<Raster> {
        if !(pitch > 0.0) {
            return Err(FppError::InvalidArgument(format!("pitch must be positive, got {pitch}")));
        }
        let mut r = Raster::new(self.width, self.height, RasterKind::UnwrappedPhase)?;
        for (i, px) in self.pixels.iter().enumerate() {
            if px.visible {
                r.data_mut()[i] = TAU * px.u_p / pitch;
            } else {
                r.invalidate_idx(i);
            }
        }
        Ok(r)
    }

    /// Renders the n-th phase-shifted fringe image (1-based step) as seen
    /// by the camera. Occluded pixels keep the average intensity but lose
    /// modulation; misses are 0.
    pub fn render_step(
        &self,
        spec: &PatternSpec,
        n: usize,
        noise: &NoiseSpec,
        i_avg: f64,
        i_mod: f64,
    ) -> Result<Raster> {
        if n < 1 || n > spec.steps {
            return Err(FppError::InvalidArgument(format!(
                "step {n} out of range 1..={}",
                spec.steps
            )));
        }
        noise.validate()?;
        let delta = TAU * (n - 1) as f64 / spec.steps as f64;
        let mut out = Raster::new(self.width, self.height, RasterKind::Intensity)?;
        let pitch = spec.pitch;
        let pixels = &self.pixels;
        let width = self.width;
        // step index folds the pitch so different-frequency stacks with the
        // same seed draw independent noise
        let noise_step = n.wrapping_add((pitch.to_bits() as usize).wrapping_mul(0x1000));
        let (sigma, quantize, seed) = (noise.sigma, noise.quantize, noise.seed);
        crate::par::for_each_row(out.data_mut(), width, |v, row| {
            for (u, px_out) in row.iter_mut().enumerate() {
                let g = &pixels[v * width + u];
                let mut intensity = if g.visible {
                    let modulation = if g.occluded { 0.0 } else { i_mod };
                    i_avg + modulation * (TAU * g.u_p / pitch + delta).cos()
                } else {
                    0.0
                };
                if sigma > 0.0 {
                    intensity += sigma * pixel_gaussian(seed, u, v, noise_step);
                }
                if quantize {
                    intensity = intensity.clamp(0.0, 255.0).round();
                }
                *px_out = intensity;
            }
        });
        Ok(out)
    }

    /// Renders the full N-step stack for one pattern spec.
    pub fn render_stack(
        &self,
        spec: &PatternSpec,
        noise: &NoiseSpec,
    ) -> Result<Vec<Raster>> {
        (1..=spec.steps)
            .map(|n| self.render_step(spec, n, noise, DEFAULT_I_AVG, DEFAULT_I_MOD))
            .collect()
    }
}

/// One-shot render of a single fringe image plus the geometric mask.
pub fn render_fringe(
    rig: &RigCalibration,
    surface: &Surface,
    spec: &PatternSpec,
    n: usize,
    noise: &NoiseSpec,
) -> Result<(Raster, Raster)> {
    let geom = SceneGeometry::trace(rig, surface)?;
    let img = geom.render_step(spec, n, noise, DEFAULT_I_AVG, DEFAULT_I_MOD)?;
    Ok((img, geom.mask_raster()))
}

/// Continuous ground-truth unwrapped phase for a scene at a given pitch.
pub fn render_groundtruth_phase(
    rig: &RigCalibration,
    surface: &Surface,
    pitch: f64,
) -> Result<Raster> {
    SceneGeometry::trace(rig, surface)?.ground_truth_phase(pitch)
}
