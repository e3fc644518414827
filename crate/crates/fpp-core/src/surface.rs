//! Analytic scene geometry: planes, spheres, and bilinear height fields.
//!
//! All coordinates are meters in the world (camera) frame; the camera
//! looks along +z, so a "plane at z0" is a fronto-parallel wall.

use crate::error::{FppError, Result};
use crate::geometry::Ray;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// A rectangular grid of height offsets over an (x, y) footprint, sampled
/// bilinearly. The surface is `z = base_z + h(x, y)` inside the footprint
/// and absent outside it. An optional yaw rotates the sampling coordinates
/// about the footprint center (used for dataset pose augmentation).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HeightField {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub base_z: f64,
    pub nx: usize,
    pub ny: usize,
    pub heights: Vec<f64>,
    #[serde(default)]
    pub yaw_deg: f64,
}

impl HeightField {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.heights.len() != self.nx * self.ny {
            return Err(FppError::InvalidArgument(format!(
                "height field grid {}x{} with {} samples",
                self.nx,
                self.ny,
                self.heights.len()
            )));
        }
        if !(self.x1 > self.x0 && self.y1 > self.y0) {
            return Err(FppError::InvalidArgument("degenerate height-field footprint".into()));
        }
        if self.heights.iter().any(|h| !h.is_finite()) {
            return Err(FppError::InvalidArgument("non-finite height sample".into()));
        }
        Ok(())
    }

    pub fn grid_spacing(&self) -> f64 {
        let dx = (self.x1 - self.x0) / (self.nx - 1) as f64;
        let dy = (self.y1 - self.y0) / (self.ny - 1) as f64;
        dx.min(dy)
    }

    /// Bilinear height at (x, y); `None` outside the footprint.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (x, y) = if self.yaw_deg != 0.0 {
            let cx = 0.5 * (self.x0 + self.x1);
            let cy = 0.5 * (self.y0 + self.y1);
            let a = (-self.yaw_deg).to_radians();
            let (dx, dy) = (x - cx, y - cy);
            (cx + dx * a.cos() - dy * a.sin(), cy + dx * a.sin() + dy * a.cos())
        } else {
            (x, y)
        };
        if x < self.x0 || x > self.x1 || y < self.y0 || y > self.y1 {
            return None;
        }
        let fx = (x - self.x0) / (self.x1 - self.x0) * (self.nx - 1) as f64;
        let fy = (y - self.y0) / (self.y1 - self.y0) * (self.ny - 1) as f64;
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let h = |i: usize, j: usize| self.heights[j * self.nx + i];
        let top = h(i, j) * (1.0 - tx) + h(i + 1, j) * tx;
        let bot = h(i, j + 1) * (1.0 - tx) + h(i + 1, j + 1) * tx;
        Some(top * (1.0 - ty) + bot * ty)
    }

    fn z_range(&self) -> (f64, f64) {
        let lo = self.heights.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.heights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (self.base_z + lo, self.base_z + hi)
    }
}

/// Scene geometry variants.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Surface {
    Plane { z0: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    HeightField(HeightField),
}

impl Surface {
    pub fn validate(&self) -> Result<()> {
        match self {
            Surface::Plane { z0 } => {
                if !z0.is_finite() {
                    return Err(FppError::NonFinite(*z0));
                }
            }
            Surface::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(FppError::InvalidArgument(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
            }
            Surface::HeightField(hf) => hf.validate()?,
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|_| FppError::MissingFile(path.as_ref().display().to_string()))?;
        let s: Surface = serde_json::from_reader(f)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    /// Nearest intersection with `s > eps`, or `None` on a miss.
    /// The ray direction must be normalized.
    pub fn intersect(&self, ray: &Ray) -> Option<Vector3<f64>> {
        const S_MIN: f64 = 1e-9;
        match self {
            Surface::Plane { z0 } => {
                if ray.direction.z.abs() < 1e-15 {
                    return None;
                }
                let s = (z0 - ray.origin.z) / ray.direction.z;
                (s > S_MIN).then(|| ray.at(s))
            }
            Surface::Sphere { center, radius } => {
                let oc = ray.origin - Vector3::from(*center);
                let b = oc.dot(&ray.direction);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let s = if -b - sq > S_MIN {
                    -b - sq
                } else if -b + sq > S_MIN {
                    -b + sq
                } else {
                    return None;
                };
                Some(ray.at(s))
            }
            Surface::HeightField(hf) => intersect_height_field(hf, ray),
        }
    }
}

/// Marching + bisection intersection for a bilinear height field: step
/// half the grid spacing until the signed gap `ray_z - surface_z` changes
/// sign, then 40 bisection iterations.
fn intersect_height_field(hf: &HeightField, ray: &Ray) -> Option<Vector3<f64>> {
    let (z_lo, z_hi) = hf.z_range();
    let step = 0.5 * hf.grid_spacing();
    // restrict to the slab containing the surface, padded so a flat
    // field (zero-thickness slab) still produces a bracketing interval
    let (s_enter, s_exit) = if ray.direction.z.abs() > 1e-12 {
        let a = (z_lo - ray.origin.z) / ray.direction.z;
        let b = (z_hi - ray.origin.z) / ray.direction.z;
        ((a.min(b) - step).max(0.0), a.max(b) + step)
    } else {
        (0.0, 10.0)
    };
    if s_exit <= s_enter {
        return None;
    }
    let gap = |s: f64| -> Option<f64> {
        let p = ray.at(s);
        hf.sample(p.x, p.y).map(|h| p.z - (hf.base_z + h))
    };
    let mut s_prev = s_enter;
    let mut g_prev = gap(s_prev);
    let n_steps = ((s_exit - s_enter) / step).ceil() as usize + 1;
    for k in 1..=n_steps {
        let s = (s_enter + k as f64 * step).min(s_exit);
        let g = gap(s);
        if let (Some(a), Some(b)) = (g_prev, g) {
            if a.signum() != b.signum() || b == 0.0 {
                // bisection refinement
                let (mut lo, mut hi) = (s_prev, s);
                let mut g_lo = a;
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    let gm = gap(mid).unwrap_or(g_lo);
                    if gm.signum() == g_lo.signum() {
                        lo = mid;
                        g_lo = gm;
                    } else {
                        hi = mid;
                    }
                }
                return Some(ray.at(0.5 * (lo + hi)));
            }
        }
        s_prev = s;
        g_prev = g;
        if s >= s_exit {
            break;
        }
    }
    None
}
