//! N-step phase-shifting retrieval, modulation masking and input
//! normalization.
//!
//! With images `I_n = I' + I'' cos(phi + 2*pi*n/N)` (n = 0..N-1) the
//! wrapped phase is `phi = -atan2(M, D)` with
//! `M = sum I_n sin(2*pi*n/N)` and `D = sum I_n cos(2*pi*n/N)`; the
//! modulation is `I'' = (2/N) sqrt(M^2 + D^2)`.

use crate::error::{FppError, Result};
use crate::par::for_each_row;
use crate::raster::{Raster, RasterKind, TAU};
use std::f64::consts::PI;

/// Wrapped phase together with the quantities it is derived from.
#[derive(Debug, Clone)]
pub struct WrappedPhaseBundle {
    pub phi: Raster,
    pub numerator: Raster,
    pub denominator: Raster,
    pub modulation: Raster,
    pub mask: Raster,
    /// Number of phase-shift steps the bundle was retrieved from.
    steps: usize,
}

impl WrappedPhaseBundle {
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Converts `-atan2(M, D)` into the `(-pi, pi]` convention.
#[inline]
pub(crate) fn neg_atan2(m: f64, d: f64) -> f64 {
    let phi = -m.atan2(d);
    if phi <= -PI {
        phi + TAU
    } else {
        phi
    }
}

/// Recovers the wrapped phase from an N-step stack (N >= 3 images of
/// equal dimensions). Pixels with `M = D = 0` (no modulation) are invalid.
pub fn retrieve(images: &[Raster]) -> Result<WrappedPhaseBundle> {
    let n = images.len();
    if n < 3 {
        return Err(FppError::InvalidArgument(format!("need at least 3 images, got {n}")));
    }
    let first = &images[0];
    for img in &images[1..] {
        first.expect_same_dims(img)?;
    }
    let (width, height) = (first.width(), first.height());
    let mut numerator = Raster::new(width, height, RasterKind::Numerator)?;
    let mut denominator = Raster::new(width, height, RasterKind::Denominator)?;
    let basis: Vec<(f64, f64)> =
        (0..n).map(|k| ((TAU * k as f64 / n as f64).sin(), (TAU * k as f64 / n as f64).cos())).collect();
    {
        let num = numerator.data_mut();
        // accumulate M and D in one pass per row
        for_each_row(num, width, |v, row| {
            for (u, m_out) in row.iter_mut().enumerate() {
                let i = v * width + u;
                let mut m = 0.0;
                for (img, (s, _)) in images.iter().zip(&basis) {
                    m += img.data()[i] * s;
                }
                *m_out = m;
            }
        });
        let den = denominator.data_mut();
        for_each_row(den, width, |v, row| {
            for (u, d_out) in row.iter_mut().enumerate() {
                let i = v * width + u;
                let mut d = 0.0;
                for (img, (_, c)) in images.iter().zip(&basis) {
                    d += img.data()[i] * c;
                }
                *d_out = d;
            }
        });
    }
    let mut phi = Raster::new(width, height, RasterKind::WrappedPhase)?;
    let mut modulation = Raster::new(width, height, RasterKind::Modulation)?;
    let mut mask = Raster::new(width, height, RasterKind::Mask)?;
    let scale = 2.0 / n as f64;
    for i in 0..width * height {
        let m = numerator.data()[i];
        let d = denominator.data()[i];
        let geom_valid = images.iter().all(|img| img.validity()[i]);
        // relative cutoff: constant stacks leave rounding dust in M and D
        let intensity_scale: f64 = images.iter().map(|img| img.data()[i].abs()).sum();
        if (m * m + d * d).sqrt() <= 1e-12 * intensity_scale || !geom_valid {
            phi.invalidate_idx(i);
            modulation.invalidate_idx(i);
            numerator.invalidate_idx(i);
            denominator.invalidate_idx(i);
            mask.data_mut()[i] = 0.0;
        } else {
            phi.data_mut()[i] = neg_atan2(m, d);
            modulation.data_mut()[i] = scale * (m * m + d * d).sqrt();
            mask.data_mut()[i] = 1.0;
        }
    }
    Ok(WrappedPhaseBundle { phi, numerator, denominator, modulation, mask, steps: n })
}

/// Quality mask: 1 where the modulation exceeds `thrs` AND the pixel is
/// geometrically valid, 0 otherwise.
pub fn modulation_mask(bundle: &WrappedPhaseBundle, thrs: f64) -> Result<Raster> {
    if thrs < 0.0 {
        return Err(FppError::InvalidArgument(format!("threshold must be >= 0, got {thrs}")));
    }
    let mut mask = bundle.mask.clone();
    for i in 0..mask.len() {
        if bundle.modulation.data()[i] <= thrs || !bundle.modulation.validity()[i] {
            mask.data_mut()[i] = 0.0;
        }
    }
    Ok(mask)
}

/// Default modulation threshold.
pub const DEFAULT_MODULATION_THRS: f64 = 8.0;

/// Linear rescale of `(value - lo) / (hi - lo)` clamped to `[0, 1]`.
pub fn normalize01(image: &Raster, lo: f64, hi: f64) -> Result<Raster> {
    if !(hi > lo) {
        return Err(FppError::InvalidArgument(format!("need hi > lo, got lo={lo}, hi={hi}")));
    }
    let mut out = image.clone();
    let inv = 1.0 / (hi - lo);
    for x in out.data_mut() {
        *x = ((*x - lo) * inv).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Min/max scan over a set of images (the dataset-wide normalization
/// bounds).
pub fn intensity_bounds<'a>(images: impl IntoIterator<Item = &'a Raster>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for img in images {
        for (i, &x) in img.data().iter().enumerate() {
            if img.validity()[i] {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}
