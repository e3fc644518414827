//! Grid types, wrap arithmetic and rounding conventions shared by every
//! other module.
//!
//! A [`Raster`] is a dense row-major grid of `f64` with an embedded
//! per-pixel validity flag. Invalid pixels carry the value 0 and stay
//! invalid through every downstream operation.

use crate::error::{FppError, Result};
use std::f64::consts::PI;

pub const TAU: f64 = 2.0 * PI;

/// What a raster's values mean. Carried through file IO as a header tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    Intensity,
    WrappedPhase,
    UnwrappedPhase,
    FringeOrder,
    Numerator,
    Denominator,
    Modulation,
    Mask,
    Depth,
}

impl RasterKind {
    pub fn tag(self) -> &'static str {
        match self {
            RasterKind::Intensity => "intensity",
            RasterKind::WrappedPhase => "wrapped-phase",
            RasterKind::UnwrappedPhase => "unwrapped-phase",
            RasterKind::FringeOrder => "fringe-order",
            RasterKind::Numerator => "numerator",
            RasterKind::Denominator => "denominator",
            RasterKind::Modulation => "modulation",
            RasterKind::Mask => "mask",
            RasterKind::Depth => "depth",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "intensity" => RasterKind::Intensity,
            "wrapped-phase" => RasterKind::WrappedPhase,
            "unwrapped-phase" => RasterKind::UnwrappedPhase,
            "fringe-order" => RasterKind::FringeOrder,
            "numerator" => RasterKind::Numerator,
            "denominator" => RasterKind::Denominator,
            "modulation" => RasterKind::Modulation,
            "mask" => RasterKind::Mask,
            "depth" => RasterKind::Depth,
            other => return Err(FppError::MalformedHeader(format!("unknown kind tag `{other}`"))),
        })
    }
}

/// Camera or projector pixel coordinate, column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelCoord {
    pub u: usize,
    pub v: usize,
}

/// Dense row-major `f64` grid with a validity mask, top-left origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    kind: RasterKind,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl Raster {
    pub fn new(width: usize, height: usize, kind: RasterKind) -> Result<Self> {
        let len = width
            .checked_mul(height)
            .ok_or(FppError::DimensionOverflow { width: width as u64, height: height as u64 })?;
        if width == 0 || height == 0 {
            return Err(FppError::DimensionOverflow { width: width as u64, height: height as u64 });
        }
        Ok(Raster { width, height, kind, data: vec![0.0; len], valid: vec![true; len] })
    }

    pub fn from_data(width: usize, height: usize, kind: RasterKind, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height || width == 0 || height == 0 {
            return Err(FppError::DimensionMismatch {
                expected: format!("{width}x{height} = {} values", width * height),
                got: format!("{} values", data.len()),
            });
        }
        let valid = vec![true; data.len()];
        Ok(Raster { width, height, kind, data, valid })
    }

    pub fn constant(width: usize, height: usize, kind: RasterKind, value: f64) -> Result<Self> {
        let mut r = Raster::new(width, height, kind)?;
        r.data.fill(value);
        Ok(r)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> RasterKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn idx(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        let i = v * self.width + u;
        self.data[i] = value;
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.width + u]
    }

    /// Marks a pixel invalid; the stored value becomes 0.
    pub fn invalidate(&mut self, u: usize, v: usize) {
        let i = v * self.width + u;
        self.valid[i] = false;
        self.data[i] = 0.0;
    }

    pub fn invalidate_idx(&mut self, i: usize) {
        self.valid[i] = false;
        self.data[i] = 0.0;
    }

    pub fn set_kind(&mut self, kind: RasterKind) {
        self.kind = kind;
    }

    pub fn same_dims(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn expect_same_dims(&self, other: &Raster) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(FppError::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                got: format!("{}x{}", other.width, other.height),
            })
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Copies `other`'s invalid pixels onto `self` (validity AND).
    pub fn intersect_validity(&mut self, other: &Raster) {
        for i in 0..self.data.len() {
            if !other.valid[i] {
                self.valid[i] = false;
                self.data[i] = 0.0;
            }
        }
    }

    /// Applies a 0/1 mask raster: pixels where the mask is 0 become invalid.
    pub fn apply_mask(&mut self, mask: &Raster) -> Result<()> {
        self.expect_same_dims(mask)?;
        for i in 0..self.data.len() {
            if mask.data[i] == 0.0 || !mask.valid[i] {
                self.valid[i] = false;
                self.data[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Materializes the validity flags as a 0/1 mask raster.
    pub fn validity_raster(&self) -> Raster {
        let data = self.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        Raster {
            width: self.width,
            height: self.height,
            kind: RasterKind::Mask,
            data,
            valid: vec![true; self.valid.len()],
        }
    }

    /// Restores validity flags from a 0/1 mask raster produced by
    /// [`Raster::validity_raster`].
    pub fn adopt_mask(&mut self, mask: &Raster) -> Result<()> {
        self.expect_same_dims(mask)?;
        for i in 0..self.data.len() {
            if mask.data[i] == 0.0 {
                self.valid[i] = false;
                self.data[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Checks the value invariants implied by the raster kind on valid pixels.
    pub fn validate(&self) -> Result<()> {
        for (i, &x) in self.data.iter().enumerate() {
            if !self.valid[i] {
                continue;
            }
            let ok = match self.kind {
                RasterKind::WrappedPhase => x > -PI && x <= PI,
                RasterKind::Mask => x == 0.0 || x == 1.0,
                RasterKind::FringeOrder => x.fract() == 0.0,
                _ => x.is_finite(),
            };
            if !ok {
                return Err(FppError::InvalidArgument(format!(
                    "value {x} at index {i} violates {} invariant",
                    self.kind.tag()
                )));
            }
        }
        Ok(())
    }
}

/// Wraps an angle into the half-open range `(-pi, pi]`.
pub fn wrap(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(FppError::NonFinite(x));
    }
    Ok(wrap_unchecked(x))
}

#[inline]
pub(crate) fn wrap_unchecked(x: f64) -> f64 {
    let r = x.rem_euclid(TAU); // [0, 2pi)
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Rounds to the nearest integer, ties away from zero.
pub fn round_half_away(x: f64) -> Result<i64> {
    if !x.is_finite() {
        return Err(FppError::NonFinite(x));
    }
    // f64::round already rounds half away from zero.
    Ok(x.round() as i64)
}

/// Smallest integer `>= x`.
pub fn ceil_int(x: f64) -> Result<i64> {
    if !x.is_finite() {
        return Err(FppError::NonFinite(x));
    }
    Ok(x.ceil() as i64)
}
