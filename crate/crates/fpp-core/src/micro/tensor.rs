//! Minimal channel-major (C, H, W) tensor for the small network.

use crate::error::{FppError, Result};
use crate::raster::{Raster, RasterKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_raster(r: &Raster) -> Self {
        Tensor { channels: 1, height: r.height(), width: r.width(), data: r.data().to_vec() }
    }

    /// Extracts one channel as a raster (invalid pixels are the caller's
    /// concern; tensors carry no mask).
    pub fn channel_to_raster(&self, c: usize, kind: RasterKind) -> Result<Raster> {
        if c >= self.channels {
            return Err(FppError::InvalidArgument(format!(
                "channel {c} out of range 0..{}",
                self.channels
            )));
        }
        let plane = self.height * self.width;
        Raster::from_data(self.width, self.height, kind, self.data[c * plane..(c + 1) * plane].to_vec())
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Channel-wise concatenation of two tensors of equal spatial size.
    pub fn concat(&self, other: &Tensor) -> Result<Tensor> {
        if self.height != other.height || self.width != other.width {
            return Err(FppError::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                got: format!("{}x{}", other.width, other.height),
            });
        }
        let mut out = Tensor::zeros(self.channels + other.channels, self.height, self.width);
        out.data[..self.data.len()].copy_from_slice(&self.data);
        out.data[self.data.len()..].copy_from_slice(&other.data);
        Ok(out)
    }

    /// Inverse of [`concat`]: splits the leading `c0` channels off.
    pub fn split(&self, c0: usize) -> Result<(Tensor, Tensor)> {
        if c0 > self.channels {
            return Err(FppError::InvalidArgument(format!(
                "cannot split {c0} channels off a {}-channel tensor",
                self.channels
            )));
        }
        let plane = self.height * self.width;
        let a = Tensor {
            channels: c0,
            height: self.height,
            width: self.width,
            data: self.data[..c0 * plane].to_vec(),
        };
        let b = Tensor {
            channels: self.channels - c0,
            height: self.height,
            width: self.width,
            data: self.data[c0 * plane..].to_vec(),
        };
        Ok((a, b))
    }
}
