//! Computer-side fringe pattern generation.
//!
//! The projector displays vertical sinusoidal stripes: intensity depends
//! only on the projector column, `I = 127.5 * (1 + cos(2*pi*u_p/pitch + delta_n))`,
//! with the N equally spaced phase shifts `delta_n = 2*pi*(n-1)/N`.

use crate::error::{FppError, Result};
use crate::par::for_each_row;
use crate::raster::{Raster, RasterKind, TAU};

/// Parameters of a fringe pattern set: pitch (pixels per period), step
/// count, and the projector resolution it is rendered at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSpec {
    pub pitch: f64,
    pub steps: usize,
    pub width: usize,
    pub height: usize,
}

impl PatternSpec {
    pub fn new(pitch: f64, steps: usize, width: usize, height: usize) -> Result<Self> {
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(FppError::InvalidArgument(format!("pitch must be positive, got {pitch}")));
        }
        if steps < 3 {
            return Err(FppError::InvalidArgument(format!(
                "at least 3 phase-shift steps required, got {steps}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(FppError::DimensionOverflow { width: width as u64, height: height as u64 });
        }
        Ok(PatternSpec { pitch, steps, width, height })
    }

    /// Fringe frequency, projector width over pitch.
    pub fn frequency(&self) -> f64 {
        self.width as f64 / self.pitch
    }
}

/// The N phase shifts `delta_n = 2*pi*(n-1)/N`, n = 1..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSchedule {
    deltas: Vec<f64>,
}

impl ShiftSchedule {
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }
}

pub fn make_schedule(steps: usize) -> Result<ShiftSchedule> {
    if steps < 3 {
        return Err(FppError::InvalidArgument(format!(
            "at least 3 phase-shift steps required, got {steps}"
        )));
    }
    let deltas = (0..steps).map(|n| TAU * n as f64 / steps as f64).collect();
    Ok(ShiftSchedule { deltas })
}

/// Unwrapped projector phase at column `u_p`: `2*pi*u_p/pitch`.
pub fn projector_phase(spec: &PatternSpec, u_p: usize) -> Result<f64> {
    if u_p >= spec.width {
        return Err(FppError::InvalidArgument(format!(
            "column {u_p} out of range 0..{}",
            spec.width
        )));
    }
    Ok(TAU * u_p as f64 / spec.pitch)
}

/// Renders the n-th pattern (1-based step index) at projector resolution.
pub fn generate_pattern(spec: &PatternSpec, n: usize) -> Result<Raster> {
    if n < 1 || n > spec.steps {
        return Err(FppError::InvalidArgument(format!("step {n} out of range 1..={}", spec.steps)));
    }
    let delta = TAU * (n - 1) as f64 / spec.steps as f64;
    let mut out = Raster::new(spec.width, spec.height, RasterKind::Intensity)?;
    let (width, pitch) = (spec.width, spec.pitch);
    for_each_row(out.data_mut(), width, |_, row| {
        for (u, px) in row.iter_mut().enumerate() {
            *px = 127.5 * (1.0 + (TAU * u as f64 / pitch + delta).cos());
        }
    });
    Ok(out)
}

/// The noiseless unwrapped projector phase as a raster, one row value per
/// column, constant along rows.
pub fn pattern_phase_raster(spec: &PatternSpec) -> Result<Raster> {
    let mut out = Raster::new(spec.width, spec.height, RasterKind::UnwrappedPhase)?;
    let (width, pitch) = (spec.width, spec.pitch);
    for_each_row(out.data_mut(), width, |_, row| {
        for (u, px) in row.iter_mut().enumerate() {
            *px = TAU * u as f64 / pitch;
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn schedule_examples() {
        let s3 = make_schedule(3).unwrap();
        assert_eq!(s3.deltas(), &[0.0, TAU / 3.0, 2.0 * TAU / 3.0]);
        let s4 = make_schedule(4).unwrap();
        assert_eq!(s4.deltas(), &[0.0, PI / 2.0, PI, 1.5 * PI]);
        let s15 = make_schedule(15).unwrap();
        assert_eq!(s15.deltas().len(), 15);
        assert_eq!(s15.deltas()[0], 0.0);
        assert!(make_schedule(2).is_err());
    }

    #[test]
    fn schedule_phasor_sum_vanishes() {
        for n in [3usize, 4, 5, 15] {
            let s = make_schedule(n).unwrap();
            let (mut re, mut im) = (0.0, 0.0);
            for &d in s.deltas() {
                re += d.cos();
                im += d.sin();
            }
            assert!(re.abs() < 1e-12 && im.abs() < 1e-12, "N={n}");
        }
    }

    #[test]
    fn projector_phase_examples() {
        let spec = PatternSpec::new(912.0, 15, 912, 4).unwrap();
        assert_eq!(projector_phase(&spec, 0).unwrap(), 0.0);
        assert!((projector_phase(&spec, 456).unwrap() - PI).abs() < 1e-12);
        assert!(projector_phase(&spec, 912).is_err());

        // non-integral period count: 912/15 = 60.8 periods
        let spec = PatternSpec::new(15.0, 15, 913, 4).unwrap();
        let got = projector_phase(&spec, 912).unwrap();
        assert!((got - TAU * 912.0 / 15.0).abs() < 1e-9);
        assert!((got - 382.0).abs() < 0.1, "{got}");
    }

    #[test]
    fn pattern_examples() {
        let spec = PatternSpec::new(304.0, 15, 912, 8).unwrap();
        let p1 = generate_pattern(&spec, 1).unwrap();
        assert!((p1.get(0, 0) - 255.0).abs() < 1e-12);
        assert!(p1.get(152, 3).abs() < 1e-10); // cos(pi) = -1

        let spec = PatternSpec::new(912.0, 15, 912, 8).unwrap();
        let p2 = generate_pattern(&spec, 2).unwrap();
        let expect = 127.5 * (1.0 + (TAU / 15.0).cos());
        assert!((p2.get(0, 0) - expect).abs() < 1e-12);
        assert!((expect - 243.9770).abs() < 1e-4);

        assert!(generate_pattern(&spec, 0).is_err());
        assert!(generate_pattern(&spec, 16).is_err());
    }

    #[test]
    fn pattern_periodic_and_constant_along_rows() {
        let spec = PatternSpec::new(16.0, 4, 64, 6).unwrap();
        let p = generate_pattern(&spec, 3).unwrap();
        for u in 0..48 {
            assert!((p.get(u, 0) - p.get(u + 16, 0)).abs() < 1e-9);
            for v in 1..6 {
                assert_eq!(p.get(u, 0), p.get(u, v));
            }
        }
    }

    #[test]
    fn mean_over_one_period_is_half_scale() {
        let spec = PatternSpec::new(32.0, 5, 64, 1).unwrap();
        let p = generate_pattern(&spec, 2).unwrap();
        let mean: f64 = (0..32).map(|u| p.get(u, 0)).sum::<f64>() / 32.0;
        assert!((mean - 127.5).abs() < 1e-9);
    }
}
