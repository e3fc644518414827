//! Temporal phase unwrapping.
//!
//! Two families: multi-frequency unwrapping, where lower-frequency phase
//! maps anchor the fringe order of higher-frequency ones
//! (`K = Round[((pitch_l/pitch_h) Phi_l - phi_h) / 2pi]` applied
//! recursively down a pitch ladder), and the geometric-constraint
//! minimum-phase method, where a synthetic phase map at the closest depth
//! plane removes the ambiguity of a non-unit-frequency reference
//! (`K_z = Ceil[(Phi_min - phi_z) / 2pi]`).

use crate::error::{FppError, Result};
use crate::geometry::RigCalibration;
use crate::phase::WrappedPhaseBundle;
use crate::raster::{Raster, RasterKind, TAU};

/// Ordered pitch ladder, coarsest (largest pitch) first.
pub struct FrequencyLadder<'a> {
    rungs: Vec<(f64, &'a WrappedPhaseBundle)>,
}

impl<'a> FrequencyLadder<'a> {
    /// Pitches must be strictly decreasing and all bundles equally sized.
    pub fn new(rungs: Vec<(f64, &'a WrappedPhaseBundle)>) -> Result<Self> {
        if rungs.len() < 2 {
            return Err(FppError::InvalidArgument(format!(
                "ladder needs at least 2 rungs, got {}",
                rungs.len()
            )));
        }
        for w in rungs.windows(2) {
            if !(w[0].0 > w[1].0) {
                return Err(FppError::InvalidArgument(format!(
                    "pitches must strictly decrease, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
            w[0].1.phi.expect_same_dims(&w[1].1.phi)?;
        }
        Ok(FrequencyLadder { rungs })
    }

    pub fn rungs(&self) -> &[(f64, &'a WrappedPhaseBundle)] {
        &self.rungs
    }
}

/// Geometric-constraint configuration: the rig, the fringe pitch the
/// constraint phase is synthesized at, and the closest depth of interest.
#[derive(Debug, Clone)]
pub struct ZminConfig {
    pub rig: RigCalibration,
    pub pitch: f64,
    pub z_min: f64,
}

/// `Phi = phi + 2*pi*K`. `K` must be integral; `wrap(Phi) == phi` exactly.
pub fn apply_order(phi: &Raster, order: &Raster) -> Result<Raster> {
    phi.expect_same_dims(order)?;
    let mut out = phi.clone();
    out.set_kind(RasterKind::UnwrappedPhase);
    for i in 0..out.len() {
        let k = order.data()[i];
        if k.fract() != 0.0 {
            return Err(FppError::InvalidArgument(format!(
                "fringe order {k} at index {i} is not integral"
            )));
        }
        if order.validity()[i] && out.validity()[i] {
            out.data_mut()[i] += TAU * k;
        } else {
            out.invalidate_idx(i);
        }
    }
    Ok(out)
}

/// Fringe order of the high-frequency phase given an unwrapped reference:
/// `K = Round[((pitch_l/pitch_h) Phi_l - phi_h) / 2pi]`.
pub fn two_freq_order(
    phi_h: &Raster,
    phi_l_unwrapped: &Raster,
    pitch_h: f64,
    pitch_l: f64,
) -> Result<Raster> {
    if !(pitch_l > pitch_h) {
        return Err(FppError::InvalidArgument(format!(
            "reference pitch {pitch_l} must exceed target pitch {pitch_h}"
        )));
    }
    phi_h.expect_same_dims(phi_l_unwrapped)?;
    let ratio = pitch_l / pitch_h;
    let mut order = Raster::new(phi_h.width(), phi_h.height(), RasterKind::FringeOrder)?;
    for i in 0..order.len() {
        if phi_h.validity()[i] && phi_l_unwrapped.validity()[i] {
            let k = (ratio * phi_l_unwrapped.data()[i] - phi_h.data()[i]) / TAU;
            order.data_mut()[i] = k.round();
        } else {
            order.invalidate_idx(i);
        }
    }
    Ok(order)
}

/// Lifts a unit-frequency wrapped phase to its absolute range [0, 2*pi):
/// one fringe spans the full pattern, so the only ambiguity is the sign
/// branch of the wrap.
pub fn lift_unit_phase(phi: &Raster) -> Raster {
    let mut out = phi.clone();
    out.set_kind(RasterKind::UnwrappedPhase);
    for x in out.data_mut() {
        if *x < 0.0 {
            *x += TAU;
        }
    }
    out
}

/// Recursive multi-frequency unwrapping down the ladder. The first rung
/// must be the unit frequency (one fringe across the pattern); its
/// wrapped phase is lifted to [0, 2*pi) and taken as absolute.
pub fn ladder_unwrap(ladder: &FrequencyLadder) -> Result<Raster> {
    let rungs = ladder.rungs();
    let (_, base) = &rungs[0];
    let mut phi_ref = lift_unit_phase(&base.phi);
    let mut pitch_ref = rungs[0].0;
    for &(pitch, bundle) in &rungs[1..] {
        let order = two_freq_order(&bundle.phi, &phi_ref, pitch, pitch_ref)?;
        phi_ref = apply_order(&bundle.phi, &order)?;
        pitch_ref = pitch;
    }
    Ok(phi_ref)
}

/// Synthetic unwrapped phase of the plane `z = z_min` as seen by the
/// camera: per pixel, intersect the camera ray with the plane and read
/// the projector phase there. Pixels whose ray misses the plane or whose
/// plane point falls outside the projector frustum are invalid.
pub fn phi_min(cfg: &ZminConfig) -> Result<Raster> {
    cfg.rig.validate()?;
    if !(cfg.pitch > 0.0) {
        return Err(FppError::InvalidArgument(format!("pitch must be positive, got {}", cfg.pitch)));
    }
    let cam = &cfg.rig.camera;
    let proj = &cfg.rig.projector;
    let mut out = Raster::new(cam.width, cam.height, RasterKind::UnwrappedPhase)?;
    let width = cam.width;
    let pitch = cfg.pitch;
    let z_min = cfg.z_min;
    let mut invalid = Vec::new();
    for v in 0..cam.height {
        for u in 0..width {
            let ray = cam.backproject_ray(u as f64 + 0.5, v as f64 + 0.5);
            if ray.direction.z.abs() < 1e-15 {
                invalid.push((u, v));
                continue;
            }
            let s = (z_min - ray.origin.z) / ray.direction.z;
            if s <= 0.0 {
                invalid.push((u, v));
                continue;
            }
            match proj.project(ray.at(s)) {
                Ok((u_p, _)) => out.set(u, v, TAU * u_p / pitch),
                Err(_) => invalid.push((u, v)),
            }
        }
    }
    for (u, v) in invalid {
        out.invalidate(u, v);
    }
    Ok(out)
}

/// Fringe order from the geometric constraint:
/// `K_z = Ceil[(Phi_min - phi_z) / 2pi]`.
pub fn zmin_order(phi_z: &Raster, phi_min_map: &Raster) -> Result<Raster> {
    phi_z.expect_same_dims(phi_min_map)?;
    let mut order = Raster::new(phi_z.width(), phi_z.height(), RasterKind::FringeOrder)?;
    for i in 0..order.len() {
        if phi_z.validity()[i] && phi_min_map.validity()[i] {
            let k = (phi_min_map.data()[i] - phi_z.data()[i]) / TAU;
            order.data_mut()[i] = k.ceil();
        } else {
            order.invalidate_idx(i);
        }
    }
    Ok(order)
}

/// Unwraps a wrapped phase against the geometric constraint in one call.
pub fn zmin_unwrap(phi_z: &Raster, phi_min_map: &Raster) -> Result<Raster> {
    let order = zmin_order(phi_z, phi_min_map)?;
    apply_order(phi_z, &order)
}
