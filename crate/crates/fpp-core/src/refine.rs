//! Refined reference phase.
//!
//! Re-encodes the three-frequency-quality reference into a single wrapped
//! phase in the geometric-constraint pitch's range: the unit-frequency
//! phase anchors the mid-frequency one (`Phi_t`), which is scaled by the
//! pitch ratio into the constraint pitch's phase range and rewrapped by
//! subtracting the geometric fringe order `K_z`. Downstream, two wrapped
//! phases then unwrap with the quality of the full three-frequency ladder.

use crate::error::{FppError, Result};
use crate::raster::{Raster, RasterKind, TAU};
use crate::unwrap::{apply_order, lift_unit_phase, two_freq_order};

/// Standard pitches of the refinement pipeline.
pub const PITCH_UNIT: f64 = 912.0;
pub const PITCH_MID: f64 = 114.0;
pub const PITCH_CONSTRAINT: f64 = 304.0;
pub const PITCH_HIGH: f64 = 15.0;

/// The refined reference: its unwrapped and wrapped forms, the sine and
/// cosine re-encodings used as network targets, and the geometric fringe
/// order that ties them together.
#[derive(Debug, Clone)]
pub struct RefinedReference {
    /// Unwrapped reference in the constraint pitch's range.
    pub phi_unwrapped: Raster,
    /// Rewrapped reference, `phi_unwrapped - 2*pi*K_z`.
    pub phi_wrapped: Raster,
    /// `-sin(phi_wrapped)`.
    pub numerator: Raster,
    /// `cos(phi_wrapped)`.
    pub denominator: Raster,
    /// Geometric fringe order at the constraint pitch.
    pub order_z: Raster,
    /// Pitch the reference lives at (the constraint pitch).
    pub pitch: f64,
}

/// The three-frequency reference: anchors the mid-frequency wrapped phase
/// with the unit-frequency one.
/// `Phi_t = phi_mid + 2*pi*Round[((pitch_unit/pitch_mid) phi_unit - phi_mid)/2pi]`.
pub fn three_freq_reference(
    phi_unit: &Raster,
    phi_mid: &Raster,
    pitch_unit: f64,
    pitch_mid: f64,
) -> Result<Raster> {
    phi_unit.expect_same_dims(phi_mid)?;
    let base = lift_unit_phase(phi_unit);
    let order = two_freq_order(phi_mid, &base, pitch_mid, pitch_unit)?;
    apply_order(phi_mid, &order)
}

/// Builds the refined reference from the three-frequency reference and
/// the geometric fringe order at the constraint pitch.
pub fn build_refined(
    phi_t: &Raster,
    order_z: &Raster,
    pitch_mid: f64,
    pitch_constraint: f64,
) -> Result<RefinedReference> {
    phi_t.expect_same_dims(order_z)?;
    if !(pitch_constraint > pitch_mid) {
        return Err(FppError::InvalidArgument(format!(
            "constraint pitch {pitch_constraint} must exceed mid pitch {pitch_mid}"
        )));
    }
    let scale = pitch_mid / pitch_constraint;
    let len = phi_t.len();
    let (w, h) = (phi_t.width(), phi_t.height());
    let mut phi_unwrapped = Raster::new(w, h, RasterKind::UnwrappedPhase)?;
    let mut phi_wrapped = Raster::new(w, h, RasterKind::WrappedPhase)?;
    let mut numerator = Raster::new(w, h, RasterKind::Numerator)?;
    let mut denominator = Raster::new(w, h, RasterKind::Denominator)?;
    for i in 0..len {
        let k = order_z.data()[i];
        if k.fract() != 0.0 {
            return Err(FppError::InvalidArgument(format!(
                "fringe order {k} at index {i} is not integral"
            )));
        }
        if !(phi_t.validity()[i] && order_z.validity()[i]) {
            phi_unwrapped.invalidate_idx(i);
            phi_wrapped.invalidate_idx(i);
            numerator.invalidate_idx(i);
            denominator.invalidate_idx(i);
            continue;
        }
        let unwrapped = scale * phi_t.data()[i];
        let wrapped = unwrapped - TAU * k;
        phi_unwrapped.data_mut()[i] = unwrapped;
        phi_wrapped.data_mut()[i] = wrapped;
        numerator.data_mut()[i] = -wrapped.sin();
        denominator.data_mut()[i] = wrapped.cos();
    }
    Ok(RefinedReference {
        phi_unwrapped,
        phi_wrapped,
        numerator,
        denominator,
        order_z: order_z.clone(),
        pitch: pitch_constraint,
    })
}

/// Unwraps the high-frequency wrapped phase using only the refined
/// reference: re-unwrap `phi_wrapped` with `K_z`, then anchor the
/// high-frequency orders with the pitch ratio.
pub fn two_phase_unwrap(
    phi_h: &Raster,
    reference: &RefinedReference,
    pitch_h: f64,
) -> Result<Raster> {
    let phi_ref = apply_order(&reference.phi_wrapped, &reference.order_z)?;
    let order = two_freq_order(phi_h, &phi_ref, pitch_h, reference.pitch)?;
    apply_order(phi_h, &order)
}
