//! Training losses with analytic gradients.
//!
//! Three terms: a phase loss comparing the predicted numerators,
//! denominators and unwrapped phase against their targets; a consistency
//! loss comparing spatial gradients of the predicted wrapped phase with
//! those of the target unwrapped phase (away from wrap discontinuities
//! the two agree); and a geometric smoothness prior on the predicted
//! unwrapped phase. Gradients flow to the four predicted rasters through
//! `phi = -atan2(M, D)`; the integer fringe orders inside the unwrapped
//! phase are treated as locally constant (their derivative is zero almost
//! everywhere).

use crate::error::{FppError, Result};
use crate::phase::neg_atan2;
use crate::raster::{Raster, RasterKind, TAU};

/// Weights of the three loss terms. All must be non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub phase: f64,
    pub consistency: f64,
    pub geometric: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { phase: 1.0, consistency: 1e-2, geometric: 1e-6 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for w in [self.phase, self.consistency, self.geometric] {
            if !(w >= 0.0) {
                return Err(FppError::InvalidArgument(format!("loss weight must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Everything needed to lift a predicted wrapped phase to an absolute
/// one: the synthetic minimum phase at the reference pitch and the two
/// pitches of the two-phase unwrap.
#[derive(Debug, Clone)]
pub struct UnwrapContext {
    pub phi_min: Raster,
    pub pitch_ref: f64,
    pub pitch_high: f64,
}

impl UnwrapContext {
    pub fn validate(&self) -> Result<()> {
        if !(self.pitch_ref > self.pitch_high && self.pitch_high > 0.0) {
            return Err(FppError::InvalidArgument(format!(
                "need pitch_ref > pitch_high > 0, got {} and {}",
                self.pitch_ref, self.pitch_high
            )));
        }
        Ok(())
    }
}

/// The four network outputs plus the phases derived from them. The
/// fringe-order maps are frozen at construction; differentiation treats
/// them as constants.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub m_h: Raster,
    pub d_h: Raster,
    pub m_l: Raster,
    pub d_l: Raster,
    /// `-atan2(m_h, d_h)`.
    pub phi_wrapped: Raster,
    /// `phi_wrapped + 2*pi*order`.
    pub phi_unwrapped: Raster,
    /// Frozen fringe order of the high-frequency phase.
    pub order: Raster,
}

impl PredictionSet {
    /// Derives the wrapped and unwrapped phases from the four outputs:
    /// the low branch re-encodes the reference, which the minimum phase
    /// de-ambiguates, and the pitch ratio then anchors the high branch's
    /// fringe order.
    pub fn new(
        m_h: Raster,
        d_h: Raster,
        m_l: Raster,
        d_l: Raster,
        ctx: &UnwrapContext,
    ) -> Result<Self> {
        ctx.validate()?;
        m_h.expect_same_dims(&d_h)?;
        m_h.expect_same_dims(&m_l)?;
        m_h.expect_same_dims(&d_l)?;
        m_h.expect_same_dims(&ctx.phi_min)?;
        let (w, h) = (m_h.width(), m_h.height());
        let ratio = ctx.pitch_ref / ctx.pitch_high;
        let mut phi_wrapped = Raster::new(w, h, RasterKind::WrappedPhase)?;
        let mut phi_unwrapped = Raster::new(w, h, RasterKind::UnwrappedPhase)?;
        let mut order = Raster::new(w, h, RasterKind::FringeOrder)?;
        for i in 0..w * h {
            let valid = m_h.validity()[i]
                && d_h.validity()[i]
                && m_l.validity()[i]
                && d_l.validity()[i]
                && ctx.phi_min.validity()[i]
                && !(m_h.data()[i] == 0.0 && d_h.data()[i] == 0.0)
                && !(m_l.data()[i] == 0.0 && d_l.data()[i] == 0.0);
            if !valid {
                phi_wrapped.invalidate_idx(i);
                phi_unwrapped.invalidate_idx(i);
                order.invalidate_idx(i);
                continue;
            }
            let phi_h = neg_atan2(m_h.data()[i], d_h.data()[i]);
            let phi_r = neg_atan2(m_l.data()[i], d_l.data()[i]);
            let k_z = ((ctx.phi_min.data()[i] - phi_r) / TAU).ceil();
            let phi_ref = phi_r + TAU * k_z;
            let k = ((ratio * phi_ref - phi_h) / TAU).round();
            phi_wrapped.data_mut()[i] = phi_h;
            phi_unwrapped.data_mut()[i] = phi_h + TAU * k;
            order.data_mut()[i] = k;
        }
        Ok(PredictionSet { m_h, d_h, m_l, d_l, phi_wrapped, phi_unwrapped, order })
    }

    /// Rebuilds the derived phases while keeping a frozen fringe order —
    /// the form differentiation assumes. Used by finite-difference
    /// verification.
    pub fn with_frozen_order(
        m_h: Raster,
        d_h: Raster,
        m_l: Raster,
        d_l: Raster,
        order: Raster,
    ) -> Result<Self> {
        m_h.expect_same_dims(&d_h)?;
        m_h.expect_same_dims(&m_l)?;
        m_h.expect_same_dims(&d_l)?;
        m_h.expect_same_dims(&order)?;
        let (w, h) = (m_h.width(), m_h.height());
        let mut phi_wrapped = Raster::new(w, h, RasterKind::WrappedPhase)?;
        let mut phi_unwrapped = Raster::new(w, h, RasterKind::UnwrappedPhase)?;
        for i in 0..w * h {
            let valid = m_h.validity()[i]
                && d_h.validity()[i]
                && order.validity()[i]
                && !(m_h.data()[i] == 0.0 && d_h.data()[i] == 0.0);
            if !valid {
                phi_wrapped.invalidate_idx(i);
                phi_unwrapped.invalidate_idx(i);
                continue;
            }
            let phi_h = neg_atan2(m_h.data()[i], d_h.data()[i]);
            phi_wrapped.data_mut()[i] = phi_h;
            phi_unwrapped.data_mut()[i] = phi_h + TAU * order.data()[i];
        }
        Ok(PredictionSet { m_h, d_h, m_l, d_l, phi_wrapped, phi_unwrapped, order })
    }

    fn pixel_valid(&self, i: usize) -> bool {
        self.phi_wrapped.validity()[i]
    }
}

/// Ground-truth rasters the losses compare against.
#[derive(Debug, Clone)]
pub struct TargetSet {
    pub m_h: Raster,
    pub d_h: Raster,
    pub m_l: Raster,
    pub d_l: Raster,
    /// Absolute high-frequency phase.
    pub phi: Raster,
    /// Quality mask (1 = supervised pixel).
    pub mask: Raster,
}

impl TargetSet {
    pub fn validate_against(&self, pred: &PredictionSet) -> Result<()> {
        for r in [&self.m_h, &self.d_h, &self.m_l, &self.d_l, &self.phi, &self.mask] {
            pred.m_h.expect_same_dims(r)?;
        }
        Ok(())
    }

    fn pixel_valid(&self, i: usize) -> bool {
        self.mask.data()[i] != 0.0
            && self.mask.validity()[i]
            && self.phi.validity()[i]
            && self.m_h.validity()[i]
            && self.d_h.validity()[i]
            && self.m_l.validity()[i]
            && self.d_l.validity()[i]
    }
}

/// Gradient of a scalar loss with respect to the four predicted rasters.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub m_h: Raster,
    pub d_h: Raster,
    pub m_l: Raster,
    pub d_l: Raster,
}

impl LossGrad {
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Ok(LossGrad {
            m_h: Raster::new(width, height, RasterKind::Numerator)?,
            d_h: Raster::new(width, height, RasterKind::Denominator)?,
            m_l: Raster::new(width, height, RasterKind::Numerator)?,
            d_l: Raster::new(width, height, RasterKind::Denominator)?,
        })
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &LossGrad, scale: f64) {
        for (dst, src) in [
            (&mut self.m_h, &other.m_h),
            (&mut self.d_h, &other.d_h),
            (&mut self.m_l, &other.m_l),
            (&mut self.d_l, &other.d_l),
        ] {
            for (a, b) in dst.data_mut().iter_mut().zip(src.data()) {
                *a += scale * b;
            }
        }
    }
}

/// `d phi / d M` and `d phi / d D` for `phi = -atan2(M, D)`.
#[inline]
fn phase_partials(m: f64, d: f64) -> (f64, f64) {
    let r2 = m * m + d * d;
    (-d / r2, m / r2)
}

/// Folds an accumulated `dL/d phi_wrapped` into the high branch's M, D
/// gradients.
fn chain_phi_to_md(pred: &PredictionSet, dphi: &[f64], grad: &mut LossGrad) {
    for i in 0..dphi.len() {
        if dphi[i] != 0.0 && pred.pixel_valid(i) {
            let (dm, dd) = phase_partials(pred.m_h.data()[i], pred.d_h.data()[i]);
            grad.m_h.data_mut()[i] += dphi[i] * dm;
            grad.d_h.data_mut()[i] += dphi[i] * dd;
        }
    }
}

/// Mean over supervised pixels of the five squared errors: the four
/// output rasters and the unwrapped phase.
pub fn phase_loss(pred: &PredictionSet, target: &TargetSet) -> Result<(f64, LossGrad)> {
    target.validate_against(pred)?;
    let (w, h) = (pred.m_h.width(), pred.m_h.height());
    let len = w * h;
    let count = (0..len).filter(|&i| pred.pixel_valid(i) && target.pixel_valid(i)).count();
    if count == 0 {
        return Err(FppError::EmptyMask);
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    let mut grad = LossGrad::zeros(w, h)?;
    let mut dphi = vec![0.0; len];
    for i in 0..len {
        if !(pred.pixel_valid(i) && target.pixel_valid(i)) {
            continue;
        }
        let pairs = [
            (pred.m_h.data()[i], target.m_h.data()[i]),
            (pred.d_h.data()[i], target.d_h.data()[i]),
            (pred.m_l.data()[i], target.m_l.data()[i]),
            (pred.d_l.data()[i], target.d_l.data()[i]),
        ];
        let grads = [
            grad.m_h.data_mut(),
            grad.d_h.data_mut(),
            grad.m_l.data_mut(),
            grad.d_l.data_mut(),
        ];
        let mut gi = grads.into_iter();
        for (p, t) in pairs {
            let e = p - t;
            loss += e * e * inv;
            gi.next().unwrap()[i] += 2.0 * e * inv;
        }
        let e = pred.phi_unwrapped.data()[i] - target.phi.data()[i];
        loss += e * e * inv;
        dphi[i] += 2.0 * e * inv;
    }
    chain_phi_to_md(pred, &dphi, &mut grad);
    Ok((loss, grad))
}

/// Whether wrapping changes the forward difference of the target phase
/// across this pixel pair (a wrap discontinuity sits between them).
fn target_pair_jumps(phi: &Raster, a: usize, b: usize) -> bool {
    let wa = crate::raster::wrap_unchecked(phi.data()[a]);
    let wb = crate::raster::wrap_unchecked(phi.data()[b]);
    let wrapped_diff = wb - wa;
    let true_diff = phi.data()[b] - phi.data()[a];
    (wrapped_diff - true_diff).abs() > 1e-9
}

/// Spatial-gradient agreement between the predicted wrapped phase and
/// the target unwrapped phase: per direction, the mean squared
/// forward-difference error over pairs where the target has no wrap
/// discontinuity.
pub fn consistency_loss(pred: &PredictionSet, target: &TargetSet) -> Result<(f64, LossGrad)> {
    target.validate_against(pred)?;
    let (w, h) = (pred.m_h.width(), pred.m_h.height());
    if w < 2 || h < 2 {
        return Err(FppError::InvalidArgument(format!(
            "consistency loss needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    let phi = &pred.phi_wrapped;
    let mut grad = LossGrad::zeros(w, h)?;
    let mut dphi = vec![0.0; w * h];
    let mut loss = 0.0;
    // horizontal then vertical passes share this closure shape
    for (du, dv) in [(1usize, 0usize), (0, 1)] {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for v in 0..h - dv {
            for u in 0..w - du {
                let a = v * w + u;
                let b = (v + dv) * w + (u + du);
                if pred.pixel_valid(a)
                    && pred.pixel_valid(b)
                    && target.pixel_valid(a)
                    && target.pixel_valid(b)
                    && !target_pair_jumps(&target.phi, a, b)
                {
                    pairs.push((a, b));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let inv = 1.0 / pairs.len() as f64;
        for (a, b) in pairs {
            let e = (phi.data()[b] - phi.data()[a])
                - (target.phi.data()[b] - target.phi.data()[a]);
            loss += e * e * inv;
            dphi[b] += 2.0 * e * inv;
            dphi[a] -= 2.0 * e * inv;
        }
    }
    chain_phi_to_md(pred, &dphi, &mut grad);
    Ok((loss, grad))
}

/// Smoothness prior: per direction, the mean squared neighbor difference
/// of the predicted unwrapped phase.
pub fn geometric_loss(pred: &PredictionSet) -> Result<(f64, LossGrad)> {
    let (w, h) = (pred.m_h.width(), pred.m_h.height());
    if w < 2 || h < 2 {
        return Err(FppError::InvalidArgument(format!(
            "geometric loss needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    let phi = &pred.phi_unwrapped;
    let mut grad = LossGrad::zeros(w, h)?;
    let mut dphi = vec![0.0; w * h];
    let mut loss = 0.0;
    for (du, dv) in [(1usize, 0usize), (0, 1)] {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for v in 0..h - dv {
            for u in 0..w - du {
                let a = v * w + u;
                let b = (v + dv) * w + (u + du);
                if pred.pixel_valid(a) && pred.pixel_valid(b) {
                    pairs.push((a, b));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let inv = 1.0 / pairs.len() as f64;
        for (a, b) in pairs {
            let e = phi.data()[a] - phi.data()[b];
            loss += e * e * inv;
            dphi[a] += 2.0 * e * inv;
            dphi[b] -= 2.0 * e * inv;
        }
    }
    chain_phi_to_md(pred, &dphi, &mut grad);
    Ok((loss, grad))
}

/// Weighted sum of the three terms with the combined gradient.
pub fn total_loss(
    pred: &PredictionSet,
    target: &TargetSet,
    weights: &LossWeights,
) -> Result<(f64, LossGrad)> {
    weights.validate()?;
    let (lp, gp) = phase_loss(pred, target)?;
    let (lc, gc) = consistency_loss(pred, target)?;
    let (lg, gg) = geometric_loss(pred)?;
    let mut grad = LossGrad::zeros(pred.m_h.width(), pred.m_h.height())?;
    grad.add_scaled(&gp, weights.phase);
    grad.add_scaled(&gc, weights.consistency);
    grad.add_scaled(&gg, weights.geometric);
    Ok((weights.phase * lp + weights.consistency * lc + weights.geometric * lg, grad))
}

/// Maximum relative error between the analytic gradient and central
/// finite differences of `loss` over all four input rasters.
pub fn finite_difference_check<F>(
    pred: &PredictionSet,
    loss: F,
    step: f64,
) -> Result<f64>
where
    F: Fn(&PredictionSet) -> Result<(f64, LossGrad)>,
{
    let (_, grad) = loss(pred)?;
    let mut worst: f64 = 0.0;
    let len = pred.m_h.len();
    let rebuild = |m_h: Raster, d_h: Raster, m_l: Raster, d_l: Raster| {
        PredictionSet::with_frozen_order(m_h, d_h, m_l, d_l, pred.order.clone())
    };
    for field in 0..4 {
        for i in 0..len {
            if !pred.pixel_valid(i) {
                continue;
            }
            let eval = |delta: f64| -> Result<f64> {
                let mut rs = [
                    pred.m_h.clone(),
                    pred.d_h.clone(),
                    pred.m_l.clone(),
                    pred.d_l.clone(),
                ];
                rs[field].data_mut()[i] += delta;
                let [a, b, c, d] = rs;
                let p = rebuild(a, b, c, d)?;
                Ok(loss(&p)?.0)
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            let analytic = match field {
                0 => grad.m_h.data()[i],
                1 => grad.d_h.data()[i],
                2 => grad.m_l.data()[i],
                _ => grad.d_l.data()[i],
            };
            // floor keeps finite-difference rounding dust in near-zero
            // entries from dominating the relative error
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
