//! The dual-branch fusion network: two convolutional encoders over the
//! high- and low-frequency fringe inputs, channel concatenation at the
//! bottleneck, and two decoders (one per output pair) with skip
//! connections from their own encoder. Heads are 1x1 convolutions to the
//! (numerator, denominator) pair. Forward caches every activation so the
//! reverse pass is exact.

use super::layers::*;
use super::params::ParameterStore;
use super::tensor::Tensor;
use crate::error::{FppError, Result};
use crate::raster::{Raster, RasterKind};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroNetConfig {
    pub height: usize,
    pub width: usize,
    /// Encoder/decoder depth; each level halves the resolution.
    pub levels: usize,
    /// Channels at the first level; doubled per level.
    pub base_channels: usize,
    /// Dropout rate after fusion, in [0, 1). 0 disables dropout.
    pub dropout: f64,
    /// When false, each decoder sees only its own encoder's half of the
    /// fused bottleneck (the cross-branch channels are zeroed) — the
    /// fusion-ablation switch.
    pub fuse_cross: bool,
}

impl Default for MicroNetConfig {
    fn default() -> Self {
        MicroNetConfig {
            height: 32,
            width: 32,
            levels: 2,
            base_channels: 8,
            dropout: 0.0,
            fuse_cross: true,
        }
    }
}

impl MicroNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_channels == 0 {
            return Err(FppError::InvalidArgument(
                "levels and base_channels must be positive".into(),
            ));
        }
        let div = 1 << self.levels;
        if self.height % div != 0 || self.width % div != 0 {
            return Err(FppError::InvalidArgument(format!(
                "{}x{} not divisible by 2^{}",
                self.width, self.height, self.levels
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(FppError::InvalidArgument(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Channels at level `l` (0-based).
    fn channels(&self, l: usize) -> usize {
        self.base_channels << l
    }

    /// Closed-form parameter count; tested against construction.
    ///
    /// Per encoder, level l: conv `c_l x c_{l-1} x 3 x 3 + c_l` with
    /// `c_{-1} = 1`. Per decoder, level l (top-down): transposed conv
    /// `c_in x c_l x 2 x 2 + c_l` (`c_in` = fused width at the bottom,
    /// else `c_{l+1}`), conv `c_l x 2c_l x 3 x 3 + c_l`, plus a
    /// `2 x c_0 x 1 x 1 + 2` head.
    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        // encoders
        for l in 0..self.levels {
            let c_in = if l == 0 { 1 } else { self.channels(l - 1) };
            let c = self.channels(l);
            n += c * c_in * 9 + c;
        }
        n *= 2;
        // decoders
        let mut dec = 0;
        let fused = 2 * self.channels(self.levels - 1);
        for l in (0..self.levels).rev() {
            let c = self.channels(l);
            let c_in = if l == self.levels - 1 { fused } else { self.channels(l + 1) };
            dec += c_in * c * 4 + c; // transposed conv
            dec += c * (2 * c) * 9 + c; // post-skip conv
        }
        dec += 2 * self.base_channels + 2; // head
        n + 2 * dec
    }
}

/// Model = config + named parameters.
pub struct MicroNet {
    pub config: MicroNetConfig,
    pub params: ParameterStore,
}

struct EncoderCache {
    conv_in: Vec<Tensor>,
    act: Vec<Tensor>,
    arg: Vec<Vec<usize>>,
    pool_shape: Vec<(usize, usize, usize)>,
    out: Tensor,
}

struct DecoderCache {
    tconv_in: Vec<Tensor>,
    cat: Vec<Tensor>,
    act: Vec<Tensor>,
}

/// Everything the reverse pass needs.
pub struct ForwardCache {
    enc: [EncoderCache; 2],
    drop_mask: Option<Vec<f64>>,
    dec: [DecoderCache; 2],
}

/// The four output rasters of one forward pass.
pub struct MicroOutput {
    pub m_h: Raster,
    pub d_h: Raster,
    pub m_l: Raster,
    pub d_l: Raster,
}

const BRANCH: [&str; 2] = ["h", "l"];

impl MicroNet {
    /// Builds the parameter layout and applies the seeded initializer.
    pub fn new(config: MicroNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterStore::new();
        for b in BRANCH {
            for l in 0..config.levels {
                let c_in = if l == 0 { 1 } else { config.channels(l - 1) };
                let c = config.channels(l);
                params.push(&format!("enc_{b}.conv{l}.w"), &[c, c_in, 3, 3]);
                params.push(&format!("enc_{b}.conv{l}.b"), &[c]);
            }
        }
        let fused = 2 * config.channels(config.levels - 1);
        for b in BRANCH {
            for l in (0..config.levels).rev() {
                let c = config.channels(l);
                let c_in = if l == config.levels - 1 { fused } else { config.channels(l + 1) };
                params.push(&format!("dec_{b}.up{l}.w"), &[c_in, c, 2, 2]);
                params.push(&format!("dec_{b}.up{l}.b"), &[c]);
                params.push(&format!("dec_{b}.conv{l}.w"), &[c, 2 * c, 3, 3]);
                params.push(&format!("dec_{b}.conv{l}.b"), &[c]);
            }
            params.push(&format!("dec_{b}.head.w"), &[2, config.base_channels, 1, 1]);
            params.push(&format!("dec_{b}.head.b"), &[2]);
        }
        params.init_uniform(seed);
        Ok(MicroNet { config, params })
    }

    pub fn from_store(config: MicroNetConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        let expected = config.parameter_count();
        if params.data.len() != expected {
            return Err(FppError::DimensionMismatch {
                expected: format!("{expected} parameters"),
                got: format!("{}", params.data.len()),
            });
        }
        params.validate()?;
        Ok(MicroNet { config, params })
    }

    fn idx(&self, name: &str) -> usize {
        self.params.find(name).expect("parameter name built by constructor")
    }

    fn check_input(&self, r: &Raster) -> Result<()> {
        if r.width() != self.config.width || r.height() != self.config.height {
            return Err(FppError::DimensionMismatch {
                expected: format!("{}x{}", self.config.width, self.config.height),
                got: format!("{}x{}", r.width(), r.height()),
            });
        }
        Ok(())
    }

    fn run_encoder(&self, branch: usize, input: &Raster) -> EncoderCache {
        let cfg = &self.config;
        let b = BRANCH[branch];
        let mut x = Tensor::from_raster(input);
        let mut conv_in = Vec::new();
        let mut act = Vec::new();
        let mut arg = Vec::new();
        let mut pool_shape = Vec::new();
        for l in 0..cfg.levels {
            let c = cfg.channels(l);
            let w = self.params.slice(self.idx(&format!("enc_{b}.conv{l}.w")));
            let bias = self.params.slice(self.idx(&format!("enc_{b}.conv{l}.b")));
            conv_in.push(x.clone());
            let z = conv_forward(&x, w, bias, c, 3, 1);
            let a = relu_forward(&z);
            pool_shape.push((a.channels, a.height, a.width));
            let (pooled, am) = maxpool_forward(&a);
            act.push(a);
            arg.push(am);
            x = pooled;
        }
        EncoderCache { conv_in, act, arg, pool_shape, out: x }
    }

    fn run_decoder(&self, branch: usize, fused: &Tensor, enc: &EncoderCache) -> DecoderCache {
        let cfg = &self.config;
        let b = BRANCH[branch];
        let mut x = fused.clone();
        let mut tconv_in = Vec::new();
        let mut cat = Vec::new();
        let mut act = Vec::new();
        for l in (0..cfg.levels).rev() {
            let c = cfg.channels(l);
            let up_w = self.params.slice(self.idx(&format!("dec_{b}.up{l}.w")));
            let up_b = self.params.slice(self.idx(&format!("dec_{b}.up{l}.b")));
            tconv_in.push(x.clone());
            let up = tconv_forward(&x, up_w, up_b, c);
            let merged = up.concat(&enc.act[l]).expect("skip dims match by construction");
            let w = self.params.slice(self.idx(&format!("dec_{b}.conv{l}.w")));
            let bias = self.params.slice(self.idx(&format!("dec_{b}.conv{l}.b")));
            let z = conv_forward(&merged, w, bias, c, 3, 1);
            cat.push(merged);
            let a = relu_forward(&z);
            act.push(a.clone());
            x = a;
        }
        DecoderCache { tconv_in, cat, act }
    }

    /// Builds the (possibly ablated) bottleneck for one decoder: own
    /// encoder channels first, cross-branch channels second.
    fn fuse(&self, own: &Tensor, other: &Tensor) -> Tensor {
        if self.config.fuse_cross {
            own.concat(other).expect("encoder outputs share dims")
        } else {
            let zero = Tensor::zeros(other.channels, other.height, other.width);
            own.concat(&zero).expect("encoder outputs share dims")
        }
    }

    /// Forward pass. `dropout_rng` enables the post-fusion dropout
    /// (training); pass `None` for deterministic inference. Invalidity
    /// of input pixels is ignored — masking happens in the losses.
    pub fn forward(
        &self,
        fringe_h: &Raster,
        fringe_l: &Raster,
        dropout_rng: Option<&mut SplitMix64>,
    ) -> Result<(MicroOutput, ForwardCache)> {
        self.check_input(fringe_h)?;
        self.check_input(fringe_l)?;
        let enc_h = self.run_encoder(0, fringe_h);
        let enc_l = self.run_encoder(1, fringe_l);
        let mut fused_h = self.fuse(&enc_h.out, &enc_l.out);
        let mut fused_l = self.fuse(&enc_l.out, &enc_h.out);
        let drop_mask = match (self.config.dropout > 0.0, dropout_rng) {
            (true, Some(rng)) => {
                let keep = 1.0 - self.config.dropout;
                let mask: Vec<f64> = (0..fused_h.len())
                    .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                for (x, m) in fused_h.data.iter_mut().zip(&mask) {
                    *x *= m;
                }
                for (x, m) in fused_l.data.iter_mut().zip(&mask) {
                    *x *= m;
                }
                Some(mask)
            }
            _ => None,
        };
        let dec_h = self.run_decoder(0, &fused_h, &enc_h);
        let dec_l = self.run_decoder(1, &fused_l, &enc_l);
        let head = |branch: usize, dec: &DecoderCache| -> Tensor {
            let b = BRANCH[branch];
            let w = self.params.slice(self.idx(&format!("dec_{b}.head.w")));
            let bias = self.params.slice(self.idx(&format!("dec_{b}.head.b")));
            conv_forward(dec.act.last().unwrap(), w, bias, 2, 1, 0)
        };
        let out_h = head(0, &dec_h);
        let out_l = head(1, &dec_l);
        let output = MicroOutput {
            m_h: out_h.channel_to_raster(0, RasterKind::Numerator)?,
            d_h: out_h.channel_to_raster(1, RasterKind::Denominator)?,
            m_l: out_l.channel_to_raster(0, RasterKind::Numerator)?,
            d_l: out_l.channel_to_raster(1, RasterKind::Denominator)?,
        };
        let cache = ForwardCache {
            enc: [enc_h, enc_l],
            drop_mask,
            dec: [dec_h, dec_l],
        };
        Ok((output, cache))
    }

    /// Reverse pass: folds the loss gradients of the four outputs into a
    /// flat parameter-gradient buffer aligned with `self.params`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_m_h: &Raster,
        grad_d_h: &Raster,
        grad_m_l: &Raster,
        grad_d_l: &Raster,
    ) -> Result<Vec<f64>> {
        self.check_input(grad_m_h)?;
        self.check_input(grad_d_h)?;
        self.check_input(grad_m_l)?;
        self.check_input(grad_d_l)?;
        let cfg = &self.config;
        let mut grad = vec![0.0; self.params.data.len()];
        // gradient flowing into each encoder output (own + cross halves)
        let mut enc_out_grad = [
            Tensor::zeros(cache.enc[0].out.channels, cache.enc[0].out.height, cache.enc[0].out.width),
            Tensor::zeros(cache.enc[1].out.channels, cache.enc[1].out.height, cache.enc[1].out.width),
        ];
        // gradient flowing into each encoder's skip activations
        let mut skip_grad: [Vec<Option<Tensor>>; 2] =
            [vec![None; cfg.levels], vec![None; cfg.levels]];

        for branch in 0..2 {
            let b = BRANCH[branch];
            let dec = &cache.dec[branch];
            let (gm, gd) = if branch == 0 { (grad_m_h, grad_d_h) } else { (grad_m_l, grad_d_l) };
            let mut grad_head = Tensor::zeros(2, cfg.height, cfg.width);
            let plane = cfg.height * cfg.width;
            grad_head.data[..plane].copy_from_slice(gm.data());
            grad_head.data[plane..].copy_from_slice(gd.data());
            // head (1x1 conv)
            let head_w_idx = self.idx(&format!("dec_{b}.head.w"));
            let head_b_idx = self.idx(&format!("dec_{b}.head.b"));
            let head_w = self.params.slice(head_w_idx).to_vec();
            let mut gw = vec![0.0; head_w.len()];
            let mut gb = vec![0.0; 2];
            let mut gx = conv_backward(
                dec.act.last().unwrap(),
                &head_w,
                &grad_head,
                &mut gw,
                &mut gb,
                1,
                0,
            );
            self.params.slice_of_mut(&mut grad, head_w_idx).copy_from_slice(&gw);
            self.params.slice_of_mut(&mut grad, head_b_idx).copy_from_slice(&gb);
            // decoder levels in reverse of forward order (forward went
            // top-down from the bottleneck; cache vectors are in that order)
            for (step, l) in (0..cfg.levels).rev().enumerate().collect::<Vec<_>>().into_iter().rev()
            {
                let c = cfg.channels(l);
                // relu then conv
                let gz = relu_backward(&dec.act[step], &gx);
                let w_idx = self.idx(&format!("dec_{b}.conv{l}.w"));
                let b_idx = self.idx(&format!("dec_{b}.conv{l}.b"));
                let w = self.params.slice(w_idx).to_vec();
                let mut gw = vec![0.0; w.len()];
                let mut gb = vec![0.0; c];
                let gcat = conv_backward(&dec.cat[step], &w, &gz, &mut gw, &mut gb, 3, 1);
                for (dst, src) in self.params.slice_of_mut(&mut grad, w_idx).iter_mut().zip(&gw) {
                    *dst += src;
                }
                for (dst, src) in self.params.slice_of_mut(&mut grad, b_idx).iter_mut().zip(&gb) {
                    *dst += src;
                }
                // split into transposed-conv output and skip halves
                let (g_up, g_skip) = gcat.split(c)?;
                match &mut skip_grad[branch][l] {
                    Some(t) => {
                        for (a, s) in t.data.iter_mut().zip(&g_skip.data) {
                            *a += s;
                        }
                    }
                    slot => *slot = Some(g_skip),
                }
                let up_w_idx = self.idx(&format!("dec_{b}.up{l}.w"));
                let up_b_idx = self.idx(&format!("dec_{b}.up{l}.b"));
                let up_w = self.params.slice(up_w_idx).to_vec();
                let mut guw = vec![0.0; up_w.len()];
                let mut gub = vec![0.0; c];
                gx = tconv_backward(&dec.tconv_in[step], &up_w, &g_up, &mut guw, &mut gub);
                for (dst, src) in self.params.slice_of_mut(&mut grad, up_w_idx).iter_mut().zip(&guw)
                {
                    *dst += src;
                }
                for (dst, src) in self.params.slice_of_mut(&mut grad, up_b_idx).iter_mut().zip(&gub)
                {
                    *dst += src;
                }
            }
            // gx is now the gradient at this decoder's fused bottleneck
            let mut g_fused = gx;
            if let Some(mask) = &cache.drop_mask {
                for (g, m) in g_fused.data.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            let own_c = cache.enc[branch].out.channels;
            let (g_own, g_cross) = g_fused.split(own_c)?;
            for (a, s) in enc_out_grad[branch].data.iter_mut().zip(&g_own.data) {
                *a += s;
            }
            if cfg.fuse_cross {
                let other = 1 - branch;
                for (a, s) in enc_out_grad[other].data.iter_mut().zip(&g_cross.data) {
                    *a += s;
                }
            }
        }

        // encoders in reverse
        for branch in 0..2 {
            let b = BRANCH[branch];
            let enc = &cache.enc[branch];
            let mut gx = enc_out_grad[branch].clone();
            for l in (0..cfg.levels).rev() {
                let mut ga = maxpool_backward(enc.pool_shape[l], &enc.arg[l], &gx);
                if let Some(sg) = &skip_grad[branch][l] {
                    for (a, s) in ga.data.iter_mut().zip(&sg.data) {
                        *a += s;
                    }
                }
                let gz = relu_backward(&enc.act[l], &ga);
                let w_idx = self.idx(&format!("enc_{b}.conv{l}.w"));
                let b_idx = self.idx(&format!("enc_{b}.conv{l}.b"));
                let w = self.params.slice(w_idx).to_vec();
                let mut gw = vec![0.0; w.len()];
                let mut gb = vec![0.0; cfg.channels(l)];
                gx = conv_backward(&enc.conv_in[l], &w, &gz, &mut gw, &mut gb, 3, 1);
                for (dst, src) in self.params.slice_of_mut(&mut grad, w_idx).iter_mut().zip(&gw) {
                    *dst += src;
                }
                for (dst, src) in self.params.slice_of_mut(&mut grad, b_idx).iter_mut().zip(&gb) {
                    *dst += src;
                }
            }
        }
        Ok(grad)
    }
}
