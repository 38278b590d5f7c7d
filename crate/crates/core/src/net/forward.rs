use lhdr_tensor::{ops, Element, Eval, Ops, Tensor};

use super::masks::{bright_invalid_mask, bright_valid_mask};
use super::{Model, Params};
use crate::image::{Domain, Image};
use crate::{Error, Result};

/// Reflect-pads the bottom and right edges up to `h`×`w`.
pub fn reflect_pad<T: Element>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let d = t.dims();
    if d.h == h && d.w == w {
        return t.clone();
    }
    Tensor::from_fn(d.with_hw(h, w), |[n, c, y, x]| t.at(n, c, reflect(y, d.h), reflect(x, d.w)))
}

fn reflect(mut i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i %= period;
    if i < n {
        i
    } else {
        period - i
    }
}

struct Net<'a, V> {
    model: &'a Model,
    p: &'a Params<V>,
    slope: f64,
    res: f64,
}

impl<V: Clone> Net<'_, V> {
    fn layer(&self, name: &str) -> Result<usize> {
        self.model
            .layer_index(name)
            .ok_or_else(|| Error::invalid(format!("model has no layer {name}")))
    }

    fn conv<T: Element, O: Ops<T, Value = V>>(&self, ops: &mut O, name: &str, x: &V) -> Result<V> {
        let i = self.layer(name)?;
        let spec = &self.model.layers()[i].conv;
        Ok(ops.conv2d(x, spec, &self.p.weights[i], Some(&self.p.biases[i]))?)
    }

    fn conv_act<T: Element, O: Ops<T, Value = V>>(&self, ops: &mut O, name: &str, x: &V) -> Result<V> {
        let y = self.conv(ops, name, x)?;
        Ok(ops.leaky_relu(&y, self.slope))
    }

    fn pconv<T: Element, O: Ops<T, Value = V>>(
        &self,
        ops: &mut O,
        name: &str,
        x: &V,
        mask: &Tensor<T>,
    ) -> Result<(V, Tensor<T>)> {
        let i = self.layer(name)?;
        let spec = &self.model.layers()[i].conv;
        Ok(ops.partial_conv2d(x, mask, spec, &self.p.weights[i], &self.p.biases[i])?)
    }

    /// `x + k·b(lrelu(a(lrelu(sft(x)))))`
    fn sft_block<T: Element, O: Ops<T, Value = V>>(
        &self,
        ops: &mut O,
        prefix: &str,
        x: &V,
        cond: &V,
    ) -> Result<V> {
        let alpha = self.conv(ops, &format!("{prefix}.alpha"), cond)?;
        let beta = self.conv(ops, &format!("{prefix}.beta"), cond)?;
        let s = ops.sft(x, &alpha, &beta)?;
        let s = ops.leaky_relu(&s, self.slope);
        let a = self.conv_act(ops, &format!("{prefix}.a"), &s)?;
        let b = self.conv(ops, &format!("{prefix}.b"), &a)?;
        let b = ops.scale(&b, self.res);
        Ok(ops.add(x, &b)?)
    }

    /// `x + k·b(lrelu(a(x)))` with both convolutions partial; returns the
    /// propagated mask.
    fn pconv_block<T: Element, O: Ops<T, Value = V>>(
        &self,
        ops: &mut O,
        prefix: &str,
        x: &V,
        mask: &Tensor<T>,
    ) -> Result<(V, Tensor<T>)> {
        let (a, m1) = self.pconv(ops, &format!("{prefix}.a"), x, mask)?;
        let a = ops.leaky_relu(&a, self.slope);
        let (b, m2) = self.pconv(ops, &format!("{prefix}.b"), &a, &m1)?;
        let b = ops.scale(&b, self.res);
        Ok((ops.add(x, &b)?, m2))
    }
}

fn net<'a, V>(model: &'a Model, p: &'a Params<V>) -> Net<'a, V> {
    Net {
        model,
        p,
        slope: model.config().leaky_slope,
        res: model.config().residual_scale,
    }
}

/// Encoder features per level, finest first, plus the condition features
/// per level. Inputs must already be padded to the size multiple.
pub fn encoder_forward<T: Element, O: Ops<T>>(
    ops: &mut O,
    model: &Model,
    p: &Params<O::Value>,
    x: &O::Value,
    prior: &Tensor<T>,
) -> Result<(Vec<O::Value>, Vec<O::Value>)> {
    let cfg = model.config();
    let n = net(model, p);

    let valid = bright_valid_mask(prior, cfg.mask_threshold);
    let pv = ops.constant(prior.clone());
    let weighted = ops.mask_mul(&pv, &valid)?;
    let c = n.conv_act(ops, "cond.0", &weighted)?;
    let mut conds = vec![n.conv_act(ops, "cond.1", &c)?];
    for l in 1..=cfg.unet_levels {
        let next = ops.down2(&conds[l - 1])?;
        conds.push(next);
    }

    let mut mask = bright_invalid_mask(prior, cfg.mask_threshold);
    let mut f = if cfg.use_partial_conv {
        let (f, m) = n.pconv(ops, "unet.head", x, &mask)?;
        mask = m;
        f
    } else {
        n.conv(ops, "unet.head", x)?
    };
    f = ops.leaky_relu(&f, n.slope);

    let mut skips = Vec::with_capacity(cfg.unet_levels + 1);
    for l in 0..=cfg.unet_levels {
        if l > 0 {
            f = ops.down2(&f)?;
            let name = format!("unet.down{l}");
            if cfg.use_partial_conv {
                mask = ops::down2(&mask)?;
                let (g, m) = n.pconv(ops, &name, &f, &mask)?;
                f = g;
                mask = m;
            } else {
                f = n.conv(ops, &name, &f)?;
            }
            f = ops.leaky_relu(&f, n.slope);
        }
        for r in 0..cfg.unet_rb_per_level {
            let prefix = format!("unet.enc{l}.rb{r}");
            if cfg.use_partial_conv {
                let (g, m) = n.pconv_block(ops, &prefix, &f, &mask)?;
                f = g;
                mask = m;
            } else {
                f = n.sft_block(ops, &prefix, &f, &conds[l])?;
            }
        }
        skips.push(f.clone());
    }
    Ok((skips, conds))
}

/// Local network: dense branch and masked encoder-decoder, fused to three
/// channels. Any spatial size is accepted; the input is reflect-padded to
/// the size multiple and the output cropped back.
pub fn local_net_forward<T: Element, O: Ops<T>>(
    ops: &mut O,
    model: &Model,
    p: &Params<O::Value>,
    x: &Tensor<T>,
    prior: &Tensor<T>,
) -> Result<O::Value> {
    let cfg = model.config();
    let d = x.dims();
    if d.c != 3 || prior.dims() != d {
        return Err(Error::invalid(format!(
            "local network needs matching 3-channel input and prior, got {d} and {}",
            prior.dims()
        )));
    }
    let m = cfg.size_multiple();
    let (ph, pw) = (d.h.div_ceil(m) * m, d.w.div_ceil(m) * m);
    let xv = ops.constant(reflect_pad(x, ph, pw));
    let prior = reflect_pad(prior, ph, pw);
    let n = net(model, p);

    let mut feats = xv.clone();
    let mut dense = None;
    for i in 0..cfg.dense_layers {
        let y = n.conv_act(ops, &format!("dense.{i}"), &feats)?;
        if i + 1 < cfg.dense_layers {
            feats = ops.concat_channels(&feats, &y)?;
        }
        dense = Some(y);
    }
    let dense = dense.expect("at least one dense layer");

    let (skips, conds) = encoder_forward(ops, model, p, &xv, &prior)?;
    let mut f = skips[cfg.unet_levels].clone();
    for l in (0..cfg.unet_levels).rev() {
        let u = ops.up2(&f);
        let c = ops.concat_channels(&u, &skips[l])?;
        f = n.conv_act(ops, &format!("unet.dec{l}.fuse"), &c)?;
        for r in 0..cfg.unet_rb_per_level {
            f = n.sft_block(ops, &format!("unet.dec{l}.rb{r}"), &f, &conds[l])?;
        }
    }

    let both = ops.concat_channels(&dense, &f)?;
    let y = n.conv_act(ops, "local.fuse", &both)?;
    Ok(ops.crop(&y, d.h, d.w)?)
}

/// Global network: pointwise layers with one per-channel modulation driven
/// by pooled prior features, ending in ReLU.
pub fn global_net_forward<T: Element, O: Ops<T>>(
    ops: &mut O,
    model: &Model,
    p: &Params<O::Value>,
    x: &O::Value,
    prior: &Tensor<T>,
) -> Result<O::Value> {
    let cfg = model.config();
    let xd = ops.value(x).dims();
    if xd.c != 3 || prior.dims() != xd {
        return Err(Error::invalid(format!(
            "global network needs matching 3-channel input and prior, got {xd} and {}",
            prior.dims()
        )));
    }
    let n = net(model, p);
    let pv = ops.constant(prior.clone());
    let m = n.conv_act(ops, "global.mod.0", &pv)?;
    let m = n.conv_act(ops, "global.mod.1", &m)?;
    let pooled = ops.global_avg_pool(&m)?;
    let alpha = n.conv(ops, "global.mod.alpha", &pooled)?;
    let beta = n.conv(ops, "global.mod.beta", &pooled)?;

    let mut f = x.clone();
    for i in 0..cfg.global_mlp_layers {
        f = n.conv(ops, &format!("global.mlp.{i}"), &f)?;
        if i + 1 == cfg.modulation_after {
            f = ops.channel_affine(&f, &alpha, &beta)?;
        }
        f = if i + 1 == cfg.global_mlp_layers {
            ops.relu(&f)
        } else {
            ops.leaky_relu(&f, n.slope)
        };
    }
    Ok(f)
}

/// Local network first, then global, both conditioned on the input itself.
pub fn lhdr_forward<T: Element, O: Ops<T>>(
    ops: &mut O,
    model: &Model,
    p: &Params<O::Value>,
    sdr: &Tensor<T>,
) -> Result<O::Value> {
    let local = local_net_forward(ops, model, p, sdr, sdr)?;
    global_net_forward(ops, model, p, &local, sdr)
}

/// Eager single-image inference. Returns the nonlinear-domain HDR estimate.
pub fn infer(model: &Model, sdr: &Image) -> Result<Image> {
    let x = sdr.to_tensor::<f32>();
    let mut ev = Eval;
    let p = model.bind(&mut ev);
    let y = lhdr_forward(&mut ev, model, &p, &x)?;
    Image::from_tensor(&y, 0, Domain::GammaHdr)
}
