use std::collections::HashMap;

use lhdr_tensor::{ConvSpec, Element, Ops, Tensor};

use super::ModelConfig;
use crate::{Error, Result};

/// Where a layer runs, for MAC accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    /// Input is the padded local-network frame divided by this factor.
    Local(usize),
    /// Input is the unpadded frame after this many stride-2 layers.
    Global(usize),
    /// Input is 1×1 after global pooling.
    Pooled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub conv: ConvSpec,
    pub at: Resolution,
}

impl LayerSpec {
    fn new(name: impl Into<String>, conv: ConvSpec, at: Resolution) -> Self {
        LayerSpec {
            name: name.into(),
            conv,
            at,
        }
    }

    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let m = self.conv.weight_len() as u64 / self.conv.out_channels as u64;
        let (ih, iw) = match self.at {
            Resolution::Local(d) => (h / d, w / d),
            Resolution::Global(strided) => {
                let (mut ih, mut iw) = (h, w);
                for _ in 0..strided {
                    (ih, iw) = stride2(ih, iw);
                }
                (ih, iw)
            }
            Resolution::Pooled => (1, 1),
        };
        let (oh, ow) = self.conv.output_hw(ih, iw).unwrap_or((0, 0));
        (oh * ow * self.conv.out_channels) as u64 * m
    }
}

fn stride2(h: usize, w: usize) -> (usize, usize) {
    ConvSpec::same(1, 1, 3).with_stride(2).output_hw(h, w).unwrap()
}

fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

/// Every convolution of the network in a fixed order. Names are stable and
/// double as checkpoint record prefixes.
pub fn layer_inventory(cfg: &ModelConfig) -> Vec<LayerSpec> {
    use Resolution::*;
    let mut v = Vec::new();
    let g = cfg.groups;

    for i in 0..cfg.dense_layers {
        let cin = 3 + cfg.dense_growth * i;
        v.push(LayerSpec::new(format!("dense.{i}"), ConvSpec::same(cin, cfg.dense_growth, 3), Local(1)));
    }

    let cc = cfg.cond_channels;
    v.push(LayerSpec::new("cond.0", ConvSpec::same(3, cc, 3), Local(1)));
    v.push(LayerSpec::new("cond.1", ConvSpec::same(cc, cc, 3), Local(1)));

    let ch0 = cfg.unet_channels(0);
    v.push(LayerSpec::new("unet.head", ConvSpec::same(3, ch0, 3), Local(1)));
    for l in 0..=cfg.unet_levels {
        let ch = cfg.unet_channels(l);
        let d = 1 << l;
        if l > 0 {
            let prev = cfg.unet_channels(l - 1);
            v.push(LayerSpec::new(format!("unet.down{l}"), ConvSpec::same(prev, ch, 3), Local(d)));
        }
        for r in 0..cfg.unet_rb_per_level {
            let p = format!("unet.enc{l}.rb{r}");
            if !cfg.use_partial_conv {
                v.push(LayerSpec::new(format!("{p}.alpha"), ConvSpec::pointwise(cc, ch), Local(d)));
                v.push(LayerSpec::new(format!("{p}.beta"), ConvSpec::pointwise(cc, ch), Local(d)));
            }
            v.push(LayerSpec::new(format!("{p}.a"), ConvSpec::same(ch, ch, 3), Local(d)));
            v.push(LayerSpec::new(format!("{p}.b"), ConvSpec::same(ch, ch, 3).with_groups(g), Local(d)));
        }
    }
    for l in (0..cfg.unet_levels).rev() {
        let ch = cfg.unet_channels(l);
        let d = 1 << l;
        let below = cfg.unet_channels(l + 1);
        v.push(LayerSpec::new(format!("unet.dec{l}.fuse"), ConvSpec::pointwise(below + ch, ch), Local(d)));
        for r in 0..cfg.unet_rb_per_level {
            let p = format!("unet.dec{l}.rb{r}");
            v.push(LayerSpec::new(format!("{p}.alpha"), ConvSpec::pointwise(cc, ch), Local(d)));
            v.push(LayerSpec::new(format!("{p}.beta"), ConvSpec::pointwise(cc, ch), Local(d)));
            v.push(LayerSpec::new(format!("{p}.a"), ConvSpec::same(ch, ch, 3), Local(d)));
            v.push(LayerSpec::new(format!("{p}.b"), ConvSpec::same(ch, ch, 3).with_groups(g), Local(d)));
        }
    }
    v.push(LayerSpec::new(
        "local.fuse",
        ConvSpec::pointwise(cfg.dense_growth + ch0, 3),
        Local(1),
    ));

    let gc = cfg.global_mlp_channels;
    for i in 0..cfg.global_mlp_layers {
        let cin = if i == 0 { 3 } else { gc };
        let cout = if i + 1 == cfg.global_mlp_layers { 3 } else { gc };
        v.push(LayerSpec::new(format!("global.mlp.{i}"), ConvSpec::pointwise(cin, cout), Global(0)));
    }
    let mc = cfg.modulation_channels;
    v.push(LayerSpec::new("global.mod.0", ConvSpec::same(3, mc, 3).with_stride(2), Global(0)));
    v.push(LayerSpec::new("global.mod.1", ConvSpec::same(mc, mc, 3).with_stride(2), Global(1)));
    v.push(LayerSpec::new("global.mod.alpha", ConvSpec::pointwise(mc, gc), Pooled));
    v.push(LayerSpec::new("global.mod.beta", ConvSpec::pointwise(mc, gc), Pooled));
    v
}

/// Weight plus bias element count over all layers.
pub fn count_params(cfg: &ModelConfig) -> usize {
    layer_inventory(cfg).iter().map(|l| l.conv.param_count()).sum()
}

/// Per-layer multiply-accumulate counts for an `h`×`w` input. The local
/// network is counted on the padded frame it actually processes.
pub fn mac_breakdown(cfg: &ModelConfig, h: usize, w: usize) -> Vec<(String, u64)> {
    let m = cfg.size_multiple();
    let (ph, pw) = (round_up(h, m), round_up(w, m));
    layer_inventory(cfg)
        .into_iter()
        .map(|l| {
            let macs = match l.at {
                Resolution::Local(_) => l.macs(ph, pw),
                _ => l.macs(h, w),
            };
            (l.name, macs)
        })
        .collect()
}

pub fn count_macs(cfg: &ModelConfig, h: usize, w: usize) -> u64 {
    mac_breakdown(cfg, h, w).iter().map(|(_, m)| m).sum()
}

/// Network weights in inventory order.
#[derive(Clone, Debug)]
pub struct Model {
    cfg: ModelConfig,
    layers: Vec<LayerSpec>,
    index: HashMap<String, usize>,
    pub weights: Vec<Tensor<f32>>,
    pub biases: Vec<Tensor<f32>>,
}

impl Model {
    /// All weights and biases zero.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = layer_inventory(cfg);
        let weights = layers.iter().map(|l| Tensor::zeros(l.conv.weight_dims())).collect();
        let biases = layers.iter().map(|l| Tensor::zeros(l.conv.bias_dims())).collect();
        Ok(Self::assemble(cfg.clone(), layers, weights, biases))
    }

    fn assemble(
        cfg: ModelConfig,
        layers: Vec<LayerSpec>,
        weights: Vec<Tensor<f32>>,
        biases: Vec<Tensor<f32>>,
    ) -> Self {
        let index = layers.iter().enumerate().map(|(i, l)| (l.name.clone(), i)).collect();
        Model {
            cfg,
            layers,
            index,
            weights,
            biases,
        }
    }

    /// Builds a model from named tensors, checking that every layer is
    /// present exactly once with the right shape.
    pub fn from_named(cfg: &ModelConfig, mut named: HashMap<String, Tensor<f32>>) -> Result<Self> {
        let mut model = Model::zeros(cfg)?;
        for i in 0..model.layers.len() {
            let name = model.layers[i].name.clone();
            for (suffix, slot) in [("weight", &mut model.weights[i]), ("bias", &mut model.biases[i])] {
                let key = format!("{name}.{suffix}");
                let t = named
                    .remove(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing record {key}")))?;
                if t.dims() != slot.dims() {
                    return Err(Error::Checkpoint(format!(
                        "record {key} has dims {}, expected {}",
                        t.dims(),
                        slot.dims()
                    )));
                }
                *slot = t;
            }
        }
        if let Some(extra) = named.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected record {extra}")));
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(|t| t.data().len()).sum()
    }

    /// Registers every tensor as a trainable leaf of `ops`.
    pub fn bind<T: Element, O: Ops<T>>(&self, ops: &mut O) -> Params<O::Value> {
        let weights = self.weights.iter().map(|w| ops.param(&w.cast())).collect();
        let biases = self.biases.iter().map(|b| ops.param(&b.cast())).collect();
        Params { weights, biases }
    }

    /// Flattened `(weight, bias)` pairs in inventory order, for optimizers.
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<f32>> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|t| t.all_finite())
    }
}

/// Model tensors bound to an [`Ops`] implementation.
#[derive(Clone, Debug)]
pub struct Params<V> {
    pub weights: Vec<V>,
    pub biases: Vec<V>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory_names_unique() {
        for cfg in [
            ModelConfig::default(),
            ModelConfig { use_partial_conv: false, ..Default::default() },
            ModelConfig { unet_rb_per_level: 2, ..Default::default() },
        ] {
            let inv = layer_inventory(&cfg);
            let m = Model::zeros(&cfg).unwrap();
            assert_eq!(m.index.len(), inv.len());
            assert_eq!(m.param_count(), count_params(&cfg));
        }
    }

    #[test]
    fn pointwise_macs() {
        let l = LayerSpec::new("x", ConvSpec::pointwise(3, 32), Resolution::Global(0));
        assert_eq!(l.macs(1080, 1920), 199_065_600);
    }

    #[test]
    fn macs_scale_with_area() {
        let cfg = ModelConfig::default();
        // The pooled heads are a fixed cost; everything else scales with area.
        let p = pooled(&cfg);
        assert!(p > 0);
        assert_eq!((count_macs(&cfg, 256, 384) - p) * 4, count_macs(&cfg, 512, 768) - p);
    }

    fn pooled(cfg: &ModelConfig) -> u64 {
        layer_inventory(cfg)
            .iter()
            .filter(|l| l.at == Resolution::Pooled)
            .map(|l| l.macs(1, 1))
            .sum()
    }
}
