use crate::kv::KeyValues;
use crate::{Error, Result};

/// Architecture hyper-parameters. Defaults are frozen; see [`ModelConfig::default`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub dense_layers: usize,
    pub dense_growth: usize,
    /// Number of down-sampling steps in the encoder-decoder.
    pub unet_levels: usize,
    pub unet_base_channels: usize,
    pub unet_rb_per_level: usize,
    /// Group count of the second convolution in every encoder-decoder residual block.
    pub groups: usize,
    /// Width of the condition branch feeding the decoder SFT layers.
    pub cond_channels: usize,
    pub global_mlp_channels: usize,
    pub global_mlp_layers: usize,
    /// Width of the global modulation branch.
    pub modulation_channels: usize,
    /// The modulation is applied after this many pointwise layers.
    pub modulation_after: usize,
    pub mask_threshold: f64,
    pub leaky_slope: f64,
    /// Multiplier on every residual branch before it joins the skip path.
    pub residual_scale: f64,
    /// Encoder residual blocks use partial convolution; otherwise SFT blocks.
    pub use_partial_conv: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dense_layers: 5,
            dense_growth: 16,
            unet_levels: 2,
            unet_base_channels: 20,
            unet_rb_per_level: 1,
            groups: 4,
            cond_channels: 32,
            global_mlp_channels: 64,
            global_mlp_layers: 4,
            modulation_channels: 32,
            modulation_after: 2,
            mask_threshold: 0.9,
            leaky_slope: 0.2,
            residual_scale: 0.1,
            use_partial_conv: true,
        }
    }
}

const KEYS: [&str; 15] = [
    "dense_layers",
    "dense_growth",
    "unet_levels",
    "unet_base_channels",
    "unet_rb_per_level",
    "groups",
    "cond_channels",
    "global_mlp_channels",
    "global_mlp_layers",
    "modulation_channels",
    "modulation_after",
    "mask_threshold",
    "leaky_slope",
    "residual_scale",
    "use_partial_conv",
];

impl ModelConfig {
    /// Channels of encoder-decoder level `l`.
    pub fn unet_channels(&self, level: usize) -> usize {
        self.unet_base_channels << level
    }

    /// Spatial multiple the local network needs.
    pub fn size_multiple(&self) -> usize {
        1 << self.unet_levels
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dense_layers", self.dense_layers),
            ("dense_growth", self.dense_growth),
            ("unet_base_channels", self.unet_base_channels),
            ("unet_rb_per_level", self.unet_rb_per_level),
            ("groups", self.groups),
            ("cond_channels", self.cond_channels),
            ("global_mlp_channels", self.global_mlp_channels),
            ("modulation_channels", self.modulation_channels),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{k} must be positive")));
        }
        if self.unet_levels > 6 {
            return Err(Error::config("unet_levels must be at most 6"));
        }
        if self.global_mlp_layers < 2 {
            return Err(Error::config("global_mlp_layers must be at least 2"));
        }
        if self.modulation_after == 0 || self.modulation_after >= self.global_mlp_layers {
            return Err(Error::config(format!(
                "modulation_after must be in 1..{}",
                self.global_mlp_layers
            )));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::config("mask_threshold must lie in (0, 1)"));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("leaky_slope must lie in [0, 1)"));
        }
        if !(self.residual_scale > 0.0 && self.residual_scale <= 1.0) {
            return Err(Error::config("residual_scale must lie in (0, 1]"));
        }
        if self.unet_base_channels % self.groups != 0 {
            return Err(Error::config(format!(
                "unet_base_channels {} is not divisible by groups {}",
                self.unet_base_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("dense_layers", self.dense_layers);
        kv.set("dense_growth", self.dense_growth);
        kv.set("unet_levels", self.unet_levels);
        kv.set("unet_base_channels", self.unet_base_channels);
        kv.set("unet_rb_per_level", self.unet_rb_per_level);
        kv.set("groups", self.groups);
        kv.set("cond_channels", self.cond_channels);
        kv.set("global_mlp_channels", self.global_mlp_channels);
        kv.set("global_mlp_layers", self.global_mlp_layers);
        kv.set("modulation_channels", self.modulation_channels);
        kv.set("modulation_after", self.modulation_after);
        kv.set("mask_threshold", self.mask_threshold);
        kv.set("leaky_slope", self.leaky_slope);
        kv.set("residual_scale", self.residual_scale);
        kv.set("use_partial_conv", self.use_partial_conv);
        kv
    }

    /// Reads the model keys from `kv`, ignoring anything else. Missing keys
    /// keep their defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = ModelConfig::default();
        kv.read_into("dense_layers", &mut c.dense_layers)?;
        kv.read_into("dense_growth", &mut c.dense_growth)?;
        kv.read_into("unet_levels", &mut c.unet_levels)?;
        kv.read_into("unet_base_channels", &mut c.unet_base_channels)?;
        kv.read_into("unet_rb_per_level", &mut c.unet_rb_per_level)?;
        kv.read_into("groups", &mut c.groups)?;
        kv.read_into("cond_channels", &mut c.cond_channels)?;
        kv.read_into("global_mlp_channels", &mut c.global_mlp_channels)?;
        kv.read_into("global_mlp_layers", &mut c.global_mlp_layers)?;
        kv.read_into("modulation_channels", &mut c.modulation_channels)?;
        kv.read_into("modulation_after", &mut c.modulation_after)?;
        kv.read_into("mask_threshold", &mut c.mask_threshold)?;
        kv.read_into("leaky_slope", &mut c.leaky_slope)?;
        kv.read_into("residual_scale", &mut c.residual_scale)?;
        kv.read_into("use_partial_conv", &mut c.use_partial_conv)?;
        c.validate()?;
        Ok(c)
    }

    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip() {
        let cfg = ModelConfig {
            groups: 1,
            use_partial_conv: false,
            leaky_slope: 0.1,
            ..Default::default()
        };
        let back = ModelConfig::from_kv(&KeyValues::parse(&cfg.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.to_kv().len(), ModelConfig::keys().len());
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            ModelConfig { mask_threshold: 1.0, ..Default::default() },
            ModelConfig { groups: 3, ..Default::default() },
            ModelConfig { modulation_after: 4, ..Default::default() },
            ModelConfig { dense_layers: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        ModelConfig::default().validate().unwrap();
    }
}
