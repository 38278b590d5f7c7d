//! Camera-pipeline degradation simulator.
//!
//! [`virtual_shot`] turns linear HDR into a clipped, tone-curved, quantized
//! SDR image. [`conventional_degrade`] adds the legacy-SDR degradations on
//! top: RAW-domain noise followed by two rounds of JPEG-style compression
//! with a rescale in between.

mod color;
mod jpeg;
mod noise;
mod resize;
mod scene;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use color::{
    cst_apply, cst_pixel, det3, invert3, srgb_decode, srgb_encode, Mat3, DEFAULT_CAMERA_MATRIX, IDENTITY,
    TRANSFER_GAMMA,
};
pub use jpeg::{jpeg_sim, quant_table};
pub use noise::add_camera_noise;
pub use resize::resize_bilinear;
pub use scene::synthetic_hdr;

pub use crate::imageio::exposure_stats;

use crate::image::{Domain, Image};
use crate::kv::{parse_pair, KeyValues};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DegradationConfig {
    pub exposure_scale: f64,
    pub crf_gamma: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub quant_bits: u32,
    /// Colour transform applied by [`virtual_shot`] before clipping.
    pub shot_cst: Mat3,
    pub noise_sigma_range: (f64, f64),
    pub jpeg_qf1_range: (u8, u8),
    pub jpeg_qf2: u8,
    pub rescale_range: (f64, f64),
    /// Camera RAW to display matrix of the conventional chain.
    pub cst_matrix: Mat3,
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig {
            exposure_scale: 1.0,
            crf_gamma: 1.0 / 2.2,
            clip_low: 0.0,
            clip_high: 1.0,
            quant_bits: 8,
            shot_cst: IDENTITY,
            noise_sigma_range: (0.001, 0.003),
            jpeg_qf1_range: (60, 80),
            jpeg_qf2: 75,
            rescale_range: (0.7, 1.0),
            cst_matrix: DEFAULT_CAMERA_MATRIX,
            seed: 0,
        }
    }
}

fn parse_matrix(s: &str) -> Result<Mat3> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::config(format!("matrix {s:?}: {e}")))?;
    if v.len() != 9 {
        return Err(Error::config(format!("matrix needs 9 values, got {}", v.len())));
    }
    Ok([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
}

fn format_matrix(m: &Mat3) -> String {
    m.iter().flatten().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

const KEYS: [&str; 12] = [
    "exposure_scale",
    "crf_gamma",
    "clip_low",
    "clip_high",
    "quant_bits",
    "shot_cst",
    "noise_sigma_range",
    "jpeg_qf1_range",
    "jpeg_qf2",
    "rescale_range",
    "cst_matrix",
    "seed",
];

impl DegradationConfig {
    /// Everything off: the conventional chain reduces to colour roundtrips.
    pub fn near_identity() -> Self {
        DegradationConfig {
            noise_sigma_range: (0.0, 0.0),
            jpeg_qf1_range: (100, 100),
            jpeg_qf2: 100,
            rescale_range: (1.0, 1.0),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_scale > 0.0 && self.exposure_scale.is_finite()) {
            return Err(Error::config("exposure_scale must be positive"));
        }
        if !(self.crf_gamma > 0.0 && self.crf_gamma.is_finite()) {
            return Err(Error::config("crf_gamma must be positive"));
        }
        if !(0.0 <= self.clip_low && self.clip_low < self.clip_high && self.clip_high <= 1.0) {
            return Err(Error::config("clip bounds must satisfy 0 <= clip_low < clip_high <= 1"));
        }
        if !(1..=16).contains(&self.quant_bits) {
            return Err(Error::config("quant_bits must be in 1..=16"));
        }
        let (s0, s1) = self.noise_sigma_range;
        if !(0.0 <= s0 && s0 <= s1 && s1.is_finite()) {
            return Err(Error::config("noise_sigma_range must be an ordered non-negative pair"));
        }
        let (q0, q1) = self.jpeg_qf1_range;
        if !(1 <= q0 && q0 <= q1 && q1 <= 100) || !(1..=100).contains(&self.jpeg_qf2) {
            return Err(Error::config("JPEG quality factors must lie in 1..=100"));
        }
        let (r0, r1) = self.rescale_range;
        if !(0.0 < r0 && r0 <= r1 && r1 <= 4.0) {
            return Err(Error::config("rescale_range must be an ordered pair in (0, 4]"));
        }
        invert3(&self.cst_matrix).map_err(|e| Error::config(format!("cst_matrix: {e}")))?;
        invert3(&self.shot_cst).map_err(|e| Error::config(format!("shot_cst: {e}")))?;
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("exposure_scale", self.exposure_scale);
        kv.set("crf_gamma", self.crf_gamma);
        kv.set("clip_low", self.clip_low);
        kv.set("clip_high", self.clip_high);
        kv.set("quant_bits", self.quant_bits);
        kv.set("shot_cst", format_matrix(&self.shot_cst));
        kv.set("noise_sigma_range", format!("{},{}", self.noise_sigma_range.0, self.noise_sigma_range.1));
        kv.set("jpeg_qf1_range", format!("{},{}", self.jpeg_qf1_range.0, self.jpeg_qf1_range.1));
        kv.set("jpeg_qf2", self.jpeg_qf2);
        kv.set("rescale_range", format!("{},{}", self.rescale_range.0, self.rescale_range.1));
        kv.set("cst_matrix", format_matrix(&self.cst_matrix));
        kv.set("seed", self.seed);
        kv
    }

    /// Missing keys keep their defaults; unknown keys are errors.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&KEYS)?;
        let mut c = DegradationConfig::default();
        kv.read_into("exposure_scale", &mut c.exposure_scale)?;
        kv.read_into("crf_gamma", &mut c.crf_gamma)?;
        kv.read_into("clip_low", &mut c.clip_low)?;
        kv.read_into("clip_high", &mut c.clip_high)?;
        kv.read_into("quant_bits", &mut c.quant_bits)?;
        kv.read_into("jpeg_qf2", &mut c.jpeg_qf2)?;
        kv.read_into("seed", &mut c.seed)?;
        if let Some(s) = kv.get_str("shot_cst") {
            c.shot_cst = parse_matrix(s)?;
        }
        if let Some(s) = kv.get_str("cst_matrix") {
            c.cst_matrix = parse_matrix(s)?;
        }
        if let Some(s) = kv.get_str("noise_sigma_range") {
            c.noise_sigma_range = parse_pair(s)?;
        }
        if let Some(s) = kv.get_str("jpeg_qf1_range") {
            c.jpeg_qf1_range = parse_pair(s)?;
        }
        if let Some(s) = kv.get_str("rescale_range") {
            c.rescale_range = parse_pair(s)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        KeyValues::parse(&text)
            .and_then(|kv| Self::from_kv(&kv))
            .map_err(|e| e.in_file(path))
    }
}

/// Independent stream for image `index` under `seed`.
pub fn image_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Linear HDR to quantized nonlinear SDR: exposure, colour transform, clip
/// and renormalize, power-law response, quantization.
pub fn virtual_shot(hdr: &Image, cfg: &DegradationConfig) -> Result<Image> {
    cfg.validate()?;
    if let Some(v) = hdr.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite HDR value {v}")));
    }
    let levels = ((1u32 << cfg.quant_bits) - 1) as f64;
    let (lo, hi) = (cfg.clip_low, cfg.clip_high);
    let mut out = hdr.clone().with_domain(Domain::NonlinearSdr);
    out.max_luminance = None;
    for p in out.pixels_mut() {
        let e = [p[0], p[1], p[2]].map(|v| (v as f64 * cfg.exposure_scale) as f32);
        let c = cst_pixel(&cfg.shot_cst, e);
        for (dst, v) in p.iter_mut().zip(c) {
            let n = ((v as f64).clamp(lo, hi) - lo) / (hi - lo);
            let q = (n.powf(cfg.crf_gamma) * levels).round() / levels;
            *dst = q as f32;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Linearize,
    ToRaw,
    Noise,
    FromRaw,
    Encode,
    Jpeg1,
    Rescale,
    Jpeg2,
    RescaleBack,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Linearize => "linearize",
            Stage::ToRaw => "to_raw",
            Stage::Noise => "noise",
            Stage::FromRaw => "from_raw",
            Stage::Encode => "encode",
            Stage::Jpeg1 => "jpeg1",
            Stage::Rescale => "rescale",
            Stage::Jpeg2 => "jpeg2",
            Stage::RescaleBack => "rescale_back",
        }
    }

    /// Stages that run in the linear RAW domain.
    pub fn is_linear(self) -> bool {
        matches!(self, Stage::ToRaw | Stage::Noise | Stage::FromRaw)
    }
}

/// Parameters sampled for one image, plus the stage order actually run.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradeManifest {
    pub sigma: f64,
    pub qf1: u8,
    pub qf2: u8,
    pub scale: f64,
    pub rescaled: (usize, usize),
    pub stages: Vec<Stage>,
}

impl DegradeManifest {
    pub fn to_kv(&self, prefix: &str) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set(&format!("{prefix}sigma"), self.sigma);
        kv.set(&format!("{prefix}qf1"), self.qf1);
        kv.set(&format!("{prefix}qf2"), self.qf2);
        kv.set(&format!("{prefix}scale"), self.scale);
        kv.set(&format!("{prefix}rescaled"), format!("{}x{}", self.rescaled.0, self.rescaled.1));
        let stages: Vec<_> = self.stages.iter().map(|s| s.name()).collect();
        kv.set(&format!("{prefix}stages"), stages.join(","));
        kv
    }
}

fn sample<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Legacy-SDR degradation of a clean nonlinear SDR image.
pub fn conventional_degrade<R: Rng + ?Sized>(
    sdr: &Image,
    cfg: &DegradationConfig,
    rng: &mut R,
) -> Result<(Image, DegradeManifest)> {
    cfg.validate()?;
    let m = cfg.cst_matrix;
    let m_inv = invert3(&m)?;
    let sigma = sample(rng, cfg.noise_sigma_range);
    let qf1 = rng.random_range(cfg.jpeg_qf1_range.0..=cfg.jpeg_qf1_range.1);
    let scale = sample(rng, cfg.rescale_range);
    let (w, h) = (sdr.width(), sdr.height());
    let rw = ((w as f64 * scale).round() as usize).max(1);
    let rh = ((h as f64 * scale).round() as usize).max(1);

    let mut stages = Vec::with_capacity(9);
    let mut log = |s| stages.push(s);
    let x = srgb_decode(sdr);
    log(Stage::Linearize);
    let x = cst_apply(&x, &m_inv)?;
    log(Stage::ToRaw);
    let x = add_camera_noise(&x, sigma, rng);
    log(Stage::Noise);
    let x = cst_apply(&x, &m)?.map(|v| v.clamp(0.0, 1.0));
    log(Stage::FromRaw);
    let x = srgb_encode(&x);
    log(Stage::Encode);
    let x = jpeg_sim(&x, qf1);
    log(Stage::Jpeg1);
    let x = resize_bilinear(&x, rw, rh);
    log(Stage::Rescale);
    let x = jpeg_sim(&x, cfg.jpeg_qf2);
    log(Stage::Jpeg2);
    let x = resize_bilinear(&x, w, h).with_domain(Domain::NonlinearSdr);
    log(Stage::RescaleBack);

    Ok((
        x,
        DegradeManifest {
            sigma,
            qf1,
            qf2: cfg.jpeg_qf2,
            scale,
            rescaled: (rw, rh),
            stages,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip() {
        let cfg = DegradationConfig {
            seed: 42,
            jpeg_qf1_range: (70, 71),
            ..Default::default()
        };
        let back = DegradationConfig::from_kv(&KeyValues::parse(&cfg.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(DegradationConfig::from_kv(&KeyValues::parse("bogus=1").unwrap()).is_err());
        assert!(DegradationConfig::from_kv(&KeyValues::parse("cst_matrix=0,0,0,0,0,0,0,0,0").unwrap()).is_err());
    }

    #[test]
    fn shot_saturation_and_identity() {
        let cfg = DegradationConfig {
            exposure_scale: 4.0,
            ..Default::default()
        };
        let hdr = Image::from_fn(3, 1, Domain::LinearHdr, |x, _| [[0.25, 1.0, 0.0][x]; 3]);
        let sdr = virtual_shot(&hdr, &cfg).unwrap();
        assert_eq!(sdr.get(0, 0), [1.0; 3]);
        assert_eq!(sdr.get(1, 0), [1.0; 3]);
        assert_eq!(sdr.get(2, 0), [0.0; 3]);
        let bad = Image::from_vec(1, 1, vec![0.0; 3], Domain::LinearHdr).unwrap().map(|_| f32::NAN);
        assert!(virtual_shot(&bad, &cfg).is_err());
    }

    #[test]
    fn manifest_stage_order() {
        let img = Image::from_fn(20, 20, Domain::NonlinearSdr, |x, y| [x as f32 / 20.0, y as f32 / 20.0, 0.5]);
        let (out, man) = conventional_degrade(&img, &DegradationConfig::default(), &mut image_rng(1, 0)).unwrap();
        assert_eq!((out.width(), out.height()), (20, 20));
        let noise = man.stages.iter().position(|&s| s == Stage::Noise).unwrap();
        let first_jpeg = man.stages.iter().position(|&s| s == Stage::Jpeg1).unwrap();
        assert!(noise < first_jpeg);
        assert_eq!(*man.stages.last().unwrap(), Stage::RescaleBack);
        assert!((0.001..=0.003).contains(&man.sigma));
        assert!((60..=80).contains(&man.qf1));
    }

    #[test]
    fn streams_differ_per_index() {
        let a: u64 = image_rng(3, 0).random();
        let b: u64 = image_rng(3, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, image_rng(3, 0).random::<u64>());
    }
}
