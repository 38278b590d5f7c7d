//! Metrics, overhead reporting, preview tonemapping and the ablation harness.
//!
//! Quality metrics are computed in the gamma domain `(y / max y)^0.45`,
//! the same domain the network is trained in.

mod ablation;
mod metrics;

use std::fmt::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use ablation::{ablation_suite, AblationEntry, AblationReport, AblationRow, AblationSetup};
pub use metrics::{psnr, ssim, SSIM_WINDOW};

use crate::image::{CodeImage, Domain, Image};
use crate::kv::KeyValues;
use crate::net::{count_macs, count_params, lhdr_forward, ModelConfig};
use crate::tensor::{thread_count, Eval, Tensor};
use crate::train::{kaiming_init, preprocess_gamma, GAMMA};
use crate::{Error, Result};

pub const METRIC_DOMAIN: &str = "gamma045";

/// Maps an image into the metric domain. Linear HDR is max-normalized and
/// gamma-encoded; gamma-domain images pass through unchanged.
pub fn to_metric_domain(img: &Image) -> Result<Image> {
    match img.domain {
        Domain::GammaHdr => Ok(img.clone()),
        Domain::LinearHdr => Ok(preprocess_gamma(img, GAMMA)?.0),
        Domain::NonlinearSdr => Err(Error::invalid("metrics compare HDR images, got an SDR image")),
    }
}

/// Global `x / (1 + x)` followed by gamma 1/2.2 and 8-bit codes.
pub fn tonemap_preview(hdr: &Image) -> CodeImage {
    hdr.map(|v| {
        let v = v.max(0.0) as f64;
        (v / (1.0 + v)).powf(1.0 / 2.2) as f32
    })
    .with_domain(Domain::NonlinearSdr)
    .to_codes(255)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Runtime {
    pub seconds: f64,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub psnr: f64,
    pub ssim: f64,
    pub params: usize,
    pub macs: u64,
    pub mac_resolution: (usize, usize),
    pub runtime: Option<Runtime>,
    pub images: usize,
}

impl MetricsReport {
    /// Mean PSNR and SSIM over `(prediction, reference)` pairs. Counts are
    /// taken from `cfg` at 1920×1080.
    pub fn evaluate(pairs: &[(Image, Image)], cfg: &ModelConfig) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("no image pairs to evaluate"));
        }
        let (mut p, mut s) = (0.0, 0.0);
        for (pred, reference) in pairs {
            if !pred.same_size(reference) {
                return Err(Error::invalid("prediction and reference differ in size"));
            }
            let a = to_metric_domain(pred)?;
            let b = to_metric_domain(reference)?;
            p += psnr(&a, &b, 1.0);
            s += ssim(&a, &b, 1.0)?;
        }
        let n = pairs.len() as f64;
        Ok(MetricsReport {
            psnr: p / n,
            ssim: s / n,
            params: count_params(cfg),
            macs: count_macs(cfg, 1080, 1920),
            mac_resolution: (1080, 1920),
            runtime: None,
            images: pairs.len(),
        })
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("metric_domain", METRIC_DOMAIN);
        kv.set("images", self.images);
        kv.set("psnr", self.psnr);
        kv.set("ssim", self.ssim);
        kv.set("params", self.params);
        kv.set("macs", self.macs);
        kv.set("macs.resolution", format!("{}x{}", self.mac_resolution.1, self.mac_resolution.0));
        if let Some(r) = &self.runtime {
            kv.set("runtime.seconds", r.seconds);
            kv.set("runtime.resolution", format!("{}x{}", r.width, r.height));
        }
        kv
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "images   {}", self.images);
        let _ = writeln!(s, "domain   {METRIC_DOMAIN}");
        let _ = writeln!(s, "PSNR     {:.3} dB", self.psnr);
        let _ = writeln!(s, "SSIM     {:.4}", self.ssim);
        let _ = writeln!(s, "params   {}", self.params);
        let _ = writeln!(
            s,
            "MACs     {:.2}G at {}x{}",
            self.macs as f64 / 1e9,
            self.mac_resolution.1,
            self.mac_resolution.0
        );
        if let Some(r) = &self.runtime {
            let _ = writeln!(s, "runtime  {:.3} s at {}x{}", r.seconds, r.width, r.height);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub height: usize,
    pub width: usize,
    pub repeats: usize,
    pub threads: usize,
    pub median: f64,
    pub times: Vec<f64>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        format!(
            "forward {}x{}: median {:.4} s over {} repeats ({} threads; min {:.4}, max {:.4})\n",
            self.width,
            self.height,
            self.median,
            self.repeats,
            self.threads,
            self.times.iter().copied().fold(f64::INFINITY, f64::min),
            self.times.iter().copied().fold(0.0, f64::max),
        )
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("resolution", format!("{}x{}", self.width, self.height));
        kv.set("repeats", self.repeats);
        kv.set("threads", self.threads);
        kv.set("median_seconds", self.median);
        kv
    }
}

/// Median wall time of one eager forward pass over random weights and a
/// random input. One warm-up pass is excluded.
pub fn bench_forward(cfg: &ModelConfig, h: usize, w: usize, repeats: usize) -> Result<BenchReport> {
    if repeats < 3 {
        return Err(Error::invalid("bench needs at least 3 repeats"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = kaiming_init(cfg, &mut rng)?;
    let x = Tensor::<f32>::from_fn([1, 3, h, w], |[_, c, y, x]| ((x * 13 + y * 7 + c * 5) % 97) as f32 / 96.0);
    let run = || -> Result<f64> {
        let start = Instant::now();
        let mut ev = Eval;
        let p = model.bind(&mut ev);
        let y = lhdr_forward(&mut ev, &model, &p, &x)?;
        std::hint::black_box(&y);
        Ok(start.elapsed().as_secs_f64())
    };
    run()?;
    let times = (0..repeats).map(|_| run()).collect::<Result<Vec<_>>>()?;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if repeats % 2 == 1 {
        sorted[repeats / 2]
    } else {
        0.5 * (sorted[repeats / 2 - 1] + sorted[repeats / 2])
    };
    Ok(BenchReport {
        height: h,
        width: w,
        repeats,
        threads: thread_count(),
        median,
        times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tonemap_monotone() {
        let img = Image::from_fn(6, 1, Domain::LinearHdr, |x, _| [[0.0, 0.1, 1.0, 10.0, 1e3, 1e6][x]; 3]);
        let codes = tonemap_preview(&img);
        let row: Vec<u16> = (0..6).map(|x| codes.get(x, 0)[0]).collect();
        assert_eq!(row[0], 0);
        assert!(row.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
        assert_eq!(row[5], 255);
    }
}
