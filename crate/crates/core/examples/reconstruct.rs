//! Loads (or initializes) a checkpoint and reconstructs HDR from one SDR
//! image. Writes a PFM, an RGBE file and a tonemapped preview.
//!
//! cargo run --release --example reconstruct -- [checkpoint] [input.ppm] [out_dir]
//!
//! Without a checkpoint the weights are freshly initialized, so the output
//! only demonstrates the plumbing.

use std::path::{Path, PathBuf};

use lhdr::degrade::{image_rng, synthetic_hdr, virtual_shot, DegradationConfig};
use lhdr::eval::{psnr, ssim, to_metric_domain, tonemap_preview};
use lhdr::imageio::{read_image, write_image, write_ppm_codes};
use lhdr::net::{infer, Checkpoint, ModelConfig};
use lhdr::train::kaiming_init;
use rand::SeedableRng;

fn main() -> lhdr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ck = match args.first().filter(|a| *a != "-") {
        Some(path) => Checkpoint::load(Path::new(path))?,
        None => Checkpoint::new(kaiming_init(&ModelConfig::default(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?),
    };
    let dir = args.get(2).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lhdr-reconstruct"));
    std::fs::create_dir_all(&dir)?;

    // With no input, shoot a procedural scene so there is a reference to score against.
    let (sdr, reference) = match args.get(1) {
        Some(path) => (read_image(Path::new(path))?, None),
        None => {
            let hdr = synthetic_hdr(192, 128, &mut image_rng(4, 0));
            (virtual_shot(&hdr, &DegradationConfig::default())?, Some(hdr))
        }
    };

    let start = std::time::Instant::now();
    let pred = infer(&ck.model, &sdr)?;
    println!("{}x{} in {:.3}s", sdr.width(), sdr.height(), start.elapsed().as_secs_f64());
    if let Some(reference) = reference {
        let (p, r) = (to_metric_domain(&pred)?, to_metric_domain(&reference)?);
        println!("PSNR {:.2} dB  SSIM {:.4}", psnr(&p, &r, 1.0), ssim(&p, &r, 1.0)?);
    }
    let linear = lhdr::train::postprocess_gamma(&pred, lhdr::train::GAMMA);
    write_image(&dir.join("pred.pfm"), &linear)?;
    write_image(&dir.join("pred.hdr"), &linear)?;
    std::fs::write(dir.join("preview.ppm"), write_ppm_codes(&tonemap_preview(&linear)))?;
    println!("wrote {}", dir.display());
    Ok(())
}
