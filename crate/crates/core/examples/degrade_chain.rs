//! Shoots a procedural HDR scene, runs the legacy degradation chain on it and
//! writes every intermediate to a folder (default: the system temp dir).
//!
//! cargo run --release --example degrade_chain -- [out_dir] [seed]

use std::path::PathBuf;

use lhdr::degrade::{conventional_degrade, image_rng, synthetic_hdr, virtual_shot, DegradationConfig};
use lhdr::eval::psnr;
use lhdr::imageio::write_image;

fn main() -> lhdr::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lhdr-degrade"));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    std::fs::create_dir_all(&dir)?;

    let hdr = synthetic_hdr(256, 192, &mut image_rng(seed, 0));
    let shot = DegradationConfig::default();
    let sdr = virtual_shot(&hdr, &shot)?;
    write_image(&dir.join("scene.pfm"), &hdr)?;
    write_image(&dir.join("shot.ppm"), &sdr)?;

    for (name, cfg) in [("near_identity", DegradationConfig::near_identity()), ("legacy", shot.clone())] {
        let (out, manifest) = conventional_degrade(&sdr, &cfg, &mut image_rng(seed, 1))?;
        write_image(&dir.join(format!("{name}.ppm")), &out)?;
        println!("{name:<14} PSNR vs shot {:>6.2} dB", psnr(&out, &sdr, 1.0));
        print!("{}", manifest.to_kv("  ").to_text());
    }
    println!("wrote {}", dir.display());
    Ok(())
}
