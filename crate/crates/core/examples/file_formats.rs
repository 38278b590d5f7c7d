//! Writes one HDR image in every supported container and reads it back.

use lhdr::degrade::{image_rng, synthetic_hdr};
use lhdr::imageio::{read_image, write_image};

fn main() -> lhdr::Result<()> {
    let hdr = synthetic_hdr(128, 96, &mut image_rng(2, 0));
    let dir = std::env::temp_dir().join("lhdr-formats");
    std::fs::create_dir_all(&dir)?;
    for ext in ["pfm", "hdr"] {
        let path = dir.join(format!("scene.{ext}"));
        write_image(&path, &hdr)?;
        let back = read_image(&path)?;
        let mut worst = 0f32;
        for (a, b) in hdr.pixels().zip(back.pixels()) {
            let m = a.iter().fold(f32::MIN_POSITIVE, |m, v| m.max(*v));
            worst = (0..3).fold(worst, |w, c| w.max((a[c] - b[c]).abs() / m));
        }
        let size = std::fs::metadata(&path)?.len();
        println!("{ext:<4} {size:>7} bytes  max error {worst:.2e} of pixel max");
    }
    // SDR containers take display-referred values.
    let sdr = hdr.map(|v| (v / (1.0 + v)).powf(1.0 / 2.2)).with_domain(lhdr::Domain::NonlinearSdr);
    let path = dir.join("scene.ppm");
    write_image(&path, &sdr)?;
    let back = read_image(&path)?;
    let worst = sdr.data().iter().zip(back.data()).fold(0f32, |m, (a, b)| m.max((a - b).abs()));
    println!("ppm  {:>7} bytes  max error {worst:.2e} ({:.2} codes)", std::fs::metadata(&path)?.len(), worst * 255.0);
    Ok(())
}
