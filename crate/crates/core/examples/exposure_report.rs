//! Over/under-exposure statistics of virtual shots taken at several
//! exposures, in the format of the `stats` subcommand.

use lhdr::degrade::{image_rng, synthetic_hdr, virtual_shot, DegradationConfig};

fn main() -> lhdr::Result<()> {
    let hdr: Vec<_> = (0..6).map(|i| synthetic_hdr(160, 120, &mut image_rng(21, i))).collect();
    for exposure_scale in [0.25, 1.0, 4.0] {
        let cfg = DegradationConfig { exposure_scale, ..Default::default() };
        let shots = hdr
            .iter()
            .enumerate()
            .map(|(i, h)| Ok((format!("scene{i}"), virtual_shot(h, &cfg)?.to_codes(255))))
            .collect::<lhdr::Result<Vec<_>>>()?;
        let report = lhdr::imageio::dataset_stats(&shots, 248, 0)?;
        println!("exposure x{exposure_scale}");
        print!("{}", report.to_text());
        println!();
    }
    Ok(())
}
