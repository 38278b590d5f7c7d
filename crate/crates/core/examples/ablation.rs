//! Desk-scale ablation: trains the baseline and its variants on procedural
//! scenes and scores them on degraded test shots.
//!
//! cargo run --release --example ablation -- [iters] [seeds] [all|degradation] [lr0] [lr_half_every] [first_seed]

use lhdr::degrade::{conventional_degrade, image_rng, synthetic_hdr, virtual_shot, DegradationConfig};
use lhdr::eval::{ablation_suite, AblationEntry, AblationSetup};
use lhdr::net::ModelConfig;
use lhdr::train::{TrainConfig, TrainPair};

fn main() -> lhdr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iters = args.first().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let count: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let all = args.get(2).is_none_or(|s| s == "all");
    let lr0 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2e-4);
    let lr_half_every = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(250_000);
    let first: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0);
    let seeds: Vec<u64> = (first..first + count).collect();

    let shot = DegradationConfig::default();
    let train = (0..8)
        .map(|i| {
            let hdr = synthetic_hdr(64, 64, &mut image_rng(7, i));
            let sdr = virtual_shot(&hdr, &shot)?;
            TrainPair::new(hdr, sdr)
        })
        .collect::<lhdr::Result<Vec<_>>>()?;
    // Held-out scenes, shot and then run through the legacy chain.
    let test = (0..4)
        .map(|i| {
            let hdr = synthetic_hdr(64, 64, &mut image_rng(11, i));
            let sdr = virtual_shot(&hdr, &shot)?;
            let (legacy, _) = conventional_degrade(&sdr, &shot, &mut image_rng(13, i))?;
            Ok((hdr, legacy))
        })
        .collect::<lhdr::Result<Vec<_>>>()?;

    let recipe = TrainConfig {
        max_iters: iters,
        batch: 2,
        lr0,
        lr_half_every,
        ..Default::default()
    };
    let base = AblationEntry::baseline(&ModelConfig::default(), &recipe, &shot);
    let mut entries = vec![base.clone(), base.no_degradation()];
    if all {
        entries.extend([base.other_recipe(), base.no_partial_conv(), base.no_group_conv()]);
    }
    let start = std::time::Instant::now();
    let report = ablation_suite(&entries, &AblationSetup { train: &train, test: &test, seeds: &seeds })?;
    print!("{}", report.to_text());
    println!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
