//! Trains the default model on procedural HDR scenes and prints the loss
//! trace.
//!
//! cargo run --release --example train_synthetic -- [iters] [batch] [degrade|clean] [lr0] [lr_half_every]

use lhdr::degrade::{image_rng, synthetic_hdr, virtual_shot, DegradationConfig};
use lhdr::net::ModelConfig;
use lhdr::train::{dataset_loss, kaiming_init, train_loop, TrainConfig, TrainPair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lhdr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iters = args.first().and_then(|s| s.parse().ok()).unwrap_or(500);
    let batch = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let degrade = args.get(2).is_some_and(|s| s == "degrade");
    let lr0 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2e-4);
    let lr_half_every = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(250_000);

    let shot = DegradationConfig::default();
    let pairs = (0..8)
        .map(|i| {
            let hdr = synthetic_hdr(64, 64, &mut image_rng(7, i));
            let sdr = virtual_shot(&hdr, &shot)?;
            TrainPair::new(hdr, sdr)
        })
        .collect::<lhdr::Result<Vec<_>>>()?;

    let cfg = TrainConfig {
        max_iters: iters,
        batch,
        patch_size: 64,
        degrade,
        lr0,
        lr_half_every,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let out = train_loop(&ModelConfig::default(), &cfg, &shot, &pairs, |r| {
        if r.iter % 25 == 0 {
            println!("{r}");
        }
    })?;
    let init = kaiming_init(&ModelConfig::default(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let before = dataset_loss(&init, &pairs, &cfg)?.total;
    let after = dataset_loss(&out.checkpoint.model, &pairs, &cfg)?.total;
    println!(
        "dataset loss {before:.5} -> {after:.5}  ratio {:.3}  {:.1}s",
        after / before,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
