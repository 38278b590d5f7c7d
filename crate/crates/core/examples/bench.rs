//! Times one eager forward pass of the default model.
//!
//! cargo run --release --example bench -- [WxH] [repeats]

use lhdr::net::{count_macs, ModelConfig};

fn main() -> lhdr::Result<()> {
    let mut args = std::env::args().skip(1);
    let res = args.next().unwrap_or_else(|| "512x512".into());
    let (w, h) = res
        .split_once('x')
        .and_then(|(w, h)| Some((w.parse::<usize>().ok()?, h.parse::<usize>().ok()?)))
        .expect("resolution as WxH");
    let repeats = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = ModelConfig::default();
    let report = lhdr::eval::bench_forward(&cfg, h, w, repeats)?;
    print!("{}", report.to_text());
    let gmacs = count_macs(&cfg, h, w) as f64 / 1e9;
    println!("{gmacs:.2} GMACs, {:.2} GMAC/s", gmacs / report.median);
    Ok(())
}
