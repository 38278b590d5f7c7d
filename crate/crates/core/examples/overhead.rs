//! Prints parameter and MAC counts per layer for the default model and the
//! ablation variants.

use lhdr::net::{count_macs, count_params, mac_breakdown, ModelConfig};

fn main() {
    let base = ModelConfig::default();
    let variants = [
        ("default", base.clone()),
        ("groups=1", ModelConfig { groups: 1, ..base.clone() }),
        ("sft encoder", ModelConfig { use_partial_conv: false, ..base.clone() }),
    ];
    for (name, cfg) in &variants {
        println!(
            "{name:<12} params {:>8}  MACs@1080p {:>6.1}G",
            count_params(cfg),
            count_macs(cfg, 1080, 1920) as f64 / 1e9
        );
    }
    println!();
    for (layer, macs) in mac_breakdown(&base, 1080, 1920) {
        println!("{layer:<22} {:>8.3}G", macs as f64 / 1e9);
    }
}
