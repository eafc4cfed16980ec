//! Desk-scale fitting pilot: prints per-epoch metrics and wall time so
//! recipe thresholds can be sanity-checked before freezing them in tests.
//!
//! Usage: cargo run --example pilot [epochs] [size] [frames]

use nerv::nerv::{build_model, NervConfig};
use nerv::synth;
use nerv::training::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(50);
    let size: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(128);
    let frames: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(16);

    let video = synth::gradient_texture(frames, size, size).unwrap();
    let mut cfg = NervConfig::desk(frames);
    if size != 128 {
        cfg = NervConfig::new((size, size), frames, vec![2, 2, 2, 2, 2]).unwrap();
        cfg.mlp_hidden = 192;
        cfg.stem_channels = 42;
        cfg.block_channels = 48;
    }
    let model = build_model(&cfg, 1).unwrap();
    println!("params: {}", model.count_params());

    let tc = TrainConfig {
        epochs,
        warmup_epochs: 30.min(epochs / 5),
        seed: 1,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let (_, history) = train(model, &video, &tc).unwrap();
    for r in history.records.iter() {
        if r.epoch % 10 == 0 || r.epoch <= 5 || r.epoch == epochs {
            println!(
                "epoch {:4}  loss {:.6}  psnr {:6.2}  ms-ssim {:.5}  {:.2}s",
                r.epoch, r.loss, r.psnr, r.ms_ssim, r.seconds
            );
        }
    }
    println!(
        "total {:.1}s  ({:.3}s/epoch)",
        start.elapsed().as_secs_f64(),
        start.elapsed().as_secs_f64() / epochs as f64
    );
}
