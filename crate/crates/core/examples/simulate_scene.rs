//! Render a block scene through both sensors and write the images as PGM.
//!
//! cargo run --release --example simulate_scene -- [out_dir] [size]

use std::path::PathBuf;

use sarstereo::io::write_pgm;
use sarstereo::pipeline::{simulate, PipelineConfig, SceneConfig};

fn main() -> sarstereo::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "scene_out".into()));
    let size = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    let cfg = PipelineConfig {
        scene: SceneConfig {
            size,
            ..SceneConfig::default()
        },
        ..PipelineConfig::default()
    };
    let sim = simulate(&cfg)?;
    std::fs::create_dir_all(&out)?;
    write_pgm(out.join("sar.pgm"), &sim.sar_image)?;
    write_pgm(out.join("optical.pgm"), &sim.optical_image)?;
    println!(
        "{} buildings, tallest {:.1} m above ground",
        sim.scene.buildings.len(),
        sim.scene.max_height() - cfg.scene.ground_height
    );
    println!(
        "SAR {}x{}, optical {}x{}, {} ties, {} controls -> {}",
        sim.sar_image.width,
        sim.sar_image.height,
        sim.optical_image.width,
        sim.optical_image.height,
        sim.ties.len(),
        sim.controls.len(),
        out.display()
    );
    Ok(())
}
