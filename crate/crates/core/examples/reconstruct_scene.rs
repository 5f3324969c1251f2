//! Simulate a block scene, fit RPCs, remove the optical bias, match with
//! Census SGM, intersect and evaluate against the heightfield.
//!
//! cargo run --release --example reconstruct_scene -- [size]

use std::time::Instant;

use sarstereo::pipeline::{adjust, evaluate, fit_rpcs, reconstruct, simulate, PipelineConfig, SceneConfig};

fn main() -> sarstereo::Result<()> {
    let size = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(512);
    let cfg = PipelineConfig {
        scene: SceneConfig {
            size,
            ..SceneConfig::default()
        },
        ..PipelineConfig::default()
    };
    let t0 = Instant::now();
    let sim = simulate(&cfg)?;
    println!(
        "scene {size}x{size}, SAR {}x{}, optical {}x{} ({:.1?})",
        sim.sar_image.width,
        sim.sar_image.height,
        sim.optical_image.width,
        sim.optical_image.height,
        t0.elapsed()
    );
    let rpcs = fit_rpcs(&cfg, &sim.scene, &sim.sensors)?;
    println!(
        "RPC checkpoint std: SAR {:.2e}/{:.2e} px, optical {:.2e}/{:.2e} px",
        rpcs.sar_report.chk_std_row,
        rpcs.sar_report.chk_std_col,
        rpcs.optical_report.chk_std_row,
        rpcs.optical_report.chk_std_col
    );
    let (optical, adj) = adjust(&cfg, &rpcs, &sim.ties, &sim.controls)?;
    println!(
        "bias m0 {:.3} n0 {:.3}; check RMSE {:.3} -> {:.3} px",
        adj.report.bias.m0, adj.report.bias.n0, adj.before.rmse, adj.after.rmse
    );
    let t1 = Instant::now();
    let (m, cloud, dropped) = reconstruct(&cfg, &sim.sar_image, &sim.optical_image, &rpcs.sar, &optical)?;
    println!(
        "matched {} hypotheses, {:.1}% valid, {} points ({} dropped) in {:.1?}",
        m.disparity.hypotheses,
        100.0 * m.disparity.valid_fraction(),
        cloud.len(),
        dropped,
        t1.elapsed()
    );
    let (eval, _) = evaluate(&cfg, &cloud, &sim.scene)?;
    for (name, r) in [("raw", &eval.raw), ("filtered", &eval.filtered)] {
        println!(
            "{name:>8}: n {} median {:.3} m q25 {:.3} m q75 {:.3} m, z rmse {:.3} m",
            r.n_points, r.median, r.q25, r.q75, r.z.rmse
        );
    }
    println!(
        "{} points off the scene; filter kept {} removed {} outside {}; total {:.1?}",
        eval.cropped,
        eval.filter.kept,
        eval.filter.removed,
        eval.filter.outside,
        t0.elapsed()
    );
    Ok(())
}
