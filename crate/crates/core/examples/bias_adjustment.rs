//! Estimate the optical RPC shift from noisy tie points and check it on
//! independent control points.

use sarstereo::adjust::{apply_bias, solve_bias, verify_adjustment};
use sarstereo::pipeline::{fit_rpcs, simulate, PipelineConfig, SceneConfig};

fn main() -> sarstereo::Result<()> {
    let cfg = PipelineConfig {
        scene: SceneConfig {
            size: 256,
            ..SceneConfig::default()
        },
        ..PipelineConfig::default()
    };
    let sim = simulate(&cfg)?;
    let rpcs = fit_rpcs(&cfg, &sim.scene, &sim.sensors)?;
    let a = &cfg.adjust;
    println!(
        "injected col/row shift {:.2}/{:.2} px, tie noise {} px",
        a.injected_bias[0], a.injected_bias[1], a.noise_sigma
    );
    for shift_only in [true, false] {
        let rep = solve_bias(
            &rpcs.sar,
            &rpcs.optical,
            &sim.ties,
            cfg.h_mean(),
            shift_only,
            a.reject_thresh,
        )?;
        let before = verify_adjustment(&rpcs.sar, &rpcs.optical, &sim.controls)?;
        let corrected = apply_bias(rpcs.optical.clone(), rep.bias)?;
        let after = verify_adjustment(&rpcs.sar, &corrected, &sim.controls)?;
        println!(
            "{}: m0 {:.3} n0 {:.3} (slopes {:.1e}), {} ties used, {} rejected, std {:.3} px",
            if shift_only { "shift " } else { "affine" },
            rep.bias.m0,
            rep.bias.n0,
            rep.bias.max_slope(),
            rep.n_used,
            rep.n_rejected,
            rep.std
        );
        println!(
            "        control RMSE {:.3} -> {:.3} px, max {:.3} -> {:.3} px",
            before.rmse, after.rmse, before.max, after.max
        );
    }
    Ok(())
}
