//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always print.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sarstereo::adjust::{apply_bias, solve_bias, verify_adjustment};
use sarstereo::epipolar::{
    closed_form_deviation, closed_form_for_optical_pixel, conjugacy, straightness, sweep_curve, SourceImage,
};
use sarstereo::eval::{cloud_accuracy, srtm_filter, Octree, DEFAULT_LEAF_CAPACITY};
use sarstereo::geometry::{GroundPoint, ImagePoint, SensorModel, SensorPair};
use sarstereo::pipeline::{
    self, adjust, evaluate, fit_rpcs, make_controls, make_ties, reconstruct, run_pipeline, scene_dem, simulate,
    PipelineConfig, SceneConfig, Stage,
};
use sarstereo::rpc::{fit_rpc, GroundExtent, RationalPolynomialModel, VgcpGrid, DEFAULT_RIDGE};
use sarstereo::sgm::{
    combined_cost, compute_costs, mi_table_from_pairs, subpixel_offset, CostInputs, Image, SearchField,
};
use sarstereo::simulate::{make_sensors_for, Footprint, Scene, SensorPairSpec};
use sarstereo::triangulate::{intersect, CloudPoint, PointCloud};

const H_MEAN: f64 = 500.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Wide area and full height range used by the epipolar criteria.
fn wide_area() -> Footprint {
    Footprint {
        half_extent: 2500.0,
        ground_height: H_MEAN,
        h_min: 0.0,
        h_max: 1200.0,
    }
}

fn wide_extent() -> GroundExtent {
    GroundExtent {
        x_min: -2500.0,
        x_max: 2500.0,
        y_min: -2500.0,
        y_max: 2500.0,
        h_min: 0.0,
        h_max: 1200.0,
    }
}

struct WidePair {
    sensors: SensorPair,
    sar: RationalPolynomialModel,
    opt: RationalPolynomialModel,
}

fn wide_pairs() -> Vec<WidePair> {
    [SensorPairSpec::munich(), SensorPairSpec::berlin()]
        .into_iter()
        .map(|spec| {
            let sensors = make_sensors_for(&spec, &wide_area()).unwrap();
            let grid = VgcpGrid::new(20, 20, 5, wide_extent()).unwrap();
            let (sar, _) = fit_rpc(&sensors.sar, &grid, DEFAULT_RIDGE).unwrap();
            let (opt, _) = fit_rpc(&sensors.optical, &grid, DEFAULT_RIDGE).unwrap();
            WidePair { sensors, sar, opt }
        })
        .collect()
}

/// 3x3 grid of pixels spread over an image's interior.
fn pixel_grid(lines: usize, samples: usize) -> Vec<ImagePoint> {
    let mut out = Vec::new();
    for fr in [0.2, 0.5, 0.8] {
        for fc in [0.2, 0.5, 0.8] {
            out.push(ImagePoint::new(fr * lines as f64, fc * samples as f64));
        }
    }
    out
}

fn rpc_fit_fidelity() -> Verdict {
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for spec in [SensorPairSpec::munich(), SensorPairSpec::berlin()] {
        let sensors = make_sensors_for(&spec, &wide_area()).unwrap();
        let grid = VgcpGrid::new(20, 20, 5, wide_extent()).unwrap();
        let t = Instant::now();
        let (_, report) = fit_rpc(&sensors.sar, &grid, DEFAULT_RIDGE).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        worst = worst.max(report.chk_std_row).max(report.chk_std_col);
    }
    verdict(
        worst < 0.01 && slowest < 10.0,
        format!("worst checkpoint STD {worst:.2e} px (< 0.01), slowest fit {slowest:.2} s (< 10)"),
    )
}

fn epipolar_straightness(pairs: &[WidePair]) -> Verdict {
    let (mut lin, mut quad) = (0.0f64, 0.0f64);
    let mut violations = 0usize;
    let mut samples = 0usize;
    let mut worst_excess = 0.0f64;
    let mut worst_at = (0.0, 0.0);
    for pair in pairs {
        let sar_dims = (pair.sensors.sar.lines, pair.sensors.sar.samples);
        let opt_dims = (pair.sensors.optical.lines, pair.sensors.optical.samples);
        let mut curves = Vec::new();
        for p in pixel_grid(sar_dims.0, sar_dims.1) {
            curves.push(sweep_curve(&pair.sar, &pair.opt, &p, 0.0, 1200.0, 10.0, SourceImage::Sar).unwrap());
        }
        for p in pixel_grid(opt_dims.0, opt_dims.1) {
            curves.push(sweep_curve(&pair.opt, &pair.sar, &p, 0.0, 1200.0, 10.0, SourceImage::Optical).unwrap());
        }
        for c in &curves {
            let r = straightness(c).unwrap();
            lin = lin.max(r.linear_max_abs);
            quad = quad.max(r.quadratic_max_abs);
            samples += r.heights.len();
            for (l, q) in r.linear_residuals.iter().zip(&r.quadratic_residuals) {
                if q.abs() > l.abs() + 1e-12 {
                    violations += 1;
                    if q.abs() - l.abs() > worst_excess {
                        worst_excess = q.abs() - l.abs();
                        worst_at = (*l, *q);
                    }
                }
            }
        }
    }
    verdict(
        lin < 1.0 && quad < 0.05 && violations == 0,
        format!(
            "max linear residual {lin:.4} px (< 1), max quadratic {quad:.2e} px (< 0.05), \
             samples with |quadratic| > |linear|: {violations}/{samples} \
             (largest excess {worst_excess:.1e} px at linear {:.1e}, quadratic {:.1e})",
            worst_at.0, worst_at.1
        ),
    )
}

fn closed_form_vs_sweep(pairs: &[WidePair]) -> Verdict {
    let (mut near, mut full) = (0.0f64, 0.0f64);
    for pair in pairs {
        let opt = &pair.sensors.optical;
        for p in pixel_grid(opt.lines, opt.samples) {
            let cf = closed_form_for_optical_pixel(opt, &pair.sensors.sar, &p).unwrap();
            let c = sweep_curve(
                &pair.opt,
                &pair.sar,
                &p,
                H_MEAN - 20.0,
                H_MEAN + 20.0,
                1.0,
                SourceImage::Optical,
            )
            .unwrap();
            near = near.max(closed_form_deviation(&cf, &c).unwrap());
            let c = sweep_curve(&pair.opt, &pair.sar, &p, 0.0, 1200.0, 10.0, SourceImage::Optical).unwrap();
            full = full.max(closed_form_deviation(&cf, &c).unwrap());
        }
    }
    verdict(
        near < 0.05 && full < 0.2,
        format!("max deviation {near:.4} px over H_mean +/- 20 m (< 0.05), {full:.4} px over [0, 1200] m (< 0.2)"),
    )
}

fn epipolar_conjugacy(pairs: &[WidePair]) -> Verdict {
    let (mut col, mut slope) = (0.0f64, 0.0f64);
    for pair in pairs {
        let sar = &pair.sensors.sar;
        for p in pixel_grid(sar.lines, sar.samples) {
            let curve = sweep_curve(&pair.sar, &pair.opt, &p, 0.0, 1200.0, 10.0, SourceImage::Sar).unwrap();
            let q1 = curve.samples[30].point();
            let q2 = curve.samples[90].point();
            let r = conjugacy(&pair.sar, &pair.opt, &curve, &q1, &q2, 0.0, 1200.0, 10.0).unwrap();
            col = col.max(r.max_col_diff);
            slope = slope.max(r.max_gradient_diff);
        }
    }
    verdict(
        col < 1.0 && slope < 0.002,
        format!("max back-curve offset {col:.4} px (< 1), max slope difference {slope:.2e} (< 0.002)"),
    )
}

fn bias_recovery() -> Verdict {
    let cfg = PipelineConfig::default();
    let scene = sarstereo::simulate::make_scene(&cfg.scene_spec()).unwrap();
    let sensors = sarstereo::simulate::make_sensors(&cfg.sensors, &scene).unwrap();
    let rpcs = fit_rpcs(&cfg, &scene, &sensors).unwrap();
    let e = 0.8 * scene.half_extent();
    let (mut sum_c, mut sum_r) = (0.0, 0.0);
    let mut improved = 0;
    let seeds = 50;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ground = |rng: &mut ChaCha8Rng, h_lo: f64, h_hi: f64, n: usize| -> Vec<GroundPoint> {
            (0..n)
                .map(|_| {
                    GroundPoint::new(
                        rng.random_range(-e..e),
                        rng.random_range(-e..e),
                        if h_hi > h_lo {
                            rng.random_range(h_lo..h_hi)
                        } else {
                            h_lo
                        },
                    )
                })
                .collect()
        };
        let tie_sites = ground(&mut rng, H_MEAN, H_MEAN, 8);
        let ties = make_ties(&sensors.sar, &sensors.optical, &tie_sites, 0.25, &mut rng).unwrap();
        let control_sites = ground(&mut rng, H_MEAN, H_MEAN + 20.0, 31);
        let controls = make_controls(&sensors.sar, &sensors.optical, &control_sites, 0.25, &mut rng).unwrap();
        let report = solve_bias(&rpcs.sar, &rpcs.optical, &ties, H_MEAN, true, 2.0).unwrap();
        sum_c += report.bias.m0;
        sum_r += report.bias.n0;
        let before = verify_adjustment(&rpcs.sar, &rpcs.optical, &controls).unwrap();
        let corrected = apply_bias(rpcs.optical.clone(), report.bias).unwrap();
        let after = verify_adjustment(&rpcs.sar, &corrected, &controls).unwrap();
        if after.rmse < before.rmse {
            improved += 1;
        }
    }
    let (mc, mr) = (sum_c / seeds as f64, sum_r / seeds as f64);
    let err = ((mc + 2.47).powi(2) + (mr + 0.53).powi(2)).sqrt();
    verdict(
        err < 0.15 && improved >= 48,
        format!(
            "mean shift ({mc:.3}, {mr:.3}) px, {err:.3} px from (-2.47, -0.53) (< 0.15); \
             RMSE improved in {improved}/{seeds} seeds (>= 48)"
        ),
    )
}

fn end_to_end(keep: &mut Option<(PointCloud, Scene)>) -> Verdict {
    let cfg = PipelineConfig::default();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let (eval, cloud, scene) = pool.install(|| {
        let sim = simulate(&cfg).unwrap();
        let rpcs = fit_rpcs(&cfg, &sim.scene, &sim.sensors).unwrap();
        let (opt, _) = adjust(&cfg, &rpcs, &sim.ties, &sim.controls).unwrap();
        let (_, cloud, _) = reconstruct(&cfg, &sim.sar_image, &sim.optical_image, &rpcs.sar, &opt).unwrap();
        let (eval, _) = evaluate(&cfg, &cloud, &sim.scene).unwrap();
        (eval, cloud, sim.scene)
    });
    let secs = t.elapsed().as_secs_f64();
    let r = &eval.raw;
    let pass = cfg.matching.alpha == 0.0 && r.median <= 2.0 && r.q25 <= 1.0 && secs < 300.0;
    *keep = Some((cloud, scene));
    verdict(
        pass,
        format!(
            "{} points, median {:.3} m (<= 2), q25 {:.3} m (<= 1), {:.1} s single-threaded (< 300)",
            r.n_points, r.median, r.q25, secs
        ),
    )
}

fn filtering(input: &Option<(PointCloud, Scene)>) -> Verdict {
    let Some((cloud, scene)) = input else {
        return verdict(false, "needs the end-to-end cloud".into());
    };
    let cfg = PipelineConfig::default();
    let e = scene.half_extent();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut points: Vec<CloudPoint> = Vec::new();
    let mut is_outlier = Vec::new();
    for p in cloud
        .points
        .iter()
        .filter(|p| p.position.x.abs() <= e && p.position.y.abs() <= e)
    {
        let mut q = *p;
        let outlier = rng.random_bool(0.1);
        if outlier {
            q.position.h += 50.0;
        }
        points.push(q);
        is_outlier.push(outlier);
    }
    let noisy = PointCloud { points };
    let dem = scene_dem(scene, cfg.eval.dem_spacing).unwrap();
    let (kept, report) = srtm_filter(&noisy, &dem, cfg.eval.srtm_thresh);
    let kept_set: std::collections::HashSet<[u64; 3]> = kept
        .points
        .iter()
        .map(|p| [p.position.x.to_bits(), p.position.y.to_bits(), p.position.h.to_bits()])
        .collect();
    let (mut out_total, mut out_removed, mut in_total, mut in_lost) = (0, 0, 0, 0);
    for (p, &o) in noisy.points.iter().zip(&is_outlier) {
        let k = kept_set.contains(&[p.position.x.to_bits(), p.position.y.to_bits(), p.position.h.to_bits()]);
        if o {
            out_total += 1;
            out_removed += usize::from(!k);
        } else {
            in_total += 1;
            in_lost += usize::from(!k);
        }
    }
    let truth = sarstereo::simulate::ground_truth_cloud(scene, 1).unwrap();
    let before = cloud_accuracy(&noisy, &truth, cfg.eval.k).unwrap().median;
    let after = cloud_accuracy(&kept, &truth, cfg.eval.k).unwrap().median;
    let removed_frac = out_removed as f64 / out_total as f64;
    let lost_frac = in_lost as f64 / in_total as f64;
    verdict(
        removed_frac >= 0.99 && lost_frac <= 0.01 && after <= before && report.outside == 0,
        format!(
            "outliers removed {:.2}% (>= 99), inliers lost {:.2}% (<= 1), median {before:.3} -> {after:.3} m",
            100.0 * removed_frac,
            100.0 * lost_frac
        ),
    )
}

fn knn_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<GroundPoint> = (0..10_000)
        .map(|_| {
            GroundPoint::new(
                rng.random_range(-250.0..250.0),
                rng.random_range(-250.0..250.0),
                rng.random_range(500.0..520.0),
            )
        })
        .collect();
    let tree = Octree::new(&pts, DEFAULT_LEAF_CAPACITY).unwrap();
    let mut mismatches = 0;
    for _ in 0..100 {
        let q = GroundPoint::new(
            rng.random_range(-260.0..260.0),
            rng.random_range(-260.0..260.0),
            rng.random_range(495.0..525.0),
        );
        let mut brute: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.h - q.h).powi(2), i))
            .collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got = tree.knn(&q, 6).unwrap();
        let same = got
            .iter()
            .zip(&brute[..6])
            .all(|(n, (d2, i))| n.index == *i && n.distance == d2.sqrt());
        if !same || got.len() != 6 {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!("{mismatches}/100 queries differ from brute force (k = 6, n = 10^4)"),
    )
}

fn subpixel_formula() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let v: f64 = rng.random_range(-0.5..0.5);
        let a: f64 = rng.random_range(0.1..10.0);
        let b: f64 = rng.random_range(-5.0..5.0);
        let f = |x: f64| a * (x - v).powi(2) + b;
        worst = worst.max((subpixel_offset(f(-1.0), f(0.0), f(1.0)) - v).abs());
    }
    let triple = subpixel_offset(3.0, 1.0, 2.0);
    verdict(
        worst < 1e-12 && (triple - 1.0 / 6.0).abs() < 1e-15,
        format!("worst vertex error {worst:.1e} (< 1e-12), (3, 1, 2) -> {triple:.15}"),
    )
}

fn textured(seed: u64, w: usize, h: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f32> = (0..w * h).map(|_| rng.random()).collect();
    Image::from_fn(w, h, |r, c| {
        let mut s = 0.0;
        for dr in 0..2 {
            for dc in 0..2 {
                s += base[((r + dr) % h) * w + (c + dc) % w];
            }
        }
        s / 4.0
    })
}

fn cost_properties() -> Verdict {
    let (w, h, dn) = (48, 36, 7);
    let a = textured(1, w, h);
    let b = textured(2, w, h);
    let field = SearchField::from_fn(w, h, dn, 0.0, 1.0, (w, h), |r, c, d| {
        Ok(Some(ImagePoint::new(r as f64, c as f64 + d as f64 - 3.0)))
    })
    .unwrap();
    let census = |x: &Image, y: &Image| {
        compute_costs(&CostInputs {
            reference: x,
            target: y,
            field: &field,
            alpha: 0.0,
            census_window: 7,
            mi: None,
        })
        .unwrap()
    };
    let base = census(&a, &b);
    let remapped = census(&a.map(|v| (3.0 * v).exp()), &b.map(|v| v.sqrt() * 10.0 - 2.0));
    let remap_ok = base == remapped;

    // Self-match against a permuted copy, 20 seeds.
    let mut worst_margin = f64::INFINITY;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let img: Vec<f32> = (0..4096).map(|_| rng.random()).collect();
        let mut perm = img.clone();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let self_pairs: Vec<(f32, f32)> = img.iter().map(|&v| (v, v)).collect();
        let perm_pairs: Vec<(f32, f32)> = img.iter().zip(&perm).map(|(&x, &y)| (x, y)).collect();
        let mean = |pairs: &[(f32, f32)]| {
            let t = mi_table_from_pairs(pairs, (0.0, 1.0), (0.0, 1.0), 16).unwrap();
            pairs.iter().map(|&(x, y)| f64::from(t.cost(x, y))).sum::<f64>() / pairs.len() as f64
        };
        worst_margin = worst_margin.min(mean(&perm_pairs) - mean(&self_pairs));
    }

    // Linearity in alpha at three probe values.
    let pairs: Vec<(f32, f32)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter_map(|(r, c)| b.bilinear(r as f64, c as f64).map(|v| (a.get(r, c), v)))
        .collect();
    let table = mi_table_from_pairs(&pairs, a.min_max(), b.min_max(), 16).unwrap();
    let vol = |alpha: f32| {
        compute_costs(&CostInputs {
            reference: &a,
            target: &b,
            field: &field,
            alpha,
            census_window: 7,
            mi: Some(&table),
        })
        .unwrap()
    };
    let (c0, c1) = (vol(0.0), vol(1.0));
    let mut lin_err = 0.0f32;
    for alpha in [0.25f32, 0.5, 0.75] {
        let v = vol(alpha);
        for ((x, m), c) in v.data.iter().zip(&c1.data).zip(&c0.data) {
            if x.is_finite() {
                lin_err = lin_err.max((x - combined_cost(*m, *c, alpha)).abs());
            }
        }
    }
    verdict(
        remap_ok && worst_margin > 0.0 && lin_err < 1e-6,
        format!(
            "census remap invariant: {remap_ok}; worst MI self-match margin {worst_margin:.4} (> 0); \
             max deviation from linear in alpha {lin_err:.1e}"
        ),
    )
}

fn determinism() -> Verdict {
    let cfg = PipelineConfig {
        scene: SceneConfig {
            size: 128,
            building_count: 6,
            ..SceneConfig::default()
        },
        ..PipelineConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let sim = simulate(&cfg).unwrap();
                let rpcs = fit_rpcs(&cfg, &sim.scene, &sim.sensors).unwrap();
                let (opt, _) = adjust(&cfg, &rpcs, &sim.ties, &sim.controls).unwrap();
                let (m, cloud, _) = reconstruct(&cfg, &sim.sar_image, &sim.optical_image, &rpcs.sar, &opt).unwrap();
                let disp: Vec<u32> = m.disparity.data.iter().map(|v| v.to_bits()).collect();
                let pts: Vec<u64> = cloud
                    .points
                    .iter()
                    .flat_map(|p| [p.position.x.to_bits(), p.position.y.to_bits(), p.position.h.to_bits()])
                    .collect();
                (disp, pts)
            })
    };
    let one = run(1);
    let sweep_ok = [4, 8].iter().all(|&t| run(t) == one);

    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ma = run_pipeline(&cfg, &a).unwrap();
    let mb = run_pipeline(&cfg, &b).unwrap();
    let rerun = pipeline::run_stage(&cfg, &a, Stage::Match).unwrap();
    let files_ok = ma == mb
        && rerun == ma[3]
        && std::fs::read(a.join(pipeline::DISPARITY_FILE)).unwrap()
            == std::fs::read(b.join(pipeline::DISPARITY_FILE)).unwrap()
        && std::fs::read(a.join(pipeline::CLOUD_FILE)).unwrap() == std::fs::read(b.join(pipeline::CLOUD_FILE)).unwrap();
    verdict(
        sweep_ok && files_ok && !one.1.is_empty(),
        format!(
            "1/4/8 threads identical: {sweep_ok}; pipeline re-run identical: {files_ok}; {} points",
            one.1.len() / 3
        ),
    )
}

fn round_trip_error<M: SensorModel>(model: &M, lines: usize, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = ImagePoint::new(
            rng.random_range(0.0..lines as f64),
            rng.random_range(0.0..samples as f64),
        );
        let h = rng.random_range(0.0..1200.0);
        let g = model.backproject(&p, h).unwrap();
        let g2 = model.backproject(&model.project(&g).unwrap(), h).unwrap();
        worst = worst.max(g.distance(&g2));
    }
    worst
}

fn geometry_round_trips(pairs: &[WidePair]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut rt, mut tri) = (0.0f64, 0.0f64);
    for pair in pairs {
        let s = &pair.sensors;
        rt = rt.max(round_trip_error(
            &s.optical,
            s.optical.lines,
            s.optical.samples,
            &mut rng,
        ));
        rt = rt.max(round_trip_error(&s.sar, s.sar.lines, s.sar.samples, &mut rng));
        for _ in 0..1000 {
            let g = GroundPoint::new(
                rng.random_range(-2000.0..2000.0),
                rng.random_range(-2000.0..2000.0),
                rng.random_range(0.0..1200.0),
            );
            let (x, _) = intersect(
                &s.sar,
                &s.optical,
                &s.sar.project(&g).unwrap(),
                &s.optical.project(&g).unwrap(),
                H_MEAN,
            )
            .unwrap();
            tri = tri.max(x.distance(&g));
        }
    }
    verdict(
        rt < 1e-6 && tri < 1e-3,
        format!("worst round trip {rt:.1e} m (< 1e-6), worst triangulation {tri:.1e} m (< 1e-3)"),
    )
}

fn main() {
    let t0 = Instant::now();
    let pairs = wide_pairs();
    let mut cloud = None;
    let mut results: Vec<(usize, &str, std::thread::Result<Verdict>)> = Vec::new();
    macro_rules! criterion {
        ($id:expr, $name:expr, $body:expr) => {{
            let r = catch_unwind(AssertUnwindSafe(|| $body));
            results.push(($id, $name, r));
            let (id, name, r) = results.last().unwrap();
            print_line(*id, name, r);
        }};
    }
    criterion!(1, "RPC fit fidelity", rpc_fit_fidelity());
    criterion!(2, "epipolar straightness", epipolar_straightness(&pairs));
    criterion!(3, "closed form vs sweep", closed_form_vs_sweep(&pairs));
    criterion!(4, "conjugacy", epipolar_conjugacy(&pairs));
    criterion!(5, "bias recovery", bias_recovery());
    criterion!(6, "end-to-end reconstruction", end_to_end(&mut cloud));
    criterion!(7, "filtering improvement", filtering(&cloud));
    criterion!(8, "kNN oracle", knn_oracle());
    criterion!(9, "sub-pixel formula", subpixel_formula());
    criterion!(10, "cost properties", cost_properties());
    criterion!(11, "determinism", determinism());
    criterion!(12, "geometry round trips", geometry_round_trips(&pairs));
    let failed = results.iter().filter(|(_, _, r)| !matches!(r, Ok(v) if v.pass)).count();
    println!(
        "acceptance: {} passed, {} failed ({:.1} s)",
        results.len() - failed,
        failed,
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn print_line(id: usize, name: &str, r: &std::thread::Result<Verdict>) {
    match r {
        Ok(v) => println!(
            "criterion {id:>2} {} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        ),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            println!("criterion {id:>2} FAIL {name}: panicked: {msg}");
        }
    }
}
