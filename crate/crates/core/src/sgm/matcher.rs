use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SensorModel;

use super::aggregate::aggregate;
use super::cost::{compute_costs, CostInputs};
use super::disparity::{lr_check, remove_small_regions, wta_subpixel, DisparityMap};
use super::field::{auto_hypotheses, build_search_field_scaled, SearchField};
use super::mi::{mi_cost_table, random_prior, upsample_prior};
use super::Image;

/// Largest target-pixel spacing between neighboring hypotheses when their
/// count is chosen automatically.
pub const AUTO_SPACING: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Weight of MI against Census.
    pub alpha: f32,
    pub p1: f32,
    pub p2: f32,
    pub census_window: usize,
    pub mi_bins: usize,
    pub pyramid_levels: usize,
    pub paths: usize,
    /// LR tolerance in hypothesis steps.
    pub lr_thresh: f64,
    /// Search half-range around the mean height (meters).
    pub half_range: f64,
    /// Hypothesis count; chosen from the geometry when absent.
    pub hypotheses: Option<usize>,
    /// Connected-region size filter; absent means off.
    pub min_region_size: Option<usize>,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            p1: 0.1,
            p2: 0.8,
            census_window: 7,
            mi_bins: 16,
            pyramid_levels: 4,
            paths: 16,
            lr_thresh: 1.0,
            half_range: 20.0,
            hypotheses: None,
            min_region_size: None,
            seed: 7,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        if !(self.p1 > 0.0 && self.p2 > self.p1) {
            return Err(Error::invalid("penalties must satisfy p2 > p1 > 0"));
        }
        if self.census_window < 3 || self.census_window.is_multiple_of(2) {
            return Err(Error::invalid("census_window must be odd and at least 3"));
        }
        if self.mi_bins < 2 {
            return Err(Error::invalid("mi_bins must be at least 2"));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::invalid("pyramid_levels must be at least 1"));
        }
        if self.paths == 0 || self.paths > 16 {
            return Err(Error::invalid("paths must be between 1 and 16"));
        }
        if !(self.lr_thresh >= 0.0) {
            return Err(Error::invalid("lr_thresh must be non-negative"));
        }
        if !(self.half_range > 0.0) {
            return Err(Error::invalid("half_range must be positive"));
        }
        if self.hypotheses.is_some_and(|d| d < 2) {
            return Err(Error::invalid("hypotheses must be at least 2"));
        }
        Ok(())
    }
}

/// Matching result in the reference frame.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Sub-pixel, LR-checked disparity.
    pub disparity: DisparityMap,
    pub left: DisparityMap,
    pub right: DisparityMap,
    /// Reference-to-target field at full resolution.
    pub field: SearchField,
}

fn pyramid(img: &Image, levels: usize) -> Vec<Image> {
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        let next = out.last().map(Image::downsample).unwrap_or_else(|| img.clone());
        out.push(next);
    }
    out
}

fn match_level(
    reference: &Image,
    target: &Image,
    field: &SearchField,
    prior: Option<&DisparityMap>,
    cfg: &MatchConfig,
    seed: u64,
) -> Result<DisparityMap> {
    let table = if cfg.alpha > 0.0 {
        let fallback;
        let prior = match prior {
            Some(p) => p,
            None => {
                fallback = random_prior(field, seed);
                &fallback
            }
        };
        Some(mi_cost_table(reference, target, field, prior, cfg.mi_bins)?)
    } else {
        None
    };
    let cv = compute_costs(&CostInputs {
        reference,
        target,
        field,
        alpha: cfg.alpha,
        census_window: cfg.census_window,
        mi: table.as_ref(),
    })?;
    let agg = aggregate(&cv, cfg.p1, cfg.p2, cfg.paths)?;
    drop(cv);
    Ok(wta_subpixel(&agg, field.h_mean(), field.step))
}

/// Coarse-to-fine matching of `reference` against `target`.
///
/// Coarser levels only refine the MI table through their disparity, so with
/// `alpha == 0` the finest level is matched directly.
#[allow(clippy::too_many_arguments)]
fn match_one_way<R: SensorModel, T: SensorModel>(
    reference: &Image,
    target: &Image,
    ref_model: &R,
    tgt_model: &T,
    h_mean: f64,
    hypotheses: usize,
    cfg: &MatchConfig,
    seed: u64,
) -> Result<(DisparityMap, SearchField)> {
    let levels = if cfg.alpha > 0.0 { cfg.pyramid_levels } else { 1 };
    let refs = pyramid(reference, levels);
    let tgts = pyramid(target, levels);
    let mut prior: Option<DisparityMap> = None;
    for level in (0..levels).rev() {
        let (ri, ti) = (&refs[level], &tgts[level]);
        let min_side = ri.width.min(ri.height).min(ti.width).min(ti.height);
        if level > 0 && min_side < 2 * cfg.census_window {
            continue;
        }
        let field = build_search_field_scaled(
            ref_model,
            tgt_model,
            (ri.width, ri.height),
            (ti.width, ti.height),
            h_mean,
            cfg.half_range,
            hypotheses,
            1 << level,
        )?;
        let up = prior.as_ref().map(|p| upsample_prior(p, ri.width, ri.height));
        let disp = match_level(ri, ti, &field, up.as_ref(), cfg, seed.wrapping_add(level as u64))?;
        if level == 0 {
            return Ok((disp, field));
        }
        prior = Some(disp);
    }
    Err(Error::invalid("pyramid produced no full-resolution level"))
}

/// Full matching: both directions, sub-pixel WTA, then the LR check.
pub fn pyramid_match<R: SensorModel, T: SensorModel>(
    reference: &Image,
    target: &Image,
    ref_model: &R,
    tgt_model: &T,
    h_mean: f64,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    let hypotheses = match cfg.hypotheses {
        Some(d) => d,
        None => auto_hypotheses(
            ref_model,
            tgt_model,
            (reference.width, reference.height),
            h_mean,
            cfg.half_range,
            AUTO_SPACING,
        )?,
    };
    let (left, field) = match_one_way(
        reference, target, ref_model, tgt_model, h_mean, hypotheses, cfg, cfg.seed,
    )?;
    let (right, _) = match_one_way(
        target,
        reference,
        tgt_model,
        ref_model,
        h_mean,
        hypotheses,
        cfg,
        cfg.seed.wrapping_add(1000),
    )?;
    let mut disparity = lr_check(&left, &right, &field, cfg.lr_thresh);
    if let Some(n) = cfg.min_region_size {
        remove_small_regions(&mut disparity, n, 1.0);
    }
    Ok(MatchResult {
        disparity,
        left,
        right,
        field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GroundPoint, ImagePoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Maps ground `(x, y)` to pixel `(row, col)` with a height-dependent
    /// column shift, so height hypotheses act as horizontal disparities.
    #[derive(Clone)]
    struct Shear {
        px_per_m: f64,
        h0: f64,
    }

    impl SensorModel for Shear {
        fn project(&self, g: &GroundPoint) -> crate::Result<ImagePoint> {
            Ok(ImagePoint::new(g.y, g.x + self.px_per_m * (g.h - self.h0)))
        }
        fn backproject(&self, p: &ImagePoint, h: f64) -> crate::Result<GroundPoint> {
            Ok(GroundPoint::new(p.col - self.px_per_m * (h - self.h0), p.row, h))
        }
    }

    fn texture(seed: u64, w: usize, h: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f32> = (0..w * h).map(|_| rng.random()).collect();
        Image::from_fn(w, h, |r, c| {
            let mut s = 0.0;
            for dr in 0..2 {
                for dc in 0..2 {
                    s += base[((r + dr) % h) * w + (c + dc) % w];
                }
            }
            s
        })
    }

    fn small_cfg() -> MatchConfig {
        MatchConfig {
            p1: 0.05,
            p2: 0.5,
            census_window: 5,
            half_range: 4.0,
            hypotheses: Some(9),
            ..MatchConfig::default()
        }
    }

    #[test]
    fn identical_images_with_identity_geometry() {
        let img = texture(1, 40, 32);
        let m = Shear {
            px_per_m: 0.0,
            h0: 100.0,
        };
        let tgt = Shear {
            px_per_m: 1.0,
            h0: 100.0,
        };
        let res = pyramid_match(&img, &img, &m, &tgt, 100.0, &small_cfg()).unwrap();
        // Interior pixels whose whole search range stays inside the target.
        for r in 3..29 {
            for c in 7..33 {
                let d = res.disparity.get(r, c).expect("valid");
                assert_eq!(d.round(), 4.0, "{r},{c}: {d}");
            }
        }
    }

    #[test]
    fn recovers_fractional_shift() {
        // Target is the reference resampled 2.3 px to the right; with
        // 1 px per hypothesis step the expected index is 4 + 2.3.
        let img = texture(2, 60, 40);
        let shift = 2.3f32;
        let tgt = Image::from_fn(60, 40, |r, c| {
            img.bilinear(r as f64, (c as f32 - shift).clamp(0.0, 59.0) as f64)
                .unwrap()
        });
        let a = Shear {
            px_per_m: 0.0,
            h0: 100.0,
        };
        let b = Shear {
            px_per_m: 1.0,
            h0: 100.0,
        };
        let res = pyramid_match(&img, &tgt, &a, &b, 100.0, &small_cfg()).unwrap();
        let mut sum = 0.0;
        let mut n = 0;
        for r in 5..35 {
            for c in 15..45 {
                if let Some(d) = res.disparity.get(r, c) {
                    sum += d;
                    n += 1;
                }
            }
        }
        assert!(n > 600);
        let mean = sum / n as f64;
        assert!((mean - 6.3).abs() < 0.15, "{mean}");
    }

    #[test]
    fn mi_pyramid_runs_and_is_deterministic() {
        let img = texture(3, 64, 48);
        let a = Shear {
            px_per_m: 0.0,
            h0: 100.0,
        };
        let b = Shear {
            px_per_m: 1.0,
            h0: 100.0,
        };
        let cfg = MatchConfig {
            alpha: 0.5,
            ..small_cfg()
        };
        let inverted = img.map(|v| 5.0 - v);
        let one = pyramid_match(&img, &inverted, &a, &b, 100.0, &cfg).unwrap();
        let two = pyramid_match(&img, &inverted, &a, &b, 100.0, &cfg).unwrap();
        assert_eq!(one.disparity.data.len(), two.disparity.data.len());
        assert!(one
            .disparity
            .data
            .iter()
            .zip(&two.disparity.data)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(one.disparity.valid_count() > 0);
    }

    #[test]
    fn config_validation() {
        assert!(MatchConfig::default().validate().is_ok());
        let bad = MatchConfig {
            p2: 0.05,
            ..MatchConfig::default()
        };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&MatchConfig::default()).unwrap();
        let back: MatchConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, MatchConfig::default());
    }
}
