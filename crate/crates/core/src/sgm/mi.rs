use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::disparity::DisparityMap;
use super::field::SearchField;
use super::Image;

/// Gaussian width of the Parzen window, in bins.
pub const PARZEN_SIGMA: f64 = 1.0;

/// Pointwise mutual-information cost lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct MiTable {
    pub bins: usize,
    pub ref_range: (f32, f32),
    pub tgt_range: (f32, f32),
    /// Row-major `bins x bins`, reference bin first; values in `[0, 1]`.
    pub cost: Vec<f32>,
}

#[inline]
pub fn bin_of(value: f32, range: (f32, f32), bins: usize) -> usize {
    let span = range.1 - range.0;
    if !(span > 0.0) {
        return 0;
    }
    let t = ((value - range.0) / span).clamp(0.0, 1.0);
    ((t * bins as f32) as usize).min(bins - 1)
}

impl MiTable {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.cost[i * self.bins + j]
    }

    #[inline]
    pub fn cost(&self, ref_value: f32, tgt_value: f32) -> f32 {
        self.at(
            bin_of(ref_value, self.ref_range, self.bins),
            bin_of(tgt_value, self.tgt_range, self.bins),
        )
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Mirrors an out-of-range bin index back into `0..n`.
fn reflect(i: i64, n: i64) -> usize {
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
    }
    i as usize
}

/// Separable Gaussian smoothing with mirrored borders, preserving mass.
fn smooth(hist: &[f64], bins: usize) -> Vec<f64> {
    let k = gaussian_kernel(PARZEN_SIGMA);
    let radius = (k.len() / 2) as i64;
    let n = bins as i64;
    let mut tmp = vec![0.0; bins * bins];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (t, w) in k.iter().enumerate() {
                let jj = reflect(j + t as i64 - radius, n);
                s += w * hist[i as usize * bins + jj];
            }
            tmp[(i * n + j) as usize] = s;
        }
    }
    let mut out = vec![0.0; bins * bins];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (t, w) in k.iter().enumerate() {
                let ii = reflect(i + t as i64 - radius, n);
                s += w * tmp[ii * bins + j as usize];
            }
            out[(i * n + j) as usize] = s;
        }
    }
    out
}

/// MI cost table from corresponding `(reference, target)` intensities.
///
/// Cost is `-ln P(i,j) + ln P(i) + ln P(j)` on the Parzen-smoothed joint
/// histogram, offset by `ln bins` (the value of a perfect uniform match),
/// scaled by `1 / (2 ln bins)` and clamped to `[0, 1]`. Independent
/// intensities then cost about 0.5 whatever the table.
pub fn mi_table_from_pairs(
    pairs: &[(f32, f32)],
    ref_range: (f32, f32),
    tgt_range: (f32, f32),
    bins: usize,
) -> Result<MiTable> {
    if bins < 2 {
        return Err(Error::invalid("MI needs at least two bins"));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("MI needs at least one correspondence"));
    }
    let mut hist = vec![0.0; bins * bins];
    for &(a, b) in pairs {
        hist[bin_of(a, ref_range, bins) * bins + bin_of(b, tgt_range, bins)] += 1.0;
    }
    let joint = smooth(&hist, bins);
    let total: f64 = joint.iter().sum();
    let floor = 1e-6 / (bins * bins) as f64;
    let p: Vec<f64> = joint.iter().map(|v| (v / total).max(floor)).collect();
    let pi: Vec<f64> = (0..bins).map(|i| p[i * bins..(i + 1) * bins].iter().sum()).collect();
    let pj: Vec<f64> = (0..bins).map(|j| (0..bins).map(|i| p[i * bins + j]).sum()).collect();
    let raw: Vec<f64> = (0..bins * bins)
        .map(|k| -p[k].ln() + pi[k / bins].ln() + pj[k % bins].ln())
        .collect();
    let offset = (bins as f64).ln();
    let scale = 1.0 / (2.0 * offset);
    Ok(MiTable {
        bins,
        ref_range,
        tgt_range,
        cost: raw
            .iter()
            .map(|v| ((v + offset) * scale).clamp(0.0, 1.0) as f32)
            .collect(),
    })
}

/// MI table from the correspondences implied by `prior` through `field`.
pub fn mi_cost_table(
    reference: &Image,
    target: &Image,
    field: &SearchField,
    prior: &DisparityMap,
    bins: usize,
) -> Result<MiTable> {
    let mut pairs = Vec::new();
    for r in 0..field.height {
        for c in 0..field.width {
            let Some(d) = prior.get(r, c) else { continue };
            let d = (d.round() as usize).min(field.hypotheses - 1);
            if let Some(q) = field.sample(r, c, d) {
                if let Some(v) = target.bilinear(q.row, q.col) {
                    pairs.push((reference.get(r, c), v));
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::invalid("prior yields no in-image correspondences"));
    }
    mi_table_from_pairs(&pairs, reference.min_max(), target.min_max(), bins)
}

/// Uniformly random integer hypotheses, used before any estimate exists.
pub fn random_prior(field: &SearchField, seed: u64) -> DisparityMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = DisparityMap::like_field(field);
    for v in map.data.iter_mut() {
        *v = rng.random_range(0..field.hypotheses) as f32;
    }
    map
}

/// Nearest-neighbor expansion of a coarser map to `width x height`.
pub fn upsample_prior(coarse: &DisparityMap, width: usize, height: usize) -> DisparityMap {
    let mut out = DisparityMap::invalid(width, height, coarse.h_mean, coarse.step, coarse.hypotheses);
    for r in 0..height {
        for c in 0..width {
            let v = coarse.get((r / 2).min(coarse.height - 1), (c / 2).min(coarse.width - 1));
            out.set(r, c, v);
        }
    }
    out
}
