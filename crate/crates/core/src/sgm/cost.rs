use rayon::prelude::*;

use crate::error::{Error, Result};

use super::census::{census_cost, census_transform, CensusImage};
use super::field::SearchField;
use super::mi::MiTable;
use super::Image;

/// Marker for hypotheses without a usable target sample.
pub const INVALID_COST: f32 = f32::INFINITY;

/// Pixel-major cost volume: index `(row * width + col) * hypotheses + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    pub hypotheses: usize,
    pub data: Vec<f32>,
}

impl CostVolume {
    pub fn invalid(width: usize, height: usize, hypotheses: usize) -> Self {
        Self {
            width,
            height,
            hypotheses,
            data: vec![INVALID_COST; width * height * hypotheses],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, d: usize) -> f32 {
        self.data[(row * self.width + col) * self.hypotheses + d]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.width + col) * self.hypotheses;
        &self.data[i..i + self.hypotheses]
    }
}

/// Weighted similarity `alpha * mi + (1 - alpha) * census`.
#[inline]
pub fn combined_cost(mi: f32, census: f32, alpha: f32) -> f32 {
    alpha * mi + (1.0 - alpha) * census
}

/// Inputs shared by every pixel of a cost computation.
pub struct CostInputs<'a> {
    pub reference: &'a Image,
    pub target: &'a Image,
    pub field: &'a SearchField,
    pub alpha: f32,
    pub census_window: usize,
    /// Required when `alpha > 0`.
    pub mi: Option<&'a MiTable>,
}

fn nearest(v: f32, len: usize) -> Option<usize> {
    let r = v.round();
    if r >= 0.0 && (r as usize) < len {
        Some(r as usize)
    } else {
        None
    }
}

/// Raw matching costs for every reference pixel and hypothesis.
///
/// Intensities are sampled bilinearly, census descriptors at the nearest
/// target pixel. Hypotheses whose sample leaves the target or lands on a
/// census border pixel are marked invalid.
pub fn compute_costs(inputs: &CostInputs) -> Result<CostVolume> {
    let CostInputs {
        reference,
        target,
        field,
        alpha,
        census_window,
        mi,
    } = *inputs;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1]"));
    }
    if field.width != reference.width || field.height != reference.height {
        return Err(Error::invalid("search field does not match the reference image"));
    }
    if field.target_width != target.width || field.target_height != target.height {
        return Err(Error::invalid("search field does not match the target image"));
    }
    let use_census = alpha < 1.0;
    let use_mi = alpha > 0.0;
    let mi = match (use_mi, mi) {
        (true, None) => return Err(Error::invalid("alpha > 0 requires an MI table")),
        (_, m) => m,
    };
    let census: Option<(CensusImage, CensusImage)> = if use_census {
        Some((
            census_transform(reference, census_window)?,
            census_transform(target, census_window)?,
        ))
    } else {
        None
    };
    let dn = field.hypotheses;
    let mut cv = CostVolume::invalid(field.width, field.height, dn);
    cv.data
        .par_chunks_mut(field.width * dn)
        .enumerate()
        .for_each(|(r, line)| {
            for c in 0..field.width {
                let ref_desc = match &census {
                    Some((rc, _)) if !rc.is_valid(r, c) => continue,
                    Some((rc, _)) => Some(rc.descriptor(r, c)),
                    None => None,
                };
                let ref_value = reference.get(r, c);
                let out = &mut line[c * dn..(c + 1) * dn];
                for (d, s) in field.samples(r, c).iter().enumerate() {
                    if s[0].is_nan() {
                        continue;
                    }
                    let census_c = match (&census, ref_desc) {
                        (Some((rc, tc)), Some(rd)) => {
                            let (Some(tr), Some(tcol)) = (nearest(s[0], tc.height), nearest(s[1], tc.width)) else {
                                continue;
                            };
                            if !tc.is_valid(tr, tcol) {
                                continue;
                            }
                            census_cost(rd, tc.descriptor(tr, tcol), rc.bit_count())
                        }
                        _ => 0.0,
                    };
                    let mi_c = match mi {
                        Some(t) if use_mi => {
                            let Some(v) = target.bilinear(s[0] as f64, s[1] as f64) else {
                                continue;
                            };
                            t.cost(ref_value, v)
                        }
                        _ => 0.0,
                    };
                    out[d] = combined_cost(mi_c, census_c, alpha);
                }
            }
        });
    Ok(cv)
}
