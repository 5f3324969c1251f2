use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ImagePoint, SensorModel};

/// Target-image sample positions for every reference pixel and height
/// hypothesis `h_d = h_min + d * step`.
///
/// Samples falling outside the target image are stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchField {
    pub width: usize,
    pub height: usize,
    pub hypotheses: usize,
    pub h_min: f64,
    pub step: f64,
    pub target_width: usize,
    pub target_height: usize,
    coords: Vec<[f32; 2]>,
}

impl SearchField {
    /// Builds a field from `f(row, col, d)`; `None` marks an unusable sample.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fn<F>(
        width: usize,
        height: usize,
        hypotheses: usize,
        h_min: f64,
        step: f64,
        target_dims: (usize, usize),
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, usize, usize) -> Result<Option<ImagePoint>> + Sync,
    {
        if width == 0 || height == 0 {
            return Err(Error::invalid("search field needs a non-empty reference image"));
        }
        if hypotheses < 2 {
            return Err(Error::invalid("at least two height hypotheses are required"));
        }
        if !(step > 0.0) || !h_min.is_finite() {
            return Err(Error::invalid("height step must be positive and h_min finite"));
        }
        let (tw, th) = target_dims;
        if tw == 0 || th == 0 {
            return Err(Error::invalid("search field needs a non-empty target image"));
        }
        let mut coords = vec![[f32::NAN; 2]; width * height * hypotheses];
        coords
            .par_chunks_mut(width * hypotheses)
            .enumerate()
            .try_for_each(|(row, line)| -> Result<()> {
                for col in 0..width {
                    for d in 0..hypotheses {
                        if let Some(p) = f(row, col, d)? {
                            let inside =
                                p.row >= 0.0 && p.col >= 0.0 && p.row <= (th - 1) as f64 && p.col <= (tw - 1) as f64;
                            if inside {
                                line[col * hypotheses + d] = [p.row as f32, p.col as f32];
                            }
                        }
                    }
                }
                Ok(())
            })?;
        Ok(Self {
            width,
            height,
            hypotheses,
            h_min,
            step,
            target_width: tw,
            target_height: th,
            coords,
        })
    }

    pub fn height_of(&self, d: f64) -> f64 {
        self.h_min + d * self.step
    }

    pub fn h_mean(&self) -> f64 {
        self.height_of((self.hypotheses - 1) as f64 / 2.0)
    }

    /// All hypothesis samples of one reference pixel as `[row, col]`.
    #[inline]
    pub fn samples(&self, row: usize, col: usize) -> &[[f32; 2]] {
        let start = (row * self.width + col) * self.hypotheses;
        &self.coords[start..start + self.hypotheses]
    }

    pub fn sample(&self, row: usize, col: usize, d: usize) -> Option<ImagePoint> {
        let [r, c] = self.samples(row, col)[d];
        if r.is_nan() {
            None
        } else {
            Some(ImagePoint::new(r as f64, c as f64))
        }
    }

    /// Linear interpolation between the neighboring integer hypotheses.
    pub fn interpolate(&self, row: usize, col: usize, d: f64) -> Option<ImagePoint> {
        if !(d >= 0.0 && d <= (self.hypotheses - 1) as f64) {
            return None;
        }
        let d0 = d.floor() as usize;
        let t = d - d0 as f64;
        let a = self.sample(row, col, d0)?;
        if t == 0.0 {
            return Some(a);
        }
        let b = self.sample(row, col, d0 + 1)?;
        Some(ImagePoint::new(
            a.row + t * (b.row - a.row),
            a.col + t * (b.col - a.col),
        ))
    }
}

fn level_center(i: usize, scale: usize) -> f64 {
    (i * scale) as f64 + (scale as f64 - 1.0) / 2.0
}

/// Search field of a pyramid level whose pixels are `scale` full-resolution
/// pixels wide; `ref_dims` and `tgt_dims` are at that level.
#[allow(clippy::too_many_arguments)]
pub fn build_search_field_scaled<S: SensorModel, T: SensorModel>(
    reference: &S,
    target: &T,
    ref_dims: (usize, usize),
    tgt_dims: (usize, usize),
    h_mean: f64,
    half_range: f64,
    hypotheses: usize,
    scale: usize,
) -> Result<SearchField> {
    if !(half_range > 0.0) || !h_mean.is_finite() {
        return Err(Error::invalid("half_range must be positive and h_mean finite"));
    }
    if hypotheses < 2 {
        return Err(Error::invalid("at least two height hypotheses are required"));
    }
    if scale == 0 {
        return Err(Error::invalid("pyramid scale must be at least 1"));
    }
    let h_min = h_mean - half_range;
    let step = 2.0 * half_range / (hypotheses - 1) as f64;
    let offset = (scale as f64 - 1.0) / 2.0;
    SearchField::from_fn(
        ref_dims.0,
        ref_dims.1,
        hypotheses,
        h_min,
        step,
        tgt_dims,
        |row, col, d| {
            let p = ImagePoint::new(level_center(row, scale), level_center(col, scale));
            let g = reference.backproject(&p, h_min + d as f64 * step)?;
            let q = target.project(&g)?;
            Ok(Some(ImagePoint::new(
                (q.row - offset) / scale as f64,
                (q.col - offset) / scale as f64,
            )))
        },
    )
}

/// Full-resolution search field over `[h_mean - half_range, h_mean + half_range]`.
pub fn build_search_field<S: SensorModel, T: SensorModel>(
    reference: &S,
    target: &T,
    ref_dims: (usize, usize),
    tgt_dims: (usize, usize),
    h_mean: f64,
    half_range: f64,
    hypotheses: usize,
) -> Result<SearchField> {
    build_search_field_scaled(reference, target, ref_dims, tgt_dims, h_mean, half_range, hypotheses, 1)
}

/// Smallest hypothesis count whose sample spacing stays below `max_spacing`
/// target pixels, probed on a 5x5 grid of reference pixels.
pub fn auto_hypotheses<S: SensorModel, T: SensorModel>(
    reference: &S,
    target: &T,
    ref_dims: (usize, usize),
    h_mean: f64,
    half_range: f64,
    max_spacing: f64,
) -> Result<usize> {
    if !(max_spacing > 0.0) {
        return Err(Error::invalid("max_spacing must be positive"));
    }
    let mut span: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let p = ImagePoint::new(
                (ref_dims.1 - 1) as f64 * i as f64 / 4.0,
                (ref_dims.0 - 1) as f64 * j as f64 / 4.0,
            );
            let lo = target.project(&reference.backproject(&p, h_mean - half_range)?)?;
            let hi = target.project(&reference.backproject(&p, h_mean + half_range)?)?;
            span = span.max(lo.distance(&hi));
        }
    }
    Ok(((span / max_spacing).ceil() as usize + 1).max(2))
}
