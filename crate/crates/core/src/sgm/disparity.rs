use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

use super::cost::CostVolume;
use super::field::SearchField;

/// Per-pixel fractional hypothesis index; NaN marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub h_mean: f64,
    pub step: f64,
    pub hypotheses: usize,
}

/// JSON sidecar stored next to a disparity PFM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityMeta {
    pub width: usize,
    pub height: usize,
    pub h_mean: f64,
    pub step: f64,
    pub hypotheses: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl DisparityMap {
    pub fn invalid(width: usize, height: usize, h_mean: f64, step: f64, hypotheses: usize) -> Self {
        Self {
            width,
            height,
            data: vec![f32::NAN; width * height],
            h_mean,
            step,
            hypotheses,
        }
    }

    pub fn like_field(field: &SearchField) -> Self {
        Self::invalid(field.width, field.height, field.h_mean(), field.step, field.hypotheses)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.data[row * self.width + col];
        if v.is_nan() {
            None
        } else {
            Some(v as f64)
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, d: Option<f64>) {
        self.data[row * self.width + col] = d.map_or(f32::NAN, |v| v as f32);
    }

    pub fn h_min(&self) -> f64 {
        self.h_mean - (self.hypotheses - 1) as f64 * self.step / 2.0
    }

    pub fn height_of(&self, d: f64) -> f64 {
        self.h_min() + d * self.step
    }

    pub fn height_at(&self, row: usize, col: usize) -> Option<f64> {
        self.get(row, col).map(|d| self.height_of(d))
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.data.len() as f64
    }

    pub fn meta(&self, config_hash: Option<String>) -> DisparityMeta {
        DisparityMeta {
            width: self.width,
            height: self.height,
            h_mean: self.h_mean,
            step: self.step,
            hypotheses: self.hypotheses,
            config_hash,
        }
    }

    /// Writes `path` as PFM and `path` with a `.json` extension as sidecar.
    pub fn write(&self, path: impl AsRef<Path>, config_hash: Option<String>) -> Result<()> {
        let path = path.as_ref();
        io::write_pfm(path, self.width, self.height, &self.data)?;
        io::write_json(sidecar_path(path), &self.meta(config_hash))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (width, height, data) = io::read_pfm(path)?;
        let meta: DisparityMeta = io::read_json(sidecar_path(path))?;
        if meta.width != width || meta.height != height {
            return Err(Error::format("disparity", "sidecar dimensions disagree with PFM"));
        }
        let max = (meta.hypotheses.max(1) - 1) as f32;
        if data.iter().any(|v| !v.is_nan() && !(*v >= 0.0 && *v <= max)) {
            return Err(Error::format("disparity", "disparity outside hypothesis range"));
        }
        Ok(Self {
            width,
            height,
            data,
            h_mean: meta.h_mean,
            step: meta.step,
            hypotheses: meta.hypotheses,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Vertex offset of the parabola through `(-1, c_minus)`, `(0, c0)`, `(1, c_plus)`.
///
/// Zero when the three costs do not form a strict minimum.
#[inline]
pub fn subpixel_offset(c_minus: f64, c0: f64, c_plus: f64) -> f64 {
    let denom = 2.0 * (c_minus + c_plus - 2.0 * c0);
    if denom > 0.0 {
        ((c_minus - c_plus) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Winner-take-all with parabolic refinement at interior minima.
pub fn wta_subpixel(agg: &CostVolume, h_mean: f64, step: f64) -> DisparityMap {
    let dn = agg.hypotheses;
    let mut out = DisparityMap::invalid(agg.width, agg.height, h_mean, step, dn);
    for (i, costs) in agg.data.chunks(dn).enumerate() {
        let mut best = None;
        let mut best_cost = f32::INFINITY;
        for (d, &c) in costs.iter().enumerate() {
            if c < best_cost {
                best_cost = c;
                best = Some(d);
            }
        }
        let Some(d) = best else { continue };
        let mut v = d as f64;
        if d > 0 && d + 1 < dn && costs[d - 1].is_finite() && costs[d + 1].is_finite() {
            v += subpixel_offset(costs[d - 1] as f64, costs[d] as f64, costs[d + 1] as f64);
        }
        out.data[i] = v as f32;
    }
    out
}

/// Keeps a left pixel when the right map, read at its matched position,
/// agrees on the height to within `thresh` hypothesis steps.
pub fn lr_check(left: &DisparityMap, right: &DisparityMap, left_field: &SearchField, thresh: f64) -> DisparityMap {
    let mut out = left.clone();
    for r in 0..left.height {
        for c in 0..left.width {
            let Some(d) = left.get(r, c) else { continue };
            let keep = left_field.interpolate(r, c, d).and_then(|q| {
                let rr = q.row.round();
                let rc = q.col.round();
                if rr < 0.0 || rc < 0.0 || rr >= right.height as f64 || rc >= right.width as f64 {
                    return None;
                }
                right.height_at(rr as usize, rc as usize)
            });
            let ok = keep.is_some_and(|h| (h - left.height_of(d)).abs() <= thresh * left.step);
            if !ok {
                out.set(r, c, None);
            }
        }
    }
    out
}

/// Invalidates 4-connected regions of similar disparity smaller than `min_size`.
pub fn remove_small_regions(map: &mut DisparityMap, min_size: usize, max_diff: f64) {
    let (w, h) = (map.width, map.height);
    let mut label = vec![usize::MAX; w * h];
    let mut stack = Vec::new();
    let mut members = Vec::new();
    for start in 0..w * h {
        if label[start] != usize::MAX || map.data[start].is_nan() {
            continue;
        }
        label[start] = start;
        stack.push(start);
        members.clear();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (r, c) = (i / w, i % w);
            let v = map.data[i];
            let mut visit = |j: usize| {
                if label[j] == usize::MAX && !map.data[j].is_nan() && ((map.data[j] - v).abs() as f64) <= max_diff {
                    label[j] = start;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        if members.len() < min_size {
            for &i in &members {
                map.data[i] = f32::NAN;
            }
        }
    }
}
