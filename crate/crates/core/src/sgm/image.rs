use crate::error::{Error, Result};

/// Single-band float image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite pixels"));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    #[inline]
    pub fn contains(&self, row: f64, col: f64) -> bool {
        row >= 0.0 && col >= 0.0 && row <= (self.height - 1) as f64 && col <= (self.width - 1) as f64
    }

    /// Bilinear sample; `None` outside the pixel-center hull.
    pub fn bilinear(&self, row: f64, col: f64) -> Option<f32> {
        if !self.contains(row, col) {
            return None;
        }
        let r0 = (row.floor() as usize).min(self.height.saturating_sub(2));
        let c0 = (col.floor() as usize).min(self.width.saturating_sub(2));
        let r1 = (r0 + 1).min(self.height - 1);
        let c1 = (c0 + 1).min(self.width - 1);
        let fr = (row - r0 as f64) as f32;
        let fc = (col - c0 as f64) as f32;
        let top = self.get(r0, c0) * (1.0 - fc) + self.get(r0, c1) * fc;
        let bottom = self.get(r1, c0) * (1.0 - fc) + self.get(r1, c1) * fc;
        Some(top * (1.0 - fr) + bottom * fr)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// 2x2 box-filter reduction (odd trailing row/column folded in).
    pub fn downsample(&self) -> Image {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        Image::from_fn(w, h, |r, c| {
            let mut sum = 0.0;
            let mut n = 0.0;
            for dr in 0..2 {
                for dc in 0..2 {
                    let rr = 2 * r + dr;
                    let cc = 2 * c + dc;
                    if rr < self.height && cc < self.width {
                        sum += self.get(rr, cc);
                        n += 1.0;
                    }
                }
            }
            sum / n
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
