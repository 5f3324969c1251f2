use crate::error::{Error, Result};

use super::Image;

/// Census descriptors packed into 64-bit words, one descriptor per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusImage {
    pub width: usize,
    pub height: usize,
    pub window: usize,
    words: usize,
    bits: Vec<u64>,
    valid: Vec<bool>,
}

impl CensusImage {
    /// Number of comparisons per descriptor (the center is skipped).
    pub fn bit_count(&self) -> usize {
        self.window * self.window - 1
    }

    #[inline]
    pub fn descriptor(&self, row: usize, col: usize) -> &[u64] {
        let i = (row * self.width + col) * self.words;
        &self.bits[i..i + self.words]
    }

    /// False for pixels whose window leaves the image.
    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.width + col]
    }
}

/// Rank transform over a `window` x `window` neighborhood.
///
/// Bit `k` of a descriptor is set when the pixel is darker than the `k`-th
/// neighbor, neighbors taken in row-major order without the center.
pub fn census_transform(img: &Image, window: usize) -> Result<CensusImage> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::invalid("census window must be odd and at least 3"));
    }
    if window > img.width || window > img.height {
        return Err(Error::invalid(format!(
            "census window {window} exceeds image {}x{}",
            img.width, img.height
        )));
    }
    let half = window / 2;
    let nbits = window * window - 1;
    let words = nbits.div_ceil(64);
    let (w, h) = (img.width, img.height);
    let mut bits = vec![0u64; w * h * words];
    let mut valid = vec![false; w * h];
    for r in half..h - half {
        for c in half..w - half {
            let center = img.get(r, c);
            let out = &mut bits[(r * w + c) * words..(r * w + c + 1) * words];
            let mut k = 0;
            for wr in r - half..=r + half {
                for wc in c - half..=c + half {
                    if wr == r && wc == c {
                        continue;
                    }
                    if center < img.get(wr, wc) {
                        out[k / 64] |= 1 << (k % 64);
                    }
                    k += 1;
                }
            }
            valid[r * w + c] = true;
        }
    }
    Ok(CensusImage {
        width: w,
        height: h,
        window,
        words,
        bits,
        valid,
    })
}

/// Hamming distance divided by the bit count, in `[0, 1]`.
#[inline]
pub fn census_cost(a: &[u64], b: &[u64], bit_count: usize) -> f32 {
    let d: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
    d as f32 / bit_count as f32
}
