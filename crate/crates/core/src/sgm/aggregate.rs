use rayon::prelude::*;

use crate::error::{Error, Result};

use super::cost::CostVolume;

/// Path directions as `(d_row, d_col)`: 8 principal then 8 knight moves.
pub const DIRECTIONS: [(isize, isize); 16] = [
    (0, 1),
    (0, -1),
    (1, 0),
    (-1, 0),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (1, 2),
    (2, 1),
    (2, -1),
    (1, -2),
    (-1, -2),
    (-2, -1),
    (-2, 1),
    (-1, 2),
];

/// One step of the path recursion; `prev` is `None` where the path starts.
#[inline]
fn path_step(prev: Option<&[f32]>, cost: &[f32], out: &mut [f32], p1: f32, p2: f32) {
    let min_prev = prev.map_or(f32::INFINITY, |p| p.iter().copied().fold(f32::INFINITY, f32::min));
    let Some(prev) = prev.filter(|_| min_prev.is_finite()) else {
        out.copy_from_slice(cost);
        return;
    };
    let n = cost.len();
    let jump = min_prev + p2;
    for d in 0..n {
        let mut best = prev[d];
        if d > 0 {
            best = best.min(prev[d - 1] + p1);
        }
        if d + 1 < n {
            best = best.min(prev[d + 1] + p1);
        }
        best = best.min(jump);
        out[d] = cost[d] + (best - min_prev);
    }
}

fn add_into(sum: &mut [f32], l: &[f32]) {
    for (s, v) in sum.iter_mut().zip(l) {
        *s += *v;
    }
}

fn aggregate_direction(cv: &CostVolume, sum: &mut [f32], (dr, dc): (isize, isize), p1: f32, p2: f32) {
    let (w, h, n) = (cv.width, cv.height, cv.hypotheses);
    let line = w * n;
    let col_of = |c: usize| -> Option<usize> {
        let pc = c as isize - dc;
        (pc >= 0 && (pc as usize) < w).then_some(pc as usize)
    };
    if dr == 0 {
        // Each image row is an independent set of paths.
        sum.par_chunks_mut(line).enumerate().for_each(|(r, srow)| {
            let crow = &cv.data[r * line..(r + 1) * line];
            let mut prev = vec![0.0f32; n];
            let mut cur = vec![0.0f32; n];
            let cols: Box<dyn Iterator<Item = usize>> = if dc > 0 { Box::new(0..w) } else { Box::new((0..w).rev()) };
            let mut started = false;
            for c in cols {
                let has_prev = started && col_of(c).is_some();
                path_step(
                    has_prev.then_some(&prev[..]),
                    &crow[c * n..(c + 1) * n],
                    &mut cur,
                    p1,
                    p2,
                );
                add_into(&mut srow[c * n..(c + 1) * n], &cur);
                std::mem::swap(&mut prev, &mut cur);
                started = true;
            }
        });
        return;
    }
    let lag = dr.unsigned_abs();
    let rows: Vec<usize> = if dr > 0 {
        (0..h).collect()
    } else {
        (0..h).rev().collect()
    };
    // Rows computed `lag` steps ago are exactly the predecessor rows.
    let mut ring: Vec<Vec<f32>> = vec![vec![0.0; line]; lag];
    let mut cur = vec![0.0f32; line];
    for (k, &r) in rows.iter().enumerate() {
        let prev_row = (k >= lag).then(|| &ring[k % lag]);
        let crow = &cv.data[r * line..(r + 1) * line];
        let srow = &mut sum[r * line..(r + 1) * line];
        cur.par_chunks_mut(n)
            .zip(srow.par_chunks_mut(n))
            .enumerate()
            .for_each(|(c, (out, s))| {
                let prev = prev_row.and_then(|pr| col_of(c).map(|pc| &pr[pc * n..(pc + 1) * n]));
                path_step(prev, &crow[c * n..(c + 1) * n], out, p1, p2);
                add_into(s, out);
            });
        std::mem::swap(&mut ring[k % lag], &mut cur);
    }
}

/// Sum of the first `paths` directional SGM path costs.
///
/// Each direction's contribution is added in the fixed order of
/// [`DIRECTIONS`], so the result does not depend on the thread count.
pub fn aggregate(cv: &CostVolume, p1: f32, p2: f32, paths: usize) -> Result<CostVolume> {
    if !(p1 > 0.0 && p2 > p1) {
        return Err(Error::invalid("penalties must satisfy p2 > p1 > 0"));
    }
    if paths == 0 || paths > DIRECTIONS.len() {
        return Err(Error::invalid(format!(
            "paths must be between 1 and {}",
            DIRECTIONS.len()
        )));
    }
    let mut sum = vec![0.0f32; cv.data.len()];
    for &dir in &DIRECTIONS[..paths] {
        aggregate_direction(cv, &mut sum, dir, p1, p2);
    }
    Ok(CostVolume {
        width: cv.width,
        height: cv.height,
        hypotheses: cv.hypotheses,
        data: sum,
    })
}
