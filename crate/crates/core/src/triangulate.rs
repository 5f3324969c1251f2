//! Least-squares forward intersection through two sensor models.

use nalgebra::{Matrix3, SMatrix, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GroundPoint, ImagePoint, SensorModel};
use crate::sgm::{DisparityMap, SearchField};

/// Finite-difference step of the Jacobian (meters).
pub const JACOBIAN_STEP: f64 = 0.1;
/// Convergence threshold on the update length (meters).
pub const STEP_TOLERANCE: f64 = 1e-4;
pub const MAX_ITERATIONS: usize = 30;
/// Normal matrices worse conditioned than this signal near-parallel rays.
pub const MAX_CONDITION: f64 = 1e10;

/// One reconstructed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub position: GroundPoint,
    /// RMS reprojection residual (pixels).
    pub residual: f64,
    /// Pixel in the reference image the point was reconstructed from.
    pub source_pixel: ImagePoint,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn from_positions(positions: impl IntoIterator<Item = GroundPoint>) -> Self {
        Self {
            points: positions
                .into_iter()
                .map(|position| CloudPoint {
                    position,
                    residual: 0.0,
                    source_pixel: ImagePoint::new(0.0, 0.0),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<GroundPoint> {
        self.points.iter().map(|p| p.position).collect()
    }
}

fn residuals<A: SensorModel, B: SensorModel>(
    first: &A,
    second: &B,
    p_first: &ImagePoint,
    p_second: &ImagePoint,
    g: &Vector3<f64>,
) -> Result<Vector4<f64>> {
    let gp = GroundPoint::from_vector(g);
    let a = first.project(&gp)?;
    let b = second.project(&gp)?;
    Ok(Vector4::new(
        a.row - p_first.row,
        a.col - p_first.col,
        b.row - p_second.row,
        b.col - p_second.col,
    ))
}

fn condition_number(n: &Matrix3<f64>) -> f64 {
    let eig = n.symmetric_eigen().eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Ground point whose projections best match `p_first` and `p_second`.
///
/// Gauss-Newton on the four pixel residuals, initialized by back-projecting
/// `p_first` through `first` at `h_init`. Returns the point and the RMS of
/// the four residual components.
pub fn intersect<A: SensorModel, B: SensorModel>(
    first: &A,
    second: &B,
    p_first: &ImagePoint,
    p_second: &ImagePoint,
    h_init: f64,
) -> Result<(GroundPoint, f64)> {
    let mut g = first.backproject(p_first, h_init)?.to_vector();
    for _ in 0..MAX_ITERATIONS {
        let r = residuals(first, second, p_first, p_second, &g)?;
        let mut jac = SMatrix::<f64, 4, 3>::zeros();
        for axis in 0..3 {
            let mut plus = g;
            let mut minus = g;
            plus[axis] += JACOBIAN_STEP;
            minus[axis] -= JACOBIAN_STEP;
            let d = (residuals(first, second, p_first, p_second, &plus)?
                - residuals(first, second, p_first, p_second, &minus)?)
                / (2.0 * JACOBIAN_STEP);
            jac.set_column(axis, &d);
        }
        let normal = jac.transpose() * jac;
        let condition = condition_number(&normal);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::WeakGeometry { condition });
        }
        let rhs = jac.transpose() * r;
        let step = normal.cholesky().ok_or(Error::WeakGeometry { condition })?.solve(&rhs);
        g -= step;
        if step.norm() < STEP_TOLERANCE {
            let r = residuals(first, second, p_first, p_second, &g)?;
            let rms = (r.norm_squared() / 4.0).sqrt();
            return Ok((GroundPoint::from_vector(&g), rms));
        }
    }
    Err(Error::IntersectDiverged {
        iterations: MAX_ITERATIONS,
    })
}

/// Intersects many pixel pairs in parallel; failed pairs are dropped.
///
/// Returns the cloud (in input order) and the number of dropped pairs.
pub fn intersect_all<A: SensorModel, B: SensorModel>(
    first: &A,
    second: &B,
    pairs: &[(ImagePoint, ImagePoint)],
    h_init: f64,
) -> (PointCloud, usize) {
    let results: Vec<Option<CloudPoint>> = pairs
        .par_iter()
        .map(|(a, b)| {
            intersect(first, second, a, b, h_init)
                .ok()
                .map(|(position, residual)| CloudPoint {
                    position,
                    residual,
                    source_pixel: *a,
                })
        })
        .collect();
    let dropped = results.iter().filter(|r| r.is_none()).count();
    (
        PointCloud {
            points: results.into_iter().flatten().collect(),
        },
        dropped,
    )
}

/// Intersects every valid disparity pixel with its interpolated target
/// position. Pixels whose intersection fails are dropped and counted.
pub fn disparity_to_cloud<A: SensorModel, B: SensorModel>(
    disp: &DisparityMap,
    field: &SearchField,
    reference: &A,
    target: &B,
) -> Result<(PointCloud, usize)> {
    if disp.width != field.width || disp.height != field.height {
        return Err(Error::invalid("disparity map and search field differ in size"));
    }
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for r in 0..disp.height {
        for c in 0..disp.width {
            let Some(d) = disp.get(r, c) else { continue };
            match field.interpolate(r, c, d) {
                Some(q) => pairs.push((ImagePoint::new(r as f64, c as f64), q)),
                None => dropped += 1,
            }
        }
    }
    let (cloud, failed) = intersect_all(reference, target, &pairs, disp.h_mean);
    Ok((cloud, dropped + failed))
}
