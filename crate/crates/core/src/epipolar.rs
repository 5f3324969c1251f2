//! Epipolar curves between a SAR and an optical image.
//!
//! Curves are built by sweeping the height of a source pixel through the
//! source model's inverse and projecting each ground point into the other
//! image. For a push-broom source and a linear-motion SAR target the curve
//! also has a closed form: along the optical ray the SAR azimuth line is an
//! affine function of height, so the slant range is the square root of a
//! quadratic in the azimuth line.

use nalgebra::{Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImagePoint, PushBroomModel, RangeDopplerModel, SensorModel};

/// Default height step of a sweep (meters).
pub const DEFAULT_STEP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceImage {
    Sar,
    Optical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub h: f64,
    pub row: f64,
    pub col: f64,
}

impl CurveSample {
    pub fn point(&self) -> ImagePoint {
        ImagePoint::new(self.row, self.col)
    }
}

/// Image points of all conjugates of `source_point`, ordered by height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpipolarCurve {
    pub samples: Vec<CurveSample>,
    pub source_point: ImagePoint,
    pub source_image: SourceImage,
}

impl EpipolarCurve {
    pub fn points(&self) -> Vec<ImagePoint> {
        self.samples.iter().map(CurveSample::point).collect()
    }

    /// Distance from `p` to the polyline through the samples.
    pub fn distance_to(&self, p: &ImagePoint) -> f64 {
        let pts = self.points();
        if pts.len() == 1 {
            return pts[0].distance(p);
        }
        pts.windows(2)
            .map(|w| segment_distance(&w[0], &w[1], p))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(a: &ImagePoint, b: &ImagePoint, p: &ImagePoint) -> f64 {
    let (dr, dc) = (b.row - a.row, b.col - a.col);
    let len2 = dr * dr + dc * dc;
    let t = if len2 > 0.0 {
        (((p.row - a.row) * dr + (p.col - a.col) * dc) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ImagePoint::new(a.row + t * dr, a.col + t * dc).distance(p)
}

/// Sweeps `p` through `src` over `[h_min, h_max]` and projects into `dst`.
///
/// Heights are `h_min + i * step` for `i = 0..=floor((h_max - h_min) / step)`.
pub fn sweep_curve<S: SensorModel, D: SensorModel>(
    src: &S,
    dst: &D,
    p: &ImagePoint,
    h_min: f64,
    h_max: f64,
    step: f64,
    source_image: SourceImage,
) -> Result<EpipolarCurve> {
    if !(h_max >= h_min) || !h_min.is_finite() || !h_max.is_finite() {
        return Err(Error::invalid("height range must satisfy h_min <= h_max"));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("height step must be positive"));
    }
    // Tolerate round-off in the sample count when the range is a multiple of the step.
    let count = ((h_max - h_min) / step + 1e-9).floor() as usize + 1;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let h = h_min + i as f64 * step;
        let q = dst.project(&src.backproject(p, h)?)?;
        samples.push(CurveSample {
            h,
            row: q.row,
            col: q.col,
        });
    }
    Ok(EpipolarCurve {
        samples,
        source_point: *p,
        source_image,
    })
}

/// SAR epipolar curve of one optical pixel in closed form:
/// `gamma * col = sqrt(f2 * row^2 + f1 * row + f0) - r0`.
///
/// Along the optical ray, ground height is `c0 + c1 * row` where `row` is
/// the SAR azimuth line of the ground point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormEpipolar {
    #[serde(rename = "F0")]
    pub f0: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "F2")]
    pub f2: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub gamma: f64,
    pub c0: f64,
    pub c1: f64,
}

impl ClosedFormEpipolar {
    /// SAR column on the curve at azimuth line `row`.
    pub fn col_at(&self, row: f64) -> Result<f64> {
        let radicand = self.f2 * row * row + self.f1 * row + self.f0;
        if !(radicand >= 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "negative radicand {radicand:e} at azimuth line {row}"
            )));
        }
        Ok((radicand.sqrt() - self.r0) / self.gamma)
    }

    /// Ground height of the ray point imaged at azimuth line `row`.
    pub fn height_at(&self, row: f64) -> f64 {
        self.c0 + self.c1 * row
    }

    /// Azimuth line at which the ray reaches height `h`.
    pub fn row_at_height(&self, h: f64) -> f64 {
        (h - self.c0) / self.c1
    }

    /// Azimuth line of the range minimum.
    pub fn vertex_row(&self) -> f64 {
        -self.f1 / (2.0 * self.f2)
    }

    /// SAR image point on the curve for the ray point at height `h`.
    pub fn point_at_height(&self, h: f64) -> Result<ImagePoint> {
        let row = self.row_at_height(h);
        Ok(ImagePoint::new(row, self.col_at(row)?))
    }
}

/// Closed-form SAR epipolar curve of the optical array coordinate `y_l`
/// (meters on the array) imaged at time `tau`.
pub fn closed_form(opt: &PushBroomModel, sar: &RangeDopplerModel, y_l: f64, tau: f64) -> Result<ClosedFormEpipolar> {
    let origin = opt.position(tau);
    let dir = opt.ray_direction(tau, y_l);
    if dir.z.abs() < 1e-12 * dir.norm() {
        return Err(Error::GrazingRay);
    }
    // Ray: X = X0 + p (Z - Z0), Y = Y0 + q (Z - Z0).
    let (p, q) = (dir.x / dir.z, dir.y / dir.z);
    let (x0, y0, z0) = (origin.x, origin.y, origin.z);
    let s = sar.initial_position;
    let v = sar.velocity;
    let k = sar.k();
    let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let denom = v[0] * p + v[1] * q + v[2];
    if denom.abs() < 1e-9 * v2.sqrt() {
        return Err(Error::InvalidGeometry(
            "optical ray lies in a zero-Doppler plane; height is not a function of azimuth".into(),
        ));
    }
    // Zero Doppler V . (G - S0 - V k row) = 0 with G on the ray gives Z = c0 + c1 row.
    let c0 = (v[0] * (s[0] - x0) + v[1] * (s[1] - y0) + v[2] * s[2] + (v[0] * p + v[1] * q) * z0) / denom;
    let c1 = v2 * k / denom;
    let (a0, a1) = (x0 + p * (c0 - z0), p * c1);
    let (b0, b1) = (y0 + q * (c0 - z0), q * c1);
    // Range vector G - S(t), affine in row.
    let (ax0, ax1) = (a0 - s[0], a1 - v[0] * k);
    let (by0, by1) = (b0 - s[1], b1 - v[1] * k);
    let (cz0, cz1) = (c0 - s[2], c1 - v[2] * k);
    Ok(ClosedFormEpipolar {
        f0: ax0 * ax0 + by0 * by0 + cz0 * cz0,
        f1: 2.0 * (ax0 * ax1 + by0 * by1 + cz0 * cz1),
        f2: ax1 * ax1 + by1 * by1 + cz1 * cz1,
        r0: sar.r0,
        gamma: sar.gamma,
        c0,
        c1,
    })
}

/// Closed form for an optical pixel: `tau` from its line, `y_l` from its column.
pub fn closed_form_for_optical_pixel(
    opt: &PushBroomModel,
    sar: &RangeDopplerModel,
    p: &ImagePoint,
) -> Result<ClosedFormEpipolar> {
    closed_form(
        opt,
        sar,
        (p.col - opt.principal_col) * opt.pixel_pitch,
        opt.line_to_time(p.row),
    )
}

/// Closed form through a SAR pixel: the pixel is back-projected at
/// `h_nominal` and the optical imaging time of that ground point fixes
/// `tau`. The resulting curve passes through `p` at `h_nominal`.
pub fn closed_form_for_sar_pixel(
    opt: &PushBroomModel,
    sar: &RangeDopplerModel,
    p: &ImagePoint,
    h_nominal: f64,
) -> Result<ClosedFormEpipolar> {
    let g = sar.backproject(p, h_nominal)?;
    closed_form_for_optical_pixel(opt, sar, &opt.project(&g)?)
}

/// Largest distance between a sweep curve in the SAR image and the closed
/// form evaluated at the same azimuth lines (pixels, along columns).
pub fn closed_form_deviation(cf: &ClosedFormEpipolar, curve: &EpipolarCurve) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in &curve.samples {
        worst = worst.max((cf.col_at(s.row)? - s.col).abs());
    }
    Ok(worst)
}

/// Line and parabola fits of a curve.
///
/// Residuals are taken perpendicular to the principal direction of the
/// samples; for the parabola this is the offset from the fitted curve in
/// that direction, which equals the perpendicular distance to first order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraightnessReport {
    pub heights: Vec<f64>,
    pub linear_residuals: Vec<f64>,
    pub quadratic_residuals: Vec<f64>,
    pub linear_max_abs: f64,
    pub quadratic_max_abs: f64,
}

/// Least-squares polynomial fit `e ~ sum c_j s^j` of the given degree.
fn polyfit_residuals(s: &[f64], e: &[f64], degree: usize) -> Result<Vec<f64>> {
    let n = degree + 1;
    let a = nalgebra::DMatrix::from_fn(s.len(), n, |i, j| s[i].powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(e);
    let coeffs = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|m| Error::InvalidGeometry(m.to_string()))?;
    Ok((b - a * coeffs).iter().copied().collect())
}

pub fn straightness(curve: &EpipolarCurve) -> Result<StraightnessReport> {
    let n = curve.samples.len();
    if n < 3 {
        return Err(Error::invalid("straightness needs at least 3 samples"));
    }
    let mean_r = curve.samples.iter().map(|s| s.row).sum::<f64>() / n as f64;
    let mean_c = curve.samples.iter().map(|s| s.col).sum::<f64>() / n as f64;
    let mut cov = Matrix2::zeros();
    for s in &curve.samples {
        let d = nalgebra::Vector2::new(s.col - mean_c, s.row - mean_r);
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    if !(eig.eigenvalues[major] > 1e-18) {
        return Err(Error::invalid("curve samples are all identical"));
    }
    let along = eig.eigenvectors.column(major).into_owned();
    let across = eig.eigenvectors.column(minor).into_owned();
    // Scale the along-curve coordinate to [-1, 1] for a well-conditioned fit.
    let mut s_coord = Vec::with_capacity(n);
    let mut e_coord = Vec::with_capacity(n);
    for smp in &curve.samples {
        let d = nalgebra::Vector2::new(smp.col - mean_c, smp.row - mean_r);
        s_coord.push(d.dot(&along));
        e_coord.push(d.dot(&across));
    }
    let half = s_coord.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let s_unit: Vec<f64> = s_coord.iter().map(|v| v / half).collect();
    let linear = polyfit_residuals(&s_unit, &e_coord, 1)?;
    let quadratic = polyfit_residuals(&s_unit, &e_coord, 2)?;
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(StraightnessReport {
        heights: curve.samples.iter().map(|s| s.h).collect(),
        linear_max_abs: max_abs(&linear),
        quadratic_max_abs: max_abs(&quadratic),
        linear_residuals: linear,
        quadratic_residuals: quadratic,
    })
}

/// Agreement of the two back-curves of a pair of points on one curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    /// Largest separation of the back-curves on the common column grid (pixels).
    pub max_col_diff: f64,
    /// Largest difference of their slopes `d row / d col`.
    pub max_gradient_diff: f64,
}

/// Number of nodes of the common resampling grid.
const CONJUGACY_GRID: usize = 101;

fn resample_rows(pts: &[ImagePoint], cols: &[f64]) -> Vec<f64> {
    let mut sorted = pts.to_vec();
    sorted.sort_by(|a, b| a.col.total_cmp(&b.col));
    cols.iter()
        .map(|&c| {
            let i = sorted.partition_point(|p| p.col < c).clamp(1, sorted.len() - 1);
            let (a, b) = (&sorted[i - 1], &sorted[i]);
            if b.col == a.col {
                a.row
            } else {
                a.row + (b.row - a.row) * (c - a.col) / (b.col - a.col)
            }
        })
        .collect()
}

/// Builds the back-curves of `q1` and `q2` (points in the curve's target
/// image) in the source image over `[h_min, h_max]` and compares them on a
/// common column grid.
#[allow(clippy::too_many_arguments)]
pub fn conjugacy<S: SensorModel, D: SensorModel>(
    src: &S,
    dst: &D,
    curve: &EpipolarCurve,
    q1: &ImagePoint,
    q2: &ImagePoint,
    h_min: f64,
    h_max: f64,
    step: f64,
) -> Result<ConjugacyReport> {
    let back_kind = match curve.source_image {
        SourceImage::Sar => SourceImage::Optical,
        SourceImage::Optical => SourceImage::Sar,
    };
    let b1 = sweep_curve(dst, src, q1, h_min, h_max, step, back_kind)?.points();
    let b2 = sweep_curve(dst, src, q2, h_min, h_max, step, back_kind)?.points();
    if b1.len() < 2 {
        return Err(Error::invalid("back-curves need at least two samples"));
    }
    let span = |pts: &[ImagePoint]| {
        pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.col), hi.max(p.col))
        })
    };
    let (lo1, hi1) = span(&b1);
    let (lo2, hi2) = span(&b2);
    let (lo, hi) = (lo1.max(lo2), hi1.min(hi2));
    if !(hi > lo) {
        return Err(Error::invalid("back-curves have no common column range"));
    }
    let cols: Vec<f64> = (0..CONJUGACY_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / (CONJUGACY_GRID - 1) as f64)
        .collect();
    let r1 = resample_rows(&b1, &cols);
    let r2 = resample_rows(&b2, &cols);
    let max_col_diff = r1.iter().zip(&r2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let mut max_gradient_diff = 0.0f64;
    for i in 1..cols.len() {
        let dc = cols[i] - cols[i - 1];
        let g1 = (r1[i] - r1[i - 1]) / dc;
        let g2 = (r2[i] - r2[i - 1]) / dc;
        max_gradient_diff = max_gradient_diff.max((g1 - g2).abs());
    }
    Ok(ConjugacyReport {
        max_col_diff,
        max_gradient_diff,
    })
}
