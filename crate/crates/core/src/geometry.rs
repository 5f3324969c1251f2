//! Coordinate frames and the two rigorous sensor models.
//!
//! Ground coordinates live in a local metric East-North-Up frame. Image
//! coordinates are `(row, col)` pixels where `row` runs along track (time)
//! and `col` across track (array position for the push-broom camera, slant
//! range for the SAR).
//!
//! Both models implement [`SensorModel`], the ground-to-image /
//! image-to-ground-at-height contract that the rational polynomial models
//! share. Everything downstream (RPC fitting, epipolar sweeps, matching and
//! triangulation) is written against that trait.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the local metric ground frame (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64, h: f64) -> Self {
        Self { x, y, h }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.h.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.h)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// A (possibly fractional, possibly out-of-bounds) pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ImagePoint {
    pub row: f64,
    pub col: f64,
}

impl ImagePoint {
    pub const fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }

    pub fn is_finite(&self) -> bool {
        self.row.is_finite() && self.col.is_finite()
    }

    pub fn distance(&self, other: &ImagePoint) -> f64 {
        (self.row - other.row).hypot(self.col - other.col)
    }
}

/// Offset/scale pair mapping one coordinate onto the normalized `[-1, 1]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub offset: f64,
    pub scale: f64,
}

impl NormalizationParams {
    pub fn new(offset: f64, scale: f64) -> Result<Self> {
        if !offset.is_finite() || !scale.is_finite() || scale <= 0.0 {
            return Err(Error::invalid(format!(
                "normalization needs finite offset and positive scale, got ({offset}, {scale})"
            )));
        }
        Ok(Self { offset, scale })
    }

    /// Parameters mapping `[lo, hi]` onto `[-1, 1]`.
    pub fn from_range(lo: f64, hi: f64) -> Result<Self> {
        let half = 0.5 * (hi - lo);
        Self::new(0.5 * (lo + hi), if half > 0.0 { half } else { 1.0 })
    }

    pub fn normalize(&self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("cannot normalize non-finite value {value}")));
        }
        Ok((value - self.offset) / self.scale)
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        value * self.scale + self.offset
    }
}

/// Ground-to-image and image-to-ground mapping of one image.
pub trait SensorModel: Send + Sync {
    /// Projects a ground point into the image.
    fn project(&self, g: &GroundPoint) -> Result<ImagePoint>;

    /// Intersects the line of sight of `p` with the plane at height `h`.
    fn backproject(&self, p: &ImagePoint, h: f64) -> Result<GroundPoint>;
}

impl<T: SensorModel + ?Sized> SensorModel for &T {
    fn project(&self, g: &GroundPoint) -> Result<ImagePoint> {
        (**self).project(g)
    }

    fn backproject(&self, p: &ImagePoint, h: f64) -> Result<GroundPoint> {
        (**self).backproject(p, h)
    }
}

impl<T: SensorModel + ?Sized> SensorModel for Box<T> {
    fn project(&self, g: &GroundPoint) -> Result<ImagePoint> {
        (**self).project(g)
    }

    fn backproject(&self, p: &ImagePoint, h: f64) -> Result<GroundPoint> {
        (**self).backproject(p, h)
    }
}

/// Polynomial in time, coefficients lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct TimePolynomial(pub Vec<f64>);

impl TimePolynomial {
    pub fn constant(c: f64) -> Self {
        Self(vec![c])
    }

    pub fn linear(c0: f64, c1: f64) -> Self {
        Self(vec![c0, c1])
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * t + i as f64 * c)
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }
}

/// Attitude angles (radians) as polynomials in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationPolys {
    pub omega: TimePolynomial,
    pub phi: TimePolynomial,
    pub kappa: TimePolynomial,
}

/// Sensor position (meters) as polynomials in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionPolys {
    pub x: TimePolynomial,
    pub y: TimePolynomial,
    pub z: TimePolynomial,
}

impl PositionPolys {
    pub fn eval(&self, t: f64) -> Vector3<f64> {
        Vector3::new(self.x.eval(t), self.y.eval(t), self.z.eval(t))
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        Vector3::new(self.x.derivative(t), self.y.derivative(t), self.z.derivative(t))
    }
}

/// Ground-to-camera rotation `R = Rx(omega) * Ry(phi) * Rz(kappa)`.
pub fn rotation_matrix(omega: f64, phi: f64, kappa: f64) -> Matrix3<f64> {
    let (so, co) = omega.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sk, ck) = kappa.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, co, -so, 0.0, so, co);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rz = Matrix3::new(ck, -sk, 0.0, sk, ck, 0.0, 0.0, 0.0, 1.0);
    rx * ry * rz
}

const PUSHBROOM_MAX_ITER: usize = 50;
const PUSHBROOM_TIME_TOL: f64 = 1e-10;

/// Linear-array push-broom camera described by the collinearity condition.
///
/// A ground point `G` is imaged at the time `t` at which the camera-frame
/// vector `R(t) (G - S(t))` has a zero along-track component; the array
/// coordinate is then `y_l = f * u_y / u_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushBroomModel {
    pub focal_length: f64,
    pub orientation_polys: OrientationPolys,
    pub position_polys: PositionPolys,
    /// Seconds per image line.
    pub line_time: f64,
    /// Acquisition time of line 0.
    pub first_line_time: f64,
    /// Detector spacing on the array (meters).
    pub pixel_pitch: f64,
    /// Column of the array point that lies on the optical axis.
    pub principal_col: f64,
    pub lines: usize,
    pub samples: usize,
}

impl PushBroomModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0) {
            return Err(Error::invalid("focal_length must be positive"));
        }
        if !(self.line_time > 0.0) {
            return Err(Error::invalid("line_time must be positive"));
        }
        if !(self.pixel_pitch > 0.0) {
            return Err(Error::invalid("pixel_pitch must be positive"));
        }
        let o = &self.orientation_polys;
        let p = &self.position_polys;
        for poly in [&o.omega, &o.phi, &o.kappa, &p.x, &p.y, &p.z] {
            if poly.0.is_empty() || poly.degree() > 2 {
                return Err(Error::invalid("time polynomials must have degree 0..=2"));
            }
        }
        Ok(())
    }

    pub fn line_to_time(&self, row: f64) -> f64 {
        self.first_line_time + row * self.line_time
    }

    pub fn time_to_line(&self, t: f64) -> f64 {
        (t - self.first_line_time) / self.line_time
    }

    /// Ground-to-camera rotation at time `t`.
    pub fn rotation(&self, t: f64) -> Matrix3<f64> {
        let o = &self.orientation_polys;
        rotation_matrix(o.omega.eval(t), o.phi.eval(t), o.kappa.eval(t))
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.position_polys.eval(t)
    }

    /// Ground-frame direction of the line of sight through array coordinate
    /// `y_l` at time `t` (the `M (0, y_l, f)` vector, `M = R^T`).
    pub fn ray_direction(&self, t: f64, y_l: f64) -> Vector3<f64> {
        self.rotation(t).transpose() * Vector3::new(0.0, y_l, self.focal_length)
    }

    fn along_track_residual(&self, g: &Vector3<f64>, t: f64) -> f64 {
        (self.rotation(t) * (g - self.position(t))).x
    }

    /// Imaging time of `g`: root of the along-track collinearity residual.
    pub fn imaging_time(&self, g: &GroundPoint) -> Result<f64> {
        let gv = g.to_vector();
        // Initial guess from the nadir track.
        let t_ref = self.line_to_time(0.5 * self.lines as f64);
        let s = self.position(t_ref);
        let v = self.position_polys.velocity(t_ref);
        let vh2 = v.x * v.x + v.y * v.y;
        let mut t = if vh2 > 0.0 {
            t_ref + ((gv.x - s.x) * v.x + (gv.y - s.y) * v.y) / vh2
        } else {
            t_ref
        };
        let dt = 1e-3 * self.line_time.max(1e-6);
        for _ in 0..PUSHBROOM_MAX_ITER {
            let f = self.along_track_residual(&gv, t);
            let df = (self.along_track_residual(&gv, t + dt) - self.along_track_residual(&gv, t - dt)) / (2.0 * dt);
            if df == 0.0 || !df.is_finite() {
                break;
            }
            let step = f / df;
            t -= step;
            if step.abs() < PUSHBROOM_TIME_TOL {
                return Ok(t);
            }
        }
        Err(Error::NoZeroCrossing {
            iterations: PUSHBROOM_MAX_ITER,
        })
    }
}

impl SensorModel for PushBroomModel {
    fn project(&self, g: &GroundPoint) -> Result<ImagePoint> {
        if !g.is_finite() {
            return Err(Error::invalid("non-finite ground point"));
        }
        let t = self.imaging_time(g)?;
        let u = self.rotation(t) * (g.to_vector() - self.position(t));
        if u.z == 0.0 {
            return Err(Error::GrazingRay);
        }
        let y_l = self.focal_length * u.y / u.z;
        Ok(ImagePoint::new(
            self.time_to_line(t),
            y_l / self.pixel_pitch + self.principal_col,
        ))
    }

    fn backproject(&self, p: &ImagePoint, h: f64) -> Result<GroundPoint> {
        if !p.is_finite() || !h.is_finite() {
            return Err(Error::invalid("non-finite image point or height"));
        }
        let t = self.line_to_time(p.row);
        let y_l = (p.col - self.principal_col) * self.pixel_pitch;
        let d = self.ray_direction(t, y_l);
        if d.z.abs() < 1e-12 * d.norm() {
            return Err(Error::GrazingRay);
        }
        let s = self.position(t);
        let dz = h - s.z;
        Ok(GroundPoint::new(s.x + dz * d.x / d.z, s.y + dz * d.y / d.z, h))
    }
}

/// Side of the flight track the SAR antenna looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LookSide {
    Left,
    Right,
}

/// Zero-Doppler SAR geometry with a linear (constant velocity) trajectory.
///
/// Azimuth time of line `row` is `row / prf`; the sensor is at
/// `initial_position + velocity * t`. Column `col` has slant range
/// `R0 + gamma * col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeDopplerModel {
    pub initial_position: [f64; 3],
    pub velocity: [f64; 3],
    #[serde(rename = "R0")]
    pub r0: f64,
    pub gamma: f64,
    pub prf: f64,
    pub look_side: LookSide,
    /// Valid azimuth-time interval `[start, end]` in seconds.
    pub window: [f64; 2],
    pub lines: usize,
    pub samples: usize,
}

impl RangeDopplerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.velocity_vector().norm() > 0.0) {
            return Err(Error::invalid("velocity must be non-zero"));
        }
        if !(self.gamma > 0.0) || !(self.r0 > 0.0) || !(self.prf > 0.0) {
            return Err(Error::invalid("R0, gamma and prf must be positive"));
        }
        if !(self.window[1] > self.window[0]) {
            return Err(Error::invalid("empty acquisition window"));
        }
        Ok(())
    }

    /// Seconds per azimuth line.
    pub fn k(&self) -> f64 {
        1.0 / self.prf
    }

    pub fn velocity_vector(&self) -> Vector3<f64> {
        Vector3::from(self.velocity)
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        Vector3::from(self.initial_position) + self.velocity_vector() * t
    }

    /// Time of closest approach to `g` (zero Doppler) under linear motion.
    pub fn zero_doppler_time(&self, g: &GroundPoint) -> f64 {
        let v = self.velocity_vector();
        v.dot(&(g.to_vector() - Vector3::from(self.initial_position))) / v.norm_squared()
    }

    /// Left-hand side of the zero-Doppler condition `V . (G - S(t))`.
    pub fn doppler_residual(&self, g: &GroundPoint, t: f64) -> f64 {
        self.velocity_vector().dot(&(g.to_vector() - self.position(t)))
    }

    pub fn slant_range(&self, col: f64) -> f64 {
        self.r0 + self.gamma * col
    }
}

impl SensorModel for RangeDopplerModel {
    fn project(&self, g: &GroundPoint) -> Result<ImagePoint> {
        if !g.is_finite() {
            return Err(Error::invalid("non-finite ground point"));
        }
        let t = self.zero_doppler_time(g);
        if t < self.window[0] || t > self.window[1] {
            return Err(Error::OutOfSwath { time: t });
        }
        let range = (g.to_vector() - self.position(t)).norm();
        Ok(ImagePoint::new(t * self.prf, (range - self.r0) / self.gamma))
    }

    fn backproject(&self, p: &ImagePoint, h: f64) -> Result<GroundPoint> {
        if !p.is_finite() || !h.is_finite() {
            return Err(Error::invalid("non-finite image point or height"));
        }
        let t = p.row / self.prf;
        let s = self.position(t);
        let v = self.velocity_vector();
        let range = self.slant_range(p.col);
        let vh2 = v.x * v.x + v.y * v.y;
        if vh2 == 0.0 {
            return Err(Error::invalid(
                "vertical trajectory has no horizontal zero-Doppler line",
            ));
        }
        // Work relative to the sensor: d = G - S with d.z fixed by the height.
        let dz = h - s.z;
        // Zero-Doppler plane restricted to the height plane is the line
        // v.x dx + v.y dy = -v.z dz; its foot closest to the sensor:
        let c = -v.z * dz / vh2;
        let foot = (c * v.x, c * v.y);
        let rem = range * range - dz * dz - (foot.0 * foot.0 + foot.1 * foot.1);
        if rem < 0.0 {
            return Err(Error::NoIntersection { height: h });
        }
        let vh = vh2.sqrt();
        // Unit vector to the left of the horizontal velocity.
        let left = (-v.y / vh, v.x / vh);
        let sign = match self.look_side {
            LookSide::Left => 1.0,
            LookSide::Right => -1.0,
        };
        let off = sign * rem.sqrt();
        Ok(GroundPoint::new(
            s.x + foot.0 + off * left.0,
            s.y + foot.1 + off * left.1,
            h,
        ))
    }
}

/// JSON document holding both rigorous models of a stereo pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPair {
    pub optical: PushBroomModel,
    pub sar: RangeDopplerModel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn nadir_pushbroom() -> PushBroomModel {
        // Flying north at 7 km/s, 700 km up, looking straight down.
        PushBroomModel {
            focal_length: 10.0,
            orientation_polys: OrientationPolys {
                omega: TimePolynomial::constant(std::f64::consts::PI),
                phi: TimePolynomial::constant(0.0),
                kappa: TimePolynomial::constant(-std::f64::consts::FRAC_PI_2),
            },
            position_polys: PositionPolys {
                x: TimePolynomial::constant(0.0),
                y: TimePolynomial::linear(-700.0, 7000.0),
                z: TimePolynomial::constant(700_000.0),
            },
            line_time: 1.0 / 7000.0,
            first_line_time: 0.0,
            pixel_pitch: 1e-5,
            principal_col: 500.0,
            lines: 1000,
            samples: 1000,
        }
    }

    pub(crate) fn side_looking_sar() -> RangeDopplerModel {
        RangeDopplerModel {
            initial_position: [-200_000.0, -500.0, 500_000.0],
            velocity: [0.0, 7500.0, 0.0],
            r0: 538_000.0,
            gamma: 0.4,
            prf: 7500.0,
            look_side: LookSide::Right,
            window: [-1.0, 1.0],
            lines: 1000,
            samples: 1000,
        }
    }

    #[test]
    fn normalize_examples() {
        let p = NormalizationParams::new(100.0, 50.0).unwrap();
        assert_eq!(p.normalize(100.0).unwrap(), 0.0);
        assert_eq!(p.normalize(150.0).unwrap(), 1.0);
        assert!(p.normalize(f64::NAN).is_err());
        assert!(NormalizationParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn rotation_is_orthonormal() {
        let m = nadir_pushbroom();
        for i in 0..20 {
            let r = m.rotation(i as f64 * 0.01);
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn nadir_point_hits_principal_column() {
        let m = nadir_pushbroom();
        let p = m.project(&GroundPoint::new(0.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(p.col, 500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.row, 700.0, epsilon = 1e-6);
        let g = m.backproject(&ImagePoint::new(250.0, 500.0), 0.0).unwrap();
        let s = m.position(m.line_to_time(250.0));
        assert_abs_diff_eq!(g.x, s.x, epsilon = 1e-6);
        assert_abs_diff_eq!(g.y, s.y, epsilon = 1e-6);
    }

    #[test]
    fn pushbroom_time_solve_fails_cleanly() {
        let mut m = nadir_pushbroom();
        // A stationary, non-rotating sensor has no zero crossing for off-track points.
        m.position_polys.y = TimePolynomial::constant(0.0);
        assert!(matches!(
            m.project(&GroundPoint::new(0.0, 10.0, 0.0)),
            Err(Error::NoZeroCrossing { .. })
        ));
    }

    #[test]
    fn first_range_bin_is_column_zero() {
        let m = side_looking_sar();
        let s = m.position(0.0);
        // Right of a north-bound track is east.
        let dz = 0.0 - s.z;
        let dx = (m.r0 * m.r0 - dz * dz).sqrt();
        let g = GroundPoint::new(s.x + dx, s.y, 0.0);
        let p = m.project(&g).unwrap();
        assert_abs_diff_eq!(p.col, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.row, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.doppler_residual(&g, 0.0), 0.0, epsilon = 1e-6);
        let back = m.backproject(&ImagePoint::new(0.0, 0.0), 0.0).unwrap();
        assert_abs_diff_eq!(back.x, g.x, epsilon = 1e-6);
        assert_abs_diff_eq!(back.y, g.y, epsilon = 1e-6);
    }

    #[test]
    fn sar_errors() {
        let m = side_looking_sar();
        assert!(matches!(
            m.project(&GroundPoint::new(0.0, 1e6, 0.0)),
            Err(Error::OutOfSwath { .. })
        ));
        assert!(matches!(
            m.backproject(&ImagePoint::new(0.0, 0.0), 1_100_000.0),
            Err(Error::NoIntersection { .. })
        ));
    }

    #[test]
    fn models_roundtrip_through_json() {
        let pair = SensorPair {
            optical: nadir_pushbroom(),
            sar: side_looking_sar(),
        };
        let text = serde_json::to_string(&pair).unwrap();
        assert!(text.contains("\"R0\""));
        assert!(text.contains("\"focal_length\""));
        let back: SensorPair = serde_json::from_str(&text).unwrap();
        assert_eq!(back, pair);
    }
}
