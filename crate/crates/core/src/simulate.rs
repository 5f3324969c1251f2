//! Synthetic block scenes, matching sensor pairs and rendered images.
//!
//! The scene lives in the local ground frame with its center at the origin;
//! cell `(row, col)` covers `x` in `[col, col + 1) * cell - size * cell / 2`
//! and likewise for `y` (rows run north). Everything is driven by a single
//! seed through a ChaCha8 generator.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    GroundPoint, LookSide, OrientationPolys, PositionPolys, PushBroomModel, RangeDopplerModel, SensorModel, SensorPair,
    TimePolynomial,
};
use crate::io;
use crate::rpc::GroundExtent;
use crate::sgm::Image;
use crate::triangulate::PointCloud;

/// Largest building height the matcher's +-20 m search range can absorb.
pub const MAX_BUILDING_HEIGHT: f64 = 20.0;
const MIN_BUILDING_HEIGHT: f64 = 4.0;
const MIN_FOOTPRINT: usize = 12;
const MAX_FOOTPRINT: usize = 60;
/// Brightness of sensor-facing walls in the SAR image.
const SAR_WALL_BRIGHTNESS: f32 = 0.9;
const OPTICAL_WALL_FACTOR: f32 = 0.45;
const SAR_SUBSAMPLES: usize = 3;
const SPECKLE_LOOKS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Cells per side.
    pub size: usize,
    /// Cell edge length (meters).
    pub cell_size: f64,
    pub building_count: usize,
    /// Maximum building height above the ground (meters).
    pub max_height: f64,
    /// Height of the flat ground, also the scene's mean terrain height.
    pub ground_height: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            size: 512,
            cell_size: 1.0,
            building_count: 24,
            max_height: MAX_BUILDING_HEIGHT,
            ground_height: 500.0,
        }
    }
}

/// Axis-aligned rectangular prism, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
    /// Height above the ground (meters).
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub buildings: Vec<Building>,
    /// Absolute heights, row-major, `size * size`.
    pub heights: Vec<f64>,
    pub reflectance: Image,
    top: f64,
}

/// Sum of value-noise octaves, normalized to `[0, 1]`.
fn value_noise(rng: &mut ChaCha8Rng, size: usize) -> Vec<f32> {
    let octaves: [(usize, f32); 5] = [(2, 1.0), (4, 0.8), (8, 0.6), (16, 0.5), (32, 0.4)];
    let mut out = vec![0.0f32; size * size];
    for &(spacing, amp) in &octaves {
        let n = size / spacing + 2;
        let lattice: Vec<f32> = (0..n * n).map(|_| rng.random::<f32>()).collect();
        let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
        for r in 0..size {
            let fy = r as f32 / spacing as f32;
            let iy = fy as usize;
            let ty = smooth(fy - iy as f32);
            for c in 0..size {
                let fx = c as f32 / spacing as f32;
                let ix = fx as usize;
                let tx = smooth(fx - ix as f32);
                let v00 = lattice[iy * n + ix];
                let v01 = lattice[iy * n + ix + 1];
                let v10 = lattice[(iy + 1) * n + ix];
                let v11 = lattice[(iy + 1) * n + ix + 1];
                let top = v00 + (v01 - v00) * tx;
                let bottom = v10 + (v11 - v10) * tx;
                out[r * size + c] += amp * (top + (bottom - top) * ty);
            }
        }
    }
    let (lo, hi) = out.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = (hi - lo).max(f32::EPSILON);
    out.iter().map(|v| (v - lo) / span).collect()
}

fn highest(heights: &[f64], ground: f64) -> f64 {
    heights.iter().copied().fold(ground, f64::max)
}

/// Flat ground plus random rectangular prisms with a textured reflectance.
pub fn make_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.size < 16 {
        return Err(Error::invalid("scene size must be at least 16 cells"));
    }
    if !(spec.cell_size > 0.0) || !spec.ground_height.is_finite() {
        return Err(Error::invalid("cell_size must be positive and ground_height finite"));
    }
    if !(spec.max_height > 0.0 && spec.max_height <= MAX_BUILDING_HEIGHT) {
        return Err(Error::invalid(format!(
            "max_height must lie in (0, {MAX_BUILDING_HEIGHT}] m"
        )));
    }
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let texture = value_noise(&mut rng, n);
    let mut heights = vec![spec.ground_height; n * n];
    let mut reflectance: Vec<f32> = texture.iter().map(|t| 0.1 + 0.8 * t).collect();
    let border = 8.min(n / 4);
    let max_fp = MAX_FOOTPRINT.min(n - 2 * border);
    let min_fp = MIN_FOOTPRINT.min(max_fp);
    let min_h = MIN_BUILDING_HEIGHT.min(spec.max_height);
    let mut buildings = Vec::with_capacity(spec.building_count);
    for _ in 0..spec.building_count {
        let rows = rng.random_range(min_fp..=max_fp);
        let cols = rng.random_range(min_fp..=max_fp);
        let row0 = rng.random_range(border..=n - border - rows);
        let col0 = rng.random_range(border..=n - border - cols);
        // Quarter-meter heights are exact in single precision rasters.
        let height = (rng.random_range(min_h..=spec.max_height) * 4.0).round() / 4.0;
        let tone: f32 = rng.random_range(0.2..0.8);
        buildings.push(Building {
            row0,
            col0,
            rows,
            cols,
            height,
        });
        for r in row0..row0 + rows {
            for c in col0..col0 + cols {
                let i = r * n + c;
                let h = spec.ground_height + height;
                if h >= heights[i] {
                    heights[i] = h;
                    reflectance[i] = 0.5 * tone + 0.5 * (0.1 + 0.8 * texture[i]);
                }
            }
        }
    }
    Ok(Scene {
        spec: *spec,
        buildings,
        top: highest(&heights, spec.ground_height),
        heights,
        reflectance: Image::from_vec(n, n, reflectance)?,
    })
}

/// Stored hit of a downward ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceHit {
    /// Horizontal surface (roof or ground).
    Top(GroundPoint),
    /// Vertical building face.
    Wall(GroundPoint),
}

impl Scene {
    pub fn size(&self) -> usize {
        self.spec.size
    }

    pub fn half_extent(&self) -> f64 {
        0.5 * self.spec.size as f64 * self.spec.cell_size
    }

    /// Horizontal extent with the given height range.
    pub fn extent(&self, h_min: f64, h_max: f64) -> GroundExtent {
        let e = self.half_extent();
        GroundExtent {
            x_min: -e,
            x_max: e,
            y_min: -e,
            y_max: e,
            h_min,
            h_max,
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let c = self.spec.cell_size;
        (
            (col as f64 + 0.5) * c - self.half_extent(),
            (row as f64 + 0.5) * c - self.half_extent(),
        )
    }

    /// Continuous cell coordinates `(col, row)` of a ground position.
    fn cell_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let c = self.spec.cell_size;
        ((x + self.half_extent()) / c, (y + self.half_extent()) / c)
    }

    /// Height of cell `(row, col)`; ground outside the grid.
    pub fn cell_height(&self, row: i64, col: i64) -> f64 {
        let n = self.spec.size as i64;
        if row < 0 || col < 0 || row >= n || col >= n {
            self.spec.ground_height
        } else {
            self.heights[(row * n + col) as usize]
        }
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let (fc, fr) = self.cell_coords(x, y);
        self.cell_height(fr.floor() as i64, fc.floor() as i64)
    }

    pub fn max_height(&self) -> f64 {
        self.top
    }

    pub fn set_cell_height(&mut self, row: usize, col: usize, h: f64) {
        let n = self.spec.size;
        let old = std::mem::replace(&mut self.heights[row * n + col], h);
        if h >= self.top {
            self.top = h;
        } else if old >= self.top {
            self.top = highest(&self.heights, self.spec.ground_height);
        }
    }

    /// Bilinear reflectance at a ground position, clamped to the grid.
    pub fn reflectance_at(&self, x: f64, y: f64) -> f32 {
        let (fc, fr) = self.cell_coords(x, y);
        let last = (self.spec.size - 1) as f64;
        let r = (fr - 0.5).clamp(0.0, last);
        let c = (fc - 0.5).clamp(0.0, last);
        self.reflectance.bilinear(r, c).unwrap_or(0.0)
    }

    /// Walks the cells crossed by the horizontal ray `(x0, y0) + s * (ux, uy)`
    /// with `s` in `[0, s_max]`. `visit(row, col, s_in, s_out)` returns true
    /// to stop.
    fn traverse(
        &self,
        x0: f64,
        y0: f64,
        ux: f64,
        uy: f64,
        s_max: f64,
        mut visit: impl FnMut(i64, i64, f64, f64) -> bool,
    ) {
        let cell = self.spec.cell_size;
        let (fx, fy) = self.cell_coords(x0, y0);
        let mut col = fx.floor() as i64;
        let mut row = fy.floor() as i64;
        let step_c: i64 = if ux > 0.0 { 1 } else { -1 };
        let step_r: i64 = if uy > 0.0 { 1 } else { -1 };
        let delta_c = if ux != 0.0 { cell / ux.abs() } else { f64::INFINITY };
        let delta_r = if uy != 0.0 { cell / uy.abs() } else { f64::INFINITY };
        let mut next_c = if ux > 0.0 {
            (col as f64 + 1.0 - fx) * delta_c
        } else if ux < 0.0 {
            (fx - col as f64) * delta_c
        } else {
            f64::INFINITY
        };
        let mut next_r = if uy > 0.0 {
            (row as f64 + 1.0 - fy) * delta_r
        } else if uy < 0.0 {
            (fy - row as f64) * delta_r
        } else {
            f64::INFINITY
        };
        let mut s_in = 0.0;
        loop {
            let s_out = next_c.min(next_r).min(s_max);
            if visit(row, col, s_in, s_out) || s_out >= s_max {
                return;
            }
            s_in = s_out;
            if next_c < next_r {
                col += step_c;
                next_c += delta_c;
            } else {
                row += step_r;
                next_r += delta_r;
            }
        }
    }

    /// First surface hit along a downward ray from `origin` in `dir`.
    pub fn first_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<SurfaceHit> {
        if !(dir.z < 0.0) {
            return None;
        }
        let top = self.max_height() + 1.0;
        let lambda = (top - origin.z) / dir.z;
        let start = origin + dir * lambda;
        let horiz = (dir.x * dir.x + dir.y * dir.y).sqrt();
        if horiz < 1e-12 * dir.norm() {
            let h = self.height_at(start.x, start.y);
            return Some(SurfaceHit::Top(GroundPoint::new(start.x, start.y, h)));
        }
        let (ux, uy) = (dir.x / horiz, dir.y / horiz);
        // Height change per meter of horizontal travel (negative).
        let slope = dir.z / horiz;
        let s_ground = (self.spec.ground_height - top) / slope;
        let mut hit = None;
        self.traverse(start.x, start.y, ux, uy, s_ground + 1.0, |row, col, s_in, s_out| {
            let hc = self.cell_height(row, col);
            let z_in = top + slope * s_in;
            let z_out = top + slope * s_out;
            if z_in < hc {
                hit = Some(SurfaceHit::Wall(GroundPoint::new(
                    start.x + ux * s_in,
                    start.y + uy * s_in,
                    z_in,
                )));
                true
            } else if z_out <= hc {
                let s = (hc - top) / slope;
                hit = Some(SurfaceHit::Top(GroundPoint::new(
                    start.x + ux * s,
                    start.y + uy * s,
                    hc,
                )));
                true
            } else {
                false
            }
        });
        hit
    }

    /// True when the straight path from `p` towards `sensor` passes below
    /// some building top. The cell containing `p` itself is ignored.
    pub fn is_occluded(&self, p: &GroundPoint, sensor: &Vector3<f64>) -> bool {
        let d = sensor - p.to_vector();
        let horiz = (d.x * d.x + d.y * d.y).sqrt();
        if horiz < 1e-12 || d.z <= 0.0 {
            return false;
        }
        let (ux, uy) = (d.x / horiz, d.y / horiz);
        let slope = d.z / horiz;
        let top = self.max_height();
        if p.h >= top {
            return false;
        }
        let s_max = (top - p.h) / slope;
        let (fx, fy) = self.cell_coords(p.x, p.y);
        let own = (fy.floor() as i64, fx.floor() as i64);
        let mut occluded = false;
        self.traverse(p.x, p.y, ux, uy, s_max, |row, col, s_in, _| {
            if (row, col) == own {
                return false;
            }
            if p.h + slope * s_in < self.cell_height(row, col) - 1e-9 {
                occluded = true;
                return true;
            }
            false
        });
        occluded
    }
}

/// Geometry of a synthetic stereo pair.
///
/// Headings are clockwise from north. The optical look azimuth is measured
/// clockwise from the flight direction (90 degrees looks to the right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPairSpec {
    pub sar_incidence_deg: f64,
    pub sar_heading_deg: f64,
    pub sar_look_side: LookSide,
    pub sar_altitude: f64,
    pub sar_speed: f64,
    pub optical_off_nadir_deg: f64,
    pub optical_look_azimuth_deg: f64,
    pub optical_heading_deg: f64,
    pub optical_altitude: f64,
    pub optical_speed: f64,
    pub focal_length: f64,
    /// Ground sampling distance of both images (meters).
    pub gsd: f64,
    /// Extra pixels around the scene footprint.
    pub margin_px: f64,
    /// Height range below and above the ground the footprint must cover.
    pub height_margin: f64,
}

impl SensorPairSpec {
    /// Geometry patterned on the Munich pair: 22.99 deg SAR, 5.2 deg optical.
    pub fn munich() -> Self {
        Self {
            sar_incidence_deg: 22.99,
            sar_heading_deg: -8.0,
            sar_look_side: LookSide::Right,
            sar_altitude: 514_000.0,
            sar_speed: 7600.0,
            optical_off_nadir_deg: 5.2,
            optical_look_azimuth_deg: 60.0,
            optical_heading_deg: 4.0,
            optical_altitude: 770_000.0,
            optical_speed: 7500.0,
            focal_length: 13.3,
            gsd: 1.0,
            margin_px: 8.0,
            height_margin: 20.0,
        }
    }

    /// Geometry patterned on the Berlin pair: 36.11 deg SAR, 29.1 deg optical.
    pub fn berlin() -> Self {
        Self {
            sar_incidence_deg: 36.11,
            optical_off_nadir_deg: 29.1,
            optical_look_azimuth_deg: 120.0,
            optical_heading_deg: -6.0,
            ..Self::munich()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "munich" => Ok(Self::munich()),
            "berlin" => Ok(Self::berlin()),
            other => Err(Error::invalid(format!("unknown sensor preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sar_incidence_deg > 0.0 && self.sar_incidence_deg < 80.0) {
            return Err(Error::invalid("SAR incidence must lie in (0, 80) degrees"));
        }
        if !(self.optical_off_nadir_deg >= 0.0 && self.optical_off_nadir_deg < 60.0) {
            return Err(Error::invalid("optical off-nadir must lie in [0, 60) degrees"));
        }
        for v in [
            self.sar_altitude,
            self.sar_speed,
            self.optical_altitude,
            self.optical_speed,
            self.focal_length,
            self.gsd,
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(
                    "altitudes, speeds, focal length and GSD must be positive",
                ));
            }
        }
        if !(self.margin_px >= 0.0) || !(self.height_margin >= 0.0) {
            return Err(Error::invalid("margins must be non-negative"));
        }
        Ok(())
    }
}

/// Euler angles of a camera flying at `heading` with constant roll and pitch.
pub fn camera_attitude(heading: f64, roll: f64, pitch: f64) -> (f64, f64, f64) {
    (PI + roll, pitch, heading - 0.5 * PI)
}

/// Roll and pitch that point the boresight `off_nadir` away from nadir at
/// `look_azimuth` clockwise from the flight direction.
pub fn roll_pitch(off_nadir: f64, look_azimuth: f64) -> (f64, f64) {
    let roll = (off_nadir.sin() * look_azimuth.sin()).asin();
    let pitch = (off_nadir.sin() * look_azimuth.cos()).atan2(off_nadir.cos());
    (roll, pitch)
}

/// Ground area the images of a sensor pair must cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    /// Half side of the square area centered at the origin (meters).
    pub half_extent: f64,
    pub ground_height: f64,
    /// Lowest and highest heights that must stay inside both images.
    pub h_min: f64,
    pub h_max: f64,
}

impl Footprint {
    pub fn of_scene(scene: &Scene, height_margin: f64) -> Self {
        let g = scene.spec.ground_height;
        Self {
            half_extent: scene.half_extent(),
            ground_height: g,
            h_min: g - height_margin,
            h_max: (g + height_margin).max(scene.max_height()),
        }
    }

    fn corners(&self) -> Vec<GroundPoint> {
        let e = self.half_extent;
        let mut out = Vec::new();
        for &h in &[self.h_min, self.h_max] {
            for &x in &[-e, 0.0, e] {
                for &y in &[-e, 0.0, e] {
                    out.push(GroundPoint::new(x, y, h));
                }
            }
        }
        out
    }
}

fn make_sar(spec: &SensorPairSpec, area: &Footprint) -> Result<RangeDopplerModel> {
    let heading = spec.sar_heading_deg.to_radians();
    let theta = spec.sar_incidence_deg.to_radians();
    let v = Vector3::new(heading.sin(), heading.cos(), 0.0) * spec.sar_speed;
    let right = Vector3::new(heading.cos(), -heading.sin(), 0.0);
    let to_sensor = match spec.sar_look_side {
        LookSide::Right => -right,
        LookSide::Left => right,
    };
    let g = area.ground_height;
    let s_center = Vector3::new(0.0, 0.0, g + spec.sar_altitude) + to_sensor * (spec.sar_altitude * theta.tan());
    let gamma = spec.gsd * theta.sin();
    let prf = spec.sar_speed / spec.gsd;
    let mut model = RangeDopplerModel {
        initial_position: s_center.into(),
        velocity: v.into(),
        r0: 1.0,
        gamma,
        prf,
        look_side: spec.sar_look_side,
        window: [f64::NEG_INFINITY, f64::INFINITY],
        lines: 1,
        samples: 1,
    };
    let corners = area.corners();
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut r_lo, mut r_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &corners {
        let t = model.zero_doppler_time(c);
        let r = (c.to_vector() - model.position(t)).norm();
        t_lo = t_lo.min(t);
        t_hi = t_hi.max(t);
        r_lo = r_lo.min(r);
        r_hi = r_hi.max(r);
    }
    let k = 1.0 / prf;
    let t0 = t_lo - spec.margin_px * k;
    model.initial_position = model.position(t0).into();
    model.r0 = r_lo - spec.margin_px * gamma;
    model.lines = ((t_hi - t_lo) * prf + 2.0 * spec.margin_px).ceil() as usize + 1;
    model.samples = ((r_hi - r_lo) / gamma + 2.0 * spec.margin_px).ceil() as usize + 1;
    let duration = model.lines as f64 * k;
    model.window = [-duration, 2.0 * duration];
    model.validate()?;
    Ok(model)
}

fn make_optical(spec: &SensorPairSpec, area: &Footprint) -> Result<PushBroomModel> {
    let heading = spec.optical_heading_deg.to_radians();
    let theta = spec.optical_off_nadir_deg.to_radians();
    let (roll, pitch) = roll_pitch(theta, spec.optical_look_azimuth_deg.to_radians());
    let (omega, phi, kappa) = camera_attitude(heading, roll, pitch);
    let v = Vector3::new(heading.sin(), heading.cos(), 0.0) * spec.optical_speed;
    let g = area.ground_height;
    let mut model = PushBroomModel {
        focal_length: spec.focal_length,
        orientation_polys: OrientationPolys {
            omega: TimePolynomial::constant(omega),
            phi: TimePolynomial::constant(phi),
            // Slow quadratic yaw drift.
            kappa: TimePolynomial(vec![kappa, 0.0, 1e-6]),
        },
        position_polys: PositionPolys {
            x: TimePolynomial::constant(0.0),
            y: TimePolynomial::constant(0.0),
            z: TimePolynomial::constant(0.0),
        },
        line_time: spec.gsd / spec.optical_speed,
        first_line_time: 0.0,
        pixel_pitch: spec.gsd * spec.focal_length * theta.cos().powi(2) / spec.optical_altitude,
        principal_col: 0.0,
        lines: 0,
        samples: 0,
    };
    let boresight = model.ray_direction(0.0, 0.0).normalize();
    let s_center = Vector3::new(0.0, 0.0, g) + boresight * (spec.optical_altitude / boresight.z);
    model.position_polys = PositionPolys {
        x: TimePolynomial::linear(s_center.x, v.x),
        y: TimePolynomial::linear(s_center.y, v.y),
        z: TimePolynomial::linear(s_center.z, v.z),
    };
    let (mut r_lo, mut r_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut c_lo, mut c_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &area.corners() {
        let p = model.project(c)?;
        r_lo = r_lo.min(p.row);
        r_hi = r_hi.max(p.row);
        c_lo = c_lo.min(p.col);
        c_hi = c_hi.max(p.col);
    }
    model.first_line_time = model.line_to_time(r_lo - spec.margin_px);
    model.principal_col = spec.margin_px - c_lo;
    model.lines = (r_hi - r_lo + 2.0 * spec.margin_px).ceil() as usize + 1;
    model.samples = (c_hi - c_lo + 2.0 * spec.margin_px).ceil() as usize + 1;
    model.validate()?;
    Ok(model)
}

/// Builds both rigorous models so that their images cover the scene.
pub fn make_sensors(spec: &SensorPairSpec, scene: &Scene) -> Result<SensorPair> {
    make_sensors_for(spec, &Footprint::of_scene(scene, spec.height_margin))
}

/// Builds both rigorous models so that their images cover `area`.
pub fn make_sensors_for(spec: &SensorPairSpec, area: &Footprint) -> Result<SensorPair> {
    spec.validate()?;
    if !(area.half_extent > 0.0) || !(area.h_max >= area.h_min) {
        return Err(Error::invalid("footprint must have a positive extent"));
    }
    Ok(SensorPair {
        optical: make_optical(spec, area)?,
        sar: make_sar(spec, area)?,
    })
}

/// Ray-traced optical image: each pixel averages a 2x2 grid of rays.
pub fn render_optical(scene: &Scene, model: &PushBroomModel) -> Result<Image> {
    let (w, h) = (model.samples, model.lines);
    if w == 0 || h == 0 {
        return Err(Error::invalid("optical model has empty image dimensions"));
    }
    let offsets = [0.25, 0.75];
    let data: Vec<f32> = (0..h)
        .into_par_iter()
        .flat_map_iter(|r| {
            (0..w).map(move |c| {
                let mut sum = 0.0f32;
                for &dr in &offsets {
                    for &dc in &offsets {
                        let row = r as f64 - 0.5 + dr;
                        let col = c as f64 - 0.5 + dc;
                        let t = model.line_to_time(row);
                        let y_l = (col - model.principal_col) * model.pixel_pitch;
                        let dir = model.ray_direction(t, y_l);
                        let origin = model.position(t);
                        sum += match scene.first_hit(&origin, &dir) {
                            Some(SurfaceHit::Top(p)) => scene.reflectance_at(p.x, p.y),
                            Some(SurfaceHit::Wall(p)) => OPTICAL_WALL_FACTOR * scene.reflectance_at(p.x, p.y),
                            None => 0.0,
                        };
                    }
                }
                sum / 4.0
            })
        })
        .collect();
    Image::from_vec(w, h, data)
}

/// Bin indices and brightness of all visible samples of one scene row.
fn sar_samples(scene: &Scene, model: &RangeDopplerModel, row: usize) -> Vec<(usize, f32)> {
    let n = scene.size();
    let cell = scene.spec.cell_size;
    let sub = SAR_SUBSAMPLES;
    let mut out = Vec::with_capacity(n * sub * sub);
    let push = |p: GroundPoint, value: f32, out: &mut Vec<(usize, f32)>| {
        let t = model.zero_doppler_time(&p);
        if scene.is_occluded(&p, &model.position(t)) {
            return;
        }
        if let Ok(ip) = model.project(&p) {
            let (r, c) = (ip.row.round(), ip.col.round());
            if r >= 0.0 && c >= 0.0 && (r as usize) < model.lines && (c as usize) < model.samples {
                out.push((r as usize * model.samples + c as usize, value));
            }
        }
    };
    for col in 0..n {
        let (xc, yc) = scene.cell_center(row, col);
        let hc = scene.heights[row * n + col];
        for i in 0..sub {
            for j in 0..sub {
                let dx = ((j as f64 + 0.5) / sub as f64 - 0.5) * cell;
                let dy = ((i as f64 + 0.5) / sub as f64 - 0.5) * cell;
                let p = GroundPoint::new(xc + dx, yc + dy, hc);
                push(p, scene.reflectance_at(p.x, p.y), &mut out);
            }
        }
        // Walls of this cell facing a lower neighbor and the sensor.
        let t = model.zero_doppler_time(&GroundPoint::new(xc, yc, hc));
        let s = model.position(t);
        for (dr, dc) in [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)] {
            let hn = scene.cell_height(row as i64 + dr, col as i64 + dc);
            if hn >= hc {
                continue;
            }
            let normal = (dc as f64, dr as f64);
            if normal.0 * (s.x - xc) + normal.1 * (s.y - yc) <= 0.0 {
                continue;
            }
            let levels = ((hc - hn) * sub as f64 / cell).ceil().max(1.0) as usize;
            for k in 0..levels {
                let z = hn + (k as f64 + 0.5) * (hc - hn) / levels as f64;
                for j in 0..sub {
                    let along = ((j as f64 + 0.5) / sub as f64 - 0.5) * cell;
                    // Just outside the face, on the lower neighbor's side.
                    let out_off = 0.5 * cell + 1e-6;
                    let (x, y) = if dr == 0 {
                        (xc + normal.0 * out_off, yc + along)
                    } else {
                        (xc + along, yc + normal.1 * out_off)
                    };
                    push(GroundPoint::new(x, y, z), SAR_WALL_BRIGHTNESS, &mut out);
                }
            }
        }
    }
    out
}

/// Incoherent SAR image by forward mapping of scene samples.
///
/// Samples in radar shadow are skipped; bins receive the mean of the
/// samples that land in them (empty bins stay zero). With `speckle`, each
/// pixel is multiplied by unit-mean Gamma noise of four looks, drawn from a
/// per-row stream of the scene seed.
pub fn render_sar(scene: &Scene, model: &RangeDopplerModel, speckle: bool) -> Result<Image> {
    let (w, h) = (model.samples, model.lines);
    if w == 0 || h == 0 {
        return Err(Error::invalid("SAR model has empty image dimensions"));
    }
    let per_row: Vec<Vec<(usize, f32)>> = (0..scene.size())
        .into_par_iter()
        .map(|row| sar_samples(scene, model, row))
        .collect();
    let mut sum = vec![0.0f64; w * h];
    let mut count = vec![0u32; w * h];
    for samples in &per_row {
        for &(i, v) in samples {
            sum[i] += f64::from(v);
            count[i] += 1;
        }
    }
    let mut data: Vec<f32> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n > 0 { (s / f64::from(n)) as f32 } else { 0.0 })
        .collect();
    if speckle {
        apply_speckle(&mut data, w, scene.spec.seed);
    }
    Image::from_vec(w, h, data)
}

/// Multiplies each pixel by Gamma(L, 1/L) noise, one stream per image row.
pub fn apply_speckle(data: &mut [f32], width: usize, seed: u64) {
    let gamma = Gamma::new(SPECKLE_LOOKS, 1.0 / SPECKLE_LOOKS).expect("valid gamma parameters");
    data.par_chunks_mut(width).enumerate().for_each(|(row, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a12);
        rng.set_stream(row as u64);
        for v in chunk {
            *v *= gamma.sample(&mut rng) as f32;
        }
    });
}

/// Heightfield sampled at every `stride`-th cell center.
pub fn ground_truth_cloud(scene: &Scene, stride: usize) -> Result<PointCloud> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let n = scene.size();
    let mut pts = Vec::with_capacity((n / stride + 1).pow(2));
    for r in (0..n).step_by(stride) {
        for c in (0..n).step_by(stride) {
            let (x, y) = scene.cell_center(r, c);
            pts.push(GroundPoint::new(x, y, scene.heights[r * n + c]));
        }
    }
    Ok(PointCloud::from_positions(pts))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneDocument {
    spec: SceneSpec,
    buildings: Vec<Building>,
}

pub const HEIGHTFIELD_FILE: &str = "heightfield.pfm";
pub const REFLECTANCE_FILE: &str = "reflectance.pfm";
pub const SENSORS_FILE: &str = "sensors.json";
pub const TRUTH_FILE: &str = "truth.ply";
pub const SPEC_FILE: &str = "spec.json";

/// Writes a scene bundle directory.
pub fn write_bundle(dir: &Path, scene: &Scene, sensors: &SensorPair, truth_stride: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = scene.size();
    let heights: Vec<f32> = scene.heights.iter().map(|&h| h as f32).collect();
    io::write_pfm(dir.join(HEIGHTFIELD_FILE), n, n, &heights)?;
    io::write_image_pfm(dir.join(REFLECTANCE_FILE), &scene.reflectance)?;
    io::write_json(dir.join(SENSORS_FILE), sensors)?;
    io::write_ply(dir.join(TRUTH_FILE), &ground_truth_cloud(scene, truth_stride)?)?;
    io::write_json(
        dir.join(SPEC_FILE),
        &SceneDocument {
            spec: scene.spec,
            buildings: scene.buildings.clone(),
        },
    )?;
    Ok(())
}

/// Reads the scene part of a bundle written by [`write_bundle`].
pub fn read_scene(dir: &Path) -> Result<Scene> {
    let doc: SceneDocument = io::read_json(dir.join(SPEC_FILE))?;
    let (w, h, heights) = io::read_pfm(dir.join(HEIGHTFIELD_FILE))?;
    let n = doc.spec.size;
    if w != n || h != n {
        return Err(Error::format("bundle", "heightfield size does not match spec"));
    }
    let reflectance = io::read_image_pfm(dir.join(REFLECTANCE_FILE))?;
    if reflectance.width != n || reflectance.height != n {
        return Err(Error::format("bundle", "reflectance size does not match spec"));
    }
    let heights: Vec<f64> = heights.into_iter().map(f64::from).collect();
    Ok(Scene {
        spec: doc.spec,
        buildings: doc.buildings,
        top: highest(&heights, doc.spec.ground_height),
        heights,
        reflectance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImagePoint;
    use crate::triangulate::intersect;

    fn small_spec(buildings: usize) -> SceneSpec {
        SceneSpec {
            seed: 3,
            size: 96,
            building_count: buildings,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn flat_scene_without_buildings() {
        let s = make_scene(&small_spec(0)).unwrap();
        assert!(s.heights.iter().all(|&h| h == 500.0));
    }

    #[test]
    fn scene_is_deterministic_and_bounded() {
        let spec = small_spec(5);
        let a = make_scene(&spec).unwrap();
        let b = make_scene(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a
            .heights
            .iter()
            .all(|&h| (500.0..=500.0 + spec.max_height).contains(&h)));
        assert!(a.heights.iter().any(|&h| h > 500.0));
        let too_tall = SceneSpec {
            max_height: 25.0,
            ..spec
        };
        assert!(make_scene(&too_tall).is_err());
    }

    #[test]
    fn attitude_points_boresight() {
        // Heading north, 10 deg to the right: boresight tilts east.
        let (roll, pitch) = roll_pitch(10f64.to_radians(), 90f64.to_radians());
        let (o, p, k) = camera_attitude(0.0, roll, pitch);
        let d = crate::geometry::rotation_matrix(o, p, k).transpose() * Vector3::z();
        assert!((d.x - 10f64.to_radians().sin()).abs() < 1e-12);
        assert!(d.y.abs() < 1e-12);
        // Look azimuth 0 pitches forward along a 90 deg heading (east).
        let (roll, pitch) = roll_pitch(10f64.to_radians(), 0.0);
        let (o, p, k) = camera_attitude(0.5 * PI, roll, pitch);
        let d = crate::geometry::rotation_matrix(o, p, k).transpose() * Vector3::z();
        assert!((d.x - 10f64.to_radians().sin()).abs() < 1e-12);
        assert!((d.z + 10f64.to_radians().cos()).abs() < 1e-12);
    }

    #[test]
    fn presets_match_declared_angles_and_cover_scene() {
        let scene = make_scene(&small_spec(3)).unwrap();
        for (spec, sar_deg, opt_deg) in [
            (SensorPairSpec::munich(), 22.99, 5.2),
            (SensorPairSpec::berlin(), 36.11, 29.1),
        ] {
            let pair = make_sensors(&spec, &scene).unwrap();
            let c = GroundPoint::new(0.0, 0.0, 500.0);
            let t = pair.sar.zero_doppler_time(&c);
            let los = pair.sar.position(t) - c.to_vector();
            let inc = (los.z / los.norm()).acos().to_degrees();
            assert!((inc - sar_deg).abs() < 1e-6, "incidence {inc}");
            let t = pair.optical.imaging_time(&c).unwrap();
            let los = pair.optical.position(t) - c.to_vector();
            let off = (los.z / los.norm()).acos().to_degrees();
            assert!((off - opt_deg).abs() < 0.01, "off-nadir {off}");
            let e = scene.half_extent();
            for &(x, y) in &[(-e, -e), (-e, e), (e, -e), (e, e)] {
                for h in [480.0, 520.0] {
                    let g = GroundPoint::new(x, y, h);
                    let p = pair.sar.project(&g).unwrap();
                    assert!(p.row >= 0.0 && p.row < pair.sar.lines as f64);
                    assert!(p.col >= 0.0 && p.col < pair.sar.samples as f64);
                    let p = pair.optical.project(&g).unwrap();
                    assert!(p.row >= 0.0 && p.row < pair.optical.lines as f64);
                    assert!(p.col >= 0.0 && p.col < pair.optical.samples as f64);
                }
            }
        }
    }

    #[test]
    fn nadir_optical_parallax_runs_along_sar_range() {
        let scene = make_scene(&small_spec(0)).unwrap();
        let spec = SensorPairSpec {
            optical_off_nadir_deg: 0.0,
            sar_incidence_deg: 30.0,
            ..SensorPairSpec::munich()
        };
        let pair = make_sensors(&spec, &scene).unwrap();
        let p = pair.optical.project(&GroundPoint::new(10.0, -5.0, 500.0)).unwrap();
        let a = pair.sar.project(&pair.optical.backproject(&p, 480.0).unwrap()).unwrap();
        let b = pair.sar.project(&pair.optical.backproject(&p, 520.0).unwrap()).unwrap();
        let (dr, dc) = (b.row - a.row, b.col - a.col);
        assert!(dr.abs() < 1e-3 * dc.abs(), "dr {dr} dc {dc}");
        // 40 m of height at 30 deg over a 1 m ground-range pixel.
        assert!((dc.abs() - 40.0 / 30f64.to_radians().tan()).abs() < 0.01 * dc.abs());
    }

    #[test]
    fn sensors_share_one_truth() {
        let scene = make_scene(&small_spec(3)).unwrap();
        let pair = make_sensors(&SensorPairSpec::munich(), &scene).unwrap();
        for &(x, y, h) in &[(0.0, 0.0, 500.0), (20.0, -30.0, 515.0), (-40.0, 41.0, 503.5)] {
            let g = GroundPoint::new(x, y, h);
            let ps = pair.sar.project(&g).unwrap();
            let po = pair.optical.project(&g).unwrap();
            let (q, res) = intersect(&pair.sar, &pair.optical, &ps, &po, 500.0).unwrap();
            assert!(q.distance(&g) < 1e-3, "{q:?}");
            assert!(res < 1e-6);
        }
    }

    #[test]
    fn flat_optical_render_is_texture_resample() {
        let scene = make_scene(&small_spec(0)).unwrap();
        let pair = make_sensors(&SensorPairSpec::munich(), &scene).unwrap();
        let img = render_optical(&scene, &pair.optical).unwrap();
        let m = &pair.optical;
        let (r, c) = (m.lines / 2, m.samples / 2);
        // Average of the four sub-ray ground points, backprojected directly.
        let mut expected = 0.0;
        for dr in [-0.25, 0.25] {
            for dc in [-0.25, 0.25] {
                let g = m
                    .backproject(&ImagePoint::new(r as f64 + dr, c as f64 + dc), 500.0)
                    .unwrap();
                expected += scene.reflectance_at(g.x, g.y) / 4.0;
            }
        }
        assert!((img.get(r, c) - expected).abs() < 1e-5);
    }

    #[test]
    fn roof_edge_shows_parallax() {
        let mut scene = make_scene(&small_spec(0)).unwrap();
        let n = scene.size();
        // A 20 m block occupying the scene's east half.
        for r in 0..n {
            for c in n / 2..n {
                scene.set_cell_height(r, c, 520.0);
            }
        }
        let spec = SensorPairSpec {
            optical_heading_deg: 0.0,
            optical_look_azimuth_deg: 90.0,
            optical_off_nadir_deg: 20.0,
            ..SensorPairSpec::munich()
        };
        let pair = make_sensors(&spec, &scene).unwrap();
        let m = &pair.optical;
        // Looking east, relief displacement pushes the roof edge
        // h * tan(20 deg) m further east; the wall fills the gap.
        let base = m.project(&GroundPoint::new(0.0, 0.0, 500.0)).unwrap();
        let roof = m.project(&GroundPoint::new(0.0, 0.0, 520.0)).unwrap();
        let shift = roof.col - base.col;
        assert!((shift - 20.0 * 20f64.to_radians().tan()).abs() < 0.2, "{shift}");
        let t = m.line_to_time(roof.row);
        let origin = m.position(t);
        let probe = |col: f64| {
            let dir = m.ray_direction(t, (col - m.principal_col) * m.pixel_pitch);
            scene.first_hit(&origin, &dir).unwrap()
        };
        assert!(matches!(probe(base.col - 0.5), SurfaceHit::Top(p) if p.h == 500.0));
        assert!(matches!(probe(base.col + 0.5), SurfaceHit::Wall(_)));
        assert!(matches!(probe(roof.col + 0.5), SurfaceHit::Top(p) if p.h == 520.0));
    }

    #[test]
    fn flat_sar_render_has_no_holes() {
        let scene = make_scene(&small_spec(0)).unwrap();
        let pair = make_sensors(&SensorPairSpec::munich(), &scene).unwrap();
        let img = render_sar(&scene, &pair.sar, false).unwrap();
        // Pixels whose ground footprint lies well inside the scene.
        let e = scene.half_extent() - 3.0;
        let mut checked = 0;
        for r in 0..img.height {
            for c in 0..img.width {
                let g = pair
                    .sar
                    .backproject(&ImagePoint::new(r as f64, c as f64), 500.0)
                    .unwrap();
                if g.x.abs() < e && g.y.abs() < e {
                    assert!(img.get(r, c) > 0.0, "hole at {r},{c}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 5000);
    }

    #[test]
    fn sar_wall_layover_is_bright_and_toward_sensor() {
        let mut scene = make_scene(&small_spec(0)).unwrap();
        let n = scene.size();
        // Block on the east side; Munich SAR looks east, so its west wall
        // faces the sensor.
        for r in 0..n {
            for c in n / 2..n {
                scene.set_cell_height(r, c, 515.0);
            }
        }
        let spec = SensorPairSpec {
            sar_heading_deg: 0.0,
            ..SensorPairSpec::munich()
        };
        let pair = make_sensors(&spec, &scene).unwrap();
        let img = render_sar(&scene, &pair.sar, false).unwrap();
        let base = pair.sar.project(&GroundPoint::new(0.0, 0.0, 500.0)).unwrap();
        let top = pair.sar.project(&GroundPoint::new(0.0, 0.0, 515.0)).unwrap();
        // Wall top maps nearer in range than the wall base.
        assert!(top.col < base.col - 10.0);
        let r = base.row.round() as usize;
        let mid = (0.5 * (base.col + top.col)).round() as usize;
        let ground = img.get(r, top.col.round() as usize - 40);
        assert!(img.get(r, mid) > ground.max(0.5), "{} vs {}", img.get(r, mid), ground);
    }

    #[test]
    fn speckle_preserves_mean() {
        let mut data = vec![0.5f32; 100 * 100];
        apply_speckle(&mut data, 100, 11);
        let mean = data.iter().map(|&v| f64::from(v)).sum::<f64>() / data.len() as f64;
        assert!((mean - 0.5).abs() < 0.5 * 0.03, "{mean}");
        let mut again = vec![0.5f32; 100 * 100];
        apply_speckle(&mut again, 100, 11);
        assert_eq!(data, again);
    }

    #[test]
    fn truth_cloud_samples_heightfield() {
        let scene = make_scene(&small_spec(4)).unwrap();
        let cloud = ground_truth_cloud(&scene, 2).unwrap();
        assert_eq!(cloud.len(), 48 * 48);
        for p in &cloud.points {
            assert_eq!(scene.height_at(p.position.x, p.position.y), p.position.h);
        }
    }

    #[test]
    fn bundle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = make_scene(&small_spec(4)).unwrap();
        let pair = make_sensors(&SensorPairSpec::munich(), &scene).unwrap();
        write_bundle(dir.path(), &scene, &pair, 4).unwrap();
        assert_eq!(read_scene(dir.path()).unwrap(), scene);
        let back: SensorPair = io::read_json(dir.path().join(SENSORS_FILE)).unwrap();
        assert_eq!(back, pair);
    }
}
