//! Rational polynomial camera models.
//!
//! Forward functions map normalized ground `(x, y, h)` to normalized image
//! `(col, row)` as ratios of cubics; inverse functions map normalized
//! `(col, row, h)` back to ground `(x, y)`. Fitting is terrain independent:
//! a cube of virtual control points is pushed through a rigorous model and
//! the coefficients are estimated by Tikhonov-regularized least squares.
//!
//! Coefficients follow the monomial order of [`cubic_terms`], which is not
//! the RPC00B order used by most vendor files.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GroundPoint, ImagePoint, NormalizationParams, SensorModel};

pub const NUM_TERMS: usize = 20;
/// Unknowns of one numerator/denominator pair (denominator constant pinned to 1).
pub const NUM_UNKNOWNS: usize = 2 * NUM_TERMS - 1;
pub const ORDER_TAG: &str = "eq4";
pub const DEFAULT_RIDGE: f64 = 1e-8;

const DENOMINATOR_EPS: f64 = 1e-12;
const REWEIGHT_ITERATIONS: usize = 3;

/// The 20 cubic monomials in coefficient order:
/// `[1, h, y, x, hy, hx, yx, h², y², x², hyx, h²y, h²x, y²h, y²x, hx², yx², h³, y³, x³]`.
pub fn cubic_terms(x: f64, y: f64, h: f64) -> [f64; NUM_TERMS] {
    [
        1.0,
        h,
        y,
        x,
        h * y,
        h * x,
        y * x,
        h * h,
        y * y,
        x * x,
        h * y * x,
        h * h * y,
        h * h * x,
        y * y * h,
        y * y * x,
        h * x * x,
        y * x * x,
        h * h * h,
        y * y * y,
        x * x * x,
    ]
}

fn dot(a: &[f64; NUM_TERMS], b: &[f64; NUM_TERMS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Offsets and scales of the five RPC coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpcNormalization {
    pub row: NormalizationParams,
    pub col: NormalizationParams,
    pub x: NormalizationParams,
    pub y: NormalizationParams,
    pub h: NormalizationParams,
}

fn default_order() -> String {
    ORDER_TAG.to_string()
}

/// Forward and inverse rational polynomial functions of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalPolynomialModel {
    pub norm: RpcNormalization,
    /// Numerator and denominator of col, then numerator and denominator of row.
    pub forward: [[f64; NUM_TERMS]; 4],
    /// Numerator and denominator of x, then numerator and denominator of y.
    pub inverse: [[f64; NUM_TERMS]; 4],
    #[serde(default = "default_order")]
    pub order: String,
}

impl RationalPolynomialModel {
    /// Model whose normalized outputs equal its normalized inputs
    /// (`col = x`, `row = y` and the converse).
    pub fn identity(norm: RpcNormalization) -> Self {
        let mut num_x = [0.0; NUM_TERMS];
        num_x[3] = 1.0;
        let mut num_y = [0.0; NUM_TERMS];
        num_y[2] = 1.0;
        let mut one = [0.0; NUM_TERMS];
        one[0] = 1.0;
        Self {
            norm,
            forward: [num_x, one, num_y, one],
            inverse: [num_x, one, num_y, one],
            order: default_order(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order != ORDER_TAG {
            return Err(Error::format(
                "rpc",
                format!("unsupported coefficient order {:?}", self.order),
            ));
        }
        for n in [self.norm.row, self.norm.col, self.norm.x, self.norm.y, self.norm.h] {
            NormalizationParams::new(n.offset, n.scale)?;
        }
        Ok(())
    }

    /// Normalized forward evaluation: `(col, row)` from normalized `(x, y, h)`.
    pub fn forward_normalized(&self, x: f64, y: f64, h: f64) -> Result<(f64, f64)> {
        let t = cubic_terms(x, y, h);
        let den_c = dot(&self.forward[1], &t);
        let den_r = dot(&self.forward[3], &t);
        for den in [den_c, den_r] {
            if den.abs() < DENOMINATOR_EPS || !den.is_finite() {
                return Err(Error::DenominatorZero { value: den });
            }
        }
        Ok((dot(&self.forward[0], &t) / den_c, dot(&self.forward[2], &t) / den_r))
    }

    /// Normalized inverse evaluation: `(x, y)` from normalized `(col, row, h)`.
    pub fn inverse_normalized(&self, col: f64, row: f64, h: f64) -> Result<(f64, f64)> {
        let t = cubic_terms(col, row, h);
        let den_x = dot(&self.inverse[1], &t);
        let den_y = dot(&self.inverse[3], &t);
        for den in [den_x, den_y] {
            if den.abs() < DENOMINATOR_EPS || !den.is_finite() {
                return Err(Error::DenominatorZero { value: den });
            }
        }
        Ok((dot(&self.inverse[0], &t) / den_x, dot(&self.inverse[2], &t) / den_y))
    }

    pub fn eval_forward(&self, g: &GroundPoint) -> Result<ImagePoint> {
        let x = self.norm.x.normalize(g.x)?;
        let y = self.norm.y.normalize(g.y)?;
        let h = self.norm.h.normalize(g.h)?;
        let (c, r) = self.forward_normalized(x, y, h)?;
        Ok(ImagePoint::new(
            self.norm.row.denormalize(r),
            self.norm.col.denormalize(c),
        ))
    }

    pub fn eval_inverse(&self, p: &ImagePoint, h: f64) -> Result<GroundPoint> {
        let c = self.norm.col.normalize(p.col)?;
        let r = self.norm.row.normalize(p.row)?;
        let hn = self.norm.h.normalize(h)?;
        let (x, y) = self.inverse_normalized(c, r, hn)?;
        Ok(GroundPoint::new(
            self.norm.x.denormalize(x),
            self.norm.y.denormalize(y),
            h,
        ))
    }

    /// Copy whose image coordinates are displaced by `(d_row, d_col)` pixels.
    /// Forward outputs move by the shift, inverse inputs expect it.
    pub fn shifted(&self, d_row: f64, d_col: f64) -> Self {
        let mut out = self.clone();
        out.norm.row.offset += d_row;
        out.norm.col.offset += d_col;
        out
    }

    /// Smallest `|P2|`, `|P4|` over an `n³` lattice of the normalized cube.
    pub fn min_forward_denominator(&self, n: usize) -> f64 {
        let mut best = f64::INFINITY;
        let step = 2.0 / (n.max(2) - 1) as f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let t = cubic_terms(-1.0 + i as f64 * step, -1.0 + j as f64 * step, -1.0 + k as f64 * step);
                    best = best
                        .min(dot(&self.forward[1], &t).abs())
                        .min(dot(&self.forward[3], &t).abs());
                }
            }
        }
        best
    }
}

impl SensorModel for RationalPolynomialModel {
    fn project(&self, g: &GroundPoint) -> Result<ImagePoint> {
        self.eval_forward(g)
    }

    fn backproject(&self, p: &ImagePoint, h: f64) -> Result<GroundPoint> {
        self.eval_inverse(p, h)
    }
}

/// Ground box `[x_min, x_max] x [y_min, y_max] x [h_min, h_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl GroundExtent {
    pub fn translated(&self, dx: f64, dy: f64, dh: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            y_min: self.y_min + dy,
            y_max: self.y_max + dy,
            h_min: self.h_min + dh,
            h_max: self.h_max + dh,
        }
    }
}

/// Virtual control points on `n_planes` height planes, `nx * ny` per plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgcpGrid {
    pub nx: usize,
    pub ny: usize,
    pub n_planes: usize,
    pub extent: GroundExtent,
}

fn lattice(lo: f64, hi: f64, n: usize, half_offset: bool) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    if half_offset {
        (0..n - 1).map(|i| lo + (i as f64 + 0.5) * step).collect()
    } else {
        (0..n).map(|i| lo + i as f64 * step).collect()
    }
}

impl VgcpGrid {
    pub fn new(nx: usize, ny: usize, n_planes: usize, extent: GroundExtent) -> Result<Self> {
        let grid = Self {
            nx,
            ny,
            n_planes,
            extent,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 || self.n_planes < 3 {
            return Err(Error::invalid("VGCP grid needs nx, ny >= 4 and n_planes >= 3"));
        }
        if self.nx * self.ny * self.n_planes < NUM_UNKNOWNS {
            return Err(Error::invalid("VGCP grid has fewer points than unknowns"));
        }
        let e = &self.extent;
        if !(e.x_max > e.x_min && e.y_max > e.y_min && e.h_max > e.h_min) {
            return Err(Error::invalid("VGCP extent must be a non-empty box"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.n_planes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cube(&self, half_offset: bool) -> Vec<GroundPoint> {
        let e = &self.extent;
        let xs = lattice(e.x_min, e.x_max, self.nx, half_offset);
        let ys = lattice(e.y_min, e.y_max, self.ny, half_offset);
        let hs = lattice(e.h_min, e.h_max, self.n_planes, half_offset);
        let mut out = Vec::with_capacity(xs.len() * ys.len() * hs.len());
        for &h in &hs {
            for &y in &ys {
                for &x in &xs {
                    out.push(GroundPoint::new(x, y, h));
                }
            }
        }
        out
    }

    /// The fitting points.
    pub fn points(&self) -> Vec<GroundPoint> {
        self.cube(false)
    }

    /// Independent checkpoints: the cube shifted by half a cell in every
    /// direction, so no checkpoint coincides with a fitting point.
    pub fn checkpoints(&self) -> Vec<GroundPoint> {
        self.cube(true)
    }
}

/// Standard deviations of RPC-minus-rigorous residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FitReport {
    /// Row residual STD over the fitting points (pixels).
    pub std_row: f64,
    pub std_col: f64,
    /// Row residual STD over the independent checkpoints (pixels).
    pub chk_std_row: f64,
    pub chk_std_col: f64,
    /// Largest condition estimate of the regularized normal systems.
    pub condition_estimate: f64,
    /// Inverse-function residual STD over the inverse checkpoints (meters).
    pub inv_chk_std_x: f64,
    pub inv_chk_std_y: f64,
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Result of one linearized rational fit.
struct RationalFit {
    numerator: [f64; NUM_TERMS],
    denominator: [f64; NUM_TERMS],
    condition: f64,
}

/// Fits `target ≈ N(terms) / D(terms)` with `D[0] = 1`.
///
/// Linearized as `N·t − target (D'·t') = target`, reweighted by the current
/// denominator, with column equilibration and a ridge on the equilibrated
/// coefficients.
fn fit_rational(terms: &[[f64; NUM_TERMS]], target: &[f64], ridge: f64) -> Result<RationalFit> {
    let n = terms.len();
    let mut weights = vec![1.0; n];
    let mut fit = None;
    for _ in 0..REWEIGHT_ITERATIONS {
        let mut a = DMatrix::<f64>::zeros(n, NUM_UNKNOWNS);
        let mut b = DVector::<f64>::zeros(n);
        for i in 0..n {
            let w = weights[i];
            for j in 0..NUM_TERMS {
                a[(i, j)] = w * terms[i][j];
            }
            for j in 1..NUM_TERMS {
                a[(i, NUM_TERMS + j - 1)] = -w * target[i] * terms[i][j];
            }
            b[i] = w * target[i];
        }
        let col_norms: Vec<f64> = (0..NUM_UNKNOWNS)
            .map(|j| {
                let nrm = a.column(j).norm();
                if nrm > 0.0 {
                    nrm
                } else {
                    1.0
                }
            })
            .collect();
        for (j, s) in col_norms.iter().enumerate() {
            a.column_mut(j).scale_mut(1.0 / s);
        }
        let mut normal = a.transpose() * &a;
        for j in 0..NUM_UNKNOWNS {
            normal[(j, j)] += ridge;
        }
        let rhs = a.transpose() * &b;
        let eig = normal.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if ridge == 0.0 && !(condition < 1.0 / f64::EPSILON) {
            return Err(Error::IllConditioned { condition });
        }
        let chol = normal.cholesky().ok_or(Error::IllConditioned { condition })?;
        let z = chol.solve(&rhs);
        let mut numerator = [0.0; NUM_TERMS];
        let mut denominator = [0.0; NUM_TERMS];
        denominator[0] = 1.0;
        for j in 0..NUM_TERMS {
            numerator[j] = z[j] / col_norms[j];
        }
        for j in 1..NUM_TERMS {
            denominator[j] = z[NUM_TERMS + j - 1] / col_norms[NUM_TERMS + j - 1];
        }
        for i in 0..n {
            let d = dot(&denominator, &terms[i]);
            weights[i] = if d.abs() > DENOMINATOR_EPS { 1.0 / d } else { 1.0 };
        }
        fit = Some(RationalFit {
            numerator,
            denominator,
            condition,
        });
    }
    Ok(fit.expect("at least one iteration"))
}

fn range_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn project_all<M: SensorModel>(model: &M, points: &[GroundPoint]) -> Vec<(GroundPoint, ImagePoint)> {
    points
        .par_iter()
        .filter_map(|g| model.project(g).ok().map(|p| (*g, p)))
        .collect()
}

fn backproject_all<M: SensorModel>(model: &M, points: &[(ImagePoint, f64)]) -> Vec<(ImagePoint, GroundPoint)> {
    points
        .par_iter()
        .filter_map(|(p, h)| model.backproject(p, *h).ok().map(|g| (*p, g)))
        .collect()
}

fn image_cube(
    rows: (f64, f64),
    cols: (f64, f64),
    heights: (f64, f64),
    grid: &VgcpGrid,
    half_offset: bool,
) -> Vec<(ImagePoint, f64)> {
    let rs = lattice(rows.0, rows.1, grid.ny, half_offset);
    let cs = lattice(cols.0, cols.1, grid.nx, half_offset);
    let hs = lattice(heights.0, heights.1, grid.n_planes, half_offset);
    let mut out = Vec::with_capacity(rs.len() * cs.len() * hs.len());
    for &h in &hs {
        for &r in &rs {
            for &c in &cs {
                out.push((ImagePoint::new(r, c), h));
            }
        }
    }
    out
}

/// Forward residuals (row, col) of `rpc` against pre-projected pairs.
fn forward_residuals(
    rpc: &RationalPolynomialModel,
    pairs: &[(GroundPoint, ImagePoint)],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut dr = Vec::with_capacity(pairs.len());
    let mut dc = Vec::with_capacity(pairs.len());
    for (g, p) in pairs {
        let q = rpc.eval_forward(g)?;
        dr.push(q.row - p.row);
        dc.push(q.col - p.col);
    }
    Ok((dr, dc))
}

/// Terrain-independent RPC fit of `model` over `grid`.
///
/// Forward functions are fitted to the ground cube projected through the
/// model, inverse functions to an image cube (spanning the projected
/// footprint) back-projected at the grid heights. The report is computed
/// on half-cell-offset checkpoint cubes that never enter the fit.
pub fn fit_rpc<M: SensorModel>(model: &M, grid: &VgcpGrid, ridge: f64) -> Result<(RationalPolynomialModel, FitReport)> {
    grid.validate()?;
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::invalid("ridge must be a finite non-negative number"));
    }
    let e = grid.extent;
    let fit_pairs = project_all(model, &grid.points());
    if fit_pairs.len() < NUM_UNKNOWNS {
        return Err(Error::invalid(format!(
            "only {} of {} VGCPs project into the image",
            fit_pairs.len(),
            grid.len()
        )));
    }
    let rows = range_of(fit_pairs.iter().map(|(_, p)| p.row));
    let cols = range_of(fit_pairs.iter().map(|(_, p)| p.col));
    let norm = RpcNormalization {
        row: NormalizationParams::from_range(rows.0, rows.1)?,
        col: NormalizationParams::from_range(cols.0, cols.1)?,
        x: NormalizationParams::from_range(e.x_min, e.x_max)?,
        y: NormalizationParams::from_range(e.y_min, e.y_max)?,
        h: NormalizationParams::from_range(e.h_min, e.h_max)?,
    };

    // Forward: ground -> image.
    let mut terms = Vec::with_capacity(fit_pairs.len());
    let mut tc = Vec::with_capacity(fit_pairs.len());
    let mut tr = Vec::with_capacity(fit_pairs.len());
    for (g, p) in &fit_pairs {
        terms.push(cubic_terms(
            norm.x.normalize(g.x)?,
            norm.y.normalize(g.y)?,
            norm.h.normalize(g.h)?,
        ));
        tc.push(norm.col.normalize(p.col)?);
        tr.push(norm.row.normalize(p.row)?);
    }
    let col_fit = fit_rational(&terms, &tc, ridge)?;
    let row_fit = fit_rational(&terms, &tr, ridge)?;

    // Inverse: image -> ground, same normalization.
    let inv_pairs = backproject_all(model, &image_cube(rows, cols, (e.h_min, e.h_max), grid, false));
    if inv_pairs.len() < NUM_UNKNOWNS {
        return Err(Error::invalid("too few image-cube points back-project onto the ground"));
    }
    let mut iterms = Vec::with_capacity(inv_pairs.len());
    let mut tx = Vec::with_capacity(inv_pairs.len());
    let mut ty = Vec::with_capacity(inv_pairs.len());
    for (p, g) in &inv_pairs {
        iterms.push(cubic_terms(
            norm.col.normalize(p.col)?,
            norm.row.normalize(p.row)?,
            norm.h.normalize(g.h)?,
        ));
        tx.push(norm.x.normalize(g.x)?);
        ty.push(norm.y.normalize(g.y)?);
    }
    let x_fit = fit_rational(&iterms, &tx, ridge)?;
    let y_fit = fit_rational(&iterms, &ty, ridge)?;

    let rpc = RationalPolynomialModel {
        norm,
        forward: [
            col_fit.numerator,
            col_fit.denominator,
            row_fit.numerator,
            row_fit.denominator,
        ],
        inverse: [x_fit.numerator, x_fit.denominator, y_fit.numerator, y_fit.denominator],
        order: default_order(),
    };

    let (fr, fc) = forward_residuals(&rpc, &fit_pairs)?;
    let chk_pairs = project_all(model, &grid.checkpoints());
    let (cr, cc) = forward_residuals(&rpc, &chk_pairs)?;
    let inv_chk = backproject_all(model, &image_cube(rows, cols, (e.h_min, e.h_max), grid, true));
    let mut ix = Vec::with_capacity(inv_chk.len());
    let mut iy = Vec::with_capacity(inv_chk.len());
    for (p, g) in &inv_chk {
        let q = rpc.eval_inverse(p, g.h)?;
        ix.push(q.x - g.x);
        iy.push(q.y - g.y);
    }
    let report = FitReport {
        std_row: std_dev(&fr),
        std_col: std_dev(&fc),
        chk_std_row: std_dev(&cr),
        chk_std_col: std_dev(&cc),
        condition_estimate: [col_fit.condition, row_fit.condition, x_fit.condition, y_fit.condition]
            .into_iter()
            .fold(0.0, f64::max),
        inv_chk_std_x: std_dev(&ix),
        inv_chk_std_y: std_dev(&iy),
    };
    Ok((rpc, report))
}

/// Forward residual statistics of `rpc` against `model` over `checkpoints`.
///
/// Both the `std_*` and `chk_std_*` pairs hold the statistics over the
/// supplied points; checkpoints the model cannot project are skipped.
pub fn validate_rpc<M: SensorModel>(
    rpc: &RationalPolynomialModel,
    model: &M,
    checkpoints: &[GroundPoint],
) -> Result<FitReport> {
    let pairs = project_all(model, checkpoints);
    let (dr, dc) = forward_residuals(rpc, &pairs)?;
    let (sr, sc) = (std_dev(&dr), std_dev(&dc));
    Ok(FitReport {
        std_row: sr,
        std_col: sc,
        chk_std_row: sr,
        chk_std_col: sc,
        ..FitReport::default()
    })
}
