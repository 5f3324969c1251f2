//! Affine bias adjustment of the optical RPCs against the SAR geometry.
//!
//! Each tie point's SAR pixel is carried to the ground at a constant height
//! through the SAR inverse and projected into the optical image with the
//! optical forward function. The difference to the measured optical pixel
//! is modeled as `d_col = m0 + m1 col + m2 row`, `d_row = n0 + n1 col + n2 row`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GroundPoint, ImagePoint, SensorModel};

/// Default rejection threshold on tie residual norms (pixels).
pub const DEFAULT_REJECT_THRESH: f64 = 2.0;
/// Slopes at or above this make the biased model's inverse unreliable.
pub const MAX_SLOPE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiePoint {
    pub id: String,
    pub sar: ImagePoint,
    pub opt: ImagePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineBias {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
}

impl AffineBias {
    pub fn shift(d_col: f64, d_row: f64) -> Self {
        Self {
            m0: d_col,
            n0: d_row,
            ..Self::default()
        }
    }

    /// `(d_col, d_row)` at the pixel `(col, row)`.
    pub fn delta(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.m0 + self.m1 * col + self.m2 * row,
            self.n0 + self.n1 * col + self.n2 * row,
        )
    }

    pub fn max_slope(&self) -> f64 {
        [self.m1, self.m2, self.n1, self.n2]
            .into_iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        [self.m0, self.m1, self.m2, self.n0, self.n1, self.n2]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieResidual {
    pub id: String,
    pub d_col: f64,
    pub d_row: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentReport {
    pub bias: AffineBias,
    pub residuals: Vec<TieResidual>,
    /// A posteriori standard deviation of one coordinate observation.
    pub std: f64,
    /// Median absolute deviation of the residual norms.
    pub mad: f64,
    pub min: f64,
    pub max: f64,
    pub n_used: usize,
    pub n_rejected: usize,
    pub rejected_ids: Vec<String>,
}

/// Un-normalized optical pixel predicted for each tie from its SAR pixel.
fn predict<S: SensorModel, O: SensorModel>(
    sar: &S,
    opt: &O,
    ties: &[TiePoint],
    h_mean: f64,
) -> Result<Vec<ImagePoint>> {
    ties.iter()
        .map(|t| opt.project(&sar.backproject(&t.sar, h_mean)?))
        .collect()
}

fn fit(ties: &[&TiePoint], pred: &[&ImagePoint], shift_only: bool) -> Result<AffineBias> {
    let n = ties.len();
    if shift_only {
        let (mut sc, mut sr) = (0.0, 0.0);
        for (t, p) in ties.iter().zip(pred) {
            sc += t.opt.col - p.col;
            sr += t.opt.row - p.row;
        }
        return Ok(AffineBias::shift(sc / n as f64, sr / n as f64));
    }
    if n < 3 {
        return Err(Error::RankDeficient);
    }
    // Center the regressors for conditioning; the shift is restored below.
    let mc = ties.iter().map(|t| t.opt.col).sum::<f64>() / n as f64;
    let mr = ties.iter().map(|t| t.opt.row).sum::<f64>() / n as f64;
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => ties[i].opt.col - mc,
        _ => ties[i].opt.row - mr,
    });
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-9 * smax) {
        return Err(Error::RankDeficient);
    }
    let bc = DVector::from_fn(n, |i, _| ties[i].opt.col - pred[i].col);
    let br = DVector::from_fn(n, |i, _| ties[i].opt.row - pred[i].row);
    let xc = svd.solve(&bc, 0.0).map_err(|_| Error::RankDeficient)?;
    let xr = svd.solve(&br, 0.0).map_err(|_| Error::RankDeficient)?;
    Ok(AffineBias {
        m0: xc[0] - xc[1] * mc - xc[2] * mr,
        m1: xc[1],
        m2: xc[2],
        n0: xr[0] - xr[1] * mc - xr[2] * mr,
        n1: xr[1],
        n2: xr[2],
    })
}

fn residual_of(t: &TiePoint, p: &ImagePoint, bias: &AffineBias) -> TieResidual {
    let (dc, dr) = bias.delta(t.opt.col, t.opt.row);
    let d_col = p.col + dc - t.opt.col;
    let d_row = p.row + dr - t.opt.row;
    TieResidual {
        id: t.id.clone(),
        d_col,
        d_row,
        norm: d_col.hypot(d_row),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Estimates the optical bias from tie points.
///
/// The worst tie is dropped and the bias re-estimated while any residual
/// norm exceeds `reject_thresh`.
pub fn solve_bias<S: SensorModel, O: SensorModel>(
    sar_rpc: &S,
    opt_rpc: &O,
    ties: &[TiePoint],
    h_mean: f64,
    shift_only: bool,
    reject_thresh: f64,
) -> Result<AdjustmentReport> {
    if ties.is_empty() {
        return Err(Error::invalid("at least one tie point is required"));
    }
    if !shift_only && ties.len() < 3 {
        return Err(Error::RankDeficient);
    }
    if !(reject_thresh > 0.0) {
        return Err(Error::invalid("reject_thresh must be positive"));
    }
    if ties.iter().any(|t| !t.sar.is_finite() || !t.opt.is_finite()) {
        return Err(Error::invalid("tie point coordinates must be finite"));
    }
    let pred = predict(sar_rpc, opt_rpc, ties, h_mean)?;
    let mut active: Vec<usize> = (0..ties.len()).collect();
    let mut rejected = Vec::new();
    loop {
        if active.is_empty() || (!shift_only && active.len() < 3) {
            return Err(Error::AdjustmentDiverged(format!(
                "{} of {} tie points rejected",
                rejected.len(),
                ties.len()
            )));
        }
        let sel_t: Vec<&TiePoint> = active.iter().map(|&i| &ties[i]).collect();
        let sel_p: Vec<&ImagePoint> = active.iter().map(|&i| &pred[i]).collect();
        let bias = fit(&sel_t, &sel_p, shift_only)?;
        if !bias.is_finite() {
            return Err(Error::AdjustmentDiverged("non-finite bias estimate".into()));
        }
        let residuals: Vec<TieResidual> = sel_t
            .iter()
            .zip(&sel_p)
            .map(|(t, p)| residual_of(t, p, &bias))
            .collect();
        let (worst, worst_norm) =
            residuals.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |(wi, wn), (i, r)| {
                    if r.norm > wn {
                        (i, r.norm)
                    } else {
                        (wi, wn)
                    }
                },
            );
        if worst_norm > reject_thresh {
            rejected.push(ties[active[worst]].id.clone());
            active.remove(worst);
            continue;
        }
        let n = residuals.len();
        let unknowns = if shift_only { 2 } else { 6 };
        let dof = (2 * n).saturating_sub(unknowns);
        let ss: f64 = residuals.iter().map(|r| r.norm * r.norm).sum();
        let std = if dof > 0 {
            (ss / dof as f64).sqrt()
        } else {
            (ss / (2 * n) as f64).sqrt()
        };
        let mut norms: Vec<f64> = residuals.iter().map(|r| r.norm).collect();
        let med = median(&mut norms);
        let mut dev: Vec<f64> = norms.iter().map(|v| (v - med).abs()).collect();
        let mad = median(&mut dev);
        return Ok(AdjustmentReport {
            bias,
            std,
            mad,
            min: norms[0],
            max: norms[n - 1],
            n_used: n,
            n_rejected: rejected.len(),
            rejected_ids: rejected,
            residuals,
        });
    }
}

/// Optical model with an affine image-space bias added to its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasedModel<M> {
    pub model: M,
    pub bias: AffineBias,
}

/// Wraps `model` so its projections include `bias`.
pub fn apply_bias<M: SensorModel>(model: M, bias: AffineBias) -> Result<BiasedModel<M>> {
    if !bias.is_finite() {
        return Err(Error::invalid("bias must be finite"));
    }
    let slope = bias.max_slope();
    if slope >= MAX_SLOPE {
        return Err(Error::BiasTooLarge { slope });
    }
    Ok(BiasedModel { model, bias })
}

impl<M: SensorModel> BiasedModel<M> {
    /// Raw model pixel whose biased position is `p`.
    ///
    /// The bias is affine, so the inversion is an exact 2x2 solve.
    pub fn unbias(&self, p: &ImagePoint) -> ImagePoint {
        let b = &self.bias;
        let m = Matrix2::new(1.0 + b.m1, b.m2, b.n1, 1.0 + b.n2);
        let rhs = Vector2::new(p.col - b.m0, p.row - b.n0);
        // Slopes below 0.5 keep the matrix diagonally dominant.
        let x = m.lu().solve(&rhs).unwrap_or(rhs);
        ImagePoint::new(x[1], x[0])
    }
}

impl<M: SensorModel> SensorModel for BiasedModel<M> {
    fn project(&self, g: &GroundPoint) -> Result<ImagePoint> {
        let p = self.model.project(g)?;
        let (dc, dr) = self.bias.delta(p.col, p.row);
        Ok(ImagePoint::new(p.row + dr, p.col + dc))
    }

    fn backproject(&self, p: &ImagePoint, h: f64) -> Result<GroundPoint> {
        self.model.backproject(&self.unbias(p), h)
    }
}

/// Optical pixel, measured SAR pixel and reference height of one check point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub id: String,
    pub opt: ImagePoint,
    pub sar_measured: ImagePoint,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub mean: f64,
    pub max: f64,
    pub rmse: f64,
    pub n: usize,
}

/// Transfers each control's optical pixel to the SAR image at its known
/// height and compares with the measured SAR pixel.
pub fn verify_adjustment<S: SensorModel, O: SensorModel>(
    sar_rpc: &S,
    opt_model: &O,
    controls: &[ControlPoint],
) -> Result<VerificationReport> {
    if controls.is_empty() {
        return Err(Error::invalid("no control points"));
    }
    let mut norms = Vec::with_capacity(controls.len());
    for c in controls {
        let p = sar_rpc.project(&opt_model.backproject(&c.opt, c.h)?)?;
        norms.push((p.col - c.sar_measured.col).hypot(p.row - c.sar_measured.row));
    }
    let n = norms.len() as f64;
    Ok(VerificationReport {
        mean: norms.iter().sum::<f64>() / n,
        max: norms.iter().copied().fold(0.0, f64::max),
        rmse: (norms.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        n: norms.len(),
    })
}

/// CSV row of a tie point file: `id,sar_row,sar_col,opt_row,opt_col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieRecord {
    pub id: String,
    pub sar_row: f64,
    pub sar_col: f64,
    pub opt_row: f64,
    pub opt_col: f64,
}

impl From<&TiePoint> for TieRecord {
    fn from(t: &TiePoint) -> Self {
        Self {
            id: t.id.clone(),
            sar_row: t.sar.row,
            sar_col: t.sar.col,
            opt_row: t.opt.row,
            opt_col: t.opt.col,
        }
    }
}

impl From<TieRecord> for TiePoint {
    fn from(r: TieRecord) -> Self {
        Self {
            id: r.id,
            sar: ImagePoint::new(r.sar_row, r.sar_col),
            opt: ImagePoint::new(r.opt_row, r.opt_col),
        }
    }
}

/// CSV row of a control point file: the tie columns plus `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub id: String,
    pub sar_row: f64,
    pub sar_col: f64,
    pub opt_row: f64,
    pub opt_col: f64,
    pub h: f64,
}

impl From<&ControlPoint> for ControlRecord {
    fn from(c: &ControlPoint) -> Self {
        Self {
            id: c.id.clone(),
            sar_row: c.sar_measured.row,
            sar_col: c.sar_measured.col,
            opt_row: c.opt.row,
            opt_col: c.opt.col,
            h: c.h,
        }
    }
}

impl From<ControlRecord> for ControlPoint {
    fn from(r: ControlRecord) -> Self {
        Self {
            id: r.id,
            sar_measured: ImagePoint::new(r.sar_row, r.sar_col),
            opt: ImagePoint::new(r.opt_row, r.opt_col),
            h: r.h,
        }
    }
}
