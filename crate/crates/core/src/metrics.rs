//! Evaluation metrics over masked raster pairs.
//!
//! Pixels enter a comparison only where both rasters are valid, an optional
//! vegetation mask admits them, and — for height-like rasters — the ground
//! truth sits strictly below the saturation cap. Two height-specific
//! metrics ride along: a normalized MAE restricted to pixels with
//! appreciable ground-truth height, and an intersection-over-union of the
//! thresholded tree-cover masks.

use crate::error::{CoreError, Result};
use crate::grid::Grid2D;

/// Masking and thresholding policy for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMaskSpec {
    /// Strict lower bound on ground truth for the normalized MAE support.
    pub min_gt: f64,
    /// Strict upper bound on ground truth for height-like rasters
    /// (saturated pixels carry no signal).
    pub max_gt: f64,
    /// Strict threshold defining tree cover.
    pub iou_threshold: f64,
    /// Fixed peak for the peak signal-to-noise ratio; when absent, the
    /// masked ground-truth range (max - min) is used.
    pub psnr_peak: Option<f64>,
    /// Optional row-major vegetation mask, same shape as the rasters.
    pub veg_mask: Option<Vec<bool>>,
}

impl Default for EvalMaskSpec {
    fn default() -> EvalMaskSpec {
        EvalMaskSpec {
            min_gt: 2.0,
            max_gt: 60.0,
            iou_threshold: 2.0,
            psnr_peak: None,
            veg_mask: None,
        }
    }
}

/// Mean absolute and squared errors plus mean signed error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    pub bias: f64,
}

/// Metrics for one (prediction, ground truth) pair. The height-only fields
/// are `None` for other tasks, and the normalized MAE is also `None` when no
/// pixel clears its support threshold.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub n_pixels: usize,
    pub mae: f64,
    pub rmse: f64,
    pub bias: f64,
    pub r2: f64,
    pub psnr_db: f64,
    pub nmae_pct: Option<f64>,
    pub tree_cover_iou: Option<f64>,
}

/// Pixels that participate in an evaluation: jointly valid, admitted by the
/// vegetation mask if one is given, and — for height-like rasters —
/// strictly below the ground-truth cap.
pub fn evaluation_mask(
    pred: &Grid2D,
    gt: &Grid2D,
    spec: &EvalMaskSpec,
    height_like: bool,
) -> Result<Vec<bool>> {
    if pred.shape() != gt.shape() {
        return Err(CoreError::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let n = pred.values().len();
    if let Some(veg) = &spec.veg_mask {
        if veg.len() != n {
            return Err(CoreError::ShapeMismatch(format!(
                "vegetation mask has {} pixels, rasters have {n}",
                veg.len()
            )));
        }
    }
    let mut mask = vec![false; n];
    for i in 0..n {
        let mut ok = pred.valid()[i] && gt.valid()[i];
        if let Some(veg) = &spec.veg_mask {
            ok = ok && veg[i];
        }
        if height_like {
            ok = ok && (gt.values()[i] as f64) < spec.max_gt;
        }
        mask[i] = ok;
    }
    Ok(mask)
}

/// MAE, RMSE, and bias (mean of `pred - gt`) over paired values.
pub fn error_stats(pred: &[f64], gt: &[f64]) -> Result<ErrorStats> {
    if pred.len() != gt.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "error stats over mismatched lengths {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(CoreError::EmptySupport("error stats over zero pixels".into()));
    }
    let n = pred.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut signed_sum = 0.0;
    for (&p, &g) in pred.iter().zip(gt) {
        let e = p - g;
        abs_sum += e.abs();
        sq_sum += e * e;
        signed_sum += e;
    }
    Ok(ErrorStats { mae: abs_sum / n, rmse: (sq_sum / n).sqrt(), bias: signed_sum / n })
}

/// MAE normalized by ground truth, in percent, over pixels with
/// `gt > min_gt` (strict). Errors if no pixel qualifies.
pub fn nmae_pct(pred: &[f64], gt: &[f64], min_gt: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "normalized MAE over mismatched lengths {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&p, &g) in pred.iter().zip(gt) {
        if g > min_gt {
            sum += (p - g).abs() / g;
            n += 1;
        }
    }
    if n == 0 {
        return Err(CoreError::EmptySupport(format!(
            "no pixel has ground truth above {min_gt}"
        )));
    }
    Ok(sum / n as f64 * 100.0)
}

/// Coefficient of determination. Errors when the ground truth is constant
/// (the total sum of squares vanishes and the ratio is undefined).
pub fn r2_score(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "r2 over mismatched lengths {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(CoreError::EmptySupport("r2 over zero pixels".into()));
    }
    let n = gt.len() as f64;
    let mean_gt = gt.iter().sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&p, &g) in pred.iter().zip(gt) {
        ss_res += (p - g) * (p - g);
        ss_tot += (g - mean_gt) * (g - mean_gt);
    }
    if ss_tot == 0.0 {
        return Err(CoreError::Degenerate(
            "r2 is undefined for constant ground truth".into(),
        ));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Peak signal-to-noise ratio in decibels from a mean squared error and a
/// positive peak value. A zero MSE yields positive infinity.
pub fn psnr_db(mse: f64, peak: f64) -> Result<f64> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(CoreError::Degenerate(format!(
            "peak {peak} must be positive and finite"
        )));
    }
    if mse < 0.0 {
        return Err(CoreError::InvalidArgument(format!("negative mse {mse}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Intersection over union of the `> threshold` cover masks. An empty union
/// (neither raster shows cover) counts as perfect agreement, 1.0.
pub fn tree_cover_iou(pred: &[f64], gt: &[f64], threshold: f64) -> f64 {
    debug_assert_eq!(pred.len(), gt.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &g) in pred.iter().zip(gt) {
        let pc = p > threshold;
        let gc = g > threshold;
        if pc && gc {
            inter += 1;
        }
        if pc || gc {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Evaluate one prediction against its ground truth. `height_like` enables
/// the cap exclusion and the two height-only metrics; for those, an empty
/// normalized-MAE support is reported as absent rather than as an error.
pub fn evaluate_task(
    pred: &Grid2D,
    gt: &Grid2D,
    spec: &EvalMaskSpec,
    height_like: bool,
) -> Result<MetricReport> {
    let mask = evaluation_mask(pred, gt, spec, height_like)?;
    let mut p = Vec::new();
    let mut g = Vec::new();
    for i in 0..mask.len() {
        if mask[i] {
            p.push(pred.values()[i] as f64);
            g.push(gt.values()[i] as f64);
        }
    }
    if p.is_empty() {
        return Err(CoreError::EmptySupport(
            "evaluation mask selects no pixels".into(),
        ));
    }

    let stats = error_stats(&p, &g)?;
    let r2 = r2_score(&p, &g)?;
    let peak = match spec.psnr_peak {
        Some(v) => v,
        None => {
            let mx = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mn = g.iter().cloned().fold(f64::INFINITY, f64::min);
            mx - mn
        }
    };
    let psnr = psnr_db(stats.rmse * stats.rmse, peak)?;

    let (nmae, iou) = if height_like {
        let nmae = match nmae_pct(&p, &g, spec.min_gt) {
            Ok(v) => Some(v),
            Err(CoreError::EmptySupport(_)) => None,
            Err(e) => return Err(e),
        };
        (nmae, Some(tree_cover_iou(&p, &g, spec.iou_threshold)))
    } else {
        (None, None)
    };

    Ok(MetricReport {
        n_pixels: p.len(),
        mae: stats.mae,
        rmse: stats.rmse,
        bias: stats.bias,
        r2,
        psnr_db: psnr,
        nmae_pct: nmae,
        tree_cover_iou: iou,
    })
}
