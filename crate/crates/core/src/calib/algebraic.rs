use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use super::{pose_views, CalibrationResult, CalibrationView, Intrinsics, MethodTag};
use crate::error::{Error, Result};
use crate::geometry::{Point2, SVD_MAX_ITER};

/// Relative singular-value gap below which the conic system is rank deficient.
const GAP_EPS: f64 = 1e-12;

/// How far the unconstrained conic solution is from the zero-skew,
/// unit-aspect model that the result reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroSkewDiagnostic {
    /// γ / f.
    pub skew: f64,
    /// α / β − 1.
    pub aspect: f64,
}

/// v_ij row of the image-of-absolute-conic constraint for columns i, j of H.
fn v_row(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 6] {
    let (a, b) = (h.column(i), h.column(j));
    [
        a[0] * b[0],
        a[0] * b[1] + a[1] * b[0],
        a[1] * b[1],
        a[2] * b[0] + a[0] * b[2],
        a[2] * b[1] + a[1] * b[2],
        a[2] * b[2],
    ]
}

/// Conic-based linear calibration (two constraints per view on
/// B = K⁻ᵀK⁻¹), reported under the zero-skew, unit-aspect model.
///
/// The six-unknown system needs three views in general position; with one or
/// two views (or repeated rotations) the rank test fails with
/// [`Error::DegenerateSystem`].
pub fn calibrate_algebraic(views: &[CalibrationView]) -> Result<CalibrationResult> {
    if views.is_empty() {
        return Err(Error::InsufficientViews { needed: 3, got: 0 });
    }

    // Isotropic image normalization shared by all views; K = N⁻¹ K_n.
    let (mut cx, mut cy, mut count) = (0.0, 0.0, 0usize);
    for c in views.iter().flat_map(|v| &v.correspondences) {
        cx += c.image.u;
        cy += c.image.v;
        count += 1;
    }
    cx /= count as f64;
    cy /= count as f64;
    let spread = views
        .iter()
        .flat_map(|v| &v.correspondences)
        .map(|c| (c.image.u - cx).hypot(c.image.v - cy))
        .sum::<f64>()
        / count as f64;
    let s = if spread > 0.0 { spread } else { 1.0 };
    let norm = Matrix3::new(1.0 / s, 0.0, -cx / s, 0.0, 1.0 / s, -cy / s, 0.0, 0.0, 1.0);

    let rows = (2 * views.len()).max(6);
    let mut a = DMatrix::<f64>::zeros(rows, 6);
    for (k, v) in views.iter().enumerate() {
        let h = norm * v.homography.matrix();
        let h = h / h.norm();
        let v12 = v_row(&h, 0, 1);
        let v11 = v_row(&h, 0, 0);
        let v22 = v_row(&h, 1, 1);
        let diff: Vec<f64> = v11.iter().zip(v22.iter()).map(|(p, q)| p - q).collect();
        for (r, row) in [v12.to_vec(), diff].into_iter().enumerate() {
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            let n = if n > 0.0 { n } else { 1.0 };
            for (c, x) in row.iter().enumerate() {
                a[(2 * k + r, c)] = x / n;
            }
        }
    }

    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSystem("non-finite conic constraint".into()));
    }
    let svd = a
        .try_svd(false, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::DegenerateSystem("SVD did not converge".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::DegenerateSystem("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s_max = svd.singular_values[order[0]];
    let s_gap = svd.singular_values[order[4]];
    if !(s_max > 0.0) || s_gap / s_max < GAP_EPS {
        return Err(Error::DegenerateSystem(format!(
            "conic system rank deficient (sigma5/sigma1 = {:.3e})",
            if s_max > 0.0 { s_gap / s_max } else { 0.0 }
        )));
    }
    let mut b: Vec<f64> = v_t.row(order[5]).iter().copied().collect();
    if b[0] < 0.0 {
        b.iter_mut().for_each(|x| *x = -*x);
    }
    let [b11, b12, b22, b13, b23, b33] = [b[0], b[1], b[2], b[3], b[4], b[5]];

    let den = b11 * b22 - b12 * b12;
    if !(den > 0.0) || !(b11 > 0.0) {
        return Err(Error::DegenerateSystem("conic is not positive definite".into()));
    }
    let v0 = (b12 * b13 - b11 * b23) / den;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    if !(lambda / b11 > 0.0) {
        return Err(Error::DegenerateSystem("negative conic scale".into()));
    }
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / den).sqrt();
    let gamma = -b12 * alpha * alpha * beta / lambda;
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;
    let fn_ = (alpha * beta).sqrt();
    if !fn_.is_finite() || !u0.is_finite() || !v0.is_finite() {
        return Err(Error::DegenerateSystem("non-finite intrinsics".into()));
    }
    let zero_skew = ZeroSkewDiagnostic {
        skew: gamma / fn_,
        aspect: alpha / beta - 1.0,
    };

    // Undo the normalization.
    let intrinsics = Intrinsics {
        f: fn_ * s,
        pp: Point2::new(u0 * s + cx, v0 * s + cy),
    };

    let (view_ids, per_view, rmse) = pose_views(&intrinsics, views.iter())?;
    Ok(CalibrationResult {
        method: MethodTag::Algebraic,
        intrinsics,
        view_ids,
        per_view,
        pp_estimate: None,
        focal_samples: vec![intrinsics.f],
        rmse,
        flags: Vec::new(),
        zero_skew: Some(zero_skew),
        refine: None,
    })
}
