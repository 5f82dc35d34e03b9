//! Principal lines: the image-plane symmetry axis of a tilted planar board.
//!
//! Under a square-pixel, zero-skew pinhole the plane spanned by the optical
//! axis and the board normal cuts the image in a line through the principal
//! point. Two facts make it computable from a homography alone:
//!
//! * the image-plane component of the board normal is proportional to the
//!   first two entries of `h_a × h_b` (the columns of H), which gives the
//!   line's direction;
//! * the vanishing point of the board direction of steepest depth change,
//!   `H · (h7, h8, 0)ᵀ`, lies on the line.
//!
//! Intersecting the lines of several views recovers the principal point.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geometry::{Homography, Line2, Point2};

/// Relative threshold on the perspective row of H and on the line direction.
const PERSPECTIVE_EPS: f64 = 1e-10;
/// Normal-matrix condition number above which a line bundle is treated as parallel.
pub const MAX_CONDITION: f64 = 1e8;
/// Default leave-one-out outlier distance.
pub const DEFAULT_OUTLIER_PX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalLine {
    pub line: Line2,
    pub source_view: Option<String>,
    /// Vanishing point of the board's steepest-descent direction; on the line.
    pub anchor: Point2,
    /// Unit direction along the line.
    pub direction: [f64; 2],
}

impl PrincipalLine {
    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_view = Some(id.into());
        self
    }
}

/// Closed-form principal line of one view.
pub fn principal_line(h: &Homography) -> Result<PrincipalLine> {
    let e = h.entries();
    let (h7, h8) = (e[6], e[7]);
    let ha = h.col_a();
    let hb = h.col_b();
    let col_scale = ha.norm_squared() + hb.norm_squared();
    let persp = h7 * h7 + h8 * h8;
    if !(persp > PERSPECTIVE_EPS * col_scale) {
        return Err(Error::DegenerateView);
    }

    let w = ha.cross(&hb);
    let (w1, w2) = (w.x, w.y);
    let dir_sq = w1 * w1 + w2 * w2;
    if !(dir_sq > PERSPECTIVE_EPS * persp * col_scale) {
        return Err(Error::AmbiguousDirection);
    }

    // v_d = H (h7, h8, 0)^T; its third coordinate is h7² + h8² > 0.
    let vx = e[0] * h7 + e[1] * h8;
    let vy = e[3] * h7 + e[4] * h8;
    let vw = persp;
    let anchor = Point2::new(vx / vw, vy / vw);

    let line = Line2::through(anchor, w1, w2)
        .ok_or(Error::AmbiguousDirection)?
        .canonical();
    let n = dir_sq.sqrt();
    Ok(PrincipalLine {
        line,
        source_view: None,
        anchor,
        direction: [w1 / n, w2 / n],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PPEstimate {
    pub pp: Point2,
    pub rms_residual: f64,
    /// Signed distance of each input line to `pp`.
    pub per_line_residual: Vec<f64>,
    pub condition: f64,
}

/// Least-squares intersection of unit-normal lines.
pub fn estimate_pp(lines: &[PrincipalLine]) -> Result<PPEstimate> {
    estimate_pp_with(lines, MAX_CONDITION)
}

/// [`estimate_pp`] with a custom limit on the normal-matrix condition number.
pub fn estimate_pp_with(lines: &[PrincipalLine], max_condition: f64) -> Result<PPEstimate> {
    estimate_pp_from(lines.iter().map(|l| &l.line), max_condition)
}

pub(crate) fn estimate_pp_from<'a>(
    lines: impl Iterator<Item = &'a Line2> + Clone,
    max_condition: f64,
) -> Result<PPEstimate> {
    let n = lines.clone().count();
    if n < 2 {
        return Err(Error::TooFewLines { needed: 2, got: n });
    }
    let mut normal = Matrix2::<f64>::zeros();
    let mut rhs = Vector2::<f64>::zeros();
    for l in lines.clone() {
        let nv = Vector2::new(l.a(), l.b());
        normal += nv * nv.transpose();
        rhs -= nv * l.c();
    }
    let eig = normal.symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < max_condition) {
        return Err(Error::ParallelLines(condition));
    }
    let sol = normal.try_inverse().ok_or(Error::ParallelLines(condition))? * rhs;
    let pp = Point2::new(sol.x, sol.y);
    let per_line_residual: Vec<f64> = lines.map(|l| l.signed_distance(pp)).collect();
    let rms_residual = (per_line_residual.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    Ok(PPEstimate {
        pp,
        rms_residual,
        per_line_residual,
        condition,
    })
}

/// Result of leave-one-out screening, as indices into the input.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Screening {
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
}

impl Screening {
    pub fn split<'a, T>(&self, items: &'a [T]) -> (Vec<&'a T>, Vec<&'a T>) {
        (
            self.inliers.iter().map(|&i| &items[i]).collect(),
            self.outliers.iter().map(|&i| &items[i]).collect(),
        )
    }
}

/// Iterative leave-one-out screening. Each round estimates the PP without
/// each remaining line and removes the single line farthest from its own
/// leave-one-out PP if that distance exceeds `threshold_px`. A removal is
/// kept only if it does not raise the inlier RMS residual.
pub fn flag_outlier_lines(lines: &[PrincipalLine], threshold_px: f64) -> Result<Screening> {
    flag_outlier_lines_with(lines, threshold_px, MAX_CONDITION)
}

pub fn flag_outlier_lines_with(lines: &[PrincipalLine], threshold_px: f64, max_condition: f64) -> Result<Screening> {
    let n = lines.len();
    if n < 4 {
        return Err(Error::TooFewLines { needed: 4, got: n });
    }
    let mut inliers: Vec<usize> = (0..n).collect();
    let mut outliers = Vec::new();
    let mut current_rms = estimate_pp_with(lines, max_condition)?.rms_residual;

    loop {
        if inliers.len() < 4 {
            break;
        }
        let mut worst: Option<(usize, f64)> = None;
        for (pos, &i) in inliers.iter().enumerate() {
            let rest = inliers.iter().filter(|&&j| j != i).map(|&j| &lines[j].line);
            let Ok(est) = estimate_pp_from(rest, max_condition) else {
                continue;
            };
            let d = lines[i].line.signed_distance(est.pp).abs();
            if d > threshold_px && worst.is_none_or(|(_, wd)| d > wd) {
                worst = Some((pos, d));
            }
        }
        let Some((pos, _)) = worst else { break };
        if outliers.len() + 1 > n - 3 {
            return Err(Error::AllFlagged {
                flagged: outliers.len() + 1,
                total: n,
            });
        }
        let mut trial = inliers.clone();
        let removed = trial.remove(pos);
        let rms = match estimate_pp_from(trial.iter().map(|&j| &lines[j].line), max_condition) {
            Ok(est) => est.rms_residual,
            Err(_) => break,
        };
        if rms > current_rms {
            break;
        }
        current_rms = rms;
        inliers = trial;
        outliers.push(removed);
    }
    outliers.sort_unstable();
    Ok(Screening { inliers, outliers })
}
