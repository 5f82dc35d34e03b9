use std::collections::BTreeSet;

use super::{focal_from_homography, median, pose_views, CalibrationResult, CalibrationView, Intrinsics, MethodTag};
use crate::error::{Error, Result};
use crate::principal_line::{
    estimate_pp_with, flag_outlier_lines_with, PrincipalLine, DEFAULT_OUTLIER_PX, MAX_CONDITION,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricOptions {
    /// Leave-one-out distance above which a principal line is rejected (px).
    pub outlier_px: f64,
    /// Largest accepted condition number of the PP normal matrix.
    pub max_condition: f64,
}

impl Default for GeometricOptions {
    fn default() -> Self {
        Self {
            outlier_px: DEFAULT_OUTLIER_PX,
            max_condition: MAX_CONDITION,
        }
    }
}

pub fn calibrate_geometric(views: &[CalibrationView]) -> Result<CalibrationResult> {
    calibrate_geometric_with(views, &GeometricOptions::default())
}

/// Principal lines → screening → PP → per-view focal estimates → median f →
/// extrinsics.
pub fn calibrate_geometric_with(views: &[CalibrationView], opts: &GeometricOptions) -> Result<CalibrationResult> {
    let with_line: Vec<(usize, &PrincipalLine)> = views
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.principal_line.as_ref().map(|pl| (i, pl)))
        .collect();
    if with_line.len() < 2 {
        return Err(Error::InsufficientViews {
            needed: 2,
            got: with_line.len(),
        });
    }

    let lines: Vec<PrincipalLine> = with_line.iter().map(|(_, pl)| (*pl).clone()).collect();
    let accepted: Vec<usize> = if lines.len() >= 4 {
        let screening = flag_outlier_lines_with(&lines, opts.outlier_px, opts.max_condition)?;
        screening.inliers.iter().map(|&k| with_line[k].0).collect()
    } else {
        with_line.iter().map(|(i, _)| *i).collect()
    };
    let accepted_set: BTreeSet<usize> = accepted.iter().copied().collect();
    let flags: Vec<String> = views
        .iter()
        .enumerate()
        .filter(|(i, _)| !accepted_set.contains(i))
        .map(|(_, v)| v.id.clone())
        .collect();

    let inlier_lines: Vec<PrincipalLine> = accepted
        .iter()
        .map(|&i| views[i].principal_line.clone().expect("accepted views have lines"))
        .collect();
    let pp_estimate = estimate_pp_with(&inlier_lines, opts.max_condition)?;
    let pp = pp_estimate.pp;

    let focal_samples: Vec<f64> = accepted
        .iter()
        .flat_map(|&i| focal_from_homography(&views[i].homography, pp))
        .collect();
    let f = median(&focal_samples).ok_or(Error::NoFocalEstimate)?;
    let intrinsics = Intrinsics { f, pp };

    let (view_ids, per_view, rmse) = pose_views(&intrinsics, accepted.iter().map(|&i| &views[i]))?;
    Ok(CalibrationResult {
        method: MethodTag::Geometric,
        intrinsics,
        view_ids,
        per_view,
        pp_estimate: Some(pp_estimate),
        focal_samples,
        rmse,
        flags,
        zero_skew: None,
        refine: None,
    })
}
