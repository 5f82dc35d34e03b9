//! Intrinsic and extrinsic calibration from planar views.
//!
//! Two linear calibrators share the same view and result types: the
//! principal-line pipeline ([`calibrate_geometric`]) and the conic-based
//! algebraic method ([`calibrate_algebraic`]). Either result can be polished
//! by Levenberg–Marquardt with [`refine`].

mod algebraic;
mod closed_form;
mod geometric;
mod refine;

pub use algebraic::{calibrate_algebraic, ZeroSkewDiagnostic};
pub use closed_form::{extrinsics_from_homography, focal_from_homography};
pub use geometric::{calibrate_geometric, calibrate_geometric_with, GeometricOptions};
pub use refine::{levenberg_marquardt, refine, refine_pose, refine_with, LmOptions, RefineStats, ReprojectionProblem};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{estimate_homography, transfer_rmse, BoardPoint, Correspondence, Homography, Point2};
use crate::principal_line::{principal_line, PPEstimate, PrincipalLine};

/// Pinhole intrinsics with zero skew and unit aspect ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub f: f64,
    pub pp: Point2,
}

impl Intrinsics {
    pub fn new(f: f64, u0: f64, v0: f64) -> Self {
        Self {
            f,
            pp: Point2::new(u0, v0),
        }
    }

    pub fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.f, 0.0, self.pp.u, 0.0, self.f, self.pp.v, 0.0, 0.0, 1.0)
    }

    pub fn k_inv(&self) -> Matrix3<f64> {
        let fi = 1.0 / self.f;
        Matrix3::new(fi, 0.0, -self.pp.u * fi, 0.0, fi, -self.pp.v * fi, 0.0, 0.0, 1.0)
    }
}

/// Board-to-camera rigid transform: X_cam = R · (x, y, 0) + t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rot: Matrix3<f64>,
    pub t: Vector3<f64>,
}

/// Projects a board point; `None` when it lands on or behind the camera plane.
pub fn project(intr: &Intrinsics, extr: &Extrinsics, p: BoardPoint) -> Option<Point2> {
    let pc = extr.rot * Vector3::new(p.x, p.y, 0.0) + extr.t;
    if !(pc.z.abs() > 0.0) {
        return None;
    }
    Some(Point2::new(
        intr.f * pc.x / pc.z + intr.pp.u,
        intr.f * pc.y / pc.z + intr.pp.v,
    ))
}

/// Sum of squared reprojection errors and the number of corners.
pub(crate) fn squared_error(intr: &Intrinsics, extr: &Extrinsics, corrs: &[Correspondence]) -> (f64, usize) {
    let mut acc = 0.0;
    for c in corrs {
        match project(intr, extr, c.board) {
            Some(p) => acc += (p.u - c.image.u).powi(2) + (p.v - c.image.v).powi(2),
            None => acc = f64::INFINITY,
        }
    }
    (acc, corrs.len())
}

/// One board image: its correspondences plus everything derivable from them.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationView {
    pub id: String,
    pub correspondences: Vec<Correspondence>,
    pub homography: Homography,
    /// `None` when the view has no usable perspective (e.g. fronto-parallel).
    pub principal_line: Option<PrincipalLine>,
    /// RMS forward transfer error of the fitted homography (px).
    pub transfer_rmse: f64,
}

impl CalibrationView {
    pub fn new(id: impl Into<String>, correspondences: Vec<Correspondence>) -> Result<Self> {
        let id = id.into();
        if correspondences.is_empty() {
            return Err(Error::EmptyView(id));
        }
        let homography = estimate_homography(&correspondences)?;
        let transfer_rmse = transfer_rmse(&homography, &correspondences).unwrap_or(f64::INFINITY);
        let principal_line = principal_line(&homography).ok().map(|pl| pl.with_source(id.clone()));
        Ok(Self {
            id,
            correspondences,
            homography,
            principal_line,
            transfer_rmse,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    Geometric,
    Algebraic,
    Refined,
}

/// Which calibrator a command or cross-validation run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Geometric,
    Algebraic,
    AlgebraicRefined,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Geometric => "geometric",
            Method::Algebraic => "algebraic",
            Method::AlgebraicRefined => "algebraic-refined",
        }
    }

    /// Runs the calibrator this method names.
    pub fn calibrate(&self, views: &[CalibrationView], geo: &GeometricOptions) -> Result<CalibrationResult> {
        match self {
            Method::Geometric => calibrate_geometric_with(views, geo),
            Method::Algebraic => calibrate_algebraic(views),
            Method::AlgebraicRefined => refine(&calibrate_algebraic(views)?, views),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Method::Geometric),
            "algebraic" => Ok(Method::Algebraic),
            "algebraic-refined" => Ok(Method::AlgebraicRefined),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub method: MethodTag,
    pub intrinsics: Intrinsics,
    /// Ids of the accepted views, parallel to `per_view`.
    pub view_ids: Vec<String>,
    pub per_view: Vec<Extrinsics>,
    pub pp_estimate: Option<PPEstimate>,
    pub focal_samples: Vec<f64>,
    /// Reprojection RMSE over accepted views (px).
    pub rmse: f64,
    /// Views excluded by screening or lacking a principal line.
    pub flags: Vec<String>,
    pub zero_skew: Option<ZeroSkewDiagnostic>,
    pub refine: Option<RefineStats>,
}

/// Extrinsics for each view plus the pooled reprojection RMSE.
pub(crate) fn pose_views<'a>(
    intr: &Intrinsics,
    views: impl Iterator<Item = &'a CalibrationView>,
) -> Result<(Vec<String>, Vec<Extrinsics>, f64)> {
    let mut ids = Vec::new();
    let mut poses = Vec::new();
    let (mut acc, mut count) = (0.0, 0usize);
    for v in views {
        let e = extrinsics_from_homography(&v.homography, intr)?;
        let (s, n) = squared_error(intr, &e, &v.correspondences);
        acc += s;
        count += n;
        ids.push(v.id.clone());
        poses.push(e);
    }
    let rmse = if count > 0 { (acc / count as f64).sqrt() } else { 0.0 };
    Ok((ids, poses, rmse))
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}
