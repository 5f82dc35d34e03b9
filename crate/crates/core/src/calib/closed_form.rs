use nalgebra::Matrix3;

use super::{Extrinsics, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::{Homography, Point2};
use crate::rotation::nearest_rotation;

/// Relative threshold on the focal-constraint denominators, measured against
/// h7² + h8² so that it is independent of board units.
const DENOM_EPS: f64 = 1e-8;

/// Focal length candidates from one homography with a known principal point.
///
/// With the PP moved to the origin, r1 ⟂ r2 gives
/// `f² = −(h1'h2' + h4'h5') / (h7 h8)` and ‖r1‖ = ‖r2‖ gives
/// `f² = (h1'² + h4'² − h2'² − h5'²) / (h8² − h7²)`. A constraint is skipped
/// when its denominator is too small or when it yields f² ≤ 0.
pub fn focal_from_homography(h: &Homography, pp: Point2) -> Vec<f64> {
    let e = h.entries();
    let (h7, h8) = (e[6], e[7]);
    let h1 = e[0] - pp.u * h7;
    let h2 = e[1] - pp.u * h8;
    let h4 = e[3] - pp.v * h7;
    let h5 = e[4] - pp.v * h8;
    let scale = h7 * h7 + h8 * h8;
    if !(scale > 0.0) {
        return Vec::new();
    }

    let mut out = Vec::with_capacity(2);
    let d1 = h7 * h8;
    if d1.abs() > DENOM_EPS * scale {
        let f2 = -(h1 * h2 + h4 * h5) / d1;
        if f2 > 0.0 && f2.is_finite() {
            out.push(f2.sqrt());
        }
    }
    let d2 = h8 * h8 - h7 * h7;
    if d2.abs() > DENOM_EPS * scale {
        let f2 = (h1 * h1 + h4 * h4 - h2 * h2 - h5 * h5) / d2;
        if f2 > 0.0 && f2.is_finite() {
            out.push(f2.sqrt());
        }
    }
    out
}

/// Board pose from a homography and known intrinsics.
pub fn extrinsics_from_homography(h: &Homography, intr: &Intrinsics) -> Result<Extrinsics> {
    if !(intr.f > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "focal length {} must be positive",
            intr.f
        )));
    }
    let m = intr.k_inv() * h.matrix();
    let (c1, c2, c3) = (
        m.column(0).into_owned(),
        m.column(1).into_owned(),
        m.column(2).into_owned(),
    );
    let lambda = 0.5 * (c1.norm() + c2.norm());
    if !(lambda > 0.0) {
        return Err(Error::DegenerateConfiguration("zero homography columns".into()));
    }
    let mut r1 = c1 / lambda;
    let mut r2 = c2 / lambda;
    let mut t = c3 / lambda;
    if !(t.z.abs() > 1e-12 * t.norm()) {
        return Err(Error::BehindCamera(t.z));
    }
    if t.z < 0.0 {
        r1 = -r1;
        r2 = -r2;
        t = -t;
    }
    let r3 = r1.cross(&r2);
    let rot = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r3]));
    Ok(Extrinsics { rot, t })
}
