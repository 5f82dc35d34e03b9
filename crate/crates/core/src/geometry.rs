//! Projective primitives: image and board points, lines, and planar
//! homographies estimated by the normalized direct linear transform.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};

/// A point in image coordinates (pixels, v pointing down).
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Point2 {
    pub u: f64,
    pub v: f64,
}

impl Point2 {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// A point on the calibration board (millimetres, board plane is Z = 0).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoardPoint {
    pub x: f64,
    pub y: f64,
}

impl BoardPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub board: BoardPoint,
    pub image: Point2,
}

impl Correspondence {
    pub const fn new(board: BoardPoint, image: Point2) -> Self {
        Self { board, image }
    }
}

/// Below this |det| (of the homography in normalized coordinates) the map is
/// treated as singular.
const SINGULAR_DET: f64 = 1e-12;
/// Relative rank threshold on the DLT design matrix.
const RANK_RATIO: f64 = 1e-10;
/// Smallest admissible homogeneous denominator.
const MIN_W: f64 = 1e-12;
/// Iteration cap for SVDs on untrusted input; a non-converging solve is an error.
pub(crate) const SVD_MAX_ITER: usize = 10_000;

/// Plane-to-image projective map, stored with unit Frobenius norm and a
/// canonical sign (h9 >= 0, or the first nonzero of h7, h8 positive when h9 = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: [f64; 9],
}

impl Homography {
    pub fn identity() -> Self {
        Self::from_matrix(&Matrix3::identity()).expect("identity is nonsingular")
    }

    /// Wraps a row-major 3×3 matrix, normalizing scale and sign.
    pub fn from_entries(h: [f64; 9]) -> Result<Self> {
        Self::from_matrix(&Matrix3::from_row_slice(&h))
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateConfiguration("non-finite homography".into()));
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateConfiguration("zero homography".into()));
        }
        let mut n = m / norm;
        // Loose guard only; estimate_homography checks conditioning in
        // normalized coordinates where the threshold is unit-free.
        if n.determinant().abs() <= SINGULAR_DET * f64::EPSILON {
            return Err(Error::DegenerateConfiguration("singular homography".into()));
        }
        if canonical_sign(&n) < 0.0 {
            n = -n;
        }
        let mut h = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                h[3 * r + c] = n[(r, c)];
            }
        }
        Ok(Self { h })
    }

    /// Row-major entries h1..h9.
    pub fn entries(&self) -> &[f64; 9] {
        &self.h
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.h)
    }

    /// First column (h1, h4, h7).
    pub fn col_a(&self) -> Vector3<f64> {
        Vector3::new(self.h[0], self.h[3], self.h[6])
    }

    /// Second column (h2, h5, h8).
    pub fn col_b(&self) -> Vector3<f64> {
        Vector3::new(self.h[1], self.h[4], self.h[7])
    }

    /// Third column (h3, h6, h9).
    pub fn col_c(&self) -> Vector3<f64> {
        Vector3::new(self.h[2], self.h[5], self.h[8])
    }

    /// Largest entrywise difference after aligning scale, for comparisons in tests
    /// and diagnostics. Both operands are already canonical.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        self.h
            .iter()
            .zip(other.h.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn canonical_sign(m: &Matrix3<f64>) -> f64 {
    if m[(2, 2)] != 0.0 {
        m[(2, 2)].signum()
    } else if m[(2, 0)] != 0.0 {
        m[(2, 0)].signum()
    } else if m[(2, 1)] != 0.0 {
        m[(2, 1)].signum()
    } else {
        m.iter().find(|x| **x != 0.0).map_or(1.0, |x| x.signum())
    }
}

/// Maps a board point through `h`.
pub fn apply_homography(h: &Homography, p: BoardPoint) -> Result<Point2> {
    let e = h.entries();
    let w = e[6] * p.x + e[7] * p.y + e[8];
    if w.abs() <= MIN_W || !w.is_finite() {
        return Err(Error::PointAtInfinity(w));
    }
    Ok(Point2::new(
        (e[0] * p.x + e[1] * p.y + e[2]) / w,
        (e[3] * p.x + e[4] * p.y + e[5]) / w,
    ))
}

/// Isotropic normalization: centroid to the origin, mean distance √2.
/// `None` when the scale under- or overflows.
fn normalizing_transform(pts: impl Iterator<Item = (f64, f64)> + Clone) -> Option<Matrix3<f64>> {
    let n = pts.clone().count() as f64;
    let (sx, sy) = pts.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (cx, cy) = (sx / n, sy / n);
    let mean = pts.map(|(x, y)| (x - cx).hypot(y - cy)).sum::<f64>() / n;
    let s = if mean > 0.0 {
        std::f64::consts::SQRT_2 / mean
    } else {
        1.0
    };
    if !(s.is_finite() && (s * cx).is_finite() && (s * cy).is_finite()) {
        return None;
    }
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, x: f64, y: f64) -> (f64, f64) {
    (t[(0, 0)] * x + t[(0, 2)], t[(1, 1)] * y + t[(1, 2)])
}

/// Normalized DLT homography from board to image points.
pub fn estimate_homography(corrs: &[Correspondence]) -> Result<Homography> {
    if corrs.len() < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 4 correspondences, got {}",
            corrs.len()
        )));
    }
    if corrs.iter().any(|c| !c.board.is_finite() || !c.image.is_finite()) {
        return Err(Error::DegenerateConfiguration("non-finite coordinate".into()));
    }

    let out_of_range = || Error::DegenerateConfiguration("coordinate spread out of floating-point range".into());
    let tb = normalizing_transform(corrs.iter().map(|c| (c.board.x, c.board.y))).ok_or_else(out_of_range)?;
    let ti = normalizing_transform(corrs.iter().map(|c| (c.image.u, c.image.v))).ok_or_else(out_of_range)?;

    let rows = (2 * corrs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, c) in corrs.iter().enumerate() {
        let (x, y) = transform(&tb, c.board.x, c.board.y);
        let (u, v) = transform(&ti, c.image.u, c.image.v);
        let r = 2 * k;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]);
    }

    if a.iter().any(|x| !x.is_finite()) {
        return Err(out_of_range());
    }
    let svd = a
        .try_svd(false, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::DegenerateConfiguration("SVD did not converge".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateConfiguration("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s_max = svd.singular_values[order[0]];
    let s_second = svd.singular_values[order[7]];
    if !(s_max > 0.0) || s_second / s_max < RANK_RATIO {
        return Err(Error::DegenerateConfiguration(
            "rank-deficient design matrix (collinear or repeated board points)".into(),
        ));
    }
    let null: Vec<f64> = v_t.row(order[8]).iter().copied().collect();
    let hn = Matrix3::from_row_slice(&null);

    let hn_scaled = hn / hn.norm();
    if hn_scaled.determinant().abs() <= SINGULAR_DET {
        return Err(Error::DegenerateConfiguration(
            "estimated homography is singular".into(),
        ));
    }

    let ti_inv = ti
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("image normalization".into()))?;
    Homography::from_matrix(&(ti_inv * hn * tb))
}

/// Root mean square of the forward transfer error |H·b − i| over a view.
pub fn transfer_rmse(h: &Homography, corrs: &[Correspondence]) -> Result<f64> {
    if corrs.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for c in corrs {
        let p = apply_homography(h, c.board)?;
        acc += (p.u - c.image.u).powi(2) + (p.v - c.image.v).powi(2);
    }
    Ok((acc / corrs.len() as f64).sqrt())
}

/// An image line a·u + b·v + c = 0 with unit normal (a, b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line2 {
    a: f64,
    b: f64,
    c: f64,
}

impl Line2 {
    /// Normalizes (a, b, c) so that a² + b² = 1. Returns `None` for a
    /// vanishing normal or non-finite input.
    pub fn new(a: f64, b: f64, c: f64) -> Option<Self> {
        let n = a.hypot(b);
        if !(n > 0.0) || !n.is_finite() || !c.is_finite() {
            return None;
        }
        Some(Self {
            a: a / n,
            b: b / n,
            c: c / n,
        })
    }

    /// Line through `p` with direction `(du, dv)`.
    pub fn through(p: Point2, du: f64, dv: f64) -> Option<Self> {
        Self::new(dv, -du, du * p.v - dv * p.u)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Signed distance from `p` to the line.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.a * p.u + self.b * p.v + self.c
    }

    /// Same line with a > 0, or b > 0 when a = 0.
    pub fn canonical(self) -> Self {
        if self.a < 0.0 || (self.a == 0.0 && self.b < 0.0) {
            Self {
                a: -self.a,
                b: -self.b,
                c: -self.c,
            }
        } else {
            self
        }
    }

    /// The parallel line shifted by `d` along the unit normal's negative side.
    pub fn offset(self, d: f64) -> Self {
        Self { c: self.c + d, ..self }
    }
}
