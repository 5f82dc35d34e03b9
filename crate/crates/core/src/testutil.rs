//! Forward-construction oracles shared by unit tests. Deliberately written
//! without reusing the library's estimation code.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{BoardPoint, Correspondence, Point2};

pub fn kmat(f: f64, u0: f64, v0: f64) -> Matrix3<f64> {
    Matrix3::new(f, 0.0, u0, 0.0, f, v0, 0.0, 0.0, 1.0)
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// K [r1 r2 t].
pub fn forward_h(k: &Matrix3<f64>, r: &Matrix3<f64>, t: &[f64; 3]) -> Matrix3<f64> {
    let mut m = *r;
    m.set_column(2, &Vector3::new(t[0], t[1], t[2]));
    k * m
}

pub fn project_point(k: &Matrix3<f64>, r: &Matrix3<f64>, t: &[f64; 3], x: f64, y: f64) -> Point2 {
    let pc = r * Vector3::new(x, y, 0.0) + Vector3::new(t[0], t[1], t[2]);
    let p = k * pc;
    Point2::new(p.x / p.z, p.y / p.z)
}

/// Inner-corner grid centred on the board origin.
pub fn project_grid(
    k: &Matrix3<f64>,
    r: &Matrix3<f64>,
    t: &[f64; 3],
    cols: usize,
    rows: usize,
    square: f64,
) -> Vec<Correspondence> {
    let cx = (cols - 1) as f64 * square / 2.0;
    let cy = (rows - 1) as f64 * square / 2.0;
    let mut out = Vec::new();
    for j in 0..rows {
        for i in 0..cols {
            let x = i as f64 * square - cx;
            let y = j as f64 * square - cy;
            out.push(Correspondence::new(BoardPoint::new(x, y), project_point(k, r, t, x, y)));
        }
    }
    out
}

/// Tilt about x, then roll about the optical axis; board centred on the
/// optical axis at `dist`.
pub fn tilted_pose(tilt_deg: f64, roll_deg: f64, dist: f64) -> (Matrix3<f64>, [f64; 3]) {
    let r = rot_z(roll_deg.to_radians()) * rot_x(tilt_deg.to_radians());
    (r, [0.0, 0.0, dist])
}
