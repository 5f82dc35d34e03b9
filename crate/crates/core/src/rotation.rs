//! Rotation utilities: projection onto SO(3) and the axis-angle chart.

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Closest rotation in Frobenius norm (orthogonal polar factor with det = +1).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues map from an axis-angle vector.
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

/// Axis-angle vector of a rotation matrix.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// ∂(R(ω) p)/∂ω for the axis-angle parameterization, closed form:
/// `-R [p]× (ω ωᵀ + (Rᵀ − I)[ω]×) / ‖ω‖²`, with the small-angle limit `-[p]×`.
pub fn rotate_point_jacobian(w: &Vector3<f64>, r: &Matrix3<f64>, p: &Vector3<f64>) -> Matrix3<f64> {
    let n2 = w.norm_squared();
    if n2 < 1e-16 {
        return -skew(p) - 0.5 * (skew(w) * skew(p) + skew(&(skew(w) * p)));
    }
    let inner = w * w.transpose() + (r.transpose() - Matrix3::identity()) * skew(w);
    -r * skew(p) * inner / n2
}

pub fn rot_x(rad: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), rad).into_inner()
}

pub fn rot_y(rad: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), rad).into_inner()
}

pub fn rot_z(rad: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), rad).into_inner()
}

/// Max |RᵀR − I| entry.
pub fn orthogonality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}
