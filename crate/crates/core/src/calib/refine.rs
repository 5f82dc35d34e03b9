//! Levenberg–Marquardt refinement of reprojection error.
//!
//! Parameters are `[f, u0, v0]` (unless intrinsics are frozen) followed by one
//! `[ω, t]` block per view. Each ω is an axis-angle correction applied on the
//! left of the view's starting rotation, R = exp(ω) · R₀, so the chart stays
//! well away from its singularity whatever the starting pose.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{squared_error, CalibrationResult, CalibrationView, Extrinsics, Intrinsics, MethodTag};
use crate::error::{Error, Result};
use crate::geometry::Correspondence;
use crate::rotation::{exp_so3, rotate_point_jacobian};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iters: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub rel_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            rel_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineStats {
    pub iterations: usize,
    pub converged: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Sum-of-squares reprojection problem over a set of views.
pub struct ReprojectionProblem<'a> {
    views: Vec<&'a [Correspondence]>,
    base_rot: Vec<Matrix3<f64>>,
    fixed: Option<Intrinsics>,
}

impl<'a> ReprojectionProblem<'a> {
    /// `base` supplies the starting rotation of each view; with `fixed` set
    /// the intrinsics are held constant and left out of the parameter vector.
    pub fn new(views: Vec<&'a [Correspondence]>, base: &[Extrinsics], fixed: Option<Intrinsics>) -> Self {
        assert_eq!(views.len(), base.len(), "one starting pose per view");
        Self {
            views,
            base_rot: base.iter().map(|e| e.rot).collect(),
            fixed,
        }
    }

    fn offset(&self) -> usize {
        if self.fixed.is_some() {
            0
        } else {
            3
        }
    }

    pub fn num_params(&self) -> usize {
        self.offset() + 6 * self.views.len()
    }

    pub fn num_residuals(&self) -> usize {
        2 * self.views.iter().map(|v| v.len()).sum::<usize>()
    }

    /// Parameter vector for the given state (rotation corrections are zero
    /// when `poses` equal the base poses).
    pub fn pack(&self, intr: &Intrinsics, poses: &[Extrinsics]) -> DVector<f64> {
        let mut x = DVector::zeros(self.num_params());
        if self.fixed.is_none() {
            x[0] = intr.f;
            x[1] = intr.pp.u;
            x[2] = intr.pp.v;
        }
        let o = self.offset();
        for (k, (e, r0)) in poses.iter().zip(&self.base_rot).enumerate() {
            let w = crate::rotation::log_so3(&(e.rot * r0.transpose()));
            x.fixed_rows_mut::<3>(o + 6 * k).copy_from(&w);
            x.fixed_rows_mut::<3>(o + 6 * k + 3).copy_from(&e.t);
        }
        x
    }

    pub fn unpack(&self, x: &DVector<f64>) -> (Intrinsics, Vec<Extrinsics>) {
        let intr = self.fixed.unwrap_or(Intrinsics::new(x[0], x[1], x[2]));
        let o = self.offset();
        let poses = (0..self.views.len())
            .map(|k| {
                let w: Vector3<f64> = x.fixed_rows::<3>(o + 6 * k).into_owned();
                Extrinsics {
                    rot: exp_so3(&w) * self.base_rot[k],
                    t: x.fixed_rows::<3>(o + 6 * k + 3).into_owned(),
                }
            })
            .collect();
        (intr, poses)
    }

    /// Projected minus observed, two entries per corner.
    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (intr, poses) = self.unpack(x);
        let mut r = DVector::zeros(self.num_residuals());
        let mut row = 0;
        for (corrs, e) in self.views.iter().zip(&poses) {
            for c in corrs.iter() {
                let pc = e.rot * Vector3::new(c.board.x, c.board.y, 0.0) + e.t;
                r[row] = intr.f * pc.x / pc.z + intr.pp.u - c.image.u;
                r[row + 1] = intr.f * pc.y / pc.z + intr.pp.v - c.image.v;
                row += 2;
            }
        }
        r
    }

    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        self.residuals(x).norm_squared()
    }

    /// Analytic Jacobian of [`Self::residuals`].
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (intr, _) = self.unpack(x);
        let o = self.offset();
        let mut jac = DMatrix::zeros(self.num_residuals(), self.num_params());
        let mut row = 0;
        for (k, corrs) in self.views.iter().enumerate() {
            let w: Vector3<f64> = x.fixed_rows::<3>(o + 6 * k).into_owned();
            let t: Vector3<f64> = x.fixed_rows::<3>(o + 6 * k + 3).into_owned();
            let dr = exp_so3(&w);
            let r = dr * self.base_rot[k];
            for c in corrs.iter() {
                let p0 = self.base_rot[k] * Vector3::new(c.board.x, c.board.y, 0.0);
                let pc = r * Vector3::new(c.board.x, c.board.y, 0.0) + t;
                let iz = 1.0 / pc.z;
                let (xn, yn) = (pc.x * iz, pc.y * iz);
                if self.fixed.is_none() {
                    jac[(row, 0)] = xn;
                    jac[(row, 1)] = 1.0;
                    jac[(row + 1, 0)] = yn;
                    jac[(row + 1, 2)] = 1.0;
                }
                let dproj = Matrix2x3::new(intr.f * iz, 0.0, -intr.f * xn * iz, 0.0, intr.f * iz, -intr.f * yn * iz);
                let d_w = dproj * rotate_point_jacobian(&w, &dr, &p0);
                let col = o + 6 * k;
                jac.fixed_view_mut::<2, 3>(row, col).copy_from(&d_w);
                jac.fixed_view_mut::<2, 3>(row, col + 3).copy_from(&dproj);
                row += 2;
            }
        }
        jac
    }
}

/// Minimizes `problem.cost` from `x0`. Returns the best iterate.
pub fn levenberg_marquardt(
    problem: &ReprojectionProblem<'_>,
    x0: DVector<f64>,
    opts: &LmOptions,
) -> (DVector<f64>, RefineStats) {
    let mut x = x0;
    let mut r = problem.residuals(&x);
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let mut history = vec![cost];
    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = problem.jacobian(&x);

    while iterations < opts.max_iters {
        if !(cost > 0.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let jt = jac.transpose();
        let g = &jt * &r;
        let a = &jt * &jac;
        let mut damped = a.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= opts.lambda_up;
            continue;
        };
        let step = chol.solve(&g);
        let candidate = &x - step;
        let r_new = problem.residuals(&candidate);
        let cost_new = r_new.norm_squared();
        if cost_new.is_finite() && cost_new < cost {
            let rel = (cost - cost_new) / cost;
            x = candidate;
            r = r_new;
            cost = cost_new;
            history.push(cost);
            lambda *= opts.lambda_down;
            if rel < opts.rel_tol {
                converged = true;
                break;
            }
            jac = problem.jacobian(&x);
        } else {
            lambda *= opts.lambda_up;
            if lambda > 1e20 {
                // No descent direction left at machine precision.
                converged = true;
                break;
            }
        }
    }

    let stats = RefineStats {
        iterations,
        converged,
        initial_cost,
        final_cost: cost,
        cost_history: history,
    };
    (x, stats)
}

pub fn refine(result: &CalibrationResult, views: &[CalibrationView]) -> Result<CalibrationResult> {
    refine_with(result, views, &LmOptions::default())
}

/// Joint refinement of intrinsics and every accepted view's pose. A run that
/// hits `max_iters` still returns its best iterate, with
/// `refine.converged == false`.
pub fn refine_with(
    result: &CalibrationResult,
    views: &[CalibrationView],
    opts: &LmOptions,
) -> Result<CalibrationResult> {
    if result.per_view.len() < 2 {
        return Err(Error::InsufficientViews {
            needed: 2,
            got: result.per_view.len(),
        });
    }
    let mut corrs = Vec::with_capacity(result.view_ids.len());
    for id in &result.view_ids {
        let v = views
            .iter()
            .find(|v| &v.id == id)
            .ok_or_else(|| Error::InvalidConfig(format!("view {id} not supplied to refine")))?;
        corrs.push(v.correspondences.as_slice());
    }
    let problem = ReprojectionProblem::new(corrs, &result.per_view, None);
    let x0 = problem.pack(&result.intrinsics, &result.per_view);
    let (x, stats) = levenberg_marquardt(&problem, x0, opts);
    let (intrinsics, per_view) = problem.unpack(&x);
    let n = problem.num_residuals() / 2;
    let rmse = (stats.final_cost / n as f64).sqrt();
    Ok(CalibrationResult {
        method: MethodTag::Refined,
        intrinsics,
        view_ids: result.view_ids.clone(),
        per_view,
        pp_estimate: result.pp_estimate.clone(),
        focal_samples: result.focal_samples.clone(),
        rmse,
        flags: result.flags.clone(),
        zero_skew: result.zero_skew,
        refine: Some(stats),
    })
}

/// Pose-only refinement of a single view with intrinsics frozen. Returns the
/// refined pose and its reprojection RMSE.
pub fn refine_pose(intr: &Intrinsics, start: &Extrinsics, corrs: &[Correspondence]) -> (Extrinsics, f64) {
    let problem = ReprojectionProblem::new(vec![corrs], std::slice::from_ref(start), Some(*intr));
    let x0 = problem.pack(intr, std::slice::from_ref(start));
    let (x, stats) = levenberg_marquardt(&problem, x0, &LmOptions::default());
    let (_, mut poses) = problem.unpack(&x);
    let pose = poses.pop().expect("one view");
    let rmse = if corrs.is_empty() {
        0.0
    } else {
        (stats.final_cost / corrs.len() as f64).sqrt()
    };
    let (check, _) = squared_error(intr, &pose, corrs);
    debug_assert!((check - stats.final_cost).abs() <= 1e-6 * (1.0 + check));
    (pose, rmse)
}
