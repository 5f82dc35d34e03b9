//! Reprojection metrics, cross-pose validation, and principal-point
//! trajectory statistics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{
    extrinsics_from_homography, refine_pose, squared_error, CalibrationView, Extrinsics, GeometricOptions, Intrinsics,
    Method,
};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::synth::{Dataset, FocalSetting, PoseLabel};

/// RMS pixel distance between projected board points and observed corners.
pub fn reprojection_rmse(intr: &Intrinsics, extr: &Extrinsics, view: &CalibrationView) -> Result<f64> {
    if view.correspondences.is_empty() {
        return Err(Error::EmptyView(view.id.clone()));
    }
    let (sq, n) = squared_error(intr, extr, &view.correspondences);
    Ok((sq / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    /// Orientation of the total-least-squares line, degrees in [0, 180),
    /// measured from +u toward +v.
    pub direction_deg: f64,
    /// Spearman correlation between focal index and position along the line.
    pub monotonicity: f64,
    pub total_shift_px: f64,
    pub per_step: Vec<[f64; 2]>,
}

/// Direction and monotonicity of a principal-point series ordered by focal setting.
pub fn analyze_trajectory(pps: &[Point2]) -> Result<TrajectoryReport> {
    let n = pps.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let cu = pps.iter().map(|p| p.u).sum::<f64>() / n as f64;
    let cv = pps.iter().map(|p| p.v).sum::<f64>() / n as f64;
    let centroid = Point2::new(cu, cv);
    if pps.iter().all(|p| p.dist(&centroid) <= 1e-9) {
        return Err(Error::DegenerateSpread);
    }
    let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
    for p in pps {
        let (du, dv) = (p.u - cu, p.v - cv);
        suu += du * du;
        svv += dv * dv;
        suv += du * dv;
    }
    let theta = 0.5 * (2.0 * suv).atan2(suu - svv);
    let mut direction_deg = theta.to_degrees().rem_euclid(180.0);
    if direction_deg >= 180.0 {
        direction_deg = 0.0;
    }
    let (s, c) = direction_deg.to_radians().sin_cos();
    let along: Vec<f64> = pps.iter().map(|p| (p.u - cu) * c + (p.v - cv) * s).collect();
    let index: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let monotonicity = spearman(&index, &along);

    let per_step = pps.windows(2).map(|w| [w[1].u - w[0].u, w[1].v - w[0].v]).collect();
    Ok(TrajectoryReport {
        direction_deg,
        monotonicity,
        total_shift_px: pps[n - 1].dist(&pps[0]),
        per_step,
    })
}

/// Smallest angle between two undirected directions, in degrees.
pub fn direction_difference_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks); 0 when either
/// series is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingOffsets {
    pub setting_index: usize,
    /// Pose PP minus DOWN PP.
    pub offsets: BTreeMap<PoseLabel, Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravityReport {
    pub per_setting: Vec<SettingOffsets>,
    pub mean_magnitude: BTreeMap<PoseLabel, f64>,
    pub mean_offset: BTreeMap<PoseLabel, Point2>,
    /// Mean |offset ⟂ drift| over mean |offset ∥ drift|; +∞ when the parallel
    /// part vanishes, 0 when there is no offset at all.
    pub sideway_ratio: f64,
}

impl GravityReport {
    /// W and E mean offsets fall on opposite sides of the line through the
    /// DOWN locus along the mean N offset.
    pub fn is_triangular(&self) -> bool {
        let (Some(n), Some(w), Some(e)) = (
            self.mean_offset.get(&PoseLabel::N),
            self.mean_offset.get(&PoseLabel::W),
            self.mean_offset.get(&PoseLabel::E),
        ) else {
            return false;
        };
        let side = |p: &Point2| n.u * p.v - n.v * p.u;
        side(w) * side(e) < 0.0
    }
}

/// Offsets of tipped-pose principal points from the DOWN principal point at
/// the same focal setting.
pub fn analyze_gravity(pps: &BTreeMap<(PoseLabel, usize), Point2>, drift_dir: [f64; 2]) -> Result<GravityReport> {
    let mut settings: Vec<usize> = pps.keys().map(|(_, s)| *s).collect();
    settings.sort_unstable();
    settings.dedup();

    let norm = drift_dir[0].hypot(drift_dir[1]);
    let d = if norm > 0.0 {
        [drift_dir[0] / norm, drift_dir[1] / norm]
    } else {
        [1.0, 0.0]
    };

    let mut per_setting = Vec::with_capacity(settings.len());
    let mut sums: BTreeMap<PoseLabel, (Point2, f64, usize)> = BTreeMap::new();
    let (mut par, mut perp, mut count) = (0.0, 0.0, 0usize);
    for &s in &settings {
        let down = pps.get(&(PoseLabel::Down, s)).ok_or(Error::MissingPose {
            pose: PoseLabel::Down,
            setting: s,
        })?;
        let mut offsets = BTreeMap::new();
        for pose in [PoseLabel::N, PoseLabel::W, PoseLabel::E] {
            if let Some(p) = pps.get(&(pose, s)) {
                let off = Point2::new(p.u - down.u, p.v - down.v);
                offsets.insert(pose, off);
                let e = sums.entry(pose).or_insert((Point2::default(), 0.0, 0));
                e.0.u += off.u;
                e.0.v += off.v;
                e.1 += off.u.hypot(off.v);
                e.2 += 1;
                par += (off.u * d[0] + off.v * d[1]).abs();
                perp += (off.u * d[1] - off.v * d[0]).abs();
                count += 1;
            }
        }
        per_setting.push(SettingOffsets {
            setting_index: s,
            offsets,
        });
    }

    let mut mean_magnitude = BTreeMap::new();
    let mut mean_offset = BTreeMap::new();
    for (pose, (sum, mag, n)) in sums {
        let n = n as f64;
        mean_magnitude.insert(pose, mag / n);
        mean_offset.insert(pose, Point2::new(sum.u / n, sum.v / n));
    }
    let sideway_ratio = if count == 0 {
        0.0
    } else {
        let (par, perp) = (par / count as f64, perp / count as f64);
        if perp < 1e-9 {
            0.0
        } else if par < 1e-9 {
            f64::INFINITY
        } else {
            perp / par
        }
    };
    Ok(GravityReport {
        per_setting,
        mean_magnitude,
        mean_offset,
        sideway_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossValOptions {
    pub method: Method,
    pub geometric: GeometricOptions,
    /// Polish each transferred pose by pose-only Levenberg–Marquardt.
    pub refine_pose: bool,
}

impl CrossValOptions {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            geometric: GeometricOptions::default(),
            refine_pose: true,
        }
    }
}

/// Transfer matrix at one focal setting: `rmse[a][b]` uses the intrinsics
/// calibrated on `poses[a]` with poses refit on the views of `poses[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingCrossVal {
    pub setting_index: usize,
    pub setting: FocalSetting,
    pub poses: Vec<PoseLabel>,
    pub rmse: Vec<Vec<Option<f64>>>,
}

impl SettingCrossVal {
    pub fn diagonal(&self) -> Vec<Option<f64>> {
        (0..self.poses.len()).map(|i| self.rmse[i][i]).collect()
    }

    fn mean_where(&self, keep: impl Fn(usize, usize) -> bool) -> Option<f64> {
        let vals: Vec<f64> = self
            .rmse
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.iter().enumerate().filter_map(move |(b, v)| v.map(|v| (a, b, v))))
            .filter(|&(a, b, _)| keep(a, b))
            .map(|(_, _, v)| v)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn diagonal_mean(&self) -> Option<f64> {
        self.mean_where(|a, b| a == b)
    }

    pub fn off_diagonal_mean(&self) -> Option<f64> {
        self.mean_where(|a, b| a != b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub method: Method,
    pub settings: Vec<SettingCrossVal>,
    /// Human-readable notes about skipped cells.
    pub notices: Vec<String>,
}

impl CrossValReport {
    /// Fraction of matrix entries that could not be computed.
    pub fn absent_fraction(&self) -> f64 {
        let (mut absent, mut total) = (0usize, 0usize);
        for s in &self.settings {
            for row in &s.rmse {
                total += row.len();
                absent += row.iter().filter(|v| v.is_none()).count();
            }
        }
        if total == 0 {
            1.0
        } else {
            absent as f64 / total as f64
        }
    }
}

/// Mean per-view RMSE of `views` under frozen `intr`, each pose initialised
/// from its homography and optionally refined.
pub fn transfer_rmse(intr: &Intrinsics, views: &[CalibrationView], refine: bool) -> Option<f64> {
    if views.is_empty() {
        return None;
    }
    let mut acc = 0.0;
    for v in views {
        let start = extrinsics_from_homography(&v.homography, intr).ok()?;
        let rmse = if refine {
            refine_pose(intr, &start, &v.correspondences).1
        } else {
            reprojection_rmse(intr, &start, v).ok()?
        };
        acc += rmse;
    }
    Some(acc / views.len() as f64)
}

/// Pose-vs-pose transfer of intrinsics at every focal setting.
pub fn cross_validate(dataset: &Dataset, opts: &CrossValOptions) -> CrossValReport {
    let poses = dataset.poses();
    let settings = dataset.settings();

    // Calibrate every cell first; results are indexed, not ordered by completion.
    let cells: Vec<(usize, PoseLabel)> = (0..settings.len())
        .flat_map(|s| poses.iter().map(move |&p| (s, p)))
        .collect();
    let calibrated: Vec<std::result::Result<Intrinsics, String>> = cells
        .par_iter()
        .map(|&(s, p)| match dataset.cell(p, s) {
            None => Err(Error::MissingCell { pose: p, setting: s }.to_string()),
            Some(cell) => opts
                .method
                .calibrate(&cell.views, &opts.geometric)
                .map(|r| r.intrinsics)
                .map_err(|e| format!("{p} @ {} mm: {e}", cell.setting.label_mm)),
        })
        .collect();

    let mut notices = Vec::new();
    let n = poses.len();
    let intr = |s: usize, a: usize| calibrated[s * n + a].as_ref().ok();
    for c in &calibrated {
        if let Err(m) = c {
            notices.push(m.clone());
        }
    }

    let triples: Vec<(usize, usize, usize)> = (0..settings.len())
        .flat_map(|s| (0..n).flat_map(move |a| (0..n).map(move |b| (s, a, b))))
        .collect();
    let usable: Vec<bool> = (0..settings.len())
        .map(|s| (0..n).filter(|&a| intr(s, a).is_some()).count() >= 2)
        .collect();
    for (s, ok) in usable.iter().enumerate() {
        if !ok {
            notices.push(format!(
                "focal setting {} mm: fewer than 2 calibrated poses, matrix skipped",
                settings[s].label_mm
            ));
        }
    }
    let values: Vec<Option<f64>> = triples
        .par_iter()
        .map(|&(s, a, b)| {
            if !usable[s] {
                return None;
            }
            let k = intr(s, a)?;
            let cell = dataset.cell(poses[b], s)?;
            transfer_rmse(k, &cell.views, opts.refine_pose)
        })
        .collect();

    let settings_out = settings
        .iter()
        .enumerate()
        .map(|(s, setting)| SettingCrossVal {
            setting_index: s,
            setting: *setting,
            poses: poses.clone(),
            rmse: (0..n)
                .map(|a| (0..n).map(|b| values[(s * n + a) * n + b]).collect())
                .collect(),
        })
        .collect();
    CrossValReport {
        method: opts.method,
        settings: settings_out,
        notices,
    }
}
