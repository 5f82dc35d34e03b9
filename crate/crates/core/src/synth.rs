//! Ground-truth checkerboard datasets with injected principal-point drift.
//!
//! Each view images the board at a fixed dihedral angle (`tilt_deg`) with a
//! roll about the optical axis, aimed so the board centre lands on the image
//! centre. The true principal point moves along `drift_dir` as the focal
//! setting increases and shifts by `gravity_px` when the camera is tipped
//! into the N, W or E pose.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{project, CalibrationView, Extrinsics, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::{BoardPoint, Correspondence, Point2};
use crate::rotation::{rot_x, rot_y, rot_z};

/// Pixel pitch used to turn preset focal labels (mm) into pixels.
pub const PIXEL_PITCH_MM: f64 = 0.004;
const MAX_DISTANCE_RETRIES: usize = 5;
const FILL_ITERATIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PoseLabel {
    #[serde(rename = "DOWN")]
    Down,
    N,
    W,
    E,
}

impl PoseLabel {
    pub const ALL: [PoseLabel; 4] = [PoseLabel::Down, PoseLabel::N, PoseLabel::W, PoseLabel::E];

    pub fn as_str(&self) -> &'static str {
        match self {
            PoseLabel::Down => "DOWN",
            PoseLabel::N => "N",
            PoseLabel::W => "W",
            PoseLabel::E => "E",
        }
    }

    fn code(&self) -> u64 {
        *self as u64
    }
}

impl std::fmt::Display for PoseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PoseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DOWN" => Ok(PoseLabel::Down),
            "N" => Ok(PoseLabel::N),
            "W" => Ok(PoseLabel::W),
            "E" => Ok(PoseLabel::E),
            other => Err(Error::Parse(format!("unknown pose label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalSetting {
    pub label_mm: f64,
    pub f_px: f64,
}

impl FocalSetting {
    /// Setting whose pixel focal length follows from the fixed pixel pitch.
    pub fn from_mm(label_mm: f64) -> Self {
        Self {
            label_mm,
            f_px: label_mm / PIXEL_PITCH_MM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftProfile {
    Linear,
    Saturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftModel {
    /// Principal point at the shortest focal setting, DOWN pose.
    pub pp0: Point2,
    /// Unit direction of focal drift, image axes (u right, v down).
    pub drift_dir: [f64; 2],
    /// Drift accumulated over the full focal range (px).
    pub drift_total: f64,
    pub drift_profile: DriftProfile,
    /// Pose-induced principal point shift (px).
    pub gravity_px: f64,
    /// Camera rotation applied for the N, W and E poses (degrees).
    pub pose_tilt_deg: f64,
    /// Reverse the sign convention of the gravity offsets.
    pub flip_gravity: bool,
}

impl Default for DriftModel {
    fn default() -> Self {
        let a = 22.5f64.to_radians();
        Self {
            pp0: Point2::new(3024.0, 2012.0),
            drift_dir: [a.cos(), a.sin()],
            drift_total: 120.0,
            drift_profile: DriftProfile::Linear,
            gravity_px: 15.0,
            pose_tilt_deg: 10.0,
            flip_gravity: false,
        }
    }
}

impl DriftModel {
    /// Drift direction at `deg` from the +u axis toward +v.
    pub fn direction_from_angle(deg: f64) -> [f64; 2] {
        let (s, c) = deg.to_radians().sin_cos();
        [c, s]
    }

    /// Orientation of `drift_dir` in degrees, [0, 180).
    pub fn direction_deg(&self) -> f64 {
        self.drift_dir[1]
            .atan2(self.drift_dir[0])
            .to_degrees()
            .rem_euclid(180.0)
    }

    /// Magnitude of focal drift at `index` of `n` settings.
    pub fn focal_shift(&self, index: usize, n: usize) -> f64 {
        if n < 2 {
            return 0.0;
        }
        let x = index as f64 / (n - 1) as f64;
        match self.drift_profile {
            DriftProfile::Linear => self.drift_total * x,
            DriftProfile::Saturating => self.drift_total * (1.0 - (-3.0 * x).exp()) / (1.0 - (-3.0f64).exp()),
        }
    }

    /// Offset from the DOWN locus for a pose. Image v points down; the N pose
    /// puts the in-image gravity component toward −v and the principal point
    /// moves the opposite way. W and E act along +u and −u respectively.
    pub fn gravity_offset(&self, pose: PoseLabel) -> Point2 {
        let g = if self.flip_gravity {
            -self.gravity_px
        } else {
            self.gravity_px
        };
        match pose {
            PoseLabel::Down => Point2::new(0.0, 0.0),
            PoseLabel::N => Point2::new(0.0, g),
            PoseLabel::W => Point2::new(g, 0.0),
            PoseLabel::E => Point2::new(-g, 0.0),
        }
    }

    /// Camera attitude change for a pose.
    pub fn pose_rotation(&self, pose: PoseLabel) -> Matrix3<f64> {
        let a = self.pose_tilt_deg.to_radians();
        match pose {
            PoseLabel::Down => Matrix3::identity(),
            PoseLabel::N => rot_x(a),
            PoseLabel::W => rot_y(a),
            PoseLabel::E => rot_y(-a),
        }
    }
}

/// Ground-truth principal point for a (setting, pose) pair.
///
/// # Panics
/// If `index >= n_settings`.
pub fn true_pp(drift: &DriftModel, index: usize, n_settings: usize, pose: PoseLabel) -> Point2 {
    assert!(index < n_settings, "setting index {index} out of range {n_settings}");
    let s = drift.focal_shift(index, n_settings);
    let g = drift.gravity_offset(pose);
    Point2::new(
        drift.pp0.u + drift.drift_dir[0] * s + g.u,
        drift.pp0.v + drift.drift_dir[1] * s + g.v,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub camera_id: String,
    /// Inner corners along the board x axis.
    pub board_cols: usize,
    /// Inner corners along the board y axis.
    pub board_rows: usize,
    pub square_mm: f64,
    pub width: u32,
    pub height: u32,
    /// Dihedral angle between image plane and board (degrees).
    pub tilt_deg: f64,
    /// Rolls about the optical axis, one view each (degrees).
    pub rolls: Vec<f64>,
    pub noise_sigma_px: f64,
    pub rng_seed: u64,
    /// Share of the image covered by the projected board: the larger of its
    /// bounding-box width over image width and height over image height.
    pub fill_fraction: f64,
    pub focal_settings: Vec<FocalSetting>,
    pub poses: Vec<PoseLabel>,
    pub drift: DriftModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        CameraPreset::Cam1.scene()
    }
}

/// Camera bodies and zoom samples offered as ready-made scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraPreset {
    Cam1,
    Cam2,
    Cam3,
    Cam4,
}

impl CameraPreset {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cam1" => Some(Self::Cam1),
            "cam2" => Some(Self::Cam2),
            "cam3" => Some(Self::Cam3),
            "cam4" => Some(Self::Cam4),
            _ => None,
        }
    }

    fn body(&self) -> (&'static str, u32, u32, [f64; 7]) {
        match self {
            Self::Cam1 => ("cam1", 6048, 4024, [18.0, 22.0, 24.0, 27.0, 30.0, 35.0, 50.0]),
            Self::Cam2 => ("cam2", 5184, 3456, [18.0, 23.0, 28.0, 30.0, 34.0, 39.0, 42.0]),
            Self::Cam3 => ("cam3", 6000, 3376, [33.0, 40.0, 44.0, 50.0, 55.0, 60.0, 65.0]),
            Self::Cam4 => ("cam4", 6000, 3376, [16.0, 21.0, 26.0, 33.0, 38.0, 45.0, 50.0]),
        }
    }

    pub fn scene(&self) -> SceneConfig {
        let (id, width, height, mm) = self.body();
        SceneConfig {
            camera_id: id.to_string(),
            board_cols: 24,
            board_rows: 16,
            square_mm: 20.0,
            width,
            height,
            tilt_deg: 45.0,
            rolls: (0..8).map(|k| 45.0 * k as f64).collect(),
            noise_sigma_px: 0.0,
            rng_seed: 0,
            fill_fraction: 0.6,
            focal_settings: mm.iter().map(|&m| FocalSetting::from_mm(m)).collect(),
            poses: PoseLabel::ALL.to_vec(),
            drift: DriftModel {
                pp0: Point2::new(width as f64 / 2.0, height as f64 / 2.0),
                ..DriftModel::default()
            },
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.tilt_deg > 0.0 && self.tilt_deg < 90.0) {
            return bad(format!(
                "tilt_deg = {} is a degenerate dihedral angle; it must lie strictly between 0 and 90 degrees",
                self.tilt_deg
            ));
        }
        if self.rolls.len() < 2 {
            return bad(format!("need at least 2 rolls, got {}", self.rolls.len()));
        }
        if self.rolls.iter().any(|r| !r.is_finite()) {
            return bad("rolls must be finite".into());
        }
        if self.width == 0 || self.height == 0 {
            return bad("image width and height must be positive".into());
        }
        if self.board_cols < 2 || self.board_rows < 2 {
            return bad("board needs at least 2×2 inner corners".into());
        }
        if !(self.square_mm > 0.0 && self.square_mm.is_finite()) {
            return bad("square_mm must be positive".into());
        }
        if !(self.noise_sigma_px >= 0.0 && self.noise_sigma_px.is_finite()) {
            return bad("noise_sigma_px must be non-negative".into());
        }
        if !(self.fill_fraction > 0.0 && self.fill_fraction <= 1.0) {
            return bad("fill_fraction must lie in (0, 1]".into());
        }
        if self.focal_settings.is_empty() {
            return bad("no focal settings".into());
        }
        for s in &self.focal_settings {
            if !(s.f_px > 0.0 && s.f_px.is_finite()) || !s.label_mm.is_finite() {
                return bad(format!("focal setting {} mm has invalid f_px {}", s.label_mm, s.f_px));
            }
        }
        if self.focal_settings.windows(2).any(|w| !(w[1].label_mm > w[0].label_mm)) {
            return bad("focal settings must be strictly increasing in label_mm".into());
        }
        if self.poses.is_empty() {
            return bad("no poses".into());
        }
        let mut seen = self.poses.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.poses.len() {
            return bad("duplicate pose labels".into());
        }
        let d = &self.drift;
        if !d.pp0.is_finite() {
            return bad("drift.pp0 must be finite".into());
        }
        if (d.drift_dir[0].hypot(d.drift_dir[1]) - 1.0).abs() > 1e-9 {
            return bad("drift.drift_dir must be a unit vector".into());
        }
        if !(d.drift_total >= 0.0 && d.drift_total.is_finite()) {
            return bad("drift.drift_total must be non-negative".into());
        }
        if !(d.gravity_px >= 0.0 && d.gravity_px.is_finite()) {
            return bad("drift.gravity_px must be non-negative".into());
        }
        if !(d.pose_tilt_deg >= 0.0 && d.pose_tilt_deg < 45.0) {
            return bad("drift.pose_tilt_deg must lie in [0, 45)".into());
        }
        Ok(())
    }

    /// Board corners in row-major order from the board origin.
    pub fn board_points(&self) -> Vec<BoardPoint> {
        let mut pts = Vec::with_capacity(self.board_cols * self.board_rows);
        for j in 0..self.board_rows {
            for i in 0..self.board_cols {
                pts.push(BoardPoint::new(i as f64 * self.square_mm, j as f64 * self.square_mm));
            }
        }
        pts
    }

    pub fn board_center(&self) -> Vector3<f64> {
        Vector3::new(
            (self.board_cols - 1) as f64 * self.square_mm / 2.0,
            (self.board_rows - 1) as f64 * self.square_mm / 2.0,
            0.0,
        )
    }

    pub fn true_intrinsics(&self, pose: PoseLabel, setting_index: usize) -> Intrinsics {
        Intrinsics {
            f: self.focal_settings[setting_index].f_px,
            pp: true_pp(&self.drift, setting_index, self.focal_settings.len(), pose),
        }
    }
}

/// splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-view sub-seed: chained splitmix64 over (seed, pose, setting, roll).
/// Stable across releases; changing it changes every generated dataset.
pub fn view_seed(seed: u64, pose: PoseLabel, setting_index: usize, roll_index: usize) -> u64 {
    let mut h = splitmix64(seed);
    for x in [pose.code(), setting_index as u64, roll_index as u64] {
        h = splitmix64(h ^ x);
    }
    h
}

/// Synthesizes one view. `rng` drives the pixel noise only.
pub fn generate_view(
    config: &SceneConfig,
    pose: PoseLabel,
    setting_index: usize,
    roll_deg: f64,
    id: &str,
    rng: &mut impl rand::Rng,
) -> Result<(CalibrationView, Extrinsics)> {
    let intr = config.true_intrinsics(pose, setting_index);
    let rot = config.drift.pose_rotation(pose) * rot_z(roll_deg.to_radians()) * rot_x(config.tilt_deg.to_radians());

    // Ray through the image centre.
    let ray = Vector3::new(
        (config.width as f64 / 2.0 - intr.pp.u) / intr.f,
        (config.height as f64 / 2.0 - intr.pp.v) / intr.f,
        1.0,
    );
    let extent = (config.board_cols - 1) as f64 * config.square_mm;
    let extent = extent.hypot((config.board_rows - 1) as f64 * config.square_mm);
    let (w, h) = (config.width as f64, config.height as f64);
    let mut depth = intr.f * extent / (config.fill_fraction * w.min(h));

    let board = config.board_points();
    let center = config.board_center();
    let place = |depth: f64| Extrinsics {
        rot,
        t: ray * depth - rot * center,
    };
    // Scale the distance until the projected bounding box spans the requested
    // fraction of the image along its tighter axis.
    for _ in 0..FILL_ITERATIONS {
        let extr = place(depth);
        let Some(pts) = board
            .iter()
            .map(|&b| project(&intr, &extr, b))
            .collect::<Option<Vec<_>>>()
        else {
            break;
        };
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &pts {
            lo_u = lo_u.min(p.u);
            hi_u = hi_u.max(p.u);
            lo_v = lo_v.min(p.v);
            hi_v = hi_v.max(p.v);
        }
        let span = ((hi_u - lo_u) / w).max((hi_v - lo_v) / h);
        if !(span > 0.0) || (span / config.fill_fraction - 1.0).abs() < 1e-3 {
            break;
        }
        depth *= span / config.fill_fraction;
    }

    for _ in 0..=MAX_DISTANCE_RETRIES {
        let extr = place(depth);
        let t = extr.t;
        let projected: Option<Vec<Point2>> = board
            .iter()
            .map(|&b| {
                let pc = rot * Vector3::new(b.x, b.y, 0.0) + t;
                if pc.z <= 0.0 {
                    return None;
                }
                project(&intr, &extr, b).filter(|p| p.u >= 0.0 && p.u <= w && p.v >= 0.0 && p.v <= h)
            })
            .collect();
        let Some(projected) = projected else {
            depth *= 1.25;
            continue;
        };

        let noise = if config.noise_sigma_px > 0.0 {
            Some(Normal::new(0.0, config.noise_sigma_px).expect("validated sigma"))
        } else {
            None
        };
        let corrs = board
            .iter()
            .zip(projected)
            .map(|(&b, p)| {
                let p = match &noise {
                    Some(n) => Point2::new(p.u + n.sample(rng), p.v + n.sample(rng)),
                    None => p,
                };
                Correspondence::new(b, p)
            })
            .collect();
        let view = CalibrationView::new(id, corrs)?;
        return Ok((view, extr));
    }
    Err(Error::BoardOutOfView {
        view: id.to_string(),
        retries: MAX_DISTANCE_RETRIES,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellTruth {
    pub intrinsics: Intrinsics,
    pub extrinsics: Vec<Extrinsics>,
}

/// All views captured at one (pose, focal setting).
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub pose: PoseLabel,
    pub setting: FocalSetting,
    /// Rank of `setting` among the dataset's distinct focal settings.
    pub setting_index: usize,
    pub views: Vec<CalibrationView>,
    pub ground_truth: Option<CellTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub camera_id: String,
    /// Ordered by pose, then focal setting.
    pub cells: Vec<Cell>,
}

impl Dataset {
    pub fn cell(&self, pose: PoseLabel, setting_index: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.pose == pose && c.setting_index == setting_index)
    }

    /// Distinct focal settings in increasing order.
    pub fn settings(&self) -> Vec<FocalSetting> {
        let mut out: Vec<FocalSetting> = Vec::new();
        for c in &self.cells {
            if !out.iter().any(|s| s.label_mm == c.setting.label_mm) {
                out.push(c.setting);
            }
        }
        out.sort_by(|a, b| a.label_mm.total_cmp(&b.label_mm));
        out
    }

    /// Distinct poses in canonical order.
    pub fn poses(&self) -> Vec<PoseLabel> {
        let mut p: Vec<PoseLabel> = self.cells.iter().map(|c| c.pose).collect();
        p.sort();
        p.dedup();
        p
    }

    pub fn num_views(&self) -> usize {
        self.cells.iter().map(|c| c.views.len()).sum()
    }

    /// Keeps at most the first `n` views of every cell.
    pub fn truncate_views(&mut self, n: usize) {
        for c in &mut self.cells {
            c.views.truncate(n);
            if let Some(gt) = &mut c.ground_truth {
                gt.extrinsics.truncate(n);
            }
        }
    }
}

pub fn view_id(pose: PoseLabel, setting: &FocalSetting, roll_index: usize) -> String {
    format!("{}-{}mm-r{}", pose, setting.label_mm, roll_index)
}

/// Generates every (pose, setting) cell. Cells are produced in parallel from
/// per-view sub-seeds, so the output depends only on `config`.
pub fn generate_dataset(config: &SceneConfig) -> Result<Dataset> {
    config.validate()?;
    let mut poses = config.poses.clone();
    poses.sort();
    let jobs: Vec<(PoseLabel, usize)> = poses
        .iter()
        .flat_map(|&p| (0..config.focal_settings.len()).map(move |s| (p, s)))
        .collect();

    let cells: Result<Vec<Cell>> = jobs
        .par_iter()
        .map(|&(pose, si)| {
            let setting = config.focal_settings[si];
            let mut views = Vec::with_capacity(config.rolls.len());
            let mut extrinsics = Vec::with_capacity(config.rolls.len());
            for (ri, &roll) in config.rolls.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(view_seed(config.rng_seed, pose, si, ri));
                let id = view_id(pose, &setting, ri);
                let (v, e) = generate_view(config, pose, si, roll, &id, &mut rng)?;
                views.push(v);
                extrinsics.push(e);
            }
            Ok(Cell {
                pose,
                setting,
                setting_index: si,
                views,
                ground_truth: Some(CellTruth {
                    intrinsics: config.true_intrinsics(pose, si),
                    extrinsics,
                }),
            })
        })
        .collect();
    Ok(Dataset {
        camera_id: config.camera_id.clone(),
        cells: cells?,
    })
}
