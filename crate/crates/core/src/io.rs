//! File formats: dataset JSON, run configuration TOML, CSV reports, the
//! principal-point scatter SVG, and atomic writes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calib::{CalibrationResult, CalibrationView, Extrinsics, Intrinsics, Method};
use crate::error::{Error, Result};
use crate::eval::{CrossValReport, GravityReport, TrajectoryReport};
use crate::geometry::{BoardPoint, Correspondence, Point2};
use crate::rotation::{exp_so3, log_so3};
use crate::synth::{CameraPreset, Cell, CellTruth, Dataset, FocalSetting, PoseLabel, SceneConfig};

/// Rounds to 9 significant decimal digits. Idempotent, so values written
/// through it survive any number of read/write cycles unchanged.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

// ---------------------------------------------------------------- dataset

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    camera_id: String,
    cells: Vec<CellFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellFile {
    pose: PoseLabel,
    focal_label_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    focal_px: Option<f64>,
    views: Vec<ViewFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<TruthFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewFile {
    id: String,
    corners: Vec<CornerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CornerFile {
    x_mm: f64,
    y_mm: f64,
    u_px: f64,
    v_px: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthFile {
    f_px: f64,
    u0_px: f64,
    v0_px: f64,
    /// Per-view pose: axis-angle rotation and translation (mm).
    #[serde(default)]
    poses: Vec<PoseFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    rvec: [f64; 3],
    t: [f64; 3],
}

fn q3(v: &Vector3<f64>) -> [f64; 3] {
    [quantize(v.x), quantize(v.y), quantize(v.z)]
}

/// Serializes a dataset. Every float is rounded to 9 significant digits.
pub fn dataset_to_json(ds: &Dataset) -> String {
    let file = DatasetFile {
        camera_id: ds.camera_id.clone(),
        cells: ds
            .cells
            .iter()
            .map(|c| CellFile {
                pose: c.pose,
                focal_label_mm: quantize(c.setting.label_mm),
                focal_px: Some(quantize(c.setting.f_px)),
                views: c
                    .views
                    .iter()
                    .map(|v| ViewFile {
                        id: v.id.clone(),
                        corners: v
                            .correspondences
                            .iter()
                            .map(|k| CornerFile {
                                x_mm: quantize(k.board.x),
                                y_mm: quantize(k.board.y),
                                u_px: quantize(k.image.u),
                                v_px: quantize(k.image.v),
                            })
                            .collect(),
                    })
                    .collect(),
                ground_truth: c.ground_truth.as_ref().map(|gt| TruthFile {
                    f_px: quantize(gt.intrinsics.f),
                    u0_px: quantize(gt.intrinsics.pp.u),
                    v0_px: quantize(gt.intrinsics.pp.v),
                    poses: gt
                        .extrinsics
                        .iter()
                        .map(|e| PoseFile {
                            rvec: q3(&log_so3(&e.rot)),
                            t: q3(&e.t),
                        })
                        .collect(),
                }),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&file).expect("dataset serializes");
    s.push('\n');
    s
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Parse(format!("{what} is not finite")))
    }
}

/// Parses a dataset document, recomputing each view's homography and
/// principal line. Cells are reordered by pose, then focal setting.
pub fn dataset_from_json(text: &str) -> Result<Dataset> {
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

    let mut labels: Vec<f64> = Vec::new();
    for c in &file.cells {
        let mm = finite(c.focal_label_mm, "focal_label_mm")?;
        if !(mm > 0.0) {
            return Err(Error::Parse(format!("focal_label_mm must be positive, got {mm}")));
        }
        if !labels.contains(&mm) {
            labels.push(mm);
        }
    }
    labels.sort_by(f64::total_cmp);

    let mut cells = Vec::with_capacity(file.cells.len());
    for c in file.cells {
        let setting_index = labels
            .iter()
            .position(|&m| m == c.focal_label_mm)
            .expect("label collected above");
        let f_px = match c.focal_px {
            Some(f) if finite(f, "focal_px")? > 0.0 => f,
            Some(f) => return Err(Error::Parse(format!("focal_px must be positive, got {f}"))),
            None => FocalSetting::from_mm(c.focal_label_mm).f_px,
        };
        let setting = FocalSetting {
            label_mm: c.focal_label_mm,
            f_px,
        };
        if cells
            .iter()
            .any(|x: &Cell| x.pose == c.pose && x.setting_index == setting_index)
        {
            return Err(Error::Parse(format!(
                "duplicate cell {} @ {} mm",
                c.pose, c.focal_label_mm
            )));
        }

        let mut views = Vec::with_capacity(c.views.len());
        for v in c.views {
            let mut corrs = Vec::with_capacity(v.corners.len());
            for k in &v.corners {
                corrs.push(Correspondence::new(
                    BoardPoint::new(finite(k.x_mm, "x_mm")?, finite(k.y_mm, "y_mm")?),
                    Point2::new(finite(k.u_px, "u_px")?, finite(k.v_px, "v_px")?),
                ));
            }
            let view =
                CalibrationView::new(v.id.clone(), corrs).map_err(|e| Error::Parse(format!("view {}: {e}", v.id)))?;
            views.push(view);
        }

        let ground_truth = match c.ground_truth {
            None => None,
            Some(t) => {
                let intrinsics = Intrinsics::new(
                    finite(t.f_px, "f_px")?,
                    finite(t.u0_px, "u0_px")?,
                    finite(t.v0_px, "v0_px")?,
                );
                let mut extrinsics = Vec::with_capacity(t.poses.len());
                for p in t.poses {
                    for x in p.rvec.iter().chain(&p.t) {
                        finite(*x, "ground-truth pose")?;
                    }
                    extrinsics.push(Extrinsics {
                        rot: exp_so3(&Vector3::from(p.rvec)),
                        t: Vector3::from(p.t),
                    });
                }
                Some(CellTruth { intrinsics, extrinsics })
            }
        };
        cells.push(Cell {
            pose: c.pose,
            setting,
            setting_index,
            views,
            ground_truth,
        });
    }
    cells.sort_by_key(|c| (c.pose, c.setting_index));
    Ok(Dataset {
        camera_id: file.camera_id,
        cells,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    dataset_from_json(&text)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> std::io::Result<()> {
    write_atomic(path, dataset_to_json(ds).as_bytes())
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Calibrate,
    Crossval,
    Analyze,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::Crossval => "crossval",
            Command::Analyze => "analyze",
        }
    }
}

/// Settings for one command invocation. Everything is optional in the file;
/// command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub max_views: Option<usize>,
    pub pl_outlier_px: Option<f64>,
    pub max_condition: Option<f64>,
    /// Pose-only refinement inside cross-validation.
    pub refine: Option<bool>,
    /// Camera preset the scene starts from (cam1..cam4).
    pub preset: Option<String>,
    #[serde(skip)]
    pub scene: Option<SceneConfig>,
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Scene from an optional preset name and overriding fields.
pub fn scene_from_table(preset: Option<&str>, over: Option<toml::Table>) -> Result<SceneConfig> {
    let preset = match preset {
        None => CameraPreset::Cam1,
        Some(p) => {
            CameraPreset::parse(p).ok_or_else(|| Error::InvalidConfig(format!("unknown camera preset {p:?}")))?
        }
    };
    let base = preset.scene();
    let Some(over) = over else { return Ok(base) };
    let mut table = toml::Table::try_from(&base).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    merge_tables(&mut table, over);
    table
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("[scene]: {}", e.message())))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
        let scene = match table.remove("scene") {
            None => None,
            Some(toml::Value::Table(t)) => Some(t),
            Some(_) => return Err(Error::InvalidConfig("scene must be a table".into())),
        };
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
        if scene.is_some() || cfg.preset.is_some() {
            cfg.scene = Some(scene_from_table(cfg.preset.as_deref(), scene)?);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks the fields `command` needs.
    pub fn validate(&self, command: Command) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if command != Command::Simulate {
            match &self.input {
                None => return bad(format!("{} needs an input file", command.as_str())),
                Some(p) if p.as_os_str().is_empty() => return bad("input path is empty".into()),
                _ => {}
            }
        }
        if matches!(&self.out_dir, Some(p) if p.as_os_str().is_empty()) {
            return bad("out_dir is empty".into());
        }
        if let Some(px) = self.pl_outlier_px {
            if !(px > 0.0 && px.is_finite()) {
                return bad(format!("pl_outlier_px must be positive, got {px}"));
            }
        }
        if let Some(c) = self.max_condition {
            if !(c > 1.0) {
                return bad(format!("max_condition must exceed 1, got {c}"));
            }
        }
        if self.max_views == Some(0) {
            return bad("max_views must be at least 1".into());
        }
        if let Some(scene) = &self.scene {
            scene.validate()?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- results CSV

pub const RESULTS_HEADER: [&str; 15] = [
    "pose",
    "focal_label_mm",
    "focal_px",
    "method",
    "status",
    "u0",
    "v0",
    "f",
    "rmse",
    "n_views",
    "n_flagged",
    "flags",
    "gt_u0",
    "gt_v0",
    "gt_f",
];

/// One row of the calibration results table. `status` is `ok` or the error
/// kind that stopped the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub pose: PoseLabel,
    pub focal_label_mm: f64,
    pub focal_px: f64,
    pub method: Method,
    pub status: String,
    pub u0: Option<f64>,
    pub v0: Option<f64>,
    pub f: Option<f64>,
    pub rmse: Option<f64>,
    pub n_views: usize,
    pub n_flagged: usize,
    /// Flagged view ids joined by `;`.
    pub flags: String,
    pub gt_u0: Option<f64>,
    pub gt_v0: Option<f64>,
    pub gt_f: Option<f64>,
}

impl ResultRow {
    pub fn new(cell: &Cell, method: Method, outcome: &Result<CalibrationResult>) -> Self {
        let gt = cell.ground_truth.as_ref().map(|g| g.intrinsics);
        let mut row = ResultRow {
            pose: cell.pose,
            focal_label_mm: cell.setting.label_mm,
            focal_px: cell.setting.f_px,
            method,
            status: String::new(),
            u0: None,
            v0: None,
            f: None,
            rmse: None,
            n_views: cell.views.len(),
            n_flagged: 0,
            flags: String::new(),
            gt_u0: gt.map(|k| k.pp.u),
            gt_v0: gt.map(|k| k.pp.v),
            gt_f: gt.map(|k| k.f),
        };
        match outcome {
            Ok(r) => {
                row.status = "ok".into();
                row.u0 = Some(r.intrinsics.pp.u);
                row.v0 = Some(r.intrinsics.pp.v);
                row.f = Some(r.intrinsics.f);
                row.rmse = Some(r.rmse);
                row.n_flagged = r.flags.len();
                row.flags = r.flags.join(";");
            }
            Err(e) => row.status = e.kind().into(),
        }
        row
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn pp(&self) -> Option<Point2> {
        Some(Point2::new(self.u0?, self.v0?))
    }
}

pub fn results_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(RESULTS_HEADER)
        .map_err(|e| Error::Parse(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn results_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if headers.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "unexpected results header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: ResultRow = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let floats = [row.focal_label_mm, row.focal_px].into_iter().chain(
            [row.u0, row.v0, row.f, row.rmse, row.gt_u0, row.gt_v0, row.gt_f]
                .into_iter()
                .flatten(),
        );
        if floats.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("non-finite value in results".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------- other reports

fn to_csv<R: Serialize>(header: &str, rows: impl IntoIterator<Item = R>) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let mut out = format!("{header}\n").into_bytes();
    for r in rows {
        w.serialize(r).expect("report rows serialize");
    }
    out.extend(w.into_inner().expect("in-memory writer"));
    String::from_utf8(out).expect("csv is utf-8")
}

pub const CROSSVAL_HEADER: &str = "focal_label_mm,focal_px,calib_pose,eval_pose,rmse";

pub fn crossval_to_csv(report: &CrossValReport) -> String {
    let rows = report.settings.iter().flat_map(|set| {
        set.rmse.iter().enumerate().flat_map(move |(a, row)| {
            row.iter()
                .enumerate()
                .map(move |(b, v)| (set.setting.label_mm, set.setting.f_px, set.poses[a], set.poses[b], *v))
        })
    });
    to_csv(CROSSVAL_HEADER, rows)
}

pub const TRAJECTORY_HEADER: &str = "pose,focal_index,focal_label_mm,u0,v0,step_du,step_dv";

/// Principal-point series per pose, ordered by focal setting.
pub type PpSeries = BTreeMap<PoseLabel, Vec<(FocalSetting, Point2)>>;

pub fn trajectory_to_csv(series: &PpSeries) -> String {
    let rows = series.iter().flat_map(|(pose, pts)| {
        pts.iter().enumerate().map(move |(i, (setting, p))| {
            let step = (i > 0).then(|| (p.u - pts[i - 1].1.u, p.v - pts[i - 1].1.v));
            (
                *pose,
                i,
                setting.label_mm,
                p.u,
                p.v,
                step.map(|s| s.0),
                step.map(|s| s.1),
            )
        })
    });
    to_csv(TRAJECTORY_HEADER, rows)
}

pub const GRAVITY_HEADER: &str = "focal_index,pose,du,dv,magnitude";

pub fn gravity_to_csv(report: &GravityReport) -> String {
    let rows = report.per_setting.iter().flat_map(|set| {
        set.offsets
            .iter()
            .map(move |(pose, o)| (set.setting_index, *pose, o.u, o.v, o.u.hypot(o.v)))
    });
    to_csv(GRAVITY_HEADER, rows)
}

/// Machine-readable digest of an analyze run.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub camera_id: String,
    pub method: Method,
    pub trajectories: BTreeMap<PoseLabel, TrajectoryReport>,
    pub gravity: Option<GravityReport>,
    /// Direction the gravity offsets were split against (degrees).
    pub reference_direction_deg: Option<f64>,
    pub notices: Vec<String>,
}

// ---------------------------------------------------------------- SVG

fn pose_color(p: PoseLabel) -> &'static str {
    match p {
        PoseLabel::Down => "#808080",
        PoseLabel::N => "#d62728",
        PoseLabel::W => "#1f77b4",
        PoseLabel::E => "#2ca02c",
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Scatter of principal points, one panel per pose. Every panel shows the
/// DOWN locus as gray circles; the panel's own series is drawn on top and
/// joined in focal order. All panels share one pixel range.
pub fn pp_scatter_svg(series: &PpSeries, title: &str) -> String {
    const PANEL: f64 = 320.0;
    const PAD: f64 = 40.0;
    let poses: Vec<PoseLabel> = series.keys().copied().collect();
    let pts = series.values().flatten().map(|(_, p)| *p).filter(Point2::is_finite);
    let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        lo_u = lo_u.min(p.u);
        hi_u = hi_u.max(p.u);
        lo_v = lo_v.min(p.v);
        hi_v = hi_v.max(p.v);
    }
    if lo_u > hi_u {
        (lo_u, hi_u, lo_v, hi_v) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = (hi_u - lo_u).max(hi_v - lo_v).max(1.0) * 1.1;
    let (cu, cv) = ((lo_u + hi_u) / 2.0, (lo_v + hi_v) / 2.0);
    let inner = PANEL - 2.0 * PAD;
    let map = |p: &Point2, x0: f64| {
        (
            x0 + PAD + ((p.u - cu) / span + 0.5) * inner,
            PAD + ((p.v - cv) / span + 0.5) * inner,
        )
    };

    let width = PANEL * poses.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" viewBox="0 0 {width} {h}">"#,
        h = PANEL + 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="8" y="{}" style="font-family:sans-serif;font-size:11px;fill:#333">{} (range {:.1} px, image v down)</text>"#,
        PANEL + 14.0,
        esc(title),
        span
    );
    let down = series.get(&PoseLabel::Down);
    for (k, pose) in poses.iter().enumerate() {
        let x0 = k as f64 * PANEL;
        let _ = writeln!(s, r#"<g>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{PAD}" width="{inner}" height="{inner}" style="fill:none;stroke:#999;stroke-width:1"/>"#,
            x0 + PAD
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" style="font-family:sans-serif;font-size:14px;fill:#000">{pose}</text>"#,
            x0 + PAD
        );
        if let Some(d) = down {
            for (_, p) in d.iter().filter(|(_, p)| p.is_finite()) {
                let (x, y) = map(p, x0);
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" style="fill:none;stroke:#9a9a9a;stroke-width:1.5"/>"#
                );
            }
        }
        let own: Vec<(f64, f64)> = series[pose]
            .iter()
            .filter(|(_, p)| p.is_finite())
            .map(|(_, p)| map(p, x0))
            .collect();
        if own.len() > 1 {
            let path: Vec<String> = own.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" style="fill:none;stroke:{};stroke-width:1;stroke-opacity:0.6"/>"#,
                path.join(" "),
                pose_color(*pose)
            );
        }
        for (x, y) in &own {
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" style="fill:{};stroke:none"/>"#,
                pose_color(*pose)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_dataset;

    fn small_scene() -> SceneConfig {
        SceneConfig {
            board_cols: 5,
            board_rows: 4,
            rolls: vec![0.0, 90.0, 180.0],
            focal_settings: vec![FocalSetting::from_mm(18.0), FocalSetting::from_mm(35.0)],
            poses: vec![PoseLabel::Down, PoseLabel::W],
            noise_sigma_px: 0.3,
            rng_seed: 11,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn quantize_is_idempotent() {
        for x in [1.0, 3024.123456789123, -1e-7 / 3.0, 6.02214076e23, 0.0] {
            let q = quantize(x);
            assert_eq!(quantize(q), q);
            assert!((q - x).abs() <= 1e-8 * x.abs());
        }
    }

    #[test]
    fn dataset_round_trip_is_byte_identical() {
        let ds = generate_dataset(&small_scene()).unwrap();
        let a = dataset_to_json(&ds);
        let back = dataset_from_json(&a).unwrap();
        assert_eq!(back.num_views(), ds.num_views());
        assert_eq!(back.poses(), ds.poses());
        let b = dataset_to_json(&back);
        assert_eq!(a, b);
        let gt = back.cells[0].ground_truth.as_ref().unwrap();
        for e in &gt.extrinsics {
            assert!(crate::rotation::orthogonality_error(&e.rot) < 1e-12);
        }
    }

    #[test]
    fn dataset_rejects_garbage() {
        assert!(dataset_from_json("").is_err());
        assert!(dataset_from_json("{\"camera_id\":\"x\"}").is_err());
        let dup = r#"{"camera_id":"x","cells":[
            {"pose":"DOWN","focal_label_mm":18,"views":[]},
            {"pose":"DOWN","focal_label_mm":18,"views":[]}]}"#;
        assert!(matches!(dataset_from_json(dup), Err(Error::Parse(_))));
        let empty_view = r#"{"camera_id":"x","cells":[
            {"pose":"DOWN","focal_label_mm":18,"views":[{"id":"a","corners":[]}]}]}"#;
        assert!(matches!(dataset_from_json(empty_view), Err(Error::Parse(_))));
    }

    #[test]
    fn focal_px_defaults_from_label() {
        let doc = r#"{"camera_id":"x","cells":[{"pose":"N","focal_label_mm":20,"views":[]}]}"#;
        let ds = dataset_from_json(doc).unwrap();
        assert!((ds.cells[0].setting.f_px - 5000.0).abs() < 1e-9);
    }

    #[test]
    fn run_config_merges_scene_over_preset() {
        let cfg = RunConfig::from_toml(
            r#"
            method = "algebraic-refined"
            seed = 9
            preset = "cam2"
            [scene]
            noise_sigma_px = 0.25
            [scene.drift]
            gravity_px = 30.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.method, Some(Method::AlgebraicRefined));
        let scene = cfg.scene.unwrap();
        assert_eq!(scene.width, 5184);
        assert_eq!(scene.noise_sigma_px, 0.25);
        assert_eq!(scene.drift.gravity_px, 30.0);
        assert_eq!(scene.drift.drift_total, 120.0);
    }

    #[test]
    fn run_config_errors() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("method = \"magic\"").is_err());
        assert!(RunConfig::from_toml("preset = \"cam9\"").is_err());
        let cfg = RunConfig::from_toml("[scene]\ntilt_deg = 0.0").unwrap();
        let err = cfg.validate(Command::Simulate).unwrap_err();
        assert!(err.to_string().contains("degenerate dihedral angle"));
        assert!(RunConfig::default().validate(Command::Calibrate).is_err());
    }

    #[test]
    fn results_csv_round_trip() {
        let ds = generate_dataset(&small_scene()).unwrap();
        let rows: Vec<ResultRow> = ds
            .cells
            .iter()
            .map(|c| ResultRow::new(c, Method::Geometric, &crate::calib::calibrate_geometric(&c.views)))
            .collect();
        let text = results_to_csv(&rows).unwrap();
        assert!(text.starts_with(&RESULTS_HEADER.join(",")));
        assert_eq!(results_from_csv(&text).unwrap(), rows);
        assert!(results_from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn svg_has_one_panel_per_pose() {
        let mut series = PpSeries::new();
        for (k, pose) in [PoseLabel::Down, PoseLabel::N].into_iter().enumerate() {
            series.insert(
                pose,
                (0..3)
                    .map(|i| {
                        (
                            FocalSetting::from_mm(18.0 + i as f64),
                            Point2::new(10.0 * i as f64, 5.0 * k as f64),
                        )
                    })
                    .collect(),
            );
        }
        let svg = pp_scatter_svg(&series, "a < b");
        assert_eq!(svg.matches("<g>").count(), 2);
        assert_eq!(svg.matches("stroke:#9a9a9a").count(), 6);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
