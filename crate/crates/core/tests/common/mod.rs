#![allow(dead_code)]

use caliblab::calib::{CalibrationView, Intrinsics};
use caliblab::geometry::{Correspondence, Point2};
use caliblab::synth::{generate_dataset, Cell, DriftModel, FocalSetting, PoseLabel, SceneConfig};

pub const PP: Point2 = Point2::new(3024.0, 2012.0);

/// One DOWN cell: tilt 45°, eight rolls, fixed principal point.
pub fn scene(f_px: f64, cols: usize, rows: usize, sigma: f64, seed: u64) -> SceneConfig {
    SceneConfig {
        board_cols: cols,
        board_rows: rows,
        square_mm: 25.0,
        noise_sigma_px: sigma,
        rng_seed: seed,
        focal_settings: vec![FocalSetting {
            label_mm: f_px * 0.004,
            f_px,
        }],
        poses: vec![PoseLabel::Down],
        drift: DriftModel {
            pp0: PP,
            drift_total: 0.0,
            gravity_px: 0.0,
            ..DriftModel::default()
        },
        ..SceneConfig::default()
    }
}

pub fn cell(cfg: &SceneConfig) -> Cell {
    generate_dataset(cfg).unwrap().cells.remove(0)
}

pub fn truth(cell: &Cell) -> Intrinsics {
    cell.ground_truth.as_ref().unwrap().intrinsics
}

/// Displaces the corners on one side of the view's principal line by `px`
/// along the line, which turns the line about the image centre.
pub fn shear_half(view: &CalibrationView, side: f64, px: f64) -> CalibrationView {
    let pl = view.principal_line.as_ref().unwrap().line;
    let corrs: Vec<Correspondence> = view
        .correspondences
        .iter()
        .map(|c| {
            let mut c = *c;
            if side * pl.signed_distance(c.image) > 0.0 {
                c.image.u += px * pl.b();
                c.image.v -= px * pl.a();
            }
            c
        })
        .collect();
    CalibrationView::new(view.id.clone(), corrs).unwrap()
}
