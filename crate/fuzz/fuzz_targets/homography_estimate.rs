#![no_main]
use caliblab::calib::CalibrationView;
use caliblab::geometry::{BoardPoint, Correspondence, Point2};
use libfuzzer_sys::fuzz_target;

// Input is read as little-endian f64 quadruples (x, y, u, v).
fuzz_target!(|data: &[u8]| {
    let vals: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let corrs: Vec<Correspondence> = vals
        .chunks_exact(4)
        .map(|q| Correspondence::new(BoardPoint::new(q[0], q[1]), Point2::new(q[2], q[3])))
        .collect();
    if let Ok(view) = CalibrationView::new("fuzz", corrs) {
        if let Some(pl) = view.principal_line {
            assert!(pl.line.a().is_finite() && pl.line.b().is_finite());
        }
    }
});
