use caliblab::calib::Method;
use caliblab::eval::{cross_validate, reprojection_rmse, CrossValOptions};
use caliblab::synth::{generate_dataset, FocalSetting, PoseLabel, SceneConfig};

fn small(gravity_px: f64, sigma: f64, seed: u64) -> SceneConfig {
    let mut cfg = SceneConfig {
        board_cols: 12,
        board_rows: 8,
        noise_sigma_px: sigma,
        rng_seed: seed,
        focal_settings: [18.0, 35.0].map(FocalSetting::from_mm).to_vec(),
        ..SceneConfig::default()
    };
    cfg.drift.gravity_px = gravity_px;
    cfg
}

#[test]
fn rmse_is_zero_at_the_generating_parameters() {
    let cfg = SceneConfig {
        board_cols: 9,
        board_rows: 6,
        ..SceneConfig::default()
    };
    let ds = generate_dataset(&cfg).unwrap();
    for c in &ds.cells {
        let gt = c.ground_truth.as_ref().unwrap();
        for (v, e) in c.views.iter().zip(&gt.extrinsics) {
            assert!(reprojection_rmse(&gt.intrinsics, e, v).unwrap() < 1e-9);
        }
    }
}

#[test]
fn rmse_under_noise_matches_chi_scale() {
    let sigma = 0.5;
    let expected = sigma * 2f64.sqrt();
    let mut mean = 0.0;
    for seed in 0..100 {
        let mut cfg = small(0.0, sigma, seed);
        cfg.poses = vec![PoseLabel::Down];
        cfg.focal_settings.truncate(1);
        cfg.rolls = vec![0.0, 45.0];
        let ds = generate_dataset(&cfg).unwrap();
        let c = &ds.cells[0];
        let gt = c.ground_truth.as_ref().unwrap();
        let r = reprojection_rmse(&gt.intrinsics, &gt.extrinsics[0], &c.views[0]).unwrap();
        assert!((r / expected - 1.0).abs() < 0.2, "seed {seed}: {r}");
        mean += r / 100.0;
    }
    assert!((mean / expected - 1.0).abs() < 0.02);
}

#[test]
fn gravity_free_noise_free_transfer_is_exact() {
    let ds = generate_dataset(&small(0.0, 0.0, 1)).unwrap();
    let report = cross_validate(&ds, &CrossValOptions::new(Method::Geometric));
    assert!(report.notices.is_empty());
    assert_eq!(report.absent_fraction(), 0.0);
    for s in &report.settings {
        assert_eq!(s.rmse.len(), 4);
        for row in &s.rmse {
            for v in row {
                assert!(v.unwrap() < 1e-6, "{v:?}");
            }
        }
    }
}

#[test]
fn gravity_shift_costs_reprojection_error() {
    let opts = CrossValOptions::new(Method::Geometric);
    for seed in 0..3 {
        let r15 = cross_validate(&generate_dataset(&small(15.0, 0.1, seed)).unwrap(), &opts);
        let r30 = cross_validate(&generate_dataset(&small(30.0, 0.1, seed)).unwrap(), &opts);
        for (a, b) in r15.settings.iter().zip(&r30.settings) {
            let ex15 = a.off_diagonal_mean().unwrap() - a.diagonal_mean().unwrap();
            let ex30 = b.off_diagonal_mean().unwrap() - b.diagonal_mean().unwrap();
            assert!(ex15 > 0.0, "seed {seed}");
            assert!(ex30 > ex15, "seed {seed}: {ex15} vs {ex30}");
        }
    }
}

#[test]
fn single_pose_dataset_has_nothing_to_cross() {
    let mut cfg = small(15.0, 0.0, 1);
    cfg.poses = vec![PoseLabel::Down];
    let report = cross_validate(
        &generate_dataset(&cfg).unwrap(),
        &CrossValOptions::new(Method::Geometric),
    );
    assert_eq!(report.absent_fraction(), 1.0);
    assert!(!report.notices.is_empty());
}

#[test]
fn failed_cells_are_marked_absent() {
    let mut ds = generate_dataset(&small(15.0, 0.0, 1)).unwrap();
    ds.truncate_views(2);
    // Two views are too few for the algebraic method everywhere.
    let report = cross_validate(&ds, &CrossValOptions::new(Method::Algebraic));
    assert_eq!(report.absent_fraction(), 1.0);
    let report = cross_validate(&ds, &CrossValOptions::new(Method::Geometric));
    assert_eq!(report.absent_fraction(), 0.0);
}

#[test]
fn cross_validation_is_deterministic() {
    let ds = generate_dataset(&small(15.0, 0.1, 4)).unwrap();
    let opts = CrossValOptions::new(Method::Geometric);
    let a = cross_validate(&ds, &opts);
    let b = cross_validate(&ds, &opts);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn small_gravity_shift_still_shows() {
    let opts = CrossValOptions::new(Method::Geometric);
    for seed in 0..3 {
        let r = cross_validate(&generate_dataset(&small(5.0, 0.1, seed)).unwrap(), &opts);
        for s in &r.settings {
            for (a, row) in s.rmse.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    if a != b {
                        assert!(v.unwrap() > s.rmse[b][b].unwrap(), "seed {seed} {a}->{b}");
                    }
                }
            }
        }
    }
}
