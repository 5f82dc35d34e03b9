//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to
//! stderr (bypassing output capture) and then asserts.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use caliblab::calib::{
    calibrate_algebraic, calibrate_geometric, CalibrationView, Extrinsics, GeometricOptions, Intrinsics, Method,
    ReprojectionProblem,
};
use caliblab::eval::{analyze_gravity, analyze_trajectory, cross_validate, direction_difference_deg, CrossValOptions};
use caliblab::geometry::{BoardPoint, Correspondence, Homography, Point2};
use caliblab::io::{results_from_csv, ResultRow};
use caliblab::principal_line::principal_line;
use caliblab::rotation::{exp_so3, orthogonality_error, rot_x, rot_z};
use caliblab::synth::{generate_dataset, CameraPreset, PoseLabel, SceneConfig};
use caliblab::Error;
use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, name: &str, ok: bool, detail: &str) {
    let mark = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{mark}] {id} {name}: {detail}");
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_caliblab"));
    c.env_remove("CALIBLAB_THREADS");
    c
}

fn run(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().expect("spawn caliblab");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

#[test]
fn ac1_exact_recovery() {
    let t0 = Instant::now();
    let ds = generate_dataset(&SceneConfig::default()).unwrap();
    let mut worst_pp: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    let mut worst_alg: f64 = 0.0;
    let mut failures = Vec::new();
    for c in &ds.cells {
        let gt = c.ground_truth.as_ref().unwrap().intrinsics;
        match calibrate_geometric(&c.views) {
            Ok(r) => {
                worst_pp = worst_pp.max(r.intrinsics.pp.dist(&gt.pp));
                worst_f = worst_f.max((r.intrinsics.f / gt.f - 1.0).abs());
            }
            Err(e) => failures.push(format!("geometric {} {}: {e}", c.pose, c.setting.label_mm)),
        }
        match calibrate_algebraic(&c.views) {
            Ok(r) => {
                let rel = [
                    (r.intrinsics.f / gt.f - 1.0).abs(),
                    (r.intrinsics.pp.u / gt.pp.u - 1.0).abs(),
                    (r.intrinsics.pp.v / gt.pp.v - 1.0).abs(),
                ];
                worst_alg = rel.into_iter().fold(worst_alg, f64::max);
            }
            Err(e) => failures.push(format!("algebraic {} {}: {e}", c.pose, c.setting.label_mm)),
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = failures.is_empty()
        && ds.num_views() == 224
        && worst_pp < 0.01
        && worst_f < 1e-4
        && worst_alg < 1e-4
        && secs < 5.0;
    report(
        "AC1",
        "exact recovery",
        ok,
        &format!(
            "{} views, geometric max pp err {worst_pp:.2e} px, max f rel {worst_f:.2e}; algebraic max rel {worst_alg:.2e}; {secs:.2} s",
            ds.num_views()
        ),
    );
    assert!(ok, "{failures:?}");
}

#[test]
fn ac2_principal_line_incidence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac2);
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..1000 {
        let f = rng.random_range(500.0..15000.0);
        let (u0, v0) = (rng.random_range(0.0..6000.0), rng.random_range(0.0..4000.0));
        let tilt = rng.random_range(20.0f64..70.0).to_radians();
        let roll = rng.random_range(0.0f64..360.0).to_radians();
        let t = Vector3::new(
            rng.random_range(-300.0..300.0),
            rng.random_range(-300.0..300.0),
            rng.random_range(300.0..5000.0),
        );
        let r = rot_z(roll) * rot_x(tilt);
        let k = Matrix3::new(f, 0.0, u0, 0.0, f, v0, 0.0, 0.0, 1.0);
        let h = Homography::from_matrix(
            &(k * Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), t])),
        )
        .unwrap();
        match principal_line(&h) {
            Ok(pl) => worst = worst.max(pl.line.signed_distance(Point2::new(u0, v0)).abs() / f),
            Err(_) => errors += 1,
        }
    }
    let mut fronto_ok = 0;
    for _ in 0..100 {
        let f = rng.random_range(500.0..15000.0);
        let roll = rng.random_range(0.0f64..360.0).to_radians();
        let r = rot_z(roll);
        let t = Vector3::new(
            rng.random_range(-300.0..300.0),
            rng.random_range(-300.0..300.0),
            rng.random_range(300.0..5000.0),
        );
        let k = Matrix3::new(f, 0.0, 3000.0, 0.0, f, 2000.0, 0.0, 0.0, 1.0);
        let h = Homography::from_matrix(
            &(k * Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), t])),
        )
        .unwrap();
        fronto_ok += (principal_line(&h) == Err(Error::DegenerateView)) as usize;
    }
    let ok = errors == 0 && worst < 1e-9 && fronto_ok == 100;
    report(
        "AC2",
        "principal-line incidence",
        ok,
        &format!("1000 homographies, max |residual|/f {worst:.2e}, {errors} errors; fronto-parallel DegenerateView {fronto_ok}/100"),
    );
    assert!(ok);
}

fn noisy(seed: u64) -> SceneConfig {
    SceneConfig {
        noise_sigma_px: 0.5,
        rng_seed: seed,
        ..SceneConfig::default()
    }
}

#[test]
fn ac3_drift_reproduction() {
    let (mut trend, mut shift) = (0, 0);
    let mut worst_dir: f64 = 0.0;
    let mut min_mono: f64 = 1.0;
    let mut shifts = Vec::new();
    for seed in 0..100 {
        let cfg = SceneConfig {
            poses: vec![PoseLabel::Down],
            ..noisy(seed)
        };
        assert_eq!(cfg.drift.drift_total, 120.0);
        let ds = generate_dataset(&cfg).unwrap();
        let pps: Vec<Point2> = ds
            .cells
            .iter()
            .map(|c| calibrate_geometric(&c.views).unwrap().intrinsics.pp)
            .collect();
        let t = analyze_trajectory(&pps).unwrap();
        let d = direction_difference_deg(t.direction_deg, cfg.drift.direction_deg());
        worst_dir = worst_dir.max(d);
        min_mono = min_mono.min(t.monotonicity);
        trend += (d <= 10.0 && t.monotonicity >= 0.9) as usize;
        shift += ((t.total_shift_px - 120.0).abs() <= 0.15 * 120.0) as usize;
        shifts.push(t.total_shift_px);
    }
    let mean = shifts.iter().sum::<f64>() / shifts.len() as f64;
    let ok = trend >= 95 && shift >= 95 && (mean - 120.0).abs() <= 18.0;
    report(
        "AC3",
        "drift reproduction",
        ok,
        &format!(
            "direction+monotonicity {trend}/100 (worst {worst_dir:.2} deg, min rho {min_mono:.3}); shift within 15% {shift}/100, mean {mean:.1} px"
        ),
    );
    assert!(ok);
}

#[test]
fn ac4_gravity_reproduction() {
    let mut good = 0;
    let mut mags = Vec::new();
    for seed in 0..100 {
        let cfg = noisy(seed);
        assert_eq!(cfg.drift.gravity_px, 15.0);
        let ds = generate_dataset(&cfg).unwrap();
        let pps: BTreeMap<(PoseLabel, usize), Point2> = ds
            .cells
            .iter()
            .map(|c| {
                (
                    (c.pose, c.setting_index),
                    calibrate_geometric(&c.views).unwrap().intrinsics.pp,
                )
            })
            .collect();
        let g = analyze_gravity(&pps, cfg.drift.drift_dir).unwrap();
        let in_band = g.mean_magnitude.len() == 3 && g.mean_magnitude.values().all(|m| (10.0..=20.0).contains(m));
        good += (in_band && g.is_triangular()) as usize;
        mags.extend(g.mean_magnitude.values().copied());
    }
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    let ok = good >= 90;
    report(
        "AC4",
        "gravity reproduction",
        ok,
        &format!("magnitudes in [10, 20] px with W/E on opposite sides: {good}/100 seeds, mean magnitude {mean:.2} px"),
    );
    assert!(ok);
}

#[test]
fn ac5_cross_validation_penalty() {
    let deltas = [0.0, 25.0, 50.0, 100.0];
    let opts = CrossValOptions::new(Method::Geometric);
    let (mut strict, mut strict_total) = (0, 0);
    let mut monotone = true;
    let mut worst_spread: f64 = 0.0;
    for seed in 0..5 {
        let mut excess: Vec<Vec<f64>> = Vec::new();
        for &delta in &deltas {
            let mut cfg = SceneConfig {
                noise_sigma_px: 0.1,
                rng_seed: seed,
                ..SceneConfig::default()
            };
            cfg.drift.gravity_px = delta;
            let rep = cross_validate(&generate_dataset(&cfg).unwrap(), &opts);
            assert_eq!(rep.absent_fraction(), 0.0);
            let mut per_setting = Vec::new();
            for s in &rep.settings {
                let m: Vec<Vec<f64>> = s.rmse.iter().map(|r| r.iter().map(|v| v.unwrap()).collect()).collect();
                if delta == 0.0 {
                    let all = m.iter().flatten();
                    let (lo, hi) = all
                        .clone()
                        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
                    let mean = all.clone().sum::<f64>() / 16.0;
                    worst_spread = worst_spread.max((hi - lo) / mean);
                } else {
                    for (a, row) in m.iter().enumerate() {
                        for (b, v) in row.iter().enumerate().filter(|&(b, _)| b != a) {
                            strict_total += 1;
                            strict += (*v > m[b][b]) as usize;
                        }
                    }
                }
                per_setting.push(s.off_diagonal_mean().unwrap() - s.diagonal_mean().unwrap());
            }
            excess.push(per_setting);
        }
        for s in 0..excess[0].len() {
            monotone &= excess.windows(2).all(|w| w[1][s] >= w[0][s]);
        }
    }
    let ok = strict == strict_total && monotone && worst_spread <= 0.05;
    report(
        "AC5",
        "cross-validation penalty",
        ok,
        &format!(
            "off-diagonal > self RMSE in {strict}/{strict_total} entries (delta 25/50/100, sigma 0.1); excess nondecreasing in delta: {monotone}; delta 0 spread {:.2}%",
            100.0 * worst_spread
        ),
    );
    assert!(ok);
}

fn read_rows(path: &Path) -> Vec<ResultRow> {
    results_from_csv(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ac6_few_views_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, out) = run(bin().args(["simulate", "--seed", "6", "--out-dir"]).arg(d));
    assert_eq!(code, 0, "{out}");
    let data = d.join("dataset.json");

    let geo = d.join("geo");
    let (geo_code, out) = run(bin()
        .args(["calibrate", "--method", "geometric", "--max-views", "2", "--input"])
        .arg(&data)
        .arg("--out-dir")
        .arg(&geo));
    let geo_rows = read_rows(&geo.join("results.csv"));
    let geo_ok = geo_code == 0 && geo_rows.len() == 28 && geo_rows.iter().all(|r| r.is_ok() && r.n_views == 2);

    let alg = d.join("alg");
    let (alg_code, _) = run(bin()
        .args(["calibrate", "--method", "algebraic", "--max-views", "2", "--input"])
        .arg(&data)
        .arg("--out-dir")
        .arg(&alg));
    let alg_rows = read_rows(&alg.join("results.csv"));
    let alg_ok = alg_code == 4 && alg_rows.len() == 28 && alg_rows.iter().all(|r| r.status == "DegenerateSystem");

    let ok = geo_ok && alg_ok;
    report(
        "AC6",
        "few views",
        ok,
        &format!(
            "--max-views 2: geometric exit {geo_code}, {}/28 cells ok; algebraic exit {alg_code}, {}/28 DegenerateSystem",
            geo_rows.iter().filter(|r| r.is_ok()).count(),
            alg_rows.iter().filter(|r| r.status == "DegenerateSystem").count()
        ),
    );
    assert!(ok, "{out}");
}

fn jacobian_worst(rng: &mut ChaCha8Rng) -> f64 {
    let intr = Intrinsics::new(
        rng.random_range(800.0..12000.0),
        rng.random_range(500.0..5500.0),
        rng.random_range(400.0..3600.0),
    );
    let mut views = Vec::new();
    let mut poses = Vec::new();
    for _ in 0..3 {
        let w = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-3.0..3.0),
        );
        let pose = Extrinsics {
            rot: exp_so3(&(w * 0.4)),
            t: Vector3::new(
                rng.random_range(-200.0..200.0),
                rng.random_range(-200.0..200.0),
                rng.random_range(800.0..3000.0),
            ),
        };
        let corrs: Vec<Correspondence> = (0..10)
            .map(|_| {
                let b = BoardPoint::new(rng.random_range(-150.0..150.0), rng.random_range(-100.0..100.0));
                let p = caliblab::calib::project(&intr, &pose, b).unwrap();
                Correspondence::new(
                    b,
                    Point2::new(p.u + rng.random_range(-1.0..1.0), p.v + rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        views.push(corrs);
        poses.push(pose);
    }
    let problem = ReprojectionProblem::new(views.iter().map(Vec::as_slice).collect(), &poses, None);
    let mut x = problem.pack(&intr, &poses);
    for i in 0..x.len() {
        x[i] += rng.random_range(-0.05..0.05);
    }
    let jac = problem.jacobian(&x);
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let h = 1e-4 * x[j].abs().max(1e-2);
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += h;
        xm[j] -= h;
        let col: DVector<f64> = (problem.residuals(&xp) - problem.residuals(&xm)) / (2.0 * h);
        let scale = col.amax().max(1e-9);
        for i in 0..col.len() {
            worst = worst.max((jac[(i, j)] - col[i]).abs() / col[i].abs().max(1e-3 * scale));
        }
    }
    worst
}

fn files_equal(a: &Path, b: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| {
        std::fs::read(a.join(n))
            .ok()
            .is_some_and(|x| Some(x) == std::fs::read(b.join(n)).ok())
    })
}

#[test]
fn ac7_numerical_hygiene() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xac7);
    let jac = (0..10).map(|_| jacobian_worst(&mut rng)).fold(0.0, f64::max);

    let ds = generate_dataset(&SceneConfig {
        noise_sigma_px: 0.5,
        rng_seed: 7,
        ..SceneConfig::default()
    })
    .unwrap();
    let mut ortho: f64 = 0.0;
    let mut rotations = 0;
    for c in ds.cells.iter().step_by(3) {
        for m in [Method::Geometric, Method::Algebraic, Method::AlgebraicRefined] {
            let r = m.calibrate(&c.views, &GeometricOptions::default()).unwrap();
            for e in &r.per_view {
                ortho = ortho.max(orthogonality_error(&e.rot));
                rotations += 1;
            }
        }
        for gt in &c.ground_truth.as_ref().unwrap().extrinsics {
            ortho = ortho.max(orthogonality_error(&gt.rot));
            rotations += 1;
        }
    }

    // Every command, twice, with different thread counts.
    let dir = tempfile::tempdir().unwrap();
    let mut stable = true;
    let runs: Vec<_> = [("1", "a"), ("4", "b")]
        .iter()
        .map(|(threads, tag)| {
            let out = dir.path().join(tag);
            let sim = run(bin()
                .env("CALIBLAB_THREADS", threads)
                .args(["simulate", "--seed", "42", "--out-dir"])
                .arg(&out));
            let data = out.join("dataset.json");
            let mut codes = vec![sim.0];
            for cmd in ["calibrate", "crossval", "analyze"] {
                let (code, _) = run(bin()
                    .env("CALIBLAB_THREADS", threads)
                    .args([cmd, "--method", "algebraic-refined", "--input"])
                    .arg(&data)
                    .arg("--out-dir")
                    .arg(&out));
                codes.push(code);
            }
            stable &= codes.iter().all(|&c| c == 0);
            out
        })
        .collect();
    let names = [
        "dataset.json",
        "results.csv",
        "crossval.csv",
        "crossval.json",
        "trajectory.csv",
        "gravity.csv",
        "pp_scatter.svg",
        "summary.json",
    ];
    let identical = files_equal(&runs[0], &runs[1], &names);

    let ok = jac < 1e-4 && ortho < 1e-9 && stable && identical;
    report(
        "AC7",
        "numerical hygiene",
        ok,
        &format!(
            "Jacobian max rel err {jac:.2e} over 10 configs; max |RtR - I| {ortho:.2e} over {rotations} rotations; outputs byte-identical across runs: {identical}"
        ),
    );
    assert!(ok);
}

/// Shifts the corners on one side of the view's principal line by `px`
/// along the line, the way uneven lighting drags one half of the board.
fn shear_half(view: &CalibrationView, side: f64, px: f64) -> CalibrationView {
    let pl = view.principal_line.as_ref().unwrap().line;
    let corrs = view
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

#[test]
fn ac8_outlier_screening() {
    let (mut flagged, mut accurate) = (0, 0);
    let (mut worst_pp, mut worst_f): (f64, f64) = (0.0, 0.0);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SceneConfig {
            rng_seed: seed,
            poses: vec![PoseLabel::Down],
            ..CameraPreset::Cam1.scene()
        };
        let ds = generate_dataset(&cfg).unwrap();
        let cell = &ds.cells[rng.random_range(0..ds.cells.len())];
        let gt = cell.ground_truth.as_ref().unwrap().intrinsics;
        let bad = rng.random_range(0..cell.views.len());
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let px = if rng.random_bool(0.5) { 3.0 } else { -3.0 };
        let mut views = cell.views.clone();
        views[bad] = shear_half(&views[bad], side, px);

        let r = calibrate_geometric(&views).unwrap();
        flagged += (r.flags == [views[bad].id.clone()]) as usize;
        let (e_pp, e_f) = (r.intrinsics.pp.dist(&gt.pp), (r.intrinsics.f / gt.f - 1.0).abs());
        worst_pp = worst_pp.max(e_pp);
        worst_f = worst_f.max(e_f);
        // Ten times the noise-free tolerances of AC1.
        accurate += (e_pp < 0.1 && e_f < 1e-3) as usize;
    }
    let ok = flagged >= 95 && accurate >= 95;
    report(
        "AC8",
        "outlier screening",
        ok,
        &format!("corrupted view flagged {flagged}/100; within 10x tolerance {accurate}/100 (max pp err {worst_pp:.2e} px, f rel {worst_f:.2e})"),
    );
    assert!(ok);
}
