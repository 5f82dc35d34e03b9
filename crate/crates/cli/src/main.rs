use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use caliblab::calib::{CalibrationResult, GeometricOptions, Method};
use caliblab::eval::{analyze_gravity, analyze_trajectory, cross_validate, CrossValOptions};
use caliblab::io::{self, AnalysisSummary, Command, PpSeries, ResultRow, RunConfig};
use caliblab::synth::{generate_dataset, Dataset, DriftModel, PoseLabel};
use caliblab::Error;
use clap::{Parser, Subcommand};
use rayon::prelude::*;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_GENERATION: u8 = 3;
const EXIT_CALIBRATION: u8 = 4;
const EXIT_MISSING_CELLS: u8 = 5;

/// Largest share of absent cross-validation entries that still counts as success.
const MAX_ABSENT_FRACTION: f64 = 0.25;

#[derive(Parser, Debug)]
#[command(name = "caliblab", version, about = "Planar-target camera calibration lab")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset JSON (or results CSV for analyze).
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// geometric | algebraic | algebraic-refined
    #[arg(long, global = true)]
    method: Option<Method>,

    /// Random seed for simulate.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Camera preset for simulate (cam1..cam4).
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Use at most this many views per cell.
    #[arg(long, global = true)]
    max_views: Option<usize>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Leave-one-out principal-line rejection distance (px).
    #[arg(long, global = true)]
    pl_outlier_px: Option<f64>,

    /// Skip Levenberg–Marquardt steps.
    #[arg(long, global = true)]
    no_refine: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Generate a synthetic dataset.
    Simulate,
    /// Calibrate every (pose, focal setting) cell.
    Calibrate,
    /// Cross-pose reprojection matrix per focal setting.
    Crossval,
    /// Principal-point trajectories and gravity offsets.
    Analyze,
}

impl Cmd {
    fn command(self) -> Command {
        match self {
            Cmd::Simulate => Command::Simulate,
            Cmd::Calibrate => Command::Calibrate,
            Cmd::Crossval => Command::Crossval,
            Cmd::Analyze => Command::Analyze,
        }
    }
}

/// Error carrying the process exit code.
struct Fail {
    code: u8,
    err: anyhow::Error,
}

impl Fail {
    fn new(code: u8, err: impl Into<anyhow::Error>) -> Self {
        Self { code, err: err.into() }
    }
}

impl From<anyhow::Error> for Fail {
    fn from(err: anyhow::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            err,
        }
    }
}

fn config_error(e: impl Into<anyhow::Error>) -> Fail {
    Fail::new(EXIT_CONFIG, e)
}

/// Settings after merging file and flags.
struct Run {
    cfg: RunConfig,
    method: Method,
    refine: bool,
    out_dir: PathBuf,
    geometric: GeometricOptions,
}

fn resolve(cli: &Cli) -> Result<Run, Fail> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(config_error)?,
        None => RunConfig::default(),
    };
    let command = cli.command.command();
    if let Some(c) = cfg.command {
        if c != command {
            eprintln!(
                "note: config names command {}, running {}",
                c.as_str(),
                command.as_str()
            );
        }
    }
    if cli.input.is_some() {
        cfg.input.clone_from(&cli.input);
    }
    if cli.out_dir.is_some() {
        cfg.out_dir.clone_from(&cli.out_dir);
    }
    if cli.method.is_some() {
        cfg.method = cli.method;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.max_views.is_some() {
        cfg.max_views = cli.max_views;
    }
    if cli.pl_outlier_px.is_some() {
        cfg.pl_outlier_px = cli.pl_outlier_px;
    }
    if cli.no_refine {
        cfg.refine = Some(false);
    }
    if let Some(p) = &cli.preset {
        // A preset flag replaces the base scene but keeps file overrides out.
        cfg.preset = Some(p.clone());
        cfg.scene = Some(io::scene_from_table(Some(p), None).map_err(config_error)?);
    }
    if command == Command::Simulate {
        let mut scene = cfg.scene.clone().unwrap_or_default();
        if let Some(seed) = cfg.seed {
            scene.rng_seed = seed;
        }
        cfg.scene = Some(scene);
    }
    cfg.validate(command).map_err(config_error)?;

    let mut geometric = GeometricOptions::default();
    if let Some(px) = cfg.pl_outlier_px {
        geometric.outlier_px = px;
    }
    if let Some(c) = cfg.max_condition {
        geometric.max_condition = c;
    }
    Ok(Run {
        method: cfg.method.unwrap_or(Method::Geometric),
        refine: cfg.refine.unwrap_or(true),
        out_dir: cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("caliblab-out")),
        geometric,
        cfg,
    })
}

fn configure_threads() -> Result<(), Fail> {
    let Ok(raw) = std::env::var("CALIBLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| config_error(anyhow!("CALIBLAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Fail::new(EXIT_FAILURE, e))
}

fn write(path: &Path, text: &str) -> Result<(), Fail> {
    io::write_atomic(path, text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Fail::from)
}

fn load_dataset(run: &Run) -> Result<Dataset, Fail> {
    let path = run.cfg.input.as_ref().expect("validated");
    let mut ds = io::read_dataset(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Fail::from)?;
    if let Some(n) = run.cfg.max_views {
        ds.truncate_views(n);
    }
    Ok(ds)
}

/// Method actually run: refinement is dropped under `--no-refine`.
fn effective_method(run: &Run) -> Method {
    match run.method {
        Method::AlgebraicRefined if !run.refine => Method::Algebraic,
        m => m,
    }
}

fn calibrate_cells(ds: &Dataset, method: Method, geo: &GeometricOptions) -> Vec<caliblab::Result<CalibrationResult>> {
    ds.cells.par_iter().map(|c| method.calibrate(&c.views, geo)).collect()
}

fn simulate(run: &Run) -> Result<(), Fail> {
    let scene = run.cfg.scene.as_ref().expect("resolved");
    let ds = generate_dataset(scene).map_err(|e| match e {
        Error::InvalidConfig(_) => config_error(e),
        e => Fail::new(EXIT_GENERATION, e),
    })?;
    let path = run.out_dir.join("dataset.json");
    io::write_dataset(&path, &ds)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Fail::from)?;
    println!(
        "wrote {} ({} cells, {} views)",
        path.display(),
        ds.cells.len(),
        ds.num_views()
    );
    Ok(())
}

fn calibrate(run: &Run) -> Result<(), Fail> {
    let ds = load_dataset(run)?;
    let method = effective_method(run);
    let outcomes = calibrate_cells(&ds, method, &run.geometric);
    let rows: Vec<ResultRow> = ds
        .cells
        .iter()
        .zip(&outcomes)
        .map(|(c, o)| ResultRow::new(c, method, o))
        .collect();
    let path = run.out_dir.join("results.csv");
    write(
        &path,
        &io::results_to_csv(&rows).map_err(|e| Fail::new(EXIT_FAILURE, e))?,
    )?;

    let failed: Vec<String> = ds
        .cells
        .iter()
        .zip(&outcomes)
        .filter_map(|(c, o)| {
            o.as_ref()
                .err()
                .map(|e| format!("{} @ {} mm: {e}", c.pose, c.setting.label_mm))
        })
        .collect();
    println!("wrote {} ({} rows, method {method})", path.display(), rows.len());
    if failed.is_empty() {
        Ok(())
    } else {
        for f in &failed {
            eprintln!("calibration failed: {f}");
        }
        Err(Fail::new(
            EXIT_CALIBRATION,
            anyhow!("{} of {} cells failed", failed.len(), rows.len()),
        ))
    }
}

fn crossval(run: &Run) -> Result<(), Fail> {
    let ds = load_dataset(run)?;
    let opts = CrossValOptions {
        method: effective_method(run),
        geometric: run.geometric,
        refine_pose: run.refine,
    };
    let report = cross_validate(&ds, &opts);
    write(&run.out_dir.join("crossval.csv"), &io::crossval_to_csv(&report))?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Fail::new(EXIT_FAILURE, e))?;
    write(&run.out_dir.join("crossval.json"), &(json + "\n"))?;
    for n in &report.notices {
        eprintln!("notice: {n}");
    }
    let absent = report.absent_fraction();
    println!(
        "wrote {} (absent {:.0}%)",
        run.out_dir.join("crossval.csv").display(),
        100.0 * absent
    );
    if absent > MAX_ABSENT_FRACTION {
        return Err(Fail::new(
            EXIT_MISSING_CELLS,
            anyhow!("{:.0}% of cross-validation entries absent", 100.0 * absent),
        ));
    }
    Ok(())
}

fn analyze(run: &Run) -> Result<(), Fail> {
    let input = run.cfg.input.as_ref().expect("validated");
    let method = effective_method(run);
    let mut notices = Vec::new();

    let (camera_id, rows) = if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = std::fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))
            .map_err(Fail::from)?;
        let rows = io::results_from_csv(&text)
            .with_context(|| format!("parsing {}", input.display()))
            .map_err(Fail::from)?;
        (String::new(), rows)
    } else {
        let ds = load_dataset(run)?;
        let outcomes = calibrate_cells(&ds, method, &run.geometric);
        let rows: Vec<ResultRow> = ds
            .cells
            .iter()
            .zip(&outcomes)
            .map(|(c, o)| ResultRow::new(c, method, o))
            .collect();
        write(
            &run.out_dir.join("results.csv"),
            &io::results_to_csv(&rows).map_err(|e| Fail::new(EXIT_FAILURE, e))?,
        )?;
        (ds.camera_id, rows)
    };

    let mut labels: Vec<f64> = rows.iter().map(|r| r.focal_label_mm).collect();
    labels.sort_by(f64::total_cmp);
    labels.dedup();

    let mut series = PpSeries::new();
    let mut by_cell = BTreeMap::new();
    for r in &rows {
        match r.pp() {
            Some(pp) if r.is_ok() => {
                let setting = caliblab::synth::FocalSetting {
                    label_mm: r.focal_label_mm,
                    f_px: r.focal_px,
                };
                series.entry(r.pose).or_default().push((setting, pp));
                let idx = labels.iter().position(|&m| m == r.focal_label_mm).expect("collected");
                by_cell.insert((r.pose, idx), pp);
            }
            _ => notices.push(format!("{} @ {} mm skipped: {}", r.pose, r.focal_label_mm, r.status)),
        }
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.label_mm.total_cmp(&b.0.label_mm));
    }

    let mut trajectories = BTreeMap::new();
    for (pose, pts) in &series {
        let pps: Vec<_> = pts.iter().map(|(_, p)| *p).collect();
        match analyze_trajectory(&pps) {
            Ok(t) => {
                trajectories.insert(*pose, t);
            }
            Err(e) => notices.push(format!("trajectory {pose}: {e}")),
        }
    }

    let reference = trajectories
        .get(&PoseLabel::Down)
        .map(|t| t.direction_deg)
        .or_else(|| run.cfg.scene.as_ref().map(|s| s.drift.direction_deg()))
        .unwrap_or_else(|| DriftModel::default().direction_deg());
    let tipped = by_cell.keys().any(|(p, _)| *p != PoseLabel::Down);
    let gravity = if tipped {
        // Only settings where DOWN calibrated can anchor the offsets.
        let anchored: BTreeMap<_, _> = by_cell
            .iter()
            .filter(|((_, s), _)| by_cell.contains_key(&(PoseLabel::Down, *s)))
            .map(|(k, v)| (*k, *v))
            .collect();
        match analyze_gravity(&anchored, DriftModel::direction_from_angle(reference)) {
            Ok(g) if !g.per_setting.is_empty() => Some(g),
            Ok(_) => {
                notices.push("gravity: no setting with a DOWN reference".into());
                None
            }
            Err(e) => {
                notices.push(format!("gravity: {e}"));
                None
            }
        }
    } else {
        notices.push("gravity: dataset has no tipped poses".into());
        None
    };

    write(&run.out_dir.join("trajectory.csv"), &io::trajectory_to_csv(&series))?;
    if let Some(g) = &gravity {
        write(&run.out_dir.join("gravity.csv"), &io::gravity_to_csv(g))?;
    }
    let title = if camera_id.is_empty() {
        method.to_string()
    } else {
        format!("{camera_id} {method}")
    };
    write(
        &run.out_dir.join("pp_scatter.svg"),
        &io::pp_scatter_svg(&series, &title),
    )?;

    for n in &notices {
        eprintln!("notice: {n}");
    }
    if let Some(t) = trajectories.get(&PoseLabel::Down) {
        println!(
            "DOWN trajectory: direction {:.2} deg, monotonicity {:.3}, total shift {:.1} px",
            t.direction_deg, t.monotonicity, t.total_shift_px
        );
    }
    if let Some(g) = &gravity {
        for (pose, m) in &g.mean_magnitude {
            println!("{pose} mean offset {m:.1} px");
        }
    }
    let summary = AnalysisSummary {
        camera_id,
        method,
        trajectories,
        gravity,
        reference_direction_deg: Some(reference),
        notices,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Fail::new(EXIT_FAILURE, e))?;
    write(&run.out_dir.join("summary.json"), &(json + "\n"))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| {
        let run = resolve(&cli)?;
        match cli.command {
            Cmd::Simulate => simulate(&run),
            Cmd::Calibrate => calibrate(&run),
            Cmd::Crossval => crossval(&run),
            Cmd::Analyze => analyze(&run),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
