//! Single-run pipeline: integrate, trace the center path, annotate, fit
//! rates, check the energy bound, and persist CSV, SVG, and manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use tikhoflow_core::diagnostics::{
    annotate, energy_bound_check, fit_rate, Column, EnergyBoundReport, RateFit, Regressor,
    TrajectorySample,
};
use tikhoflow_core::flows::{integrate, FlowKind, FlowSystem, Trajectory};
use tikhoflow_core::linalg;
use tikhoflow_core::report::{line_chart_loglog, write_csv, Series};
use tikhoflow_core::schedules::{check_hbeta, log_grid, suggest_mu, HBetaReport};
use tikhoflow_core::tikhonov::center_path;
use tikhoflow_core::Error;

use crate::config::RunSetup;

/// Inner solver tolerance for points on the center path.
pub const CENTER_TOL: f64 = 1e-13;
/// Trailing fraction of samples used by the rate fits.
pub const FIT_WINDOW: f64 = 0.25;
/// Fraction of the horizon where the energy-bound reference time t1 sits.
pub const T1_FRACTION: f64 = 0.5;
/// Fixed grid on which schedule admissibility is judged. The hypotheses are
/// asymptotic, so the grid is independent of the run horizon.
const HBETA_GRID: (f64, f64, usize) = (10.0, 1e6, 400);

const FIT_SPECS: [(&str, Column, Regressor); 3] = [
    ("f_gap", Column::FGap, Regressor::LogBeta),
    ("grad_norm_sq", Column::GradNormSq, Regressor::LogBeta),
    ("dist_minnorm_sq", Column::DistMinnormSq, Regressor::LogT),
];

const PLOT_COLUMNS: [Column; 5] = [
    Column::FGap,
    Column::GradNormSq,
    Column::DistCenterSq,
    Column::DistMinnormSq,
    Column::Energy,
];

/// A pipeline failure tagged with the phase that produced it.
#[derive(Debug)]
pub struct PhaseError {
    pub phase: &'static str,
    pub message: String,
    pub config_class: bool,
}

impl PhaseError {
    fn from_core(phase: &'static str, e: &Error) -> PhaseError {
        PhaseError {
            phase,
            message: e.to_string(),
            config_class: matches!(e, Error::Config(_) | Error::UnsupportedProblem(_)),
        }
    }

    fn io(phase: &'static str, what: &str, e: &std::io::Error) -> PhaseError {
        PhaseError {
            phase,
            message: format!("{what}: {e}"),
            config_class: false,
        }
    }
}

impl std::fmt::Display for PhaseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "phase {}: {}", self.phase, self.message)
    }
}

/// Either a computed report or the error that prevented it, kept inline in
/// the manifest so a single failed diagnostic never sinks the run.
#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Outcome<T> {
    Ok(T),
    Err { error: String },
}

impl<T> Outcome<T> {
    fn from_result(r: tikhoflow_core::Result<T>) -> Outcome<T> {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Err { error: e.to_string() },
        }
    }

    pub fn as_ok(&self) -> Option<&T> {
        match self {
            Outcome::Ok(v) => Some(v),
            Outcome::Err { .. } => None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub label: String,
    pub status: &'static str,
    pub failed_phase: Option<String>,
    pub error: Option<String>,
    pub config: BTreeMap<String, String>,
    pub method: Option<&'static str>,
    pub wall_time_s: f64,
    pub sample_count: usize,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evals: u64,
    pub jacobian_evals: u64,
    pub mu: Option<f64>,
    pub mu_source: Option<&'static str>,
    pub hbeta: Option<HBetaReport>,
    pub rate_fits: BTreeMap<&'static str, Outcome<RateFit>>,
    pub energy_bound: Option<Outcome<EnergyBoundReport>>,
    /// max over the trailing half of dist_center_sq / (e^{-mu t} + beta'/beta)
    pub center_ratio_max: Option<f64>,
    pub final_sample: Option<TrajectorySample>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    /// Manifest for a run that died in `phase`; written by the comparison
    /// harness so failed members stay visible next to their peers.
    pub fn failed(setup: &RunSetup, err: &PhaseError) -> RunManifest {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            label: setup.label.clone(),
            status: "failed",
            failed_phase: Some(err.phase.to_string()),
            error: Some(err.message.clone()),
            config: setup.echo.clone(),
            method: None,
            wall_time_s: 0.0,
            sample_count: 0,
            accepted_steps: 0,
            rejected_steps: 0,
            rhs_evals: 0,
            jacobian_evals: 0,
            mu: None,
            mu_source: None,
            hbeta: None,
            rate_fits: BTreeMap::new(),
            energy_bound: None,
            center_ratio_max: None,
            final_sample: None,
            artifacts: Vec::new(),
        }
    }
}

pub struct RunOutput {
    pub manifest: RunManifest,
    pub rows: Vec<TrajectorySample>,
}

pub fn build_system<'a>(setup: &'a RunSetup) -> tikhoflow_core::Result<FlowSystem<'a>> {
    match setup.kind {
        FlowKind::TikhonovFirstOrder => {
            let schedule = setup
                .schedule
                .ok_or_else(|| Error::Config("first-order flow needs a schedule".into()))?;
            FlowSystem::first_order(&setup.problem, schedule, setup.c)
        }
        kind => FlowSystem::comparator(kind, &setup.problem),
    }
}

fn initial_state(setup: &RunSetup) -> Vec<f64> {
    let mut z0 = setup.x0.clone();
    if setup.kind.is_second_order() {
        match &setup.v0 {
            Some(v) => z0.extend_from_slice(v),
            None => z0.extend(std::iter::repeat(0.0).take(setup.x0.len())),
        }
    }
    z0
}

/// Runs the full pipeline and writes run.csv, one SVG per diagnostic
/// column, and manifest.json into `out_dir`. Any partial files are removed
/// on failure.
pub fn execute(setup: &RunSetup, out_dir: &Path) -> Result<RunOutput, PhaseError> {
    let start = Instant::now();

    let system = build_system(setup).map_err(|e| PhaseError::from_core("setup", &e))?;
    let (csched, cc) = system.center_model();

    let grid = log_grid(HBETA_GRID.0, HBETA_GRID.1, HBETA_GRID.2)
        .map_err(|e| PhaseError::from_core("checkschedule", &e))?;
    let (mu, mu_source, hbeta) = match setup.mu {
        Some(m) => {
            let rep = check_hbeta(&csched, cc, m, &grid)
                .map_err(|e| PhaseError::from_core("checkschedule", &e))?;
            (Some(m), Some("run.mu"), Some(rep))
        }
        None => match suggest_mu(&csched, cc, &grid) {
            Ok(m) => {
                let rep = check_hbeta(&csched, cc, m, &grid)
                    .map_err(|e| PhaseError::from_core("checkschedule", &e))?;
                (Some(m), Some("suggested"), Some(rep))
            }
            // an inadmissible schedule degrades the diagnostics but is
            // still a perfectly integrable system; record and continue
            Err(Error::ScheduleRejected { report, .. }) => (None, None, Some(*report)),
            Err(e) => return Err(PhaseError::from_core("checkschedule", &e)),
        },
    };

    let z0 = initial_state(setup);
    let traj: Trajectory = integrate(
        &system,
        &z0,
        setup.t0,
        setup.t_end,
        &setup.integrator,
        |_| {},
    )
    .map_err(|e| PhaseError::from_core("integrate", &e))?;

    let ts: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let centers = center_path(&setup.problem, &csched, cc, &ts, CENTER_TOL)
        .map_err(|e| PhaseError::from_core("center_path", &e))?;

    let rows = annotate(&setup.problem, &csched, cc, &traj.samples, &centers)
        .map_err(|e| PhaseError::from_core("annotate", &e))?;

    let mut rate_fits = BTreeMap::new();
    for (name, column, regressor) in FIT_SPECS {
        rate_fits.insert(
            name,
            Outcome::from_result(fit_rate(&rows, column, regressor, FIT_WINDOW)),
        );
    }

    let (energy_bound, center_ratio_max) = match mu {
        None => (None, None),
        Some(m) => {
            let xsq = setup
                .problem
                .min_norm_solution
                .as_deref()
                .map(linalg::norm_sq)
                .unwrap_or(f64::NAN);
            let bound = Outcome::from_result(energy_bound_check(
                &rows, &csched, cc, m, T1_FRACTION, xsq,
            ));
            (Some(bound), center_ratio_tail_max(&rows, &csched, m))
        }
    };

    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        label: setup.label.clone(),
        status: "ok",
        failed_phase: None,
        error: None,
        config: setup.echo.clone(),
        method: Some(traj.method.name()),
        wall_time_s: 0.0,
        sample_count: rows.len(),
        accepted_steps: traj.accepted,
        rejected_steps: traj.rejected,
        rhs_evals: traj.n_rhs,
        jacobian_evals: traj.n_jac,
        mu,
        mu_source,
        hbeta,
        rate_fits,
        energy_bound,
        center_ratio_max,
        final_sample: rows.last().cloned(),
        artifacts: Vec::new(),
    };

    write_outputs(setup, &rows, &mut manifest, out_dir, start)?;
    Ok(RunOutput { manifest, rows })
}

/// max over the trailing half of the samples of
/// dist_center_sq / (e^{-mu t} + beta'(t)/beta(t)).
fn center_ratio_tail_max(
    rows: &[TrajectorySample],
    schedule: &tikhoflow_core::schedules::ScheduleSpec,
    mu: f64,
) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let tail = &rows[rows.len() / 2..];
    let mut max: Option<f64> = None;
    for s in tail {
        let Ok(gr) = schedule.growth_ratio(s.t) else {
            continue;
        };
        let den = (-mu * s.t).exp() + gr;
        if den > 0.0 {
            let ratio = s.dist_center_sq / den;
            max = Some(max.map_or(ratio, |m: f64| m.max(ratio)));
        }
    }
    max
}

fn write_outputs(
    setup: &RunSetup,
    rows: &[TrajectorySample],
    manifest: &mut RunManifest,
    out_dir: &Path,
    start: Instant,
) -> Result<(), PhaseError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| PhaseError::io("write", &format!("create {}", out_dir.display()), &e))?;

    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<(), PhaseError> {
        let csv_path = out_dir.join("run.csv");
        let mut csv = Vec::new();
        write_csv(&mut csv, rows)
            .map_err(|e| PhaseError::io("write", "format run.csv", &e))?;
        fs::write(&csv_path, csv)
            .map_err(|e| PhaseError::io("write", "write run.csv", &e))?;
        written.push(csv_path);
        manifest.artifacts.push("run.csv".into());

        for column in PLOT_COLUMNS {
            let series = vec![Series {
                label: setup.label.clone(),
                points: rows.iter().map(|s| (s.t, column.value(s))).collect(),
            }];
            let svg = line_chart_loglog(
                &format!("{} on {}", setup.label, setup.problem.name),
                "t",
                column.name(),
                &series,
            );
            let name = format!("{}.svg", column.name());
            let path = out_dir.join(&name);
            fs::write(&path, svg)
                .map_err(|e| PhaseError::io("write", &format!("write {name}"), &e))?;
            written.push(path);
            manifest.artifacts.push(name);
        }

        manifest.wall_time_s = start.elapsed().as_secs_f64();
        let path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| PhaseError::io("write", "encode manifest", &std::io::Error::other(e)))?;
        fs::write(&path, json + "\n")
            .map_err(|e| PhaseError::io("write", "write manifest.json", &e))?;
        Ok(())
    })();

    if let Err(e) = result {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        return Err(e);
    }
    Ok(())
}

/// Writes only a manifest (used for failed comparison members).
pub fn write_failed_manifest(
    setup: &RunSetup,
    err: &PhaseError,
    out_dir: &Path,
) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let manifest = RunManifest::failed(setup, err);
    let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    let mut f = fs::File::create(out_dir.join("manifest.json"))?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")
}
