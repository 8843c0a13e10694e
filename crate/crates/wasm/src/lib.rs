//! JSON string bindings for the browser demo page.
//!
//! Each export takes one JSON options object and returns a JSON string;
//! failures come back embedded as `{"error": "..."}` rather than as thrown
//! exceptions. Keeping the boundary at plain strings means every function
//! also runs natively, so `cargo test` covers this crate without a wasm
//! runtime.

use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use tikhoflow_core::diagnostics::{annotate, fit_rate, Column, Regressor, TrajectorySample};
use tikhoflow_core::flows::{integrate, FlowKind, FlowSystem, IntegratorConfig};
use tikhoflow_core::problems::{builtin_problem, Params, ProblemSpec};
use tikhoflow_core::report::{line_chart_loglog, Series};
use tikhoflow_core::schedules::{check_hbeta, log_grid, suggest_mu, ScheduleSpec};
use tikhoflow_core::tikhonov::center_path;

/// Step budget sized for an interactive page: generous enough for every
/// feasible demo horizon, small enough that an infeasible request fails in
/// seconds instead of minutes.
const MAX_STEPS: u64 = 4_000_000;
const CENTER_TOL: f64 = 1e-12;

/// Past roughly t = 20 the trisae velocity equation is a cancellation between
/// beta grad f and the Tikhonov pull, and round-off in grad f amplified by
/// beta = 2 t^2 exp(2 t^0.8) exceeds any usable tolerance. Refuse early with
/// an explanation instead of burning the step budget.
const TRISAE_T_MAX: f64 = 16.0;

fn parse<'a, T: Deserialize<'a>>(options: &'a str) -> Result<T, String> {
    serde_json::from_str(options).map_err(|e| format!("invalid options: {e}"))
}

fn err(e: tikhoflow_core::Error) -> String {
    e.to_string()
}

fn render(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleOptions {
    family: String,
    #[serde(default)]
    m: f64,
    #[serde(default)]
    p: f64,
    gamma: Option<f64>,
    r: Option<f64>,
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ScheduleOptions {
    fn build(&self) -> Result<ScheduleSpec, String> {
        let spec = match self.family.as_str() {
            "power_log" => ScheduleSpec::power_log(self.m, self.p),
            "power_exp" => {
                let gamma = self.gamma.ok_or("power_exp needs gamma")?;
                let r = self.r.ok_or("power_exp needs r")?;
                ScheduleSpec::power_exp(self.m, gamma, r)
            }
            other => {
                return Err(format!(
                    "unknown schedule family {other:?}; expected power_log or power_exp"
                ))
            }
        };
        spec.and_then(|s| s.with_scale(self.scale)).map_err(err)
    }
}

fn build_problem(name: &str, a: Option<&[f64]>, dim_hint: usize) -> Result<ProblemSpec, String> {
    let params = match name {
        "quadratic_shift" => Params::new().set_vector("a", a.unwrap_or(&[0.7, -0.4]).to_vec()),
        "zero" => Params::new().set_real("dim", dim_hint as f64),
        _ => Params::new(),
    };
    builtin_problem(name, &params).map_err(err)
}

fn column_by_name(name: &str) -> Result<Column, String> {
    [
        Column::FGap,
        Column::GradNormSq,
        Column::DistCenterSq,
        Column::DistMinnormSq,
        Column::Energy,
    ]
    .into_iter()
    .find(|c| c.name() == name)
    .ok_or_else(|| {
        format!(
            "unknown column {name:?}; expected f_gap, grad_norm_sq, dist_center_sq, \
             dist_minnorm_sq or energy"
        )
    })
}

/// One series per convergence column, for the single-run chart.
fn column_series(rows: &[TrajectorySample]) -> Vec<Series> {
    [
        Column::FGap,
        Column::GradNormSq,
        Column::DistCenterSq,
        Column::DistMinnormSq,
        Column::Energy,
    ]
    .into_iter()
    .map(|col| Series {
        label: col.name().to_string(),
        points: rows.iter().map(|r| (r.t, col.value(r))).collect(),
    })
    .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateOptions {
    #[serde(default = "default_problem")]
    problem: String,
    a: Option<Vec<f64>>,
    schedule: ScheduleOptions,
    #[serde(default = "default_c")]
    c: f64,
    #[serde(default = "default_t_end")]
    t_end: f64,
    x0: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_problem() -> String {
    "example1".into()
}

fn default_c() -> f64 {
    5.0
}

fn default_t_end() -> f64 {
    100.0
}

fn default_samples() -> usize {
    300
}

/// Integrate the first-order flow x' + beta(t) grad f + c x = 0 and report
/// the annotated run as a log-log SVG chart plus fitted decay rates.
///
/// Options: `problem` (example1, quadratic_shift with optional shift `a`, or
/// zero), `schedule` ({family, m, p, gamma, r, scale}), `c`, `t_end`, `x0`,
/// `samples`. Returns {svg, fits, final, accepted_steps, rhs_evals, method}.
#[wasm_bindgen]
pub fn simulate(options: &str) -> String {
    render(simulate_impl(options))
}

fn simulate_impl(options: &str) -> Result<Value, String> {
    let opt: SimulateOptions = parse(options)?;
    let dim_hint = opt.x0.as_ref().map_or(2, Vec::len);
    let problem = build_problem(&opt.problem, opt.a.as_deref(), dim_hint)?;
    let schedule = opt.schedule.build()?;
    let system = FlowSystem::first_order(&problem, schedule, opt.c).map_err(err)?;

    let x0 = opt.x0.unwrap_or_else(|| vec![1.0; problem.dimension]);
    let cfg = IntegratorConfig {
        samples: opt.samples,
        max_steps: MAX_STEPS,
        ..IntegratorConfig::default()
    };
    let traj = integrate(&system, &x0, 1.0, opt.t_end, &cfg, |_| {}).map_err(err)?;

    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let centers = center_path(&problem, &schedule, opt.c, &times, CENTER_TOL).map_err(err)?;
    let rows = annotate(&problem, &schedule, opt.c, &traj.samples, &centers).map_err(err)?;

    let mut fits = serde_json::Map::new();
    for (col, reg) in [
        (Column::FGap, Regressor::LogBeta),
        (Column::GradNormSq, Regressor::LogBeta),
        (Column::DistMinnormSq, Regressor::LogT),
    ] {
        fits.insert(col.name().to_string(), json!(fit_rate(&rows, col, reg, 0.25).ok()));
    }

    let svg = line_chart_loglog(
        &format!("first-order flow on {}", problem.name),
        "t",
        "value",
        &column_series(&rows),
    );
    Ok(json!({
        "svg": svg,
        "fits": fits,
        "final": rows.last(),
        "accepted_steps": traj.accepted,
        "rhs_evals": traj.n_rhs,
        "method": traj.method.name(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckOptions {
    schedule: ScheduleOptions,
    #[serde(default = "default_c")]
    c: f64,
    mu: Option<f64>,
}

/// Run the schedule admissibility check at `mu` (default c/2) on the
/// reference grid and suggest the largest admissible dyadic mu. Same report
/// shape as the command-line `checkschedule`.
#[wasm_bindgen]
pub fn check_schedule(options: &str) -> String {
    render(check_impl(options))
}

fn check_impl(options: &str) -> Result<Value, String> {
    let opt: CheckOptions = parse(options)?;
    let schedule = opt.schedule.build()?;
    let grid = log_grid(10.0, 1e6, 400).map_err(err)?;
    let mu = opt.mu.unwrap_or(opt.c / 2.0);
    let report = check_hbeta(&schedule, opt.c, mu, &grid).map_err(err)?;
    let suggested = suggest_mu(&schedule, opt.c, &grid).ok();
    Ok(json!({ "report": report, "suggested_mu": suggested }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareOptions {
    #[serde(default = "default_kinds")]
    kinds: Vec<String>,
    #[serde(default = "default_compare_t_end")]
    t_end: f64,
    #[serde(default = "default_column")]
    column: String,
}

fn default_kinds() -> Vec<String> {
    vec!["tral".into(), "trisal".into(), "trisg".into()]
}

fn default_compare_t_end() -> f64 {
    15.0
}

fn default_column() -> String {
    "f_gap".into()
}

/// Integrate several flow kinds on example1 from the same start and overlay
/// one convergence column. `tikhonov_first_order` runs with the reference
/// schedule 2 t^2 ln^2 t, c = 5.
///
/// Options: `kinds` (two or more of tikhonov_first_order, tral, trae,
/// trisal, trisae, trisg, trish), `t_end`, `column`. Returns {svg, column,
/// t_end, final}.
#[wasm_bindgen]
pub fn compare_systems(options: &str) -> String {
    render(compare_impl(options))
}

fn compare_impl(options: &str) -> Result<Value, String> {
    let opt: CompareOptions = parse(options)?;
    if opt.kinds.len() < 2 {
        return Err("compare needs at least two kinds".into());
    }
    let column = column_by_name(&opt.column)?;
    let problem = build_problem("example1", None, 2)?;

    let mut series = Vec::new();
    let mut finals = serde_json::Map::new();
    for name in &opt.kinds {
        let kind = FlowKind::from_name(name).map_err(err)?;
        if kind == FlowKind::Trisae && opt.t_end > TRISAE_T_MAX {
            return Err(format!(
                "trisae runs out of double precision shortly after t = 20; \
                 pick t_end <= {TRISAE_T_MAX}"
            ));
        }
        let system = if kind == FlowKind::TikhonovFirstOrder {
            let schedule = ScheduleSpec::power_log(2.0, 2.0)
                .and_then(|s| s.with_scale(2.0))
                .map_err(err)?;
            FlowSystem::first_order(&problem, schedule, 5.0)
        } else {
            FlowSystem::comparator(kind, &problem)
        }
        .map_err(err)?;

        let mut z0 = vec![1.0; problem.dimension];
        if kind.is_second_order() {
            z0.extend(std::iter::repeat(0.0).take(problem.dimension));
        }
        let cfg = IntegratorConfig {
            samples: 250,
            max_steps: MAX_STEPS,
            ..IntegratorConfig::default()
        };
        let prefix = |e: tikhoflow_core::Error| format!("{name}: {e}");
        let traj = integrate(&system, &z0, 1.0, opt.t_end, &cfg, |_| {}).map_err(prefix)?;

        let (model_schedule, model_c) = system.center_model();
        let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        let centers =
            center_path(&problem, &model_schedule, model_c, &times, CENTER_TOL).map_err(prefix)?;
        let rows =
            annotate(&problem, &model_schedule, model_c, &traj.samples, &centers).map_err(prefix)?;

        finals.insert(name.clone(), json!(column.value(rows.last().unwrap())));
        series.push(Series {
            label: name.clone(),
            points: rows.iter().map(|r| (r.t, column.value(r))).collect(),
        });
    }

    let svg = line_chart_loglog(
        &format!("{} on example1", column.name()),
        "t",
        column.name(),
        &series,
    );
    Ok(json!({ "svg": svg, "column": column.name(), "t_end": opt.t_end, "final": finals }))
}
