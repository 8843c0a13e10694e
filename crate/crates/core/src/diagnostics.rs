//! Convergence diagnostics: annotated trajectories, log-log rate fits, the
//! energy decay bound and the smooth-convex descent inequalities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::FlowState;
use crate::linalg;
use crate::problems::ProblemSpec;
use crate::schedules::{SchedulePoint, ScheduleSpec};
use crate::tikhonov::PathPoint;

/// One sampled state with every tracked convergence quantity attached.
///
/// All distance-like columns are squared so that a slope fitted on their
/// logarithm is directly comparable with the f_gap and energy slopes.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub beta: f64,
    pub f_gap: f64,
    pub grad_norm_sq: f64,
    pub dist_center_sq: f64,
    pub dist_minnorm_sq: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    FGap,
    GradNormSq,
    DistCenterSq,
    DistMinnormSq,
    Energy,
}

impl Column {
    pub fn name(self) -> &'static str {
        match self {
            Column::FGap => "f_gap",
            Column::GradNormSq => "grad_norm_sq",
            Column::DistCenterSq => "dist_center_sq",
            Column::DistMinnormSq => "dist_minnorm_sq",
            Column::Energy => "energy",
        }
    }

    pub fn value(self, s: &TrajectorySample) -> f64 {
        match self {
            Column::FGap => s.f_gap,
            Column::GradNormSq => s.grad_norm_sq,
            Column::DistCenterSq => s.dist_center_sq,
            Column::DistMinnormSq => s.dist_minnorm_sq,
            Column::Energy => s.energy,
        }
    }

    /// Squared norms bottom out at the square of the representable accuracy;
    /// below that the column is pure roundoff and must not enter a fit. The
    /// gap and energy columns use rearranged evaluators without that floor.
    fn noise_floor(self, column_max: f64) -> f64 {
        match self {
            Column::GradNormSq | Column::DistCenterSq | Column::DistMinnormSq => {
                1e2 * f64::EPSILON * f64::EPSILON * column_max
            }
            Column::FGap | Column::Energy => 0.0,
        }
    }
}

/// Abscissa for a rate fit. LogT and LogBeta give power-law exponents; Time
/// gives the semilog rate for exponentially decaying quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    LogT,
    LogBeta,
    Time,
}

impl Regressor {
    pub fn name(self) -> &'static str {
        match self {
            Regressor::LogT => "log_t",
            Regressor::LogBeta => "log_beta",
            Regressor::Time => "time",
        }
    }

    fn value(self, s: &TrajectorySample) -> f64 {
        match self {
            Regressor::LogT => s.t.ln(),
            Regressor::LogBeta => s.beta.ln(),
            Regressor::Time => s.t,
        }
    }
}

/// Least-squares line through (regressor, ln column) over a tail window.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub column: Column,
    pub regressor: Regressor,
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    pub max_abs_residual: f64,
}

/// The Lyapunov functional
///
/// ```text
/// E(t) = beta (phi_t(x) - phi_t(y)) + (c/2) |x - y|^2,
/// phi_t(u) = f(u) + (c / 2 beta) |u|^2,
/// ```
///
/// evaluated through the identity E = beta D_f(x, y) + c |x - y|^2, which
/// uses the center's optimality to cancel the (c/2beta)|u|^2 terms exactly
/// instead of subtracting two nearly equal phi values. The Bregman divergence
/// D_f switches to the Hessian quadratic form once x - y is small enough
/// that the direct form would be dominated by rounding in f.
pub fn energy(
    problem: &ProblemSpec,
    c: f64,
    schedule_point: &SchedulePoint,
    x: &[f64],
    path_point: &PathPoint,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("energy needs c > 0, got {c}")));
    }
    let beta = schedule_point.beta;
    let agree = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300);
    if !agree(beta, path_point.beta) {
        return Err(Error::Config(format!(
            "schedule point has beta = {beta}, center was solved at beta = {}",
            path_point.beta
        )));
    }
    if path_point.t.is_finite() && !agree(schedule_point.t, path_point.t) {
        return Err(Error::Config(format!(
            "schedule point is at t = {}, center at t = {}",
            schedule_point.t, path_point.t
        )));
    }
    let y = &path_point.y;
    if x.len() != y.len() {
        return Err(Error::Config("state and center dimensions differ".into()));
    }

    let d = linalg::sub(x, y);
    let d_norm = linalg::norm(&d);
    let bregman = if d_norm <= 1e-5 * (1.0 + linalg::norm(y)) && problem.has_hessian() {
        let mut hd = vec![0.0; d.len()];
        problem.hessian_vec_into(y, &d, &mut hd);
        0.5 * linalg::dot(&d, &hd)
    } else {
        let g = problem.gradient(y);
        problem.objective(x) - problem.objective(y) - linalg::dot(&g, &d)
    };
    Ok(beta * bregman.max(0.0) + c * linalg::norm_sq(&d))
}

/// Attach the convergence columns to integrator output. `states` are the
/// sampled flow states (position first for second-order stacks), `centers`
/// the Tikhonov centers at the same times, and (`schedule`, `c`) the center
/// model the run tracks.
pub fn annotate(
    problem: &ProblemSpec,
    schedule: &ScheduleSpec,
    c: f64,
    states: &[FlowState],
    centers: &[PathPoint],
) -> Result<Vec<TrajectorySample>> {
    if states.is_empty() || states.len() != centers.len() {
        return Err(Error::Config(format!(
            "annotate got {} states and {} centers",
            states.len(),
            centers.len()
        )));
    }
    let xstar = problem.min_norm_solution.as_deref().ok_or_else(|| {
        Error::UnsupportedProblem(format!(
            "{} has no minimum-norm solution for dist_minnorm_sq",
            problem.name
        ))
    })?;
    if !problem.value_gap(xstar).is_some() {
        return Err(Error::UnsupportedProblem(format!(
            "{} has no optimal value for f_gap",
            problem.name
        )));
    }

    let n = problem.dimension;
    let mut out = Vec::with_capacity(states.len());
    let mut grad = vec![0.0; n];
    for (state, center) in states.iter().zip(centers) {
        if !center.t.is_finite() || (center.t - state.t).abs() > 1e-9 * state.t.abs() {
            return Err(Error::Config(format!(
                "center at t = {} does not match state at t = {}",
                center.t, state.t
            )));
        }
        let x = &state.z[..n];
        let sp = schedule.eval(state.t)?;
        let f_gap = problem.value_gap(x).unwrap();
        problem.gradient_into(x, &mut grad);
        let dist_center_sq = x
            .iter()
            .zip(&center.y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let dist_minnorm_sq = x
            .iter()
            .zip(xstar)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let e = energy(problem, c, &sp, x, center)?;
        out.push(TrajectorySample {
            t: state.t,
            beta: sp.beta,
            f_gap,
            grad_norm_sq: linalg::norm_sq(&grad),
            dist_center_sq,
            dist_minnorm_sq,
            energy: e,
        });
    }
    Ok(out)
}

/// Fit ln(column) against the regressor over the trailing `window_fraction`
/// of the samples. Leading unusable points in the window are skipped; the fit
/// stops at the first later sample whose value is non-finite or at the
/// column's roundoff floor. Fewer than ten usable points is an error rather
/// than a fit.
pub fn fit_rate(
    samples: &[TrajectorySample],
    column: Column,
    regressor: Regressor,
    window_fraction: f64,
) -> Result<RateFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "window_fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let start = samples.len() - ((samples.len() as f64 * window_fraction).ceil() as usize)
        .min(samples.len());
    let window = &samples[start..];

    let column_max = samples
        .iter()
        .map(|s| column.value(s))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let floor = column.noise_floor(column_max);

    let mut us = Vec::new();
    let mut vs = Vec::new();
    let mut ts = Vec::new();
    for s in window {
        let u = regressor.value(s);
        let v = column.value(s);
        let usable = u.is_finite() && v.is_finite() && v > floor;
        if !usable {
            if us.is_empty() {
                continue;
            }
            break;
        }
        us.push(u);
        vs.push(v.ln());
        ts.push(s.t);
    }
    if us.len() < 10 {
        return Err(Error::RateUndefined(format!(
            "{} usable points in the {} window for {} (need 10)",
            us.len(),
            regressor.name(),
            column.name()
        )));
    }

    let n = us.len() as f64;
    let u_mean = us.iter().sum::<f64>() / n;
    let v_mean = vs.iter().sum::<f64>() / n;
    let mut suu = 0.0;
    let mut suv = 0.0;
    for i in 0..us.len() {
        let du = us[i] - u_mean;
        suu += du * du;
        suv += du * (vs[i] - v_mean);
    }
    if suu <= 0.0 {
        return Err(Error::RateUndefined(format!(
            "{} does not vary over the window",
            regressor.name()
        )));
    }
    let slope = suv / suu;
    let intercept = v_mean - slope * u_mean;
    let max_abs_residual = us
        .iter()
        .zip(&vs)
        .map(|(u, v)| (v - (intercept + slope * u)).abs())
        .fold(0.0f64, f64::max);
    Ok(RateFit {
        column,
        regressor,
        slope,
        intercept,
        window: (ts[0], ts[ts.len() - 1]),
        n_points: us.len(),
        max_abs_residual,
    })
}

/// Verdict on whether the sampled energy obeys
///
/// ```text
/// E(t) <= E(t1) e^{mu (t1 - t)} + (c M |x*|^2 / 2) (beta'/beta)(t)
/// ```
///
/// for some finite constant M. `fitted_m` is the smallest such M over the
/// tail; `ratio_*` summarize E divided by the fitted right-hand side, so a
/// flat ratio near one means the bound's shape is tight, not just valid.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyBoundReport {
    pub mu: f64,
    pub c: f64,
    pub t1: f64,
    pub energy_at_t1: f64,
    pub fitted_m: f64,
    pub tail_len: usize,
    pub ratio_median: f64,
    pub ratio_max: f64,
    pub flat_tail: bool,
    pub pass: bool,
}

pub fn energy_bound_check(
    samples: &[TrajectorySample],
    schedule: &ScheduleSpec,
    c: f64,
    mu: f64,
    t1_fraction: f64,
    xstar_norm_sq: f64,
) -> Result<EnergyBoundReport> {
    if !(mu > 0.0 && mu < c) {
        return Err(Error::Config(format!("need 0 < mu < c, got mu = {mu}, c = {c}")));
    }
    if !(t1_fraction >= 0.0 && t1_fraction < 1.0) {
        return Err(Error::Config(format!(
            "t1_fraction must lie in [0, 1), got {t1_fraction}"
        )));
    }
    if !(xstar_norm_sq >= 0.0) {
        return Err(Error::Config("xstar_norm_sq must be nonnegative".into()));
    }
    let i1 = ((samples.len() as f64 * t1_fraction) as usize).min(samples.len().saturating_sub(2));
    let tail = &samples[i1..];
    if tail.len() < 2 {
        return Err(Error::RateUndefined(
            "energy bound needs at least two samples past t1".into(),
        ));
    }
    let t1 = tail[0].t;
    let e1 = tail[0].energy;
    let half_cx = 0.5 * c * xstar_norm_sq;

    let mut fitted_m = 0.0f64;
    let mut growth = Vec::with_capacity(tail.len() - 1);
    for s in &tail[1..] {
        let gr = schedule.growth_ratio(s.t)?;
        if !(gr > 0.0) {
            return Err(Error::Config(format!(
                "energy bound needs beta'/beta > 0, got {gr} at t = {}",
                s.t
            )));
        }
        growth.push(gr);
        let excess = (s.energy - e1 * (mu * (t1 - s.t)).exp()).max(0.0);
        let prefactor = excess / gr;
        let m = if prefactor == 0.0 {
            0.0
        } else if half_cx > 0.0 {
            prefactor / half_cx
        } else {
            f64::INFINITY
        };
        fitted_m = fitted_m.max(m);
    }

    let mut ratios: Vec<f64> = tail[1..]
        .iter()
        .zip(&growth)
        .map(|(s, gr)| {
            let bound = e1 * (mu * (t1 - s.t)).exp() + half_cx * fitted_m * gr;
            if bound > 0.0 { s.energy / bound } else { 0.0 }
        })
        .collect();
    ratios.sort_by(|a, b| a.total_cmp(b));
    let ratio_max = *ratios.last().unwrap();
    let mid = ratios.len() / 2;
    let ratio_median = if ratios.len() % 2 == 1 {
        ratios[mid]
    } else {
        0.5 * (ratios[mid - 1] + ratios[mid])
    };
    let flat_tail = ratio_max <= 2.0 * ratio_median.max(f64::MIN_POSITIVE);
    let pass = fitted_m.is_finite() && ratio_max.is_finite();
    Ok(EnergyBoundReport {
        mu,
        c,
        t1,
        energy_at_t1: e1,
        fitted_m,
        tail_len: tail.len() - 1,
        ratio_median,
        ratio_max,
        flat_tail,
        pass,
    })
}

/// Pairwise check of the fused descent inequality for a smooth convex
/// objective with step s <= 1/L,
///
/// ```text
/// f(y - s grad f(y)) <= f(x) + <grad f(y), y - x>
///                       - (s/2) |grad f(y)|^2 - (s/2) |grad f(x) - grad f(y)|^2,
/// ```
///
/// and of the gradient lower bound f(x) - f* >= |grad f(x)|^2 / (2L).
#[derive(Debug, Clone, Serialize)]
pub struct DescentLemmaReport {
    pub n_points: usize,
    pub n_pairs: usize,
    pub step: f64,
    pub min_descent_slack: f64,
    pub min_lower_slack: f64,
    pub pass: bool,
}

pub fn descent_lemma_check(
    problem: &ProblemSpec,
    sample_points: &[Vec<f64>],
    s: f64,
) -> Result<DescentLemmaReport> {
    let lip = problem.lipschitz_bound.ok_or_else(|| {
        Error::UnsupportedProblem(format!(
            "{} has no smoothness constant for the descent inequalities",
            problem.name
        ))
    })?;
    let fstar = problem.optimum_value.ok_or_else(|| {
        Error::UnsupportedProblem(format!(
            "{} has no optimal value for the gradient lower bound",
            problem.name
        ))
    })?;
    if !(s > 0.0) || (lip > 0.0 && s > 1.0 / lip) {
        return Err(Error::Config(format!(
            "step must satisfy 0 < s <= 1/L = {:.6e}, got {s}",
            1.0 / lip
        )));
    }
    if sample_points.len() < 2 {
        return Err(Error::Config("need at least two sample points".into()));
    }
    for (i, p) in sample_points.iter().enumerate() {
        if !problem.in_domain(p) {
            return Err(Error::Config(format!("sample point {i} is outside the domain")));
        }
    }

    let vals: Vec<f64> = sample_points.iter().map(|p| problem.objective(p)).collect();
    let grads: Vec<Vec<f64>> = sample_points.iter().map(|p| problem.gradient(p)).collect();

    let mut min_descent_slack = f64::INFINITY;
    let mut min_lower_slack = f64::INFINITY;
    let mut n_pairs = 0;

    for (j, y) in sample_points.iter().enumerate() {
        let gy = &grads[j];
        let step_point: Vec<f64> = y.iter().zip(gy).map(|(yi, gi)| yi - s * gi).collect();
        if !problem.in_domain(&step_point) {
            return Err(Error::Domain {
                t: f64::NAN,
                what: format!("gradient step from sample point {j} leaves the domain"),
            });
        }
        let f_step = problem.objective(&step_point);
        let gy_norm_sq = linalg::norm_sq(gy);

        for (i, x) in sample_points.iter().enumerate() {
            if i == j {
                continue;
            }
            let gx = &grads[i];
            let mut inner = 0.0;
            let mut gdiff_sq = 0.0;
            for k in 0..x.len() {
                inner += gy[k] * (y[k] - x[k]);
                let dg = gx[k] - gy[k];
                gdiff_sq += dg * dg;
            }
            let rhs = vals[i] + inner - 0.5 * s * gy_norm_sq - 0.5 * s * gdiff_sq;
            let scale = 1.0 + vals[i].abs() + vals[j].abs();
            min_descent_slack = min_descent_slack.min((rhs - f_step) / scale);
            n_pairs += 1;
        }

        let lower_slack = if lip > 0.0 {
            (vals[j] - fstar) - gy_norm_sq / (2.0 * lip)
        } else {
            0.0
        };
        min_lower_slack = min_lower_slack.min(lower_slack / (1.0 + vals[j].abs()));
    }

    let tol = -1e-9;
    Ok(DescentLemmaReport {
        n_points: sample_points.len(),
        n_pairs,
        step: s,
        min_descent_slack,
        min_lower_slack,
        pass: min_descent_slack >= tol && min_lower_slack >= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{integrate, FlowKind, FlowSystem, IntegratorConfig};
    use crate::problems::{example1, quadratic_shift, zero};
    use crate::schedules::log_grid;
    use crate::tikhonov::center_path;

    fn quad_center(a: &[f64], beta: f64, c: f64) -> PathPoint {
        let y: Vec<f64> = a.iter().map(|ai| ai * beta / (beta + c)).collect();
        let phi: f64 = a
            .iter()
            .zip(&y)
            .map(|(ai, yi)| 0.5 * (yi - ai) * (yi - ai) + 0.5 * (c / beta) * yi * yi)
            .sum();
        PathPoint { t: f64::NAN, beta, y, phi_value: phi, inner_iters: 0, residual: 0.0 }
    }

    #[test]
    fn energy_matches_the_quadratic_closed_form_on_both_branches() {
        let a = vec![1.0, -2.0];
        let p = quadratic_shift(a.clone()).unwrap();
        let sched = ScheduleSpec::power_log(2.0, 0.0).unwrap();
        let c = 5.0;
        let sp = sched.eval(20.0).unwrap();
        let center = quad_center(&a, sp.beta, c);
        // One displacement large enough for the direct Bregman form, one small
        // enough to go through the Hessian quadratic form.
        for scale in [1e-3, 1e-9] {
            let x: Vec<f64> = center.y.iter().zip(&[0.6, -0.8]).map(|(y, d)| y + scale * d).collect();
            let d_sq: f64 = x.iter().zip(&center.y).map(|(a, b)| (a - b) * (a - b)).sum();
            let want = (0.5 * sp.beta + c) * d_sq;
            let got = energy(&p, c, &sp, &x, &center).unwrap();
            assert!(
                (got - want).abs() <= 1e-9 * want,
                "scale {scale}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn energy_is_zero_exactly_on_the_center() {
        let a = vec![1.0, -2.0];
        let p = quadratic_shift(a.clone()).unwrap();
        let sched = ScheduleSpec::power_log(2.0, 0.0).unwrap();
        let sp = sched.eval(10.0).unwrap();
        let center = quad_center(&a, sp.beta, 5.0);
        let x = center.y.clone();
        assert_eq!(energy(&p, 5.0, &sp, &x, &center).unwrap(), 0.0);
    }

    #[test]
    fn energy_rejects_mismatched_schedule_and_center() {
        let a = vec![1.0, -2.0];
        let p = quadratic_shift(a.clone()).unwrap();
        let sched = ScheduleSpec::power_log(2.0, 0.0).unwrap();
        let sp = sched.eval(10.0).unwrap();
        let mut center = quad_center(&a, sp.beta, 5.0);
        center.beta *= 1.5;
        let x = vec![0.0, 0.0];
        assert!(matches!(
            energy(&p, 5.0, &sp, &x, &center).unwrap_err(),
            Error::Config(_)
        ));

        let mut center = quad_center(&a, sp.beta, 5.0);
        center.t = 11.0;
        assert!(matches!(
            energy(&p, 5.0, &sp, &x, &center).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn energy_on_the_zero_problem_is_c_times_distance_squared() {
        let p = zero(3);
        let sched = ScheduleSpec::power_log(1.0, 0.0).unwrap();
        let sp = sched.eval(4.0).unwrap();
        let center = PathPoint {
            t: 4.0,
            beta: sp.beta,
            y: vec![0.0; 3],
            phi_value: 0.0,
            inner_iters: 0,
            residual: 0.0,
        };
        let x = [0.3, -0.4, 1.2];
        let want = 5.0 * linalg::norm_sq(&x);
        assert!((energy(&p, 5.0, &sp, &x, &center).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn annotate_reproduces_each_column_from_its_definition() {
        let p = example1();
        let sys = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        let cfg = IntegratorConfig { samples: 30, ..Default::default() };
        let traj = integrate(&sys, &[1.0, 1.0], 1.0, 50.0, &cfg, |_| {}).unwrap();
        let (sched, c) = sys.center_model();
        let ts: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        let centers = center_path(&p, &sched, c, &ts, 1e-12).unwrap();
        let rows = annotate(&p, &sched, c, &traj.samples, &centers).unwrap();
        assert_eq!(rows.len(), 30);

        let i = 17;
        let x = &traj.samples[i].z[..];
        let row = &rows[i];
        assert_eq!(row.t, traj.samples[i].t);
        let sp = sched.eval(row.t).unwrap();
        assert_eq!(row.beta, sp.beta);
        assert_eq!(row.f_gap, p.value_gap(x).unwrap());
        assert_eq!(row.grad_norm_sq, linalg::norm_sq(&p.gradient(x)));
        let want_dc: f64 = x
            .iter()
            .zip(&centers[i].y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert_eq!(row.dist_center_sq, want_dc);
        let xs = p.min_norm_solution.as_ref().unwrap();
        let want_dm: f64 = x.iter().zip(xs).map(|(a, b)| (a - b) * (a - b)).sum();
        assert_eq!(row.dist_minnorm_sq, want_dm);
        assert_eq!(row.energy, energy(&p, c, &sp, x, &centers[i]).unwrap());

        // The run is long enough that every column must have dropped.
        let first = &rows[0];
        let last = rows.last().unwrap();
        assert!(last.f_gap < 1e-6 * first.f_gap);
        assert!(last.energy.is_finite() && last.energy > 0.0);
    }

    fn synthetic(ts: &[f64], beta: impl Fn(f64) -> f64, col: impl Fn(f64) -> f64) -> Vec<TrajectorySample> {
        ts.iter()
            .map(|&t| {
                let v = col(t);
                TrajectorySample {
                    t,
                    beta: beta(t),
                    f_gap: v,
                    grad_norm_sq: v,
                    dist_center_sq: v,
                    dist_minnorm_sq: v,
                    energy: v,
                }
            })
            .collect()
    }

    #[test]
    fn fit_rate_recovers_a_synthetic_power_law() {
        let ts = log_grid(1.0, 1e4, 200).unwrap();
        let rows = synthetic(&ts, |t| t * t, |t| 3.0 * t.powf(-2.5));
        let fit = fit_rate(&rows, Column::FGap, Regressor::LogT, 0.25).unwrap();
        assert!((fit.slope + 2.5).abs() < 1e-9, "slope {}", fit.slope);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-8);
        assert_eq!(fit.n_points, 50);
        assert!(fit.max_abs_residual < 1e-10);

        let fit = fit_rate(&rows, Column::FGap, Regressor::LogBeta, 0.25).unwrap();
        assert!((fit.slope + 1.25).abs() < 1e-9, "slope {}", fit.slope);
    }

    #[test]
    fn fit_rate_semilog_recovers_an_exponential_rate() {
        let ts: Vec<f64> = (0..100).map(|i| 1.0 + i as f64 * 0.02).collect();
        let rows = synthetic(&ts, |_| 1.0, |t| 7.0 * (-10.0 * t).exp());
        let fit = fit_rate(&rows, Column::Energy, Regressor::Time, 0.5).unwrap();
        assert!((fit.slope + 10.0).abs() < 1e-9, "slope {}", fit.slope);
    }

    #[test]
    fn fit_rate_stops_at_the_roundoff_floor_of_squared_columns() {
        let ts: Vec<f64> = (0..40).map(|i| (i as f64).exp()).collect();
        let rows = synthetic(&ts, |t| t, |t| t.powf(-3.0));
        // dist columns floor at 100 eps^2 max; f_gap has no floor.
        let fit = fit_rate(&rows, Column::DistMinnormSq, Regressor::LogT, 1.0).unwrap();
        assert!(fit.n_points < 40, "floor should truncate, got {}", fit.n_points);
        assert!(fit.n_points >= 10);
        assert!((fit.slope + 3.0).abs() < 1e-9);

        let fit = fit_rate(&rows, Column::FGap, Regressor::LogT, 1.0).unwrap();
        assert_eq!(fit.n_points, 40, "the gap column has no floor");
    }

    #[test]
    fn fit_rate_needs_enough_usable_points() {
        let ts = log_grid(1.0, 10.0, 8).unwrap();
        let rows = synthetic(&ts, |t| t, |t| t.powf(-1.0));
        assert!(matches!(
            fit_rate(&rows, Column::FGap, Regressor::LogT, 1.0).unwrap_err(),
            Error::RateUndefined(_)
        ));
    }

    #[test]
    fn energy_bound_fits_the_prefactor_of_a_shaped_tail() {
        let sched = ScheduleSpec::power_log(2.0, 0.0).unwrap();
        let ts = log_grid(10.0, 1e4, 120).unwrap();
        let (c, mu, xsq) = (5.0, 2.5, 2.0);
        let rows = synthetic(&ts, |t| t * t, |t| 7.0 * 2.0 / t);
        let rep = energy_bound_check(&rows, &sched, c, mu, 0.25, xsq).unwrap();
        assert!(rep.pass, "{rep:?}");
        // E = 7 (beta'/beta), so M approaches 7 / (c |x*|^2 / 2) = 1.4.
        assert!((rep.fitted_m - 1.4).abs() < 0.05, "fitted_m {}", rep.fitted_m);
        assert!(rep.flat_tail, "ratio should hug the bound: {rep:?}");
        assert!(rep.ratio_max <= 1.0 + 1e-12);
    }

    #[test]
    fn energy_bound_on_the_zero_problem_needs_no_prefactor() {
        let sched = ScheduleSpec::power_log(1.0, 0.0).unwrap();
        let ts = log_grid(1.0, 20.0, 80).unwrap();
        let c = 5.0;
        let rows = synthetic(&ts, |t| t, |t| c * (-2.0 * c * (t - 1.0)).exp());
        let rep = energy_bound_check(&rows, &sched, c, 2.5, 0.5, 0.0).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.fitted_m, 0.0);
    }

    #[test]
    fn energy_bound_reports_failure_when_no_finite_prefactor_exists() {
        let sched = ScheduleSpec::power_log(1.0, 0.0).unwrap();
        let ts = log_grid(1.0, 100.0, 60).unwrap();
        let rows = synthetic(&ts, |t| t, |_| 1.0);
        let rep = energy_bound_check(&rows, &sched, 5.0, 2.5, 0.25, 0.0).unwrap();
        assert!(!rep.pass, "{rep:?}");
        assert!(rep.fitted_m.is_infinite());
    }

    #[test]
    fn energy_bound_validates_its_arguments() {
        let sched = ScheduleSpec::power_log(1.0, 0.0).unwrap();
        let ts = log_grid(1.0, 10.0, 20).unwrap();
        let rows = synthetic(&ts, |t| t, |t| 1.0 / t);
        for (mu, c) in [(0.0, 5.0), (5.0, 5.0), (6.0, 5.0)] {
            assert!(matches!(
                energy_bound_check(&rows, &sched, c, mu, 0.25, 1.0).unwrap_err(),
                Error::Config(_)
            ));
        }
        assert!(matches!(
            energy_bound_check(&rows, &sched, 5.0, 2.5, 1.0, 1.0).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn descent_inequalities_hold_on_the_log_barrier_objective() {
        let p = example1();
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.5, 0.5],
            vec![0.2, 0.7],
            vec![0.3660254037844386, 0.3660254037844386],
            vec![-0.2, 0.3],
            vec![0.8, 0.1],
        ];
        let rep = descent_lemma_check(&p, &pts, 1.0 / 6.0).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.n_pairs, 30);
        assert!(rep.min_descent_slack >= -1e-9);
        assert!(rep.min_lower_slack >= -1e-9);
    }

    #[test]
    fn descent_inequality_is_tight_on_a_quadratic_at_full_step() {
        let a = vec![1.0, -2.0];
        let p = quadratic_shift(a.clone()).unwrap();
        let pts = vec![a, vec![0.0, 0.0], vec![2.0, 1.0]];
        let rep = descent_lemma_check(&p, &pts, 1.0).unwrap();
        assert!(rep.pass, "{rep:?}");
        // Pairs with x = argmin make the fused inequality an equality.
        assert!(rep.min_descent_slack.abs() <= 1e-12, "{rep:?}");
        assert!(rep.min_lower_slack.abs() <= 1e-12, "{rep:?}");
    }

    #[test]
    fn descent_check_rejects_oversized_steps_and_missing_constants() {
        let p = example1();
        let pts = vec![vec![0.0, 0.0], vec![0.5, 0.5]];
        assert!(matches!(
            descent_lemma_check(&p, &pts, 0.5).unwrap_err(),
            Error::Config(_)
        ));
        assert!(matches!(
            descent_lemma_check(&p, &pts, 0.0).unwrap_err(),
            Error::Config(_)
        ));

        let mut bare = example1();
        bare.lipschitz_bound = None;
        assert!(matches!(
            descent_lemma_check(&bare, &pts, 0.1).unwrap_err(),
            Error::UnsupportedProblem(_)
        ));
    }
}
