//! The Tikhonov regularization path: for each time t the unique minimizer
//! y(t) of phi_t(x) = f(x) + (c / 2 beta(t)) ||x||^2, computed by an inner
//! solver, plus grid checks of the path properties the convergence analysis
//! relies on (boundedness by ||x*||, the velocity bound, and the derivative
//! of t -> phi_t(y(t))).

use crate::error::{Error, Result};
use crate::linalg::{self, Lu};
use crate::problems::ProblemSpec;
use crate::schedules::ScheduleSpec;

/// One point of the regularization path. `t` is NaN for points produced by
/// `tikhonov_center` directly (a bare (c, beta) pair has no time attached);
/// `center_path` fills it in.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub t: f64,
    pub beta: f64,
    pub y: Vec<f64>,
    pub phi_value: f64,
    pub inner_iters: u32,
    pub residual: f64,
}

const MAX_INNER_ITERS: u32 = 10_000;

/// Minimizes phi(x) = f(x) + (eps/2)||x||^2 with eps = c/beta: damped Newton
/// on the optimality system grad f(y) + eps y = 0 when second derivatives
/// exist, otherwise gradient descent with step 1/(L + eps). Backtracking
/// keeps iterates inside the domain. beta = 0 is accepted as the limiting
/// pure-regularization case with minimizer 0.
pub fn tikhonov_center(
    problem: &ProblemSpec,
    c: f64,
    beta: f64,
    warm_start: Option<&[f64]>,
    tol: f64,
) -> Result<PathPoint> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("c must be positive, got {c}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be nonnegative, got {beta}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tol must be positive, got {tol}")));
    }
    let n = problem.dimension;
    if beta == 0.0 {
        let y = vec![0.0; n];
        if !problem.in_domain(&y) {
            return Err(Error::UnsupportedProblem(format!(
                "{}: origin outside the domain, beta = 0 limit undefined",
                problem.name
            )));
        }
        let phi_value = problem.objective(&y);
        return Ok(PathPoint { t: f64::NAN, beta, y, phi_value, inner_iters: 0, residual: 0.0 });
    }

    let eps = c / beta;
    let mut y = match warm_start {
        Some(w) => {
            if !problem.in_domain(w) {
                return Err(Error::Config("warm start outside the problem domain".into()));
            }
            w.to_vec()
        }
        None => {
            let origin = vec![0.0; n];
            if !problem.in_domain(&origin) {
                return Err(Error::Config(format!(
                    "{}: origin outside the domain, pass a warm start",
                    problem.name
                )));
            }
            origin
        }
    };

    let residual_of = |x: &[f64]| -> Vec<f64> {
        let mut r = problem.gradient(x);
        linalg::axpy(eps, x, &mut r);
        r
    };

    let gd_step = problem.lipschitz_bound.map(|l| 1.0 / (l + eps));
    if !problem.has_hessian() && gd_step.is_none() {
        return Err(Error::UnsupportedProblem(format!(
            "{}: center solve needs hessian_vec or a Lipschitz bound",
            problem.name
        )));
    }

    let mut r = residual_of(&y);
    let mut rn = linalg::norm(&r);
    let mut iters = 0u32;
    while rn > tol {
        if iters >= MAX_INNER_ITERS {
            return Err(Error::ConvergenceFailure { residual: rn, iters });
        }
        // phi is eps-strongly convex, so the Newton direction is a descent
        // direction for ||residual||; fall back to a gradient step if the
        // Hessian solve is unavailable or fails
        let newton_dir = problem.hessian(&y).and_then(|mut h| {
            for i in 0..n {
                h[(i, i)] += eps;
            }
            Lu::factor(h).ok().map(|lu| lu.solve(&r))
        });
        let dir = match (&newton_dir, gd_step) {
            (Some(d), _) => d.clone(),
            (None, Some(s)) => r.iter().map(|ri| s * ri).collect(),
            (None, None) => return Err(Error::ConvergenceFailure { residual: rn, iters }),
        };

        // any strict decrease is accepted; slow progress is bounded by the
        // iteration cap, not aborted mid-solve
        let mut alpha = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = y.iter().zip(&dir).map(|(yi, di)| yi - alpha * di).collect();
            if problem.in_domain(&candidate) {
                let rc = residual_of(&candidate);
                let rcn = linalg::norm(&rc);
                if rcn < rn || rcn <= tol {
                    y = candidate;
                    r = rc;
                    rn = rcn;
                    advanced = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        iters += 1;
        if !advanced {
            return Err(Error::ConvergenceFailure { residual: rn, iters });
        }
    }

    let phi_value = problem.objective(&y) + 0.5 * eps * linalg::norm_sq(&y);
    Ok(PathPoint { t: f64::NAN, beta, y, phi_value, inner_iters: iters, residual: rn })
}

/// The path y(t) over an ascending time grid, each point warm-started from
/// the previous one.
pub fn center_path(
    problem: &ProblemSpec,
    schedule: &ScheduleSpec,
    c: f64,
    t_grid: &[f64],
    tol: f64,
) -> Result<Vec<PathPoint>> {
    if t_grid.is_empty() {
        return Err(Error::Config("center_path needs a nonempty time grid".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("center_path grid must be strictly ascending".into()));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    let mut warm: Option<Vec<f64>> = None;
    for &t in t_grid {
        let beta = schedule.eval(t)?.beta;
        let mut point =
            tikhonov_center(problem, c, beta, warm.as_deref(), tol).map_err(|e| e.at(t))?;
        point.t = t;
        warm = Some(point.y.clone());
        out.push(point);
    }
    Ok(out)
}

/// Grid validation of the path properties used by the rate analysis:
/// norms stay below ||x*||, the finite-difference velocity respects
/// (beta'/beta)||y||, and the finite-difference derivative of phi_t(y(t))
/// matches -c beta'/(2 beta^2) ||y||^2.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PathCheckReport {
    /// max over the grid of ||y(t)|| - ||x*||
    pub norm_excess_max: f64,
    /// max over grid cells of ||dy/dt||_FD / ((beta'/beta) ||y||)
    pub velocity_ratio_max: f64,
    /// max relative error of the centered FD of phi_t(y(t)) against the
    /// analytic derivative -c beta'/(2 beta^2) ||y||^2
    pub phi_derivative_rel_err_max: f64,
    pub grid_len: usize,
}

pub fn check_path_properties(
    problem: &ProblemSpec,
    schedule: &ScheduleSpec,
    c: f64,
    path: &[PathPoint],
) -> Result<PathCheckReport> {
    if path.len() < 3 {
        return Err(Error::Config("path property check needs at least 3 points".into()));
    }
    let xstar = problem
        .min_norm_solution
        .as_ref()
        .ok_or_else(|| Error::UnsupportedProblem(format!("{}: no known minimizer", problem.name)))?;
    let xstar_norm = linalg::norm(xstar);

    let mut norm_excess_max = f64::NEG_INFINITY;
    for p in path {
        norm_excess_max = norm_excess_max.max(linalg::norm(&p.y) - xstar_norm);
    }

    let mut velocity_ratio_max: f64 = 0.0;
    for w in path.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        let vel = linalg::norm(&linalg::sub(&b.y, &a.y)) / dt;
        let bound = schedule.growth_ratio(a.t)? * linalg::norm(&a.y);
        if bound > 0.0 {
            velocity_ratio_max = velocity_ratio_max.max(vel / bound);
        } else if vel > 1e-12 {
            velocity_ratio_max = f64::INFINITY;
        }
    }

    let mut phi_err_max: f64 = 0.0;
    for i in 1..path.len() - 1 {
        let (prev, mid, next) = (&path[i - 1], &path[i], &path[i + 1]);
        let fd = (next.phi_value - prev.phi_value) / (next.t - prev.t);
        let pt = schedule.eval(mid.t)?;
        let model = -c * pt.dbeta / (2.0 * pt.beta * pt.beta) * linalg::norm_sq(&mid.y);
        if model != 0.0 {
            phi_err_max = phi_err_max.max((fd - model).abs() / model.abs());
        }
    }

    Ok(PathCheckReport {
        norm_excess_max,
        velocity_ratio_max,
        phi_derivative_rel_err_max: phi_err_max,
        grid_len: path.len(),
    })
}
