//! The gradient flows under study and the adaptive integrators that drive
//! them.
//!
//! Every system here is an autonomous-in-x, nonautonomous-in-t ODE written as
//! z' = F(t, z). First-order kinds evolve the position alone; second-order
//! kinds stack position and velocity as z = (x, v).

mod dopri5;
mod rosenbrock;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::problems::ProblemSpec;
use crate::schedules::{log_grid, ScheduleFamily, ScheduleSpec};

/// Which evolution equation to integrate.
///
/// `TikhonovFirstOrder` is the configurable system x' + beta(t) grad f + c x = 0.
/// The remaining kinds are fixed-coefficient comparators:
///
/// - `Tral`:   x' + 2t^2 ln^2(t) grad f + 5x = 0
/// - `Trae`:   x' + 2t^2 e^{2 t^{9/10}} grad f + 5x = 0
/// - `Trisal`: x'' + 5x' + 2t^2 ln^2(t) grad f + 5x = 0
/// - `Trisae`: x'' + 5x' + 2t^2 e^{2 t^{4/5}} grad f + 5x = 0
/// - `Trisg`:  x'' + 5t^{-4/5} x' + grad f + t^{-8/5} x = 0
/// - `Trish`:  x'' + 5t^{-4/5} x' + 2 hess f(x) x' + grad f + t^{-8/5} x = 0
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    TikhonovFirstOrder,
    Tral,
    Trae,
    Trisal,
    Trisae,
    Trisg,
    Trish,
}

impl FlowKind {
    pub fn all() -> [FlowKind; 7] {
        [
            FlowKind::TikhonovFirstOrder,
            FlowKind::Tral,
            FlowKind::Trae,
            FlowKind::Trisal,
            FlowKind::Trisae,
            FlowKind::Trisg,
            FlowKind::Trish,
        ]
    }

    pub fn from_name(name: &str) -> Result<FlowKind> {
        FlowKind::all()
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown flow kind {name:?}; expected one of \
                     tikhonov_first_order, tral, trae, trisal, trisae, trisg, trish"
                ))
            })
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowKind::TikhonovFirstOrder => "tikhonov_first_order",
            FlowKind::Tral => "tral",
            FlowKind::Trae => "trae",
            FlowKind::Trisal => "trisal",
            FlowKind::Trisae => "trisae",
            FlowKind::Trisg => "trisg",
            FlowKind::Trish => "trish",
        }
    }

    pub fn is_second_order(self) -> bool {
        matches!(
            self,
            FlowKind::Trisal | FlowKind::Trisae | FlowKind::Trisg | FlowKind::Trish
        )
    }

    /// True when the gradient weight is a ScheduleSpec rather than a fixed
    /// time function baked into the kind.
    fn scheduled(self) -> bool {
        !matches!(self, FlowKind::Trisg | FlowKind::Trish)
    }
}

/// A concrete system: a flow kind bound to an objective and its coefficients.
///
/// For trisg and trish the equation's own coefficients are the fixed time
/// functions above; `schedule` and `c` then hold the equivalent center model
/// (beta = t^{8/5}, c = 1, so that c/beta matches the t^{-8/5} Tikhonov
/// weight), which is what the diagnostics need.
#[derive(Debug)]
pub struct FlowSystem<'a> {
    pub kind: FlowKind,
    pub problem: &'a ProblemSpec,
    pub schedule: ScheduleSpec,
    pub c: f64,
    pub alpha: f64,
}

impl<'a> FlowSystem<'a> {
    /// The configurable first-order system x' + beta(t) grad f + c x = 0.
    pub fn first_order(
        problem: &'a ProblemSpec,
        schedule: ScheduleSpec,
        c: f64,
    ) -> Result<FlowSystem<'a>> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!(
                "tikhonov coefficient c must be positive and finite, got {c}"
            )));
        }
        Ok(FlowSystem {
            kind: FlowKind::TikhonovFirstOrder,
            problem,
            schedule,
            c,
            alpha: 0.0,
        })
    }

    /// One of the six fixed-coefficient comparator systems.
    pub fn comparator(kind: FlowKind, problem: &'a ProblemSpec) -> Result<FlowSystem<'a>> {
        let (schedule, c, alpha) = match kind {
            FlowKind::TikhonovFirstOrder => {
                return Err(Error::Config(
                    "tikhonov_first_order takes an explicit schedule; use first_order".into(),
                ));
            }
            FlowKind::Tral => (ScheduleSpec::power_log(2.0, 2.0)?.with_scale(2.0)?, 5.0, 0.0),
            FlowKind::Trae => (
                ScheduleSpec::power_exp(2.0, 2.0, 0.9)?.with_scale(2.0)?,
                5.0,
                0.0,
            ),
            FlowKind::Trisal => (ScheduleSpec::power_log(2.0, 2.0)?.with_scale(2.0)?, 5.0, 5.0),
            FlowKind::Trisae => (
                ScheduleSpec::power_exp(2.0, 2.0, 0.8)?.with_scale(2.0)?,
                5.0,
                5.0,
            ),
            FlowKind::Trisg | FlowKind::Trish => (ScheduleSpec::power_log(1.6, 0.0)?, 1.0, 0.0),
        };
        if kind == FlowKind::Trish && !problem.has_hessian() {
            return Err(Error::UnsupportedProblem(
                "trish needs second derivatives for its hessian damping term".into(),
            ));
        }
        Ok(FlowSystem { kind, problem, schedule, c, alpha })
    }

    pub fn state_dim(&self) -> usize {
        let n = self.problem.dimension;
        if self.kind.is_second_order() { 2 * n } else { n }
    }

    /// Position / velocity views into a stacked state.
    pub fn split<'z>(&self, z: &'z [f64]) -> (&'z [f64], Option<&'z [f64]>) {
        let n = self.problem.dimension;
        if self.kind.is_second_order() {
            (&z[..n], Some(&z[n..]))
        } else {
            (z, None)
        }
    }

    /// The right-hand side F(t, z) of z' = F(t, z).
    pub fn rhs(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.state_dim() {
            return Err(Error::Config(format!(
                "state has length {}, expected {}",
                z.len(),
                self.state_dim()
            )));
        }
        let mut out = vec![0.0; self.state_dim()];
        self.rhs_into(t, z, &mut out)?;
        Ok(out)
    }

    /// Local stiffness scale beta(t) L + c. The integrators cap the initial
    /// step at its reciprocal; the explicit method re-caps on every accepted
    /// step while a power_exp gradient weight keeps inflating it.
    pub fn stiffness_guard(&self, t: f64, x: &[f64]) -> Result<f64> {
        let (beta, c) = match self.kind {
            FlowKind::Trisg | FlowKind::Trish => (1.0, t.powf(-1.6)),
            _ => (self.schedule.eval(t)?.beta, self.c),
        };
        let lip = match self.problem.lipschitz_bound {
            Some(l) => l,
            None => self.local_curvature_bound(x),
        };
        Ok(beta * lip + c)
    }

    /// Schedule and Tikhonov coefficient describing the center path
    /// y(t) = argmin f + (c / 2 beta(t)) |x|^2 this system tracks.
    pub fn center_model(&self) -> (ScheduleSpec, f64) {
        (self.schedule, self.c)
    }

    /// Gershgorin bound on the Hessian at x when no global Lipschitz constant
    /// is available; zero if the problem has no second derivatives either.
    fn local_curvature_bound(&self, x: &[f64]) -> f64 {
        match self.problem.hessian(x) {
            Some(h) => {
                let n = self.problem.dimension;
                let mut bound: f64 = 0.0;
                for i in 0..n {
                    let row: f64 = (0..n).map(|j| h[(i, j)].abs()).sum();
                    bound = bound.max(row);
                }
                bound
            }
            None => 0.0,
        }
    }

    fn check_position(&self, t: f64, x: &[f64]) -> Result<()> {
        if self.problem.in_domain(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                t,
                what: format!("state left the domain of {}", self.problem.name),
            })
        }
    }

    fn rhs_into(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.problem.dimension;
        match self.kind {
            FlowKind::TikhonovFirstOrder | FlowKind::Tral | FlowKind::Trae => {
                self.check_position(t, z)?;
                let beta = self.schedule.eval(t)?.beta;
                self.problem.gradient_into(z, out);
                for i in 0..n {
                    out[i] = -beta * out[i] - self.c * z[i];
                }
            }
            FlowKind::Trisal | FlowKind::Trisae => {
                let (x, v) = (&z[..n], &z[n..]);
                self.check_position(t, x)?;
                let beta = self.schedule.eval(t)?.beta;
                let (pos, acc) = out.split_at_mut(n);
                self.problem.gradient_into(x, acc);
                for i in 0..n {
                    acc[i] = -self.alpha * v[i] - beta * acc[i] - self.c * x[i];
                }
                pos.copy_from_slice(v);
            }
            FlowKind::Trisg | FlowKind::Trish => {
                let (x, v) = (&z[..n], &z[n..]);
                self.check_position(t, x)?;
                let damping = 5.0 * t.powf(-0.8);
                let tik = t.powf(-1.6);
                let (pos, acc) = out.split_at_mut(n);
                self.problem.gradient_into(x, acc);
                for i in 0..n {
                    acc[i] = -damping * v[i] - acc[i] - tik * x[i];
                }
                if self.kind == FlowKind::Trish {
                    let mut hv = vec![0.0; n];
                    self.problem.hessian_vec_into(x, v, &mut hv);
                    for i in 0..n {
                        acc[i] -= 2.0 * hv[i];
                    }
                }
                pos.copy_from_slice(v);
            }
        }
        Ok(())
    }

    /// Explicit time derivative dF/dt at frozen z, for the Rosenbrock stages.
    fn rhs_dt_into(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.problem.dimension;
        out.fill(0.0);
        match self.kind {
            FlowKind::TikhonovFirstOrder | FlowKind::Tral | FlowKind::Trae => {
                let dbeta = self.schedule.eval(t)?.dbeta;
                self.problem.gradient_into(z, out);
                for g in out.iter_mut() {
                    *g *= -dbeta;
                }
            }
            FlowKind::Trisal | FlowKind::Trisae => {
                let dbeta = self.schedule.eval(t)?.dbeta;
                let x = &z[..n];
                let acc = &mut out[n..];
                self.problem.gradient_into(x, acc);
                for g in acc.iter_mut() {
                    *g *= -dbeta;
                }
            }
            FlowKind::Trisg | FlowKind::Trish => {
                let (x, v) = (&z[..n], &z[n..]);
                let ddamp = 4.0 * t.powf(-1.8);
                let dtik = 1.6 * t.powf(-2.6);
                for i in 0..n {
                    out[n + i] = ddamp * v[i] + dtik * x[i];
                }
            }
        }
        Ok(())
    }

    /// State Jacobian dF/dz. Unavailable for trish, whose hessian damping
    /// term would need third derivatives of f.
    fn jacobian_mat(&self, t: f64, z: &[f64]) -> Result<Mat> {
        let n = self.problem.dimension;
        let hess = |x: &[f64]| {
            self.problem.hessian(x).ok_or_else(|| {
                Error::UnsupportedProblem(format!(
                    "{} has no second derivatives; the stiff method needs a jacobian",
                    self.problem.name
                ))
            })
        };
        match self.kind {
            FlowKind::TikhonovFirstOrder | FlowKind::Tral | FlowKind::Trae => {
                let beta = self.schedule.eval(t)?.beta;
                let h = hess(z)?;
                let mut j = Mat::zeros(n, n);
                for r in 0..n {
                    for s in 0..n {
                        j[(r, s)] = -beta * h[(r, s)];
                    }
                    j[(r, r)] -= self.c;
                }
                Ok(j)
            }
            FlowKind::Trisal | FlowKind::Trisae => {
                let beta = self.schedule.eval(t)?.beta;
                let h = hess(&z[..n])?;
                let mut j = Mat::zeros(2 * n, 2 * n);
                for r in 0..n {
                    j[(r, n + r)] = 1.0;
                    for s in 0..n {
                        j[(n + r, s)] = -beta * h[(r, s)];
                    }
                    j[(n + r, r)] -= self.c;
                    j[(n + r, n + r)] = -self.alpha;
                }
                Ok(j)
            }
            FlowKind::Trisg => {
                let damping = 5.0 * t.powf(-0.8);
                let tik = t.powf(-1.6);
                let h = hess(&z[..n])?;
                let mut j = Mat::zeros(2 * n, 2 * n);
                for r in 0..n {
                    j[(r, n + r)] = 1.0;
                    for s in 0..n {
                        j[(n + r, s)] = -h[(r, s)];
                    }
                    j[(n + r, r)] -= tik;
                    j[(n + r, n + r)] = -damping;
                }
                Ok(j)
            }
            FlowKind::Trish => Err(Error::UnsupportedProblem(
                "trish has no closed-form jacobian; integrate it with dopri5".into(),
            )),
        }
    }
}

/// Integrators. `Auto` picks the linearly implicit method for the scheduled
/// kinds when the problem has second derivatives, and the explicit pair for
/// trisg, trish, and hessian-free problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    Dopri5,
    Rosenbrock,
}

impl Method {
    pub fn from_name(name: &str) -> Result<Method> {
        match name {
            "auto" => Ok(Method::Auto),
            "dopri5" => Ok(Method::Dopri5),
            "rosenbrock" => Ok(Method::Rosenbrock),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected auto, dopri5 or rosenbrock"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::Dopri5 => "dopri5",
            Method::Rosenbrock => "rosenbrock",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: u64,
    pub samples: usize,
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            h_init: 1e-6,
            h_min: 1e-13,
            max_steps: 10_000_000,
            samples: 500,
            method: Method::Auto,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("integrator config: {what}")));
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol must be positive");
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol must be positive");
        }
        if !(self.h_init > 0.0 && self.h_init.is_finite()) {
            return bad("h_init must be positive");
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init) {
            return bad("h_min must satisfy 0 < h_min <= h_init");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if self.samples < 2 {
            return bad("samples must be at least 2");
        }
        Ok(())
    }
}

/// A time-stamped stacked state.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub z: Vec<f64>,
}

/// Result of an adaptive integration: dense samples plus step accounting.
#[derive(Debug)]
pub struct Trajectory {
    pub samples: Vec<FlowState>,
    pub accepted: u64,
    pub rejected: u64,
    pub n_rhs: u64,
    pub n_jac: u64,
    pub method: Method,
}

/// Integrate z' = F(t, z) from (t0, z0) to t_end, emitting `cfg.samples`
/// log-spaced states through dense interpolation. The observer sees each
/// sample as it is produced; the same states come back in the trajectory.
pub fn integrate<F: FnMut(&FlowState)>(
    system: &FlowSystem,
    z0: &[f64],
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    mut observer: F,
) -> Result<Trajectory> {
    cfg.validate()?;
    let method = validate_run(system, z0, t0, t_end, cfg.method)?;
    let times = log_grid(t0, t_end, cfg.samples)?;
    let mut sampler = Sampler::new(times, &mut observer);
    sampler.take_initial(t0, z0);

    let h0 = initial_step(system, z0, t0, t_end, cfg);
    let out = match method {
        Method::Dopri5 => dopri5::drive(system, z0, t0, t_end, h0, cfg, &mut sampler)?,
        Method::Rosenbrock => rosenbrock::drive(system, z0, t0, t_end, h0, cfg, &mut sampler)?,
        Method::Auto => unreachable!("validate_run resolves the method"),
    };
    let samples = sampler.samples;
    Ok(Trajectory {
        samples,
        accepted: out.accepted,
        rejected: out.rejected,
        n_rhs: out.n_rhs,
        n_jac: out.n_jac,
        method,
    })
}

/// Fixed-step integration with `n_steps` equal steps, no error control and no
/// sampling. This exists for order measurements by step halving.
pub fn integrate_fixed(
    system: &FlowSystem,
    z0: &[f64],
    t0: f64,
    t_end: f64,
    n_steps: usize,
    method: Method,
) -> Result<FlowState> {
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    let method = validate_run(system, z0, t0, t_end, method)?;
    let z = fixed_drive(system, z0, t0, t_end, n_steps, method == Method::Rosenbrock)?;
    Ok(FlowState { t: t_end, z })
}

fn validate_run(
    system: &FlowSystem,
    z0: &[f64],
    t0: f64,
    t_end: f64,
    method: Method,
) -> Result<Method> {
    if z0.len() != system.state_dim() {
        return Err(Error::Config(format!(
            "initial state has length {}, but {} on {} needs {}",
            z0.len(),
            system.kind.name(),
            system.problem.name,
            system.state_dim()
        )));
    }
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(Error::Config(format!(
            "need finite t0 < t_end, got [{t0}, {t_end}]"
        )));
    }
    let t_min = if system.kind.scheduled() { system.schedule.t_min() } else { 0.0 };
    if !(t0 > 0.0 && t0 >= t_min) {
        return Err(Error::Config(format!(
            "t0 = {t0} is below the smallest admissible start {} for {}",
            t_min.max(f64::MIN_POSITIVE),
            system.kind.name()
        )));
    }
    let (x, v) = system.split(z0);
    system.check_position(t0, x)?;
    if let Some(v) = v {
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("initial velocity must be finite".into()));
        }
    }

    let resolved = match method {
        Method::Auto => {
            if system.kind.scheduled() && system.problem.has_hessian() {
                Method::Rosenbrock
            } else {
                Method::Dopri5
            }
        }
        m => m,
    };
    if resolved == Method::Rosenbrock {
        if system.kind == FlowKind::Trish {
            return Err(Error::Config(
                "trish cannot run under rosenbrock (no jacobian); use dopri5".into(),
            ));
        }
        if !system.problem.has_hessian() {
            return Err(Error::UnsupportedProblem(format!(
                "{} has no second derivatives; rosenbrock needs a jacobian",
                system.problem.name
            )));
        }
    }
    Ok(resolved)
}

fn initial_step(system: &FlowSystem, z0: &[f64], t0: f64, t_end: f64, cfg: &IntegratorConfig) -> f64 {
    let mut h = cfg.h_init.min(t_end - t0);
    let (x, _) = system.split(z0);
    if let Ok(guard) = system.stiffness_guard(t0, x) {
        if guard > 0.0 && guard.is_finite() {
            h = h.min(1.0 / guard);
        }
    }
    h
}

fn fixed_drive<S: Ode + ?Sized>(
    sys: &S,
    z0: &[f64],
    t0: f64,
    t_end: f64,
    n_steps: usize,
    rosenbrock: bool,
) -> Result<Vec<f64>> {
    let h = (t_end - t0) / n_steps as f64;
    let mut y = z0.to_vec();
    let mut t = t0;
    for i in 0..n_steps {
        let y_new = if rosenbrock {
            let j = sys.jacobian(t, &y)?;
            let mut ft = vec![0.0; sys.dim()];
            sys.rhs_dt(t, &y, &mut ft)?;
            let mut f0 = vec![0.0; sys.dim()];
            sys.rhs(t, &y, &mut f0)?;
            rosenbrock::step(sys, t, &y, h, &j, &ft, &f0)?.0
        } else {
            let mut k = vec![vec![0.0; sys.dim()]; 7];
            sys.rhs(t, &y, &mut k[0])?;
            dopri5::step(sys, t, &y, h, &mut k)?.0
        };
        y = y_new;
        t = if i + 1 == n_steps { t_end } else { t0 + (i + 1) as f64 * h };
    }
    Ok(y)
}

/// What the drivers need from a system. FlowSystem is the real implementor;
/// tests use scalar toy equations with known solutions.
pub(crate) trait Ode {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()>;
    fn rhs_dt(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()>;
    fn jacobian(&self, t: f64, z: &[f64]) -> Result<Mat>;

    fn admissible(&self, z: &[f64]) -> bool {
        z.iter().all(|c| c.is_finite())
    }

    /// Step ceiling to re-impose after each accepted explicit step, if any.
    fn recap(&self, _t: f64, _z: &[f64]) -> Option<f64> {
        None
    }
}

impl Ode for FlowSystem<'_> {
    fn dim(&self) -> usize {
        self.state_dim()
    }

    fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.rhs_into(t, z, out)
    }

    fn rhs_dt(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.rhs_dt_into(t, z, out)
    }

    fn jacobian(&self, t: f64, z: &[f64]) -> Result<Mat> {
        self.jacobian_mat(t, z)
    }

    fn admissible(&self, z: &[f64]) -> bool {
        let (x, v) = self.split(z);
        self.problem.in_domain(x) && v.map_or(true, |v| v.iter().all(|c| c.is_finite()))
    }

    fn recap(&self, t: f64, z: &[f64]) -> Option<f64> {
        if !matches!(self.schedule.family, ScheduleFamily::PowerExp { .. }) {
            return None;
        }
        let (x, _) = self.split(z);
        match self.stiffness_guard(t, x) {
            Ok(g) if g > 0.0 && g.is_finite() => Some(1.0 / g),
            _ => None,
        }
    }
}

/// RMS of err scaled by abs_tol + rel_tol max(|y|, |y_new|); accept iff <= 1.
pub(crate) fn error_norm(
    err: &[f64],
    y: &[f64],
    y_new: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..err.len() {
        let sk = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
        let r = err[i] / sk;
        acc += r * r;
    }
    (acc / err.len() as f64).sqrt()
}

pub(crate) struct StepCounts {
    pub accepted: u64,
    pub rejected: u64,
    pub n_rhs: u64,
    pub n_jac: u64,
}

/// Emits requested sample times from each accepted step's interval via cubic
/// Hermite interpolation, falling back to linear interpolation when the
/// endpoint slopes are too steep for the displacement (stiff transients make
/// the Hermite cubic overshoot wildly there).
pub(crate) struct Sampler<'a> {
    times: Vec<f64>,
    idx: usize,
    pub samples: Vec<FlowState>,
    observer: &'a mut dyn FnMut(&FlowState),
}

impl<'a> Sampler<'a> {
    pub fn new(times: Vec<f64>, observer: &'a mut dyn FnMut(&FlowState)) -> Sampler<'a> {
        let n = times.len();
        Sampler { times, idx: 0, samples: Vec::with_capacity(n), observer }
    }

    pub fn pending_before(&self, t: f64) -> bool {
        self.idx < self.times.len() && self.times[self.idx] <= t * (1.0 + 1e-14)
    }

    pub fn take_initial(&mut self, t0: f64, z0: &[f64]) {
        while self.pending_before(t0) {
            let ts = self.times[self.idx];
            self.emit(ts, z0.to_vec());
        }
    }

    pub fn advance(
        &mut self,
        t_lo: f64,
        z_lo: &[f64],
        f_lo: &[f64],
        h: f64,
        t_hi: f64,
        z_hi: &[f64],
        f_hi: &[f64],
    ) {
        if !self.pending_before(t_hi) {
            return;
        }
        let dz_norm = {
            let mut s = 0.0;
            for i in 0..z_lo.len() {
                let d = z_hi[i] - z_lo[i];
                s += d * d;
            }
            s.sqrt()
        };
        let steep = h * (linalg::norm(f_lo) + linalg::norm(f_hi)) > 10.0 * (dz_norm + 1e-12);
        while self.pending_before(t_hi) {
            let ts = self.times[self.idx];
            let th = ((ts - t_lo) / h).clamp(0.0, 1.0);
            let mut zi = vec![0.0; z_lo.len()];
            if steep {
                for i in 0..zi.len() {
                    zi[i] = z_lo[i] + th * (z_hi[i] - z_lo[i]);
                }
            } else {
                let h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
                let h10 = th * (1.0 - th) * (1.0 - th);
                let h01 = th * th * (3.0 - 2.0 * th);
                let h11 = th * th * (th - 1.0);
                for i in 0..zi.len() {
                    zi[i] =
                        h00 * z_lo[i] + h10 * h * f_lo[i] + h01 * z_hi[i] + h11 * h * f_hi[i];
                }
            }
            self.emit(ts, zi);
        }
    }

    fn emit(&mut self, t: f64, z: Vec<f64>) {
        let state = FlowState { t, z };
        (self.observer)(&state);
        self.samples.push(state);
        self.idx += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{example1, quadratic_shift, zero};

    /// y' = -2 t y^2 with y(0) = 1, exactly y(t) = 1 / (1 + t^2).
    struct Riccati;

    impl Ode for Riccati {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = -2.0 * t * z[0] * z[0];
            Ok(())
        }
        fn rhs_dt(&self, _t: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = -2.0 * z[0] * z[0];
            Ok(())
        }
        fn jacobian(&self, t: f64, z: &[f64]) -> Result<Mat> {
            let mut m = Mat::zeros(1, 1);
            m[(0, 0)] = -4.0 * t * z[0];
            Ok(m)
        }
    }

    /// y' = -lambda (y - cos t) - sin t relaxes onto y = cos t.
    struct StiffRelax {
        lambda: f64,
    }

    impl Ode for StiffRelax {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = -self.lambda * (z[0] - t.cos()) - t.sin();
            Ok(())
        }
        fn rhs_dt(&self, t: f64, _z: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = -self.lambda * t.sin() - t.cos();
            Ok(())
        }
        fn jacobian(&self, _t: f64, _z: &[f64]) -> Result<Mat> {
            let mut m = Mat::zeros(1, 1);
            m[(0, 0)] = -self.lambda;
            Ok(m)
        }
    }

    fn riccati_error(n_steps: usize, rosenbrock: bool) -> f64 {
        let y = fixed_drive(&Riccati, &[1.0], 0.0, 1.0, n_steps, rosenbrock).unwrap();
        (y[0] - 0.5).abs()
    }

    #[test]
    fn dopri5_fixed_step_has_fifth_order() {
        let errs: Vec<f64> = [8, 16, 32].iter().map(|&n| riccati_error(n, false)).collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((20.0..60.0).contains(&ratio), "ratios off fifth order: {errs:?}");
        }
    }

    #[test]
    fn rosenbrock_fixed_step_has_fourth_order() {
        let errs: Vec<f64> = [10, 20, 40].iter().map(|&n| riccati_error(n, true)).collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((10.0..26.0).contains(&ratio), "ratios off fourth order: {errs:?}");
        }
    }

    #[test]
    fn rosenbrock_tracks_stiff_relaxation_with_large_steps() {
        let sys = StiffRelax { lambda: 1e8 };
        let y = fixed_drive(&sys, &[1.0], 0.0, 1.0, 100, true).unwrap();
        assert!((y[0] - 1.0f64.cos()).abs() < 1e-4, "got {}", y[0]);
    }

    fn drive_to_end<S: Ode>(sys: &S, z0: &[f64], t0: f64, t_end: f64, cfg: &IntegratorConfig, rosenbrock: bool) -> Result<Vec<f64>> {
        let mut noop = |_: &FlowState| {};
        let mut sampler = Sampler::new(vec![t_end], &mut noop);
        let h0 = cfg.h_init.min(t_end - t0);
        if rosenbrock {
            rosenbrock::drive(sys, z0, t0, t_end, h0, cfg, &mut sampler)?;
        } else {
            dopri5::drive(sys, z0, t0, t_end, h0, cfg, &mut sampler)?;
        }
        Ok(sampler.samples.pop().unwrap().z)
    }

    #[test]
    fn adaptive_drivers_hit_requested_accuracy() {
        let cfg = IntegratorConfig { rel_tol: 1e-9, abs_tol: 1e-12, ..Default::default() };
        for rosenbrock in [false, true] {
            let y = drive_to_end(&Riccati, &[1.0], 0.0, 1.0, &cfg, rosenbrock).unwrap();
            assert!((y[0] - 0.5).abs() < 1e-7, "rosenbrock={rosenbrock}: {}", y[0]);
        }
    }

    #[test]
    fn explicit_driver_reports_stiffness_when_steps_collapse() {
        let cfg = IntegratorConfig { h_init: 1e-2, h_min: 1e-3, ..Default::default() };
        let err = drive_to_end(&StiffRelax { lambda: 1e8 }, &[0.0], 0.0, 1.0, &cfg, false)
            .unwrap_err();
        assert!(matches!(err, Error::Stiffness { .. }), "got {err:?}");
    }

    #[test]
    fn rhs_of_first_order_flow_is_minus_beta_grad_minus_cx() {
        let p = example1();
        let sched = ScheduleSpec::power_log(2.0, 2.0).unwrap().with_scale(2.0).unwrap();
        let sys = FlowSystem::first_order(&p, sched, 5.0).unwrap();
        let t = std::f64::consts::E;
        let beta = 2.0 * t * t;
        let x = [0.25, -0.5];
        let g = p.gradient(&x);
        let out = sys.rhs(t, &x).unwrap();
        for i in 0..2 {
            let want = -beta * g[i] - 5.0 * x[i];
            assert!((out[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn rhs_vanishes_only_at_the_balance_point() {
        let p = quadratic_shift(vec![1.0, -2.0]).unwrap();
        let sched = ScheduleSpec::power_log(0.0, 1.0).unwrap();
        let sys = FlowSystem::first_order(&p, sched, 2.0).unwrap();
        let t = std::f64::consts::E;
        let a = [1.0, -2.0];
        let x: Vec<f64> = a.iter().map(|ai| ai / 3.0).collect();
        let out = sys.rhs(t, &x).unwrap();
        assert!(linalg::norm(&out) < 1e-14, "beta grad + c x should cancel: {out:?}");
    }

    #[test]
    fn rhs_of_second_order_flows_matches_hand_computation() {
        let p = quadratic_shift(vec![1.0, -2.0]).unwrap();
        let trisal = FlowSystem::comparator(FlowKind::Trisal, &p).unwrap();
        let t = std::f64::consts::E;
        let beta = 2.0 * t * t;
        let z = [2.0, 0.0, 0.5, -1.0];
        let out = trisal.rhs(t, &z).unwrap();
        assert_eq!(&out[..2], &z[2..]);
        let acc0 = -5.0 * 0.5 - beta * (2.0 - 1.0) - 5.0 * 2.0;
        let acc1 = -5.0 * -1.0 - beta * (0.0 + 2.0) - 5.0 * 0.0;
        assert!((out[2] - acc0).abs() < 1e-10 && (out[3] - acc1).abs() < 1e-10);

        let trisg = FlowSystem::comparator(FlowKind::Trisg, &p).unwrap();
        let z = [1.0, 0.0, 2.0, 3.0];
        let out = trisg.rhs(1.0, &z).unwrap();
        assert_eq!(out, vec![2.0, 3.0, -11.0, -17.0]);

        let trish = FlowSystem::comparator(FlowKind::Trish, &p).unwrap();
        let out = trish.rhs(1.0, &z).unwrap();
        assert_eq!(out, vec![2.0, 3.0, -15.0, -23.0]);
    }

    #[test]
    fn comparator_coefficients_match_their_equations() {
        let p = example1();
        let tral = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        assert_eq!(tral.schedule.eval(10.0).unwrap().beta, 200.0 * 10f64.ln().powi(2));
        assert_eq!((tral.c, tral.alpha), (5.0, 0.0));

        let trae = FlowSystem::comparator(FlowKind::Trae, &p).unwrap();
        let want = 2.0 * (2.0 * 10f64.powf(0.9)).exp() * 100.0;
        assert!((trae.schedule.eval(10.0).unwrap().beta - want).abs() < 1e-9 * want);

        let trisae = FlowSystem::comparator(FlowKind::Trisae, &p).unwrap();
        let want = 2.0 * (2.0 * 10f64.powf(0.8)).exp() * 100.0;
        assert!((trisae.schedule.eval(10.0).unwrap().beta - want).abs() < 1e-9 * want);
        assert_eq!(trisae.alpha, 5.0);

        let trisg = FlowSystem::comparator(FlowKind::Trisg, &p).unwrap();
        let (sched, c) = trisg.center_model();
        assert_eq!(c, 1.0);
        assert!((sched.eval(32.0).unwrap().beta - 256.0).abs() < 1e-12);
    }

    #[test]
    fn stiffness_guard_combines_gradient_weight_and_lipschitz_bound() {
        let p = example1();
        let tral = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        let x = [0.0, 0.0];
        let beta = 200.0 * 10f64.ln().powi(2);
        let want = beta * 6.0 + 5.0;
        assert!((tral.stiffness_guard(10.0, &x).unwrap() - want).abs() < 1e-9);

        let z = zero(2);
        let sys =
            FlowSystem::first_order(&z, ScheduleSpec::power_log(1.0, 0.0).unwrap(), 5.0).unwrap();
        assert_eq!(sys.stiffness_guard(7.0, &x).unwrap(), 5.0);

        let trisg = FlowSystem::comparator(FlowKind::Trisg, &p).unwrap();
        assert!((trisg.stiffness_guard(32.0, &x).unwrap() - (6.0 + 1.0 / 256.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_problem_decays_at_rate_c_under_both_methods() {
        let z = zero(2);
        let sched = ScheduleSpec::power_log(1.0, 0.0).unwrap();
        let sys = FlowSystem::first_order(&z, sched, 5.0).unwrap();
        for method in [Method::Dopri5, Method::Rosenbrock] {
            let cfg = IntegratorConfig {
                rel_tol: 1e-10,
                abs_tol: 1e-14,
                method,
                ..Default::default()
            };
            let traj = integrate(&sys, &[1.0, 1.0], 1.0, 3.0, &cfg, |_| {}).unwrap();
            let want = (-10.0f64).exp();
            let last = traj.samples.last().unwrap();
            for c in &last.z {
                assert!(
                    (c - want).abs() < 1e-6 * want,
                    "{method:?}: {c} vs {want}"
                );
            }
        }
    }

    #[test]
    fn integrate_emits_the_requested_log_spaced_grid() {
        let p = example1();
        let sys = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        let cfg = IntegratorConfig { samples: 40, ..Default::default() };
        let mut seen = 0usize;
        let traj = integrate(&sys, &[1.0, 1.0], 1.0, 10.0, &cfg, |_| seen += 1).unwrap();
        assert_eq!(traj.method, Method::Rosenbrock);
        assert_eq!(seen, 40);
        assert_eq!(traj.samples.len(), 40);
        assert_eq!(traj.samples[0].t, 1.0);
        assert_eq!(traj.samples[0].z, vec![1.0, 1.0]);
        assert_eq!(traj.samples.last().unwrap().t, 10.0);
        for w in traj.samples.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].z.iter().all(|c| c.is_finite()));
        }
    }

    #[test]
    fn sampled_states_match_the_exact_flow_between_steps() {
        let z = zero(1);
        let sched = ScheduleSpec::power_log(1.0, 0.0).unwrap();
        let sys = FlowSystem::first_order(&z, sched, 5.0).unwrap();
        for method in [Method::Dopri5, Method::Rosenbrock] {
            let cfg = IntegratorConfig { samples: 200, method, ..Default::default() };
            let traj = integrate(&sys, &[1.0], 1.0, 3.0, &cfg, |_| {}).unwrap();
            for s in &traj.samples {
                let want = (-5.0 * (s.t - 1.0)).exp();
                assert!(
                    (s.z[0] - want).abs() <= 1e-5 * want,
                    "{method:?} at t={}: {} vs {want}",
                    s.t,
                    s.z[0]
                );
            }
        }
    }

    #[test]
    fn methods_agree_on_a_polylog_comparator_run() {
        let p = example1();
        let sys = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        let mut finals = Vec::new();
        for method in [Method::Rosenbrock, Method::Dopri5] {
            let cfg = IntegratorConfig {
                rel_tol: 1e-9,
                abs_tol: 1e-13,
                samples: 10,
                method,
                ..Default::default()
            };
            let traj = integrate(&sys, &[1.0, 1.0], 1.0, 20.0, &cfg, |_| {}).unwrap();
            finals.push(traj.samples.last().unwrap().z.clone());
        }
        for i in 0..2 {
            assert!(
                (finals[0][i] - finals[1][i]).abs() < 1e-6,
                "methods disagree: {finals:?}"
            );
        }
    }

    #[test]
    fn trajectories_started_inside_the_domain_stay_inside() {
        let p = example1();
        let sys = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        let cfg = IntegratorConfig::default();
        let traj = integrate(&sys, &[-0.9, -0.9], 1.0, 10.0, &cfg, |_| {}).unwrap();
        for s in &traj.samples {
            assert!(p.in_domain(&s.z), "left domain at t={}", s.t);
        }
    }

    #[test]
    fn step_budget_is_enforced() {
        let p = example1();
        let sys = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        let cfg = IntegratorConfig { max_steps: 5, ..Default::default() };
        let err = integrate(&sys, &[1.0, 1.0], 1.0, 1e4, &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::StepBudget { max_steps: 5, .. }), "got {err:?}");
    }

    #[test]
    fn auto_selects_the_stiff_method_only_when_a_jacobian_exists() {
        let p = example1();
        let cfg = IntegratorConfig { samples: 5, ..Default::default() };

        let sys = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        assert_eq!(integrate(&sys, &[1.0, 1.0], 1.0, 2.0, &cfg, |_| {}).unwrap().method, Method::Rosenbrock);

        let sys = FlowSystem::comparator(FlowKind::Trisg, &p).unwrap();
        let traj = integrate(&sys, &[1.0, 1.0, 0.0, 0.0], 1.0, 2.0, &cfg, |_| {}).unwrap();
        assert_eq!(traj.method, Method::Dopri5);

        let bare = example1().without_hessian();
        let sys = FlowSystem::comparator(FlowKind::Tral, &bare).unwrap();
        assert_eq!(integrate(&sys, &[1.0, 1.0], 1.0, 2.0, &cfg, |_| {}).unwrap().method, Method::Dopri5);

        let cfg_rb = IntegratorConfig { method: Method::Rosenbrock, ..cfg.clone() };
        let err = integrate(&sys, &[1.0, 1.0], 1.0, 2.0, &cfg_rb, |_| {}).unwrap_err();
        assert!(matches!(err, Error::UnsupportedProblem(_)), "got {err:?}");

        let sys = FlowSystem::comparator(FlowKind::Trish, &p).unwrap();
        let err = integrate(&sys, &[1.0, 1.0, 0.0, 0.0], 1.0, 2.0, &cfg_rb, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn trish_requires_second_derivatives() {
        let bare = example1().without_hessian();
        let err = FlowSystem::comparator(FlowKind::Trish, &bare).unwrap_err();
        assert!(matches!(err, Error::UnsupportedProblem(_)));
    }

    #[test]
    fn invalid_runs_are_rejected_up_front() {
        let p = example1();
        let sys = FlowSystem::comparator(FlowKind::Tral, &p).unwrap();
        let cfg = IntegratorConfig::default();

        let err = integrate(&sys, &[1.0], 1.0, 2.0, &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "wrong state length: {err:?}");

        let err = integrate(&sys, &[1.0, 1.0], 2.0, 2.0, &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "empty time span: {err:?}");

        let err = integrate(&sys, &[1.0, 1.0], 0.5, 2.0, &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "below schedule t_min: {err:?}");

        let err = integrate(&sys, &[-2.0, 0.0], 1.0, 2.0, &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }), "outside domain: {err:?}");

        let bad = IntegratorConfig { samples: 1, ..cfg };
        let err = integrate(&sys, &[1.0, 1.0], 1.0, 2.0, &bad, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "too few samples: {err:?}");
    }

    #[test]
    fn second_order_gradient_flow_makes_progress_on_example1() {
        let p = example1();
        let sys = FlowSystem::comparator(FlowKind::Trisg, &p).unwrap();
        let cfg = IntegratorConfig { samples: 50, ..Default::default() };
        let traj = integrate(&sys, &[1.0, 1.0, 0.0, 0.0], 1.0, 100.0, &cfg, |_| {}).unwrap();
        assert_eq!(traj.method, Method::Dopri5);
        let first = p.value_gap(&traj.samples[0].z[..2]).unwrap();
        let last = p.value_gap(&traj.samples.last().unwrap().z[..2]).unwrap();
        assert!(last < 1e-3 * first, "gap {first} -> {last}");
    }
}
