//! Error type shared across the crate.

use crate::schedules::HBetaReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters or inconsistent inputs supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),

    /// Evaluation requested outside the admissible domain.
    #[error("domain error at t = {t}: {what}")]
    Domain { t: f64, what: String },

    /// The problem lacks the ground truth or structure the operation needs.
    #[error("unsupported problem: {0}")]
    UnsupportedProblem(String),

    /// An inner iterative solve ran out of iterations.
    #[error("convergence failure after {iters} iterations (best residual {residual:.3e})")]
    ConvergenceFailure { residual: f64, iters: u32 },

    /// No admissible decay rate exists for the schedule under the given c.
    #[error("schedule rejected: no admissible mu in (0, c); margin {margin:.3e} at mu = {mu:.6}")]
    ScheduleRejected {
        mu: f64,
        margin: f64,
        report: Box<HBetaReport>,
    },

    /// The step size collapsed below h_min; the problem is too stiff for the
    /// selected method at the requested tolerance.
    #[error("stiffness failure at t = {t:.6e}: step size fell below {h_min:.3e}")]
    Stiffness { t: f64, h_min: f64, state: Vec<f64> },

    /// The integration exceeded its step budget.
    #[error("step budget exceeded at t = {t:.6e} ({max_steps} steps)")]
    StepBudget { t: f64, max_steps: u64 },

    /// Too few usable points to fit a rate.
    #[error("rate undefined: {0}")]
    RateUndefined(String),

    /// A lower-level failure tagged with the time at which it happened.
    #[error("at t = {t:.6e}: {source}")]
    At { t: f64, source: Box<Error> },
}

impl Error {
    pub fn at(self, t: f64) -> Error {
        Error::At { t, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
