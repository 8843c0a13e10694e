//! Kaps-Rentrop 4(3) linearly implicit pair (Shampine's parameter set).
//!
//! Each step factors (I/(gamma h) - J) once and reuses the Jacobian, the
//! explicit time derivative and F(t, y) across retries at smaller h, so a
//! rejection costs only a refactorization and three stage solves.

use super::{error_norm, IntegratorConfig, Ode, Sampler, StepCounts};
use crate::error::{Error, Result};
use crate::linalg::{Lu, Mat};

const GAM: f64 = 0.5;
const A21: f64 = 2.0;
const A31: f64 = 48.0 / 25.0;
const A32: f64 = 6.0 / 25.0;
const C21: f64 = -8.0;
const C31: f64 = 372.0 / 25.0;
const C32: f64 = 12.0 / 5.0;
const C41: f64 = -112.0 / 125.0;
const C42: f64 = -54.0 / 125.0;
const C43: f64 = -2.0 / 5.0;
const B: [f64; 4] = [19.0 / 9.0, 0.5, 25.0 / 108.0, 125.0 / 108.0];
const E: [f64; 4] = [17.0 / 54.0, 7.0 / 36.0, 0.0, 125.0 / 108.0];
const C1X: f64 = 0.5;
const C2X: f64 = -1.5;
const C3X: f64 = 121.0 / 50.0;
const C4X: f64 = 29.0 / 250.0;
const A2X: f64 = 1.0;
const A3X: f64 = 0.6;

/// One step from (t, y) given the Jacobian j = dF/dz, ft = dF/dt and
/// f0 = F(t, y), all evaluated at (t, y). Returns (y_new, err_vec).
pub(crate) fn step<S: Ode + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    j: &Mat,
    ft: &[f64],
    f0: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let mut a = Mat::zeros(n, n);
    let inv_gh = 1.0 / (GAM * h);
    for r in 0..n {
        for s in 0..n {
            a[(r, s)] = -j[(r, s)];
        }
        a[(r, r)] += inv_gh;
    }
    let lu = Lu::factor(a)?;

    let mut rhs_buf = vec![0.0; n];
    let mut stage = vec![0.0; n];

    for i in 0..n {
        stage[i] = f0[i] + h * C1X * ft[i];
    }
    let g1 = lu.solve(&stage);

    for i in 0..n {
        stage[i] = y[i] + A21 * g1[i];
    }
    sys.rhs(t + A2X * h, &stage, &mut rhs_buf)?;
    for i in 0..n {
        stage[i] = rhs_buf[i] + h * C2X * ft[i] + C21 * g1[i] / h;
    }
    let g2 = lu.solve(&stage);

    for i in 0..n {
        stage[i] = y[i] + A31 * g1[i] + A32 * g2[i];
    }
    sys.rhs(t + A3X * h, &stage, &mut rhs_buf)?;
    for i in 0..n {
        stage[i] = rhs_buf[i] + h * C3X * ft[i] + (C31 * g1[i] + C32 * g2[i]) / h;
    }
    let g3 = lu.solve(&stage);

    for i in 0..n {
        stage[i] = rhs_buf[i] + h * C4X * ft[i] + (C41 * g1[i] + C42 * g2[i] + C43 * g3[i]) / h;
    }
    let g4 = lu.solve(&stage);

    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    for i in 0..n {
        y_new[i] = y[i] + B[0] * g1[i] + B[1] * g2[i] + B[2] * g3[i] + B[3] * g4[i];
        err[i] = E[0] * g1[i] + E[1] * g2[i] + E[2] * g3[i] + E[3] * g4[i];
    }
    Ok((y_new, err))
}

pub(crate) fn drive<S: Ode + ?Sized>(
    sys: &S,
    z0: &[f64],
    t0: f64,
    t_end: f64,
    h0: f64,
    cfg: &IntegratorConfig,
    sampler: &mut Sampler<'_>,
) -> Result<StepCounts> {
    let n = sys.dim();
    let mut y = z0.to_vec();
    let mut t = t0;
    let mut h = h0;
    let mut counts = StepCounts { accepted: 0, rejected: 0, n_rhs: 0, n_jac: 0 };
    let mut f0 = vec![0.0; n];
    let mut ft = vec![0.0; n];
    let mut f1 = vec![0.0; n];

    while t < t_end {
        let j = sys.jacobian(t, &y)?;
        sys.rhs_dt(t, &y, &mut ft)?;
        sys.rhs(t, &y, &mut f0)?;
        counts.n_jac += 1;
        counts.n_rhs += 1;

        loop {
            if counts.accepted + counts.rejected >= cfg.max_steps {
                return Err(Error::StepBudget { t, max_steps: cfg.max_steps });
            }
            if h < cfg.h_min || t + h == t {
                return Err(Error::Stiffness { t, h_min: cfg.h_min, state: y });
            }
            let clamped = t + h >= t_end;
            let h_att = if clamped { t_end - t } else { h };
            let t_new = if clamped { t_end } else { t + h };

            let attempt = step(sys, t, &y, h_att, &j, &ft, &f0);
            counts.n_rhs += 2;
            let (y_new, err) = match attempt {
                Ok(pair) => pair,
                Err(Error::Domain { .. }) => {
                    counts.rejected += 1;
                    h = h_att * 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };

            let finite = y_new.iter().all(|c| c.is_finite());
            if !finite || !sys.admissible(&y_new) {
                counts.rejected += 1;
                h = h_att * 0.5;
                continue;
            }
            let enorm = error_norm(&err, &y, &y_new, cfg.abs_tol, cfg.rel_tol);
            if enorm > 1.0 {
                counts.rejected += 1;
                h = h_att * (0.9 * enorm.powf(-1.0 / 3.0)).max(0.1);
                continue;
            }

            counts.accepted += 1;
            if sampler.pending_before(t_new) {
                sys.rhs(t_new, &y_new, &mut f1)?;
                counts.n_rhs += 1;
                sampler.advance(t, &y, &f0, h_att, t_new, &y_new, &f1);
            }
            t = t_new;
            y = y_new;
            h = if enorm > 0.0 {
                h_att * (0.9 * enorm.powf(-0.25)).clamp(0.2, 6.0)
            } else {
                h_att * 6.0
            };
            break;
        }
    }
    Ok(counts)
}
