//! Dormand-Prince 5(4) explicit pair with PI step control and FSAL reuse.

use super::{error_norm, IntegratorConfig, Ode, Sampler, StepCounts};
use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFE: f64 = 0.9;
const EXPO: f64 = 0.2;
const PI_BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.1;
const FAC_MAX: f64 = 5.0;

/// One step from (t, y) with k[0] = F(t, y) already filled. Fills k[1..7]
/// (k[6] at the new point, reusable as the next step's k[0]) and returns
/// (y_new, err_vec).
pub(crate) fn step<S: Ode + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    k: &mut [Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let mut ys = vec![0.0; n];
    let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
    for (s, row) in rows.iter().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, a) in row.iter().enumerate() {
                acc += a * k[j][i];
            }
            ys[i] = y[i] + h * acc;
        }
        sys.rhs(t + C[s + 1] * h, &ys, &mut k[s + 1])?;
    }
    let mut y_new = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..6 {
            acc += B[j] * k[j][i];
        }
        y_new[i] = y[i] + h * acc;
    }
    sys.rhs(t + h, &y_new, &mut k[6])?;
    let mut err = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..7 {
            acc += E[j] * k[j][i];
        }
        err[i] = h * acc;
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
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    sys.rhs(t0, &y, &mut k[0])?;
    let mut counts = StepCounts { accepted: 0, rejected: 0, n_rhs: 1, n_jac: 0 };
    let mut facold: f64 = 1e-4;
    let mut just_rejected = false;

    while t < t_end {
        if counts.accepted + counts.rejected >= cfg.max_steps {
            return Err(Error::StepBudget { t, max_steps: cfg.max_steps });
        }
        if h < cfg.h_min || t + h == t {
            return Err(Error::Stiffness { t, h_min: cfg.h_min, state: y });
        }
        let clamped = t + h >= t_end;
        let h_att = if clamped { t_end - t } else { h };
        let t_new = if clamped { t_end } else { t + h };

        let attempt = step(sys, t, &y, h_att, &mut k);
        counts.n_rhs += 6;
        let (y_new, err) = match attempt {
            Ok(pair) => pair,
            Err(Error::Domain { .. }) => {
                counts.rejected += 1;
                just_rejected = true;
                h = h_att * 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };

        let finite = y_new.iter().all(|c| c.is_finite());
        let enorm = if finite {
            error_norm(&err, &y, &y_new, cfg.abs_tol, cfg.rel_tol)
        } else {
            f64::INFINITY
        };
        if !finite || !sys.admissible(&y_new) {
            counts.rejected += 1;
            just_rejected = true;
            h = h_att * 0.5;
            continue;
        }

        let fac11 = enorm.powf(EXPO);
        if enorm <= 1.0 {
            sampler.advance(t, &y, &k[0], h_att, t_new, &y_new, &k[6]);
            t = t_new;
            y = y_new;
            k.swap(0, 6);
            counts.accepted += 1;

            let fac = (fac11 / facold.powf(PI_BETA) / SAFE).clamp(FAC_MIN, FAC_MAX);
            let mut h_next = h_att / fac;
            if just_rejected {
                h_next = h_next.min(h_att);
            }
            if let Some(cap) = sys.recap(t, &y) {
                h_next = h_next.min(cap);
            }
            h = h_next;
            facold = enorm.max(1e-4);
            just_rejected = false;
        } else {
            counts.rejected += 1;
            just_rejected = true;
            h = h_att / (fac11 / SAFE).min(FAC_MAX);
        }
    }
    Ok(counts)
}
