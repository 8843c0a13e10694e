//! Temporal scaling schedules beta(t) and the admissibility checks that
//! decide whether a given decay rate mu is justified for them.
//!
//! Two families are supported:
//!   power_log:  beta(t) = scale * t^m * ln(t)^p          on t >= 1
//!   power_exp:  beta(t) = scale * t^m * exp(gamma * t^r) on t > 0
//!
//! Derivatives are evaluated in factored form so no term divides by ln(t)
//! or t when its coefficient vanishes, and the ratios beta'/beta and
//! beta''/beta' are computed directly. The ratio forms matter: beta itself
//! overflows f64 long before the ratios stop being perfectly tame, and the
//! admissibility conditions only ever need the ratios.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScheduleFamily {
    PowerLog { m: f64, p: f64 },
    PowerExp { m: f64, gamma: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleSpec {
    pub family: ScheduleFamily,
    pub scale: f64,
    t_min: f64,
}

/// beta and its first two derivatives at a single time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePoint {
    pub t: f64,
    pub beta: f64,
    pub dbeta: f64,
    pub ddbeta: f64,
}

impl ScheduleSpec {
    pub fn power_log(m: f64, p: f64) -> Result<ScheduleSpec> {
        if !(m >= 0.0 && p >= 0.0) || !(m.is_finite() && p.is_finite()) {
            return Err(Error::Config(format!(
                "power_log needs m >= 0 and p >= 0, got m = {m}, p = {p}"
            )));
        }
        if m == 0.0 && p == 0.0 {
            return Err(Error::Config(
                "power_log with m = p = 0 is constant and provides no scaling".into(),
            ));
        }
        Ok(ScheduleSpec {
            family: ScheduleFamily::PowerLog { m, p },
            scale: 1.0,
            t_min: 1.0,
        })
    }

    pub fn power_exp(m: f64, gamma: f64, r: f64) -> Result<ScheduleSpec> {
        if !(m >= 0.0 && m.is_finite()) || !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!(
                "power_exp needs m >= 0 and gamma > 0, got m = {m}, gamma = {gamma}"
            )));
        }
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Config(format!(
                "power_exp needs 0 < r <= 1, got r = {r}"
            )));
        }
        Ok(ScheduleSpec {
            family: ScheduleFamily::PowerExp { m, gamma, r },
            scale: 1.0,
            // strictly positive as a bound; the family is defined for all t > 0
            t_min: f64::MIN_POSITIVE,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<ScheduleSpec> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    /// Left edge of the admissible time domain. For power_log this is 1,
    /// where beta(1) = 0 whenever p > 0; that endpoint is allowed and the
    /// flow starts from a pure Tikhonov contraction there.
    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(t >= self.t_min) {
            return Err(Error::Domain {
                t,
                what: format!("schedule domain starts at t = {}", self.t_min),
            });
        }
        Ok(())
    }

    /// beta, beta', beta'' at t. Errors if t is out of domain or any value
    /// overflows f64 (power_exp grows past 1e308 eventually; callers that
    /// only need growth ratios should use those instead).
    pub fn eval(&self, t: f64) -> Result<SchedulePoint> {
        self.check_t(t)?;
        let s = self.scale;
        let (beta, dbeta, ddbeta) = match self.family {
            ScheduleFamily::PowerLog { m, p } => {
                let lt = t.ln();
                let beta = s * powf_or_one(t, m) * powf_or_one(lt, p);
                let dbeta = if p == 0.0 {
                    s * m * powf_or_one(t, m - 1.0)
                } else {
                    s * powf_or_one(t, m - 1.0) * powf_or_one(lt, p - 1.0) * (m * lt + p)
                };
                // second derivative as a sum over powers of ln(t), skipping
                // terms whose coefficient is exactly zero so ln(1) = 0 never
                // gets raised to a negative power needlessly
                let mut poly = 0.0;
                if m != 0.0 && m != 1.0 {
                    poly += m * (m - 1.0) * powf_or_one(lt, p);
                }
                if p != 0.0 {
                    poly += (2.0 * m - 1.0) * p * powf_or_one(lt, p - 1.0);
                }
                if p != 0.0 && p != 1.0 {
                    poly += p * (p - 1.0) * powf_or_one(lt, p - 2.0);
                }
                let ddbeta = s * powf_or_one(t, m - 2.0) * poly;
                (beta, dbeta, ddbeta)
            }
            ScheduleFamily::PowerExp { m, gamma, r } => {
                let e = (gamma * t.powf(r)).exp();
                let beta = s * powf_or_one(t, m) * e;
                let q = r * gamma * t.powf(r); // r*gamma*t^r, so beta'/beta = (m + q)/t
                let dbeta = s * powf_or_one(t, m - 1.0) * e * (m + q);
                let ddbeta =
                    s * powf_or_one(t, m - 2.0) * e * (m * (m - 1.0) + (2.0 * m + r - 1.0) * q + q * q);
                (beta, dbeta, ddbeta)
            }
        };
        if !(beta.is_finite() && dbeta.is_finite() && ddbeta.is_finite()) {
            return Err(Error::Domain {
                t,
                what: format!("schedule value overflows f64 ({self})"),
            });
        }
        Ok(SchedulePoint { t, beta, dbeta, ddbeta })
    }

    /// ln beta(t), finite wherever beta > 0 even when beta overflows f64.
    pub fn log_beta(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        let lt = t.ln();
        Ok(match self.family {
            ScheduleFamily::PowerLog { m, p } => self.scale.ln() + m * lt + p * lt.ln(),
            ScheduleFamily::PowerExp { m, gamma, r } => {
                self.scale.ln() + m * lt + gamma * t.powf(r)
            }
        })
    }

    /// beta'(t) / beta(t) in cancellation-free form. Needs t > 1 for
    /// power_log with p > 0 (the ratio diverges at t = 1 where beta = 0).
    pub fn growth_ratio(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        match self.family {
            ScheduleFamily::PowerLog { m, p } => {
                if p == 0.0 {
                    return Ok(m / t);
                }
                let lt = t.ln();
                if lt <= 0.0 {
                    return Err(Error::Domain {
                        t,
                        what: "growth ratio of power_log with p > 0 needs t > 1".into(),
                    });
                }
                Ok(m / t + p / (t * lt))
            }
            ScheduleFamily::PowerExp { m, gamma, r } => {
                Ok(m / t + r * gamma * t.powf(r - 1.0))
            }
        }
    }

    /// beta''(t) / beta'(t) in cancellation-free form.
    pub fn curvature_ratio(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        match self.family {
            ScheduleFamily::PowerLog { m, p } => {
                if p == 0.0 {
                    return Ok((m - 1.0) / t);
                }
                let lt = t.ln();
                if lt <= 0.0 {
                    return Err(Error::Domain {
                        t,
                        what: "curvature ratio of power_log with p > 0 needs t > 1".into(),
                    });
                }
                let num = m * (m - 1.0) * lt * lt + (2.0 * m - 1.0) * p * lt + p * (p - 1.0);
                Ok(num / (t * lt * (m * lt + p)))
            }
            ScheduleFamily::PowerExp { m, gamma, r } => {
                let q = r * gamma * t.powf(r);
                Ok((m * (m - 1.0) + (2.0 * m + r - 1.0) * q + q * q) / (t * (m + q)))
            }
        }
    }
}

impl std::fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = self.scale;
        match self.family {
            ScheduleFamily::PowerLog { m, p } => write!(f, "{s}*t^{m}*ln(t)^{p}"),
            ScheduleFamily::PowerExp { m, gamma, r } => {
                write!(f, "{s}*t^{m}*exp({gamma}*t^{r})")
            }
        }
    }
}

/// x^y with the convention x^0 = 1 even at x = 0, so vanishing exponents
/// never poison a factored product.
fn powf_or_one(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        x.powf(y)
    }
}

/// Outcome of checking the admissibility conditions for a pair (c, mu) on a
/// finite grid. `cond_ii_margin` is the minimum of (c - mu) - beta'/beta over
/// the tail of the grid; the conditions need it nonnegative. `cond_iii_estimate`
/// approximates the limit superior of
///     (1 + beta'/((c - mu) beta)) / (mu + beta''/beta' - beta'/beta)
/// by its maximum over the tail, and `cond_iii_reference` is the analytic
/// limit where one is known for the family.
#[derive(Debug, Clone, Serialize)]
pub struct HBetaReport {
    pub c: f64,
    pub mu: f64,
    pub grid_start: f64,
    pub grid_end: f64,
    pub grid_len: usize,
    pub cond_ii_margin: f64,
    pub cond_iii_estimate: f64,
    pub cond_iii_reference: Option<f64>,
    /// first grid time from which (ii) holds through the end of the grid
    pub ii_holds_from: Option<f64>,
    pub verdict: bool,
    pub note: Option<String>,
}

/// Checks the admissibility conditions for `spec` with decay rate `mu` under
/// Tikhonov coefficient `c` on an ascending time grid. The tail (last quarter
/// of the grid) stands in for the limit behavior.
pub fn check_hbeta(spec: &ScheduleSpec, c: f64, mu: f64, grid: &[f64]) -> Result<HBetaReport> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("c must be positive, got {c}")));
    }
    if !(mu > 0.0 && mu < c) {
        return Err(Error::Config(format!(
            "mu must lie in (0, c) = (0, {c}), got {mu}"
        )));
    }
    if grid.len() < 8 {
        return Err(Error::Config(format!(
            "admissibility grid needs at least 8 points, got {}",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("admissibility grid must be strictly ascending".into()));
    }

    let n = grid.len();
    let mut growth = Vec::with_capacity(n);
    let mut curvature = Vec::with_capacity(n);
    for &t in grid {
        growth.push(spec.growth_ratio(t)?);
        curvature.push(spec.curvature_ratio(t)?);
    }

    let tail_start = n - n / 4;
    let slack = c - mu;

    let mut cond_ii_margin = f64::INFINITY;
    for i in tail_start..n {
        cond_ii_margin = cond_ii_margin.min(slack - growth[i]);
    }

    // last index at which (ii) fails anywhere on the grid
    let mut ii_holds_from = None;
    let mut last_fail = None;
    for (i, &g) in growth.iter().enumerate() {
        if slack - g < 0.0 {
            last_fail = Some(i);
        }
    }
    match last_fail {
        None => ii_holds_from = Some(grid[0]),
        Some(i) if i + 1 < n => ii_holds_from = Some(grid[i + 1]),
        Some(_) => {}
    }

    let mut cond_iii_estimate: f64 = 0.0;
    let mut note = None;
    for i in tail_start..n {
        let den = mu + curvature[i] - growth[i];
        if den <= 0.0 {
            cond_iii_estimate = f64::INFINITY;
            note = Some(format!(
                "quotient denominator nonpositive at t = {:.6e}; the bound degrades there",
                grid[i]
            ));
            break;
        }
        cond_iii_estimate = cond_iii_estimate.max((1.0 + growth[i] / slack) / den);
    }

    // Known analytic limits: 1/mu whenever the growth ratio decays to zero
    // (power_log, power_exp with r < 1). For r = 1 the ratio tends to gamma
    // and the customary reference is (1 + gamma)/mu, which the estimate can
    // only reproduce when the growth margin c - mu equals 1; for other
    // margins the estimate honestly tends to (1 + gamma/(c - mu))/mu.
    let cond_iii_reference = match spec.family {
        ScheduleFamily::PowerLog { .. } => Some(1.0 / mu),
        ScheduleFamily::PowerExp { gamma, r, .. } => {
            if r < 1.0 {
                Some(1.0 / mu)
            } else {
                Some((1.0 + gamma) / mu)
            }
        }
    };

    let verdict = cond_ii_margin >= 0.0 && cond_iii_estimate.is_finite();
    Ok(HBetaReport {
        c,
        mu,
        grid_start: grid[0],
        grid_end: grid[n - 1],
        grid_len: n,
        cond_ii_margin,
        cond_iii_estimate,
        cond_iii_reference,
        ii_holds_from,
        verdict,
        note,
    })
}

/// Largest admissible mu on a dyadic grid in (0, c): candidates
/// c(1 - 2^-k) descending toward c/2, then c 2^-k descending toward 0.
/// Returns c/2 when every candidate passes (the generic safe choice),
/// otherwise the largest passing candidate, and rejects the schedule when
/// none passes.
pub fn suggest_mu(spec: &ScheduleSpec, c: f64, grid: &[f64]) -> Result<f64> {
    let mut candidates = Vec::new();
    for k in 1..=40u32 {
        candidates.push(c * (1.0 - 0.5f64.powi(k as i32)));
    }
    for k in 2..=40u32 {
        candidates.push(c * 0.5f64.powi(k as i32));
    }
    candidates.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut best = None;
    let mut all_pass = true;
    let mut worst: Option<HBetaReport> = None;
    for &mu in &candidates {
        let report = check_hbeta(spec, c, mu, grid)?;
        if report.verdict {
            if best.is_none() {
                best = Some(mu);
            }
        } else {
            all_pass = false;
            worst = Some(report);
        }
    }
    if all_pass {
        return Ok(c / 2.0);
    }
    match best {
        Some(mu) => Ok(mu),
        None => {
            let report = worst.expect("at least one candidate was checked");
            Err(Error::ScheduleRejected {
                mu: report.mu,
                margin: report.cond_ii_margin,
                report: Box::new(report),
            })
        }
    }
}

/// n logarithmically spaced points on [t_lo, t_hi].
pub fn log_grid(t_lo: f64, t_hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_lo > 0.0 && t_hi > t_lo) || n < 2 {
        return Err(Error::Config(format!(
            "log grid needs 0 < t_lo < t_hi and n >= 2, got [{t_lo}, {t_hi}] with n = {n}"
        )));
    }
    let (a, b) = (t_lo.ln(), t_hi.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    // endpoints exact regardless of rounding in the interior
    out[0] = t_lo;
    out[n - 1] = t_hi;
    Ok(out)
}
