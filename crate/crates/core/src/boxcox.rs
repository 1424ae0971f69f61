//! Box-Cox power transformations and profile-likelihood selection of lambda.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::golden_section;

/// Half the 0.95 quantile of chi-square with one degree of freedom.
pub const LR_DROP_95: f64 = 1.920_729_410_347_062;

pub const MIN_BOXCOX_N: usize = 10;

/// Refinement tolerance on lambda after the grid search.
pub const LAMBDA_TOL: f64 = 1e-6;

fn check_positive(y: &[f64]) -> Result<()> {
    if let Some(bad) = y.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::param("y", format!("Box-Cox needs positive values, got {bad}")));
    }
    Ok(())
}

fn transform_one(y: f64, lambda: f64) -> f64 {
    let ln = y.ln();
    if lambda == 0.0 {
        ln
    } else {
        (lambda * ln).exp_m1() / lambda
    }
}

/// `(y^lambda - 1) / lambda`, or `ln y` at `lambda = 0`.
pub fn boxcox_transform(y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_positive(y)?;
    if !lambda.is_finite() {
        return Err(Error::param("lambda", "must be finite"));
    }
    Ok(y.iter().map(|&v| transform_one(v, lambda)).collect())
}

/// Lambda grid given as `lo`, `hi` and `step`; points are `lo + k * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            lo: -2.0,
            hi: 2.0,
            step: 0.01,
        }
    }
}

impl LambdaGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::param("grid", "need finite lo < hi"));
        }
        if !(self.step > 0.0 && self.step <= self.hi - self.lo) {
            return Err(Error::param("grid", "step must be positive and at most hi - lo"));
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| self.lo + k as f64 * self.step).collect())
    }
}

/// Normalized profile log-likelihood, up to an additive constant:
/// `-n/2 ln var(z_lambda) + (lambda - 1) sum ln y`.
///
/// Computed on `u = ln y - mean(ln y)`, which keeps `y^lambda` in range for
/// large `|lambda|`.
struct Profile {
    u: Vec<f64>,
    n: f64,
    ln_g: f64,
}

impl Profile {
    fn new(y: &[f64]) -> Result<Self> {
        check_positive(y)?;
        if y.len() < MIN_BOXCOX_N {
            return Err(Error::param("y", format!("at least {MIN_BOXCOX_N} values are required")));
        }
        let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let n = y.len() as f64;
        let ln_g = logs.iter().sum::<f64>() / n;
        let u: Vec<f64> = logs.iter().map(|l| l - ln_g).collect();
        let spread = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if spread <= 1e-12 * ln_g.abs().max(1.0) {
            return Err(Error::Degenerate("Box-Cox profile of constant data".into()));
        }
        Ok(Self { u, n, ln_g })
    }

    fn log_likelihood(&self, lambda: f64) -> f64 {
        let z: Vec<f64> = self
            .u
            .iter()
            .map(|&u| if lambda == 0.0 { u } else { (lambda * u).exp_m1() / lambda })
            .collect();
        let mean = z.iter().sum::<f64>() / self.n;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.n;
        -0.5 * self.n * var.ln() - self.n * self.ln_g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub lambda: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxResult {
    pub lambda_hat: f64,
    pub max_log_likelihood: f64,
    /// Likelihood-ratio 95% interval. An end that does not cross the cutoff
    /// inside the grid is reported at the grid boundary.
    pub ci_lambda: (f64, f64),
    pub profile: Vec<ProfilePoint>,
    pub grid: LambdaGrid,
    pub n: usize,
}

/// Crossing of `f = level` between `a` (above) and `b` (below), by bisection.
fn crossing<F: Fn(f64) -> f64>(f: F, level: f64, mut above: f64, mut below: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (above + below);
        if f(mid) >= level {
            above = mid;
        } else {
            below = mid;
        }
        if (above - below).abs() < LAMBDA_TOL {
            break;
        }
    }
    0.5 * (above + below)
}

pub fn boxcox_profile(y: &[f64], grid: &LambdaGrid) -> Result<BoxCoxResult> {
    let prof = Profile::new(y)?;
    let points = grid.points()?;
    let profile: Vec<ProfilePoint> = points
        .iter()
        .map(|&lambda| ProfilePoint {
            lambda,
            log_likelihood: prof.log_likelihood(lambda),
        })
        .collect();
    if profile.iter().any(|p| !p.log_likelihood.is_finite()) {
        return Err(Error::Degenerate("profile log-likelihood is not finite on the grid".into()));
    }
    let best = (0..profile.len())
        .max_by(|&a, &b| profile[a].log_likelihood.total_cmp(&profile[b].log_likelihood))
        .unwrap_or(0);
    let lo = points[best.saturating_sub(1)];
    let hi = points[(best + 1).min(points.len() - 1)];
    let (mut lambda_hat, neg) = golden_section(|l| -prof.log_likelihood(l), lo, hi, LAMBDA_TOL);
    let mut max_ll = -neg;
    if profile[best].log_likelihood > max_ll {
        lambda_hat = profile[best].lambda;
        max_ll = profile[best].log_likelihood;
    }

    let cutoff = max_ll - LR_DROP_95;
    let f = |l: f64| prof.log_likelihood(l);
    let below_left = profile[..=best].iter().rev().find(|p| p.log_likelihood < cutoff);
    let below_right = profile[best..].iter().find(|p| p.log_likelihood < cutoff);
    let ci_lo = below_left.map_or(points[0], |p| crossing(f, cutoff, lambda_hat, p.lambda));
    let ci_hi = below_right.map_or(points[points.len() - 1], |p| crossing(f, cutoff, lambda_hat, p.lambda));

    Ok(BoxCoxResult {
        lambda_hat,
        max_log_likelihood: max_ll,
        ci_lambda: (ci_lo.min(lambda_hat), ci_hi.max(lambda_hat)),
        profile,
        grid: *grid,
        n: y.len(),
    })
}
