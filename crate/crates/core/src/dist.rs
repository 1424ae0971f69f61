//! Normal, lognormal, central t and noncentral t.
//!
//! Sampling functions consume a [`RandomStream`] (or an already-positioned
//! generator for callers that draw several blocks from one stream). The
//! distribution functions are deterministic and accurate to roughly 1e-12
//! absolute, comfortably inside the 1e-8 budget the power computations need.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Smallest standard deviation accepted by the samplers, relative to
/// `max(1, |mean|)`. Below this the draws are a constant in disguise.
pub const MIN_RELATIVE_SD: f64 = 1e-9;

fn check_scale(name: &'static str, centre: f64, sd: f64) -> Result<()> {
    if !centre.is_finite() {
        return Err(Error::param(name, "location must be finite"));
    }
    if !(sd.is_finite() && sd > MIN_RELATIVE_SD * centre.abs().max(1.0)) {
        return Err(Error::param(
            name,
            format!("standard deviation {sd} is not a usable positive scale"),
        ));
    }
    Ok(())
}

/// `n` standard normal draws from `rng`.
pub fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn sample_normal(stream: &RandomStream, mean: f64, sd: f64, n: usize) -> Result<Vec<f64>> {
    check_scale("sd", mean, sd)?;
    if n == 0 {
        return Err(Error::param("n", "at least one draw is required"));
    }
    let mut rng = stream.rng();
    Ok(standard_normals(&mut rng, n)
        .into_iter()
        .map(|z| mean + sd * z)
        .collect())
}

/// Lognormal draws parameterized on the log scale.
pub fn sample_lognormal(
    stream: &RandomStream,
    meanlog: f64,
    sdlog: f64,
    n: usize,
) -> Result<Vec<f64>> {
    Ok(sample_normal(stream, meanlog, sdlog, n)
        .map_err(|e| match e {
            Error::InvalidParameter { reason, .. } => Error::param("sdlog", reason),
            other => other,
        })?
        .into_iter()
        .map(f64::exp)
        .collect())
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // Newton polish; the inverse error function alone is good to ~1e-9.
    for _ in 0..2 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density == 0.0 {
            break;
        }
        let err = if p < 0.5 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        x -= err / density;
    }
    x
}

fn check_df(df: u64) -> Result<f64> {
    if df == 0 {
        return Err(Error::param("df", "degrees of freedom must be at least 1"));
    }
    Ok(df as f64)
}

/// Central Student t with integer degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT {
    df: f64,
}

impl StudentT {
    pub fn new(df: u64) -> Result<Self> {
        Ok(Self { df: check_df(df)? })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    /// P(T > t) for t >= 0, computed directly so deep tails keep their
    /// relative precision.
    fn upper_tail_abs(&self, t: f64) -> f64 {
        let t = t.abs();
        if t.is_infinite() {
            return 0.0;
        }
        let x = self.df / (self.df + t * t);
        0.5 * beta_reg(0.5 * self.df, 0.5, x)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        let tail = self.upper_tail_abs(t);
        if t >= 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }

    /// P(T > t).
    pub fn sf(&self, t: f64) -> f64 {
        self.cdf(-t)
    }

    /// Two-sided tail probability P(|T| >= |t|).
    pub fn two_sided_p(&self, t: f64) -> f64 {
        (2.0 * self.upper_tail_abs(t)).min(1.0)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        let v = self.df;
        (ln_gamma(0.5 * (v + 1.0))
            - ln_gamma(0.5 * v)
            - 0.5 * (v * std::f64::consts::PI).ln()
            - 0.5 * (v + 1.0) * (t * t / v).ln_1p())
        .exp()
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param("p", format!("{p} is not in (0, 1)")));
        }
        if p == 0.5 {
            return Ok(0.0);
        }
        // Solve upper_tail(t) = q for t > 0, q = min(p, 1 - p).
        let q = p.min(1.0 - p);
        let f = |t: f64| self.upper_tail_abs(t) - q;

        let mut lo = 0.0;
        let mut hi = normal_quantile(1.0 - q).max(1.0);
        while f(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let ft = f(t);
            if ft == 0.0 {
                break;
            }
            if ft > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            // Newton step, falling back to bisection when it leaves the bracket.
            let step = ft / self.pdf(t);
            let newton = t + step;
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - t).abs() <= 1e-15 * t.abs().max(1.0) || hi - lo <= 1e-15 * hi {
                t = next;
                break;
            }
            t = next;
        }
        Ok(if p > 0.5 { t } else { -t })
    }
}

pub fn t_cdf(t: f64, df: u64) -> Result<f64> {
    Ok(StudentT::new(df)?.cdf(t))
}

pub fn t_quantile(p: f64, df: u64) -> Result<f64> {
    StudentT::new(df)?.quantile(p)
}

/// Noncentral t with integer degrees of freedom and noncentrality `ncp`.
///
/// For `t >= 0` the CDF is evaluated from the mixture representation
///
/// ```text
/// F(t; v, d) = Phi(-d) + 1/2 * sum_j [ p_j I_x(j + 1/2, v/2) + q_j I_x(j + 1, v/2) ]
/// x   = t^2 / (t^2 + v)
/// p_j = exp(-d^2/2) (d^2/2)^j / j!
/// q_j = d exp(-d^2/2) (d^2/2)^j / (sqrt(2) Gamma(j + 3/2))
/// ```
///
/// and `F(t; v, d) = 1 - F(-t; v, -d)` for negative `t`. The sum runs over a
/// window around the Poisson mode wide enough that the neglected weight is
/// below 1e-15, so the absolute error is dominated by the incomplete beta
/// evaluations (~1e-14).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralT {
    df: f64,
    ncp: f64,
}

impl NoncentralT {
    pub fn new(df: u64, ncp: f64) -> Result<Self> {
        let df = check_df(df)?;
        if !ncp.is_finite() {
            return Err(Error::param("ncp", "noncentrality must be finite"));
        }
        Ok(Self { df, ncp })
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if t == f64::INFINITY {
            return 1.0;
        }
        if t == f64::NEG_INFINITY {
            return 0.0;
        }
        let value = if t >= 0.0 {
            upper_half_cdf(t, self.df, self.ncp)
        } else {
            1.0 - upper_half_cdf(-t, self.df, -self.ncp)
        };
        value.clamp(0.0, 1.0)
    }

    pub fn sf(&self, t: f64) -> f64 {
        1.0 - self.cdf(t)
    }
}

fn upper_half_cdf(t: f64, df: f64, ncp: f64) -> f64 {
    let base = normal_cdf(-ncp);
    if t == 0.0 {
        return base;
    }
    let x = t * t / (t * t + df);
    let half_df = 0.5 * df;
    if ncp == 0.0 {
        return base + 0.5 * beta_reg(0.5, half_df, x);
    }

    let lambda = 0.5 * ncp * ncp;
    let ln_lambda = lambda.ln();
    let ln_abs_ncp = ncp.abs().ln();
    let sign = ncp.signum();
    let mode = lambda.floor();
    let width = (12.0 * lambda.sqrt() + 30.0).ceil();
    let j_lo = (mode - width).max(0.0) as u64;
    let j_hi = (mode + width) as u64;

    let mut sum = 0.0;
    for j in j_lo..=j_hi {
        let jf = j as f64;
        let ln_p = -lambda + jf * ln_lambda - ln_gamma(jf + 1.0);
        let ln_q = -lambda + jf * ln_lambda + ln_abs_ncp
            - 0.5 * std::f64::consts::LN_2
            - ln_gamma(jf + 1.5);
        let p = ln_p.exp();
        let q = sign * ln_q.exp();
        if p == 0.0 && q == 0.0 {
            continue;
        }
        sum += p * beta_reg(jf + 0.5, half_df, x) + q * beta_reg(jf + 1.0, half_df, x);
    }
    base + 0.5 * sum
}

pub fn noncentral_t_cdf(t: f64, df: u64, ncp: f64) -> Result<f64> {
    Ok(NoncentralT::new(df, ncp)?.cdf(t))
}

/// Sample mean, unbiased standard deviation.
#[cfg(test)]
pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_quantile_is_accurate() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-14);
        for p in [1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = normal_quantile(p);
            let back = if p < 0.5 { normal_cdf(x) } else { 1.0 - normal_cdf(-x) };
            assert!((back - p).abs() <= 1e-14 * p.max(1e-3), "{p}");
        }
    }

    #[test]
    fn normal_draws_centre_and_spread() {
        let n = 100_000;
        for seed in [1, 2] {
            let x = sample_normal(&RandomStream::new(seed, 0), 0.0, 1.0, n).unwrap();
            let (m, s) = mean_sd(&x);
            assert!(m.abs() < 0.02, "mean {m}");
            assert!((s - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "sd {s}");
        }
    }

    #[test]
    fn sampler_rejects_bad_scale() {
        let s = RandomStream::new(1, 0);
        assert!(sample_normal(&s, 5.0, 1e-12, 10).is_err());
        assert!(sample_normal(&s, 0.0, 0.0, 10).is_err());
        assert!(sample_normal(&s, 0.0, -1.0, 10).is_err());
        assert!(sample_normal(&s, 0.0, 1.0, 0).is_err());
        assert!(sample_lognormal(&s, 2.0, 0.0, 10).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = RandomStream::new(11, 4);
        assert_eq!(
            sample_normal(&s, 3.0, 2.0, 50).unwrap(),
            sample_normal(&s, 3.0, 2.0, 50).unwrap()
        );
    }

    #[test]
    fn lognormal_positive_and_right_skewed() {
        let y = sample_lognormal(&RandomStream::new(1, 0), 2.0, 1.0, 100_000).unwrap();
        assert!(y.iter().all(|&v| v > 0.0));
        let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let (m, _) = mean_sd(&logs);
        assert!((m - 2.0).abs() < 0.02);
        let (ym, ys) = mean_sd(&y);
        let skew = y.iter().map(|v| ((v - ym) / ys).powi(3)).sum::<f64>() / y.len() as f64;
        assert!(skew > 0.0);
    }

    #[test]
    fn t_cdf_basics() {
        assert_eq!(t_cdf(0.0, 9).unwrap(), 0.5);
        assert!(t_cdf(1.0, 0).is_err());
        let q = t_quantile(0.975, 9).unwrap();
        assert_abs_diff_eq!(t_cdf(q, 9).unwrap(), 0.975, epsilon = 1e-8);
        assert_abs_diff_eq!(q, 2.262157162740992, epsilon = 1e-9);
        assert_eq!(t_quantile(0.5, 3).unwrap(), 0.0);
        assert!(t_quantile(0.0, 3).is_err());
        assert!(t_quantile(1.0, 3).is_err());
    }

    #[test]
    fn quantile_round_trip_over_range() {
        for df in [1, 2, 5, 9, 30, 200, 5000] {
            for &p in &[1e-9, 1e-4, 0.01, 0.2, 0.5, 0.7, 0.975, 0.999, 1.0 - 1e-7] {
                let t = t_quantile(p, df).unwrap();
                assert_abs_diff_eq!(t_cdf(t, df).unwrap(), p, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn large_df_approaches_normal() {
        let q = t_quantile(0.975, 1_000_000).unwrap();
        assert_abs_diff_eq!(q, 1.959963984540054, epsilon = 1e-4);
    }

    #[test]
    fn two_sided_p_in_deep_tail() {
        let t = StudentT::new(999).unwrap();
        let p = t.two_sided_p(21.63);
        assert!(p > 0.0 && p < 1e-10);
    }

    #[test]
    fn noncentral_reduces_to_central() {
        for df in [1, 4, 9, 40] {
            for &t in &[-5.0, -2.0, -0.3, 0.0, 0.7, 2.262, 6.0] {
                assert_abs_diff_eq!(
                    noncentral_t_cdf(t, df, 0.0).unwrap(),
                    t_cdf(t, df).unwrap(),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn noncentral_decreases_in_ncp() {
        let mut prev = 1.0;
        for k in -20..=40 {
            let ncp = k as f64 * 0.25;
            let f = noncentral_t_cdf(2.262, 9, ncp).unwrap();
            assert!(f <= prev + 1e-14, "ncp {ncp}");
            prev = f;
        }
    }

    #[test]
    fn noncentral_monotone_in_t() {
        let d = NoncentralT::new(12, 1.7).unwrap();
        let mut prev = 0.0;
        for k in -80..=80 {
            let f = d.cdf(k as f64 * 0.1);
            assert!(f >= prev - 1e-14 && (0.0..=1.0).contains(&f));
            prev = f;
        }
    }

    #[test]
    fn noncentral_handles_large_ncp() {
        // Mass sits near ncp; far below it the cdf is ~0, far above ~1.
        let d = NoncentralT::new(50, 40.0).unwrap();
        assert!(d.cdf(20.0) < 1e-6);
        assert!(d.cdf(80.0) > 1.0 - 1e-6);
        let mid = d.cdf(40.0);
        assert!(mid > 0.3 && mid < 0.7, "{mid}");
    }
}
