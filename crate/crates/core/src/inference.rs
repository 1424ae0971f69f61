//! One-sample, paired, summary-level and difference-of-differences t-tests,
//! plus the Bonferroni adjustment.
//!
//! All tests are two-sided. A sample whose standard deviation is zero (or
//! below the floating-point resolution of its inputs) is an error, never an
//! infinite t.

use serde::{Deserialize, Serialize};

use crate::dist::StudentT;
use crate::error::{Error, Result};

/// Relative resolution below which a sample standard deviation is treated as
/// zero. Differences such as `x - (x + c)` carry rounding noise of order
/// `eps * |x|`; this threshold sits far above that and far below any real
/// spread.
const ZERO_SD_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    /// Sample mean of the analyzed vector.
    pub estimate: f64,
    pub sd_hat: f64,
    pub se: f64,
    pub t_value: f64,
    pub df: u64,
    /// Two-sided.
    pub p_value: f64,
    pub mu0: f64,
    pub n: u64,
}

impl TTestResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn from_moments(mean: f64, sd: f64, n: u64, mu0: f64) -> Result<TTestResult> {
    let df = n - 1;
    let se = sd / (n as f64).sqrt();
    let t_value = (mean - mu0) / se;
    let p_value = StudentT::new(df)?.two_sided_p(t_value);
    Ok(TTestResult {
        estimate: mean,
        sd_hat: sd,
        se,
        t_value,
        df,
        p_value,
        mu0,
        n,
    })
}

/// Test on an already-formed vector; `scale` is the magnitude of the inputs
/// the vector was derived from, for the zero-variance check.
fn test_vector(x: &[f64], mu0: f64, scale: f64, what: &'static str) -> Result<TTestResult> {
    if x.len() < 2 {
        return Err(Error::param("x", "at least two observations are required"));
    }
    if x.iter().any(|v| !v.is_finite()) || !mu0.is_finite() {
        return Err(Error::param("x", "observations must be finite"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    if sd == 0.0 || sd <= ZERO_SD_RELATIVE * scale {
        return Err(Error::ZeroVariance(what));
    }
    from_moments(mean, sd, x.len() as u64, mu0)
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn one_sample_t(x: &[f64], mu0: f64) -> Result<TTestResult> {
    test_vector(x, mu0, max_abs(x), "sample")
}

/// The t-test computed from summary statistics alone.
pub fn t_from_summary(mean: f64, sd: f64, n: u64, mu0: f64) -> Result<TTestResult> {
    if !(sd.is_finite() && sd > 0.0) {
        return Err(Error::param("sd", "must be positive and finite"));
    }
    if n < 2 {
        return Err(Error::param("n", "at least two observations are required"));
    }
    if !(mean.is_finite() && mu0.is_finite()) {
        return Err(Error::param("mean", "must be finite"));
    }
    from_moments(mean, sd, n, mu0)
}

/// Paired test of `x - y` against `mu0`.
pub fn paired_t(x: &[f64], y: &[f64], mu0: f64) -> Result<TTestResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let scale = max_abs(x).max(max_abs(y));
    test_vector(&d, mu0, scale, "paired differences")
}

/// Per-participant differences from two nested comparisons, in matching
/// participant order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionInput {
    diffs_a: Vec<f64>,
    diffs_b: Vec<f64>,
}

impl InteractionInput {
    pub fn new(diffs_a: Vec<f64>, diffs_b: Vec<f64>) -> Result<Self> {
        if diffs_a.len() != diffs_b.len() {
            return Err(Error::LengthMismatch {
                left: diffs_a.len(),
                right: diffs_b.len(),
            });
        }
        Ok(Self { diffs_a, diffs_b })
    }

    pub fn diffs_a(&self) -> &[f64] {
        &self.diffs_a
    }

    pub fn diffs_b(&self) -> &[f64] {
        &self.diffs_b
    }

    /// Elementwise `diffs_a - diffs_b`.
    pub fn difference(&self) -> Vec<f64> {
        self.diffs_a
            .iter()
            .zip(&self.diffs_b)
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// Tests whether the two component differences differ from each other.
pub fn interaction_t(input: &InteractionInput) -> Result<TTestResult> {
    paired_t(&input.diffs_a, &input.diffs_b, 0.0)
}

/// Both nested comparisons and the interaction, side by side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedComparison {
    pub component_a: TTestResult,
    pub component_b: TTestResult,
    pub interaction: TTestResult,
}

pub fn nested_comparison(input: &InteractionInput) -> Result<NestedComparison> {
    Ok(NestedComparison {
        component_a: one_sample_t(&input.diffs_a, 0.0)?,
        component_b: one_sample_t(&input.diffs_b, 0.0)?,
        interaction: interaction_t(input)?,
    })
}

/// Bonferroni-adjusted p-values, `min(1, m p)`, in input order.
pub fn bonferroni(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::param("p_values", format!("{bad} is not a probability")));
    }
    let m = p_values.len() as f64;
    Ok(p_values.iter().map(|p| (m * p).min(1.0)).collect())
}
