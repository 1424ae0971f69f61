//! Linear mixed model with a fixed condition effect and crossed random
//! intercepts for subjects and items, fitted by REML.
//!
//! Model: `y = b0 + b1 x + u[subject] + w[item] + e`, with `x = -1/2` for
//! condition a and `+1/2` for b, `u ~ N(0, var_subject)`,
//! `w ~ N(0, var_item)`, `e ~ N(0, var_resid)`.
//!
//! Writing `V = var_resid (I + Z Lambda Z')` with `Lambda` the diagonal of
//! variance ratios, every quantity the restricted likelihood needs is a
//! quadratic form in `C = I + Lambda^1/2 Z'Z Lambda^1/2` (dimension
//! subjects + items). Within one grouping factor the levels are disjoint, so
//! one diagonal block of `C` is diagonal; the work reduces to a Cholesky
//! factorization of the Schur complement on the smaller factor. The
//! residual variance is profiled out and the two ratios are optimized by
//! Nelder-Mead over their square roots, which lets a ratio reach the zero
//! boundary.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Dataset};
use crate::error::{Error, Result};
use crate::optim::nelder_mead;

/// Fixed-effect columns: intercept and condition contrast.
const N_FIXED: usize = 2;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    /// Condition effect (b - a) on the analysis scale.
    pub beta_hat: f64,
    pub se_beta: f64,
    pub t_value: f64,
    pub intercept_hat: f64,
    pub var_subject: f64,
    pub var_item: f64,
    pub var_resid: f64,
    /// Restricted log-likelihood at the estimates.
    pub reml_log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
}

/// Strict `|t| > 2` rule on a converged fit.
pub fn is_significant(fit: &LmmFit) -> Result<bool> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    Ok(significant_t(fit.t_value))
}

pub(crate) fn significant_t(t: f64) -> bool {
    t.abs() > 2.0
}

/// Per-level sufficient statistics of one grouping factor.
#[derive(Debug, Clone)]
struct Factor {
    /// Observations per level.
    counts: Vec<f64>,
    /// Rows: level; columns: sum of intercept, sum of x, sum of y.
    sums: Vec<[f64; 3]>,
}

/// A crossed random-intercepts problem reduced to its sufficient statistics.
#[derive(Debug, Clone)]
pub struct CrossedModel {
    n: usize,
    y_offset: f64,
    /// The diagonal-block factor (the larger one).
    diag: Factor,
    /// The factor the Schur complement is taken on.
    schur: Factor,
    /// `incidence[(j, k)]`: observations with diag level j and schur level k.
    incidence: DMatrix<f64>,
    /// True when `diag` is the subject factor.
    diag_is_subject: bool,
    /// `[X y]'[X y]` with y centred.
    cross: Matrix3<f64>,
}

/// Values of the profiled criterion at one pair of variance ratios.
struct Profile {
    logdet_c: f64,
    xtmx: Matrix2<f64>,
    xtmy: Vector2<f64>,
    ytmy: f64,
}

impl CrossedModel {
    /// `subject` and `item` are zero-based level indices; `contrast` is the
    /// condition column (+-1/2).
    pub fn new(y: &[f64], subject: &[usize], item: &[usize], contrast: &[f64]) -> Result<Self> {
        let n = y.len();
        if subject.len() != n || item.len() != n || contrast.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: subject.len().min(item.len()).min(contrast.len()),
            });
        }
        if y.iter().chain(contrast).any(|v| !v.is_finite()) {
            return Err(Error::param("y", "responses and contrasts must be finite"));
        }
        let n_subjects = subject.iter().max().map_or(0, |m| m + 1);
        let n_items = item.iter().max().map_or(0, |m| m + 1);
        if n_subjects < 2 || n_items < 2 {
            return Err(Error::Degenerate(
                "at least two subjects and two items are required".into(),
            ));
        }
        let x_min = contrast.iter().cloned().fold(f64::INFINITY, f64::min);
        let x_max = contrast.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if x_min == x_max {
            return Err(Error::Degenerate("only one condition is present".into()));
        }
        if n <= N_FIXED {
            return Err(Error::Degenerate("too few observations".into()));
        }

        let y_offset = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_offset).collect();

        let diag_is_subject = n_subjects >= n_items;
        let (diag_idx, schur_idx, n_diag, n_schur) = if diag_is_subject {
            (subject, item, n_subjects, n_items)
        } else {
            (item, subject, n_items, n_subjects)
        };
        let mut diag = Factor {
            counts: vec![0.0; n_diag],
            sums: vec![[0.0; 3]; n_diag],
        };
        let mut schur = Factor {
            counts: vec![0.0; n_schur],
            sums: vec![[0.0; 3]; n_schur],
        };
        let mut incidence = DMatrix::zeros(n_diag, n_schur);
        let mut cross = Matrix3::<f64>::zeros();
        for r in 0..n {
            let row = [1.0, contrast[r], yc[r]];
            let (j, k) = (diag_idx[r], schur_idx[r]);
            diag.counts[j] += 1.0;
            schur.counts[k] += 1.0;
            incidence[(j, k)] += 1.0;
            for c in 0..3 {
                diag.sums[j][c] += row[c];
                schur.sums[k][c] += row[c];
                for c2 in 0..3 {
                    cross[(c, c2)] += row[c] * row[c2];
                }
            }
        }
        if diag.counts.iter().chain(&schur.counts).any(|&c| c == 0.0) {
            return Err(Error::Degenerate("a subject or item level has no observations".into()));
        }
        let xtx = cross.fixed_view::<2, 2>(0, 0).into_owned();
        if xtx.determinant() <= 1e-12 * xtx.trace().powi(2) {
            return Err(Error::Degenerate("fixed-effect design is singular".into()));
        }

        Ok(Self {
            n,
            y_offset,
            diag,
            schur,
            incidence,
            diag_is_subject,
            cross,
        })
    }

    pub fn from_dataset(data: &Dataset, log_transform: bool) -> Result<Self> {
        let y: Vec<f64> = data
            .trials
            .iter()
            .map(|t| if log_transform { t.rt.ln() } else { t.rt })
            .collect();
        let subject: Vec<usize> = data.trials.iter().map(|t| t.subject).collect();
        let item: Vec<usize> = data.trials.iter().map(|t| t.item).collect();
        let x: Vec<f64> = data.trials.iter().map(|t| t.condition.contrast()).collect();
        if !data.trials.iter().any(|t| t.condition == Condition::A)
            || !data.trials.iter().any(|t| t.condition == Condition::B)
        {
            return Err(Error::Degenerate("only one condition is present".into()));
        }
        Self::new(&y, &subject, &item, &x)
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    /// (subject ratio, item ratio) -> (diag ratio, schur ratio)
    fn to_factor_order(&self, subject: f64, item: f64) -> (f64, f64) {
        if self.diag_is_subject {
            (subject, item)
        } else {
            (item, subject)
        }
    }

    fn profile(&self, ratio_subject: f64, ratio_item: f64) -> Option<Profile> {
        let (th1, th2) = self.to_factor_order(ratio_subject, ratio_item);
        let (l1, l2) = (th1.sqrt(), th2.sqrt());
        let n1 = self.diag.counts.len();
        let n2 = self.schur.counts.len();

        // Diagonal block D1 = I + th1 diag(counts1).
        let d1: Vec<f64> = self.diag.counts.iter().map(|c| 1.0 + th1 * c).collect();
        let mut logdet_c: f64 = d1.iter().map(|d| d.ln()).sum();

        // Scaled incidence M = D1^{-1/2} N.
        let mut m = self.incidence.clone();
        for (j, d) in d1.iter().enumerate() {
            m.row_mut(j).scale_mut(1.0 / d.sqrt());
        }
        // Schur complement S = I + th2 diag(counts2) - th1 th2 M'M.
        let mut s = m.tr_mul(&m);
        s.scale_mut(-th1 * th2);
        for k in 0..n2 {
            s[(k, k)] += 1.0 + th2 * self.schur.counts[k];
        }

        // R1 = l1 Z1'[X y] scaled by D1^{-1/2}; R2 = l2 Z2'[X y].
        let r1 = DMatrix::from_fn(n1, 3, |j, c| l1 * self.diag.sums[j][c] / d1[j].sqrt());
        let r2 = DMatrix::from_fn(n2, 3, |k, c| l2 * self.schur.sums[k][c]);
        // W = R2 - B' D1^{-1} R1, with B = l1 l2 N.
        let w = r2 - (m.tr_mul(&r1)) * (l1 * l2);

        let chol = s.cholesky()?;
        logdet_c += 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let solved = chol.solve(&w);
        let q1 = r1.tr_mul(&r1);
        let q2 = w.tr_mul(&solved);
        let q = Matrix3::from_fn(|a, b| q1[(a, b)] + q2[(a, b)]);

        let m_form = self.cross - q;
        Some(Profile {
            logdet_c,
            xtmx: m_form.fixed_view::<2, 2>(0, 0).into_owned(),
            xtmy: m_form.fixed_view::<2, 1>(0, 2).into_owned(),
            ytmy: m_form[(2, 2)],
        })
    }

    /// Restricted log-likelihood at the given variance components.
    pub fn reml(&self, var_subject: f64, var_item: f64, var_resid: f64) -> Result<f64> {
        if !(var_resid.is_finite() && var_resid > 0.0) {
            return Err(Error::param("var_resid", "residual variance must be positive"));
        }
        if !(var_subject.is_finite() && var_subject >= 0.0 && var_item.is_finite() && var_item >= 0.0) {
            return Err(Error::param("var_subject", "variances must be non-negative"));
        }
        let p = self
            .profile(var_subject / var_resid, var_item / var_resid)
            .ok_or_else(|| Error::Degenerate("singular variance structure".into()))?;
        let dof = (self.n - N_FIXED) as f64;
        let (beta, logdet_xtmx) = solve_fixed(&p)?;
        let rss = p.ytmy - beta.dot(&p.xtmy);
        Ok(-0.5
            * (dof * LN_2PI + dof * var_resid.ln() + p.logdet_c + logdet_xtmx + rss / var_resid))
    }

    /// Profiled REML deviance (-2 log-likelihood with the residual variance
    /// at its conditional optimum) as a function of the variance ratios.
    fn profiled_deviance(&self, ratio_subject: f64, ratio_item: f64) -> Option<(f64, f64)> {
        let p = self.profile(ratio_subject, ratio_item)?;
        let (beta, logdet_xtmx) = solve_fixed(&p).ok()?;
        let dof = (self.n - N_FIXED) as f64;
        let rss = p.ytmy - beta.dot(&p.xtmy);
        if rss.is_nan() || rss <= 0.0 {
            return None;
        }
        let sigma2 = rss / dof;
        Some((
            dof * (1.0 + LN_2PI + sigma2.ln()) + p.logdet_c + logdet_xtmx,
            sigma2,
        ))
    }

    pub fn fit(&self) -> Result<LmmFit> {
        let objective = |v: &[f64]| {
            self.profiled_deviance(v[0] * v[0], v[1] * v[1])
                .map_or(f64::INFINITY, |(d, _)| d)
        };
        let first = nelder_mead(objective, &[1.0, 1.0], 0.5, 1e-10, 1e-7, 4000);
        // Restarting from the optimum guards against a collapsed simplex.
        let second = nelder_mead(objective, &first.x, 0.1, 1e-10, 1e-7, 4000);
        let best = if second.fx <= first.fx { &second } else { &first };
        let converged = first.converged && second.converged && (first.fx - second.fx) < 1e-6;
        let iterations = first.iterations + second.iterations;

        let ratio_subject = best.x[0] * best.x[0];
        let ratio_item = best.x[1] * best.x[1];
        let (_, sigma2) = self
            .profiled_deviance(ratio_subject, ratio_item)
            .ok_or_else(|| Error::Degenerate("residual variance is zero".into()))?;
        let profile = self
            .profile(ratio_subject, ratio_item)
            .ok_or_else(|| Error::Degenerate("singular variance structure".into()))?;
        let inv = profile
            .xtmx
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular fixed-effect information".into()))?;
        let beta = inv * profile.xtmy;
        let se_beta = (sigma2 * inv[(1, 1)]).sqrt();
        let var_subject = ratio_subject * sigma2;
        let var_item = ratio_item * sigma2;
        let reml_log_likelihood = self.reml(var_subject, var_item, sigma2)?;
        Ok(LmmFit {
            beta_hat: beta[1],
            se_beta,
            t_value: beta[1] / se_beta,
            intercept_hat: beta[0] + self.y_offset,
            var_subject,
            var_item,
            var_resid: sigma2,
            reml_log_likelihood,
            converged,
            iterations,
            n_obs: self.n,
        })
    }
}

fn solve_fixed(p: &Profile) -> Result<(Vector2<f64>, f64)> {
    let chol = p
        .xtmx
        .cholesky()
        .ok_or_else(|| Error::Degenerate("singular fixed-effect information".into()))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((chol.solve(&p.xtmy), logdet))
}

/// Fits the crossed random-intercepts model, by default to log reading times.
pub fn fit_crossed_intercepts(data: &Dataset, log_transform: bool) -> Result<LmmFit> {
    CrossedModel::from_dataset(data, log_transform)?.fit()
}

/// Restricted log-likelihood of `data` (log scale) at the given variances.
pub fn reml_criterion(data: &Dataset, var_subject: f64, var_item: f64, var_resid: f64) -> Result<f64> {
    CrossedModel::from_dataset(data, true)?.reml(var_subject, var_item, var_resid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{simulate_dataset, DesignSpec, GenerativeParams};
    use crate::rng::RandomStream;

    fn fit_at(t: f64) -> LmmFit {
        LmmFit {
            beta_hat: t,
            se_beta: 1.0,
            t_value: t,
            intercept_hat: 0.0,
            var_subject: 0.0,
            var_item: 0.0,
            var_resid: 1.0,
            reml_log_likelihood: 0.0,
            converged: true,
            iterations: 0,
            n_obs: 4,
        }
    }

    #[test]
    fn significance_rule() {
        assert!(!is_significant(&fit_at(2.0)).unwrap());
        assert!(is_significant(&fit_at(-2.01)).unwrap());
        assert!(!is_significant(&fit_at(0.0)).unwrap());
        let mut f = fit_at(5.0);
        f.converged = false;
        assert_eq!(is_significant(&f), Err(Error::NotConverged));
    }

    #[test]
    fn single_condition_is_degenerate() {
        let data = Dataset::from_rows([
            ("1", "1", Condition::A, 300.0),
            ("1", "2", Condition::A, 320.0),
            ("2", "1", Condition::A, 330.0),
            ("2", "2", Condition::A, 310.0),
        ])
        .unwrap();
        assert!(matches!(
            fit_crossed_intercepts(&data, true),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn reml_rejects_zero_residual_variance() {
        let data = simulate_dataset(
            &DesignSpec::new(4, 4).unwrap(),
            &GenerativeParams::reading_time_defaults(0.1),
            &RandomStream::new(1, 0),
        )
        .unwrap();
        assert!(reml_criterion(&data, 0.1, 0.1, 0.0).is_err());
        assert!(reml_criterion(&data, -0.1, 0.1, 0.1).is_err());
    }

    #[test]
    fn fit_is_a_local_optimum() {
        let data = simulate_dataset(
            &DesignSpec::new(12, 8).unwrap(),
            &GenerativeParams::reading_time_defaults(0.05),
            &RandomStream::new(4, 0),
        )
        .unwrap();
        let fit = fit_crossed_intercepts(&data, true).unwrap();
        assert!(fit.converged);
        let at = |s: f64, i: f64, e: f64| reml_criterion(&data, s, i, e).unwrap();
        let best = at(fit.var_subject, fit.var_item, fit.var_resid);
        assert!((best - fit.reml_log_likelihood).abs() < 1e-9);
        for (fs, fi, fe) in [
            (1.1, 1.0, 1.0),
            (0.9, 1.0, 1.0),
            (1.0, 1.1, 1.0),
            (1.0, 0.9, 1.0),
            (1.0, 1.0, 1.1),
            (1.0, 1.0, 0.9),
        ] {
            assert!(best >= at(fit.var_subject * fs, fit.var_item * fi, fit.var_resid * fe));
        }
        assert!((fit.t_value - fit.beta_hat / fit.se_beta).abs() < 1e-10);
    }
}
