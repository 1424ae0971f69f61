//! Power, Type I/II regions, Type S/M design analysis, the estimate-versus-
//! true-effect experiment and the run-till-significance stopping rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{simulate_dataset, DesignSpec, GenerativeParams};
use crate::dist::{normal_cdf, normal_quantile, standard_normals, NoncentralT, StudentT};
use crate::error::{Error, Result};
use crate::inference::one_sample_t;
use crate::lmm::{fit_crossed_intercepts, significant_t, LmmFit};
use crate::rng::{cell_stream_id, RandomStream};

/// Decision rule used for every simulated mixed-model fit.
pub const ALPHA_RULE: &str = "|t| > 2";

/// Variance components are estimated by restricted maximum likelihood.
pub const ESTIMATOR: &str = "REML";

pub const MIN_DESIGN_SIMS: usize = 100;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// A one-sample t-test configuration: true mean `effect`, population sd,
/// sample size and level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerQuery {
    pub effect: f64,
    pub sd: f64,
    pub n: u64,
    pub alpha: f64,
}

impl PowerQuery {
    pub fn new(effect: f64, sd: f64, n: u64) -> Result<Self> {
        let q = Self {
            effect,
            sd,
            n,
            alpha: 0.05,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        let q = Self { alpha, ..self };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sd.is_finite() && self.sd > 0.0) {
            return Err(Error::param("sd", format!("must be positive, got {}", self.sd)));
        }
        if self.n < 2 {
            return Err(Error::param("n", "at least two observations are required"));
        }
        if !self.effect.is_finite() {
            return Err(Error::param("effect", "must be finite"));
        }
        check_alpha(self.alpha)
    }
}

/// Two-sided power of the one-sample t-test.
pub fn analytic_power(q: &PowerQuery) -> Result<f64> {
    q.validate()?;
    let df = q.n - 1;
    let critical = StudentT::new(df)?.quantile(1.0 - q.alpha / 2.0)?;
    let ncp = q.effect * (q.n as f64).sqrt() / q.sd;
    let t = NoncentralT::new(df, ncp)?;
    Ok((t.sf(critical) + t.cdf(-critical)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "lowercase")]
pub enum CurveAxis {
    Effect(Vec<f64>),
    N(Vec<u64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub power: f64,
}

/// Analytic power along one axis, the other query fields held at `base`.
pub fn power_curve(axis: &CurveAxis, base: &PowerQuery) -> Result<Vec<CurvePoint>> {
    let points: Vec<(f64, PowerQuery)> = match axis {
        CurveAxis::Effect(effects) => effects
            .iter()
            .map(|&effect| (effect, PowerQuery { effect, ..*base }))
            .collect(),
        CurveAxis::N(ns) => ns
            .iter()
            .map(|&n| (n as f64, PowerQuery { n, ..*base }))
            .collect(),
    };
    if points.is_empty() {
        return Err(Error::Empty("power curve grid"));
    }
    points
        .into_iter()
        .map(|(x, q)| Ok(CurvePoint { x, power: analytic_power(&q)? }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRegions {
    pub lower: f64,
    pub upper: f64,
    pub type2: f64,
    pub power: f64,
}

/// Rejection bounds of a two-sided z-test on a sampling distribution with
/// sd `sd_sampling`, and the Type II probability at the alternative mean.
pub fn type12_regions(mu_alt: f64, sd_sampling: f64, alpha: f64) -> Result<ErrorRegions> {
    if !(sd_sampling.is_finite() && sd_sampling > 0.0) {
        return Err(Error::param("sd_sampling", "must be positive"));
    }
    check_alpha(alpha)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    let (lower, upper) = (-z * sd_sampling, z * sd_sampling);
    let type2 = normal_cdf((upper - mu_alt) / sd_sampling) - normal_cdf((lower - mu_alt) / sd_sampling);
    Ok(ErrorRegions {
        lower,
        upper,
        type2,
        power: 1.0 - type2,
    })
}

/// Which fits Type S and Type M are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    #[default]
    Significant,
    NonSignificant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignAnalysisReport {
    pub power: f64,
    /// Wrong-sign fraction among the conditioned fits; `None` if there are none.
    pub type_s: Option<f64>,
    /// Mean `|beta_hat| / |effect|` among the conditioned fits.
    pub type_m: Option<f64>,
    /// Fits that are significant with the wrong sign, over all converged fits.
    pub type_s_unconditional: f64,
    pub n_sims: usize,
    pub n_converged: usize,
    pub n_significant: usize,
    pub conditioning: Conditioning,
    pub params_used: GenerativeParams,
    pub design: DesignSpec,
    pub alpha_rule: String,
    pub estimator: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tally {
    converged: usize,
    significant: usize,
    wrong_sign_significant: usize,
    cond_count: usize,
    cond_wrong_sign: usize,
    cond_abs_ratio: f64,
}

fn tally(fits: &[LmmFit], effect: f64, conditioning: Conditioning) -> Tally {
    let mut t = Tally {
        converged: 0,
        significant: 0,
        wrong_sign_significant: 0,
        cond_count: 0,
        cond_wrong_sign: 0,
        cond_abs_ratio: 0.0,
    };
    for fit in fits.iter().filter(|f| f.converged) {
        t.converged += 1;
        let sig = significant_t(fit.t_value);
        let wrong = fit.beta_hat.signum() != effect.signum();
        if sig {
            t.significant += 1;
            if wrong {
                t.wrong_sign_significant += 1;
            }
        }
        let selected = match conditioning {
            Conditioning::Significant => sig,
            Conditioning::NonSignificant => !sig,
        };
        if selected {
            t.cond_count += 1;
            if wrong {
                t.cond_wrong_sign += 1;
            }
            t.cond_abs_ratio += fit.beta_hat.abs() / effect.abs();
        }
    }
    t
}

fn simulate_fits(design: &DesignSpec, params: &GenerativeParams, streams: &[RandomStream]) -> Result<Vec<LmmFit>> {
    streams
        .par_iter()
        .map(|stream| {
            let data = simulate_dataset(design, params, stream)?;
            fit_crossed_intercepts(&data, true)
        })
        .collect()
}

/// Monte Carlo power, Type S and Type M for the crossed design. Replicate `k`
/// draws from stream `k` of `seed`, so the result does not depend on how the
/// replicates are scheduled.
pub fn design_analysis(
    design: &DesignSpec,
    params: &GenerativeParams,
    n_sims: usize,
    seed: u64,
    conditioning: Conditioning,
) -> Result<DesignAnalysisReport> {
    design.validate()?;
    params.validate()?;
    if n_sims < MIN_DESIGN_SIMS {
        return Err(Error::param("n_sims", format!("at least {MIN_DESIGN_SIMS} simulations are required")));
    }
    if params.effect_log == 0.0 {
        return Err(Error::param("effect_log", "Type S and Type M are undefined at a zero true effect"));
    }
    let streams: Vec<RandomStream> = (0..n_sims as u64).map(|k| RandomStream::new(seed, k)).collect();
    let fits = simulate_fits(design, params, &streams)?;
    let t = tally(&fits, params.effect_log, conditioning);
    if t.converged == 0 {
        return Err(Error::NotConverged);
    }
    let (type_s, type_m) = if t.cond_count == 0 {
        (None, None)
    } else {
        let c = t.cond_count as f64;
        (Some(t.cond_wrong_sign as f64 / c), Some(t.cond_abs_ratio / c))
    };
    Ok(DesignAnalysisReport {
        power: t.significant as f64 / t.converged as f64,
        type_s,
        type_m,
        type_s_unconditional: t.wrong_sign_significant as f64 / t.converged as f64,
        n_sims,
        n_converged: t.converged,
        n_significant: t.significant,
        conditioning,
        params_used: *params,
        design: *design,
        alpha_rule: ALPHA_RULE.to_owned(),
        estimator: ESTIMATOR.to_owned(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub effect_log: f64,
    pub design: DesignSpec,
    pub replicate: usize,
    pub beta_hat: f64,
    pub t_value: f64,
    pub converged: bool,
    pub significant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub effect_log: f64,
    pub design: DesignSpec,
    pub n_sims: usize,
    pub n_converged: usize,
    pub n_significant: usize,
    pub power: f64,
    pub type_s: Option<f64>,
    pub type_m: Option<f64>,
    pub mean_abs_significant_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateExperiment {
    pub cells: Vec<CellSummary>,
    /// Every replicate; filter on `significant` for the scatter of
    /// significant estimates against the true effect.
    pub rows: Vec<EstimateRow>,
    pub seed: u64,
    pub alpha_rule: String,
}

/// Runs `n_sims_per_cell` replicates for every (design, effect) pair. Cell
/// `c = design_index * effects.len() + effect_index` draws replicate `k`
/// from stream `cell_stream_id(c, k)`.
pub fn estimate_distribution_experiment(
    effects: &[f64],
    designs: &[DesignSpec],
    base: &GenerativeParams,
    n_sims_per_cell: usize,
    seed: u64,
) -> Result<EstimateExperiment> {
    if effects.is_empty() {
        return Err(Error::Empty("effect grid"));
    }
    if designs.is_empty() {
        return Err(Error::Empty("design list"));
    }
    if n_sims_per_cell == 0 {
        return Err(Error::param("n_sims_per_cell", "must be at least 1"));
    }
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for (d, design) in designs.iter().enumerate() {
        design.validate()?;
        for (e, &effect) in effects.iter().enumerate() {
            let params = base.with_effect(effect);
            params.validate()?;
            let cell = d * effects.len() + e;
            let streams: Vec<RandomStream> = (0..n_sims_per_cell)
                .map(|k| RandomStream::new(seed, cell_stream_id(cell, k)))
                .collect();
            let fits = simulate_fits(design, &params, &streams)?;
            let t = tally(&fits, effect, Conditioning::Significant);
            let sig_abs: Vec<f64> = fits
                .iter()
                .filter(|f| f.converged && significant_t(f.t_value))
                .map(|f| f.beta_hat.abs())
                .collect();
            let defined = effect != 0.0 && t.cond_count > 0;
            cells.push(CellSummary {
                effect_log: effect,
                design: *design,
                n_sims: n_sims_per_cell,
                n_converged: t.converged,
                n_significant: t.significant,
                power: if t.converged > 0 {
                    t.significant as f64 / t.converged as f64
                } else {
                    f64::NAN
                },
                type_s: defined.then(|| t.cond_wrong_sign as f64 / t.cond_count as f64),
                type_m: defined.then(|| t.cond_abs_ratio / t.cond_count as f64),
                mean_abs_significant_estimate: (!sig_abs.is_empty())
                    .then(|| sig_abs.iter().sum::<f64>() / sig_abs.len() as f64),
            });
            rows.extend(fits.iter().enumerate().map(|(k, f)| EstimateRow {
                effect_log: effect,
                design: *design,
                replicate: k,
                beta_hat: f.beta_hat,
                t_value: f.t_value,
                converged: f.converged,
                significant: f.converged && significant_t(f.t_value),
            }));
        }
    }
    Ok(EstimateExperiment {
        cells,
        rows,
        seed,
        alpha_rule: ALPHA_RULE.to_owned(),
    })
}

/// Look count for the default stopping rule. With 15 initial and 15 added
/// observations per look, six looks put the null rejection rate near 0.15.
pub const DEFAULT_MAX_LOOKS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub n_initial: usize,
    pub n_step: usize,
    pub max_looks: u32,
    pub alpha: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            n_initial: 15,
            n_step: 15,
            max_looks: DEFAULT_MAX_LOOKS,
            alpha: 0.05,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if self.n_initial < 2 {
            return Err(Error::param("n_initial", "must be at least 2"));
        }
        if self.n_step < 1 {
            return Err(Error::param("n_step", "must be at least 1"));
        }
        if self.max_looks < 1 {
            return Err(Error::param("max_looks", "must be at least 1"));
        }
        check_alpha(self.alpha)
    }

    pub fn max_n(&self) -> usize {
        self.n_initial + (self.max_looks as usize - 1) * self.n_step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    pub type1_rate: f64,
    pub n_rejected: usize,
    /// t statistic at the look where each replicate stopped.
    pub final_t_values: Vec<f64>,
    /// Entry `j` counts replicates that stopped after `j + 1` looks.
    pub looks_used_histogram: Vec<u64>,
    pub rule: StoppingRule,
    pub n_sims: usize,
    pub seed: u64,
}

struct StopOutcome {
    rejected: bool,
    looks: u32,
    t_value: f64,
}

fn run_until_significant(rule: &StoppingRule, stream: &RandomStream) -> Result<StopOutcome> {
    let mut rng = stream.rng();
    let mut data = standard_normals(&mut rng, rule.n_initial);
    let mut looks = 1;
    loop {
        let test = one_sample_t(&data, 0.0)?;
        if test.significant(rule.alpha) || looks == rule.max_looks {
            return Ok(StopOutcome {
                rejected: test.significant(rule.alpha),
                looks,
                t_value: test.t_value,
            });
        }
        data.extend(standard_normals(&mut rng, rule.n_step));
        looks += 1;
    }
}

/// Null-data simulation of testing, adding observations and retesting until
/// significance or the look limit. Replicate `k` uses stream `k`.
pub fn stopping_simulation(rule: &StoppingRule, n_sims: usize, seed: u64) -> Result<StoppingReport> {
    rule.validate()?;
    if n_sims == 0 {
        return Err(Error::param("n_sims", "must be at least 1"));
    }
    let outcomes: Vec<StopOutcome> = (0..n_sims as u64)
        .into_par_iter()
        .map(|k| run_until_significant(rule, &RandomStream::new(seed, k)))
        .collect::<Result<_>>()?;
    let mut histogram = vec![0u64; rule.max_looks as usize];
    for o in &outcomes {
        histogram[o.looks as usize - 1] += 1;
    }
    let n_rejected = outcomes.iter().filter(|o| o.rejected).count();
    Ok(StoppingReport {
        type1_rate: n_rejected as f64 / n_sims as f64,
        n_rejected,
        final_t_values: outcomes.iter().map(|o| o.t_value).collect(),
        looks_used_histogram: histogram,
        rule: *rule,
        n_sims,
        seed,
    })
}
