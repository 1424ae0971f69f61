use std::collections::HashMap;
use std::fmt::Display;
use std::fs::File;
use std::path::Path;

use anyhow::Context;
use serde_json::{json, Value};

use powersim_core::analysis::{
    design_analysis, estimate_distribution_experiment, power_curve, stopping_simulation, CurveAxis, PowerQuery,
    StoppingRule, MIN_DESIGN_SIMS,
};
use powersim_core::boxcox::{boxcox_profile, LambdaGrid};
use powersim_core::dataset::Dataset;
use powersim_core::demo::nested_demo;
use powersim_core::design::{aggregate_by_subject, simulate_dataset, DesignSpec, GenerativeParams, Scale};
use powersim_core::inference::{
    bonferroni, nested_comparison, one_sample_t, paired_t, t_from_summary, InteractionInput, TTestResult,
};
use powersim_core::meta::{funnel_data, read_studies_csv, synthetic_studies};
use powersim_core::rng::RandomStream;
use powersim_core::Error as CoreError;

use crate::args::*;
use crate::grid::{parse_counts, parse_designs, parse_grid, parse_values};
use crate::report::{cell, opt_cell, Table};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or parameter values; exit status 2.
    Usage(String),
    /// Unreadable or invalid input data, or a failed computation; exit status 1.
    Data(anyhow::Error),
}

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

/// Parameter problems are usage errors; anything else is a data error.
fn core(e: CoreError) -> Failure {
    match e {
        CoreError::InvalidParameter { .. } => usage(e),
        other => data(other),
    }
}

pub struct Outcome {
    /// Everything the command computed; the JSON report body.
    pub result: Value,
    /// Plot-ready CSV form.
    pub table: Table,
    /// Non-tabular part of the result, for the CSV sidecar.
    pub summary: Value,
}

type Run = Result<Outcome, Failure>;

pub fn execute(command: &Command, seed: u64) -> Run {
    match command {
        Command::Simulate(a) => simulate(a, seed),
        Command::Ttest(a) => ttest(a),
        Command::Interaction(a) => interaction(a, seed),
        Command::DesignAnalysis(a) => design(a, seed),
        Command::PowerCurve(a) => curve(a),
        Command::EstimateExperiment(a) => estimates(a, seed),
        Command::Stopping(a) => stopping(a, seed),
        Command::Funnel(a) => funnel(a, seed),
        Command::Boxcox(a) => boxcox(a),
        Command::Bonferroni(a) => bonferroni_cmd(a),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(data)
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(data)
}

fn read_dataset(path: &Path) -> Result<Dataset, Failure> {
    Dataset::read_csv(open(path)?)
        .with_context(|| format!("in {}", path.display()))
        .map_err(data)
}

/// Strictly parsed numeric column of a headed CSV file.
fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, Failure> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers().map_err(data)?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| data(anyhow::anyhow!("{}: no column `{column}`", path.display())))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(data)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let text = record.get(idx).unwrap_or("");
        let v: f64 = text.trim().parse().map_err(|_| {
            data(anyhow::anyhow!(
                "{} line {line}: `{text}` in column `{column}` is not numeric",
                path.display()
            ))
        })?;
        out.push(v);
    }
    Ok(out)
}

fn params(model: &ModelArgs, effect: f64) -> Result<GenerativeParams, Failure> {
    if !(model.grand_median.is_finite() && model.grand_median > 0.0) {
        return Err(usage("--grand-median must be positive"));
    }
    let p = GenerativeParams {
        grand_mean_log: model.grand_median.ln(),
        effect_log: effect,
        sd_subject: model.sd_subject,
        sd_item: model.sd_item,
        sd_resid: model.sd_resid,
    };
    p.validate().map_err(core)?;
    Ok(p)
}

fn scale(s: ScaleArg) -> Scale {
    match s {
        ScaleArg::Log => Scale::Log,
        ScaleArg::Raw => Scale::Raw,
    }
}

fn check_alpha(alpha: f64) -> Result<(), Failure> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage("--alpha must lie in (0, 1)"))
    }
}

fn simulate(a: &SimulateArgs, seed: u64) -> Run {
    let design = DesignSpec::new(a.subjects, a.items).map_err(core)?;
    let p = params(&a.model, a.effect)?;
    let d = simulate_dataset(&design, &p, &RandomStream::new(seed, 0)).map_err(core)?;
    let mut table = Table::new(vec!["subject", "item", "condition", "rt"]);
    let mut rows = Vec::with_capacity(d.len());
    for t in &d.trials {
        let (s, i) = (&d.subject_labels[t.subject], &d.item_labels[t.item]);
        table.push(vec![s.clone(), i.clone(), t.condition.to_string(), cell(t.rt)]);
        rows.push(json!({"subject": s, "item": i, "condition": t.condition, "rt": t.rt}));
    }
    let summary = json!({"design": design, "params_used": p, "n_rows": d.len(), "stream_id": 0});
    let mut result = summary.clone();
    result["rows"] = Value::Array(rows);
    Ok(Outcome { result, table, summary })
}

const TTEST_HEADER: [&str; 10] = [
    "test", "estimate", "sd_hat", "se", "t_value", "df", "p_value", "mu0", "n", "significant",
];

fn ttest_row(name: &str, r: &TTestResult, alpha: f64) -> Vec<String> {
    vec![
        name.to_owned(),
        cell(r.estimate),
        cell(r.sd_hat),
        cell(r.se),
        cell(r.t_value),
        r.df.to_string(),
        cell(r.p_value),
        cell(r.mu0),
        r.n.to_string(),
        r.significant(alpha).to_string(),
    ]
}

fn test_value(r: &TTestResult, alpha: f64) -> Result<Value, Failure> {
    let mut v = to_value(r)?;
    v["significant"] = json!(r.significant(alpha));
    Ok(v)
}

fn ttest(a: &TtestArgs) -> Run {
    check_alpha(a.alpha)?;
    let (mode, r) = match (&a.input, &a.column, a.mean, a.sd, a.n) {
        (Some(path), Some(column), ..) => {
            let x = read_column(path, column)?;
            ("one-sample", one_sample_t(&x, a.mu0).map_err(data)?)
        }
        (Some(path), None, ..) => {
            let d = read_dataset(path)?;
            let means = aggregate_by_subject(&d, scale(a.scale)).map_err(data)?;
            let b: Vec<f64> = means.iter().map(|m| m.mean_b).collect();
            let av: Vec<f64> = means.iter().map(|m| m.mean_a).collect();
            ("paired b-a", paired_t(&b, &av, a.mu0).map_err(data)?)
        }
        (None, _, Some(mean), Some(sd), Some(n)) => ("summary", t_from_summary(mean, sd, n, a.mu0).map_err(core)?),
        _ => return Err(usage("give --input, or all of --mean, --sd and --n")),
    };
    let mut table = Table::new(TTEST_HEADER.to_vec());
    table.push(ttest_row(mode, &r, a.alpha));
    let mut result = test_value(&r, a.alpha)?;
    result["mode"] = json!(mode);
    Ok(Outcome {
        summary: result.clone(),
        result,
        table,
    })
}

/// Per-subject differences of two data sets, matched by subject label.
fn matched_differences(a: &Dataset, b: &Dataset, s: Scale) -> Result<InteractionInput, Failure> {
    let ma = aggregate_by_subject(a, s).map_err(data)?;
    let mb = aggregate_by_subject(b, s).map_err(data)?;
    let by_label: HashMap<&str, f64> = mb.iter().map(|m| (m.subject.as_str(), m.difference())).collect();
    if ma.len() != mb.len() {
        return Err(data(anyhow::anyhow!(
            "the data sets have {} and {} subjects",
            ma.len(),
            mb.len()
        )));
    }
    let mut da = Vec::with_capacity(ma.len());
    let mut db = Vec::with_capacity(ma.len());
    for m in &ma {
        let other = by_label
            .get(m.subject.as_str())
            .ok_or_else(|| data(anyhow::anyhow!("subject `{}` is missing from the second data set", m.subject)))?;
        da.push(m.difference());
        db.push(*other);
    }
    InteractionInput::new(da, db).map_err(data)
}

fn interaction(a: &InteractionArgs, seed: u64) -> Run {
    check_alpha(a.alpha)?;
    let (input, comparison) = if a.demo {
        let demo = nested_demo(seed).map_err(data)?;
        (demo.input, demo.comparison)
    } else {
        let (Some(pa), Some(pb)) = (&a.input_a, &a.input_b) else {
            return Err(usage("give --input-a and --input-b, or --demo"));
        };
        let input = matched_differences(&read_dataset(pa)?, &read_dataset(pb)?, scale(a.scale))?;
        let c = nested_comparison(&input).map_err(data)?;
        (input, c)
    };
    let mut table = Table::new(TTEST_HEADER.to_vec());
    table.push(ttest_row("component_a", &comparison.component_a, a.alpha));
    table.push(ttest_row("component_b", &comparison.component_b, a.alpha));
    table.push(ttest_row("interaction", &comparison.interaction, a.alpha));
    let summary = json!({
        "component_a": test_value(&comparison.component_a, a.alpha)?,
        "component_b": test_value(&comparison.component_b, a.alpha)?,
        "interaction": test_value(&comparison.interaction, a.alpha)?,
        "n_subjects": input.diffs_a().len(),
    });
    let mut result = summary.clone();
    result["diffs_a"] = json!(input.diffs_a());
    result["diffs_b"] = json!(input.diffs_b());
    Ok(Outcome { result, table, summary })
}

fn design(a: &DesignAnalysisArgs, seed: u64) -> Run {
    let design = DesignSpec::new(a.subjects, a.items).map_err(core)?;
    let p = params(&a.model, a.effect)?;
    if a.nsims < MIN_DESIGN_SIMS {
        return Err(usage(format!("--nsims must be at least {MIN_DESIGN_SIMS}")));
    }
    if a.effect == 0.0 {
        return Err(usage("--effect must be nonzero; Type S and Type M are undefined at zero"));
    }
    let r = design_analysis(&design, &p, a.nsims, seed, a.conditioning.into()).map_err(core)?;
    let mut table = Table::new(vec![
        "subjects",
        "items",
        "effect_log",
        "power",
        "type_s",
        "type_m",
        "type_s_unconditional",
        "n_sims",
        "n_converged",
        "n_significant",
        "conditioning",
    ]);
    table.push(vec![
        design.n_subjects.to_string(),
        design.n_items.to_string(),
        cell(p.effect_log),
        cell(r.power),
        opt_cell(r.type_s),
        opt_cell(r.type_m),
        cell(r.type_s_unconditional),
        r.n_sims.to_string(),
        r.n_converged.to_string(),
        r.n_significant.to_string(),
        a.conditioning_name().to_owned(),
    ]);
    let result = to_value(&r)?;
    Ok(Outcome {
        summary: result.clone(),
        result,
        table,
    })
}

impl DesignAnalysisArgs {
    fn conditioning_name(&self) -> &'static str {
        match self.conditioning {
            ConditioningArg::Significant => "significant",
            ConditioningArg::Nonsignificant => "nonsignificant",
        }
    }
}

fn curve(a: &PowerCurveArgs) -> Run {
    let base = PowerQuery::new(a.effect, a.sd, a.n)
        .and_then(|q| q.with_alpha(a.alpha))
        .map_err(core)?;
    let (axis, name) = match (&a.effects, &a.ns) {
        (Some(e), None) => (CurveAxis::Effect(parse_values(e).map_err(usage)?), "effect"),
        (None, Some(n)) => (CurveAxis::N(parse_counts(n).map_err(usage)?), "n"),
        _ => return Err(usage("give exactly one of --effects and --ns")),
    };
    let points = power_curve(&axis, &base).map_err(core)?;
    let mut table = Table::new(vec![name, "power"]);
    for p in &points {
        table.push(vec![cell(p.x), cell(p.power)]);
    }
    let summary = json!({"axis": name, "base": base, "n_points": points.len()});
    let mut result = summary.clone();
    result["points"] = to_value(&points)?;
    Ok(Outcome { result, table, summary })
}

fn estimates(a: &EstimateArgs, seed: u64) -> Run {
    let effects = parse_values(&a.effects).map_err(usage)?;
    let designs = parse_designs(&a.designs).map_err(usage)?;
    if a.nsims == 0 {
        return Err(usage("--nsims must be positive"));
    }
    let base = params(&a.model, 0.0)?;
    let exp = estimate_distribution_experiment(&effects, &designs, &base, a.nsims, seed).map_err(core)?;
    let mut table = Table::new(vec![
        "effect_log",
        "subjects",
        "items",
        "replicate",
        "beta_hat",
        "t_value",
        "converged",
        "significant",
    ]);
    for r in exp.rows.iter().filter(|r| r.significant || !a.significant_only) {
        table.push(vec![
            cell(r.effect_log),
            r.design.n_subjects.to_string(),
            r.design.n_items.to_string(),
            r.replicate.to_string(),
            cell(r.beta_hat),
            cell(r.t_value),
            r.converged.to_string(),
            r.significant.to_string(),
        ]);
    }
    let summary = json!({
        "cells": to_value(&exp.cells)?,
        "params_used": base,
        "alpha_rule": exp.alpha_rule,
        "seed": seed,
    });
    let result = to_value(&exp)?;
    Ok(Outcome { result, table, summary })
}

fn stopping(a: &StoppingArgs, seed: u64) -> Run {
    let rule = StoppingRule {
        n_initial: a.n_initial,
        n_step: a.n_step,
        max_looks: a.max_looks,
        alpha: a.alpha,
    };
    rule.validate().map_err(core)?;
    if a.nsims == 0 {
        return Err(usage("--nsims must be positive"));
    }
    let r = stopping_simulation(&rule, a.nsims, seed).map_err(core)?;
    let mut table = Table::new(vec!["replicate", "final_t"]);
    for (k, t) in r.final_t_values.iter().enumerate() {
        table.push(vec![k.to_string(), cell(*t)]);
    }
    let summary = json!({
        "type1_rate": r.type1_rate,
        "n_rejected": r.n_rejected,
        "looks_used_histogram": r.looks_used_histogram,
        "rule": rule,
        "n_sims": r.n_sims,
        "seed": r.seed,
    });
    let result = to_value(&r)?;
    Ok(Outcome { result, table, summary })
}

fn funnel(a: &FunnelArgs, seed: u64) -> Run {
    let (studies, synthetic) = if a.demo {
        if !a.demo_effect.is_finite() {
            return Err(usage("--demo-effect must be finite"));
        }
        (synthetic_studies(a.demo_effect, &RandomStream::new(seed, 0)), true)
    } else {
        let path = a.input.as_deref().ok_or_else(|| usage("give --input or --demo"))?;
        let s = read_studies_csv(open(path)?)
            .with_context(|| format!("in {}", path.display()))
            .map_err(data)?;
        (s, false)
    };
    let f = funnel_data(&studies).map_err(data)?;
    let mut table = Table::new(vec!["study_id", "mean_effect", "se", "precision"]);
    for r in &f.rows {
        table.push(vec![r.study_id.clone(), cell(r.mean_effect), cell(r.se), cell(r.precision)]);
    }
    let summary = json!({
        "grand_mean": f.grand_mean,
        "unweighted_mean": f.unweighted_mean,
        "n_studies": f.rows.len(),
        "synthetic": synthetic,
    });
    let mut result = summary.clone();
    result["rows"] = to_value(&f.rows)?;
    Ok(Outcome { result, table, summary })
}

fn boxcox(a: &BoxcoxArgs) -> Run {
    let pts = parse_grid(&a.grid).map_err(usage)?;
    if pts.len() < 2 {
        return Err(usage("--grid needs at least two points"));
    }
    let grid = LambdaGrid {
        lo: pts[0],
        hi: pts[pts.len() - 1],
        step: pts[1] - pts[0],
    };
    let y = read_column(&a.input, &a.column)?;
    let r = boxcox_profile(&y, &grid).map_err(data)?;
    let mut table = Table::new(vec!["lambda", "log_likelihood"]);
    for p in &r.profile {
        table.push(vec![cell(p.lambda), cell(p.log_likelihood)]);
    }
    let summary = json!({
        "lambda_hat": r.lambda_hat,
        "ci_lambda": [r.ci_lambda.0, r.ci_lambda.1],
        "max_log_likelihood": r.max_log_likelihood,
        "n": r.n,
        "grid": grid,
    });
    let result = to_value(&r)?;
    Ok(Outcome { result, table, summary })
}

fn bonferroni_cmd(a: &BonferroniArgs) -> Run {
    let p = match (&a.p, &a.input) {
        (Some(list), None) => parse_values(list).map_err(usage)?,
        (None, Some(path)) => read_column(path, &a.column)?,
        _ => return Err(usage("give exactly one of --p and --input")),
    };
    if p.is_empty() {
        return Err(usage("no p-values given"));
    }
    let adjusted = bonferroni(&p).map_err(|e| if a.input.is_some() { data(e) } else { core(e) })?;
    let mut table = Table::new(vec!["p", "p_adjusted"]);
    for (raw, adj) in p.iter().zip(&adjusted) {
        table.push(vec![cell(*raw), cell(*adj)]);
    }
    let summary = json!({"m": p.len()});
    let result = json!({"m": p.len(), "p": p, "p_adjusted": adjusted});
    Ok(Outcome { result, table, summary })
}
