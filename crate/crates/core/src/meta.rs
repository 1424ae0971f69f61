//! Funnel-plot tables and inverse-variance summaries of study estimates.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dist::standard_normals;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub const STUDIES_HEADER: [&str; 3] = ["study_id", "mean_effect", "se"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study_id: String,
    pub mean_effect: f64,
    pub se: f64,
}

impl StudySummary {
    pub fn new(study_id: impl Into<String>, mean_effect: f64, se: f64) -> Result<Self> {
        if !(se.is_finite() && se > 0.0) {
            return Err(Error::param("se", format!("must be positive, got {se}")));
        }
        if !mean_effect.is_finite() {
            return Err(Error::param("mean_effect", "must be finite"));
        }
        Ok(Self {
            study_id: study_id.into(),
            mean_effect,
            se,
        })
    }

    /// Inverse sampling variance, `1 / se^2`.
    pub fn precision(&self) -> f64 {
        1.0 / (self.se * self.se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrandMean {
    pub estimate: f64,
    pub se: f64,
}

fn check_studies(studies: &[StudySummary]) -> Result<()> {
    if studies.is_empty() {
        return Err(Error::Empty("no studies"));
    }
    if let Some(bad) = studies.iter().find(|s| !(s.se.is_finite() && s.se > 0.0)) {
        return Err(Error::param("se", format!("study `{}` has se {}", bad.study_id, bad.se)));
    }
    Ok(())
}

/// Fixed-effect (inverse-variance weighted) mean.
pub fn weighted_grand_mean(studies: &[StudySummary]) -> Result<GrandMean> {
    check_studies(studies)?;
    let total: f64 = studies.iter().map(StudySummary::precision).sum();
    let weighted: f64 = studies.iter().map(|s| s.precision() * s.mean_effect).sum();
    Ok(GrandMean {
        estimate: weighted / total,
        se: 1.0 / total.sqrt(),
    })
}

pub fn unweighted_mean(studies: &[StudySummary]) -> Result<f64> {
    check_studies(studies)?;
    Ok(studies.iter().map(|s| s.mean_effect).sum::<f64>() / studies.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelRow {
    pub study_id: String,
    pub mean_effect: f64,
    pub se: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelData {
    pub rows: Vec<FunnelRow>,
    pub grand_mean: GrandMean,
    pub unweighted_mean: f64,
}

pub fn funnel_data(studies: &[StudySummary]) -> Result<FunnelData> {
    let grand_mean = weighted_grand_mean(studies)?;
    Ok(FunnelData {
        rows: studies
            .iter()
            .map(|s| FunnelRow {
                study_id: s.study_id.clone(),
                mean_effect: s.mean_effect,
                se: s.se,
                precision: s.precision(),
            })
            .collect(),
        grand_mean,
        unweighted_mean: unweighted_mean(studies)?,
    })
}

pub fn read_studies_csv<R: Read>(reader: R) -> Result<Vec<StudySummary>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != STUDIES_HEADER {
        return Err(Error::Schema {
            line: 1,
            message: format!("expected header `{}`", STUDIES_HEADER.join(",")),
        });
    }
    let mut studies = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let number = |k: usize| -> Result<f64> {
            record[k].trim().parse().map_err(|_| Error::Schema {
                line,
                message: format!("{} `{}` is not numeric", STUDIES_HEADER[k], &record[k]),
            })
        };
        let study = StudySummary::new(&record[0], number(1)?, number(2)?).map_err(|e| Error::Schema {
            line,
            message: e.to_string(),
        })?;
        studies.push(study);
    }
    if studies.is_empty() {
        return Err(Error::Empty("no studies"));
    }
    Ok(studies)
}

/// Writes the funnel table, `study_id,mean_effect,se,precision`.
pub fn write_funnel_csv<W: Write>(data: &FunnelData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["study_id", "mean_effect", "se", "precision"])?;
    for r in &data.rows {
        w.write_record([
            r.study_id.clone(),
            r.mean_effect.to_string(),
            r.se.to_string(),
            r.precision.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A synthetic set of 15 study estimates (NOT real published data) with
/// standard errors spread between 5 and 40 ms around a true effect of
/// `true_effect` ms. Study `k` is labelled `synthetic-k`.
pub fn synthetic_studies(true_effect: f64, stream: &RandomStream) -> Vec<StudySummary> {
    let mut rng = stream.rng();
    let z = standard_normals(&mut rng, 15);
    z.iter()
        .enumerate()
        .map(|(k, z)| {
            let se = 5.0 + 2.5 * k as f64;
            StudySummary {
                study_id: format!("synthetic-{}", k + 1),
                mean_effect: true_effect + se * z,
                se,
            }
        })
        .collect()
}
