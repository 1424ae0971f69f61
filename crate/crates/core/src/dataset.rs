//! Long-format trial data and its CSV schema (`subject,item,condition,rt`).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; 4] = ["subject", "item", "condition", "rt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    A,
    B,
}

impl Condition {
    /// Sum coding: a = -1/2, b = +1/2, so a coefficient on this column is
    /// the b - a contrast.
    pub fn contrast(self) -> f64 {
        match self {
            Condition::A => -0.5,
            Condition::B => 0.5,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::A => "a",
            Condition::B => "b",
        })
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "a" => Ok(Condition::A),
            "b" => Ok(Condition::B),
            other => Err(format!("condition must be `a` or `b`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    /// Index into [`Dataset::subject_labels`].
    pub subject: usize,
    /// Index into [`Dataset::item_labels`].
    pub item: usize,
    pub condition: Condition,
    /// Reading time in milliseconds.
    pub rt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subject_labels: Vec<String>,
    pub item_labels: Vec<String>,
    pub trials: Vec<Trial>,
}

impl Dataset {
    /// Builds a dataset from labelled rows, checking the row invariants.
    /// Labels are indexed in order of first appearance.
    pub fn from_rows<S: AsRef<str>>(rows: impl IntoIterator<Item = (S, S, Condition, f64)>) -> Result<Self> {
        let mut subjects: HashMap<String, usize> = HashMap::new();
        let mut items: HashMap<String, usize> = HashMap::new();
        let mut subject_labels = Vec::new();
        let mut item_labels = Vec::new();
        let mut seen = HashSet::new();
        let mut trials = Vec::new();
        for (k, (s, i, condition, rt)) in rows.into_iter().enumerate() {
            // Header occupies line 1.
            let line = k as u64 + 2;
            if !(rt.is_finite() && rt > 0.0) {
                return Err(Error::Schema {
                    line,
                    message: format!("rt must be a positive number, got {rt}"),
                });
            }
            let subject = *subjects.entry(s.as_ref().to_owned()).or_insert_with(|| {
                subject_labels.push(s.as_ref().to_owned());
                subject_labels.len() - 1
            });
            let item = *items.entry(i.as_ref().to_owned()).or_insert_with(|| {
                item_labels.push(i.as_ref().to_owned());
                item_labels.len() - 1
            });
            if !seen.insert((subject, item)) {
                return Err(Error::Schema {
                    line,
                    message: format!(
                        "duplicate row for subject `{}` and item `{}`",
                        s.as_ref(),
                        i.as_ref()
                    ),
                });
            }
            trials.push(Trial {
                subject,
                item,
                condition,
                rt,
            });
        }
        Ok(Self {
            subject_labels,
            item_labels,
            trials,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_labels.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_labels.len()
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != DATASET_HEADER {
            return Err(Error::Schema {
                line: 1,
                message: format!(
                    "expected header `{}`, got `{}`",
                    DATASET_HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let schema = |message: String| Error::Schema { line, message };
            let condition: Condition = record[2].parse().map_err(schema)?;
            let rt: f64 = record[3]
                .trim()
                .parse()
                .map_err(|_| schema(format!("rt `{}` is not numeric", &record[3])))?;
            if !(rt.is_finite() && rt > 0.0) {
                return Err(schema(format!("rt must be a positive number, got {rt}")));
            }
            rows.push((record[0].to_owned(), record[1].to_owned(), condition, rt));
        }
        if rows.is_empty() {
            return Err(Error::Empty("dataset has no rows"));
        }
        Self::from_rows(rows)
    }

    /// Writes the dataset; reals use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(DATASET_HEADER)?;
        for t in &self.trials {
            w.write_record([
                self.subject_labels[t.subject].as_str(),
                self.item_labels[t.item].as_str(),
                &t.condition.to_string(),
                &t.rt.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
