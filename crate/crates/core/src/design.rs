//! Two-condition repeated-measures designs: Latin-square assignment, the
//! lognormal crossed random-intercepts generator, and by-subject aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, Dataset, Trial};
use crate::dist::standard_normals;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n_subjects: usize,
    pub n_items: usize,
}

impl DesignSpec {
    pub fn new(n_subjects: usize, n_items: usize) -> Result<Self> {
        let d = Self {
            n_subjects,
            n_items,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::param("n_subjects", "at least two subjects are required"));
        }
        if self.n_items < 2 || !self.n_items.is_multiple_of(2) {
            return Err(Error::param(
                "n_items",
                format!("must be even and at least 2, got {}", self.n_items),
            ));
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.n_subjects * self.n_items
    }
}

impl std::fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n_subjects, self.n_items)
    }
}

/// Parameters of the generative model, all on the log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerativeParams {
    /// `exp(grand_mean_log)` is the median reading time in ms.
    pub grand_mean_log: f64,
    /// True b - a difference.
    pub effect_log: f64,
    pub sd_subject: f64,
    pub sd_item: f64,
    pub sd_resid: f64,
}

impl GenerativeParams {
    pub const DEFAULT_GRAND_MEDIAN_MS: f64 = 550.0;
    pub const DEFAULT_SD_SUBJECT: f64 = 0.24;
    pub const DEFAULT_SD_ITEM: f64 = 0.10;
    pub const DEFAULT_SD_RESID: f64 = 0.22;

    /// Defaults for runs resembling a 40-subject, 16-item self-paced reading
    /// study. They are configuration values; reports always record them.
    pub fn reading_time_defaults(effect_log: f64) -> Self {
        Self {
            grand_mean_log: Self::DEFAULT_GRAND_MEDIAN_MS.ln(),
            effect_log,
            sd_subject: Self::DEFAULT_SD_SUBJECT,
            sd_item: Self::DEFAULT_SD_ITEM,
            sd_resid: Self::DEFAULT_SD_RESID,
        }
    }

    pub fn with_effect(self, effect_log: f64) -> Self {
        Self { effect_log, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grand_mean_log.is_finite() && self.effect_log.is_finite()) {
            return Err(Error::param("grand_mean_log", "location parameters must be finite"));
        }
        for (name, sd) in [
            ("sd_subject", self.sd_subject),
            ("sd_item", self.sd_item),
            ("sd_resid", self.sd_resid),
        ] {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::param(name, format!("must be >= 0, got {sd}")));
            }
        }
        Ok(())
    }
}

/// Condition of every (subject, item) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionAssignment {
    n_subjects: usize,
    n_items: usize,
    cells: Vec<Condition>,
}

impl ConditionAssignment {
    pub fn get(&self, subject: usize, item: usize) -> Condition {
        self.cells[subject * self.n_items + item]
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }
}

/// Two-list Latin square: subject `s` sees item `i` in condition a when
/// `s + i` is even. Every subject sees half the items in each condition, and
/// each item's per-condition counts differ by at most one across subjects.
pub fn latin_square_assign(design: &DesignSpec) -> Result<ConditionAssignment> {
    design.validate()?;
    let cells = (0..design.n_subjects)
        .flat_map(|s| {
            (0..design.n_items).map(move |i| {
                if (s + i) % 2 == 0 {
                    Condition::A
                } else {
                    Condition::B
                }
            })
        })
        .collect();
    Ok(ConditionAssignment {
        n_subjects: design.n_subjects,
        n_items: design.n_items,
        cells,
    })
}

/// One simulated experiment:
/// `rt = exp(grand_mean_log -/+ effect_log/2 + u_subject + w_item + e)`.
///
/// Draw order from the stream is fixed: subject intercepts, item intercepts,
/// then one residual per row in subject-major order. Standard normals are
/// drawn even when a component's sd is zero, so runs that differ only in one
/// variance component share all other draws.
pub fn simulate_dataset(
    design: &DesignSpec,
    params: &GenerativeParams,
    stream: &RandomStream,
) -> Result<Dataset> {
    params.validate()?;
    let assignment = latin_square_assign(design)?;
    let mut rng = stream.rng();
    let u = standard_normals(&mut rng, design.n_subjects);
    let w = standard_normals(&mut rng, design.n_items);
    let e = standard_normals(&mut rng, design.n_obs());

    let mut trials = Vec::with_capacity(design.n_obs());
    for s in 0..design.n_subjects {
        for i in 0..design.n_items {
            let condition = assignment.get(s, i);
            let eta = params.grand_mean_log
                + condition.contrast() * params.effect_log
                + params.sd_subject * u[s]
                + params.sd_item * w[i]
                + params.sd_resid * e[s * design.n_items + i];
            trials.push(Trial {
                subject: s,
                item: i,
                condition,
                rt: eta.exp(),
            });
        }
    }
    Ok(Dataset {
        subject_labels: (1..=design.n_subjects).map(|s| s.to_string()).collect(),
        item_labels: (1..=design.n_items).map(|i| i.to_string()).collect(),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Log,
    Raw,
}

impl Scale {
    pub fn apply(self, rt: f64) -> f64 {
        match self {
            Scale::Log => rt.ln(),
            Scale::Raw => rt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeans {
    pub subject: String,
    pub mean_a: f64,
    pub mean_b: f64,
}

impl SubjectMeans {
    /// b - a.
    pub fn difference(&self) -> f64 {
        self.mean_b - self.mean_a
    }
}

/// Per-subject condition means over items (the by-participants aggregation),
/// in order of subject index.
pub fn aggregate_by_subject(data: &Dataset, scale: Scale) -> Result<Vec<SubjectMeans>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut acc: BTreeMap<usize, [(f64, usize); 2]> = BTreeMap::new();
    for t in &data.trials {
        let slot = &mut acc.entry(t.subject).or_insert([(0.0, 0); 2])[match t.condition {
            Condition::A => 0,
            Condition::B => 1,
        }];
        slot.0 += scale.apply(t.rt);
        slot.1 += 1;
    }
    acc.into_iter()
        .map(|(s, [(sa, na), (sb, nb)])| {
            let subject = data.subject_labels[s].clone();
            if na == 0 || nb == 0 {
                return Err(Error::Degenerate(format!(
                    "subject `{subject}` is missing condition {}",
                    if na == 0 { "a" } else { "b" }
                )));
            }
            Ok(SubjectMeans {
                subject,
                mean_a: sa / na as f64,
                mean_b: sb / nb as f64,
            })
        })
        .collect()
}

/// Per-subject b - a differences on the given scale.
pub fn subject_differences(data: &Dataset, scale: Scale) -> Result<Vec<f64>> {
    Ok(aggregate_by_subject(data, scale)?
        .iter()
        .map(SubjectMeans::difference)
        .collect())
}

/// Two independent two-condition runs on the same participants, for
/// demonstrating nested comparisons against their interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedScenario {
    pub run_a: Dataset,
    pub run_b: Dataset,
}

/// Simulates the two component runs with effects `effect_a` and `effect_b`
/// (streams 0 and 1 of `seed`). Subject intercepts cancel within each
/// participant's difference, so only residual and item noise reach the tests.
pub fn nested_scenario(
    design: &DesignSpec,
    params: &GenerativeParams,
    effect_a: f64,
    effect_b: f64,
    seed: u64,
) -> Result<NestedScenario> {
    Ok(NestedScenario {
        run_a: simulate_dataset(design, &params.with_effect(effect_a), &RandomStream::new(seed, 0))?,
        run_b: simulate_dataset(design, &params.with_effect(effect_b), &RandomStream::new(seed, 1))?,
    })
}
