use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use powersim_core::analysis::{Conditioning, DEFAULT_MAX_LOOKS};
use powersim_core::design::GenerativeParams;

#[derive(Debug, Parser)]
#[command(
    name = "powersim",
    version,
    about = "Monte Carlo power, Type S/M and optional-stopping analysis for repeated-measures experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random stream
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; results do not depend on this
    #[arg(long, global = true)]
    #[serde(skip)]
    pub n_workers: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Output file; standard output when absent. CSV files get a
    /// `.meta.json` sidecar
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

/// Generative model on the log scale.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Median reading time (ms) at the grand mean
    #[arg(long, default_value_t = GenerativeParams::DEFAULT_GRAND_MEDIAN_MS)]
    pub grand_median: f64,
    #[arg(long, default_value_t = GenerativeParams::DEFAULT_SD_SUBJECT)]
    pub sd_subject: f64,
    #[arg(long, default_value_t = GenerativeParams::DEFAULT_SD_ITEM)]
    pub sd_item: f64,
    #[arg(long, default_value_t = GenerativeParams::DEFAULT_SD_RESID)]
    pub sd_resid: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    Log,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditioningArg {
    Significant,
    Nonsignificant,
}

impl From<ConditioningArg> for Conditioning {
    fn from(c: ConditioningArg) -> Self {
        match c {
            ConditioningArg::Significant => Conditioning::Significant,
            ConditioningArg::Nonsignificant => Conditioning::NonSignificant,
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Simulate one Latin-square data set (`subject,item,condition,rt`)
    Simulate(SimulateArgs),
    /// One-sample, paired or summary-statistic t-test
    Ttest(TtestArgs),
    /// Two nested comparisons and their interaction
    Interaction(InteractionArgs),
    /// Monte Carlo power, Type S and Type M for a crossed design
    DesignAnalysis(DesignAnalysisArgs),
    /// Analytic power of the one-sample t-test over a grid
    PowerCurve(PowerCurveArgs),
    /// Estimates against true effects across designs
    EstimateExperiment(EstimateArgs),
    /// Type I error of testing until significant
    Stopping(StoppingArgs),
    /// Funnel-plot table and grand means of study estimates
    Funnel(FunnelArgs),
    /// Box-Cox profile likelihood for a positive column
    Boxcox(BoxcoxArgs),
    /// Bonferroni-adjusted p-values
    Bonferroni(BonferroniArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub subjects: usize,
    #[arg(long)]
    pub items: usize,
    /// Effect of condition b over a on the log scale
    #[arg(long)]
    pub effect: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TtestArgs {
    /// CSV input; with `--column` a one-sample test on that column,
    /// otherwise a `subject,item,condition,rt` data set tested as paired
    /// per-subject b - a differences
    #[arg(long, conflicts_with_all = ["mean", "sd", "n"])]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub column: Option<String>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Log)]
    pub scale: ScaleArg,
    #[arg(long, requires_all = ["sd", "n"])]
    pub mean: Option<f64>,
    #[arg(long, requires_all = ["mean", "n"])]
    pub sd: Option<f64>,
    #[arg(long, requires_all = ["mean", "sd"])]
    pub n: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    pub mu0: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct InteractionArgs {
    /// Data set for the first nested comparison
    #[arg(long, requires = "input_b", conflicts_with = "demo")]
    pub input_a: Option<PathBuf>,
    #[arg(long, requires = "input_a")]
    pub input_b: Option<PathBuf>,
    /// Run the built-in simulated scenario with `--seed`
    #[arg(long)]
    pub demo: bool,
    #[arg(long, value_enum, default_value_t = ScaleArg::Log)]
    pub scale: ScaleArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct DesignAnalysisArgs {
    #[arg(long)]
    pub subjects: usize,
    #[arg(long)]
    pub items: usize,
    #[arg(long)]
    pub effect: f64,
    #[arg(long, default_value_t = 1000)]
    pub nsims: usize,
    #[arg(long, value_enum, default_value_t = ConditioningArg::Significant)]
    pub conditioning: ConditioningArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PowerCurveArgs {
    /// Effect grid `lo:hi:step` (or a list); holds `--n` fixed
    #[arg(long, conflicts_with = "ns", required_unless_present = "ns")]
    pub effects: Option<String>,
    /// Sample-size grid `lo:hi:step` (or a list); holds `--effect` fixed
    #[arg(long)]
    pub ns: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    pub effect: f64,
    #[arg(long, default_value_t = 40.0)]
    pub sd: f64,
    #[arg(long, default_value_t = 10)]
    pub n: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// True log-scale effects, list or `lo:hi:step`
    #[arg(long, default_value = "0.01,0.02,0.03,0.05,0.1")]
    pub effects: String,
    /// Designs as `SUBJECTSxITEMS`, comma separated
    #[arg(long, default_value = "30x16,80x40")]
    pub designs: String,
    #[arg(long, default_value_t = 200)]
    pub nsims: usize,
    /// Write only significant replicates to the CSV table
    #[arg(long)]
    pub significant_only: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct StoppingArgs {
    #[arg(long, default_value_t = 15)]
    pub n_initial: usize,
    #[arg(long, default_value_t = 15)]
    pub n_step: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LOOKS)]
    pub max_looks: u32,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    pub nsims: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FunnelArgs {
    /// Studies CSV `study_id,mean_effect,se`
    #[arg(long, required_unless_present = "demo", conflicts_with = "demo")]
    pub input: Option<PathBuf>,
    /// Use a synthetic 15-study set drawn with `--seed` (not real data)
    #[arg(long)]
    pub demo: bool,
    /// True effect (ms) of the synthetic set
    #[arg(long, default_value_t = 18.0)]
    pub demo_effect: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct BoxcoxArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "rt")]
    pub column: String,
    /// Lambda grid `lo:hi:step`
    #[arg(long, default_value = "-2:2:0.01")]
    pub grid: String,
}

#[derive(Debug, Args, Serialize)]
pub struct BonferroniArgs {
    /// Comma-separated p-values
    #[arg(long, required_unless_present = "input", conflicts_with = "input")]
    pub p: Option<String>,
    /// CSV with a p-value column
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "p")]
    pub column: String,
}
