use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "alirec", version, about = "Recover missing allostatic load components from ICD-10 diagnoses")]
pub struct Cli {
    /// Emit log records as JSON lines on stderr.
    #[arg(long, global = true)]
    pub log_json: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect an ICD-10 catalog.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Validate, summarize or compare roadmaps.
    #[command(subcommand)]
    Roadmap(RoadmapCmd),
    /// Match a roadmap's terms against the catalog.
    Match(MatchArgs),
    /// Recover missing components from diagnosis codes.
    Recover(RecoverArgs),
    /// Per-patient ALI for the EHR and any status sources.
    Ali(AliArgs),
    /// Propose search terms with an LLM (live or replayed).
    Enhance(EnhanceArgs),
    /// Clinician review of proposed terms.
    #[command(subcommand)]
    Adjudicate(AdjudicateCmd),
    /// Evaluation tables and regressions.
    Analyze(AnalyzeArgs),
    /// Write a seeded synthetic cohort.
    Simulate(SimulateArgs),
    /// Run a configured end-to-end pipeline.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Debug, Args)]
pub struct CatalogArg {
    /// ICD-10 catalog (TSV or CSV of code, description). Defaults to the bundled fixture.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CatalogCmd {
    Stats(CatalogArg),
}

#[derive(Debug, Subcommand)]
pub enum RoadmapCmd {
    /// Parse a roadmap file and report problems.
    Validate { path: PathBuf },
    /// Term counts by component and provenance. Defaults to the clinicians' original.
    Stats { path: Option<PathBuf> },
    /// Terms added and removed going from A to B.
    Diff { a: PathBuf, b: PathBuf },
    /// Write the bundled clinicians' original roadmap.
    Original {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct MatchOpts {
    #[command(flatten)]
    pub catalog: CatalogArg,
    /// Also match unadjudicated (`proposed`) terms.
    #[arg(long)]
    pub include_proposed: bool,
    /// Substring matching instead of whole-token matching.
    #[arg(long)]
    pub substring: bool,
    /// CSV of (component, code) pairs to drop after matching.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub roadmap: PathBuf,
    /// Cohort directory; restricts in-sample codes to its diagnoses.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    #[command(flatten)]
    pub opts: MatchOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    /// Roadmap to match; ignored when --matches is given.
    #[arg(long, required_unless_present = "matches")]
    pub roadmap: Option<PathBuf>,
    /// Previously written match file.
    #[arg(long)]
    pub matches: Option<PathBuf>,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[command(flatten)]
    pub opts: MatchOpts,
    /// Output directory for statuses.csv, evidence.csv and summary.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AliArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Extra status sources as name=path (status tables or recover output).
    #[arg(long = "sources", value_delimiter = ',')]
    pub sources: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Context,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long, value_enum, default_value = "context")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
    /// Original roadmap for context mode. Defaults to the bundled one.
    #[arg(long)]
    pub roadmap: Option<PathBuf>,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Archive one transcript per run here.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    /// Rebuild from archived transcripts; the network is never used.
    #[arg(long, conflicts_with = "responses")]
    pub replay: Option<PathBuf>,
    /// Serve canned replies from run_*.txt files instead of calling an endpoint.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Overrides LLM_ENDPOINT.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Overrides LLM_MODEL.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long, default_value_t = 0)]
    pub min_interval_ms: u64,
    /// Union the original roadmap in front of the result.
    #[arg(long)]
    pub union_original: bool,
}

#[derive(Debug, Args)]
pub struct ReviewSetup {
    /// Roadmap with proposed terms (e.g. `enhance` output).
    #[arg(long)]
    pub roadmap: PathBuf,
    /// Clinicians' roadmap placed in front of the proposed one. Defaults to the bundled one.
    #[arg(long)]
    pub original: Option<PathBuf>,
    /// Match file with in-sample codes for the combined roadmap.
    #[arg(long, required_unless_present = "cohort")]
    pub matches: Option<PathBuf>,
    /// Cohort directory; supplies in-sample codes and per-code patient counts.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    #[command(flatten)]
    pub catalog: CatalogArg,
    /// Append-only decision log (JSON lines).
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AdjudicateCmd {
    /// Serve the review API and UI.
    Serve {
        #[command(flatten)]
        setup: ReviewSetup,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Static review UI to serve at /.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Write the adjudicated roadmap from the decision log.
    Export {
        #[command(flatten)]
        setup: ReviewSetup,
        #[arg(long, default_value = "any_approve")]
        rule: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print queue progress as JSON.
    Progress {
        #[command(flatten)]
        setup: ReviewSetup,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnalysisKind {
    Flowchart,
    Missingness,
    Pairs,
    Regress,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub kind: AnalysisKind,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Status sources as name=path, compared against the EHR.
    #[arg(long = "sources", value_delimiter = ',')]
    pub sources: Vec<String>,
    /// Restrict to chart-reviewed patients and add the review as a source.
    #[arg(long)]
    pub with_review: bool,
    /// For pairs: the two sources to compare (default ehr and the first source).
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Generator settings (TOML); defaults reproduce the reference marginals.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}
