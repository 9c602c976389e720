use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use entred_core::entre::LoopMode;
use entred_core::replace::{ContextMask, MaskMode, MASK_TOKEN};
use entred_core::Role;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "entred",
    version,
    about = "Type-constrained entity replacement and shortcut auditing for relation-extraction corpora",
    args_override_self = true
)]
pub struct Cli {
    /// Flat TOML file whose keys mirror the flags of the chosen subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only warnings and errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect, validate and transform corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build replacement name pools.
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Eligibility, annotation, shortcut and diversity audits.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Run the adversarial replacement loop.
    #[command(subcommand)]
    Entre(EntreCmd),
    /// Score predictions and measure robustness.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Serve or probe oracles.
    #[command(subcommand)]
    Oracle(OracleCmd),
}

// ---------------------------------------------------------------------------
// shared argument groups
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusIn {
    /// Corpus in TACRED JSON format.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,

    /// Skip invalid records instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BatchArgs {
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,

    /// Concurrent batches (and model processes for command oracles).
    #[arg(long, default_value_t = 1)]
    pub workers: usize,

    /// Attempts per batch on transient transport failures.
    #[arg(long, default_value_t = 4)]
    pub retries: u32,
}

impl Default for BatchArgs {
    fn default() -> Self {
        BatchArgs { batch_size: 64, workers: 1, retries: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Also write the JSON report to this file.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ManifestArgs {
    /// Manifest path; defaults to manifest.json next to the first output.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Full,
    Fast,
}

impl From<ModeArg> for LoopMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => LoopMode::Full,
            ModeArg::Fast => LoopMode::Fast,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
#[allow(clippy::enum_variant_names)]
pub enum MaskArg {
    NoNameNoType,
    NoNameWithType,
    WithNameWithType,
}

impl From<MaskArg> for MaskMode {
    fn from(m: MaskArg) -> Self {
        match m {
            MaskArg::NoNameNoType => MaskMode::NoNameNoType,
            MaskArg::NoNameWithType => MaskMode::NoNameWithType,
            MaskArg::WithNameWithType => MaskMode::WithNameWithType,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextArg {
    PreservePositions,
    EntitiesOnly,
}

impl From<ContextArg> for ContextMask {
    fn from(m: ContextArg) -> Self {
        match m {
            ContextArg::PreservePositions => ContextMask::PreservePositions,
            ContextArg::EntitiesOnly => ContextMask::EntitiesOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleArg {
    Subject,
    Object,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Subject => Role::Subject,
            RoleArg::Object => Role::Object,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CounterfactualArgs {
    #[arg(long, default_value = MASK_TOKEN)]
    pub mask_token: String,

    #[arg(long, value_enum, default_value_t = ContextArg::PreservePositions)]
    pub context_mode: ContextArg,
}

// ---------------------------------------------------------------------------
// corpus
// ---------------------------------------------------------------------------

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Sentence, token and label counts.
    Stats(StatsArgs),
    /// Strict validation of spans, ids and labels.
    Validate(ValidateArgs),
    /// Apply an entity-mask baseline.
    Mask(MaskArgs),
    /// Mask the context around the entities.
    Counterfactual(CounterfactualCmdArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,

    /// Allowed relation labels: a JSON array or one label per line.
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MaskArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: MaskArg,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CounterfactualCmdArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub mask: CounterfactualArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of no_relation instances.
    #[arg(long, default_value_t = 0.3)]
    pub background_rate: f64,
    /// Never repeat a (subject, object) pair.
    #[arg(long)]
    pub distinct_pairs: bool,
    /// Write the trigger map for the context-reader stub here.
    #[arg(long, value_name = "FILE")]
    pub triggers_out: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

// ---------------------------------------------------------------------------
// lexicon
// ---------------------------------------------------------------------------

#[derive(Debug, Subcommand)]
pub enum LexiconCmd {
    /// Normalize and deduplicate PERSON and ORGANIZATION name lists.
    Build(LexiconBuildArgs),
    /// Write coined name pools of a given size.
    Synth(LexiconSynthArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct LexiconBuildArgs {
    /// One PERSON name per line.
    #[arg(long, value_name = "FILE")]
    pub person: PathBuf,
    /// One ORGANIZATION name per line.
    #[arg(long, value_name = "FILE")]
    pub org: PathBuf,
    /// Receives person.txt and organization.txt.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct LexiconSynthArgs {
    #[arg(long, default_value_t = 50_000)]
    pub size: usize,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

#[derive(Debug, Subcommand)]
pub enum AuditCmd {
    /// Drop instances without a PERSON or ORGANIZATION entity.
    Eligibility(EligibilityArgs),
    /// Flag annotations that disagree with an NER tagger.
    Annotations(AnnotationsArgs),
    /// Count instances an oracle gets right with the context masked.
    Shortcuts(ShortcutsArgs),
    /// Distinct entity-name counts.
    Diversity(DiversityArgs),
    /// Compare two shortcut reports.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EligibilityArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AnnotationsArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    /// NER tagger: URL, cmd:<command> or stub:gold=<corpus>.
    #[arg(long, env = "ENTRED_NER")]
    pub ner: Option<String>,
    /// Write the instances that agree with the tagger here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Accept spans with at least this token Jaccard overlap.
    #[arg(long)]
    pub min_jaccard: Option<f64>,
    #[command(flatten)]
    pub batch: BatchArgs,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ShortcutsArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    /// Relation oracle: URL, cmd:<command> or stub:<kind>=<arg>.
    #[arg(long, env = "ENTRED_ORACLE")]
    pub oracle: Option<String>,
    #[command(flatten)]
    pub mask: CounterfactualArgs,
    #[command(flatten)]
    pub batch: BatchArgs,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DiversityArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Shortcut report of the original corpus.
    #[arg(long, value_name = "FILE")]
    pub before: PathBuf,
    /// Shortcut report of the replaced corpus.
    #[arg(long, value_name = "FILE")]
    pub after: PathBuf,
    #[arg(long, value_name = "FILE", requires = "diversity_after")]
    pub diversity_before: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "diversity_before")]
    pub diversity_after: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

// ---------------------------------------------------------------------------
// entre
// ---------------------------------------------------------------------------

#[derive(Debug, Subcommand)]
pub enum EntreCmd {
    /// Replace entity names until the oracle is fooled or the budget ends.
    Run(EntreRunArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EntreRunArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Replacement trace; defaults to trace.json next to --out.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub person_lexicon: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub org_lexicon: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 200)]
    pub max_iter: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relation oracle: URL, cmd:<command> or stub:<kind>=<arg>.
    #[arg(long, env = "ENTRED_ORACLE")]
    pub oracle: Option<String>,
    /// Replace every instance once before the first query.
    #[arg(long)]
    pub initial_pass: bool,
    /// Full mode: leave correctly predicted no_relation instances alone.
    #[arg(long)]
    pub exclude_no_relation: bool,
    /// Never draw a name already used in the corpus or the run.
    #[arg(long)]
    pub unique_names: bool,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [RoleArg::Subject, RoleArg::Object])]
    pub roles: Vec<RoleArg>,
    /// Drop ineligible instances instead of failing.
    #[arg(long)]
    pub filter_ineligible: bool,
    #[command(flatten)]
    pub batch: BatchArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Micro-F1 of an oracle or a predictions file.
    Score(ScoreArgs),
    /// F1 before and after replacement.
    Robustness(RobustnessArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: CorpusIn,
    /// Predictions as a JSON array of {"id", "label"} objects.
    #[arg(long, value_name = "FILE", conflicts_with = "oracle")]
    pub predictions: Option<PathBuf>,
    #[arg(long, env = "ENTRED_ORACLE")]
    pub oracle: Option<String>,
    /// Fail when micro-F1 is below this value.
    #[arg(long)]
    pub min_f1: Option<f64>,
    #[command(flatten)]
    pub batch: BatchArgs,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RobustnessArgs {
    #[arg(long, value_name = "FILE")]
    pub before: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub after: PathBuf,
    #[arg(long)]
    pub lenient: bool,
    #[arg(long, env = "ENTRED_ORACLE")]
    pub oracle: Option<String>,
    /// Fail when micro-F1 on the replaced corpus is below this value.
    #[arg(long)]
    pub min_f1: Option<f64>,
    #[command(flatten)]
    pub batch: BatchArgs,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub manifest: ManifestArgs,
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Subcommand)]
pub enum OracleCmd {
    /// Expose a stub oracle over stdin/stdout.
    Serve(ServeArgs),
    /// Connect, print the announced labels and exit.
    Handshake(HandshakeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// stub:constant=<label>, stub:memorizer=<corpus>,
    /// stub:context-reader=<triggers.json> or stub:gold=<corpus> (NER).
    #[arg(long)]
    pub stub: String,
}

#[derive(Debug, Args, Serialize)]
pub struct HandshakeArgs {
    #[arg(long, env = "ENTRED_ORACLE")]
    pub oracle: Option<String>,
    #[command(flatten)]
    pub batch: BatchArgs,
}
