use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgqa_core::disambiguation::DisambiguatorKind;
use kgqa_core::generation::GeneratorKind;
use kgqa_core::guard::FilterPolicy;
use serde::{Deserialize, Serialize};

const OUTPUT_FILES: &str = "\
Output files (written under --out):
  index-build     entity.index, predicate.index
  index-sweep     sweep-<kind>.csv
  retrieve        candidates.json
  disambiguate    disambiguation.json
  generate        generation.json
  filter-check    filter.json
  execute         answers.json
  evaluate        report.csv, trace.jsonl, gold_answers.jsonl
  reject-report   rejection.csv (and trace.jsonl unless --trace is given)
  make-splits     train.jsonl, test.jsonl
  augment-train   train_augmented.jsonl

Exit codes: 0 success, 2 configuration error, 3 data error, 4 remote-service error.
API keys are read only from the environment variable named by reasoner.api_key_env.";

#[derive(Debug, Parser)]
#[command(name = "kgqa", version, about = "Query-based question answering over a knowledge graph", after_help = OUTPUT_FILES)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutorChoice {
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindChoice {
    Entity,
    Predicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RetrieveKind {
    Entity,
    Predicate,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory [default: kgqa-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Seed for shuffling and sampling [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Entity catalog (JSON Lines). Without all three snapshot files the bundled toy graph is used.
    #[arg(long, global = true, value_name = "FILE")]
    pub entities_file: Option<PathBuf>,

    /// Predicate catalog (JSON Lines).
    #[arg(long, global = true, value_name = "FILE")]
    pub predicates_file: Option<PathBuf>,

    /// Triples (tab-separated subject, predicate, object).
    #[arg(long, global = true, value_name = "FILE")]
    pub triples_file: Option<PathBuf>,

    /// Directory holding entity.index and predicate.index from index-build.
    #[arg(long, global = true, value_name = "DIR")]
    pub index_dir: Option<PathBuf>,

    /// Tuned BM25 parameters: qald10, lcquad2, rubq2 or pat.
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// BM25 k1 for the entity index.
    #[arg(long, global = true)]
    pub entity_k1: Option<f64>,

    /// BM25 b for the entity index.
    #[arg(long, global = true)]
    pub entity_b: Option<f64>,

    /// BM25 k1 for the predicate index.
    #[arg(long, global = true)]
    pub predicate_k1: Option<f64>,

    /// BM25 b for the predicate index.
    #[arg(long, global = true)]
    pub predicate_b: Option<f64>,

    /// Entities with fewer distinct predicates are left out of the entity index [default: 10].
    #[arg(long, global = true)]
    pub min_degree: Option<usize>,

    /// Where queries run [default: local].
    #[arg(long, global = true, value_enum)]
    pub executor: Option<ExecutorChoice>,

    /// SPARQL endpoint URL for the remote executor.
    #[arg(long, global = true, value_name = "URL")]
    pub endpoint: Option<String>,

    /// Few-shot examples (JSON Lines of {question, query}) for the remote generator.
    #[arg(long, global = true, value_name = "FILE")]
    pub fewshot: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and save the degree-pruned entity index and the predicate index.
    IndexBuild,
    /// Grid-search BM25 (k1, b) for Recall@k on a dataset's gold ids.
    IndexSweep(SweepArgs),
    /// Print the top-k BM25 candidates for a question.
    Retrieve(RetrieveArgs),
    /// Retrieve and select entity and predicate ids for a question.
    Disambiguate(DisambiguateArgs),
    /// Produce a SPARQL query from a question and chosen ids.
    Generate(GenerateArgs),
    /// Run the entity/predicate connectivity filter.
    FilterCheck(FilterArgs),
    /// Execute a SPARQL query and print its answers.
    Execute(ExecuteArgs),
    /// Run the full pipeline on datasets and score it.
    Evaluate(PipelineArgs),
    /// Measure how often the filter and execution checks catch wrong queries.
    RejectReport(RejectArgs),
    /// Leave-one-dataset-out training and test files.
    MakeSplits(SplitArgs),
    /// Write prompt/query training pairs with BM25 distractor candidates.
    AugmentTrain(AugmentArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset JSON Lines file; repeat for several. Defaults to the bundled toy questions.
    #[arg(long = "dataset", value_name = "FILE")]
    pub datasets: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Catalog to tune.
    #[arg(long, value_enum, default_value = "entity")]
    pub kind: KindChoice,

    /// k1 grid: start:end:step, a comma list or one value.
    #[arg(long, default_value = "0.5:3.0:0.5")]
    pub k1: String,

    /// b grid: start:end:step, a comma list or one value.
    #[arg(long, default_value = "0.0:1.0:0.25")]
    pub b: String,

    /// Cutoff for Recall@k.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Question text.
    #[arg(long)]
    pub question: String,

    /// Catalogs to search.
    #[arg(long, value_enum, default_value = "both")]
    pub kind: RetrieveKind,

    /// Number of candidates per catalog.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct DisambiguateArgs {
    /// Question text.
    #[arg(long)]
    pub question: String,

    /// remote, oracle-label or oracle-gold.
    #[arg(long)]
    pub disambiguator: Option<DisambiguatorKind>,

    /// Gold ids for oracle-gold, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub gold: Vec<String>,

    /// Candidates offered per catalog.
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Question text.
    #[arg(long)]
    pub question: String,

    /// Chosen entity ids, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub entities: Vec<String>,

    /// Chosen predicate ids, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub predicates: Vec<String>,

    /// remote-llm, template or gold-passthrough.
    #[arg(long)]
    pub generator: Option<GeneratorKind>,

    /// Query returned by gold-passthrough.
    #[arg(long)]
    pub gold_query: Option<String>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Entity ids, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub entities: Vec<String>,

    /// Predicate ids, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub predicates: Vec<String>,

    /// off, alg1 or strict.
    #[arg(long)]
    pub filter: Option<FilterPolicy>,
}

#[derive(Debug, Args)]
pub struct ExecuteArgs {
    /// SPARQL query text.
    #[arg(
        long,
        conflicts_with = "query_file",
        required_unless_present = "query_file"
    )]
    pub query: Option<String>,

    /// Read the query from a file.
    #[arg(long, value_name = "FILE")]
    pub query_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// remote, oracle-label or oracle-gold.
    #[arg(long)]
    pub disambiguator: Option<DisambiguatorKind>,

    /// remote-llm, template or gold-passthrough.
    #[arg(long)]
    pub generator: Option<GeneratorKind>,

    /// Pre-generation filter: off, alg1 or strict.
    #[arg(long)]
    pub filter: Option<FilterPolicy>,

    /// Accept empty results instead of rejecting them.
    #[arg(long)]
    pub no_execution_guard: bool,

    /// Parallel questions.
    #[arg(long)]
    pub workers: Option<usize>,

    /// Entity candidates offered to the disambiguator [default: 100].
    #[arg(long)]
    pub entity_top_k: Option<usize>,

    /// Predicate candidates offered to the disambiguator [default: 100].
    #[arg(long)]
    pub predicate_top_k: Option<usize>,

    /// Generate and execute even after the filter rejects.
    #[arg(long)]
    pub diagnose: bool,

    /// Also ask the reasoner for answers directly.
    #[arg(long)]
    pub direct_answer: bool,
}

#[derive(Debug, Args)]
pub struct RejectArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,

    /// Build the report from an existing trace instead of running the pipeline.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Dataset whose test split is held out.
    #[arg(long)]
    pub held_out: String,

    /// Distractors per catalog [default: 5].
    #[arg(long)]
    pub n_distractors: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Which split to augment.
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitChoice,

    /// Distractors per catalog [default: 5].
    #[arg(long)]
    pub n_distractors: Option<usize>,
}
