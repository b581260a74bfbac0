use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use kgqa_core::client::{ChatBackend, ChatClient};
use kgqa_core::disambiguation::{disambiguate, Disambiguator, DisambiguatorKind};
use kgqa_core::evaluation::{
    evaluate_end_to_end, load_dataset, make_generalization_splits, write_report_csv, write_trace,
    EvaluationReport, PipelineConfig, PipelineOutcome, PipelineResources, QaExample, Split,
};
use kgqa_core::generation::{
    augment_training_pairs, generate, load_fewshot, FewShotExample, GenerationRequest, Generator,
    GeneratorKind,
};
use kgqa_core::guard::{rejection_report, write_rejection_csv, Stage};
use kgqa_core::kgstore::Snapshot;
use kgqa_core::retrieval::{
    entity_index, parse_grid, predicate_index, sweep, CandidateSet, CatalogKind, Index,
    RecallExample,
};
use kgqa_core::sparql::{Executor, LocalExecutor, RemoteExecutor};
use kgqa_core::toy;
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    AugmentArgs, Cli, Command, DisambiguateArgs, ExecuteArgs, ExecutorChoice, FilterArgs,
    GenerateArgs, KindChoice, PipelineArgs, RejectArgs, RetrieveArgs, RetrieveKind, SplitArgs,
    SplitChoice, SweepArgs,
};
use crate::config::RunConfig;
use crate::error::{Classify, Failure, Kind, Outcome};

pub const ENTITY_INDEX_FILE: &str = "entity.index";
pub const PREDICATE_INDEX_FILE: &str = "predicate.index";

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Outcome<()> {
    let cfg = RunConfig::resolve(&cli.common)?;
    let mut out = Printer(stdout);
    match cli.command {
        Command::IndexBuild => index_build(&cfg, &mut out),
        Command::IndexSweep(a) => index_sweep(&cfg, a, &mut out),
        Command::Retrieve(a) => retrieve(&cfg, a, &mut out),
        Command::Disambiguate(a) => disambiguate_cmd(&cfg, a, &mut out),
        Command::Generate(a) => generate_cmd(&cfg, a, &mut out),
        Command::FilterCheck(a) => filter_check(&cfg, a, &mut out),
        Command::Execute(a) => execute(&cfg, a, &mut out),
        Command::Evaluate(a) => evaluate(&cfg, a, &mut out),
        Command::RejectReport(a) => reject_report(&cfg, a, &mut out),
        Command::MakeSplits(a) => make_splits(&cfg, a, &mut out),
        Command::AugmentTrain(a) => augment_train(&cfg, a, &mut out),
    }
}

struct Printer<'a>(&'a mut dyn Write);

impl Printer<'_> {
    fn line(&mut self, text: impl AsRef<str>) -> Outcome<()> {
        writeln!(self.0, "{}", text.as_ref()).or_fail(Kind::Data, "writing to stdout")
    }

    fn raw(&mut self, bytes: &[u8]) -> Outcome<()> {
        self.0
            .write_all(bytes)
            .or_fail(Kind::Data, "writing to stdout")
    }
}

// Shared loading.

fn snapshot(cfg: &RunConfig) -> Outcome<Snapshot> {
    match &cfg.snapshot {
        None => {
            info!("using the bundled toy graph");
            Ok(toy::snapshot())
        }
        Some(p) => Ok(Snapshot::load(&p.entities, &p.predicates, &p.triples)?),
    }
}

fn load_index(path: &Path, kind: CatalogKind) -> Outcome<Index> {
    let file = File::open(path).or_fail(Kind::Data, format!("opening {}", path.display()))?;
    let index = Index::load(BufReader::new(file))?;
    if index.kind() != kind {
        return Err(Failure::data(format!(
            "{} holds a {} index, expected {kind}",
            path.display(),
            index.kind()
        )));
    }
    Ok(index)
}

/// Prebuilt indexes from `index_dir` when configured, otherwise fresh ones.
fn indexes(cfg: &RunConfig, kg: &Snapshot) -> Outcome<(Index, Index)> {
    match &cfg.index_dir {
        Some(dir) => Ok((
            load_index(&dir.join(ENTITY_INDEX_FILE), CatalogKind::Entity)?,
            load_index(&dir.join(PREDICATE_INDEX_FILE), CatalogKind::Predicate)?,
        )),
        None => Ok((
            entity_index(kg, cfg.entity_params, cfg.min_degree)?,
            predicate_index(kg, cfg.predicate_params)?,
        )),
    }
}

fn examples(cfg: &RunConfig, flag_paths: &[PathBuf]) -> Outcome<Vec<QaExample>> {
    let paths = if flag_paths.is_empty() {
        &cfg.datasets
    } else {
        flag_paths
    };
    if paths.is_empty() {
        info!("using the bundled toy questions");
        return Ok(toy::questions());
    }
    let mut all = Vec::new();
    for path in paths {
        let loaded = load_dataset(path)?;
        for e in &loaded.errors {
            warn!("{}: {e}", path.display());
        }
        let counts = loaded.split_counts();
        info!(
            "{}: {} train, {} test, {} bad lines",
            path.display(),
            counts.get(&Split::Train).unwrap_or(&0),
            counts.get(&Split::Test).unwrap_or(&0),
            loaded.errors.len()
        );
        all.extend(loaded.examples);
    }
    Ok(all)
}

fn fewshot(cfg: &RunConfig) -> Outcome<Vec<FewShotExample>> {
    match &cfg.fewshot {
        None => Ok(Vec::new()),
        Some(path) => {
            let file =
                File::open(path).or_fail(Kind::Data, format!("opening {}", path.display()))?;
            Ok(load_fewshot(BufReader::new(file))?)
        }
    }
}

fn chat_client(cfg: &RunConfig) -> Outcome<ChatClient> {
    Ok(ChatClient::new(cfg.reasoner.clone())?)
}

fn executor(
    cfg: &RunConfig,
    kg: impl FnOnce() -> Outcome<Arc<Snapshot>>,
) -> Outcome<Box<dyn Executor>> {
    Ok(match cfg.executor {
        ExecutorChoice::Local => Box::new(LocalExecutor::new(kg()?)),
        ExecutorChoice::Remote => Box::new(
            RemoteExecutor::new(cfg.endpoint.clone()).map_err(|e| Failure::new(Kind::Config, e))?,
        ),
    })
}

fn create(cfg: &RunConfig, name: &str) -> Outcome<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(&cfg.out).or_fail(Kind::Data, format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join(name);
    let file = File::create(&path).or_fail(Kind::Data, format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Outcome<()> {
    w.flush()
        .or_fail(Kind::Data, format!("writing {}", path.display()))
}

fn write_json(cfg: &RunConfig, name: &str, value: &impl Serialize) -> Outcome<()> {
    let (path, mut w) = create(cfg, name)?;
    serde_json::to_writer_pretty(&mut w, value)
        .or_fail(Kind::Data, format!("writing {}", path.display()))?;
    w.write_all(b"\n")
        .or_fail(Kind::Data, format!("writing {}", path.display()))?;
    finish(&path, w)
}

fn id_set(ids: &[String]) -> BTreeSet<String> {
    ids.iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

// Subcommands.

fn index_build(cfg: &RunConfig, out: &mut Printer) -> Outcome<()> {
    let kg = snapshot(cfg)?;
    let entities = entity_index(&kg, cfg.entity_params, cfg.min_degree)?;
    let predicates = predicate_index(&kg, cfg.predicate_params)?;
    for (name, index) in [
        (ENTITY_INDEX_FILE, &entities),
        (PREDICATE_INDEX_FILE, &predicates),
    ] {
        let (path, mut w) = create(cfg, name)?;
        index.save(&mut w)?;
        finish(&path, w)?;
        let p = index.params();
        out.line(format!(
            "{}\t{} docs\tk1={}\tb={}\t{}",
            index.kind(),
            index.len(),
            p.k1,
            p.b,
            path.display()
        ))?;
    }
    info!(
        "{} of {} entities kept at min degree {}",
        entities.len(),
        kg.entities().len(),
        cfg.min_degree
    );
    Ok(())
}

fn index_sweep(cfg: &RunConfig, args: SweepArgs, out: &mut Printer) -> Outcome<()> {
    let kg = snapshot(cfg)?;
    let exs = examples(cfg, &args.data.datasets)?;
    let (kind, base) = match args.kind {
        KindChoice::Entity => (
            CatalogKind::Entity,
            entity_index(&kg, cfg.entity_params, cfg.min_degree)?,
        ),
        KindChoice::Predicate => (
            CatalogKind::Predicate,
            predicate_index(&kg, cfg.predicate_params)?,
        ),
    };
    let recall_examples: Vec<RecallExample> = exs
        .iter()
        .map(|ex| RecallExample {
            query: ex.question.clone(),
            gold: match kind {
                CatalogKind::Entity => ex.gold_entities.clone(),
                CatalogKind::Predicate => ex.gold_predicates.clone(),
            },
        })
        .collect();
    let report = sweep(
        |p| base.with_params(p),
        &recall_examples,
        &parse_grid(&args.k1)?,
        &parse_grid(&args.b)?,
        args.k,
    )?;
    let (path, mut w) = create(cfg, &format!("sweep-{kind}.csv"))?;
    report.write_csv(&mut w)?;
    finish(&path, w)?;
    out.line(format!(
        "best {kind} k1={} b={} recall@{}={:.4} over {} cells ({} examples without gold ids)",
        report.best.k1,
        report.best.b,
        report.k,
        report.best_recall,
        report.rows.len(),
        report.skipped
    ))
}

fn retrieve(cfg: &RunConfig, args: RetrieveArgs, out: &mut Printer) -> Outcome<()> {
    let kg = snapshot(cfg)?;
    let (entities, predicates) = indexes(cfg, &kg)?;
    let mut found: BTreeMap<&str, CandidateSet> = BTreeMap::new();
    let wanted = [
        ("entities", &entities, args.kind != RetrieveKind::Predicate),
        ("predicates", &predicates, args.kind != RetrieveKind::Entity),
    ];
    for (name, index, on) in wanted {
        if !on {
            continue;
        }
        let candidates = index.search(&args.question, args.k);
        for (rank, hit) in candidates.hits.iter().enumerate() {
            let label = index.doc(&hit.id).map_or("", |d| d.label.as_str());
            out.line(format!(
                "{}\t{}\t{}\t{:.6}\t{label}",
                index.kind(),
                rank + 1,
                hit.id,
                hit.score
            ))?;
        }
        found.insert(name, candidates);
    }
    write_json(cfg, "candidates.json", &found)
}

fn disambiguate_cmd(cfg: &RunConfig, args: DisambiguateArgs, out: &mut Printer) -> Outcome<()> {
    let kind = args.disambiguator.unwrap_or(cfg.pipeline.disambiguator);
    let gold = id_set(&args.gold);
    if kind == DisambiguatorKind::OracleGold && gold.is_empty() {
        return Err(Failure::config("oracle-gold needs --gold ids"));
    }
    let chat = match kind {
        DisambiguatorKind::Remote => Some(chat_client(cfg)?),
        _ => None,
    };
    let kg = snapshot(cfg)?;
    let (entities, predicates) = indexes(cfg, &kg)?;
    let mut results = BTreeMap::new();
    let catalogs = [
        (
            "entities",
            &entities,
            args.top_k.unwrap_or(cfg.pipeline.entity_top_k),
        ),
        (
            "predicates",
            &predicates,
            args.top_k.unwrap_or(cfg.pipeline.predicate_top_k),
        ),
    ];
    for (name, index, k) in catalogs {
        let candidates = index.search(&args.question, k);
        let backend = match (&chat, kind) {
            (Some(c), _) => Disambiguator::Remote(c),
            (None, DisambiguatorKind::OracleGold) => Disambiguator::OracleGold(&gold),
            (None, _) => Disambiguator::OracleLabel,
        };
        let result = disambiguate(&args.question, &candidates, index.kind(), index, backend)?;
        out.line(format!("{name}\t{}", result.selected.join(",")))?;
        let offered: Vec<&str> = candidates.ids().collect();
        results.insert(name, json!({ "offered": offered, "result": result }));
    }
    write_json(
        cfg,
        "disambiguation.json",
        &json!({ "question": args.question, "selections": results }),
    )
}

fn generate_cmd(cfg: &RunConfig, args: GenerateArgs, out: &mut Printer) -> Outcome<()> {
    let kind = args.generator.unwrap_or(cfg.pipeline.generator);
    let chat = match kind {
        GeneratorKind::RemoteLlm => Some(chat_client(cfg)?),
        _ => None,
    };
    let kg = snapshot(cfg)?;
    let mut request =
        GenerationRequest::from_ids(&args.question, &args.entities, &args.predicates, &kg);
    request.fewshot_examples = fewshot(cfg)?;
    let generator = match (&chat, kind) {
        (Some(c), _) => Generator::RemoteLlm(c),
        (None, GeneratorKind::Template) => Generator::Template,
        (None, _) => Generator::GoldPassthrough(args.gold_query.as_deref()),
    };
    let result = generate(&request, generator)?;
    out.line(&result.query_text)?;
    write_json(
        cfg,
        "generation.json",
        &json!({ "request": request, "result": result }),
    )
}

fn filter_check(cfg: &RunConfig, args: FilterArgs, out: &mut Printer) -> Outcome<()> {
    let policy = args.filter.unwrap_or(cfg.pipeline.policy.filter);
    let kg = snapshot(cfg)?;
    let entities = id_set(&args.entities);
    let predicates = id_set(&args.predicates);
    for id in entities.iter().filter(|e| kg.entity(e).is_none()) {
        warn!("entity {id} is not in the snapshot");
    }
    let mismatch = policy.mismatch(&kg, &entities, &predicates);
    let verdict = if mismatch == Some(true) {
        format!("REJECT {}", Stage::PreGenerationFilter)
    } else {
        "ACCEPT".to_string()
    };
    out.line(&verdict)?;
    write_json(
        cfg,
        "filter.json",
        &json!({
            "entities": entities,
            "predicates": predicates,
            "policy": policy,
            "mismatch": mismatch,
            "verdict": verdict,
        }),
    )
}

fn execute(cfg: &RunConfig, args: ExecuteArgs, out: &mut Printer) -> Outcome<()> {
    let query = match (args.query, &args.query_file) {
        (Some(q), _) => q,
        (None, Some(path)) => {
            fs::read_to_string(path).or_fail(Kind::Data, format!("reading {}", path.display()))?
        }
        (None, None) => return Err(Failure::config("give --query or --query-file")),
    };
    let exec = executor(cfg, || Ok(Arc::new(snapshot(cfg)?)))?;
    let answers = exec.execute(&query)?;
    for term in answers.comparison_terms() {
        out.line(term)?;
    }
    write_json(cfg, "answers.json", &answers)
}

fn pipeline_config(cfg: &RunConfig, args: &PipelineArgs) -> Outcome<PipelineConfig> {
    let mut pc = cfg.pipeline.clone();
    if let Some(d) = args.disambiguator {
        pc.disambiguator = d;
    }
    if let Some(g) = args.generator {
        pc.generator = g;
    }
    if let Some(f) = args.filter {
        pc.policy.filter = f;
    }
    if args.no_execution_guard {
        pc.policy.execution = false;
    }
    pc.workers = args.workers.unwrap_or(pc.workers);
    if pc.workers == 0 {
        return Err(Failure::config("--workers must be at least 1"));
    }
    pc.entity_top_k = args.entity_top_k.unwrap_or(pc.entity_top_k);
    pc.predicate_top_k = args.predicate_top_k.unwrap_or(pc.predicate_top_k);
    pc.diagnose |= args.diagnose;
    pc.direct_answer |= args.direct_answer;
    Ok(pc)
}

fn run_pipeline(
    cfg: &RunConfig,
    pc: &PipelineConfig,
    datasets: &[PathBuf],
) -> Outcome<EvaluationReport> {
    let needs_chat = pc.disambiguator == DisambiguatorKind::Remote
        || pc.generator == GeneratorKind::RemoteLlm
        || pc.direct_answer;
    let chat = if needs_chat {
        Some(chat_client(cfg)?)
    } else {
        None
    };
    let kg = Arc::new(snapshot(cfg)?);
    let (entities, predicates) = indexes(cfg, &kg)?;
    let exec = executor(cfg, || Ok(kg.clone()))?;
    let shots = fewshot(cfg)?;
    let exs = examples(cfg, datasets)?;
    info!(
        "evaluating {} questions with {} workers",
        exs.len(),
        pc.workers
    );
    let res = PipelineResources {
        snapshot: &kg,
        entity_index: &entities,
        predicate_index: &predicates,
        executor: exec.as_ref(),
        chat: chat.as_ref().map(|c| c as &dyn ChatBackend),
        fewshot: &shots,
    };
    Ok(evaluate_end_to_end(&exs, pc, &res)?)
}

fn save_trace(cfg: &RunConfig, outcomes: &[PipelineOutcome]) -> Outcome<()> {
    let (path, mut w) = create(cfg, "trace.jsonl")?;
    write_trace(outcomes, &mut w).or_fail(Kind::Data, format!("writing {}", path.display()))?;
    finish(&path, w)
}

fn evaluate(cfg: &RunConfig, args: PipelineArgs, out: &mut Printer) -> Outcome<()> {
    let pc = pipeline_config(cfg, &args)?;
    let report = run_pipeline(cfg, &pc, &args.data.datasets)?;

    let mut csv = Vec::new();
    write_report_csv(&report.summaries, &mut csv).or_fail(Kind::Data, "formatting report")?;
    let (path, mut w) = create(cfg, "report.csv")?;
    w.write_all(&csv)
        .or_fail(Kind::Data, format!("writing {}", path.display()))?;
    finish(&path, w)?;
    save_trace(cfg, &report.outcomes)?;

    // Kept apart from the report so that the report stays reproducible.
    let cached_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let (path, mut w) = create(cfg, "gold_answers.jsonl")?;
    for o in &report.outcomes {
        let line =
            json!({ "id": o.id, "dataset": o.dataset, "answers": o.gold, "cached_at": cached_at });
        writeln!(w, "{line}").or_fail(Kind::Data, format!("writing {}", path.display()))?;
    }
    finish(&path, w)?;
    out.raw(&csv)
}

fn read_trace(path: &Path) -> Outcome<Vec<PipelineOutcome>> {
    let file = File::open(path).or_fail(Kind::Data, format!("opening {}", path.display()))?;
    let mut outcomes = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.or_fail(Kind::Data, format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        outcomes.push(
            serde_json::from_str(&line)
                .or_fail(Kind::Data, format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(outcomes)
}

fn reject_report(cfg: &RunConfig, args: RejectArgs, out: &mut Printer) -> Outcome<()> {
    let outcomes = match &args.trace {
        Some(path) => read_trace(path)?,
        None => {
            let mut pc = pipeline_config(cfg, &args.pipeline)?;
            pc.diagnose = true;
            let report = run_pipeline(cfg, &pc, &args.pipeline.data.datasets)?;
            save_trace(cfg, &report.outcomes)?;
            report.outcomes
        }
    };
    let observations: Vec<_> = outcomes
        .iter()
        .map(PipelineOutcome::rejection_observation)
        .collect();
    let rows = rejection_report(&observations);
    let mut csv = Vec::new();
    write_rejection_csv(&rows, &mut csv).or_fail(Kind::Data, "formatting rejection report")?;
    let (path, mut w) = create(cfg, "rejection.csv")?;
    w.write_all(&csv)
        .or_fail(Kind::Data, format!("writing {}", path.display()))?;
    finish(&path, w)?;
    out.raw(&csv)
}

/// A line in the dataset input format, so held-out files load back unchanged.
fn dataset_line(ex: &QaExample) -> serde_json::Value {
    let mut line = json!({
        "id": ex.id,
        "question": ex.question,
        "sparql": ex.gold_query,
        "entities": ex.gold_entities,
        "predicates": ex.gold_predicates,
        "split": ex.split,
        "dataset": ex.dataset,
    });
    if let Some(answers) = &ex.gold_answers {
        line["answers"] = json!(answers.comparison_terms());
    }
    if let Some(labels) = &ex.answer_labels {
        line["answer_labels"] = json!(labels);
    }
    line
}

fn make_splits(cfg: &RunConfig, args: SplitArgs, out: &mut Printer) -> Outcome<()> {
    let mut by_dataset: BTreeMap<String, Vec<QaExample>> = BTreeMap::new();
    for ex in examples(cfg, &args.data.datasets)? {
        by_dataset.entry(ex.dataset.clone()).or_default().push(ex);
    }
    let (train, test) = make_generalization_splits(&by_dataset, &args.held_out)?;
    let kg = snapshot(cfg)?;
    let (entities, predicates) = indexes(cfg, &kg)?;
    let n = args.n_distractors.unwrap_or(cfg.n_distractors);

    let (path, mut w) = create(cfg, "train.jsonl")?;
    let stats = augment_training_pairs(&train, &entities, &predicates, n, cfg.seed, &mut w)?;
    finish(&path, w)?;
    let (path, mut w) = create(cfg, "test.jsonl")?;
    for ex in &test {
        writeln!(w, "{}", dataset_line(ex))
            .or_fail(Kind::Data, format!("writing {}", path.display()))?;
    }
    finish(&path, w)?;
    out.line(format!(
        "held out {}: {} training pairs ({} skipped), {} test examples",
        args.held_out,
        stats.written,
        stats.skipped,
        test.len()
    ))
}

fn augment_train(cfg: &RunConfig, args: AugmentArgs, out: &mut Printer) -> Outcome<()> {
    let wanted = |s: Split| match args.split {
        SplitChoice::All => true,
        SplitChoice::Train => s == Split::Train,
        SplitChoice::Test => s == Split::Test,
    };
    let exs: Vec<QaExample> = examples(cfg, &args.data.datasets)?
        .into_iter()
        .filter(|e| wanted(e.split))
        .collect();
    let kg = snapshot(cfg)?;
    let (entities, predicates) = indexes(cfg, &kg)?;
    let n = args.n_distractors.unwrap_or(cfg.n_distractors);
    let (path, mut w) = create(cfg, "train_augmented.jsonl")?;
    let stats = augment_training_pairs(&exs, &entities, &predicates, n, cfg.seed, &mut w)?;
    finish(&path, w)?;
    for id in &stats.skipped_ids {
        warn!("skipped {id}: a gold id is not indexed");
    }
    out.line(format!(
        "{} training pairs, {} skipped",
        stats.written, stats.skipped
    ))
}
