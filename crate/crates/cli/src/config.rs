//! Run configuration: flags over a JSON file over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use kgqa_core::client::ReasonerClientConfig;
use kgqa_core::evaluation::PipelineConfig;
use kgqa_core::generation::DEFAULT_N_DISTRACTORS;
use kgqa_core::kgstore::DEFAULT_MIN_DEGREE;
use kgqa_core::retrieval::{preset, Bm25Params, CatalogKind};
use kgqa_core::sparql::EndpointConfig;
use serde::Deserialize;

use crate::args::{CommonArgs, ExecutorChoice};
use crate::error::{Classify, Failure, Kind, Outcome};

pub const DEFAULT_OUT: &str = "kgqa-out";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotPaths {
    pub entities: PathBuf,
    pub predicates: PathBuf,
    pub triples: PathBuf,
}

/// The JSON document accepted by `--config`. Relative paths resolve against
/// the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub snapshot: Option<SnapshotPaths>,
    pub index_dir: Option<PathBuf>,
    pub datasets: Vec<PathBuf>,
    pub preset: Option<String>,
    pub entity_bm25: Option<Bm25Params>,
    pub predicate_bm25: Option<Bm25Params>,
    pub min_degree: Option<usize>,
    pub executor: Option<ExecutorChoice>,
    pub endpoint: Option<EndpointConfig>,
    pub reasoner: Option<ReasonerClientConfig>,
    pub pipeline: Option<PipelineConfig>,
    pub fewshot: Option<PathBuf>,
    pub n_distractors: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = fs::read_to_string(path)
            .or_fail(Kind::Config, format!("reading {}", path.display()))?;
        let mut cfg: FileConfig = serde_json::from_str(&text)
            .or_fail(Kind::Config, format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(s) = &mut self.snapshot {
            fix(&mut s.entities);
            fix(&mut s.predicates);
            fix(&mut s.triples);
        }
        self.index_dir.as_mut().map(fix);
        self.datasets.iter_mut().for_each(fix);
        self.fewshot.as_mut().map(fix);
        self.out.as_mut().map(fix);
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// `None` selects the bundled toy graph.
    pub snapshot: Option<SnapshotPaths>,
    pub index_dir: Option<PathBuf>,
    pub datasets: Vec<PathBuf>,
    pub entity_params: Bm25Params,
    pub predicate_params: Bm25Params,
    pub min_degree: usize,
    pub executor: ExecutorChoice,
    pub endpoint: EndpointConfig,
    pub reasoner: ReasonerClientConfig,
    pub pipeline: PipelineConfig,
    pub fewshot: Option<PathBuf>,
    pub n_distractors: usize,
    pub seed: u64,
    pub out: PathBuf,
}

fn snapshot_from_flags(args: &CommonArgs) -> Outcome<Option<SnapshotPaths>> {
    match (
        &args.entities_file,
        &args.predicates_file,
        &args.triples_file,
    ) {
        (None, None, None) => Ok(None),
        (Some(e), Some(p), Some(t)) => Ok(Some(SnapshotPaths {
            entities: e.clone(),
            predicates: p.clone(),
            triples: t.clone(),
        })),
        _ => Err(Failure::config(
            "--entities-file, --predicates-file and --triples-file must be given together",
        )),
    }
}

fn apply_preset(name: &str, entity: &mut Bm25Params, predicate: &mut Bm25Params) -> Outcome<()> {
    let p = preset(name)?;
    *entity = p.params(CatalogKind::Entity);
    *predicate = p.params(CatalogKind::Predicate);
    Ok(())
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Outcome<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Self::merge(file, args)
    }

    pub fn merge(file: FileConfig, args: &CommonArgs) -> Outcome<Self> {
        let mut entity = Bm25Params::default();
        let mut predicate = Bm25Params::default();
        if let Some(name) = &file.preset {
            apply_preset(name, &mut entity, &mut predicate)?;
        }
        entity = file.entity_bm25.unwrap_or(entity);
        predicate = file.predicate_bm25.unwrap_or(predicate);
        if let Some(name) = &args.preset {
            apply_preset(name, &mut entity, &mut predicate)?;
        }
        entity.k1 = args.entity_k1.unwrap_or(entity.k1);
        entity.b = args.entity_b.unwrap_or(entity.b);
        predicate.k1 = args.predicate_k1.unwrap_or(predicate.k1);
        predicate.b = args.predicate_b.unwrap_or(predicate.b);
        entity.validate()?;
        predicate.validate()?;

        let mut endpoint = file.endpoint.unwrap_or_default();
        if let Some(url) = &args.endpoint {
            endpoint.url = url.clone();
        }
        let reasoner = file.reasoner.unwrap_or_default();
        let pipeline = file.pipeline.unwrap_or_default();
        if pipeline.workers == 0 {
            return Err(Failure::config("pipeline.workers must be at least 1"));
        }

        Ok(Self {
            snapshot: snapshot_from_flags(args)?.or(file.snapshot),
            index_dir: args.index_dir.clone().or(file.index_dir),
            datasets: file.datasets,
            entity_params: entity,
            predicate_params: predicate,
            min_degree: args
                .min_degree
                .or(file.min_degree)
                .unwrap_or(DEFAULT_MIN_DEGREE),
            executor: args
                .executor
                .or(file.executor)
                .unwrap_or(ExecutorChoice::Local),
            endpoint,
            reasoner,
            pipeline,
            fewshot: args.fewshot.clone().or(file.fewshot),
            n_distractors: file.n_distractors.unwrap_or(DEFAULT_N_DISTRACTORS),
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgqa_core::disambiguation::DisambiguatorKind;

    fn file(json: &str) -> FileConfig {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn defaults_without_config() {
        let cfg = RunConfig::merge(FileConfig::default(), &CommonArgs::default()).unwrap();
        assert_eq!(cfg.entity_params, Bm25Params::default());
        assert_eq!(cfg.min_degree, 10);
        assert_eq!(cfg.executor, ExecutorChoice::Local);
        assert_eq!(cfg.out, PathBuf::from("kgqa-out"));
        assert!(cfg.snapshot.is_none());
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let f = file(
            r#"{"preset": "pat", "seed": 7, "min_degree": 3, "pipeline": {"disambiguator": "oracle-gold"}}"#,
        );
        let args = CommonArgs {
            seed: Some(9),
            entity_k1: Some(0.5),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::merge(f, &args).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.min_degree, 3);
        assert_eq!(cfg.entity_params, Bm25Params { k1: 0.5, b: 0.7 });
        assert_eq!(cfg.predicate_params, Bm25Params { k1: 0.1, b: 0.01 });
        assert_eq!(cfg.pipeline.disambiguator, DisambiguatorKind::OracleGold);
        assert_eq!(cfg.pipeline.entity_top_k, 100);
    }

    #[test]
    fn flag_preset_overrides_file_params() {
        let f = file(r#"{"entity_bm25": {"k1": 9.0, "b": 0.5}}"#);
        let args = CommonArgs {
            preset: Some("qald10".into()),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::merge(f, &args).unwrap();
        assert_eq!(cfg.entity_params, Bm25Params { k1: 2.95, b: 0.2 });
        assert_eq!(cfg.predicate_params, Bm25Params { k1: 5.18, b: 0.01 });
    }

    #[test]
    fn bad_values_are_config_errors() {
        let args = CommonArgs {
            preset: Some("nope".into()),
            ..CommonArgs::default()
        };
        assert_eq!(
            RunConfig::merge(FileConfig::default(), &args)
                .unwrap_err()
                .kind,
            Kind::Config
        );
        let args = CommonArgs {
            entity_b: Some(1.5),
            ..CommonArgs::default()
        };
        assert_eq!(
            RunConfig::merge(FileConfig::default(), &args)
                .unwrap_err()
                .kind,
            Kind::Config
        );
        let args = CommonArgs {
            entities_file: Some("e.jsonl".into()),
            ..CommonArgs::default()
        };
        assert_eq!(
            RunConfig::merge(FileConfig::default(), &args)
                .unwrap_err()
                .kind,
            Kind::Config
        );
        assert!(serde_json::from_str::<FileConfig>(r#"{"seeds": 1}"#).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"snapshot": {"entities": "kg/e.jsonl", "predicates": "kg/p.jsonl", "triples": "/abs/t.tsv"},
                "datasets": ["q.jsonl"], "endpoint": {"url": "http://localhost:1/sparql"}}"#,
        )
        .unwrap();
        let cfg = FileConfig::load(&path).unwrap();
        let snap = cfg.snapshot.unwrap();
        assert_eq!(snap.entities, dir.path().join("kg/e.jsonl"));
        assert_eq!(snap.triples, PathBuf::from("/abs/t.tsv"));
        assert_eq!(cfg.datasets, vec![dir.path().join("q.jsonl")]);
        let endpoint = cfg.endpoint.unwrap();
        assert_eq!(endpoint.url, "http://localhost:1/sparql");
        assert_eq!(endpoint.retries, EndpointConfig::default().retries);
    }
}
