//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use kgqa_core::disambiguation::DisambiguatorKind;
use kgqa_core::evaluation::{
    evaluate_end_to_end, score_sets, PipelineConfig, PipelineResources, QaExample, Split,
};
use kgqa_core::generation::GeneratorKind;
use kgqa_core::guard::{
    check_entity_mismatch, rejection_report, write_rejection_csv, Stage, REJECTION_CSV_HEADER,
};
use kgqa_core::kgstore::{
    EntityRecord, PredicateRecord, Snapshot, Term, Triple, DEFAULT_MIN_DEGREE,
};
use kgqa_core::retrieval::{
    entity_index, predicate_index, preset, Bm25Params, CatalogDoc, CatalogKind, Index, PRESETS,
};
use kgqa_core::sparql::{
    execute_local, parse, AnswerSet, LocalExecutor, PatternTerm, QueryAst, QueryForm, TriplePattern,
};
use kgqa_core::toy;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

type Outcome = Result<String, String>;

/// Name, time limit in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

// ---------------------------------------------------------------- metrics

fn ids(xs: impl IntoIterator<Item = usize>) -> BTreeSet<String> {
    xs.into_iter().map(|i| format!("Q{i}")).collect()
}

/// `(gold, predicted, p, r, f1, acc)` rows. Grid rows use overlapping id
/// ranges whose intersection size is known in closed form.
fn metric_table() -> Vec<(BTreeSet<String>, BTreeSet<String>, [f64; 4])> {
    let mut rows = vec![
        (ids([1, 2]), ids([1, 2]), [1.0, 1.0, 1.0, 1.0]),
        (ids([1, 2]), ids([1, 2, 3]), [2.0 / 3.0, 1.0, 0.8, 1.0]),
        (ids([1, 2]), ids([3]), [0.0, 0.0, 0.0, 0.0]),
        (ids([]), ids([]), [1.0, 1.0, 1.0, 1.0]),
        (ids([]), ids([1]), [0.0; 4]),
        (ids([1]), ids([]), [0.0; 4]),
    ];
    'grid: for g in 1..=5usize {
        for h in 1..=5usize {
            for shift in [0usize, 1, 3] {
                if rows.len() == 50 {
                    break 'grid;
                }
                let gold = ids(1..=g);
                let pred = ids(1 + shift..=shift + h);
                let c = g.min(shift + h).saturating_sub(shift) as f64;
                let (g, h) = (g as f64, h as f64);
                let acc = if c == g { 1.0 } else { 0.0 };
                rows.push((gold, pred, [c / h, c / g, 2.0 * c / (g + h), acc]));
            }
        }
    }
    rows
}

fn random_ids(rng: &mut ChaCha8Rng, max_len: usize) -> BTreeSet<String> {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| format!("Q{}", rng.random_range(0..12)))
        .collect()
}

fn criterion_metrics() -> Outcome {
    let table = metric_table();
    ensure(table.len() == 50, || {
        format!("table has {} rows", table.len())
    })?;
    for (i, (gold, pred, want)) in table.iter().enumerate() {
        let m = score_sets(gold, pred);
        let got = [m.precision, m.recall, m.f1, m.acc_at_1];
        ensure(got.iter().zip(want).all(|(a, b)| close(*a, *b)), || {
            format!("row {i}: {gold:?} vs {pred:?} gave {got:?}, want {want:?}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..10_000 {
        let (a, b) = (random_ids(&mut rng, 6), random_ids(&mut rng, 6));
        let ab = score_sets(&a, &b);
        let ba = score_sets(&b, &a);
        ensure(
            close(ab.precision, ba.recall) && close(ab.recall, ba.precision) && close(ab.f1, ba.f1),
            || format!("pair {i}: symmetry fails for {a:?} / {b:?}"),
        )?;
        if a.is_empty() {
            continue;
        }
        let common = a.intersection(&b).count();
        ensure((ab.f1 == 0.0) == (common == 0), || {
            format!("pair {i}: f1={} with |C|={common}", ab.f1)
        })?;
        ensure((ab.acc_at_1 == 1.0) == (ab.recall == 1.0), || {
            format!("pair {i}: acc={} recall={}", ab.acc_at_1, ab.recall)
        })?;
    }
    Ok("50 table rows, 10000 random pairs".into())
}

// ---------------------------------------------------------------- BM25

const VOCAB: [&str; 12] = [
    "river", "city", "film", "actor", "capital", "valley", "north", "song", "band", "war", "king",
    "island",
];

fn random_words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<&'static str> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect()
}

/// Exhaustive scorer: counts every statistic by scanning the raw corpus.
fn brute_bm25(
    corpus: &[(String, Vec<&str>)],
    query: &[&str],
    p: Bm25Params,
    k: usize,
) -> Vec<(String, f64)> {
    let n = corpus.len() as f64;
    let total: usize = corpus.iter().map(|(_, d)| d.len()).sum();
    let avg = total as f64 / n;
    let mut scored: Vec<(String, f64)> = corpus
        .iter()
        .map(|(id, doc)| {
            let mut s = 0.0;
            for q in query {
                let tf = doc.iter().filter(|w| *w == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = corpus.iter().filter(|(_, d)| d.contains(q)).count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                let norm = 1.0 - p.b + p.b * doc.len() as f64 / avg;
                s += idf * tf * (p.k1 + 1.0) / (tf + p.k1 * norm);
            }
            (id.clone(), s)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

fn doc(id: &str, text: &str) -> CatalogDoc {
    CatalogDoc {
        id: id.into(),
        label: text.into(),
        description: String::new(),
        aliases: vec![],
    }
}

fn criterion_bm25_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for c in 0..100 {
        let n_docs = rng.random_range(1..=50);
        let corpus: Vec<(String, Vec<&str>)> = (0..n_docs)
            .map(|i| (format!("Q{}", i + 1), random_words(&mut rng, 1, 8)))
            .collect();
        let params =
            Bm25Params::new(rng.random_range(0.1..3.0), rng.random_range(0.0..=1.0)).unwrap();
        let index = Index::build(
            corpus.iter().map(|(id, words)| doc(id, &words.join(" "))),
            CatalogKind::Entity,
            params,
            None,
        )
        .map_err(|e| e.to_string())?;
        for q in 0..10 {
            let query = random_words(&mut rng, 1, 4);
            let want = brute_bm25(&corpus, &query, params, 10);
            let got = index.search(&query.join(" "), 10);
            let got_ids: Vec<&str> = got.ids().collect();
            let want_ids: Vec<&str> = want.iter().map(|(id, _)| id.as_str()).collect();
            ensure(got_ids == want_ids, || {
                format!("corpus {c} query {q} {query:?}: got {got_ids:?}, want {want_ids:?}")
            })?;
            for (h, (_, s)) in got.hits.iter().zip(&want) {
                ensure(close(h.score, *s), || {
                    format!("corpus {c} query {q}: score {} vs {s}", h.score)
                })?;
            }
        }
    }
    Ok("100 corpora x 10 queries".into())
}

fn criterion_presets() -> Outcome {
    let expected = [
        ("qald10", (2.95, 0.2), (5.18, 0.01)),
        ("lcquad2", (2.45, 0.2), (2.95, 0.01)),
        ("rubq2", (1.39, 0.4), (2.0, 0.01)),
        ("pat", (1.0, 0.7), (0.1, 0.01)),
    ];
    ensure(PRESETS.len() == expected.len(), || {
        format!("{} presets", PRESETS.len())
    })?;
    for (name, e, p) in expected {
        let got = preset(name).map_err(|e| e.to_string())?;
        let want = (
            Bm25Params { k1: e.0, b: e.1 },
            Bm25Params { k1: p.0, b: p.1 },
        );
        ensure(
            (
                got.params(CatalogKind::Entity),
                got.params(CatalogKind::Predicate),
            ) == want,
            || format!("{name}: {got:?}"),
        )?;
    }
    let qald = preset("qald10").unwrap().params(CatalogKind::Entity);
    let pat = preset("pat").unwrap().params(CatalogKind::Predicate);
    ensure(
        (qald.k1, qald.b) == (2.95, 0.2) && (pat.k1, pat.b) == (0.1, 0.01),
        || "spot check".into(),
    )?;

    // N=3, df=2, avgdl=2. Q2: dl=1, norm=0.625, score = ln(1.6)*2.2/1.75.
    let index = Index::build(
        [
            doc("Q1", "paris france"),
            doc("Q2", "paris"),
            doc("Q3", "london england city"),
        ],
        CatalogKind::Entity,
        Bm25Params { k1: 1.2, b: 0.75 },
        None,
    )
    .map_err(|e| e.to_string())?;
    let hits = index.search("paris", 10);
    let q2 = hits
        .hits
        .iter()
        .find(|h| h.id == "Q2")
        .ok_or("Q2 not retrieved")?;
    ensure(close(q2.score, 0.590_861_705_337_496_3), || {
        format!("Q2 scored {}", q2.score)
    })?;
    let q1 = hits
        .hits
        .iter()
        .find(|h| h.id == "Q1")
        .ok_or("Q1 not retrieved")?;
    ensure(close(q1.score, 0.470_003_629_245_735_6), || {
        format!("Q1 scored {}", q1.score)
    })?;
    ensure(hits.len() == 2 && hits.hits[0].id == "Q2", || {
        format!("{hits:?}")
    })?;
    Ok(format!("8 pairs verbatim, hand score {:.12}", q2.score))
}

// ---------------------------------------------------------------- graphs

fn qid(i: usize) -> String {
    format!("Q{}", i + 1)
}

fn pid(i: usize) -> String {
    format!("P{}", i + 1)
}

fn lit(i: usize) -> String {
    format!("v{i}")
}

fn build_kg(n_ent: usize, n_pred: usize, triples: &[(String, String, Term)]) -> Snapshot {
    let entities = (0..n_ent)
        .map(|i| EntityRecord {
            id: qid(i),
            label: format!("entity {i}"),
            description: String::new(),
            aliases: vec![],
            degree: 0,
        })
        .collect();
    let predicates = (0..n_pred)
        .map(|i| PredicateRecord {
            id: pid(i),
            label: format!("predicate {i}"),
            description: String::new(),
        })
        .collect();
    let triples = triples
        .iter()
        .map(|(s, p, o)| Triple::new(s.clone(), p.clone(), o.clone()))
        .collect();
    Snapshot::from_parts(entities, predicates, triples).unwrap()
}

fn random_triple(
    rng: &mut ChaCha8Rng,
    n_ent: usize,
    n_pred: usize,
    n_lit: usize,
) -> (String, String, Term) {
    let s = qid(rng.random_range(0..n_ent));
    let p = pid(rng.random_range(0..n_pred));
    let o = if n_lit > 0 && rng.random_bool(0.2) {
        Term::Literal(lit(rng.random_range(0..n_lit)))
    } else {
        Term::Entity(qid(rng.random_range(0..n_ent)))
    };
    (s, p, o)
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, make: fn(usize) -> String) -> BTreeSet<String> {
    (0..n).filter(|_| rng.random_bool(0.3)).map(make).collect()
}

/// True unless some triple with a predicate in `r` touches an entity in `e`.
fn brute_mismatch(
    triples: &[(String, String, Term)],
    e: &BTreeSet<String>,
    r: &BTreeSet<String>,
) -> bool {
    !triples.iter().any(|(s, p, o)| {
        r.contains(p) && (e.contains(s) || matches!(o, Term::Entity(o) if e.contains(o)))
    })
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn criterion_entity_mismatch() -> Outcome {
    let (n_ent, n_pred) = (12, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..1000 {
        let n = rng.random_range(0..=100);
        let triples: Vec<_> = (0..n)
            .map(|_| random_triple(&mut rng, n_ent, n_pred, 3))
            .collect();
        let kg = build_kg(n_ent, n_pred, &triples);
        let e = random_subset(&mut rng, n_ent, qid);
        let r = random_subset(&mut rng, n_pred, pid);
        let want = brute_mismatch(&triples, &e, &r);
        ensure(check_entity_mismatch(&kg, &e, &r) == want, || {
            format!("trial {t}: E={e:?} R={r:?} want {want}")
        })?;
    }

    let kg = build_kg(
        3,
        9,
        &[("Q1".into(), "P1".into(), Term::Entity("Q2".into()))],
    );
    ensure(
        !check_entity_mismatch(&kg, &set(&["Q1"]), &set(&["P1"])),
        || "connected pair flagged".into(),
    )?;
    ensure(
        check_entity_mismatch(&kg, &set(&["Q1"]), &set(&["P9"])),
        || "disconnected pair accepted".into(),
    )?;
    let kg = build_kg(
        3,
        9,
        &[
            ("Q1".into(), "P1".into(), Term::Entity("Q2".into())),
            ("Q3".into(), "P9".into(), Term::Literal("x".into())),
        ],
    );
    ensure(
        !check_entity_mismatch(&kg, &set(&["Q1", "Q3"]), &set(&["P9"])),
        || "one connected entity should suffice".into(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for t in 0..1000 {
        let n = rng.random_range(0..=60);
        let mut triples: Vec<_> = (0..n)
            .map(|_| random_triple(&mut rng, n_ent, n_pred, 3))
            .collect();
        let e = random_subset(&mut rng, n_ent, qid);
        let r = random_subset(&mut rng, n_pred, pid);
        let before = check_entity_mismatch(&build_kg(n_ent, n_pred, &triples), &e, &r);
        triples.push(random_triple(&mut rng, n_ent, n_pred, 3));
        let after = check_entity_mismatch(&build_kg(n_ent, n_pred, &triples), &e, &r);
        ensure(before || !after, || {
            format!("trial {t}: adding a triple created a mismatch")
        })?;
    }
    Ok("1000 oracle KGs, 3 contrast cases, 1000 monotonicity trials".into())
}

// ---------------------------------------------------------------- executor

const VARS: [&str; 3] = ["x", "y", "z"];

fn random_query(rng: &mut ChaCha8Rng, n_ent: usize, n_pred: usize, n_lit: usize) -> QueryAst {
    let n_vars = rng.random_range(1..=3);
    let var =
        |rng: &mut ChaCha8Rng| PatternTerm::Var(VARS[rng.random_range(0..n_vars)].to_string());
    let n_patterns = rng.random_range(1..=3);
    let patterns: Vec<TriplePattern> = (0..n_patterns)
        .map(|_| {
            let s = if rng.random_bool(0.6) {
                var(rng)
            } else {
                PatternTerm::Entity(qid(rng.random_range(0..n_ent)))
            };
            let p = if rng.random_bool(0.25) {
                var(rng)
            } else {
                PatternTerm::Predicate(pid(rng.random_range(0..n_pred)))
            };
            let o = match rng.random_range(0..10) {
                0..=4 => var(rng),
                5..=8 => PatternTerm::Entity(qid(rng.random_range(0..n_ent))),
                _ => PatternTerm::Literal(lit(rng.random_range(0..n_lit))),
            };
            // The parser rejects patterns with three variables.
            let p = if s.is_var() && p.is_var() && o.is_var() {
                PatternTerm::Predicate(pid(rng.random_range(0..n_pred)))
            } else {
                p
            };
            TriplePattern::new(s, p, o)
        })
        .collect();
    let mut ast = QueryAst {
        form: QueryForm::Ask,
        patterns,
        limit: None,
    };
    let vars: Vec<String> = ast.pattern_vars().into_iter().map(String::from).collect();
    if vars.is_empty() {
        return ast;
    }
    ast.form = match rng.random_range(0..4) {
        0 => QueryForm::Ask,
        1 => QueryForm::Count {
            distinct: rng.random_bool(0.5),
            var: vars.choose(rng).unwrap().clone(),
            alias: "n".into(),
        },
        _ => {
            let mut projection: Vec<String> = vars
                .iter()
                .filter(|_| rng.random_bool(0.6))
                .cloned()
                .collect();
            if projection.is_empty() {
                projection.push(vars[0].clone());
            }
            if rng.random_bool(0.3) {
                ast.limit = Some(rng.random_range(1..5));
            }
            QueryForm::Select {
                distinct: rng.random_bool(0.5),
                projection,
            }
        }
    };
    ast
}

/// Tries every assignment of the query variables over all graph values.
fn brute_execute(
    ast: &QueryAst,
    triples: &HashSet<(String, String, String)>,
    domain: &[String],
) -> AnswerSet {
    let vars: Vec<&str> = ast.pattern_vars();
    let value = |t: &PatternTerm, assignment: &[usize]| -> String {
        match t {
            PatternTerm::Var(v) => {
                domain[assignment[vars.iter().position(|w| w == v).unwrap()]].clone()
            }
            PatternTerm::Entity(s) | PatternTerm::Predicate(s) | PatternTerm::Literal(s) => {
                s.clone()
            }
        }
    };
    let mut solutions: Vec<Vec<usize>> = Vec::new();
    let mut assignment = vec![0usize; vars.len()];
    loop {
        let holds = ast.patterns.iter().all(|p| {
            triples.contains(&(
                value(&p.subject, &assignment),
                value(&p.predicate, &assignment),
                value(&p.object, &assignment),
            ))
        });
        if holds {
            solutions.push(assignment.clone());
        }
        // Odometer increment; stops after the last assignment.
        let mut i = 0;
        while i < assignment.len() {
            assignment[i] += 1;
            if assignment[i] < domain.len() {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
        if i == assignment.len() {
            break;
        }
    }
    let column =
        |v: &str, s: &[usize]| domain[s[vars.iter().position(|w| *w == v).unwrap()]].clone();
    match &ast.form {
        QueryForm::Ask => AnswerSet::boolean(!solutions.is_empty()),
        QueryForm::Count { distinct, var, .. } => {
            let n = if *distinct {
                solutions
                    .iter()
                    .map(|s| column(var, s))
                    .collect::<BTreeSet<_>>()
                    .len()
            } else {
                solutions.len()
            };
            AnswerSet::from_terms([n.to_string()])
        }
        QueryForm::Select {
            distinct,
            projection,
        } => {
            let mut rows: Vec<Vec<String>> = solutions
                .iter()
                .map(|s| projection.iter().map(|v| column(v, s)).collect())
                .collect();
            rows.sort();
            if *distinct {
                rows.dedup();
            }
            if let Some(n) = ast.limit {
                rows.truncate(n as usize);
            }
            AnswerSet::from_rows(rows, projection.len())
        }
    }
}

fn criterion_executor() -> Outcome {
    let (n_ent, n_pred, n_lit) = (6, 3, 2);
    let domain: Vec<String> = (0..n_ent)
        .map(qid)
        .chain((0..n_pred).map(pid))
        .chain((0..n_lit).map(lit))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut non_empty = 0;
    for t in 0..1000 {
        let n = rng.random_range(0..=25);
        let triples: Vec<_> = (0..n)
            .map(|_| random_triple(&mut rng, n_ent, n_pred, n_lit))
            .collect();
        let kg = build_kg(n_ent, n_pred, &triples);
        let facts: HashSet<(String, String, String)> = triples
            .iter()
            .map(|(s, p, o)| (s.clone(), p.clone(), o.as_str().to_string()))
            .collect();
        let ast = random_query(&mut rng, n_ent, n_pred, n_lit);
        let want = brute_execute(&ast, &facts, &domain);
        let got = execute_local(&ast, &kg)
            .map_err(|e| format!("trial {t}: {} failed: {e}", ast.render()))?;
        ensure(got == want, || {
            format!("trial {t}: {} gave {got:?}, want {want:?}", ast.render())
        })?;
        non_empty +=
            usize::from(!got.is_empty() && got.truth != Some(false) && !got.terms.contains("0"));
    }
    ensure(non_empty >= 100, || {
        format!("only {non_empty} trials had answers")
    })?;

    let kg = build_kg(
        3,
        1,
        &[
            ("Q1".into(), "P1".into(), Term::Entity("Q2".into())),
            ("Q2".into(), "P1".into(), Term::Entity("Q3".into())),
        ],
    );
    let run = |q: &str, kg: &Snapshot| -> Result<BTreeSet<String>, String> {
        let ast = parse(q).map_err(|e| e.to_string())?;
        Ok(execute_local(&ast, kg)
            .map_err(|e| e.to_string())?
            .comparison_terms())
    };
    let two_hop = run("SELECT ?x WHERE { wd:Q1 wdt:P1 ?y . ?y wdt:P1 ?x }", &kg)?;
    ensure(two_hop == set(&["Q3"]), || {
        format!("2-hop gave {two_hop:?}")
    })?;
    let kg = build_kg(
        3,
        1,
        &[
            ("Q1".into(), "P1".into(), Term::Entity("Q2".into())),
            ("Q3".into(), "P1".into(), Term::Entity("Q2".into())),
        ],
    );
    let count = run("SELECT (COUNT(?x) AS ?c) WHERE { ?x wdt:P1 wd:Q2 }", &kg)?;
    ensure(count == set(&["2"]), || format!("COUNT gave {count:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for t in 0..500 {
        let ast = random_query(&mut rng, 40, 20, 5);
        let text = ast.render();
        let back = parse(&text).map_err(|e| format!("ast {t}: {text} does not parse: {e}"))?;
        ensure(back == ast && back.render() == text, || {
            format!("ast {t}: {text} is not a fixed point")
        })?;
    }
    Ok(format!(
        "1000 random (KG, query) pairs ({non_empty} with answers), 2-hop, COUNT, 500 round trips"
    ))
}

// ---------------------------------------------------------------- end to end

struct Toy {
    kg: Arc<Snapshot>,
    entities: Index,
    predicates: Index,
    exec: LocalExecutor,
}

impl Toy {
    fn new() -> Self {
        let kg = Arc::new(toy::snapshot());
        let p = preset("rubq2").unwrap();
        Self {
            entities: entity_index(&kg, p.params(CatalogKind::Entity), DEFAULT_MIN_DEGREE).unwrap(),
            predicates: predicate_index(&kg, p.params(CatalogKind::Predicate)).unwrap(),
            exec: LocalExecutor::new(kg.clone()),
            kg,
        }
    }

    fn resources(&self) -> PipelineResources<'_> {
        PipelineResources {
            snapshot: &self.kg,
            entity_index: &self.entities,
            predicate_index: &self.predicates,
            executor: &self.exec,
            chat: None,
            fewshot: &[],
        }
    }
}

fn oracle_config(diagnose: bool) -> PipelineConfig {
    PipelineConfig {
        disambiguator: DisambiguatorKind::OracleGold,
        generator: GeneratorKind::GoldPassthrough,
        workers: 4,
        diagnose,
        ..PipelineConfig::default()
    }
}

const DANGLING: &str = "P999999";

fn criterion_end_to_end() -> Outcome {
    let toy = Toy::new();
    let mut qs = toy::questions();
    ensure(qs.len() == 20, || format!("{} toy questions", qs.len()))?;
    let clean = evaluate_end_to_end(&qs, &oracle_config(false), &toy.resources())
        .map_err(|e| e.to_string())?;
    let s = &clean.summaries[0];
    ensure(
        s.f1 == 1.0 && s.acc_at_1 == 1.0 && s.rejected_pct == 0.0,
        || format!("clean run: {s:?}"),
    )?;

    // Swap one predicate of five SELECT gold queries for one absent from the
    // graph, keeping the cached gold answers of the original.
    let mut corrupted = Vec::new();
    for q in qs.iter_mut() {
        if corrupted.len() == 5 {
            break;
        }
        let ast = parse(&q.gold_query).map_err(|e| e.to_string())?;
        if !matches!(ast.form, QueryForm::Select { .. }) {
            continue;
        }
        let Some(p) = ast.predicates().into_iter().next().map(String::from) else {
            continue;
        };
        q.gold_answers = Some(execute_local(&ast, &toy.kg).map_err(|e| e.to_string())?);
        q.gold_query = q
            .gold_query
            .replace(&format!("wdt:{p} "), &format!("wdt:{DANGLING} "));
        corrupted.push(q.id.clone());
    }
    ensure(corrupted.len() == 5, || {
        "not enough SELECT questions to corrupt".into()
    })?;
    let report = evaluate_end_to_end(&qs, &oracle_config(false), &toy.resources())
        .map_err(|e| e.to_string())?;
    let s = &report.summaries[0];
    ensure(close(s.f1, 0.75), || format!("corrupted run F1 {}", s.f1))?;
    let rejected: Vec<_> = report
        .outcomes
        .iter()
        .filter(|o| !o.verdict.accepted)
        .collect();
    ensure(rejected.len() == 5, || {
        format!("{} rejections", rejected.len())
    })?;
    for o in &rejected {
        ensure(corrupted.contains(&o.id), || {
            format!("{} rejected but not corrupted", o.id)
        })?;
        ensure(
            matches!(
                o.verdict.stage,
                Stage::PreGenerationFilter | Stage::EmptyResult
            ),
            || format!("{} rejected at {}", o.id, o.verdict.stage),
        )?;
    }
    Ok(format!(
        "clean F1=1 Acc@1=1 0% rejected; corrupted F1={:.2}, 5 rejections",
        s.f1
    ))
}

// ---------------------------------------------------------------- rejection

/// The question names the entity and predicate so retrieval offers both to
/// the gold-oracle disambiguator.
fn synthetic_example(
    kg: &Snapshot,
    id: usize,
    e: &str,
    r: &str,
    query: String,
    gold: AnswerSet,
) -> QaExample {
    let label = |x: Option<&str>| x.unwrap_or_default().to_string();
    QaExample {
        id: format!("syn-{id:03}"),
        question: format!(
            "{} {}",
            label(kg.entity(e).map(|x| x.label.as_str())),
            label(kg.predicate(r).map(|x| x.label.as_str()))
        ),
        gold_query: query,
        gold_entities: set(&[e]),
        gold_predicates: set(&[r]),
        gold_answers: Some(gold),
        answer_labels: None,
        dataset: "synthetic".into(),
        split: Split::Test,
    }
}

fn criterion_rejection() -> Outcome {
    let toy = Toy::new();
    let kg = &toy.kg;
    let edges: Vec<&Triple> = kg
        .triples()
        .iter()
        .filter(|t| matches!(t.object, Term::Entity(_)) && toy.entities.contains(&t.subject))
        .collect();
    let predicate_ids: Vec<&str> = kg.predicates().iter().map(|p| p.id.as_str()).collect();
    let select = |s: &str, p: &str| format!("SELECT ?x WHERE {{ wd:{s} wdt:{p} ?x }}");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut examples = Vec::new();
    let mut corrupted = HashSet::new();
    let mut disconnected = 0;
    for i in 0..200 {
        let t = edges.choose(&mut rng).unwrap();
        let gold = toy.exec_answers(&select(&t.subject, &t.predicate))?;
        if i % 2 == 0 {
            examples.push(synthetic_example(
                kg,
                i,
                &t.subject,
                &t.predicate,
                select(&t.subject, &t.predicate),
                gold,
            ));
            continue;
        }
        let profile = kg.relations_or_empty(&t.subject);
        let unrelated: Vec<&str> = predicate_ids
            .iter()
            .copied()
            .filter(|p| !profile.all().contains(p))
            .collect();
        let ex = match unrelated.choose(&mut rng) {
            Some(p) if rng.random_bool(0.5) => {
                disconnected += 1;
                synthetic_example(kg, i, &t.subject, p, select(&t.subject, p), gold)
            }
            _ => synthetic_example(
                kg,
                i,
                &t.subject,
                &t.predicate,
                select(&t.subject, DANGLING),
                gold,
            ),
        };
        corrupted.insert(ex.id.clone());
        examples.push(ex);
    }
    let report = evaluate_end_to_end(&examples, &oracle_config(true), &toy.resources())
        .map_err(|e| e.to_string())?;
    let observations: Vec<_> = report
        .outcomes
        .iter()
        .map(|o| o.rejection_observation())
        .collect();
    let rows = rejection_report(&observations);
    ensure(rows.len() == 1, || format!("{} rows", rows.len()))?;
    let row = &rows[0];
    ensure(row.execution.incorrect == corrupted.len(), || {
        format!(
            "{} incorrect for {} corrupted",
            row.execution.incorrect,
            corrupted.len()
        )
    })?;
    let caught = row.filtering_and_execution.caught().unwrap_or(0.0);
    ensure(caught >= 95.0, || {
        format!("filtering_and_execution caught {caught:.1}%")
    })?;

    let false_rejections = report
        .outcomes
        .iter()
        .zip(&observations)
        .filter(|(o, obs)| {
            (obs.filter_mismatch || obs.execution_rejected) && !o.raw_answers.is_empty()
        })
        .count();
    ensure(false_rejections == 0, || {
        let o = report
            .outcomes
            .iter()
            .find(|o| !o.verdict.accepted && !o.raw_answers.is_empty())
            .unwrap();
        format!(
            "{false_rejections} non-empty queries rejected, e.g. {} at {}: {}",
            o.id, o.verdict.stage, o.verdict.detail
        )
    })?;

    let mut csv = Vec::new();
    write_rejection_csv(&rows, &mut csv).map_err(|e| e.to_string())?;
    let csv = String::from_utf8(csv).map_err(|e| e.to_string())?;
    let header = csv.lines().next().unwrap_or_default();
    ensure(header == REJECTION_CSV_HEADER.join(","), || {
        format!("header {header}")
    })?;
    Ok(format!(
        "{} cases, {} corrupted ({disconnected} disconnected pairs), caught {caught:.1}%, false rejections {false_rejections}",
        examples.len(),
        corrupted.len()
    ))
}

impl Toy {
    fn exec_answers(&self, query: &str) -> Result<AnswerSet, String> {
        let ast = parse(query).map_err(|e| e.to_string())?;
        execute_local(&ast, &self.kg).map_err(|e| e.to_string())
    }
}

// ---------------------------------------------------------------- determinism

fn criterion_determinism() -> Outcome {
    let run = || -> Result<(Vec<u8>, Vec<u8>), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_kgqa"))
            .current_dir(dir.path())
            .env_remove("RUST_LOG")
            .args([
                "evaluate",
                "--seed",
                "17",
                "--executor",
                "local",
                "--disambiguator",
                "oracle-gold",
                "--generator",
                "gold-passthrough",
                "--workers",
                "4",
            ])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            String::from_utf8_lossy(&out.stderr).into_owned()
        })?;
        let read = |name: &str| {
            fs::read(dir.path().join("kgqa-out").join(name)).map_err(|e| format!("{name}: {e}"))
        };
        Ok((read("report.csv")?, read("trace.jsonl")?))
    };
    let (report_a, trace_a) = run()?;
    let (report_b, trace_b) = run()?;
    ensure(!report_a.is_empty() && !trace_a.is_empty(), || {
        "empty outputs".into()
    })?;
    ensure(report_a == report_b, || "report.csv differs".into())?;
    ensure(trace_a == trace_b, || "trace.jsonl differs".into())?;
    Ok(format!(
        "report.csv {} bytes, trace.jsonl {} bytes identical",
        report_a.len(),
        trace_a.len()
    ))
}

// ---------------------------------------------------------------- driver

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 metrics", 5, criterion_metrics),
        ("2 bm25-oracle", 60, criterion_bm25_oracle),
        ("3 presets-and-hand-score", 60, criterion_presets),
        ("4 entity-mismatch", 30, criterion_entity_mismatch),
        ("5 local-executor", 60, criterion_executor),
        ("6 end-to-end-toy", 10, criterion_end_to_end),
        ("7 rejection-harness", 60, criterion_rejection),
        ("8 determinism", 60, criterion_determinism),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            ensure(elapsed <= Duration::from_secs(limit), || {
                format!("took {:.2}s, limit {limit}s", elapsed.as_secs_f64())
            })
            .map(|_| detail)
        });
        match result {
            Ok(detail) => println!(
                "PASS criterion {name}: {detail} ({:.2}s)",
                elapsed.as_secs_f64()
            ),
            Err(why) => {
                failed += 1;
                println!(
                    "FAIL criterion {name}: {why} ({:.2}s)",
                    elapsed.as_secs_f64()
                );
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
