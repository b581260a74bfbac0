//! Backtracking evaluation of conjunctive patterns over a [`Snapshot`].

use std::collections::{BTreeSet, HashMap};

use super::answer::AnswerSet;
use super::ast::{PatternTerm, QueryAst, QueryForm, TriplePattern};
use super::ExecError;
use crate::kgstore::{Snapshot, Term, Triple};

/// A value bound to a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value<'a> {
    Entity(&'a str),
    Predicate(&'a str),
    Literal(&'a str),
}

impl Value<'_> {
    fn as_str(&self) -> &str {
        match self {
            Value::Entity(s) | Value::Predicate(s) | Value::Literal(s) => s,
        }
    }
}

type Binding<'a> = Vec<Option<Value<'a>>>;

struct Plan<'q> {
    patterns: Vec<[Slot<'q>; 3]>,
    vars: Vec<&'q str>,
}

#[derive(Clone, Copy)]
enum Slot<'q> {
    Var(usize),
    Entity(&'q str),
    Predicate(&'q str),
    Literal(&'q str),
}

impl<'q> Plan<'q> {
    fn new(ast: &'q QueryAst) -> Self {
        let vars = ast.pattern_vars();
        let slot = |t: &'q PatternTerm| match t {
            PatternTerm::Var(v) => Slot::Var(vars.iter().position(|w| w == v).expect("collected")),
            PatternTerm::Entity(e) => Slot::Entity(e),
            PatternTerm::Predicate(p) => Slot::Predicate(p),
            PatternTerm::Literal(l) => Slot::Literal(l),
        };
        let patterns = ast
            .patterns
            .iter()
            .map(|p: &TriplePattern| [slot(&p.subject), slot(&p.predicate), slot(&p.object)])
            .collect();
        Plan { patterns, vars }
    }
}

/// Resolved value of a slot under the current binding, if any.
fn resolved<'a>(slot: Slot<'a>, binding: &Binding<'a>) -> Option<Value<'a>> {
    match slot {
        Slot::Var(i) => binding[i],
        Slot::Entity(e) => Some(Value::Entity(e)),
        Slot::Predicate(p) => Some(Value::Predicate(p)),
        Slot::Literal(l) => Some(Value::Literal(l)),
    }
}

fn triple_values(t: &Triple) -> [Value<'_>; 3] {
    [
        Value::Entity(&t.subject),
        Value::Predicate(&t.predicate),
        match &t.object {
            Term::Entity(e) => Value::Entity(e),
            Term::Literal(l) => Value::Literal(l),
        },
    ]
}

struct Solver<'a> {
    snapshot: &'a Snapshot,
    plan: Plan<'a>,
    solutions: Vec<Binding<'a>>,
}

impl<'a> Solver<'a> {
    fn candidates(&self, pattern: &[Slot<'a>; 3], binding: &Binding<'a>) -> Vec<usize> {
        let mut best: Option<&[usize]> = None;
        let mut consider = |list: &'a [usize]| {
            if best.is_none_or(|b| list.len() < b.len()) {
                best = Some(list);
            }
        };
        match resolved(pattern[0], binding) {
            Some(Value::Entity(s)) => consider(self.snapshot.with_subject(s)),
            Some(_) => return Vec::new(),
            None => {}
        }
        match resolved(pattern[1], binding) {
            Some(Value::Predicate(p)) => consider(self.snapshot.with_predicate(p)),
            Some(_) => return Vec::new(),
            None => {}
        }
        match resolved(pattern[2], binding) {
            Some(Value::Entity(o)) => {
                consider(self.snapshot.with_object(&Term::Entity(o.to_string())))
            }
            Some(Value::Literal(o)) => {
                consider(self.snapshot.with_object(&Term::Literal(o.to_string())))
            }
            Some(Value::Predicate(_)) => return Vec::new(),
            None => {}
        }
        match best {
            Some(list) => list.to_vec(),
            None => (0..self.snapshot.triples().len()).collect(),
        }
    }

    fn bound_count(pattern: &[Slot<'a>; 3], binding: &Binding<'a>) -> usize {
        pattern
            .iter()
            .filter(|&&s| resolved(s, binding).is_some())
            .count()
    }

    fn solve(&mut self, remaining: &mut Vec<usize>, binding: &mut Binding<'a>) {
        if remaining.is_empty() {
            self.solutions.push(binding.clone());
            return;
        }
        // Most constrained pattern next; first in query order on ties.
        let (slot_pos, _) = remaining
            .iter()
            .enumerate()
            .max_by(|(ia, &a), (ib, &b)| {
                Self::bound_count(&self.plan.patterns[a], binding)
                    .cmp(&Self::bound_count(&self.plan.patterns[b], binding))
                    .then(ib.cmp(ia))
            })
            .expect("non-empty");
        let pattern_idx = remaining.swap_remove(slot_pos);
        let pattern = self.plan.patterns[pattern_idx];

        let triples = self.snapshot.triples();
        for t in self.candidates(&pattern, binding) {
            let values = triple_values(&triples[t]);
            let mut assigned = Vec::new();
            let mut ok = true;
            for (slot, value) in pattern.iter().zip(values) {
                match *slot {
                    Slot::Var(i) => match binding[i] {
                        Some(bound) if bound != value => {
                            ok = false;
                            break;
                        }
                        Some(_) => {}
                        None => {
                            binding[i] = Some(value);
                            assigned.push(i);
                        }
                    },
                    fixed => {
                        if resolved(fixed, binding) != Some(value) {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if ok {
                self.solve(remaining, binding);
            }
            for i in assigned {
                binding[i] = None;
            }
        }

        remaining.push(pattern_idx);
        let last = remaining.len() - 1;
        remaining.swap(slot_pos, last);
    }
}

/// Evaluates `ast` against `snapshot`.
pub fn execute_local(ast: &QueryAst, snapshot: &Snapshot) -> Result<AnswerSet, ExecError> {
    let plan = Plan::new(ast);
    let var_index: HashMap<&str, usize> =
        plan.vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let lookup = |v: &str| {
        var_index.get(v).copied().ok_or_else(|| {
            ExecError::Execution(format!("variable ?{v} is not bound by any pattern"))
        })
    };
    let projected: Vec<usize> = match &ast.form {
        QueryForm::Select { projection, .. } => projection
            .iter()
            .map(|v| lookup(v))
            .collect::<Result<_, _>>()?,
        QueryForm::Count { var, .. } => vec![lookup(var)?],
        QueryForm::Ask => vec![],
    };

    let nvars = plan.vars.len();
    let mut solver = Solver {
        snapshot,
        plan,
        solutions: Vec::new(),
    };
    let mut remaining: Vec<usize> = (0..ast.patterns.len()).collect();
    let mut binding = vec![None; nvars];
    solver.solve(&mut remaining, &mut binding);
    let solutions = solver.solutions;

    let project = |b: &Binding<'_>| -> Vec<String> {
        projected
            .iter()
            .map(|&i| b[i].map(|v| v.as_str().to_string()).unwrap_or_default())
            .collect()
    };

    Ok(match &ast.form {
        QueryForm::Ask => AnswerSet::boolean(!solutions.is_empty()),
        QueryForm::Count { distinct, .. } => {
            let n = if *distinct {
                solutions.iter().map(project).collect::<BTreeSet<_>>().len()
            } else {
                solutions.len()
            };
            AnswerSet::from_terms([n.to_string()])
        }
        QueryForm::Select {
            distinct,
            projection,
        } => {
            let mut rows: Vec<Vec<String>> = solutions.iter().map(project).collect();
            rows.sort();
            if *distinct {
                rows.dedup();
            }
            if let Some(limit) = ast.limit {
                rows.truncate(limit as usize);
            }
            AnswerSet::from_rows(rows, projection.len())
        }
    })
}
