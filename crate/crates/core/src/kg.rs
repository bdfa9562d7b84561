//! Knowledge-graph completion: run inference at a single time point, rank
//! candidate answers by derived lower bound, and score them.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::{Engine, EngineConfig, EngineError};
use crate::model::{sym, Program, Rule, Subject, Sym, TemporalFact};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `(known, r, ?)`
    Tail,
    /// `(?, r, known)`
    Head,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub known: Sym,
    pub relation: Sym,
    pub direction: Direction,
    pub gold: Sym,
}

/// One query per test triple.
pub fn queries(test: &[(String, String, String)], direction: Direction) -> Vec<Query> {
    test.iter()
        .map(|(h, r, t)| {
            let (known, gold) = match direction {
                Direction::Tail => (h, t),
                Direction::Head => (t, h),
            };
            Query { known: sym(known), relation: sym(r), direction, gold: sym(gold) }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedPrediction {
    pub entity: Sym,
    pub score: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub steps: usize,
    pub queries: usize,
    /// `(k, hits@k)` in the order requested.
    pub hits: Vec<(usize, f64)>,
    pub mrr: f64,
    pub precision: f64,
    pub recall: f64,
    pub predicted: usize,
    pub true_positives: usize,
    /// Non-bottom atoms after inference.
    pub ground_atoms: usize,
}

#[derive(Clone, Debug)]
pub struct KgOptions {
    pub steps: usize,
    pub ks: Vec<usize>,
    /// Drop other known-true answers from each candidate list.
    pub filtered: bool,
    pub parallel: bool,
}

impl Default for KgOptions {
    fn default() -> Self {
        KgOptions { steps: 1, ks: vec![1, 3, 10], filtered: false, parallel: true }
    }
}

/// `c(c):[1,1]` for every unary body predicate `c` that names a graph constant.
/// Rules learned with constants are made non-ground by replacing the
/// constant with a variable guarded by such a predicate.
pub fn identity_facts(facts: &[TemporalFact], rules: &[Rule]) -> Vec<TemporalFact> {
    let constants: BTreeSet<&Sym> = facts.iter().flat_map(|f| f.atom.subject.constants()).collect();
    let mut preds: BTreeSet<Sym> = BTreeSet::new();
    for r in rules {
        for c in &r.body {
            let a = &c.literal.atom;
            if a.args.len() == 1 && constants.contains(&a.pred) {
                preds.insert(a.pred.clone());
            }
        }
    }
    preds
        .into_iter()
        .map(|p| TemporalFact::new(crate::model::GroundAtom::unary(&p, &p), crate::lattice::Interval::TRUE, 0, 0))
        .collect()
}

/// Run `steps` fixpoint applications at t=0 with every rule made immediate.
/// Hitting the application budget is the intended stopping point, not an error.
pub fn infer(facts: Vec<TemporalFact>, rules: &[Rule], steps: usize, parallel: bool) -> Result<Engine, EngineError> {
    let rules = rules.iter().map(|r| Rule { delay: 0, ..r.clone() }).collect();
    let facts = facts.into_iter().map(|f| TemporalFact { t_start: 0, t_end: 0, ..f }).collect();
    let program = Program { rules, facts, t_max: 0, ..Program::default() };
    let config = EngineConfig { t_max: 0, max_fp_iterations: steps.max(1), parallel, ..EngineConfig::default() };
    let mut e = Engine::new(program, config)?;
    e.run_next()?;
    Ok(e)
}

/// Candidates with a positive derived lower bound, best first, ties by name.
pub fn rank(engine: &Engine, q: &Query, exclude: &BTreeSet<Sym>) -> Vec<RankedPrediction> {
    let store = engine.store();
    let mut cands: Vec<(Sym, f64)> = match q.direction {
        Direction::Tail => store.successors(&q.relation, &q.known).iter().cloned().collect::<Vec<_>>(),
        Direction::Head => store.predecessors(&q.relation, &q.known).iter().cloned().collect::<Vec<_>>(),
    }
    .into_iter()
    .filter(|e| !exclude.contains(e) || *e == q.gold)
    .filter_map(|e| {
        let subject = match q.direction {
            Direction::Tail => Subject::Edge(q.known.clone(), e.clone()),
            Direction::Head => Subject::Edge(e.clone(), q.known.clone()),
        };
        let v = store.get(&crate::model::GroundAtom { pred: q.relation.clone(), subject });
        (v.lower > 0.0).then_some((e, v.lower))
    })
    .collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    cands
        .into_iter()
        .enumerate()
        .map(|(i, (entity, score))| RankedPrediction { entity, score, rank: i + 1 })
        .collect()
}

/// Score ranked lists against their queries.
pub fn score(ranked: &[(Query, Vec<RankedPrediction>)], ks: &[usize]) -> (Vec<(usize, f64)>, f64, f64, f64, usize, usize) {
    let n = ranked.len();
    let gold_rank: Vec<Option<usize>> = ranked.iter().map(|(q, r)| r.iter().find(|p| p.entity == q.gold).map(|p| p.rank)).collect();
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let hits = ks.iter().map(|&k| (k, frac(gold_rank.iter().filter(|r| r.is_some_and(|r| r <= k)).count()))).collect();
    let mrr = if n == 0 { 0.0 } else { gold_rank.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / n as f64 };
    let tp = gold_rank.iter().filter(|r| r.is_some()).count();
    let predicted: usize = ranked.iter().map(|(_, r)| r.len()).sum();
    let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    (hits, mrr, precision, frac(tp), predicted, tp)
}

fn known_answers(facts: &[TemporalFact]) -> BTreeMap<(Sym, Sym, bool), BTreeSet<Sym>> {
    let mut out: BTreeMap<(Sym, Sym, bool), BTreeSet<Sym>> = BTreeMap::new();
    for f in facts {
        if let Subject::Edge(a, b) = &f.atom.subject {
            out.entry((f.atom.pred.clone(), a.clone(), true)).or_default().insert(b.clone());
            out.entry((f.atom.pred.clone(), b.clone(), false)).or_default().insert(a.clone());
        }
    }
    out
}

pub fn complete(facts: &[TemporalFact], rules: &[Rule], queries: &[Query], opts: &KgOptions) -> Result<(Metrics, Vec<(Query, Vec<RankedPrediction>)>), EngineError> {
    let engine = infer(facts.to_vec(), rules, opts.steps, opts.parallel)?;
    let known = if opts.filtered { known_answers(facts) } else { BTreeMap::new() };
    let empty = BTreeSet::new();
    let ranked: Vec<(Query, Vec<RankedPrediction>)> = queries
        .iter()
        .map(|q| {
            let key = (q.relation.clone(), q.known.clone(), q.direction == Direction::Tail);
            let ex = known.get(&key).unwrap_or(&empty);
            (q.clone(), rank(&engine, q, ex))
        })
        .collect();
    let (hits, mrr, precision, recall, predicted, true_positives) = score(&ranked, &opts.ks);
    let metrics = Metrics {
        steps: opts.steps,
        queries: queries.len(),
        hits,
        mrr,
        precision,
        recall,
        predicted,
        true_positives,
        ground_atoms: engine.store().len(),
    };
    Ok((metrics, ranked))
}

/// One metrics record per step budget.
pub fn compare_steps(facts: &[TemporalFact], rules: &[Rule], queries: &[Query], steps: &[usize], opts: &KgOptions) -> Result<Vec<Metrics>, EngineError> {
    steps
        .iter()
        .map(|&s| complete(facts, rules, queries, &KgOptions { steps: s, ..opts.clone() }).map(|(m, _)| m))
        .collect()
}

pub fn metrics_csv(rows: &[Metrics]) -> String {
    let ks: Vec<usize> = rows.first().map(|m| m.hits.iter().map(|(k, _)| *k).collect()).unwrap_or_default();
    let mut s = String::from("steps,queries");
    for k in &ks {
        s.push_str(&format!(",hits@{k}"));
    }
    s.push_str(",mrr,precision,recall,ground_atoms\n");
    for m in rows {
        s.push_str(&format!("{},{}", m.steps, m.queries));
        for (_, h) in &m.hits {
            s.push_str(&format!(",{h:.6}"));
        }
        s.push_str(&format!(",{:.6},{:.6},{:.6},{}\n", m.mrr, m.precision, m.recall, m.ground_atoms));
    }
    s
}

pub fn metrics_table(rows: &[Metrics]) -> String {
    let mut s = format!("{:>6} {:>8}", "steps", "queries");
    if let Some(m) = rows.first() {
        for (k, _) in &m.hits {
            s.push_str(&format!(" {:>8}", format!("hits@{k}")));
        }
    }
    s.push_str(&format!(" {:>8} {:>9} {:>8} {:>12}\n", "mrr", "precision", "recall", "ground_atoms"));
    for m in rows {
        s.push_str(&format!("{:>6} {:>8}", m.steps, m.queries));
        for (_, h) in &m.hits {
            s.push_str(&format!(" {h:>8.4}"));
        }
        s.push_str(&format!(" {:>8.4} {:>9.4} {:>8.4} {:>12}\n", m.mrr, m.precision, m.recall, m.ground_atoms));
    }
    s
}
