//! Seeded generators for random rules, views and programs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use latreason::grounder::Overlay;
use latreason::lattice::{AnnotationExpr, Interval};
use latreason::model::{sym, Atom, Clause, Comparator, GroundAtom, Literal, Program, Rule, TemporalFact, Term, Threshold, ThresholdMode};
use latreason::store::{Store, UpdateMode};

pub const UNARY: [&str; 3] = ["p", "q", "r"];
pub const BINARY: [&str; 3] = ["e", "f", "g"];
pub const CONSTS: [&str; 4] = ["a", "b", "c", "d"];
const VARS: [&str; 3] = ["X", "Y", "Z"];

pub fn iv(l: f64, u: f64) -> Interval {
    Interval::new(l, u).unwrap()
}

pub fn interval(rng: &mut ChaCha8Rng) -> Interval {
    let pts = [0.0f64, 0.2, 0.5, 0.7, 1.0];
    let a = *pts.choose(rng).unwrap();
    let b = *pts.choose(rng).unwrap();
    iv(a.min(b), a.max(b))
}

/// Mostly wide bounds so that joins have something to match.
fn clause_bound(rng: &mut ChaCha8Rng) -> Interval {
    match rng.gen_range(0..5) {
        0 => Interval::BOTTOM,
        1 => iv(0.2, 1.0),
        2 => iv(0.0, 0.7),
        _ => interval(rng),
    }
}

fn term(rng: &mut ChaCha8Rng, vars: &[&str]) -> Term {
    if rng.gen_bool(0.15) {
        Term::constant(CONSTS.choose(rng).unwrap())
    } else {
        Term::var(vars.choose(rng).unwrap())
    }
}

fn clause_atom(rng: &mut ChaCha8Rng, vars: &[&str]) -> Atom {
    if rng.gen_bool(0.5) {
        Atom::new(UNARY.choose(rng).unwrap(), vec![term(rng, vars)])
    } else {
        Atom::new(BINARY.choose(rng).unwrap(), vec![term(rng, vars), term(rng, vars)])
    }
}

fn threshold(rng: &mut ChaCha8Rng) -> Threshold {
    if rng.gen_bool(0.75) {
        return Threshold::default();
    }
    let cmp = *[Comparator::Ge, Comparator::Gt, Comparator::Le, Comparator::Lt, Comparator::Eq].choose(rng).unwrap();
    if rng.gen_bool(0.5) {
        Threshold { cmp, mode: ThresholdMode::Count, value: rng.gen_range(0..4) as f64 }
    } else {
        Threshold { cmp, mode: ThresholdMode::Percent, value: *[25.0, 50.0, 100.0].choose(rng).unwrap() }
    }
}

fn annotation(rng: &mut ChaCha8Rng, n_body: usize) -> AnnotationExpr {
    match rng.gen_range(0..4) {
        0 | 1 => AnnotationExpr::Const(interval(rng)),
        2 => AnnotationExpr::Var(rng.gen_range(0..n_body)),
        _ => {
            let f = *["min", "max", "product", "average", "neg"].choose(rng).unwrap();
            let args: Vec<AnnotationExpr> = if f == "neg" {
                vec![AnnotationExpr::Var(rng.gen_range(0..n_body))]
            } else {
                (0..rng.gen_range(1..=n_body)).map(|i| AnnotationExpr::Var(i)).collect()
            };
            AnnotationExpr::Func(f.to_string(), args)
        }
    }
}

/// A range-restricted rule over the fixed predicate and constant pools.
pub fn rule(rng: &mut ChaCha8Rng) -> Rule {
    let nv = rng.gen_range(1..=3);
    let vars = &VARS[..nv];
    loop {
        let n_body = rng.gen_range(1..=3);
        let body: Vec<Clause> = (0..n_body)
            .map(|_| {
                let negated = rng.gen_bool(0.15);
                Clause {
                    literal: Literal { atom: clause_atom(rng, vars), negated, annotation: AnnotationExpr::Const(clause_bound(rng)) },
                    threshold: threshold(rng),
                }
            })
            .collect();
        let body_vars: BTreeSet<String> = body.iter().flat_map(|c| c.literal.atom.vars().map(|v| v.to_string()).collect::<Vec<_>>()).collect();
        let bv: Vec<&str> = body_vars.iter().map(String::as_str).collect();
        let distinct: BTreeSet<String> = body.iter().map(|c| latreason::parse::atom_text(&c.literal.atom)).collect();
        if bv.is_empty() || distinct.len() < body.len() {
            continue;
        }
        let head = if rng.gen_bool(0.5) {
            Atom::new("h", vec![term(rng, &bv)])
        } else {
            Atom::new("k", vec![term(rng, &bv), term(rng, &bv)])
        };
        return Rule {
            name: None,
            head: Literal { atom: head, negated: false, annotation: annotation(rng, n_body) },
            body,
            delay: 0,
            set_static: false,
        };
    }
}

fn ground_atom(rng: &mut ChaCha8Rng) -> GroundAtom {
    let c = |rng: &mut ChaCha8Rng| *CONSTS.choose(rng).unwrap();
    if rng.gen_bool(0.5) {
        GroundAtom::unary(UNARY.choose(rng).unwrap(), c(rng))
    } else {
        GroundAtom::binary(BINARY.choose(rng).unwrap(), c(rng), c(rng))
    }
}

/// A store and an overlay with overlapping atoms, plus the merged map of
/// known values and the set of stored atoms.
pub struct RandomView {
    pub store: Store,
    pub overlay: Overlay,
    pub known: BTreeMap<GroundAtom, Interval>,
    pub stored: BTreeSet<GroundAtom>,
}

pub fn view(rng: &mut ChaCha8Rng) -> RandomView {
    let mut store = Store::new(1, &[], BTreeSet::new());
    let src: Arc<str> = Arc::from("--");
    let mut log = Vec::new();
    let mut stored_vals = BTreeMap::new();
    for _ in 0..rng.gen_range(10..40) {
        let a = ground_atom(rng);
        let v = interval(rng);
        if v.is_bottom() || stored_vals.contains_key(&a) {
            continue;
        }
        store.update(&a, v, false, UpdateMode::Override, &src, None, &mut log);
        stored_vals.insert(a, v);
    }
    let mut latent = Vec::new();
    for _ in 0..rng.gen_range(0..8) {
        latent.push(TemporalFact { is_static: true, ..TemporalFact::new(ground_atom(rng), interval(rng), 0, 1) });
    }
    let overlay = Overlay::from_facts(&latent);
    let mut known = stored_vals.clone();
    for (a, v) in overlay.iter() {
        known.entry(a.clone()).or_insert(*v);
    }
    let stored = stored_vals.keys().cloned().collect();
    RandomView { store, overlay, known, stored }
}

/// Immediate rules and facts at a single time point, all annotated `[1,1]`.
pub fn crisp_program(rng: &mut ChaCha8Rng) -> Program {
    let mut rules = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let mut r = rule(rng);
        r.head.annotation = AnnotationExpr::Const(Interval::TRUE);
        for c in &mut r.body {
            c.literal.negated = false;
            c.literal.annotation = AnnotationExpr::Const(Interval::TRUE);
            c.threshold = Threshold::default();
        }
        // Heads feed later bodies through the shared pools.
        r.head.atom.pred = sym(if r.head.atom.args.len() == 1 { UNARY.choose(rng).unwrap() } else { BINARY.choose(rng).unwrap() });
        rules.push(r);
    }
    let facts = (0..rng.gen_range(1..10)).map(|_| TemporalFact::new(ground_atom(rng), Interval::TRUE, 0, 0)).collect();
    Program { rules, facts, t_max: 0, ..Program::default() }
}

/// Rules whose heads only raise lower bounds, so least upper bounds never
/// cross; mixed delays over a few time points.
pub fn lower_bound_program(rng: &mut ChaCha8Rng, t_max: u32) -> Program {
    let lb = |rng: &mut ChaCha8Rng| iv(*[0.1, 0.3, 0.5, 0.8, 1.0].choose(rng).unwrap(), 1.0);
    let mut rules = Vec::new();
    for _ in 0..rng.gen_range(1..=5) {
        let mut r = rule(rng);
        r.head.atom.pred = sym(if r.head.atom.args.len() == 1 { UNARY.choose(rng).unwrap() } else { BINARY.choose(rng).unwrap() });
        r.head.annotation = match rng.gen_range(0..3) {
            0 => AnnotationExpr::Const(lb(rng)),
            // Every operand has upper bound 1, and so does the result.
            1 => AnnotationExpr::Func("min".into(), (0..r.body.len()).map(AnnotationExpr::Var).collect()),
            _ => AnnotationExpr::Func("product".into(), (0..r.body.len()).map(AnnotationExpr::Var).collect()),
        };
        for c in &mut r.body {
            c.literal.negated = false;
            c.literal.annotation = AnnotationExpr::Const(lb(rng));
            c.threshold = Threshold::default();
        }
        r.delay = if t_max > 0 && rng.gen_bool(0.3) { rng.gen_range(1..=2) } else { 0 };
        rules.push(r);
    }
    let facts = (0..rng.gen_range(1..10))
        .map(|_| {
            let t0 = rng.gen_range(0..=t_max);
            TemporalFact::new(ground_atom(rng), lb(rng), t0, rng.gen_range(t0..=t_max))
        })
        .collect();
    Program { rules, facts, t_max, ..Program::default() }
}

/// Rules with arbitrary annotation functions over graded facts.
pub fn graded_program(rng: &mut ChaCha8Rng, t_max: u32) -> Program {
    let mut p = lower_bound_program(rng, t_max);
    for r in &mut p.rules {
        if rng.gen_bool(0.5) {
            let f = *["average", "max", "product"].choose(rng).unwrap();
            r.head.annotation = AnnotationExpr::Func(f.into(), (0..r.body.len()).map(AnnotationExpr::Var).collect());
        }
    }
    for f in &mut p.facts {
        f.interval = iv(rng.gen_range(0.0..0.9), 1.0);
    }
    p
}

/// `lower_bound_program` plus a rule that forces `[0,0]` onto an atom a fact
/// holds at `[1,1]`.
pub fn contradiction_program(rng: &mut ChaCha8Rng) -> (Program, GroundAtom) {
    let mut p = lower_bound_program(rng, 0);
    let c = *CONSTS.choose(rng).unwrap();
    let target = GroundAtom::unary("clash", c);
    p.facts.push(TemporalFact::new(target.clone(), Interval::TRUE, 0, 0));
    p.facts.push(TemporalFact::new(GroundAtom::unary("trigger", c), Interval::TRUE, 0, 0));
    p.rules.push(Rule {
        name: Some("force".into()),
        head: Literal::pos(Atom::new("clash", vec![Term::var("X")]), Interval::FALSE),
        body: vec![Clause::new(Atom::new("trigger", vec![Term::var("X")]), Interval::TRUE)],
        delay: 0,
        set_static: false,
    });
    (p, target)
}
