//! Rule grounding against a store snapshot plus an optional static overlay.
//!
//! A clause `p(args):[l,u]` is satisfied by a ground atom whose value is
//! known and lies inside `[l,u]`, i.e. `leq([l,u], value)`. Known means a
//! non-bottom store entry, or an atom of the overlay (latent universe and
//! Skolem-constructed edges) that has not been materialized yet.
//!
//! Thresholds are evaluated per head tuple `h`. With `A_h` the full
//! assignments extending `h` that satisfy every clause, the count of clause
//! `i` is the number of distinct atoms it takes over `A_h`; the percent
//! denominator is the number of known atoms of its predicate that unify with
//! the clause under `h` alone.

use std::collections::{BTreeMap, BTreeSet};

use crate::lattice::{eval_annotation, leq, sup, AnnotationExpr, Interval, LatticeError, SupOutcome};
use crate::model::{GroundAtom, ModelError, Rule, SkolemConstructor, Subject, Sym, TemporalFact, Term, Threshold, ThresholdMode};
use crate::store::Store;

/// Static atoms visible to grounding without being stored.
#[derive(Clone, Debug, Default)]
pub struct Overlay {
    atoms: BTreeMap<GroundAtom, Interval>,
    by_pred: BTreeMap<Sym, BTreeSet<Subject>>,
    fwd: BTreeMap<Sym, BTreeMap<Sym, BTreeSet<Sym>>>,
    rev: BTreeMap<Sym, BTreeMap<Sym, BTreeSet<Sym>>>,
    unary: BTreeMap<Sym, Vec<GroundAtom>>,
}

impl Overlay {
    pub fn from_facts(facts: &[TemporalFact]) -> Overlay {
        let mut o = Overlay::default();
        for f in facts {
            if !f.interval.is_bottom() {
                o.insert(f.atom.clone(), f.interval);
            }
        }
        o
    }

    fn insert(&mut self, atom: GroundAtom, value: Interval) {
        if let Some(cur) = self.atoms.get_mut(&atom) {
            // Repeated universe atoms combine like repeated static facts.
            if let Ok(SupOutcome::Value(v)) = sup(&[*cur, value]) {
                *cur = v;
            }
            return;
        }
        self.by_pred.entry(atom.pred.clone()).or_default().insert(atom.subject.clone());
        match &atom.subject {
            Subject::Node(c) => self.unary.entry(c.clone()).or_default().push(atom.clone()),
            Subject::Edge(a, b) => {
                self.fwd
                    .entry(atom.pred.clone())
                    .or_default()
                    .entry(a.clone())
                    .or_default()
                    .insert(b.clone());
                self.rev
                    .entry(atom.pred.clone())
                    .or_default()
                    .entry(b.clone())
                    .or_default()
                    .insert(a.clone());
            }
        }
        self.atoms.insert(atom, value);
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn get(&self, atom: &GroundAtom) -> Option<Interval> {
        self.atoms.get(atom).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroundAtom, &Interval)> {
        self.atoms.iter()
    }

    /// Unary overlay atoms about constant `c`.
    pub fn unary_of(&self, c: &str) -> &[GroundAtom] {
        self.unary.get(c).map_or(&[], |v| v.as_slice())
    }

    /// Copy extended with one virtual edge `p(x, template(x))` for every
    /// constant `x` that satisfies all of the constructor's `with`
    /// predicates and has no `p` edge yet; the new endpoint gets the same
    /// unary predicates.
    pub fn with_skolem(&self, store: &Store, constructors: &[SkolemConstructor]) -> Overlay {
        let mut out = self.clone();
        for k in constructors {
            let view = View { store, overlay: &out };
            let mut consts: Vec<Sym> = view.constants().into_iter().collect();
            consts.retain(|x| {
                view.successors(&k.pred, x).is_empty()
                    && k.with.iter().all(|w| view.get(&GroundAtom { pred: w.clone(), subject: Subject::Node(x.clone()) }).is_some())
            });
            for x in consts {
                let y = k.name_for(&x);
                out.insert(GroundAtom { pred: k.pred.clone(), subject: Subject::Edge(x, y.clone()) }, Interval::TRUE);
                for w in &k.with {
                    let a = GroundAtom { pred: w.clone(), subject: Subject::Node(y.clone()) };
                    if !out.atoms.contains_key(&a) && store.entry(&a).is_none() {
                        out.insert(a, Interval::TRUE);
                    }
                }
            }
        }
        out
    }
}

/// What grounding reads: the store, falling back to the overlay.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub store: &'a Store,
    pub overlay: &'a Overlay,
}

impl<'a> View<'a> {
    /// `None` for unknown atoms. A store entry (even a quarantined bottom) shadows the overlay.
    pub fn get(&self, atom: &GroundAtom) -> Option<Interval> {
        match self.store.entry(atom) {
            Some(e) if e.value.is_bottom() => None,
            Some(e) => Some(e.value),
            None => self.overlay.get(atom),
        }
    }

    pub fn in_store(&self, atom: &GroundAtom) -> bool {
        self.store.entry(atom).is_some()
    }

    /// Known subjects of `pred`, sorted.
    pub fn subjects(&self, pred: &str) -> BTreeSet<Subject> {
        let mut out = self.store.pred_filtered(pred).clone();
        if let Some(s) = self.overlay.by_pred.get(pred) {
            for subj in s {
                let a = GroundAtom { pred: Sym::from(pred), subject: subj.clone() };
                if !self.in_store(&a) {
                    out.insert(subj.clone());
                }
            }
        }
        out
    }

    fn edge_known(&self, pred: &str, a: &Sym, b: &Sym) -> bool {
        self.get(&GroundAtom { pred: Sym::from(pred), subject: Subject::Edge(a.clone(), b.clone()) }).is_some()
    }

    pub fn successors(&self, pred: &str, x: &str) -> BTreeSet<Sym> {
        let mut out = self.store.successors(pred, x).clone();
        if let Some(s) = self.overlay.fwd.get(pred).and_then(|m| m.get(x)) {
            let xs: Sym = Sym::from(x);
            out.extend(s.iter().filter(|y| self.edge_known(pred, &xs, y)).cloned());
        }
        out
    }

    pub fn predecessors(&self, pred: &str, y: &str) -> BTreeSet<Sym> {
        let mut out = self.store.predecessors(pred, y).clone();
        if let Some(s) = self.overlay.rev.get(pred).and_then(|m| m.get(y)) {
            let ys: Sym = Sym::from(y);
            out.extend(s.iter().filter(|x| self.edge_known(pred, x, &ys)).cloned());
        }
        out
    }

    /// Every constant of a known atom.
    pub fn constants(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        for (a, e) in self.store.iter() {
            if !e.value.is_bottom() {
                out.extend(a.subject.constants().into_iter().cloned());
            }
        }
        for a in self.overlay.atoms.keys() {
            if !self.in_store(a) {
                out.extend(a.subject.constants().into_iter().cloned());
            }
        }
        out
    }

    /// Number of known atoms per predicate.
    pub fn counts(&self) -> BTreeMap<Sym, usize> {
        let mut out: BTreeMap<Sym, usize> = BTreeMap::new();
        for p in self.store.predicates() {
            out.insert(p.clone(), self.store.pred_filtered(p).len());
        }
        for a in self.overlay.atoms.keys() {
            if !self.in_store(a) {
                *out.entry(a.pred.clone()).or_default() += 1;
            }
        }
        out.retain(|_, n| *n > 0);
        out
    }
}

/// One head proposal produced by grounding a rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub rule: usize,
    pub head: GroundAtom,
    pub value: Interval,
    pub set_static: bool,
    /// Lexicographically smallest satisfying assignment, in variable-name order.
    pub assignment: Vec<(Sym, Sym)>,
    /// Overlay atoms the satisfying assignments read; materialized on application.
    pub used: Vec<(GroundAtom, Interval)>,
}

impl Instance {
    pub fn grounding_text(&self) -> String {
        let parts: Vec<String> = self.assignment.iter().map(|(v, c)| format!("{v}={c}")).collect();
        parts.join(",")
    }

    /// Ordering key inside one reduction: rule index, then grounding.
    pub fn sort_key(&self) -> (usize, Vec<&Sym>, &GroundAtom) {
        (self.rule, self.assignment.iter().map(|(_, c)| c).collect(), &self.head)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Slot {
    Var(usize),
    Const(Sym),
}

#[derive(Clone, Debug)]
struct CClause {
    orig: usize,
    pred: Sym,
    args: Vec<Slot>,
    bound: Interval,
    threshold: Threshold,
}

/// Links between variables that share a binary clause.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DependencyGraph {
    pub vertices: Vec<Sym>,
    pub links: BTreeSet<(usize, usize)>,
}

/// A normalized rule with variables numbered in name order and clauses
/// reordered unary first.
#[derive(Clone, Debug)]
pub struct CompiledRule {
    pub index: usize,
    pub delay: u32,
    pub set_static: bool,
    vars: Vec<Sym>,
    head_pred: Sym,
    head_args: Vec<Slot>,
    annotation: AnnotationExpr,
    clauses: Vec<CClause>,
    pub deps: DependencyGraph,
}

impl CompiledRule {
    pub fn new(index: usize, rule: &Rule) -> Result<CompiledRule, ModelError> {
        let r = rule.normalized()?;
        let vars: Vec<Sym> = r.vars().into_iter().collect();
        let slot = |t: &Term| match t {
            Term::Var(v) => Slot::Var(vars.binary_search(v).expect("collected above")),
            Term::Const(c) => Slot::Const(c.clone()),
        };
        let mut clauses: Vec<CClause> = r
            .body
            .iter()
            .enumerate()
            .map(|(i, c)| CClause {
                orig: i,
                pred: c.literal.atom.pred.clone(),
                args: c.literal.atom.args.iter().map(slot).collect(),
                bound: c.literal.annotation.as_const().unwrap_or(Interval::BOTTOM),
                threshold: c.threshold,
            })
            .collect();
        clauses.sort_by_key(|c| c.args.len());
        let mut links = BTreeSet::new();
        for c in &clauses {
            if let [Slot::Var(a), Slot::Var(b)] = c.args.as_slice() {
                if a != b {
                    links.insert((*a.min(b), *a.max(b)));
                }
            }
        }
        Ok(CompiledRule {
            index,
            delay: r.delay,
            set_static: r.set_static,
            head_pred: r.head.atom.pred.clone(),
            head_args: r.head.atom.args.iter().map(slot).collect(),
            annotation: r.head.annotation.clone(),
            clauses,
            deps: DependencyGraph { vertices: vars.clone(), links },
            vars,
        })
    }

    /// Body predicates in original clause order.
    pub fn body_predicates(&self) -> Vec<Sym> {
        let mut v: Vec<(usize, Sym)> = self.clauses.iter().map(|c| (c.orig, c.pred.clone())).collect();
        v.sort();
        v.into_iter().map(|(_, p)| p).collect()
    }

    pub fn head_predicate(&self) -> &Sym {
        &self.head_pred
    }
}

fn subject_args(s: &Subject) -> [Option<&Sym>; 2] {
    match s {
        Subject::Node(a) => [Some(a), None],
        Subject::Edge(a, b) => [Some(a), Some(b)],
    }
}

/// Unify clause arguments with a ground subject under the partial assignment.
fn unify(args: &[Slot], subj: &Subject, sigma: &mut [Option<Sym>]) -> bool {
    let vals = subject_args(subj);
    let arity = if vals[1].is_some() { 2 } else { 1 };
    if arity != args.len() {
        return false;
    }
    let mut set = [usize::MAX; 2];
    for (k, slot) in args.iter().enumerate() {
        let v = vals[k].expect("arity checked");
        let ok = match slot {
            Slot::Const(c) => c == v,
            Slot::Var(i) => match &sigma[*i] {
                Some(b) => b == v,
                None => {
                    sigma[*i] = Some(v.clone());
                    set[k] = *i;
                    true
                }
            },
        };
        if !ok {
            for &i in set.iter().filter(|&&i| i != usize::MAX) {
                sigma[i] = None;
            }
            return false;
        }
    }
    true
}

fn make_atom(pred: &Sym, args: &[Slot], sigma: &[Option<Sym>]) -> Option<GroundAtom> {
    let val = |s: &Slot| match s {
        Slot::Const(c) => Some(c.clone()),
        Slot::Var(i) => sigma[*i].clone(),
    };
    let subject = match args {
        [a] => Subject::Node(val(a)?),
        [a, b] => Subject::Edge(val(a)?, val(b)?),
        _ => return None,
    };
    Some(GroundAtom { pred: pred.clone(), subject })
}

struct Cand {
    atom: GroundAtom,
    value: Interval,
}

/// Candidate subjects for one clause given current variable domains.
fn seed(view: &View, c: &CClause, doms: &[Option<BTreeSet<Sym>>]) -> BTreeSet<Subject> {
    let known = |s: &Slot| -> Option<Vec<Sym>> {
        match s {
            Slot::Const(k) => Some(vec![k.clone()]),
            Slot::Var(i) => doms[*i].as_ref().map(|d| d.iter().cloned().collect()),
        }
    };
    match c.args.as_slice() {
        [a] => match known(a) {
            Some(xs) => xs.into_iter().map(Subject::Node).collect(),
            None => view.subjects(&c.pred),
        },
        [a, b] => match (known(a), known(b)) {
            (Some(xs), Some(ys)) if xs.len() <= ys.len() => {
                let ys: BTreeSet<Sym> = ys.into_iter().collect();
                xs.into_iter()
                    .flat_map(|x| {
                        view.successors(&c.pred, &x)
                            .into_iter()
                            .filter(|y| ys.contains(y))
                            .map(move |y| Subject::Edge(x.clone(), y))
                            .collect::<Vec<_>>()
                    })
                    .collect()
            }
            (Some(xs), Some(ys)) => {
                let xs: BTreeSet<Sym> = xs.into_iter().collect();
                ys.into_iter()
                    .flat_map(|y| {
                        view.predecessors(&c.pred, &y)
                            .into_iter()
                            .filter(|x| xs.contains(x))
                            .map(move |x| Subject::Edge(x, y.clone()))
                            .collect::<Vec<_>>()
                    })
                    .collect()
            }
            (Some(xs), None) => xs
                .into_iter()
                .flat_map(|x| view.successors(&c.pred, &x).into_iter().map(move |y| Subject::Edge(x.clone(), y)).collect::<Vec<_>>())
                .collect(),
            (None, Some(ys)) => ys
                .into_iter()
                .flat_map(|y| view.predecessors(&c.pred, &y).into_iter().map(move |x| Subject::Edge(x, y.clone())).collect::<Vec<_>>())
                .collect(),
            (None, None) => view.subjects(&c.pred),
        },
        _ => BTreeSet::new(),
    }
}

fn passes_early(t: &Threshold, n: usize) -> bool {
    !t.is_monotone_count() || t.passes(n, n)
}

/// Ground `cr` against `view`. Instances come out sorted by grounding.
pub fn ground_rule(cr: &CompiledRule, view: &View) -> Result<Vec<Instance>, LatticeError> {
    let nv = cr.vars.len();
    let mut doms: Vec<Option<BTreeSet<Sym>>> = vec![None; nv];
    let mut cands: Vec<Vec<Cand>> = Vec::with_capacity(cr.clauses.len());

    for c in &cr.clauses {
        let mut list = Vec::new();
        for subj in seed(view, c, &doms) {
            let atom = GroundAtom { pred: c.pred.clone(), subject: subj };
            let Some(value) = view.get(&atom) else { continue };
            if !leq(c.bound, value) {
                continue;
            }
            let mut sigma = vec![None; nv];
            if !unify(&c.args, &atom.subject, &mut sigma) {
                continue;
            }
            let in_doms = sigma
                .iter()
                .enumerate()
                .all(|(i, v)| v.as_ref().is_none_or(|v| doms[i].as_ref().is_none_or(|d| d.contains(v))));
            if in_doms {
                list.push(Cand { atom, value });
            }
        }
        if list.is_empty() || !passes_early(&c.threshold, list.len()) {
            return Ok(Vec::new());
        }
        narrow(&mut doms, c, &list);
        cands.push(list);
    }

    // Arc consistency over the clause/variable graph.
    loop {
        let mut changed = false;
        for (ci, c) in cr.clauses.iter().enumerate() {
            let before = cands[ci].len();
            cands[ci].retain(|cand| {
                let mut sigma = vec![None; nv];
                unify(&c.args, &cand.atom.subject, &mut sigma)
                    && sigma
                        .iter()
                        .enumerate()
                        .all(|(i, v)| v.as_ref().is_none_or(|v| doms[i].as_ref().is_none_or(|d| d.contains(v))))
            });
            if cands[ci].is_empty() || !passes_early(&c.threshold, cands[ci].len()) {
                return Ok(Vec::new());
            }
            if narrow(&mut doms, c, &cands[ci]) || cands[ci].len() != before {
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let assignments = join(cr, &cands);
    finish(cr, view, &cands, assignments)
}

/// Intersect domains with this clause's projections; true if any shrank.
fn narrow(doms: &mut [Option<BTreeSet<Sym>>], c: &CClause, list: &[Cand]) -> bool {
    let mut changed = false;
    for (k, slot) in c.args.iter().enumerate() {
        let Slot::Var(i) = slot else { continue };
        let proj: BTreeSet<Sym> = list.iter().filter_map(|cd| subject_args(&cd.atom.subject)[k].cloned()).collect();
        let next = match &doms[*i] {
            Some(d) => d.intersection(&proj).cloned().collect(),
            None => proj,
        };
        if doms[*i].as_ref() != Some(&next) {
            changed = true;
            doms[*i] = Some(next);
        }
    }
    changed
}

/// Full assignments plus the candidate index used by each clause.
type Assignment = (Vec<Sym>, Vec<usize>);

fn join(cr: &CompiledRule, cands: &[Vec<Cand>]) -> Vec<Assignment> {
    let nv = cr.vars.len();
    // For each clause, a variable bound by an earlier clause to index candidates by.
    let mut bound = vec![false; nv];
    let mut keys: Vec<Option<(usize, BTreeMap<Sym, Vec<usize>>)>> = Vec::new();
    for (ci, c) in cr.clauses.iter().enumerate() {
        let key = c.args.iter().enumerate().find_map(|(k, s)| match s {
            Slot::Var(i) if bound[*i] => Some((k, *i)),
            _ => None,
        });
        keys.push(key.map(|(k, var)| {
            let mut m: BTreeMap<Sym, Vec<usize>> = BTreeMap::new();
            for (j, cd) in cands[ci].iter().enumerate() {
                if let Some(v) = subject_args(&cd.atom.subject)[k] {
                    m.entry(v.clone()).or_default().push(j);
                }
            }
            (var, m)
        }));
        for s in &c.args {
            if let Slot::Var(i) = s {
                bound[*i] = true;
            }
        }
    }
    let mut out = Vec::new();
    let mut sigma: Vec<Option<Sym>> = vec![None; nv];
    let mut picks = vec![0usize; cr.clauses.len()];
    descend(cr, cands, &keys, 0, &mut sigma, &mut picks, &mut out);
    out
}

fn descend(
    cr: &CompiledRule,
    cands: &[Vec<Cand>],
    keys: &[Option<(usize, BTreeMap<Sym, Vec<usize>>)>],
    depth: usize,
    sigma: &mut Vec<Option<Sym>>,
    picks: &mut Vec<usize>,
    out: &mut Vec<Assignment>,
) {
    if depth == cr.clauses.len() {
        let full: Vec<Sym> = sigma.iter().map(|v| v.clone().expect("every variable occurs in the body")).collect();
        out.push((full, picks.clone()));
        return;
    }
    let c = &cr.clauses[depth];
    let all: Vec<usize>;
    let idxs: &[usize] = match &keys[depth] {
        Some((var, m)) => match sigma[*var].as_ref().and_then(|v| m.get(v)) {
            Some(v) => v,
            None => return,
        },
        None => {
            all = (0..cands[depth].len()).collect();
            &all
        }
    };
    for &j in idxs {
        let saved = sigma.clone();
        if unify(&c.args, &cands[depth][j].atom.subject, sigma) {
            picks[depth] = j;
            descend(cr, cands, keys, depth + 1, sigma, picks, out);
        }
        *sigma = saved;
    }
}

fn finish(cr: &CompiledRule, view: &View, cands: &[Vec<Cand>], assignments: Vec<Assignment>) -> Result<Vec<Instance>, LatticeError> {
    let mut groups: BTreeMap<GroundAtom, Vec<usize>> = BTreeMap::new();
    for (ai, (full, _)) in assignments.iter().enumerate() {
        let sigma: Vec<Option<Sym>> = full.iter().cloned().map(Some).collect();
        if let Some(h) = make_atom(&cr.head_pred, &cr.head_args, &sigma) {
            groups.entry(h).or_default().push(ai);
        }
    }
    let nb = cr.clauses.len();
    let mut out = Vec::new();
    for (head, members) in groups {
        let mut ok = true;
        for (ci, c) in cr.clauses.iter().enumerate() {
            if c.threshold == Threshold::default() {
                continue;
            }
            let distinct: BTreeSet<usize> = members.iter().map(|&a| assignments[a].1[ci]).collect();
            let total = if c.threshold.mode == ThresholdMode::Percent {
                percent_total(cr, view, c, &assignments[members[0]].0)
            } else {
                0
            };
            if !c.threshold.passes(distinct.len(), total) {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let mut values = Vec::with_capacity(members.len());
        let mut used: BTreeMap<GroundAtom, Interval> = BTreeMap::new();
        for &a in &members {
            let mut bind = vec![Interval::BOTTOM; nb];
            for (ci, c) in cr.clauses.iter().enumerate() {
                let cd = &cands[ci][assignments[a].1[ci]];
                bind[c.orig] = cd.value;
                if !view.in_store(&cd.atom) {
                    used.insert(cd.atom.clone(), cd.value);
                }
            }
            values.push(eval_annotation(&cr.annotation, &bind)?);
        }
        let rep = members.iter().map(|&a| &assignments[a].0).min().expect("group is non-empty");
        let assignment: Vec<(Sym, Sym)> = cr.vars.iter().cloned().zip(rep.iter().cloned()).collect();
        let used: Vec<(GroundAtom, Interval)> = used.into_iter().collect();
        let heads = match sup(&values)? {
            SupOutcome::Value(v) => vec![v],
            SupOutcome::Inconsistent(..) => {
                let mut d: Vec<Interval> = Vec::new();
                for v in values {
                    if !d.iter().any(|x| crate::lattice::approx_eq(*x, v)) {
                        d.push(v);
                    }
                }
                d
            }
        };
        for value in heads {
            out.push(Instance {
                rule: cr.index,
                head: head.clone(),
                value,
                set_static: cr.set_static,
                assignment: assignment.clone(),
                used: used.clone(),
            });
        }
    }
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(out)
}

/// Known atoms of the clause predicate that unify with the clause once only
/// the head variables are fixed.
fn percent_total(cr: &CompiledRule, view: &View, c: &CClause, full: &[Sym]) -> usize {
    let mut sigma: Vec<Option<Sym>> = vec![None; cr.vars.len()];
    for s in &cr.head_args {
        if let Slot::Var(i) = s {
            sigma[*i] = Some(full[*i].clone());
        }
    }
    view.subjects(&c.pred)
        .into_iter()
        .filter(|subj| {
            let mut s = sigma.clone();
            unify(&c.args, subj, &mut s)
        })
        .count()
}
