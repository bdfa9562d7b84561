//! Reference implementations written independently of the library: a
//! cross-product grounder and a brute-force KG scorer.

use std::collections::{BTreeMap, BTreeSet};

use latreason::lattice::{AnnotationExpr, Interval};
use latreason::model::{Comparator, GroundAtom, Rule, Subject, Term, ThresholdMode};

const E: f64 = 1e-9;

/// `b` lies inside `a`.
pub fn within(a: Interval, b: Interval) -> bool {
    a.lower - E <= b.lower && b.upper <= a.upper + E
}

fn flip(a: Interval) -> Interval {
    Interval { lower: 1.0 - a.upper, upper: 1.0 - a.lower }
}

fn cmp_holds(c: Comparator, lhs: f64, rhs: f64) -> bool {
    match c {
        Comparator::Ge => lhs >= rhs - E,
        Comparator::Gt => lhs > rhs + E,
        Comparator::Le => lhs <= rhs + E,
        Comparator::Lt => lhs < rhs - E,
        Comparator::Eq => (lhs - rhs).abs() <= E,
    }
}

fn eval(expr: &AnnotationExpr, vals: &[Interval]) -> Interval {
    match expr {
        AnnotationExpr::Const(iv) => *iv,
        AnnotationExpr::Var(i) => vals[*i],
        AnnotationExpr::Func(name, args) => {
            let xs: Vec<Interval> = args.iter().map(|a| eval(a, vals)).collect();
            let n = xs.len() as f64;
            let (mut l, mut u) = match name.as_str() {
                "min" => (xs.iter().map(|x| x.lower).fold(1.0, f64::min), xs.iter().map(|x| x.upper).fold(1.0, f64::min)),
                "max" => (xs.iter().map(|x| x.lower).fold(0.0, f64::max), xs.iter().map(|x| x.upper).fold(0.0, f64::max)),
                "product" => (xs.iter().map(|x| x.lower).product(), xs.iter().map(|x| x.upper).product()),
                "average" | "avg" => (xs.iter().map(|x| x.lower).sum::<f64>() / n, xs.iter().map(|x| x.upper).sum::<f64>() / n),
                "neg" => (1.0 - xs[0].upper, 1.0 - xs[0].lower),
                other => panic!("oracle: unknown function {other}"),
            };
            l = l.clamp(0.0, 1.0);
            u = u.clamp(0.0, 1.0).max(l);
            Interval { lower: l, upper: u }
        }
    }
}

fn instantiate(args: &[Term], pred: &str, sigma: &BTreeMap<String, String>) -> GroundAtom {
    let v = |t: &Term| match t {
        Term::Var(x) => sigma[&x.to_string()].clone(),
        Term::Const(c) => c.to_string(),
    };
    match args {
        [a] => GroundAtom::unary(pred, &v(a)),
        [a, b] => GroundAtom::binary(pred, &v(a), &v(b)),
        _ => panic!("oracle: arity"),
    }
}

fn subject_vals(s: &Subject) -> Vec<String> {
    match s {
        Subject::Node(a) => vec![a.to_string()],
        Subject::Edge(a, b) => vec![a.to_string(), b.to_string()],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleInstance {
    pub head: GroundAtom,
    pub value: Interval,
    pub assignment: Vec<(String, String)>,
    pub used: Vec<(GroundAtom, Interval)>,
}

/// Ground `rule` over `known` (every atom whose value is known) by trying
/// every assignment of its variables to every constant.
/// `stored` lists the known atoms that already live in the store.
pub fn ground(rule: &Rule, known: &BTreeMap<GroundAtom, Interval>, stored: &BTreeSet<GroundAtom>) -> Vec<OracleInstance> {
    let mut vars: BTreeSet<String> = BTreeSet::new();
    let mut consts: BTreeSet<String> = BTreeSet::new();
    let mut note = |t: &Term| match t {
        Term::Var(x) => {
            vars.insert(x.to_string());
        }
        Term::Const(c) => {
            consts.insert(c.to_string());
        }
    };
    rule.head.atom.args.iter().for_each(&mut note);
    rule.body.iter().for_each(|c| c.literal.atom.args.iter().for_each(&mut note));
    for a in known.keys() {
        consts.extend(subject_vals(&a.subject));
    }
    let vars: Vec<String> = vars.into_iter().collect();
    let consts: Vec<String> = consts.into_iter().collect();
    let bounds: Vec<Interval> = rule
        .body
        .iter()
        .map(|c| {
            let AnnotationExpr::Const(iv) = c.literal.annotation else { panic!("oracle: body bound must be constant") };
            if c.literal.negated {
                flip(iv)
            } else {
                iv
            }
        })
        .collect();

    // (assignment values, matched atoms, matched values)
    type Sat = (Vec<String>, Vec<GroundAtom>, Vec<Interval>);
    let mut groups: BTreeMap<GroundAtom, Vec<Sat>> = BTreeMap::new();
    let n = consts.len();
    if n == 0 && !vars.is_empty() {
        return Vec::new();
    }
    let total = n.pow(vars.len() as u32);
    for code in 0..total {
        let mut c = code;
        let mut vals = vec![String::new(); vars.len()];
        for slot in vals.iter_mut().rev() {
            *slot = consts[c % n].clone();
            c /= n;
        }
        let sigma: BTreeMap<String, String> = vars.iter().cloned().zip(vals.iter().cloned()).collect();
        let mut atoms = Vec::new();
        let mut values = Vec::new();
        let mut ok = true;
        for (i, cl) in rule.body.iter().enumerate() {
            let a = instantiate(&cl.literal.atom.args, &cl.literal.atom.pred, &sigma);
            match known.get(&a) {
                Some(v) if within(bounds[i], *v) => {
                    atoms.push(a);
                    values.push(*v);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let head = instantiate(&rule.head.atom.args, &rule.head.atom.pred, &sigma);
            groups.entry(head).or_default().push((vals, atoms, values));
        }
    }

    let head_vars: BTreeSet<String> = rule
        .head
        .atom
        .args
        .iter()
        .filter_map(|t| match t {
            Term::Var(x) => Some(x.to_string()),
            _ => None,
        })
        .collect();

    let mut out = Vec::new();
    for (head, sats) in groups {
        let rep = sats.iter().map(|s| &s.0).min().unwrap().clone();
        let sigma_head: BTreeMap<String, String> =
            vars.iter().cloned().zip(rep.iter().cloned()).filter(|(v, _)| head_vars.contains(v)).collect();
        let mut pass = true;
        for (i, cl) in rule.body.iter().enumerate() {
            let th = cl.threshold;
            if th.cmp == Comparator::Ge && th.mode == ThresholdMode::Count && (th.value - 1.0).abs() < E {
                continue;
            }
            let distinct: BTreeSet<&GroundAtom> = sats.iter().map(|s| &s.1[i]).collect();
            let matched = distinct.len() as f64;
            let ok = match th.mode {
                ThresholdMode::Count => cmp_holds(th.cmp, matched, th.value),
                ThresholdMode::Percent => {
                    let denom = known
                        .keys()
                        .filter(|a| a.pred == cl.literal.atom.pred && unifies(&cl.literal.atom.args, &a.subject, &sigma_head))
                        .count();
                    denom > 0 && cmp_holds(th.cmp, 100.0 * matched / denom as f64, th.value)
                }
            };
            if !ok {
                pass = false;
                break;
            }
        }
        if !pass {
            continue;
        }
        let evals: Vec<Interval> = sats.iter().map(|s| eval(&rule.head.annotation, &s.2)).collect();
        let lo = evals.iter().map(|v| v.lower).fold(0.0, f64::max);
        let hi = evals.iter().map(|v| v.upper).fold(1.0, f64::min);
        let values: Vec<Interval> = if lo > hi + E {
            let mut d: Vec<Interval> = Vec::new();
            for v in evals {
                if !d.iter().any(|x| (x.lower - v.lower).abs() <= E && (x.upper - v.upper).abs() <= E) {
                    d.push(v);
                }
            }
            d
        } else {
            vec![Interval { lower: lo, upper: hi.max(lo) }]
        };
        let mut used: BTreeMap<GroundAtom, Interval> = BTreeMap::new();
        for s in &sats {
            for (a, v) in s.1.iter().zip(&s.2) {
                if !stored.contains(a) {
                    used.insert(a.clone(), *v);
                }
            }
        }
        let assignment: Vec<(String, String)> = vars.iter().cloned().zip(rep.iter().cloned()).collect();
        for value in values {
            out.push(OracleInstance { head: head.clone(), value, assignment: assignment.clone(), used: used.clone().into_iter().collect() });
        }
    }
    out
}

fn unifies(args: &[Term], subj: &Subject, fixed: &BTreeMap<String, String>) -> bool {
    let vals = subject_vals(subj);
    if vals.len() != args.len() {
        return false;
    }
    let mut sigma = fixed.clone();
    for (t, v) in args.iter().zip(vals) {
        match t {
            Term::Const(c) if c.to_string() != v => return false,
            Term::Const(_) => {}
            Term::Var(x) => match sigma.get(&x.to_string()) {
                Some(b) if *b != v => return false,
                Some(_) => {}
                None => {
                    sigma.insert(x.to_string(), v);
                }
            },
        }
    }
    true
}

/// Hits@k and MRR from raw candidate scores: rank = 1 + number of
/// candidates scoring strictly higher, or equal with a smaller name.
pub fn brute_force_scores(per_query: &[(String, Vec<(String, f64)>)], ks: &[usize]) -> (Vec<f64>, f64) {
    let n = per_query.len() as f64;
    let mut hits = vec![0.0; ks.len()];
    let mut mrr = 0.0;
    for (gold, cands) in per_query {
        let Some(gs) = cands.iter().find(|(e, s)| e == gold && *s > 0.0).map(|(_, s)| *s) else {
            continue;
        };
        let better = cands.iter().filter(|(e, s)| *s > 0.0 && (*s > gs || (*s == gs && e < gold))).count();
        let rank = better + 1;
        for (i, &k) in ks.iter().enumerate() {
            if rank <= k {
                hits[i] += 1.0;
            }
        }
        mrr += 1.0 / rank as f64;
    }
    if n > 0.0 {
        hits.iter_mut().for_each(|h| *h /= n);
        mrr /= n;
    }
    (hits, mrr)
}
