//! Program vocabulary: terms, atoms, literals, rules, temporal facts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{negate, AnnotationExpr, Interval};

/// Interned-ish symbol. Ordering is by string so sorted output is lexicographic.
pub type Sym = Arc<str>;

pub fn sym(s: &str) -> Sym {
    Arc::from(s)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Sym),
    Const(Sym),
}

impl Term {
    pub fn var(s: &str) -> Term {
        Term::Var(sym(s))
    }
    pub fn constant(s: &str) -> Term {
        Term::Const(sym(s))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: Sym,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Atom {
        Atom { pred: sym(pred), args }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Const(_)))
    }

    pub fn vars(&self) -> impl Iterator<Item = &Sym> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        })
    }

    /// Ground form, if every argument is a constant and arity is 1 or 2.
    pub fn to_ground(&self) -> Option<GroundAtom> {
        let c = |t: &Term| match t {
            Term::Const(c) => Some(c.clone()),
            Term::Var(_) => None,
        };
        let subject = match self.args.as_slice() {
            [a] => Subject::Node(c(a)?),
            [a, b] => Subject::Edge(c(a)?, c(b)?),
            _ => return None,
        };
        Some(GroundAtom {
            pred: self.pred.clone(),
            subject,
        })
    }
}

/// A node (unary atom) or an edge (binary atom).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subject {
    Node(Sym),
    Edge(Sym, Sym),
}

impl Subject {
    pub fn node(a: &str) -> Subject {
        Subject::Node(sym(a))
    }
    pub fn edge(a: &str, b: &str) -> Subject {
        Subject::Edge(sym(a), sym(b))
    }
    pub fn constants(&self) -> Vec<&Sym> {
        match self {
            Subject::Node(a) => vec![a],
            Subject::Edge(a, b) => vec![a, b],
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Node(a) => write!(f, "{a}"),
            Subject::Edge(a, b) => write!(f, "({a},{b})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub pred: Sym,
    pub subject: Subject,
}

impl GroundAtom {
    pub fn unary(pred: &str, a: &str) -> GroundAtom {
        GroundAtom {
            pred: sym(pred),
            subject: Subject::node(a),
        }
    }
    pub fn binary(pred: &str, a: &str, b: &str) -> GroundAtom {
        GroundAtom {
            pred: sym(pred),
            subject: Subject::edge(a, b),
        }
    }
    pub fn to_atom(&self) -> Atom {
        let args = self.subject.constants().into_iter().map(|c| Term::Const(c.clone())).collect();
        Atom {
            pred: self.pred.clone(),
            args,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
    pub annotation: AnnotationExpr,
}

impl Literal {
    pub fn pos(atom: Atom, iv: Interval) -> Literal {
        Literal {
            atom,
            negated: false,
            annotation: AnnotationExpr::Const(iv),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparator {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        const E: f64 = 1e-9;
        match self {
            Comparator::Ge => lhs >= rhs - E,
            Comparator::Gt => lhs > rhs + E,
            Comparator::Le => lhs <= rhs + E,
            Comparator::Lt => lhs < rhs - E,
            Comparator::Eq => (lhs - rhs).abs() <= E,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Lt => "<",
            Comparator::Eq => "=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThresholdMode {
    Count,
    Percent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold {
    pub cmp: Comparator,
    pub mode: ThresholdMode,
    pub value: f64,
}

impl Default for Threshold {
    /// At least one satisfying grounding.
    fn default() -> Self {
        Threshold {
            cmp: Comparator::Ge,
            mode: ThresholdMode::Count,
            value: 1.0,
        }
    }
}

impl Threshold {
    /// `matched` satisfying atoms out of `total` known ones.
    pub fn passes(&self, matched: usize, total: usize) -> bool {
        match self.mode {
            ThresholdMode::Count => self.cmp.holds(matched as f64, self.value),
            ThresholdMode::Percent => {
                total > 0 && self.cmp.holds(100.0 * matched as f64 / total as f64, self.value)
            }
        }
    }

    /// Counting lower bounds can be refuted from a superset of the final count.
    pub fn is_monotone_count(&self) -> bool {
        self.mode == ThresholdMode::Count && matches!(self.cmp, Comparator::Ge | Comparator::Gt)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clause {
    pub literal: Literal,
    pub threshold: Threshold,
}

impl Clause {
    pub fn new(atom: Atom, bound: Interval) -> Clause {
        Clause {
            literal: Literal::pos(atom, bound),
            threshold: Threshold::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    /// `None` renders as `rule_<index>` (1-based) inside a program.
    pub name: Option<String>,
    pub head: Literal,
    pub body: Vec<Clause>,
    pub delay: u32,
    pub set_static: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("substitution leaves variable {0} unbound")]
    Incomplete(String),
    #[error("grounding collapses two body literals onto {0}")]
    Collapsed(String),
    #[error("negated literal {0} needs a constant annotation")]
    NegatedNonConstant(String),
}

impl Rule {
    pub fn vars(&self) -> BTreeSet<Sym> {
        let mut out: BTreeSet<Sym> = self.head.atom.vars().cloned().collect();
        for c in &self.body {
            out.extend(c.literal.atom.vars().cloned());
        }
        out
    }

    /// Replace every variable; rejects incomplete maps and collapsed bodies.
    pub fn ground(&self, subst: &BTreeMap<Sym, Sym>) -> Result<Rule, ModelError> {
        let sub_atom = |a: &Atom| -> Result<Atom, ModelError> {
            let args = a
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => subst
                        .get(v)
                        .map(|c| Term::Const(c.clone()))
                        .ok_or_else(|| ModelError::Incomplete(v.to_string())),
                    Term::Const(_) => Ok(t.clone()),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Atom {
                pred: a.pred.clone(),
                args,
            })
        };
        let mut out = self.clone();
        out.head.atom = sub_atom(&self.head.atom)?;
        let mut seen = BTreeSet::new();
        for (i, c) in self.body.iter().enumerate() {
            let g = sub_atom(&c.literal.atom)?;
            if !seen.insert(g.clone()) {
                return Err(ModelError::Collapsed(crate::parse::atom_text(&g)));
            }
            out.body[i].literal.atom = g;
        }
        Ok(out)
    }

    /// Fold negations into constant annotations, leaving only positive literals.
    pub fn normalized(&self) -> Result<Rule, ModelError> {
        let fix = |l: &Literal| -> Result<Literal, ModelError> {
            if !l.negated {
                return Ok(l.clone());
            }
            match l.annotation.as_const() {
                Some(iv) => Ok(Literal::pos(l.atom.clone(), negate(iv))),
                None => Err(ModelError::NegatedNonConstant(crate::parse::atom_text(&l.atom))),
            }
        };
        let mut out = self.clone();
        out.head = fix(&self.head)?;
        for (i, c) in self.body.iter().enumerate() {
            out.body[i].literal = fix(&c.literal)?;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalFact {
    pub atom: GroundAtom,
    pub interval: Interval,
    pub t_start: u32,
    pub t_end: u32,
    pub is_static: bool,
}

impl TemporalFact {
    pub fn new(atom: GroundAtom, interval: Interval, t_start: u32, t_end: u32) -> TemporalFact {
        TemporalFact {
            atom,
            interval,
            t_start,
            t_end,
            is_static: false,
        }
    }

    pub fn active_at(&self, t: u32) -> bool {
        self.t_start <= t && t <= self.t_end
    }
}

/// Declared naming function for binary predicate `pred`: an edge `pred(x, y)`
/// missing from the universe is created with `y = template(x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkolemConstructor {
    pub pred: Sym,
    /// `{}` is replaced by the known endpoint.
    pub template: String,
    /// Unary predicates asserted `[1,1]` on the new constant.
    pub with: Vec<Sym>,
}

impl SkolemConstructor {
    pub fn name_for(&self, known: &str) -> Sym {
        sym(&self.template.replace("{}", known))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub rules: Vec<Rule>,
    pub facts: Vec<TemporalFact>,
    pub ipl: Vec<(Sym, Sym)>,
    pub t_max: u32,
    /// Static universe atoms that on-demand grounding may materialize lazily.
    pub latent: Vec<TemporalFact>,
    pub skolem: Vec<SkolemConstructor>,
}

impl Program {
    pub fn rule_name(&self, i: usize) -> String {
        rule_display_name(&self.rules[i], i)
    }

    /// Predicates appearing anywhere in rules, facts, or the latent universe.
    pub fn predicates(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        for r in &self.rules {
            out.insert(r.head.atom.pred.clone());
            out.extend(r.body.iter().map(|c| c.literal.atom.pred.clone()));
        }
        out.extend(self.facts.iter().map(|f| f.atom.pred.clone()));
        out.extend(self.latent.iter().map(|f| f.atom.pred.clone()));
        out
    }
}

pub fn rule_display_name(r: &Rule, i: usize) -> String {
    r.name.clone().unwrap_or_else(|| format!("rule_{}", i + 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Rule name or fact rendering the message refers to.
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.subject, self.message)
    }
}

/// Check the structural invariants of rules, facts and IPL pairs.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |subject: String, message: &str| {
        out.push(Diagnostic {
            severity: Severity::Error,
            subject,
            message: message.to_string(),
        })
    };
    for (i, r) in program.rules.iter().enumerate() {
        let name = program.rule_name(i);
        let atoms = std::iter::once(&r.head.atom).chain(r.body.iter().map(|c| &c.literal.atom));
        if atoms.clone().any(|a| a.args.is_empty() || a.args.len() > 2) {
            err(name.clone(), "predicate arity must be 1 or 2");
        }
        if r.body.is_empty() {
            err(name.clone(), "empty body");
        }
        let mut seen = BTreeSet::new();
        for c in &r.body {
            if !seen.insert(&c.literal.atom) {
                err(name.clone(), "duplicate body literal");
            }
            if c.literal.annotation.as_const().is_none() {
                err(name.clone(), "body annotation must be an interval");
            }
            let t = c.threshold;
            if t.value < 0.0 || (t.mode == ThresholdMode::Percent && t.value > 100.0) {
                err(name.clone(), "threshold value out of range");
            }
        }
        if r.head.negated && r.head.annotation.as_const().is_none() {
            err(name.clone(), "negated head needs a constant annotation");
        }
        let mut vars = Vec::new();
        r.head.annotation.vars(&mut vars);
        if vars.iter().any(|&v| v >= r.body.len()) {
            err(name.clone(), "annotation variable refers to a missing body clause");
        }
        if let Err(e) = r.head.annotation.check_functions() {
            err(name.clone(), &e.to_string());
        }
        let body_vars: BTreeSet<&Sym> = r.body.iter().flat_map(|c| c.literal.atom.vars()).collect();
        if r.head.atom.vars().any(|v| !body_vars.contains(v)) {
            err(name.clone(), "head variable not bound by the body");
        }
    }
    for f in program.facts.iter().chain(program.latent.iter()) {
        let subject = crate::parse::fact_text(f);
        if f.t_start > f.t_end {
            out.push(Diagnostic {
                severity: Severity::Error,
                subject,
                message: "empty time range".into(),
            });
        } else if f.t_end > program.t_max {
            out.push(Diagnostic {
                severity: Severity::Warning,
                subject,
                message: "time range extends past t_max".into(),
            });
        }
    }
    let preds = program.predicates();
    for (p, q) in &program.ipl {
        for x in [p, q] {
            if !preds.contains(x) {
                out.push(Diagnostic {
                    severity: Severity::Error,
                    subject: format!("ipl ({p},{q})"),
                    message: format!("undeclared predicate {x}"),
                });
            }
        }
    }
    out
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}
