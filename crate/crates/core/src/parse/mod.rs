//! Text grammar for rules and facts, plus their serializers.
//!
//! ```text
//! rule   := [name ':'] ['~'] atom ':' annot '<-' [delay] clause (',' clause)* ['static']
//! clause := ['~'] atom ':' interval ['{' cmp ('count'|'percent') number '}']
//! fact   := atom ':' interval '@' '[' t1 ',' t2 ']' ['static']
//! annot  := interval | '$' index | fname '(' annot (',' annot)* ')'
//! ```
//!
//! In rules an unquoted term starting with an uppercase letter is a variable;
//! constants that would read as variables are written quoted (`'Chelsy_Davy'`).

pub mod graph;

use std::fmt::Write as _;

use thiserror::Error;

use crate::lattice::{fmt_bound, AnnotationExpr, Interval};
use crate::model::{
    sym, Atom, Clause, Comparator, GroundAtom, Literal, Rule, SkolemConstructor, Subject, Sym, TemporalFact, Term,
    Threshold, ThresholdMode,
};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Ctx {
    Rule,
    Fact,
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || "_.-/+&%!?*".contains(c)
}

impl Cursor {
    fn new(text: &str, line: usize) -> Cursor {
        Cursor {
            chars: text.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: self.line,
            col: self.pos + 1,
            message: message.into(),
        })
    }

    fn ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.ws();
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(got) => self.err(format!("expected `{c}`, found `{got}`")),
                None => self.err(format!("expected `{c}`, found end of input")),
            }
        }
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.chars.len() && is_ident_char(self.chars[self.pos]) {
            self.pos += 1;
        }
        if start == self.pos {
            return match self.chars.get(self.pos) {
                Some(c) => self.err(format!("expected identifier, found `{c}`")),
                None => self.err("expected identifier, found end of input"),
            };
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    /// Consume `word` if it appears as a whole identifier.
    fn keyword(&mut self, word: &str) -> bool {
        self.ws();
        let save = self.pos;
        match self.ident() {
            Ok(w) if w == word => true,
            _ => {
                self.pos = save;
                false
            }
        }
    }

    fn quoted(&mut self) -> Result<String, ParseError> {
        let q = self.chars[self.pos];
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos] != q {
            self.pos += 1;
        }
        if self.pos >= self.chars.len() {
            return self.err("unterminated quoted constant");
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        self.pos += 1;
        Ok(s)
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.chars.len() && (self.chars[self.pos].is_ascii_digit() || ".eE+-".contains(self.chars[self.pos])) {
            self.pos += 1;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        match s.parse::<f64>() {
            Ok(v) => Ok(v),
            Err(_) => {
                self.pos = start;
                self.err(format!("malformed number `{s}`"))
            }
        }
    }

    fn uint(&mut self) -> Result<u32, ParseError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<u32>().or_else(|_| {
            self.pos = start;
            self.err("expected a nonnegative integer")
        })
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        self.expect('[')?;
        let at = self.pos;
        let l = self.number()?;
        self.expect(',')?;
        let u = self.number()?;
        self.expect(']')?;
        Interval::new(l, u).or_else(|e| {
            self.pos = at;
            self.err(format!("malformed interval: {e}"))
        })
    }

    fn term(&mut self, ctx: Ctx) -> Result<Term, ParseError> {
        match self.peek() {
            Some('\'') | Some('"') => Ok(Term::Const(sym(&self.quoted()?))),
            _ => {
                let at = self.pos;
                let id = self.ident()?;
                let upper = id.chars().next().is_some_and(|c| c.is_uppercase());
                match (upper, ctx) {
                    (true, Ctx::Rule) => Ok(Term::Var(sym(&id))),
                    (true, Ctx::Fact) => {
                        self.pos = at;
                        self.err(format!("non-ground atom: `{id}` is a variable (quote it to use as a constant)"))
                    }
                    (false, _) => Ok(Term::Const(sym(&id))),
                }
            }
        }
    }

    fn atom(&mut self, ctx: Ctx) -> Result<Atom, ParseError> {
        let pred = self.ident()?;
        self.atom_args(pred, ctx)
    }

    fn atom_args(&mut self, pred: String, ctx: Ctx) -> Result<Atom, ParseError> {
        self.expect('(')?;
        let mut args = vec![self.term(ctx)?];
        while self.eat(',') {
            args.push(self.term(ctx)?);
        }
        self.expect(')')?;
        if args.len() > 2 {
            return self.err(format!("predicate `{pred}` has arity {}, only 1 or 2 supported", args.len()));
        }
        Ok(Atom { pred: sym(&pred), args })
    }

    fn annotation(&mut self) -> Result<AnnotationExpr, ParseError> {
        match self.peek() {
            Some('[') => Ok(AnnotationExpr::Const(self.interval()?)),
            Some('$') => {
                self.pos += 1;
                Ok(AnnotationExpr::Var(self.uint()? as usize))
            }
            _ => {
                let name = self.ident()?;
                self.expect('(')?;
                let mut args = vec![self.annotation()?];
                while self.eat(',') {
                    args.push(self.annotation()?);
                }
                self.expect(')')?;
                Ok(AnnotationExpr::Func(name, args))
            }
        }
    }

    fn threshold(&mut self) -> Result<Threshold, ParseError> {
        self.expect('{')?;
        self.ws();
        let two: String = self.chars[self.pos..].iter().take(2).collect();
        let (cmp, n) = match two.as_str() {
            ">=" => (Comparator::Ge, 2),
            "<=" => (Comparator::Le, 2),
            "==" => (Comparator::Eq, 2),
            _ => match two.chars().next() {
                Some('>') => (Comparator::Gt, 1),
                Some('<') => (Comparator::Lt, 1),
                Some('=') => (Comparator::Eq, 1),
                _ => return self.err(format!("unknown comparator `{two}`")),
            },
        };
        self.pos += n;
        let mode = match self.ident()?.as_str() {
            "count" => ThresholdMode::Count,
            "percent" => ThresholdMode::Percent,
            other => return self.err(format!("unknown threshold mode `{other}`")),
        };
        let value = self.number()?;
        self.expect('}')?;
        Ok(Threshold { cmp, mode, value })
    }

    fn literal_prefix(&mut self) -> bool {
        self.eat('~')
    }

    fn clause(&mut self) -> Result<Clause, ParseError> {
        let negated = self.literal_prefix();
        let atom = self.atom(Ctx::Rule)?;
        self.expect(':')?;
        let bound = self.interval()?;
        let threshold = if self.peek() == Some('{') { self.threshold()? } else { Threshold::default() };
        Ok(Clause {
            literal: Literal {
                atom,
                negated,
                annotation: AnnotationExpr::Const(bound),
            },
            threshold,
        })
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let mut name = None;
        let negated = self.literal_prefix();
        let first = self.ident()?;
        let head_atom = if !negated && self.peek() == Some(':') {
            name = Some(first);
            self.pos += 1;
            let neg = self.literal_prefix();
            let atom = self.atom(Ctx::Rule)?;
            (neg, atom)
        } else {
            (negated, self.atom_args(first, Ctx::Rule)?)
        };
        self.expect(':')?;
        let annotation = self.annotation()?;
        self.expect('<')?;
        if self.peek_at(0) != Some('-') {
            return self.err("expected `<-`");
        }
        self.pos += 1;
        let delay = match self.peek_at(0) {
            Some(c) if c.is_ascii_digit() => self.uint()?,
            _ => 0,
        };
        let mut body = vec![self.clause()?];
        while self.eat(',') {
            body.push(self.clause()?);
        }
        let set_static = self.keyword("static");
        if !self.at_end() {
            return self.err("unexpected trailing input");
        }
        Ok(Rule {
            name,
            head: Literal {
                atom: head_atom.1,
                negated: head_atom.0,
                annotation,
            },
            body,
            delay,
            set_static,
        })
    }

    /// `atom ':' interval` with an optional `@ [t1,t2]` and `static`.
    fn fact(&mut self, default_t: Option<u32>) -> Result<TemporalFact, ParseError> {
        let at = self.pos;
        let atom = self.atom(Ctx::Fact)?;
        let ground = match atom.to_ground() {
            Some(g) => g,
            None => {
                self.pos = at;
                return self.err("non-ground atom");
            }
        };
        self.expect(':')?;
        let interval = self.interval()?;
        let (t_start, t_end) = if self.eat('@') {
            self.expect('[')?;
            let t1 = self.uint()?;
            self.expect(',')?;
            let t2 = self.uint()?;
            self.expect(']')?;
            if t1 > t2 {
                return self.err(format!("time range [{t1},{t2}] is empty"));
            }
            (t1, t2)
        } else if let Some(t) = default_t {
            (t, t)
        } else {
            return self.err("expected `@ [t1,t2]`");
        };
        let is_static = self.keyword("static");
        if !self.at_end() {
            return self.err("unexpected trailing input");
        }
        Ok(TemporalFact {
            atom: ground,
            interval,
            t_start,
            t_end,
            is_static,
        })
    }
}

pub fn parse_interval(text: &str) -> Result<Interval, ParseError> {
    let mut c = Cursor::new(text, 1);
    let iv = c.interval()?;
    if !c.at_end() {
        return c.err("unexpected trailing input");
    }
    Ok(iv)
}

pub fn parse_rule(text: &str) -> Result<Rule, ParseError> {
    Cursor::new(text, 1).rule()
}

pub fn parse_fact(text: &str) -> Result<TemporalFact, ParseError> {
    Cursor::new(text, 1).fact(None)
}

/// Like [`parse_fact`] but a missing `@` range means the single time point `t`.
pub fn parse_fact_at(text: &str, t: u32) -> Result<TemporalFact, ParseError> {
    Cursor::new(text, 1).fact(Some(t))
}

pub fn parse_ground_atom(text: &str) -> Result<GroundAtom, ParseError> {
    let mut c = Cursor::new(text, 1);
    let a = c.atom(Ctx::Fact)?;
    if !c.at_end() {
        return c.err("unexpected trailing input");
    }
    a.to_ground().map_or_else(|| c.err("non-ground atom"), Ok)
}

/// Contents of a rule file: rules plus `ipl` and `skolem` directives.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleFile {
    pub rules: Vec<Rule>,
    pub ipl: Vec<(Sym, Sym)>,
    pub skolem: Vec<SkolemConstructor>,
}

fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, c) in line.char_indices() {
        match (c, quote) {
            ('\'' | '"', None) => quote = Some(c),
            (q, Some(open)) if q == open => quote = None,
            ('#', None) => return &line[..i],
            _ => {}
        }
    }
    line
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l).trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// One statement per line, `#` starts a comment.
///
/// Besides rules, a line may be `ipl p q` (complementary predicates) or
/// `skolem pred "template" [with p1, p2]` (naming function for new edges).
pub fn parse_rule_file(text: &str) -> Result<RuleFile, ParseError> {
    let mut out = RuleFile::default();
    for (n, line) in lines(text) {
        let mut c = Cursor::new(line, n);
        if c.keyword("ipl") && c.peek() != Some('(') && c.peek() != Some(':') {
            let p = c.ident()?;
            let q = c.ident()?;
            if !c.at_end() {
                return c.err("unexpected trailing input");
            }
            out.ipl.push((sym(&p), sym(&q)));
            continue;
        }
        let mut c = Cursor::new(line, n);
        if c.keyword("skolem") && c.peek() != Some('(') && c.peek() != Some(':') {
            let pred = c.ident()?;
            let template = match c.peek() {
                Some('"') | Some('\'') => c.quoted()?,
                _ => return c.err("expected quoted name template"),
            };
            let mut with = Vec::new();
            if c.keyword("with") {
                with.push(sym(&c.ident()?));
                while c.eat(',') {
                    with.push(sym(&c.ident()?));
                }
            }
            if !c.at_end() {
                return c.err("unexpected trailing input");
            }
            out.skolem.push(SkolemConstructor {
                pred: sym(&pred),
                template,
                with,
            });
            continue;
        }
        out.rules.push(Cursor::new(line, n).rule()?);
    }
    Ok(out)
}

pub fn parse_fact_file(text: &str) -> Result<Vec<TemporalFact>, ParseError> {
    lines(text).map(|(n, l)| Cursor::new(l, n).fact(None)).collect()
}

fn const_text(c: &str) -> String {
    let plain = !c.is_empty()
        && c.chars().all(is_ident_char)
        && !c.chars().next().is_some_and(|ch| ch.is_uppercase())
        && c != "static";
    if plain {
        c.to_string()
    } else if c.contains('\'') {
        format!("\"{c}\"")
    } else {
        format!("'{c}'")
    }
}

pub fn term_text(t: &Term) -> String {
    match t {
        Term::Var(v) => v.to_string(),
        Term::Const(c) => const_text(c),
    }
}

pub fn atom_text(a: &Atom) -> String {
    let args: Vec<String> = a.args.iter().map(term_text).collect();
    format!("{}({})", a.pred, args.join(","))
}

pub fn ground_atom_text(g: &GroundAtom) -> String {
    match &g.subject {
        Subject::Node(a) => format!("{}({})", g.pred, const_text(a)),
        Subject::Edge(a, b) => format!("{}({},{})", g.pred, const_text(a), const_text(b)),
    }
}

fn threshold_text(t: &Threshold) -> String {
    let mode = match t.mode {
        ThresholdMode::Count => "count",
        ThresholdMode::Percent => "percent",
    };
    format!("{{{} {} {}}}", t.cmp.symbol(), mode, fmt_bound(t.value))
}

pub fn rule_text(r: &Rule) -> String {
    let mut s = String::new();
    if let Some(n) = &r.name {
        let _ = write!(s, "{n}: ");
    }
    if r.head.negated {
        s.push('~');
    }
    let _ = write!(s, "{}:{} <-{} ", atom_text(&r.head.atom), r.head.annotation, r.delay);
    for (i, c) in r.body.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        if c.literal.negated {
            s.push('~');
        }
        let _ = write!(s, "{}:{}", atom_text(&c.literal.atom), c.literal.annotation);
        if c.threshold != Threshold::default() {
            let _ = write!(s, " {}", threshold_text(&c.threshold));
        }
    }
    if r.set_static {
        s.push_str(" static");
    }
    s
}

pub fn fact_text(f: &TemporalFact) -> String {
    let mut s = format!("{}:{} @ [{},{}]", ground_atom_text(&f.atom), f.interval, f.t_start, f.t_end);
    if f.is_static {
        s.push_str(" static");
    }
    s
}

pub fn rule_file_text(rf: &RuleFile) -> String {
    let mut s = String::new();
    for (p, q) in &rf.ipl {
        let _ = writeln!(s, "ipl {p} {q}");
    }
    for k in &rf.skolem {
        let _ = write!(s, "skolem {} \"{}\"", k.pred, k.template);
        if !k.with.is_empty() {
            let w: Vec<&str> = k.with.iter().map(|p| &**p).collect();
            let _ = write!(s, " with {}", w.join(", "));
        }
        s.push('\n');
    }
    for r in &rf.rules {
        let _ = writeln!(s, "{}", rule_text(r));
    }
    s
}
