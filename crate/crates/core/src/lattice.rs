//! Interval annotations `[l,u]` and the lower semi-lattice built on them.
//!
//! The order is "tighter is higher": `[0,1]` is the bottom element and point
//! intervals sit at the top. Negation swaps and complements the endpoints.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for every equality and order comparison on bounds.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("interval bounds must lie in [0,1], got [{0},{1}]")]
    OutOfRange(f64, f64),
    #[error("interval lower bound {0} exceeds upper bound {1}")]
    Inverted(f64, f64),
    #[error("sup of an empty set")]
    EmptySup,
    #[error("unknown annotation function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: String,
        got: usize,
    },
    #[error("annotation variable ${0} has no binding")]
    Unbound(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const BOTTOM: Interval = Interval { lower: 0.0, upper: 1.0 };
    pub const TRUE: Interval = Interval { lower: 1.0, upper: 1.0 };
    pub const FALSE: Interval = Interval { lower: 0.0, upper: 0.0 };

    /// Checked constructor: both bounds in [0,1] and `lower <= upper`.
    pub fn new(lower: f64, upper: f64) -> Result<Self, LatticeError> {
        let iv = Self::raw(lower, upper)?;
        if lower > upper + EPS {
            return Err(LatticeError::Inverted(lower, upper));
        }
        Ok(iv)
    }

    /// Range-checked but allows `lower > upper`.
    pub fn raw(lower: f64, upper: f64) -> Result<Self, LatticeError> {
        let ok = |v: f64| v.is_finite() && (-EPS..=1.0 + EPS).contains(&v);
        if !ok(lower) || !ok(upper) {
            return Err(LatticeError::OutOfRange(lower, upper));
        }
        Ok(Interval {
            lower: lower.clamp(0.0, 1.0),
            upper: upper.clamp(0.0, 1.0),
        })
    }

    pub fn point(v: f64) -> Result<Self, LatticeError> {
        Self::new(v, v)
    }

    pub fn is_bottom(&self) -> bool {
        approx_eq(*self, Interval::BOTTOM)
    }

    /// Round both bounds to `k` decimal places.
    pub fn quantize(&self, k: u32) -> Interval {
        let f = 10f64.powi(k as i32);
        let lower = (self.lower * f).round() / f;
        let upper = (self.upper * f).round() / f;
        Interval {
            lower,
            upper: upper.max(lower),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", fmt_bound(self.lower), fmt_bound(self.upper))
    }
}

/// Shortest round-trip decimal, always with at least one fractional digit.
pub fn fmt_bound(v: f64) -> String {
    let s = format!("{}", v);
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn approx_eq(a: Interval, b: Interval) -> bool {
    (a.lower - b.lower).abs() <= EPS && (a.upper - b.upper).abs() <= EPS
}

/// Lattice order `a ⊑ b`: `b` is a sub-interval of `a`.
pub fn leq(a: Interval, b: Interval) -> bool {
    b.lower >= a.lower - EPS && b.upper <= a.upper + EPS
}

pub fn negate(a: Interval) -> Interval {
    Interval {
        lower: 1.0 - a.upper,
        upper: 1.0 - a.lower,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SupOutcome {
    Value(Interval),
    /// Two incomparable members whose bounds cross.
    Inconsistent(Interval, Interval),
}

/// Componentwise `[max l, min u]`.
pub fn sup(s: &[Interval]) -> Result<SupOutcome, LatticeError> {
    let first = *s.first().ok_or(LatticeError::EmptySup)?;
    let mut hi_lower = first;
    let mut lo_upper = first;
    for &iv in &s[1..] {
        if iv.lower > hi_lower.lower {
            hi_lower = iv;
        }
        if iv.upper < lo_upper.upper {
            lo_upper = iv;
        }
    }
    if hi_lower.lower > lo_upper.upper + EPS {
        return Ok(SupOutcome::Inconsistent(hi_lower, lo_upper));
    }
    let lower = hi_lower.lower;
    Ok(SupOutcome::Value(Interval {
        lower,
        upper: lo_upper.upper.max(lower),
    }))
}

/// Annotation expressions: constants, clause-value variables, function terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AnnotationExpr {
    Const(Interval),
    /// Value of the atom matched by the body clause at this index.
    Var(usize),
    Func(String, Vec<AnnotationExpr>),
}

impl AnnotationExpr {
    pub fn as_const(&self) -> Option<Interval> {
        match self {
            AnnotationExpr::Const(iv) => Some(*iv),
            _ => None,
        }
    }

    /// Every clause index referenced anywhere in the expression.
    pub fn vars(&self, out: &mut Vec<usize>) {
        match self {
            AnnotationExpr::Const(_) => {}
            AnnotationExpr::Var(i) => out.push(*i),
            AnnotationExpr::Func(_, args) => args.iter().for_each(|a| a.vars(out)),
        }
    }

    pub fn check_functions(&self) -> Result<(), LatticeError> {
        match self {
            AnnotationExpr::Func(name, args) => {
                check_arity(name, args.len())?;
                args.iter().try_for_each(|a| a.check_functions())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AnnotationExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotationExpr::Const(iv) => write!(f, "{iv}"),
            AnnotationExpr::Var(i) => write!(f, "${i}"),
            AnnotationExpr::Func(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn check_arity(name: &str, got: usize) -> Result<(), LatticeError> {
    let (ok, expected) = match name {
        "min" | "max" | "product" | "average" | "avg" => (got >= 1, "at least 1"),
        "neg" => (got == 1, "1"),
        _ => return Err(LatticeError::UnknownFunction(name.to_string())),
    };
    if ok {
        Ok(())
    } else {
        Err(LatticeError::Arity {
            name: name.to_string(),
            expected: expected.to_string(),
            got,
        })
    }
}

/// Evaluate `expr`; `bindings[i]` is the value matched by body clause `i`.
/// Function results are clamped into `[0,1]`.
pub fn eval_annotation(expr: &AnnotationExpr, bindings: &[Interval]) -> Result<Interval, LatticeError> {
    match expr {
        AnnotationExpr::Const(iv) => Ok(*iv),
        AnnotationExpr::Var(i) => bindings.get(*i).copied().ok_or(LatticeError::Unbound(*i)),
        AnnotationExpr::Func(name, args) => {
            check_arity(name, args.len())?;
            let vals = args
                .iter()
                .map(|a| eval_annotation(a, bindings))
                .collect::<Result<Vec<_>, _>>()?;
            let lows = vals.iter().map(|v| v.lower);
            let ups = vals.iter().map(|v| v.upper);
            let n = vals.len() as f64;
            let (l, u) = match name.as_str() {
                "min" => (lows.fold(1.0, f64::min), ups.fold(1.0, f64::min)),
                "max" => (lows.fold(0.0, f64::max), ups.fold(0.0, f64::max)),
                "product" => (lows.product(), ups.product()),
                "average" | "avg" => (lows.sum::<f64>() / n, ups.sum::<f64>() / n),
                "neg" => {
                    let v = negate(vals[0]);
                    (v.lower, v.upper)
                }
                _ => unreachable!("arity check rejects unknown names"),
            };
            let l = l.clamp(0.0, 1.0);
            let u = u.clamp(0.0, 1.0);
            Ok(Interval { lower: l, upper: u.max(l) })
        }
    }
}
