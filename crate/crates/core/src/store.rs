//! Interpretation store for the current time point.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{approx_eq, negate, sup, Interval, SupOutcome};
use crate::model::{GroundAtom, Subject, Sym};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub value: Interval,
    pub is_static: bool,
}

/// How a proposal combines with the stored value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpdateMode {
    /// `sup({current, proposal})`.
    #[default]
    Sup,
    /// The proposal replaces the current value.
    Override,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    Changed,
    Unchanged,
    Blocked,
    Inconsistent,
}

/// One annotation change, before the engine stamps it with a time and step.
#[derive(Clone, Debug, PartialEq)]
pub struct Change {
    pub atom: GroundAtom,
    pub old: Interval,
    pub new: Interval,
    pub source: Arc<str>,
    pub grounding: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InconsistencyRecord {
    pub time: u32,
    pub atom: GroundAtom,
    pub current: Interval,
    pub proposed: Interval,
    pub source: Arc<str>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot advance past t_max={0}")]
pub struct PastHorizon(pub u32);

pub const SRC_INCONSISTENCY: &str = "inconsistency";

pub fn check_consistency(candidate: Interval, current: Interval) -> bool {
    matches!(sup(&[candidate, current]), Ok(SupOutcome::Value(_)))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Store {
    time: u32,
    t_max: u32,
    entries: BTreeMap<GroundAtom, Entry>,
    pred_map: BTreeMap<Sym, BTreeSet<Subject>>,
    pred_filtered: BTreeMap<Sym, BTreeSet<Subject>>,
    fwd: BTreeMap<Sym, BTreeMap<Sym, BTreeSet<Sym>>>,
    rev: BTreeMap<Sym, BTreeMap<Sym, BTreeSet<Sym>>>,
    ipl: BTreeMap<Sym, Vec<Sym>>,
    transient: BTreeSet<Sym>,
    inconsistent: BTreeSet<GroundAtom>,
    records: Vec<InconsistencyRecord>,
}

static EMPTY_SUBJECTS: BTreeSet<Subject> = BTreeSet::new();
static EMPTY_SYMS: BTreeSet<Sym> = BTreeSet::new();

impl Store {
    /// `transient` predicates are reset on every time advance, even for persistent runs.
    pub fn new(t_max: u32, ipl: &[(Sym, Sym)], transient: BTreeSet<Sym>) -> Store {
        let mut map: BTreeMap<Sym, Vec<Sym>> = BTreeMap::new();
        for (p, q) in ipl {
            map.entry(p.clone()).or_default().push(q.clone());
            map.entry(q.clone()).or_default().push(p.clone());
        }
        Store {
            t_max,
            ipl: map,
            transient,
            ..Store::default()
        }
    }

    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn get(&self, atom: &GroundAtom) -> Interval {
        self.entries.get(atom).map_or(Interval::BOTTOM, |e| e.value)
    }

    /// Value of `atom`, or of its negation `¬atom`.
    pub fn get_literal(&self, atom: &GroundAtom, negated: bool) -> Interval {
        let v = self.get(atom);
        if negated {
            negate(v)
        } else {
            v
        }
    }

    pub fn entry(&self, atom: &GroundAtom) -> Option<&Entry> {
        self.entries.get(atom)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroundAtom, &Entry)> {
        self.entries.iter()
    }

    /// Subjects whose current `pred` annotation is not bottom.
    pub fn pred_filtered(&self, pred: &str) -> &BTreeSet<Subject> {
        self.pred_filtered.get(pred).unwrap_or(&EMPTY_SUBJECTS)
    }

    /// Subjects ever annotated with `pred`.
    pub fn pred_map(&self, pred: &str) -> &BTreeSet<Subject> {
        self.pred_map.get(pred).unwrap_or(&EMPTY_SUBJECTS)
    }

    pub fn predicates(&self) -> impl Iterator<Item = &Sym> {
        self.pred_filtered.iter().filter(|(_, s)| !s.is_empty()).map(|(p, _)| p)
    }

    /// Targets `y` with a known `pred(x, y)`.
    pub fn successors(&self, pred: &str, x: &str) -> &BTreeSet<Sym> {
        self.fwd.get(pred).and_then(|m| m.get(x)).unwrap_or(&EMPTY_SYMS)
    }

    /// Sources `x` with a known `pred(x, y)`.
    pub fn predecessors(&self, pred: &str, y: &str) -> &BTreeSet<Sym> {
        self.rev.get(pred).and_then(|m| m.get(y)).unwrap_or(&EMPTY_SYMS)
    }

    pub fn ipl_partners(&self, pred: &str) -> &[Sym] {
        self.ipl.get(pred).map_or(&[], |v| v.as_slice())
    }

    pub fn inconsistent_set(&self) -> &BTreeSet<GroundAtom> {
        &self.inconsistent
    }

    pub fn inconsistency_records(&self) -> &[InconsistencyRecord] {
        &self.records
    }

    /// Constants that occur in any stored entry.
    pub fn constants(&self) -> BTreeSet<Sym> {
        self.entries.keys().flat_map(|a| a.subject.constants().into_iter().cloned()).collect()
    }

    fn unindex(&mut self, atom: &GroundAtom) {
        if let Some(s) = self.pred_filtered.get_mut(&atom.pred) {
            s.remove(&atom.subject);
        }
        if let Subject::Edge(a, b) = &atom.subject {
            if let Some(m) = self.fwd.get_mut(&atom.pred).and_then(|m| m.get_mut(a)) {
                m.remove(b);
            }
            if let Some(m) = self.rev.get_mut(&atom.pred).and_then(|m| m.get_mut(b)) {
                m.remove(a);
            }
        }
    }

    fn index(&mut self, atom: &GroundAtom) {
        self.pred_filtered.entry(atom.pred.clone()).or_default().insert(atom.subject.clone());
        if let Subject::Edge(a, b) = &atom.subject {
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

    /// Raw write that keeps every index in sync. Bottom non-static values are dropped.
    fn set(&mut self, atom: &GroundAtom, value: Interval, is_static: bool) {
        self.pred_map.entry(atom.pred.clone()).or_default().insert(atom.subject.clone());
        let bottom = value.is_bottom();
        if bottom && !is_static {
            self.entries.remove(atom);
        } else {
            self.entries.insert(atom.clone(), Entry { value, is_static });
        }
        if bottom {
            self.unindex(atom);
        } else {
            self.index(atom);
        }
    }

    fn combine(&self, current: Interval, value: Interval, mode: UpdateMode) -> Option<Interval> {
        match mode {
            UpdateMode::Override => Some(value),
            UpdateMode::Sup => match sup(&[current, value]) {
                Ok(SupOutcome::Value(v)) => Some(v),
                _ => None,
            },
        }
    }

    /// Apply one proposal, then enforce IPL complements of the result.
    pub fn update(
        &mut self,
        atom: &GroundAtom,
        value: Interval,
        is_static: bool,
        mode: UpdateMode,
        source: &Arc<str>,
        grounding: Option<&str>,
        log: &mut Vec<Change>,
    ) -> UpdateOutcome {
        let cur = self.entries.get(atom).copied();
        if cur.is_some_and(|e| e.is_static) {
            return UpdateOutcome::Blocked;
        }
        let old = cur.map_or(Interval::BOTTOM, |e| e.value);
        let Some(new) = self.combine(old, value, mode) else {
            self.record_inconsistency(atom, old, value, source);
            self.resolve_inconsistency(atom, log);
            return UpdateOutcome::Inconsistent;
        };
        if approx_eq(old, new) && !is_static {
            return UpdateOutcome::Unchanged;
        }
        self.set(atom, new, is_static);
        if !approx_eq(old, new) {
            log.push(Change {
                atom: atom.clone(),
                old,
                new,
                source: source.clone(),
                grounding: grounding.map(str::to_string),
            });
        }
        if self.enforce_ipl(atom, mode, source, grounding, log) {
            return UpdateOutcome::Inconsistent;
        }
        if approx_eq(old, new) {
            UpdateOutcome::Unchanged
        } else {
            UpdateOutcome::Changed
        }
    }

    /// Set every IPL partner of `atom` to the complement of its value.
    /// Returns true if a partner turned out inconsistent.
    pub fn enforce_ipl(
        &mut self,
        atom: &GroundAtom,
        mode: UpdateMode,
        source: &Arc<str>,
        grounding: Option<&str>,
        log: &mut Vec<Change>,
    ) -> bool {
        let partners = self.ipl_partners(&atom.pred).to_vec();
        if partners.is_empty() {
            return false;
        }
        let want = negate(self.get(atom));
        for q in partners {
            let other = GroundAtom {
                pred: q,
                subject: atom.subject.clone(),
            };
            let cur = self.entries.get(&other).copied();
            let old = cur.map_or(Interval::BOTTOM, |e| e.value);
            if let Some(e) = cur.filter(|e| e.is_static) {
                if !check_consistency(want, e.value) || (mode == UpdateMode::Override && !approx_eq(want, e.value)) {
                    self.record_inconsistency(&other, old, want, source);
                    self.resolve_inconsistency(atom, log);
                    return true;
                }
                continue;
            }
            let Some(new) = self.combine(old, want, mode) else {
                self.record_inconsistency(&other, old, want, source);
                self.resolve_inconsistency(atom, log);
                return true;
            };
            if !approx_eq(old, new) {
                self.set(&other, new, false);
                log.push(Change {
                    atom: other,
                    old,
                    new,
                    source: source.clone(),
                    grounding: grounding.map(str::to_string),
                });
            }
        }
        false
    }

    pub fn record_inconsistency(&mut self, atom: &GroundAtom, current: Interval, proposed: Interval, source: &Arc<str>) {
        self.records.push(InconsistencyRecord {
            time: self.time,
            atom: atom.clone(),
            current,
            proposed,
            source: source.clone(),
        });
    }

    /// Quarantine `atom` and its IPL partners at `[0,1]`, pinned static.
    pub fn resolve_inconsistency(&mut self, atom: &GroundAtom, log: &mut Vec<Change>) {
        let src: Arc<str> = Arc::from(SRC_INCONSISTENCY);
        let mut targets = vec![atom.clone()];
        targets.extend(self.ipl_partners(&atom.pred).iter().map(|q| GroundAtom {
            pred: q.clone(),
            subject: atom.subject.clone(),
        }));
        for a in targets {
            let old = self.get(&a);
            self.set(&a, Interval::BOTTOM, true);
            self.inconsistent.insert(a.clone());
            log.push(Change {
                atom: a,
                old,
                new: Interval::BOTTOM,
                source: src.clone(),
                grounding: None,
            });
        }
    }

    /// Move to the next time point. Non-static entries reset to bottom when
    /// `persistent` is false; transient predicates always reset.
    pub fn advance_time(&mut self, persistent: bool) -> Result<(), PastHorizon> {
        if self.time >= self.t_max {
            return Err(PastHorizon(self.t_max));
        }
        self.time += 1;
        let reset: Vec<GroundAtom> = self
            .entries
            .iter()
            .filter(|(a, e)| !e.is_static && (!persistent || self.transient.contains(&a.pred)))
            .map(|(a, _)| a.clone())
            .collect();
        for a in reset {
            self.set(&a, Interval::BOTTOM, false);
        }
        Ok(())
    }

    /// Rows of the TSV dump, sorted by entity then predicate.
    pub fn dump_rows(&self) -> Vec<DumpRow> {
        let mut rows: Vec<DumpRow> = self
            .entries
            .iter()
            .map(|(a, e)| DumpRow {
                time: self.time,
                atom: a.clone(),
                value: e.value,
                is_static: e.is_static,
            })
            .collect();
        rows.sort_by(|a, b| (&a.atom.subject, &a.atom.pred).cmp(&(&b.atom.subject, &b.atom.pred)));
        rows
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DumpRow {
    pub time: u32,
    pub atom: GroundAtom,
    pub value: Interval,
    pub is_static: bool,
}

pub const DUMP_HEADER: &str = "time\tentity\tpredicate\tlower\tupper\tstatic";

pub fn dump_tsv(rows: &[DumpRow]) -> String {
    let mut s = String::from(DUMP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.time,
            r.atom.subject,
            r.atom.pred,
            crate::lattice::fmt_bound(r.value.lower),
            crate::lattice::fmt_bound(r.value.upper),
            r.is_static
        ));
    }
    s
}
