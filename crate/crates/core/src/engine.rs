//! Time-stepped fixpoint computation.
//!
//! At each time point: facts active at `t` are applied (step 0), then the
//! fixpoint operator is applied until nothing changes. Step 1 also receives
//! session facts and delayed heads that fall due at `t`. Every application
//! grounds the immediate rules against the state left by the previous one.
//! Delayed rules are grounded once on the converged state and their heads
//! scheduled for `t + delay`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grounder::{ground_rule, CompiledRule, Instance, Overlay, View};
use crate::lattice::{approx_eq, leq, sup, Interval, LatticeError, SupOutcome};
use crate::model::{has_errors, validate, Diagnostic, GroundAtom, ModelError, Program, Subject, Sym, TemporalFact};
use crate::store::{Change, DumpRow, Entry, InconsistencyRecord, PastHorizon, Store, UpdateMode, UpdateOutcome};
use crate::trace::{TraceEntry, FACT_SOURCE};

pub const SKOLEM_SOURCE: &str = "skolem";
pub const THREADS_ENV: &str = "LATREASON_THREADS";

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub t_max: u32,
    /// Keep non-static values across time points.
    pub persistent: bool,
    /// Loader hint: graph attributes become static facts.
    pub static_graph_facts: bool,
    /// Ground against the latent universe lazily instead of materializing it up front.
    pub ad_hoc_grounding: bool,
    pub parallel: bool,
    /// Record `X=a,…` groundings in the trace.
    pub atom_trace: bool,
    pub verbose: bool,
    /// Fixpoint applications allowed per time point.
    pub max_fp_iterations: usize,
    pub abort_on_inconsistency: bool,
    pub update_mode: UpdateMode,
    /// Predicates reset at every time advance even when `persistent`.
    pub transient: BTreeSet<Sym>,
    /// Round head annotations to this many decimals; enables the height-based cap.
    pub quantize: Option<u32>,
    /// Worker count; falls back to `LATREASON_THREADS`, then the rayon default.
    pub threads: Option<usize>,
    /// Keep the full state after every application (for inspection and tests).
    pub keep_iterates: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            t_max: 0,
            persistent: false,
            static_graph_facts: false,
            ad_hoc_grounding: true,
            parallel: true,
            atom_trace: false,
            verbose: false,
            max_fp_iterations: 100,
            abort_on_inconsistency: false,
            update_mode: UpdateMode::Sup,
            transient: BTreeSet::new(),
            quantize: None,
            threads: None,
            keep_iterates: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    Inconsistent,
    CapExceeded,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid program:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Horizon(#[from] PastHorizon),
    #[error("run stopped at t={t} with status {status:?}")]
    Halted { t: u32, status: RunStatus },
    #[error("time point {0} has not been computed")]
    NotRun(u32),
    #[error("time point {0} did not converge")]
    NotConverged(u32),
    #[error("max_fp_iterations must be at least 1")]
    ZeroCap,
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Counts after one fixpoint application.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    /// Global index over the whole run, starting at 1.
    pub step: usize,
    pub t: u32,
    pub fp_step: usize,
    pub counts: BTreeMap<Sym, usize>,
    pub total: usize,
    pub delta: i64,
    pub bound: u128,
}

pub const STATS_HEADER: &str = "step,predicate,count,delta_total,theorem4_bound";

/// One row per predicate plus a `*` total row per step.
pub fn stats_csv(stats: &[StepStats]) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for st in stats {
        for (p, n) in &st.counts {
            s.push_str(&format!("{},{},{},{},{}\n", st.step, csv_cell(p), n, st.delta, st.bound));
        }
        s.push_str(&format!("{},*,{},{},{}\n", st.step, st.total, st.delta, st.bound));
    }
    s
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `Σ_r Π_j |g(pred(body(r), j))|` over the program rules.
pub fn compute_growth_bound(program: &Program, counts: &BTreeMap<Sym, usize>) -> u128 {
    program
        .rules
        .iter()
        .map(|r| r.body.iter().map(|c| counts.get(&c.literal.atom.pred).copied().unwrap_or(0) as u128).product::<u128>())
        .sum()
}

/// State after one application, kept when `keep_iterates` is on.
#[derive(Clone, Debug)]
pub struct Iterate {
    pub t: u32,
    pub fp_step: usize,
    pub values: BTreeMap<GroundAtom, Interval>,
}

#[derive(Clone, Debug)]
struct Proposal {
    atom: GroundAtom,
    value: Interval,
    is_static: bool,
    source: Arc<str>,
    grounding: Option<String>,
    used: Vec<(GroundAtom, Interval)>,
}

#[derive(Clone)]
pub struct Engine {
    program: Program,
    config: EngineConfig,
    compiled: Vec<CompiledRule>,
    names: Vec<Arc<str>>,
    latent: Overlay,
    store: Store,
    pending: BTreeMap<u32, Vec<Instance>>,
    session: Vec<TemporalFact>,
    next_t: u32,
    status: RunStatus,
    halted: bool,
    trace: Vec<TraceEntry>,
    stats: Vec<StepStats>,
    history: BTreeMap<u32, (bool, BTreeMap<GroundAtom, Entry>)>,
    converged_counts: BTreeMap<u32, BTreeMap<Sym, usize>>,
    iterates: Vec<Iterate>,
    pool: Option<Arc<rayon::ThreadPool>>,
    warnings: Vec<Diagnostic>,
}

fn thread_count(config: &EngineConfig) -> Option<usize> {
    config
        .threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
}

impl Engine {
    pub fn new(mut program: Program, config: EngineConfig) -> Result<Engine, EngineError> {
        if config.max_fp_iterations == 0 {
            return Err(EngineError::ZeroCap);
        }
        program.t_max = config.t_max;
        let diags = validate(&program);
        if has_errors(&diags) {
            return Err(EngineError::Invalid(diags));
        }
        let compiled = program
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| CompiledRule::new(i, r))
            .collect::<Result<Vec<_>, _>>()?;
        let names = (0..program.rules.len()).map(|i| Arc::from(program.rule_name(i))).collect();
        let pool = if config.parallel {
            let mut b = rayon::ThreadPoolBuilder::new();
            if let Some(n) = thread_count(&config) {
                b = b.num_threads(n);
            }
            Some(Arc::new(b.build().map_err(|e| EngineError::Pool(e.to_string()))?))
        } else {
            None
        };
        let store = Store::new(config.t_max, &program.ipl, config.transient.clone());
        Ok(Engine {
            latent: Overlay::from_facts(&program.latent),
            program,
            compiled,
            names,
            store,
            pending: BTreeMap::new(),
            session: Vec::new(),
            next_t: 0,
            status: RunStatus::Converged,
            halted: false,
            trace: Vec::new(),
            stats: Vec::new(),
            history: BTreeMap::new(),
            converged_counts: BTreeMap::new(),
            iterates: Vec::new(),
            pool,
            warnings: diags,
            config,
        })
    }

    pub fn program(&self) -> &Program {
        &self.program
    }
    pub fn config(&self) -> &EngineConfig {
        &self.config
    }
    pub fn store(&self) -> &Store {
        &self.store
    }
    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }
    pub fn stats(&self) -> &[StepStats] {
        &self.stats
    }
    pub fn status(&self) -> RunStatus {
        self.status
    }
    pub fn warnings(&self) -> &[Diagnostic] {
        &self.warnings
    }
    pub fn iterates(&self) -> &[Iterate] {
        &self.iterates
    }
    pub fn inconsistencies(&self) -> &[InconsistencyRecord] {
        self.store.inconsistency_records()
    }
    pub fn is_halted(&self) -> bool {
        self.halted
    }
    /// Next time point `run_next` will compute.
    pub fn next_time(&self) -> u32 {
        self.next_t
    }
    /// Last computed time point.
    pub fn current_time(&self) -> Option<u32> {
        self.next_t.checked_sub(1).filter(|_| !self.history.is_empty())
    }

    /// Atoms ever written to the store.
    pub fn materialized_atoms(&self) -> usize {
        self.program
            .predicates()
            .iter()
            .chain(self.store.iter().map(|(a, _)| &a.pred))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|p| self.store.pred_map(p).len())
            .sum()
    }

    /// Facts applied at step 1 of time points in their range.
    pub fn add_session_facts(&mut self, facts: impl IntoIterator<Item = TemporalFact>) {
        self.session.extend(facts);
    }

    /// Compute every remaining time point.
    pub fn run_all(&mut self) -> Result<RunStatus, EngineError> {
        while !self.halted && self.next_t <= self.config.t_max {
            self.run_next()?;
        }
        Ok(self.status)
    }

    fn overlay(&self) -> Overlay {
        if !self.config.ad_hoc_grounding {
            return Overlay::default();
        }
        if self.program.skolem.is_empty() {
            self.latent.clone()
        } else {
            self.latent.with_skolem(&self.store, &self.program.skolem)
        }
    }

    fn ground_all(&self, view: &View, delayed: bool) -> Result<Vec<Instance>, EngineError> {
        let rules: Vec<&CompiledRule> = self.compiled.iter().filter(|r| (r.delay > 0) == delayed).collect();
        let results: Vec<Result<Vec<Instance>, LatticeError>> = match &self.pool {
            Some(pool) => pool.install(|| rules.par_iter().map(|r| ground_rule(r, view)).collect()),
            None => rules.iter().map(|r| ground_rule(r, view)).collect(),
        };
        let mut out = Vec::new();
        for r in results {
            out.extend(r?);
        }
        if let Some(k) = self.config.quantize {
            for i in &mut out {
                i.value = i.value.quantize(k);
            }
        }
        Ok(out)
    }

    fn proposal(&self, inst: Instance) -> Proposal {
        Proposal {
            grounding: self.config.atom_trace.then(|| inst.grounding_text()),
            source: self.names[inst.rule].clone(),
            atom: inst.head,
            value: inst.value,
            is_static: inst.set_static,
            used: inst.used,
        }
    }

    fn fact_proposal(f: &TemporalFact) -> Proposal {
        Proposal {
            atom: f.atom.clone(),
            value: f.interval,
            is_static: f.is_static,
            source: Arc::from(FACT_SOURCE),
            grounding: None,
            used: Vec::new(),
        }
    }

    fn flush(&mut self, t: u32, fp_step: usize, log: &mut Vec<Change>) {
        for c in log.drain(..) {
            self.trace.push(TraceEntry {
                t,
                fp_step,
                subject: c.atom.subject,
                predicate: c.atom.pred,
                old: c.old,
                new: c.new,
                source: c.source.to_string(),
                grounding: c.grounding,
            });
        }
    }

    fn view_counts(&self, overlay: &Overlay) -> BTreeMap<Sym, usize> {
        View { store: &self.store, overlay }.counts()
    }

    /// Store-then-overlay values, as dumps and entailment see them.
    fn view_entries(&self) -> BTreeMap<GroundAtom, Entry> {
        let mut out: BTreeMap<GroundAtom, Entry> = self.store.iter().map(|(a, e)| (a.clone(), *e)).collect();
        if self.config.ad_hoc_grounding {
            for (a, v) in self.latent.iter() {
                out.entry(a.clone()).or_insert(Entry { value: *v, is_static: true });
            }
        }
        out
    }

    /// Copy a latent atom into the store, along with the latent unary atoms of its constants.
    fn materialize(&mut self, atom: &GroundAtom, value: Interval, overlay: &Overlay, log: &mut Vec<Change>) {
        let src: Arc<str> = Arc::from(SKOLEM_SOURCE);
        if self.store.entry(atom).is_none() {
            self.store.update(atom, value, true, UpdateMode::Sup, &src, None, log);
        }
        for c in atom.subject.constants() {
            for u in overlay.unary_of(c) {
                if self.store.entry(u).is_none() {
                    let v = overlay.get(u).unwrap_or(Interval::BOTTOM);
                    self.store.update(u, v, true, UpdateMode::Sup, &src, None, log);
                }
            }
        }
    }

    /// A write to a universe atom that is not stored yet finds it static, as
    /// it would if the universe had been materialized up front.
    fn claim_latent(&mut self, atom: &GroundAtom, overlay: &Overlay, log: &mut Vec<Change>) {
        if self.store.entry(atom).is_none() {
            if let Some(v) = overlay.get(atom) {
                self.materialize(atom, v, overlay, log);
            }
        }
    }

    /// Apply proposals grouped per atom, in first-occurrence order.
    /// Returns true if an inconsistency was hit.
    fn apply(&mut self, proposals: Vec<Proposal>, overlay: &Overlay, log: &mut Vec<Change>) -> Result<bool, EngineError> {
        let mut order: Vec<GroundAtom> = Vec::new();
        let mut groups: BTreeMap<GroundAtom, Vec<Proposal>> = BTreeMap::new();
        for p in proposals {
            let g = groups.entry(p.atom.clone()).or_default();
            if g.is_empty() {
                order.push(p.atom.clone());
            }
            g.push(p);
        }
        let mut inconsistent = false;
        for atom in order {
            let group = groups.remove(&atom).expect("grouped above");
            for p in &group {
                for (u, v) in &p.used {
                    self.materialize(u, *v, overlay, log);
                }
            }
            self.claim_latent(&atom, overlay, log);
            let values: Vec<Interval> = group.iter().map(|p| p.value).collect();
            let is_static = group.iter().any(|p| p.is_static);
            match sup(&values)? {
                SupOutcome::Value(v) => {
                    // Attribute the change to the proposal at which the group reached its value.
                    let mut lead = 0;
                    for j in 0..values.len() {
                        if let SupOutcome::Value(w) = sup(&values[..=j])? {
                            if approx_eq(w, v) {
                                lead = j;
                                break;
                            }
                        }
                    }
                    let p = &group[lead];
                    let out = self.store.update(&atom, v, is_static, self.config.update_mode, &p.source, p.grounding.as_deref(), log);
                    inconsistent |= out == UpdateOutcome::Inconsistent;
                }
                SupOutcome::Inconsistent(a, b) => {
                    let cur = self.store.get(&atom);
                    let blocked = self.store.entry(&atom).is_some_and(|e| e.is_static);
                    if !blocked {
                        let src = group.iter().find(|p| approx_eq(p.value, b)).map_or(group[0].source.clone(), |p| p.source.clone());
                        self.store.record_inconsistency(&atom, cur, if approx_eq(cur, a) { b } else { a }, &src);
                        self.store.resolve_inconsistency(&atom, log);
                        inconsistent = true;
                    }
                }
            }
        }
        Ok(inconsistent)
    }

    /// Product bound of rule `r` over `counts`, times one plus its head's IPL partners.
    fn rule_bound(&self, r: &CompiledRule, counts: &BTreeMap<Sym, usize>) -> u128 {
        let prod: u128 = r.body_predicates().iter().map(|p| counts.get(p).copied().unwrap_or(0) as u128).product();
        prod * (1 + self.store.ipl_partners(r.head_predicate()).len() as u128)
    }

    fn cap(&self, overlay: &Overlay) -> usize {
        match self.config.quantize {
            Some(k) => {
                let c = self.theorem2_cap(k, overlay);
                usize::try_from(c).unwrap_or(usize::MAX).max(1)
            }
            None => self.config.max_fp_iterations,
        }
    }

    /// `height · |A| · t_max` for the lattice quantized to `k` decimals, with
    /// `A` all atoms over the current constants and program predicates.
    pub fn theorem2_cap(&self, k: u32, overlay: &Overlay) -> u128 {
        let view = View { store: &self.store, overlay };
        let n = view.constants().len() as u128;
        let mut arity: BTreeMap<Sym, usize> = BTreeMap::new();
        for r in &self.program.rules {
            arity.insert(r.head.atom.pred.clone(), r.head.atom.args.len());
            for c in &r.body {
                arity.insert(c.literal.atom.pred.clone(), c.literal.atom.args.len());
            }
        }
        for f in self.program.facts.iter().chain(&self.program.latent) {
            let a = match f.atom.subject {
                Subject::Node(_) => 1,
                Subject::Edge(..) => 2,
            };
            arity.insert(f.atom.pred.clone(), a);
        }
        let atoms: u128 = arity.values().map(|&a| n.saturating_pow(a as u32)).sum();
        10u128.saturating_pow(k).saturating_mul(atoms.max(1)).saturating_mul(self.config.t_max.max(1) as u128)
    }

    fn halt(&mut self, t: u32, status: RunStatus) -> RunStatus {
        self.status = status;
        self.halted = true;
        let entries = self.view_entries();
        self.history.insert(t, (false, entries));
        self.next_t = t + 1;
        if self.config.verbose {
            eprintln!("t={t}: stopped ({status:?})");
        }
        status
    }

    /// Compute the next time point.
    pub fn run_next(&mut self) -> Result<RunStatus, EngineError> {
        let t = self.next_t;
        if self.halted {
            return Err(EngineError::Halted { t, status: self.status });
        }
        if t > self.config.t_max {
            return Err(PastHorizon(self.config.t_max).into());
        }
        if t > 0 {
            self.store.advance_time(self.config.persistent)?;
        }
        let mode = self.config.update_mode;
        let abort = self.config.abort_on_inconsistency;
        let mut log = Vec::new();
        let mut inconsistent = false;
        // Without abort, inconsistencies are quarantined and recorded; the run continues.

        if t == 0 && !self.config.ad_hoc_grounding {
            let src: Arc<str> = Arc::from(FACT_SOURCE);
            let universe: Vec<(GroundAtom, Interval)> = self.latent.iter().map(|(a, v)| (a.clone(), *v)).collect();
            for (a, v) in universe {
                let out = self.store.update(&a, v, true, UpdateMode::Sup, &src, None, &mut log);
                inconsistent |= out == UpdateOutcome::Inconsistent;
            }
        }
        let src: Arc<str> = Arc::from(FACT_SOURCE);
        let facts: Vec<TemporalFact> = self.program.facts.iter().filter(|f| f.active_at(t)).cloned().collect();
        let base = self.overlay();
        for f in &facts {
            self.claim_latent(&f.atom, &base, &mut log);
            let out = self.store.update(&f.atom, f.interval, f.is_static, mode, &src, None, &mut log);
            inconsistent |= out == UpdateOutcome::Inconsistent;
        }
        self.flush(t, 0, &mut log);
        if inconsistent && abort {
            return Ok(self.halt(t, RunStatus::Inconsistent));
        }

        let session: Vec<Proposal> = self.session.iter().filter(|f| f.active_at(t)).map(Self::fact_proposal).collect();
        let mut due = self.pending.remove(&t).unwrap_or_default();
        due.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        due.dedup_by(|a, b| a.rule == b.rule && a.head == b.head && a.assignment == b.assignment && approx_eq(a.value, b.value));

        let mut overlay = self.overlay();
        let cap = self.cap(&overlay);
        let mut prev_counts = self.view_counts(&overlay);
        let mut converged = false;
        let mut session = Some(session);
        let mut due = Some(due);
        for k in 1..=cap {
            let view = View { store: &self.store, overlay: &overlay };
            let immediate = self.ground_all(&view, false)?;
            let mut bound: u128 = self
                .compiled
                .iter()
                .filter(|r| r.delay == 0)
                .map(|r| self.rule_bound(r, &prev_counts))
                .sum();
            let mut proposals = Vec::new();
            if k == 1 {
                let s = session.take().unwrap_or_default();
                bound += s.len() as u128;
                proposals.extend(s);
                for r in self.compiled.iter().filter(|r| r.delay > 0) {
                    if let Some(c) = t.checked_sub(r.delay).and_then(|t0| self.converged_counts.get(&t0)) {
                        bound += self.rule_bound(r, c);
                    }
                }
                let d = due.take().unwrap_or_default();
                proposals.extend(d.into_iter().map(|i| self.proposal(i)));
            }
            proposals.extend(immediate.into_iter().map(|i| self.proposal(i)));

            let hit = self.apply(proposals, &overlay, &mut log)?;
            let changed = !log.is_empty();
            self.flush(t, k, &mut log);

            if !self.program.skolem.is_empty() && self.config.ad_hoc_grounding {
                overlay = self.overlay();
            }
            let counts = self.view_counts(&overlay);
            let total: usize = counts.values().sum();
            let prev_total: usize = prev_counts.values().sum();
            self.stats.push(StepStats {
                step: self.stats.len() + 1,
                t,
                fp_step: k,
                total,
                delta: total as i64 - prev_total as i64,
                bound,
                counts: counts.clone(),
            });
            prev_counts = counts;
            if self.config.keep_iterates {
                let values = self.view_entries().into_iter().map(|(a, e)| (a, e.value)).collect();
                self.iterates.push(Iterate { t, fp_step: k, values });
            }
            if hit && abort {
                return Ok(self.halt(t, RunStatus::Inconsistent));
            }
            if !changed {
                converged = true;
                break;
            }
        }
        if !converged {
            return Ok(self.halt(t, RunStatus::CapExceeded));
        }

        let view = View { store: &self.store, overlay: &overlay };
        let delayed = self.ground_all(&view, true)?;
        for inst in delayed {
            let d = self.compiled[inst.rule].delay;
            let at = t.saturating_add(d);
            if at <= self.config.t_max {
                self.pending.entry(at).or_default().push(inst);
            }
        }
        self.converged_counts.insert(t, prev_counts);
        let entries = self.view_entries();
        self.history.insert(t, (true, entries));
        self.next_t = t + 1;
        if self.config.verbose {
            eprintln!("t={t}: converged, {} atoms", self.store.len());
        }
        Ok(self.status)
    }

    /// Value of `atom` at a computed time point.
    pub fn value_at(&self, atom: &GroundAtom, t: u32) -> Result<Interval, EngineError> {
        let (_, entries) = self.history.get(&t).ok_or(EngineError::NotRun(t))?;
        Ok(entries.get(atom).map_or(Interval::BOTTOM, |e| e.value))
    }

    /// Whether the least fixpoint at `t` entails `atom : mu`.
    pub fn check_entailment(&self, atom: &GroundAtom, mu: Interval, t: u32) -> Result<bool, EngineError> {
        let (ok, _) = self.history.get(&t).ok_or(EngineError::NotRun(t))?;
        if !ok {
            return Err(EngineError::NotConverged(t));
        }
        Ok(leq(mu, self.value_at(atom, t)?))
    }

    /// Dump rows of a computed time point: stored entries plus unmaterialized latent atoms.
    pub fn dump_at(&self, t: u32) -> Result<Vec<DumpRow>, EngineError> {
        let (_, entries) = self.history.get(&t).ok_or(EngineError::NotRun(t))?;
        let mut rows: Vec<DumpRow> = entries
            .iter()
            .map(|(a, e)| DumpRow { time: t, atom: a.clone(), value: e.value, is_static: e.is_static })
            .collect();
        rows.sort_by(|a, b| (&a.atom.subject, &a.atom.pred).cmp(&(&b.atom.subject, &b.atom.pred)));
        Ok(rows)
    }

    /// Dump rows for every computed time point, in time order.
    pub fn dump_all(&self) -> Vec<DumpRow> {
        self.history.keys().flat_map(|&t| self.dump_at(t).unwrap_or_default()).collect()
    }

    pub fn computed_times(&self) -> Vec<u32> {
        self.history.keys().copied().collect()
    }
}

/// Build and run an engine over every time point.
pub fn run(program: Program, config: EngineConfig) -> Result<Engine, EngineError> {
    let mut e = Engine::new(program, config)?;
    e.run_all()?;
    Ok(e)
}
