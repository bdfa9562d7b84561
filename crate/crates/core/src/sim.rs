//! Step-based simulation sessions over newline-delimited JSON.
//!
//! A client loads a scenario (GraphML graph, rules, facts), queues action
//! facts for the next time point, steps the engine and reads back trace
//! deltas and observations. Scenarios signal the end of an episode by
//! deriving `terminal(outcome)`.

use std::collections::BTreeSet;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::engine::{Engine, EngineConfig, RunStatus};
use crate::lattice::Interval;
use crate::model::{sym, Program, Subject, Sym, TemporalFact};
use crate::parse::graph::{graph_facts, parse_graphml, GraphOptions};
use crate::parse::{ground_atom_text, parse_fact_at, parse_ground_atom, parse_rule_file};
use crate::store::UpdateMode;
use crate::trace;

pub const TERMINAL_PREDICATE: &str = "terminal";

const COMMANDS: [&str; 6] = ["load", "reset", "set_facts", "step", "query", "close"];

fn default_t_max() -> u32 {
    100
}
fn default_true() -> bool {
    true
}
fn default_mode() -> String {
    "override".into()
}
fn default_fp() -> usize {
    100
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_t_max")]
    pub t_max: u32,
    #[serde(default = "default_true")]
    pub persistent: bool,
    /// `override` or `sup`.
    #[serde(default = "default_mode")]
    pub update_mode: String,
    #[serde(default = "default_true")]
    pub static_graph_facts: bool,
    #[serde(default)]
    pub action_predicates: Vec<String>,
    /// `None` observes every non-bottom atom.
    #[serde(default)]
    pub observation_predicates: Option<Vec<String>>,
    /// Extra transient predicates; action predicates are always transient.
    #[serde(default)]
    pub transient: Vec<String>,
    #[serde(default = "default_fp")]
    pub max_fp_iterations: usize,
    #[serde(default)]
    pub atom_trace: bool,
    #[serde(default)]
    pub abort_on_inconsistency: bool,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_value(json!({})).expect("all fields defaulted")
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
enum Request {
    Load {
        #[serde(default)]
        graph: Option<String>,
        #[serde(default)]
        rules: Vec<String>,
        #[serde(default)]
        facts: Vec<String>,
        #[serde(default)]
        config: Option<SimConfig>,
    },
    Reset,
    SetFacts {
        facts: Vec<String>,
    },
    Step {
        #[serde(default = "one")]
        n: u32,
    },
    Query {
        atom: String,
        #[serde(default)]
        interval: Option<[f64; 2]>,
        #[serde(default)]
        t: Option<u32>,
    },
    Close,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Episode {
    Running,
    Terminal(String),
}

#[derive(Clone)]
struct Loaded {
    initial: Engine,
    engine: Engine,
    actions: BTreeSet<Sym>,
    observe: Option<BTreeSet<Sym>>,
    queued: Vec<TemporalFact>,
    episode: Episode,
}

/// One client's session. Requests are handled strictly in order.
#[derive(Clone, Default)]
pub struct Session {
    loaded: Option<Loaded>,
    closed: bool,
}

fn err(msg: impl std::fmt::Display) -> Value {
    json!({"ok": false, "error": msg.to_string()})
}

/// Build the scenario program and engine config from load arguments.
pub fn compile_scenario(
    graph: Option<&str>,
    rules: &[String],
    facts: &[String],
    cfg: &SimConfig,
) -> Result<(Program, EngineConfig), String> {
    let mode = match cfg.update_mode.to_ascii_lowercase().as_str() {
        "override" => UpdateMode::Override,
        "sup" => UpdateMode::Sup,
        other => return Err(format!("unknown update_mode `{other}`")),
    };
    let rf = parse_rule_file(&rules.join("\n")).map_err(|e| format!("rules: {e}"))?;
    let mut program = Program { rules: rf.rules, ipl: rf.ipl, skolem: rf.skolem, t_max: cfg.t_max, ..Program::default() };
    if let Some(g) = graph {
        let g = parse_graphml(g).map_err(|e| format!("graph: {e}"))?;
        let opts = GraphOptions { t_max: cfg.t_max, static_facts: cfg.static_graph_facts, ..GraphOptions::default() };
        program.facts.extend(graph_facts(&g, &opts).1);
    }
    for (i, f) in facts.iter().enumerate() {
        program.facts.push(parse_fact_at(f, 0).map_err(|e| format!("fact {i}: {e}"))?);
    }
    let transient: BTreeSet<Sym> = cfg.action_predicates.iter().chain(&cfg.transient).map(|p| sym(p)).collect();
    let config = EngineConfig {
        t_max: cfg.t_max,
        persistent: cfg.persistent,
        static_graph_facts: cfg.static_graph_facts,
        update_mode: mode,
        transient,
        max_fp_iterations: cfg.max_fp_iterations,
        atom_trace: cfg.atom_trace,
        abort_on_inconsistency: cfg.abort_on_inconsistency,
        threads: cfg.threads,
        ..EngineConfig::default()
    };
    Ok((program, config))
}

impl Session {
    pub fn new() -> Session {
        Session::default()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Engine of the loaded scenario.
    pub fn engine(&self) -> Option<&Engine> {
        self.loaded.as_ref().map(|l| &l.engine)
    }

    pub fn episode(&self) -> Option<&Episode> {
        self.loaded.as_ref().map(|l| &l.episode)
    }

    /// Handle one request line and return the response object.
    pub fn handle_line(&mut self, line: &str) -> Value {
        let v: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return err(format!("malformed request: {e}")),
        };
        self.handle(v)
    }

    pub fn handle(&mut self, request: Value) -> Value {
        match request.get("cmd").and_then(Value::as_str) {
            None => return err("missing `cmd`"),
            Some(c) if !COMMANDS.contains(&c) => return err(format!("unknown command `{c}`")),
            _ => {}
        }
        let req: Request = match serde_json::from_value(request) {
            Ok(r) => r,
            Err(e) => return err(format!("malformed request: {e}")),
        };
        match req {
            Request::Load { graph, rules, facts, config } => self.load(graph.as_deref(), &rules, &facts, config.unwrap_or_default()),
            Request::Reset => self.reset(),
            Request::SetFacts { facts } => self.set_facts(&facts),
            Request::Step { n } => self.step(n),
            Request::Query { atom, interval, t } => self.query(&atom, interval, t),
            Request::Close => {
                self.closed = true;
                json!({"ok": true, "closed": true})
            }
        }
    }

    fn load(&mut self, graph: Option<&str>, rules: &[String], facts: &[String], cfg: SimConfig) -> Value {
        let (program, config) = match compile_scenario(graph, rules, facts, &cfg) {
            Ok(x) => x,
            Err(e) => return err(e),
        };
        let mut engine = match Engine::new(program, config) {
            Ok(e) => e,
            Err(e) => return err(e),
        };
        if let Err(e) = engine.run_next() {
            return err(e);
        }
        let episode = terminal_of(&engine);
        let l = Loaded {
            initial: engine.clone(),
            engine,
            actions: cfg.action_predicates.iter().map(|p| sym(p)).collect(),
            observe: cfg.observation_predicates.as_ref().map(|ps| ps.iter().map(|p| sym(p)).collect()),
            queued: Vec::new(),
            episode,
        };
        let trace: Vec<Value> = l.engine.trace().iter().map(trace::to_json).collect();
        let resp = l.snapshot(trace);
        self.loaded = Some(l);
        resp
    }

    fn reset(&mut self) -> Value {
        let Some(l) = self.loaded.as_mut() else { return err("no scenario loaded") };
        l.engine = l.initial.clone();
        l.queued.clear();
        l.episode = terminal_of(&l.engine);
        l.snapshot(Vec::new())
    }

    fn set_facts(&mut self, facts: &[String]) -> Value {
        let Some(l) = self.loaded.as_mut() else { return err("no scenario loaded") };
        let t = l.engine.next_time();
        let mut parsed = Vec::new();
        for f in facts {
            let mut fact = match parse_fact_at(f, t) {
                Ok(x) => x,
                Err(e) => return err(format!("malformed fact `{f}`: {e}")),
            };
            if !l.actions.contains(&fact.atom.pred) {
                return err(format!("`{}` is not a declared action predicate", fact.atom.pred));
            }
            fact.t_start = t;
            fact.t_end = t;
            fact.is_static = false;
            parsed.push(fact);
        }
        let n = parsed.len();
        l.queued.extend(parsed);
        json!({"ok": true, "queued": n, "t": t})
    }

    fn step(&mut self, n: u32) -> Value {
        let Some(l) = self.loaded.as_mut() else { return err("no scenario loaded") };
        if let Episode::Terminal(o) = &l.episode {
            return err(format!("episode is terminal ({o}); reset first"));
        }
        let start = l.engine.trace().len();
        for _ in 0..n {
            let queued = std::mem::take(&mut l.queued);
            l.engine.add_session_facts(queued);
            match l.engine.run_next() {
                Ok(RunStatus::Converged) => {}
                Ok(status) => {
                    return err(format!("run stopped at t={} with status {status:?}", l.engine.next_time() - 1));
                }
                Err(e) => return err(e),
            }
            l.episode = terminal_of(&l.engine);
            if l.episode != Episode::Running {
                break;
            }
        }
        let trace: Vec<Value> = l.engine.trace()[start..].iter().map(trace::to_json).collect();
        l.snapshot(trace)
    }

    fn query(&self, atom: &str, interval: Option<[f64; 2]>, t: Option<u32>) -> Value {
        let Some(l) = self.loaded.as_ref() else { return err("no scenario loaded") };
        let a = match parse_ground_atom(atom) {
            Ok(a) => a,
            Err(e) => return err(format!("malformed atom `{atom}`: {e}")),
        };
        let mu = match interval {
            None => Interval::TRUE,
            Some([lo, hi]) => match Interval::new(lo, hi) {
                Ok(iv) => iv,
                Err(e) => return err(e),
            },
        };
        let Some(t) = t.or(l.engine.current_time()) else { return err("no time point computed") };
        match l.engine.check_entailment(&a, mu, t) {
            Ok(b) => json!({"ok": true, "entailed": b}),
            Err(e) => err(e),
        }
    }
}

impl Loaded {
    fn snapshot(&self, trace: Vec<Value>) -> Value {
        let t = self.engine.current_time();
        let observations: Vec<String> = t
            .and_then(|t| self.engine.dump_at(t).ok())
            .unwrap_or_default()
            .into_iter()
            .filter(|r| !r.value.is_bottom())
            .filter(|r| self.observe.as_ref().map_or(true, |o| o.contains(&r.atom.pred)))
            .map(|r| format!("{}:{}", ground_atom_text(&r.atom), r.value))
            .collect();
        let terminal = match &self.episode {
            Episode::Running => Value::Null,
            Episode::Terminal(o) => json!({"outcome": o}),
        };
        json!({"ok": true, "t": t, "trace": trace, "observations": observations, "terminal": terminal})
    }
}

fn terminal_of(engine: &Engine) -> Episode {
    let Some(t) = engine.current_time() else { return Episode::Running };
    let rows = engine.dump_at(t).unwrap_or_default();
    rows.iter()
        .filter(|r| &*r.atom.pred == TERMINAL_PREDICATE && r.value.lower > 0.0)
        .find_map(|r| match &r.atom.subject {
            Subject::Node(o) => Some(Episode::Terminal(o.to_string())),
            Subject::Edge(..) => None,
        })
        .unwrap_or(Episode::Running)
}

/// Serve one session over a line-oriented reader/writer pair until `close` or EOF.
pub fn serve<R: BufRead, W: Write>(reader: R, mut writer: W) -> io::Result<()> {
    let mut session = Session::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = session.handle_line(&line);
        writeln!(writer, "{resp}")?;
        writer.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

pub fn serve_stdio() -> io::Result<()> {
    let stdin = io::stdin();
    serve(stdin.lock(), io::stdout().lock())
}

fn serve_connection(stream: TcpStream) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve(reader, stream)
}

/// Accept connections forever, one session and thread per connection.
pub fn serve_tcp(listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        thread::spawn(move || {
            if let Err(e) = serve_connection(stream) {
                eprintln!("connection error: {e}");
            }
        });
    }
    Ok(())
}
