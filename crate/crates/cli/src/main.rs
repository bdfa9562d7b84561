use std::collections::BTreeSet;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use latreason::engine::{stats_csv, Engine, EngineConfig, RunStatus};
use latreason::kg::{self, Direction, KgOptions};
use latreason::model::{sym, Program, Severity, TemporalFact};
use latreason::parse::graph::{graph_facts, parse_graphml, parse_triples, triple_facts, GraphOptions};
use latreason::parse::{parse_fact_file, parse_rule_file};
use latreason::report::{bound_report, bound_rows};
use latreason::sim;
use latreason::store::{dump_tsv, UpdateMode};
use latreason::trace::{self, Format};

const EXIT_USAGE: u8 = 1;
const EXIT_INCONSISTENT: u8 = 2;
const EXIT_CAP: u8 = 3;
const EXIT_BOUND_VIOLATED: u8 = 4;

#[derive(Parser)]
#[command(name = "latreason", version, about = "Temporal interval-logic reasoner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a program over every time point and write trace, dump and stats.
    Run(RunArgs),
    /// Knowledge-graph completion metrics for one or more step budgets.
    KgEval(KgArgs),
    /// Per-step atom growth against the growth bound, from a run's stats.csv.
    BoundReport(BoundArgs),
    /// Serve simulation sessions (newline-delimited JSON).
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sup,
    Override,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceFormatArg {
    Tsv,
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Tail,
    Head,
}

#[derive(Args)]
struct RunArgs {
    /// GraphML file, or tab-separated triples when the extension is .tsv/.txt.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    facts: Option<PathBuf>,
    /// Fact file of static universe atoms grounded on demand.
    #[arg(long)]
    universe: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    tmax: u32,
    #[arg(long)]
    persistent: bool,
    #[arg(long)]
    static_graph_facts: bool,
    /// Ground against the universe lazily (default).
    #[arg(long, overrides_with = "no_skolemize")]
    skolemize: bool,
    /// Materialize the whole universe at t=0.
    #[arg(long)]
    no_skolemize: bool,
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    parallel: bool,
    #[arg(long)]
    atom_trace: bool,
    #[arg(long)]
    verbose: bool,
    #[arg(long, default_value_t = 100)]
    max_fp_iter: usize,
    #[arg(long)]
    abort_on_inconsistency: bool,
    #[arg(long, value_enum, default_value = "sup")]
    update_mode: ModeArg,
    /// Comma-separated predicates reset at each time advance.
    #[arg(long, value_delimiter = ',')]
    transient: Vec<String>,
    /// Round head annotations to this many decimals.
    #[arg(long)]
    quantize: Option<u32>,
    #[arg(long, value_enum, default_value = "tsv")]
    trace_format: TraceFormatArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct KgArgs {
    /// Training graph: GraphML, or tab-separated triples.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    /// Tab-separated test triples.
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated step budgets, one metrics row each.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    steps: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,10")]
    k: Vec<usize>,
    #[arg(long)]
    filtered: bool,
    #[arg(long, value_enum, default_value = "tail")]
    direction: DirectionArg,
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    parallel: bool,
    /// Metrics CSV path; without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// Stats CSV written by `run`.
    #[arg(long, conflicts_with = "out_dir")]
    stats: Option<PathBuf>,
    /// Run output directory containing stats.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, conflicts_with = "stdio")]
    port: Option<u16>,
    #[arg(long)]
    stdio: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn is_triples(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("tsv" | "txt"))
}

fn load_graph(path: &Path, t_max: u32, is_static: bool) -> Result<Vec<TemporalFact>> {
    let text = read(path)?;
    if is_triples(path) {
        let triples = parse_triples(&text).with_context(|| format!("parsing {}", path.display()))?;
        return Ok(triple_facts(&triples, t_max, is_static));
    }
    let g = parse_graphml(&text).with_context(|| format!("parsing {}", path.display()))?;
    let opts = GraphOptions { t_max, static_facts: is_static, ..GraphOptions::default() };
    Ok(graph_facts(&g, &opts).1)
}

fn load_rules(path: &Path) -> Result<latreason::parse::RuleFile> {
    parse_rule_file(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_facts(path: &Path) -> Result<Vec<TemporalFact>> {
    parse_fact_file(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(a: RunArgs) -> Result<u8> {
    let rf = load_rules(&a.rules)?;
    let mut facts = Vec::new();
    if let Some(g) = &a.graph {
        facts.extend(load_graph(g, a.tmax, a.static_graph_facts)?);
    }
    if let Some(f) = &a.facts {
        facts.extend(load_facts(f)?);
    }
    let latent = match &a.universe {
        Some(u) => load_facts(u)?,
        None => Vec::new(),
    };
    let program = Program { rules: rf.rules, facts, ipl: rf.ipl, t_max: a.tmax, latent, skolem: rf.skolem };
    let config = EngineConfig {
        t_max: a.tmax,
        persistent: a.persistent,
        static_graph_facts: a.static_graph_facts,
        ad_hoc_grounding: !a.no_skolemize,
        parallel: a.parallel,
        atom_trace: a.atom_trace,
        verbose: a.verbose,
        max_fp_iterations: a.max_fp_iter,
        abort_on_inconsistency: a.abort_on_inconsistency,
        update_mode: match a.update_mode {
            ModeArg::Sup => UpdateMode::Sup,
            ModeArg::Override => UpdateMode::Override,
        },
        transient: a.transient.iter().map(|p| sym(p)).collect::<BTreeSet<_>>(),
        quantize: a.quantize,
        ..EngineConfig::default()
    };
    let mut engine = Engine::new(program, config)?;
    for d in engine.warnings() {
        if d.severity != Severity::Error {
            eprintln!("{d}");
        }
    }
    let status = engine.run_all()?;

    let (format, ext) = match a.trace_format {
        TraceFormatArg::Tsv => (Format::Tsv, "tsv"),
        TraceFormatArg::Csv => (Format::Csv, "csv"),
        TraceFormatArg::Jsonl => (Format::JsonLines, "jsonl"),
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write(&a.out_dir.join(format!("trace.{ext}")), &trace::export(engine.trace(), format))?;
    write(&a.out_dir.join("interpretation.tsv"), &dump_tsv(&engine.dump_all()))?;
    write(&a.out_dir.join("stats.csv"), &stats_csv(engine.stats()))?;
    for r in engine.inconsistencies() {
        eprintln!("inconsistency: {r:?}");
    }
    if a.verbose {
        eprintln!("status {status:?}, {} trace entries", engine.trace().len());
    }
    Ok(match status {
        RunStatus::Converged => 0,
        RunStatus::Inconsistent => EXIT_INCONSISTENT,
        RunStatus::CapExceeded => EXIT_CAP,
    })
}

fn cmd_kg_eval(a: KgArgs) -> Result<u8> {
    let mut facts = load_graph(&a.graph, 0, true)?;
    let rules = load_rules(&a.rules)?.rules;
    facts.extend(kg::identity_facts(&facts, &rules));
    let test = parse_triples(&read(&a.test)?).with_context(|| format!("parsing {}", a.test.display()))?;
    let direction = match a.direction {
        DirectionArg::Tail => Direction::Tail,
        DirectionArg::Head => Direction::Head,
    };
    if a.k.is_empty() || a.k.contains(&0) {
        bail!("--k values must be positive");
    }
    let qs = kg::queries(&test, direction);
    let opts = KgOptions { steps: 1, ks: a.k.clone(), filtered: a.filtered, parallel: a.parallel };
    let rows = kg::compare_steps(&facts, &rules, &qs, &a.steps, &opts)?;
    let csv = kg::metrics_csv(&rows);
    match &a.out {
        Some(p) => {
            write(p, &csv)?;
            print!("{}", kg::metrics_table(&rows));
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_bound_report(a: BoundArgs) -> Result<u8> {
    let path = match (&a.stats, &a.out_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.join("stats.csv"),
        (None, None) => bail!("one of --stats or --out-dir is required"),
    };
    let text = read(&path)?;
    let report = bound_report(&text).with_context(|| format!("reading {}", path.display()))?;
    match &a.out {
        Some(p) => write(p, &report)?,
        None => print!("{report}"),
    }
    let violated = bound_rows(&text)?.iter().filter(|r| r.violated()).count();
    if violated > 0 {
        eprintln!("{violated} step(s) exceed the growth bound");
        return Ok(EXIT_BOUND_VIOLATED);
    }
    Ok(0)
}

fn cmd_serve(a: ServeArgs) -> Result<u8> {
    if a.stdio {
        sim::serve_stdio()?;
        return Ok(0);
    }
    let Some(port) = a.port else { bail!("one of --port or --stdio is required") };
    let listener = TcpListener::bind(("127.0.0.1", port)).with_context(|| format!("binding port {port}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    sim::serve_tcp(listener)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::KgEval(a) => cmd_kg_eval(a),
        Command::BoundReport(a) => cmd_bound_report(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
