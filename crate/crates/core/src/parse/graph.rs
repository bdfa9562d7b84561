//! GraphML and triple-list loaders that turn attributed graphs into facts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::lattice::Interval;
use crate::model::{sym, GroundAtom, Subject, Sym, TemporalFact};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("malformed GraphML: {0}")]
    Xml(String),
    #[error("edge {from}->{to} references unknown node `{missing}`")]
    DanglingEdge {
        from: String,
        to: String,
        missing: String,
    },
    #[error("attribute `{key}` on `{owner}` has non-numeric value `{value}`")]
    NonNumeric { owner: String, key: String, value: String },
    #[error("attribute `{key}` on `{owner}` is outside [0,1]: {value}")]
    OutOfRange { owner: String, key: String, value: f64 },
    #[error("line {line}: expected `head<TAB>relation<TAB>tail`")]
    Triple { line: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Graph {
    /// Node id and attributes (name, value in [0,1]).
    pub nodes: Vec<(String, Vec<(String, f64)>)>,
    pub edges: Vec<(String, String, Vec<(String, f64)>)>,
}

#[derive(Clone, Debug, Default)]
pub struct GraphOptions {
    pub t_max: u32,
    /// Mark generated facts static.
    pub static_facts: bool,
    /// Node ids that also act as unary predicates: `c(c):[1,1]` is emitted.
    pub identity_predicates: BTreeSet<String>,
}

fn parse_value(owner: &str, key: &str, raw: &str) -> Result<f64, GraphError> {
    let t = raw.trim();
    let v = match t.to_ascii_lowercase().as_str() {
        "true" => 1.0,
        "false" => 0.0,
        _ => t.parse::<f64>().map_err(|_| GraphError::NonNumeric {
            owner: owner.into(),
            key: key.into(),
            value: t.into(),
        })?,
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(GraphError::OutOfRange {
            owner: owner.into(),
            key: key.into(),
            value: v,
        });
    }
    Ok(v)
}

fn data_of(el: roxmltree::Node, owner: &str, keys: &BTreeMap<String, String>) -> Result<Vec<(String, f64)>, GraphError> {
    let mut out = Vec::new();
    for d in el.children().filter(|c| c.has_tag_name("data")) {
        let id = d.attribute("key").unwrap_or_default();
        let name = keys.get(id).cloned().unwrap_or_else(|| id.to_string());
        let v = parse_value(owner, &name, d.text().unwrap_or_default())?;
        out.push((name, v));
    }
    Ok(out)
}

/// Read nodes, edges and their `<data>` attributes. Key ids are mapped to
/// their `attr.name` when one is declared.
pub fn parse_graphml(text: &str) -> Result<Graph, GraphError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| GraphError::Xml(e.to_string()))?;
    let root = doc.root_element();
    let keys: BTreeMap<String, String> = root
        .descendants()
        .filter(|n| n.has_tag_name("key"))
        .filter_map(|k| Some((k.attribute("id")?.to_string(), k.attribute("attr.name")?.to_string())))
        .collect();
    let graph_el = root
        .descendants()
        .find(|n| n.has_tag_name("graph"))
        .ok_or_else(|| GraphError::Xml("no <graph> element".into()))?;
    let mut g = Graph::default();
    for n in graph_el.children().filter(|c| c.has_tag_name("node")) {
        let id = n.attribute("id").ok_or_else(|| GraphError::Xml("node without id".into()))?;
        g.nodes.push((id.to_string(), data_of(n, id, &keys)?));
    }
    let ids: BTreeSet<&str> = g.nodes.iter().map(|(id, _)| id.as_str()).collect();
    let mut edges = Vec::new();
    for e in graph_el.children().filter(|c| c.has_tag_name("edge")) {
        let (s, t) = match (e.attribute("source"), e.attribute("target")) {
            (Some(s), Some(t)) => (s, t),
            _ => return Err(GraphError::Xml("edge without source/target".into())),
        };
        for end in [s, t] {
            if !ids.contains(end) {
                return Err(GraphError::DanglingEdge {
                    from: s.into(),
                    to: t.into(),
                    missing: end.into(),
                });
            }
        }
        let owner = format!("({s},{t})");
        edges.push((s.to_string(), t.to_string(), data_of(e, &owner, &keys)?));
    }
    g.edges = edges;
    Ok(g)
}

/// Serialize with one `<key>` per attribute name (all typed `double`).
pub fn write_graphml(g: &Graph) -> String {
    let mut names: BTreeSet<&str> = BTreeSet::new();
    for (_, a) in &g.nodes {
        names.extend(a.iter().map(|(k, _)| k.as_str()));
    }
    for (_, _, a) in &g.edges {
        names.extend(a.iter().map(|(k, _)| k.as_str()));
    }
    let esc = |s: &str| s.replace('&', "&amp;").replace('"', "&quot;").replace('<', "&lt;").replace('>', "&gt;");
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for n in &names {
        let _ = writeln!(s, "  <key id=\"{0}\" for=\"all\" attr.name=\"{0}\" attr.type=\"double\"/>", esc(n));
    }
    s.push_str("  <graph edgedefault=\"directed\">\n");
    let data = |s: &mut String, attrs: &[(String, f64)]| {
        for (k, v) in attrs {
            let _ = writeln!(s, "      <data key=\"{}\">{}</data>", esc(k), v);
        }
    };
    for (id, attrs) in &g.nodes {
        let _ = writeln!(s, "    <node id=\"{}\">", esc(id));
        data(&mut s, attrs);
        s.push_str("    </node>\n");
    }
    for (a, b, attrs) in &g.edges {
        let _ = writeln!(s, "    <edge source=\"{}\" target=\"{}\">", esc(a), esc(b));
        data(&mut s, attrs);
        s.push_str("    </edge>\n");
    }
    s.push_str("  </graph>\n</graphml>\n");
    s
}

/// Constants and facts induced by a graph: one `[v,v]` fact per attribute,
/// valid on `[0, t_max]`.
pub fn graph_facts(g: &Graph, opts: &GraphOptions) -> (BTreeSet<Sym>, Vec<TemporalFact>) {
    let mut constants = BTreeSet::new();
    let mut facts = Vec::new();
    let mut push = |pred: &str, subject: Subject, v: f64| {
        facts.push(TemporalFact {
            atom: GroundAtom { pred: sym(pred), subject },
            interval: Interval { lower: v, upper: v },
            t_start: 0,
            t_end: opts.t_max,
            is_static: opts.static_facts,
        });
    };
    for (id, attrs) in &g.nodes {
        constants.insert(sym(id));
        for (k, v) in attrs {
            push(k, Subject::node(id), *v);
        }
        if opts.identity_predicates.contains(id) {
            push(id, Subject::node(id), 1.0);
        }
    }
    for (a, b, attrs) in &g.edges {
        for (k, v) in attrs {
            push(k, Subject::edge(a, b), *v);
        }
    }
    (constants, facts)
}

/// Tab-separated `head relation tail` lines; blank lines and `#` comments skipped.
pub fn parse_triples(text: &str) -> Result<Vec<(String, String, String)>, GraphError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim_end_matches(['\r', '\n']);
        if l.trim().is_empty() || l.trim_start().starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = l.split('\t').map(str::trim).collect();
        match parts.as_slice() {
            [h, r, t] if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                out.push((h.to_string(), r.to_string(), t.to_string()))
            }
            _ => return Err(GraphError::Triple { line: i + 1 }),
        }
    }
    Ok(out)
}

/// `r(h,t):[1,1]` over `[0, t_max]` for every triple.
pub fn triple_facts(triples: &[(String, String, String)], t_max: u32, is_static: bool) -> Vec<TemporalFact> {
    triples
        .iter()
        .map(|(h, r, t)| TemporalFact {
            atom: GroundAtom::binary(r, h, t),
            interval: Interval::TRUE,
            t_start: 0,
            t_end: t_max,
            is_static,
        })
        .collect()
}
