//! Scenario builders shared by the integration suites.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use latreason::engine::EngineConfig;
use latreason::lattice::Interval;
use latreason::model::{sym, GroundAtom, Program, TemporalFact};
use latreason::parse::graph::{write_graphml, Graph};
use latreason::parse::parse_fact;
use latreason::store::UpdateMode;

use super::program;

pub fn simple() -> (Program, EngineConfig) {
    let p = program(
        &["b(X):[1,1] <-1 a(X):[1,1]", "c(X):[1,1] <-0 b(X):[1,1]"],
        &["a(x):[1,1] @ [1,1]", "a(x):[1,1] @ [3,3]"],
        4,
    );
    (p, EngineConfig { t_max: 4, persistent: false, ..EngineConfig::default() })
}

pub const GEO_RULES: [&str; 4] = [
    "at(A,L2):[1,1] <-1 at(A,L1):[1,1], moveLeft(A):[1,1], speed(A,fast):[1,1], left(L1,L2):[1,1]",
    "at(A,L2):[1,1] <-2 at(A,L1):[1,1], moveRight(A):[1,1], speed(A,slow):[1,1], right(L1,L2):[1,1]",
    "at(A,L1):[0,0] <-1 at(A,L1):[1,1], moveLeft(A):[1,1]",
    "at(A,L1):[0,0] <-1 at(A,L1):[1,1], moveRight(A):[1,1]",
];

/// Two agents leave locMid at t=0: the fast car left, the slow patrol right.
/// The neighbouring locations exist only in the universe.
pub fn geo(ad_hoc: bool) -> (Program, EngineConfig) {
    let mut p = program(
        &GEO_RULES,
        &[
            "agent(footPatrol):[1,1] @ [0,2] static",
            "agent(patrolCar):[1,1] @ [0,2] static",
            "location(locMid):[1,1] @ [0,2] static",
            "speed(footPatrol,slow):[1,1] @ [0,2] static",
            "speed(patrolCar,fast):[1,1] @ [0,2] static",
            "at(footPatrol,locMid):[1,1] @ [0,0]",
            "at(patrolCar,locMid):[1,1] @ [0,0]",
            "moveLeft(patrolCar):[1,1] @ [0,0]",
            "moveRight(footPatrol):[1,1] @ [0,0]",
        ],
        2,
    );
    p.latent = ["left(locMid,locLeft)", "right(locMid,locRight)", "location(locLeft)", "location(locRight)"]
        .iter()
        .map(|a| parse_fact(&format!("{a}:[1,1] @ [0,2] static")).unwrap())
        .collect();
    let config = EngineConfig {
        t_max: 2,
        persistent: true,
        ad_hoc_grounding: ad_hoc,
        update_mode: UpdateMode::Override,
        transient: [sym("moveLeft"), sym("moveRight")].into(),
        ..EngineConfig::default()
    };
    (p, config)
}

/// `(t, at-atom, value)` expected from [`geo`].
pub fn geo_tafs() -> Vec<(u32, &'static str, Interval)> {
    let (t, f) = (Interval::TRUE, Interval::FALSE);
    vec![
        (0, "at(footPatrol,locMid)", t),
        (0, "at(patrolCar,locMid)", t),
        (1, "at(footPatrol,locMid)", f),
        (1, "at(patrolCar,locMid)", f),
        (1, "at(patrolCar,locLeft)", t),
        (2, "at(footPatrol,locMid)", f),
        (2, "at(patrolCar,locMid)", f),
        (2, "at(patrolCar,locLeft)", t),
        (2, "at(footPatrol,locRight)", t),
    ]
}

pub const KG_RULE: &str = "citizenOf(X,Y):[1,1] <-0 bornIn(X,Z):[1,1], cityIn(Z,Y):[1,1]";

pub fn kg_fig6_graph() -> Graph {
    Graph {
        nodes: vec![("ben".into(), vec![]), ("miami".into(), vec![]), ("usa".into(), vec![])],
        edges: vec![
            ("ben".into(), "miami".into(), vec![("bornIn".into(), 1.0)]),
            ("miami".into(), "usa".into(), vec![("cityIn".into(), 1.0)]),
        ],
    }
}

pub fn kg_fig6() -> Program {
    program(&[KG_RULE], &["bornIn(ben,miami):[1,1] @ [0,0]", "cityIn(miami,usa):[1,1] @ [0,0]"], 0)
}

pub const APPENDIX_C_TRIPLE: (&str, &str, &str) = ("Chelsy_Davy", "playsFor", "Panathinaikos_F.C.");
pub const APPENDIX_C_RULE: &str =
    "isAffiliatedTo(X,X0):[0.934,1] <-1 playsFor(X,X0):[0.1,1], Panathinaikos_F.C.(X0):[1,1]";

/// Training triples, test triples and rules of a KG where the test relation
/// is two rule applications away from the training data.
pub fn chained_kg(n: usize) -> (Vec<(String, String, String)>, Vec<(String, String, String)>, Vec<&'static str>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..n {
        train.push((format!("p{i}"), "bornIn".to_string(), format!("city{}", i % 3)));
        train.push((format!("p{i}"), "worksFor".to_string(), format!("org{i}")));
        test.push((format!("p{i}"), "citizenOf".to_string(), format!("country{}", i % 3)));
    }
    for c in 0..3 {
        train.push((format!("city{c}"), "cityIn".to_string(), format!("country{c}")));
    }
    // One-hop rule reaches the distractor relation only via a second step.
    let rules = vec![
        "livesIn(X,Y):[0.9,1] <-0 bornIn(X,Y):[1,1]",
        "citizenOf(X,Y):[0.8,1] <-0 livesIn(X,Z):[0.5,1], cityIn(Z,Y):[1,1]",
        "citizenOf(X,Y):[0.2,1] <-0 worksFor(X,Y):[1,1]",
    ];
    (train, test, rules)
}

fn cell(r: usize, c: usize, side: usize) -> String {
    format!("c{}", r * side + c)
}

/// Grid world with `2^res` cells per side. Agents start in opposite corners
/// and one agent acts per time point, round-robin, with seeded random moves.
/// The cell universe (obstacle flags and neighbour edges) is latent.
pub fn grid(res: u32, per_team: usize, actions: u32, seed: u64, ad_hoc: bool) -> (Program, EngineConfig) {
    let side = 1usize << res;
    let t_max = actions + 1;
    let dirs = [("Left", 0i64, -1i64), ("Right", 0, 1), ("Up", -1, 0), ("Down", 1, 0)];
    let mut rules = Vec::new();
    for (d, _, _) in dirs {
        let dl = d.to_lowercase();
        rules.push(format!(
            "m_{d}: at(A,N):[1,1] <-1 move{d}(A):[1,1], at(A,O):[1,1], {dl}(O,N):[1,1], blocked(N):[0,0]"
        ));
        rules.push(format!(
            "m_{d}_leave: at(A,O):[0,0] <-1 move{d}(A):[1,1], at(A,O):[1,1], {dl}(O,N):[1,1], blocked(N):[0,0]"
        ));
    }
    let obstacles: BTreeSet<String> = [cell(1, 1, side), cell(side - 2, side - 2, side), cell(side / 2, side / 2, side)].into();
    let mut latent = Vec::new();
    let stat = |a: GroundAtom, v: Interval| TemporalFact { is_static: true, ..TemporalFact::new(a, v, 0, t_max) };
    for r in 0..side {
        for c in 0..side {
            let here = cell(r, c, side);
            let v = if obstacles.contains(&here) { Interval::TRUE } else { Interval::FALSE };
            latent.push(stat(GroundAtom::unary("blocked", &here), v));
            for (d, dr, dc) in dirs {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if (0..side as i64).contains(&nr) && (0..side as i64).contains(&nc) {
                    let there = cell(nr as usize, nc as usize, side);
                    latent.push(stat(GroundAtom::binary(&d.to_lowercase(), &here, &there), Interval::TRUE));
                }
            }
        }
    }
    let mut agents = Vec::new();
    let mut facts = Vec::new();
    for i in 0..per_team {
        agents.push((format!("red{i}"), cell(0, i, side)));
        agents.push((format!("blue{i}"), cell(side - 1, side - 1 - i, side)));
    }
    for (a, at) in &agents {
        facts.push(TemporalFact::new(GroundAtom::binary("at", a, at), Interval::TRUE, 0, 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..actions {
        let (a, _) = &agents[k as usize % agents.len()];
        let (d, _, _) = dirs[rng.gen_range(0..4)];
        let t = k + 1;
        facts.push(TemporalFact::new(GroundAtom::unary(&format!("move{d}"), a), Interval::TRUE, t, t));
    }
    let rule_refs: Vec<&str> = rules.iter().map(String::as_str).collect();
    let mut p = program(&rule_refs, &[], t_max);
    p.facts = facts;
    p.latent = latent;
    let config = EngineConfig {
        t_max,
        persistent: true,
        ad_hoc_grounding: ad_hoc,
        update_mode: UpdateMode::Override,
        transient: dirs.iter().map(|(d, _, _)| sym(&format!("move{d}"))).collect(),
        ..EngineConfig::default()
    };
    (p, config)
}

pub const TABLE7_RULES: [&str; 14] = [
    "m_Down_off: moveDown(A):[0,0] <-1 moveDown(A):[1,1]",
    "m_Set_location: atLoc(A,Y):[1,1] <-1 moveDown(A):[1,1], atLoc(A,X):[1,1], downLoc(Y,X):[1,1]",
    "m_Rem_location: atLoc(A,X):[0,0] <-1 moveDown(A):[1,1], atLoc(A,X):[1,1], downLoc(Y,X):[1,1]",
    "m_Up_off: moveUp(A):[0,0] <-1 moveUp(A):[1,1]",
    "m_Set_location: atLoc(A,Y):[1,1] <-1 moveUp(A):[1,1], atLoc(A,X):[1,1], upLoc(Y,X):[1,1]",
    "m_Rem_location: atLoc(A,X):[0,0] <-1 moveUp(A):[1,1], atLoc(A,X):[1,1], upLoc(Y,X):[1,1]",
    "s_Left_off: shootLeftB(A):[0,0] <-1 shootLeftB(A):[1,1]",
    "s_Rem_location: atLoc(B,X):[0,0] <-1 direction(B,left):[1,1], atLoc(B,X):[1,1], leftLoc(Y,X):[1,1]",
    "s_Set_location: atLoc(B,Y):[1,1] <-1 direction(B,left):[1,1], atLoc(B,X):[1,1], leftLoc(Y,X):[1,1]",
    "s_Left_on: shootLeftB(A):[1,1] <-0 agent(A):[1,1], team(A,blue):[1,1], health(A):[0.1,1], ammo(A):[0.1,1], shootLeft(A):[1,1]",
    "s_Set_location: atLoc(B,Y):[1,1] <-0 shootLeft(A):[1,1], team(A,blue):[1,1], ammo(A):[0.1,1], bulletOf(A,B):[1,1], atLoc(A,X):[1,1], leftLoc(Y,X):[1,1]",
    "s_Set_dir: direction(B,left):[1,1] <-0 shootLeft(A):[1,1], team(A,blue):[1,1], ammo(A):[0.1,1], bulletOf(A,B):[1,1]",
    "m_Down_on: moveDown(A):[1,1] <-0 agent(A):[1,1], moveDir(A,down):[1,1], atLoc(A,X):[1,1], downLoc(Y,X):[1,1], blocked(Y):[0,0]",
    "m_Up_on: moveUp(A):[1,1] <-0 agent(A):[1,1], moveDir(A,up):[1,1], atLoc(A,X):[1,1], upLoc(Y,X):[1,1], blocked(Y):[0,0]",
];

/// 8x8 battle grid (cell 0 bottom-left, row above is +8) as GraphML.
pub fn battle_graph(blocked: &[u32]) -> String {
    let mut nodes = Vec::new();
    for c in 0..64u32 {
        let b = if blocked.contains(&c) { 1.0 } else { 0.0 };
        nodes.push((c.to_string(), vec![("blocked".to_string(), b)]));
    }
    nodes.push(("red-agent-1".into(), vec![("agent".into(), 1.0)]));
    nodes.push(("blue-agent-1".into(), vec![("agent".into(), 1.0), ("health".into(), 1.0), ("ammo".into(), 1.0)]));
    for n in ["blue-bullet-1", "red", "blue", "down", "up", "left"] {
        nodes.push((n.into(), vec![]));
    }
    let mut edges = vec![
        ("red-agent-1".to_string(), "red".to_string(), vec![("team".to_string(), 1.0)]),
        ("blue-agent-1".into(), "blue".into(), vec![("team".into(), 1.0)]),
        ("blue-agent-1".into(), "blue-bullet-1".into(), vec![("bulletOf".into(), 1.0)]),
    ];
    for x in 0..64u32 {
        if x >= 8 {
            edges.push(((x - 8).to_string(), x.to_string(), vec![("downLoc".into(), 1.0)]));
        }
        if x < 56 {
            edges.push(((x + 8).to_string(), x.to_string(), vec![("upLoc".into(), 1.0)]));
        }
        if x % 8 != 0 {
            edges.push(((x - 1).to_string(), x.to_string(), vec![("leftLoc".into(), 1.0)]));
        }
    }
    write_graphml(&Graph { nodes, edges })
}

pub fn battle_load(blocked: &[u32], red_at: u32, blue_at: u32) -> Value {
    json!({
        "cmd": "load",
        "graph": battle_graph(blocked),
        "rules": TABLE7_RULES,
        "facts": [
            format!("atLoc(red-agent-1,{red_at}):[1,1] @ [0,0]"),
            format!("atLoc(blue-agent-1,{blue_at}):[1,1] @ [0,0]"),
            "moveDown(red-agent-1):[0,0] @ [0,0]",
            "moveUp(red-agent-1):[0,0] @ [0,0]",
        ],
        "config": {
            "t_max": 30,
            "persistent": true,
            "update_mode": "override",
            "action_predicates": ["moveDir", "shootLeft"],
            "observation_predicates": ["atLoc"],
        },
    })
}

/// Actions queued before stepping to each listed time point.
pub fn table7_script() -> Vec<(u32, Vec<&'static str>)> {
    vec![
        (16, vec!["moveDir(red-agent-1,down):[1,1]"]),
        (17, vec!["moveDir(red-agent-1,down):[1,1]"]),
        (18, vec!["moveDir(red-agent-1,down):[1,1]", "shootLeft(blue-agent-1):[1,1]"]),
        (19, vec!["moveDir(red-agent-1,up):[1,1]"]),
        (20, vec!["moveDir(red-agent-1,up):[1,1]"]),
        (21, vec![]),
    ]
}

/// Rule rows of the published trace excerpt: (t, subject, predicate, old, new, rule).
pub const TABLE7_ROWS: [(u32, &str, &str, &str, &str, &str); 30] = [
    (16, "red-agent-1", "moveDown", "[0.0,0.0]", "[1.0,1.0]", "m_Down_on"),
    (17, "red-agent-1", "moveDown", "[1.0,1.0]", "[0.0,0.0]", "m_Down_off"),
    (17, "(red-agent-1,16)", "atLoc", "[0.0,1.0]", "[1.0,1.0]", "m_Set_location"),
    (17, "(red-agent-1,24)", "atLoc", "[1.0,1.0]", "[0.0,0.0]", "m_Rem_location"),
    (17, "red-agent-1", "moveDown", "[0.0,0.0]", "[1.0,1.0]", "m_Down_on"),
    (18, "red-agent-1", "moveDown", "[1.0,1.0]", "[0.0,0.0]", "m_Down_off"),
    (18, "(red-agent-1,8)", "atLoc", "[0.0,1.0]", "[1.0,1.0]", "m_Set_location"),
    (18, "(red-agent-1,16)", "atLoc", "[1.0,1.0]", "[0.0,0.0]", "m_Rem_location"),
    (18, "blue-agent-1", "shootLeftB", "[0.0,1.0]", "[1.0,1.0]", "s_Left_on"),
    (18, "(blue-bullet-1,3)", "atLoc", "[0.0,1.0]", "[1.0,1.0]", "s_Set_location"),
    (18, "(blue-bullet-1,left)", "direction", "[0.0,1.0]", "[1.0,1.0]", "s_Set_dir"),
    (18, "red-agent-1", "moveDown", "[0.0,0.0]", "[1.0,1.0]", "m_Down_on"),
    (19, "red-agent-1", "moveDown", "[1.0,1.0]", "[0.0,0.0]", "m_Down_off"),
    (19, "(red-agent-1,0)", "atLoc", "[0.0,1.0]", "[1.0,1.0]", "m_Set_location"),
    (19, "(red-agent-1,8)", "atLoc", "[1.0,1.0]", "[0.0,0.0]", "m_Rem_location"),
    (19, "blue-agent-1", "shootLeftB", "[1.0,1.0]", "[0.0,0.0]", "s_Left_off"),
    (19, "(blue-bullet-1,3)", "atLoc", "[1.0,1.0]", "[0.0,0.0]", "s_Rem_location"),
    (19, "(blue-bullet-1,2)", "atLoc", "[0.0,1.0]", "[1.0,1.0]", "s_Set_location"),
    (19, "red-agent-1", "moveUp", "[0.0,0.0]", "[1.0,1.0]", "m_Up_on"),
    (20, "red-agent-1", "moveUp", "[1.0,1.0]", "[0.0,0.0]", "m_Up_off"),
    (20, "(red-agent-1,8)", "atLoc", "[0.0,0.0]", "[1.0,1.0]", "m_Set_location"),
    (20, "(red-agent-1,0)", "atLoc", "[1.0,1.0]", "[0.0,0.0]", "m_Rem_location"),
    (20, "(blue-bullet-1,2)", "atLoc", "[1.0,1.0]", "[0.0,0.0]", "s_Rem_location"),
    (20, "(blue-bullet-1,1)", "atLoc", "[0.0,1.0]", "[1.0,1.0]", "s_Set_location"),
    (20, "red-agent-1", "moveUp", "[0.0,0.0]", "[1.0,1.0]", "m_Up_on"),
    (21, "red-agent-1", "moveUp", "[1.0,1.0]", "[0.0,0.0]", "m_Up_off"),
    (21, "(red-agent-1,16)", "atLoc", "[0.0,0.0]", "[1.0,1.0]", "m_Set_location"),
    (21, "(red-agent-1,8)", "atLoc", "[1.0,1.0]", "[0.0,0.0]", "m_Rem_location"),
    (21, "(blue-bullet-1,1)", "atLoc", "[1.0,1.0]", "[0.0,0.0]", "s_Rem_location"),
    (21, "(blue-bullet-1,0)", "atLoc", "[0.0,1.0]", "[1.0,1.0]", "s_Set_location"),
];

/// Rows of a JSON trace array as the tuple shape of [`TABLE7_ROWS`].
pub fn json_rows(trace: &Value) -> Vec<(u32, String, String, String, String, String)> {
    trace
        .as_array()
        .expect("trace array")
        .iter()
        .map(|e| {
            let s = |k: &str| e[k].as_str().unwrap_or_default().to_string();
            (e["t"].as_u64().unwrap() as u32, s("constant_symbols"), s("predicate"), s("old_annotation"), s("new_annotation"), s("rule_fired"))
        })
        .collect()
}
