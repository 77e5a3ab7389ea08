//! Seeded generators for property checks, each paired with the quantity an
//! independent oracle needs (component count, branch count, ...).

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore};

use amdd_core::analysis::ControlFlowGraph;
use amdd_core::codegen::{AgentProgramIR, BasicBlockGraph, Block, BlockEdge, BlockKind, Handler, Trigger};
use amdd_core::model::{
    AgentClass, Attribute, Cardinality, Method, Parameter, Relationship, RelationshipKind, SemanticType,
};
use amdd_core::plantuml::{parse_activity_diagram, parse_state_diagram, DiagramKind, DiagramSource};
use amdd_core::sim::SimConfig;
use amdd_core::SystemModel;

// ---------------------------------------------------------------------------
// graphs

/// Number of weakly connected components, by union-find.
pub fn components(g: &ControlFlowGraph) -> usize {
    let idx = |n: &str| g.nodes.iter().position(|x| x == n).unwrap();
    let mut parent: Vec<usize> = (0..g.nodes.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (a, b) in &g.edges {
        let (ra, rb) = (root(&mut parent, idx(a)), root(&mut parent, idx(b)));
        parent[ra] = rb;
    }
    (0..g.nodes.len()).filter(|&i| root(&mut parent, i) == i).count()
}

pub fn random_graph(rng: &mut impl RngCore, max_nodes: usize) -> ControlFlowGraph {
    let n = rng.random_range(1..=max_nodes);
    let e = rng.random_range(0..=2 * n);
    let mut g = ControlFlowGraph::new("g");
    for i in 0..n {
        g.add_node(format!("v{i}"));
    }
    for _ in 0..e {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        g.add_edge(format!("v{a}"), format!("v{b}"));
    }
    g
}

// ---------------------------------------------------------------------------
// structured programs

struct IrGen<'r, R: RngCore> {
    rng: &'r mut R,
    blocks: Vec<Block>,
    edges: Vec<BlockEdge>,
    to_exit: Vec<String>,
    branches: usize,
}

impl<R: RngCore> IrGen<'_, R> {
    fn add(&mut self, kind: BlockKind) -> String {
        let id = format!("b{}", self.blocks.len());
        if kind == BlockKind::Branch {
            self.branches += 1;
        }
        self.blocks.push(Block { id: id.clone(), kind, label: format!("{kind:?}") });
        id
    }

    fn link(&mut self, preds: &[String], to: &str) {
        for p in preds {
            self.edges.push(BlockEdge { from: p.clone(), to: to.to_string(), label: None });
        }
    }

    fn seq(&mut self, depth: usize, mut preds: Vec<String>) -> Vec<String> {
        let items = self.rng.random_range(1..=3);
        for _ in 0..items {
            let choice = if depth >= 3 { 0 } else { self.rng.random_range(0..4) };
            match choice {
                0 => {
                    let s = self.add(BlockKind::Statement);
                    self.link(&preds, &s);
                    preds = vec![s];
                }
                1 => {
                    let b = self.add(BlockKind::Branch);
                    self.link(&preds, &b);
                    let mut then = self.seq(depth + 1, vec![b.clone()]);
                    let other = self.seq(depth + 1, vec![b]);
                    then.extend(other);
                    preds = then;
                }
                2 => {
                    // guard: reject path leaves the handler
                    let b = self.add(BlockKind::Branch);
                    self.link(&preds, &b);
                    let r = self.add(BlockKind::Statement);
                    self.link(std::slice::from_ref(&b), &r);
                    self.to_exit.push(r);
                    preds = vec![b];
                }
                _ => {
                    let c = self.add(BlockKind::Branch);
                    self.link(&preds, &c);
                    let body = self.seq(depth + 1, vec![c.clone()]);
                    self.link(&body, &c);
                    preds = vec![c];
                }
            }
        }
        preds
    }
}

/// A program of 1..=4 structured handlers and its total branch count.
pub fn random_program(rng: &mut impl RngCore) -> (AgentProgramIR, usize) {
    let handlers = rng.random_range(1..=4);
    let mut program = AgentProgramIR { agent_name: "P".into(), attributes: vec![], handlers: vec![], guards: vec![] };
    let mut total = 0;
    for h in 0..handlers {
        let mut g = IrGen { rng: &mut *rng, blocks: vec![], edges: vec![], to_exit: vec![], branches: 0 };
        let entry = g.add(BlockKind::Entry);
        let mut tail = g.seq(0, vec![entry]);
        let exit = g.add(BlockKind::Exit);
        tail.append(&mut g.to_exit);
        g.link(&tail, &exit);
        total += g.branches;
        let body = BasicBlockGraph { blocks: g.blocks, edges: g.edges };
        body.check().expect("generated body is well formed");
        program.handlers.push(Handler { trigger: Trigger::Operation(format!("op{h}")), body });
    }
    (program, total)
}

// ---------------------------------------------------------------------------
// models

const CLASS_NAMES: &[&str] = &["Station", "Relay", "Scout", "Depot", "Tanker", "Sensor", "Hub", "Drone"];
const ATTR_NAMES: &[&str] = &["speed", "label", "count", "ready", "mode", "score"];
const METHOD_NAMES: &[&str] = &["start", "halt", "report", "move"];
const STATE_NAMES: &[&str] = &["Idle", "Busy", "Down", "Ready"];
const EVENTS: &[&str] = &["go", "stop", "fail", "fix"];
const ACTIONS: &[&str] = &["Plan", "Order", "check fuel", "Report", "log it", "Status"];

fn random_type(rng: &mut impl RngCore) -> SemanticType {
    match rng.random_range(0..6) {
        0 => SemanticType::Id,
        1 => SemanticType::String,
        2 => SemanticType::Integer,
        3 => SemanticType::Real,
        4 => SemanticType::Boolean,
        _ => SemanticType::Enum(vec!["On".into(), "Off".into()]),
    }
}

fn random_cardinality(rng: &mut impl RngCore) -> Option<Cardinality> {
    ["", "1", "0..1", "1..*", "*", "2..5"].choose(rng).and_then(|s| s.parse().ok())
}

fn random_class(rng: &mut impl RngCore, base: &str) -> AgentClass {
    let mut c = AgentClass::new(base);
    if rng.random_bool(0.25) {
        let cut = base.len() / 2;
        c.display_label = Some(format!("{}-{}", &base[..cut], &base[cut..]));
    }
    c.is_abstract = rng.random_bool(0.2);
    let mut attrs = ATTR_NAMES.to_vec();
    attrs.shuffle(rng);
    for name in attrs.iter().take(rng.random_range(0..=4)) {
        c.attributes.push(Attribute { name: name.to_string(), ty: random_type(rng) });
    }
    let mut methods = METHOD_NAMES.to_vec();
    methods.shuffle(rng);
    for name in methods.iter().take(rng.random_range(0..=3)) {
        let parameters =
            (0..rng.random_range(0..=2)).map(|i| Parameter { name: format!("p{i}"), ty: random_type(rng) }).collect();
        let return_type = rng.random_bool(0.4).then(|| random_type(rng));
        c.methods.push(Method { name: name.to_string(), parameters, return_type });
    }
    c
}

fn state_text(rng: &mut impl RngCore, owner: &str) -> String {
    let mut names = STATE_NAMES.to_vec();
    names.shuffle(rng);
    let tops = &names[..rng.random_range(1..=3)];
    let mut s = format!("@startuml\ntitle {owner}\n[*] --> {}\n", tops[0]);
    let mut all: Vec<String> = tops.iter().map(|t| t.to_string()).collect();
    for t in tops {
        s += &format!("state {t}\n");
    }
    if rng.random_bool(0.5) {
        s += "state Active {\n  [*] --> Low\n  state Low\n  state High\n}\n";
        all.extend(["Active", "Low", "High"].map(String::from));
    }
    for _ in 0..rng.random_range(0..=4) {
        let from = all.choose(rng).unwrap();
        let to = all.choose(rng).unwrap();
        let ev = EVENTS.choose(rng).unwrap();
        s += &format!("{from} --> {to} : {ev}");
        if rng.random_bool(0.3) {
            s += " [ok]";
        }
        if rng.random_bool(0.3) {
            s += " / note";
        }
        s.push('\n');
    }
    s + "@enduml\n"
}

fn activity_seq(rng: &mut impl RngCore, lanes: &[String], depth: usize, out: &mut String) {
    for _ in 0..rng.random_range(1..=3) {
        let pick = if depth >= 2 { rng.random_range(0..2) } else { rng.random_range(0..4) };
        match pick {
            0 => *out += &format!("|{}|\n", lanes.choose(rng).unwrap()),
            1 => *out += &format!(":{};\n", ACTIONS.choose(rng).unwrap()),
            2 => {
                *out += "if (ready?) then (yes)\n";
                *out += &format!(":{};\n", ACTIONS.choose(rng).unwrap());
                activity_seq(rng, lanes, depth + 1, out);
                if rng.random_bool(0.6) {
                    *out += "else (no)\n";
                    activity_seq(rng, lanes, depth + 1, out);
                }
                *out += "endif\n";
            }
            _ => {
                *out += "fork\n";
                for i in 0..rng.random_range(2..=3) {
                    if i > 0 {
                        *out += "fork again\n";
                    }
                    *out += &format!(":{};\n", ACTIONS.choose(rng).unwrap());
                    activity_seq(rng, lanes, depth + 1, out);
                }
                *out += "end fork\n";
            }
        }
    }
}

fn activity_text(rng: &mut impl RngCore, lanes: &[String]) -> String {
    let mut s = format!("@startuml\n|{}|\nstart\n:{};\n", lanes[0], ACTIONS.choose(rng).unwrap());
    activity_seq(rng, lanes, 0, &mut s);
    s + "stop\n@enduml\n"
}

/// A model in parser-canonical form: classes and relationships built
/// directly; state and activity diagrams produced as text and parsed.
pub fn random_model(rng: &mut impl RngCore) -> SystemModel {
    let mut names = CLASS_NAMES.to_vec();
    names.shuffle(rng);
    let names = &names[..rng.random_range(1..=6)];
    let mut model = SystemModel::empty("Gen", "0.1");
    model.classes = names.iter().map(|n| random_class(rng, n)).collect();

    for i in 1..names.len() {
        if rng.random_bool(0.3) {
            let parent = names[rng.random_range(0..i)];
            model.relationships.push(Relationship::new(RelationshipKind::Inheritance, names[i], parent));
        }
    }
    if names.len() > 1 {
        for _ in 0..rng.random_range(0..=3) {
            let a = names.choose(rng).unwrap();
            let b = names.choose(rng).unwrap();
            if a == b {
                continue;
            }
            let kind = *[RelationshipKind::Association, RelationshipKind::Composition, RelationshipKind::Aggregation]
                .choose(rng)
                .unwrap();
            if model.relationships.iter().any(|r| r.kind == kind && r.source == *a && r.target == *b) {
                continue;
            }
            let mut r = Relationship::new(kind, *a, *b);
            r.source_cardinality = random_cardinality(rng);
            r.target_cardinality = random_cardinality(rng);
            r.label = ["owns", "uses", "feeds"].choose(rng).filter(|_| rng.random_bool(0.5)).map(|s| s.to_string());
            model.relationships.push(r);
        }
    }

    let mut owners = names.to_vec();
    owners.shuffle(rng);
    for owner in owners.iter().take(rng.random_range(0..=2)) {
        let src = DiagramSource::inline(DiagramKind::State, state_text(rng, owner));
        model.state_machines.push(parse_state_diagram(&src).expect("generated state diagram parses"));
    }
    let lanes: Vec<String> = model.classes.iter().map(|c| c.display_name().to_string()).collect();
    for _ in 0..rng.random_range(0..=2) {
        let src = DiagramSource::inline(DiagramKind::Activity, activity_text(rng, &lanes));
        let flow = parse_activity_diagram(&src).unwrap_or_else(|e| panic!("{e}\n{}", src.text));
        model.activities.push(flow);
    }
    model
}

// ---------------------------------------------------------------------------
// simulation

pub fn random_sim_config(rng: &mut impl RngCore) -> SimConfig {
    let n = rng.random_range(0..=6);
    let mut cfg = SimConfig::ready(n, rng.next_u64());
    cfg.availability = (0..n).map(|_| rng.random_bool(0.8)).collect();
    cfg.registration = (0..n).map(|_| rng.random_bool(0.8)).collect();
    cfg
}
