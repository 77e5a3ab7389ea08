//! Control-flow graphs and cyclomatic complexity, `M = E - N + 2P`, with P
//! counted as weakly connected components and parallel edges counted
//! individually.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use petgraph::algo::connected_components;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{AgentProgramIR, BlockKind};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlFlowGraph {
    pub label: String,
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl ControlFlowGraph {
    pub fn new(label: impl Into<String>) -> Self {
        ControlFlowGraph { label: label.into(), ..Default::default() }
    }

    pub fn add_node(&mut self, id: impl Into<String>) {
        let id = id.into();
        if !self.nodes.contains(&id) {
            self.nodes.push(id);
        }
    }

    pub fn add_edge(&mut self, from: impl Into<String>, to: impl Into<String>) {
        self.edges.push((from.into(), to.into()));
    }

    /// Disjoint union; node ids of `other` get a prefix to keep them apart.
    pub fn disjoint_union(&self, other: &ControlFlowGraph, prefix: &str) -> ControlFlowGraph {
        let mut g = self.clone();
        for n in &other.nodes {
            g.nodes.push(format!("{prefix}{n}"));
        }
        for (a, b) in &other.edges {
            g.edges.push((format!("{prefix}{a}"), format!("{prefix}{b}")));
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskBand {
    Low,
    Moderate,
    High,
    Severe,
}

impl fmt::Display for RiskBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub label: String,
    #[serde(rename = "E")]
    pub e: i64,
    #[serde(rename = "N")]
    pub n: i64,
    #[serde(rename = "P")]
    pub p: i64,
    #[serde(rename = "M")]
    pub m: i64,
    pub band: RiskBand,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("graph `{0}` has no nodes")]
    EmptyGraph(String),
    #[error("complexity must be at least 1, got {0}")]
    NonPositive(i64),
    #[error("graph `{label}`: edge {from} -> {to} has an undeclared endpoint")]
    Dangling { label: String, from: String, to: String },
    #[error("{line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("labels present on one side only: {}", .0.join(", "))]
    LabelMismatch(Vec<String>),
}

pub fn risk_band(m: i64) -> Result<RiskBand, AnalysisError> {
    Ok(match m {
        i64::MIN..=0 => return Err(AnalysisError::NonPositive(m)),
        1..=10 => RiskBand::Low,
        11..=20 => RiskBand::Moderate,
        21..=50 => RiskBand::High,
        _ => RiskBand::Severe,
    })
}

pub fn cyclomatic(g: &ControlFlowGraph) -> Result<ComplexityReport, AnalysisError> {
    if g.nodes.is_empty() {
        return Err(AnalysisError::EmptyGraph(g.label.clone()));
    }
    let mut pg: DiGraph<(), ()> = DiGraph::new();
    let mut idx = HashMap::new();
    for n in &g.nodes {
        idx.entry(n.as_str()).or_insert_with(|| pg.add_node(()));
    }
    for (a, b) in &g.edges {
        let (Some(&x), Some(&y)) = (idx.get(a.as_str()), idx.get(b.as_str())) else {
            return Err(AnalysisError::Dangling { label: g.label.clone(), from: a.clone(), to: b.clone() });
        };
        pg.add_edge(x, y, ());
    }
    let e = pg.edge_count() as i64;
    let n = pg.node_count() as i64;
    let p = connected_components(&pg) as i64;
    let m = e - n + 2 * p;
    // each component contributes E_c - N_c + 2 >= 1, so banding cannot fail
    let band = risk_band(m)?;
    Ok(ComplexityReport { label: g.label.clone(), e, n, p, m, band })
}

/// Flattens a program into one graph: a global `entry`, each handler body in
/// order (blocks renamed `h<i>_<id>`), and a global `exit`. The blocks that
/// fall through to a handler's Exit continue into the next handler.
pub fn extract_cfg(program: &AgentProgramIR) -> ControlFlowGraph {
    let mut g = ControlFlowGraph::new(&program.agent_name);
    g.add_node("entry");
    let mut pending: Vec<String> = vec!["entry".into()];
    for (i, h) in program.handlers.iter().enumerate() {
        let kind: HashMap<&str, BlockKind> = h.body.blocks.iter().map(|b| (b.id.as_str(), b.kind)).collect();
        let name = |id: &str| format!("h{i}_{id}");
        for b in h.body.blocks.iter().filter(|b| matches!(b.kind, BlockKind::Statement | BlockKind::Branch)) {
            g.add_node(name(&b.id));
        }
        let mut next_pending = Vec::new();
        for e in &h.body.edges {
            let sources: Vec<String> = match kind.get(e.from.as_str()) {
                Some(BlockKind::Entry) => pending.clone(),
                _ => vec![name(&e.from)],
            };
            match kind.get(e.to.as_str()) {
                Some(BlockKind::Exit) => next_pending.extend(sources),
                _ => {
                    for s in sources {
                        g.add_edge(s, name(&e.to));
                    }
                }
            }
        }
        pending = next_pending;
    }
    g.add_node("exit");
    for s in pending {
        g.add_edge(s, "exit");
    }
    g
}

// ---------------------------------------------------------------------------
// DOT subset

fn is_plain_id(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn quote(s: &str) -> String {
    if is_plain_id(s) {
        s.to_string()
    } else {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Writes every node as its own statement, then every edge.
pub fn export_cfg(g: &ControlFlowGraph) -> String {
    let mut s = format!("digraph {} {{\n", quote(&g.label));
    for n in &g.nodes {
        s += &format!("  {};\n", quote(n));
    }
    for (a, b) in &g.edges {
        s += &format!("  {} -> {};\n", quote(a), quote(b));
    }
    s += "}\n";
    s
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Sym(&'static str),
}

fn lex_dot(text: &str) -> Result<Vec<(Tok, usize, usize)>, AnalysisError> {
    let mut out = Vec::new();
    let mut in_block_comment = false;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut p = 0;
        while p < chars.len() {
            let c = chars[p];
            if in_block_comment {
                if c == '*' && chars.get(p + 1) == Some(&'/') {
                    in_block_comment = false;
                    p += 1;
                }
                p += 1;
                continue;
            }
            let err = |m: String| AnalysisError::Parse { line: ln, column: p + 1, message: m };
            if c.is_whitespace() {
                p += 1;
            } else if c == '/' && chars.get(p + 1) == Some(&'/') || c == '#' {
                break;
            } else if c == '/' && chars.get(p + 1) == Some(&'*') {
                in_block_comment = true;
                p += 2;
            } else if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                let start = p;
                while p < chars.len() && (chars[p].is_ascii_alphanumeric() || chars[p] == '_' || chars[p] == '.') {
                    p += 1;
                }
                out.push((Tok::Id(chars[start..p].iter().collect()), ln, start + 1));
            } else if c == '"' {
                let start = p;
                let mut s = String::new();
                p += 1;
                loop {
                    match chars.get(p) {
                        None => {
                            return Err(AnalysisError::Parse {
                                line: ln,
                                column: start + 1,
                                message: "unterminated string".into(),
                            })
                        }
                        Some('"') => break,
                        Some('\\') if p + 1 < chars.len() => {
                            s.push(chars[p + 1]);
                            p += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            p += 1;
                        }
                    }
                }
                p += 1;
                out.push((Tok::Id(s), ln, start + 1));
            } else if c == '-' && chars.get(p + 1) == Some(&'>') {
                out.push((Tok::Sym("->"), ln, p + 1));
                p += 2;
            } else if c == '-' && chars.get(p + 1) == Some(&'-') {
                return Err(err("undirected edge `--` in a digraph".into()));
            } else {
                let sym = match c {
                    '{' => "{",
                    '}' => "}",
                    '[' => "[",
                    ']' => "]",
                    ';' => ";",
                    ',' => ",",
                    '=' => "=",
                    _ => return Err(err(format!("unexpected character `{c}`"))),
                };
                out.push((Tok::Sym(sym), ln, p + 1));
                p += 1;
            }
        }
    }
    Ok(out)
}

/// Parses the DOT subset. Attribute lists and graph-level attribute
/// statements are skipped with a warning. If any node is declared by its own
/// statement, edges must only use declared nodes; otherwise edge endpoints
/// declare nodes implicitly.
pub fn import_cfg(text: &str) -> Result<(ControlFlowGraph, Vec<String>), AnalysisError> {
    let toks = lex_dot(text)?;
    let mut warnings = Vec::new();
    let end = (text.lines().count().max(1), 1);
    let at = |i: usize| toks.get(i).map_or(end, |t| (t.1, t.2));
    let perr = |i: usize, m: String| {
        let (line, column) = at(i);
        AnalysisError::Parse { line, column, message: m }
    };
    let mut i = 0;
    if let Some((Tok::Id(s), ..)) = toks.first() {
        if s == "strict" {
            i = 1;
        }
    }
    match toks.get(i) {
        Some((Tok::Id(s), ..)) if s == "digraph" => i += 1,
        _ => return Err(perr(i, "expected `digraph`".into())),
    }
    let mut label = String::new();
    if let Some((Tok::Id(s), ..)) = toks.get(i) {
        label = s.clone();
        i += 1;
    }
    if toks.get(i).map(|t| &t.0) != Some(&Tok::Sym("{")) {
        return Err(perr(i, "expected `{`".into()));
    }
    i += 1;

    let mut g = ControlFlowGraph::new(label);
    let mut declared: Vec<String> = Vec::new();
    let mut implicit: Vec<String> = Vec::new();
    let mut edge_pos: Vec<(String, String)> = Vec::new();

    let skip_attrs = |i: &mut usize, warnings: &mut Vec<String>| -> Result<(), AnalysisError> {
        if toks.get(*i).map(|t| &t.0) != Some(&Tok::Sym("[")) {
            return Ok(());
        }
        let (line, _) = at(*i);
        while let Some((t, ..)) = toks.get(*i) {
            *i += 1;
            if *t == Tok::Sym("]") {
                warnings.push(format!("line {line}: attributes ignored"));
                return Ok(());
            }
        }
        Err(perr(*i, "unclosed attribute list".into()))
    };

    loop {
        match toks.get(i) {
            None => return Err(perr(i, "missing `}`".into())),
            Some((Tok::Sym("}"), ..)) => {
                i += 1;
                break;
            }
            Some((Tok::Sym(";"), ..)) => i += 1,
            Some((Tok::Id(first), ln, _)) => {
                let first = first.clone();
                let ln = *ln;
                i += 1;
                if matches!(first.as_str(), "graph" | "node" | "edge")
                    && toks.get(i).map(|t| &t.0) == Some(&Tok::Sym("["))
                {
                    skip_attrs(&mut i, &mut warnings)?;
                    continue;
                }
                if toks.get(i).map(|t| &t.0) == Some(&Tok::Sym("=")) {
                    i += 1;
                    match toks.get(i) {
                        Some((Tok::Id(_), ..)) => i += 1,
                        _ => return Err(perr(i, "expected a value after `=`".into())),
                    }
                    warnings.push(format!("line {ln}: graph attribute `{first}` ignored"));
                    continue;
                }
                let mut chain = vec![first];
                while toks.get(i).map(|t| &t.0) == Some(&Tok::Sym("->")) {
                    i += 1;
                    match toks.get(i) {
                        Some((Tok::Id(n), ..)) => {
                            chain.push(n.clone());
                            i += 1;
                        }
                        _ => return Err(perr(i, "expected a node id after `->`".into())),
                    }
                }
                skip_attrs(&mut i, &mut warnings)?;
                if chain.len() == 1 {
                    if !declared.contains(&chain[0]) {
                        declared.push(chain[0].clone());
                    }
                } else {
                    for w in chain.windows(2) {
                        edge_pos.push((w[0].clone(), w[1].clone()));
                        for n in w {
                            if !implicit.contains(n) {
                                implicit.push(n.clone());
                            }
                        }
                    }
                }
                match toks.get(i) {
                    Some((Tok::Sym(";"), ..)) | Some((Tok::Sym("}"), ..)) | Some((Tok::Id(_), ..)) => {}
                    _ => return Err(perr(i, "expected `;`".into())),
                }
            }
            Some(_) => return Err(perr(i, "expected a statement".into())),
        }
    }
    if i < toks.len() {
        return Err(perr(i, "content after the closing `}`".into()));
    }
    if declared.is_empty() {
        g.nodes = implicit;
    } else {
        let known: HashSet<&String> = declared.iter().collect();
        if let Some((a, b)) = edge_pos.iter().find(|(a, b)| !known.contains(a) || !known.contains(b)) {
            return Err(AnalysisError::Dangling { label: g.label.clone(), from: a.clone(), to: b.clone() });
        }
        g.nodes = declared;
    }
    g.edges = edge_pos;
    if g.nodes.is_empty() {
        return Err(AnalysisError::EmptyGraph(g.label.clone()));
    }
    Ok((g, warnings))
}

// ---------------------------------------------------------------------------
// comparison

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonRow {
    pub label: String,
    pub m_a: i64,
    pub m_b: i64,
    pub delta_m: i64,
    pub delta_e: i64,
    pub delta_n: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub totals: ComparisonRow,
}

pub fn compare_reports(a: &[ComplexityReport], b: &[ComplexityReport]) -> Result<ComparisonTable, AnalysisError> {
    let ma: BTreeMap<&str, &ComplexityReport> = a.iter().map(|r| (r.label.as_str(), r)).collect();
    let mb: BTreeMap<&str, &ComplexityReport> = b.iter().map(|r| (r.label.as_str(), r)).collect();
    let mut odd: Vec<String> = ma.keys().filter(|k| !mb.contains_key(*k)).map(|k| k.to_string()).collect();
    odd.extend(mb.keys().filter(|k| !ma.contains_key(*k)).map(|k| k.to_string()));
    if !odd.is_empty() {
        odd.sort();
        return Err(AnalysisError::LabelMismatch(odd));
    }
    let mut totals = ComparisonRow { label: "TOTAL".into(), m_a: 0, m_b: 0, delta_m: 0, delta_e: 0, delta_n: 0 };
    let mut rows = Vec::new();
    for (label, x) in &ma {
        let y = mb[label];
        let row = ComparisonRow {
            label: label.to_string(),
            m_a: x.m,
            m_b: y.m,
            delta_m: y.m - x.m,
            delta_e: y.e - x.e,
            delta_n: y.n - x.n,
        };
        totals.m_a += row.m_a;
        totals.m_b += row.m_b;
        totals.delta_m += row.delta_m;
        totals.delta_e += row.delta_e;
        totals.delta_n += row.delta_n;
        rows.push(row);
    }
    Ok(ComparisonTable { rows, totals })
}

pub fn render_reports(reports: &[ComplexityReport]) -> String {
    let mut s = format!("{:<16} {:>4} {:>4} {:>3} {:>4}  {}\n", "label", "E", "N", "P", "M", "band");
    for r in reports {
        s += &format!("{:<16} {:>4} {:>4} {:>3} {:>4}  {}\n", r.label, r.e, r.n, r.p, r.m, r.band);
    }
    s
}

pub fn render_comparison(t: &ComparisonTable) -> String {
    let mut s = format!("{:<16} {:>4} {:>4} {:>4} {:>4} {:>4}\n", "label", "M_a", "M_b", "dM", "dE", "dN");
    for r in t.rows.iter().chain(std::iter::once(&t.totals)) {
        s += &format!(
            "{:<16} {:>4} {:>4} {:>+4} {:>+4} {:>+4}\n",
            r.label, r.m_a, r.m_b, r.delta_m, r.delta_e, r.delta_n
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(label: &str, n: usize, extra: usize) -> ControlFlowGraph {
        let mut g = ControlFlowGraph::new(label);
        for i in 0..n {
            g.add_node(format!("n{i}"));
        }
        for i in 1..n {
            g.add_edge(format!("n{}", i - 1), format!("n{i}"));
        }
        for k in 0..extra {
            g.add_edge(format!("n{}", k % (n - 2)), format!("n{}", k % (n - 2) + 2));
        }
        g
    }

    #[test]
    fn table_rows() {
        let r = cyclomatic(&chain("Operator", 8, 1)).unwrap();
        assert_eq!((r.e, r.n, r.p, r.m, r.band), (8, 8, 1, 2, RiskBand::Low));
        let r = cyclomatic(&chain("UVFManager", 19, 5)).unwrap();
        assert_eq!((r.e, r.n, r.p, r.m), (23, 19, 1, 6));
    }

    #[test]
    fn single_node_and_disjoint_copies() {
        let mut g = ControlFlowGraph::new("one");
        g.add_node("a");
        let r = cyclomatic(&g).unwrap();
        assert_eq!((r.e, r.n, r.p, r.m), (0, 1, 1, 1));
        let base = chain("x", 8, 1);
        let two = base.disjoint_union(&base, "copy_");
        let r = cyclomatic(&two).unwrap();
        assert_eq!((r.e, r.n, r.p, r.m), (16, 16, 2, 4));
        assert!(cyclomatic(&ControlFlowGraph::new("empty")).is_err());
    }

    #[test]
    fn bands() {
        let got: Vec<_> = [1, 6, 10, 11, 20, 21, 50, 51].iter().map(|&m| risk_band(m).unwrap()).collect();
        use RiskBand::*;
        assert_eq!(got, [Low, Low, Low, Moderate, Moderate, High, High, Severe]);
        assert!(risk_band(0).is_err());
    }

    #[test]
    fn dot_two_cycle() {
        let (g, w) = import_cfg("digraph g { a -> b; b -> a; }").unwrap();
        assert!(w.is_empty());
        let r = cyclomatic(&g).unwrap();
        assert_eq!((r.n, r.e, r.m), (2, 2, 2));
        assert_eq!(r.label, "g");
    }

    #[test]
    fn dot_rejections_and_warnings() {
        assert!(matches!(import_cfg("digraph g { }"), Err(AnalysisError::EmptyGraph(_))));
        assert!(matches!(import_cfg("digraph g { a; a -> b; }"), Err(AnalysisError::Dangling { .. })));
        let e = import_cfg("digraph g {\n a -> ;\n}").unwrap_err();
        assert!(matches!(e, AnalysisError::Parse { line: 2, .. }), "{e}");
        let (g, w) = import_cfg("digraph g { rankdir=LR; a [shape=box]; a -> b [label=\"x\"]; b; }").unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(g.edges.len(), 1);
        let (g, _) = import_cfg("digraph g { a -> b -> c }").unwrap();
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn export_import_identity() {
        let mut g = chain("MCC", 13, 3);
        g.add_edge("n5", "n5");
        g.add_edge("n1", "n2");
        let (back, _) = import_cfg(&export_cfg(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn compare() {
        let r = |l: &str, e: usize, n: usize| cyclomatic(&chain(l, n, e + 1 - n)).unwrap();
        let a = vec![r("Operator", 8, 8), r("UV", 8, 8)];
        let b = vec![r("UV", 12, 11), r("Operator", 12, 11)];
        let t = compare_reports(&a, &b).unwrap();
        assert_eq!(t.rows[0].label, "Operator");
        assert_eq!(t.rows.iter().map(|r| r.delta_m).collect::<Vec<_>>(), [1, 1]);
        assert_eq!(t.totals.delta_m, 2);
        assert!(compare_reports(&a, &a).unwrap().rows.iter().all(|r| r.delta_m == 0));
        let mut c = a.clone();
        c.push(r("Extra", 8, 8));
        assert_eq!(compare_reports(&a, &c), Err(AnalysisError::LabelMismatch(vec!["Extra".into()])));
    }
}
