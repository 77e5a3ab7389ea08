//! Expected message protocol from an activity diagram, and trace checking
//! against it.
//!
//! An event is an artifact-labelled action whose flow crosses into another
//! partition. Events inside a fork region repeat once per tasked UV. Order
//! is the reachability partial order between event source nodes; per-UV
//! pairs are compared only within the same pair of endpoints, so concurrent
//! UV exchanges may interleave freely.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ident;
use crate::model::{ActivityFlow, NodeKind};
use crate::sim::{AclMessage, MessageTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Multiplicity {
    Once,
    PerTaskedUV,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpectedEvent {
    pub label: String,
    pub sender_role: String,
    pub receiver_role: String,
    pub multiplicity: Multiplicity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedProtocol {
    pub events: Vec<ExpectedEvent>,
    /// Covering edges of the partial order over event labels.
    pub order: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExpectedProtocol {
    pub fn event(&self, label: &str) -> Option<&ExpectedEvent> {
        self.events.iter().find(|e| e.label == label)
    }

    /// Transitive closure of `order`.
    pub fn precedes(&self) -> BTreeSet<(String, String)> {
        let mut out: BTreeSet<(String, String)> = self.order.iter().cloned().collect();
        loop {
            let extra: Vec<(String, String)> = out
                .iter()
                .flat_map(|(a, b)| out.iter().filter(move |(c, _)| c == b).map(move |(_, d)| (a.clone(), d.clone())))
                .filter(|p| !out.contains(p))
                .collect();
            if extra.is_empty() {
                return out;
            }
            out.extend(extra);
        }
    }
}

fn is_artifact(label: &str) -> bool {
    label.chars().next().is_some_and(|c| c.is_ascii_uppercase()) && ident::is_canonical(label)
}

fn reach(succ: &HashMap<&str, Vec<&str>>, from: &str, stop: impl Fn(&str) -> bool) -> HashSet<String> {
    let mut seen = HashSet::new();
    let mut queue: VecDeque<&str> = succ.get(from).into_iter().flatten().copied().collect();
    while let Some(n) = queue.pop_front() {
        if !seen.insert(n.to_string()) || stop(n) {
            continue;
        }
        queue.extend(succ.get(n).into_iter().flatten().copied());
    }
    seen
}

pub fn derive_expected(flow: &ActivityFlow) -> ExpectedProtocol {
    let succ = flow.successors();
    let kind = |id: &str| flow.node(id).map(|n| n.kind);
    let is_control =
        |id: &str| matches!(kind(id), Some(NodeKind::Decision | NodeKind::Merge | NodeKind::Fork | NodeKind::Join));

    // Nodes strictly inside some fork/join region.
    let mut in_fork: HashSet<String> = HashSet::new();
    for f in flow.nodes.iter().filter(|n| n.kind == NodeKind::Fork) {
        in_fork.extend(reach(&succ, &f.id, |n| kind(n) == Some(NodeKind::Join)));
    }

    let mut warnings = Vec::new();
    let mut events: Vec<ExpectedEvent> = Vec::new();
    let mut sources: Vec<(usize, String)> = Vec::new();
    for node in flow.nodes.iter().filter(|n| n.kind == NodeKind::Action) {
        let Some(from_lane) = node.partition.as_deref() else { continue };
        // Next action/final nodes, looking through control nodes.
        let mut targets: Vec<&str> = Vec::new();
        let mut queue: VecDeque<&str> = succ.get(node.id.as_str()).into_iter().flatten().copied().collect();
        let mut seen: HashSet<&str> = HashSet::new();
        while let Some(n) = queue.pop_front() {
            if !seen.insert(n) {
                continue;
            }
            if is_control(n) {
                queue.extend(succ.get(n).into_iter().flatten().copied());
            } else {
                targets.push(n);
            }
        }
        let crossing: Vec<&str> =
            targets.iter().filter_map(|t| flow.node(t)?.partition.as_deref()).filter(|p| *p != from_lane).collect();
        if crossing.is_empty() {
            continue;
        }
        if !is_artifact(&node.label) {
            warnings.push(format!("action `{}` crosses partitions but is not a concept name", node.label));
            continue;
        }
        let multiplicity = if in_fork.contains(&node.id) { Multiplicity::PerTaskedUV } else { Multiplicity::Once };
        for to_lane in crossing {
            let ev = ExpectedEvent {
                label: node.label.clone(),
                sender_role: from_lane.to_string(),
                receiver_role: to_lane.to_string(),
                multiplicity,
            };
            match events.iter().position(|e| *e == ev) {
                Some(i) => sources.push((i, node.id.clone())),
                None => {
                    events.push(ev);
                    sources.push((events.len() - 1, node.id.clone()));
                }
            }
        }
    }
    if events.is_empty() {
        warnings.push("flow has no cross-partition edges; the protocol is empty".into());
        return ExpectedProtocol { events, order: Vec::new(), warnings };
    }

    // Reachability between event labels, keeping only antisymmetric pairs.
    let mut closure: BTreeSet<(String, String)> = BTreeSet::new();
    for (i, src) in &sources {
        let reached = reach(&succ, src, |_| false);
        for (j, other) in &sources {
            let (a, b) = (&events[*i].label, &events[*j].label);
            if a != b && reached.contains(other) {
                closure.insert((a.clone(), b.clone()));
            }
        }
    }
    let closure: BTreeSet<(String, String)> =
        closure.iter().filter(|(a, b)| !closure.contains(&(b.clone(), a.clone()))).cloned().collect();
    let mut order: Vec<(String, String)> = closure
        .iter()
        .filter(|(a, c)| !closure.iter().any(|(x, b)| x == a && b != c && closure.contains(&(b.clone(), c.clone()))))
        .cloned()
        .collect();
    // Present edges in event order rather than alphabetically.
    let pos = |l: &str| events.iter().position(|e| e.label == l).unwrap_or(usize::MAX);
    order.sort_by_key(|(a, b)| (pos(a), pos(b)));
    ExpectedProtocol { events, order, warnings }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Conformant,
    ConformantWithNovelEvents,
    Violating,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedEvent {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderViolation {
    pub earlier: String,
    pub later: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub verdict: Verdict,
    pub matched: Vec<MatchedEvent>,
    pub novel: Vec<String>,
    pub missing: Vec<String>,
    #[serde(rename = "orderViolations")]
    pub order_violations: Vec<OrderViolation>,
    /// Messages that reuse an expected concept but contradict it: wrong
    /// roles, repeats of a once-only event, or unequal per-UV counts.
    pub conflicting: Vec<String>,
    pub strict: bool,
}

impl ConformanceReport {
    pub fn render(&self) -> String {
        let mut s = format!("verdict: {:?}\n", self.verdict);
        for m in &self.matched {
            let _ = writeln!(s, "  matched  {} x{}", m.label, m.count);
        }
        for n in &self.novel {
            let tag = if self.strict { "novel (strict violation)" } else { "novel" };
            let _ = writeln!(s, "  {tag}  {n}");
        }
        for m in &self.missing {
            let _ = writeln!(s, "  missing  {m}");
        }
        for o in &self.order_violations {
            let _ = writeln!(s, "  order    {} must precede {}", o.earlier, o.later);
        }
        for c in &self.conflicting {
            let _ = writeln!(s, "  conflict {c}");
        }
        s
    }
}

fn endpoints(m: &AclMessage) -> (String, String) {
    if m.from <= m.to {
        (m.from.clone(), m.to.clone())
    } else {
        (m.to.clone(), m.from.clone())
    }
}

pub fn check_trace(trace: &MessageTrace, expected: &ExpectedProtocol, strict: bool) -> ConformanceReport {
    let plays = |id: &str, role: &str| trace.lineage_of(id).iter().any(|c| c == role);
    let mut by_event: Vec<Vec<&AclMessage>> = vec![Vec::new(); expected.events.len()];
    let mut novel: Vec<String> = Vec::new();
    let mut conflicting: Vec<String> = Vec::new();

    let mut msgs: Vec<&AclMessage> = trace.messages.iter().collect();
    msgs.sort_by_key(|m| m.t);
    for m in &msgs {
        let hit = expected
            .events
            .iter()
            .position(|e| e.label == m.concept && plays(&m.from, &e.sender_role) && plays(&m.to, &e.receiver_role));
        match hit {
            Some(i) => by_event[i].push(m),
            None if expected.events.iter().any(|e| e.label == m.concept) => {
                conflicting
                    .push(format!("{} from {} to {} does not match the expected roles", m.concept, m.from, m.to));
            }
            None => {
                if !novel.contains(&m.concept) {
                    novel.push(m.concept.clone());
                }
            }
        }
    }

    let mut matched = Vec::new();
    let mut missing = Vec::new();
    let mut per_uv_counts: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (e, hits) in expected.events.iter().zip(&by_event) {
        if hits.is_empty() {
            missing.push(e.label.clone());
            continue;
        }
        matched.push(MatchedEvent { label: e.label.clone(), count: hits.len() });
        match e.multiplicity {
            Multiplicity::Once if hits.len() > 1 => {
                conflicting.push(format!("{} expected once, observed {} times", e.label, hits.len()));
            }
            Multiplicity::PerTaskedUV => per_uv_counts.entry(hits.len()).or_default().push(&e.label),
            Multiplicity::Once => {}
        }
    }
    if per_uv_counts.len() > 1 {
        let parts: Vec<String> = per_uv_counts.iter().map(|(k, labels)| format!("{} x{k}", labels.join("/"))).collect();
        conflicting.push(format!("per-UV events disagree on the UV count: {}", parts.join(", ")));
    }

    // Order: every message of the earlier event must precede every related
    // message of the later one. Two per-UV events relate only within the
    // same pair of endpoints.
    let mut order_violations: Vec<OrderViolation> = Vec::new();
    let hits_of = |label: &str| -> Vec<(&ExpectedEvent, &AclMessage)> {
        expected
            .events
            .iter()
            .zip(&by_event)
            .filter(|(e, _)| e.label == label)
            .flat_map(|(e, hs)| hs.iter().map(move |m| (e, *m)))
            .collect()
    };
    for (a, b) in expected.precedes() {
        let (ha, hb) = (hits_of(&a), hits_of(&b));
        let bad = ha.iter().any(|(ea, ma)| {
            hb.iter().any(|(eb, mb)| {
                let paired =
                    ea.multiplicity == Multiplicity::PerTaskedUV && eb.multiplicity == Multiplicity::PerTaskedUV;
                (!paired || endpoints(ma) == endpoints(mb)) && ma.t >= mb.t
            })
        });
        if bad {
            order_violations.push(OrderViolation { earlier: a, later: b });
        }
    }

    let violating =
        !missing.is_empty() || !order_violations.is_empty() || !conflicting.is_empty() || (strict && !novel.is_empty());
    let verdict = if violating {
        Verdict::Violating
    } else if novel.is_empty() {
        Verdict::Conformant
    } else {
        Verdict::ConformantWithNovelEvents
    };
    ConformanceReport { verdict, matched, novel, missing, order_violations, conflicting, strict }
}
