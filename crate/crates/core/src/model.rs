//! In-memory representation of the structural and behavioral model layers.
//!
//! Every other module consumes [`SystemModel`]. Values are plain data: once
//! built they are never mutated by the toolchain, so they can be shared
//! across threads freely.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ident;

/// Semantic type tag carried by attributes, parameters and ontology slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticType {
    Id,
    String,
    Integer,
    Real,
    Boolean,
    Enum(Vec<String>),
}

impl SemanticType {
    pub fn is_numeric(&self) -> bool {
        matches!(self, SemanticType::Integer | SemanticType::Real)
    }

    pub fn is_textual(&self) -> bool {
        matches!(self, SemanticType::Id | SemanticType::String)
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemanticType::Id => f.write_str("id"),
            SemanticType::String => f.write_str("string"),
            SemanticType::Integer => f.write_str("integer"),
            SemanticType::Real => f.write_str("real"),
            SemanticType::Boolean => f.write_str("boolean"),
            SemanticType::Enum(lits) => write!(f, "enum({})", lits.join(", ")),
        }
    }
}

impl FromStr for SemanticType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "id" => Ok(SemanticType::Id),
            "string" => Ok(SemanticType::String),
            "integer" => Ok(SemanticType::Integer),
            "real" => Ok(SemanticType::Real),
            "boolean" => Ok(SemanticType::Boolean),
            _ => {
                let inner = s
                    .strip_prefix("enum(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| format!("unknown type `{s}`"))?;
                let lits: Vec<String> = inner.split(',').map(|l| l.trim().to_string()).collect();
                if lits.iter().any(|l| !ident::is_canonical(l)) {
                    return Err(format!("bad enum literal list `{inner}`"));
                }
                let unique: BTreeSet<_> = lits.iter().collect();
                if unique.len() != lits.len() {
                    return Err(format!("duplicate enum literal in `{inner}`"));
                }
                Ok(SemanticType::Enum(lits))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SemanticType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SemanticType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Method {
    pub name: String,
    pub parameters: Vec<Parameter>,
    /// `None` is a void return.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_type: Option<SemanticType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentClass {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_label: Option<String>,
    pub attributes: Vec<Attribute>,
    pub methods: Vec<Method>,
    pub is_abstract: bool,
}

impl AgentClass {
    pub fn new(name: impl Into<String>) -> Self {
        AgentClass {
            name: name.into(),
            display_label: None,
            attributes: Vec::new(),
            methods: Vec::new(),
            is_abstract: false,
        }
    }

    pub fn display_name(&self) -> &str {
        self.display_label.as_deref().unwrap_or(&self.name)
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationshipKind {
    Inheritance,
    Composition,
    Aggregation,
    Association,
}

/// Multiplicity at one end of a relationship: `n`, `a..b`, `a..*` or `*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Cardinality {
    Exact(u32),
    Range { min: u32, max: Option<u32> },
    Many,
}

impl Cardinality {
    pub fn admits(&self, n: usize) -> bool {
        let n = n as u64;
        match *self {
            Cardinality::Exact(k) => n == k as u64,
            Cardinality::Range { min, max } => n >= min as u64 && max.is_none_or(|m| n <= m as u64),
            Cardinality::Many => true,
        }
    }
}

impl fmt::Display for Cardinality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cardinality::Exact(n) => write!(f, "{n}"),
            Cardinality::Range { min, max: Some(max) } => write!(f, "{min}..{max}"),
            Cardinality::Range { min, max: None } => write!(f, "{min}..*"),
            Cardinality::Many => f.write_str("*"),
        }
    }
}

impl FromStr for Cardinality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "*" {
            return Ok(Cardinality::Many);
        }
        let num = |t: &str| t.parse::<u32>().map_err(|_| format!("bad cardinality `{s}`"));
        match s.split_once("..") {
            None => Ok(Cardinality::Exact(num(s)?)),
            Some((lo, "*")) => Ok(Cardinality::Range { min: num(lo)?, max: None }),
            Some((lo, hi)) => {
                let (min, max) = (num(lo)?, num(hi)?);
                if min > max {
                    return Err(format!("empty cardinality range `{s}`"));
                }
                Ok(Cardinality::Range { min, max: Some(max) })
            }
        }
    }
}

impl TryFrom<String> for Cardinality {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Cardinality> for String {
    fn from(c: Cardinality) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Relationship {
    pub kind: RelationshipKind,
    pub source: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_cardinality: Option<Cardinality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_cardinality: Option<Cardinality>,
    /// Role name used for link navigation in constraints (`self.manages`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Relationship {
    pub fn new(kind: RelationshipKind, source: impl Into<String>, target: impl Into<String>) -> Self {
        Relationship {
            kind,
            source: source.into(),
            target: target.into(),
            source_cardinality: None,
            target_cardinality: None,
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Initial substate; only composites carry one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub event: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateMachine {
    pub owner_class: String,
    pub states: Vec<State>,
    pub initial: String,
    /// Ordered: earlier transitions win when several are enabled.
    pub transitions: Vec<Transition>,
}

impl StateMachine {
    pub fn state(&self, name: &str) -> Option<&State> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn children<'a>(&'a self, parent: &'a str) -> impl Iterator<Item = &'a State> + 'a {
        self.states.iter().filter(move |s| s.parent.as_deref() == Some(parent))
    }

    pub fn is_composite(&self, name: &str) -> bool {
        self.children(name).next().is_some()
    }

    /// Dotted path from the top level, e.g. `Registered.Uncontrolled`.
    pub fn qualified(&self, name: &str) -> String {
        match self.state(name).and_then(|s| s.parent.as_deref()) {
            Some(p) => format!("{}.{}", self.qualified(p), name),
            None => name.to_string(),
        }
    }

    /// Resolves a state to the leaf actually occupied on entry (descends
    /// through composite initial substates).
    pub fn enter(&self, name: &str) -> String {
        let mut cur = name.to_string();
        for _ in 0..self.states.len() {
            match self.state(&cur).and_then(|s| s.initial.clone()) {
                Some(next) => cur = next,
                None => break,
            }
        }
        cur
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Initial,
    Final,
    Action,
    Decision,
    Merge,
    Fork,
    Join,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActivityEdge {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
}

#[derive(Debug, Clone, Default, Eq, Serialize, Deserialize)]
pub struct ActivityFlow {
    pub partitions: Vec<String>,
    pub nodes: Vec<ActivityNode>,
    pub edges: Vec<ActivityEdge>,
}

impl PartialEq for ActivityFlow {
    /// Edge order carries no meaning; node order does (it fixes ids on re-parse).
    fn eq(&self, other: &Self) -> bool {
        let sorted = |e: &[ActivityEdge]| {
            let mut v = e.to_vec();
            v.sort();
            v
        };
        self.partitions == other.partitions && self.nodes == other.nodes && sorted(&self.edges) == sorted(&other.edges)
    }
}

impl ActivityFlow {
    pub fn node(&self, id: &str) -> Option<&ActivityNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn successors(&self) -> HashMap<&str, Vec<&str>> {
        let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
        for e in &self.edges {
            succ.entry(e.from.as_str()).or_default().push(e.to.as_str());
        }
        succ
    }

    pub fn initial(&self) -> Option<&ActivityNode> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Initial)
    }
}

#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemModel {
    pub classes: Vec<AgentClass>,
    pub relationships: Vec<Relationship>,
    pub state_machines: Vec<StateMachine>,
    pub activities: Vec<ActivityFlow>,
    pub model_name: String,
    pub version: String,
}

impl PartialEq for SystemModel {
    fn eq(&self, other: &Self) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.canonicalize();
        b.canonicalize();
        a.classes == b.classes
            && a.relationships == b.relationships
            && a.state_machines == b.state_machines
            && a.activities == b.activities
            && a.model_name == b.model_name
            && a.version == b.version
    }
}

impl SystemModel {
    pub fn empty(name: impl Into<String>, version: impl Into<String>) -> Self {
        SystemModel {
            classes: Vec::new(),
            relationships: Vec::new(),
            state_machines: Vec::new(),
            activities: Vec::new(),
            model_name: name.into(),
            version: version.into(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty() && self.state_machines.is_empty() && self.activities.is_empty()
    }

    /// Sorts the order-insensitive collections (classes, relationships).
    pub fn canonicalize(&mut self) {
        self.classes.sort_by(|a, b| a.name.cmp(&b.name));
        self.relationships.sort();
    }

    pub fn class(&self, name: &str) -> Option<&AgentClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Direct superclass via an Inheritance relationship.
    pub fn superclass(&self, name: &str) -> Option<&str> {
        self.relationships
            .iter()
            .find(|r| r.kind == RelationshipKind::Inheritance && r.source == name)
            .map(|r| r.target.as_str())
    }

    /// The class followed by its ancestors, nearest first.
    pub fn lineage(&self, name: &str) -> Vec<String> {
        let mut out = vec![name.to_string()];
        let mut cur = name;
        while let Some(sup) = self.superclass(cur) {
            if out.iter().any(|c| c == sup) {
                break;
            }
            out.push(sup.to_string());
            cur = sup;
        }
        out
    }

    pub fn conforms_to(&self, class: &str, ancestor: &str) -> bool {
        self.lineage(class).iter().any(|c| c == ancestor)
    }

    /// Attributes visible on a class, own attributes first.
    pub fn all_attributes(&self, name: &str) -> Vec<&Attribute> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for c in self.lineage(name) {
            if let Some(cls) = self.class(&c) {
                for a in &cls.attributes {
                    if seen.insert(a.name.as_str()) {
                        out.push(a);
                    }
                }
            }
        }
        out
    }

    pub fn find_attribute(&self, class: &str, attr: &str) -> Option<&Attribute> {
        self.all_attributes(class).into_iter().find(|a| a.name == attr)
    }

    pub fn find_method(&self, class: &str, method: &str) -> Option<&Method> {
        self.lineage(class)
            .iter()
            .filter_map(|c| self.class(c))
            .flat_map(|c| c.methods.iter())
            .find(|m| m.name == method)
    }

    /// State machine owned by the class or inherited from an ancestor.
    pub fn state_machine_for(&self, class: &str) -> Option<&StateMachine> {
        self.lineage(class).iter().find_map(|c| self.state_machines.iter().find(|m| &m.owner_class == c))
    }

    /// Relationships a class takes part in under a navigation name: the
    /// explicit label, or the lower-camel name of the far end.
    pub fn navigation(&self, class: &str, name: &str) -> Option<(&Relationship, String)> {
        let lineage = self.lineage(class);
        for r in &self.relationships {
            if r.kind == RelationshipKind::Inheritance {
                continue;
            }
            let far = if lineage.contains(&r.source) {
                r.target.clone()
            } else if lineage.contains(&r.target) {
                r.source.clone()
            } else {
                continue;
            };
            let default = lower_first(&far);
            if r.label.as_deref() == Some(name) || (r.label.is_none() && default == name) {
                return Some((r, far));
            }
        }
        None
    }

    /// Content hash over the canonical serialized form.
    pub fn checksum(&self) -> String {
        let mut canon = self.clone();
        canon.canonicalize();
        let text = serde_json::to_string(&canon).expect("model serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_ascii_lowercase().to_string() + chars.as_str(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Where an issue sits in the model. Ordering follows the document layout.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Location {
    Model,
    Class(String),
    Attribute(String, String),
    Method(String, String),
    Relationship(usize),
    StateMachine(usize),
    State(usize, String),
    Transition(usize, usize),
    Activity(usize),
    ActivityNode(usize, String),
    ActivityEdge(usize, usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Model => f.write_str("model"),
            Location::Class(c) => write!(f, "classes[{c}]"),
            Location::Attribute(c, a) => write!(f, "classes[{c}].attributes[{a}]"),
            Location::Method(c, m) => write!(f, "classes[{c}].methods[{m}]"),
            Location::Relationship(i) => write!(f, "relationships[{i}]"),
            Location::StateMachine(i) => write!(f, "stateMachines[{i}]"),
            Location::State(i, s) => write!(f, "stateMachines[{i}].states[{s}]"),
            Location::Transition(i, t) => write!(f, "stateMachines[{i}].transitions[{t}]"),
            Location::Activity(i) => write!(f, "activities[{i}]"),
            Location::ActivityNode(i, n) => write!(f, "activities[{i}].nodes[{n}]"),
            Location::ActivityEdge(i, e) => write!(f, "activities[{i}].edges[{e}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }
}

struct Collector(Vec<Issue>);

impl Collector {
    fn error(&mut self, location: Location, message: impl Into<String>) {
        self.0.push(Issue { severity: Severity::Error, location, message: message.into() });
    }
}

/// Checks every structural invariant of the model. Issues come back sorted
/// by location, then message.
pub fn validate_model(model: &SystemModel) -> ValidationReport {
    let mut c = Collector(Vec::new());
    validate_classes(model, &mut c);
    validate_relationships(model, &mut c);
    validate_state_machines(model, &mut c);
    for (i, flow) in model.activities.iter().enumerate() {
        validate_activity(model, i, flow, &mut c);
    }
    let mut issues = c.0;
    issues.sort_by(|a, b| a.location.cmp(&b.location).then_with(|| a.message.cmp(&b.message)));
    issues.dedup();
    ValidationReport { issues }
}

fn validate_classes(model: &SystemModel, c: &mut Collector) {
    let mut seen = HashSet::new();
    for cls in &model.classes {
        let loc = Location::Class(cls.name.clone());
        if !ident::is_canonical(&cls.name) {
            c.error(loc.clone(), format!("`{}` is not a valid identifier", cls.name));
        }
        if !seen.insert(cls.name.as_str()) {
            c.error(loc.clone(), format!("duplicate class `{}`", cls.name));
        }
        let mut attrs = HashSet::new();
        for a in &cls.attributes {
            let aloc = Location::Attribute(cls.name.clone(), a.name.clone());
            if !attrs.insert(a.name.as_str()) {
                c.error(aloc.clone(), format!("duplicate attribute `{}`", a.name));
            }
            if !ident::is_canonical(&a.name) {
                c.error(aloc, format!("`{}` is not a valid identifier", a.name));
            }
        }
        let mut methods = HashSet::new();
        for m in &cls.methods {
            if !methods.insert(m.name.as_str()) {
                c.error(Location::Method(cls.name.clone(), m.name.clone()), format!("duplicate method `{}`", m.name));
            }
        }
    }
}

fn validate_relationships(model: &SystemModel, c: &mut Collector) {
    let names: HashSet<&str> = model.classes.iter().map(|k| k.name.as_str()).collect();
    let mut supers: HashMap<&str, Vec<&str>> = HashMap::new();
    for (i, r) in model.relationships.iter().enumerate() {
        let loc = Location::Relationship(i);
        for end in [&r.source, &r.target] {
            if !names.contains(end.as_str()) {
                c.error(loc.clone(), format!("unknown class `{end}`"));
            }
        }
        if r.kind == RelationshipKind::Inheritance {
            if r.source_cardinality.is_some() || r.target_cardinality.is_some() {
                c.error(loc.clone(), "inheritance carries no cardinalities");
            }
            supers.entry(r.source.as_str()).or_default().push(r.target.as_str());
        }
    }
    for (sub, sups) in &supers {
        if sups.len() > 1 {
            c.error(Location::Class(sub.to_string()), format!("`{sub}` has several superclasses"));
        }
    }
    // inheritance cycles
    for start in supers.keys() {
        let mut cur = *start;
        let mut steps = 0;
        while let Some(next) = supers.get(cur).and_then(|v| v.first()) {
            steps += 1;
            if *next == *start {
                c.error(Location::Class(start.to_string()), "inheritance cycle");
                break;
            }
            if steps > supers.len() {
                break;
            }
            cur = next;
        }
    }
}

fn validate_state_machines(model: &SystemModel, c: &mut Collector) {
    let names: HashSet<&str> = model.classes.iter().map(|k| k.name.as_str()).collect();
    let mut owners = HashSet::new();
    for (i, m) in model.state_machines.iter().enumerate() {
        let loc = Location::StateMachine(i);
        if !names.contains(m.owner_class.as_str()) {
            c.error(loc.clone(), format!("unknown owner class `{}`", m.owner_class));
        }
        if !owners.insert(m.owner_class.as_str()) {
            c.error(loc.clone(), format!("second state machine for `{}`", m.owner_class));
        }
        let mut states: HashMap<&str, &State> = HashMap::new();
        for s in &m.states {
            if states.insert(s.name.as_str(), s).is_some() {
                c.error(Location::State(i, s.name.clone()), format!("duplicate state `{}`", s.name));
            }
        }
        for s in &m.states {
            let sloc = Location::State(i, s.name.clone());
            if let Some(p) = &s.parent {
                match states.get(p.as_str()) {
                    None => c.error(sloc.clone(), format!("unknown parent state `{p}`")),
                    Some(ps) if ps.parent.is_some() => {
                        c.error(sloc.clone(), format!("`{}` nests deeper than one composite level", s.name))
                    }
                    Some(_) if p == &s.name => c.error(sloc.clone(), "state is its own parent"),
                    _ => {}
                }
                if s.initial.is_some() {
                    c.error(sloc.clone(), "only composite states carry an initial substate");
                }
            }
            let composite = m.is_composite(&s.name);
            match (&s.initial, composite) {
                (None, true) => c.error(sloc, format!("composite `{}` has no initial substate", s.name)),
                (Some(init), true) => {
                    if states.get(init.as_str()).and_then(|x| x.parent.as_deref()) != Some(&s.name) {
                        c.error(sloc, format!("initial `{init}` is not a substate of `{}`", s.name));
                    }
                }
                (Some(_), false) if s.parent.is_none() => c.error(sloc, "initial substate on a non-composite state"),
                _ => {}
            }
        }
        match states.get(m.initial.as_str()) {
            None => c.error(loc.clone(), format!("initial state `{}` is not declared", m.initial)),
            Some(s) if s.parent.is_some() => {
                c.error(loc.clone(), format!("initial state `{}` is not top-level", m.initial))
            }
            _ => {}
        }
        for (t, tr) in m.transitions.iter().enumerate() {
            for end in [&tr.from, &tr.to] {
                if !states.contains_key(end.as_str()) {
                    c.error(Location::Transition(i, t), format!("undeclared state `{end}`"));
                }
            }
            if !ident::is_canonical(&tr.event) {
                c.error(Location::Transition(i, t), format!("bad event name `{}`", tr.event));
            }
        }
    }
}

fn validate_activity(model: &SystemModel, i: usize, flow: &ActivityFlow, c: &mut Collector) {
    let loc = Location::Activity(i);
    let classes: HashSet<&str> = model.classes.iter().map(|k| k.name.as_str()).collect();
    for p in &flow.partitions {
        if !classes.contains(p.as_str()) {
            c.error(loc.clone(), format!("partition `{p}` is not an agent class"));
        }
    }
    let mut ids: HashMap<&str, &ActivityNode> = HashMap::new();
    for n in &flow.nodes {
        if ids.insert(n.id.as_str(), n).is_some() {
            c.error(Location::ActivityNode(i, n.id.clone()), "duplicate node id");
        }
        if n.kind == NodeKind::Action {
            match &n.partition {
                None => c.error(Location::ActivityNode(i, n.id.clone()), "action outside any partition"),
                Some(p) if !flow.partitions.contains(p) => {
                    c.error(Location::ActivityNode(i, n.id.clone()), format!("unknown partition `{p}`"))
                }
                _ => {}
            }
        }
    }
    for (e, edge) in flow.edges.iter().enumerate() {
        for end in [&edge.from, &edge.to] {
            if !ids.contains_key(end.as_str()) {
                c.error(Location::ActivityEdge(i, e), format!("unknown node `{end}`"));
            }
        }
    }
    if flow.nodes.is_empty() {
        return;
    }
    let initials: Vec<_> = flow.nodes.iter().filter(|n| n.kind == NodeKind::Initial).collect();
    if initials.len() != 1 {
        c.error(loc.clone(), format!("expected exactly one initial node, found {}", initials.len()));
    }
    let succ = flow.successors();
    if let Some(init) = initials.first() {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([init.id.as_str()]);
        while let Some(n) = queue.pop_front() {
            if seen.insert(n) {
                queue.extend(succ.get(n).into_iter().flatten().copied());
            }
        }
        for n in &flow.nodes {
            if !seen.contains(n.id.as_str()) {
                c.error(Location::ActivityNode(i, n.id.clone()), "unreachable from the initial node");
            }
        }
    }
    for n in flow.nodes.iter().filter(|n| n.kind == NodeKind::Fork) {
        // every path leaving a fork must meet a join before the flow ends
        let mut seen = HashSet::new();
        let mut stack: Vec<&str> = succ.get(n.id.as_str()).cloned().unwrap_or_default();
        let mut unjoined = stack.is_empty();
        while let Some(cur) = stack.pop() {
            if !seen.insert(cur) {
                continue;
            }
            let Some(node) = ids.get(cur) else { continue };
            if node.kind == NodeKind::Join {
                continue;
            }
            match succ.get(cur) {
                Some(next) if !next.is_empty() => stack.extend(next.iter().copied()),
                _ => unjoined = true,
            }
        }
        if unjoined {
            c.error(Location::ActivityNode(i, n.id.clone()), "fork without a matching join on every path");
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid model: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Issue>),
}

/// JSON text with keys in declaration order.
pub fn serialize_model(model: &SystemModel) -> Result<String, ModelError> {
    let report = validate_model(model);
    if report.has_errors() {
        return Err(ModelError::Invalid(report.errors().cloned().collect()));
    }
    let mut text = serde_json::to_string_pretty(model).expect("model serializes");
    text.push('\n');
    Ok(text)
}

pub fn deserialize_model(text: &str) -> Result<SystemModel, ModelError> {
    let model: SystemModel = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let report = validate_model(&model);
    if report.has_errors() {
        return Err(ModelError::Invalid(report.errors().cloned().collect()));
    }
    Ok(model)
}

/// Groups classes by name for quick lookup.
pub fn class_index(model: &SystemModel) -> BTreeMap<&str, &AgentClass> {
    model.classes.iter().map(|c| (c.name.as_str(), c)).collect()
}
