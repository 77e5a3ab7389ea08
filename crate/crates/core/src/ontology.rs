//! FIPA-style communication ontology: concept, predicate and action schemas,
//! plus content validation for runtime messages.
//!
//! ```text
//! // comments
//! concept MissionBrief { missionId: id mandatory; status: string mandatory }
//! concept FleetPlan {
//!   planId: id mandatory
//!   uvIds: id*
//! }
//! predicate Composition(MCC, UVFManager)
//! action Operator send MissionBrief to MCC
//! action MCC receive MissionBrief from Operator
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::model::{RelationshipKind, SemanticType, SystemModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SemanticType,
    /// A `*` slot holds a list of values of the type.
    pub many: bool,
    pub mandatory: bool,
}

impl fmt::Display for SlotSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.ty)?;
        if self.many {
            f.write_str("*")?;
        }
        if self.mandatory {
            f.write_str(" mandatory")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSchema {
    pub name: String,
    pub slots: Vec<SlotSchema>,
}

impl ConceptSchema {
    pub fn slot(&self, name: &str) -> Option<&SlotSchema> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn mandatory(&self) -> impl Iterator<Item = &SlotSchema> {
        self.slots.iter().filter(|s| s.mandatory)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredicateKind {
    Inheritance,
    Composition,
    Aggregation,
    Collaboration,
}

impl PredicateKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Inheritance" => Self::Inheritance,
            "Composition" => Self::Composition,
            "Aggregation" => Self::Aggregation,
            "Collaboration" => Self::Collaboration,
            _ => return None,
        })
    }
}

impl From<RelationshipKind> for PredicateKind {
    fn from(k: RelationshipKind) -> Self {
        match k {
            RelationshipKind::Inheritance => Self::Inheritance,
            RelationshipKind::Composition => Self::Composition,
            RelationshipKind::Aggregation => Self::Aggregation,
            RelationshipKind::Association => Self::Collaboration,
        }
    }
}

impl fmt::Display for PredicateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredicateSchema {
    pub name: String,
    pub kind: PredicateKind,
    pub roles: (String, String),
}

impl PredicateSchema {
    pub fn new(kind: PredicateKind, source: &str, target: &str) -> Self {
        PredicateSchema { name: format!("{kind}_{source}_{target}"), kind, roles: (source.into(), target.into()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Send,
    Receive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub actor: String,
    pub direction: Direction,
    pub payload: String,
    pub counterparty: String,
}

impl ActionSchema {
    pub fn new(actor: &str, direction: Direction, payload: &str, counterparty: &str) -> Self {
        let verb = match direction {
            Direction::Send => "send",
            Direction::Receive => "receive",
        };
        ActionSchema {
            name: format!("{actor}_{verb}_{payload}_{counterparty}"),
            actor: actor.into(),
            direction,
            payload: payload.into(),
            counterparty: counterparty.into(),
        }
    }
}

impl fmt::Display for ActionSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (verb, prep) = match self.direction {
            Direction::Send => ("send", "to"),
            Direction::Receive => ("receive", "from"),
        };
        write!(f, "action {} {verb} {} {prep} {}", self.actor, self.payload, self.counterparty)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyRegistry {
    pub concepts: Vec<ConceptSchema>,
    pub predicates: Vec<PredicateSchema>,
    pub actions: Vec<ActionSchema>,
}

impl OntologyRegistry {
    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty() && self.predicates.is_empty() && self.actions.is_empty()
    }

    pub fn concept(&self, name: &str) -> Option<&ConceptSchema> {
        self.concepts.iter().find(|c| c.name == name)
    }

    pub fn actions_of<'a>(&'a self, actor: &'a str) -> impl Iterator<Item = &'a ActionSchema> + 'a {
        self.actions.iter().filter(move |a| a.actor == actor)
    }

    /// Every schema name, concepts first.
    pub fn names(&self) -> Vec<&str> {
        let c = self.concepts.iter().map(|c| c.name.as_str());
        let p = self.predicates.iter().map(|p| p.name.as_str());
        let a = self.actions.iter().map(|a| a.name.as_str());
        c.chain(p).chain(a).collect()
    }

    /// Text accepted by [`parse_ontology`].
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.concepts {
            s += &format!("concept {} {{\n", c.name);
            for slot in &c.slots {
                s += &format!("  {slot}\n");
            }
            s += "}\n";
        }
        for p in &self.predicates {
            s += &format!("predicate {}({}, {})\n", p.kind, p.roles.0, p.roles.1);
        }
        for a in &self.actions {
            s += &format!("{a}\n");
        }
        s
    }

    /// Roles of predicates and actions that name no model class.
    pub fn unresolved_roles(&self, model: &SystemModel) -> Vec<String> {
        let mut out = BTreeSet::new();
        let roles = self
            .predicates
            .iter()
            .flat_map(|p| [&p.roles.0, &p.roles.1])
            .chain(self.actions.iter().flat_map(|a| [&a.actor, &a.counterparty]));
        for r in roles {
            if model.class(r).is_none() {
                out.insert(r.clone());
            }
        }
        out.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct OntologyError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

// ---------------------------------------------------------------------------
// parser

#[derive(Debug, Clone, PartialEq)]
enum Tk {
    Word(String),
    Sym(char),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tk: Tk,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, OntologyError> {
    let mut out = Vec::new();
    let mut last_line = 1;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        last_line = ln;
        let chars: Vec<char> = line.chars().collect();
        let mut p = 0;
        while p < chars.len() {
            let c = chars[p];
            if c.is_whitespace() {
                p += 1;
            } else if c == '/' && chars.get(p + 1) == Some(&'/') {
                break;
            } else if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                let start = p;
                while p < chars.len() && (chars[p].is_ascii_alphanumeric() || chars[p] == '_' || chars[p] == '-') {
                    p += 1;
                }
                out.push(Token { tk: Tk::Word(chars[start..p].iter().collect()), line: ln, col: start + 1 });
            } else if "{}():;,*".contains(c) {
                out.push(Token { tk: Tk::Sym(c), line: ln, col: p + 1 });
                p += 1;
            } else {
                return Err(OntologyError { line: ln, column: p + 1, message: format!("unexpected character `{c}`") });
            }
        }
        out.push(Token { tk: Tk::Newline, line: ln, col: chars.len() + 1 });
    }
    out.push(Token { tk: Tk::Eof, line: last_line, col: 1 });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, t: &Token, message: impl Into<String>) -> Result<T, OntologyError> {
        Err(OntologyError { line: t.line, column: t.col, message: message.into() })
    }

    fn skip_newlines(&mut self) {
        while self.peek().tk == Tk::Newline {
            self.bump();
        }
    }

    fn ident(&mut self) -> Result<(String, Token), OntologyError> {
        let t = self.bump();
        match &t.tk {
            Tk::Word(w) => match crate::ident::normalize(w) {
                Some((n, _)) => Ok((n, t)),
                None => self.err(&t, format!("invalid identifier `{w}`")),
            },
            _ => self.err(&t, "expected an identifier"),
        }
    }

    fn word(&mut self, w: &str) -> Result<(), OntologyError> {
        let t = self.bump();
        match &t.tk {
            Tk::Word(x) if x == w => Ok(()),
            _ => self.err(&t, format!("expected `{w}`")),
        }
    }

    fn sym(&mut self, c: char) -> Result<(), OntologyError> {
        let t = self.bump();
        if t.tk == Tk::Sym(c) {
            Ok(())
        } else {
            self.err(&t, format!("expected `{c}`"))
        }
    }

    fn end_of_statement(&mut self) -> Result<(), OntologyError> {
        let t = self.peek().clone();
        match t.tk {
            Tk::Newline | Tk::Eof => Ok(()),
            _ => self.err(&t, "expected end of line"),
        }
    }

    fn slot_type(&mut self, concepts: &BTreeSet<String>) -> Result<SemanticType, OntologyError> {
        let t = self.peek().clone();
        let (w, _) = self.ident()?;
        if w == "enum" {
            self.sym('(')?;
            let mut lits = vec![self.ident()?.0];
            while self.peek().tk == Tk::Sym(',') {
                self.bump();
                lits.push(self.ident()?.0);
            }
            self.sym(')')?;
            return format!("enum({})", lits.join(", ")).parse().or_else(|e| self.err(&t, e));
        }
        if concepts.contains(&w) {
            return self.err(&t, format!("nested concepts are not supported (slot type `{w}`)"));
        }
        w.parse().or_else(|e| self.err(&t, e))
    }

    fn concept(&mut self, concepts: &BTreeSet<String>) -> Result<ConceptSchema, OntologyError> {
        let (name, name_tok) = self.ident()?;
        self.skip_newlines();
        self.sym('{')?;
        let mut slots: Vec<SlotSchema> = Vec::new();
        loop {
            while matches!(self.peek().tk, Tk::Newline | Tk::Sym(';')) {
                self.bump();
            }
            if self.peek().tk == Tk::Sym('}') {
                self.bump();
                break;
            }
            if self.peek().tk == Tk::Eof {
                return self.err(&name_tok, format!("unclosed concept `{name}`"));
            }
            let (slot, slot_tok) = self.ident()?;
            if slots.iter().any(|s| s.name == slot) {
                return self.err(&slot_tok, format!("duplicate slot `{slot}` in `{name}`"));
            }
            self.sym(':')?;
            let ty = self.slot_type(concepts)?;
            let mut many = false;
            if self.peek().tk == Tk::Sym('*') {
                self.bump();
                many = true;
            }
            let mut mandatory = false;
            if self.peek().tk == Tk::Word("mandatory".into()) {
                self.bump();
                mandatory = true;
            }
            let t = self.peek().clone();
            if !matches!(t.tk, Tk::Newline | Tk::Sym(';') | Tk::Sym('}')) {
                return self.err(&t, "expected `;`, `}` or end of line after slot");
            }
            slots.push(SlotSchema { name: slot, ty, many, mandatory });
        }
        if !slots.iter().any(|s| s.mandatory) {
            return self.err(&name_tok, format!("concept `{name}` needs at least one mandatory slot"));
        }
        self.end_of_statement()?;
        Ok(ConceptSchema { name, slots })
    }
}

/// Names of concepts declared anywhere in the text, for nested-type detection
/// and forward references.
fn concept_names(toks: &[Token]) -> BTreeSet<String> {
    toks.windows(2)
        .filter_map(|w| match (&w[0].tk, &w[1].tk) {
            (Tk::Word(k), Tk::Word(n)) if k == "concept" => Some(n.replace('-', "")),
            _ => None,
        })
        .collect()
}

pub fn parse_ontology(text: &str) -> Result<OntologyRegistry, OntologyError> {
    let toks = lex(text)?;
    let concepts = concept_names(&toks);
    let mut p = Parser { toks, pos: 0 };
    let mut reg = OntologyRegistry::default();
    let mut payload_refs: Vec<(String, Token)> = Vec::new();
    loop {
        p.skip_newlines();
        let t = p.peek().clone();
        let kw = match &t.tk {
            Tk::Eof => break,
            Tk::Word(w) => w.clone(),
            _ => return p.err(&t, "expected `concept`, `predicate` or `action`"),
        };
        p.bump();
        match kw.as_str() {
            "concept" => {
                let c = p.concept(&concepts)?;
                if reg.concept(&c.name).is_some() {
                    return p.err(&t, format!("duplicate concept `{}`", c.name));
                }
                reg.concepts.push(c);
            }
            "predicate" => {
                let (kind_name, kind_tok) = p.ident()?;
                let Some(kind) = PredicateKind::parse(&kind_name) else {
                    return p.err(&kind_tok, format!("unknown predicate kind `{kind_name}`"));
                };
                p.sym('(')?;
                let (a, _) = p.ident()?;
                p.sym(',')?;
                let (b, _) = p.ident()?;
                p.sym(')')?;
                p.end_of_statement()?;
                let pred = PredicateSchema::new(kind, &a, &b);
                if reg.predicates.iter().any(|x| x.name == pred.name) {
                    return p.err(&t, format!("duplicate predicate `{}`", pred.name));
                }
                reg.predicates.push(pred);
            }
            "action" => {
                let (actor, _) = p.ident()?;
                let verb_tok = p.peek().clone();
                let (verb, _) = p.ident()?;
                let direction = match verb.as_str() {
                    "send" => Direction::Send,
                    "receive" => Direction::Receive,
                    _ => return p.err(&verb_tok, format!("expected `send` or `receive`, found `{verb}`")),
                };
                let (payload, payload_tok) = p.ident()?;
                p.word(if direction == Direction::Send { "to" } else { "from" })?;
                let (counterparty, _) = p.ident()?;
                p.end_of_statement()?;
                let a = ActionSchema::new(&actor, direction, &payload, &counterparty);
                if reg.actions.iter().any(|x| x.name == a.name) {
                    return p.err(&t, format!("duplicate action `{}`", a.name));
                }
                payload_refs.push((payload, payload_tok));
                reg.actions.push(a);
            }
            other => return p.err(&t, format!("unknown declaration `{other}`")),
        }
    }
    for (payload, tok) in payload_refs {
        if reg.concept(&payload).is_none() {
            return p.err(&tok, format!("action payload `{payload}` is not a declared concept"));
        }
    }
    Ok(reg)
}

// ---------------------------------------------------------------------------
// content

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentInstance {
    pub concept: String,
    pub slots: BTreeMap<String, Json>,
}

impl ContentInstance {
    pub fn new(concept: impl Into<String>) -> Self {
        ContentInstance { concept: concept.into(), slots: BTreeMap::new() }
    }

    pub fn with(mut self, slot: &str, v: impl Into<Json>) -> Self {
        self.slots.insert(slot.to_string(), v.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ContentViolation {
    UnknownConcept { concept: String },
    MissingMandatory { slot: String },
    UnknownSlot { slot: String },
    TypeMismatch { slot: String, expected: String, found: String },
}

impl fmt::Display for ContentViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownConcept { concept } => write!(f, "unknown concept `{concept}`"),
            Self::MissingMandatory { slot } => write!(f, "missing mandatory slot `{slot}`"),
            Self::UnknownSlot { slot } => write!(f, "unknown slot `{slot}`"),
            Self::TypeMismatch { slot, expected, found } => {
                write!(f, "slot `{slot}` expects {expected}, found {found}")
            }
        }
    }
}

fn scalar_matches(ty: &SemanticType, v: &Json) -> bool {
    match ty {
        SemanticType::Id | SemanticType::String => v.is_string(),
        SemanticType::Integer => v.is_i64() || v.is_u64(),
        SemanticType::Real => v.is_number(),
        SemanticType::Boolean => v.is_boolean(),
        SemanticType::Enum(lits) => v.as_str().is_some_and(|s| lits.iter().any(|l| l == s)),
    }
}

fn slot_matches(slot: &SlotSchema, v: &Json) -> bool {
    if slot.many {
        v.as_array().is_some_and(|items| items.iter().all(|i| scalar_matches(&slot.ty, i)))
    } else {
        scalar_matches(&slot.ty, v)
    }
}

fn json_kind(v: &Json) -> String {
    match v {
        Json::Null => "null".into(),
        Json::Bool(_) => "boolean".into(),
        Json::Number(n) if n.is_f64() => "real".into(),
        Json::Number(_) => "integer".into(),
        Json::String(s) => format!("string {s:?}"),
        Json::Array(_) => "list".into(),
        Json::Object(_) => "object".into(),
    }
}

pub fn validate_content(reg: &OntologyRegistry, inst: &ContentInstance) -> Vec<ContentViolation> {
    let Some(schema) = reg.concept(&inst.concept) else {
        return vec![ContentViolation::UnknownConcept { concept: inst.concept.clone() }];
    };
    let mut out = Vec::new();
    for s in schema.mandatory() {
        if !inst.slots.contains_key(&s.name) {
            out.push(ContentViolation::MissingMandatory { slot: s.name.clone() });
        }
    }
    for (name, v) in &inst.slots {
        match schema.slot(name) {
            None => out.push(ContentViolation::UnknownSlot { slot: name.clone() }),
            Some(s) if !slot_matches(s, v) => out.push(ContentViolation::TypeMismatch {
                slot: name.clone(),
                expected: format!("{}{}", s.ty, if s.many { "*" } else { "" }),
                found: json_kind(v),
            }),
            Some(_) => {}
        }
    }
    out
}

/// One predicate per relationship, ordered by (kind, source, target). A
/// relationship label is appended to the name so parallel relationships
/// between the same pair stay distinct.
pub fn derive_predicates(model: &SystemModel) -> Vec<PredicateSchema> {
    let mut out: Vec<PredicateSchema> = model
        .relationships
        .iter()
        .map(|r| {
            let mut p = PredicateSchema::new(r.kind.into(), &r.source, &r.target);
            if let Some(l) = &r.label {
                p.name = format!("{}_{l}", p.name);
            }
            p
        })
        .collect();
    out.sort_by(|a, b| (a.kind, &a.roles, &a.name).cmp(&(b.kind, &b.roles, &b.name)));
    out
}

/// True iff the send action and its mirrored receive action are both declared.
pub fn check_action_conformance(reg: &OntologyRegistry, sender: &str, receiver: &str, concept: &str) -> bool {
    let has = |actor: &str, dir: Direction, other: &str| {
        reg.actions
            .iter()
            .any(|a| a.actor == actor && a.direction == dir && a.counterparty == other && a.payload == concept)
    };
    has(sender, Direction::Send, receiver) && has(receiver, Direction::Receive, sender)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentClass, Relationship};
    use serde_json::json;

    const ONTO: &str = "
// mission concepts
concept MissionBrief { missionId: id mandatory; status: string mandatory }
concept UVPerformance {
  uvId: id mandatory
  score: real
}
concept FleetPlan { planId: id mandatory; uvIds: id* }
predicate Collaboration(Operator, MCC)
action Operator send MissionBrief to MCC
action MCC receive MissionBrief from Operator
";

    #[test]
    fn parses_all_three_sets() {
        let reg = parse_ontology(ONTO).unwrap();
        assert_eq!(reg.concepts.len(), 3);
        assert_eq!(reg.predicates[0].name, "Collaboration_Operator_MCC");
        assert_eq!(reg.actions.len(), 2);
        assert!(reg.concept("FleetPlan").unwrap().slot("uvIds").unwrap().many);
    }

    #[test]
    fn empty_text_is_empty_registry() {
        assert!(parse_ontology("").unwrap().is_empty());
        assert!(parse_ontology("// nothing\n\n").unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let e = parse_ontology("concept A { x: id mandatory }\naction A send GhostConcept to B").unwrap_err();
        assert!(e.message.contains("GhostConcept"));
        assert_eq!((e.line, e.column), (2, 15));
        let e = parse_ontology("concept A { x: id mandatory }\nconcept A { y: id mandatory }").unwrap_err();
        assert!(e.message.contains("duplicate"));
        let e = parse_ontology("concept A { x: id }").unwrap_err();
        assert!(e.message.contains("mandatory"));
        let e = parse_ontology("concept A { x: id mandatory }\nconcept B { a: A mandatory }").unwrap_err();
        assert!(e.message.contains("nested"));
        let e = parse_ontology("action A send X from B").unwrap_err();
        assert!(e.message.contains("`to`"));
    }

    #[test]
    fn content_validation() {
        let reg = parse_ontology(ONTO).unwrap();
        let brief = ContentInstance::new("MissionBrief").with("status", "pending");
        assert_eq!(validate_content(&reg, &brief), [ContentViolation::MissingMandatory { slot: "missionId".into() }]);
        let ok = brief.clone().with("missionId", "m1");
        assert!(validate_content(&reg, &ok).is_empty());
        let perf = ContentInstance::new("UVPerformance").with("uvId", "uv1").with("score", "high");
        let v = validate_content(&reg, &perf);
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], ContentViolation::TypeMismatch { slot, .. } if slot == "score"));
        let plan = ContentInstance::new("FleetPlan").with("planId", "p").with("uvIds", json!(["a", 3]));
        assert_eq!(validate_content(&reg, &plan).len(), 1);
        let ghost = ContentInstance::new("Ghost");
        assert_eq!(validate_content(&reg, &ghost), [ContentViolation::UnknownConcept { concept: "Ghost".into() }]);
        let extra = ok.with("weather", "clear");
        assert_eq!(validate_content(&reg, &extra), [ContentViolation::UnknownSlot { slot: "weather".into() }]);
    }

    #[test]
    fn predicates_from_model() {
        let mut m = SystemModel::empty("m", "1");
        assert!(derive_predicates(&m).is_empty());
        for c in ["UV", "UAV", "MCC", "Operator"] {
            m.classes.push(AgentClass::new(c));
        }
        m.relationships.push(Relationship::new(RelationshipKind::Association, "Operator", "MCC"));
        m.relationships.push(Relationship::new(RelationshipKind::Inheritance, "UAV", "UV"));
        let p = derive_predicates(&m);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0], PredicateSchema::new(PredicateKind::Inheritance, "UAV", "UV"));
        assert_eq!(p[1].kind, PredicateKind::Collaboration);
    }

    #[test]
    fn action_conformance() {
        let reg = parse_ontology(ONTO).unwrap();
        assert!(check_action_conformance(&reg, "Operator", "MCC", "MissionBrief"));
        assert!(!check_action_conformance(&reg, "UV", "Operator", "MissionBrief"));
        assert!(!check_action_conformance(&OntologyRegistry::default(), "Operator", "MCC", "MissionBrief"));
    }

    #[test]
    fn render_round_trips() {
        let reg = parse_ontology(ONTO).unwrap();
        assert_eq!(parse_ontology(&reg.render()).unwrap(), reg);
    }
}
