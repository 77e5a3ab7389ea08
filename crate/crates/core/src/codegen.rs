//! Prompt assembly and the deterministic template backend.
//!
//! The template backend emits [`AgentProgramIR`]: per agent class a set of
//! handlers whose bodies are small basic-block graphs. Every OCL pre/post
//! condition becomes one guard branch; every ontology action of the class
//! becomes a handler with one schema-validation branch.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraints::{BoundConstraints, ConstraintKind};
use crate::model::{Attribute, SystemModel};
use crate::ontology::{derive_predicates, Direction, OntologyRegistry};
use crate::plantuml;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub dialect: String,
    pub include_ontology: bool,
    pub backend: Backend,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig { dialect: "jade-like".into(), include_ontology: true, backend: Backend::Template, seed: 0 }
    }
}

/// File extension used for generated sources of a dialect.
pub fn dialect_extension(dialect: &str) -> &'static str {
    match dialect {
        d if d.starts_with("jade") => "java",
        d if d.starts_with("pade") => "py",
        _ => "txt",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub structural_section: String,
    pub behavioral_section: String,
    pub constraints_section: String,
    pub directives: String,
    pub checksum: String,
    /// Agent classes the response is expected to cover, in model order.
    pub classes: Vec<String>,
    pub dialect: String,
}

impl PromptBundle {
    /// The whole prompt as sent to a model.
    pub fn full_text(&self) -> String {
        format!(
            "## Structural model\n\n{}\n## Behavioral model\n\n{}\n## Constraints\n\n{}\n## Directives\n\n{}",
            self.structural_section, self.behavioral_section, self.constraints_section, self.directives
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("refusing to build a prompt for an empty model")]
    EmptyModel,
    #[error("constraints were bound to model {bound}, not {model}")]
    ChecksumMismatch { bound: String, model: String },
    #[error("dialect must not be empty")]
    EmptyDialect,
    #[error("cannot render model: {0}")]
    Render(String),
}

fn sha256_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn assemble_prompt(
    model: &SystemModel,
    bound: &BoundConstraints,
    reg: Option<&OntologyRegistry>,
    cfg: &GenerationConfig,
) -> Result<PromptBundle, PromptError> {
    if model.is_empty() {
        return Err(PromptError::EmptyModel);
    }
    if cfg.dialect.trim().is_empty() {
        return Err(PromptError::EmptyDialect);
    }
    let checksum = model.checksum();
    if bound.model_checksum != checksum {
        return Err(PromptError::ChecksumMismatch { bound: bound.model_checksum.clone(), model: checksum });
    }
    let sources = plantuml::render_model(model).map_err(|e| PromptError::Render(e.to_string()))?;

    let mut structural = String::from("Agent classes:\n");
    for c in &model.classes {
        let label = c.display_label.as_ref().map(|l| format!(" ({l})")).unwrap_or_default();
        let abs = if c.is_abstract { " [abstract]" } else { "" };
        structural += &format!("- {}{label}{abs}\n", c.name);
    }
    structural += "Relationships:\n";
    for p in derive_predicates(model) {
        structural += &format!("- {} {} -> {}\n", p.name, p.roles.0, p.roles.1);
    }
    structural += "\n```plantuml\n";
    structural += &sources[0].text;
    structural += "```\n";

    let mut behavioral = String::new();
    for src in &sources[1..] {
        behavioral += &format!("```plantuml\n{}```\n", src.text);
    }
    if behavioral.is_empty() {
        behavioral = "(no state machines or activities)\n".into();
    }

    let mut constraints = String::from("OCL constraints:\n```ocl\n");
    constraints += &bound.as_set().render();
    constraints += "```\n";
    if let Some(reg) = reg.filter(|_| cfg.include_ontology) {
        constraints += "\nCommunication ontology:\n```text\n";
        constraints += &reg.render();
        constraints += "```\n";
    }

    let ext = dialect_extension(&cfg.dialect);
    let classes: Vec<String> = model.classes.iter().filter(|c| !c.is_abstract).map(|c| c.name.clone()).collect();
    let mut directives = format!(
        "Target framework dialect: {}.\nGenerate one agent program per class: {}.\n",
        cfg.dialect,
        classes.join(", ")
    );
    directives +=
        "Enforce every precondition and postcondition as a guard, check invariants after each state change,\n";
    if cfg.include_ontology && reg.is_some() {
        directives += "validate every message against its ontology concept before sending and after receiving,\n";
    }
    directives += &format!(
        "and return each program in its own fenced code block preceded by a comment line `// file: agent_<Class>.{ext}`.\n"
    );

    let checksum = sha256_hex(&[&structural, &behavioral, &constraints, &directives]);
    Ok(PromptBundle {
        structural_section: structural,
        behavioral_section: behavioral,
        constraints_section: constraints,
        directives,
        checksum,
        classes,
        dialect: cfg.dialect.clone(),
    })
}

// ---------------------------------------------------------------------------
// program IR

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    Entry,
    Exit,
    Statement,
    Branch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    pub kind: BlockKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEdge {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlockGraph {
    pub blocks: Vec<Block>,
    pub edges: Vec<BlockEdge>,
}

impl BasicBlockGraph {
    pub fn block(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn count(&self, kind: BlockKind) -> usize {
        self.blocks.iter().filter(|b| b.kind == kind).count()
    }

    /// Checks: one Entry, one Exit, Branch out-degree 2, edges between known
    /// blocks, everything reachable from Entry.
    pub fn check(&self) -> Result<(), String> {
        if self.count(BlockKind::Entry) != 1 {
            return Err("expected exactly one Entry block".into());
        }
        if self.count(BlockKind::Exit) != 1 {
            return Err("expected exactly one Exit block".into());
        }
        let mut ids = HashSet::new();
        for b in &self.blocks {
            if !ids.insert(b.id.as_str()) {
                return Err(format!("duplicate block `{}`", b.id));
            }
        }
        for e in &self.edges {
            if !ids.contains(e.from.as_str()) || !ids.contains(e.to.as_str()) {
                return Err(format!("edge {} -> {} has an unknown endpoint", e.from, e.to));
            }
        }
        for b in &self.blocks {
            let out = self.edges.iter().filter(|e| e.from == b.id).count();
            let ok = match b.kind {
                BlockKind::Branch => out == 2,
                BlockKind::Exit => out == 0,
                _ => out == 1,
            };
            if !ok {
                return Err(format!("block `{}` ({:?}) has out-degree {out}", b.id, b.kind));
            }
        }
        let entry = self.blocks.iter().find(|b| b.kind == BlockKind::Entry).map(|b| b.id.as_str());
        let mut seen: HashSet<&str> = entry.into_iter().collect();
        let mut stack: Vec<&str> = seen.iter().copied().collect();
        while let Some(n) = stack.pop() {
            for e in self.edges.iter().filter(|e| e.from == n) {
                if seen.insert(e.to.as_str()) {
                    stack.push(e.to.as_str());
                }
            }
        }
        match self.blocks.iter().find(|b| !seen.contains(b.id.as_str())) {
            Some(b) => Err(format!("block `{}` is unreachable from Entry", b.id)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum Trigger {
    Lifecycle(String),
    Operation(String),
    Action(String),
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Lifecycle(n) => write!(f, "lifecycle:{n}"),
            Trigger::Operation(n) => write!(f, "operation:{n}"),
            Trigger::Action(n) => write!(f, "action:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handler {
    pub trigger: Trigger,
    pub body: BasicBlockGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub constraint: String,
    /// `op:pre`, `op:post` or `invariant`.
    pub attachment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentProgramIR {
    pub agent_name: String,
    pub attributes: Vec<Attribute>,
    pub handlers: Vec<Handler>,
    pub guards: Vec<Guard>,
}

impl AgentProgramIR {
    pub fn branch_count(&self) -> usize {
        self.handlers.iter().map(|h| h.body.count(BlockKind::Branch)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub filename: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationResult {
    pub programs: Vec<AgentProgramIR>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_units: Option<Vec<SourceUnit>>,
    pub backend_log: String,
}

/// Builds a handler body as a sequence of statements and guard branches.
struct BodyBuilder {
    g: BasicBlockGraph,
    /// Blocks whose fall-through successor is the next block added.
    open: Vec<(String, Option<String>)>,
    /// Reject statements, wired to Exit at the end.
    exits: Vec<String>,
}

impl BodyBuilder {
    fn new() -> Self {
        let mut g = BasicBlockGraph::default();
        g.blocks.push(Block { id: "entry".into(), kind: BlockKind::Entry, label: String::new() });
        BodyBuilder { g, open: vec![("entry".into(), None)], exits: Vec::new() }
    }

    fn push(&mut self, kind: BlockKind, label: String) -> String {
        let id = format!("b{}", self.g.blocks.len());
        for (from, l) in self.open.drain(..) {
            self.g.edges.push(BlockEdge { from, to: id.clone(), label: l });
        }
        self.g.blocks.push(Block { id: id.clone(), kind, label });
        self.open.push((id.clone(), None));
        id
    }

    fn statement(&mut self, label: String) {
        self.push(BlockKind::Statement, label);
    }

    /// A guard: on failure a reject statement leaves the handler.
    fn guard(&mut self, label: String, reject: String) {
        let b = self.push(BlockKind::Branch, label);
        self.open.clear();
        let r = format!("b{}", self.g.blocks.len());
        self.g.blocks.push(Block { id: r.clone(), kind: BlockKind::Statement, label: reject });
        self.g.edges.push(BlockEdge { from: b.clone(), to: r.clone(), label: Some("fail".into()) });
        self.exits.push(r);
        self.open.push((b, Some("ok".into())));
    }

    fn finish(mut self) -> BasicBlockGraph {
        let exit = "exit".to_string();
        for (from, label) in self.open.drain(..) {
            self.g.edges.push(BlockEdge { from, to: exit.clone(), label });
        }
        for r in std::mem::take(&mut self.exits) {
            self.g.edges.push(BlockEdge { from: r, to: exit.clone(), label: None });
        }
        self.g.blocks.push(Block { id: exit, kind: BlockKind::Exit, label: String::new() });
        self.g
    }
}

/// Classes that get their own program: concrete classes, except subclasses
/// that add no members and no state machine of their own (those run their
/// ancestor's program).
pub fn program_classes(model: &SystemModel) -> Vec<&str> {
    model
        .classes
        .iter()
        .filter(|c| !c.is_abstract)
        .filter(|c| {
            let specializes = model.superclass(&c.name).is_some();
            let own_behavior = !c.attributes.is_empty()
                || !c.methods.is_empty()
                || model.state_machines.iter().any(|m| m.owner_class == c.name);
            !specializes || own_behavior
        })
        .map(|c| c.name.as_str())
        .collect()
}

pub fn generate_template(
    model: &SystemModel,
    bound: &BoundConstraints,
    reg: Option<&OntologyRegistry>,
    cfg: &GenerationConfig,
) -> GenerationResult {
    let reg = reg.filter(|_| cfg.include_ontology);
    let mut programs = Vec::new();
    let mut log = String::new();
    for class in program_classes(model) {
        let lineage = model.lineage(class);
        let attributes: Vec<Attribute> = model.all_attributes(class).into_iter().cloned().collect();
        let mut handlers = Vec::new();
        let mut guards = Vec::new();

        let mut setup = BodyBuilder::new();
        for a in &attributes {
            setup.statement(format!("init {}", a.name));
        }
        handlers.push(Handler { trigger: Trigger::Lifecycle("setup".into()), body: setup.finish() });

        let mut seen = HashSet::new();
        for m in lineage.iter().filter_map(|c| model.class(c)).flat_map(|c| &c.methods) {
            if !seen.insert(m.name.as_str()) {
                continue;
            }
            let mut b = BodyBuilder::new();
            for c in bound.for_operation(class, &m.name, ConstraintKind::Precondition) {
                b.guard(format!("check pre {}", c.name), format!("reject {}", c.name));
                guards.push(Guard { constraint: c.name.clone(), attachment: format!("{}:pre", m.name) });
            }
            b.statement(format!("do {}", m.name));
            for c in bound.for_operation(class, &m.name, ConstraintKind::Postcondition) {
                b.guard(format!("check post {}", c.name), format!("rollback {}", c.name));
                guards.push(Guard { constraint: c.name.clone(), attachment: format!("{}:post", m.name) });
            }
            handlers.push(Handler { trigger: Trigger::Operation(m.name.clone()), body: b.finish() });
        }

        for c in bound.constraints.iter().filter(|c| !c.kind.is_transition_scoped()) {
            if lineage.contains(&c.context) {
                guards.push(Guard { constraint: c.name.clone(), attachment: "invariant".into() });
            }
        }

        if let Some(reg) = reg {
            for a in reg.actions.iter().filter(|a| lineage.contains(&a.actor)) {
                let mut b = BodyBuilder::new();
                b.guard(format!("validate {}", a.payload), format!("discard {}", a.payload));
                let verb = match a.direction {
                    Direction::Send => "send",
                    Direction::Receive => "handle",
                };
                b.statement(format!("{verb} {} {}", a.payload, a.counterparty));
                handlers.push(Handler { trigger: Trigger::Action(a.name.clone()), body: b.finish() });
            }
        }

        let p = AgentProgramIR { agent_name: class.to_string(), attributes, handlers, guards };
        log += &format!("{}: {} handlers, {} branches\n", p.agent_name, p.handlers.len(), p.branch_count());
        programs.push(p);
    }
    GenerationResult { programs, source_units: None, backend_log: log }
}

/// Names of programs keyed by class, for lookups in reports.
pub fn by_agent(result: &GenerationResult) -> BTreeMap<&str, &AgentProgramIR> {
    result.programs.iter().map(|p| (p.agent_name.as_str(), p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{bind, parse_constraints};
    use crate::model::{AgentClass, Method, SemanticType};

    fn tiny() -> SystemModel {
        let mut m = SystemModel::empty("tiny", "1");
        let mut a = AgentClass::new("Solo");
        a.attributes.push(Attribute { name: "x".into(), ty: SemanticType::Integer });
        a.methods.push(Method { name: "run".into(), parameters: vec![], return_type: None });
        m.classes.push(a);
        m
    }

    #[test]
    fn straight_line_program() {
        let m = tiny();
        let b = bind(&Default::default(), &m).unwrap();
        let r = generate_template(&m, &b, None, &GenerationConfig::default());
        assert_eq!(r.programs.len(), 1);
        assert_eq!(r.programs[0].branch_count(), 0);
        for h in &r.programs[0].handlers {
            h.body.check().unwrap();
        }
    }

    #[test]
    fn guards_become_branches() {
        let m = tiny();
        let set =
            parse_constraints("context Solo::run() pre p: self.x = 0\ncontext Solo::run() post q: self.x > self.x@pre")
                .unwrap();
        let b = bind(&set, &m).unwrap();
        let r = generate_template(&m, &b, None, &GenerationConfig::default());
        let p = &r.programs[0];
        assert_eq!(p.branch_count(), 2);
        assert_eq!(p.guards.len(), 2);
        assert_eq!(p.guards[1].attachment, "run:post");
        for h in &p.handlers {
            h.body.check().unwrap();
        }
    }

    #[test]
    fn prompt_refuses_empty_model_and_foreign_constraints() {
        let m = tiny();
        let b = bind(&Default::default(), &m).unwrap();
        let empty = SystemModel::empty("e", "1");
        assert_eq!(assemble_prompt(&empty, &b, None, &GenerationConfig::default()), Err(PromptError::EmptyModel));
        let mut other = tiny();
        other.classes[0].attributes.clear();
        assert!(matches!(
            assemble_prompt(&other, &b, None, &GenerationConfig::default()),
            Err(PromptError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn prompt_is_deterministic() {
        let m = tiny();
        let b = bind(&Default::default(), &m).unwrap();
        let x = assemble_prompt(&m, &b, None, &GenerationConfig::default()).unwrap();
        let y = assemble_prompt(&m, &b, None, &GenerationConfig::default()).unwrap();
        assert_eq!(x, y);
        assert!(x.structural_section.contains("Solo"));
        assert!(x.directives.contains("agent_<Class>.java"));
    }

    #[test]
    fn check_rejects_bad_graphs() {
        let mut g = BodyBuilder::new().finish();
        assert!(g.check().is_ok());
        g.blocks.push(Block { id: "orphan".into(), kind: BlockKind::Statement, label: String::new() });
        g.edges.push(BlockEdge { from: "orphan".into(), to: "exit".into(), label: None });
        assert!(g.check().unwrap_err().contains("unreachable"));
    }
}
