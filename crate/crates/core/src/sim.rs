//! Deterministic runtime for the fleet mission protocol.
//!
//! One FIFO queue of deliveries; each [`Simulation::step`] hands one item to
//! its receiver, whose handler may send further messages. Every operation is
//! wrapped in pre/post checks and every step ends with an invariant check;
//! any violation halts the run with the trace kept. Message content is
//! validated against the ontology at send time.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::constraints::{
    check_snapshot, check_transition, BoundConstraints, ConstraintKind, InstanceSnapshot, Link, ObjectSnapshot,
    TransitionRecord, Value, Violation,
};
use crate::model::{lower_first, RelationshipKind, SemanticType, SystemModel};
use crate::ontology::{validate_content, ContentInstance, OntologyRegistry};

pub const OPERATOR: &str = "Operator";
pub const MCC: &str = "MCC";
pub const MANAGER: &str = "UVFManager";
pub const UV: &str = "UV";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreModel {
    /// `50 + ((seed + 7 * index) mod 51)`, index counted from 0.
    Linear,
}

impl ScoreModel {
    pub fn score(self, index: usize, seed: u64) -> i64 {
        match self {
            ScoreModel::Linear => 50 + ((seed % 51 + (7 * index as u64) % 51) % 51) as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimConfig {
    pub uv_count: usize,
    pub availability: Vec<bool>,
    pub registration: Vec<bool>,
    /// Fault injection: UVs that start in `Registered.Controlled`.
    #[serde(default)]
    pub engaged: Vec<bool>,
    pub seed: u64,
    pub score_model: ScoreModel,
    /// Upper bound on the UVs put in the fleet plan.
    #[serde(default)]
    pub max_tasked: Option<usize>,
    /// Mean score at or above which the mission counts as a success.
    pub success_threshold: i64,
}

impl SimConfig {
    /// `n` UVs, all available and registered.
    pub fn ready(n: usize, seed: u64) -> Self {
        SimConfig {
            uv_count: n,
            availability: vec![true; n],
            registration: vec![true; n],
            engaged: vec![false; n],
            seed,
            score_model: ScoreModel::Linear,
            max_tasked: None,
            success_threshold: 50,
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        let n = self.uv_count;
        let engaged_ok = self.engaged.is_empty() || self.engaged.len() == n;
        if self.availability.len() != n || self.registration.len() != n || !engaged_ok {
            return Err(SimError::Config(format!("mask lengths must equal uvCount ({n})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("model cannot run the mission: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Performative {
    Inform,
    Request,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AclMessage {
    pub t: u64,
    pub performative: Performative,
    pub from: String,
    pub to: String,
    pub concept: String,
    #[serde(rename = "conversationId")]
    pub conversation_id: String,
    pub slots: BTreeMap<String, Json>,
}

impl AclMessage {
    pub fn content(&self) -> ContentInstance {
        ContentInstance { concept: self.concept.clone(), slots: self.slots.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInstance {
    pub role: String,
    pub id: String,
    pub state: Option<String>,
    pub attributes: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentInfo {
    pub id: String,
    pub class: String,
    pub lineage: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionRecord {
    pub t: u64,
    /// `pre`, `post`, `invariant` or `content`.
    pub check: String,
    pub subject: String,
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Aborted,
    Halted,
    /// Stepping stopped before the protocol finished.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Outcome {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mission: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MessageTrace {
    pub messages: Vec<AclMessage>,
    pub final_states: BTreeMap<String, String>,
    pub assertion_log: Vec<AssertionRecord>,
    pub agents: Vec<AgentInfo>,
    pub outcome: Outcome,
}

impl MessageTrace {
    pub fn lineage_of(&self, id: &str) -> Vec<String> {
        self.agents.iter().find(|a| a.id == id).map_or_else(|| vec![id.to_string()], |a| a.lineage.clone())
    }

    pub fn count(&self, concept: &str) -> usize {
        self.messages.iter().filter(|m| m.concept == concept).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Delivery {
    Kickoff,
    Message(usize),
}

/// A running mission over borrowed model artifacts.
pub struct Simulation<'a> {
    model: &'a SystemModel,
    bound: &'a BoundConstraints,
    reg: &'a OntologyRegistry,
    cfg: SimConfig,
    agents: Vec<AgentInstance>,
    links: BTreeMap<String, Vec<Link>>,
    queue: VecDeque<Delivery>,
    clock: u64,
    messages: Vec<AclMessage>,
    log: Vec<AssertionRecord>,
    outcome: Option<Outcome>,
    mission_id: String,
    scores: Vec<i64>,
}

struct Halt {
    violations: Vec<Violation>,
    detail: String,
}

fn uv_id(i: usize, n: usize) -> String {
    if n >= 10 {
        format!("UV{:0width$}", i + 1, width = n.to_string().len())
    } else {
        format!("UV{}", i + 1)
    }
}

fn default_value(ty: &SemanticType, id: &str) -> Value {
    match ty {
        SemanticType::Id => Value::Str(id.to_string()),
        SemanticType::String => Value::Str(String::new()),
        SemanticType::Integer => Value::Int(0),
        SemanticType::Real => Value::Real(0.0),
        SemanticType::Boolean => Value::Bool(false),
        SemanticType::Enum(lits) => Value::Str(lits.first().cloned().unwrap_or_default()),
    }
}

impl<'a> Simulation<'a> {
    pub fn new(
        cfg: SimConfig,
        model: &'a SystemModel,
        bound: &'a BoundConstraints,
        reg: &'a OntologyRegistry,
    ) -> Result<Self, SimError> {
        cfg.check()?;
        for role in [OPERATOR, MCC, MANAGER, UV] {
            if model.class(role).is_none() {
                return Err(SimError::Model(format!("missing agent class `{role}`")));
            }
        }
        let machine = model.state_machine_for(UV).ok_or_else(|| SimError::Model("UV has no state machine".into()))?;
        for s in ["Unavailable", "Unregistered", "Registered", "Uncontrolled", "Controlled"] {
            if machine.state(s).is_none() {
                return Err(SimError::Model(format!("UV state machine lacks state `{s}`")));
            }
        }
        for c in [
            "MissionBrief",
            "DiscoverUVs",
            "UVList",
            "FleetPlan",
            "UVTask",
            "UVPerformance",
            "FleetPerformance",
            "MissionPerformance",
        ] {
            if reg.concept(c).is_none() {
                return Err(SimError::Model(format!("ontology lacks concept `{c}`")));
            }
        }

        let subclasses: Vec<&str> = model
            .classes
            .iter()
            .filter(|c| c.name != UV && !c.is_abstract && model.conforms_to(&c.name, UV))
            .map(|c| c.name.as_str())
            .collect();
        let mut agents = Vec::new();
        let mut make = |role: &str, id: String, state: Option<String>| {
            let attributes =
                model.all_attributes(role).into_iter().map(|a| (a.name.clone(), default_value(&a.ty, &id))).collect();
            agents.push(AgentInstance { role: role.to_string(), id, state, attributes });
        };
        make(OPERATOR, OPERATOR.into(), None);
        make(MCC, MCC.into(), None);
        make(MANAGER, MANAGER.into(), None);
        for i in 0..cfg.uv_count {
            let class = if subclasses.is_empty() { UV } else { subclasses[i % subclasses.len()] };
            let state = if !cfg.availability[i] {
                "Unavailable".to_string()
            } else if !cfg.registration[i] {
                "Unregistered".to_string()
            } else if cfg.engaged.get(i).copied().unwrap_or(false) {
                machine.qualified("Controlled")
            } else {
                machine.qualified(&machine.enter("Registered"))
            };
            make(class, uv_id(i, cfg.uv_count), Some(state));
        }

        let mut links: BTreeMap<String, Vec<Link>> = BTreeMap::new();
        for r in model.relationships.iter().filter(|r| r.kind != RelationshipKind::Inheritance) {
            for a in agents.iter().filter(|a| model.conforms_to(&a.role, &r.source)) {
                for b in agents.iter().filter(|b| model.conforms_to(&b.role, &r.target)) {
                    let fwd = r.label.clone().unwrap_or_else(|| lower_first(&r.target));
                    let back = r.label.clone().unwrap_or_else(|| lower_first(&r.source));
                    links.entry(a.id.clone()).or_default().push(Link { relationship: fwd, peer: b.id.clone() });
                    links.entry(b.id.clone()).or_default().push(Link { relationship: back, peer: a.id.clone() });
                }
            }
        }

        let mission_id = format!("mission-{}", cfg.seed);
        Ok(Simulation {
            model,
            bound,
            reg,
            cfg,
            agents,
            links,
            queue: VecDeque::from([Delivery::Kickoff]),
            clock: 0,
            messages: Vec::new(),
            log: Vec::new(),
            outcome: None,
            mission_id,
            scores: Vec::new(),
        })
    }

    pub fn agents(&self) -> &[AgentInstance] {
        &self.agents
    }

    pub fn messages(&self) -> &[AclMessage] {
        &self.messages
    }

    pub fn is_fixpoint(&self) -> bool {
        self.queue.is_empty() || self.outcome.as_ref().is_some_and(|o| o.status == RunStatus::Halted)
    }

    pub fn snapshot(&self) -> ObjectSnapshot {
        ObjectSnapshot {
            instances: self
                .agents
                .iter()
                .map(|a| InstanceSnapshot {
                    class: a.role.clone(),
                    id: a.id.clone(),
                    attributes: a.attributes.clone(),
                    state: a.state.clone(),
                    links: self.links.get(&a.id).cloned().unwrap_or_default(),
                })
                .collect(),
        }
    }

    /// Delivers one queued item and returns the messages it caused.
    pub fn step(&mut self) -> Vec<AclMessage> {
        if self.is_fixpoint() {
            return Vec::new();
        }
        let before = self.messages.len();
        let Some(item) = self.queue.pop_front() else { return Vec::new() };
        let result = match item {
            Delivery::Kickoff => self.on_kickoff(),
            Delivery::Message(i) => {
                let msg = self.messages[i].clone();
                self.deliver(&msg)
            }
        };
        let result = result.and_then(|_| self.check_invariants());
        if let Err(h) = result {
            self.queue.clear();
            self.outcome = Some(Outcome {
                status: RunStatus::Halted,
                mission: None,
                mean_score: None,
                violations: h.violations,
                detail: Some(h.detail),
            });
        }
        self.messages[before..].to_vec()
    }

    pub fn run(mut self) -> MessageTrace {
        while !self.is_fixpoint() {
            self.step();
        }
        self.finish()
    }

    pub fn finish(self) -> MessageTrace {
        let outcome = self.outcome.unwrap_or(Outcome {
            status: RunStatus::Incomplete,
            mission: None,
            mean_score: None,
            violations: Vec::new(),
            detail: None,
        });
        let final_states = self.agents.iter().filter_map(|a| Some((a.id.clone(), a.state.clone()?))).collect();
        let agents = self
            .agents
            .iter()
            .map(|a| AgentInfo { id: a.id.clone(), class: a.role.clone(), lineage: self.model.lineage(&a.role) })
            .collect();
        MessageTrace { messages: self.messages, final_states, assertion_log: self.log, agents, outcome }
    }

    fn agent_mut(&mut self, id: &str) -> &mut AgentInstance {
        self.agents.iter_mut().find(|a| a.id == id).expect("agent exists")
    }

    fn agent(&self, id: &str) -> &AgentInstance {
        self.agents.iter().find(|a| a.id == id).expect("agent exists")
    }

    fn send(&mut self, performative: Performative, from: &str, to: &str, content: ContentInstance) -> Result<(), Halt> {
        self.clock += 1;
        let problems = validate_content(self.reg, &content);
        self.log.push(AssertionRecord {
            t: self.clock,
            check: "content".into(),
            subject: format!("{from}->{to}"),
            name: content.concept.clone(),
            passed: problems.is_empty(),
        });
        if !problems.is_empty() {
            let list: Vec<String> = problems.iter().map(|p| p.to_string()).collect();
            return Err(Halt {
                violations: Vec::new(),
                detail: format!("{} from {from} fails its schema: {}", content.concept, list.join("; ")),
            });
        }
        self.messages.push(AclMessage {
            t: self.clock,
            performative,
            from: from.into(),
            to: to.into(),
            concept: content.concept,
            conversation_id: self.mission_id.clone(),
            slots: content.slots,
        });
        self.queue.push_back(Delivery::Message(self.messages.len() - 1));
        Ok(())
    }

    fn log_checks(&mut self, subject: &str, op: &str, kind: ConstraintKind, failed: &[Violation]) {
        let class = self.agent(subject).role.clone();
        let names: Vec<String> = self.bound.for_operation(&class, op, kind).map(|c| c.name.clone()).collect();
        let check = if kind == ConstraintKind::Precondition { "pre" } else { "post" };
        for name in names {
            let passed = !failed.iter().any(|v| v.constraint == name);
            self.log.push(AssertionRecord {
                t: self.clock,
                check: check.into(),
                subject: subject.into(),
                name,
                passed,
            });
        }
    }

    /// Runs an operation on an agent: preconditions, the state change and
    /// the machine transition named after the operation, postconditions.
    fn invoke(&mut self, id: &str, op: &str, mutate: impl FnOnce(&mut AgentInstance)) -> Result<(), Halt> {
        let pre = self.snapshot();
        let probe = TransitionRecord { instance: id.into(), operation: op.into(), pre: pre.clone(), post: pre.clone() };
        let pre_fail: Vec<Violation> = check_transition(self.bound, &probe)
            .into_iter()
            .filter(|v| v.kind == ConstraintKind::Precondition)
            .collect();
        self.log_checks(id, op, ConstraintKind::Precondition, &pre_fail);
        if !pre_fail.is_empty() {
            return Err(Halt { violations: pre_fail, detail: format!("precondition of {id}.{op} failed") });
        }

        mutate(self.agent_mut(id));
        let role = self.agent(id).role.clone();
        if let (Some(machine), Some(state)) = (self.model.state_machine_for(&role), self.agent(id).state.clone()) {
            if machine.transitions.iter().any(|t| t.event == op) {
                let path: Vec<&str> = state.split('.').collect();
                let fired = machine.transitions.iter().find(|t| t.event == op && path.contains(&t.from.as_str()));
                let Some(t) = fired else {
                    return Err(Halt {
                        violations: Vec::new(),
                        detail: format!("{id}: event {op} is not enabled in state {state}"),
                    });
                };
                let next = machine.qualified(&machine.enter(&t.to));
                self.agent_mut(id).state = Some(next);
            }
        }

        let rec = TransitionRecord { instance: id.into(), operation: op.into(), pre, post: self.snapshot() };
        let post_fail: Vec<Violation> = check_transition(self.bound, &rec)
            .into_iter()
            .filter(|v| v.kind == ConstraintKind::Postcondition)
            .collect();
        self.log_checks(id, op, ConstraintKind::Postcondition, &post_fail);
        if !post_fail.is_empty() {
            return Err(Halt { violations: post_fail, detail: format!("postcondition of {id}.{op} failed") });
        }
        Ok(())
    }

    fn check_invariants(&mut self) -> Result<(), Halt> {
        let v = check_snapshot(self.bound, &self.snapshot());
        self.log.push(AssertionRecord {
            t: self.clock,
            check: "invariant".into(),
            subject: "world".into(),
            name: "invariants".into(),
            passed: v.is_empty(),
        });
        if v.is_empty() {
            Ok(())
        } else {
            Err(Halt { violations: v, detail: "invariant violated".into() })
        }
    }

    fn selectable(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .agents
            .iter()
            .filter(|a| self.model.conforms_to(&a.role, UV))
            .filter(|a| a.state.as_deref().is_some_and(|s| s.split('.').next() == Some("Registered")))
            .map(|a| a.id.clone())
            .collect();
        ids.sort();
        ids
    }

    fn on_kickoff(&mut self) -> Result<(), Halt> {
        let mission = self.mission_id.clone();
        self.agent_mut(OPERATOR).attributes.insert("missionId".into(), Value::Str(mission.clone()));
        self.invoke(OPERATOR, "dispatchMission", |_| {})?;
        let brief = ContentInstance::new("MissionBrief").with("missionId", mission).with("status", "pending");
        self.send(Performative::Inform, OPERATOR, MCC, brief)
    }

    fn deliver(&mut self, msg: &AclMessage) -> Result<(), Halt> {
        let mission = self.mission_id.clone();
        let slot_ids = |key: &str| -> Vec<String> {
            msg.slots
                .get(key)
                .and_then(Json::as_array)
                .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
                .unwrap_or_default()
        };
        match (msg.to.as_str(), msg.concept.as_str()) {
            (MCC, "MissionBrief") => {
                let m = mission.clone();
                self.agent_mut(MCC).attributes.insert("activeMissionId".into(), Value::Str(m));
                self.send(
                    Performative::Request,
                    MCC,
                    MANAGER,
                    ContentInstance::new("DiscoverUVs").with("missionId", mission),
                )
            }
            (MANAGER, "DiscoverUVs") => {
                let ids = self.selectable();
                let list = ContentInstance::new("UVList").with("missionId", mission).with("uvIds", json!(ids));
                self.send(Performative::Inform, MANAGER, MCC, list)
            }
            (MCC, "UVList") => {
                let mut ids = slot_ids("uvIds");
                if let Some(max) = self.cfg.max_tasked {
                    ids.truncate(max);
                }
                if ids.is_empty() {
                    self.outcome = Some(Outcome {
                        status: RunStatus::Aborted,
                        mission: Some("NoAvailableUV".into()),
                        mean_score: None,
                        violations: Vec::new(),
                        detail: Some("no available registered UV".into()),
                    });
                    let notice = ContentInstance::new("MissionPerformance")
                        .with("missionId", mission)
                        .with("outcome", "NoAvailableUV");
                    return self.send(Performative::Inform, MCC, OPERATOR, notice);
                }
                let k = ids.len() as i64;
                self.invoke(MCC, "planFleet", |a| {
                    a.attributes.insert("plannedUVs".into(), Value::Int(k));
                })?;
                let plan = ContentInstance::new("FleetPlan")
                    .with("planId", format!("plan-{mission}"))
                    .with("missionId", mission)
                    .with("uvIds", json!(ids));
                self.send(Performative::Inform, MCC, MANAGER, plan)
            }
            (MANAGER, "FleetPlan") => {
                let ids = slot_ids("uvIds");
                let k = ids.len() as i64;
                self.invoke(MANAGER, "assignTasks", |a| {
                    a.attributes.insert("tasksAssigned".into(), Value::Int(k));
                })?;
                for id in ids {
                    let task = ContentInstance::new("UVTask")
                        .with("taskId", format!("task-{id}"))
                        .with("uvId", id.clone())
                        .with("description", "survey sector");
                    self.send(Performative::Inform, MANAGER, &id, task)?;
                }
                Ok(())
            }
            (to, "UVTask") => {
                let to = to.to_string();
                self.invoke(&to, "assignTask", |_| {})?;
                let index = self.agents.iter().filter(|a| self.model.conforms_to(&a.role, UV)).position(|a| a.id == to);
                let score = self.cfg.score_model.score(index.unwrap_or(0), self.cfg.seed);
                self.invoke(&to, "completeTask", |a| {
                    a.attributes.insert("performanceScore".into(), Value::Real(score as f64));
                })?;
                let perf = ContentInstance::new("UVPerformance").with("uvId", to.clone()).with("score", score as f64);
                self.send(Performative::Inform, &to, MANAGER, perf)
            }
            (MANAGER, "UVPerformance") => {
                let score = msg.slots.get("score").and_then(Json::as_f64).unwrap_or(0.0);
                self.scores.push(score.round() as i64);
                self.invoke(MANAGER, "collectPerformance", |a| {
                    if let Some(Value::Int(n)) = a.attributes.get_mut("reportsCollected") {
                        *n += 1;
                    }
                })?;
                let mgr = self.agent(MANAGER);
                let done = mgr.attributes.get("reportsCollected") == mgr.attributes.get("tasksAssigned");
                if !done {
                    return Ok(());
                }
                self.invoke(MANAGER, "compileFleetPerformance", |_| {})?;
                let mean = self.mean();
                let fleet = ContentInstance::new("FleetPerformance")
                    .with("missionId", mission)
                    .with("meanScore", mean.to_f64().unwrap_or(0.0));
                self.send(Performative::Inform, MANAGER, MCC, fleet)
            }
            (MCC, "FleetPerformance") => {
                self.invoke(MCC, "evaluateMission", |_| {})?;
                let mean = self.mean();
                let verdict =
                    if mean >= Ratio::from_integer(self.cfg.success_threshold) { "success" } else { "failure" };
                let report = ContentInstance::new("MissionPerformance")
                    .with("missionId", mission)
                    .with("outcome", verdict)
                    .with("meanScore", mean.to_f64().unwrap_or(0.0));
                self.send(Performative::Inform, MCC, OPERATOR, report)
            }
            (OPERATOR, "MissionPerformance") => {
                self.invoke(OPERATOR, "receiveReport", |_| {})?;
                if self.outcome.is_none() {
                    self.outcome = Some(Outcome {
                        status: RunStatus::Completed,
                        mission: msg.slots.get("outcome").and_then(Json::as_str).map(String::from),
                        mean_score: msg.slots.get("meanScore").and_then(Json::as_f64),
                        violations: Vec::new(),
                        detail: None,
                    });
                }
                Ok(())
            }
            (to, concept) => Err(Halt { violations: Vec::new(), detail: format!("{to} has no handler for {concept}") }),
        }
    }

    /// Exact mean of the collected scores.
    fn mean(&self) -> Ratio<i64> {
        if self.scores.is_empty() {
            return Ratio::from_integer(0);
        }
        Ratio::new(self.scores.iter().sum(), self.scores.len() as i64)
    }
}

pub fn run_mission(
    cfg: &SimConfig,
    model: &SystemModel,
    bound: &BoundConstraints,
    reg: &OntologyRegistry,
) -> Result<MessageTrace, SimError> {
    Ok(Simulation::new(cfg.clone(), model, bound, reg)?.run())
}

// ---------------------------------------------------------------------------
// persistence

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Footer {
    final_states: BTreeMap<String, String>,
    assertion_log: Vec<AssertionRecord>,
    agents: Vec<AgentInfo>,
    outcome: Outcome,
}

/// One JSON object per message, then a footer line.
pub fn trace_to_jsonl(trace: &MessageTrace) -> String {
    let mut s = String::new();
    for m in &trace.messages {
        s += &serde_json::to_string(m).expect("message serializes");
        s.push('\n');
    }
    let footer = Footer {
        final_states: trace.final_states.clone(),
        assertion_log: trace.assertion_log.clone(),
        agents: trace.agents.clone(),
        outcome: trace.outcome.clone(),
    };
    s += &serde_json::to_string(&footer).expect("footer serializes");
    s.push('\n');
    s
}

pub fn trace_from_jsonl(text: &str) -> Result<MessageTrace, TraceError> {
    let mut messages = Vec::new();
    let mut footer: Option<Footer> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TraceError { line: i + 1, message };
        if footer.is_some() {
            return Err(err("content after the footer".into()));
        }
        let v: Json = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if v.get("finalStates").is_some() {
            footer = Some(serde_json::from_value(v).map_err(|e| err(e.to_string()))?);
        } else {
            messages.push(serde_json::from_value::<AclMessage>(v).map_err(|e| err(e.to_string()))?);
        }
    }
    let footer = footer.ok_or(TraceError { line: text.lines().count(), message: "missing footer".into() })?;
    Ok(MessageTrace {
        messages,
        final_states: footer.final_states,
        assertion_log: footer.assertion_log,
        agents: footer.agents,
        outcome: footer.outcome,
    })
}

fn slot_text(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        Json::Array(items) => format!("[{}]", items.iter().map(slot_text).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

/// PlantUML sequence diagram with one arrow per message in time order.
pub fn render_sequence_diagram(trace: &MessageTrace) -> String {
    let mut s = String::from("@startuml\n");
    let mut seen: Vec<&str> = Vec::new();
    for m in &trace.messages {
        for p in [m.from.as_str(), m.to.as_str()] {
            if !seen.contains(&p) {
                seen.push(p);
            }
        }
    }
    for p in &seen {
        s += &format!("participant {p}\n");
    }
    let mut msgs: Vec<&AclMessage> = trace.messages.iter().collect();
    msgs.sort_by_key(|m| m.t);
    for m in msgs {
        let slots: Vec<String> = m.slots.iter().map(|(k, v)| format!("{k}={}", slot_text(v))).collect();
        s += &format!("{} -> {} : {}({})\n", m.from, m.to, m.concept, slots.join(", "));
    }
    s += "@enduml\n";
    s
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Completed => "completed",
            RunStatus::Aborted => "aborted",
            RunStatus::Halted => "halted",
            RunStatus::Incomplete => "incomplete",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_stay_in_range() {
        for seed in [0, 1, 50, 51, 1_000_003, u64::MAX] {
            for i in 0..200 {
                let s = ScoreModel::Linear.score(i, seed);
                assert!((50..=100).contains(&s), "{s}");
            }
        }
        assert_eq!(ScoreModel::Linear.score(0, 7), 57);
        assert_eq!(ScoreModel::Linear.score(1, 7), 64);
    }

    #[test]
    fn padded_ids() {
        assert_eq!(uv_id(0, 3), "UV1");
        assert_eq!(uv_id(0, 12), "UV01");
        assert_eq!(uv_id(11, 12), "UV12");
    }

    #[test]
    fn mask_lengths_are_checked() {
        let mut c = SimConfig::ready(2, 0);
        c.availability.pop();
        assert!(c.check().is_err());
    }

    #[test]
    fn empty_trace_renders_empty_body() {
        let t = MessageTrace {
            messages: vec![],
            final_states: BTreeMap::new(),
            assertion_log: vec![],
            agents: vec![],
            outcome: Outcome {
                status: RunStatus::Incomplete,
                mission: None,
                mean_score: None,
                violations: vec![],
                detail: None,
            },
        };
        assert_eq!(render_sequence_diagram(&t), "@startuml\n@enduml\n");
        assert_eq!(trace_from_jsonl(&trace_to_jsonl(&t)).unwrap(), t);
    }
}
