#![allow(dead_code)]

pub mod gen;
pub mod mock_llm;

use std::fs;
use std::path::PathBuf;

use amdd_core::constraints::{bind, parse_constraints, BoundConstraints};
use amdd_core::ontology::{parse_ontology, OntologyRegistry};
use amdd_core::plantuml::{parse_model, DiagramKind, DiagramSource};
use amdd_core::SystemModel;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn read(rel: &str) -> String {
    fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub struct Uvf {
    pub model: SystemModel,
    pub bound: BoundConstraints,
    pub reg: OntologyRegistry,
}

pub fn uvf() -> Uvf {
    let src = |kind, f: &str| DiagramSource::new(kind, read(&format!("uvf/{f}")), f);
    let sources = [
        src(DiagramKind::Class, "class.puml"),
        src(DiagramKind::State, "uv_states.puml"),
        src(DiagramKind::Activity, "mission.puml"),
    ];
    let model = parse_model(&sources, "UVF", "1.0").expect("fixture parses");
    let set = parse_constraints(&read("uvf/uvf.ocl")).expect("constraints parse");
    let bound = bind(&set, &model).expect("constraints bind");
    let reg = parse_ontology(&read("uvf/uvf.onto")).expect("ontology parses");
    Uvf { model, bound, reg }
}
