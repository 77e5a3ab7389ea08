//! Model-driven generation and verification of multi-agent programs.
//!
//! The pipeline reads PlantUML class/state/activity diagrams into a
//! [`model::SystemModel`], binds OCL-style constraints and a FIPA-style
//! communication ontology to it, assembles generation prompts, generates
//! agent programs, and verifies them structurally (cyclomatic complexity) and
//! behaviorally (simulated mission traces checked against the activity flow).

pub mod analysis;
pub mod codegen;
pub mod conformance;
pub mod constraints;
pub mod ident;
pub mod llm;
pub mod model;
pub mod ontology;
pub mod plantuml;
pub mod sim;

pub use model::{SystemModel, ValidationReport};
