//! Project configuration file (`amdd.toml`).

use std::fs;
use std::path::{Path, PathBuf};

use amdd_core::codegen::Backend;
use amdd_core::llm::LlmEndpointConfig;
use amdd_core::sim::{ScoreModel, SimConfig};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default = "default_version")]
    pub version: String,
    pub class: PathBuf,
    #[serde(default)]
    pub states: Vec<PathBuf>,
    #[serde(default)]
    pub activities: Vec<PathBuf>,
}

fn default_version() -> String {
    "0.1".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologySection {
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub dialect: String,
    pub backend: Backend,
    pub seed: u64,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection { dialect: "jade-like".into(), backend: Backend::Template, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub uv_count: usize,
    pub seed: u64,
    /// Per-UV masks; omitted means every UV is available/registered.
    pub availability: Option<Vec<bool>>,
    pub registration: Option<Vec<bool>>,
    pub engaged: Option<Vec<bool>>,
    pub max_tasked: Option<usize>,
    pub success_threshold: i64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            uv_count: 3,
            seed: 0,
            availability: None,
            registration: None,
            engaged: None,
            max_tasked: None,
            success_threshold: 50,
        }
    }
}

impl SimulationSection {
    pub fn to_config(&self) -> SimConfig {
        let n = self.uv_count;
        let mask = |m: &Option<Vec<bool>>, fill: bool| m.clone().unwrap_or_else(|| vec![fill; n]);
        SimConfig {
            uv_count: n,
            availability: mask(&self.availability, true),
            registration: mask(&self.registration, true),
            engaged: mask(&self.engaged, false),
            seed: self.seed,
            score_model: ScoreModel::Linear,
            max_tasked: self.max_tasked,
            success_threshold: self.success_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub model: ModelSection,
    pub constraints: Option<ConstraintsSection>,
    pub ontology: Option<OntologySection>,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub llm: LlmEndpointConfig,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory of the config file; every relative path resolves here.
    #[serde(skip)]
    pub base: PathBuf,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: cannot read config: {e}", path.display()))?;
        let mut cfg: ProjectConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn ontology_enabled(&self) -> bool {
        self.ontology.as_ref().is_some_and(|o| o.enabled)
    }
}
