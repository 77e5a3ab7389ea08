//! `amdd` command line: validate, prompt, generate, analyze, simulate and
//! conform, over a project described by one TOML file.
//!
//! Exit codes: 0 ok, 1 input or validation error, 2 backend transport
//! failure, 3 runtime constraint violation, 4 conformance violation.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use amdd_core::analysis::{
    compare_reports, cyclomatic, export_cfg, extract_cfg, import_cfg, render_comparison, render_reports,
    ComplexityReport, ControlFlowGraph,
};
use amdd_core::codegen::{assemble_prompt, generate_template, AgentProgramIR, Backend, GenerationConfig, PromptBundle};
use amdd_core::conformance::{check_trace, derive_expected, Verdict};
use amdd_core::constraints::{bind, parse_constraints, BoundConstraints, ConstraintSet};
use amdd_core::llm::{generate_llm, transcript_path, LlmClient, LlmError};
use amdd_core::model::validate_model;
use amdd_core::ontology::{parse_ontology, OntologyRegistry};
use amdd_core::plantuml::{parse_model, DiagramKind, DiagramSource};
use amdd_core::sim::{render_sequence_diagram, run_mission, trace_from_jsonl, trace_to_jsonl, RunStatus};
use amdd_core::SystemModel;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::ProjectConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CONFORMANCE: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Template,
    Llm,
}

#[derive(Debug, Parser)]
#[command(name = "amdd", version, about = "Model-driven agent generation, analysis and simulation")]
pub struct Cli {
    /// Project file; relative paths inside it resolve against its directory.
    #[arg(long, global = true, default_value = "amdd.toml")]
    pub config: PathBuf,
    #[arg(long, global = true)]
    pub backend: Option<BackendArg>,
    /// Treat novel events as violations when checking conformance.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub ontology: Option<Toggle>,
    #[arg(long = "uv-count", global = true)]
    pub uv_count: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config's `[output] dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse every input and check model, constraints and ontology.
    Validate,
    /// Write the three-layer prompt bundle.
    Prompt,
    /// Generate agent programs with the template or LLM backend.
    Generate,
    /// Cyclomatic complexity of DOT graphs or IR programs.
    Analyze {
        /// DOT files, IR JSON files, or directories holding them.
        inputs: Vec<PathBuf>,
        /// Compare two configurations (two directories).
        #[arg(long, num_args = 2, value_names = ["DIR_A", "DIR_B"])]
        compare: Option<Vec<PathBuf>>,
    },
    /// Run the fleet mission and record its trace.
    Simulate,
    /// Check a recorded trace against the activity diagram.
    Conform {
        /// Trace file; defaults to the last simulation's trace.
        trace: Option<PathBuf>,
    },
}

/// Where diagnostics and results go; tests pass in-memory buffers.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {{
        let _ = writeln!($w, $($arg)*);
    }};
}

/// Effective settings after applying flag overrides to the config file.
pub struct Settings {
    pub cfg: ProjectConfig,
    pub out_dir: PathBuf,
    pub backend: Backend,
    pub strict: bool,
}

impl Settings {
    pub fn from_cli(cli: &Cli) -> Result<Self, String> {
        let mut cfg = ProjectConfig::load(&cli.config)?;
        if let Some(t) = cli.ontology {
            match (&mut cfg.ontology, t) {
                (Some(o), t) => o.enabled = t == Toggle::On,
                (None, Toggle::On) => return Err("--ontology on, but the config has no [ontology] section".into()),
                (None, Toggle::Off) => {}
            }
        }
        if let Some(n) = cli.uv_count {
            let sim = &mut cfg.simulation;
            sim.uv_count = n;
            for mask in [&mut sim.availability, &mut sim.registration, &mut sim.engaged] {
                if mask.as_ref().is_some_and(|m| m.len() != n) {
                    *mask = None;
                }
            }
        }
        if let Some(s) = cli.seed {
            cfg.simulation.seed = s;
            cfg.generation.seed = s;
        }
        let backend = match cli.backend {
            Some(BackendArg::Template) => Backend::Template,
            Some(BackendArg::Llm) => Backend::Llm,
            None => cfg.generation.backend,
        };
        let out_dir = cli.out.clone().unwrap_or_else(|| cfg.out_dir());
        Ok(Settings { cfg, out_dir, backend, strict: cli.strict })
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            dialect: self.cfg.generation.dialect.clone(),
            include_ontology: self.cfg.ontology_enabled(),
            backend: self.backend,
            seed: self.cfg.generation.seed,
        }
    }

    /// `ocl` or `ocl_ontology`, naming the generation output directory.
    pub fn variant(&self) -> &'static str {
        if self.cfg.ontology_enabled() {
            "ocl_ontology"
        } else {
            "ocl"
        }
    }
}

/// Everything parsed from a project's inputs.
pub struct Project {
    pub model: SystemModel,
    pub bound: BoundConstraints,
    pub registry: Option<OntologyRegistry>,
    pub warnings: Vec<String>,
}

fn read(cfg: &ProjectConfig, p: &Path) -> Result<(String, String), Vec<String>> {
    let path = cfg.resolve(p);
    let shown = path.display().to_string();
    match fs::read_to_string(&path) {
        Ok(t) => Ok((t, shown)),
        Err(e) => Err(vec![format!("{shown}: cannot read: {e}")]),
    }
}

/// Parses and cross-checks all inputs. Errors come back as positioned
/// diagnostic lines.
pub fn load_project(cfg: &ProjectConfig) -> Result<Project, Vec<String>> {
    let m = &cfg.model;
    let mut sources = Vec::new();
    let (text, origin) = read(cfg, &m.class)?;
    sources.push(DiagramSource::new(DiagramKind::Class, text, origin));
    for p in &m.states {
        let (text, origin) = read(cfg, p)?;
        sources.push(DiagramSource::new(DiagramKind::State, text, origin));
    }
    for p in &m.activities {
        let (text, origin) = read(cfg, p)?;
        sources.push(DiagramSource::new(DiagramKind::Activity, text, origin));
    }
    let model = parse_model(&sources, &m.name, &m.version).map_err(|e| vec![e.to_string()])?;

    let report = validate_model(&model);
    let errors: Vec<String> = report.errors().map(|i| i.to_string()).collect();
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut warnings: Vec<String> =
        report.issues.iter().filter(|i| !report.errors().any(|e| e == *i)).map(|i| i.to_string()).collect();

    let set = match &cfg.constraints {
        Some(c) => {
            let (text, origin) = read(cfg, &c.path)?;
            parse_constraints(&text).map_err(|e| vec![format!("{origin}:{e}")])?
        }
        None => ConstraintSet::default(),
    };
    let bound = bind(&set, &model).map_err(|e| match e {
        amdd_core::constraints::ConstraintError::Binding(issues) => issues.iter().map(|i| i.to_string()).collect(),
        other => vec![other.to_string()],
    })?;

    let registry = match &cfg.ontology {
        Some(o) if o.enabled => {
            let (text, origin) = read(cfg, &o.path)?;
            let reg = parse_ontology(&text).map_err(|e| vec![format!("{origin}:{e}")])?;
            let unresolved = reg.unresolved_roles(&model);
            if !unresolved.is_empty() {
                return Err(unresolved.into_iter().map(|r| format!("{origin}: {r}")).collect());
            }
            Some(reg)
        }
        _ => None,
    };
    if model.activities.is_empty() {
        warnings.push("no activity diagram: conformance checking is unavailable".into());
    }
    Ok(Project { model, bound, registry, warnings })
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Entry point shared by the binary and the tests.
pub fn run(cli: &Cli, io: &mut Io<'_>) -> i32 {
    if let Command::Analyze { inputs, compare } = &cli.command {
        // Analysis works on plain files; a config is optional.
        let out_dir = cli.out.clone().or_else(|| ProjectConfig::load(&cli.config).ok().map(|c| c.out_dir()));
        return cmd_analyze(inputs, compare.as_deref(), out_dir.as_deref(), io);
    }
    let settings = match Settings::from_cli(cli) {
        Ok(s) => s,
        Err(e) => {
            say!(io.err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    match &cli.command {
        Command::Validate => cmd_validate(&settings, io),
        Command::Prompt => cmd_prompt(&settings, io),
        Command::Generate => cmd_generate(&settings, io),
        Command::Simulate => cmd_simulate(&settings, io),
        Command::Conform { trace } => cmd_conform(&settings, trace.as_deref(), io),
        Command::Analyze { .. } => unreachable!("handled above"),
    }
}

fn load_or_report(s: &Settings, io: &mut Io<'_>) -> Option<Project> {
    match load_project(&s.cfg) {
        Ok(p) => {
            for w in &p.warnings {
                say!(io.err, "warning: {w}");
            }
            Some(p)
        }
        Err(errors) => {
            for e in errors {
                say!(io.err, "error: {e}");
            }
            None
        }
    }
}

pub fn cmd_validate(s: &Settings, io: &mut Io<'_>) -> i32 {
    let Some(p) = load_or_report(s, io) else { return EXIT_INPUT };
    say!(
        io.out,
        "ok: {} classes, {} state machines, {} activities, {} constraints, {} ontology concepts",
        p.model.classes.len(),
        p.model.state_machines.len(),
        p.model.activities.len(),
        p.bound.constraints.len(),
        p.registry.as_ref().map_or(0, |r| r.concepts.len())
    );
    EXIT_OK
}

fn bundle_for(s: &Settings, p: &Project, io: &mut Io<'_>) -> Option<PromptBundle> {
    match assemble_prompt(&p.model, &p.bound, p.registry.as_ref(), &s.generation()) {
        Ok(b) => Some(b),
        Err(e) => {
            say!(io.err, "error: {e}");
            None
        }
    }
}

pub fn cmd_prompt(s: &Settings, io: &mut Io<'_>) -> i32 {
    let Some(p) = load_or_report(s, io) else { return EXIT_INPUT };
    let Some(b) = bundle_for(s, &p, io) else { return EXIT_INPUT };
    let dir = s.out_dir.join("prompt");
    let files = [
        ("structural.txt", b.structural_section.clone()),
        ("behavioral.txt", b.behavioral_section.clone()),
        ("constraints.txt", b.constraints_section.clone()),
        ("bundle.txt", b.full_text()),
        ("bundle.sha256", format!("{}\n", b.checksum)),
    ];
    for (name, text) in files {
        if let Err(e) = write_file(&dir.join(name), &text) {
            say!(io.err, "error: {e}");
            return EXIT_INPUT;
        }
    }
    say!(io.out, "prompt bundle {} written to {}", b.checksum, dir.display());
    EXIT_OK
}

fn analysis_of(programs: &[AgentProgramIR]) -> Result<Vec<(ControlFlowGraph, ComplexityReport)>, String> {
    programs
        .iter()
        .map(|prog| {
            let g = extract_cfg(prog);
            let r = cyclomatic(&g).map_err(|e| format!("{}: {e}", prog.agent_name))?;
            Ok((g, r))
        })
        .collect()
}

fn write_programs(dir: &Path, programs: &[AgentProgramIR]) -> Result<Vec<ComplexityReport>, String> {
    let analysed = analysis_of(programs)?;
    for (prog, (g, _)) in programs.iter().zip(&analysed) {
        write_file(&dir.join("ir").join(format!("{}.json", prog.agent_name)), &to_json(prog))?;
        write_file(&dir.join("cfg").join(format!("{}.dot", prog.agent_name)), &export_cfg(g))?;
    }
    let reports: Vec<ComplexityReport> = analysed.into_iter().map(|(_, r)| r).collect();
    write_file(&dir.join("analysis.json"), &to_json(&reports))?;
    Ok(reports)
}

pub fn cmd_generate(s: &Settings, io: &mut Io<'_>) -> i32 {
    let Some(p) = load_or_report(s, io) else { return EXIT_INPUT };
    match s.backend {
        Backend::Template => {
            let gen = generate_template(&p.model, &p.bound, p.registry.as_ref(), &s.generation());
            let dir = s.out_dir.join("generate").join(s.variant());
            match write_programs(&dir, &gen.programs) {
                Ok(reports) => {
                    let _ = write!(io.out, "{}", render_reports(&reports));
                    say!(io.out, "{} programs written to {}", gen.programs.len(), dir.display());
                    EXIT_OK
                }
                Err(e) => {
                    say!(io.err, "error: {e}");
                    EXIT_INPUT
                }
            }
        }
        Backend::Llm => {
            let Some(bundle) = bundle_for(s, &p, io) else { return EXIT_INPUT };
            let client = match LlmClient::from_env(s.cfg.llm.clone()) {
                Ok(c) => c,
                Err(e) => {
                    say!(io.err, "error: {e}");
                    return EXIT_INPUT;
                }
            };
            let log_path = transcript_path(&s.out_dir, &bundle.checksum);
            let dir = s.out_dir.join("generate").join("llm");
            match generate_llm(&bundle, &client) {
                Ok(gen) => {
                    let mut result = write_file(&log_path, &gen.backend_log);
                    for u in gen.source_units.iter().flatten() {
                        result = result.and_then(|_| write_file(&dir.join("src").join(&u.filename), &u.text));
                    }
                    if !gen.programs.is_empty() {
                        result = result.and_then(|_| write_programs(&dir, &gen.programs).map(|_| ()));
                    }
                    if let Err(e) = result {
                        say!(io.err, "error: {e}");
                        return EXIT_INPUT;
                    }
                    let n = gen.source_units.as_ref().map_or(0, Vec::len);
                    say!(io.out, "{n} source files written to {}", dir.join("src").display());
                    say!(io.out, "transcript: {}", log_path.display());
                    EXIT_OK
                }
                Err(e) => {
                    // keep whatever was produced
                    let _ = write_file(&log_path, e.transcript());
                    if let LlmError::Extraction { raw, .. } = &e {
                        let _ = write_file(&dir.join("raw_reply.txt"), raw);
                    }
                    say!(io.err, "error: {e}");
                    say!(io.err, "transcript: {}", log_path.display());
                    match e {
                        LlmError::MissingToken => EXIT_INPUT,
                        _ => EXIT_BACKEND,
                    }
                }
            }
        }
    }
}

/// Graph files under a path: a DOT or IR JSON file, or a directory of them
/// (DOT preferred; a `cfg/` subdirectory is used when present).
fn graph_files(path: &Path) -> Result<Vec<PathBuf>, String> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let list = |dir: &Path, ext: &str| -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)
            .into_iter()
            .flatten()
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == ext))
            .filter(|p| p.file_name().is_some_and(|n| n != "analysis.json"))
            .collect();
        v.sort();
        v
    };
    if !path.is_dir() {
        return Err(format!("{}: no such file or directory", path.display()));
    }
    for dir in [path.to_path_buf(), path.join("cfg")] {
        let dots = list(&dir, "dot");
        if !dots.is_empty() {
            return Ok(dots);
        }
    }
    for dir in [path.to_path_buf(), path.join("ir")] {
        let irs = list(&dir, "json");
        if !irs.is_empty() {
            return Ok(irs);
        }
    }
    Err(format!("{}: no .dot or IR .json files", path.display()))
}

fn analyze_file(path: &Path) -> Result<(ComplexityReport, Vec<String>), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: cannot read: {e}", path.display()))?;
    let (graph, warnings) = if path.extension().is_some_and(|x| x == "json") {
        let prog: AgentProgramIR =
            serde_json::from_str(&text).map_err(|e| format!("{}: not an IR program: {e}", path.display()))?;
        (extract_cfg(&prog), Vec::new())
    } else {
        import_cfg(&text).map_err(|e| format!("{}: {e}", path.display()))?
    };
    let report = cyclomatic(&graph).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((report, warnings.into_iter().map(|w| format!("{}: {w}", path.display())).collect()))
}

/// Reports for every graph under the inputs, ordered by label. Unreadable
/// files are reported and skipped.
fn analyze_inputs(inputs: &[PathBuf], io: &mut Io<'_>) -> (Vec<ComplexityReport>, bool) {
    let mut reports = Vec::new();
    let mut failed = false;
    for input in inputs {
        let files = match graph_files(input) {
            Ok(f) => f,
            Err(e) => {
                say!(io.err, "error: {e}");
                failed = true;
                continue;
            }
        };
        for f in files {
            match analyze_file(&f) {
                Ok((r, warnings)) => {
                    for w in warnings {
                        say!(io.err, "warning: {w}");
                    }
                    reports.push(r);
                }
                Err(e) => {
                    say!(io.err, "error: {e}");
                    failed = true;
                }
            }
        }
    }
    reports.sort_by(|a, b| a.label.cmp(&b.label));
    (reports, failed)
}

pub fn cmd_analyze(inputs: &[PathBuf], compare: Option<&[PathBuf]>, out_dir: Option<&Path>, io: &mut Io<'_>) -> i32 {
    if inputs.is_empty() && compare.is_none() {
        say!(io.err, "error: nothing to analyze; give graph files or --compare DIR_A DIR_B");
        return EXIT_INPUT;
    }
    let mut failed = false;
    if !inputs.is_empty() {
        let (reports, bad) = analyze_inputs(inputs, io);
        failed |= bad;
        let _ = write!(io.out, "{}", render_reports(&reports));
        if let Some(dir) = out_dir {
            if let Err(e) = write_file(&dir.join("analyze").join("analysis.json"), &to_json(&reports)) {
                say!(io.err, "error: {e}");
                failed = true;
            }
        }
    }
    if let Some([a, b]) = compare {
        let (ra, bad_a) = analyze_inputs(std::slice::from_ref(a), io);
        let (rb, bad_b) = analyze_inputs(std::slice::from_ref(b), io);
        failed |= bad_a || bad_b;
        match compare_reports(&ra, &rb) {
            Ok(table) => {
                say!(io.out, "A = {}\nB = {}", a.display(), b.display());
                let _ = write!(io.out, "{}", render_comparison(&table));
                if let Some(dir) = out_dir {
                    if let Err(e) = write_file(&dir.join("analyze").join("comparison.json"), &to_json(&table)) {
                        say!(io.err, "error: {e}");
                        failed = true;
                    }
                }
            }
            Err(e) => {
                say!(io.err, "error: {e}");
                failed = true;
            }
        }
    }
    if failed {
        EXIT_INPUT
    } else {
        EXIT_OK
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SimSummary<'a> {
    status: RunStatus,
    mission: Option<&'a str>,
    mean_score: Option<f64>,
    messages: usize,
    final_states: &'a std::collections::BTreeMap<String, String>,
}

pub fn cmd_simulate(s: &Settings, io: &mut Io<'_>) -> i32 {
    let Some(p) = load_or_report(s, io) else { return EXIT_INPUT };
    let Some(reg) = p.registry.as_ref() else {
        say!(io.err, "error: simulation needs the ontology (enable [ontology])");
        return EXIT_INPUT;
    };
    let sim_cfg = s.cfg.simulation.to_config();
    let trace = match run_mission(&sim_cfg, &p.model, &p.bound, reg) {
        Ok(t) => t,
        Err(e) => {
            say!(io.err, "error: {e}");
            return EXIT_INPUT;
        }
    };
    let dir = s.out_dir.join("simulate");
    let summary = SimSummary {
        status: trace.outcome.status,
        mission: trace.outcome.mission.as_deref(),
        mean_score: trace.outcome.mean_score,
        messages: trace.messages.len(),
        final_states: &trace.final_states,
    };
    let written = write_file(&dir.join("trace.jsonl"), &trace_to_jsonl(&trace))
        .and_then(|_| write_file(&dir.join("sequence.puml"), &render_sequence_diagram(&trace)))
        .and_then(|_| write_file(&dir.join("summary.json"), &to_json(&summary)));
    if let Err(e) = written {
        say!(io.err, "error: {e}");
        return EXIT_INPUT;
    }
    say!(io.out, "{} messages, status {}", trace.messages.len(), trace.outcome.status);
    for (id, state) in &trace.final_states {
        say!(io.out, "  {id}: {state}");
    }
    match trace.outcome.status {
        RunStatus::Halted => {
            say!(io.err, "error: {}", trace.outcome.detail.as_deref().unwrap_or("halted"));
            for v in &trace.outcome.violations {
                say!(io.err, "  {v}");
            }
            EXIT_RUNTIME
        }
        RunStatus::Aborted => {
            say!(io.out, "aborted: {}", trace.outcome.mission.as_deref().unwrap_or("unknown"));
            EXIT_OK
        }
        _ => {
            if let Some(m) = &trace.outcome.mission {
                say!(io.out, "mission: {m}");
            }
            EXIT_OK
        }
    }
}

pub fn cmd_conform(s: &Settings, trace: Option<&Path>, io: &mut Io<'_>) -> i32 {
    let Some(p) = load_or_report(s, io) else { return EXIT_INPUT };
    let Some(flow) = p.model.activities.first() else {
        say!(io.err, "error: the model has no activity diagram to derive the protocol from");
        return EXIT_INPUT;
    };
    let path = trace.map(Path::to_path_buf).unwrap_or_else(|| s.out_dir.join("simulate").join("trace.jsonl"));
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            say!(io.err, "error: {}: cannot read: {e}", path.display());
            return EXIT_INPUT;
        }
    };
    let trace = match trace_from_jsonl(&text) {
        Ok(t) => t,
        Err(e) => {
            say!(io.err, "error: {}: {e}", path.display());
            return EXIT_INPUT;
        }
    };
    let expected = derive_expected(flow);
    for w in &expected.warnings {
        say!(io.err, "warning: {w}");
    }
    let report = check_trace(&trace, &expected, s.strict);
    let _ = write!(io.out, "{}", report.render());
    if let Err(e) = write_file(&s.out_dir.join("conform").join("report.json"), &to_json(&report)) {
        say!(io.err, "error: {e}");
        return EXIT_INPUT;
    }
    if report.verdict == Verdict::Violating {
        EXIT_CONFORMANCE
    } else {
        EXIT_OK
    }
}
