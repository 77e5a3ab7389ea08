use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn amdd(args: &[&str]) -> Out {
    let o =
        Command::new(env!("CARGO_BIN_EXE_amdd")).args(args).env_remove("AMDD_LLM_TOKEN").output().expect("spawn amdd");
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into(),
        stderr: String::from_utf8_lossy(&o.stderr).into(),
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Copy of the fleet project in a temp dir, so tests can edit files.
fn project() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(fixtures().join("uvf")).unwrap() {
        let p = e.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let cfg = dir.path().join("amdd.toml").display().to_string();
    (dir, cfg)
}

fn edit(path: impl AsRef<Path>, from: &str, to: &str) {
    let text = fs::read_to_string(path.as_ref()).unwrap();
    assert!(text.contains(from), "{from:?} not in {}", path.as_ref().display());
    fs::write(path, text.replacen(from, to, 1)).unwrap();
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn validate_accepts_fixture() {
    let (_d, cfg) = project();
    let r = amdd(&["--config", &cfg, "validate"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("7 classes"), "{}", r.stdout);
}

#[test]
fn validate_names_missing_ontology_file() {
    let (d, cfg) = project();
    edit(d.path().join("amdd.toml"), "uvf.onto", "gone.onto");
    let r = amdd(&["--config", &cfg, "validate"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("gone.onto"), "{}", r.stderr);
}

#[test]
fn validate_rejects_constraint_on_unknown_class() {
    let (d, cfg) = project();
    let ocl = d.path().join("uvf.ocl");
    let text = read(&ocl) + "\ncontext Submarine inv depthOk: self.depth >= 0\n";
    fs::write(&ocl, text).unwrap();
    let r = amdd(&["--config", &cfg, "validate"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("Submarine"), "{}", r.stderr);
}

#[test]
fn missing_config_is_input_error() {
    let r = amdd(&["--config", "/nonexistent/amdd.toml", "validate"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("/nonexistent/amdd.toml"));
}

#[test]
fn prompt_bundle_is_stable_and_respects_ontology_toggle() {
    let (d, cfg) = project();
    let out = d.path().join("o").display().to_string();
    assert_eq!(amdd(&["--config", &cfg, "--out", &out, "prompt"]).code, 0);
    let dir = d.path().join("o/prompt");
    for f in ["structural.txt", "behavioral.txt", "constraints.txt", "bundle.txt", "bundle.sha256"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let first = read(dir.join("bundle.sha256"));
    assert_eq!(first.trim().len(), 64);
    assert_eq!(amdd(&["--config", &cfg, "--out", &out, "prompt"]).code, 0);
    assert_eq!(read(dir.join("bundle.sha256")), first);

    assert_eq!(amdd(&["--config", &cfg, "--out", &out, "--ontology", "off", "prompt"]).code, 0);
    let constraints = read(dir.join("constraints.txt"));
    for concept in ["MissionBrief", "DiscoverUVs", "UVPerformance"] {
        assert!(!constraints.contains(concept), "{concept} leaked into OCL-only prompt");
    }
    assert_ne!(read(dir.join("bundle.sha256")), first);
}

#[test]
fn prompt_rejects_empty_model() {
    let (d, cfg) = project();
    fs::write(d.path().join("class.puml"), "@startuml\n@enduml\n").unwrap();
    let r = amdd(&["--config", &cfg, "prompt"]);
    assert_eq!(r.code, 1, "{}", r.stdout);
}

#[test]
fn analyze_trivial_graph() {
    let d = tempfile::tempdir().unwrap();
    let g = d.path().join("one.dot");
    fs::write(&g, "digraph one {\n  entry;\n}\n").unwrap();
    let out = d.path().join("o").display().to_string();
    let r = amdd(&["--out", &out, "analyze", &g.display().to_string()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let reports: serde_json::Value = serde_json::from_str(&read(d.path().join("o/analyze/analysis.json"))).unwrap();
    assert_eq!(reports[0]["M"], 1);
}

#[test]
fn analyze_names_unreadable_file_and_keeps_going() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("broken.dot");
    fs::write(&bad, "digraph {{{ nope").unwrap();
    let good = fixtures().join("table1/ocl/MCC.dot");
    let out = d.path().join("o").display().to_string();
    let r = amdd(&["--out", &out, "analyze", &bad.display().to_string(), &good.display().to_string()]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("broken.dot"), "{}", r.stderr);
    assert!(r.stdout.contains("MCC"), "{}", r.stdout);
}

#[test]
fn simulate_without_uvs_aborts_cleanly() {
    let (d, cfg) = project();
    let out = d.path().join("o").display().to_string();
    let r = amdd(&["--config", &cfg, "--out", &out, "--uv-count", "0", "simulate"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("aborted"), "{}", r.stdout);
    let summary: serde_json::Value = serde_json::from_str(&read(d.path().join("o/simulate/summary.json"))).unwrap();
    assert_eq!(summary["status"], "aborted");
    assert_eq!(summary["messages"], 4);
}

#[test]
fn seed_changes_scores_not_structure() {
    let (d, cfg) = project();
    let run = |seed: &str| {
        let out = d.path().join(format!("o{seed}"));
        let r = amdd(&["--config", &cfg, "--out", &out.display().to_string(), "--seed", seed, "simulate"]);
        assert_eq!(r.code, 0);
        let lines: Vec<serde_json::Value> =
            read(out.join("simulate/trace.jsonl")).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        lines
    };
    let (a, b) = (run("1"), run("2"));
    assert_eq!(a.len(), b.len());
    let shape = |v: &[serde_json::Value]| -> Vec<(String, String, String)> {
        v.iter()
            .filter(|m| m.get("concept").is_some())
            .map(|m| (m["concept"].to_string(), m["from"].to_string(), m["to"].to_string()))
            .collect()
    };
    assert_eq!(shape(&a), shape(&b));
    assert_ne!(a, b, "scores should depend on the seed");
}

#[test]
fn conform_reports_missing_events_for_truncated_trace() {
    let (d, cfg) = project();
    let out = d.path().join("o");
    let o = out.display().to_string();
    assert_eq!(amdd(&["--config", &cfg, "--out", &o, "simulate"]).code, 0);
    let path = out.join("simulate/trace.jsonl");
    let kept: Vec<String> =
        read(&path).lines().filter(|l| !l.contains(r#""concept":"MissionPerformance""#)).map(String::from).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    let r = amdd(&["--config", &cfg, "--out", &o, "conform"]);
    assert_eq!(r.code, 4, "{}", r.stdout);
    let report: serde_json::Value = serde_json::from_str(&read(out.join("conform/report.json"))).unwrap();
    assert_eq!(report["verdict"], "Violating");
    assert!(report["missing"].to_string().contains("MissionPerformance"));
}

#[test]
fn conform_rejects_malformed_trace() {
    let (d, cfg) = project();
    let bad = d.path().join("bad.jsonl");
    fs::write(&bad, "{\"t\": 1,\n").unwrap();
    let r = amdd(&["--config", &cfg, "conform", &bad.display().to_string()]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("bad.jsonl"), "{}", r.stderr);
}

#[test]
fn llm_backend_without_token_is_input_error() {
    let (d, cfg) = project();
    let out = d.path().join("o").display().to_string();
    let r = amdd(&["--config", &cfg, "--out", &out, "--backend", "llm", "generate"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("AMDD_LLM_TOKEN"), "{}", r.stderr);
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let (d, cfg) = project();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = d.path().join(name);
        let o = out.display().to_string();
        for args in
            [vec!["prompt"], vec!["generate"], vec!["--ontology", "off", "generate"], vec!["simulate"], vec!["conform"]]
        {
            let mut full = vec!["--config", cfg.as_str(), "--out", o.as_str()];
            full.extend(args);
            assert_eq!(amdd(&full).code, 0, "{full:?}");
        }
        runs.push(snapshot(&out));
    }
    assert!(runs[0].len() >= 10, "{} artifacts", runs[0].len());
    assert_eq!(runs[0], runs[1]);
}
