mod common;

use amdd_core::analysis::{cyclomatic, extract_cfg, import_cfg, RiskBand};
use amdd_core::codegen::{generate_template, program_classes, GenerationConfig};
use amdd_core::conformance::{check_trace, derive_expected, Multiplicity, Verdict};
use amdd_core::model::validate_model;
use amdd_core::sim::{run_mission, RunStatus, SimConfig};

use common::{read, uvf};

#[test]
fn uvf_fixture_is_clean() {
    let u = uvf();
    let report = validate_model(&u.model);
    assert!(!report.has_errors(), "{report:?}");
    assert!(u.reg.unresolved_roles(&u.model).is_empty());
    assert_eq!(program_classes(&u.model), ["Operator", "MCC", "UVFManager", "UV"]);
}

fn template_m(with_ontology: bool) -> Vec<(String, i64)> {
    let u = uvf();
    let cfg = GenerationConfig { include_ontology: with_ontology, ..GenerationConfig::default() };
    let gen = generate_template(&u.model, &u.bound, Some(&u.reg), &cfg);
    gen.programs
        .iter()
        .map(|p| {
            let r = cyclomatic(&extract_cfg(p)).unwrap();
            // Independent count: one decision per guard and per validated action.
            assert_eq!(r.m, p.branch_count() as i64 + 1, "{}", p.agent_name);
            (p.agent_name.clone(), r.m)
        })
        .collect()
}

#[test]
fn template_complexity_matches_reported_table() {
    let names = |v: &[(String, i64)]| v.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    let ocl = template_m(false);
    assert_eq!(names(&ocl), ["Operator", "MCC", "UVFManager", "UV"]);
    assert_eq!(ocl.iter().map(|x| x.1).collect::<Vec<_>>(), [2, 4, 4, 2]);
    let onto = template_m(true);
    assert_eq!(onto.iter().map(|x| x.1).collect::<Vec<_>>(), [3, 5, 6, 3]);
}

#[test]
fn table_graphs_have_reported_sizes() {
    let cases = [
        ("ocl", [("Operator", 8, 8, 2), ("MCC", 15, 13, 4), ("UVFManager", 16, 14, 4), ("UV", 8, 8, 2)]),
        ("ocl_ontology", [("Operator", 12, 11, 3), ("MCC", 22, 19, 5), ("UVFManager", 23, 19, 6), ("UV", 12, 11, 3)]),
    ];
    for (dir, rows) in cases {
        for (label, e, n, m) in rows {
            let (g, warnings) = import_cfg(&read(&format!("table1/{dir}/{label}.dot"))).unwrap();
            assert!(warnings.is_empty());
            let r = cyclomatic(&g).unwrap();
            assert_eq!((r.label.as_str(), r.e, r.n, r.p, r.m), (label, e, n, 1, m), "{dir}/{label}");
            assert_eq!(r.band, RiskBand::Low);
        }
    }
}

#[test]
fn expected_protocol_from_mission_diagram() {
    let u = uvf();
    let p = derive_expected(&u.model.activities[0]);
    let labels: Vec<&str> = p.events.iter().map(|e| e.label.as_str()).collect();
    assert_eq!(
        labels,
        ["MissionBrief", "FleetPlan", "UVTask", "UVPerformance", "FleetPerformance", "MissionPerformance"]
    );
    let per_uv: Vec<&str> =
        p.events.iter().filter(|e| e.multiplicity == Multiplicity::PerTaskedUV).map(|e| e.label.as_str()).collect();
    assert_eq!(per_uv, ["UVTask", "UVPerformance"]);
    // A chain over the six labels.
    let order: Vec<(&str, &str)> = p.order.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    assert_eq!(order, labels.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>());
}

#[test]
fn simulated_mission_conforms_with_discovery_as_novel() {
    let u = uvf();
    let trace = run_mission(&SimConfig::ready(3, 7), &u.model, &u.bound, &u.reg).unwrap();
    assert_eq!(trace.outcome.status, RunStatus::Completed, "{:?}", trace.outcome);
    assert_eq!(trace.messages.len(), 6 + 2 * 3);
    assert!(trace.assertion_log.iter().all(|a| a.passed));

    let expected = derive_expected(&u.model.activities[0]);
    let r = check_trace(&trace, &expected, false);
    assert_eq!(r.verdict, Verdict::ConformantWithNovelEvents, "{}", r.render());
    assert_eq!(r.novel, ["DiscoverUVs", "UVList"]);
    let strict = check_trace(&trace, &expected, true);
    assert_eq!(strict.verdict, Verdict::Violating);
    assert_eq!(strict.novel.len(), 2);

    let mut cut = trace.clone();
    cut.messages.retain(|m| m.concept != "MissionPerformance");
    let r = check_trace(&cut, &expected, false);
    assert_eq!(r.verdict, Verdict::Violating);
    assert_eq!(r.missing, ["MissionPerformance"]);
}
