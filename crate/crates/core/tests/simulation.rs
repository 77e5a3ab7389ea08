mod common;

use amdd_core::conformance::{check_trace, derive_expected, Verdict};
use amdd_core::constraints::ConstraintKind;
use amdd_core::sim::{
    render_sequence_diagram, run_mission, trace_from_jsonl, trace_to_jsonl, MessageTrace, RunStatus, SimConfig,
    Simulation,
};
use proptest::prelude::*;

use common::uvf;

fn run(cfg: &SimConfig) -> MessageTrace {
    let u = uvf();
    run_mission(cfg, &u.model, &u.bound, &u.reg).unwrap()
}

fn concepts(t: &MessageTrace) -> Vec<&str> {
    t.messages.iter().map(|m| m.concept.as_str()).collect()
}

#[test]
fn two_ready_uvs_give_ten_messages_in_protocol_order() {
    let t = run(&SimConfig::ready(2, 7));
    assert_eq!(
        concepts(&t),
        [
            "MissionBrief",
            "DiscoverUVs",
            "UVList",
            "FleetPlan",
            "UVTask",
            "UVTask",
            "UVPerformance",
            "UVPerformance",
            "FleetPerformance",
            "MissionPerformance"
        ]
    );
    let first = &t.messages[0];
    assert_eq!((first.from.as_str(), first.to.as_str()), ("Operator", "MCC"));
    let last = t.messages.last().unwrap();
    assert_eq!((last.from.as_str(), last.to.as_str()), ("MCC", "Operator"));
    assert!(t.messages.windows(2).all(|w| w[0].t < w[1].t));
    // scores 57 and 64 under seed 7
    assert_eq!(t.outcome.mean_score, Some(60.5));
    assert_eq!(t.outcome.mission.as_deref(), Some("success"));
}

#[test]
fn unavailable_uv_is_not_listed() {
    let mut cfg = SimConfig::ready(3, 1);
    cfg.availability = vec![true, true, false];
    let t = run(&cfg);
    assert_eq!(t.messages.len(), 10);
    let list = t.messages.iter().find(|m| m.concept == "UVList").unwrap();
    assert_eq!(list.slots["uvIds"], serde_json::json!(["UV1", "UV2"]));
    assert_eq!(t.final_states["UV3"], "Unavailable");
}

#[test]
fn empty_fleet_aborts_with_notice() {
    let t = run(&SimConfig::ready(0, 3));
    assert_eq!(concepts(&t), ["MissionBrief", "DiscoverUVs", "UVList", "MissionPerformance"]);
    assert_eq!(t.outcome.status, RunStatus::Aborted);
    assert_eq!(t.messages[3].slots["outcome"], "NoAvailableUV");
    assert_eq!(t.messages[3].to, "Operator");
}

#[test]
fn engaged_uv_halts_on_precondition() {
    let mut cfg = SimConfig::ready(2, 0);
    cfg.engaged = vec![true, false];
    let t = run(&cfg);
    assert_eq!(t.outcome.status, RunStatus::Halted);
    assert_eq!(t.outcome.violations.len(), 1);
    assert_eq!(t.outcome.violations[0].kind, ConstraintKind::Precondition);
    assert_eq!(t.outcome.violations[0].constraint, "idleBeforeTask");
    // trace kept up to the failing delivery
    assert_eq!(t.messages.last().unwrap().concept, "UVTask");
    assert!(t.assertion_log.iter().any(|a| !a.passed && a.name == "idleBeforeTask"));
}

#[test]
fn stepping_reproduces_run() {
    let u = uvf();
    let cfg = SimConfig::ready(3, 11);
    let mut sim = Simulation::new(cfg.clone(), &u.model, &u.bound, &u.reg).unwrap();
    let first = sim.step();
    assert_eq!(first.len(), 1);
    assert_eq!(first[0].concept, "MissionBrief");
    while !sim.is_fixpoint() {
        sim.step();
    }
    assert!(sim.step().is_empty());
    let stepped = sim.finish();
    assert_eq!(trace_to_jsonl(&stepped), trace_to_jsonl(&run(&cfg)));
}

#[test]
fn sequence_diagram_has_one_arrow_per_message() {
    let t = run(&SimConfig::ready(2, 5));
    let text = render_sequence_diagram(&t);
    let arrows: Vec<&str> = text.lines().filter(|l| l.contains(" -> ")).collect();
    assert_eq!(arrows.len(), t.messages.len());
    assert!(arrows[0].starts_with("Operator -> MCC : MissionBrief("));
}

#[test]
fn jsonl_round_trip() {
    let t = run(&SimConfig::ready(4, 9));
    let text = trace_to_jsonl(&t);
    assert_eq!(text.lines().count(), t.messages.len() + 1);
    let back = trace_from_jsonl(&text).unwrap();
    assert_eq!(back, t);
    assert!(trace_from_jsonl("{\"t\":1}\n").is_err());
}

fn arb_config() -> impl Strategy<Value = SimConfig> {
    (0usize..7, any::<u64>()).prop_flat_map(|(n, seed)| {
        (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n)).prop_map(
            move |(availability, registration)| SimConfig { availability, registration, ..SimConfig::ready(n, seed) },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn runs_are_deterministic_and_conserve_tasks(cfg in arb_config()) {
        let a = run(&cfg);
        let b = run(&cfg);
        prop_assert_eq!(trace_to_jsonl(&a), trace_to_jsonl(&b));

        let selected = (0..cfg.uv_count).filter(|&i| cfg.availability[i] && cfg.registration[i]).count();
        prop_assert_eq!(a.count("UVTask"), selected);
        prop_assert_eq!(a.count("UVPerformance"), selected);
        if selected == 0 {
            prop_assert_eq!(a.messages.len(), 4);
            prop_assert_eq!(a.outcome.status, RunStatus::Aborted);
        } else {
            prop_assert_eq!(a.messages.len(), 6 + 2 * selected);
            prop_assert_eq!(a.outcome.status, RunStatus::Completed);
            // exact mean from an independent recomputation
            let scores: Vec<f64> = a.messages.iter().filter(|m| m.concept == "UVPerformance")
                .map(|m| m.slots["score"].as_f64().unwrap()).collect();
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            let reported = a.messages.iter().find(|m| m.concept == "FleetPerformance").unwrap().slots["meanScore"].as_f64().unwrap();
            prop_assert!((mean - reported).abs() <= 1e-9);
        }
        prop_assert!(a.assertion_log.iter().all(|r| r.passed));
        prop_assert!(a.assertion_log.iter().filter(|r| r.check == "content").count() == a.messages.len());
        for i in 0..cfg.uv_count {
            let id = a.agents[3 + i].id.clone();
            let expected = match (cfg.availability[i], cfg.registration[i]) {
                (false, _) => "Unavailable",
                (true, false) => "Unregistered",
                (true, true) => "Registered.Uncontrolled",
            };
            prop_assert_eq!(a.final_states[&id].as_str(), expected);
        }
    }

    #[test]
    fn completed_runs_never_violate_the_protocol(cfg in arb_config(), shift in 0u64..1_000_000) {
        let u = uvf();
        let t = run(&cfg);
        prop_assume!(t.outcome.status == RunStatus::Completed);
        let expected = derive_expected(&u.model.activities[0]);
        let report = check_trace(&t, &expected, false);
        prop_assert_eq!(report.verdict, Verdict::ConformantWithNovelEvents);

        let mut shifted = t.clone();
        for m in &mut shifted.messages {
            m.t += shift;
        }
        prop_assert_eq!(check_trace(&shifted, &expected, false), report);

        for ev in &expected.events {
            let mut cut = t.clone();
            cut.messages.retain(|m| m.concept != ev.label);
            let r = check_trace(&cut, &expected, false);
            prop_assert_eq!(r.verdict, Verdict::Violating);
            prop_assert_eq!(r.missing.clone(), vec![ev.label.clone()]);
        }
    }
}
