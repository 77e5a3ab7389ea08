mod common;

use std::collections::BTreeMap;

use amdd_core::analysis::{cyclomatic, export_cfg, extract_cfg, import_cfg};
use amdd_core::constraints::{
    bind, check_snapshot, parse_constraints, ConstraintKind, InstanceSnapshot, ObjectSnapshot, Value,
};
use amdd_core::model::{deserialize_model, serialize_model};
use amdd_core::plantuml::{parse_model, render_model};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::gen::{components, random_graph, random_model, random_program};
use common::uvf;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cyclomatic_identity(seed in any::<u64>()) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), 50);
        let r = cyclomatic(&g).unwrap();
        let p = components(&g) as i64;
        prop_assert_eq!(r.p, p);
        prop_assert_eq!(r.m, g.edges.len() as i64 - g.nodes.len() as i64 + 2 * p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn disjoint_union_adds(a in any::<u64>(), b in any::<u64>()) {
        let g1 = random_graph(&mut ChaCha8Rng::seed_from_u64(a), 30);
        let g2 = random_graph(&mut ChaCha8Rng::seed_from_u64(b), 30);
        let u = g1.disjoint_union(&g2, "r_");
        prop_assert_eq!(cyclomatic(&u).unwrap().m, cyclomatic(&g1).unwrap().m + cyclomatic(&g2).unwrap().m);
    }

    #[test]
    fn decisions_plus_one(seed in any::<u64>()) {
        let (program, branches) = random_program(&mut ChaCha8Rng::seed_from_u64(seed));
        let cfg = extract_cfg(&program);
        let r = cyclomatic(&cfg).unwrap();
        prop_assert_eq!(r.p, 1);
        prop_assert_eq!(r.m, branches as i64 + 1);
        // and the DOT form carries the same graph
        let (back, warnings) = import_cfg(&export_cfg(&cfg)).unwrap();
        prop_assert!(warnings.is_empty());
        let again = cyclomatic(&back).unwrap();
        prop_assert_eq!((again.e, again.n, again.m), (r.e, r.n, r.m));
    }

    #[test]
    fn model_round_trips(seed in any::<u64>()) {
        let model = random_model(&mut ChaCha8Rng::seed_from_u64(seed));
        let sources = render_model(&model).unwrap();
        let back = parse_model(&sources, &model.model_name, &model.version).unwrap();
        prop_assert_eq!(&back, &model);
        let json = serialize_model(&model).unwrap();
        prop_assert_eq!(deserialize_model(&json).unwrap(), model);
    }

    #[test]
    fn uniqueness_matches_brute_force(seed in any::<u64>()) {
        let u = uvf();
        let set = parse_constraints("context UV inv uniqueId: UV.allInstances()->isUnique(uvId)").unwrap();
        let bound = bind(&set, &u.model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..12);
        let ids: Vec<String> = (0..n).map(|_| format!("id{}", rng.random_range(0..6))).collect();
        let snap = ObjectSnapshot {
            instances: ids.iter().enumerate()
                .map(|(i, id)| InstanceSnapshot::new("UV", format!("uv{i}")).with("uvId", Value::Str(id.clone())))
                .collect(),
        };
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for id in &ids {
            *counts.entry(id).or_default() += 1;
        }
        let groups = counts.values().filter(|&&c| c > 1).count();
        let v = check_snapshot(&bound, &snap);
        prop_assert_eq!(v.len(), groups);
        prop_assert!(v.iter().all(|x| x.kind == ConstraintKind::Uniqueness));
    }

    #[test]
    fn score_range_matches_interval(score in -50i64..200) {
        let u = uvf();
        let snap = ObjectSnapshot {
            instances: vec![InstanceSnapshot::new("UV", "uv1")
                .with("uvId", Value::Str("a".into()))
                .with("performanceScore", Value::Real(score as f64))],
        };
        let v = check_snapshot(&u.bound, &snap);
        let outside = !(0..=100).contains(&score);
        prop_assert_eq!(v.iter().filter(|x| x.constraint == "scoreRange").count(), usize::from(outside));
    }
}
