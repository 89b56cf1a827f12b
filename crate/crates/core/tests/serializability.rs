use txsc_core::chainsim::{compile_deployments, run, History, ScenarioConfig, SimError};
use txsc_core::corpus;
use txsc_core::serializability::{
    check, conflict_graph, replays_to_history, CheckOptions, ConflictKind, Method, Verdict,
};

fn load(file: &str) -> Result<String, SimError> {
    corpus::source(file)
        .map(str::to_string)
        .ok_or_else(|| SimError::Contract { file: file.into(), message: "not bundled".into() })
}

fn history_of(cfg: &ScenarioConfig) -> History {
    let contracts = compile_deployments(cfg, load).unwrap();
    run(cfg, &contracts).unwrap().history()
}

fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml(corpus::scenario(name).unwrap()).unwrap()
}

fn verdict(h: &History) -> Verdict {
    let v = check(h, CheckOptions::default()).unwrap();
    if let Some(w) = &v.witness_order {
        assert!(replays_to_history(h, w).unwrap(), "witness does not replay");
    }
    v
}

#[test]
fn puzzle_anomaly_is_not_serializable() {
    let h = history_of(&scenario("puzzle"));
    let v = verdict(&h);
    assert!(!v.serializable);
    assert_eq!(v.method, Method::Permutation);
    let cycle = v.conflict_cycle.unwrap();
    assert_eq!(cycle.len(), 2);
    assert!(cycle.iter().all(|e| e.attribute == "puzzle.reward"));
    let kinds: Vec<_> = cycle.iter().map(|e| (e.from.as_str(), e.kind)).collect();
    assert!(kinds.contains(&("bob-1", ConflictKind::RW)));
    assert!(kinds.contains(&("alice-1", ConflictKind::WR)));
}

#[test]
fn puzzle_anomaly_graph_edges() {
    let h = history_of(&scenario("puzzle"));
    let g = conflict_graph(&h);
    let has = |from: &str, to: &str, kind| {
        g.iter().any(|e| e.from == from && e.to == to && e.attribute == "puzzle.reward" && e.kind == kind)
    };
    assert!(has("bob-1", "alice-1", ConflictKind::RW));
    assert!(has("alice-1", "bob-1", ConflictKind::WR));
}

#[test]
fn puzzle_fixed_is_serializable() {
    let mut cfg = scenario("puzzle");
    cfg.contracts[0].transform = true;
    let v = verdict(&history_of(&cfg));
    assert!(v.serializable);
    assert_eq!(v.witness_order.unwrap(), ["alice-1", "bob-1"]);
    assert_eq!(v.invalidated_spans, ["bob-1"]);
}

#[test]
fn blockking_anomaly_cycles_through_warrior() {
    let h = history_of(&scenario("blockking"));
    let v = verdict(&h);
    assert!(!v.serializable);
    let cycle = v.conflict_cycle.unwrap();
    assert!(cycle.iter().all(|e| e.attribute == "blockking.warrior"), "{cycle:?}");
}

#[test]
fn blockking_locked_is_serializable() {
    let h = history_of(&scenario("blockking-locked"));
    let v = verdict(&h);
    assert!(v.serializable);
    assert!(v.conflict_serializable);
    let first_commit = |id: &str| h.span(id).unwrap().events[0].commit_index;
    let w = v.witness_order.unwrap();
    assert_eq!(w.len(), 3);
    assert!(w.windows(2).all(|p| first_commit(&p[0]) < first_commit(&p[1])));
}

#[test]
fn recovery_scenarios_are_serializable() {
    for name in ["lost-callback", "out-of-gas"] {
        let v = verdict(&history_of(&scenario(name)));
        assert!(v.serializable, "{name}");
    }
}

#[test]
fn single_span_is_trivially_serializable() {
    let mut cfg = scenario("puzzle");
    cfg.clients.truncate(1);
    let v = verdict(&history_of(&cfg));
    assert!(v.serializable);
    assert_eq!(v.witness_order.unwrap(), ["alice-1"]);
}

#[test]
fn disjoint_spans_have_no_edges() {
    let mut cfg = scenario("out-of-gas");
    cfg.clients.retain(|c| c.id != "owner");
    let h = history_of(&cfg);
    assert!(conflict_graph(&h).iter().all(|e| e.from == e.to));
    assert!(conflict_graph(&h).is_empty());
}

#[test]
fn oracle_agrees_with_acyclic_graphs() {
    for (name, _) in corpus::SCENARIOS {
        for transform in [false, true] {
            let mut cfg = scenario(name);
            cfg.contracts.iter_mut().for_each(|d| d.transform |= transform);
            if transform && cfg.clients.iter().any(|c| c.spans.iter().any(|s| s.call == "enter" && !s.lock)) {
                continue;
            }
            let h = history_of(&cfg);
            let v = verdict(&h);
            if v.conflict_serializable {
                assert!(v.serializable, "{name} transform={transform}");
            }
        }
    }
}

#[test]
fn removing_aborted_span_keeps_verdict() {
    let mut cfg = scenario("puzzle");
    cfg.contracts[0].transform = true;
    let mut h = history_of(&cfg);
    assert!(verdict(&h).serializable);
    h.spans.retain(|s| s.any_committed());
    assert!(verdict(&h).serializable);
}

#[test]
fn graph_fallback_above_bound() {
    let h = history_of(&scenario("blockking-locked"));
    let v = check(&h, CheckOptions { bound: 1, fallback_graph: true }).unwrap();
    assert_eq!(v.method, Method::ConflictGraph);
    assert!(v.serializable);
    assert!(check(&h, CheckOptions { bound: 1, fallback_graph: false }).is_err());
}
