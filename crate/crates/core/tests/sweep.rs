use std::collections::BTreeMap;

use txsc_core::analysis::{analyze, Profiles};
use txsc_core::chainsim::{compile_deployments, random_scenario, run, History, SimError};
use txsc_core::corpus;
use txsc_core::dsl::parse_contract;
use txsc_core::interp::{pre_write_reads, TraceEntry};
use txsc_core::serializability::{check, replays_to_history, CheckOptions};

fn load(file: &str) -> Result<String, SimError> {
    corpus::source(file)
        .map(str::to_string)
        .ok_or_else(|| SimError::Contract { file: file.into(), message: "not bundled".into() })
}

fn history(seed: u64) -> History {
    let cfg = random_scenario(seed);
    let contracts = compile_deployments(&cfg, load).unwrap();
    run(&cfg, &contracts).unwrap().history()
}

fn deployed_profiles(h: &History) -> BTreeMap<String, Profiles> {
    h.contracts.iter().map(|c| (c.address.clone(), analyze(&parse_contract(&c.source).unwrap()).unwrap())).collect()
}

#[test]
fn random_schedules_are_serializable() {
    for seed in 0..60 {
        let h = history(seed);
        let v = check(&h, CheckOptions::default()).unwrap();
        assert!(v.serializable, "seed {seed}: {v:?}");
        assert!(replays_to_history(&h, v.witness_order.as_ref().unwrap()).unwrap());
    }
}

#[test]
fn traces_stay_within_static_sets() {
    for seed in 0..60 {
        let h = history(seed);
        let profiles = deployed_profiles(&h);
        for e in h.spans.iter().flat_map(|s| &s.events) {
            let p = profiles[&e.contract].get(&e.function).unwrap();
            for a in pre_write_reads(&e.trace) {
                assert!(p.reads(a), "seed {seed}: {} read {a}", e.function);
            }
            for t in &e.trace {
                if let TraceEntry::Write { attr, .. } = t {
                    assert!(p.writes(attr), "seed {seed}: {} wrote {attr}", e.function);
                }
            }
        }
    }
}

#[test]
fn sweep_exercises_aborts_and_callbacks() {
    use txsc_core::chainsim::EventKind;
    use txsc_core::interp::Outcome;
    let (mut stale, mut callbacks, mut oog, mut invalidated) = (0, 0, 0, 0);
    for seed in 0..60 {
        let h = history(seed);
        for e in h.spans.iter().flat_map(|s| &s.events) {
            match (&e.kind, &e.outcome) {
                (_, Outcome::AbortedRequires { .. }) => stale += 1,
                (EventKind::Callback, Outcome::Committed) => callbacks += 1,
                (_, Outcome::AbortedOutOfGas) => oog += 1,
                _ => {}
            }
        }
        invalidated += check(&h, CheckOptions::default()).unwrap().invalidated_spans.len();
    }
    println!("stale={stale} callbacks={callbacks} oog={oog} invalidated={invalidated}");
    assert!(stale > 0 && callbacks > 0 && invalidated > 0);
}
