use txsc_core::chainsim::{
    compile_deployments, export_history, run, EventKind, History, LockOpResult, LockStatus, ScenarioConfig, SimError,
    Simulation,
};
use txsc_core::corpus;
use txsc_core::interp::Outcome;
use txsc_core::value::{Address, Value};

fn load(file: &str) -> Result<String, SimError> {
    corpus::source(file)
        .map(str::to_string)
        .ok_or_else(|| SimError::Contract { file: file.into(), message: "not bundled".into() })
}

fn config(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml(corpus::scenario(name).unwrap()).unwrap()
}

fn simulate(cfg: &ScenarioConfig) -> Simulation {
    let contracts = compile_deployments(cfg, load).unwrap();
    run(cfg, &contracts).unwrap()
}

fn attr(sim: &Simulation, obj: &str, a: &str) -> Value {
    sim.object(obj).unwrap().get(a).unwrap().clone()
}

#[test]
fn puzzle_anomaly_pays_zero() {
    let sim = simulate(&config("puzzle"));
    assert!(sim.completed());
    assert_eq!(attr(&sim, "puzzle", "solved"), Value::Bool(true));
    assert_eq!(attr(&sim, "puzzle", "reward"), Value::Uint(0));
    assert_eq!(sim.account("bob"), sim.initial_account("bob"));
    assert_eq!(sim.account("alice"), sim.initial_account("alice"));

    let h = sim.history();
    let bob = h.span("bob-1").unwrap();
    assert_eq!(bob.observed_reads[1].value, Value::Uint(2));
    let alice = h.span("alice-1").unwrap();
    let (a, b) = (&alice.events[0], &bob.events[0]);
    assert_eq!(a.block_index, b.block_index);
    assert!(a.position < b.position);
    assert!(a.outcome.is_committed() && b.outcome.is_committed());
    assert_eq!(b.transfers[0].amount, 0);
}

#[test]
fn puzzle_fixed_aborts_stale_submission() {
    let mut cfg = config("puzzle");
    cfg.contracts[0].transform = true;
    let sim = simulate(&cfg);
    assert_eq!(attr(&sim, "puzzle", "solved"), Value::Bool(false));
    let h = sim.history();
    let bob = &h.span("bob-1").unwrap().events[0];
    match &bob.outcome {
        Outcome::AbortedRequires { check } => assert_eq!(check.expr, "reward == msg.data.reward"),
        o => panic!("unexpected {o:?}"),
    }
    assert!(bob.gas_used > 0);
    assert_eq!(sim.gas_paid("bob"), bob.gas_used);
}

#[test]
fn same_seed_same_history() {
    let cfg = config("blockking");
    let a = export_history(&simulate(&cfg).history());
    let b = export_history(&simulate(&cfg).history());
    assert_eq!(a, b);
    assert_eq!(History::from_json(&a).unwrap(), simulate(&cfg).history());
}

#[test]
fn blockking_callbacks_all_see_last_entry() {
    let sim = simulate(&config("blockking"));
    assert!(sim.completed());
    let h = sim.history();
    let carol_block = h.span("carol-1").unwrap().events[0].block_index;
    for s in &h.spans {
        let enter = &s.events[0];
        let cb = s.events.iter().find(|e| e.kind == EventKind::Callback).unwrap();
        assert!(enter.block_index <= carol_block);
        assert!(cb.block_index > carol_block);
        assert_eq!(cb.read_snapshot["warrior"], Value::Address(Address::new("carol")));
    }
    assert_eq!(attr(&sim, "blockking", "king"), Value::Address(Address::new("carol")));
}

#[test]
fn blockking_locked_serializes_entries() {
    let sim = simulate(&config("blockking-locked"));
    assert!(sim.completed());
    let h = sim.history();
    for s in &h.spans {
        let cb = s.events.iter().find(|e| e.kind == EventKind::Callback).unwrap();
        assert_eq!(cb.read_snapshot.get("__after_warrior"), Some(&Value::Address(Address::new(&s.client_id))));
        assert!(cb.outcome.is_committed());
    }
    // Every lock was released and every deposit refunded.
    assert!(sim.locks().records().all(|r| r.status == LockStatus::Released));
    assert_eq!(sim.locks().records().count(), 3);
    for c in ["alice", "bob", "carol"] {
        assert!(sim.escrow(sim.lock_of_span(&format!("{c}-1")).unwrap()).is_none());
    }
    let denials = sim
        .chain("locks")
        .unwrap()
        .blocks
        .iter()
        .flat_map(|b| &b.lock_entries)
        .filter(|e| e.result == LockOpResult::Denied)
        .count();
    assert!(denials > 0);
}

#[test]
fn lost_callback_keeps_real_attributes() {
    let mut cfg = config("lost-callback");
    cfg.clients.retain(|c| c.id != "owner");
    let sim = simulate(&cfg);
    let genesis = sim.genesis_object("blockking").unwrap();
    let now = sim.object("blockking").unwrap();
    for (k, v) in &now.attrs {
        if k.starts_with("__after_") {
            continue;
        }
        assert_eq!(genesis.attrs[k], *v, "{k}");
    }
    assert_ne!(genesis.attrs["__after_warrior"], now.attrs["__after_warrior"]);
    let lock = sim.lock_of_span("alice-1").unwrap();
    assert_eq!(sim.locks().get(lock).unwrap().status, LockStatus::Held);
    assert_eq!(sim.escrow(lock), Some(3));
    assert_eq!(sim.dropped_callbacks, 1);
}

#[test]
fn owner_recover_forfeits_deposit() {
    let sim = simulate(&config("lost-callback"));
    let lock = sim.lock_of_span("alice-1").unwrap();
    assert_eq!(sim.locks().get(lock).unwrap().status, LockStatus::Forfeited);
    assert_eq!(sim.escrow(lock), None);
    assert_eq!(sim.account("owner"), sim.initial_account("owner") + 3);
    assert_eq!(sim.account("alice"), sim.initial_account("alice") - 5 - 3);
    let now = sim.object("blockking").unwrap();
    assert_eq!(now.attrs["__after_warrior"], now.attrs["warrior"]);
}

#[test]
fn out_of_gas_is_atomic() {
    let sim = simulate(&config("out-of-gas"));
    let h = sim.history();
    let bob = &h.span("bob-1").unwrap().events[0];
    assert_eq!(bob.outcome, Outcome::AbortedOutOfGas);
    assert_eq!(bob.gas_used, 3);
    assert_eq!(attr(&sim, "puzzle", "solved"), Value::Bool(false));

    let carol = h.span("carol-1").unwrap();
    assert!(carol.events[0].outcome.is_committed());
    assert_eq!(carol.events[1].outcome, Outcome::AbortedOutOfGas);
    let lock = sim.lock_of_span("carol-1").unwrap();
    assert_eq!(sim.locks().get(lock).unwrap().status, LockStatus::Forfeited);
    assert_eq!(sim.account("owner"), sim.initial_account("owner") + 4);
    assert_eq!(attr(&sim, "blockking", "warrior"), sim.genesis_object("blockking").unwrap().attrs["warrior"]);

    let paid: u64 = ["alice", "bob", "carol", "owner", "oracle"].iter().map(|c| sim.gas_paid(c)).sum();
    assert_eq!(paid, sim.total_gas_earned());
}

#[test]
fn blocks_are_chained_and_replayable() {
    let sim = simulate(&config("blockking-locked"));
    for c in &sim.chains {
        for w in c.blocks.windows(2) {
            assert_eq!(w[1].prev_digest, w[0].digest);
            assert!(w[1].verify_digest());
        }
    }
    sim.replay().unwrap();
    sim.check_lock_safety().unwrap();
}

#[test]
fn empty_scenario() {
    let cfg = ScenarioConfig::from_toml("seed = 0").unwrap();
    let sim = simulate(&cfg);
    assert_eq!(serde_json::to_string(&sim.history()).unwrap(), r#"{"spans":[]}"#);
}

#[test]
fn unknown_function_is_a_config_error() {
    let mut cfg = config("puzzle");
    cfg.clients[0].spans[0].call = "Nope".into();
    let contracts = compile_deployments(&cfg, load).unwrap();
    assert!(matches!(run(&cfg, &contracts), Err(SimError::Config(_))));
}
