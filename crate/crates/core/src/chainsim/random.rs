use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::*;
use crate::transform::TransformConfig;
use crate::value::{Bytes32, Value};

/// Payload whose hash lies below every difficulty used here.
const SOLVING_PAYLOAD: u8 = 7;

/// A seeded schedule over the rewritten corpus contracts: up to three
/// clients, six spans and two contract chains plus the lock chain.
pub fn random_scenario(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_chains = rng.gen_bool(0.5);
    let mut chains = vec![ChainSpec { id: "chain-a".into(), miners: rng.gen_range(1..=3) }];
    if two_chains {
        chains.push(ChainSpec { id: "chain-b".into(), miners: rng.gen_range(1..=3) });
    }
    chains.push(ChainSpec { id: "locks".into(), miners: rng.gen_range(1..=2) });

    let n_clients = rng.gen_range(1..=3);
    let clients: Vec<String> = (0..n_clients).map(|i| format!("c{i}")).collect();

    let mut diff = [0xffu8; 32];
    diff[0] = *[0x0f, 0x7f, 0xff].choose(&mut rng).expect("nonempty");
    let contracts = vec![
        Deployment {
            name: "puzzle".into(),
            file: "puzzle.txsc".into(),
            chain: "chain-a".into(),
            deployer: clients[0].clone(),
            value: rng.gen_range(0..=5),
            gas: 100,
            data: BTreeMap::from([("diff".to_string(), Value::Bytes32(Bytes32(diff)))]),
            transform: true,
        },
        Deployment {
            name: "blockking".into(),
            file: "blockking.txsc".into(),
            chain: if two_chains { "chain-b" } else { "chain-a" }.into(),
            deployer: clients[n_clients - 1].clone(),
            value: 0,
            gas: 100,
            data: BTreeMap::new(),
            transform: true,
        },
    ];

    let transform = TransformConfig {
        check_exclusions: BTreeMap::from([
            ("UpdateReward".to_string(), ["owner".to_string()].into()),
            ("SubmitSolution".to_string(), ["diff".to_string()].into()),
        ]),
        deposit_amount: rng.gen_range(1..=3),
        lock_chain: "locks".into(),
    };
    let lo = rng.gen_range(1..=30);
    let oracle = OracleSpec {
        service: "WolframAlpha".into(),
        address: "oracle".into(),
        response_delay_ticks: [lo, lo + rng.gen_range(0..=20)],
        drop_probability: *[0.0, 0.0, 0.3].choose(&mut rng).expect("nonempty"),
        values: OracleValues::Uniform { lo: 1, hi: 9 },
    };

    let mut specs: Vec<ClientSpec> =
        clients.iter().map(|id| ClientSpec { id: id.clone(), balance: 1000, spans: vec![] }).collect();
    for _ in 0..rng.gen_range(1..=6) {
        let c = rng.gen_range(0..n_clients);
        let issue_at: u64 = rng.gen_range(0..=60);
        let observe_at = Some(issue_at.saturating_sub(rng.gen_range(0..=15)));
        let base = SpanSpec {
            id: None,
            contract: "puzzle".into(),
            call: String::new(),
            observe: vec![],
            observe_at,
            issue_at,
            value: 0,
            gas: 100,
            callback_gas: 100,
            data: BTreeMap::new(),
            attach_observed: true,
            lock: false,
            lock_retry_ticks: rng.gen_range(5..=15),
            recover_lock_of: None,
        };
        let span = match rng.gen_range(0..3) {
            0 => SpanSpec {
                call: "UpdateReward".into(),
                observe: vec!["solved".into(), "reward".into()],
                value: rng.gen_range(0..=3),
                ..base
            },
            1 => {
                let mut payload = [0u8; 32];
                payload[31] = if rng.gen_bool(0.7) { SOLVING_PAYLOAD } else { rng.gen() };
                SpanSpec {
                    call: "SubmitSolution".into(),
                    observe: vec!["solved".into(), "reward".into()],
                    data: BTreeMap::from([("payload".to_string(), Value::Bytes32(Bytes32(payload)))]),
                    ..base
                }
            }
            _ => SpanSpec {
                contract: "blockking".into(),
                call: "enter".into(),
                value: rng.gen_range(1..=5),
                lock: true,
                callback_gas: if rng.gen_bool(0.1) { 3 } else { 100 },
                ..base
            },
        };
        specs[c].spans.push(span);
    }

    ScenarioConfig {
        seed,
        block_interval_ticks: 10,
        max_ticks: 600,
        chains,
        lock_chain: Some("locks".into()),
        contracts,
        oracle: Some(oracle),
        transform,
        clients: specs,
    }
}
