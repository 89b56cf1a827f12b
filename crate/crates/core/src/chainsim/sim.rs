use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::block::*;
use super::config::*;
use super::history::*;
use super::lock::{LockItem, LockRegistry, LockStatus};
use super::SimError;
use crate::analysis::{analyze, lock_footprint, Profiles};
use crate::dsl::ast::ContractAst;
use crate::dsl::{parse_contract, print_contract, typecheck};
use crate::interp::{CallContext, Host, HostEffect, ObjectState, Outcome};
use crate::transform::{transform, LOCK_ID_KEY};
use crate::value::{Address, Bytes32, Type, Value};

const DEFAULT_ACCOUNT_BALANCE: u64 = 1000;
const DEFAULT_CALLBACK_GAS: u64 = 100;

/// Parses, typechecks and (when asked) rewrites the code of every
/// deployment. `load` maps a file name to its source text.
pub fn compile_deployments(
    config: &ScenarioConfig,
    load: impl Fn(&str) -> Result<String, SimError>,
) -> Result<BTreeMap<String, ContractAst>, SimError> {
    let mut out = BTreeMap::new();
    for d in &config.contracts {
        let fail = |message: String| SimError::Contract { file: d.file.clone(), message };
        let ast = parse_contract(&load(&d.file)?).map_err(|e| fail(e.to_string()))?;
        if let Some(diag) = typecheck(&ast).first() {
            return Err(fail(diag.to_string()));
        }
        let ast = if d.transform {
            let profiles = analyze(&ast).map_err(|e| fail(e.to_string()))?;
            // The scenario shares one exclusion table across deployments.
            let mut own = config.transform.clone();
            own.check_exclusions.retain(|f, _| ast.function(f).is_some());
            transform(&ast, &profiles, &own).map_err(|e| fail(e.to_string()))?.0
        } else {
            ast
        };
        out.insert(d.name.clone(), ast);
    }
    Ok(out)
}

struct Deployed {
    chain: String,
    ast: ContractAst,
    profiles: Profiles,
}

/// State shared by all chains. Replaying the block log from the initial
/// world must reproduce it exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
struct World {
    objects: BTreeMap<String, ObjectState>,
    accounts: BTreeMap<Address, u64>,
    escrows: BTreeMap<String, (Address, u64)>,
    locks: LockRegistry,
    gas_paid: BTreeMap<Address, u64>,
    gas_earned: BTreeMap<String, u64>,
}

struct SimHost<'a> {
    world: &'a World,
    deployed: &'a Deployed,
    name: &'a str,
    oracle: &'a Address,
}

impl Host for SimHost<'_> {
    fn lock_held(&self, lock_id: &str, caller: &Address, function: &str) -> bool {
        let items: Vec<LockItem> = lock_footprint(&self.deployed.ast, &self.deployed.profiles, function)
            .iter()
            .map(|a| LockItem::new(&self.deployed.chain, self.name, a))
            .collect();
        self.world.locks.covers(lock_id, caller, &items)
    }

    fn oracle_address(&self) -> Address {
        self.oracle.clone()
    }

    fn account_balance(&self, who: &Address) -> u64 {
        self.world.accounts.get(who).copied().unwrap_or(0)
    }
}

impl World {
    fn credit(&mut self, who: &Address, amount: u64) {
        let b = self.accounts.entry(who.clone()).or_insert(0);
        *b = b.saturating_add(amount);
    }

    fn debit(&mut self, who: &Address, amount: u64) -> Result<(), String> {
        let b = self.accounts.entry(who.clone()).or_insert(0);
        *b = b.checked_sub(amount).ok_or_else(|| format!("account `{who}` overdrawn"))?;
        Ok(())
    }

    fn run_entry(
        &mut self,
        name: &str,
        deployed: &Deployed,
        event: CallEvent,
        miner: &str,
        oracle: &Address,
    ) -> Result<BlockEntry, SimError> {
        let read_set = deployed.profiles.get(&event.function).map(|p| p.read_set.clone()).unwrap_or_default();
        let state = self.objects.get(name).cloned().expect("deployed object exists");
        let host = SimHost { world: self, deployed, name, oracle };
        let (entry, result) = execute_entry(&deployed.ast, &read_set, &state, event, &host, miner)?;
        *self.gas_paid.entry(entry.gas.payer.clone()).or_insert(0) += entry.gas_used;
        *self.gas_earned.entry(miner.to_string()).or_insert(0) += entry.gas_used;
        if entry.outcome.is_committed() {
            self.apply(name, &entry, result.new_state).map_err(|detail| SimError::ReplayMismatch {
                chain: deployed.chain.clone(),
                block: entry.event.ctx.block_number,
                detail,
            })?;
        }
        Ok(entry)
    }

    fn apply(&mut self, name: &str, entry: &BlockEntry, new_state: ObjectState) -> Result<(), String> {
        self.objects.insert(name.to_string(), new_state);
        self.debit(&entry.event.ctx.sender, entry.event.ctx.value)?;
        for t in &entry.transfers {
            self.credit(&t.to, t.amount);
        }
        for e in &entry.effects {
            match e {
                HostEffect::Escrow { lock_id, payer, amount } => {
                    self.debit(payer, *amount)?;
                    let slot = self.escrows.entry(lock_id.clone()).or_insert((payer.clone(), 0));
                    slot.1 += amount;
                }
                HostEffect::EscrowRefund { lock_id } => {
                    if let Some((payer, amount)) = self.escrows.remove(lock_id) {
                        self.credit(&payer, amount);
                    }
                }
                HostEffect::LockForfeit { lock_id, beneficiary } => {
                    if let Some((_, amount)) = self.escrows.remove(lock_id) {
                        self.credit(beneficiary, amount);
                    }
                }
                HostEffect::LockRelease { .. } => {}
            }
        }
        Ok(())
    }

    fn apply_lock_op(&mut self, op: &LockOp, tick: u64) -> LockOpResult {
        match op {
            LockOp::Acquire { holder, items, .. } => match self.locks.acquire_locks(holder, items, tick) {
                Some(lock_id) => LockOpResult::Granted { lock_id },
                None => LockOpResult::Denied,
            },
            LockOp::Release { lock_id } | LockOp::Forfeit { lock_id } => {
                let status =
                    if matches!(op, LockOp::Release { .. }) { LockStatus::Released } else { LockStatus::Forfeited };
                match self.locks.release_lock(lock_id, status, tick) {
                    Ok(()) => LockOpResult::Done,
                    Err(e) => LockOpResult::Failed { reason: e.to_string() },
                }
            }
        }
    }
}

/// Blocks of one chain, in height order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainLog {
    pub id: String,
    pub miners: u32,
    pub is_lock_chain: bool,
    rotation: u32,
    pub blocks: Vec<Block>,
}

impl ChainLog {
    fn miner(&self, index: u64) -> String {
        format!("{}-miner-{}", self.id, (u64::from(self.rotation) + index) % u64::from(self.miners))
    }
}

enum Item {
    Call(CallEvent),
    Lock(LockOp),
}

struct Pending {
    arrival: u64,
    jitter: u32,
    seq: u64,
    item: Item,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    Observe(usize),
    Issue(usize),
    RetryLock(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Waiting,
    Locking,
    Submitted,
    Included,
}

struct SpanRt {
    client: usize,
    spec: SpanSpec,
    span: ClientSpan,
    lock_id: Option<String>,
    phase: Phase,
    outstanding: usize,
}

impl SpanRt {
    fn finished(&self) -> bool {
        self.phase == Phase::Included && self.outstanding == 0
    }
}

/// A completed run: the block logs of every chain plus the final world.
pub struct Simulation {
    pub config: ScenarioConfig,
    deployed: BTreeMap<String, Deployed>,
    initial_world: World,
    genesis_objects: BTreeMap<String, ObjectState>,
    world: World,
    pub chains: Vec<ChainLog>,
    /// Global mining order as `(chain position, block index)`.
    order: Vec<(usize, usize)>,
    mempools: Vec<Vec<Pending>>,
    callbacks: Vec<(u64, u64, CallEvent)>,
    actions: BTreeMap<u64, Vec<Action>>,
    spans: Vec<SpanRt>,
    rng: ChaCha8Rng,
    seq: u64,
    commits: u64,
    oracle_cursor: usize,
    oracle: Address,
    pub dropped_callbacks: usize,
    pub last_tick: u64,
}

/// Runs a scenario to quiescence or `max_ticks`, then verifies the block
/// log by replay and checks lock safety.
pub fn run(config: &ScenarioConfig, contracts: &BTreeMap<String, ContractAst>) -> Result<Simulation, SimError> {
    config.validate(contracts)?;
    let mut sim = Simulation::new(config, contracts)?;
    sim.genesis()?;
    for t in 1..=config.max_ticks {
        sim.tick(t)?;
        sim.last_tick = t;
        if sim.quiescent() {
            break;
        }
    }
    sim.replay()?;
    sim.check_lock_safety()?;
    Ok(sim)
}

impl Simulation {
    fn new(config: &ScenarioConfig, contracts: &BTreeMap<String, ContractAst>) -> Result<Self, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let lock_chain = config.lock_chain_id();
        let mut chains: Vec<ChainLog> = config
            .chains
            .iter()
            .filter(|c| c.id != lock_chain)
            .map(|c| ChainLog { id: c.id.clone(), miners: c.miners, is_lock_chain: false, rotation: 0, blocks: vec![] })
            .collect();
        let lock_miners = config.chains.iter().find(|c| c.id == lock_chain).map_or(1, |c| c.miners);
        chains.push(ChainLog { id: lock_chain, miners: lock_miners, is_lock_chain: true, rotation: 0, blocks: vec![] });
        for c in &mut chains {
            c.rotation = rng.gen_range(0..c.miners);
        }

        let mut deployed = BTreeMap::new();
        let mut world = World {
            objects: BTreeMap::new(),
            accounts: BTreeMap::new(),
            escrows: BTreeMap::new(),
            locks: LockRegistry::new(),
            gas_paid: BTreeMap::new(),
            gas_earned: BTreeMap::new(),
        };
        for c in &config.clients {
            world.accounts.insert(Address::new(&c.id), c.balance);
        }
        for d in &config.contracts {
            let ast = contracts[&d.name].clone();
            let profiles =
                analyze(&ast).map_err(|e| SimError::Contract { file: d.file.clone(), message: e.to_string() })?;
            world.objects.insert(d.name.clone(), ObjectState::new(&ast));
            world.accounts.entry(Address::new(&d.deployer)).or_insert(DEFAULT_ACCOUNT_BALANCE);
            deployed.insert(d.name.clone(), Deployed { chain: d.chain.clone(), ast, profiles });
        }

        let mut actions: BTreeMap<u64, Vec<Action>> = BTreeMap::new();
        let mut spans = Vec::new();
        for (ci, c) in config.clients.iter().enumerate() {
            for (si, s) in c.spans.iter().enumerate() {
                let idx = spans.len();
                actions.entry(s.observe_at.unwrap_or(s.issue_at)).or_default().push(Action::Observe(idx));
                actions.entry(s.issue_at).or_default().push(Action::Issue(idx));
                spans.push(SpanRt {
                    client: ci,
                    spec: s.clone(),
                    span: ClientSpan {
                        span_id: ScenarioConfig::span_id(c, si),
                        client_id: c.id.clone(),
                        observed_reads: vec![],
                        events: vec![],
                    },
                    lock_id: None,
                    phase: Phase::Waiting,
                    outstanding: 0,
                });
            }
        }
        let oracle = Address::new(config.oracle.as_ref().map_or("oracle", |o| o.address.as_str()));
        Ok(Simulation {
            config: config.clone(),
            deployed,
            initial_world: world.clone(),
            genesis_objects: BTreeMap::new(),
            world,
            mempools: chains.iter().map(|_| Vec::new()).collect(),
            chains,
            order: vec![],
            callbacks: vec![],
            actions,
            spans,
            rng,
            seq: 0,
            commits: 0,
            oracle_cursor: 0,
            oracle,
            dropped_callbacks: 0,
            last_tick: 0,
        })
    }

    fn lock_chain(&self) -> usize {
        self.chains.len() - 1
    }

    fn chain_pos(&self, id: &str) -> usize {
        self.chains.iter().position(|c| c.id == id).expect("validated chain")
    }

    fn genesis(&mut self) -> Result<(), SimError> {
        let mut per_chain: Vec<Vec<BlockEntry>> = self.chains.iter().map(|_| vec![]).collect();
        for d in self.config.contracts.clone() {
            let pos = self.chain_pos(&d.chain);
            if self.deployed[&d.name].ast.function("constructor").is_none() {
                continue;
            }
            let mut ctx = CallContext::new(d.deployer.clone(), d.gas).with_value(d.value);
            ctx.data = d.data.clone();
            let event = CallEvent {
                kind: EventKind::Deploy,
                chain: d.chain.clone(),
                contract: d.name.clone(),
                function: "constructor".into(),
                ctx,
                issued_at_tick: 0,
                client_id: None,
                span_id: None,
                callback_id: None,
            };
            let miner = self.chains[pos].miner(0);
            let mut entry = self.world.run_entry(&d.name, &self.deployed[&d.name], event, &miner, &self.oracle)?;
            if let Outcome::AbortedRequires { .. } | Outcome::AbortedOutOfGas | Outcome::AbortedError { .. } =
                &entry.outcome
            {
                return Err(SimError::DeployFailed { name: d.name.clone(), reason: format!("{:?}", entry.outcome) });
            }
            entry.commit_index = self.next_commit();
            per_chain[pos].push(entry);
        }
        for (pos, entries) in per_chain.into_iter().enumerate() {
            self.seal(pos, 0, entries, vec![]);
        }
        self.genesis_objects = self.world.objects.clone();
        // Client actions scheduled at tick 0 run after genesis.
        self.client_actions(0)
    }

    fn next_commit(&mut self) -> u64 {
        let c = self.commits;
        self.commits += 1;
        c
    }

    fn seal(&mut self, pos: usize, tick: u64, entries: Vec<BlockEntry>, lock_entries: Vec<LockEntry>) {
        let chain = &mut self.chains[pos];
        let index = chain.blocks.len() as u64;
        let block = Block {
            chain: chain.id.clone(),
            index,
            tick,
            miner: chain.miner(index),
            prev_digest: chain.blocks.last().map_or(Bytes32::ZERO, |b| b.digest),
            digest: Bytes32::ZERO,
            entries,
            lock_entries,
        }
        .seal();
        chain.blocks.push(block);
        self.order.push((pos, index as usize));
    }

    fn submit(&mut self, pos: usize, arrival: u64, item: Item) {
        let jitter = self.rng.gen();
        self.seq += 1;
        self.mempools[pos].push(Pending { arrival, jitter, seq: self.seq, item });
    }

    fn tick(&mut self, t: u64) -> Result<(), SimError> {
        if t.is_multiple_of(self.config.block_interval_ticks) {
            for pos in 0..self.chains.len() {
                self.mine(pos, t)?;
            }
        }
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.callbacks).into_iter().partition(|c| c.0 <= t);
        self.callbacks = later;
        for (_, _, event) in due {
            let pos = self.chain_pos(&event.chain);
            self.submit(pos, t, Item::Call(event));
        }
        self.client_actions(t)
    }

    fn quiescent(&self) -> bool {
        self.spans.iter().all(SpanRt::finished)
            && self.mempools.iter().all(Vec::is_empty)
            && self.callbacks.is_empty()
            && self.actions.is_empty()
    }

    fn mine(&mut self, pos: usize, t: u64) -> Result<(), SimError> {
        let mut pending = std::mem::take(&mut self.mempools[pos]);
        pending.sort_by_key(|p| (p.arrival, p.jitter, p.seq));
        let index = self.chains[pos].blocks.len() as u64;
        let miner = self.chains[pos].miner(index);
        let mut entries = vec![];
        let mut lock_entries = vec![];
        for p in pending {
            match p.item {
                Item::Lock(op) => {
                    let result = self.world.apply_lock_op(&op, t);
                    if let LockOp::Acquire { span_id, .. } = &op {
                        let idx = self.span_index(span_id);
                        match &result {
                            LockOpResult::Granted { lock_id } => {
                                self.spans[idx].lock_id = Some(lock_id.clone());
                                self.submit_call(idx, t);
                            }
                            _ => {
                                let retry = t + self.spans[idx].spec.lock_retry_ticks.max(1);
                                self.actions.entry(retry).or_default().push(Action::RetryLock(idx));
                            }
                        }
                    }
                    lock_entries.push(LockEntry { op, result, issued_at_tick: p.arrival });
                }
                Item::Call(mut event) => {
                    event.ctx.block_number = index;
                    let name = event.contract.clone();
                    let mut entry = self.world.run_entry(&name, &self.deployed[&name], event, &miner, &self.oracle)?;
                    entry.commit_index = self.next_commit();
                    self.after_entry(&entry, index, t, entries.len())?;
                    entries.push(entry);
                }
            }
        }
        self.seal(pos, t, entries, lock_entries);
        Ok(())
    }

    fn span_index(&self, span_id: &str) -> usize {
        self.spans.iter().position(|s| s.span.span_id == span_id).expect("known span")
    }

    fn after_entry(&mut self, entry: &BlockEntry, block: u64, t: u64, position: usize) -> Result<(), SimError> {
        let span = entry.event.span_id.as_deref().map(|s| self.span_index(s));
        if let Some(idx) = span {
            let rt = &mut self.spans[idx];
            rt.span.events.push(SpanEvent {
                kind: entry.event.kind,
                chain: entry.event.chain.clone(),
                contract: entry.event.contract.clone(),
                function: entry.event.function.clone(),
                ctx: entry.event.ctx.clone(),
                block_index: block,
                block_tick: t,
                position,
                commit_index: entry.commit_index,
                callback_id: entry.event.callback_id,
                outcome: entry.outcome.clone(),
                gas_used: entry.gas_used,
                trace: entry.trace.clone(),
                read_snapshot: entry.read_snapshot.clone(),
                transfers: entry.transfers.clone(),
            });
            match entry.event.kind {
                EventKind::Callback => rt.outstanding -= 1,
                _ => rt.phase = Phase::Included,
            }
        }
        if !entry.outcome.is_committed() {
            return Ok(());
        }
        let lock_pos = self.lock_chain();
        for e in &entry.effects {
            match e {
                HostEffect::LockRelease { lock_id } => {
                    self.submit(lock_pos, t, Item::Lock(LockOp::Release { lock_id: lock_id.clone() }))
                }
                HostEffect::LockForfeit { lock_id, .. } => {
                    self.submit(lock_pos, t, Item::Lock(LockOp::Forfeit { lock_id: lock_id.clone() }))
                }
                _ => {}
            }
        }
        for (k, req) in entry.external_requests.iter().enumerate() {
            let id = Bytes32::digest(format!("{}/{}/{}/{}", entry.event.chain, block, position, k).as_bytes());
            match self.oracle_response(entry, &req.service, t, id) {
                Some((due, cb)) => {
                    if let Some(idx) = span {
                        self.spans[idx].outstanding += 1;
                    }
                    self.seq += 1;
                    self.callbacks.push((due, self.seq, cb));
                }
                None => self.dropped_callbacks += 1,
            }
        }
        Ok(())
    }

    /// Draws the oracle's fate for one request: `None` when it is lost.
    fn oracle_response(&mut self, origin: &BlockEntry, service: &str, t: u64, id: Bytes32) -> Option<(u64, CallEvent)> {
        let oracle = self.config.oracle.clone()?;
        if oracle.service != service {
            return None;
        }
        if self.rng.gen::<f64>() < oracle.drop_probability {
            return None;
        }
        let [lo, hi] = oracle.response_delay_ticks;
        let delay = self.rng.gen_range(lo..=hi);
        let result = match &oracle.values {
            OracleValues::Script(v) => {
                let x = v[self.oracle_cursor % v.len()];
                self.oracle_cursor += 1;
                x
            }
            OracleValues::Uniform { lo, hi } => self.rng.gen_range(*lo..=*hi),
        };
        let deployed = &self.deployed[&origin.event.contract];
        let target = deployed.ast.callback_target()?;
        let mut data = origin.event.ctx.data.clone();
        for p in &target.params {
            match p.ty {
                Type::Bytes32 => data.insert(p.name.clone(), Value::Bytes32(id)),
                Type::Uint => data.insert(p.name.clone(), Value::Uint(result)),
                _ => None,
            };
        }
        let gas = origin
            .event
            .span_id
            .as_deref()
            .map_or(DEFAULT_CALLBACK_GAS, |s| self.spans[self.span_index(s)].spec.callback_gas);
        let mut ctx = CallContext::new(oracle.address.clone(), gas);
        ctx.data = data;
        let event = CallEvent {
            kind: EventKind::Callback,
            chain: origin.event.chain.clone(),
            contract: origin.event.contract.clone(),
            function: target.name.clone(),
            ctx,
            issued_at_tick: t + delay,
            client_id: origin.event.client_id.clone(),
            span_id: origin.event.span_id.clone(),
            callback_id: Some(id),
        };
        Some((t + delay.max(1), event))
    }

    fn client_actions(&mut self, t: u64) -> Result<(), SimError> {
        let Some(mut due) = self.actions.remove(&t) else {
            return Ok(());
        };
        due.sort_by_key(|a| match a {
            Action::Observe(i) => (0, *i),
            Action::Issue(i) | Action::RetryLock(i) => (1, *i),
        });
        for a in due {
            match a {
                Action::Observe(i) => self.observe(i, t),
                Action::Issue(i) | Action::RetryLock(i) => {
                    if self.spans[i].spec.lock {
                        self.request_lock(i, t);
                    } else {
                        self.submit_call(i, t);
                    }
                }
            }
        }
        Ok(())
    }

    fn observe(&mut self, i: usize, t: u64) {
        let spec = &self.spans[i].spec;
        let chain = self.deployed[&spec.contract].chain.clone();
        let state = &self.world.objects[&spec.contract];
        let reads: Vec<ObservedRead> = spec
            .observe
            .iter()
            .map(|a| ObservedRead {
                chain: chain.clone(),
                contract: spec.contract.clone(),
                attr: a.clone(),
                value: state.attrs[a].clone(),
                tick: t,
                after_commit: self.commits,
            })
            .collect();
        self.spans[i].span.observed_reads.extend(reads);
    }

    fn request_lock(&mut self, i: usize, t: u64) {
        let rt = &self.spans[i];
        let d = &self.deployed[&rt.spec.contract];
        let items = lock_footprint(&d.ast, &d.profiles, &rt.spec.call)
            .iter()
            .map(|a| LockItem::new(&d.chain, &rt.spec.contract, a))
            .collect();
        let op = LockOp::Acquire {
            holder: Address::new(&self.config.clients[rt.client].id),
            span_id: rt.span.span_id.clone(),
            items,
        };
        self.spans[i].phase = Phase::Locking;
        let pos = self.lock_chain();
        self.submit(pos, t, Item::Lock(op));
    }

    fn submit_call(&mut self, i: usize, t: u64) {
        let rt = &self.spans[i];
        let spec = &rt.spec;
        let mut data = spec.data.clone();
        if spec.attach_observed {
            for r in &rt.span.observed_reads {
                data.entry(r.attr.clone()).or_insert_with(|| r.value.clone());
            }
        }
        if let Some(id) = &rt.lock_id {
            data.insert(LOCK_ID_KEY.into(), Value::String(id.clone()));
        }
        if let Some(other) = &spec.recover_lock_of {
            if let Some(id) = self.spans.iter().find(|s| &s.span.span_id == other).and_then(|s| s.lock_id.clone()) {
                data.insert(LOCK_ID_KEY.into(), Value::String(id));
            }
        }
        let client = self.config.clients[rt.client].id.clone();
        let mut ctx = CallContext::new(client.clone(), spec.gas).with_value(spec.value);
        ctx.data = data;
        let chain = self.deployed[&spec.contract].chain.clone();
        let event = CallEvent {
            kind: EventKind::Call,
            chain: chain.clone(),
            contract: spec.contract.clone(),
            function: spec.call.clone(),
            ctx,
            issued_at_tick: t,
            client_id: Some(client),
            span_id: Some(rt.span.span_id.clone()),
            callback_id: None,
        };
        self.spans[i].phase = Phase::Submitted;
        let pos = self.chain_pos(&chain);
        self.submit(pos, t, Item::Call(event));
    }

    /// Re-executes every block in mining order from the initial world and
    /// compares each outcome and the final world with what was recorded.
    pub fn replay(&self) -> Result<(), SimError> {
        let mut world = self.initial_world.clone();
        for &(pos, bi) in &self.order {
            let block = &self.chains[pos].blocks[bi];
            let mismatch =
                |detail: String| SimError::ReplayMismatch { chain: block.chain.clone(), block: block.index, detail };
            if !block.verify_digest() {
                return Err(mismatch("digest does not match contents".into()));
            }
            let prev = if bi == 0 { Bytes32::ZERO } else { self.chains[pos].blocks[bi - 1].digest };
            if block.prev_digest != prev {
                return Err(mismatch("broken parent link".into()));
            }
            for (k, le) in block.lock_entries.iter().enumerate() {
                if world.apply_lock_op(&le.op, block.tick) != le.result {
                    return Err(mismatch(format!("lock entry {k} differs")));
                }
            }
            for (k, recorded) in block.entries.iter().enumerate() {
                let name = &recorded.event.contract;
                let mut again =
                    world.run_entry(name, &self.deployed[name], recorded.event.clone(), &block.miner, &self.oracle)?;
                again.commit_index = recorded.commit_index;
                if &again != recorded {
                    return Err(mismatch(format!("entry {k} ({}) differs", recorded.event.function)));
                }
            }
        }
        if world != self.world {
            let chain = self.chains.first().map_or(String::new(), |c| c.id.clone());
            return Err(SimError::ReplayMismatch { chain, block: 0, detail: "final world differs".into() });
        }
        Ok(())
    }

    /// No two locks granted on the lock chain ever hold a common item at
    /// the same time.
    pub fn check_lock_safety(&self) -> Result<(), SimError> {
        let mut held: BTreeMap<String, BTreeSet<LockItem>> = BTreeMap::new();
        let log = &self.chains[self.lock_chain()];
        for b in &log.blocks {
            for e in &b.lock_entries {
                match (&e.op, &e.result) {
                    (LockOp::Acquire { items, .. }, LockOpResult::Granted { lock_id }) => {
                        for (other, set) in &held {
                            if let Some(i) = items.iter().find(|i| set.contains(*i)) {
                                return Err(SimError::LockSafety(format!(
                                    "{lock_id} granted {}.{} while {other} holds it",
                                    i.contract, i.attr
                                )));
                            }
                        }
                        held.insert(lock_id.clone(), items.iter().cloned().collect());
                    }
                    (LockOp::Release { lock_id } | LockOp::Forfeit { lock_id }, LockOpResult::Done) => {
                        held.remove(lock_id);
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn history(&self) -> History {
        let snapshot = |objects: &BTreeMap<String, ObjectState>| -> Vec<ObjectSnapshot> {
            self.config
                .contracts
                .iter()
                .map(|d| ObjectSnapshot {
                    chain: d.chain.clone(),
                    address: d.name.clone(),
                    state: objects[&d.name].clone(),
                })
                .collect()
        };
        History {
            spans: self.spans.iter().map(|s| s.span.clone()).collect(),
            contracts: self
                .config
                .contracts
                .iter()
                .map(|d| DeployedContract {
                    address: d.name.clone(),
                    chain: d.chain.clone(),
                    source: print_contract(&self.deployed[&d.name].ast),
                })
                .collect(),
            initial_state: snapshot(&self.genesis_objects),
            final_state: snapshot(&self.world.objects),
            oracle_address: self.config.oracle.as_ref().map(|_| self.oracle.clone()),
        }
    }

    pub fn object(&self, address: &str) -> Option<&ObjectState> {
        self.world.objects.get(address)
    }

    pub fn genesis_object(&self, address: &str) -> Option<&ObjectState> {
        self.genesis_objects.get(address)
    }

    pub fn account(&self, who: &str) -> u64 {
        self.world.accounts.get(&Address::new(who)).copied().unwrap_or(0)
    }

    pub fn initial_account(&self, who: &str) -> u64 {
        self.initial_world.accounts.get(&Address::new(who)).copied().unwrap_or(0)
    }

    pub fn escrow(&self, lock_id: &str) -> Option<u64> {
        self.world.escrows.get(lock_id).map(|e| e.1)
    }

    pub fn locks(&self) -> &LockRegistry {
        &self.world.locks
    }

    pub fn lock_of_span(&self, span_id: &str) -> Option<&str> {
        self.spans.iter().find(|s| s.span.span_id == span_id)?.lock_id.as_deref()
    }

    pub fn gas_paid(&self, who: &str) -> u64 {
        self.world.gas_paid.get(&Address::new(who)).copied().unwrap_or(0)
    }

    pub fn gas_earned(&self, miner: &str) -> u64 {
        self.world.gas_earned.get(miner).copied().unwrap_or(0)
    }

    pub fn total_gas_earned(&self) -> u64 {
        self.world.gas_earned.values().sum()
    }

    pub fn chain(&self, id: &str) -> Option<&ChainLog> {
        self.chains.iter().find(|c| c.id == id)
    }

    /// Blocks of every chain in the order they were mined.
    pub fn blocks_in_order(&self) -> impl Iterator<Item = &Block> {
        self.order.iter().map(|&(p, b)| &self.chains[p].blocks[b])
    }

    /// Whether every span finished before the tick limit.
    pub fn completed(&self) -> bool {
        self.spans.iter().all(SpanRt::finished)
    }
}
