//! Serializability of simulated histories over client transaction spans.
//!
//! The oracle searches for a serial order of spans that, replayed through
//! the interpreter from the initial state, reproduces every committed
//! event's trace, every observed read, and the final state. Spans whose
//! events all aborted contribute no writes and need not match their
//! observations. Above the permutation bound the checker can fall back to
//! conflict-graph acyclicity.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chainsim::{ClientSpan, History};
use crate::dsl::ast::ContractAst;
use crate::dsl::parse_contract;
use crate::interp::{execute, Host, ObjectState, TraceEntry};
use crate::value::Address;

pub const DEFAULT_BOUND: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckOptions {
    pub bound: usize,
    pub fallback_graph: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { bound: DEFAULT_BOUND, fallback_graph: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictKind {
    RW,
    WR,
    WW,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConflictEdge {
    pub from: String,
    pub to: String,
    /// `contract.attr`, qualified by chain when contracts share a name.
    pub attribute: String,
    pub kind: ConflictKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    Permutation,
    ConflictGraph,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Verdict {
    pub serializable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_order: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict_cycle: Option<Vec<ConflictEdge>>,
    /// Whether the conflict graph is acyclic.
    pub conflict_serializable: bool,
    pub method: Method,
    /// Aborted spans whose observations are stale at their witness
    /// position.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invalidated_spans: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("{spans} spans exceed the permutation bound {bound}")]
    BoundExceeded { spans: usize, bound: usize },
    #[error("malformed history: {0}")]
    Malformed(String),
}

struct PermissiveHost {
    oracle: Address,
}

impl Host for PermissiveHost {
    fn lock_held(&self, _: &str, _: &Address, _: &str) -> bool {
        true
    }

    fn oracle_address(&self) -> Address {
        self.oracle.clone()
    }

    fn account_balance(&self, _: &Address) -> u64 {
        u64::MAX / 2
    }
}

struct Replayer<'h> {
    history: &'h History,
    contracts: BTreeMap<&'h str, ContractAst>,
    host: PermissiveHost,
}

type World = BTreeMap<String, ObjectState>;

impl<'h> Replayer<'h> {
    fn new(history: &'h History) -> Result<Self, CheckError> {
        let mut contracts = BTreeMap::new();
        for c in &history.contracts {
            let ast = parse_contract(&c.source)
                .map_err(|e| CheckError::Malformed(format!("contract `{}`: {e}", c.address)))?;
            contracts.insert(c.address.as_str(), ast);
        }
        for s in &history.spans {
            for e in &s.events {
                if !contracts.contains_key(e.contract.as_str()) {
                    return Err(CheckError::Malformed(format!("unknown contract `{}`", e.contract)));
                }
            }
        }
        let oracle = history.oracle_address.clone().unwrap_or_else(|| Address::new("oracle"));
        Ok(Replayer { history, contracts, host: PermissiveHost { oracle } })
    }

    fn initial(&self) -> World {
        self.history.initial_state.iter().map(|o| (o.address.clone(), o.state.clone())).collect()
    }

    fn observations_hold(&self, span: &ClientSpan, world: &World) -> bool {
        span.observed_reads.iter().all(|r| world.get(&r.contract).and_then(|o| o.get(&r.attr)) == Some(&r.value))
    }

    /// Runs the span's committed events serially. `None` when the span
    /// cannot sit at this point of a serial order.
    fn apply(&self, span: &ClientSpan, world: &World) -> Option<World> {
        let exempt = !span.any_committed();
        if !exempt && !self.observations_hold(span, world) {
            return None;
        }
        let mut world = world.clone();
        for e in span.events.iter().filter(|e| e.outcome.is_committed()) {
            let ast = &self.contracts[e.contract.as_str()];
            let state = world.get(&e.contract)?;
            let r = execute(ast, &e.function, state, &e.ctx, &self.host).ok()?;
            if !r.outcome.is_committed() || r.trace != e.trace || r.transfers != e.transfers {
                return None;
            }
            world.insert(e.contract.clone(), r.new_state);
        }
        Some(world)
    }

    fn matches_final(&self, world: &World) -> bool {
        self.history.final_state.iter().all(|o| world.get(&o.address) == Some(&o.state))
    }

    fn search(&self, order: &[usize], used: &mut Vec<bool>, path: &mut Vec<usize>, world: &World) -> bool {
        if path.len() == order.len() {
            return self.matches_final(world);
        }
        for &i in order {
            if used[i] {
                continue;
            }
            if let Some(next) = self.apply(&self.history.spans[i], world) {
                used[i] = true;
                path.push(i);
                if self.search(order, used, path, &next) {
                    return true;
                }
                path.pop();
                used[i] = false;
            }
        }
        false
    }

    fn invalidated(&self, witness: &[usize]) -> Vec<String> {
        let mut world = self.initial();
        let mut out = Vec::new();
        for &i in witness {
            let span = &self.history.spans[i];
            if !span.any_committed() && !self.observations_hold(span, &world) {
                out.push(span.span_id.clone());
            }
            world = self.apply(span, &world).expect("witness replays");
        }
        out
    }
}

/// Spans in the order they first reached a block; spans with no events last.
fn natural_order(history: &History) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..history.spans.len()).collect();
    idx.sort_by_key(|&i| history.spans[i].events.iter().map(|e| e.commit_index).min().unwrap_or(u64::MAX));
    idx
}

pub fn check(history: &History, options: CheckOptions) -> Result<Verdict, CheckError> {
    let replayer = Replayer::new(history)?;
    let graph = conflict_graph(history);
    let cycle = find_cycle(history, &graph);
    let conflict_serializable = cycle.is_none();
    let ids = |order: &[usize]| order.iter().map(|&i| history.spans[i].span_id.clone()).collect::<Vec<_>>();

    if history.spans.len() > options.bound {
        if !options.fallback_graph {
            return Err(CheckError::BoundExceeded { spans: history.spans.len(), bound: options.bound });
        }
        let witness = if conflict_serializable { topological_order(history, &graph) } else { None };
        return Ok(Verdict {
            serializable: conflict_serializable,
            witness_order: witness.map(|w| ids(&w)),
            conflict_cycle: cycle,
            conflict_serializable,
            method: Method::ConflictGraph,
            invalidated_spans: vec![],
        });
    }

    let order = natural_order(history);
    let mut used = vec![false; history.spans.len()];
    let mut path = Vec::new();
    let found = replayer.search(&order, &mut used, &mut path, &replayer.initial());
    Ok(Verdict {
        serializable: found,
        witness_order: found.then(|| ids(&path)),
        invalidated_spans: if found { replayer.invalidated(&path) } else { vec![] },
        conflict_cycle: if found { None } else { cycle },
        conflict_serializable,
        method: Method::Permutation,
    })
}

/// Replays `order` serially and reports whether it reproduces the history.
pub fn replays_to_history(history: &History, order: &[String]) -> Result<bool, CheckError> {
    let replayer = Replayer::new(history)?;
    let mut world = replayer.initial();
    for id in order {
        let i = history
            .spans
            .iter()
            .position(|s| &s.span_id == id)
            .ok_or_else(|| CheckError::Malformed(format!("unknown span `{id}`")))?;
        match replayer.apply(&history.spans[i], &world) {
            Some(w) => world = w,
            None => return Ok(false),
        }
    }
    Ok(order.len() == history.spans.len() && replayer.matches_final(&world))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum OpKind {
    Read,
    Write,
}

struct Op {
    span: usize,
    kind: OpKind,
    attr: String,
    order: (u64, u8, usize),
}

fn attribute_label(history: &History, chain: &str, contract: &str, attr: &str) -> String {
    let shared = history.contracts.iter().filter(|c| c.address == contract).count() > 1;
    if shared {
        format!("{chain}:{contract}.{attr}")
    } else {
        format!("{contract}.{attr}")
    }
}

fn collect_ops(history: &History) -> Vec<Op> {
    let mut ops = Vec::new();
    for (si, span) in history.spans.iter().enumerate() {
        if !span.any_committed() {
            continue;
        }
        for (k, r) in span.observed_reads.iter().enumerate() {
            ops.push(Op {
                span: si,
                kind: OpKind::Read,
                attr: attribute_label(history, &r.chain, &r.contract, &r.attr),
                order: (r.after_commit, 0, k),
            });
        }
        for e in span.events.iter().filter(|e| e.outcome.is_committed()) {
            for (k, t) in e.trace.iter().enumerate() {
                let kind = match t {
                    TraceEntry::Read { .. } => OpKind::Read,
                    TraceEntry::Write { .. } => OpKind::Write,
                };
                ops.push(Op {
                    span: si,
                    kind,
                    attr: attribute_label(history, &e.chain, &e.contract, t.attr()),
                    order: (e.commit_index, 1, k),
                });
            }
        }
    }
    ops
}

/// Directed conflicts between spans: `u -> v` when an op of `u` precedes a
/// conflicting op of `v` on the same attribute in commit order. Observed
/// reads count as ops just before the commit they followed. Spans without
/// a committed event contribute nothing.
pub fn conflict_graph(history: &History) -> Vec<ConflictEdge> {
    let ops = collect_ops(history);
    let mut edges = BTreeSet::new();
    for a in &ops {
        for b in &ops {
            if a.span == b.span || a.attr != b.attr || a.order >= b.order {
                continue;
            }
            let kind = match (a.kind, b.kind) {
                (OpKind::Read, OpKind::Write) => ConflictKind::RW,
                (OpKind::Write, OpKind::Read) => ConflictKind::WR,
                (OpKind::Write, OpKind::Write) => ConflictKind::WW,
                (OpKind::Read, OpKind::Read) => continue,
            };
            edges.insert(ConflictEdge {
                from: history.spans[a.span].span_id.clone(),
                to: history.spans[b.span].span_id.clone(),
                attribute: a.attr.clone(),
                kind,
            });
        }
    }
    edges.into_iter().collect()
}

fn adjacency(history: &History, edges: &[ConflictEdge]) -> Vec<BTreeSet<usize>> {
    let pos: BTreeMap<&str, usize> = history.spans.iter().enumerate().map(|(i, s)| (s.span_id.as_str(), i)).collect();
    let mut adj = vec![BTreeSet::new(); history.spans.len()];
    for e in edges {
        adj[pos[e.from.as_str()]].insert(pos[e.to.as_str()]);
    }
    adj
}

/// One cycle of the conflict graph, if any. Each hop is labelled with the
/// attribute shared by the most hops of the cycle.
pub fn find_cycle(history: &History, edges: &[ConflictEdge]) -> Option<Vec<ConflictEdge>> {
    let adj = adjacency(history, edges);
    let n = adj.len();
    let mut color = vec![0u8; n];
    let mut stack = Vec::new();
    let mut nodes = None;
    for s in 0..n {
        if color[s] == 0 && dfs(s, &adj, &mut color, &mut stack, &mut nodes) {
            break;
        }
    }
    let nodes = nodes?;
    let hops: Vec<Vec<&ConflictEdge>> = (0..nodes.len())
        .map(|k| {
            let (u, v) = (&history.spans[nodes[k]].span_id, &history.spans[nodes[(k + 1) % nodes.len()]].span_id);
            edges.iter().filter(|e| &e.from == u && &e.to == v).collect()
        })
        .collect();
    let mut score: BTreeMap<&str, usize> = BTreeMap::new();
    for hop in &hops {
        let attrs: BTreeSet<&str> = hop.iter().map(|e| e.attribute.as_str()).collect();
        for a in attrs {
            *score.entry(a).or_default() += 1;
        }
    }
    Some(
        hops.iter()
            .map(|hop| {
                (*hop
                    .iter()
                    .min_by_key(|e| (std::cmp::Reverse(score[e.attribute.as_str()]), &e.attribute, e.kind))
                    .expect("hop has an edge"))
                .clone()
            })
            .collect(),
    )
}

fn dfs(
    u: usize,
    adj: &[BTreeSet<usize>],
    color: &mut [u8],
    stack: &mut Vec<usize>,
    found: &mut Option<Vec<usize>>,
) -> bool {
    color[u] = 1;
    stack.push(u);
    for &v in &adj[u] {
        if color[v] == 1 {
            let start = stack.iter().position(|&x| x == v).expect("on stack");
            *found = Some(stack[start..].to_vec());
            return true;
        }
        if color[v] == 0 && dfs(v, adj, color, stack, found) {
            return true;
        }
    }
    stack.pop();
    color[u] = 2;
    false
}

fn topological_order(history: &History, edges: &[ConflictEdge]) -> Option<Vec<usize>> {
    let adj = adjacency(history, edges);
    let mut indegree = vec![0usize; adj.len()];
    for vs in &adj {
        for &v in vs {
            indegree[v] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..adj.len()).filter(|&i| indegree[i] == 0).collect();
    let mut out = Vec::new();
    while let Some(u) = ready.pop_first() {
        out.push(u);
        for &v in &adj[u] {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                ready.insert(v);
            }
        }
    }
    (out.len() == adj.len()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_is_serializable() {
        let v = check(&History::default(), CheckOptions::default()).unwrap();
        assert!(v.serializable);
        assert_eq!(v.witness_order, Some(vec![]));
        assert!(conflict_graph(&History::default()).is_empty());
    }

    #[test]
    fn bound_without_fallback() {
        let mut h = History::default();
        for i in 0..3 {
            h.spans.push(ClientSpan {
                span_id: format!("s{i}"),
                client_id: "c".into(),
                observed_reads: vec![],
                events: vec![],
            });
        }
        let opts = CheckOptions { bound: 2, fallback_graph: false };
        assert_eq!(check(&h, opts), Err(CheckError::BoundExceeded { spans: 3, bound: 2 }));
        let v = check(&h, CheckOptions { bound: 2, fallback_graph: true }).unwrap();
        assert_eq!(v.method, Method::ConflictGraph);
        assert!(v.serializable);
    }
}
