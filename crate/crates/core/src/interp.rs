//! Gas-metered execution of one function call against one contract object.
//!
//! Statements run on a working copy of the object. Every executed statement
//! costs one unit of gas (transaction markers are directives and cost
//! nothing); expressions are free. A failed `requires`, gas exhaustion or a
//! runtime fault discards the working copy together with any transfers,
//! external requests and host effects, but the gas burnt so far is still
//! reported so the caller can be charged for it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::ast::*;
use crate::dsl::print_expr;
use crate::transform::LOCK_ID_KEY;
use crate::value::{Address, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectState {
    pub contract: String,
    pub attrs: BTreeMap<String, Value>,
    pub balance: u64,
}

impl ObjectState {
    /// Fresh object with every declared attribute at its zero value.
    pub fn new(ast: &ContractAst) -> Self {
        ObjectState {
            contract: ast.name.clone(),
            attrs: ast.attributes.iter().map(|a| (a.name.clone(), a.ty.default_value())).collect(),
            balance: 0,
        }
    }

    pub fn get(&self, attr: &str) -> Option<&Value> {
        self.attrs.get(attr)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CallContext {
    pub sender: Address,
    pub value: u64,
    pub data: BTreeMap<String, Value>,
    pub block_number: u64,
    pub gas_budget: u64,
}

impl CallContext {
    pub fn new(sender: impl Into<String>, gas_budget: u64) -> Self {
        CallContext { sender: Address::new(sender), value: 0, data: BTreeMap::new(), block_number: 0, gas_budget }
    }

    pub fn with_value(mut self, value: u64) -> Self {
        self.value = value;
        self
    }

    pub fn with_data(mut self, key: &str, value: Value) -> Self {
        self.data.insert(key.to_string(), value);
        self
    }

    pub fn at_block(mut self, n: u64) -> Self {
        self.block_number = n;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedCheck {
    pub line: u32,
    pub col: u32,
    pub expr: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum Outcome {
    Committed,
    AbortedRequires { check: FailedCheck },
    AbortedOutOfGas,
    AbortedError { reason: String },
}

impl Outcome {
    pub fn is_committed(&self) -> bool {
        matches!(self, Outcome::Committed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub to: Address,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub service: String,
    pub query: String,
}

/// Side effects on state owned by the host (accounts, the lock chain),
/// applied by the simulator only when the call commits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "camelCase")]
pub enum HostEffect {
    Escrow { lock_id: String, payer: Address, amount: u64 },
    EscrowRefund { lock_id: String },
    LockRelease { lock_id: String },
    LockForfeit { lock_id: String, beneficiary: Address },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum TraceEntry {
    Read { attr: String, value: Value },
    Write { attr: String, value: Value },
}

impl TraceEntry {
    pub fn attr(&self) -> &str {
        match self {
            TraceEntry::Read { attr, .. } | TraceEntry::Write { attr, .. } => attr,
        }
    }
}

/// Attributes read before this trace first writes them.
pub fn pre_write_reads(trace: &[TraceEntry]) -> Vec<&str> {
    let mut written: Vec<&str> = Vec::new();
    let mut out = Vec::new();
    for t in trace {
        match t {
            TraceEntry::Read { attr, .. } if !written.contains(&attr.as_str()) => out.push(attr.as_str()),
            TraceEntry::Write { attr, .. } => written.push(attr),
            _ => {}
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecResult {
    pub outcome: Outcome,
    pub new_state: ObjectState,
    pub gas_used: u64,
    pub transfers: Vec<Transfer>,
    pub external_requests: Vec<ExternalRequest>,
    pub effects: Vec<HostEffect>,
    pub trace: Vec<TraceEntry>,
}

/// Environment services the simulator provides to running code.
pub trait Host {
    /// Whether `lock_id` is a held lock owned by `caller` that covers every
    /// attribute `function` needs.
    fn lock_held(&self, lock_id: &str, caller: &Address, function: &str) -> bool;
    fn oracle_address(&self) -> Address;
    fn account_balance(&self, who: &Address) -> u64;
}

/// Fixed answers for running the interpreter outside the simulator.
#[derive(Clone, Debug)]
pub struct StubHost {
    pub locks_held: bool,
    pub oracle: Address,
    pub balance: u64,
}

impl Default for StubHost {
    fn default() -> Self {
        StubHost { locks_held: true, oracle: Address::new("oracle"), balance: u64::MAX / 2 }
    }
}

impl Host for StubHost {
    fn lock_held(&self, _: &str, _: &Address, _: &str) -> bool {
        self.locks_held
    }

    fn oracle_address(&self) -> Address {
        self.oracle.clone()
    }

    fn account_balance(&self, _: &Address) -> u64 {
        self.balance
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

enum Abort {
    Requires(FailedCheck),
    OutOfGas,
    Fault(String),
}

enum Flow {
    Next,
    Return,
}

type Step<T> = Result<T, Abort>;

pub fn execute(
    ast: &ContractAst,
    function: &str,
    state: &ObjectState,
    ctx: &CallContext,
    host: &dyn Host,
) -> Result<ExecResult, ExecError> {
    let f = ast.function(function).ok_or_else(|| ExecError::UnknownFunction(function.to_string()))?;
    let mut m = Machine {
        ast,
        function,
        ctx,
        host,
        work: state.clone(),
        gas_used: 0,
        escrowed: 0,
        scopes: vec![Vec::new()],
        transfers: Vec::new(),
        requests: Vec::new(),
        effects: Vec::new(),
        trace: Vec::new(),
    };
    let run = m.bind_params(f).and_then(|()| {
        if host.account_balance(&ctx.sender) < ctx.value {
            return Err(Abort::Fault("insufficient funds for msg.value".into()));
        }
        m.work.balance =
            m.work.balance.checked_add(ctx.value).ok_or_else(|| Abort::Fault("balance overflow".into()))?;
        m.block(&f.body).map(|_| ())
    });
    let Machine { work, gas_used, transfers, requests, effects, trace, .. } = m;
    let aborted = |outcome| ExecResult {
        outcome,
        new_state: state.clone(),
        gas_used,
        transfers: Vec::new(),
        external_requests: Vec::new(),
        effects: Vec::new(),
        trace: trace.clone(),
    };
    Ok(match run {
        Ok(()) => ExecResult {
            outcome: Outcome::Committed,
            new_state: work,
            gas_used,
            transfers,
            external_requests: requests,
            effects,
            trace,
        },
        Err(Abort::Requires(check)) => aborted(Outcome::AbortedRequires { check }),
        Err(Abort::OutOfGas) => aborted(Outcome::AbortedOutOfGas),
        Err(Abort::Fault(reason)) => aborted(Outcome::AbortedError { reason }),
    })
}

struct Machine<'a> {
    ast: &'a ContractAst,
    function: &'a str,
    ctx: &'a CallContext,
    host: &'a dyn Host,
    work: ObjectState,
    gas_used: u64,
    escrowed: u64,
    scopes: Vec<Vec<(String, Value)>>,
    transfers: Vec<Transfer>,
    requests: Vec<ExternalRequest>,
    effects: Vec<HostEffect>,
    trace: Vec<TraceEntry>,
}

impl Machine<'_> {
    fn bind_params(&mut self, f: &FunctionDecl) -> Step<()> {
        for p in &f.params {
            let v = self.ctx.data.get(&p.name).ok_or_else(|| Abort::Fault(format!("missing argument `{}`", p.name)))?;
            if v.ty() != p.ty {
                return Err(Abort::Fault(format!("argument `{}` is not {}", p.name, p.ty)));
            }
            self.scopes[0].push((p.name.clone(), v.clone()));
        }
        Ok(())
    }

    fn charge(&mut self) -> Step<()> {
        if self.gas_used >= self.ctx.gas_budget {
            return Err(Abort::OutOfGas);
        }
        self.gas_used += 1;
        Ok(())
    }

    fn block(&mut self, block: &[Stmt]) -> Step<Flow> {
        self.scopes.push(Vec::new());
        let mut flow = Ok(Flow::Next);
        for s in block {
            flow = self.stmt(s);
            if !matches!(flow, Ok(Flow::Next)) {
                break;
            }
        }
        self.scopes.pop();
        flow
    }

    fn stmt(&mut self, s: &Stmt) -> Step<Flow> {
        if matches!(s.kind, StmtKind::StartTx | StmtKind::EndTx) {
            return Ok(Flow::Next);
        }
        self.charge()?;
        match &s.kind {
            StmtKind::Let { name, value } => {
                let v = self.eval(value)?;
                self.scopes.last_mut().expect("scope").push((name.clone(), v));
            }
            StmtKind::Assign { target, value } => {
                let v = self.eval(value)?;
                match target {
                    Target::Attr(n) => self.write_attr(n, v)?,
                    Target::Local(n) => {
                        let slot = self
                            .scopes
                            .iter_mut()
                            .rev()
                            .flat_map(|s| s.iter_mut().rev())
                            .find(|(k, _)| k == n)
                            .ok_or_else(|| Abort::Fault(format!("unresolved local `{n}`")))?;
                        if slot.1.ty() != v.ty() {
                            return Err(Abort::Fault(format!("local `{n}` changes type")));
                        }
                        slot.1 = v;
                    }
                }
            }
            StmtKind::Requires(e) => {
                if !self.eval_bool(e)? {
                    return Err(Abort::Requires(FailedCheck { line: s.loc.line, col: s.loc.col, expr: print_expr(e) }));
                }
            }
            StmtKind::If { cond, then_block, else_block } => {
                if self.eval_bool(cond)? {
                    return self.block(then_block);
                } else if let Some(b) = else_block {
                    return self.block(b);
                }
            }
            StmtKind::Transfer { to, amount } => {
                let Value::Address(to) = self.eval(to)? else {
                    return Err(Abort::Fault("transfer recipient is not an address".into()));
                };
                let amount = self.eval_uint(amount)?;
                self.work.balance =
                    self.work.balance.checked_sub(amount).ok_or_else(|| Abort::Fault("insufficient balance".into()))?;
                self.transfers.push(Transfer { to, amount });
            }
            StmtKind::ExternalQuery { service, query } => {
                self.requests.push(ExternalRequest { service: service.clone(), query: query.clone() });
            }
            StmtKind::Effect { builtin, args } => self.effect(*builtin, args)?,
            StmtKind::Return => return Ok(Flow::Return),
            StmtKind::StartTx | StmtKind::EndTx => unreachable!("markers handled above"),
        }
        Ok(Flow::Next)
    }

    fn ctx_lock_id(&self) -> Step<String> {
        match self.ctx.data.get(LOCK_ID_KEY) {
            Some(Value::String(s)) => Ok(s.clone()),
            _ => Err(Abort::Fault(format!("msg.data.{LOCK_ID_KEY} must be a string"))),
        }
    }

    fn effect(&mut self, builtin: Builtin, args: &[Expr]) -> Step<()> {
        let effect = match builtin {
            Builtin::Escrow => {
                let amount = self.eval_uint(&args[0])?;
                let lock_id = self.ctx_lock_id()?;
                let needed = self
                    .ctx
                    .value
                    .checked_add(self.escrowed)
                    .and_then(|n| n.checked_add(amount))
                    .ok_or_else(|| Abort::Fault("escrow overflow".into()))?;
                if self.host.account_balance(&self.ctx.sender) < needed {
                    return Err(Abort::Fault("insufficient funds for escrow".into()));
                }
                self.escrowed += amount;
                HostEffect::Escrow { lock_id, payer: self.ctx.sender.clone(), amount }
            }
            Builtin::EscrowRefund => HostEffect::EscrowRefund { lock_id: self.ctx_lock_id()? },
            Builtin::LockRelease => HostEffect::LockRelease { lock_id: self.eval_string(&args[0])? },
            Builtin::LockForfeit => {
                HostEffect::LockForfeit { lock_id: self.eval_string(&args[0])?, beneficiary: self.ctx.sender.clone() }
            }
            Builtin::LockHeld | Builtin::OracleAddress => {
                return Err(Abort::Fault(format!("`{}` is not a statement", builtin.name())))
            }
        };
        self.effects.push(effect);
        Ok(())
    }

    fn write_attr(&mut self, name: &str, v: Value) -> Step<()> {
        let decl = self.ast.attribute(name).ok_or_else(|| Abort::Fault(format!("unknown attribute `{name}`")))?;
        if decl.ty != v.ty() {
            return Err(Abort::Fault(format!("`{name}` expects {}, got {}", decl.ty, v.ty())));
        }
        self.trace.push(TraceEntry::Write { attr: name.to_string(), value: v.clone() });
        self.work.attrs.insert(name.to_string(), v);
        Ok(())
    }

    fn eval_bool(&mut self, e: &Expr) -> Step<bool> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            v => Err(Abort::Fault(format!("expected bool, got {}", v.ty()))),
        }
    }

    fn eval_uint(&mut self, e: &Expr) -> Step<u64> {
        match self.eval(e)? {
            Value::Uint(n) => Ok(n),
            v => Err(Abort::Fault(format!("expected uint, got {}", v.ty()))),
        }
    }

    fn eval_string(&mut self, e: &Expr) -> Step<String> {
        match self.eval(e)? {
            Value::String(s) => Ok(s),
            v => Err(Abort::Fault(format!("expected string, got {}", v.ty()))),
        }
    }

    fn eval(&mut self, e: &Expr) -> Step<Value> {
        Ok(match &e.kind {
            ExprKind::AttrRead(n) => {
                let v =
                    self.work.attrs.get(n).cloned().ok_or_else(|| Abort::Fault(format!("unknown attribute `{n}`")))?;
                self.trace.push(TraceEntry::Read { attr: n.clone(), value: v.clone() });
                v
            }
            ExprKind::LocalRead(n) => self
                .scopes
                .iter()
                .rev()
                .flat_map(|s| s.iter().rev())
                .find(|(k, _)| k == n)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Abort::Fault(format!("unresolved local `{n}`")))?,
            ExprKind::Implicit(i) => match i {
                Implicit::MsgSender => Value::Address(self.ctx.sender.clone()),
                Implicit::MsgValue => Value::Uint(self.ctx.value),
                Implicit::BlockNumber => Value::Uint(self.ctx.block_number),
                Implicit::MsgData(k) => {
                    self.ctx.data.get(k).cloned().ok_or_else(|| Abort::Fault(format!("missing msg.data.{k}")))?
                }
            },
            ExprKind::Literal(v) => v.clone(),
            ExprKind::Hash(x) => Value::Bytes32(self.eval(x)?.sha256()),
            ExprKind::Unary(UnOp::Not, x) => Value::Bool(!self.eval_bool(x)?),
            ExprKind::Call(b, args) => match b {
                Builtin::LockHeld => {
                    let id = self.eval_string(&args[0])?;
                    Value::Bool(self.host.lock_held(&id, &self.ctx.sender, self.function))
                }
                Builtin::OracleAddress => Value::Address(self.host.oracle_address()),
                other => return Err(Abort::Fault(format!("`{}` is not an expression", other.name()))),
            },
            ExprKind::Binary(op, l, r) => match op {
                BinOp::And => Value::Bool(self.eval_bool(l)? && self.eval_bool(r)?),
                BinOp::Or => Value::Bool(self.eval_bool(l)? || self.eval_bool(r)?),
                _ => {
                    let a = self.eval(l)?;
                    let b = self.eval(r)?;
                    binary(*op, a, b)?
                }
            },
        })
    }
}

fn binary(op: BinOp, a: Value, b: Value) -> Step<Value> {
    if a.ty() != b.ty() {
        return Err(Abort::Fault(format!("`{}` on {} and {}", op.symbol(), a.ty(), b.ty())));
    }
    let overflow = || Abort::Fault(format!("arithmetic overflow in `{}`", op.symbol()));
    Ok(match (op, a, b) {
        (BinOp::Eq, a, b) => Value::Bool(a == b),
        (BinOp::Ne, a, b) => Value::Bool(a != b),
        (BinOp::Lt, Value::Uint(x), Value::Uint(y)) => Value::Bool(x < y),
        (BinOp::Gt, Value::Uint(x), Value::Uint(y)) => Value::Bool(x > y),
        (BinOp::Lt, Value::Bytes32(x), Value::Bytes32(y)) => Value::Bool(x < y),
        (BinOp::Gt, Value::Bytes32(x), Value::Bytes32(y)) => Value::Bool(x > y),
        (BinOp::Add, Value::Uint(x), Value::Uint(y)) => Value::Uint(x.checked_add(y).ok_or_else(overflow)?),
        (BinOp::Sub, Value::Uint(x), Value::Uint(y)) => Value::Uint(x.checked_sub(y).ok_or_else(overflow)?),
        (BinOp::Mul, Value::Uint(x), Value::Uint(y)) => Value::Uint(x.checked_mul(y).ok_or_else(overflow)?),
        (BinOp::Rem, Value::Uint(x), Value::Uint(y)) => {
            Value::Uint(x.checked_rem(y).ok_or_else(|| Abort::Fault("remainder by zero".into()))?)
        }
        (op, a, _) => return Err(Abort::Fault(format!("`{}` undefined on {}", op.symbol(), a.ty()))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze;
    use crate::corpus;
    use crate::dsl::parse_contract;
    use crate::transform::{transform, TransformConfig};
    use crate::value::Bytes32;

    fn puzzle_state(ast: &ContractAst, solved: bool, reward: u64, diff: Bytes32) -> ObjectState {
        let mut s = ObjectState::new(ast);
        s.attrs.insert("owner".into(), Value::Address(Address::new("alice")));
        s.attrs.insert("solved".into(), Value::Bool(solved));
        s.attrs.insert("reward".into(), Value::Uint(reward));
        s.attrs.insert("diff".into(), Value::Bytes32(diff));
        s.balance = reward;
        s
    }

    /// A payload whose digest is strictly below `diff`, found by search.
    fn solving_payload(diff: Bytes32) -> Value {
        (0u64..).map(|i| Value::Bytes32(Value::Uint(i).sha256())).find(|p| p.sha256() < diff).unwrap()
    }

    fn transformed_puzzle() -> ContractAst {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let p = analyze(&ast).unwrap();
        transform(&ast, &p, &TransformConfig::default()).unwrap().0
    }

    #[test]
    fn submit_solution_pays_reward() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let mut diff = [0u8; 32];
        diff[0] = 0x40;
        let diff = Bytes32(diff);
        let state = puzzle_state(&ast, false, 2, diff);
        let ctx = CallContext::new("bob", 100).with_data("payload", solving_payload(diff));
        let r = execute(&ast, "SubmitSolution", &state, &ctx, &StubHost::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Committed);
        assert_eq!(r.transfers, vec![Transfer { to: Address::new("bob"), amount: 2 }]);
        assert_eq!(r.new_state.get("solved"), Some(&Value::Bool(true)));
        assert_eq!(r.new_state.balance, 0);
        assert_eq!(r.gas_used, 5);
    }

    #[test]
    fn stale_reward_aborts_transformed_submit() {
        let ast = transformed_puzzle();
        let state = puzzle_state(&ast, false, 0, Bytes32::MAX);
        let ctx = CallContext::new("bob", 100)
            .with_data("payload", Value::Bytes32(Bytes32::ZERO))
            .with_data("solved", Value::Bool(false))
            .with_data("reward", Value::Uint(2))
            .with_data("diff", Value::Bytes32(Bytes32::MAX));
        let r = execute(&ast, "SubmitSolution", &state, &ctx, &StubHost::default()).unwrap();
        match &r.outcome {
            Outcome::AbortedRequires { check } => assert_eq!(check.expr, "reward == msg.data.reward"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(r.new_state, state);
        assert!(r.transfers.is_empty());
    }

    #[test]
    fn zero_budget() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let state = puzzle_state(&ast, false, 2, Bytes32::MAX);
        for f in ["UpdateReward", "SubmitSolution", "constructor"] {
            let r = execute(&ast, f, &state, &CallContext::new("alice", 0), &StubHost::default()).unwrap();
            assert_eq!(r.outcome, Outcome::AbortedOutOfGas, "{f}");
            assert_eq!(r.gas_used, 0);
            assert_eq!(r.new_state, state);
        }
    }

    #[test]
    fn non_owner_update_reward() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let state = puzzle_state(&ast, false, 2, Bytes32::MAX);
        let r = execute(&ast, "UpdateReward", &state, &CallContext::new("mallory", 50), &StubHost::default()).unwrap();
        match r.outcome {
            Outcome::AbortedRequires { check } => {
                assert_eq!(check.expr, "msg.sender == owner");
                assert_eq!(check.line, 19);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(r.gas_used, 1);
    }

    #[test]
    fn out_of_gas_mid_body_rolls_back() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let state = puzzle_state(&ast, false, 2, Bytes32::MAX);
        let ctx = CallContext::new("bob", 4).with_data("payload", Value::Bytes32(Bytes32::ZERO));
        let r = execute(&ast, "SubmitSolution", &state, &ctx, &StubHost::default()).unwrap();
        assert_eq!(r.outcome, Outcome::AbortedOutOfGas);
        assert_eq!(r.gas_used, 4);
        assert_eq!(r.new_state, state);
        assert!(r.transfers.is_empty());
    }

    #[test]
    fn insufficient_contract_balance() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let mut state = puzzle_state(&ast, false, 2, Bytes32::MAX);
        state.balance = 1;
        let r = execute(&ast, "UpdateReward", &state, &CallContext::new("alice", 50), &StubHost::default()).unwrap();
        assert_eq!(r.outcome, Outcome::AbortedError { reason: "insufficient balance".into() });
    }

    #[test]
    fn unknown_function() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let state = ObjectState::new(&ast);
        assert_eq!(
            execute(&ast, "Nope", &state, &CallContext::new("a", 1), &StubHost::default()),
            Err(ExecError::UnknownFunction("Nope".into()))
        );
    }

    #[test]
    fn callback_records_effects_only_on_commit() {
        let ast = parse_contract(corpus::BLOCKKING).unwrap();
        let p = analyze(&ast).unwrap();
        let cfg = TransformConfig { deposit_amount: 3, ..Default::default() };
        let (ast, _) = transform(&ast, &p, &cfg).unwrap();
        let state = ObjectState::new(&ast);
        let ctx = CallContext::new("alice", 100)
            .with_value(10)
            .with_data(LOCK_ID_KEY, Value::String("lock-1".into()))
            .at_block(7);
        let r = execute(&ast, "enter", &state, &ctx, &StubHost::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Committed);
        assert_eq!(
            r.effects,
            vec![HostEffect::Escrow { lock_id: "lock-1".into(), payer: Address::new("alice"), amount: 3 }]
        );
        assert_eq!(r.external_requests.len(), 1);
        assert_eq!(r.new_state.get("warrior"), state.get("warrior"));
        assert_eq!(r.new_state.get("__after_warrior"), Some(&Value::Address(Address::new("alice"))));

        let denied = StubHost { locks_held: false, ..StubHost::default() };
        let r = execute(&ast, "enter", &state, &ctx, &denied).unwrap();
        assert!(matches!(r.outcome, Outcome::AbortedRequires { .. }));
        assert!(r.effects.is_empty() && r.external_requests.is_empty());

        let poor = StubHost { balance: 12, ..StubHost::default() };
        let r = execute(&ast, "enter", &state, &ctx, &poor).unwrap();
        assert_eq!(r.outcome, Outcome::AbortedError { reason: "insufficient funds for escrow".into() });
    }

    #[test]
    fn callback_parameters_come_from_msg_data() {
        let ast = parse_contract(corpus::BLOCKKING).unwrap();
        let mut state = ObjectState::new(&ast);
        state.attrs.insert("warrior".into(), Value::Address(Address::new("carol")));
        state.attrs.insert("warriorBlock".into(), Value::Uint(13));
        let ctx = CallContext::new("oracle", 100)
            .with_data("myid", Value::Bytes32(Bytes32::ZERO))
            .with_data("result", Value::Uint(3));
        let r = execute(&ast, "_callback", &state, &ctx, &StubHost::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Committed);
        assert_eq!(r.new_state.get("king"), Some(&Value::Address(Address::new("carol"))));

        let missing = CallContext::new("oracle", 100).with_data("result", Value::Uint(3));
        let r = execute(&ast, "_callback", &state, &missing, &StubHost::default()).unwrap();
        assert!(matches!(r.outcome, Outcome::AbortedError { .. }));
        assert_eq!(r.gas_used, 0);

        let wrong_sender = ctx.clone();
        let r = execute(
            &ast,
            "_callback",
            &state,
            &CallContext { sender: Address::new("eve"), ..wrong_sender },
            &StubHost::default(),
        )
        .unwrap();
        assert!(matches!(r.outcome, Outcome::AbortedRequires { .. }));
    }

    #[test]
    fn arithmetic_faults_abort() {
        let ast = parse_contract("contract C { attr uint a; fn f() { a = a - 1; } fn g() { a = 1 % a; } }").unwrap();
        let s = ObjectState::new(&ast);
        for f in ["f", "g"] {
            let r = execute(&ast, f, &s, &CallContext::new("x", 10), &StubHost::default()).unwrap();
            assert!(matches!(r.outcome, Outcome::AbortedError { .. }), "{f}");
        }
    }

    #[test]
    fn dynamic_data_type_is_checked_on_write() {
        let ast = parse_contract("contract C { attr uint a; fn f() { a = msg.data.v; } }").unwrap();
        let s = ObjectState::new(&ast);
        let ctx = CallContext::new("x", 10).with_data("v", Value::Bool(true));
        let r = execute(&ast, "f", &s, &ctx, &StubHost::default()).unwrap();
        assert!(matches!(r.outcome, Outcome::AbortedError { .. }));
    }

    #[test]
    fn pre_write_reads_skip_own_writes() {
        let t = vec![
            TraceEntry::Read { attr: "a".into(), value: Value::Uint(0) },
            TraceEntry::Write { attr: "b".into(), value: Value::Uint(0) },
            TraceEntry::Read { attr: "b".into(), value: Value::Uint(0) },
        ];
        assert_eq!(pre_write_reads(&t), ["a"]);
    }
}
