//! Seeded generation of object states and call contexts, used to exercise
//! the interpreter on inputs no scenario would reach.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::ast::*;
use crate::interp::{CallContext, ObjectState};
use crate::transform::LOCK_ID_KEY;
use crate::value::{Address, Bytes32, Type, Value};

const ADDRESSES: [&str; 6] = ["alice", "bob", "carol", "owner", "oracle", "0x0"];

pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn uint(&mut self, max: u64) -> u64 {
        self.rng.gen_range(0..=max)
    }

    /// Small values dominate so comparisons and `%` hit interesting cases.
    pub fn value(&mut self, ty: Type) -> Value {
        let r = &mut self.rng;
        match ty {
            Type::Address => Value::Address(Address::new(*ADDRESSES.choose(r).expect("nonempty"))),
            Type::Bool => Value::Bool(r.gen()),
            Type::Uint => Value::Uint(if r.gen_bool(0.9) { r.gen_range(0..=12) } else { r.gen() }),
            Type::Bytes32 => Value::Bytes32(match r.gen_range(0..4) {
                0 => Bytes32::ZERO,
                1 => Bytes32::MAX,
                _ => Bytes32(r.gen()),
            }),
            Type::String => Value::String(format!("lock-{}", r.gen_range(1..=3))),
        }
    }

    pub fn state(&mut self, ast: &ContractAst) -> ObjectState {
        let mut s = ObjectState::new(ast);
        for a in &ast.attributes {
            s.attrs.insert(a.name.clone(), self.value(a.ty));
        }
        s.balance = self.uint(20);
        s
    }

    /// A context for `function` carrying a value for every parameter and
    /// every `msg.data` key the body mentions. With `fresh`, keys named
    /// after attributes echo the state, as an up-to-date client would send.
    pub fn context(
        &mut self,
        ast: &ContractAst,
        function: &str,
        state: &ObjectState,
        fresh: bool,
        budget: u64,
    ) -> CallContext {
        let sender = self.value(Type::Address);
        let Value::Address(sender) = sender else { unreachable!("address sampled") };
        let mut ctx = CallContext::new(sender.0, budget).with_value(self.uint(6));
        ctx.block_number = self.uint(30);
        let Some(f) = ast.function(function) else { return ctx };
        for p in &f.params {
            ctx.data.insert(p.name.clone(), self.value(p.ty));
        }
        let mut keys = Vec::new();
        visit_stmts(&f.body, &mut |s| stmt_data_keys(s, &mut keys));
        for k in keys {
            let v = match (ast.attribute(&k), state.get(&k)) {
                (Some(_), Some(v)) if fresh => v.clone(),
                (Some(a), _) => self.value(a.ty),
                _ if k == LOCK_ID_KEY => self.value(Type::String),
                _ if k == "payload" => self.value(Type::Bytes32),
                _ => self.value(Type::Uint),
            };
            ctx.data.insert(k, v);
        }
        ctx
    }
}

fn stmt_data_keys(s: &Stmt, out: &mut Vec<String>) {
    let mut visit = |e: &Expr| expr_data_keys(e, out);
    match &s.kind {
        StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } | StmtKind::Requires(value) => visit(value),
        StmtKind::If { cond, .. } => visit(cond),
        StmtKind::Transfer { to, amount } => {
            visit(to);
            visit(amount);
        }
        StmtKind::Effect { args, .. } => args.iter().for_each(visit),
        StmtKind::ExternalQuery { .. } | StmtKind::Return | StmtKind::StartTx | StmtKind::EndTx => {}
    }
}

fn expr_data_keys(e: &Expr, out: &mut Vec<String>) {
    match &e.kind {
        ExprKind::Implicit(Implicit::MsgData(k)) => {
            if !out.contains(k) {
                out.push(k.clone());
            }
        }
        ExprKind::Binary(_, l, r) => {
            expr_data_keys(l, out);
            expr_data_keys(r, out);
        }
        ExprKind::Unary(_, x) | ExprKind::Hash(x) => expr_data_keys(x, out),
        ExprKind::Call(_, args) => args.iter().for_each(|a| expr_data_keys(a, out)),
        ExprKind::AttrRead(_) | ExprKind::LocalRead(_) | ExprKind::Implicit(_) | ExprKind::Literal(_) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::dsl::parse_contract;

    #[test]
    fn context_covers_data_keys() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let mut s = Sampler::new(1);
        let st = s.state(&ast);
        let ctx = s.context(&ast, "constructor", &st, false, 10);
        assert!(matches!(ctx.data.get("diff"), Some(Value::Bytes32(_))));
        let ctx = s.context(&ast, "SubmitSolution", &st, false, 10);
        assert!(matches!(ctx.data.get("payload"), Some(Value::Bytes32(_))));
    }

    #[test]
    fn fresh_context_echoes_state() {
        let ast = parse_contract(
            "contract C { attr uint a; fn f() { start_tx; requires(a == msg.data.a); a = 1; end_tx; } }",
        )
        .unwrap();
        let mut s = Sampler::new(2);
        let st = s.state(&ast);
        let ctx = s.context(&ast, "f", &st, true, 10);
        assert_eq!(ctx.data.get("a"), st.get("a"));
    }
}
