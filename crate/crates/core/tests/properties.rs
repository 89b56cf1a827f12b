use proptest::prelude::*;

use txsc_core::analysis::{analyze, Classification};
use txsc_core::corpus;
use txsc_core::dsl::ast::{BinOp, ContractAst, Expr, ExprKind, Loc, StmtKind, UnOp};
use txsc_core::dsl::{parse_contract, print_contract};
use txsc_core::interp::{execute, pre_write_reads, ExecResult, Outcome, StubHost, TraceEntry};
use txsc_core::sample::Sampler;
use txsc_core::transform::{transform, TransformConfig};
use txsc_core::value::Value;

const OPS: [BinOp; 10] =
    [BinOp::Or, BinOp::And, BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Gt, BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Rem];

fn e(kind: ExprKind) -> Expr {
    Expr::new(kind, Loc::default())
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u64..1000).prop_map(|n| e(ExprKind::Literal(Value::Uint(n)))),
        any::<bool>().prop_map(|b| e(ExprKind::Literal(Value::Bool(b)))),
        prop::sample::select(vec!["a", "b", "c"]).prop_map(Expr::attr),
        prop::sample::select(vec!["x", "y"]).prop_map(Expr::msg_data),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (prop::sample::select(OPS.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            inner.clone().prop_map(|x| e(ExprKind::Unary(UnOp::Not, Box::new(x)))),
            inner.prop_map(|x| e(ExprKind::Hash(Box::new(x)))),
        ]
    })
}

fn corpus_contracts() -> Vec<ContractAst> {
    let mut out = Vec::new();
    let mut cfg = TransformConfig { deposit_amount: 2, lock_chain: "locks".into(), ..Default::default() };
    cfg.check_exclusions.insert("UpdateReward".into(), ["owner".to_string()].into());
    cfg.check_exclusions.insert("SubmitSolution".into(), ["diff".to_string()].into());
    for (_, src) in corpus::CONTRACTS {
        let ast = parse_contract(src).unwrap();
        let p = analyze(&ast).unwrap();
        let mut own = cfg.clone();
        own.check_exclusions.retain(|f, _| ast.function(f).is_some());
        out.push(transform(&ast, &p, &own).unwrap().0);
        out.push(ast);
    }
    out
}

fn run(ast: &ContractAst, f: &str, seed: u64, budget: u64) -> (ExecResult, txsc_core::interp::ObjectState) {
    let mut s = Sampler::new(seed);
    let state = s.state(ast);
    let ctx = s.context(ast, f, &state, seed.is_multiple_of(2), budget);
    (execute(ast, f, &state, &ctx, &StubHost::default()).unwrap(), state)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_expressions_parse_back(x in expr()) {
        let src = format!(
            "contract C {{ attr uint a; attr uint b; attr bool c; fn f() {{ requires({}); }} }}",
            txsc_core::dsl::print_expr(&x)
        );
        let ast = parse_contract(&src).unwrap();
        let StmtKind::Requires(parsed) = &ast.functions[0].body[0].kind else { panic!("not a requires") };
        prop_assert_eq!(parsed, &x);
    }

    #[test]
    fn aborts_leave_state_untouched(seed in any::<u64>(), budget in 0u64..12) {
        for ast in corpus_contracts() {
            for f in &ast.functions {
                let (r, pre) = run(&ast, &f.name, seed, budget);
                prop_assert!(r.gas_used <= budget);
                if !r.outcome.is_committed() {
                    prop_assert_eq!(&r.new_state, &pre);
                    prop_assert!(r.transfers.is_empty() && r.effects.is_empty() && r.external_requests.is_empty());
                }
            }
        }
    }

    #[test]
    fn more_gas_never_changes_a_finished_run(seed in any::<u64>(), budget in 0u64..12, extra in 1u64..20) {
        for ast in corpus_contracts() {
            for f in &ast.functions {
                let (low, _) = run(&ast, &f.name, seed, budget);
                let (high, _) = run(&ast, &f.name, seed, budget + extra);
                if low.outcome == Outcome::AbortedOutOfGas {
                    prop_assert_eq!(low.gas_used, budget);
                    prop_assert!(high.gas_used >= low.gas_used);
                } else {
                    prop_assert_eq!(&low, &high);
                }
            }
        }
    }

    #[test]
    fn traces_respect_static_sets(seed in any::<u64>()) {
        for ast in corpus_contracts() {
            let profiles = analyze(&ast).unwrap();
            for f in &ast.functions {
                let p = profiles.get(&f.name).unwrap();
                let (r, _) = run(&ast, &f.name, seed, 100);
                for a in pre_write_reads(&r.trace) {
                    prop_assert!(p.reads(a), "{} reads {}", f.name, a);
                }
                for t in &r.trace {
                    if let TraceEntry::Write { attr, .. } = t {
                        prop_assert!(p.writes(attr), "{} writes {}", f.name, attr);
                    }
                }
            }
        }
    }

    #[test]
    fn sdtf_rewrite_preserves_fresh_calls(seed in any::<u64>()) {
        let original = parse_contract(corpus::PUZZLE).unwrap();
        let profiles = analyze(&original).unwrap();
        let (rewritten, _) = transform(&original, &profiles, &TransformConfig::default()).unwrap();
        for p in profiles.iter().filter(|p| p.classification == Classification::Sdtf) {
            let mut s = Sampler::new(seed);
            let state = s.state(&original);
            let ctx = s.context(&rewritten, &p.function, &state, true, 100);
            let a = execute(&original, &p.function, &state, &ctx, &StubHost::default()).unwrap();
            let b = execute(&rewritten, &p.function, &state, &ctx, &StubHost::default()).unwrap();
            prop_assert_eq!(&a.outcome, &b.outcome);
            prop_assert_eq!(&a.new_state, &b.new_state);
            prop_assert_eq!(&a.transfers, &b.transfers);
            prop_assert_eq!(a.gas_used + p.read_set.len() as u64, b.gas_used);
        }
    }

    #[test]
    fn cdtf_rewrite_preserves_serial_entry_and_callback(seed in any::<u64>(), result in 0u64..10) {
        let original = parse_contract(corpus::BLOCKKING).unwrap();
        let profiles = analyze(&original).unwrap();
        let cfg = TransformConfig { deposit_amount: 1, lock_chain: "locks".into(), ..Default::default() };
        let (rewritten, _) = transform(&original, &profiles, &cfg).unwrap();
        let host = StubHost::default();

        let mut s = Sampler::new(seed);
        let mut state = s.state(&original);
        state.attrs.insert("owner".into(), Value::Address("owner".into()));
        let mut ctx = s.context(&rewritten, "enter", &state, false, 100);
        ctx.value = ctx.value.max(1);
        let mut cb = txsc_core::interp::CallContext::new("oracle", 100);
        cb.data = ctx.data.clone();
        cb.data.insert("myid".into(), Value::Bytes32(txsc_core::value::Bytes32::ZERO));
        cb.data.insert("result".into(), Value::Uint(result));

        let serial = |ast: &ContractAst, start| {
            let e = execute(ast, "enter", &start, &ctx, &host).unwrap();
            prop_assert!(e.outcome.is_committed());
            let c = execute(ast, "_callback", &e.new_state, &cb, &host).unwrap();
            prop_assert!(c.outcome.is_committed());
            Ok(c.new_state)
        };
        let a = serial(&original, state.clone())?;
        let mut shadowed = state.clone();
        for attr in &rewritten.attributes {
            shadowed.attrs.entry(attr.name.clone()).or_insert_with(|| attr.ty.default_value());
        }
        let b = serial(&rewritten, shadowed)?;
        for (k, v) in &a.attrs {
            prop_assert_eq!(Some(v), b.attrs.get(k), "{}", k);
        }
        prop_assert_eq!(a.balance, b.balance);
    }
}

#[test]
fn corpus_round_trips_through_printer() {
    for ast in corpus_contracts() {
        let printed = print_contract(&ast);
        let again = parse_contract(&printed).unwrap();
        assert_eq!(again, ast);
        assert_eq!(print_contract(&again), printed);
    }
}
