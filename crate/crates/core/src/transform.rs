//! Rewrites transactional functions into plain functions that enforce
//! client-transaction isolation and atomicity on their own.
//!
//! * SDTFs get a prologue of freshness checks, one
//!   `requires(attr == msg.data.attr);` per read-set attribute, so a call
//!   built from stale observations aborts instead of committing.
//! * CDTF entry points must present a held lock (`lock_held`), deposit an
//!   escrow, and stage their writes in `__after_<attr>` after-images. The
//!   callback target copies the after-images into the real attributes,
//!   releases the lock and refunds the escrow. A generated
//!   `owner_recover(lock_id)` lets the owner discard staged state and claim
//!   the escrow when a callback never completes.
//!
//! Transaction markers are removed from rewritten functions, so running
//! the pass on its own output is a no-op.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{client_checkset, Classification, FunctionProfile, Profiles};
use crate::dsl::ast::*;
use crate::dsl::typecheck;
use crate::value::{Type, Value};

pub const RECOVER_FN: &str = "owner_recover";
pub const LOCK_ID_KEY: &str = "lock_id";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    /// Per function, read-set attributes that get no freshness check.
    #[serde(rename = "exclusions")]
    pub check_exclusions: BTreeMap<String, BTreeSet<String>>,
    pub deposit_amount: u64,
    pub lock_chain: String,
}

impl TransformConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FunctionReport {
    pub function: String,
    pub injected_checks: Vec<String>,
    pub generated_shadow_attrs: Vec<String>,
    pub lock_checks: usize,
    pub escrows: usize,
    pub generated_statements: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TransformReport {
    pub per_function: Vec<FunctionReport>,
}

impl TransformReport {
    pub fn injected_checks(&self) -> usize {
        self.per_function.iter().map(|f| f.injected_checks.len()).sum()
    }

    pub fn shadow_attrs(&self) -> usize {
        self.per_function.iter().map(|f| f.generated_shadow_attrs.len()).sum()
    }

    pub fn lock_checks(&self) -> usize {
        self.per_function.iter().map(|f| f.lock_checks).sum()
    }

    pub fn escrows(&self) -> usize {
        self.per_function.iter().map(|f| f.escrows).sum()
    }

    pub fn generated_statements(&self) -> usize {
        self.per_function.iter().map(|f| f.generated_statements).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.generated_statements() == 0 && self.shadow_attrs() == 0
    }

    fn entry(&mut self, function: &str) -> &mut FunctionReport {
        if let Some(i) = self.per_function.iter().position(|f| f.function == function) {
            return &mut self.per_function[i];
        }
        self.per_function.push(FunctionReport { function: function.to_string(), ..Default::default() });
        self.per_function.last_mut().expect("just pushed")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("no profile for function `{0}`")]
    MissingProfile(String),
    #[error("exclusion `{attr}` is not in the read set of `{function}`")]
    ExclusionNotInReadSet { function: String, attr: String },
    #[error("CDTF `{0}` issues external queries but the contract has no callback target")]
    NoCallbackForCdtf(String),
    #[error("contract with CDTFs needs an `address owner` attribute to receive forfeited escrow")]
    NoOwnerAttribute,
    #[error("generated name `{0}` is already declared")]
    NameCollision(String),
    #[error("multi-contract CDTF `{0}` (no external query) is not supported")]
    UnsupportedCdtf(String),
}

/// Composes the SDTF and CDTF passes.
pub fn transform(
    ast: &ContractAst,
    profiles: &Profiles,
    config: &TransformConfig,
) -> Result<(ContractAst, TransformReport), TransformError> {
    let mut report = TransformReport::default();
    let mut out = ast.clone();
    sdtf_pass(&mut out, profiles, config, &mut report)?;
    cdtf_pass(&mut out, profiles, config, &mut report)?;
    debug_assert!(
        !typecheck(ast).is_empty() || typecheck(&out).is_empty(),
        "rewrite broke typing: {:?}",
        typecheck(&out)
    );
    Ok((out, report))
}

pub fn transform_sdtf(
    ast: &ContractAst,
    profiles: &Profiles,
    config: &TransformConfig,
) -> Result<ContractAst, TransformError> {
    let mut out = ast.clone();
    sdtf_pass(&mut out, profiles, config, &mut TransformReport::default())?;
    Ok(out)
}

pub fn transform_cdtf(
    ast: &ContractAst,
    profiles: &Profiles,
    config: &TransformConfig,
) -> Result<ContractAst, TransformError> {
    let mut out = ast.clone();
    cdtf_pass(&mut out, profiles, config, &mut TransformReport::default())?;
    Ok(out)
}

fn profile_of<'a>(profiles: &'a Profiles, f: &str) -> Result<&'a FunctionProfile, TransformError> {
    profiles.get(f).ok_or_else(|| TransformError::MissingProfile(f.to_string()))
}

fn validate_exclusions(profiles: &Profiles, config: &TransformConfig) -> Result<(), TransformError> {
    for (f, attrs) in &config.check_exclusions {
        let p = profile_of(profiles, f)?;
        if let Some(a) = attrs.iter().find(|a| !p.reads(a)) {
            return Err(TransformError::ExclusionNotInReadSet { function: f.clone(), attr: a.clone() });
        }
    }
    Ok(())
}

fn strip_markers(body: &mut Vec<Stmt>) {
    body.retain(|s| !matches!(s.kind, StmtKind::StartTx | StmtKind::EndTx));
}

fn freshness_check(attr: &str) -> Stmt {
    Stmt::new(StmtKind::Requires(Expr::binary(BinOp::Eq, Expr::attr(attr), Expr::msg_data(attr))), Loc::default())
}

fn sdtf_pass(
    ast: &mut ContractAst,
    profiles: &Profiles,
    config: &TransformConfig,
    report: &mut TransformReport,
) -> Result<(), TransformError> {
    validate_exclusions(profiles, config)?;
    let names: Vec<String> = ast.functions.iter().map(|f| f.name.clone()).collect();
    for name in names {
        let p = profile_of(profiles, &name)?;
        if p.classification != Classification::Sdtf {
            continue;
        }
        let excluded = config.check_exclusions.get(&name);
        let checks: Vec<String> = client_checkset(p)
            .expect("classification checked above")
            .into_iter()
            .filter(|a| excluded.is_none_or(|ex| !ex.contains(a)))
            .collect();
        let f = ast.function_mut(&name).expect("function exists");
        strip_markers(&mut f.body);
        f.transactional = false;
        let prologue: Vec<Stmt> = checks.iter().map(|a| freshness_check(a)).collect();
        f.body.splice(0..0, prologue);
        let r = report.entry(&name);
        r.generated_statements += checks.len();
        r.injected_checks = checks;
    }
    Ok(())
}

fn cdtf_pass(
    ast: &mut ContractAst,
    profiles: &Profiles,
    config: &TransformConfig,
    report: &mut TransformReport,
) -> Result<(), TransformError> {
    let entries: Vec<&FunctionProfile> = ast
        .functions
        .iter()
        .filter_map(|f| profiles.get(&f.name))
        .filter(|p| p.classification == Classification::Cdtf)
        .collect();
    if entries.is_empty() {
        return Ok(());
    }
    let callback = ast.callback_target().map(|f| f.name.clone());

    // A transactional callback target is the tail of some entry's span; it
    // is rewritten as the callback, not as an entry.
    let mut entry_names = Vec::new();
    for p in &entries {
        if Some(&p.function) == callback.as_ref() && p.external_calls.is_empty() {
            continue;
        }
        if p.external_calls.is_empty() {
            return Err(TransformError::UnsupportedCdtf(p.function.clone()));
        }
        if callback.is_none() {
            return Err(TransformError::NoCallbackForCdtf(p.function.clone()));
        }
        entry_names.push(p.function.clone());
    }
    let Some(callback) = callback else {
        // only callback targets were marked; nothing stages state
        return Ok(());
    };
    if !ast.attribute(OWNER_ATTR).is_some_and(|a| a.ty == Type::Address) {
        return Err(TransformError::NoOwnerAttribute);
    }
    if ast.function(RECOVER_FN).is_some() {
        return Err(TransformError::NameCollision(RECOVER_FN.to_string()));
    }

    // Attributes staged through after-images, in declaration order.
    let mut staged: Vec<String> = Vec::new();
    for name in &entry_names {
        for a in &profile_of(profiles, name)?.write_set {
            if !staged.contains(a) {
                staged.push(a.clone());
            }
        }
    }
    staged.sort_by_key(|a| ast.attribute_index(a));
    for a in &staged {
        let shadow = shadow_name(a);
        if ast.attribute(&shadow).is_some() {
            return Err(TransformError::NameCollision(shadow));
        }
    }

    for name in &entry_names {
        let writes = profile_of(profiles, name)?.write_set.clone();
        let f = ast.function_mut(name).expect("function exists");
        strip_markers(&mut f.body);
        f.transactional = false;
        for s in f.body.iter_mut() {
            redirect_stmt(s, &writes);
        }
        let mut prologue = vec![
            Stmt::new(
                StmtKind::Requires(Expr::new(
                    ExprKind::Call(Builtin::LockHeld, vec![Expr::msg_data(LOCK_ID_KEY)]),
                    Loc::default(),
                )),
                Loc::default(),
            ),
            Stmt::new(
                StmtKind::Effect {
                    builtin: Builtin::Escrow,
                    args: vec![Expr::new(ExprKind::Literal(Value::Uint(config.deposit_amount)), Loc::default())],
                },
                Loc::default(),
            ),
        ];
        // seed after-images so reads of already-staged attributes see staged values
        prologue.extend(writes.iter().map(|a| copy(&shadow_name(a), a)));
        let generated = prologue.len();
        f.body.splice(0..0, prologue);
        let r = report.entry(name);
        r.lock_checks += 1;
        r.escrows += 1;
        r.generated_statements += generated;
        r.generated_shadow_attrs = writes.iter().map(|a| shadow_name(a)).collect();
    }

    let cb = ast.function_mut(&callback).expect("callback exists");
    strip_markers(&mut cb.body);
    cb.transactional = false;
    let copies: Vec<Stmt> = staged.iter().map(|a| copy(a, &shadow_name(a))).collect();
    let n_copies = copies.len();
    // the first statement is the oracle sender check
    cb.body.splice(1..1, copies);
    let n_epilogues = add_epilogue(&mut cb.body);
    report.entry(&callback).generated_statements += n_copies + 2 * n_epilogues;

    let owner_loc = Loc::default();
    let mut recover_body = vec![Stmt::new(
        StmtKind::Requires(Expr::binary(
            BinOp::Eq,
            Expr::new(ExprKind::Implicit(Implicit::MsgSender), owner_loc),
            Expr::attr(OWNER_ATTR),
        )),
        owner_loc,
    )];
    recover_body.extend(staged.iter().map(|a| copy(&shadow_name(a), a)));
    recover_body.push(Stmt::new(
        StmtKind::Effect {
            builtin: Builtin::LockForfeit,
            args: vec![Expr::new(ExprKind::LocalRead(LOCK_ID_KEY.to_string()), owner_loc)],
        },
        owner_loc,
    ));
    report.entry(RECOVER_FN).generated_statements += recover_body.len();
    ast.functions.push(FunctionDecl {
        name: RECOVER_FN.to_string(),
        params: vec![Param { name: LOCK_ID_KEY.to_string(), ty: Type::String, loc: owner_loc }],
        body: recover_body,
        transactional: false,
        loc: owner_loc,
    });

    for a in &staged {
        let ty = ast.attribute(a).expect("staged attribute is declared").ty;
        ast.attributes.push(AttributeDecl { name: shadow_name(a), ty, loc: Loc::default() });
    }
    Ok(())
}

pub const OWNER_ATTR: &str = "owner";

fn copy(to: &str, from: &str) -> Stmt {
    Stmt::new(StmtKind::Assign { target: Target::Attr(to.to_string()), value: Expr::attr(from) }, Loc::default())
}

fn release_and_refund() -> [Stmt; 2] {
    [
        Stmt::new(
            StmtKind::Effect { builtin: Builtin::LockRelease, args: vec![Expr::msg_data(LOCK_ID_KEY)] },
            Loc::default(),
        ),
        Stmt::new(StmtKind::Effect { builtin: Builtin::EscrowRefund, args: vec![] }, Loc::default()),
    ]
}

/// Appends release/refund at the end of `body` and in front of every
/// `return`. Returns how many copies were inserted.
fn add_epilogue(body: &mut Vec<Stmt>) -> usize {
    fn before_returns(block: &mut Vec<Stmt>) -> usize {
        let mut n = 0;
        let mut i = 0;
        while i < block.len() {
            match &mut block[i].kind {
                StmtKind::Return => {
                    block.splice(i..i, release_and_refund());
                    n += 1;
                    i += 3;
                    continue;
                }
                StmtKind::If { then_block, else_block, .. } => {
                    n += before_returns(then_block);
                    if let Some(b) = else_block {
                        n += before_returns(b);
                    }
                }
                _ => {}
            }
            i += 1;
        }
        n
    }
    let mut n = before_returns(body);
    if !matches!(body.last().map(|s| &s.kind), Some(StmtKind::Return)) {
        body.extend(release_and_refund());
        n += 1;
    }
    n
}

fn redirect_stmt(s: &mut Stmt, staged: &[String]) {
    let is_staged = |n: &str| staged.iter().any(|a| a == n);
    match &mut s.kind {
        StmtKind::Let { value, .. } | StmtKind::Requires(value) => redirect_expr(value, staged),
        StmtKind::Assign { target, value } => {
            redirect_expr(value, staged);
            if let Target::Attr(n) = target {
                if is_staged(n) {
                    *n = shadow_name(n);
                }
            }
        }
        StmtKind::If { cond, then_block, else_block } => {
            redirect_expr(cond, staged);
            then_block.iter_mut().for_each(|s| redirect_stmt(s, staged));
            if let Some(b) = else_block {
                b.iter_mut().for_each(|s| redirect_stmt(s, staged));
            }
        }
        StmtKind::Transfer { to, amount } => {
            redirect_expr(to, staged);
            redirect_expr(amount, staged);
        }
        StmtKind::Effect { args, .. } => args.iter_mut().for_each(|a| redirect_expr(a, staged)),
        StmtKind::ExternalQuery { .. } | StmtKind::Return | StmtKind::StartTx | StmtKind::EndTx => {}
    }
}

fn redirect_expr(e: &mut Expr, staged: &[String]) {
    match &mut e.kind {
        ExprKind::AttrRead(n) if staged.iter().any(|a| a == n) => *n = shadow_name(n),
        ExprKind::Binary(_, l, r) => {
            redirect_expr(l, staged);
            redirect_expr(r, staged);
        }
        ExprKind::Unary(_, x) | ExprKind::Hash(x) => redirect_expr(x, staged),
        ExprKind::Call(_, args) => args.iter_mut().for_each(|a| redirect_expr(a, staged)),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze;
    use crate::corpus;
    use crate::dsl::{parse_contract, print_contract};

    fn puzzle_config() -> TransformConfig {
        let mut c = TransformConfig::default();
        c.check_exclusions.insert("UpdateReward".into(), ["owner".to_string()].into());
        c.check_exclusions.insert("SubmitSolution".into(), ["diff".to_string()].into());
        c
    }

    fn run(src: &str, config: &TransformConfig) -> (ContractAst, TransformReport) {
        let ast = parse_contract(src).unwrap();
        let p = analyze(&ast).unwrap();
        transform(&ast, &p, config).unwrap()
    }

    #[test]
    fn puzzle_checks() {
        let (out, report) = run(corpus::PUZZLE, &puzzle_config());
        let printed = print_contract(&out);
        let update = printed.split("fn UpdateReward").nth(1).unwrap();
        assert!(update.starts_with(
            "() {\n        requires(solved == msg.data.solved);\n        requires(reward == msg.data.reward);\n        requires(msg.sender == owner);"
        ));
        assert!(!printed.contains("start_tx") && !printed.contains("end_tx"));
        assert_eq!(report.injected_checks(), 4);
        assert_eq!(report.shadow_attrs(), 0);
        let submit = report.per_function.iter().find(|f| f.function == "SubmitSolution").unwrap();
        assert_eq!(submit.injected_checks, ["solved", "reward"]);
        assert!(typecheck(&out).is_empty());
    }

    #[test]
    fn no_exclusions_checks_whole_read_set() {
        let (_, report) = run(corpus::PUZZLE, &TransformConfig::default());
        assert_eq!(report.injected_checks(), 6);
    }

    #[test]
    fn empty_prologue_only_removes_markers() {
        let src = "contract C { attr uint a; fn f() { start_tx; a = 1; end_tx; } fn g() { a = 2; } }";
        let (out, report) = run(src, &TransformConfig::default());
        let orig = parse_contract(src).unwrap();
        assert_eq!(out.functions[0].body, orig.functions[0].body[1..2].to_vec());
        assert_eq!(out.functions[1], orig.functions[1]);
        assert_eq!(report.injected_checks(), 0);
    }

    #[test]
    fn exclusion_errors() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let p = analyze(&ast).unwrap();
        let mut c = TransformConfig::default();
        c.check_exclusions.insert("UpdateReward".into(), ["diff".to_string()].into());
        assert!(matches!(transform(&ast, &p, &c), Err(TransformError::ExclusionNotInReadSet { .. })));
        let mut c = TransformConfig::default();
        c.check_exclusions.insert("Nope".into(), BTreeSet::new());
        assert_eq!(transform(&ast, &p, &c).unwrap_err(), TransformError::MissingProfile("Nope".into()));
    }

    #[test]
    fn missing_profile() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        assert!(matches!(
            transform_sdtf(&ast, &Profiles::default(), &TransformConfig::default()),
            Err(TransformError::MissingProfile(_))
        ));
    }

    #[test]
    fn blockking_rewrite() {
        let c = TransformConfig { deposit_amount: 5, ..Default::default() };
        let (out, report) = run(corpus::BLOCKKING, &c);
        assert_eq!(report.shadow_attrs(), 3);
        assert_eq!(report.lock_checks(), 1);
        assert_eq!(report.escrows(), 1);
        let shadows: Vec<_> =
            out.attributes.iter().filter(|a| a.name.starts_with(SHADOW_PREFIX)).map(|a| a.name.as_str()).collect();
        assert_eq!(shadows, ["__after_warrior", "__after_warriorBlock", "__after_warriorGold"]);
        let printed = print_contract(&out);
        assert!(printed.contains("requires(lock_held(msg.data.lock_id));\n        escrow(5);"));
        assert!(printed.contains("__after_warrior = msg.sender;"));
        let cb = printed.split("fn _callback").nth(1).unwrap();
        let copy_at = cb.find("warrior = __after_warrior;").unwrap();
        assert!(copy_at < cb.find("if (").unwrap(), "copies precede the king comparison");
        assert!(cb.contains("lock_release(msg.data.lock_id);\n        escrow_refund();\n    }"));
        assert!(printed.contains("fn owner_recover(string lock_id)"));
        assert!(typecheck(&out).is_empty(), "{:?}", typecheck(&out));
        assert_eq!(parse_contract(&printed).unwrap(), out);
    }

    #[test]
    fn no_cdtf_is_identity() {
        let ast = parse_contract(corpus::PUZZLE).unwrap();
        let p = analyze(&ast).unwrap();
        assert_eq!(transform_cdtf(&ast, &p, &TransformConfig::default()).unwrap(), ast);
    }

    #[test]
    fn cdtf_without_callback() {
        let src = r#"contract C { attr address owner; attr uint a; fn f() { start_tx; a = 1; external_query("s", "q"); end_tx; } }"#;
        let ast = parse_contract(src).unwrap();
        let p = analyze(&ast).unwrap();
        assert_eq!(
            transform(&ast, &p, &TransformConfig::default()).unwrap_err(),
            TransformError::NoCallbackForCdtf("f".into())
        );
    }

    #[test]
    fn cdtf_needs_owner() {
        let src = corpus::BLOCKKING.replace("attr address owner;", "").replace("owner = msg.sender;", "");
        let ast = parse_contract(&src).unwrap();
        let p = analyze(&ast).unwrap();
        assert_eq!(transform(&ast, &p, &TransformConfig::default()).unwrap_err(), TransformError::NoOwnerAttribute);
    }

    #[test]
    fn epilogue_precedes_returns() {
        let src = r#"contract C { attr address owner; attr uint a; attr uint b;
            fn f() { start_tx; a = 1; external_query("s", "q"); end_tx; }
            fn cb(uint result) { requires(msg.sender == oracle_address()); if (result == 0) { return; } b = a; } }"#;
        let (out, report) = run(src, &TransformConfig::default());
        let cb = out.function("cb").unwrap();
        let printed = print_contract(&out);
        assert!(printed.contains("lock_release(msg.data.lock_id);\n            escrow_refund();\n            return;"));
        assert!(matches!(cb.body.last().unwrap().kind, StmtKind::Effect { builtin: Builtin::EscrowRefund, .. }));
        let r = report.per_function.iter().find(|f| f.function == "cb").unwrap();
        assert_eq!(r.generated_statements, 1 + 2 * 2);
    }

    #[test]
    fn transforming_output_changes_nothing() {
        for (_, src) in corpus::CONTRACTS {
            let (once, _) = run(src, &TransformConfig::default());
            let p = analyze(&once).unwrap();
            let (twice, report) = transform(&once, &p, &TransformConfig::default()).unwrap();
            assert_eq!(twice, once);
            assert!(report.is_empty());
        }
    }

    #[test]
    fn config_toml() {
        let c = TransformConfig::from_toml(
            "deposit_amount = 3\nlock_chain = \"locks\"\n[exclusions]\nUpdateReward = [\"owner\"]\n",
        )
        .unwrap();
        assert_eq!(c.deposit_amount, 3);
        assert_eq!(c.lock_chain, "locks");
        assert!(c.check_exclusions["UpdateReward"].contains("owner"));
    }
}
