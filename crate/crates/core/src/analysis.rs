//! Static read/write-set analysis and SDTF/CDTF classification.
//!
//! The read set of a function holds every attribute that, on at least one
//! control-flow path, is read before that path writes it. Attributes that
//! are always overwritten before being read do not depend on anything the
//! client observed, so they are left out. The write set holds every
//! attribute assigned on any path.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::ast::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Classification {
    /// Single-domain transactional function: one chain, no external calls.
    #[serde(rename = "SDTF")]
    Sdtf,
    /// Cross-domain transactional function: external calls or callbacks.
    #[serde(rename = "CDTF")]
    Cdtf,
    NonTransactional,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FunctionProfile {
    pub function: String,
    /// Attribute names in declaration order.
    pub read_set: Vec<String>,
    /// Attribute names in declaration order.
    pub write_set: Vec<String>,
    pub external_calls: Vec<String>,
    pub triggers_callback: bool,
    pub classification: Classification,
}

impl FunctionProfile {
    pub fn reads(&self, attr: &str) -> bool {
        self.read_set.iter().any(|a| a == attr)
    }

    pub fn writes(&self, attr: &str) -> bool {
        self.write_set.iter().any(|a| a == attr)
    }
}

/// Profiles of every function of a contract, in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Profiles(Vec<FunctionProfile>);

impl Profiles {
    pub fn get(&self, function: &str) -> Option<&FunctionProfile> {
        self.0.iter().find(|p| p.function == function)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FunctionProfile> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("transactional function `{0}` writes no attribute")]
    EmptyWriteSet(String),
    #[error("function `{function}` is {actual:?}, not SDTF")]
    NotSdtf { function: String, actual: Classification },
}

pub fn analyze(ast: &ContractAst) -> Result<Profiles, AnalysisError> {
    ast.functions.iter().map(|f| profile(ast, f)).collect::<Result<Vec<_>, _>>().map(Profiles)
}

fn profile(ast: &ContractAst, f: &FunctionDecl) -> Result<FunctionProfile, AnalysisError> {
    let mut sets = Sets::default();
    walk(&f.body, BTreeSet::new(), &mut sets);

    let mut external_calls: Vec<String> = f.external_queries().into_iter().map(|(svc, _)| svc.to_string()).collect();
    external_calls.sort();
    external_calls.dedup();
    let triggers_callback = !external_calls.is_empty() || f.is_callback_target();

    let classification = if !f.transactional {
        Classification::NonTransactional
    } else if triggers_callback {
        Classification::Cdtf
    } else {
        Classification::Sdtf
    };
    if f.transactional && sets.writes.is_empty() {
        return Err(AnalysisError::EmptyWriteSet(f.name.clone()));
    }
    Ok(FunctionProfile {
        function: f.name.clone(),
        read_set: in_declaration_order(ast, &sets.reads),
        write_set: in_declaration_order(ast, &sets.writes),
        external_calls,
        triggers_callback,
        classification,
    })
}

fn in_declaration_order(ast: &ContractAst, set: &BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = set.iter().cloned().collect();
    v.sort_by_key(|a| ast.attribute_index(a).unwrap_or(usize::MAX));
    v
}

#[derive(Default)]
struct Sets {
    reads: BTreeSet<String>,
    writes: BTreeSet<String>,
}

/// Walks a block given the attributes written on every path reaching it.
/// Returns the must-written set at the block's exit, or `None` when every
/// path through the block returns.
fn walk(block: &[Stmt], mut must: BTreeSet<String>, sets: &mut Sets) -> Option<BTreeSet<String>> {
    let read = |e: &Expr, must: &BTreeSet<String>, sets: &mut Sets| {
        let mut names = Vec::new();
        e.attr_reads(&mut names);
        for n in names {
            if !must.contains(&n) {
                sets.reads.insert(n);
            }
        }
    };
    for s in block {
        match &s.kind {
            StmtKind::Let { value, .. } => read(value, &must, sets),
            StmtKind::Assign { target, value } => {
                read(value, &must, sets);
                if let Target::Attr(n) = target {
                    sets.writes.insert(n.clone());
                    must.insert(n.clone());
                }
            }
            StmtKind::Requires(e) => read(e, &must, sets),
            StmtKind::Transfer { to, amount } => {
                read(to, &must, sets);
                read(amount, &must, sets);
            }
            StmtKind::Effect { args, .. } => args.iter().for_each(|a| read(a, &must, sets)),
            StmtKind::If { cond, then_block, else_block } => {
                read(cond, &must, sets);
                let t = walk(then_block, must.clone(), sets);
                let e = match else_block {
                    Some(b) => walk(b, must.clone(), sets),
                    None => Some(must.clone()),
                };
                must = match (t, e) {
                    (Some(a), Some(b)) => a.intersection(&b).cloned().collect(),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => return None,
                };
            }
            StmtKind::Return => return None,
            StmtKind::ExternalQuery { .. } | StmtKind::StartTx | StmtKind::EndTx => {}
        }
    }
    Some(must)
}

/// The attributes whose client-observed values must accompany a call to
/// an SDTF: its read set, in declaration order.
pub fn client_checkset(profile: &FunctionProfile) -> Result<Vec<String>, AnalysisError> {
    if profile.classification != Classification::Sdtf {
        return Err(AnalysisError::NotSdtf { function: profile.function.clone(), actual: profile.classification });
    }
    Ok(profile.read_set.clone())
}

/// Attributes a caller must lock before invoking `function`: its read and
/// write sets, joined with those of the contract's callback target when
/// the function issues external queries. After-image names are mapped back
/// to the attribute they stage, so the result is the same for a contract
/// before and after rewriting.
pub fn lock_footprint(ast: &ContractAst, profiles: &Profiles, function: &str) -> Vec<String> {
    let mut set = BTreeSet::new();
    let mut add = |p: &FunctionProfile| {
        for a in p.read_set.iter().chain(&p.write_set) {
            set.insert(unshadow(a).to_string());
        }
    };
    if let Some(p) = profiles.get(function) {
        add(p);
        if !p.external_calls.is_empty() {
            if let Some(cb) = ast.callback_target().and_then(|cb| profiles.get(&cb.name)) {
                add(cb);
            }
        }
    }
    in_declaration_order(ast, &set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::dsl::parse_contract;

    fn profiles(src: &str) -> Profiles {
        analyze(&parse_contract(src).unwrap()).unwrap()
    }

    #[test]
    fn update_reward() {
        let p = profiles(corpus::PUZZLE);
        let u = p.get("UpdateReward").unwrap();
        assert_eq!(u.read_set, ["owner", "solved", "reward"]);
        assert_eq!(u.write_set, ["reward"]);
        assert_eq!(u.classification, Classification::Sdtf);
        assert_eq!(client_checkset(u).unwrap(), ["owner", "solved", "reward"]);
    }

    #[test]
    fn submit_solution() {
        let p = profiles(corpus::PUZZLE);
        let s = p.get("SubmitSolution").unwrap();
        assert_eq!(s.read_set, ["solved", "reward", "diff"]);
        assert_eq!(s.write_set, ["solved", "solution"]);
        assert_eq!(s.classification, Classification::Sdtf);
    }

    #[test]
    fn constructor_is_not_transactional() {
        let p = profiles(corpus::PUZZLE);
        let c = p.get("constructor").unwrap();
        assert_eq!(c.classification, Classification::NonTransactional);
        assert!(c.read_set.is_empty());
    }

    #[test]
    fn blockking_enter_is_cdtf() {
        let p = profiles(corpus::BLOCKKING);
        let e = p.get("enter").unwrap();
        assert_eq!(e.external_calls, ["WolframAlpha"]);
        assert!(e.triggers_callback);
        assert_eq!(e.classification, Classification::Cdtf);
        assert!(matches!(client_checkset(e), Err(AnalysisError::NotSdtf { .. })));
        let cb = p.get("_callback").unwrap();
        assert!(cb.triggers_callback);
        assert_eq!(cb.classification, Classification::NonTransactional);
        assert_eq!(cb.read_set, ["warrior", "warriorBlock"]);
    }

    #[test]
    fn blockking_footprint() {
        let ast = parse_contract(corpus::BLOCKKING).unwrap();
        let p = analyze(&ast).unwrap();
        assert_eq!(
            lock_footprint(&ast, &p, "enter"),
            ["king", "warrior", "kingBlock", "warriorBlock", "warriorGold", "randomNumber"]
        );
    }

    #[test]
    fn empty_read_set_checkset() {
        let p = profiles("contract C { attr uint a; fn f() { start_tx; a = 1; end_tx; } }");
        assert_eq!(client_checkset(p.get("f").unwrap()).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn write_then_read_is_excluded() {
        let p = profiles("contract C { attr uint a; attr uint b; fn f() { start_tx; a = 1; b = a; end_tx; } }");
        assert!(p.get("f").unwrap().read_set.is_empty());
    }

    #[test]
    fn branch_union_is_conservative() {
        // `a` is written only on the then-path, so the later read may see the
        // client's value on the else-path.
        let p = profiles(
            "contract C { attr uint a; attr bool c; attr uint b; fn f() { start_tx; if (c) { a = 1; } b = a; end_tx; } }",
        );
        assert_eq!(p.get("f").unwrap().read_set, ["a", "c"]);
        let p = profiles(
            "contract C { attr uint a; attr bool c; attr uint b; fn f() { start_tx; if (c) { a = 1; } else { a = 2; } b = a; end_tx; } }",
        );
        assert_eq!(p.get("f").unwrap().read_set, ["c"]);
    }

    #[test]
    fn returning_branch_does_not_weaken_must_set() {
        let p = profiles(
            "contract C { attr uint a; attr bool c; attr uint b; fn f() { start_tx; if (c) { b = 0; return; } a = 1; b = a; end_tx; } }",
        );
        assert_eq!(p.get("f").unwrap().read_set, ["c"]);
    }

    #[test]
    fn empty_write_set_is_rejected() {
        let ast = parse_contract("contract C { attr uint a; fn f() { start_tx; requires(a == 1); end_tx; } }").unwrap();
        assert_eq!(analyze(&ast), Err(AnalysisError::EmptyWriteSet("f".into())));
    }
}
