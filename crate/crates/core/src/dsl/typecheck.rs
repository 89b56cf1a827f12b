use std::fmt;

use serde::Serialize;

use super::ast::*;
use crate::value::Type;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Diagnostic {
    TypeMismatch { loc: Loc, expected: String, found: String },
    UnresolvedName { loc: Loc, name: String },
    MultipleExternalQueries { loc: Loc, function: String },
}

impl Diagnostic {
    pub fn loc(&self) -> Loc {
        match self {
            Diagnostic::TypeMismatch { loc, .. }
            | Diagnostic::UnresolvedName { loc, .. }
            | Diagnostic::MultipleExternalQueries { loc, .. } => *loc,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::TypeMismatch { loc, expected, found } => {
                write!(f, "{loc}: type mismatch: expected {expected}, found {found}")
            }
            Diagnostic::UnresolvedName { loc, name } => write!(f, "{loc}: unresolved name `{name}`"),
            Diagnostic::MultipleExternalQueries { loc, function } => {
                write!(f, "{loc}: function `{function}` issues more than one external_query")
            }
        }
    }
}

/// Static type of an expression. `Dynamic` is the type of `msg.data.<key>`
/// entries, which are only known at run time and unify with anything.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Known(Type),
    Dynamic,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Known(t) => write!(f, "{t}"),
            Ty::Dynamic => f.write_str("msg.data entry"),
        }
    }
}

impl Ty {
    fn fits(self, want: Type) -> bool {
        match self {
            Ty::Known(t) => t == want,
            Ty::Dynamic => true,
        }
    }
}

pub fn typecheck(ast: &ContractAst) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for f in &ast.functions {
        let mut cx = Checker { ast, scopes: vec![Vec::new()], diags: &mut diags };
        for p in &f.params {
            cx.scopes[0].push((p.name.clone(), Ty::Known(p.ty)));
        }
        cx.block(&f.body);
        let queries: Vec<&Stmt> = {
            let mut v = Vec::new();
            visit_stmts(&f.body, &mut |s| {
                if matches!(s.kind, StmtKind::ExternalQuery { .. }) {
                    v.push(s);
                }
            });
            v
        };
        if let Some(second) = queries.get(1) {
            diags.push(Diagnostic::MultipleExternalQueries { loc: second.loc, function: f.name.clone() });
        }
    }
    diags
}

struct Checker<'a> {
    ast: &'a ContractAst,
    scopes: Vec<Vec<(String, Ty)>>,
    diags: &'a mut Vec<Diagnostic>,
}

impl Checker<'_> {
    fn lookup_local(&self, name: &str) -> Option<Ty> {
        self.scopes.iter().rev().flat_map(|s| s.iter().rev()).find(|(n, _)| n == name).map(|(_, t)| *t)
    }

    fn mismatch(&mut self, loc: Loc, expected: impl Into<String>, found: Ty) {
        self.diags.push(Diagnostic::TypeMismatch { loc, expected: expected.into(), found: found.to_string() });
    }

    fn want(&mut self, e: &Expr, t: Type) {
        if let Some(found) = self.expr(e) {
            if !found.fits(t) {
                self.mismatch(e.loc, t.keyword(), found);
            }
        }
    }

    fn block(&mut self, b: &[Stmt]) {
        self.scopes.push(Vec::new());
        for s in b {
            self.stmt(s);
        }
        self.scopes.pop();
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Let { name, value } => {
                let t = self.expr(value).unwrap_or(Ty::Dynamic);
                self.scopes.last_mut().expect("scope").push((name.clone(), t));
            }
            StmtKind::Assign { target, value } => {
                let want = match target {
                    Target::Attr(n) => match self.ast.attribute(n) {
                        Some(a) => Some(Ty::Known(a.ty)),
                        None => {
                            self.diags.push(Diagnostic::UnresolvedName { loc: s.loc, name: n.clone() });
                            None
                        }
                    },
                    Target::Local(n) => match self.lookup_local(n) {
                        Some(t) => Some(t),
                        None => {
                            self.diags.push(Diagnostic::UnresolvedName { loc: s.loc, name: n.clone() });
                            None
                        }
                    },
                };
                let found = self.expr(value);
                if let (Some(Ty::Known(w)), Some(f)) = (want, found) {
                    if !f.fits(w) {
                        self.mismatch(value.loc, w.keyword(), f);
                    }
                }
            }
            StmtKind::Requires(e) => self.want(e, Type::Bool),
            StmtKind::If { cond, then_block, else_block } => {
                self.want(cond, Type::Bool);
                self.block(then_block);
                if let Some(b) = else_block {
                    self.block(b);
                }
            }
            StmtKind::Transfer { to, amount } => {
                self.want(to, Type::Address);
                self.want(amount, Type::Uint);
            }
            StmtKind::Effect { builtin, args } => match builtin {
                Builtin::Escrow => self.want(&args[0], Type::Uint),
                Builtin::LockRelease | Builtin::LockForfeit => self.want(&args[0], Type::String),
                _ => {}
            },
            StmtKind::ExternalQuery { .. } | StmtKind::Return | StmtKind::StartTx | StmtKind::EndTx => {}
        }
    }

    /// Returns `None` when the expression already produced a diagnostic.
    fn expr(&mut self, e: &Expr) -> Option<Ty> {
        Some(match &e.kind {
            ExprKind::AttrRead(n) => match self.ast.attribute(n) {
                Some(a) => Ty::Known(a.ty),
                None => {
                    self.diags.push(Diagnostic::UnresolvedName { loc: e.loc, name: n.clone() });
                    return None;
                }
            },
            ExprKind::LocalRead(n) => match self.lookup_local(n) {
                Some(t) => t,
                None => {
                    self.diags.push(Diagnostic::UnresolvedName { loc: e.loc, name: n.clone() });
                    return None;
                }
            },
            ExprKind::Implicit(i) => match i {
                Implicit::MsgSender => Ty::Known(Type::Address),
                Implicit::MsgValue | Implicit::BlockNumber => Ty::Known(Type::Uint),
                Implicit::MsgData(_) => Ty::Dynamic,
            },
            ExprKind::Literal(v) => Ty::Known(v.ty()),
            ExprKind::Hash(x) => {
                self.expr(x)?;
                Ty::Known(Type::Bytes32)
            }
            ExprKind::Unary(UnOp::Not, x) => {
                self.want(x, Type::Bool);
                Ty::Known(Type::Bool)
            }
            ExprKind::Call(b, args) => match b {
                Builtin::LockHeld => {
                    self.want(&args[0], Type::String);
                    Ty::Known(Type::Bool)
                }
                Builtin::OracleAddress => Ty::Known(Type::Address),
                _ => unreachable!("effect builtins are statements"),
            },
            ExprKind::Binary(op, l, r) => {
                let lt = self.expr(l);
                let rt = self.expr(r);
                let (lt, rt) = (lt?, rt?);
                match op {
                    BinOp::Eq | BinOp::Ne => {
                        if let (Ty::Known(a), Ty::Known(b)) = (lt, rt) {
                            if a != b {
                                self.mismatch(r.loc, a.keyword(), rt);
                            }
                        }
                        Ty::Known(Type::Bool)
                    }
                    BinOp::Lt | BinOp::Gt => {
                        let ok = |t: Ty| matches!(t, Ty::Dynamic | Ty::Known(Type::Uint) | Ty::Known(Type::Bytes32));
                        if !ok(lt) {
                            self.mismatch(l.loc, "uint or bytes32", lt);
                        } else if !ok(rt) {
                            self.mismatch(r.loc, "uint or bytes32", rt);
                        } else if let (Ty::Known(a), Ty::Known(b)) = (lt, rt) {
                            if a != b {
                                self.mismatch(r.loc, a.keyword(), rt);
                            }
                        }
                        Ty::Known(Type::Bool)
                    }
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Rem => {
                        for (t, x) in [(lt, l), (rt, r)] {
                            if !t.fits(Type::Uint) {
                                self.mismatch(x.loc, "uint", t);
                            }
                        }
                        Ty::Known(Type::Uint)
                    }
                    BinOp::And | BinOp::Or => {
                        for (t, x) in [(lt, l), (rt, r)] {
                            if !t.fits(Type::Bool) {
                                self.mismatch(x.loc, "bool", t);
                            }
                        }
                        Ty::Known(Type::Bool)
                    }
                }
            }
        })
    }
}
