//! Syntax tree for the contract language.
//!
//! Every node carries a [`Loc`]. Locations are diagnostic metadata only:
//! `Loc` compares equal to every other `Loc`, so the derived `PartialEq`
//! on the tree is structural equality.

use std::fmt;

use serde::Serialize;

use crate::value::{Type, Value};

/// Prefix reserved for generated identifiers.
pub const RESERVED_PREFIX: &str = "__";
/// Prefix of generated after-image attributes.
pub const SHADOW_PREFIX: &str = "__after_";

pub fn shadow_name(attr: &str) -> String {
    format!("{SHADOW_PREFIX}{attr}")
}

/// Maps `__after_x` back to `x`; other names map to themselves.
pub fn unshadow(name: &str) -> &str {
    name.strip_prefix(SHADOW_PREFIX).unwrap_or(name)
}

/// 1-based line and column of a node's first token.
#[derive(Clone, Copy, Debug, Default, Eq, Serialize)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl Loc {
    pub fn new(line: u32, col: u32) -> Self {
        Loc { line, col }
    }
}

impl PartialEq for Loc {
    fn eq(&self, _: &Loc) -> bool {
        true
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractAst {
    pub name: String,
    pub attributes: Vec<AttributeDecl>,
    pub functions: Vec<FunctionDecl>,
    pub loc: Loc,
}

impl ContractAst {
    pub fn attribute(&self, name: &str) -> Option<&AttributeDecl> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut FunctionDecl> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    /// Position of `attr` in declaration order, used to order generated checks.
    pub fn attribute_index(&self, attr: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == attr)
    }

    /// The function oracle responses are delivered to: the first function
    /// whose body opens with `requires(msg.sender == oracle_address())`.
    pub fn callback_target(&self) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.is_callback_target())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributeDecl {
    pub name: String,
    pub ty: Type,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Param {
    pub name: String,
    pub ty: Type,
    pub loc: Loc,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    /// True when the body is enclosed by `start_tx;` ... `end_tx;`.
    pub transactional: bool,
    pub loc: Loc,
}

impl FunctionDecl {
    pub fn is_callback_target(&self) -> bool {
        let first = self.body.iter().find(|s| !matches!(s.kind, StmtKind::StartTx | StmtKind::EndTx));
        match first.map(|s| &s.kind) {
            Some(StmtKind::Requires(e)) => is_oracle_sender_check(e),
            _ => false,
        }
    }

    pub fn external_queries(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        visit_stmts(&self.body, &mut |s| {
            if let StmtKind::ExternalQuery { service, query } = &s.kind {
                out.push((service.as_str(), query.as_str()));
            }
        });
        out
    }
}

fn is_oracle_sender_check(e: &Expr) -> bool {
    let ExprKind::Binary(BinOp::Eq, l, r) = &e.kind else {
        return false;
    };
    let sender = |e: &Expr| matches!(e.kind, ExprKind::Implicit(Implicit::MsgSender));
    let oracle = |e: &Expr| matches!(&e.kind, ExprKind::Call(Builtin::OracleAddress, args) if args.is_empty());
    (sender(l) && oracle(r)) || (oracle(l) && sender(r))
}

/// Pre-order walk over every statement, including nested branches.
pub fn visit_stmts<'a>(block: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in block {
        f(s);
        if let StmtKind::If { then_block, else_block, .. } = &s.kind {
            visit_stmts(then_block, f);
            if let Some(b) = else_block {
                visit_stmts(b, f);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stmt {
    pub kind: StmtKind,
    pub loc: Loc,
}

impl Stmt {
    pub fn new(kind: StmtKind, loc: Loc) -> Self {
        Stmt { kind, loc }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "stmt", rename_all = "camelCase")]
pub enum StmtKind {
    /// `let name = value;` introduces a block-scoped local.
    Let {
        name: String,
        value: Expr,
    },
    Assign {
        target: Target,
        value: Expr,
    },
    Requires(Expr),
    If {
        cond: Expr,
        then_block: Vec<Stmt>,
        else_block: Option<Vec<Stmt>>,
    },
    Transfer {
        to: Expr,
        amount: Expr,
    },
    ExternalQuery {
        service: String,
        query: String,
    },
    /// Host-resolved effect statements such as `escrow(5);`.
    Effect {
        builtin: Builtin,
        args: Vec<Expr>,
    },
    Return,
    StartTx,
    EndTx,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "name", rename_all = "camelCase")]
pub enum Target {
    Attr(String),
    Local(String),
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::Attr(n) | Target::Local(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expr {
    pub kind: ExprKind,
    pub loc: Loc,
}

impl Expr {
    pub fn new(kind: ExprKind, loc: Loc) -> Self {
        Expr { kind, loc }
    }

    pub fn attr(name: &str) -> Self {
        Expr::new(ExprKind::AttrRead(name.to_string()), Loc::default())
    }

    pub fn msg_data(key: &str) -> Self {
        Expr::new(ExprKind::Implicit(Implicit::MsgData(key.to_string())), Loc::default())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::new(ExprKind::Binary(op, Box::new(l), Box::new(r)), Loc::default())
    }

    /// Attribute names read anywhere in this expression, in evaluation order.
    pub fn attr_reads(&self, out: &mut Vec<String>) {
        match &self.kind {
            ExprKind::AttrRead(n) => out.push(n.clone()),
            ExprKind::Binary(_, l, r) => {
                l.attr_reads(out);
                r.attr_reads(out);
            }
            ExprKind::Unary(_, e) | ExprKind::Hash(e) => e.attr_reads(out),
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.attr_reads(out)),
            ExprKind::LocalRead(_) | ExprKind::Implicit(_) | ExprKind::Literal(_) => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "expr", content = "args", rename_all = "camelCase")]
pub enum ExprKind {
    AttrRead(String),
    LocalRead(String),
    Implicit(Implicit),
    Literal(Value),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Hash(Box<Expr>),
    /// Host-resolved query such as `lock_held(id)` or `oracle_address()`.
    Call(Builtin, Vec<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Implicit {
    MsgSender,
    MsgValue,
    MsgData(String),
    BlockNumber,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BinOp {
    #[serde(rename = "||")]
    Or,
    #[serde(rename = "&&")]
    And,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "%")]
    Rem,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Rem => "%",
        }
    }

    /// Binding strength; larger binds tighter. All levels are left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Gt => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Rem => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UnOp {
    #[serde(rename = "!")]
    Not,
}

/// Names resolved by the host environment rather than by contract code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    LockHeld,
    OracleAddress,
    Escrow,
    EscrowRefund,
    LockRelease,
    LockForfeit,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::LockHeld,
        Builtin::OracleAddress,
        Builtin::Escrow,
        Builtin::EscrowRefund,
        Builtin::LockRelease,
        Builtin::LockForfeit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::LockHeld => "lock_held",
            Builtin::OracleAddress => "oracle_address",
            Builtin::Escrow => "escrow",
            Builtin::EscrowRefund => "escrow_refund",
            Builtin::LockRelease => "lock_release",
            Builtin::LockForfeit => "lock_forfeit",
        }
    }

    pub fn from_name(s: &str) -> Option<Builtin> {
        Builtin::ALL.into_iter().find(|b| b.name() == s)
    }

    /// Queries appear in expressions; everything else is an effect statement.
    pub fn is_query(self) -> bool {
        matches!(self, Builtin::LockHeld | Builtin::OracleAddress)
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::OracleAddress | Builtin::EscrowRefund => 0,
            Builtin::LockHeld | Builtin::Escrow | Builtin::LockRelease | Builtin::LockForfeit => 1,
        }
    }
}
