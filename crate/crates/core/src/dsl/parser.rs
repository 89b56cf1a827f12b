//! Recursive-descent parser for `.txsc` sources.
//!
//! Bare identifiers are parsed as locals and resolved against the
//! attribute list once the whole contract has been read, so attributes
//! may be declared after the functions that use them.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use crate::value::{Type, Value};

pub fn parse_contract(src: &str) -> Result<ContractAst, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut ast = p.contract()?;
    resolve(&mut ast)?;
    Ok(ast)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn loc(&self) -> Loc {
        self.tokens[self.pos].loc
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError::syntax(self.loc(), expected.iter().copied(), self.peek().to_string()))
    }

    fn expect(&mut self, tok: Tok) -> PResult<Loc> {
        if *self.peek() == tok {
            Ok(self.advance().loc)
        } else {
            let want = tok.to_string();
            self.error(&[want.as_str()])
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Loc> {
        if self.is_kw(kw) {
            Ok(self.advance().loc)
        } else {
            self.error(&[&format!("`{kw}`")])
        }
    }

    fn ident(&mut self) -> PResult<(String, Loc)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let loc = self.advance().loc;
                Ok((s, loc))
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        if let Tok::Ident(s) = self.peek() {
            if let Some(t) = Type::from_keyword(s) {
                self.advance();
                return Ok(t);
            }
        }
        self.error(&["`address`", "`bool`", "`uint`", "`bytes32`", "`string`"])
    }

    fn contract(&mut self) -> PResult<ContractAst> {
        let loc = self.expect_kw("contract")?;
        let (name, _) = self.ident()?;
        self.expect(Tok::LBrace)?;
        let mut attributes: Vec<AttributeDecl> = Vec::new();
        let mut functions: Vec<FunctionDecl> = Vec::new();
        loop {
            if self.is_kw("attr") {
                let loc = self.advance().loc;
                if self.is_kw("public") {
                    self.advance();
                }
                let ty = self.ty()?;
                let (name, _) = self.ident()?;
                self.expect(Tok::Semi)?;
                if attributes.iter().any(|a| a.name == name) {
                    return Err(ParseError::duplicate(name, "attribute", loc));
                }
                attributes.push(AttributeDecl { name, ty, loc });
            } else if self.is_kw("fn") {
                let f = self.function()?;
                if functions.iter().any(|g| g.name == f.name) {
                    return Err(ParseError::duplicate(f.name, "function", f.loc));
                }
                functions.push(f);
            } else if *self.peek() == Tok::RBrace {
                self.advance();
                break;
            } else {
                return self.error(&["`attr`", "`fn`", "`}`"]);
            }
        }
        self.expect(Tok::Eof)?;
        Ok(ContractAst { name, attributes, functions, loc })
    }

    fn function(&mut self) -> PResult<FunctionDecl> {
        let loc = self.expect_kw("fn")?;
        let (name, _) = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut params: Vec<Param> = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let ploc = self.loc();
                let ty = self.ty()?;
                let (pname, _) = self.ident()?;
                if params.iter().any(|p| p.name == pname) {
                    return Err(ParseError::duplicate(pname, "parameter", ploc));
                }
                params.push(Param { name: pname, ty, loc: ploc });
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let body = self.block()?;
        let transactional = check_markers(&body)?;
        Ok(FunctionDecl { name, params, body, transactional, loc })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::LBrace)?;
        let mut out = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.error(&["`}`"]);
            }
            out.push(self.stmt()?);
        }
        self.advance();
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        let Tok::Ident(word) = self.peek().clone() else {
            return self.error(&["statement"]);
        };
        let kind = match word.as_str() {
            "let" => {
                self.advance();
                let (name, _) = self.ident()?;
                self.expect(Tok::Assign)?;
                let value = self.expr()?;
                self.expect(Tok::Semi)?;
                StmtKind::Let { name, value }
            }
            "requires" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                StmtKind::Requires(e)
            }
            "if" => return self.if_stmt(),
            "transfer" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let to = self.expr()?;
                self.expect(Tok::Comma)?;
                let amount = self.expr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                StmtKind::Transfer { to, amount }
            }
            "external_query" => {
                self.advance();
                self.expect(Tok::LParen)?;
                let service = self.string_lit()?;
                self.expect(Tok::Comma)?;
                let query = self.string_lit()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                StmtKind::ExternalQuery { service, query }
            }
            "return" => {
                self.advance();
                self.expect(Tok::Semi)?;
                StmtKind::Return
            }
            "start_tx" => {
                self.advance();
                self.expect(Tok::Semi)?;
                StmtKind::StartTx
            }
            "end_tx" => {
                self.advance();
                self.expect(Tok::Semi)?;
                StmtKind::EndTx
            }
            "this" => {
                self.advance();
                self.expect(Tok::Dot)?;
                let (name, _) = self.ident()?;
                self.assign_rest(Target::Attr(name))?
            }
            w => {
                if let Some(b) = Builtin::from_name(w) {
                    if b.is_query() {
                        return self.error(&["statement"]);
                    }
                    self.advance();
                    let args = self.call_args(b)?;
                    self.expect(Tok::Semi)?;
                    StmtKind::Effect { builtin: b, args }
                } else if is_keyword(w) {
                    return self.error(&["statement"]);
                } else {
                    self.advance();
                    self.assign_rest(Target::Local(w.to_string()))?
                }
            }
        };
        Ok(Stmt::new(kind, loc))
    }

    fn assign_rest(&mut self, target: Target) -> PResult<StmtKind> {
        self.expect(Tok::Assign)?;
        let value = self.expr()?;
        self.expect(Tok::Semi)?;
        Ok(StmtKind::Assign { target, value })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let loc = self.expect_kw("if")?;
        self.expect(Tok::LParen)?;
        let cond = self.expr()?;
        self.expect(Tok::RParen)?;
        let then_block = self.block()?;
        let else_block = if self.is_kw("else") {
            self.advance();
            if self.is_kw("if") {
                Some(vec![self.if_stmt()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::new(StmtKind::If { cond, then_block, else_block }, loc))
    }

    fn string_lit(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(s)
            }
            _ => self.error(&["string literal"]),
        }
    }

    fn call_args(&mut self, b: Builtin) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        let close = self.loc();
        self.expect(Tok::RParen)?;
        if args.len() != b.arity() {
            return Err(ParseError::syntax(
                close,
                [format!("{} argument(s) to `{}`", b.arity(), b.name())],
                format!("{} argument(s)", args.len()),
            ));
        }
        Ok(args)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = binop(self.peek()) {
            if op.precedence() < min_prec {
                break;
            }
            let loc = self.advance().loc;
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), loc);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Bang {
            let loc = self.advance().loc;
            let e = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), loc));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        let kind = match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                ExprKind::Literal(Value::Uint(n))
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::Literal(Value::String(s))
            }
            Tok::Hex(h) => {
                self.advance();
                ExprKind::Literal(Value::Bytes32(h))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                return Ok(e);
            }
            Tok::Ident(w) => match w.as_str() {
                "true" | "false" => {
                    self.advance();
                    ExprKind::Literal(Value::Bool(w == "true"))
                }
                "msg" => {
                    self.advance();
                    self.expect(Tok::Dot)?;
                    match self.peek().clone() {
                        Tok::Ident(f) if f == "sender" => {
                            self.advance();
                            ExprKind::Implicit(Implicit::MsgSender)
                        }
                        Tok::Ident(f) if f == "value" => {
                            self.advance();
                            ExprKind::Implicit(Implicit::MsgValue)
                        }
                        Tok::Ident(f) if f == "data" => {
                            self.advance();
                            // bare `msg.data` denotes the designated `payload` entry
                            let key = if *self.peek() == Tok::Dot {
                                self.advance();
                                self.ident()?.0
                            } else {
                                "payload".to_string()
                            };
                            ExprKind::Implicit(Implicit::MsgData(key))
                        }
                        _ => return self.error(&["`sender`", "`value`", "`data`"]),
                    }
                }
                "block" => {
                    self.advance();
                    self.expect(Tok::Dot)?;
                    self.expect_kw("number")?;
                    ExprKind::Implicit(Implicit::BlockNumber)
                }
                "this" => {
                    self.advance();
                    self.expect(Tok::Dot)?;
                    ExprKind::AttrRead(self.ident()?.0)
                }
                "sha256" => {
                    self.advance();
                    self.expect(Tok::LParen)?;
                    let e = self.expr()?;
                    self.expect(Tok::RParen)?;
                    ExprKind::Hash(Box::new(e))
                }
                w => {
                    if let Some(b) = Builtin::from_name(w) {
                        if !b.is_query() {
                            return self.error(&["expression"]);
                        }
                        self.advance();
                        ExprKind::Call(b, self.call_args(b)?)
                    } else if is_keyword(w) {
                        return self.error(&["expression"]);
                    } else {
                        self.advance();
                        ExprKind::LocalRead(w.to_string())
                    }
                }
            },
            _ => return self.error(&["expression"]),
        };
        Ok(Expr::new(kind, loc))
    }
}

fn binop(t: &Tok) -> Option<BinOp> {
    Some(match t {
        Tok::OrOr => BinOp::Or,
        Tok::AndAnd => BinOp::And,
        Tok::EqEq => BinOp::Eq,
        Tok::NotEq => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Gt => BinOp::Gt,
        Tok::Plus => BinOp::Add,
        Tok::Minus => BinOp::Sub,
        Tok::Star => BinOp::Mul,
        Tok::Percent => BinOp::Rem,
        _ => return None,
    })
}

const KEYWORDS: &[&str] = &[
    "contract",
    "attr",
    "public",
    "fn",
    "let",
    "if",
    "else",
    "requires",
    "transfer",
    "external_query",
    "return",
    "start_tx",
    "end_tx",
    "true",
    "false",
    "msg",
    "block",
    "this",
    "sha256",
    "address",
    "bool",
    "uint",
    "bytes32",
    "string",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s) || Builtin::from_name(s).is_some()
}

/// Validates transaction markers and reports whether the function is transactional.
fn check_markers(body: &[Stmt]) -> PResult<bool> {
    let mut nested = None;
    for s in body {
        if let StmtKind::If { then_block, else_block, .. } = &s.kind {
            visit_stmts(then_block, &mut |s| {
                if matches!(s.kind, StmtKind::StartTx | StmtKind::EndTx) && nested.is_none() {
                    nested = Some(s.loc);
                }
            });
            if let Some(b) = else_block {
                visit_stmts(b, &mut |s| {
                    if matches!(s.kind, StmtKind::StartTx | StmtKind::EndTx) && nested.is_none() {
                        nested = Some(s.loc);
                    }
                });
            }
        }
    }
    if let Some(loc) = nested {
        return Err(ParseError::syntax(loc, ["transaction marker at function top level"], "nested marker".into()));
    }
    let starts: Vec<usize> = positions(body, |k| matches!(k, StmtKind::StartTx));
    let ends: Vec<usize> = positions(body, |k| matches!(k, StmtKind::EndTx));
    match (starts.as_slice(), ends.as_slice()) {
        ([], []) => Ok(false),
        ([0], [e]) if *e == body.len() - 1 => Ok(true),
        _ => {
            let loc = starts.iter().chain(&ends).map(|&i| body[i].loc).next().unwrap_or_default();
            Err(ParseError::syntax(
                loc,
                ["`start_tx;` as first and `end_tx;` as last statement"],
                "misplaced transaction marker".into(),
            ))
        }
    }
}

fn positions(body: &[Stmt], pred: impl Fn(&StmtKind) -> bool) -> Vec<usize> {
    body.iter().enumerate().filter(|(_, s)| pred(&s.kind)).map(|(i, _)| i).collect()
}

/// Turns bare names that denote attributes into attribute accesses and
/// enforces the reserved-prefix and no-shadowing rules.
fn resolve(ast: &mut ContractAst) -> PResult<()> {
    let attrs: BTreeSet<String> = ast.attributes.iter().map(|a| a.name.clone()).collect();
    for a in &ast.attributes {
        if a.name.starts_with(RESERVED_PREFIX) {
            let base = a.name.strip_prefix(SHADOW_PREFIX);
            if !base.is_some_and(|b| attrs.contains(b) && !b.starts_with(RESERVED_PREFIX)) {
                return Err(reserved(&a.name, a.loc));
            }
        }
    }
    for f in &mut ast.functions {
        if f.name.starts_with(RESERVED_PREFIX) {
            return Err(reserved(&f.name, f.loc));
        }
        for p in &f.params {
            check_local_name(&p.name, p.loc, &attrs)?;
        }
        resolve_block(&mut f.body, &attrs)?;
    }
    Ok(())
}

fn reserved(name: &str, loc: Loc) -> ParseError {
    ParseError::syntax(loc, ["identifier without the reserved `__` prefix"], format!("`{name}`"))
}

fn check_local_name(name: &str, loc: Loc, attrs: &BTreeSet<String>) -> PResult<()> {
    if name.starts_with(RESERVED_PREFIX) {
        return Err(reserved(name, loc));
    }
    if attrs.contains(name) {
        return Err(ParseError::duplicate(name.to_string(), "local shadowing attribute", loc));
    }
    Ok(())
}

fn resolve_block(block: &mut [Stmt], attrs: &BTreeSet<String>) -> PResult<()> {
    for s in block {
        match &mut s.kind {
            StmtKind::Let { name, value } => {
                check_local_name(name, s.loc, attrs)?;
                resolve_expr(value, attrs);
            }
            StmtKind::Assign { target, value } => {
                if let Target::Local(n) = target {
                    if attrs.contains(n.as_str()) {
                        *target = Target::Attr(std::mem::take(n));
                    }
                }
                resolve_expr(value, attrs);
            }
            StmtKind::Requires(e) => resolve_expr(e, attrs),
            StmtKind::If { cond, then_block, else_block } => {
                resolve_expr(cond, attrs);
                resolve_block(then_block, attrs)?;
                if let Some(b) = else_block {
                    resolve_block(b, attrs)?;
                }
            }
            StmtKind::Transfer { to, amount } => {
                resolve_expr(to, attrs);
                resolve_expr(amount, attrs);
            }
            StmtKind::Effect { args, .. } => args.iter_mut().for_each(|a| resolve_expr(a, attrs)),
            StmtKind::ExternalQuery { .. } | StmtKind::Return | StmtKind::StartTx | StmtKind::EndTx => {}
        }
    }
    Ok(())
}

fn resolve_expr(e: &mut Expr, attrs: &BTreeSet<String>) {
    match &mut e.kind {
        ExprKind::LocalRead(n) if attrs.contains(n.as_str()) => {
            e.kind = ExprKind::AttrRead(std::mem::take(n));
        }
        ExprKind::Binary(_, l, r) => {
            resolve_expr(l, attrs);
            resolve_expr(r, attrs);
        }
        ExprKind::Unary(_, x) | ExprKind::Hash(x) => resolve_expr(x, attrs),
        ExprKind::Call(_, args) => args.iter_mut().for_each(|a| resolve_expr(a, attrs)),
        _ => {}
    }
}
