use std::fmt::Write;

use super::ast::*;
use crate::value::Value;

const INDENT: &str = "    ";

/// Emits canonical source: four-space indentation, one declaration or
/// statement per line, minimal parentheses.
pub fn print_contract(ast: &ContractAst) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "contract {} {{", ast.name);
    for a in &ast.attributes {
        let _ = writeln!(out, "{INDENT}attr {} {};", a.ty, a.name);
    }
    for f in &ast.functions {
        out.push('\n');
        let params: Vec<String> = f.params.iter().map(|p| format!("{} {}", p.ty, p.name)).collect();
        let _ = writeln!(out, "{INDENT}fn {}({}) {{", f.name, params.join(", "));
        print_block(&mut out, &f.body, 2);
        let _ = writeln!(out, "{INDENT}}}");
    }
    out.push_str("}\n");
    out
}

fn print_block(out: &mut String, block: &[Stmt], depth: usize) {
    for s in block {
        print_stmt(out, s, depth);
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str(INDENT);
    }
}

fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::Let { name, value } => {
            let _ = writeln!(out, "let {name} = {};", print_expr(value));
        }
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{} = {};", target.name(), print_expr(value));
        }
        StmtKind::Requires(e) => {
            let _ = writeln!(out, "requires({});", print_expr(e));
        }
        StmtKind::If { .. } => {
            print_if(out, s, depth);
            out.push('\n');
        }
        StmtKind::Transfer { to, amount } => {
            let _ = writeln!(out, "transfer({}, {});", print_expr(to), print_expr(amount));
        }
        StmtKind::ExternalQuery { service, query } => {
            let _ = writeln!(out, "external_query({}, {});", quote(service), quote(query));
        }
        StmtKind::Effect { builtin, args } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            let _ = writeln!(out, "{}({});", builtin.name(), args.join(", "));
        }
        StmtKind::Return => out.push_str("return;\n"),
        StmtKind::StartTx => out.push_str("start_tx;\n"),
        StmtKind::EndTx => out.push_str("end_tx;\n"),
    }
}

/// Prints an `if` chain without the trailing newline; the caller's
/// indentation has already been written.
fn print_if(out: &mut String, s: &Stmt, depth: usize) {
    let StmtKind::If { cond, then_block, else_block } = &s.kind else {
        unreachable!("print_if on non-if statement");
    };
    let _ = writeln!(out, "if ({}) {{", print_expr(cond));
    print_block(out, then_block, depth + 1);
    indent(out, depth);
    out.push('}');
    match else_block.as_deref() {
        None => {}
        Some([nested]) if matches!(nested.kind, StmtKind::If { .. }) => {
            out.push_str(" else ");
            print_if(out, nested, depth);
        }
        Some(b) => {
            out.push_str(" else {\n");
            print_block(out, b, depth + 1);
            indent(out, depth);
            out.push('}');
        }
    }
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, 0);
    out
}

// `min_prec` is the weakest operator that may appear unparenthesized here.
fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    match &e.kind {
        ExprKind::AttrRead(n) | ExprKind::LocalRead(n) => out.push_str(n),
        ExprKind::Implicit(i) => match i {
            Implicit::MsgSender => out.push_str("msg.sender"),
            Implicit::MsgValue => out.push_str("msg.value"),
            Implicit::MsgData(k) => {
                let _ = write!(out, "msg.data.{k}");
            }
            Implicit::BlockNumber => out.push_str("block.number"),
        },
        ExprKind::Literal(v) => match v {
            Value::Bool(b) => {
                let _ = write!(out, "{b}");
            }
            Value::Uint(n) => {
                let _ = write!(out, "{n}");
            }
            Value::Bytes32(h) => out.push_str(&h.to_hex()),
            Value::String(s) => out.push_str(&quote(s)),
            // no address literal syntax exists; the checker never produces one
            Value::Address(a) => out.push_str(&quote(a.as_str())),
        },
        ExprKind::Binary(op, l, r) => {
            let p = op.precedence();
            let paren = p < min_prec;
            if paren {
                out.push('(');
            }
            write_expr(out, l, p);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, r, p + 1);
            if paren {
                out.push(')');
            }
        }
        ExprKind::Unary(UnOp::Not, x) => {
            out.push('!');
            write_expr(out, x, u8::MAX);
        }
        ExprKind::Hash(x) => {
            out.push_str("sha256(");
            write_expr(out, x, 0);
            out.push(')');
        }
        ExprKind::Call(b, args) => {
            out.push_str(b.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
    }
}
