//! Canonical pretty-printer. Output reparses to a structurally identical tree.

use super::ast::*;

const INDENT: &str = "    ";

pub fn print_ast(ast: &Ast) -> String {
    let mut out = String::new();
    print_block(&ast.body, 0, &mut out);
    out
}

pub fn print_function(def: &FunctionDef) -> String {
    let mut out = String::new();
    print_def(def, 0, &mut out);
    out
}

fn print_block(body: &[Stmt], level: usize, out: &mut String) {
    for stmt in body {
        print_stmt(stmt, level, out);
    }
}

fn line(level: usize, text: &str, out: &mut String) {
    for _ in 0..level {
        out.push_str(INDENT);
    }
    out.push_str(text);
    out.push('\n');
}

fn print_def(def: &FunctionDef, level: usize, out: &mut String) {
    line(level, &format!("def {}({}):", def.name, def.params.join(", ")), out);
    print_block(&def.body, level + 1, out);
}

fn print_stmt(stmt: &Stmt, level: usize, out: &mut String) {
    match &stmt.kind {
        StmtKind::FunctionDef(def) => print_def(def, level, out),
        StmtKind::Assign { target, value } => {
            line(level, &format!("{} = {}", target_str(target), expr_str(value)), out)
        }
        StmtKind::AugAssign { target, op, value } => line(
            level,
            &format!("{} {}= {}", target_str(target), op.symbol(), expr_str(value)),
            out,
        ),
        StmtKind::Expr(e) => line(level, &expr_str(e), out),
        StmtKind::For { var, iter, body } => {
            line(level, &format!("for {var} in {}:", expr_str(iter)), out);
            print_block(body, level + 1, out);
        }
        StmtKind::While { cond, body } => {
            line(level, &format!("while {}:", expr_str(cond)), out);
            print_block(body, level + 1, out);
        }
        StmtKind::If { branches, orelse } => {
            for (i, b) in branches.iter().enumerate() {
                let kw = if i == 0 { "if" } else { "elif" };
                line(level, &format!("{kw} {}:", expr_str(&b.cond)), out);
                print_block(&b.body, level + 1, out);
            }
            if let Some(orelse) = orelse {
                line(level, "else:", out);
                print_block(orelse, level + 1, out);
            }
        }
        StmtKind::Return(None) => line(level, "return", out),
        StmtKind::Return(Some(e)) => line(level, &format!("return {}", expr_str(e)), out),
        StmtKind::Comment(text) => line(level, &format!("#{text}"), out),
    }
}

fn target_str(t: &Target) -> String {
    match t {
        Target::Name(n) => n.clone(),
        Target::Index { name, index } => format!("{name}[{}]", expr_str(index)),
    }
}

pub fn expr_str(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

// Binding strength, weakest first. Mirrors the parser's descent order.
const P_OR: u8 = 1;
const P_AND: u8 = 2;
const P_NOT: u8 = 3;
const P_CMP: u8 = 4;
const P_ARITH: u8 = 5;
const P_TERM: u8 = 6;
const P_UNARY: u8 = 7;
const P_POW: u8 = 8;
const P_ATOM: u8 = 9;

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::BoolOp { op: BoolOp::Or, .. } => P_OR,
        ExprKind::BoolOp { op: BoolOp::And, .. } => P_AND,
        ExprKind::Not(_) => P_NOT,
        ExprKind::Compare { .. } => P_CMP,
        ExprKind::Binary { op, .. } => match op {
            BinOp::Add | BinOp::Sub => P_ARITH,
            BinOp::Mul | BinOp::Div | BinOp::FloorDiv | BinOp::Mod => P_TERM,
            BinOp::Pow => P_POW,
        },
        ExprKind::Neg(_) => P_UNARY,
        ExprKind::Int(i) if *i < 0 => P_UNARY,
        ExprKind::Float(x) if x.is_sign_negative() => P_UNARY,
        _ => P_ATOM,
    }
}

fn write_wrapped(e: &Expr, min: u8, out: &mut String) {
    if prec(e) < min {
        out.push('(');
        write_expr(e, out);
        out.push(')');
    } else {
        write_expr(e, out);
    }
}

fn write_expr(e: &Expr, out: &mut String) {
    match &e.kind {
        ExprKind::Int(i) => out.push_str(&i.to_string()),
        ExprKind::Float(x) => out.push_str(&float_literal(*x)),
        ExprKind::Str(s) => out.push_str(&string_literal(s)),
        ExprKind::Bool(true) => out.push_str("True"),
        ExprKind::Bool(false) => out.push_str("False"),
        ExprKind::None => out.push_str("None"),
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(item, out);
            }
            out.push(']');
        }
        ExprKind::Dict(pairs) => {
            out.push('{');
            for (i, (k, v)) in pairs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(k, out);
                out.push_str(": ");
                write_expr(v, out);
            }
            out.push('}');
        }
        ExprKind::Call { func, args, kwargs } => {
            out.push_str(func);
            out.push('(');
            let mut first = true;
            for a in args {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                write_expr(a, out);
            }
            for (k, v) in kwargs {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                out.push_str(k);
                out.push('=');
                write_expr(v, out);
            }
            out.push(')');
        }
        ExprKind::Binary { op: BinOp::Pow, left, right } => {
            // right-associative; the exponent may be a unary minus
            write_wrapped(left, P_ATOM, out);
            out.push_str(" ** ");
            write_wrapped(right, P_UNARY, out);
        }
        ExprKind::Binary { op, left, right } => {
            let p = prec(e);
            write_wrapped(left, p, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_wrapped(right, p + 1, out);
        }
        ExprKind::Compare { left, ops } => {
            write_wrapped(left, P_CMP + 1, out);
            for (op, rhs) in ops {
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                write_wrapped(rhs, P_CMP + 1, out);
            }
        }
        ExprKind::BoolOp { op, left, right } => {
            let p = prec(e);
            write_wrapped(left, p, out);
            out.push_str(match op {
                BoolOp::And => " and ",
                BoolOp::Or => " or ",
            });
            write_wrapped(right, p + 1, out);
        }
        ExprKind::Not(inner) => {
            out.push_str("not ");
            write_wrapped(inner, P_NOT, out);
        }
        ExprKind::Neg(inner) => {
            out.push('-');
            write_wrapped(inner, P_UNARY, out);
        }
        ExprKind::Subscript { value, index } => {
            write_wrapped(value, P_ATOM, out);
            out.push('[');
            write_expr(index, out);
            out.push(']');
        }
    }
}

fn float_literal(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "1e999".into() } else { "-1e999".into() };
    }
    if x.is_nan() {
        // no literal form; only reachable through hand-built trees
        return "(1e999 - 1e999)".into();
    }
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn string_literal(s: &str) -> String {
    let triple_safe = s.contains('\n')
        && !s.contains("\"\"\"")
        && !s.ends_with('"')
        && !s.contains(['\\', '\r', '\t', '\0']);
    if triple_safe {
        return format!("\"\"\"{s}\"\"\"");
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
