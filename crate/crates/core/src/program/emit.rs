use std::fmt::Write;

use super::ast::{Body, Expr, Program, Stmt};

/// Renders a program in the text format accepted by [`parse_program`](super::parse_program).
pub fn to_source(prog: &Program) -> String {
    let mut out = String::new();
    if !prog.shared.is_empty() {
        let _ = writeln!(out, "shared {}", prog.shared.join(" "));
    }
    if !prog.handlers.is_empty() {
        let _ = writeln!(out, "handler {}", prog.handlers.join(" "));
    }
    for t in &prog.threads {
        body(prog, "thread", t, &mut out);
    }
    for m in &prog.messages {
        body(prog, "message", m, &mut out);
    }
    out
}

fn body(prog: &Program, kw: &str, b: &Body, out: &mut String) {
    let _ = writeln!(out, "{kw} {} {{", b.name);
    block(prog, &b.stmts, 1, out);
    out.push_str("}\n");
}

fn block(prog: &Program, stmts: &[Stmt], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for s in stmts {
        out.push_str(&pad);
        match s {
            Stmt::Store { var, value } => {
                let _ = writeln!(out, "store {} {}", prog.shared[*var as usize], expr(value));
            }
            Stmt::Load { reg, var } => {
                let _ = writeln!(out, "load {reg} {}", prog.shared[*var as usize]);
            }
            Stmt::Cas { var, expected, new, reg } => {
                let _ = writeln!(
                    out,
                    "cas {} ({}) ({}) {reg}",
                    prog.shared[*var as usize],
                    expr(expected),
                    expr(new)
                );
            }
            Stmt::Post { msg, handler } => {
                let _ = writeln!(
                    out,
                    "post {} -> {}",
                    prog.messages[*msg as usize].name,
                    prog.handlers[*handler as usize]
                );
            }
            Stmt::Let { reg, value } => {
                let _ = writeln!(out, "let {reg} = {}", expr(value));
            }
            Stmt::If { cond, then, els } => {
                let _ = writeln!(out, "if {} {{", expr(cond));
                block(prog, then, depth + 1, out);
                if els.is_empty() {
                    let _ = writeln!(out, "{pad}}}");
                } else {
                    let _ = writeln!(out, "{pad}}} else {{");
                    block(prog, els, depth + 1, out);
                    let _ = writeln!(out, "{pad}}}");
                }
            }
            Stmt::Repeat { count, body } => {
                let _ = writeln!(out, "repeat {count} {{");
                block(prog, body, depth + 1, out);
                let _ = writeln!(out, "{pad}}}");
            }
            Stmt::Assert(c) => {
                let _ = writeln!(out, "assert {}", expr(c));
            }
        }
    }
}

/// Renders an expression so that it parses back to the same tree.
pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Lit(n) => n.to_string(),
        Expr::Reg(r) => r.clone(),
        Expr::Neg(a) => format!("-({})", expr(a)),
        Expr::Bin(op, a, b) => {
            let p = op.precedence();
            let left = match &**a {
                Expr::Bin(o, ..) if o.precedence() < p || (p == 1 && o.precedence() == 1) => {
                    format!("({})", expr(a))
                }
                _ => expr(a),
            };
            let right = match &**b {
                Expr::Bin(o, ..) if o.precedence() <= p => format!("({})", expr(b)),
                _ => expr(b),
            };
            format!("{left} {} {right}", op.symbol())
        }
    }
}
