use std::collections::HashSet;

use super::ast::{BinOp, Body, Expr, Program, Stmt};
use crate::error::ParseError;

const KEYWORDS: &[&str] = &[
    "shared", "handler", "thread", "message", "store", "load", "cas", "post", "let", "if", "else",
    "repeat", "assert",
];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    const SYMS: &[&str] = &[
        "->", "==", "!=", "<=", ">=", "{", "}", "(", ")", "+", "-", "*", "<", ">", "=", ";",
    ];
    let mut out = Vec::new();
    for (lno, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (l, col) = (lno + 1, i + 1);
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n = text.parse::<i64>().map_err(|_| ParseError::Syntax {
                    line: l,
                    col,
                    msg: format!("integer literal `{text}` out of range"),
                })?;
                out.push(Token { tok: Tok::Int(n), line: l, col });
            } else if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: l, col });
            } else {
                let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let sym = SYMS.iter().find(|s| rest.starts_with(**s)).ok_or_else(|| {
                    ParseError::Syntax { line: l, col, msg: format!("unexpected character `{c}`") }
                })?;
                i += sym.chars().count();
                out.push(Token { tok: Tok::Sym(sym), line: l, col });
            }
        }
    }
    let line = src.lines().count().max(1);
    out.push(Token { tok: Tok::Eof, line, col: 1 });
    Ok(out)
}

/// Unresolved statement, names still textual.
#[derive(Debug)]
enum Raw {
    Store(Name, RawExpr),
    Load(Name, Name),
    Cas(Name, RawExpr, RawExpr, Name),
    Post(Name, Name),
    Let(Name, RawExpr),
    If(RawExpr, Vec<Raw>, Vec<Raw>),
    Repeat(u32, Vec<Raw>),
    Assert(RawExpr),
}

#[derive(Debug, Clone)]
struct Name {
    text: String,
    line: usize,
    col: usize,
}

#[derive(Debug)]
enum RawExpr {
    Lit(i64),
    Reg(Name),
    Neg(Box<RawExpr>),
    Bin(BinOp, Box<RawExpr>, Box<RawExpr>),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let t = self.peek();
        Err(ParseError::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == kw)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn name(&mut self) -> Result<Name, ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let t = self.bump();
                let Tok::Ident(text) = t.tok else { unreachable!() };
                Ok(Name { text, line: t.line, col: t.col })
            }
            _ => self.err("expected identifier"),
        }
    }

    fn block(&mut self) -> Result<Vec<Raw>, ParseError> {
        self.expect_sym("{")?;
        let mut stmts = Vec::new();
        loop {
            if self.is_sym("}") {
                self.bump();
                return Ok(stmts);
            }
            if self.is_sym(";") {
                self.bump();
                continue;
            }
            stmts.push(self.stmt()?);
        }
    }

    fn stmt(&mut self) -> Result<Raw, ParseError> {
        let kw = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return self.err("expected statement"),
        };
        match kw.as_str() {
            "store" => {
                self.bump();
                let var = self.name()?;
                Ok(Raw::Store(var, self.expr()?))
            }
            "load" => {
                self.bump();
                let reg = self.name()?;
                Ok(Raw::Load(reg, self.name()?))
            }
            "cas" => {
                self.bump();
                let var = self.name()?;
                let expected = self.expr()?;
                let new = self.expr()?;
                Ok(Raw::Cas(var, expected, new, self.name()?))
            }
            "post" => {
                self.bump();
                let msg = self.name()?;
                self.expect_sym("->")?;
                Ok(Raw::Post(msg, self.name()?))
            }
            "let" => {
                self.bump();
                let reg = self.name()?;
                self.expect_sym("=")?;
                Ok(Raw::Let(reg, self.expr()?))
            }
            "if" => {
                self.bump();
                let cond = self.expr()?;
                let then = self.block()?;
                let els = if self.is_kw("else") {
                    self.bump();
                    self.block()?
                } else {
                    Vec::new()
                };
                Ok(Raw::If(cond, then, els))
            }
            "repeat" => {
                self.bump();
                let t = self.peek().clone();
                let count = match t.tok {
                    Tok::Int(n) if n >= 0 && n <= u32::MAX as i64 => {
                        self.bump();
                        n as u32
                    }
                    _ => return Err(ParseError::NonLiteralRepeat { line: t.line, col: t.col }),
                };
                Ok(Raw::Repeat(count, self.block()?))
            }
            "assert" => {
                self.bump();
                Ok(Raw::Assert(self.expr()?))
            }
            _ => self.err(format!("unknown statement `{kw}`")),
        }
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek().tok else { return None };
        Some(match s {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            _ => return None,
        })
    }

    fn expr(&mut self) -> Result<RawExpr, ParseError> {
        self.expr_prec(1)
    }

    fn expr_prec(&mut self, min: u8) -> Result<RawExpr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min {
                break;
            }
            self.bump();
            // comparisons do not chain
            let next = if prec == 1 { 2 } else { prec + 1 };
            let rhs = self.expr_prec(next)?;
            lhs = RawExpr::Bin(op, Box::new(lhs), Box::new(rhs));
            if prec == 1 && matches!(self.binop(), Some(o) if o.precedence() == 1) {
                return self.err("comparison operators do not chain");
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<RawExpr, ParseError> {
        if self.is_sym("-") {
            self.bump();
            if let Tok::Int(n) = self.peek().tok {
                self.bump();
                return Ok(RawExpr::Lit(-n));
            }
            return Ok(RawExpr::Neg(Box::new(self.unary()?)));
        }
        if self.is_sym("(") {
            self.bump();
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        match self.peek().tok.clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(RawExpr::Lit(n))
            }
            Tok::Ident(_) => Ok(RawExpr::Reg(self.name()?)),
            _ => self.err("expected expression"),
        }
    }
}

struct Decl {
    name: Name,
    body: Vec<Raw>,
}

/// Parses program source text.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let mut shared: Vec<Name> = Vec::new();
    let mut handlers: Vec<Name> = Vec::new();
    let mut threads: Vec<Decl> = Vec::new();
    let mut messages: Vec<Decl> = Vec::new();
    loop {
        if p.peek().tok == Tok::Eof {
            break;
        }
        let (line, kw) = match &p.peek().tok {
            Tok::Ident(s) => (p.peek().line, s.clone()),
            _ => return p.err("expected declaration"),
        };
        match kw.as_str() {
            "shared" | "handler" => {
                p.bump();
                let list = if kw == "shared" { &mut shared } else { &mut handlers };
                while p.peek().line == line && matches!(p.peek().tok, Tok::Ident(_)) {
                    list.push(p.name()?);
                }
            }
            "thread" | "message" => {
                p.bump();
                let name = p.name()?;
                let body = p.block()?;
                let list = if kw == "thread" { &mut threads } else { &mut messages };
                list.push(Decl { name, body });
            }
            _ => return p.err(format!("unknown declaration `{kw}`")),
        }
    }

    let mut seen = HashSet::new();
    for n in shared.iter().chain(&handlers).chain(threads.iter().map(|d| &d.name)).chain(messages.iter().map(|d| &d.name)) {
        if !seen.insert(n.text.clone()) {
            return Err(ParseError::Duplicate { line: n.line, col: n.col, name: n.text.clone() });
        }
    }

    let mut prog = Program {
        shared: shared.iter().map(|n| n.text.clone()).collect(),
        handlers: handlers.iter().map(|n| n.text.clone()).collect(),
        threads: Vec::new(),
        messages: messages.iter().map(|d| Body { name: d.name.text.clone(), stmts: Vec::new() }).collect(),
    };
    let mut resolved_threads = Vec::new();
    for d in &threads {
        resolved_threads.push(Body { name: d.name.text.clone(), stmts: resolve_body(&prog, &d.body)? });
    }
    let mut resolved_msgs = Vec::new();
    for d in &messages {
        resolved_msgs.push(Body { name: d.name.text.clone(), stmts: resolve_body(&prog, &d.body)? });
    }
    prog.threads = resolved_threads;
    prog.messages = resolved_msgs;
    Ok(prog)
}

fn resolve_body(prog: &Program, body: &[Raw]) -> Result<Vec<crate::program::Stmt>, ParseError> {
    let mut assigned = HashSet::new();
    collect_assigned(body, &mut assigned);
    let r = Resolver { prog, assigned };
    r.block(body)
}

fn collect_assigned(body: &[Raw], out: &mut HashSet<String>) {
    for s in body {
        match s {
            Raw::Load(r, _) | Raw::Let(r, _) | Raw::Cas(_, _, _, r) => {
                out.insert(r.text.clone());
            }
            Raw::If(_, a, b) => {
                collect_assigned(a, out);
                collect_assigned(b, out);
            }
            Raw::Repeat(_, b) => collect_assigned(b, out),
            _ => {}
        }
    }
}

struct Resolver<'a> {
    prog: &'a Program,
    assigned: HashSet<String>,
}

impl Resolver<'_> {
    fn var(&self, n: &Name) -> Result<u32, ParseError> {
        self.prog.var_id(&n.text).ok_or_else(|| undeclared(n))
    }

    fn reg(&self, n: &Name) -> Result<String, ParseError> {
        if self.prog.var_id(&n.text).is_some() {
            return Err(ParseError::Syntax {
                line: n.line,
                col: n.col,
                msg: format!("`{}` is a shared variable, not a register", n.text),
            });
        }
        Ok(n.text.clone())
    }

    fn expr(&self, e: &RawExpr) -> Result<Expr, ParseError> {
        Ok(match e {
            RawExpr::Lit(n) => Expr::Lit(*n),
            RawExpr::Reg(n) => {
                let r = self.reg(n)?;
                if !self.assigned.contains(&r) {
                    return Err(undeclared(n));
                }
                Expr::Reg(r)
            }
            RawExpr::Neg(a) => Expr::Neg(Box::new(self.expr(a)?)),
            RawExpr::Bin(op, a, b) => Expr::Bin(*op, Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
        })
    }

    fn block(&self, body: &[Raw]) -> Result<Vec<Stmt>, ParseError> {
        body.iter().map(|s| self.stmt(s)).collect()
    }

    fn stmt(&self, s: &Raw) -> Result<Stmt, ParseError> {
        Ok(match s {
            Raw::Store(v, e) => Stmt::Store { var: self.var(v)?, value: self.expr(e)? },
            Raw::Load(r, v) => Stmt::Load { reg: self.reg(r)?, var: self.var(v)? },
            Raw::Cas(v, a, b, r) => Stmt::Cas {
                var: self.var(v)?,
                expected: self.expr(a)?,
                new: self.expr(b)?,
                reg: self.reg(r)?,
            },
            Raw::Post(m, h) => Stmt::Post {
                msg: self.prog.msg_id(&m.text).ok_or_else(|| undeclared(m))?,
                handler: self.prog.handler_id(&h.text).ok_or_else(|| undeclared(h))?,
            },
            Raw::Let(r, e) => Stmt::Let { reg: self.reg(r)?, value: self.expr(e)? },
            Raw::If(c, a, b) => Stmt::If { cond: self.expr(c)?, then: self.block(a)?, els: self.block(b)? },
            Raw::Repeat(n, b) => Stmt::Repeat { count: *n, body: self.block(b)? },
            Raw::Assert(c) => Stmt::Assert(self.expr(c)?),
        })
    }
}

fn undeclared(n: &Name) -> ParseError {
    ParseError::Undeclared { line: n.line, col: n.col, name: n.text.clone() }
}
