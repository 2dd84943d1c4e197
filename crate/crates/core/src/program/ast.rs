use crate::event::{HandlerId, VarId};

/// Index into [`Program::messages`].
pub type MsgId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Mul => 3,
            BinOp::Add | BinOp::Sub => 2,
            _ => 1,
        }
    }
}

/// Expressions range over registers and literals only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Lit(i64),
    Reg(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Store { var: VarId, value: Expr },
    Load { reg: String, var: VarId },
    /// Compare-and-swap; `reg` receives 1 on success and 0 otherwise.
    Cas { var: VarId, expected: Expr, new: Expr, reg: String },
    Post { msg: MsgId, handler: HandlerId },
    Let { reg: String, value: Expr },
    If { cond: Expr, then: Vec<Stmt>, els: Vec<Stmt> },
    Repeat { count: u32, body: Vec<Stmt> },
    Assert(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Body {
    pub name: String,
    pub stmts: Vec<Stmt>,
}

/// A program: shared variables, handlers, threads and message bodies.
///
/// All threads are spawned at start; shared variables start at 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub shared: Vec<String>,
    pub handlers: Vec<String>,
    pub threads: Vec<Body>,
    pub messages: Vec<Body>,
}

impl Program {
    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.shared.iter().position(|v| v == name).map(|i| i as VarId)
    }

    pub fn handler_id(&self, name: &str) -> Option<HandlerId> {
        self.handlers.iter().position(|v| v == name).map(|i| i as HandlerId)
    }

    pub fn msg_id(&self, name: &str) -> Option<MsgId> {
        self.messages.iter().position(|m| m.name == name).map(|i| i as MsgId)
    }
}
