//! Compiled interpreter whose scheduling unit is the message instance.

use std::collections::HashMap;
use std::sync::Arc;

use super::ast::{BinOp, Expr, MsgId, Program, Stmt};
use super::emit;
use crate::error::RunError;
use crate::event::{Access, Event, ExecutionRecord, HandlerId, InstanceId, InstanceInfo, VarId, Violation};

#[derive(Clone, Debug)]
enum CExpr {
    Lit(i64),
    Reg(usize),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
}

#[derive(Clone, Debug)]
enum Instr {
    Store(VarId, CExpr),
    Load(usize, VarId),
    Cas(VarId, CExpr, CExpr, usize),
    Post(MsgId, HandlerId),
    Let(usize, CExpr),
    Assert(CExpr, String),
    JumpIfZero(CExpr, usize),
    Jump(usize),
    LoopInit(usize, u32),
    /// Exits to the target when the counter is exhausted, else decrements it.
    LoopNext(usize, usize),
}

impl Instr {
    fn is_global(&self) -> bool {
        matches!(self, Instr::Store(..) | Instr::Load(..) | Instr::Cas(..) | Instr::Post(..))
    }
}

#[derive(Debug)]
struct Code {
    name: String,
    instrs: Vec<Instr>,
    slots: usize,
}

struct Compiler {
    regs: HashMap<String, usize>,
    slots: usize,
    instrs: Vec<Instr>,
}

impl Compiler {
    fn reg(&mut self, name: &str) -> usize {
        if let Some(&r) = self.regs.get(name) {
            return r;
        }
        let r = self.slots;
        self.slots += 1;
        self.regs.insert(name.to_string(), r);
        r
    }

    fn expr(&mut self, e: &Expr) -> CExpr {
        match e {
            Expr::Lit(n) => CExpr::Lit(*n),
            Expr::Reg(r) => CExpr::Reg(self.reg(r)),
            Expr::Neg(a) => CExpr::Neg(Box::new(self.expr(a))),
            Expr::Bin(op, a, b) => CExpr::Bin(*op, Box::new(self.expr(a)), Box::new(self.expr(b))),
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            match s {
                Stmt::Store { var, value } => {
                    let e = self.expr(value);
                    self.instrs.push(Instr::Store(*var, e));
                }
                Stmt::Load { reg, var } => {
                    let r = self.reg(reg);
                    self.instrs.push(Instr::Load(r, *var));
                }
                Stmt::Cas { var, expected, new, reg } => {
                    let (a, b) = (self.expr(expected), self.expr(new));
                    let r = self.reg(reg);
                    self.instrs.push(Instr::Cas(*var, a, b, r));
                }
                Stmt::Post { msg, handler } => self.instrs.push(Instr::Post(*msg, *handler)),
                Stmt::Let { reg, value } => {
                    let e = self.expr(value);
                    let r = self.reg(reg);
                    self.instrs.push(Instr::Let(r, e));
                }
                Stmt::Assert(c) => {
                    let e = self.expr(c);
                    self.instrs.push(Instr::Assert(e, emit::expr(c)));
                }
                Stmt::If { cond, then, els } => {
                    let c = self.expr(cond);
                    let jz = self.instrs.len();
                    self.instrs.push(Instr::JumpIfZero(c, 0));
                    self.block(then);
                    if els.is_empty() {
                        let end = self.instrs.len();
                        self.instrs[jz] = patch(&self.instrs[jz], end);
                    } else {
                        let j = self.instrs.len();
                        self.instrs.push(Instr::Jump(0));
                        let else_start = self.instrs.len();
                        self.instrs[jz] = patch(&self.instrs[jz], else_start);
                        self.block(els);
                        let end = self.instrs.len();
                        self.instrs[j] = Instr::Jump(end);
                    }
                }
                Stmt::Repeat { count, body } => {
                    let slot = self.slots;
                    self.slots += 1;
                    self.instrs.push(Instr::LoopInit(slot, *count));
                    let head = self.instrs.len();
                    self.instrs.push(Instr::LoopNext(slot, 0));
                    self.block(body);
                    self.instrs.push(Instr::Jump(head));
                    let end = self.instrs.len();
                    self.instrs[head] = Instr::LoopNext(slot, end);
                }
            }
        }
    }
}

fn patch(i: &Instr, target: usize) -> Instr {
    match i {
        Instr::JumpIfZero(c, _) => Instr::JumpIfZero(c.clone(), target),
        other => other.clone(),
    }
}

fn compile(name: &str, stmts: &[Stmt]) -> Code {
    let mut c = Compiler { regs: HashMap::new(), slots: 0, instrs: Vec::new() };
    c.block(stmts);
    Code { name: name.to_string(), instrs: c.instrs, slots: c.slots }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    NotStarted,
    Running,
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BodyRef {
    Thread(usize),
    Message(usize),
}

#[derive(Clone, Debug)]
struct InstState {
    id: InstanceId,
    body: BodyRef,
    handler: Option<HandlerId>,
    status: Status,
    pc: usize,
    regs: Vec<i64>,
    steps: u32,
    posts: u32,
    /// Global accesses performed so far.
    accesses: Vec<Access>,
}

/// Global state reached after an execution prefix.
#[derive(Clone, Debug)]
pub struct MachineState {
    shared: Vec<i64>,
    insts: Vec<InstState>,
    /// Running instance per handler, as an index into `insts`.
    busy: Vec<Option<usize>>,
    violations: Vec<Violation>,
}

impl MachineState {
    fn find(&self, p: &InstanceId) -> Option<usize> {
        self.insts.iter().position(|i| &i.id == p)
    }

    pub fn shared_value(&self, var: VarId) -> i64 {
        self.shared[var as usize]
    }

    pub fn status(&self, p: &InstanceId) -> Option<Status> {
        self.find(p).map(|i| self.insts[i].status)
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// Instances that have been created and not yet finished.
    pub fn active(&self) -> Vec<InstanceId> {
        self.insts.iter().filter(|i| i.status != Status::Finished).map(|i| i.id.clone()).collect()
    }

    /// Number of events `p` has performed.
    pub fn steps_of(&self, p: &InstanceId) -> u32 {
        self.find(p).map_or(0, |i| self.insts[i].steps)
    }

    /// Snapshot of one instance, if it exists.
    pub fn view(&self, p: &InstanceId) -> Option<InstView<'_>> {
        self.find(p).map(|i| {
            let s = &self.insts[i];
            InstView { handler: s.handler, steps: s.steps, status: s.status, accesses: &s.accesses }
        })
    }

    /// Instance currently running on `h`.
    pub fn running_on(&self, h: HandlerId) -> Option<&InstanceId> {
        self.busy.get(h as usize).copied().flatten().map(|i| &self.insts[i].id)
    }

    /// Every instance created so far, in creation order.
    pub fn instances(&self) -> impl Iterator<Item = &InstanceId> {
        self.insts.iter().map(|i| &i.id)
    }

    pub fn is_maximal(&self) -> bool {
        self.insts.iter().all(|i| i.status == Status::Finished)
    }
}

/// Read-only view of an instance inside a [`MachineState`].
#[derive(Clone, Copy, Debug)]
pub struct InstView<'a> {
    pub handler: Option<HandlerId>,
    pub steps: u32,
    pub status: Status,
    pub accesses: &'a [Access],
}

/// A compiled program ready for replay.
#[derive(Clone, Debug)]
pub struct Machine {
    prog: Arc<Program>,
    threads: Arc<[Code]>,
    messages: Arc<[Code]>,
}

impl Machine {
    pub fn new(prog: &Program) -> Self {
        Machine {
            prog: Arc::new(prog.clone()),
            threads: prog.threads.iter().map(|b| compile(&b.name, &b.stmts)).collect(),
            messages: prog.messages.iter().map(|b| compile(&b.name, &b.stmts)).collect(),
        }
    }

    pub fn program(&self) -> &Program {
        &self.prog
    }

    fn code(&self, b: BodyRef) -> &Code {
        match b {
            BodyRef::Thread(i) => &self.threads[i],
            BodyRef::Message(i) => &self.messages[i],
        }
    }

    pub fn init_state(&self) -> MachineState {
        let insts = self
            .threads
            .iter()
            .enumerate()
            .map(|(i, c)| InstState {
                id: InstanceId::thread(i as u32),
                body: BodyRef::Thread(i),
                handler: None,
                status: Status::NotStarted,
                pc: 0,
                regs: vec![0; c.slots],
                steps: 0,
                posts: 0,
                accesses: Vec::new(),
            })
            .collect();
        MachineState {
            shared: vec![0; self.prog.shared.len()],
            insts,
            busy: vec![None; self.prog.handlers.len()],
            violations: Vec::new(),
        }
    }

    /// Enabled instances, sorted by id.
    pub fn enabled(&self, s: &MachineState) -> Vec<InstanceId> {
        let mut out: Vec<InstanceId> = s
            .insts
            .iter()
            .filter(|i| self.is_enabled_inst(s, i))
            .map(|i| i.id.clone())
            .collect();
        out.sort();
        out
    }

    fn is_enabled_inst(&self, s: &MachineState, i: &InstState) -> bool {
        match (i.status, i.handler) {
            (Status::Finished, _) => false,
            (Status::Running, _) | (Status::NotStarted, None) => true,
            (Status::NotStarted, Some(h)) => s.busy[h as usize].is_none(),
        }
    }

    pub fn is_enabled(&self, s: &MachineState, p: &InstanceId) -> bool {
        s.find(p).is_some_and(|i| self.is_enabled_inst(s, &s.insts[i]))
    }

    /// Performs the next event of `p`. Returns `None` if `p` is not enabled.
    pub fn step(&self, s: &MachineState, p: &InstanceId) -> Result<Option<(MachineState, Event)>, RunError> {
        let Some(idx) = s.find(p) else { return Ok(None) };
        if !self.is_enabled_inst(s, &s.insts[idx]) {
            return Ok(None);
        }
        let mut st = s.clone();
        let ev = self.step_in_place(&mut st, idx)?;
        Ok(Some((st, ev)))
    }

    fn step_in_place(&self, st: &mut MachineState, idx: usize) -> Result<Event, RunError> {
        let inst = &mut st.insts[idx];
        inst.steps += 1;
        let index = inst.steps;
        let id = inst.id.clone();
        let handler = inst.handler;
        if inst.status == Status::NotStarted {
            inst.status = Status::Running;
            if let Some(h) = handler {
                st.busy[h as usize] = Some(idx);
            }
            return Ok(Event { instance: id, index, access: Access::Begin, handler, last: false });
        }
        let code = self.code(inst.body);
        // locals up to and including the next global instruction
        let mut access = Access::Local;
        let overflow = || RunError::Overflow { instance: id.clone() };
        let mut spawned = None;
        loop {
            let inst = &mut st.insts[idx];
            if inst.pc >= code.instrs.len() {
                break;
            }
            let instr = &code.instrs[inst.pc];
            if instr.is_global() && access != Access::Local {
                break;
            }
            inst.pc += 1;
            match instr {
                Instr::Store(v, e) => {
                    let val = eval(e, &inst.regs).ok_or_else(overflow)?;
                    st.shared[*v as usize] = val;
                    access = Access::Write(*v);
                }
                Instr::Load(r, v) => {
                    inst.regs[*r] = st.shared[*v as usize];
                    access = Access::Read(*v);
                }
                Instr::Cas(v, a, b, r) => {
                    let exp = eval(a, &inst.regs).ok_or_else(overflow)?;
                    let new = eval(b, &inst.regs).ok_or_else(overflow)?;
                    let cur = &mut st.shared[*v as usize];
                    if *cur == exp {
                        *cur = new;
                        inst.regs[*r] = 1;
                    } else {
                        inst.regs[*r] = 0;
                    }
                    access = Access::Rmw(*v);
                }
                Instr::Post(m, h) => {
                    inst.posts += 1;
                    let target = id.child(inst.posts);
                    spawned = Some(InstState {
                        id: target.clone(),
                        body: BodyRef::Message(*m as usize),
                        handler: Some(*h),
                        status: Status::NotStarted,
                        pc: 0,
                        regs: vec![0; self.messages[*m as usize].slots],
                        steps: 0,
                        posts: 0,
                        accesses: Vec::new(),
                    });
                    access = Access::Post { target, handler: *h };
                }
                Instr::Let(r, e) => {
                    inst.regs[*r] = eval(e, &inst.regs).ok_or_else(overflow)?;
                }
                Instr::Assert(e, text) => {
                    if eval(e, &inst.regs).ok_or_else(overflow)? == 0 {
                        st.violations.push(Violation { instance: id.clone(), index, assertion: text.clone() });
                    }
                }
                Instr::JumpIfZero(e, t) => {
                    if eval(e, &inst.regs).ok_or_else(overflow)? == 0 {
                        inst.pc = *t;
                    }
                }
                Instr::Jump(t) => inst.pc = *t,
                Instr::LoopInit(slot, n) => inst.regs[*slot] = *n as i64,
                Instr::LoopNext(slot, exit) => {
                    if inst.regs[*slot] == 0 {
                        inst.pc = *exit;
                    } else {
                        inst.regs[*slot] -= 1;
                    }
                }
            }
        }
        if let Some(n) = spawned {
            st.insts.push(n);
        }
        let inst = &mut st.insts[idx];
        if access.is_global() {
            inst.accesses.push(access.clone());
        }
        let last = inst.pc >= code.instrs.len();
        if last {
            inst.status = Status::Finished;
            if let Some(h) = handler {
                st.busy[h as usize] = None;
            }
        }
        Ok(Event { instance: id, index, access, handler, last })
    }

    /// Replays `schedule` from the initial state.
    pub fn run(&self, schedule: &[InstanceId]) -> Result<ExecutionRecord, RunError> {
        let mut st = self.init_state();
        let mut rec = ExecutionRecord::default();
        for i in &st.insts {
            rec.instances.insert(i.id.clone(), self.info(i, None));
        }
        for (pos, p) in schedule.iter().enumerate() {
            let idx = st
                .find(p)
                .filter(|&i| self.is_enabled_inst(&st, &st.insts[i]))
                .ok_or_else(|| RunError::NotEnabled { position: pos, instance: p.clone() })?;
            let ev = self.step_in_place(&mut st, idx)?;
            self.record(&mut rec, &st, ev);
        }
        rec.violations = st.violations.clone();
        Ok(rec)
    }

    fn info(&self, i: &InstState, posted_at: Option<usize>) -> InstanceInfo {
        InstanceInfo {
            name: self.code(i.body).name.clone(),
            handler: i.handler,
            posted_at,
            completed: i.status == Status::Finished,
        }
    }

    /// Appends `ev` (already applied to `st`) to `rec`.
    pub fn record(&self, rec: &mut ExecutionRecord, st: &MachineState, ev: Event) {
        if let Access::Post { target, .. } = &ev.access {
            let i = st.find(target).expect("posted instance exists");
            rec.instances.insert(target.clone(), self.info(&st.insts[i], Some(rec.events.len())));
        }
        if ev.last {
            if let Some(info) = rec.instances.get_mut(&ev.instance) {
                info.completed = true;
            }
        }
        rec.events.push(ev);
    }
}

fn eval(e: &CExpr, regs: &[i64]) -> Option<i64> {
    Some(match e {
        CExpr::Lit(n) => *n,
        CExpr::Reg(r) => regs[*r],
        CExpr::Neg(a) => eval(a, regs)?.checked_neg()?,
        CExpr::Bin(op, a, b) => {
            let (x, y) = (eval(a, regs)?, eval(b, regs)?);
            match op {
                BinOp::Add => x.checked_add(y)?,
                BinOp::Sub => x.checked_sub(y)?,
                BinOp::Mul => x.checked_mul(y)?,
                BinOp::Eq => (x == y) as i64,
                BinOp::Ne => (x != y) as i64,
                BinOp::Lt => (x < y) as i64,
                BinOp::Le => (x <= y) as i64,
                BinOp::Gt => (x > y) as i64,
                BinOp::Ge => (x >= y) as i64,
            }
        }
    })
}
