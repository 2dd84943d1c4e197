//! Instances, events and execution records.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Index of a shared variable in [`Program::shared`](crate::Program).
pub type VarId = u32;
/// Index of a handler in [`Program::handlers`](crate::Program).
pub type HandlerId = u32;

/// Schedule-independent identity of a thread or message instance.
///
/// The first component is the root thread's declaration index; each further
/// component is a 1-based post ordinal of the poster.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId(Arc<[u32]>);

impl InstanceId {
    pub fn thread(index: u32) -> Self {
        InstanceId(Arc::from(vec![index]))
    }

    /// The instance created by the `ordinal`-th post executed by `self`.
    pub fn child(&self, ordinal: u32) -> Self {
        let mut path = self.0.to_vec();
        path.push(ordinal);
        InstanceId(Arc::from(path))
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    pub fn is_thread(&self) -> bool {
        self.0.len() == 1
    }

    pub fn root_thread(&self) -> u32 {
        self.0[0]
    }

    pub fn parent(&self) -> Option<InstanceId> {
        (self.0.len() > 1).then(|| InstanceId(Arc::from(&self.0[..self.0.len() - 1])))
    }

    pub fn from_path(path: &[u32]) -> Option<Self> {
        (!path.is_empty()).then(|| InstanceId(Arc::from(path)))
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0[0])?;
        for k in &self.0[1..] {
            write!(f, ".{k}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for InstanceId {
    type Err = String;

    /// Parses the display form, e.g. `t0.1.2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.strip_prefix('t').ok_or_else(|| format!("instance id `{s}` must start with `t`"))?;
        let path = body
            .split('.')
            .map(|k| k.parse::<u32>().map_err(|_| format!("bad instance id `{s}`")))
            .collect::<Result<Vec<_>, _>>()?;
        if path[1..].contains(&0) {
            return Err(format!("post ordinals are 1-based in `{s}`"));
        }
        Ok(InstanceId(Arc::from(path)))
    }
}

impl serde::Serialize for InstanceId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for InstanceId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// What a single event does to global state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Begin,
    Local,
    Read(VarId),
    Write(VarId),
    Rmw(VarId),
    Post { target: InstanceId, handler: HandlerId },
}

impl Access {
    pub fn var(&self) -> Option<VarId> {
        match self {
            Access::Read(v) | Access::Write(v) | Access::Rmw(v) => Some(*v),
            _ => None,
        }
    }

    pub fn writes(&self) -> bool {
        matches!(self, Access::Write(_) | Access::Rmw(_))
    }

    /// Shared-variable access or post; these are the entries of access summaries.
    pub fn is_global(&self) -> bool {
        !matches!(self, Access::Begin | Access::Local)
    }

    /// Two accesses touch a common variable and at least one writes.
    pub fn conflicts_with(&self, other: &Access) -> bool {
        match (self.var(), other.var()) {
            (Some(a), Some(b)) => a == b && (self.writes() || other.writes()),
            _ => false,
        }
    }
}

/// Conflict relation used to build happens-before.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictMode {
    /// Shared-variable conflicts only.
    #[default]
    Event,
    /// Additionally, any two events of different instances on one handler conflict.
    Coarse,
}

/// One execution step `<instance, index>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Event {
    pub instance: InstanceId,
    /// 1-based; index 1 is always [`Access::Begin`].
    pub index: u32,
    pub access: Access,
    /// Handler the instance runs on; `None` for plain threads.
    pub handler: Option<HandlerId>,
    /// The instance finishes with this event.
    pub last: bool,
}

impl Event {
    pub fn conflicts(&self, other: &Event, mode: ConflictMode) -> bool {
        if self.instance == other.instance {
            return false;
        }
        if mode == ConflictMode::Coarse && self.handler.is_some() && self.handler == other.handler {
            return true;
        }
        self.access.conflicts_with(&other.access)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>:", self.instance, self.index)?;
        match &self.access {
            Access::Begin => write!(f, "begin"),
            Access::Local => write!(f, "local"),
            Access::Read(v) => write!(f, "R{v}"),
            Access::Write(v) => write!(f, "W{v}"),
            Access::Rmw(v) => write!(f, "RMW{v}"),
            Access::Post { target, handler } => write!(f, "post {target}->h{handler}"),
        }
    }
}

/// Removes the first event of `p` from `seq`, if any.
pub fn without_first(seq: &[Event], p: &InstanceId) -> Vec<Event> {
    let mut out = Vec::with_capacity(seq.len());
    let mut removed = false;
    for e in seq {
        if !removed && &e.instance == p {
            removed = true;
        } else {
            out.push(e.clone());
        }
    }
    out
}

/// Per-instance metadata of an execution record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceInfo {
    /// Name of the thread or message declaration.
    pub name: String,
    pub handler: Option<HandlerId>,
    /// Position in `events` of the post that created the instance.
    pub posted_at: Option<usize>,
    pub completed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub instance: InstanceId,
    pub index: u32,
    pub assertion: String,
}

/// A replayable execution: the event sequence plus derived metadata.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutionRecord {
    pub events: Vec<Event>,
    pub instances: BTreeMap<InstanceId, InstanceInfo>,
    pub violations: Vec<Violation>,
}

impl ExecutionRecord {
    pub fn schedule(&self) -> Vec<InstanceId> {
        self.events.iter().map(|e| e.instance.clone()).collect()
    }

    pub fn handler_of(&self, p: &InstanceId) -> Option<HandlerId> {
        self.instances.get(p).and_then(|i| i.handler)
    }

    pub fn is_completed(&self, p: &InstanceId) -> bool {
        self.instances.get(p).is_some_and(|i| i.completed)
    }

    /// Readable label such as `s`, `s.1:p1`.
    pub fn label(&self, p: &InstanceId) -> String {
        let name = self.instances.get(p).map(|i| i.name.as_str()).unwrap_or("?");
        if p.is_thread() {
            name.to_string()
        } else {
            let root = self
                .instances
                .get(&InstanceId::thread(p.root_thread()))
                .map(|i| i.name.as_str())
                .unwrap_or("?");
            let ords: Vec<String> = p.path()[1..].iter().map(|k| k.to_string()).collect();
            format!("{root}.{}:{name}", ords.join("."))
        }
    }
}
