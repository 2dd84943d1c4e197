//! Parametric generators for the figure programs and benchmark families.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::BenchError;
use crate::program::{parse_program, Program};

pub type Params = BTreeMap<String, u32>;

/// Static description of a generator.
#[derive(Clone, Copy, Debug)]
pub struct BenchmarkSpec {
    pub name: &'static str,
    /// Parameter names with inclusive ranges.
    pub params: &'static [(&'static str, u32, u32)],
    /// Every message sharing a handler performs a fixed access sequence.
    pub non_branching: bool,
    pub about: &'static str,
}

pub const BENCHMARKS: &[BenchmarkSpec] = &[
    BenchmarkSpec { name: "fig1_wrr", params: &[], non_branching: true, about: "one writer, two readers of x" },
    BenchmarkSpec { name: "fig2_nc", params: &[], non_branching: true, about: "two non-conflicting messages on h" },
    BenchmarkSpec { name: "fig2_conf", params: &[], non_branching: true, about: "two messages conflicting on x and y" },
    BenchmarkSpec { name: "fig3_branch", params: &[], non_branching: false, about: "message whose second read depends on x" },
    BenchmarkSpec { name: "fig4_two_handlers", params: &[], non_branching: true, about: "four messages on two handlers" },
    BenchmarkSpec { name: "fig5_wi", params: &[], non_branching: false, about: "weak-initials illustration" },
    BenchmarkSpec { name: "writers", params: &[("n", 1, 12)], non_branching: true, about: "n messages store to x and assert the value" },
    BenchmarkSpec { name: "posters", params: &[("n", 1, 12)], non_branching: true, about: "writers that also post a follow-up store" },
    BenchmarkSpec { name: "prolific_cycle", params: &[("n", 2, 16)], non_branching: true, about: "n messages conflicting in a cycle" },
    BenchmarkSpec { name: "plb", params: &[("n", 1, 64)], non_branching: true, about: "main posts n tasks on private buffers" },
    BenchmarkSpec { name: "ping_pong", params: &[("n", 1, 8)], non_branching: true, about: "ping thread and pong handler exchange n rounds" },
    BenchmarkSpec { name: "consensus_lite", params: &[("n", 2, 4)], non_branching: false, about: "n broadcasters, n collectors taking the max" },
];

pub fn spec(name: &str) -> Option<&'static BenchmarkSpec> {
    BENCHMARKS.iter().find(|b| b.name == name)
}

/// Program source text for a generator instance.
pub fn source(name: &str, params: &Params) -> Result<String, BenchError> {
    let b = spec(name).ok_or_else(|| BenchError::Unknown(name.to_string()))?;
    for key in params.keys() {
        if !b.params.iter().any(|(p, ..)| p == key) {
            return Err(BenchError::Param { name: key.clone(), msg: format!("not a parameter of {name}") });
        }
    }
    let mut vals = Vec::new();
    for &(p, lo, hi) in b.params {
        let v = *params
            .get(p)
            .ok_or_else(|| BenchError::Param { name: p.to_string(), msg: "missing".to_string() })?;
        if v < lo || v > hi {
            return Err(BenchError::Param { name: p.to_string(), msg: format!("{v} not in {lo}..={hi}") });
        }
        vals.push(v);
    }
    let n = vals.first().copied().unwrap_or(0) as usize;
    Ok(match name {
        "fig1_wrr" => FIG1.to_string(),
        "fig2_nc" => FIG2_NC.to_string(),
        "fig2_conf" => FIG2_CONF.to_string(),
        "fig3_branch" => FIG3.to_string(),
        "fig4_two_handlers" => FIG4.to_string(),
        "fig5_wi" => FIG5.to_string(),
        "writers" => writers(n, false),
        "posters" => writers(n, true),
        "prolific_cycle" => prolific_cycle(n),
        "plb" => plb(n),
        "ping_pong" => ping_pong(n),
        "consensus_lite" => consensus_lite(n),
        _ => unreachable!(),
    })
}

pub fn generate(name: &str, params: &Params) -> Result<Program, BenchError> {
    let src = source(name, params)?;
    Ok(parse_program(&src).expect("generated source parses"))
}

/// Shorthand for a single `n` parameter.
pub fn with_n(n: u32) -> Params {
    Params::from([("n".to_string(), n)])
}

/// Corpus file name, e.g. `prolific_cycle_n4.evp`.
pub fn corpus_file_name(name: &str, params: &Params) -> String {
    let mut s = name.to_string();
    for (k, v) in params {
        let _ = write!(s, "_{k}{v}");
    }
    s.push_str(".evp");
    s
}

/// Generator instances forming the regression corpus.
pub fn corpus() -> Vec<(&'static str, Params)> {
    let mut out: Vec<(&'static str, Params)> = BENCHMARKS
        .iter()
        .filter(|b| b.params.is_empty())
        .map(|b| (b.name, Params::new()))
        .collect();
    let sized: &[(&str, &[u32])] = &[
        ("writers", &[1, 2, 3, 4]),
        ("posters", &[1, 2, 3]),
        ("prolific_cycle", &[2, 3, 4, 5]),
        ("plb", &[1, 2, 3, 4]),
        ("ping_pong", &[1, 2, 3]),
        ("consensus_lite", &[2, 3]),
    ];
    for (name, ns) in sized {
        for &n in *ns {
            out.push((name, with_n(n)));
        }
    }
    out
}

const FIG1: &str = "\
shared x y z
thread s { store x 1 }
thread t { load a y  load b x }
thread u { load c z  load d x }
";

const FIG2_NC: &str = "\
shared x y
handler h
thread s { post p1 -> h }
thread t { post p2 -> h }
message p1 { store x 1 }
message p2 { store y 2 }
";

const FIG2_CONF: &str = "\
shared x y
handler h
thread s { post p1 -> h }
thread t { post p2 -> h }
message p1 { let u = 1  store x 1  store y 1 }
message p2 { let v = 2  load a x  load b y }
";

const FIG3: &str = "\
shared x y
handler h
thread s { post p1 -> h  store x 1 }
thread t { post p2 -> h }
message p1 { store y 2 }
message p2 { load a x  if a == 0 { load b y } }
";

const FIG4: &str = "\
shared x y z
handler h k
thread t { post p1 -> h  post p2 -> h  post q1 -> k  post q2 -> k }
message p1 { let d = 1  load a y }
message p2 { store z 1 }
message q1 { store y 1  store x 1 }
message q2 { load b z  load c x }
";

const FIG5: &str = "\
shared x y z
handler h
thread s { post p1 -> h }
thread t { post p2 -> h }
message p1 { store x 1 }
message p2 { store y 2  store z 2 }
";

fn writers(n: usize, posters: bool) -> String {
    let mut s = String::from("shared x\nhandler h\n");
    for i in 1..=n {
        let _ = writeln!(s, "thread w{i} {{ post m{i} -> h }}");
    }
    for i in 1..=n {
        if posters {
            let _ = writeln!(s, "message m{i} {{ store x {i}  post f -> h  load r x  assert r == {i} }}");
        } else {
            let _ = writeln!(s, "message m{i} {{ store x {i}  load r x  assert r == {i} }}");
        }
    }
    if posters {
        s.push_str("message f { store x 0 }\n");
    }
    s
}

fn prolific_cycle(n: usize) -> String {
    let vars: Vec<String> = (1..=n).map(|i| format!("v{i}")).collect();
    let mut s = format!("shared {}\nhandler h\n", vars.join(" "));
    for i in 1..=n {
        let _ = writeln!(s, "thread t{i} {{ post m{i} -> h }}");
    }
    for i in 1..=n {
        let next = i % n + 1;
        let _ = writeln!(s, "message m{i} {{ store v{i} 1  store v{next} 1 }}");
    }
    s
}

fn plb(n: usize) -> String {
    let bufs: Vec<String> = (1..=n).map(|i| format!("d{i}")).collect();
    let mut s = format!("shared {}\nhandler pool\nthread main {{\n", bufs.join(" "));
    for i in 1..=n {
        let _ = writeln!(s, "  store d{i} {i}\n  post task{i} -> pool");
    }
    s.push_str("}\n");
    for i in 1..=n {
        let _ = writeln!(s, "message task{i} {{ load r d{i}  store d{i} r + 1 }}");
    }
    s
}

fn ping_pong(n: usize) -> String {
    format!(
        "shared num ack\nhandler hping hpong\n\
         thread ping {{ repeat {n} {{ let i = i + 1  store num i  post pong -> hpong }} }}\n\
         message pong {{ load r num  store ack r  post pang -> hping }}\n\
         message pang {{ load a ack }}\n"
    )
}

fn consensus_lite(n: usize) -> String {
    let mut vars = Vec::new();
    for i in 1..=n {
        vars.push(format!("val{i}"));
        vars.push(format!("dec{i}"));
    }
    let handlers: Vec<String> = (1..=n).map(|i| format!("c{i}")).collect();
    let mut s = format!("shared {}\nhandler {}\n", vars.join(" "), handlers.join(" "));
    for i in 1..=n {
        let _ = write!(s, "thread b{i} {{ store val{i} {i}  store dec{i} {i}");
        for j in (1..=n).filter(|&j| j != i) {
            let _ = write!(s, "  post d{i}_{j} -> c{j}");
        }
        s.push_str(" }\n");
    }
    for i in 1..=n {
        for j in (1..=n).filter(|&j| j != i) {
            let _ = writeln!(
                s,
                "message d{i}_{j} {{ load v val{i}  load d dec{j}  if v > d {{ store dec{j} v }} }}"
            );
        }
    }
    s
}
