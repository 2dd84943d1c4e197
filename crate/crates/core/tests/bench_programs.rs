mod common;

use std::collections::{BTreeMap, BTreeSet};

use evdpor::bench_programs::{corpus, corpus_file_name, generate, source, spec, with_n, Params, BENCHMARKS};
use evdpor::consistency::Summary;
use evdpor::wakeup::summary_in;
use evdpor::{explore, parse_program, to_source, Algorithm, BenchError, ExploreConfig, InstanceId, Machine};

use common::continuations;

/// Access sequences of every instance over all maximal schedules.
fn access_sequences(name: &str, params: &Params) -> Option<BTreeMap<InstanceId, BTreeSet<Summary>>> {
    let m = Machine::new(&generate(name, params).unwrap());
    const LIMIT: usize = 200_000;
    let runs = continuations(&m, &m.init_state(), None, LIMIT);
    if runs.len() >= LIMIT {
        return None;
    }
    let mut out: BTreeMap<InstanceId, BTreeSet<Summary>> = BTreeMap::new();
    for r in &runs {
        let insts: BTreeSet<&InstanceId> = r.iter().map(|e| &e.instance).collect();
        for p in insts {
            out.entry(p.clone()).or_default().insert(summary_in(r, p));
        }
    }
    Some(out)
}

#[test]
fn non_branching_classification_holds() {
    let mut checked = 0;
    for (name, params) in corpus() {
        let Some(seqs) = access_sequences(name, &params) else { continue };
        checked += 1;
        let single = seqs.values().all(|s| s.len() == 1);
        if spec(name).unwrap().non_branching {
            assert!(single, "{name} {params:?} varies: {seqs:?}");
        }
    }
    assert!(checked >= 20, "{checked}");
    for name in ["fig3_branch", "consensus_lite"] {
        let params = if name == "consensus_lite" { with_n(2) } else { Params::new() };
        let seqs = access_sequences(name, &params).unwrap();
        assert!(seqs.values().any(|s| s.len() > 1), "{name}");
    }
}

#[test]
fn generators_round_trip() {
    for b in BENCHMARKS {
        let mut sets = vec![Params::new()];
        for &(k, lo, hi) in b.params {
            sets = [lo, hi, (lo + hi) / 2].iter().map(|&v| Params::from([(k.to_string(), v)])).collect();
        }
        for params in sets {
            let p = generate(b.name, &params).unwrap();
            assert_eq!(parse_program(&to_source(&p)).unwrap(), p, "{}", b.name);
            assert_eq!(parse_program(&source(b.name, &params).unwrap()).unwrap(), p);
        }
    }
}

#[test]
fn generator_errors() {
    assert!(matches!(generate("nope", &Params::new()), Err(BenchError::Unknown(_))));
    assert!(matches!(generate("plb", &Params::new()), Err(BenchError::Param { .. })));
    assert!(matches!(generate("plb", &with_n(0)), Err(BenchError::Param { .. })));
    assert!(matches!(generate("plb", &with_n(65)), Err(BenchError::Param { .. })));
    let mut extra = with_n(2);
    extra.insert("m".into(), 1);
    assert!(matches!(generate("plb", &extra), Err(BenchError::Param { .. })));
    assert!(matches!(generate("fig1_wrr", &with_n(1)), Err(BenchError::Param { .. })));
}

#[test]
fn generator_examples() {
    let ev = |name: &str, params: Params| explore(&generate(name, &params).unwrap(), &ExploreConfig::new(Algorithm::EventDpor)).unwrap().traces;
    assert_eq!(ev("prolific_cycle", with_n(4)), 14);
    assert_eq!(ev("plb", with_n(7)), 1);
    assert_eq!(ev("fig1_wrr", Params::new()), 4);
    let w2 = evdpor::brute_force(&generate("writers", &with_n(2)).unwrap(), 1_000_000).unwrap().keys.len() as u64;
    assert_eq!(ev("writers", with_n(2)), w2);
}

#[test]
fn prolific_cycle_structure() {
    let p = generate("prolific_cycle", &with_n(4)).unwrap();
    assert_eq!(p.threads.len(), 4);
    assert_eq!(p.messages.len(), 4);
    assert_eq!(p.handlers.len(), 1);
    let src = source("prolific_cycle", &with_n(4)).unwrap();
    assert_eq!(src.matches("post ").count(), 4);
}

#[test]
fn corpus_file_names() {
    assert_eq!(corpus_file_name("prolific_cycle", &with_n(4)), "prolific_cycle_n4.evp");
    assert_eq!(corpus_file_name("fig1_wrr", &Params::new()), "fig1_wrr.evp");
    let names: BTreeSet<String> = corpus().iter().map(|(n, p)| corpus_file_name(n, p)).collect();
    assert_eq!(names.len(), corpus().len());
}

#[test]
fn checked_in_corpus_is_current() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    for (name, params) in corpus() {
        let path = dir.join(corpus_file_name(name, &params));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text, source(name, &params).unwrap(), "{}", path.display());
    }
}
