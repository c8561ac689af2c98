use msa::core::{make_pattern, Pattern, PatternStore, Role};
use msa::search::{run, EngineConfig};

fn marked(spec: &str, frequency: u64) -> Pattern {
    let spec: Vec<(String, Role)> = spec
        .split_whitespace()
        .map(|t| match t.strip_prefix('!') {
            Some(rest) => (rest.to_string(), Role::Id),
            None => (t.to_string(), Role::Content),
        })
        .collect();
    make_pattern(&spec, frequency).unwrap()
}

fn content(tokens: &str, frequency: u64) -> Pattern {
    let spec: Vec<(String, Role)> = tokens
        .split_whitespace()
        .map(|t| (t.to_string(), Role::Content))
        .collect();
    make_pattern(&spec, frequency).unwrap()
}

fn toy_grammar() -> PatternStore {
    let mut store = PatternStore::new();
    for (spec, f) in [
        ("!S NP #NP V #V NP #NP !#S", 500),
        ("!NP D #D N #N !#NP", 1000),
        ("!D !0 t h i s !#D", 600),
        ("!D !1 t h a t !#D", 400),
        ("!N !0 g i r l !#N", 300),
        ("!N !1 b o y !#N", 700),
        ("!V !0 l o v e s !#V", 650),
        ("!V !1 h a t e s !#V", 350),
    ] {
        store.add(marked(spec, f));
    }
    store
}

#[test]
fn probe_quota_sensitivity() {
    let store = toy_grammar();
    let new = content("t h i s b o y l o v e s t h a t g i r l", 1);
    for (dq, tq) in [(3usize, 10usize), (3, 20), (3, 40), (6, 40), (10, 60)] {
        let cfg = EngineConfig {
            driving_quota: dq,
            target_quota: tq,
            ..EngineConfig::default()
        };
        let result = run(&store, &new, &cfg).unwrap();
        let best = &result.alignments[0];
        let code: Vec<String> = best
            .derive_code()
            .iter()
            .map(|s| s.token.clone())
            .collect();
        eprintln!(
            "dq={dq} tq={tq} n={} best rows={} cd={:.3} hits={} code={}",
            result.alignments.len(),
            best.rows().len(),
            best.score().unwrap().cd,
            best.hit_new_positions().len(),
            code.join(" ")
        );
    }
}
