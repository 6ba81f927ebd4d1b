//! Synthetic MiniJ corpora with descriptive method names.
//!
//! A name is `verb [adjective] noun`. The verb is fixed by the shape of the
//! body, the adjective and noun by the field the body touches (`maxSize`),
//! so a name is recoverable from paths plus tokens, and held-out names can
//! recombine subtokens that were all seen in training.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::method_examples;
use crate::minij::SourceUnit;
use crate::paths::{Example, ExtractionConfig};

pub const VERBS: &[&str] = &["get", "set", "reset", "increment", "is", "has", "print", "compute", "check", "update"];
pub const ADJECTIVES: &[&str] = &["max", "min", "current", "total", "default", "last", "next", "local", "first", "remote", "active", "pending"];
pub const NOUNS: &[&str] = &[
    "size", "count", "name", "value", "index", "width", "height", "port", "timeout", "buffer", "score", "level", "offset", "limit", "weight",
];
const PARAMS: &[&str] = &["value", "v", "x", "arg", "input", "amount", "delta", "n"];
const LOCALS: &[&str] = &["tmp", "result", "acc", "sum", "k", "t", "r"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Name {
    pub verb: &'static str,
    pub adjective: Option<&'static str>,
    pub noun: &'static str,
}

impl Name {
    pub fn subtokens(&self) -> Vec<String> {
        let mut v = vec![self.verb.to_string()];
        v.extend(self.adjective.map(str::to_string));
        v.push(self.noun.to_string());
        v
    }

    /// camelCase with the given leading word.
    fn camel(words: &[&str]) -> String {
        let mut out = String::new();
        for (i, w) in words.iter().enumerate() {
            if i == 0 {
                out.push_str(w);
            } else {
                let mut c = w.chars();
                if let Some(f) = c.next() {
                    out.extend(f.to_uppercase());
                    out.push_str(c.as_str());
                }
            }
        }
        out
    }

    pub fn method_name(&self) -> String {
        Name::camel(&self.subtokens().iter().map(String::as_str).collect::<Vec<_>>())
    }

    pub fn field(&self) -> String {
        match self.adjective {
            Some(a) => Name::camel(&[a, self.noun]),
            None => self.noun.to_string(),
        }
    }
}

/// Every name the generator can produce, in a fixed order.
pub fn all_names() -> Vec<Name> {
    let mut out = Vec::new();
    for &verb in VERBS {
        for adjective in std::iter::once(None).chain(ADJECTIVES.iter().copied().map(Some)) {
            for &noun in NOUNS {
                out.push(Name { verb, adjective, noun });
            }
        }
    }
    out
}

/// Source of one method whose body shape encodes the verb.
pub fn method_source<R: Rng + ?Sized>(name: &Name, rng: &mut R) -> String {
    let f = if rng.random_bool(0.5) {
        format!("this.{}", name.field())
    } else {
        name.field()
    };
    let p = PARAMS.choose(rng).expect("non-empty");
    let l = LOCALS.choose(rng).expect("non-empty");
    let m = name.method_name();
    let c: i32 = rng.random_range(1..10);
    match name.verb {
        "get" => format!("int {m}() {{ return {f}; }}"),
        "set" => format!("void {m}(int {p}) {{ {f} = {p}; }}"),
        "reset" => format!("void {m}() {{ {f} = 0; }}"),
        "increment" => format!("void {m}() {{ {f}++; }}"),
        "is" => format!("boolean {m}() {{ return {f} > {c}; }}"),
        "has" => format!("boolean {m}() {{ return {f} != null; }}"),
        "print" => format!("void {m}() {{ System.out.println({f}); }}"),
        "compute" => format!(
            "int {m}(int[] {p}) {{ int {l} = 0; for (int i = 0; i < {p}.length; i++) {{ {l} = {l} + {p}[i] * {c}; }} {f} = {l}; return {l}; }}"
        ),
        "check" => format!("void {m}() {{ if ({f} < 0) {{ {f} = {c}; }} }}"),
        "update" => format!("void {m}(int {p}) {{ {f} = {f} + {p}; }}"),
        other => unreachable!("unknown verb {other}"),
    }
}

/// Method sources split into training and held-out sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSources {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

/// `total` distinct names, of which `held_out` go to the test set. Every
/// test subtoken also occurs in some training name.
pub fn generate_sources(total: usize, held_out: usize, seed: u64) -> SynthSources {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = all_names();
    assert!(total <= names.len(), "at most {} distinct names", names.len());
    assert!(held_out <= total);
    names.shuffle(&mut rng);
    names.truncate(total);
    let mut test = Vec::new();
    let mut train: Vec<Name> = Vec::new();
    let mut pool = names;
    while test.len() < held_out {
        let Some(cand) = pool.pop() else { break };
        let covered: BTreeSet<String> = pool.iter().chain(&train).flat_map(Name::subtokens).collect();
        if cand.subtokens().iter().all(|s| covered.contains(s)) {
            test.push(cand);
        } else {
            train.push(cand);
        }
    }
    train.extend(pool);
    train.sort();
    train.shuffle(&mut rng);
    SynthSources {
        train: train.iter().map(|n| method_source(n, &mut rng)).collect(),
        test: test.iter().map(|n| method_source(n, &mut rng)).collect(),
    }
}

/// [`generate_sources`] run through the extraction pipeline.
pub fn generate(total: usize, held_out: usize, seed: u64) -> SynthCorpus {
    let src = generate_sources(total, held_out, seed);
    let cfg = ExtractionConfig::default();
    let build = |texts: &[String]| -> Vec<Example> {
        texts
            .iter()
            .map(|text| {
                let (mut exs, skipped) = method_examples(&SourceUnit::memory(text.clone()), &cfg, None);
                assert!(skipped.is_empty() && exs.len() == 1, "generator produced bad MiniJ: {text}");
                exs.remove(0)
            })
            .collect()
    };
    SynthCorpus {
        train: build(&src.train),
        test: build(&src.test),
    }
}
