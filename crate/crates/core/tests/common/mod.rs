//! Shared helpers for the integration tests: a random MiniJ method
//! generator and a brute-force path oracle.

#![allow(dead_code)]

use std::collections::BTreeSet;

use pathseq::ast::Ast;
use pathseq::minij::METHOD_NAME_MASK;
use rand::seq::IndexedRandom;
use rand::Rng;

const IDENTS: &[&str] = &["a", "b", "count", "itemList", "maxValue", "x", "buf", "HTTPCode", "n2"];
const CALLS: &[&str] = &["foo", "log", "compute", "check"];
const TYPES: &[&str] = &["int", "boolean", "String", "char"];
const BINOPS: &[&str] = &["+", "-", "*", "/", "%", "<", ">", "<=", ">=", "==", "!=", "&&", "||"];

fn ident<R: Rng>(rng: &mut R) -> &'static str {
    IDENTS.choose(rng).unwrap()
}

fn expr<R: Rng>(rng: &mut R, depth: usize) -> String {
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        return match rng.random_range(0..5) {
            0 => rng.random_range(0..100).to_string(),
            1 => "\"s\"".into(),
            2 => ["true", "false"].choose(rng).unwrap().to_string(),
            _ => ident(rng).into(),
        };
    }
    match rng.random_range(0..7) {
        0 | 1 => format!("{} {} {}", expr(rng, depth - 1), BINOPS.choose(rng).unwrap(), expr(rng, depth - 1)),
        2 => format!("!({})", expr(rng, depth - 1)),
        3 => format!("{}({})", CALLS.choose(rng).unwrap(), expr(rng, depth - 1)),
        4 => format!("{}.{}", ident(rng), ident(rng)),
        5 => format!("{}[{}]", ident(rng), expr(rng, depth - 1)),
        _ => format!("({})", expr(rng, depth - 1)),
    }
}

fn block<R: Rng>(rng: &mut R, depth: usize) -> String {
    let n = rng.random_range(0..3);
    let body: Vec<String> = (0..n).map(|_| stmt(rng, depth)).collect();
    format!("{{ {} }}", body.join(" "))
}

fn stmt<R: Rng>(rng: &mut R, depth: usize) -> String {
    let simple = depth == 0 || rng.random_bool(0.4);
    if simple {
        return match rng.random_range(0..5) {
            0 => format!("return {};", expr(rng, 2)),
            1 => format!("{} = {};", ident(rng), expr(rng, 2)),
            2 => format!("{}++;", ident(rng)),
            3 => format!("{} {} = {};", TYPES.choose(rng).unwrap(), ident(rng), expr(rng, 1)),
            _ => format!("{}({});", CALLS.choose(rng).unwrap(), expr(rng, 1)),
        };
    }
    match rng.random_range(0..5) {
        0 => format!("if ({}) {}", expr(rng, 2), block(rng, depth - 1)),
        1 => format!("if ({}) {} else {}", expr(rng, 1), block(rng, depth - 1), block(rng, depth - 1)),
        2 => format!("while ({}) {}", expr(rng, 2), block(rng, depth - 1)),
        3 => format!("do {} while ({});", block(rng, depth - 1), expr(rng, 1)),
        _ => format!("for (int i = 0; i < {}; i++) {}", ident(rng), block(rng, depth - 1)),
    }
}

/// Source of a random method; nesting depth is bounded, terminal count is
/// not (callers filter).
pub fn random_method<R: Rng>(rng: &mut R) -> String {
    let ret = ["void", "int", "boolean", "String"].choose(rng).unwrap();
    let params: Vec<String> = (0..rng.random_range(0..3))
        .map(|i| format!("{} p{i}", TYPES.choose(rng).unwrap()))
        .collect();
    let body: Vec<String> = (0..rng.random_range(1..4)).map(|_| stmt(rng, 3)).collect();
    format!("{ret} {}({}) {{ {} }}", ident(rng), params.join(", "), body.join(" "))
}

/// (left terminal, right terminal, interior node ids) of every path between
/// two unmasked terminals, left before right, whose interior has at most
/// `max_interior` nodes. Parents come from the child lists and the apex
/// from intersecting full root chains.
pub fn brute_force_paths(ast: &Ast, max_interior: usize) -> BTreeSet<(usize, usize, Vec<usize>)> {
    let nodes = ast.nodes();
    let mut parent = vec![None; nodes.len()];
    for n in nodes {
        for &c in &n.children {
            parent[c] = Some(n.id);
        }
    }
    let chain = |mut v: usize| {
        let mut out = vec![v];
        while let Some(p) = parent[v] {
            out.push(p);
            v = p;
        }
        out
    };
    // in-order leaves
    let mut leaves = Vec::new();
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        if nodes[v].children.is_empty() {
            if nodes[v].value.as_deref() != Some(METHOD_NAME_MASK) {
                leaves.push(v);
            }
        } else {
            stack.extend(nodes[v].children.iter().rev());
        }
    }
    let mut out = BTreeSet::new();
    for (i, &a) in leaves.iter().enumerate() {
        for &b in &leaves[i + 1..] {
            let ca = chain(a);
            let cb = chain(b);
            let apex = *ca.iter().find(|v| cb.contains(v)).unwrap();
            let up: Vec<usize> = ca[1..].iter().copied().take_while(|&v| v != apex).collect();
            let down: Vec<usize> = cb[1..].iter().copied().take_while(|&v| v != apex).collect();
            let mut interior = up;
            interior.push(apex);
            interior.extend(down.into_iter().rev());
            if interior.len() <= max_interior {
                out.insert((a, b, interior));
            }
        }
    }
    out
}
