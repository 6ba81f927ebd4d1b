//! Terminal-to-terminal AST paths.
//!
//! A path runs from a left terminal up to the lowest common ancestor and down
//! to a right terminal. Only interior (nonterminal) nodes are rendered as
//! symbols: `KIND^` on the upward leg, `KIND` at the apex, `KIND_` on the
//! downward leg. The endpoint terminals contribute their values as subtokens.

mod example;
mod subtoken;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::ast::{Ast, NodeId, NodeKind};
use crate::minij::METHOD_NAME_MASK;

pub use example::{parse_dataset, DatasetError, Example, PathContext};
pub use subtoken::split_subtokens;

/// Upper bound on the rendered path-symbol vocabulary.
pub const MAX_PATH_SYMBOLS: usize = 364;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("need at least 2 terminals, found {0}")]
    TooFewTerminals(usize),
    #[error("path-symbol vocabulary has {0} symbols, limit is {MAX_PATH_SYMBOLS}")]
    VocabularyOverflow(usize),
    #[error("invalid extraction config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionConfig {
    /// Maximum number of interior (nonterminal) nodes on a path.
    pub max_path_length: usize,
    /// Contexts sampled per example per training iteration (k).
    pub max_paths_per_example: usize,
    /// Reserved; paths are never filtered by width.
    pub max_path_width: Option<usize>,
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            max_path_length: 9,
            max_paths_per_example: 200,
            max_path_width: None,
            seed: 0,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), PathError> {
        if self.max_path_length < 1 {
            return Err(PathError::InvalidConfig("max_path_length must be >= 1".into()));
        }
        if self.max_paths_per_example < 1 {
            return Err(PathError::InvalidConfig("max_paths_per_example must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Apex,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    pub node: NodeId,
    pub kind: NodeKind,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstPath {
    pub left: NodeId,
    pub right: NodeId,
    /// Interior nodes from the left terminal's parent to the right terminal's
    /// parent.
    pub steps: Vec<PathStep>,
}

impl AstPath {
    /// Node count including both terminals.
    pub fn len(&self) -> usize {
        self.steps.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The same path walked from right to left.
    pub fn reversed(&self) -> AstPath {
        let steps = self
            .steps
            .iter()
            .rev()
            .map(|s| PathStep {
                node: s.node,
                kind: s.kind.clone(),
                direction: match s.direction {
                    Direction::Up => Direction::Down,
                    Direction::Down => Direction::Up,
                    Direction::Apex => Direction::Apex,
                },
            })
            .collect();
        AstPath {
            left: self.right,
            right: self.left,
            steps,
        }
    }
}

/// Terminals that may end a path: every leaf except the masked method name.
pub fn path_terminals(ast: &Ast) -> Vec<NodeId> {
    ast.terminals()
        .into_iter()
        .filter(|&id| ast.nodes()[id].value.as_deref() != Some(METHOD_NAME_MASK))
        .collect()
}

/// The unique path between two distinct terminals.
pub fn path_between(ast: &Ast, left: NodeId, right: NodeId) -> AstPath {
    let apex = ast
        .lowest_common_ancestor(left, right)
        .expect("terminal ids are valid");
    let mut steps = Vec::new();
    let mut cur = ast.parent(left).expect("terminal below apex");
    while cur != apex {
        steps.push(step(ast, cur, Direction::Up));
        cur = ast.parent(cur).expect("below apex");
    }
    steps.push(step(ast, apex, Direction::Apex));
    let mut down = Vec::new();
    let mut cur = ast.parent(right).expect("terminal below apex");
    while cur != apex {
        down.push(step(ast, cur, Direction::Down));
        cur = ast.parent(cur).expect("below apex");
    }
    steps.extend(down.into_iter().rev());
    AstPath { left, right, steps }
}

fn step(ast: &Ast, node: NodeId, direction: Direction) -> PathStep {
    PathStep {
        node,
        kind: ast.nodes()[node].kind.clone(),
        direction,
    }
}

/// All terminal pairs (left before right) whose interior length is within
/// `cfg.max_path_length`, ordered by (left id, right id).
pub fn enumerate_paths(ast: &Ast, cfg: &ExtractionConfig) -> Result<Vec<AstPath>, PathError> {
    let terminals = path_terminals(ast);
    if terminals.len() < 2 {
        return Err(PathError::TooFewTerminals(terminals.len()));
    }
    let mut out = Vec::new();
    for (i, &a) in terminals.iter().enumerate() {
        for &b in &terminals[i + 1..] {
            let apex = ast.lowest_common_ancestor(a, b).expect("valid ids");
            let apex_depth = ast.depth(apex);
            let interior = (ast.depth(a) - apex_depth) + (ast.depth(b) - apex_depth) - 1;
            if interior <= cfg.max_path_length {
                out.push(path_between(ast, a, b));
            }
        }
    }
    Ok(out)
}

pub fn render_symbol(kind: &NodeKind, direction: Direction) -> String {
    match direction {
        Direction::Up => format!("{kind}^"),
        Direction::Apex => kind.to_string(),
        Direction::Down => format!("{kind}_"),
    }
}

pub fn render_path_symbols(path: &AstPath) -> Vec<String> {
    path.steps
        .iter()
        .map(|s| render_symbol(&s.kind, s.direction))
        .collect()
}

/// Every rendered symbol for a kind set; fails if it exceeds
/// [`MAX_PATH_SYMBOLS`].
pub fn symbol_vocabulary<'a>(
    kinds: impl IntoIterator<Item = &'a str>,
) -> Result<Vec<String>, PathError> {
    let mut out = Vec::new();
    for k in kinds {
        let kind = NodeKind::new(k).map_err(|e| PathError::InvalidConfig(e.to_string()))?;
        for d in [Direction::Up, Direction::Apex, Direction::Down] {
            out.push(render_symbol(&kind, d));
        }
    }
    out.sort();
    out.dedup();
    if out.len() > MAX_PATH_SYMBOLS {
        return Err(PathError::VocabularyOverflow(out.len()));
    }
    Ok(out)
}

pub fn to_context(ast: &Ast, path: &AstPath) -> PathContext {
    let value = |id: NodeId| {
        ast.nodes()[id]
            .value
            .as_deref()
            .expect("path endpoints are terminals")
    };
    PathContext {
        left: split_subtokens(value(path.left)),
        path: render_path_symbols(path),
        right: split_subtokens(value(path.right)),
    }
}

/// Indices of a uniform sample of `k` out of `n` items without replacement,
/// in ascending order. All indices when `n <= k`.
pub fn sample_indices<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    let mut picked = index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

pub fn sample_paths<T: Clone, R: Rng + ?Sized>(paths: &[T], k: usize, rng: &mut R) -> Vec<T> {
    sample_indices(paths.len(), k, rng)
        .into_iter()
        .map(|i| paths[i].clone())
        .collect()
}

/// All path contexts of `ast` plus the split target. Sampling down to k is
/// left to training time.
pub fn build_example(ast: &Ast, target: &str, cfg: &ExtractionConfig) -> Result<Example, PathError> {
    let paths = enumerate_paths(ast, cfg)?;
    Ok(Example {
        target: split_subtokens(target),
        contexts: paths.iter().map(|p| to_context(ast, p)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minij::{extract_target_name, parse_method, SourceUnit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn masked(src: &str) -> Ast {
        let ast = parse_method(&SourceUnit::memory(src)).unwrap();
        extract_target_name(&ast).unwrap().0
    }

    fn values(ast: &Ast, ids: &[NodeId]) -> Vec<String> {
        ids.iter()
            .map(|&i| ast.nodes()[i].value.clone().unwrap())
            .collect()
    }

    #[test]
    fn identity_method_terminals_and_paths() {
        let ast = masked("int f(int x){return x;}");
        let terms = path_terminals(&ast);
        assert_eq!(values(&ast, &terms), ["int", "int", "x", "x"]);
        let paths = enumerate_paths(&ast, &ExtractionConfig::default()).unwrap();
        assert_eq!(paths.len(), 6);
        let pairs: Vec<_> = paths.iter().map(|p| (p.left, p.right)).collect();
        let mut sorted = pairs.clone();
        sorted.sort();
        assert_eq!(pairs, sorted);
    }

    #[test]
    fn hand_rendered_long_path() {
        // int(return type) -> ... -> x(in return): MethodDecl apex, down
        // through Block and ReturnStmt.
        let ast = masked("int f(int x){return x;}");
        let terms = path_terminals(&ast);
        let p = path_between(&ast, terms[0], terms[3]);
        assert_eq!(render_path_symbols(&p), ["MethodDecl", "Block_", "ReturnStmt_"]);
        // Param's int -> return x: 4 interior nodes.
        let p = path_between(&ast, terms[1], terms[3]);
        assert_eq!(
            render_path_symbols(&p),
            ["Param^", "MethodDecl", "Block_", "ReturnStmt_"]
        );
        assert_eq!(p.len(), 6);
    }

    #[test]
    fn sibling_and_apex_paths() {
        let ast = Ast::parse_text(r#"(Assign (Name "a") (Name "b"))"#).unwrap();
        let paths = enumerate_paths(&ast, &ExtractionConfig::default()).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 3);
        assert_eq!(render_path_symbols(&paths[0]), ["Assign"]);
    }

    #[test]
    fn loop_node_is_the_only_difference() {
        let render = |src: &str| {
            let ast = masked(src);
            let ns: Vec<NodeId> = path_terminals(&ast)
                .into_iter()
                .filter(|&t| ast.nodes()[t].value.as_deref() == Some("n"))
                .collect();
            render_path_symbols(&path_between(&ast, ns[0], ns[1]))
        };
        let a = render("void f(){ int n = 0; do { n++; } while (c); }");
        let b = render("void f(){ int n = 0; for (;c;) { n++; } }");
        assert_eq!(
            a,
            ["VarDec^", "Block", "DoStmt_", "Block_", "ExprStmt_", "PostfixExpr:++_"]
        );
        let diffs: Vec<_> = a.iter().zip(&b).filter(|(x, y)| x != y).collect();
        assert_eq!(a.len(), b.len());
        assert_eq!(diffs, vec![(&"DoStmt_".to_string(), &"ForStmt_".to_string())]);
    }

    #[test]
    fn length_filter() {
        let ast = masked("int f(int x){return x;}");
        let cfg = ExtractionConfig {
            max_path_length: 2,
            ..Default::default()
        };
        let paths = enumerate_paths(&ast, &cfg).unwrap();
        assert!(paths.iter().all(|p| p.steps.len() <= 2));
        // ret-int/param-int, ret-int/param-x, param-int/param-x
        assert_eq!(paths.len(), 3);
    }

    #[test]
    fn too_few_terminals() {
        let ast = masked("void f(){}");
        // Only `void` and `{}` remain after masking.
        assert_eq!(enumerate_paths(&ast, &ExtractionConfig::default()).unwrap().len(), 1);
        let one = Ast::parse_text(r#"(Name "x")"#).unwrap();
        assert_eq!(
            enumerate_paths(&one, &ExtractionConfig::default()),
            Err(PathError::TooFewTerminals(1))
        );
        assert!(build_example(&one, "f", &ExtractionConfig::default()).is_err());
    }

    #[test]
    fn reversal_flips_directions() {
        let ast = masked("int f(int x){return x;}");
        let terms = path_terminals(&ast);
        let p = path_between(&ast, terms[1], terms[3]);
        let q = path_between(&ast, terms[3], terms[1]);
        assert_eq!(p.reversed(), q);
    }

    #[test]
    fn shipped_vocabulary_fits() {
        let v = symbol_vocabulary(crate::minij::NODE_KINDS.iter().copied()).unwrap();
        assert_eq!(v.len(), 3 * crate::minij::NODE_KINDS.len());
        assert!(v.len() <= MAX_PATH_SYMBOLS);
        let many: Vec<String> = (0..122).map(|i| format!("K{i}")).collect();
        assert_eq!(
            symbol_vocabulary(many.iter().map(String::as_str)),
            Err(PathError::VocabularyOverflow(366))
        );
    }

    #[test]
    fn sampling() {
        let items: Vec<usize> = (0..5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_paths(&items, 200, &mut rng), items);

        let items: Vec<usize> = (0..50).collect();
        let a = sample_paths(&items, 7, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_paths(&items, 7, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sampling_is_uniform() {
        // Inclusion probability of each of 10 items with k = 3 is 0.3; the
        // count over N draws is binomial with sd sqrt(N p (1-p)).
        let n_draws = 100_000;
        let mut counts = [0usize; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..n_draws {
            for i in sample_indices(10, 3, &mut rng) {
                counts[i] += 1;
            }
        }
        let p = 0.3;
        let sd = (n_draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n_draws as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn example_for_identity_method() {
        let ast = masked("int f(int x){return x;}");
        let ex = build_example(&ast, "f", &ExtractionConfig::default()).unwrap();
        assert_eq!(ex.contexts.len(), 6);
        assert_eq!(ex.target, ["f"]);
        let ex = build_example(&ast, "countOccurrences", &ExtractionConfig::default()).unwrap();
        assert_eq!(ex.target, ["count", "occurrences"]);
    }
}
