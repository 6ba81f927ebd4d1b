//! Arena-backed abstract syntax trees.
//!
//! Nodes are stored in pre-order, so a node's id is its position in a
//! depth-first left-to-right walk and the root is always id 0. Terminals are
//! leaves carrying a non-empty string value; nonterminals carry no value and
//! have at least one child.
//!
//! The generic text format is a parenthesized prefix form:
//!
//! ```text
//! (MethodDecl (PrimitiveType "int") (Name "f") (Block (ReturnStmt (Name "x"))))
//! ```

use std::fmt;

use thiserror::Error;

pub type NodeId = usize;

/// Characters that may not appear in a kind name. `,` and `|` are separators
/// in the dataset line format; the rest are structural in the text format.
const RESERVED_KIND_CHARS: &[char] = &[',', '|', '(', ')', '"', '^'];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AstError {
    #[error("invalid node id {0}")]
    InvalidId(NodeId),
    #[error("invalid node kind {0:?}")]
    InvalidKind(String),
    #[error("terminal {0} has an empty value")]
    EmptyValue(String),
    #[error("malformed AST text at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
}

/// Symbolic name of a syntactic construct, e.g. `DoStmt` or `BinaryExpr:+`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKind(Box<str>);

impl NodeKind {
    pub fn new(name: &str) -> Result<Self, AstError> {
        let bad = name.is_empty()
            || name.ends_with('_')
            || name
                .chars()
                .any(|c| c.is_whitespace() || RESERVED_KIND_CHARS.contains(&c));
        if bad {
            return Err(AstError::InvalidKind(name.to_string()));
        }
        Ok(NodeKind(name.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Owned tree used to build an [`Ast`]; ids are assigned on conversion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tree {
    Node(NodeKind, Vec<Tree>),
    Leaf(NodeKind, String),
}

impl Tree {
    /// Convenience constructor; panics on an invalid kind name, so it is meant
    /// for kinds known at compile time.
    pub fn node(kind: &str, children: Vec<Tree>) -> Tree {
        Tree::Node(NodeKind::new(kind).expect("static kind name"), children)
    }

    pub fn leaf(kind: &str, value: impl Into<String>) -> Tree {
        Tree::Leaf(NodeKind::new(kind).expect("static kind name"), value.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Present exactly for terminals.
    pub value: Option<String>,
    pub children: Vec<NodeId>,
}

impl AstNode {
    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }
}

/// An immutable, well-formed syntax tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    nodes: Vec<AstNode>,
    parents: Vec<Option<NodeId>>,
    depths: Vec<usize>,
}

impl Ast {
    pub fn from_tree(tree: Tree) -> Result<Ast, AstError> {
        let mut ast = Ast {
            nodes: Vec::new(),
            parents: Vec::new(),
            depths: Vec::new(),
        };
        // Explicit stack keeps deep expression chains off the call stack.
        let mut stack: Vec<(Tree, Option<NodeId>)> = vec![(tree, None)];
        while let Some((t, parent)) = stack.pop() {
            let id = ast.nodes.len();
            let depth = parent.map_or(0, |p| ast.depths[p] + 1);
            if let Some(p) = parent {
                ast.nodes[p].children.push(id);
            }
            ast.parents.push(parent);
            ast.depths.push(depth);
            match t {
                Tree::Leaf(kind, value) => {
                    if value.is_empty() {
                        return Err(AstError::EmptyValue(kind.to_string()));
                    }
                    ast.nodes.push(AstNode {
                        id,
                        kind,
                        value: Some(value),
                        children: Vec::new(),
                    });
                }
                Tree::Node(kind, children) => {
                    if children.is_empty() {
                        return Err(AstError::Malformed {
                            offset: 0,
                            message: format!("nonterminal {kind} has no children"),
                        });
                    }
                    ast.nodes.push(AstNode {
                        id,
                        kind,
                        value: None,
                        children: Vec::with_capacity(children.len()),
                    });
                    for child in children.into_iter().rev() {
                        stack.push((child, Some(id)));
                    }
                }
            }
        }
        Ok(ast)
    }

    /// Rebuilds the owned tree form.
    pub fn to_tree(&self) -> Tree {
        self.subtree(0)
    }

    fn subtree(&self, id: NodeId) -> Tree {
        let n = &self.nodes[id];
        match &n.value {
            Some(v) => Tree::Leaf(n.kind.clone(), v.clone()),
            None => Tree::Node(
                n.kind.clone(),
                n.children.iter().map(|&c| self.subtree(c)).collect(),
            ),
        }
    }

    pub fn root(&self) -> &AstNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&AstNode, AstError> {
        self.nodes.get(id).ok_or(AstError::InvalidId(id))
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents.get(id).copied().flatten()
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.depths[id]
    }

    /// Terminal ids in left-to-right order. Pre-order ids already respect
    /// left-to-right leaf order, so this is a filter over the arena.
    pub fn terminals(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.is_terminal())
            .map(|n| n.id)
            .collect()
    }

    pub fn lowest_common_ancestor(&self, a: NodeId, b: NodeId) -> Result<NodeId, AstError> {
        for id in [a, b] {
            if id >= self.nodes.len() {
                return Err(AstError::InvalidId(id));
            }
        }
        let (mut a, mut b) = (a, b);
        while self.depths[a] > self.depths[b] {
            a = self.parents[a].expect("non-root has a parent");
        }
        while self.depths[b] > self.depths[a] {
            b = self.parents[b].expect("non-root has a parent");
        }
        while a != b {
            a = self.parents[a].expect("non-root has a parent");
            b = self.parents[b].expect("non-root has a parent");
        }
        Ok(a)
    }

    /// Replaces the value of terminal `id`, leaving the shape untouched.
    pub fn with_terminal_value(&self, id: NodeId, value: &str) -> Result<Ast, AstError> {
        let node = self.node(id)?;
        if !node.is_terminal() {
            return Err(AstError::InvalidId(id));
        }
        if value.is_empty() {
            return Err(AstError::EmptyValue(node.kind.to_string()));
        }
        let mut out = self.clone();
        out.nodes[id].value = Some(value.to_string());
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(0, &mut out);
        out
    }

    fn write_text(&self, id: NodeId, out: &mut String) {
        let n = &self.nodes[id];
        out.push('(');
        out.push_str(n.kind.as_str());
        match &n.value {
            Some(v) => {
                out.push_str(" \"");
                for c in v.chars() {
                    if c == '"' || c == '\\' {
                        out.push('\\');
                    }
                    out.push(c);
                }
                out.push('"');
            }
            None => {
                for &c in &n.children {
                    out.push(' ');
                    self.write_text(c, out);
                }
            }
        }
        out.push(')');
    }

    pub fn parse_text(text: &str) -> Result<Ast, AstError> {
        let mut p = TextParser { src: text, pos: 0 };
        p.skip_ws();
        if p.pos == text.len() {
            return Err(p.error("empty input"));
        }
        let tree = p.tree()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.error("trailing input after tree"));
        }
        Ast::from_tree(tree)
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

struct TextParser<'a> {
    src: &'a str,
    pos: usize,
}

impl TextParser<'_> {
    fn error(&self, message: &str) -> AstError {
        AstError::Malformed {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), AstError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == want => {
                self.pos += c.len_utf8();
                Ok(())
            }
            _ => Err(self.error(&format!("expected '{want}'"))),
        }
    }

    fn tree(&mut self) -> Result<Tree, AstError> {
        self.expect('(')?;
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                break;
            }
            self.pos += c.len_utf8();
        }
        if start == self.pos {
            return Err(self.error("expected node kind"));
        }
        let kind = NodeKind::new(&self.src[start..self.pos]).map_err(|_| AstError::Malformed {
            offset: start,
            message: format!("invalid kind {:?}", &self.src[start..self.pos]),
        })?;
        self.skip_ws();
        match self.peek() {
            Some('"') => {
                let at = self.pos;
                let value = self.string()?;
                if value.is_empty() {
                    return Err(AstError::Malformed {
                        offset: at,
                        message: "empty terminal value".into(),
                    });
                }
                self.expect(')')?;
                Ok(Tree::Leaf(kind, value))
            }
            Some('(') => {
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some('(') => children.push(self.tree()?),
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => return Err(self.error("expected '(' or ')'")),
                        None => return Err(self.error("unexpected end of input")),
                    }
                }
                Ok(Tree::Node(kind, children))
            }
            Some(')') => Err(self.error("nonterminal without children")),
            Some(_) => Err(self.error("expected value or child")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn string(&mut self) -> Result<String, AstError> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.error("unterminated string"));
            };
            self.pos += c.len_utf8();
            match c {
                '"' => return Ok(out),
                '\\' => match self.peek() {
                    Some(e @ ('"' | '\\')) => {
                        self.pos += 1;
                        out.push(e);
                    }
                    _ => return Err(self.error("invalid escape")),
                },
                c => out.push(c),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Ast {
        // (A (B (T "x") (T "y")) (T "z"))
        Ast::from_tree(Tree::node(
            "A",
            vec![
                Tree::node("B", vec![Tree::leaf("T", "x"), Tree::leaf("T", "y")]),
                Tree::leaf("T", "z"),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn preorder_ids_and_parents() {
        let ast = sample();
        assert_eq!(ast.len(), 5);
        assert_eq!(ast.root().kind.as_str(), "A");
        assert_eq!(ast.node(1).unwrap().kind.as_str(), "B");
        assert_eq!(ast.parent(2), Some(1));
        assert_eq!(ast.parent(4), Some(0));
        assert_eq!(ast.parent(0), None);
        assert_eq!(ast.terminals(), vec![2, 3, 4]);
    }

    #[test]
    fn single_terminal_tree() {
        let ast = Ast::parse_text(r#"(Name "x")"#).unwrap();
        assert_eq!(ast.len(), 1);
        assert_eq!(ast.terminals(), vec![0]);
    }

    #[test]
    fn lca_cases() {
        let ast = sample();
        assert_eq!(ast.lowest_common_ancestor(1, 2).unwrap(), 1);
        assert_eq!(ast.lowest_common_ancestor(2, 3).unwrap(), 1);
        assert_eq!(ast.lowest_common_ancestor(1, 4).unwrap(), 0);
        assert_eq!(ast.lowest_common_ancestor(3, 4).unwrap(), 0);
        assert_eq!(ast.lowest_common_ancestor(2, 9), Err(AstError::InvalidId(9)));
    }

    #[test]
    fn text_round_trip_with_escapes() {
        let ast = Ast::from_tree(Tree::node(
            "Call",
            vec![Tree::leaf("StringLit", r#""a \"q\" \\ b""#), Tree::leaf("Name", "f")],
        ))
        .unwrap();
        let text = ast.to_text();
        assert_eq!(Ast::parse_text(&text).unwrap(), ast);
    }

    #[test]
    fn whitespace_insensitive() {
        let a = Ast::parse_text("(A(T \"x\")(T \"y\"))").unwrap();
        let b = Ast::parse_text("  ( A\n  (T  \"x\" )\t(T \"y\") )\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_inputs() {
        for (text, offset) in [("", 0), ("(A", 2), ("(A)", 2), ("(A \"\")", 3), ("(A (T \"x\")) x", 12)] {
            match Ast::parse_text(text) {
                Err(AstError::Malformed { offset: o, .. }) => assert_eq!(o, offset, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
        assert!(Ast::parse_text("(A|B (T \"x\"))").is_err());
    }

    #[test]
    fn kind_validation() {
        assert!(NodeKind::new("BinaryExpr:+").is_ok());
        for bad in ["", "a b", "a,b", "a|b", "Kind_", "x^"] {
            assert!(NodeKind::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn masking_keeps_shape() {
        let ast = sample();
        let masked = ast.with_terminal_value(4, "METHOD_NAME").unwrap();
        assert_eq!(masked.len(), ast.len());
        assert_eq!(masked.node(4).unwrap().value.as_deref(), Some("METHOD_NAME"));
        assert!(ast.with_terminal_value(1, "v").is_err());
    }
}
