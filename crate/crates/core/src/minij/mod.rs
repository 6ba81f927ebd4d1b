//! MiniJ: a small Java-like language, enough to express single-method
//! snippets with loops, conditionals, calls and field accesses.
//!
//! The parser emits the surface-syntax tree (no desugaring). Operators are
//! folded into node kinds (`BinaryExpr:+`, `UnaryExpr:!`, `PostfixExpr:++`)
//! so they never become terminals. Empty blocks and bare `return;` become
//! terminals (`Block "{}"`, `ReturnStmt "return"`), since nonterminals always
//! have children.

mod lexer;
mod parser;

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::ast::{Ast, AstError, NodeId};

pub use lexer::{tokenize, Token, TokenKind, KEYWORDS};

/// Value that replaces the method name before paths are extracted.
pub const METHOD_NAME_MASK: &str = "METHOD_NAME";

/// Every node kind MiniJ can emit.
pub const NODE_KINDS: &[&str] = &[
    "MethodDecl",
    "Param",
    "PrimitiveType",
    "ClassType",
    "ArrayType",
    "Block",
    "VarDec",
    "IfStmt",
    "WhileStmt",
    "DoStmt",
    "ForStmt",
    "ReturnStmt",
    "ExprStmt",
    "Assign",
    "BinaryExpr:or",
    "BinaryExpr:&&",
    "BinaryExpr:==",
    "BinaryExpr:!=",
    "BinaryExpr:<=",
    "BinaryExpr:>=",
    "BinaryExpr:<",
    "BinaryExpr:>",
    "BinaryExpr:+",
    "BinaryExpr:-",
    "BinaryExpr:*",
    "BinaryExpr:/",
    "BinaryExpr:%",
    "UnaryExpr:!",
    "UnaryExpr:-",
    "UnaryExpr:+",
    "UnaryExpr:++",
    "UnaryExpr:--",
    "PostfixExpr:++",
    "PostfixExpr:--",
    "Call",
    "FieldAccess",
    "Index",
    "New",
    "NewArray",
    "Name",
    "IntLit",
    "CharLit",
    "StringLit",
    "BoolLit",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub text: String,
    pub origin: String,
}

impl SourceUnit {
    pub fn memory(text: impl Into<String>) -> Self {
        SourceUnit {
            text: text.into(),
            origin: "<memory>".into(),
        }
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        Ok(SourceUnit {
            text: std::fs::read_to_string(path)?,
            origin: path.display().to_string(),
        })
    }

    /// Position just past the last character, for end-of-input errors.
    fn end_position(&self) -> (usize, usize) {
        let line = 1 + self.text.matches('\n').count();
        let last = self.text.rsplit('\n').next().unwrap_or("");
        (line, last.chars().count() + 1)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl ParseError {
    pub fn new(message: impl Into<String>, line: usize, column: usize) -> Self {
        ParseError {
            message: message.into(),
            line,
            column,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("root is {0}, not MethodDecl")]
    NotAMethod(String),
    #[error(transparent)]
    Ast(#[from] AstError),
}

/// Parses a unit containing exactly one method declaration.
pub fn parse_method(src: &SourceUnit) -> Result<Ast, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = parser::Parser::new(&tokens, src.end_position());
    let tree = p.method()?;
    if !p.at_end() {
        return Err(p.error("unexpected tokens after method body"));
    }
    Ast::from_tree(tree).map_err(|e| ParseError::new(e.to_string(), 1, 1))
}

/// Locates the method-name terminal of a `MethodDecl` tree.
fn method_name_slot(ast: &Ast) -> Result<NodeId, MaskError> {
    let root = ast.root();
    if root.kind.as_str() != "MethodDecl" {
        return Err(MaskError::NotAMethod(root.kind.to_string()));
    }
    let id = *root
        .children
        .get(1)
        .ok_or_else(|| MaskError::NotAMethod("MethodDecl without a name".into()))?;
    if !ast.node(id)?.is_terminal() {
        return Err(MaskError::NotAMethod("MethodDecl name is not a terminal".into()));
    }
    Ok(id)
}

/// Returns the tree with the method name replaced by [`METHOD_NAME_MASK`],
/// plus the original (unsplit) name.
pub fn extract_target_name(ast: &Ast) -> Result<(Ast, String), MaskError> {
    let slot = method_name_slot(ast)?;
    let name = ast.node(slot)?.value.clone().expect("terminal has a value");
    let masked = ast.with_terminal_value(slot, METHOD_NAME_MASK)?;
    Ok((masked, name))
}

/// A method's source text cut out of a larger file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodChunk {
    pub text: String,
    /// 1-based line of the chunk start in the original file.
    pub line: usize,
}

/// Splits a file into method declarations. Handles bare methods and methods
/// nested in a `class X { ... }` wrapper; modifiers before the return type are
/// dropped. A method header is `type name ( ... ) {`.
pub fn split_methods(src: &SourceUnit) -> Result<Vec<MethodChunk>, ParseError> {
    let tokens = tokenize(src)?;
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let is_body_open = tokens[i].kind == TokenKind::Punct('{')
            && i > 0
            && tokens[i - 1].kind == TokenKind::Punct(')');
        if !is_body_open {
            i += 1;
            continue;
        }
        let Some(open_paren) = matching_backward(&tokens, i - 1) else {
            i += 1;
            continue;
        };
        if open_paren < 2 || !matches!(tokens[open_paren - 1].kind, TokenKind::Ident(_)) {
            i += 1;
            continue;
        }
        // Walk back over `[]` pairs to the base type token.
        let mut start = open_paren - 2;
        while start >= 2
            && tokens[start].kind == TokenKind::Punct(']')
            && tokens[start - 1].kind == TokenKind::Punct('[')
        {
            start -= 2;
        }
        let Some(close) = matching_forward(&tokens, i) else {
            let t = &tokens[i];
            return Err(ParseError::new("unclosed method body", t.line, t.column));
        };
        let end = tokens[close].offset + 1;
        chunks.push(MethodChunk {
            text: src.text[tokens[start].offset..end].to_string(),
            line: tokens[start].line,
        });
        i = close + 1;
    }
    Ok(chunks)
}

fn matching_backward(tokens: &[Token], close: usize) -> Option<usize> {
    let mut depth = 0usize;
    for j in (0..=close).rev() {
        match tokens[j].kind {
            TokenKind::Punct(')') => depth += 1,
            TokenKind::Punct('(') => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

fn matching_forward(tokens: &[Token], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, t) in tokens.iter().enumerate().skip(open) {
        match t.kind {
            TokenKind::Punct('{') => depth += 1,
            TokenKind::Punct('}') => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

impl fmt::Display for SourceUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.origin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Tree;

    pub(crate) const COUNT_OCCURRENCES_DO: &str = r#"
int countOccurrences(String str, char ch) {
   int num = 0;
   int index = -1;
   do {
      index = str.indexOf(ch, index + 1);
      if (index >= 0) {
         num++;
      }
   } while (index >= 0);
   return num;
}"#;

    fn parse(text: &str) -> Result<Ast, ParseError> {
        parse_method(&SourceUnit::memory(text))
    }

    fn count_kind(ast: &Ast, kind: &str) -> usize {
        ast.nodes().iter().filter(|n| n.kind.as_str() == kind).count()
    }

    #[test]
    fn count_occurrences_do_while() {
        let ast = parse(COUNT_OCCURRENCES_DO).unwrap();
        assert_eq!(ast.root().kind.as_str(), "MethodDecl");
        assert_eq!(count_kind(&ast, "DoStmt"), 1);
        assert_eq!(count_kind(&ast, "IfStmt"), 1);
        assert_eq!(count_kind(&ast, "VarDec"), 2);
        assert_eq!(count_kind(&ast, "PostfixExpr:++"), 1);
    }

    #[test]
    fn minimal_method() {
        let ast = parse("void f(){}").unwrap();
        let expected = Tree::node(
            "MethodDecl",
            vec![
                Tree::leaf("PrimitiveType", "void"),
                Tree::leaf("Name", "f"),
                Tree::leaf("Block", "{}"),
            ],
        );
        assert_eq!(ast.to_tree(), expected);
    }

    #[test]
    fn identity_method_matches_hand_tree() {
        let ast = parse("int f(int x){return x;}").unwrap();
        let expected = Tree::node(
            "MethodDecl",
            vec![
                Tree::leaf("PrimitiveType", "int"),
                Tree::leaf("Name", "f"),
                Tree::node(
                    "Param",
                    vec![Tree::leaf("PrimitiveType", "int"), Tree::leaf("Name", "x")],
                ),
                Tree::node(
                    "Block",
                    vec![Tree::node("ReturnStmt", vec![Tree::leaf("Name", "x")])],
                ),
            ],
        );
        assert_eq!(ast.to_tree(), expected);
        assert_eq!(ast.len(), 9);
    }

    #[test]
    fn precedence() {
        let ast = parse("int f(){ return a + b * c == d || !e && g; }").unwrap();
        let text = ast.to_text();
        assert!(text.contains(
            r#"(BinaryExpr:or (BinaryExpr:== (BinaryExpr:+ (Name "a") (BinaryExpr:* (Name "b") (Name "c"))) (Name "d")) (BinaryExpr:&& (UnaryExpr:! (Name "e")) (Name "g")))"#
        ), "{text}");
    }

    #[test]
    fn assignment_is_right_associative() {
        let ast = parse("void f(){ a = b = 1; }").unwrap();
        assert!(ast
            .to_text()
            .contains(r#"(Assign (Name "a") (Assign (Name "b") (IntLit "1")))"#));
    }

    #[test]
    fn for_loop_and_calls() {
        let src = r#"
int countOccurrences(String source, char value) {
   int count = 0;
   for (int i = 0; i < source.length(); i++) {
       if (source.charAt(i) == value) {
           count++;
        }
   }
   return count;
}"#;
        let ast = parse(src).unwrap();
        assert_eq!(count_kind(&ast, "ForStmt"), 1);
        assert_eq!(count_kind(&ast, "Call"), 2);
        assert_eq!(count_kind(&ast, "FieldAccess"), 2);
    }

    #[test]
    fn misc_constructs() {
        let src = r#"String[] g(Foo[] xs, boolean b) {
            Foo y = new Foo(1, "s");
            int[] arr = new int[10];
            while (b) { arr[0] = -arr[1] % 2; --x; }
            for (;;) return;
            if (b) x = 'c'; else { x = true; }
            System.out.println(xs[0].name);
            return null;
        }"#;
        let ast = parse(src).unwrap();
        for kind in ["ArrayType", "New", "NewArray", "Index", "UnaryExpr:-", "UnaryExpr:--", "WhileStmt", "CharLit", "BoolLit", "StringLit"] {
            assert!(count_kind(&ast, kind) >= 1, "{kind}");
        }
        assert!(ast.nodes().iter().all(|n| NODE_KINDS.contains(&n.kind.as_str())));
    }

    #[test]
    fn parse_errors_have_positions() {
        let e = parse("int f( {").unwrap_err();
        assert_eq!((e.line, e.column), (1, 8));
        let e = parse("int f() {\n  return x\n}").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(parse("int f() { } int g() { }").is_err());
        assert!(parse("").is_err());
        let e = parse("int f() { x = (1; }").unwrap_err();
        assert_eq!(e.line, 1);
    }

    #[test]
    fn unbalanced_delimiters_rejected() {
        for src in ["int f() { if (a { } }", "int f() { a[1; }", "int f() { { }", "int f() { } }", "int f() { g(1, 2; }"] {
            assert!(parse(src).is_err(), "{src}");
        }
    }

    #[test]
    fn target_name_extraction() {
        let ast = parse("int f(int x){return x;}").unwrap();
        let (masked, name) = extract_target_name(&ast).unwrap();
        assert_eq!(name, "f");
        assert_eq!(masked.node(2).unwrap().value.as_deref(), Some(METHOD_NAME_MASK));
        assert_eq!(masked.len(), ast.len());

        let (twice, name2) = extract_target_name(&masked).unwrap();
        assert_eq!(name2, METHOD_NAME_MASK);
        assert_eq!(twice, masked);

        let long = parse("void setMaxConnectionsPerServer(int n){ max = n; }").unwrap();
        assert_eq!(extract_target_name(&long).unwrap().1, "setMaxConnectionsPerServer");

        let not_method = Ast::parse_text(r#"(Block (Name "x"))"#).unwrap();
        assert!(matches!(extract_target_name(&not_method), Err(MaskError::NotAMethod(_))));
    }

    #[test]
    fn split_methods_in_file() {
        let src = SourceUnit::memory(
            "class A {\n  public static int f(int x) { if (x) { return 1; } return 2; }\n  void g() { h(\"}\"); }\n}\nint[] k() { return z; }",
        );
        let chunks = split_methods(&src).unwrap();
        let texts: Vec<_> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(
            texts,
            vec![
                "int f(int x) { if (x) { return 1; } return 2; }",
                "void g() { h(\"}\"); }",
                "int[] k() { return z; }"
            ]
        );
        assert_eq!(chunks[1].line, 3);
        for c in &chunks {
            parse(&c.text).unwrap();
        }
    }
}
