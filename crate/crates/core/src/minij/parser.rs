use crate::ast::Tree;

use super::lexer::{Token, TokenKind};
use super::ParseError;

const PRIMITIVES: &[&str] = &["int", "boolean", "char", "void"];

/// Binary precedence levels from loosest to tightest, with the kind suffix
/// used for each operator. `||` is renamed because `|` is reserved in the
/// dataset format.
const BINARY_LEVELS: &[&[(&str, &str)]] = &[
    &[("||", "or")],
    &[("&&", "&&")],
    &[("==", "=="), ("!=", "!=")],
    &[("<=", "<="), (">=", ">="), ("<", "<"), (">", ">")],
    &[("+", "+"), ("-", "-")],
    &[("*", "*"), ("/", "/"), ("%", "%")],
];

const PREFIX_OPS: &[&str] = &["!", "-", "+", "++", "--"];

pub(super) struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    /// Position reported for errors at end of input.
    eof: (usize, usize),
}

type PResult<T> = Result<T, ParseError>;

impl<'t> Parser<'t> {
    pub(super) fn new(tokens: &'t [Token], eof: (usize, usize)) -> Self {
        Parser {
            tokens,
            pos: 0,
            eof,
        }
    }

    fn peek(&self) -> Option<&'t TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, ahead: usize) -> Option<&'t TokenKind> {
        self.tokens.get(self.pos + ahead).map(|t| &t.kind)
    }

    pub(super) fn error(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = self
            .tokens
            .get(self.pos)
            .map_or(self.eof, |t| (t.line, t.column));
        ParseError::new(message, line, column)
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some(k) => format!("{k:?}"),
        }
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek() == Some(&TokenKind::Punct(c))
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Some(TokenKind::Op(o)) if *o == op)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(TokenKind::Keyword(k)) if *k == kw)
    }

    fn eat_punct(&mut self, c: char) -> bool {
        let hit = self.is_punct(c);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}', found {}", self.describe())))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.is_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{kw}', found {}", self.describe())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(TokenKind::Ident(name)) => {
                self.pos += 1;
                Ok(name.clone())
            }
            _ => Err(self.error(format!("expected identifier, found {}", self.describe()))),
        }
    }

    pub(super) fn at_end(&self) -> bool {
        self.pos == self.tokens.len()
    }

    pub(super) fn method(&mut self) -> PResult<Tree> {
        let ret = self.type_()?;
        let name = self.ident()?;
        self.expect_punct('(')?;
        let mut children = vec![ret, Tree::leaf("Name", name)];
        if !self.eat_punct(')') {
            loop {
                let ty = self.type_()?;
                let pname = self.ident()?;
                children.push(Tree::node("Param", vec![ty, Tree::leaf("Name", pname)]));
                if self.eat_punct(')') {
                    break;
                }
                self.expect_punct(',')?;
            }
        }
        children.push(self.block()?);
        Ok(Tree::node("MethodDecl", children))
    }

    /// `true` if a type starts here and is followed by a declared name.
    fn at_declaration(&self) -> bool {
        match self.peek() {
            Some(TokenKind::Keyword(k)) => PRIMITIVES.contains(k) || *k == "String",
            Some(TokenKind::Ident(_)) => {
                let mut i = 1;
                while self.peek_at(i) == Some(&TokenKind::Punct('['))
                    && self.peek_at(i + 1) == Some(&TokenKind::Punct(']'))
                {
                    i += 2;
                }
                matches!(self.peek_at(i), Some(TokenKind::Ident(_)))
            }
            _ => false,
        }
    }

    fn base_type(&mut self) -> PResult<Tree> {
        let t = match self.peek() {
            Some(TokenKind::Keyword(k)) if PRIMITIVES.contains(k) => Tree::leaf("PrimitiveType", *k),
            Some(TokenKind::Keyword("String")) => Tree::leaf("ClassType", "String"),
            Some(TokenKind::Ident(name)) => Tree::leaf("ClassType", name.clone()),
            _ => return Err(self.error(format!("expected type, found {}", self.describe()))),
        };
        self.pos += 1;
        Ok(t)
    }

    fn type_(&mut self) -> PResult<Tree> {
        let mut t = self.base_type()?;
        while self.is_punct('[') && self.peek_at(1) == Some(&TokenKind::Punct(']')) {
            self.pos += 2;
            t = Tree::node("ArrayType", vec![t]);
        }
        Ok(t)
    }

    fn block(&mut self) -> PResult<Tree> {
        self.expect_punct('{')?;
        let mut stmts = Vec::new();
        while !self.eat_punct('}') {
            if self.at_end() {
                return Err(self.error("unclosed block"));
            }
            stmts.push(self.statement()?);
        }
        if stmts.is_empty() {
            // Nonterminals need children; an empty block is a terminal.
            Ok(Tree::leaf("Block", "{}"))
        } else {
            Ok(Tree::node("Block", stmts))
        }
    }

    fn var_decl(&mut self) -> PResult<Tree> {
        let ty = self.type_()?;
        let name = self.ident()?;
        let mut children = vec![ty, Tree::leaf("Name", name)];
        if self.is_op("=") {
            self.pos += 1;
            children.push(self.expr()?);
        }
        self.expect_punct(';')?;
        Ok(Tree::node("VarDec", children))
    }

    fn paren_expr(&mut self) -> PResult<Tree> {
        self.expect_punct('(')?;
        let e = self.expr()?;
        self.expect_punct(')')?;
        Ok(e)
    }

    fn statement(&mut self) -> PResult<Tree> {
        if self.is_punct('{') {
            return self.block();
        }
        if self.is_keyword("if") {
            self.pos += 1;
            let cond = self.paren_expr()?;
            let then = self.statement()?;
            let mut children = vec![cond, then];
            if self.is_keyword("else") {
                self.pos += 1;
                children.push(self.statement()?);
            }
            return Ok(Tree::node("IfStmt", children));
        }
        if self.is_keyword("while") {
            self.pos += 1;
            let cond = self.paren_expr()?;
            let body = self.statement()?;
            return Ok(Tree::node("WhileStmt", vec![cond, body]));
        }
        if self.is_keyword("do") {
            self.pos += 1;
            let body = self.statement()?;
            self.expect_keyword("while")?;
            let cond = self.paren_expr()?;
            self.expect_punct(';')?;
            return Ok(Tree::node("DoStmt", vec![body, cond]));
        }
        if self.is_keyword("for") {
            self.pos += 1;
            self.expect_punct('(')?;
            let mut children = Vec::new();
            if !self.eat_punct(';') {
                if self.at_declaration() {
                    children.push(self.var_decl()?);
                } else {
                    children.push(self.expr()?);
                    self.expect_punct(';')?;
                }
            }
            if !self.eat_punct(';') {
                children.push(self.expr()?);
                self.expect_punct(';')?;
            }
            if !self.eat_punct(')') {
                children.push(self.expr()?);
                self.expect_punct(')')?;
            }
            children.push(self.statement()?);
            return Ok(Tree::node("ForStmt", children));
        }
        if self.is_keyword("return") {
            self.pos += 1;
            if self.eat_punct(';') {
                return Ok(Tree::leaf("ReturnStmt", "return"));
            }
            let e = self.expr()?;
            self.expect_punct(';')?;
            return Ok(Tree::node("ReturnStmt", vec![e]));
        }
        if self.at_declaration() {
            return self.var_decl();
        }
        let e = self.expr()?;
        self.expect_punct(';')?;
        Ok(Tree::node("ExprStmt", vec![e]))
    }

    pub(super) fn expr(&mut self) -> PResult<Tree> {
        let lhs = self.binary(0)?;
        if self.is_op("=") {
            self.pos += 1;
            let rhs = self.expr()?;
            return Ok(Tree::node("Assign", vec![lhs, rhs]));
        }
        Ok(lhs)
    }

    fn binary(&mut self, level: usize) -> PResult<Tree> {
        if level == BINARY_LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(TokenKind::Op(op)) = self.peek() {
            let Some((_, suffix)) = BINARY_LEVELS[level].iter().find(|(o, _)| o == op) else {
                break;
            };
            self.pos += 1;
            let rhs = self.binary(level + 1)?;
            lhs = Tree::node(&format!("BinaryExpr:{suffix}"), vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Tree> {
        if let Some(TokenKind::Op(op)) = self.peek() {
            if PREFIX_OPS.contains(op) {
                self.pos += 1;
                let operand = self.unary()?;
                return Ok(Tree::node(&format!("UnaryExpr:{op}"), vec![operand]));
            }
        }
        self.postfix()
    }

    fn args(&mut self) -> PResult<Vec<Tree>> {
        let mut args = Vec::new();
        if self.eat_punct(')') {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_punct(')') {
                return Ok(args);
            }
            self.expect_punct(',')?;
        }
    }

    fn postfix(&mut self) -> PResult<Tree> {
        let mut e = self.primary()?;
        loop {
            if self.eat_punct('.') {
                let field = self.ident()?;
                e = Tree::node("FieldAccess", vec![e, Tree::leaf("Name", field)]);
            } else if self.eat_punct('(') {
                let mut children = vec![e];
                children.extend(self.args()?);
                e = Tree::node("Call", children);
            } else if self.eat_punct('[') {
                let idx = self.expr()?;
                self.expect_punct(']')?;
                e = Tree::node("Index", vec![e, idx]);
            } else if self.is_op("++") || self.is_op("--") {
                let Some(TokenKind::Op(op)) = self.peek() else {
                    unreachable!()
                };
                self.pos += 1;
                e = Tree::node(&format!("PostfixExpr:{op}"), vec![e]);
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Tree> {
        let t = match self.peek() {
            Some(TokenKind::Ident(name)) => Tree::leaf("Name", name.clone()),
            Some(TokenKind::IntLit(v)) => Tree::leaf("IntLit", v.clone()),
            Some(TokenKind::CharLit(v)) => Tree::leaf("CharLit", v.clone()),
            Some(TokenKind::StringLit(v)) => Tree::leaf("StringLit", v.clone()),
            Some(TokenKind::BoolLit(b)) => Tree::leaf("BoolLit", b.to_string()),
            Some(TokenKind::Punct('(')) => return self.paren_expr(),
            Some(TokenKind::Keyword("new")) => {
                self.pos += 1;
                let ty = self.base_type()?;
                if self.eat_punct('(') {
                    let mut children = vec![ty];
                    children.extend(self.args()?);
                    return Ok(Tree::node("New", children));
                }
                self.expect_punct('[')?;
                let size = self.expr()?;
                self.expect_punct(']')?;
                return Ok(Tree::node("NewArray", vec![ty, size]));
            }
            _ => return Err(self.error(format!("expected expression, found {}", self.describe()))),
        };
        self.pos += 1;
        Ok(t)
    }
}
