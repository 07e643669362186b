//! A tiny arithmetic expression language for problem definitions supplied in
//! config files: `+ - * / ^`, `exp log max min abs`, numeric literals, and a
//! caller-declared variable set (typically some of `t x y z`).
//!
//! Expressions are parsed once into an AST with variables resolved to slot
//! indices, so evaluation in solver hot loops is allocation-free.

use crate::error::CoreError;
use crate::Result;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Exp(Box<Node>),
    Log(Box<Node>),
    Abs(Box<Node>),
    Max(Box<Node>, Box<Node>),
    Min(Box<Node>, Box<Node>),
}

/// A compiled expression over a fixed, ordered variable list.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
    source: String,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Parses `source` with the given variable names bound, in order, to the
    /// argument slots of [`Expr::eval`]. Unknown identifiers are rejected.
    pub fn parse(source: &str, vars: &[&str]) -> Result<Expr> {
        let tokens = lex(source)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            vars,
            source,
        };
        let root = p.expr()?;
        if p.pos != tokens.len() {
            return Err(p.error(&format!("unexpected trailing input at token {}", p.pos)));
        }
        Ok(Expr {
            root,
            vars: vars.iter().map(|s| s.to_string()).collect(),
            source: source.to_string(),
        })
    }

    /// Evaluates with `args[i]` bound to the i-th declared variable.
    pub fn eval(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.vars.len());
        eval_node(&self.root, args)
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }
}

fn eval_node(n: &Node, args: &[f64]) -> f64 {
    match n {
        Node::Const(c) => *c,
        Node::Var(i) => args[*i],
        Node::Neg(a) => -eval_node(a, args),
        Node::Add(a, b) => eval_node(a, args) + eval_node(b, args),
        Node::Sub(a, b) => eval_node(a, args) - eval_node(b, args),
        Node::Mul(a, b) => eval_node(a, args) * eval_node(b, args),
        Node::Div(a, b) => eval_node(a, args) / eval_node(b, args),
        Node::Pow(a, b) => eval_node(a, args).powf(eval_node(b, args)),
        Node::Exp(a) => eval_node(a, args).exp(),
        Node::Log(a) => eval_node(a, args).ln(),
        Node::Abs(a) => eval_node(a, args).abs(),
        Node::Max(a, b) => eval_node(a, args).max(eval_node(b, args)),
        Node::Min(a, b) => eval_node(a, args).min(eval_node(b, args)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent part: e or E, optional sign, digits
                if i < bytes.len()
                    && matches!(bytes[i] as char, 'e' | 'E')
                    && i + 1 < bytes.len()
                    && (bytes[i + 1].is_ascii_digit()
                        || ((bytes[i + 1] as char == '+' || bytes[i + 1] as char == '-')
                            && i + 2 < bytes.len()
                            && bytes[i + 2].is_ascii_digit()))
                {
                    i += 2;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| {
                    CoreError::Expr(format!("bad numeric literal {text:?} in {src:?}"))
                })?;
                out.push(Tok::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push(Tok::Ident(src[start..i].to_string()));
            }
            other => {
                return Err(CoreError::Expr(format!(
                    "unexpected character {other:?} at byte {i} in {src:?}"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Tok],
    pos: usize,
    vars: &'a [&'a str],
    source: &'a str,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> CoreError {
        CoreError::Expr(format!("{msg} in {:?}", self.source))
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(self.error(&format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // Right-associative power binds tighter than unary minus on the left,
    // looser on the right: -x^2 is -(x^2), 2^-1 is allowed.
    fn factor(&mut self) -> Result<Node> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        let base = self.primary()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.next().cloned() {
            Some(Tok::Num(v)) => Ok(Node::Const(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while let Some(Tok::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(&Tok::RParen)?;
                    self.call(&name, args)
                } else if let Some(slot) = self.vars.iter().position(|v| *v == name) {
                    Ok(Node::Var(slot))
                } else {
                    Err(self.error(&format!(
                        "unknown variable {name:?} (declared: {:?})",
                        self.vars
                    )))
                }
            }
            other => Err(self.error(&format!("expected a value, found {other:?}"))),
        }
    }

    fn call(&self, name: &str, mut args: Vec<Node>) -> Result<Node> {
        let arity_err = |want: usize| {
            CoreError::Expr(format!(
                "{name} takes {want} argument(s), got {} in {:?}",
                args.len(),
                self.source
            ))
        };
        match name {
            "exp" | "log" | "abs" => {
                if args.len() != 1 {
                    return Err(arity_err(1));
                }
                let a = Box::new(args.pop().unwrap());
                Ok(match name {
                    "exp" => Node::Exp(a),
                    "log" => Node::Log(a),
                    _ => Node::Abs(a),
                })
            }
            "max" | "min" => {
                if args.len() != 2 {
                    return Err(arity_err(2));
                }
                let b = Box::new(args.pop().unwrap());
                let a = Box::new(args.pop().unwrap());
                Ok(if name == "max" {
                    Node::Max(a, b)
                } else {
                    Node::Min(a, b)
                })
            }
            other => Err(self.error(&format!("unknown function {other:?}"))),
        }
    }
}
