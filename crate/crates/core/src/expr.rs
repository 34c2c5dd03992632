//! Small arithmetic-expression language for profiles and densities.
//!
//! Grammar: `+ - * / ^`, parentheses, unary minus, `sin cos exp sqrt`,
//! numeric literals, the constant `pi` and variables `x1..xn`.
//! `^` binds tighter than unary minus and is right associative.
//! Evaluation is generic over dual numbers so derivatives come for free.

use crate::error::{Error, Result};
use num_dual::DualNum;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression in the variables `x1..xn`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
    arity: usize,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part, e.g. 1e-3
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| Error::Expression {
                column: col,
                message: format!("bad number '{text}'"),
            })?;
            out.push((Tok::Num(v), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^".contains(c) {
            out.push((Tok::Op(c), col));
            i += 1;
        } else if c == '(' {
            out.push((Tok::LParen, col));
            i += 1;
        } else if c == ')' {
            out.push((Tok::RParen, col));
            i += 1;
        } else {
            return Err(Error::Expression {
                column: col,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or(self.end_col)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Expression { column: self.col(), message: message.into() })
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let c = *c;
            self.pos += 1;
            let rhs = self.product()?;
            lhs = if c == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let c = *c;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(tok) = self.peek().cloned() else {
            return self.fail("unexpected end of expression");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.sum()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.fail("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(func) = func {
                    self.pos += 1;
                    if self.peek() != Some(&Tok::LParen) {
                        return self.fail(format!("expected '(' after {name}"));
                    }
                    self.pos += 1;
                    let arg = self.sum()?;
                    if self.peek() != Some(&Tok::RParen) {
                        return self.fail("expected ')'");
                    }
                    self.pos += 1;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    self.pos += 1;
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if idx >= 1 {
                        self.pos += 1;
                        return Ok(Node::Var(idx - 1));
                    }
                }
                self.fail(format!("unknown identifier '{name}'"))
            }
            Tok::Op(c) => self.fail(format!("unexpected operator '{c}'")),
            Tok::RParen => self.fail("unexpected ')'"),
        }
    }
}

fn max_var(node: &Node) -> usize {
    match node {
        Node::Num(_) => 0,
        Node::Var(i) => i + 1,
        Node::Neg(a) | Node::Call(_, a) => max_var(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            max_var(a).max(max_var(b))
        }
    }
}

fn constant(node: &Node) -> Option<f64> {
    (max_var(node) == 0).then(|| eval_node::<f64>(node, &[]))
}

fn eval_node<T: DualNum<Primitive = f64> + Copy>(node: &Node, x: &[T]) -> T {
    match node {
        Node::Num(v) => T::from(*v),
        Node::Var(i) => x[*i],
        Node::Neg(a) => -eval_node(a, x),
        Node::Add(a, b) => eval_node(a, x) + eval_node(b, x),
        Node::Sub(a, b) => eval_node(a, x) - eval_node(b, x),
        Node::Mul(a, b) => eval_node(a, x) * eval_node(b, x),
        Node::Div(a, b) => eval_node(a, x) / eval_node(b, x),
        Node::Pow(a, b) => {
            let base = eval_node(a, x);
            match constant(b) {
                Some(e) if e.fract() == 0.0 && e.abs() <= 64.0 => base.powi(e as i32),
                Some(e) => base.powf(e),
                None => (eval_node(b, x) * base.ln()).exp(),
            }
        }
        Node::Call(f, a) => {
            let v = eval_node(a, x);
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Sqrt => v.sqrt(),
            }
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let toks = lex(src)?;
        let end_col = src.chars().count() + 1;
        let mut p = Parser { toks, pos: 0, end_col };
        let root = p.sum()?;
        if p.pos != p.toks.len() {
            return p.fail("trailing input");
        }
        let arity = max_var(&root);
        Ok(Expr { source: src.to_string(), root, arity })
    }

    /// Highest variable index referenced (so `x3` gives 3).
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at `x`; panics if `x` is shorter than [`Expr::arity`].
    pub fn eval<T: DualNum<Primitive = f64> + Copy>(&self, x: &[T]) -> T {
        eval_node(&self.root, x)
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}
