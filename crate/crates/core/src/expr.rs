//! A small arithmetic-expression language for user-declared nonlinearities
//! and force profiles.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables: `v` (field value), `t` (time), `T` (= max(0, t)), `x`, `y`
//! (spatial coordinates) and the constant `pi`. Functions: `abs`, `min`,
//! `max`, `sin`, `cos`, `exp`, `sqrt`. The unicode operators `×`, `÷` and
//! `−` are accepted as aliases.

use std::fmt;

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 64;
const MAX_LEN: usize = 4096;

/// Values bound to the expression variables.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vars {
    pub v: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Var {
    V,
    T,
    TPos,
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Abs,
    Min,
    Max,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "abs" => (Func::Abs, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "sqrt" => (Func::Sqrt, 1),
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        if src.len() > MAX_LEN {
            return Err(Error::Expression {
                offset: MAX_LEN,
                message: format!("expression longer than {MAX_LEN} bytes"),
            });
        }
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            depth: 0,
            end: src.len(),
        };
        let root = p.expr()?;
        if let Some(tok) = p.tokens.get(p.pos) {
            return Err(Error::Expression {
                offset: tok.offset,
                message: format!("unexpected {}", tok.kind),
            });
        }
        Ok(Expr {
            source: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &Vars) -> f64 {
        eval(&self.root, vars)
    }

    /// True if the expression reads the given variable name (`v`, `t`, `T`, `x`, `y`).
    pub fn uses(&self, name: &str) -> bool {
        let target = match name {
            "v" => Var::V,
            "t" => Var::T,
            "T" => Var::TPos,
            "x" => Var::X,
            "y" => Var::Y,
            _ => return false,
        };
        uses(&self.root, target)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn uses(node: &Node, target: Var) -> bool {
    match node {
        Node::Num(_) => false,
        Node::Var(v) => *v == target || (target == Var::T && *v == Var::TPos),
        Node::Neg(a) => uses(a, target),
        Node::Bin(_, a, b) => uses(a, target) || uses(b, target),
        Node::Call(_, args) => args.iter().any(|a| uses(a, target)),
    }
}

fn eval(node: &Node, vars: &Vars) -> f64 {
    match node {
        Node::Num(x) => *x,
        Node::Var(Var::V) => vars.v,
        Node::Var(Var::T) => vars.t,
        Node::Var(Var::TPos) => vars.t.max(0.0),
        Node::Var(Var::X) => vars.x,
        Node::Var(Var::Y) => vars.y,
        Node::Neg(a) => -eval(a, vars),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, vars), eval(b, vars));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => pow(a, b),
            }
        }
        Node::Call(func, args) => {
            let a = eval(&args[0], vars);
            match func {
                Func::Abs => a.abs(),
                Func::Min => a.min(eval(&args[1], vars)),
                Func::Max => a.max(eval(&args[1], vars)),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Sqrt => a.sqrt(),
            }
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Num(x) => write!(f, "number {x}"),
            TokKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokKind::Op(c) => write!(f, "operator `{c}`"),
            TokKind::LParen => f.write_str("`(`"),
            TokKind::RParen => f.write_str("`)`"),
            TokKind::Comma => f.write_str("`,`"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        let kind = match c {
            c if c.is_whitespace() => {
                chars.next();
                continue;
            }
            '0'..='9' | '.' => {
                let mut end = i;
                let mut prev = ' ';
                while let Some(&(j, d)) = chars.peek() {
                    let exp_sign = (d == '+' || d == '-') && (prev == 'e' || prev == 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        end = j + d.len_utf8();
                        prev = d;
                        chars.next();
                    } else {
                        break;
                    }
                }
                let text = &src[i..end];
                let x: f64 = text.parse().map_err(|_| Error::Expression {
                    offset: i,
                    message: format!("malformed number `{text}`"),
                })?;
                TokKind::Num(x)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut end = i;
                while let Some(&(j, d)) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' {
                        end = j + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                TokKind::Ident(src[i..end].to_string())
            }
            _ => {
                chars.next();
                match c {
                    '+' => TokKind::Op('+'),
                    '-' | '−' => TokKind::Op('-'),
                    '*' | '×' => TokKind::Op('*'),
                    '/' | '÷' => TokKind::Op('/'),
                    '^' => TokKind::Op('^'),
                    '(' => TokKind::LParen,
                    ')' => TokKind::RParen,
                    ',' => TokKind::Comma,
                    other => {
                        return Err(Error::Expression {
                            offset: i,
                            message: format!("unexpected character `{other}`"),
                        })
                    }
                }
            }
        };
        out.push(Token { kind, offset: i });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&TokKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Expression {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err("expression nested too deeply");
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Node> {
        self.enter()?;
        let mut lhs = self.term()?;
        while let Some(TokKind::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(TokKind::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        self.enter()?;
        let node = if let Some(TokKind::Op('-')) = self.peek() {
            self.pos += 1;
            Node::Neg(Box::new(self.unary()?))
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(node)
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(TokKind::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek().cloned() {
            Some(TokKind::Num(x)) => {
                self.pos += 1;
                Ok(Node::Num(x))
            }
            Some(TokKind::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(TokKind::Ident(name)) => {
                self.pos += 1;
                if let Some(TokKind::LParen) = self.peek() {
                    let Some((func, arity)) = Func::lookup(&name) else {
                        self.pos -= 1;
                        return self.err(format!("unknown function `{name}`"));
                    };
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while let Some(TokKind::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect_rparen()?;
                    if args.len() != arity {
                        return self.err(format!(
                            "`{}` takes {arity} argument(s), got {}",
                            func.name(),
                            args.len()
                        ));
                    }
                    return Ok(Node::Call(func, args));
                }
                match name.as_str() {
                    "v" => Ok(Node::Var(Var::V)),
                    "t" => Ok(Node::Var(Var::T)),
                    "T" => Ok(Node::Var(Var::TPos)),
                    "x" => Ok(Node::Var(Var::X)),
                    "y" => Ok(Node::Var(Var::Y)),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    _ => {
                        self.pos -= 1;
                        self.err(format!("unknown variable `{name}`"))
                    }
                }
            }
            Some(other) => self.err(format!("unexpected {other}")),
            None => self.err("unexpected end of expression"),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.peek() {
            Some(TokKind::RParen) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err("expected `)`"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, v: f64, t: f64) -> f64 {
        Expr::parse(src).unwrap().eval(&Vars { v, t, x: 0.0, y: 0.0 })
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-2 ^ 2", 0.0, 0.0), -4.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("2 × 3 ÷ 4 − 1", 0.0, 0.0), 0.5);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(ev("v^3 - 2.5*v", 2.0, 0.0), 3.0);
        assert_eq!(ev("T", 0.0, -3.0), 0.0);
        assert_eq!(ev("T + t", 0.0, 2.0), 4.0);
        assert_eq!(ev("max(abs(v), 1e-1)", -0.05, 0.0), 0.1);
        assert!((ev("sin(pi/2) + exp(0) + sqrt(4) + cos(0)", 0.0, 0.0) - 5.0).abs() < 1e-15);
        let e = Expr::parse("sin((1+T)*v)").unwrap();
        assert!(e.uses("v") && e.uses("t") && !e.uses("x"));
    }

    #[test]
    fn errors_carry_offsets() {
        for (src, off) in [("1 +", 3), ("foo(1)", 0), ("1 $ 2", 2), ("min(1)", 6), ("(1", 2), ("z", 0)] {
            match Expr::parse(src) {
                Err(Error::Expression { offset, .. }) => assert_eq!(offset, off, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn depth_limited() {
        let deep = "(".repeat(500) + "1" + &")".repeat(500);
        assert!(Expr::parse(&deep).is_err());
        let negs = "-".repeat(500) + "1";
        assert!(Expr::parse(&negs).is_err());
    }
}
