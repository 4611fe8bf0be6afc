//! Scalar coefficient expressions in `x` and `y`.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' factor)?
//! unary  := '-' unary | atom
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are `x`, `y`, `pi` and the functions `sin`, `cos`, `exp`,
//! `sqrt`, `abs`. Note that unary minus binds tighter than `^`, so `-x^2`
//! is `(-x)^2`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier \"{name}\" at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("zero raised to non-positive power {0}")]
    ZeroToNonPositive(f64),
    #[error("negative base {base} raised to non-integer power {exponent}")]
    NegativeBase { base: f64, exponent: f64 },
    #[error("non-finite result")]
    NonFinite,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.syntax(format!("unexpected '{}'", p.chars[p.pos])));
    }
    Ok(e)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(c @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.unary()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exponent = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.ident(),
            Some(c) => Err(self.syntax(format!("unexpected '{c}'"))),
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.syntax(format!("expected '{want}', found '{c}'"))),
            None => Err(self.syntax(format!("expected '{want}', found end of input"))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.chars.len() && p.chars[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.chars.get(self.pos) == Some(&'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.chars.get(self.pos), Some('e' | 'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.chars.get(self.pos), Some('+' | '-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                // `2e` or `2ex`: not an exponent, leave it for the caller.
                self.pos = mark;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>().map(Expr::Num).map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("malformed number '{text}'"),
        })
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.chars.len()
            && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
        {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        if self.peek() == Some('(') {
            let func = Func::from_name(&name).ok_or(ParseError::UnknownIdentifier {
                name: name.clone(),
                offset: start,
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            self.expect(')')?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        match name.as_str() {
            "x" => Ok(Expr::Var(Var::X)),
            "y" => Ok(Expr::Var(Var::Y)),
            "pi" => Ok(Expr::Pi),
            _ if Func::from_name(&name).is_some() => Err(ParseError::Syntax {
                offset: self.pos,
                message: format!("function '{name}' needs an argument list"),
            }),
            _ => Err(ParseError::UnknownIdentifier { name, offset: start }),
        }
    }
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(x, y)?,
            Expr::Bin(op, a, b) => {
                let lhs = a.eval(x, y)?;
                let rhs = b.eval(x, y)?;
                match op {
                    BinOp::Add => lhs + rhs,
                    BinOp::Sub => lhs - rhs,
                    BinOp::Mul => lhs * rhs,
                    BinOp::Div => {
                        if rhs == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        lhs / rhs
                    }
                    BinOp::Pow => power(lhs, rhs, b.integer_literal())?,
                }
            }
            Expr::Call(f, arg) => {
                let v = arg.eval(x, y)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(EvalError::NegativeSqrt(v));
                        }
                        v.sqrt()
                    }
                    Func::Abs => v.abs(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// `Some(k)` when the node is an integer literal, possibly negated.
    fn integer_literal(&self) -> Option<i32> {
        match self {
            Expr::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => Some(*v as i32),
            Expr::Neg(e) => e.integer_literal().map(|k| -k),
            _ => None,
        }
    }

    /// True when the expression does not mention `x` or `y`.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => true,
            Expr::Var(_) => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

fn power(base: f64, exponent: f64, literal: Option<i32>) -> Result<f64, EvalError> {
    if let Some(k) = literal {
        if base == 0.0 && k < 0 {
            return Err(EvalError::ZeroToNonPositive(exponent));
        }
        return Ok(base.powi(k));
    }
    if base > 0.0 {
        Ok((exponent * base.ln()).exp())
    } else if base == 0.0 {
        if exponent > 0.0 {
            Ok(0.0)
        } else {
            Err(EvalError::ZeroToNonPositive(exponent))
        }
    } else {
        Err(EvalError::NegativeBase { base, exponent })
    }
}

/// Fully parenthesized form; reparses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}) {sym} ({b})")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64) -> Result<f64, EvalError> {
        parse(s).unwrap().eval(x, y)
    }

    #[test]
    fn grammar_exercise() {
        let e = parse("2*x + sin(pi*y)").unwrap();
        assert_eq!(e.eval(1.0, 0.5).unwrap(), 3.0);
    }

    #[test]
    fn syntax_error_offset() {
        assert_eq!(
            parse("2*+x").unwrap_err(),
            ParseError::Syntax {
                offset: 2,
                message: "unexpected '+'".into()
            }
        );
    }

    #[test]
    fn unknown_identifier_named() {
        match parse("foo(x)").unwrap_err() {
            ParseError::UnknownIdentifier { name, offset } => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("x + z"), Err(ParseError::UnknownIdentifier { .. })));
    }

    #[test]
    fn arithmetic() {
        assert_eq!(ev("x^2 - y", 3.0, 4.0).unwrap(), 5.0);
        assert!((ev("2^3^2", 0.0, 0.0).unwrap() - 512.0).abs() < 1e-12);
        assert_eq!(ev("-x^2", 3.0, 0.0).unwrap(), 9.0);
        assert_eq!(ev("8 / 2 / 2", 0.0, 0.0).unwrap(), 2.0);
        assert_eq!(ev("1 - 2 - 3", 0.0, 0.0).unwrap(), -4.0);
        assert_eq!(ev("1.5e1 + .5", 0.0, 0.0).unwrap(), 15.5);
        assert_eq!(ev("abs(-2) + sqrt(16) + exp(0) + cos(0)", 0.0, 0.0).unwrap(), 8.0);
    }

    #[test]
    fn powers() {
        assert_eq!(ev("x^2", -3.0, 0.0).unwrap(), 9.0);
        assert_eq!(ev("x^-1", -2.0, 0.0).unwrap(), -0.5);
        assert!((ev("x^0.5", 4.0, 0.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(ev("x^0.5", 0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(ev("x^0.5", -4.0, 0.0), Err(EvalError::NegativeBase { .. })));
        assert!(matches!(ev("x^-2", 0.0, 0.0), Err(EvalError::ZeroToNonPositive(_))));
        assert!(matches!(
            ev("x^(0-1.5)", 0.0, 0.0),
            Err(EvalError::ZeroToNonPositive(_))
        ));
    }

    #[test]
    fn domain_errors() {
        assert_eq!(ev("1/(x-1)", 1.0, 0.0), Err(EvalError::DivisionByZero));
        assert!(matches!(ev("sqrt(x)", -1.0, 0.0), Err(EvalError::NegativeSqrt(_))));
    }

    #[test]
    fn malformed_inputs() {
        for s in ["", "(", "x +", "sin x", "2 3", "x)", "()", "sin()", "3*"] {
            assert!(parse(s).is_err(), "{s:?} should not parse");
        }
    }

    #[test]
    fn whitespace_insignificant() {
        assert_eq!(
            parse(" 2 *x+ sin ( pi * y ) ").unwrap(),
            parse("2*x+sin(pi*y)").unwrap()
        );
    }

    #[test]
    fn display_round_trip() {
        for s in ["-x^2", "2^3^2", "1e-7*x - -y", "sqrt(abs(x/y))", "(x+y)*(x-y)/pi"] {
            let e = parse(s).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{s}");
        }
    }

    #[test]
    fn constant_detection() {
        assert!(parse("2*pi + sin(1)").unwrap().is_constant());
        assert!(!parse("2*x").unwrap().is_constant());
    }
}
