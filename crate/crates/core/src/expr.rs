//! Small arithmetic/trigonometric expression grammar.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var    := x | y | z | w | x1 .. x9          (x = x1, y = x2, z = x3, w = x4)
//! func   := sin | cos | tan | exp | ln | log | sqrt
//! ```
//!
//! Variables are zero-based coordinate slots internally.

use std::fmt;

use crate::error::{Error, Result};
use crate::taylor::Taylor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Highest variable slot referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Renumbers variable slots by `offset` (used for product charts).
    pub fn shift_vars(&self, offset: usize) -> Expr {
        let s = |e: &Expr| Box::new(e.shift_vars(offset));
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(i) => Expr::Var(i + offset),
            Expr::Neg(a) => Expr::Neg(s(a)),
            Expr::Call(f, a) => Expr::Call(*f, s(a)),
            Expr::Add(a, b) => Expr::Add(s(a), s(b)),
            Expr::Sub(a, b) => Expr::Sub(s(a), s(b)),
            Expr::Mul(a, b) => Expr::Mul(s(a), s(b)),
            Expr::Div(a, b) => Expr::Div(s(a), s(b)),
            Expr::Pow(a, b) => Expr::Pow(s(a), s(b)),
        }
    }

    /// Constant value if the expression references no variables.
    pub fn constant_value(&self) -> Option<f64> {
        if self.max_var().is_some() {
            None
        } else {
            Some(self.eval(&[]))
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                match b.constant_value() {
                    Some(p) if p.fract() == 0.0 && p.abs() < 64.0 => base.powi(p as i32),
                    _ => base.powf(b.eval(x)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.tan(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    /// Evaluates over Taylor arithmetic: the result is the jet of the
    /// expression at `point`, truncated at `order`.
    pub fn eval_taylor(&self, point: &[f64], order: usize) -> Taylor<f64> {
        let n = point.len();
        match self {
            Expr::Num(v) => Taylor::constant(n, order, *v),
            Expr::Var(i) => Taylor::variable(n, order, *i, point[*i]),
            Expr::Neg(a) => -a.eval_taylor(point, order),
            Expr::Add(a, b) => a.eval_taylor(point, order) + b.eval_taylor(point, order),
            Expr::Sub(a, b) => a.eval_taylor(point, order) - b.eval_taylor(point, order),
            Expr::Mul(a, b) => {
                // constants are common in metric tables; skip the full product
                if let Some(c) = a.constant_value() {
                    return b.eval_taylor(point, order).scale(c);
                }
                if let Some(c) = b.constant_value() {
                    return a.eval_taylor(point, order).scale(c);
                }
                a.eval_taylor(point, order) * b.eval_taylor(point, order)
            }
            Expr::Div(a, b) => {
                if let Some(c) = b.constant_value() {
                    return a.eval_taylor(point, order).scale(1.0 / c);
                }
                a.eval_taylor(point, order) * b.eval_taylor(point, order).recip()
            }
            Expr::Pow(a, b) => {
                let base = a.eval_taylor(point, order);
                match b.constant_value() {
                    Some(p) if p.fract() == 0.0 && p.abs() < 64.0 => base.powi(p as i32),
                    Some(p) => base.powf(p),
                    None => (b.eval_taylor(point, order) * base.ln()).exp(),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_taylor(point, order);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Tan => v.sin() * v.cos().recip(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'-' || self.src[self.pos] == b'+') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Num).map_err(|_| Error::Parse { pos: start, msg: format!("bad number '{text}'") })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func = match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tan" => Some(Func::Tan),
            "exp" => Some(Func::Exp),
            "ln" | "log" => Some(Func::Ln),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        };
        if let Some(f) = func {
            if self.peek() != Some(b'(') {
                return Err(self.err("expected '(' after function name"));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.err("expected ')'"));
            }
            self.pos += 1;
            return Ok(Expr::Call(f, Box::new(arg)));
        }
        match name {
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "x" => Ok(Expr::Var(0)),
            "y" => Ok(Expr::Var(1)),
            "z" => Ok(Expr::Var(2)),
            "w" => Ok(Expr::Var(3)),
            _ => {
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if (1..=9).contains(&k) {
                            return Ok(Expr::Var(k - 1));
                        }
                    }
                }
                Err(Error::Parse { pos: start, msg: format!("unknown identifier '{name}'") })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-2^2 + 3*4/2").unwrap();
        assert_eq!(e.eval(&[]), 2.0);
        let e = Expr::parse("2^-1").unwrap();
        assert_eq!(e.eval(&[]), 0.5);
        let e = Expr::parse("1e-3*x").unwrap();
        assert!((e.eval(&[2.0]) - 2e-3).abs() < 1e-18);
    }

    #[test]
    fn variables_and_functions() {
        let e = Expr::parse("0.7*sin(x) + cos(2*y) - sqrt(x3)").unwrap();
        let v = e.eval(&[1.0, 0.5, 4.0]);
        assert!((v - (0.7 * 1f64.sin() + 1f64.cos() - 2.0)).abs() < 1e-15);
        assert_eq!(e.max_var(), Some(2));
    }

    #[test]
    fn errors_carry_positions() {
        assert!(matches!(Expr::parse("sin x"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("2 + foo"), Err(Error::Parse { pos: 4, .. })));
        assert!(matches!(Expr::parse("(1+2"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("1 2"), Err(Error::Parse { .. })));
    }

    #[test]
    fn taylor_eval_matches_pointwise_derivative() {
        let e = Expr::parse("sin(x)^2 * exp(y/2)").unwrap();
        let p = [0.4, -0.3];
        let t = e.eval_taylor(&p, 2);
        assert!((t.value() - e.eval(&p)).abs() < 1e-15);
        let h = 1e-5;
        let fd = (e.eval(&[p[0] + h, p[1]]) - e.eval(&[p[0] - h, p[1]])) / (2.0 * h);
        assert!((t.partial(&[1, 0]) - fd).abs() < 1e-9);
    }
}
