//! A small arithmetic-expression language in one variable `x`.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | base ('^' rational)?
//! base   := number | 'x' | '(' expr ')' | ('exp'|'log') base
//! ```
//!
//! Unary minus is parsed at factor level so that `-x^2` means `-(x^2)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Neg(Box<Expr>),
}

pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == b'+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = if op == b'*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let r = self.rational()?;
            return Ok(Expr::Pow(Box::new(base), r));
        }
        Ok(base)
    }

    fn rational(&mut self) -> Result<f64> {
        let paren = self.peek() == Some(b'(');
        if paren {
            self.pos += 1;
        }
        let neg = self.peek() == Some(b'-');
        if neg {
            self.pos += 1;
        }
        self.skip_ws();
        let mut value = self.number()?;
        if paren && self.peek() == Some(b'/') {
            self.pos += 1;
            self.skip_ws();
            let den = self.number()?;
            if den == 0.0 {
                return Err(self.error("zero denominator in exponent"));
            }
            value /= den;
        }
        if paren {
            if self.peek() != Some(b')') {
                return Err(self.error("expected `)`"));
            }
            self.pos += 1;
        }
        Ok(if neg { -value } else { value })
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            digits(self);
        }
        if self.pos == start || (self.pos == start + 1 && self.src[start] == b'.') {
            self.pos = start;
            return Err(self.error("expected a number"));
        }
        // Exponent part only when a digit follows, so `2exp` stays unambiguous.
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        text.parse::<f64>().map_err(|_| Error::Parse {
            offset: start,
            message: format!("bad number `{text}`"),
        })
    }

    fn base(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'x') => {
                self.pos += 1;
                Ok(Expr::Var)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Const(self.number()?)),
            Some(_) if self.src[self.pos..].starts_with(b"exp") => {
                self.pos += 3;
                Ok(Expr::Exp(Box::new(self.base()?)))
            }
            Some(_) if self.src[self.pos..].starts_with(b"log") => {
                self.pos += 3;
                Ok(Expr::Log(Box::new(self.base()?)))
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

// Smart constructors: constant folding plus the additive/multiplicative identities.

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), e) | (e, Expr::Const(z)) if z == 0.0 => e,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (e, Expr::Const(z)) if z == 0.0 => e,
        (Expr::Const(z), e) if z == 0.0 => neg(e),
        // (x + r) - x  =>  r, so displacements f(x) - x avoid cancellation.
        (Expr::Add(l, r), Expr::Var) if *l == Expr::Var => *r,
        (Expr::Add(l, r), Expr::Var) if *r == Expr::Var => *l,
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), e) | (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
        (Expr::Const(z), _) if z == 0.0 => Expr::Const(0.0),
        (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, r: f64) -> Expr {
    match a {
        _ if r == 0.0 => Expr::Const(1.0),
        e if r == 1.0 => e,
        Expr::Const(c) if c > 0.0 || r.fract() == 0.0 => Expr::Const(c.powf(r)),
        e => Expr::Pow(Box::new(e), r),
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        e => Expr::Neg(Box::new(e)),
    }
}

pub fn exp(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(c.exp()),
        e => Expr::Exp(Box::new(e)),
    }
}

/// Exact symbolic derivative with respect to `x`.
pub fn differentiate(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var => Expr::Const(1.0),
        Expr::Add(a, b) => add(differentiate(a), differentiate(b)),
        Expr::Sub(a, b) => sub(differentiate(a), differentiate(b)),
        Expr::Mul(a, b) => add(
            mul(differentiate(a), (**b).clone()),
            mul((**a).clone(), differentiate(b)),
        ),
        Expr::Div(a, b) => {
            let da = differentiate(a);
            let db = differentiate(b);
            match db {
                Expr::Const(z) if z == 0.0 => div(da, (**b).clone()),
                db => div(
                    sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    pow((**b).clone(), 2.0),
                ),
            }
        }
        Expr::Pow(a, r) => mul(
            mul(Expr::Const(*r), pow((**a).clone(), r - 1.0)),
            differentiate(a),
        ),
        Expr::Exp(a) => mul(exp((**a).clone()), differentiate(a)),
        Expr::Log(a) => div(differentiate(a), (**a).clone()),
        Expr::Neg(a) => neg(differentiate(a)),
    }
}

impl Expr {
    /// Evaluate at `x`; log of non-positive values, division by zero and
    /// non-finite results are domain errors.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = self.eval_raw(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite value of {self} at x = {x}")))
        }
    }

    fn eval_raw(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var => x,
            Expr::Add(a, b) => a.eval_raw(x)? + b.eval_raw(x)?,
            Expr::Sub(a, b) => a.eval_raw(x)? - b.eval_raw(x)?,
            Expr::Mul(a, b) => {
                let l = a.eval_raw(x)?;
                let r = b.eval_raw(x)?;
                // 0 * inf arises from underflowing exponentials; treat as 0.
                if (l == 0.0 && r.is_infinite()) || (r == 0.0 && l.is_infinite()) {
                    0.0
                } else {
                    l * r
                }
            }
            Expr::Div(a, b) => {
                let d = b.eval_raw(x)?;
                if d == 0.0 {
                    return Err(Error::Domain(format!("division by zero in {self} at x = {x}")));
                }
                a.eval_raw(x)? / d
            }
            Expr::Pow(a, r) => {
                let b = a.eval_raw(x)?;
                if r.fract() == 0.0 && r.abs() <= i32::MAX as f64 {
                    if b == 0.0 && *r < 0.0 {
                        return Err(Error::Domain(format!("0 to a negative power at x = {x}")));
                    }
                    b.powi(*r as i32)
                } else if b < 0.0 || (b == 0.0 && *r < 0.0) {
                    return Err(Error::Domain(format!("{b}^{r} is undefined at x = {x}")));
                } else {
                    b.powf(*r)
                }
            }
            Expr::Exp(a) => a.eval_raw(x)?.exp(),
            Expr::Log(a) => {
                let v = a.eval_raw(x)?;
                if v <= 0.0 {
                    return Err(Error::Domain(format!("log of {v} at x = {x}")));
                }
                v.ln()
            }
            Expr::Neg(a) => -a.eval_raw(x)?,
        })
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.node_count() + b.node_count()
            }
            Expr::Pow(a, _) | Expr::Exp(a) | Expr::Log(a) | Expr::Neg(a) => 1 + a.node_count(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var => write!(f, "x"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, r) => write!(f, "({a}^({r}))"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Box<Expr> {
        Box::new(Expr::Const(v))
    }

    fn central_diff(e: &Expr, x: f64, h: f64) -> f64 {
        (e.eval(x + h).unwrap() - e.eval(x - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn parses_division() {
        assert_eq!(parse_expr("x/3").unwrap(), Expr::Div(Box::new(Expr::Var), c(3.0)));
        assert_eq!(parse_expr(" x / 3 ").unwrap(), parse_expr("x/3").unwrap());
    }

    #[test]
    fn parses_parabolic_branch() {
        let e = parse_expr("x + x^2 * exp(-1/x)").unwrap();
        let expected = Expr::Add(
            Box::new(Expr::Var),
            Box::new(Expr::Mul(
                Box::new(Expr::Pow(Box::new(Expr::Var), 2.0)),
                Box::new(Expr::Exp(Box::new(Expr::Div(
                    Box::new(Expr::Neg(c(1.0))),
                    Box::new(Expr::Var),
                )))),
            )),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        match parse_expr("x +* 2") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_expr("(x"), Err(Error::Parse { offset: 2, .. })));
        assert!(matches!(parse_expr("x x"), Err(Error::Parse { offset: 2, .. })));
        assert!(matches!(parse_expr(""), Err(Error::Parse { offset: 0, .. })));
        assert!(parse_expr("x^y").is_err());
    }

    #[test]
    fn power_binds_tighter_than_negation() {
        let e = parse_expr("-x^2").unwrap();
        assert_eq!(e.eval(3.0).unwrap(), -9.0);
        assert_eq!(parse_expr("x^(1/2)").unwrap().eval(4.0).unwrap(), 2.0);
        assert_eq!(parse_expr("x^-1").unwrap().eval(4.0).unwrap(), 0.25);
        assert_eq!(parse_expr("2.5e-1*x").unwrap().eval(4.0).unwrap(), 1.0);
    }

    #[test]
    fn derivatives_fold_constants() {
        let d = differentiate(&parse_expr("x/3").unwrap());
        assert_eq!(d, Expr::Const(1.0 / 3.0));
        let d = differentiate(&parse_expr("10*x - 9").unwrap());
        assert_eq!(d, Expr::Const(10.0));
    }

    #[test]
    fn slash_after_integer_exponent_is_division() {
        let e = parse_expr("x/3 + x^2/100").unwrap();
        assert!((e.eval(1.0).unwrap() - (1.0 / 3.0 + 0.01)).abs() < 1e-15);
        let e = parse_expr("x^(1/2)").unwrap();
        assert_eq!(e.eval(4.0).unwrap(), 2.0);
    }

    #[test]
    fn parabolic_derivative_matches_closed_form() {
        let e = parse_expr("x + x^2 * exp(-1/x)").unwrap();
        let d = differentiate(&e);
        for x in [0.1f64, 0.3, 0.5] {
            let closed = 1.0 + (2.0 * x + 1.0) * (-1.0 / x).exp();
            assert!((d.eval(x).unwrap() - closed).abs() < 1e-14);
            assert!((central_diff(&e, x, 1e-6) - closed).abs() < 1e-8);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(parse_expr("1/x").unwrap().eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(parse_expr("log(x)").unwrap().eval(-1.0), Err(Error::Domain(_))));
        assert!(matches!(parse_expr("x^0.5").unwrap().eval(-1.0), Err(Error::Domain(_))));
        assert_eq!(parse_expr("x/3").unwrap().eval(0.9).unwrap(), 0.3);
    }

    #[test]
    fn underflowing_exponential_is_zero() {
        let e = parse_expr("x^2*exp(-1/x)").unwrap();
        assert_eq!(e.eval(1e-3).unwrap(), 0.0);
    }

    #[test]
    fn displacement_strips_identity() {
        let f = parse_expr("x + x^3").unwrap();
        assert_eq!(sub(f, Expr::Var), parse_expr("x^3").unwrap());
    }

    #[test]
    fn display_round_trips() {
        for src in ["x + x^2 * exp(-1/x)", "log(x+2)/(x-3)", "-x^(1/2)"] {
            let e = parse_expr(src).unwrap();
            let again = parse_expr(&e.to_string()).unwrap();
            for x in [0.5, 1.5] {
                assert_eq!(e.eval(x).unwrap(), again.eval(x).unwrap());
            }
        }
    }
}
