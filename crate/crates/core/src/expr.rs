//! Scalar coefficient expressions of the parameters `w1..wd`.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' integer)?
//! base   := number | ident | func '(' expr ')' | '(' expr ')' | '-' base
//! ident  := 'w' integer
//! func   := sin | cos | exp | sqrt | abs
//! ```
//!
//! Parameters are 1-based in text (`w1`) and 0-based in the tree
//! (`Expr::Param(0)`). Unary minus binds tighter than `^`, so `-w1^2` is
//! `(-w1)^2`; the printer inserts parentheses accordingly.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{name}` at {pos}")]
    UnknownSymbol { pos: usize, name: String },
    #[error("parameter w{index} at {pos} out of range (d = {d})")]
    ParamOutOfRange { pos: usize, index: usize, d: usize },
    #[error("expression needs parameter w{index} but only {given} values were supplied")]
    MissingParam { index: usize, given: usize },
    #[error("non-finite value {value} in subexpression `{subexpr}`")]
    NonFinite { subexpr: String, value: f64 },
    #[error("`{subexpr}` is not differentiable")]
    NotDifferentiable { subexpr: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

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

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based parameter index.
    Param(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str, d: usize) -> Result<Expr, ExprError> {
        let mut p = Parser { src: text.as_bytes(), pos: 0, d };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.syntax("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, omega: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::Param(i) => *omega
                .get(*i)
                .ok_or(ExprError::MissingParam { index: i + 1, given: omega.len() })?,
            Expr::Neg(a) => -a.eval(omega)?,
            Expr::Add(a, b) => a.eval(omega)? + b.eval(omega)?,
            Expr::Sub(a, b) => a.eval(omega)? - b.eval(omega)?,
            Expr::Mul(a, b) => a.eval(omega)? * b.eval(omega)?,
            Expr::Div(a, b) => a.eval(omega)? / b.eval(omega)?,
            Expr::Pow(a, k) => a.eval(omega)?.powi(*k),
            Expr::Call(f, a) => f.apply(a.eval(omega)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite { subexpr: self.to_string(), value: v })
        }
    }

    /// Symbolic partial derivative with respect to the zero-based parameter
    /// `param`, constant-folded.
    pub fn diff(&self, param: usize) -> Result<Expr, ExprError> {
        Ok(self.raw_diff(param)?.simplify())
    }

    fn raw_diff(&self, j: usize) -> Result<Expr, ExprError> {
        use Expr::*;
        Ok(match self {
            Num(_) => Num(0.0),
            Param(i) => Num(if *i == j { 1.0 } else { 0.0 }),
            Neg(a) => Neg(a.raw_diff(j)?.boxed()),
            Add(a, b) => Add(a.raw_diff(j)?.boxed(), b.raw_diff(j)?.boxed()),
            Sub(a, b) => Sub(a.raw_diff(j)?.boxed(), b.raw_diff(j)?.boxed()),
            Mul(a, b) => Add(
                Mul(a.raw_diff(j)?.boxed(), b.clone()).boxed(),
                Mul(a.clone(), b.raw_diff(j)?.boxed()).boxed(),
            ),
            Div(a, b) => Div(
                Sub(
                    Mul(a.raw_diff(j)?.boxed(), b.clone()).boxed(),
                    Mul(a.clone(), b.raw_diff(j)?.boxed()).boxed(),
                )
                .boxed(),
                Pow(b.clone(), 2).boxed(),
            ),
            Pow(_, 0) => Num(0.0),
            Pow(a, k) => Mul(
                Mul(Num(f64::from(*k)).boxed(), Pow(a.clone(), k - 1).boxed()).boxed(),
                a.raw_diff(j)?.boxed(),
            ),
            Call(f, a) => {
                let inner = a.raw_diff(j)?.boxed();
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(Call(Func::Sin, a.clone()).boxed()),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Sqrt => {
                        return Ok(Div(
                            inner,
                            Mul(Num(2.0).boxed(), Call(Func::Sqrt, a.clone()).boxed()).boxed(),
                        ))
                    }
                    Func::Abs => {
                        return Err(ExprError::NotDifferentiable { subexpr: self.to_string() })
                    }
                };
                Mul(outer.boxed(), inner)
            }
        })
    }

    /// Constant folding plus the identities `0*x`, `x*1`, `x+0`, `x-0`,
    /// `0-x`, `x/1`, `0/x`, `x^0`, `x^1`, `--x`. Folds that would produce a
    /// non-finite constant are left unevaluated.
    pub fn simplify(&self) -> Expr {
        use Expr::*;
        let fold = |v: f64, otherwise: Expr| if v.is_finite() { Num(v) } else { otherwise };
        match self {
            Num(_) | Param(_) => self.clone(),
            Neg(a) => match a.simplify() {
                Num(c) => Num(-c),
                Neg(inner) => *inner,
                s => Neg(s.boxed()),
            },
            Add(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => fold(x + y, Add(Num(x).boxed(), Num(y).boxed())),
                (x, Num(z)) | (Num(z), x) if z == 0.0 => x,
                (x, y) => Add(x.boxed(), y.boxed()),
            },
            Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => fold(x - y, Sub(Num(x).boxed(), Num(y).boxed())),
                (x, Num(z)) if z == 0.0 => x,
                (Num(z), y) if z == 0.0 => Neg(y.boxed()).simplify(),
                (x, y) => Sub(x.boxed(), y.boxed()),
            },
            Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => fold(x * y, Mul(Num(x).boxed(), Num(y).boxed())),
                (_, Num(z)) | (Num(z), _) if z == 0.0 => Num(0.0),
                (x, Num(o)) | (Num(o), x) if o == 1.0 => x,
                (x, Num(o)) | (Num(o), x) if o == -1.0 => Neg(x.boxed()).simplify(),
                (x, y) => Mul(x.boxed(), y.boxed()),
            },
            Div(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => fold(x / y, Div(Num(x).boxed(), Num(y).boxed())),
                (Num(z), _) if z == 0.0 => Num(0.0),
                (x, Num(o)) if o == 1.0 => x,
                (x, y) => Div(x.boxed(), y.boxed()),
            },
            Pow(a, k) => match (a.simplify(), *k) {
                (_, 0) => Num(1.0),
                (x, 1) => x,
                (Num(x), k) => fold(x.powi(k), Pow(Num(x).boxed(), k)),
                (x, k) => Pow(x.boxed(), k),
            },
            Call(f, a) => match a.simplify() {
                Num(x) => fold(f.apply(x), Call(*f, Num(x).boxed())),
                s => Call(*f, s.boxed()),
            },
        }
    }

    fn boxed(self) -> Box<Expr> {
        Box::new(self)
    }

    /// Highest zero-based parameter index referenced, if any.
    pub fn max_param(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Param(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_param(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.max_param().max(b.max_param())
            }
        }
    }

    pub fn contains_abs(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Param(_) => false,
            Expr::Call(Func::Abs, _) => true,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.contains_abs(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.contains_abs() || b.contains_abs()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(c) if *c == 0.0)
    }

    // Binding strength used by the printer; a larger value binds tighter.
    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Param(_) | Expr::Call(..) => 5,
        }
    }

    // `base` in the grammar: may stand directly after unary minus or before `^`.
    fn is_base(&self) -> bool {
        matches!(self, Expr::Param(_) | Expr::Call(..) | Expr::Num(_) | Expr::Neg(_))
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
    if wrap {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Param(i) => write!(f, "w{}", i + 1),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_wrapped(f, a, !a.is_base())
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                write_wrapped(f, a, a.prec() < 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) { "+" } else { "-" })?;
                write_wrapped(f, b, b.prec() <= 1)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                write_wrapped(f, a, a.prec() < 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                write_wrapped(f, b, b.prec() <= 2)
            }
            Expr::Pow(a, k) => {
                write_wrapped(f, a, !a.is_base())?;
                write!(f, "^{k}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    d: usize,
}

impl Parser<'_> {
    fn syntax(&self, msg: &str) -> ExprError {
        ExprError::Syntax { pos: self.pos, msg: msg.to_string() }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        self.skip_ws();
        let start = self.pos;
        if matches!(self.src.get(self.pos), Some(b'-' | b'+')) {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == digits {
            return Err(self.syntax("exponent must be an integer literal"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let k = text.parse::<i32>().map_err(|_| ExprError::Syntax {
            pos: start,
            msg: format!("exponent `{text}` out of range"),
        })?;
        Ok(Expr::Pow(Box::new(base), k))
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.base()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => Err(self.syntax(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.src.get(p.pos).is_some_and(u8::is_ascii_digit) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(ExprError::Syntax { pos: start, msg: "malformed number".into() });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'-' | b'+')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.syntax("malformed exponent in number"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ExprError::Syntax { pos: start, msg: format!("malformed number `{text}`") })
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some(idx) = name.strip_prefix('w').filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())) {
            let index: usize = idx.parse().map_err(|_| ExprError::UnknownSymbol { pos: start, name: name.into() })?;
            if index == 0 || index > self.d {
                return Err(ExprError::ParamOutOfRange { pos: start, index, d: self.d });
            }
            return Ok(Expr::Param(index - 1));
        }
        match Func::from_name(name) {
            Some(f) => {
                self.expect(b'(')?;
                let arg = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::Call(f, Box::new(arg)))
            }
            None => Err(ExprError::UnknownSymbol { pos: start, name: name.into() }),
        }
    }
}
