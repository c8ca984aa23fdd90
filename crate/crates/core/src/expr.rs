//! Scalar expressions in chart coordinates.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;
//! primary = number | coord | const | func "(" expr ")" | "(" expr ")" ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//!         | "." digits [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! coord   = "x" digits ;                      (* index < chart dimension *)
//! const   = "pi" | "e" ;
//! func    = "sin" | "cos" | "tan" | "exp" | "log" | "sqrt"
//!         | "sinh" | "cosh" | "tanh" ;
//! ```
//!
//! `^` binds tightest and is right-associative, so `-x0^2` is `-(x0^2)` and
//! `2^3^2` is `2^(3^2)`. An exponent that is an integer literal (optionally
//! negated) is evaluated by repeated multiplication and accepts any base;
//! other exponents require a positive base.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use core::fmt;

use crate::jet::{Jet2, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == s)
    }
}

/// Expression tree. Immutable once parsed.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("invalid number literal")]
    InvalidNumber,
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("coordinate index {index} out of range for chart dimension {dim}")]
    CoordinateOutOfRange { index: usize, dim: usize },
}

/// Parse failure with the byte offset into the source where it was detected.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    /// `sqrt(0)` under differentiation: the derivative is unbounded.
    SqrtAtZero,
    PowNonPositiveBase,
    NonFinite,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogNonPositive => "log of non-positive value",
            DomainKind::SqrtNegative => "sqrt of negative value",
            DomainKind::SqrtAtZero => "sqrt at zero is not differentiable",
            DomainKind::PowNonPositiveBase => "non-integer power of non-positive base",
            DomainKind::NonFinite => "non-finite result",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{kind} in `{subexpr}`")]
    Domain { kind: DomainKind, subexpr: String },
    #[error("coordinate x{index} not available at a point of dimension {dim}")]
    CoordinateOutOfRange { index: usize, dim: usize },
}

/// Parses `source` as an expression over coordinates `x0..x{dim-1}`.
pub fn parse(source: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut p = Parser { src: source.as_bytes(), pos: 0, dim };
    p.skip_ws();
    if p.pos == p.src.len() {
        return Err(ParseError { kind: ParseErrorKind::Empty, offset: 0 });
    }
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.unexpected());
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
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

    fn err(&self, kind: ParseErrorKind, offset: usize) -> ParseError {
        ParseError { kind, offset }
    }

    fn unexpected(&self) -> ParseError {
        match self.src.get(self.pos) {
            None => self.err(ParseErrorKind::UnexpectedEnd, self.pos),
            Some(_) => {
                // report the full (possibly multi-byte) character
                let rest = core::str::from_utf8(&self.src[self.pos..]).ok();
                let c = rest.and_then(|s| s.chars().next()).unwrap_or('\u{FFFD}');
                self.err(ParseErrorKind::UnexpectedChar(c), self.pos)
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.unexpected()),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')', "')'")?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.unexpected()),
        }
    }

    fn expect(&mut self, c: u8, what: &'static str) -> Result<(), ParseError> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            None => Err(self.err(ParseErrorKind::Expected(what), self.pos)),
            Some(_) => Err(self.err(ParseErrorKind::Expected(what), self.pos)),
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.pos - start
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let int_digits = self.digits();
        let mut frac_digits = 0;
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            frac_digits = self.digits();
        }
        if int_digits == 0 && frac_digits == 0 {
            return Err(self.err(ParseErrorKind::InvalidNumber, start));
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            // only an exponent if digits follow; otherwise leave `e` for the caller
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                self.pos = save;
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos])
            .map_err(|_| self.err(ParseErrorKind::InvalidNumber, start))?;
        let v: f64 = text.parse().map_err(|_| self.err(ParseErrorKind::InvalidNumber, start))?;
        if !v.is_finite() {
            return Err(self.err(ParseErrorKind::InvalidNumber, start));
        }
        Ok(Expr::Num(v))
    }

    fn ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        // ASCII only, so this cannot fail
        let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| {
                    self.err(
                        ParseErrorKind::CoordinateOutOfRange { index: usize::MAX, dim: self.dim },
                        start,
                    )
                })?;
                if index >= self.dim {
                    return Err(
                        self.err(ParseErrorKind::CoordinateOutOfRange { index, dim: self.dim }, start)
                    );
                }
                return Ok(Expr::Coord(index));
            }
        }
        match name {
            "pi" => return Ok(Expr::Num(core::f64::consts::PI)),
            "e" => return Ok(Expr::Num(core::f64::consts::E)),
            _ => {}
        }
        if let Some(f) = Func::from_name(name) {
            self.expect(b'(', "'(' after function name")?;
            let arg = self.expr()?;
            self.expect(b')', "')'")?;
            return Ok(Expr::Call(f, Box::new(arg)));
        }
        Err(self.err(ParseErrorKind::UnknownIdentifier(name.to_string()), start))
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn coord(i: usize) -> Expr {
        Expr::Coord(i)
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Coord(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_coord(),
            Expr::Bin(_, a, b) => match (a.max_coord(), b.max_coord()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// True for a literal `0`, which lets callers skip evaluation.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// The exponent as an integer when it is syntactically an integer literal.
    fn integer_exponent(e: &Expr) -> Option<i32> {
        let (neg, lit) = match e {
            Expr::Num(v) => (false, *v),
            Expr::Neg(inner) => match inner.as_ref() {
                Expr::Num(v) => (true, *v),
                _ => return None,
            },
            _ => return None,
        };
        if lit == libm::trunc(lit) && lit.abs() <= 1.0e6 {
            let k = lit as i32;
            Some(if neg { -k } else { k })
        } else {
            None
        }
    }

    /// Evaluates on any scalar type; `coords[i]` is the value of `x{i}`.
    pub fn eval<S: Scalar>(&self, coords: &[S]) -> Result<S, EvalError> {
        let dim = coords.len();
        let out = match self {
            Expr::Num(v) => return Ok(S::constant(*v, dim)),
            Expr::Coord(i) => {
                return coords
                    .get(*i)
                    .copied()
                    .ok_or(EvalError::CoordinateOutOfRange { index: *i, dim })
            }
            Expr::Neg(a) => -a.eval(coords)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval(coords)?;
                match op {
                    BinOp::Add => x + b.eval(coords)?,
                    BinOp::Sub => x - b.eval(coords)?,
                    BinOp::Mul => x * b.eval(coords)?,
                    BinOp::Div => {
                        let y = b.eval(coords)?;
                        if y.value() == 0.0 {
                            return Err(self.domain(DomainKind::DivisionByZero));
                        }
                        x * y.recip()
                    }
                    BinOp::Pow => match Expr::integer_exponent(b) {
                        Some(k) => {
                            if k < 0 && x.value() == 0.0 {
                                return Err(self.domain(DomainKind::DivisionByZero));
                            }
                            x.powi(k)
                        }
                        None => {
                            if x.value() <= 0.0 {
                                return Err(self.domain(DomainKind::PowNonPositiveBase));
                            }
                            let y = b.eval(coords)?;
                            (y * x.ln()).exp()
                        }
                    },
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(coords)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Sinh => x.sinh(),
                    Func::Cosh => x.cosh(),
                    Func::Tanh => x.tanh(),
                    Func::Log => {
                        if x.value() <= 0.0 {
                            return Err(self.domain(DomainKind::LogNonPositive));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        let v = x.value();
                        if v < 0.0 {
                            return Err(self.domain(DomainKind::SqrtNegative));
                        }
                        if v == 0.0 && S::is_jet() {
                            return Err(self.domain(DomainKind::SqrtAtZero));
                        }
                        x.sqrt()
                    }
                }
            }
        };
        if !out.value().is_finite() {
            return Err(self.domain(DomainKind::NonFinite));
        }
        Ok(out)
    }

    fn domain(&self, kind: DomainKind) -> EvalError {
        EvalError::Domain { kind, subexpr: self.to_string() }
    }

    /// Plain value at `p`.
    pub fn eval_f64(&self, p: &[f64]) -> Result<f64, EvalError> {
        self.eval(p)
    }

    /// Value, gradient and Hessian at `p`.
    pub fn eval_jet(&self, p: &[f64]) -> Result<Jet2, EvalError> {
        self.eval(&Jet2::seed(p))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Coord(_) | Expr::Call(..) => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Coord(i) => write!(f, "x{i}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_child(f, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, a, b) => {
                let (sym, lmin, rmin) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => (" * ", 2, 3),
                    BinOp::Div => (" / ", 2, 3),
                    BinOp::Pow => ("^", 5, 3),
                };
                a.write_child(f, lmin)?;
                f.write_str(sym)?;
                b.write_child(f, rmin)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn coord(i: usize) -> Box<Expr> {
        Box::new(Expr::Coord(i))
    }

    #[test]
    fn grammar_reading() {
        let e = parse("x0^2 + sin(x1)", 2).unwrap();
        let want = Expr::Bin(
            BinOp::Add,
            Box::new(Expr::Bin(BinOp::Pow, coord(0), Box::new(Expr::Num(2.0)))),
            Box::new(Expr::Call(Func::Sin, coord(1))),
        );
        assert_eq!(e, want);
    }

    #[test]
    fn coordinate_out_of_range() {
        let err = parse("x3", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::CoordinateOutOfRange { index: 3, dim: 2 });
        assert_eq!(err.offset, 0);
        let err = parse("1 + x2", 2).unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn unary_minus_under_product() {
        let e = parse("2*-x0", 1).unwrap();
        assert_eq!(e.eval_f64(&[3.0]).unwrap(), -6.0);
    }

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| parse(s, 1).unwrap().eval_f64(&[3.0]).unwrap();
        assert_eq!(v("-x0^2"), -9.0);
        assert!((v("2^3^2") - 512.0).abs() < 1e-12);
        assert_eq!(v("10 - 4 - 3"), 3.0);
        assert_eq!(v("12 / 3 / 2"), 2.0);
        assert_eq!(v("1 + 2 * 3"), 7.0);
        assert_eq!(v("x0^-1"), 1.0 / 3.0);
        assert_eq!(v(" ( 1+2 ) *\tx0 "), 9.0);
        assert_eq!(v("2.5e1"), 25.0);
        assert_eq!(v(".5"), 0.5);
    }

    #[test]
    fn positioned_errors() {
        let cases: &[(&str, usize)] =
            &[("1 +", 3), ("(x0", 3), ("sin x0", 4), ("foo(1)", 0), ("1 $ 2", 2), ("2e", 1)];
        for (src, off) in cases {
            let err = parse(src, 1).unwrap_err();
            assert_eq!(err.offset, *off, "{src}: {err}");
        }
        assert_eq!(parse("   ", 1).unwrap_err().kind, ParseErrorKind::Empty);
        assert!(matches!(
            parse("bar", 1).unwrap_err().kind,
            ParseErrorKind::UnknownIdentifier(ref s) if s == "bar"
        ));
    }

    #[test]
    fn named_constants_are_literals() {
        assert_eq!(parse("pi", 1).unwrap(), Expr::Num(core::f64::consts::PI));
        assert_eq!(parse("e", 1).unwrap(), Expr::Num(core::f64::consts::E));
    }

    #[test]
    fn jet_examples() {
        let j = parse("x0*x1", 2).unwrap().eval_jet(&[2.0, 3.0]).unwrap();
        assert_eq!(j.val(), 6.0);
        assert_eq!(j.grad(), &[3.0, 2.0]);
        assert_eq!([j.dd(0, 0), j.dd(0, 1), j.dd(1, 0), j.dd(1, 1)], [0.0, 1.0, 1.0, 0.0]);

        let j = parse("sin(x0)", 1).unwrap().eval_jet(&[0.0]).unwrap();
        assert_eq!(j.val(), 0.0);
        assert_eq!(j.grad(), &[1.0]);
        assert_eq!(j.dd(0, 0), 0.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse("1 + log(x0 - 1)", 1).unwrap();
        match e.eval_f64(&[0.5]).unwrap_err() {
            EvalError::Domain { kind, subexpr } => {
                assert_eq!(kind, DomainKind::LogNonPositive);
                assert_eq!(subexpr, "log(x0 - 1.0)");
            }
            other => panic!("{other:?}"),
        }
        let e = parse("sqrt(x0)", 1).unwrap();
        assert!(matches!(
            e.eval_f64(&[-1.0]),
            Err(EvalError::Domain { kind: DomainKind::SqrtNegative, .. })
        ));
        assert_eq!(e.eval_f64(&[0.0]).unwrap(), 0.0);
        assert!(matches!(
            e.eval_jet(&[0.0]),
            Err(EvalError::Domain { kind: DomainKind::SqrtAtZero, .. })
        ));
        let e = parse("1 / (x0 - 2)", 1).unwrap();
        assert!(matches!(
            e.eval_f64(&[2.0]),
            Err(EvalError::Domain { kind: DomainKind::DivisionByZero, .. })
        ));
        // integer exponents accept negative bases, real ones do not
        assert_eq!(parse("x0^2", 1).unwrap().eval_f64(&[-3.0]).unwrap(), 9.0);
        assert!(matches!(
            parse("x0^2.5", 1).unwrap().eval_f64(&[-3.0]),
            Err(EvalError::Domain { kind: DomainKind::PowNonPositiveBase, .. })
        ));
        assert!(matches!(
            parse("exp(x0)", 1).unwrap().eval_f64(&[1000.0]),
            Err(EvalError::Domain { kind: DomainKind::NonFinite, .. })
        ));
    }

    #[test]
    fn eval_rejects_short_points() {
        let e = parse("x1", 2).unwrap();
        assert_eq!(
            e.eval_f64(&[1.0]),
            Err(EvalError::CoordinateOutOfRange { index: 1, dim: 1 })
        );
    }

    // Finite-difference oracle for the jet: fourth-order central differences
    // of the plain value. The value itself is accumulated as a compensated
    // sum of monomials so the differences are not dominated by roundoff.
    fn poly_value(terms: &[(f64, [u32; 3])], p: &[f64; 3]) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for (c, e) in terms {
            let m = c * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32);
            let y = m - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    fn poly_source(terms: &[(f64, [u32; 3])]) -> alloc::string::String {
        let parts: Vec<alloc::string::String> = terms
            .iter()
            .map(|(c, e)| format!("{c:?}*x0^{}*x1^{}*x2^{}", e[0], e[1], e[2]))
            .collect();
        parts.join(" + ")
    }

    fn fd_grad_hess(terms: &[(f64, [u32; 3])], p: [f64; 3], h: f64) -> ([f64; 3], [[f64; 3]; 3]) {
        let f = |q: [f64; 3]| poly_value(terms, &q);
        let shift = |i: usize, s: f64| {
            let mut q = p;
            q[i] += s;
            q
        };
        let mut g = [0.0; 3];
        for i in 0..3 {
            g[i] = (-f(shift(i, 2.0 * h)) + 8.0 * f(shift(i, h)) - 8.0 * f(shift(i, -h))
                + f(shift(i, -2.0 * h)))
                / (12.0 * h);
        }
        let mut hs = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                // fourth-order mixed partial built from the first-derivative stencil
                let di = |q: [f64; 3]| {
                    let s = |t: f64| {
                        let mut r = q;
                        r[i] += t;
                        f(r)
                    };
                    (-s(2.0 * h) + 8.0 * s(h) - 8.0 * s(-h) + s(-2.0 * h)) / (12.0 * h)
                };
                let sj = |t: f64| {
                    let mut r = p;
                    r[j] += t;
                    di(r)
                };
                hs[i][j] = (-sj(2.0 * h) + 8.0 * sj(h) - 8.0 * sj(-h) + sj(-2.0 * h)) / (12.0 * h);
            }
        }
        (g, hs)
    }

    fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * scale.max(1.0)
    }

    proptest! {
        #[test]
        fn jet_matches_finite_differences(
            terms in proptest::collection::vec(
                (-2.0f64..2.0, (0u32..4, 0u32..4, 0u32..4)), 1..6),
            p in (-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5),
        ) {
            let terms: Vec<(f64, [u32; 3])> =
                terms.into_iter().map(|(c, (a, b, d))| (c, [a, b, d])).collect();
            let p = [p.0, p.1, p.2];
            let e = parse(&poly_source(&terms), 3).unwrap();
            let j = e.eval_jet(&p).unwrap();
            let (g, hs) = fd_grad_hess(&terms, p, 1e-4);
            let scale = terms.iter().map(|t| t.0.abs()).sum::<f64>() * 30.0;
            prop_assert!(rel_close(j.val(), poly_value(&terms, &p), scale, 1e-12));
            for i in 0..3 {
                prop_assert!(rel_close(j.d(i), g[i], scale, 1e-6), "grad {} {} {}", i, j.d(i), g[i]);
                for k in 0..3 {
                    prop_assert!(rel_close(j.dd(i, k), hs[i][k], scale, 1e-6),
                        "hess {} {} {} {}", i, k, j.dd(i, k), hs[i][k]);
                }
            }
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            (0usize..3).prop_map(Expr::Coord),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone(), 0usize..5).prop_map(|(a, b, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][k];
                    Expr::Bin(op, Box::new(a), Box::new(b))
                }),
                (inner, 0usize..9).prop_map(|(a, k)| Expr::Call(Func::ALL[k], Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = format!("{e}");
            let back = parse(&printed, 3).unwrap();
            prop_assert_eq!(back, e, "printed: {}", printed);
        }

        #[test]
        fn fuzzed_valid_strings_parse(e in arb_expr(), ws in proptest::collection::vec(0usize..3, 0..8)) {
            // re-space the printed form arbitrarily; whitespace must be insignificant
            let printed = format!("{e}");
            let mut spaced = alloc::string::String::new();
            for (i, ch) in printed.chars().enumerate() {
                spaced.push(ch);
                if ws.get(i % ws.len().max(1)).copied().unwrap_or(0) == 2 && ch == ' ' {
                    spaced.push('\t');
                }
            }
            prop_assert!(parse(&spaced, 3).is_ok());
        }

        #[test]
        fn garbage_yields_positioned_error(s in "[-+*/^()x0-9a-z .$#]{0,24}") {
            match parse(&s, 3) {
                Ok(_) => {}
                Err(err) => prop_assert!(err.offset <= s.len()),
            }
        }
    }

    #[test]
    fn printer_is_readable() {
        let e = parse("-(x0 + x1)^2 * (x2 - (x0 - 1))", 3).unwrap();
        assert_eq!(format!("{e}"), "-(x0 + x1)^2.0 * (x2 - (x0 - 1.0))");
        let v = vec![1.0, 2.0, 3.0];
        assert_eq!(e.eval_f64(&v).unwrap(), -9.0 * 3.0);
    }
}
