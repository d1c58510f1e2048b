//! Hamiltonian expressions in the position quadratures.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := ('+' | '-')? (coeff | factor) ('*' factor)*
//! factor := 'x' INT ('^' INT)?
//! coeff  := decimal, optionally with an exponent
//! ```
//!
//! Modes are 1-based (`x1` is the first mode). Whitespace is ignored.

use std::fmt;

use cvgate::quadpoly::{Exponents, QuadraturePolynomial};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// byte offset into the source text
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at position {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianExpr {
    pub source: String,
    pub poly: QuadraturePolynomial,
}

impl fmt::Display for HamiltonianExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.poly)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

type Term = (f64, Vec<(usize, u32)>);

impl<'a> Parser<'a> {
    fn err<T>(&self, at: usize, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { position: at, message: msg.into() })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn integer(&mut self) -> Result<u32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(start, "expected an integer");
        }
        self.src[start..self.pos].parse().or_else(|_| self.err(start, "integer too large"))
    }

    fn coefficient(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while matches!(p.peek(), Some(c) if c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos > s
        };
        let mut any = digits(self);
        if self.peek() == Some('.') {
            self.pos += 1;
            any |= digits(self);
        }
        if !any {
            return self.err(start, "expected a number");
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if !digits(self) {
                self.pos = save;
            }
        }
        let v: f64 = self.src[start..self.pos].parse().or_else(|_| self.err(start, "malformed number"))?;
        if !v.is_finite() {
            return self.err(start, "coefficient is not finite");
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<(usize, u32), ParseError> {
        self.skip_ws();
        let at = self.pos;
        match self.peek() {
            Some('x') => self.pos += 1,
            Some('p') => {
                return self
                    .err(at, "momentum symbols are not admitted: the gate Hamiltonian must be a polynomial in x only")
            }
            Some(c) => return self.err(at, format!("expected 'x<mode>', found '{c}'")),
            None => return self.err(at, "expected 'x<mode>', found end of input"),
        }
        let mode = self.integer()?;
        if mode == 0 {
            return self.err(at, "modes are numbered from 1");
        }
        let power = if self.eat('^') { self.integer()? } else { 1 };
        Ok((mode as usize, power))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        self.skip_ws();
        let mut sign = 1.0;
        if self.eat('-') {
            sign = -1.0;
        } else {
            self.eat('+');
        }
        self.skip_ws();
        let mut factors = Vec::new();
        let coef = if matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.coefficient()?
        } else {
            factors.push(self.factor()?);
            1.0
        };
        while self.eat('*') {
            factors.push(self.factor()?);
        }
        Ok((sign * coef, factors))
    }

    fn expr(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Ok(terms),
                Some('+') => {
                    self.pos += 1;
                    terms.push(self.term()?);
                }
                Some('-') => {
                    self.pos += 1;
                    let (c, f) = self.term()?;
                    terms.push((-c, f));
                }
                Some(c) => return self.err(self.pos, format!("unexpected '{c}'")),
            }
        }
    }
}

/// Parses with the mode count taken from the highest index used.
pub fn parse_hamiltonian(text: &str) -> Result<HamiltonianExpr, ParseError> {
    parse_hamiltonian_modes(text, None)
}

/// Parses into a polynomial over `modes` modes when given.
pub fn parse_hamiltonian_modes(text: &str, modes: Option<usize>) -> Result<HamiltonianExpr, ParseError> {
    let terms = Parser { src: text, pos: 0 }.expr()?;
    let used = terms.iter().flat_map(|(_, f)| f.iter().map(|(m, _)| *m)).max().unwrap_or(1);
    let n = match modes {
        Some(n) if n < used => {
            return Err(ParseError { position: 0, message: format!("x{used} used but only {n} modes declared") })
        }
        Some(n) => n,
        None => used,
    };
    let mut out: Vec<(Exponents, f64)> = Vec::with_capacity(terms.len());
    for (c, factors) in terms {
        let mut e = vec![0u32; 2 * n];
        for (m, k) in factors {
            e[2 * (m - 1)] += k;
        }
        out.push((e, c));
    }
    let poly =
        QuadraturePolynomial::from_terms(n, out).map_err(|e| ParseError { position: 0, message: e.to_string() })?;
    Ok(HamiltonianExpr { source: text.to_string(), poly })
}
