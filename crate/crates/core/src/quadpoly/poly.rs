use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Exponent vector laid out as `(k1x, k1p, k2x, k2p, ..., kNx, kNp)`.
pub type Exponents = Vec<u32>;

/// Real-coefficient polynomial in the quadrature symbols `x_j`, `p_j`.
///
/// The polynomial is a classical phase-space function: multiplication is the
/// commutative product of symbols. When it is turned into an operator (see
/// [`crate::fock::polynomial_operator`]) every monomial is Weyl ordered, which
/// is what makes [`conjugate`](super::conjugate) by a linear symplectic map a
/// plain substitution.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraturePolynomial {
    modes: usize,
    terms: BTreeMap<Exponents, f64>,
}

impl QuadraturePolynomial {
    pub fn zero(modes: usize) -> Self {
        Self { modes, terms: BTreeMap::new() }
    }

    pub fn constant(modes: usize, c: f64) -> Self {
        let mut out = Self::zero(modes);
        out.insert(vec![0; 2 * modes], c);
        out
    }

    /// Position quadrature `x_j` (0-based mode index).
    pub fn x(modes: usize, j: usize) -> Self {
        Self::symbol(modes, 2 * j)
    }

    /// Momentum quadrature `p_j` (0-based mode index).
    pub fn p(modes: usize, j: usize) -> Self {
        Self::symbol(modes, 2 * j + 1)
    }

    fn symbol(modes: usize, slot: usize) -> Self {
        assert!(slot < 2 * modes, "symbol slot {slot} out of range for {modes} modes");
        let mut e = vec![0; 2 * modes];
        e[slot] = 1;
        let mut out = Self::zero(modes);
        out.insert(e, 1.0);
        out
    }

    pub fn monomial(modes: usize, exps: Exponents, coeff: f64) -> Result<Self> {
        Self::from_terms(modes, [(exps, coeff)])
    }

    pub fn from_terms<I>(modes: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exponents, f64)>,
    {
        let mut out = Self::zero(modes);
        for (e, c) in terms {
            if e.len() != 2 * modes {
                return Err(Error::InvalidParameter(format!(
                    "exponent vector of length {} for {} modes",
                    e.len(),
                    modes
                )));
            }
            if !c.is_finite() {
                return Err(Error::NonFiniteCoefficient);
            }
            out.insert(e, c);
        }
        Ok(out)
    }

    fn insert(&mut self, e: Exponents, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Same as [`is_zero`](Self::is_zero): no stored terms.
    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    pub fn coefficient(&self, exps: &[u32]) -> f64 {
        self.terms.get(exps).copied().unwrap_or(0.0)
    }

    /// Total degree (x and p symbols together).
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Total degree counting x symbols only.
    pub fn x_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().step_by(2).sum()).max().unwrap_or(0)
    }

    /// Largest combined x+p exponent of a single mode.
    pub fn mode_degree(&self, j: usize) -> u32 {
        self.terms.keys().map(|e| e[2 * j] + e[2 * j + 1]).max().unwrap_or(0)
    }

    pub fn is_x_only(&self) -> bool {
        self.terms.keys().all(|e| e.iter().skip(1).step_by(2).all(|&k| k == 0))
    }

    pub(crate) fn require_x_only(&self) -> Result<()> {
        if self.is_x_only() {
            Ok(())
        } else {
            Err(Error::ContainsMomentum)
        }
    }

    /// Largest absolute coefficient; used as the gate strength.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.modes);
        for (e, c) in &self.terms {
            out.insert(e.clone(), c * s);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.modes, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Partial derivative with respect to `x_j`.
    pub fn derivative_x(&self, j: usize) -> Self {
        let mut out = Self::zero(self.modes);
        for (e, c) in &self.terms {
            let k = e[2 * j];
            if k > 0 {
                let mut e2 = e.clone();
                e2[2 * j] -= 1;
                out.insert(e2, c * k as f64);
            }
        }
        out
    }

    /// Evaluates at a phase-space point given as `(x1, p1, ..., xN, pN)`.
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), 2 * self.modes);
        self.terms.iter().map(|(e, c)| e.iter().zip(point).fold(*c, |acc, (&k, &v)| acc * v.powi(k as i32))).sum()
    }

    /// Evaluates an x-only polynomial at position `(x1, ..., xN)`; p exponents are ignored.
    pub fn evaluate_x(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.modes);
        self.terms
            .iter()
            .map(|(e, c)| x.iter().enumerate().fold(*c, |acc, (j, &v)| acc * v.powi(e[2 * j] as i32)))
            .sum()
    }

    /// Replaces symbol slot `s` (layout as in [`Exponents`]) by `images[s]` and expands.
    pub fn substitute(&self, images: &[QuadraturePolynomial]) -> Self {
        assert_eq!(images.len(), 2 * self.modes);
        let target_modes = images.first().map_or(self.modes, |p| p.modes);
        let mut powers: Vec<Vec<QuadraturePolynomial>> =
            images.iter().map(|img| vec![QuadraturePolynomial::constant(target_modes, 1.0), img.clone()]).collect();
        let mut out = Self::zero(target_modes);
        for (e, c) in &self.terms {
            let mut term = QuadraturePolynomial::constant(target_modes, *c);
            for (s, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                while powers[s].len() <= k as usize {
                    let next = powers[s].last().unwrap() * &images[s];
                    powers[s].push(next);
                }
                term = &term * &powers[s][k as usize];
            }
            out = &out + &term;
        }
        out
    }

    /// Drops terms whose coefficient magnitude is at most `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.terms.retain(|_, c| c.abs() > tol);
        out
    }

    /// Coefficient-wise comparison with absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.modes != other.modes {
            return false;
        }
        let diff = self - other;
        diff.terms.values().all(|c| c.abs() <= tol)
    }

    pub fn embed(&self, modes: usize) -> Self {
        assert!(modes >= self.modes);
        let mut out = Self::zero(modes);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2.resize(2 * modes, 0);
            out.insert(e2, *c);
        }
        out
    }
}

impl Add for &QuadraturePolynomial {
    type Output = QuadraturePolynomial;
    fn add(self, rhs: Self) -> QuadraturePolynomial {
        assert_eq!(self.modes, rhs.modes, "mode count mismatch");
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.insert(e.clone(), *c);
        }
        out
    }
}

impl Sub for &QuadraturePolynomial {
    type Output = QuadraturePolynomial;
    fn sub(self, rhs: Self) -> QuadraturePolynomial {
        self + &rhs.scale(-1.0)
    }
}

impl Neg for &QuadraturePolynomial {
    type Output = QuadraturePolynomial;
    fn neg(self) -> QuadraturePolynomial {
        self.scale(-1.0)
    }
}

impl Mul for &QuadraturePolynomial {
    type Output = QuadraturePolynomial;
    fn mul(self, rhs: Self) -> QuadraturePolynomial {
        assert_eq!(self.modes, rhs.modes, "mode count mismatch");
        let mut out = QuadraturePolynomial::zero(self.modes);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                let e: Exponents = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.insert(e, c1 * c2);
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for QuadraturePolynomial {
            type Output = QuadraturePolynomial;
            fn $f(self, rhs: Self) -> QuadraturePolynomial {
                (&self).$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Prints in the `c*x1^a*p2^b + ...` text form accepted by the expression parser
/// (the parser only admits x symbols). Terms are emitted in descending degree.
impl fmt::Display for QuadraturePolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut ordered: Vec<_> = self.terms.iter().collect();
        ordered.sort_by(|(a, _), (b, _)| {
            let da: u32 = a.iter().sum();
            let db: u32 = b.iter().sum();
            db.cmp(&da).then_with(|| b.cmp(a))
        });
        for (i, (e, c)) in ordered.into_iter().enumerate() {
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            match (i, sign) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            write!(f, "{mag}")?;
            for (slot, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let sym = if slot % 2 == 0 { 'x' } else { 'p' };
                write!(f, "*{}{}", sym, slot / 2 + 1)?;
                if k > 1 {
                    write!(f, "^{k}")?;
                }
            }
        }
        Ok(())
    }
}

/// Effective feed-forward Hamiltonian `F(x; q) = V(x + q) - V(x)`.
pub fn shift_polynomial(v: &QuadraturePolynomial, q: &[f64]) -> Result<QuadraturePolynomial> {
    v.require_x_only()?;
    if q.len() != v.modes() {
        return Err(Error::InvalidParameter(format!("shift vector has length {} for {} modes", q.len(), v.modes())));
    }
    let n = v.modes();
    let images: Vec<_> = (0..2 * n)
        .map(|s| {
            let j = s / 2;
            if s % 2 == 0 {
                &QuadraturePolynomial::x(n, j) + &QuadraturePolynomial::constant(n, q[j])
            } else {
                QuadraturePolynomial::p(n, j)
            }
        })
        .collect();
    Ok(&v.substitute(&images) - v)
}

/// Nonlinear quadratures `p_j + dV/dx_j`, one per mode.
pub fn gradient_polys(v: &QuadraturePolynomial) -> Result<Vec<QuadraturePolynomial>> {
    v.require_x_only()?;
    let n = v.modes();
    Ok((0..n).map(|j| &QuadraturePolynomial::p(n, j) + &v.derivative_x(j)).collect())
}
