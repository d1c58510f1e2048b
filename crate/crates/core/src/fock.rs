//! Truncated Fock-space algebra.
//!
//! Convention: `x = (a + a†)/√2`, `p = (a - a†)/(i√2)`, so `[x, p] = i` and
//! the vacuum variance of either quadrature is 1/2. The grid simulator uses
//! the matching Hermite functions.
//!
//! Polynomial operators are assembled on an enlarged space of `D_j + guard`
//! levels per mode and then restricted, which makes every matrix element
//! between declared basis states exact as long as the per-mode degree does
//! not exceed the guard.

use std::collections::HashMap;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::quadpoly::QuadraturePolynomial;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Tolerance for the normalization precondition.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance for the hermiticity flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FockBasis {
    dims: Vec<usize>,
    guard: usize,
}

impl FockBasis {
    pub fn new(dims: Vec<usize>, guard: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter("basis needs at least one mode".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidParameter("every mode needs dimension >= 1".into()));
        }
        Ok(Self { dims, guard })
    }

    pub fn modes(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn with_guard(&self, guard: usize) -> Self {
        Self { dims: self.dims.clone(), guard }
    }

    /// Same modes, every dimension increased by `extra`.
    pub fn enlarged(&self, extra: usize) -> Self {
        Self { dims: self.dims.iter().map(|d| d + extra).collect(), guard: self.guard }
    }

    /// Row-major flat index (mode 1 slowest).
    pub fn index(&self, levels: &[usize]) -> usize {
        debug_assert_eq!(levels.len(), self.dims.len());
        levels.iter().zip(&self.dims).fold(0, |acc, (&n, &d)| {
            debug_assert!(n < d);
            acc * d + n
        })
    }

    pub fn levels(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    /// Product basis of `self` followed by `other`.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { dims, guard: self.guard.max(other.guard) }
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.dims == other.dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KetVector {
    basis: FockBasis,
    amps: Vec<C64>,
}

impl KetVector {
    pub fn new(basis: FockBasis, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.size() {
            return Err(Error::BasisMismatch(format!("{} amplitudes for basis of size {}", amps.len(), basis.size())));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite amplitude".into()));
        }
        Ok(Self { basis, amps })
    }

    pub fn zeros(basis: FockBasis) -> Self {
        let n = basis.size();
        Self { basis, amps: vec![ZERO; n] }
    }

    /// Fock state `|n1, ..., nN>`.
    pub fn fock(basis: FockBasis, levels: &[usize]) -> Result<Self> {
        if levels.len() != basis.modes() || levels.iter().zip(basis.dims()).any(|(n, d)| n >= d) {
            return Err(Error::InvalidParameter(format!("Fock state {levels:?} outside basis")));
        }
        let mut k = Self::zeros(basis);
        let i = k.basis.index(levels);
        k.amps[i] = C64::new(1.0, 0.0);
        Ok(k)
    }

    pub fn vacuum(basis: FockBasis) -> Self {
        let levels = vec![0; basis.modes()];
        Self::fock(basis, &levels).expect("vacuum is always in the basis")
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitude(&self, levels: &[usize]) -> C64 {
        self.amps[self.basis.index(levels)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if !(n > 0.0) {
            return Err(Error::InvalidParameter("cannot normalize the zero vector".into()));
        }
        Ok(Self { basis: self.basis.clone(), amps: self.amps.iter().map(|a| a / n).collect() })
    }

    pub fn require_normalized(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            Err(Error::NotNormalized(n))
        } else {
            Ok(())
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if !self.basis.same_shape(&other.basis) {
            return Err(Error::BasisMismatch("inner product across different bases".into()));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let basis = self.basis.tensor(&other.basis);
        let mut amps = Vec::with_capacity(basis.size());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Self { basis, amps }
    }

    /// Zero-pads into a basis with the same modes and dimensions at least as large.
    pub fn embed(&self, target: &FockBasis) -> Result<Self> {
        if target.modes() != self.basis.modes() || target.dims().iter().zip(self.basis.dims()).any(|(t, s)| t < s) {
            return Err(Error::BasisMismatch("embedding target is smaller than the source".into()));
        }
        let mut out = Self::zeros(target.clone());
        for (i, a) in self.amps.iter().enumerate() {
            let lv = self.basis.levels(i);
            out.amps[target.index(&lv)] = *a;
        }
        Ok(out)
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { basis: self.basis.clone(), amps: self.amps.iter().map(|a| a * s).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    basis: FockBasis,
    data: Vec<C64>,
    hermitian: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    X,
    P,
}

impl OperatorMatrix {
    fn from_data(basis: FockBasis, data: Vec<C64>) -> Self {
        let mut m = Self { basis, data, hermitian: false };
        m.hermitian = m.hermiticity_residual() <= HERMITIAN_TOL;
        m
    }

    pub fn identity(basis: FockBasis) -> Self {
        let n = basis.size();
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            data[i * n + i] = C64::new(1.0, 0.0);
        }
        Self { basis, data, hermitian: true }
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.size()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim() + col]
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Largest entrywise `|M - M†|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim();
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        Self { basis: self.basis.clone(), data, hermitian: self.hermitian }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if !self.basis.same_shape(&other.basis) {
            return Err(Error::BasisMismatch("operator product across different bases".into()));
        }
        let n = self.dim();
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let out = &mut data[i * n..(i + 1) * n];
                for (o, b) in out.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_data(self.basis.clone(), data))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if !self.basis.same_shape(&other.basis) {
            return Err(Error::BasisMismatch("operator difference across different bases".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_data(self.basis.clone(), data))
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    /// Restricts to the leading `target.dims()` levels of each mode.
    pub fn restrict(&self, target: &FockBasis) -> Result<Self> {
        if target.modes() != self.basis.modes() || target.dims().iter().zip(self.basis.dims()).any(|(t, s)| t > s) {
            return Err(Error::BasisMismatch("restriction target is larger than the source".into()));
        }
        let m = target.size();
        let map: Vec<usize> = (0..m).map(|i| self.basis.index(&target.levels(i))).collect();
        let n = self.dim();
        let mut data = vec![ZERO; m * m];
        for (r, &rr) in map.iter().enumerate() {
            for (c, &cc) in map.iter().enumerate() {
                data[r * m + c] = self.data[rr * n + cc];
            }
        }
        Ok(Self::from_data(target.clone(), data))
    }

    pub fn apply(&self, ket: &KetVector) -> Result<KetVector> {
        if !self.basis.same_shape(ket.basis()) {
            return Err(Error::BasisMismatch("operator and state live on different bases".into()));
        }
        let n = self.dim();
        let amps = (0..n)
            .map(|i| self.data[i * n..(i + 1) * n].iter().zip(ket.amplitudes()).map(|(a, b)| a * b).sum())
            .collect();
        KetVector::new(ket.basis().clone(), amps)
    }
}

fn ladder(dim: usize) -> Vec<C64> {
    let mut a = vec![ZERO; dim * dim];
    for n in 1..dim {
        a[(n - 1) * dim + n] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Single-mode quadrature matrix truncated at `dim` levels.
pub(crate) fn single_mode_quadrature(dim: usize, which: Quadrature) -> Vec<C64> {
    let a = ladder(dim);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = vec![ZERO; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let aij = a[i * dim + j];
            let adag_ij = a[j * dim + i].conj();
            out[i * dim + j] = match which {
                Quadrature::X => (aij + adag_ij) * s,
                // (a - a†) / (i √2) = -i (a - a†) / √2
                Quadrature::P => (aij - adag_ij) * C64::new(0.0, -s),
            };
        }
    }
    out
}

fn square_mul(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        for k in 0..n {
            let v = a[i * n + k];
            if v == ZERO {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += v * b[k * n + j];
            }
        }
    }
    out
}

fn square_identity(n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        out[i * n + i] = C64::new(1.0, 0.0);
    }
    out
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Weyl-ordered `x^a p^b` on one mode, built at `big` levels and restricted to
/// the leading `dim` levels. Uses `W(x^a p^b) = 2^-a Σ_k C(a,k) x^k p^b x^(a-k)`.
pub(crate) fn weyl_single_mode(a: u32, b: u32, dim: usize, big: usize) -> Vec<C64> {
    let x = single_mode_quadrature(big, Quadrature::X);
    let p = single_mode_quadrature(big, Quadrature::P);
    let mut xpow = vec![square_identity(big)];
    for _ in 0..a {
        let next = square_mul(xpow.last().unwrap(), &x, big);
        xpow.push(next);
    }
    let mut pb = square_identity(big);
    for _ in 0..b {
        pb = square_mul(&pb, &p, big);
    }
    let mut acc = vec![ZERO; big * big];
    let norm = 0.5f64.powi(a as i32);
    for k in 0..=a {
        let term = square_mul(&square_mul(&xpow[k as usize], &pb, big), &xpow[(a - k) as usize], big);
        let w = binomial(a, k) * norm;
        for (o, t) in acc.iter_mut().zip(term) {
            *o += t * w;
        }
    }
    let mut out = vec![ZERO; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i * dim + j] = acc[i * big + j];
        }
    }
    out
}

/// Quadrature operator on one mode of `basis`, identity elsewhere. Plain
/// truncation: no guard band is applied.
pub fn quadrature_matrix(basis: &FockBasis, mode: usize, which: Quadrature) -> Result<OperatorMatrix> {
    if mode >= basis.modes() {
        return Err(Error::ModeOutOfRange { mode, modes: basis.modes() });
    }
    let d = basis.dims()[mode];
    let single = single_mode_quadrature(d, which);
    let factors: Vec<Option<&[C64]>> =
        (0..basis.modes()).map(|j| if j == mode { Some(&single[..]) } else { None }).collect();
    Ok(OperatorMatrix::from_data(basis.clone(), kron_factors(basis, &factors)))
}

/// Dense Kronecker product of per-mode factors (`None` = identity).
fn kron_factors(basis: &FockBasis, factors: &[Option<&[C64]>]) -> Vec<C64> {
    let n = basis.size();
    let dims = basis.dims();
    let mut data = vec![ZERO; n * n];
    for r in 0..n {
        let lr = basis.levels(r);
        'col: for c in 0..n {
            let lc = basis.levels(c);
            let mut v = C64::new(1.0, 0.0);
            for (j, f) in factors.iter().enumerate() {
                match f {
                    Some(m) => {
                        v *= m[lr[j] * dims[j] + lc[j]];
                        if v == ZERO {
                            continue 'col;
                        }
                    }
                    None => {
                        if lr[j] != lc[j] {
                            continue 'col;
                        }
                    }
                }
            }
            data[r * n + c] = v;
        }
    }
    data
}

/// Weyl-ordered operator of `poly`, exact on every matrix element of the declared basis.
pub fn polynomial_operator(poly: &QuadraturePolynomial, basis: &FockBasis) -> Result<OperatorMatrix> {
    if poly.modes() != basis.modes() {
        return Err(Error::BasisMismatch(format!("polynomial on {} modes, basis on {}", poly.modes(), basis.modes())));
    }
    for j in 0..basis.modes() {
        let d = poly.mode_degree(j);
        if d as usize > basis.guard() {
            return Err(Error::DegreeExceedsGuard { mode: j, degree: d, guard: basis.guard() });
        }
    }
    if poly.terms().any(|(_, c)| !c.is_finite()) {
        return Err(Error::NonFiniteCoefficient);
    }
    let n = basis.size();
    let mut data = vec![ZERO; n * n];
    let mut cache: HashMap<(usize, u32, u32), Vec<C64>> = HashMap::new();
    for (exps, coeff) in poly.terms() {
        let mut factors: Vec<Option<Vec<C64>>> = Vec::with_capacity(basis.modes());
        for j in 0..basis.modes() {
            let (a, b) = (exps[2 * j], exps[2 * j + 1]);
            if a == 0 && b == 0 {
                factors.push(None);
            } else {
                let d = basis.dims()[j];
                let m = cache.entry((j, a, b)).or_insert_with(|| weyl_single_mode(a, b, d, d + basis.guard())).clone();
                factors.push(Some(m));
            }
        }
        let refs: Vec<Option<&[C64]>> = factors.iter().map(|f| f.as_deref()).collect();
        for (o, v) in data.iter_mut().zip(kron_factors(basis, &refs)) {
            *o += v * coeff;
        }
    }
    Ok(OperatorMatrix::from_data(basis.clone(), data))
}

/// `<psi|O|psi>` without normalizing.
pub fn expectation(op: &OperatorMatrix, state: &KetVector) -> Result<C64> {
    let v = op.apply(state)?;
    state.inner(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn basis(dims: &[usize], guard: usize) -> FockBasis {
        FockBasis::new(dims.to_vec(), guard).unwrap()
    }

    #[test]
    fn ladder_element_of_x() {
        let x = quadrature_matrix(&basis(&[2], 0), 0, Quadrature::X).unwrap();
        assert!((x.get(0, 1) - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!(x.is_hermitian());
    }

    #[test]
    fn commutator_holds_away_from_truncation_edge() {
        let b = basis(&[3], 0);
        let x = quadrature_matrix(&b, 0, Quadrature::X).unwrap();
        let p = quadrature_matrix(&b, 0, Quadrature::P).unwrap();
        let c = x.commutator(&p).unwrap();
        assert!((c.get(0, 0) - C64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((c.get(1, 1) - C64::new(0.0, 1.0)).norm() < 1e-15);
        // last level is corrupted by truncation
        assert!((c.get(2, 2) - C64::new(0.0, 1.0)).norm() > 0.5);
    }

    #[test]
    fn second_mode_quadrature_has_tensor_structure() {
        let b = basis(&[2, 3], 0);
        let x2 = quadrature_matrix(&b, 1, Quadrature::X).unwrap();
        let single = single_mode_quadrature(3, Quadrature::X);
        for r in 0..6 {
            for c in 0..6 {
                let (lr, lc) = (b.levels(r), b.levels(c));
                let expect = if lr[0] == lc[0] { single[lr[1] * 3 + lc[1]] } else { ZERO };
                assert_eq!(x2.get(r, c), expect);
            }
        }
        assert!(matches!(quadrature_matrix(&b, 2, Quadrature::X), Err(Error::ModeOutOfRange { .. })));
    }

    #[test]
    fn vacuum_moments_of_polynomial_operators() {
        let x2sq = QuadraturePolynomial::x(2, 1).pow(2);
        let op = polynomial_operator(&x2sq, &basis(&[3, 3], 4)).unwrap();
        assert!((op.get(0, 0).re - 0.5).abs() < 1e-15);
        let x2q = QuadraturePolynomial::x(2, 1).pow(4);
        let op = polynomial_operator(&x2q, &basis(&[1, 1], 4)).unwrap();
        assert!((op.get(0, 0).re - 0.75).abs() < 1e-14);
    }

    #[test]
    fn guard_and_basis_errors() {
        let x4 = QuadraturePolynomial::x(1, 0).pow(4);
        assert!(matches!(polynomial_operator(&x4, &basis(&[3], 3)), Err(Error::DegreeExceedsGuard { .. })));
        assert!(polynomial_operator(&x4, &basis(&[3, 3], 4)).is_err());
        let op = OperatorMatrix::identity(basis(&[2], 0));
        let k = KetVector::vacuum(basis(&[3], 0));
        assert!(matches!(expectation(&op, &k), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn simple_expectations() {
        let b = basis(&[4], 2);
        let k1 = KetVector::fock(b.clone(), &[1]).unwrap();
        let x = polynomial_operator(&QuadraturePolynomial::x(1, 0), &b).unwrap();
        assert!(expectation(&x, &k1).unwrap().norm() < 1e-15);
        let id = OperatorMatrix::identity(b.clone());
        let amps = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), ZERO, ZERO];
        let psi = KetVector::new(b, amps).unwrap();
        assert!((expectation(&id, &psi).unwrap().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn x_squared_on_zero_plus_two() {
        // Symbolic ladder algebra: x^2 = (a^2 + a†^2 + 2 a†a + 1)/2, so
        // <0|x^2|0> = 1/2, <2|x^2|2> = 5/2, <0|x^2|2> = √2/2 and the
        // expectation on (|0> + |2>)/√2 is (1/2 + 5/2)/2 + √2/2 = 3/2 + 1/√2.
        let b = basis(&[3], 2);
        let s = FRAC_1_SQRT_2;
        let psi = KetVector::new(b.clone(), vec![C64::new(s, 0.0), ZERO, C64::new(s, 0.0)]).unwrap();
        let op = polynomial_operator(&QuadraturePolynomial::x(1, 0).pow(2), &b).unwrap();
        let e = expectation(&op, &psi).unwrap();
        assert!((e.re - (1.5 + s)).abs() < 1e-14, "{e}");
        assert!(e.im.abs() < 1e-15);
    }

    #[test]
    fn weyl_ordering_of_xp() {
        // W(xp) = (xp + px)/2 has zero vacuum expectation and is Hermitian.
        let b = basis(&[5], 2);
        let xp = QuadraturePolynomial::monomial(1, vec![1, 1], 1.0).unwrap();
        let op = polynomial_operator(&xp, &b).unwrap();
        assert!(op.is_hermitian());
        assert!(op.get(0, 0).norm() < 1e-15);
        // explicit (xp + px)/2 assembled at a much larger truncation
        let big = basis(&[12], 0);
        let x = quadrature_matrix(&big, 0, Quadrature::X).unwrap();
        let p = quadrature_matrix(&big, 0, Quadrature::P).unwrap();
        let xp_m = x.matmul(&p).unwrap();
        let px_m = p.matmul(&x).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let expect = (xp_m.get(r, c) + px_m.get(r, c)) * 0.5;
                assert!((op.get(r, c) - expect).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn embed_and_tensor_layout() {
        let a = KetVector::fock(basis(&[2], 0), &[1]).unwrap();
        let b = KetVector::fock(basis(&[3], 0), &[2]).unwrap();
        let ab = a.tensor(&b);
        assert_eq!(ab.basis().dims(), &[2, 3]);
        assert_eq!(ab.amplitude(&[1, 2]), C64::new(1.0, 0.0));
        let big = ab.embed(&basis(&[4, 4], 0)).unwrap();
        assert_eq!(big.amplitude(&[1, 2]), C64::new(1.0, 0.0));
        assert!((big.norm_sqr() - 1.0).abs() < 1e-15);
        assert!(big.embed(&basis(&[1, 4], 0)).is_err());
    }
}
