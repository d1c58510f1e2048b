use serde::{Deserialize, Serialize};

use super::poly::QuadraturePolynomial;
use crate::error::{Error, Result};

/// Heisenberg action of a Gaussian unitary on the quadrature vector
/// `r = (x1, ..., xN, p1, ..., pN)`: `U† r U = S r + d`.
///
/// Composition follows operator order: the transform of `U_a U_b` is
/// `a.compose(&b)` with matrix `S_a S_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticTransform {
    modes: usize,
    matrix: Vec<f64>,
    displacement: Vec<f64>,
}

/// Residual tolerance for the symplectic-form check.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

impl SymplecticTransform {
    pub fn identity(modes: usize) -> Self {
        let n = 2 * modes;
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        Self { modes, matrix, displacement: vec![0.0; n] }
    }

    /// General constructor; rejects non-symplectic matrices.
    pub fn new(modes: usize, matrix: Vec<f64>, displacement: Vec<f64>) -> Result<Self> {
        let n = 2 * modes;
        if matrix.len() != n * n || displacement.len() != n {
            return Err(Error::InvalidParameter(format!(
                "transform on {modes} modes needs a {n}x{n} matrix and length-{n} displacement"
            )));
        }
        let t = Self { modes, matrix, displacement };
        let r = t.symplectic_residual();
        if !(r <= SYMPLECTIC_TOL) {
            return Err(Error::NotSymplectic(r));
        }
        Ok(t)
    }

    /// Beam splitter rotating the x block and the p block of modes `(a, b)` by
    /// `[[cos t, sin t], [-sin t, cos t]]`.
    pub fn beam_splitter(modes: usize, theta: f64, pair: (usize, usize)) -> Result<Self> {
        let (a, b) = pair;
        if a >= modes || b >= modes {
            return Err(Error::ModeOutOfRange { mode: a.max(b), modes });
        }
        if a == b {
            return Err(Error::InvalidParameter("beam splitter needs two distinct modes".into()));
        }
        let mut t = Self::identity(modes);
        let (s, c) = theta.sin_cos();
        for off in [0, modes] {
            let (ia, ib) = (a + off, b + off);
            t.set(ia, ia, c);
            t.set(ia, ib, s);
            t.set(ib, ia, -s);
            t.set(ib, ib, c);
        }
        Ok(t)
    }

    /// Single-mode squeezer: `x -> x / lambda`, `p -> lambda p`.
    pub fn squeezer(modes: usize, lambda: f64, mode: usize) -> Result<Self> {
        if mode >= modes {
            return Err(Error::ModeOutOfRange { mode, modes });
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("squeezing factor must be positive, got {lambda}")));
        }
        let mut t = Self::identity(modes);
        t.set(mode, mode, 1.0 / lambda);
        t.set(mode + modes, mode + modes, lambda);
        Ok(t)
    }

    /// Phase-space displacement `x_j -> x_j + d`, `p_j -> p_j + d'`.
    pub fn displacement(modes: usize, d: &[f64]) -> Result<Self> {
        if d.len() != 2 * modes {
            return Err(Error::InvalidParameter("displacement length must be 2N".into()));
        }
        let mut t = Self::identity(modes);
        t.displacement.copy_from_slice(d);
        Ok(t)
    }

    /// Two-mode processing chain `U_BS(theta2) S1(lambda1) S2(lambda2) U_BS(theta1)`.
    pub fn gaussian_chain(theta1: f64, lambda1: f64, lambda2: f64, theta2: f64) -> Result<Self> {
        let b2 = Self::beam_splitter(2, theta2, (0, 1))?;
        let s1 = Self::squeezer(2, lambda1, 0)?;
        let s2 = Self::squeezer(2, lambda2, 1)?;
        let b1 = Self::beam_splitter(2, theta1, (0, 1))?;
        Ok(b2.compose(&s1).compose(&s2).compose(&b1))
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        let n = 2 * self.modes;
        self.matrix[r * n + c] = v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.matrix[r * 2 * self.modes + c]
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn displacement_vector(&self) -> &[f64] {
        &self.displacement
    }

    /// Transform of the product `U_self U_other`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.modes, other.modes, "mode count mismatch");
        let n = 2 * self.modes;
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.matrix[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    matrix[i * n + j] += a * other.matrix[k * n + j];
                }
            }
        }
        let displacement = (0..n)
            .map(|i| self.displacement[i] + (0..n).map(|k| self.matrix[i * n + k] * other.displacement[k]).sum::<f64>())
            .collect();
        Self { modes: self.modes, matrix, displacement }
    }

    /// Inverse transform, using `S^-1 = -Omega S^T Omega`.
    pub fn inverse(&self) -> Self {
        let m = self.modes;
        let n = 2 * m;
        // Omega = [[0, I], [-I, 0]]
        let omega = |i: usize, j: usize| -> f64 {
            if i < m && j == i + m {
                1.0
            } else if i >= m && j + m == i {
                -1.0
            } else {
                0.0
            }
        };
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    let oa = omega(i, a);
                    if oa == 0.0 {
                        continue;
                    }
                    for b in 0..n {
                        let ob = omega(b, j);
                        if ob != 0.0 {
                            acc += oa * self.matrix[b * n + a] * ob;
                        }
                    }
                }
                inv[i * n + j] = -acc;
            }
        }
        let displacement =
            (0..n).map(|i| -(0..n).map(|k| inv[i * n + k] * self.displacement[k]).sum::<f64>()).collect();
        Self { modes: m, matrix: inv, displacement }
    }

    /// Max-entry residual of `S Omega S^T - Omega`.
    pub fn symplectic_residual(&self) -> f64 {
        let m = self.modes;
        let n = 2 * m;
        let s = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                // (S Omega S^T)_ij = sum_k S_ik S_j,k+m - S_i,k+m S_jk
                let mut acc = 0.0;
                for k in 0..m {
                    acc += s[i * n + k] * s[j * n + k + m] - s[i * n + k + m] * s[j * n + k];
                }
                let target = if i < m && j == i + m {
                    1.0
                } else if i >= m && j + m == i {
                    -1.0
                } else {
                    0.0
                };
                worst = worst.max((acc - target).abs());
            }
        }
        worst
    }

    /// True when the map never mixes x with p (beam splitters and squeezers).
    pub fn is_block_diagonal(&self) -> bool {
        let m = self.modes;
        (0..m).all(|i| (0..m).all(|j| self.get(i, j + m) == 0.0 && self.get(i + m, j) == 0.0))
    }

    /// The x-to-x block, row-major `N x N`.
    pub fn x_block(&self) -> Vec<f64> {
        let m = self.modes;
        (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).collect()
    }

    /// Image of every polynomial symbol slot (`x1, p1, x2, p2, ...`) as a linear polynomial.
    pub fn symbol_images(&self) -> Vec<QuadraturePolynomial> {
        let m = self.modes;
        (0..2 * m)
            .map(|slot| {
                let row = if slot % 2 == 0 { slot / 2 } else { slot / 2 + m };
                let mut img = QuadraturePolynomial::constant(m, self.displacement[row]);
                for col in 0..2 * m {
                    let c = self.get(row, col);
                    if c != 0.0 {
                        let sym =
                            if col < m { QuadraturePolynomial::x(m, col) } else { QuadraturePolynomial::p(m, col - m) };
                        img = &img + &sym.scale(c);
                    }
                }
                img
            })
            .collect()
    }
}

/// Heisenberg conjugation `U† O U`: each symbol is replaced by its image.
pub fn conjugate(poly: &QuadraturePolynomial, transform: &SymplecticTransform) -> QuadraturePolynomial {
    assert_eq!(poly.modes(), transform.modes(), "mode count mismatch");
    poly.substitute(&transform.symbol_images())
}

/// Gaussian-processing parameters of the two-mode chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub theta1: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta2: f64,
}

impl GaussianParams {
    pub const IDENTITY: GaussianParams = GaussianParams { theta1: 0.0, lambda1: 1.0, lambda2: 1.0, theta2: 0.0 };

    pub fn passive(theta: f64) -> Self {
        Self { theta1: theta, ..Self::IDENTITY }
    }

    pub fn transform(&self) -> Result<SymplecticTransform> {
        SymplecticTransform::gaussian_chain(self.theta1, self.lambda1, self.lambda2, self.theta2)
    }

    /// Primary scaling invariants `(kappa / (l1^2 l2), kappa / (l1 l2^2))`.
    pub fn invariants(&self, kappa: f64) -> (f64, f64) {
        let (l1, l2) = (self.lambda1, self.lambda2);
        (kappa / (l1 * l1 * l2), kappa / (l1 * l2 * l2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn zero_angle_beam_splitter_is_identity() {
        let t = SymplecticTransform::beam_splitter(2, 0.0, (0, 1)).unwrap();
        assert_eq!(t, SymplecticTransform::identity(2));
    }

    #[test]
    fn balanced_beam_splitter_maps_x1() {
        let t = SymplecticTransform::beam_splitter(2, FRAC_PI_4, (0, 1)).unwrap();
        let out = conjugate(&QuadraturePolynomial::x(2, 0), &t);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expect = &QuadraturePolynomial::x(2, 0).scale(r) + &QuadraturePolynomial::x(2, 1).scale(r);
        assert!(out.approx_eq(&expect, 1e-15));
    }

    #[test]
    fn beam_splitter_inverse_angle_composes_to_identity() {
        let a = SymplecticTransform::beam_splitter(3, 0.7, (0, 2)).unwrap();
        let b = SymplecticTransform::beam_splitter(3, -0.7, (0, 2)).unwrap();
        let id = SymplecticTransform::identity(3);
        for (x, y) in a.compose(&b).matrix().iter().zip(id.matrix()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn squeezer_group_law_and_errors() {
        assert_eq!(SymplecticTransform::squeezer(1, 1.0, 0).unwrap(), SymplecticTransform::identity(1));
        let s2 = SymplecticTransform::squeezer(2, 2.0, 1).unwrap();
        assert!(s2.symplectic_residual() < 1e-15);
        let a = SymplecticTransform::squeezer(2, 1.3, 0).unwrap();
        let b = SymplecticTransform::squeezer(2, 0.6, 0).unwrap();
        let ab = SymplecticTransform::squeezer(2, 1.3 * 0.6, 0).unwrap();
        for (x, y) in a.compose(&b).matrix().iter().zip(ab.matrix()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(SymplecticTransform::squeezer(1, 0.0, 0).is_err());
        assert!(SymplecticTransform::squeezer(1, -1.0, 0).is_err());
    }

    #[test]
    fn rejects_bad_constructor_inputs() {
        assert!(SymplecticTransform::beam_splitter(2, 0.1, (1, 1)).is_err());
        assert!(SymplecticTransform::beam_splitter(2, 0.1, (0, 2)).is_err());
        let not_symplectic = vec![2.0, 0.0, 0.0, 2.0];
        assert!(matches!(SymplecticTransform::new(1, not_symplectic, vec![0.0, 0.0]), Err(Error::NotSymplectic(_))));
    }

    #[test]
    fn squeezer_conjugation_rescales_quadratic_term() {
        let k = 0.38;
        let l2 = 1.7;
        let poly = &QuadraturePolynomial::p(2, 0) + &QuadraturePolynomial::x(2, 1).pow(2).scale(k);
        let t = SymplecticTransform::squeezer(2, l2, 1).unwrap();
        let expect = &QuadraturePolynomial::p(2, 0) + &QuadraturePolynomial::x(2, 1).pow(2).scale(k / (l2 * l2));
        assert!(conjugate(&poly, &t).approx_eq(&expect, 1e-15));
    }

    #[test]
    fn inverse_undoes_chain_with_displacement() {
        let chain = SymplecticTransform::gaussian_chain(0.3, 1.4, 0.8, -1.1).unwrap();
        let d = SymplecticTransform::displacement(2, &[0.1, -0.2, 0.3, 0.5]).unwrap();
        let t = chain.compose(&d);
        let id = t.compose(&t.inverse());
        let eye = SymplecticTransform::identity(2);
        for (a, b) in id.matrix().iter().zip(eye.matrix()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(id.displacement_vector().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn invariants_preserved_by_uniform_rescaling() {
        let g = GaussianParams { theta1: 0.4, lambda1: 1.1, lambda2: 1.6, theta2: 0.0 };
        let h = GaussianParams { lambda1: 2.2, lambda2: 3.2, ..g };
        let (a1, a2) = g.invariants(0.3);
        let (b1, b2) = h.invariants(0.3 * 8.0);
        assert!((a1 - b1).abs() < 1e-14 && (a2 - b2).abs() < 1e-14);
    }
}
