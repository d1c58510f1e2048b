//! Joint variance of the nonlinear quadratures `p_j + dV/dx_j` and the
//! Gaussian benchmark it is compared against.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{expectation, polynomial_operator, FockBasis, KetVector};
use crate::optimizer::{self, GaussLayout, OptimizerConfig, Search};
use crate::quadpoly::{
    conjugate, gradient_polys, Exponents, GaussianParams, QuadraturePolynomial, SymplecticTransform,
};

/// Two-mode cubic gate Hamiltonian `kappa x1 x2^2`.
pub fn two_mode_cubic(kappa: f64) -> QuadraturePolynomial {
    let x1 = QuadraturePolynomial::x(2, 0);
    let x2 = QuadraturePolynomial::x(2, 1);
    &x1.scale(kappa) * &x2.pow(2)
}

/// Single-mode cubic gate Hamiltonian `kappa x^3`.
pub fn single_mode_cubic(kappa: f64) -> QuadraturePolynomial {
    QuadraturePolynomial::x(1, 0).pow(3).scale(kappa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub total: f64,
    pub per_mode: Vec<f64>,
    pub means: Vec<f64>,
    /// Gate strength: largest absolute coefficient of the gate Hamiltonian.
    pub kappa: f64,
    pub setup: String,
}

/// Plain moments returned by [`VarianceFunctional::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub total: f64,
    pub per_mode: Vec<f64>,
    pub means: Vec<f64>,
}

#[derive(Debug, Clone)]
struct RectOp {
    data: Vec<C64>,
}

/// Operators `U† (p_j + dV/dx_j) U` as rectangular blocks mapping the core
/// basis into the enlarged basis, for one fixed transform.
#[derive(Debug, Clone)]
pub struct PreparedOps {
    ops: Vec<RectOp>,
}

/// Reusable evaluator of the variance functional for states supported on a
/// fixed core basis.
///
/// All Weyl monomials of degree up to `g` (the degree of the nonlinear
/// quadratures) are built once as blocks from the core basis into a basis
/// enlarged by `g` levels per mode. Each block is exact there, so `O c` is
/// exact and `<O^2> = |O c|^2` needs no further truncation.
#[derive(Debug)]
pub struct VarianceFunctional {
    gate: QuadraturePolynomial,
    nonlinear: Vec<QuadraturePolynomial>,
    core: FockBasis,
    rows: usize,
    cols: usize,
    /// enlarged-basis index of each core basis vector
    core_rows: Vec<usize>,
    monomials: HashMap<Exponents, RectOp>,
}

fn monomials_up_to(slots: usize, degree: u32) -> Vec<Exponents> {
    let mut out = vec![vec![0; slots]];
    for _ in 0..degree {
        let mut next = Vec::new();
        for e in &out {
            let start = e.iter().rposition(|&k| k > 0).unwrap_or(0);
            for s in start..slots {
                let mut e2 = e.clone();
                e2[s] += 1;
                next.push(e2);
            }
        }
        out.extend(next.into_iter().filter(|e: &Exponents| e.iter().sum::<u32>() > 0));
        out.sort();
        out.dedup();
    }
    out
}

impl VarianceFunctional {
    pub fn new(gate: &QuadraturePolynomial, core: &FockBasis) -> Result<Self> {
        gate.require_x_only()?;
        if gate.modes() != core.modes() {
            return Err(Error::BasisMismatch(format!(
                "gate on {} modes, core basis on {}",
                gate.modes(),
                core.modes()
            )));
        }
        let nonlinear = gradient_polys(gate)?;
        let g = nonlinear.iter().map(|p| p.degree()).max().unwrap_or(1).max(1);
        let core = FockBasis::new(core.dims().to_vec(), g as usize)?;
        let big = core.enlarged(g as usize);
        let rows = big.size();
        let cols = core.size();
        let core_rows: Vec<usize> = (0..cols).map(|i| big.index(&core.levels(i))).collect();
        let mut monomials = HashMap::new();
        for e in monomials_up_to(2 * core.modes(), g) {
            let poly = QuadraturePolynomial::monomial(core.modes(), e.clone(), 1.0)?;
            let full = polynomial_operator(&poly, &big)?;
            let mut data = vec![C64::new(0.0, 0.0); rows * cols];
            for r in 0..rows {
                for (c, &cr) in core_rows.iter().enumerate() {
                    data[r * cols + c] = full.get(r, cr);
                }
            }
            monomials.insert(e, RectOp { data });
        }
        Ok(Self { gate: gate.clone(), nonlinear, core, rows, cols, core_rows, monomials })
    }

    pub fn gate(&self) -> &QuadraturePolynomial {
        &self.gate
    }

    pub fn core_basis(&self) -> &FockBasis {
        &self.core
    }

    pub fn modes(&self) -> usize {
        self.core.modes()
    }

    /// Conjugates every nonlinear quadrature by `transform` and assembles its block.
    pub fn prepare(&self, transform: &SymplecticTransform) -> Result<PreparedOps> {
        if transform.modes() != self.modes() {
            return Err(Error::BasisMismatch("transform and core basis differ in mode count".into()));
        }
        let mut ops = Vec::with_capacity(self.nonlinear.len());
        for q in &self.nonlinear {
            let heis = conjugate(q, transform);
            let mut data = vec![C64::new(0.0, 0.0); self.rows * self.cols];
            for (e, c) in heis.terms() {
                let w = self.monomials.get(e).ok_or(Error::DegreeExceedsGuard {
                    mode: 0,
                    degree: e.iter().sum(),
                    guard: self.core.guard(),
                })?;
                for (o, v) in data.iter_mut().zip(&w.data) {
                    *o += v * c;
                }
            }
            ops.push(RectOp { data });
        }
        Ok(PreparedOps { ops })
    }

    /// Variance sum for the (not necessarily normalized) core amplitudes `amps`.
    pub fn evaluate(&self, ops: &PreparedOps, amps: &[C64]) -> Result<Moments> {
        if amps.len() != self.cols {
            return Err(Error::BasisMismatch(format!("{} amplitudes for core of size {}", amps.len(), self.cols)));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        let mut per_mode = Vec::with_capacity(ops.ops.len());
        let mut means = Vec::with_capacity(ops.ops.len());
        let mut v = vec![C64::new(0.0, 0.0); self.rows];
        for op in &ops.ops {
            for (r, out) in v.iter_mut().enumerate() {
                *out = op.data[r * self.cols..(r + 1) * self.cols].iter().zip(amps).map(|(a, b)| a * b).sum();
            }
            let second: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / norm;
            let mean: f64 = self.core_rows.iter().zip(amps).map(|(&r, c)| (c.conj() * v[r]).re).sum::<f64>() / norm;
            per_mode.push((second - mean * mean).max(0.0));
            means.push(mean);
        }
        let total = per_mode.iter().sum();
        if !f64::is_finite(total) {
            return Err(Error::NonFiniteObjective);
        }
        Ok(Moments { total, per_mode, means })
    }
}

/// Joint variance `Σ_j Var(U† (p_j + dV/dx_j) U)` of a normalized state.
pub fn nonlinear_variance(
    state: &KetVector,
    gate: &QuadraturePolynomial,
    transform: &SymplecticTransform,
) -> Result<VarianceReport> {
    state.require_normalized()?;
    let f = VarianceFunctional::new(gate, state.basis())?;
    let ops = f.prepare(transform)?;
    let m = f.evaluate(&ops, state.amplitudes())?;
    Ok(VarianceReport {
        total: m.total,
        per_mode: m.per_mode,
        means: m.means,
        kappa: gate.max_abs_coefficient(),
        setup: format!("dims={:?}", state.basis().dims()),
    })
}

/// Mean total photon number `sum_j <n_j>` of `U |state>`.
pub fn mean_photons(state: &KetVector, transform: &SymplecticTransform) -> Result<f64> {
    let n = state.basis().modes();
    if transform.modes() != n {
        return Err(Error::BasisMismatch("transform and state differ in mode count".into()));
    }
    let mut number = QuadraturePolynomial::constant(n, -0.5 * n as f64);
    for j in 0..n {
        let q = &QuadraturePolynomial::x(n, j).pow(2) + &QuadraturePolynomial::p(n, j).pow(2);
        number = &number + &q.scale(0.5);
    }
    let basis = state.basis().with_guard(2);
    let ket = KetVector::new(basis.clone(), state.amplitudes().to_vec())?;
    let op = polynomial_operator(&conjugate(&number, transform), &basis)?;
    Ok(expectation(&op, &ket)?.re / ket.norm_sqr())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub report: VarianceReport,
    pub params: GaussianParams,
    /// A squeezing parameter ended within 0.1% of its bound.
    pub bound_hit: bool,
}

/// Smallest variance reachable from the two-mode vacuum with the full
/// `U_BS(theta2) S1 S2 U_BS(theta1)` chain.
pub fn gaussian_benchmark(kappa: f64, config: &OptimizerConfig) -> Result<Benchmark> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
    }
    config.validate()?;
    let gate = two_mode_cubic(kappa);
    let core = FockBasis::new(vec![1, 1], 2)?;
    let functional = Arc::new(VarianceFunctional::new(&gate, &core)?);
    let search = Search::fixed_core(functional, vec![C64::new(1.0, 0.0)], GaussLayout::Full, config.bounds);
    // identity processing is always feasible
    let identity = search.encode_gaussian(&GaussianParams::IDENTITY);
    let best = optimizer::multistart(&search, config, &[identity])?;
    let params = search.decode(&best.x)?.gaussian;
    let report = VarianceReport {
        total: best.f,
        per_mode: best.moments.per_mode.clone(),
        means: best.moments.means.clone(),
        kappa,
        setup: "gaussian-benchmark".into(),
    };
    Ok(Benchmark { report, bound_hit: config.bounds.is_hit(&params), params })
}

/// `V_NG / V_G`; both reports must carry the same gate strength.
pub fn relative_variance(state_report: &VarianceReport, benchmark: &VarianceReport) -> Result<f64> {
    if (state_report.kappa - benchmark.kappa).abs() > 1e-12 * state_report.kappa.abs().max(1.0) {
        return Err(Error::KappaMismatch(state_report.kappa, benchmark.kappa));
    }
    if !(benchmark.total > 0.0) {
        return Err(Error::InvalidParameter("benchmark variance must be positive".into()));
    }
    Ok(state_report.total / benchmark.total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_enumeration_counts() {
        // C(4 + 2, 2) = 15 monomials of degree <= 2 in four symbols
        assert_eq!(monomials_up_to(4, 2).len(), 15);
        assert_eq!(monomials_up_to(2, 3).len(), 10);
    }

    #[test]
    fn vacuum_formula() {
        for &k in &[0.0, 0.3, 0.46, 1.0] {
            let vac = KetVector::vacuum(FockBasis::new(vec![1, 1], 0).unwrap());
            let r = nonlinear_variance(&vac, &two_mode_cubic(k), &SymplecticTransform::identity(2)).unwrap();
            assert!((r.per_mode[0] - (0.5 + k * k / 2.0)).abs() < 1e-14);
            assert!((r.per_mode[1] - (0.5 + k * k)).abs() < 1e-14);
            assert!((r.total - (1.0 + 1.5 * k * k)).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_unnormalized_and_momentum_gates() {
        let b = FockBasis::new(vec![2, 1], 0).unwrap();
        let k = KetVector::new(b.clone(), vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        assert!(matches!(
            nonlinear_variance(&k, &two_mode_cubic(0.3), &SymplecticTransform::identity(2)),
            Err(Error::NotNormalized(_))
        ));
        let vac = KetVector::vacuum(b);
        let bad = QuadraturePolynomial::p(2, 0);
        assert!(matches!(
            nonlinear_variance(&vac, &bad, &SymplecticTransform::identity(2)),
            Err(Error::ContainsMomentum)
        ));
    }

    #[test]
    fn relative_variance_checks_kappa() {
        let a = VarianceReport {
            total: 2.0,
            per_mode: vec![1.0, 1.0],
            means: vec![0.0; 2],
            kappa: 0.3,
            setup: String::new(),
        };
        assert_eq!(relative_variance(&a, &a).unwrap(), 1.0);
        let b = VarianceReport { kappa: 0.4, ..a.clone() };
        assert!(matches!(relative_variance(&a, &b), Err(Error::KappaMismatch(..))));
    }

    #[test]
    fn photon_number_of_squeezed_and_fock_states() {
        let b = FockBasis::new(vec![3, 2], 0).unwrap();
        let ket = KetVector::fock(b, &[2, 1]).unwrap();
        assert!((mean_photons(&ket, &SymplecticTransform::identity(2)).unwrap() - 3.0).abs() < 1e-12);
        // squeezed vacuum: sinh^2 r with lambda = e^r
        let vac = KetVector::vacuum(FockBasis::new(vec![1], 0).unwrap());
        let l: f64 = 1.7;
        let want = ((l - 1.0 / l) / 2.0).powi(2);
        let got = mean_photons(&vac, &SymplecticTransform::squeezer(1, l, 0).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} {want}");
    }
}
