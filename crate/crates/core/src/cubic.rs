//! Single-mode cubic resource states and the two-cubic-ancilla limit of the
//! two-mode gate.
//!
//! `|gamma_N>` minimizes `Var(p + 3 t x^2)` over Fock superpositions up to
//! `|N>`, the nonlinear quadrature of `V = t x^3`. Two copies mixed on a
//! balanced beam splitter carry the phase
//! `t' ((x1 - x2)^3 + (x1 + x2)^3) = t' (2 x1^3 + 6 x1 x2^2)` with
//! `t' = t / (2 sqrt2)`; squeezing by `(lambda1, lambda2)` turns this into
//! `t' (2 lambda1^3 x1^3 + 6 lambda1 lambda2^2 x1 x2^2)`, so along
//! `lambda1 lambda2^2 = 1` the two-mode term has `kappa = 6 t'` and the
//! leftover single-mode term fades as `lambda1 -> 0`.

use std::f64::consts::{FRAC_PI_4, SQRT_2};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasis, KetVector};
use crate::nlsq::{nonlinear_variance, single_mode_cubic, two_mode_cubic, VarianceFunctional};
use crate::optimizer::{
    canonical_phase, make_record, multistart, AnsatzSpec, GaussLayout, OptimizationRecord, OptimizerConfig, Processing,
    Search,
};
use crate::quadpoly::{conjugate, GaussianParams, QuadraturePolynomial, SymplecticTransform};

/// Guard band for quadratic nonlinear quadratures.
const GUARD: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicLimitConfig {
    /// cubic strength `t` of each `|gamma_N>` (phase `exp(-i t x^3)`)
    pub t: f64,
    /// Fock cutoff of `|gamma_N>`
    pub n: usize,
    pub lambda1: Vec<f64>,
    /// set `lambda2 = lambda1^(-1/2)`; otherwise `lambda2 = 1`
    pub constrained: bool,
}

impl CubicLimitConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() {
            return Err(Error::InvalidParameter("t must be finite".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("cutoff N must be >= 1".into()));
        }
        if self.lambda1.is_empty() || self.lambda1.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter("lambda1 values must be positive".into()));
        }
        Ok(())
    }

    pub fn lambda2(&self, lambda1: f64) -> f64 {
        if self.constrained {
            lambda1.powf(-0.5)
        } else {
            1.0
        }
    }
}

/// `t' = t / (2 sqrt2)`.
pub fn reduced_strength(t: f64) -> f64 {
    t / (2.0 * SQRT_2)
}

/// Two-mode gate strength `6 t' lambda1 lambda2^2` reached by the pair.
pub fn matched_kappa(t: f64, lambda1: f64, lambda2: f64) -> f64 {
    6.0 * reduced_strength(t) * lambda1 * lambda2 * lambda2
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaState {
    pub ket: KetVector,
    /// `Var(p + 3 t x^2)`
    pub variance: f64,
    pub strength: f64,
}

/// `|gamma_N>` for `V = strength x^3`, gauge-fixed so the first nonzero
/// amplitude is real and positive.
pub fn gamma_state(n: usize, strength: f64, config: &OptimizerConfig) -> Result<GammaState> {
    if n == 0 {
        return Err(Error::InvalidParameter("cutoff N must be >= 1".into()));
    }
    if !strength.is_finite() {
        return Err(Error::InvalidParameter("strength must be finite".into()));
    }
    config.validate()?;
    let basis = FockBasis::new(vec![n + 1], GUARD)?;
    let functional = Arc::new(VarianceFunctional::new(&single_mode_cubic(strength), &basis)?);
    let search = Search::dense_identity(functional, false);
    let best = multistart(&search, config, &[])?;
    let mut amps = search.decode(&best.x)?.amps;
    let norm = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|c| *c /= norm);
    canonical_phase(&mut amps);
    Ok(GammaState { ket: KetVector::new(basis, amps)?, variance: best.f, strength })
}

/// Largest `|<gamma|c>|^2` over the single-mode constituents `c` of the
/// record's core with matching cutoff, and over the symmetries of the
/// variance (complex conjugation combined with parity, and each alone).
/// Entangled cores have no constituents and give an error.
pub fn overlap_audit(gamma: &KetVector, record: &OptimizationRecord) -> Result<f64> {
    let factors =
        record.factors.as_ref().ok_or_else(|| Error::InvalidParameter("record core is not a product state".into()))?;
    let g = gamma.amplitudes();
    let mut best: Option<f64> = None;
    for f in factors.iter().filter(|f| f.len() == g.len()) {
        let c: Vec<C64> = f.iter().map(|p| C64::new(p[0], p[1])).collect();
        for (conj, parity) in [(false, false), (true, false), (false, true), (true, true)] {
            let ov: C64 = g
                .iter()
                .zip(&c)
                .enumerate()
                .map(|(k, (a, b))| {
                    let b = if conj { b.conj() } else { *b };
                    let s = if parity && k % 2 == 1 { -1.0 } else { 1.0 };
                    a.conj() * b * s
                })
                .sum();
            let v = ov.norm_sqr();
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best.ok_or_else(|| Error::BasisMismatch(format!("no constituent with {} levels", g.len())))
}

/// Transform of `S1(lambda1) S2(lambda2) U_BS(pi/4)`.
pub fn pair_transform(lambda1: f64, lambda2: f64) -> Result<SymplecticTransform> {
    let squeeze = SymplecticTransform::squeezer(2, lambda1, 0)?.compose(&SymplecticTransform::squeezer(2, lambda2, 1)?);
    Ok(squeeze.compose(&SymplecticTransform::beam_splitter(2, FRAC_PI_4, (0, 1))?))
}

/// Phase `U (t x1^3 + t x2^3) U†` carried by the processed pair.
pub fn pair_exponent(t: f64, lambda1: f64, lambda2: f64) -> Result<QuadraturePolynomial> {
    let x1 = QuadraturePolynomial::x(2, 0);
    let x2 = QuadraturePolynomial::x(2, 1);
    let v = &x1.pow(3).scale(t) + &x2.pow(3).scale(t);
    Ok(conjugate(&v, &pair_transform(lambda1, lambda2)?.inverse()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub kappa: f64,
    pub variance: f64,
    /// the variance stopped decreasing: truncation dominates from here on
    pub floor: bool,
}

pub const LIMIT_CSV_HEADER: &str = "lambda1,lambda2,kappa,variance,truncation_floor";

pub fn limit_csv(points: &[LimitPoint]) -> String {
    let mut s = String::from(LIMIT_CSV_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&format!("{},{},{},{},{}\n", p.lambda1, p.lambda2, p.kappa, p.variance, p.floor));
    }
    s
}

/// Joint variance of `|gamma_N> (x) |gamma_N>` after the beam splitter and
/// squeezers, against the two-mode gate at the matched strength, for every
/// `lambda1` of the configuration in decreasing order.
pub fn cubic_pair_limit(config: &CubicLimitConfig, optimizer: &OptimizerConfig) -> Result<Vec<LimitPoint>> {
    config.validate()?;
    let gamma = gamma_state(config.n, config.t, optimizer)?;
    let pair = pair_core(&gamma.ket)?;
    let mut lambdas = config.lambda1.clone();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.dedup();
    let mut points = lambdas
        .par_iter()
        .map(|&l1| {
            let l2 = config.lambda2(l1);
            let kappa = matched_kappa(config.t, l1, l2);
            let r = nonlinear_variance(&pair, &two_mode_cubic(kappa), &pair_transform(l1, l2)?)?;
            Ok(LimitPoint { lambda1: l1, lambda2: l2, kappa, variance: r.total, floor: false })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut floor = false;
    for i in 1..points.len() {
        floor |= points[i].variance >= points[i - 1].variance;
        points[i].floor = floor;
    }
    Ok(points)
}

fn pair_core(gamma: &KetVector) -> Result<KetVector> {
    let levels = gamma.amplitudes().len();
    let amps = gamma.amplitudes();
    let tensor = amps.iter().flat_map(|a| amps.iter().map(move |b| a * b)).collect();
    KetVector::new(FockBasis::new(vec![levels, levels], GUARD)?, tensor)
}

fn fixed_core_record(
    ansatz: AnsatzSpec,
    amps: Vec<C64>,
    factors: Vec<Vec<C64>>,
    kappa: f64,
    config: &OptimizerConfig,
) -> Result<OptimizationRecord> {
    let started = Instant::now();
    let functional = Arc::new(VarianceFunctional::new(&two_mode_cubic(kappa), &ansatz.core_basis())?);
    let search = Search::fixed_core(functional, amps, GaussLayout::Full, config.bounds);
    let seeds = [
        search.encode_gaussian(&GaussianParams::IDENTITY),
        search.encode_gaussian(&GaussianParams { theta1: FRAC_PI_4, ..GaussianParams::IDENTITY }),
    ];
    let best = multistart(&search, config, &seeds)?;
    let mut record = make_record(&search, &ansatz, kappa, config, &best, started)?;
    record.factors = Some(factors.iter().map(|f| f.iter().map(|c| [c.re, c.im]).collect()).collect());
    Ok(record)
}

/// Best Gaussian processing of `|gamma_N> (x) |gamma_N>` for the two-mode gate
/// of strength `kappa`; the lowest `R_V` over the given cubic strengths.
pub fn gamma_pair_record(
    n: usize,
    kappa: f64,
    strengths: &[f64],
    config: &OptimizerConfig,
) -> Result<OptimizationRecord> {
    if strengths.is_empty() {
        return Err(Error::InvalidParameter("no cubic strengths to scan".into()));
    }
    let ansatz = AnsatzSpec::factorized(n, n, Processing::Full);
    let mut best: Option<OptimizationRecord> = None;
    for &t in strengths {
        let g = gamma_state(n, t, config)?;
        let a = g.ket.amplitudes().to_vec();
        let amps = pair_core(&g.ket)?.amplitudes().to_vec();
        let r = fixed_core_record(ansatz, amps, vec![a.clone(), a], kappa, config)?;
        if best.as_ref().is_none_or(|b| r.r_v < b.r_v) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one strength"))
}

/// `|gamma_N> (x) |0>` under optimized Gaussian processing only; the lowest
/// `R_V` over the given cubic strengths of `|gamma_N>`. `n = 0` is the
/// vacuum benchmark itself.
pub fn single_cubic_scenario(
    n: usize,
    kappa: f64,
    strengths: &[f64],
    config: &OptimizerConfig,
) -> Result<OptimizationRecord> {
    if strengths.is_empty() {
        return Err(Error::InvalidParameter("no cubic strengths to scan".into()));
    }
    let ansatz = AnsatzSpec::factorized(n, 0, Processing::Full);
    let mut best: Option<OptimizationRecord> = None;
    for &t in strengths {
        let gamma =
            if n == 0 { vec![C64::new(1.0, 0.0)] } else { gamma_state(n, t, config)?.ket.amplitudes().to_vec() };
        let r = fixed_core_record(ansatz, gamma.clone(), vec![gamma, vec![C64::new(1.0, 0.0)]], kappa, config)?;
        if best.as_ref().is_none_or(|b| r.r_v < b.r_v) {
            best = Some(r);
        }
        if n == 0 {
            break;
        }
    }
    Ok(best.expect("at least one strength"))
}
