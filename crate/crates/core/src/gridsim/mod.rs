//! Position-grid simulation of the measurement-induced gate.
//!
//! Amplitudes of an N-mode state live on the product grid
//! `x_i = -X + i dx`, `i = 0..L`, `dx = 2X / L`, with mode 1 the slowest
//! index. Discrete norms use `sum |psi|^2 dx^N`.

mod bsvariant;
mod coupling;
mod protocol;
mod snapshot;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub use bsvariant::{beamsplitter_variant, ResamplingReport};
pub use coupling::{homodyne, homodyne_scan, qsg_couple, HomodyneMode, MeasurementOutcome, QSG_LEAK_LIMIT};
pub use protocol::{
    heisenberg_noise_audit, ideal_ancilla, protocol_scan, run_protocol, AuditReport, EnvelopeSpec, Policy,
    ProtocolReport, Scheme,
};
pub use snapshot::{read_snapshot, write_snapshot, CONVENTION_TAG};

use crate::error::{Error, Result};
use crate::fock::KetVector;
use crate::quadpoly::{QuadraturePolynomial, SymplecticTransform};

/// Amplitude bound at the domain edge for synthesized states.
pub const TAIL_TOL: f64 = 1e-8;
/// Leaked norm above which measurements refuse to run.
pub const MEASURE_LEAK_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(points: usize, half_width: f64) -> Result<Self> {
        if points < 8 || !points.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("grid needs an even point count >= 8, got {points}")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidParameter(format!("grid half-width must be positive, got {half_width}")));
        }
        Ok(Self { points, half_width })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(i)).collect()
    }

    /// Index of `x = 0`.
    pub fn center(&self) -> usize {
        self.points / 2
    }

    /// Angular wavenumbers in FFT order; the Nyquist bin maps to 0.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let l = self.points;
        let dk = 2.0 * PI / (l as f64 * self.dx());
        (0..l)
            .map(|k| {
                if k < l / 2 {
                    k as f64 * dk
                } else if k == l / 2 {
                    0.0
                } else {
                    (k as f64 - l as f64) * dk
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    grid: GridSpec,
    modes: usize,
    amps: Vec<C64>,
    leaked: f64,
}

/// Harmonic-oscillator eigenfunctions `phi_0..=phi_nmax` at `x`.
pub fn hermite_functions(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(PI.powf(-0.25) * (-0.5 * x * x).exp());
    if nmax >= 1 {
        out.push(2f64.sqrt() * x * out[0]);
    }
    for n in 1..nmax {
        let v = (2.0 / (n as f64 + 1.0)).sqrt() * x * out[n] - (n as f64 / (n as f64 + 1.0)).sqrt() * out[n - 1];
        out.push(v);
    }
    out
}

impl GridWavefunction {
    pub fn new(grid: GridSpec, modes: usize, amps: Vec<C64>) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParameter("need at least one mode".into()));
        }
        if amps.len() != grid.points.pow(modes as u32) {
            return Err(Error::BasisMismatch(format!(
                "{} amplitudes for {} modes on {} points",
                amps.len(),
                modes,
                grid.points
            )));
        }
        Ok(Self { grid, modes, amps, leaked: 0.0 })
    }

    /// Samples `f` on the grid; `f` receives the N coordinates.
    pub fn from_fn(grid: GridSpec, modes: usize, f: impl Fn(&[f64]) -> C64 + Sync) -> Result<Self> {
        let total = grid.points.checked_pow(modes as u32).ok_or(Error::InvalidParameter("grid too large".into()))?;
        let coords = grid.coords();
        let amps = (0..total)
            .into_par_iter()
            .map_init(
                || vec![0.0; modes],
                |x, idx| {
                    let mut rest = idx;
                    for m in (0..modes).rev() {
                        x[m] = coords[rest % grid.points];
                        rest /= grid.points;
                    }
                    f(x)
                },
            )
            .collect();
        Self::new(grid, modes, amps)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn leaked(&self) -> f64 {
        self.leaked
    }

    pub(crate) fn add_leak(&mut self, amount: f64) {
        self.leaked += amount;
    }

    fn cell(&self) -> f64 {
        self.grid.dx().powi(self.modes as i32)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.cell()
    }

    /// Rescales to unit discrete norm and clears the leak counter.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::ZeroProbability);
        }
        let s = 1.0 / n.sqrt();
        self.amps.par_iter_mut().for_each(|a| *a *= s);
        self.leaked = 0.0;
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Product state with `other`'s modes appended after this one's.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::BasisMismatch("tensor of states on different grids".into()));
        }
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(Self { grid: self.grid, modes: self.modes + other.modes, amps, leaked: self.leaked + other.leaked })
    }

    /// `<self|other>` on the grid.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.grid != other.grid || self.modes != other.modes {
            return Err(Error::BasisMismatch("inner product of incompatible grid states".into()));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum::<C64>() * self.cell())
    }

    /// `|<a|b>|^2 / (<a|a><b|b>)`.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        let ov = self.inner(other)?;
        Ok(ov.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    pub(crate) fn stride(&self, mode: usize) -> usize {
        self.grid.points.pow((self.modes - 1 - mode) as u32)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.modes {
            return Err(Error::ModeOutOfRange { mode, modes: self.modes });
        }
        Ok(())
    }

    /// `<f(x)>` for a real function of the coordinates.
    pub fn expect_x(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let coords = self.grid.coords();
        let (l, n) = (self.grid.points, self.modes);
        let num: f64 = self
            .amps
            .par_iter()
            .enumerate()
            .map_init(
                || vec![0.0; n],
                |x, (idx, a)| {
                    let mut rest = idx;
                    for m in (0..n).rev() {
                        x[m] = coords[rest % l];
                        rest /= l;
                    }
                    a.norm_sqr() * f(x)
                },
            )
            .sum();
        num / self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    /// `<x_mode^k>`.
    pub fn x_moment(&self, mode: usize, k: i32) -> Result<f64> {
        self.check_mode(mode)?;
        Ok(self.expect_x(|x| x[mode].powi(k)))
    }

    /// Applies a function to every line along `axis`.
    pub(crate) fn map_lines(&mut self, axis: usize, f: impl Fn(&mut [C64]) + Sync) {
        map_lines(&mut self.amps, self.grid.points, self.modes, axis, f);
    }

    /// `p_mode psi` by spectral differentiation.
    pub fn apply_p(&self, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let mut out = self.clone();
        let spectral = Spectral::new(&self.grid);
        out.map_lines(mode, |line| spectral.apply_p(line));
        Ok(out)
    }

    /// `(<p>, <p^2>)` on `mode`.
    pub fn p_moments(&self, mode: usize) -> Result<(f64, f64)> {
        let pp = self.apply_p(mode)?;
        let norm: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum();
        let mean = self.amps.iter().zip(&pp.amps).map(|(a, b)| (a.conj() * b).re).sum::<f64>() / norm;
        let second = pp.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() / norm;
        Ok((mean, second))
    }

    /// `Var(p_mode + h(x))` for a real polynomial `h` in the positions.
    pub fn nonlinear_p_variance(&self, mode: usize, h: &QuadraturePolynomial) -> Result<f64> {
        h.require_x_only()?;
        let mut op = self.apply_p(mode)?;
        let coords = self.grid.coords();
        let (l, n) = (self.grid.points, self.modes);
        op.amps.par_iter_mut().zip(self.amps.par_iter()).enumerate().for_each_init(
            || vec![0.0; n],
            |x, (idx, (o, a))| {
                let mut rest = idx;
                for m in (0..n).rev() {
                    x[m] = coords[rest % l];
                    rest /= l;
                }
                *o += a * h.evaluate_x(x);
            },
        );
        let norm: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum();
        let mean = self.amps.iter().zip(&op.amps).map(|(a, b)| (a.conj() * b).re).sum::<f64>() / norm;
        let second = op.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() / norm;
        Ok(second - mean * mean)
    }
}

pub(crate) fn map_lines(amps: &mut [C64], l: usize, modes: usize, axis: usize, f: impl Fn(&mut [C64]) + Sync) {
    let stride = l.pow((modes - 1 - axis) as u32);
    let block = stride * l;
    amps.par_chunks_mut(block).for_each(|chunk| {
        let mut line = vec![C64::new(0.0, 0.0); l];
        for s in 0..stride {
            for (i, v) in line.iter_mut().enumerate() {
                *v = chunk[s + i * stride];
            }
            f(&mut line);
            for (i, v) in line.iter().enumerate() {
                chunk[s + i * stride] = *v;
            }
        }
    });
}

/// FFT plans and wavenumbers for one grid.
pub(crate) struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl Spectral {
    pub(crate) fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(grid.points),
            inverse: planner.plan_fft_inverse(grid.points),
            k: grid.wavenumbers(),
        }
    }

    /// Multiplies the spectrum of `line` by `m(k)`.
    pub(crate) fn filter(&self, line: &mut [C64], m: impl Fn(f64) -> C64) {
        self.forward.process(line);
        let s = 1.0 / line.len() as f64;
        for (v, &k) in line.iter_mut().zip(&self.k) {
            *v *= m(k) * s;
        }
        self.inverse.process(line);
    }

    pub(crate) fn apply_p(&self, line: &mut [C64]) {
        self.filter(line, |k| C64::new(k, 0.0));
    }

    pub(crate) fn forward(&self, line: &mut [C64]) {
        self.forward.process(line);
    }
}

/// Synthesizes `sum c_n phi_n` on the grid.
pub fn fock_to_grid(state: &KetVector, grid: GridSpec) -> Result<GridWavefunction> {
    let basis = state.basis();
    let nmax = *basis.dims().iter().max().expect("at least one mode") - 1;
    let edge = hermite_functions(nmax, grid.half_width);
    if let Some(n) = edge.iter().position(|v| v.abs() > TAIL_TOL) {
        return Err(Error::DomainTooSmall(format!(
            "|phi_{n}(X)| = {:.2e} at X = {}; increase the half-width",
            edge[n].abs(),
            grid.half_width
        )));
    }
    let table: Vec<Vec<f64>> = grid.coords().iter().map(|&x| hermite_functions(nmax, x)).collect();
    synthesize(state, grid, |mode_x_index, _| &table[mode_x_index])
}

fn synthesize<'a>(
    state: &KetVector,
    grid: GridSpec,
    table: impl Fn(usize, usize) -> &'a [f64] + Sync,
) -> Result<GridWavefunction> {
    let basis = state.basis();
    let n = basis.modes();
    let l = grid.points;
    let nonzero: Vec<(Vec<usize>, C64)> = (0..basis.size())
        .filter(|&i| state.amplitudes()[i] != C64::new(0.0, 0.0))
        .map(|i| (basis.levels(i), state.amplitudes()[i]))
        .collect();
    let total = l.pow(n as u32);
    let amps: Vec<C64> = (0..total)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |ix, idx| {
                let mut rest = idx;
                for m in (0..n).rev() {
                    ix[m] = rest % l;
                    rest /= l;
                }
                nonzero
                    .iter()
                    .map(|(lv, c)| c * lv.iter().enumerate().map(|(m, &k)| table(ix[m], m)[k]).product::<f64>())
                    .sum()
            },
        )
        .collect();
    GridWavefunction::new(grid, n, amps)?.normalized()
}

/// Grid image of `U |state>` where `U` conjugates the quadratures by a
/// block-diagonal symplectic map: `(U psi)(y) = psi(S_x^-1 y) / sqrt|det S_x|`.
pub fn gaussian_state_to_grid(
    state: &KetVector,
    transform: &SymplecticTransform,
    grid: GridSpec,
) -> Result<GridWavefunction> {
    let n = state.basis().modes();
    if transform.modes() != n {
        return Err(Error::BasisMismatch("transform and state differ in mode count".into()));
    }
    if !transform.is_block_diagonal() {
        return Err(Error::InvalidParameter("only block-diagonal (x-preserving) transforms are supported".into()));
    }
    if transform.displacement_vector().iter().any(|d| d.abs() > 0.0) {
        return Err(Error::InvalidParameter("displaced transforms are not supported".into()));
    }
    let sx = transform.x_block();
    let inv = invert(&sx, n).ok_or(Error::InvalidParameter("singular position block".into()))?;
    let det = determinant(&sx, n);
    let nmax = *state.basis().dims().iter().max().expect("modes") - 1;
    let basis = state.basis().clone();
    let amps = state.amplitudes().to_vec();
    let scale = 1.0 / det.abs().sqrt();
    let wf = GridWavefunction::from_fn(grid, n, |y| {
        let x: Vec<f64> = (0..n).map(|r| (0..n).map(|c| inv[r * n + c] * y[c]).sum()).collect();
        let tables: Vec<Vec<f64>> = x.iter().map(|&v| hermite_functions(nmax, v)).collect();
        let mut acc = C64::new(0.0, 0.0);
        for (i, c) in amps.iter().enumerate() {
            if *c == C64::new(0.0, 0.0) {
                continue;
            }
            let lv = basis.levels(i);
            acc += c * lv.iter().enumerate().map(|(m, &k)| tables[m][k]).product::<f64>();
        }
        acc * scale
    })?;
    let edge = boundary_max(&wf);
    if edge > TAIL_TOL {
        return Err(Error::DomainTooSmall(format!("amplitude {edge:.2e} on the domain boundary")));
    }
    wf.normalized()
}

fn boundary_max(wf: &GridWavefunction) -> f64 {
    let l = wf.grid.points;
    let n = wf.modes;
    wf.amps
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let mut rest = *idx;
            (0..n).any(|_| {
                let i = rest % l;
                rest /= l;
                i == 0 || i == l - 1
            })
        })
        .fold(0.0f64, |m, (_, a)| m.max(a.norm()))
}

fn determinant(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs())).expect("nonempty");
        if m[p * n + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for k in 0..n {
                m.swap(p * n + k, c * n + k);
            }
            det = -det;
        }
        det *= m[c * n + c];
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            for k in c..n {
                m[r * n + k] -= f * m[c * n + k];
            }
        }
    }
    det
}

fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs()))?;
        if m[p * n + c].abs() < 1e-300 {
            return None;
        }
        for k in 0..n {
            m.swap(p * n + k, c * n + k);
            inv.swap(p * n + k, c * n + k);
        }
        let d = m[c * n + c];
        for k in 0..n {
            m[c * n + k] /= d;
            inv[c * n + k] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r * n + c];
                for k in 0..n {
                    m[r * n + k] -= f * m[c * n + k];
                    inv[r * n + k] -= f * inv[c * n + k];
                }
            }
        }
    }
    Some(inv)
}

/// Multiplies by `exp(-i poly(x))`.
pub fn apply_phase(state: &GridWavefunction, poly: &QuadraturePolynomial) -> Result<GridWavefunction> {
    let mut out = state.clone();
    apply_phase_in_place(&mut out, poly, -1.0)?;
    Ok(out)
}

/// Multiplies by `exp(i sign poly(x))` in place.
pub fn apply_phase_in_place(state: &mut GridWavefunction, poly: &QuadraturePolynomial, sign: f64) -> Result<()> {
    poly.require_x_only()?;
    if poly.modes() != state.modes {
        return Err(Error::BasisMismatch(format!("polynomial on {} modes, state on {}", poly.modes(), state.modes)));
    }
    if poly.is_zero() {
        return Ok(());
    }
    let coords = state.grid.coords();
    let (l, n) = (state.grid.points, state.modes);
    state.amps.par_iter_mut().enumerate().for_each_init(
        || vec![0.0; n],
        |x, (idx, a)| {
            let mut rest = idx;
            for m in (0..n).rev() {
                x[m] = coords[rest % l];
                rest /= l;
            }
            *a *= C64::from_polar(1.0, sign * poly.evaluate_x(x));
        },
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{expectation, polynomial_operator, FockBasis};

    fn grid() -> GridSpec {
        GridSpec::new(128, 8.0).unwrap()
    }

    #[test]
    fn ground_state_value_and_parity() {
        let b = FockBasis::new(vec![2], 0).unwrap();
        let g = grid();
        let vac = fock_to_grid(&KetVector::vacuum(b.clone()), g).unwrap();
        let c = g.center();
        assert!((vac.amplitudes()[c].re - PI.powf(-0.25)).abs() < 1e-12);
        let one = fock_to_grid(&KetVector::fock(b, &[1]).unwrap(), g).unwrap();
        assert!(one.amplitudes()[c].norm() < 1e-15);
    }

    #[test]
    fn hermite_functions_are_orthonormal_on_the_grid() {
        let g = grid();
        let table: Vec<Vec<f64>> = g.coords().iter().map(|&x| hermite_functions(12, x)).collect();
        for m in 0..=12 {
            for n in 0..=12 {
                let s: f64 = table.iter().map(|r| r[m] * r[n]).sum::<f64>() * g.dx();
                let want = if m == n { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "{m} {n} {s}");
            }
        }
    }

    #[test]
    fn second_moment_matches_fock() {
        let b = FockBasis::new(vec![3], 0).unwrap();
        let s = 0.5f64.sqrt();
        let ket = KetVector::new(b.clone(), vec![C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)]).unwrap();
        let wf = fock_to_grid(&ket, grid()).unwrap();
        let x2 = QuadraturePolynomial::x(1, 0).pow(2);
        let op = polynomial_operator(&x2, &b.with_guard(2)).unwrap();
        let want = expectation(&op, &ket).unwrap().re;
        assert!((wf.x_moment(0, 2).unwrap() - want).abs() < 1e-8);
        assert!((want - (1.5 + 0.5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn tail_check_rejects_narrow_domain() {
        let b = FockBasis::new(vec![11], 0).unwrap();
        let ket = KetVector::fock(b, &[10]).unwrap();
        assert!(matches!(fock_to_grid(&ket, GridSpec::new(64, 4.0).unwrap()), Err(Error::DomainTooSmall(_))));
    }

    #[test]
    fn phase_properties() {
        let b = FockBasis::new(vec![3, 2], 0).unwrap();
        let amps: Vec<C64> = (0..6).map(|k| C64::new(0.3 + 0.1 * k as f64, 0.05 * k as f64)).collect();
        let ket = KetVector::new(b, amps).unwrap().normalized().unwrap();
        let wf = fock_to_grid(&ket, GridSpec::new(64, 8.0).unwrap()).unwrap();
        let zero = QuadraturePolynomial::zero(2);
        assert_eq!(apply_phase(&wf, &zero).unwrap(), wf);
        let v = crate::nlsq::two_mode_cubic(0.46);
        let out = apply_phase(&wf, &v).unwrap();
        assert!((out.norm_sqr() - wf.norm_sqr()).abs() < 1e-12);
        let back = apply_phase(&out, &v.scale(-1.0)).unwrap();
        let err = back.amplitudes().iter().zip(wf.amplitudes()).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err < 1e-12);
        assert!(matches!(apply_phase(&wf, &QuadraturePolynomial::p(2, 0)), Err(Error::ContainsMomentum)));
    }

    #[test]
    fn p_moments_of_fock_states() {
        let b = FockBasis::new(vec![3], 0).unwrap();
        let wf = fock_to_grid(&KetVector::fock(b, &[2]).unwrap(), grid()).unwrap();
        let (m, s) = wf.p_moments(0).unwrap();
        assert!(m.abs() < 1e-12);
        assert!((s - 2.5).abs() < 1e-8);
    }

    #[test]
    fn squeezed_vacuum_via_transform() {
        let b = FockBasis::new(vec![1, 1], 0).unwrap();
        let t = SymplecticTransform::squeezer(2, 1.5, 0).unwrap();
        let wf = gaussian_state_to_grid(&KetVector::vacuum(b), &t, GridSpec::new(64, 8.0).unwrap()).unwrap();
        // U^dag x1 U = x1 / 1.5
        assert!((wf.x_moment(0, 2).unwrap() - 0.5 / 2.25).abs() < 1e-8);
        assert!((wf.x_moment(1, 2).unwrap() - 0.5).abs() < 1e-8);
    }
}
