//! Parameterized landscapes over (core, Gaussian layer) and the seeded
//! multistart driver.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::ansatz::{canonical_phase, AnsatzSpec, CoreState, Family, Processing};
use super::bfgs::{bfgs, LocalOptions};
use super::gauge::wrap_angle;
use super::{LambdaBounds, OptimizerConfig};
use crate::error::{Error, Result};
use crate::nlsq::{Moments, PreparedOps, VarianceFunctional};
use crate::quadpoly::{GaussianParams, SymplecticTransform};

/// One block of core coefficients (a single factor, or a dense two-mode core).
#[derive(Debug, Clone)]
pub struct Block {
    len: usize,
    /// `Some(n)` fixes the phase of coefficient k to `i^n[k]`.
    phases: Option<Vec<u32>>,
    /// parameter slot of each coefficient
    slot: Vec<usize>,
    slots: usize,
}

impl Block {
    fn new(len: usize, phases: Option<Vec<u32>>, slot: Vec<usize>) -> Self {
        let slots = slot.iter().copied().max().map_or(0, |m| m + 1);
        Self { len, phases, slot, slots }
    }

    fn single_mode(levels: usize, real: bool) -> Self {
        let phases = real.then(|| (0..levels as u32).collect());
        Self::new(levels, phases, (0..levels).collect())
    }

    fn param_len(&self) -> usize {
        if self.len == 1 {
            0
        } else if self.phases.is_some() {
            self.slots
        } else {
            2 * self.slots
        }
    }

    fn decode(&self, p: &[f64]) -> Vec<C64> {
        if self.len == 1 {
            return vec![C64::new(1.0, 0.0)];
        }
        (0..self.len)
            .map(|k| {
                let s = self.slot[k];
                match &self.phases {
                    Some(ph) => C64::new(p[s], 0.0) * C64::i().powu(ph[k]),
                    None => C64::new(p[2 * s], p[2 * s + 1]),
                }
            })
            .collect()
    }

    fn encode(&self, v: &[C64], out: &mut Vec<f64>) {
        if self.len == 1 {
            return;
        }
        let start = out.len();
        out.resize(start + self.param_len(), 0.0);
        for k in 0..self.len {
            let s = self.slot[k];
            match &self.phases {
                Some(ph) => out[start + s] = (v[k] * C64::i().powu(ph[k]).conj()).re,
                None => {
                    out[start + 2 * s] = v[k].re;
                    out[start + 2 * s + 1] = v[k].im;
                }
            }
        }
    }

    fn random(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        for _ in 0..self.param_len() {
            out.push(rng.sample(StandardNormal));
        }
    }
}

#[derive(Debug, Clone)]
pub enum CoreLayout {
    Fixed(Vec<C64>),
    Dense(Block),
    Factorized { first: Block, second: Block, shared: bool },
}

impl CoreLayout {
    fn param_len(&self) -> usize {
        match self {
            CoreLayout::Fixed(_) => 0,
            CoreLayout::Dense(b) => b.param_len(),
            CoreLayout::Factorized { first, second, shared } => {
                first.param_len() + if *shared { 0 } else { second.param_len() }
            }
        }
    }

    fn decode(&self, p: &[f64]) -> (Vec<C64>, Option<CoreState>) {
        match self {
            CoreLayout::Fixed(v) => (v.clone(), None),
            CoreLayout::Dense(b) => (b.decode(p), None),
            CoreLayout::Factorized { first, second, shared } => {
                let a = first.decode(&p[..first.param_len()]);
                let b = if *shared { a.clone() } else { second.decode(&p[first.param_len()..]) };
                let core = CoreState::Factorized(a, b);
                (core.tensor(), Some(core))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaussLayout {
    Identity,
    Passive,
    Full,
}

impl GaussLayout {
    fn len(self) -> usize {
        match self {
            GaussLayout::Identity => 0,
            GaussLayout::Passive => 1,
            GaussLayout::Full => 4,
        }
    }
}

/// Decoded point of a search landscape.
#[derive(Debug, Clone)]
pub struct Decoded {
    /// Unnormalized core amplitudes in the functional's core basis.
    pub amps: Vec<C64>,
    /// Present when the core is a product state.
    pub factors: Option<CoreState>,
    pub gaussian: GaussianParams,
}

/// A landscape: core layout followed by Gaussian layout, evaluated through a
/// shared [`VarianceFunctional`]. Squeezing enters through
/// `ln lambda = lo + (hi - lo) * sigmoid(u)` so the search is unconstrained.
#[derive(Debug, Clone)]
pub struct Search {
    functional: Arc<VarianceFunctional>,
    core: CoreLayout,
    gauss: GaussLayout,
    bounds: LambdaBounds,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

pub type OpsCache = Option<(Vec<f64>, PreparedOps)>;

impl Search {
    pub fn new(
        functional: Arc<VarianceFunctional>,
        core: CoreLayout,
        gauss: GaussLayout,
        bounds: LambdaBounds,
    ) -> Self {
        Self { functional, core, gauss, bounds }
    }

    pub fn fixed_core(
        functional: Arc<VarianceFunctional>,
        amps: Vec<C64>,
        gauss: GaussLayout,
        bounds: LambdaBounds,
    ) -> Self {
        Self::new(functional, CoreLayout::Fixed(amps), gauss, bounds)
    }

    /// Single-mode core of `levels` free coefficients under identity processing.
    pub fn dense_identity(functional: Arc<VarianceFunctional>, real_up_to_phase: bool) -> Self {
        let levels = functional.core_basis().size();
        let block = Block::single_mode(levels, real_up_to_phase);
        Self::new(functional, CoreLayout::Dense(block), GaussLayout::Identity, LambdaBounds::default())
    }

    pub fn for_ansatz(functional: Arc<VarianceFunctional>, spec: &AnsatzSpec, bounds: LambdaBounds) -> Result<Self> {
        spec.validate()?;
        let (m, n) = (spec.dims.0 + 1, spec.dims.1 + 1);
        let real = spec.real_up_to_phase;
        let core = match spec.family {
            Family::Simplified | Family::Factorized => CoreLayout::Factorized {
                first: Block::single_mode(m, real),
                second: Block::single_mode(n, real),
                shared: spec.exchange_symmetric,
            },
            Family::Entangled => {
                let phases = real.then(|| (0..m * n).map(|k| (k / n + k % n) as u32).collect());
                let slot: Vec<usize> = if spec.exchange_symmetric {
                    // slot index of the upper-triangle representative
                    let mut ids = vec![0; m * n];
                    let mut next = 0;
                    for i in 0..m {
                        for j in i..n {
                            ids[i * n + j] = next;
                            ids[j * n + i] = next;
                            next += 1;
                        }
                    }
                    ids
                } else {
                    (0..m * n).collect()
                };
                CoreLayout::Dense(Block::new(m * n, phases, slot))
            }
        };
        let gauss = match spec.processing {
            Processing::Passive => GaussLayout::Passive,
            Processing::Full => GaussLayout::Full,
        };
        Ok(Self::new(functional, core, gauss, bounds))
    }

    pub fn functional(&self) -> &VarianceFunctional {
        &self.functional
    }

    pub fn core_len(&self) -> usize {
        self.core.param_len()
    }

    pub fn dim(&self) -> usize {
        self.core.param_len() + self.gauss.len()
    }

    fn lambda_from(&self, u: f64) -> f64 {
        let (lo, hi) = (self.bounds.min.ln(), self.bounds.max.ln());
        (lo + (hi - lo) * sigmoid(u)).exp()
    }

    fn lambda_to(&self, lambda: f64) -> f64 {
        let (lo, hi) = (self.bounds.min.ln(), self.bounds.max.ln());
        let t = ((lambda.ln() - lo) / (hi - lo)).clamp(1e-15, 1.0 - 1e-15);
        (t / (1.0 - t)).ln()
    }

    fn gaussian_from(&self, g: &[f64]) -> GaussianParams {
        match self.gauss {
            GaussLayout::Identity => GaussianParams::IDENTITY,
            GaussLayout::Passive => GaussianParams::passive(g[0]),
            GaussLayout::Full => GaussianParams {
                theta1: g[0],
                lambda1: self.lambda_from(g[1]),
                lambda2: self.lambda_from(g[2]),
                theta2: g[3],
            },
        }
    }

    pub fn encode_gaussian(&self, p: &GaussianParams) -> Vec<f64> {
        match self.gauss {
            GaussLayout::Identity => vec![],
            GaussLayout::Passive => vec![p.theta1],
            GaussLayout::Full => vec![p.theta1, self.lambda_to(p.lambda1), self.lambda_to(p.lambda2), p.theta2],
        }
    }

    /// Internal coordinates of a known core and Gaussian layer.
    pub fn encode(&self, core: &CoreState, gaussian: &GaussianParams) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        match (&self.core, core) {
            (CoreLayout::Fixed(_), _) => {}
            (CoreLayout::Dense(b), c) => {
                let t = c.tensor();
                if t.len() != b.len {
                    return Err(Error::BasisMismatch("core size does not match the layout".into()));
                }
                b.encode(&t, &mut out);
            }
            (CoreLayout::Factorized { first, second, shared }, CoreState::Factorized(a, c)) => {
                if a.len() != first.len || c.len() != second.len {
                    return Err(Error::BasisMismatch("factor sizes do not match the layout".into()));
                }
                first.encode(a, &mut out);
                if !shared {
                    second.encode(c, &mut out);
                }
            }
            (CoreLayout::Factorized { .. }, CoreState::Entangled { .. }) => {
                return Err(Error::BasisMismatch("entangled core for a factorized layout".into()));
            }
        }
        out.extend(self.encode_gaussian(gaussian));
        Ok(out)
    }

    pub fn decode(&self, x: &[f64]) -> Result<Decoded> {
        if x.len() != self.dim() {
            return Err(Error::InvalidParameter(format!("expected {} parameters, got {}", self.dim(), x.len())));
        }
        let k = self.core.param_len();
        let (amps, factors) = self.core.decode(&x[..k]);
        Ok(Decoded { amps, factors, gaussian: self.gaussian_from(&x[k..]) })
    }

    /// Variance at the internal point `x`, reusing the prepared operators
    /// while the Gaussian coordinates stay put.
    pub fn moments(&self, cache: &mut OpsCache, x: &[f64]) -> Result<Moments> {
        let d = self.decode(x)?;
        let key = &x[self.core.param_len()..];
        let fresh = !matches!(cache, Some((k, _)) if k.as_slice() == key);
        if fresh {
            let t = match self.gauss {
                GaussLayout::Identity => SymplecticTransform::identity(self.functional.modes()),
                _ => d.gaussian.transform()?,
            };
            *cache = Some((key.to_vec(), self.functional.prepare(&t)?));
        }
        let ops = &cache.as_ref().expect("filled above").1;
        self.functional.evaluate(ops, &d.amps)
    }

    pub fn value(&self, cache: &mut OpsCache, x: &[f64]) -> Result<f64> {
        Ok(self.moments(cache, x)?.total)
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        match &self.core {
            CoreLayout::Fixed(_) => {}
            CoreLayout::Dense(b) => b.random(rng, &mut x),
            CoreLayout::Factorized { first, second, shared } => {
                first.random(rng, &mut x);
                if !shared {
                    second.random(rng, &mut x);
                }
            }
        }
        let theta = |rng: &mut ChaCha8Rng| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        match self.gauss {
            GaussLayout::Identity => {}
            GaussLayout::Passive => x.push(theta(rng)),
            GaussLayout::Full => {
                let (lo, hi) = (self.bounds.min.ln(), self.bounds.max.ln());
                let t1 = theta(rng);
                let l1 = rng.gen_range(lo..hi).exp();
                let l2 = rng.gen_range(lo..hi).exp();
                let t2 = theta(rng);
                x.extend([t1, self.lambda_to(l1), self.lambda_to(l2), t2]);
            }
        }
        x
    }

    /// Gauge-fixed public coordinates used for tie-breaking: Gaussian
    /// parameters first, then normalized canonical core coefficients.
    pub fn public_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.decode(x)?;
        let g = d.gaussian;
        let mut out = match self.gauss {
            GaussLayout::Identity => vec![],
            GaussLayout::Passive => vec![wrap_angle(g.theta1)],
            GaussLayout::Full => vec![wrap_angle(g.theta1), g.lambda1, g.lambda2, wrap_angle(g.theta2)],
        };
        let coeffs = match d.factors {
            Some(f) => f.canonical().coefficients(),
            None => {
                let mut a = d.amps.clone();
                let n = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                a.iter_mut().for_each(|c| *c /= n);
                canonical_phase(&mut a);
                a
            }
        };
        out.extend(coeffs.iter().flat_map(|c| [c.re, c.im]));
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Best {
    pub x: Vec<f64>,
    pub f: f64,
    pub moments: Moments,
    pub converged_starts: usize,
    pub total_starts: usize,
}

#[derive(Debug, Clone)]
struct StartOutcome {
    x: Vec<f64>,
    f: f64,
    converged: bool,
}

fn local_options(config: &OptimizerConfig) -> LocalOptions {
    LocalOptions { max_iters: config.max_iters, grad_step: config.grad_step, ftol: config.tol, gtol: config.grad_tol }
}

fn run_start(search: &Search, config: &OptimizerConfig, x0: Vec<f64>) -> Result<StartOutcome> {
    let mut cache: OpsCache = None;
    let r = bfgs(|x: &[f64]| search.value(&mut cache, x), x0, &local_options(config))?;
    Ok(StartOutcome { x: r.x, f: r.f, converged: r.converged })
}

/// Random start `k` of a run seeded with `seed`; independent of scheduling.
pub fn start_point(search: &Search, seed: u64, k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    search.random_start(&mut rng)
}

/// Runs the `extra` starts followed by `config.starts` seeded random starts
/// and reduces to the best converged point: lowest objective, ties within
/// 1e-10 broken by the lexicographically smallest public vector.
pub fn multistart(search: &Search, config: &OptimizerConfig, extra: &[Vec<f64>]) -> Result<Best> {
    config.validate()?;
    let total = extra.len() + config.starts;
    let outcomes: Vec<Result<StartOutcome>> = (0..total)
        .into_par_iter()
        .map(|k| {
            let x0 = if k < extra.len() { extra[k].clone() } else { start_point(search, config.seed, k - extra.len()) };
            run_start(search, config, x0)
        })
        .collect();

    let mut done = Vec::with_capacity(total);
    for o in outcomes {
        match o {
            Ok(o) if o.converged => done.push(o),
            Ok(_) => {}
            Err(Error::NonFiniteObjective) => return Err(Error::NonFiniteObjective),
            Err(e) => return Err(e),
        }
    }
    let converged_starts = done.len();
    let fmin = done.iter().map(|o| o.f).fold(f64::INFINITY, f64::min);
    if !fmin.is_finite() {
        return Err(Error::NoConvergence(total));
    }
    let mut best: Option<(Vec<f64>, &StartOutcome)> = None;
    for o in done.iter().filter(|o| o.f <= fmin + 1e-10) {
        let key = search.public_vector(&o.x)?;
        let better = match &best {
            None => true,
            Some((k, _)) => key.partial_cmp(k) == Some(std::cmp::Ordering::Less),
        };
        if better {
            best = Some((key, o));
        }
    }
    let (_, o) = best.expect("at least one candidate");
    let moments = search.moments(&mut None, &o.x)?;
    Ok(Best { x: o.x.clone(), f: moments.total, moments, converged_starts, total_starts: total })
}
