//! Quadrature sum gates and homodyne measurement on the grid.

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridWavefunction, MEASURE_LEAK_LIMIT};
use crate::error::{Error, Result};

/// Leaked norm at which a coupling is declared out of domain.
pub const QSG_LEAK_LIMIT: f64 = 1e-3;

/// `|x>_T |y>_A -> |x>_T |y - x>_A`, i.e. `psi'(x, y) = psi(x, y + x)`.
///
/// Amplitude shifted beyond the domain is dropped and added to the leak
/// counter.
pub fn qsg_couple(state: &GridWavefunction, target: usize, ancilla: usize) -> Result<GridWavefunction> {
    let mut out = state.clone();
    qsg_couple_in_place(&mut out, target, ancilla)?;
    Ok(out)
}

pub(crate) fn qsg_couple_in_place(state: &mut GridWavefunction, target: usize, ancilla: usize) -> Result<()> {
    let n = state.modes();
    for m in [target, ancilla] {
        if m >= n {
            return Err(Error::ModeOutOfRange { mode: m, modes: n });
        }
    }
    if target == ancilla {
        return Err(Error::InvalidParameter("target and ancilla must differ".into()));
    }
    let l = state.grid().points;
    let c = state.grid().center() as isize;
    let (st, sa) = (state.stride(target), state.stride(ancilla));
    let before = state.norm_sqr();
    let amps = state.amplitudes_mut();
    let mut line = vec![C64::new(0.0, 0.0); l];
    for s in (0..amps.len()).filter(|&i| (i / sa) % l == 0) {
        let shift = ((s / st) % l) as isize - c;
        for (j, v) in line.iter_mut().enumerate() {
            let src = j as isize + shift;
            *v = if (0..l as isize).contains(&src) { amps[s + src as usize * sa] } else { C64::new(0.0, 0.0) };
        }
        for (j, v) in line.iter().enumerate() {
            amps[s + j * sa] = *v;
        }
    }
    let after = state.norm_sqr();
    state.add_leak((before - after).max(0.0));
    if state.leaked() > QSG_LEAK_LIMIT {
        return Err(Error::DomainTooSmall(format!(
            "coupling leaked {:.2e} of the norm; enlarge the grid",
            state.leaked()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub modes: Vec<usize>,
    pub q: Vec<f64>,
    /// Probability of the grid bin (or of the whole window when post-selecting).
    pub probability: f64,
    /// Probability density at `q`.
    pub density: f64,
}

pub enum HomodyneMode<'a, R: Rng> {
    /// Draw one outcome from the grid marginal.
    Sample(&'a mut R),
    /// Keep outcomes with every `|q_k| <= epsilon`; one branch inside the
    /// window is drawn and `probability` reports the acceptance probability.
    Postselect { epsilon: f64, rng: &'a mut R },
}

/// Offsets splitting the grid into measured and remaining modes.
pub(crate) struct Split {
    pub measured: Vec<usize>,
    pub remaining: Vec<usize>,
    /// flat offset of every measured multi-index, in row-major order
    pub outcome_offsets: Vec<usize>,
    /// flat offset of every remaining multi-index
    pub rest_offsets: Vec<usize>,
}

fn offsets(state: &GridWavefunction, modes: &[usize]) -> Vec<usize> {
    let l = state.grid().points;
    let mut out = vec![0usize];
    for &m in modes {
        let s = state.stride(m);
        out = out.iter().flat_map(|&o| (0..l).map(move |i| o + i * s)).collect();
    }
    out
}

impl Split {
    pub(crate) fn new(state: &GridWavefunction, measured: &[usize]) -> Result<Self> {
        let n = state.modes();
        let mut seen = vec![false; n];
        for &m in measured {
            if m >= n {
                return Err(Error::ModeOutOfRange { mode: m, modes: n });
            }
            if seen[m] {
                return Err(Error::InvalidParameter(format!("mode {m} listed twice")));
            }
            seen[m] = true;
        }
        if measured.is_empty() || measured.len() == n {
            return Err(Error::InvalidParameter("measure at least one mode and keep at least one".into()));
        }
        let remaining: Vec<usize> = (0..n).filter(|m| !seen[*m]).collect();
        Ok(Self {
            outcome_offsets: offsets(state, measured),
            rest_offsets: offsets(state, &remaining),
            measured: measured.to_vec(),
            remaining,
        })
    }

    pub(crate) fn q(&self, state: &GridWavefunction, outcome: usize) -> Vec<f64> {
        let l = state.grid().points;
        let k = self.measured.len();
        let mut q = vec![0.0; k];
        let mut rest = outcome;
        for j in (0..k).rev() {
            q[j] = state.grid().coord(rest % l);
            rest /= l;
        }
        q
    }

    pub(crate) fn gather(&self, state: &GridWavefunction, outcome: usize, out: &mut [C64]) {
        let base = self.outcome_offsets[outcome];
        let a = state.amplitudes();
        for (o, &r) in out.iter_mut().zip(&self.rest_offsets) {
            *o = a[base + r];
        }
    }

    /// Discrete bin probabilities normalized to the surviving norm.
    pub(crate) fn marginal(&self, state: &GridWavefunction) -> Vec<f64> {
        let a = state.amplitudes();
        let total: f64 = a.par_iter().map(|z| z.norm_sqr()).sum();
        self.outcome_offsets
            .par_iter()
            .map(|&b| self.rest_offsets.iter().map(|&r| a[b + r].norm_sqr()).sum::<f64>() / total)
            .collect()
    }
}

fn conditional(state: &GridWavefunction, split: &Split, outcome: usize) -> Result<GridWavefunction> {
    let mut amps = vec![C64::new(0.0, 0.0); split.rest_offsets.len()];
    split.gather(state, outcome, &mut amps);
    GridWavefunction::new(*state.grid(), split.remaining.len(), amps)?.normalized()
}

fn draw(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc && *w > 0.0 {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn check_leak(state: &GridWavefunction) -> Result<()> {
    if state.leaked() > MEASURE_LEAK_LIMIT {
        return Err(Error::DomainTooSmall(format!(
            "leaked norm {:.2e} exceeds {MEASURE_LEAK_LIMIT:e} before measurement",
            state.leaked()
        )));
    }
    Ok(())
}

/// Measures the x quadrature of `modes` and returns the outcome with the
/// normalized conditional state of the other modes.
pub fn homodyne<R: Rng>(
    state: &GridWavefunction,
    modes: &[usize],
    mode: HomodyneMode<'_, R>,
) -> Result<(MeasurementOutcome, GridWavefunction)> {
    check_leak(state)?;
    let split = Split::new(state, modes)?;
    let p = split.marginal(state);
    let bin = state.grid().dx().powi(modes.len() as i32);
    match mode {
        HomodyneMode::Sample(rng) => {
            let k = draw(&p, rng.gen::<f64>());
            if !(p[k] > 0.0) {
                return Err(Error::ZeroProbability);
            }
            let outcome = MeasurementOutcome {
                modes: modes.to_vec(),
                q: split.q(state, k),
                probability: p[k],
                density: p[k] / bin,
            };
            Ok((outcome, conditional(state, &split, k)?))
        }
        HomodyneMode::Postselect { epsilon, rng } => {
            let window: Vec<f64> = (0..p.len())
                .map(|k| if split.q(state, k).iter().all(|q| q.abs() <= epsilon + 1e-12) { p[k] } else { 0.0 })
                .collect();
            let accept: f64 = window.iter().sum();
            if !(accept > 0.0) {
                return Err(Error::ZeroProbability);
            }
            let k = draw(&window, rng.gen::<f64>());
            let outcome = MeasurementOutcome {
                modes: modes.to_vec(),
                q: split.q(state, k),
                probability: accept,
                density: p[k] / bin,
            };
            Ok((outcome, conditional(state, &split, k)?))
        }
    }
}

/// Conditional states for every grid outcome, with bin probabilities that
/// sum to `1 - leaked`.
pub fn homodyne_scan(state: &GridWavefunction, modes: &[usize]) -> Result<Vec<(MeasurementOutcome, GridWavefunction)>> {
    check_leak(state)?;
    let split = Split::new(state, modes)?;
    let p = split.marginal(state);
    let survive = 1.0 - state.leaked();
    let bin = state.grid().dx().powi(modes.len() as i32);
    let mut out = Vec::with_capacity(p.len());
    for (k, &pk) in p.iter().enumerate() {
        if pk <= 0.0 {
            continue;
        }
        let outcome = MeasurementOutcome {
            modes: modes.to_vec(),
            q: split.q(state, k),
            probability: pk * survive,
            density: pk * survive / bin,
        };
        out.push((outcome, conditional(state, &split, k)?));
    }
    Ok(out)
}
