//! The measurement-induced gate: couple, measure, correct.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bsvariant::{bs_conditionals, ResamplingReport};
use super::coupling::{homodyne, qsg_couple_in_place, HomodyneMode, MeasurementOutcome, Split};
use super::{apply_phase, apply_phase_in_place, GridSpec, GridWavefunction, MEASURE_LEAK_LIMIT};
use crate::error::{Error, Result};
use crate::quadpoly::{shift_polynomial, QuadraturePolynomial};

/// Separable envelope `exp(-y^2 / (4 s^2))` (so `|g|^2` has standard
/// deviation `s`) times a `sin^2` taper that reaches zero `margin` inside
/// the domain edge after a ramp of width `ramp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub std: f64,
    pub margin: f64,
    pub ramp: f64,
}

impl EnvelopeSpec {
    pub fn new(std: f64) -> Self {
        Self { std, margin: 5.0, ramp: 2.0 }
    }

    pub fn value(&self, grid: &GridSpec, y: f64) -> f64 {
        let edge = grid.half_width - self.margin;
        let t = ((edge - y.abs()) / self.ramp).clamp(0.0, 1.0);
        (-(y * y) / (4.0 * self.std * self.std)).exp() * (0.5 * PI * t).sin().powi(2)
    }
}

/// `exp(-i V(y)) prod_j g(y_j)`, normalized on the grid.
pub fn ideal_ancilla(grid: GridSpec, v: &QuadraturePolynomial, envelope: EnvelopeSpec) -> Result<GridWavefunction> {
    v.require_x_only()?;
    if !(envelope.std > 0.0 && envelope.margin >= 0.0 && envelope.ramp > 0.0) {
        return Err(Error::InvalidParameter("envelope needs std > 0, margin >= 0, ramp > 0".into()));
    }
    if envelope.margin + envelope.ramp >= grid.half_width {
        return Err(Error::DomainTooSmall("envelope window leaves no support".into()));
    }
    GridWavefunction::from_fn(grid, v.modes(), |y| {
        let g: f64 = y.iter().map(|&t| envelope.value(&grid, t)).product();
        C64::from_polar(g, -v.evaluate_x(y))
    })?
    .normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Policy {
    /// Apply `exp(+i F(x; q))` with `F = V(x + q) - V(x)`.
    Feedforward,
    /// Keep only outcomes with every `|q_k| <= epsilon`; no correction.
    Postselect { epsilon: f64 },
    /// No correction.
    None,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Feedforward => "feedforward",
            Policy::Postselect { .. } => "postselect",
            Policy::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Quadrature sum gates.
    Qsg,
    /// Balanced beam splitters followed by sqrt(2) rescaling.
    BeamSplitter,
}

fn check_inputs(input: &GridWavefunction, ancilla: &GridWavefunction, v: &QuadraturePolynomial) -> Result<()> {
    v.require_x_only()?;
    if input.grid() != ancilla.grid() {
        return Err(Error::BasisMismatch("input and ancilla grids differ".into()));
    }
    if input.modes() != ancilla.modes() || v.modes() != input.modes() {
        return Err(Error::BasisMismatch(format!(
            "input on {} modes, ancilla on {}, gate on {}",
            input.modes(),
            ancilla.modes(),
            v.modes()
        )));
    }
    Ok(())
}

/// Input modes `0..N`, ancilla modes `N..2N`, each target coupled to its ancilla.
fn coupled(input: &GridWavefunction, ancilla: &GridWavefunction) -> Result<GridWavefunction> {
    let n = input.modes();
    let mut s = input.tensor(ancilla)?;
    for j in 0..n {
        qsg_couple_in_place(&mut s, j, n + j)?;
    }
    Ok(s)
}

fn correct(out: &mut GridWavefunction, v: &QuadraturePolynomial, q: &[f64], policy: Policy) -> Result<()> {
    if policy == Policy::Feedforward {
        let f = shift_polynomial(v, q)?;
        apply_phase_in_place(out, &f, 1.0)?;
    }
    Ok(())
}

/// One run of the QSG protocol with a sampled (or post-selected) outcome.
pub fn run_protocol<R: Rng>(
    input: &GridWavefunction,
    ancilla: &GridWavefunction,
    v: &QuadraturePolynomial,
    policy: Policy,
    rng: &mut R,
) -> Result<(GridWavefunction, MeasurementOutcome)> {
    check_inputs(input, ancilla, v)?;
    let n = input.modes();
    let s = coupled(input, ancilla)?;
    let measured: Vec<usize> = (n..2 * n).collect();
    let mode = match policy {
        Policy::Postselect { epsilon } => HomodyneMode::Postselect { epsilon, rng },
        _ => HomodyneMode::Sample(rng),
    };
    let (outcome, mut out) = homodyne(&s, &measured, mode)?;
    correct(&mut out, v, &outcome.q, policy)?;
    Ok((out, outcome))
}

/// Outcome-averaged protocol figures over every grid outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub scheme: Scheme,
    pub policy: Policy,
    /// `sum_q p(q) |<ideal|out_q>|^2` over accepted outcomes, divided by their probability
    pub fidelity: f64,
    /// probability of the accepted outcomes
    pub success_probability: f64,
    pub outcomes: usize,
    pub leaked: f64,
    /// Per target mode: outcome-averaged `<x>`, `<x^2>`, `<p>`, `<p^2>`.
    pub moments: Vec<[f64; 4]>,
    pub resampling: Option<ResamplingReport>,
}

impl ProtocolReport {
    pub const CSV_HEADER: &'static str = "scheme,policy,fidelity,success_probability,outcomes,leaked,resampling_error";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.12},{:.12},{},{:.3e},{}",
            match self.scheme {
                Scheme::Qsg => "qsg",
                Scheme::BeamSplitter => "beam-splitter",
            },
            self.policy.name(),
            self.fidelity,
            self.success_probability,
            self.outcomes,
            self.leaked,
            self.resampling.as_ref().map_or(String::new(), |r| format!("{:.3e}", r.error_estimate()))
        )
    }

    /// Variance of `p_mode` in the outcome-averaged output.
    pub fn p_variance(&self, mode: usize) -> f64 {
        let m = self.moments[mode];
        m[3] - m[2] * m[2]
    }
}

#[derive(Default, Clone)]
struct Partial {
    weight: f64,
    fid: f64,
    moments: Vec<[f64; 4]>,
}

fn process_slice(
    amps: Vec<C64>,
    grid: GridSpec,
    q: &[f64],
    v: &QuadraturePolynomial,
    policy: Policy,
    reference: &GridWavefunction,
) -> Result<Partial> {
    let n = reference.modes();
    let mut out = GridWavefunction::new(grid, n, amps)?;
    let weight = out.norm_sqr();
    if weight <= 0.0 {
        return Ok(Partial { weight: 0.0, fid: 0.0, moments: vec![[0.0; 4]; n] });
    }
    correct(&mut out, v, q, policy)?;
    let fid = reference.fidelity(&out)?;
    let mut moments = Vec::with_capacity(n);
    for j in 0..n {
        let (p1, p2) = out.p_moments(j)?;
        moments.push([out.x_moment(j, 1)?, out.x_moment(j, 2)?, p1, p2]);
    }
    Ok(Partial { weight, fid, moments })
}

fn accepted(policy: Policy, q: &[f64]) -> bool {
    match policy {
        Policy::Postselect { epsilon } => q.iter().all(|v| v.abs() <= epsilon + 1e-12),
        _ => true,
    }
}

/// Runs the protocol for every grid outcome and averages fidelity with the
/// ideal output `exp(-iV) input` and the output moments.
pub fn protocol_scan(
    input: &GridWavefunction,
    ancilla: &GridWavefunction,
    v: &QuadraturePolynomial,
    policy: Policy,
    scheme: Scheme,
) -> Result<ProtocolReport> {
    check_inputs(input, ancilla, v)?;
    let n = input.modes();
    let grid = *input.grid();
    let reference = apply_phase(input, v)?;
    let (partials, total_weight, leaked, resampling) = match scheme {
        Scheme::Qsg => {
            let s = coupled(input, ancilla)?;
            if s.leaked() > MEASURE_LEAK_LIMIT {
                return Err(Error::DomainTooSmall(format!("coupling leaked {:.2e}", s.leaked())));
            }
            let measured: Vec<usize> = (n..2 * n).collect();
            let split = Split::new(&s, &measured)?;
            let total: f64 = s.amplitudes().par_iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx().powi(n as i32);
            let partials: Vec<Partial> = (0..split.outcome_offsets.len())
                .into_par_iter()
                .map(|k| {
                    let q = split.q(&s, k);
                    if !accepted(policy, &q) {
                        return Ok(Partial::default());
                    }
                    let mut amps = vec![C64::new(0.0, 0.0); split.rest_offsets.len()];
                    split.gather(&s, k, &mut amps);
                    process_slice(amps, grid, &q, v, policy, &reference)
                })
                .collect::<Result<_>>()?;
            (partials, total, s.leaked(), None)
        }
        Scheme::BeamSplitter => {
            let (conds, report) = bs_conditionals(input, ancilla)?;
            let total: f64 = conds.iter().map(|c| c.weight).sum();
            let partials: Vec<Partial> = conds
                .into_par_iter()
                .map(|c| {
                    if !accepted(policy, &c.measured) {
                        return Ok(Partial::default());
                    }
                    let mut p = process_slice(c.amps, grid, &c.shift, v, policy, &reference)?;
                    // weight by the measured-bin probability, not the resampled norm
                    p.weight = c.weight;
                    Ok(p)
                })
                .collect::<Result<_>>()?;
            (partials, total, 0.0, Some(report))
        }
    };
    let mut acc_w = 0.0;
    let mut fid = 0.0;
    let mut moments = vec![[0.0; 4]; n];
    let mut outcomes = 0;
    for p in &partials {
        if p.weight <= 0.0 {
            continue;
        }
        outcomes += 1;
        acc_w += p.weight;
        fid += p.weight * p.fid;
        for (m, pm) in moments.iter_mut().zip(&p.moments) {
            for k in 0..4 {
                m[k] += p.weight * pm[k];
            }
        }
    }
    if !(acc_w > 0.0) {
        return Err(Error::ZeroProbability);
    }
    moments.iter_mut().for_each(|m| m.iter_mut().for_each(|v| *v /= acc_w));
    Ok(ProtocolReport {
        scheme,
        policy,
        fidelity: fid / acc_w,
        success_probability: acc_w / total_weight * (1.0 - leaked),
        outcomes,
        leaked,
        moments,
        resampling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `sum_j Var(p_Aj + dV/dx_Aj)` on the ancilla
    pub value: f64,
    /// excess output p variance of the protocol on a vacuum input
    pub protocol_excess: f64,
}

pub const AUDIT_TOL: f64 = 1e-3;

/// Noise added by the ancilla, evaluated directly on the ancilla and checked
/// against the protocol run on a vacuum input.
pub fn heisenberg_noise_audit(ancilla: &GridWavefunction, v: &QuadraturePolynomial) -> Result<AuditReport> {
    v.require_x_only()?;
    let n = ancilla.modes();
    if v.modes() != n {
        return Err(Error::BasisMismatch("gate and ancilla differ in mode count".into()));
    }
    v.require_x_only()?;
    let mut value = 0.0;
    for j in 0..n {
        value += ancilla.nonlinear_p_variance(j, &v.derivative_x(j))?;
    }
    let grid = *ancilla.grid();
    let vacuum =
        GridWavefunction::from_fn(grid, n, |x| C64::new(x.iter().map(|t| (-0.5 * t * t).exp()).product(), 0.0))?
            .normalized()?;
    let report = protocol_scan(&vacuum, ancilla, v, Policy::Feedforward, Scheme::Qsg)?;
    let ideal = apply_phase(&vacuum, v)?;
    let mut excess = 0.0;
    for j in 0..n {
        let (m, s) = ideal.p_moments(j)?;
        excess += report.p_variance(j) - (s - m * m);
    }
    if (excess - value).abs() > AUDIT_TOL {
        return Err(Error::Consistency(format!("ancilla noise {value:.6} differs from protocol excess {excess:.6}")));
    }
    Ok(AuditReport { value, protocol_excess: excess })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlsq::two_mode_cubic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coherent(grid: GridSpec, modes: usize, mean: f64, k: f64) -> GridWavefunction {
        GridWavefunction::from_fn(grid, modes, |x| {
            x.iter().map(|&t| C64::from_polar((-(t - mean).powi(2) / 2.0).exp(), k * t)).product()
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    fn boxed(g: GridSpec, half: f64, f: impl Fn(&[f64]) -> C64 + Sync) -> GridWavefunction {
        GridWavefunction::from_fn(g, 2, |x| if x.iter().all(|t| t.abs() <= half) { f(x) } else { C64::new(0.0, 0.0) })
            .unwrap()
            .normalized()
            .unwrap()
    }

    #[test]
    fn trivial_gate_with_flat_ancilla_is_identity() {
        // the ancilla is flat over x + q whenever |q| <= 1.5
        let g = GridSpec::new(32, 8.0).unwrap();
        let input = boxed(g, 1.0, |x| C64::new(1.0 + 0.1 * x[0], 0.2 * x[1]));
        let ancilla = boxed(g, 2.5, |_| C64::new(1.0, 0.0));
        let v = QuadraturePolynomial::zero(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (out, o) = run_protocol(&input, &ancilla, &v, Policy::Postselect { epsilon: 1.5 }, &mut rng).unwrap();
        assert!(o.q.iter().all(|q| q.abs() <= 1.5));
        let err = out.amplitudes().iter().zip(input.amplitudes()).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn flat_ideal_ancilla_gives_exact_gate() {
        let g = GridSpec::new(32, 8.0).unwrap();
        let v = two_mode_cubic(0.3);
        let input = boxed(g, 1.0, |x| C64::new(1.0 + 0.1 * x[0], 0.2 * x[1]));
        let mut ancilla = boxed(g, 2.5, |_| C64::new(1.0, 0.0));
        apply_phase_in_place(&mut ancilla, &v, -1.0).unwrap();
        let ideal = apply_phase(&input, &v).unwrap();
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ff, o) = run_protocol(&input, &ancilla, &v, Policy::Feedforward, &mut rng).unwrap();
            if o.q.iter().all(|q| q.abs() <= 1.5) {
                assert!((ideal.fidelity(&ff).unwrap() - 1.0).abs() < 1e-12);
            }
        }
        // without correction only q = 0 is exact
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (out, o) = run_protocol(&input, &ancilla, &v, Policy::Postselect { epsilon: 0.0 }, &mut rng).unwrap();
        assert_eq!(o.q, vec![0.0, 0.0]);
        assert!((ideal.fidelity(&out).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_ancilla_audit_matches_formula() {
        let g = GridSpec::new(32, 10.0).unwrap();
        let k = 0.3;
        let v = two_mode_cubic(k);
        let vac = coherent(g, 2, 0.0, 0.0);
        let a = heisenberg_noise_audit(&vac, &v).unwrap();
        assert!((a.value - (1.0 + 1.5 * k * k)).abs() < 1e-6, "{a:?}");
    }

    #[test]
    fn fidelity_grows_with_envelope() {
        let g = GridSpec::new(32, 16.0).unwrap();
        let v = QuadraturePolynomial::x(1, 0).pow(3).scale(0.1);
        let input = coherent(g, 1, 0.5, 0.0);
        let mut last = 0.0;
        for s in [1.0, 2.0, 4.0] {
            let a = ideal_ancilla(g, &v, EnvelopeSpec::new(s)).unwrap();
            let r = protocol_scan(&input, &a, &v, Policy::Feedforward, Scheme::Qsg).unwrap();
            assert!(r.fidelity > last);
            last = r.fidelity;
        }
        assert!(last > 0.98);
    }
}
