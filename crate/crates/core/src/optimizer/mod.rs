//! Multistart quasi-Newton search for optimal non-Gaussian cores and their
//! Gaussian processing.

mod ansatz;
pub mod bfgs;
pub mod gauge;
mod search;

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use ansatz::{canonical_phase, AnsatzSpec, CoreState, Family, Processing};
pub use gauge::{align, wrap_angle, Aligned};
pub use search::{multistart, start_point, Best, CoreLayout, Decoded, GaussLayout, OpsCache, Search};

use crate::error::{Error, Result};
use crate::nlsq::{gaussian_benchmark, two_mode_cubic, VarianceFunctional};
use crate::quadpoly::GaussianParams;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for LambdaBounds {
    fn default() -> Self {
        Self { min: 0.05, max: 20.0 }
    }
}

impl LambdaBounds {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.min && lambda <= self.max
    }

    /// Some squeezing parameter sits within 0.1% of a bound.
    pub fn is_hit(&self, g: &GaussianParams) -> bool {
        [g.lambda1, g.lambda2].iter().any(|&l| l <= self.min * 1.001 || l >= self.max / 1.001)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub grad_step: f64,
    /// relative objective change at which a local search counts as converged
    pub tol: f64,
    /// gradient infinity norm at which a local search counts as converged
    pub grad_tol: f64,
    pub bounds: LambdaBounds,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 2000,
            seed: 0,
            max_iters: 500,
            grad_step: 1e-6,
            tol: 1e-12,
            grad_tol: 1e-7,
            bounds: LambdaBounds::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn with_starts(mut self, starts: usize) -> Self {
        self.starts = starts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::InvalidParameter("starts must be >= 1".into()));
        }
        if !(self.grad_step > 0.0 && self.tol > 0.0 && self.grad_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances and gradient step must be positive".into()));
        }
        if !(self.bounds.min > 0.0 && self.bounds.min < self.bounds.max && self.bounds.max.is_finite()) {
            return Err(Error::InvalidParameter("need 0 < lambda_min < lambda_max".into()));
        }
        Ok(())
    }

    /// Settings for the Gaussian benchmark that accompanies a search: the
    /// benchmark landscape has four parameters and few distinct minima.
    pub fn benchmark(&self) -> Self {
        Self { starts: self.starts.clamp(8, 32), ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub schema_version: u32,
    pub kappa: f64,
    pub v_ng: f64,
    pub v_g: f64,
    pub r_v: f64,
    pub i1: f64,
    pub i2: f64,
    pub seed: u64,
    pub starts: usize,
    pub converged_starts: usize,
    /// Fock levels per mode of the core.
    pub truncation: Vec<usize>,
    pub wall_time_s: f64,
    pub bound_hit: bool,
    pub ansatz: AnsatzSpec,
    pub gaussian: GaussianParams,
    /// Normalized two-mode amplitudes as (re, im), mode 1 index slowest.
    pub core: Vec<[f64; 2]>,
    /// Normalized single-mode factors for product cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<Vec<[f64; 2]>>>,
}

fn pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

fn unpairs(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|p| C64::new(p[0], p[1])).collect()
}

impl OptimizationRecord {
    pub fn core_state(&self) -> CoreState {
        match &self.factors {
            Some(f) if f.len() == 2 => CoreState::Factorized(unpairs(&f[0]), unpairs(&f[1])),
            _ => CoreState::Entangled {
                dims: (self.ansatz.dims.0 + 1, self.ansatz.dims.1 + 1),
                amps: unpairs(&self.core),
            },
        }
    }

    /// Checks the stored ratio and normalization.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != RECORD_SCHEMA_VERSION {
            return Err(Error::Consistency(format!("unsupported schema version {}", self.schema_version)));
        }
        if (self.r_v - self.v_ng / self.v_g).abs() > 1e-10 * self.r_v.abs().max(1.0) {
            return Err(Error::Consistency("r_v differs from v_ng / v_g".into()));
        }
        let norm: f64 = self.core.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Consistency(format!("core norm {norm}")));
        }
        Ok(())
    }
}

fn functional_for(spec: &AnsatzSpec, kappa: f64) -> Result<Arc<VarianceFunctional>> {
    Ok(Arc::new(VarianceFunctional::new(&two_mode_cubic(kappa), &spec.core_basis())?))
}

/// Variance of the normalized core built from public parameters: core
/// coefficients (as the ansatz lays them out) followed by `theta` for passive
/// processing or `(theta1, lambda1, lambda2, theta2)` for full processing.
pub fn objective(params: &[f64], ansatz: &AnsatzSpec, kappa: f64) -> Result<f64> {
    objective_with_bounds(params, ansatz, kappa, LambdaBounds::default())
}

pub fn objective_with_bounds(params: &[f64], ansatz: &AnsatzSpec, kappa: f64, bounds: LambdaBounds) -> Result<f64> {
    let search = Search::for_ansatz(functional_for(ansatz, kappa)?, ansatz, bounds)?;
    if params.len() != search.dim() {
        return Err(Error::InvalidParameter(format!("expected {} parameters, got {}", search.dim(), params.len())));
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite parameter".into()));
    }
    let k = search.core_len();
    let decoded = search.decode(params)?;
    let g = match ansatz.processing {
        Processing::Passive => decoded.gaussian,
        Processing::Full => {
            let g = GaussianParams {
                theta1: params[k],
                lambda1: params[k + 1],
                lambda2: params[k + 2],
                theta2: params[k + 3],
            };
            for l in [g.lambda1, g.lambda2] {
                if !bounds.contains(l) {
                    return Err(Error::InvalidParameter(format!(
                        "lambda {l} outside [{}, {}]",
                        bounds.min, bounds.max
                    )));
                }
            }
            g
        }
    };
    let f = search.functional();
    let ops = f.prepare(&g.transform()?)?;
    Ok(f.evaluate(&ops, &decoded.amps)?.total)
}

/// Gauge-fixed record of a search result, with the benchmark attached.
pub(crate) fn make_record(
    search: &Search,
    ansatz: &AnsatzSpec,
    kappa: f64,
    config: &OptimizerConfig,
    best: &Best,
    started: Instant,
) -> Result<OptimizationRecord> {
    let d = search.decode(&best.x)?;
    let core = match d.factors {
        Some(f) => f.canonical(),
        None => CoreState::Entangled { dims: (ansatz.dims.0 + 1, ansatz.dims.1 + 1), amps: d.amps }.canonical(),
    };
    let mut g = d.gaussian;
    // representative with lambda1 <= lambda2 (quarter-turn gauge)
    if ansatz.processing == Processing::Full && g.lambda1 > g.lambda2 {
        g = GaussianParams {
            theta1: g.theta1 - std::f64::consts::FRAC_PI_2,
            lambda1: g.lambda2,
            lambda2: g.lambda1,
            theta2: g.theta2 + std::f64::consts::FRAC_PI_2,
        };
    }
    g.theta1 = wrap_angle(g.theta1);
    g.theta2 = wrap_angle(g.theta2);
    let bench = gaussian_benchmark(kappa, &config.benchmark())?;
    let v_g = bench.report.total;
    let (i1, i2) = g.invariants(kappa);
    let mut tensor = core.tensor();
    let n = tensor.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    tensor.iter_mut().for_each(|c| *c /= n);
    Ok(OptimizationRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        kappa,
        v_ng: best.f,
        v_g,
        r_v: best.f / v_g,
        i1,
        i2,
        seed: config.seed,
        starts: config.starts,
        converged_starts: best.converged_starts,
        truncation: vec![ansatz.dims.0 + 1, ansatz.dims.1 + 1],
        wall_time_s: started.elapsed().as_secs_f64(),
        bound_hit: ansatz.processing == Processing::Full && config.bounds.is_hit(&g),
        ansatz: *ansatz,
        gaussian: g,
        core: pairs(&tensor),
        factors: match &core {
            CoreState::Factorized(a, b) => Some(vec![pairs(a), pairs(b)]),
            CoreState::Entangled { .. } => None,
        },
    })
}

fn minimize_from(
    ansatz: &AnsatzSpec,
    kappa: f64,
    config: &OptimizerConfig,
    extra: &[Vec<f64>],
) -> Result<(OptimizationRecord, Vec<f64>)> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
    }
    config.validate()?;
    let started = Instant::now();
    let search = Search::for_ansatz(functional_for(ansatz, kappa)?, ansatz, config.bounds)?;
    let best = multistart(&search, config, extra)?;
    let record = make_record(&search, ansatz, kappa, config, &best, started)?;
    Ok((record, best.x))
}

/// Best converged record over `config.starts` seeded local searches.
pub fn minimize(ansatz: &AnsatzSpec, kappa: f64, config: &OptimizerConfig) -> Result<OptimizationRecord> {
    Ok(minimize_from(ansatz, kappa, config, &[])?.0)
}

/// Like [`minimize`], with additional starts placed at known points.
pub fn minimize_seeded(
    ansatz: &AnsatzSpec,
    kappa: f64,
    config: &OptimizerConfig,
    seeds: &[(CoreState, GaussianParams)],
) -> Result<OptimizationRecord> {
    let search = Search::for_ansatz(functional_for(ansatz, kappa)?, ansatz, config.bounds)?;
    let extra = seeds.iter().map(|(c, g)| search.encode(c, g)).collect::<Result<Vec<_>>>()?;
    Ok(minimize_from(ansatz, kappa, config, &extra)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub kappa: f64,
    pub r_v: f64,
    /// local minimum of the sampled curve
    pub minimum: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<OptimizationRecord>,
    pub curve: Vec<CurvePoint>,
}

/// Minimizes at each kappa in order, warm-starting from the previous optimum.
pub fn sweep(ansatz: &AnsatzSpec, kappas: &[f64], config: &OptimizerConfig) -> Result<SweepResult> {
    if kappas.is_empty() {
        return Err(Error::InvalidParameter("no kappa values to sweep".into()));
    }
    let mut records = Vec::with_capacity(kappas.len());
    let mut warm: Vec<Vec<f64>> = Vec::new();
    for &k in kappas {
        let (rec, x) = minimize_from(ansatz, k, config, &warm)?;
        records.push(rec);
        warm = vec![x];
    }
    let r: Vec<f64> = records.iter().map(|r| r.r_v).collect();
    let curve = (0..r.len())
        .map(|i| {
            let left = i == 0 || r[i] < r[i - 1];
            let right = i + 1 == r.len() || r[i] <= r[i + 1];
            CurvePoint { kappa: kappas[i], r_v: r[i], minimum: r.len() > 1 && left && right }
        })
        .collect();
    Ok(SweepResult { records, curve })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantViolation {
    pub first: usize,
    pub second: usize,
    pub quantity: &'static str,
    pub values: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvariantReport {
    pub pairs_checked: usize,
    pub violations: Vec<InvariantViolation>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        let list: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("records {} and {}: {} {} vs {}", v.first, v.second, v.quantity, v.values.0, v.values.1))
            .collect();
        Err(Error::Consistency(list.join("; ")))
    }
}

pub const INVARIANT_TOL: f64 = 2e-2;

/// Compares scaling invariants and gauge-aligned cores across records of one
/// full-processing ansatz.
pub fn check_invariants(records: &[OptimizationRecord]) -> Result<InvariantReport> {
    let Some(first) = records.first() else {
        return Err(Error::InvalidParameter("no records to compare".into()));
    };
    if records.iter().any(|r| r.ansatz != first.ansatz) {
        return Err(Error::InvalidParameter("records use different ansatzes".into()));
    }
    if first.ansatz.processing != Processing::Full {
        return Err(Error::InvalidParameter("scaling invariants need full Gaussian processing".into()));
    }
    let quantities = |r: &OptimizationRecord| -> [(&'static str, f64); 5] {
        let g = &r.gaussian;
        [
            ("I1", r.kappa / (g.lambda1 * g.lambda1 * g.lambda2)),
            ("I2", r.kappa / (g.lambda1 * g.lambda2 * g.lambda2)),
            ("lambda1/lambda2", g.lambda1 / g.lambda2),
            ("kappa/lambda1^3", r.kappa / g.lambda1.powi(3)),
            ("kappa/lambda2^3", r.kappa / g.lambda2.powi(3)),
        ]
    };
    let mut report = InvariantReport::default();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            report.pairs_checked += 1;
            let (ci, cj) = (records[i].core_state(), records[j].core_state());
            let al = align((&ci, &records[i].gaussian), (&cj, &records[j].gaussian), Processing::Full);
            let aligned = OptimizationRecord { gaussian: al.gaussian, ..records[j].clone() };
            let (qa, qb) = (quantities(&records[i]), quantities(&aligned));
            for ((name, a), (_, b)) in qa.iter().zip(qb.iter()) {
                let scale = a.abs().max(b.abs());
                if scale > 0.0 && (a - b).abs() / scale > INVARIANT_TOL {
                    report.violations.push(InvariantViolation {
                        first: i,
                        second: j,
                        quantity: name,
                        values: (*a, *b),
                    });
                }
            }
            if al.core_distance > INVARIANT_TOL {
                report.violations.push(InvariantViolation {
                    first: i,
                    second: j,
                    quantity: "core",
                    values: (0.0, al.core_distance),
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> OptimizerConfig {
        OptimizerConfig::default().with_starts(6).with_seed(7)
    }

    #[test]
    fn objective_vacuum_and_invariances() {
        let spec = AnsatzSpec::factorized(1, 1, Processing::Full);
        // core: (1, 0) x (1, 0); gaussian identity
        let mut p = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let v = objective(&p, &spec, 0.3).unwrap();
        assert!((v - 1.135).abs() < 1e-12);

        p[..8].copy_from_slice(&[0.7, 0.1, 0.2, -0.5, 0.3, 0.4, -0.6, 0.2]);
        p[8..].copy_from_slice(&[0.4, 1.3, 0.8, -0.2]);
        let base = objective(&p, &spec, 0.3).unwrap();
        let mut scaled = p.clone();
        scaled[..8].iter_mut().for_each(|v| *v *= 2.0);
        assert!((objective(&scaled, &spec, 0.3).unwrap() - base).abs() < 1e-12);
        // global phase on the first factor
        let ph = C64::from_polar(1.0, 1.1);
        let mut rotated = p.clone();
        for k in 0..2 {
            let z = C64::new(p[2 * k], p[2 * k + 1]) * ph;
            rotated[2 * k] = z.re;
            rotated[2 * k + 1] = z.im;
        }
        assert!((objective(&rotated, &spec, 0.3).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_out_of_bounds_lambda() {
        let spec = AnsatzSpec::factorized(0, 0, Processing::Full);
        assert!(objective(&[0.0, 0.01, 1.0, 0.0], &spec, 0.3).is_err());
        assert!(objective(&[0.0, 1.0, 1.0], &spec, 0.3).is_err());
    }

    #[test]
    fn minimize_is_deterministic() {
        let spec = AnsatzSpec::simplified(1, 0);
        let a = minimize(&spec, 0.46, &quick()).unwrap();
        let b = minimize(&spec, 0.46, &quick()).unwrap();
        assert_eq!(a.core, b.core);
        assert_eq!(a.gaussian, b.gaussian);
        assert!(a.r_v < 0.95);
        a.validate().unwrap();
    }

    #[test]
    fn invariant_check_algebra() {
        let spec = AnsatzSpec::factorized(1, 0, Processing::Full);
        let rec = |kappa: f64, l1: f64, l2: f64| OptimizationRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            kappa,
            v_ng: 1.0,
            v_g: 1.0,
            r_v: 1.0,
            i1: 0.0,
            i2: 0.0,
            seed: 0,
            starts: 1,
            converged_starts: 1,
            truncation: vec![2, 1],
            wall_time_s: 0.0,
            bound_hit: false,
            ansatz: spec,
            gaussian: GaussianParams { theta1: 1.0, lambda1: l1, lambda2: l2, theta2: 0.0 },
            core: vec![[0.8, 0.0], [0.0, 0.6]],
            factors: Some(vec![vec![[0.8, 0.0], [0.0, 0.6]], vec![[1.0, 0.0]]]),
        };
        let single = check_invariants(&[rec(0.3, 1.0, 1.2)]).unwrap();
        assert!(single.passed() && single.pairs_checked == 0);
        let ok = check_invariants(&[rec(0.1, 1.0, 1.5), rec(0.8, 2.0, 3.0)]).unwrap();
        assert!(ok.passed(), "{ok:?}");
        let bad = check_invariants(&[rec(0.1, 1.0, 1.5), rec(0.8, 1.0, 1.5)]).unwrap();
        assert!(!bad.passed());
        assert!(bad.into_result().is_err());
    }
}
