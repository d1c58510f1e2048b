//! Acceptance criteria 1-10. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;
use std::time::Instant;

use cvgate::cubic::{cubic_pair_limit, pair_exponent, reduced_strength, single_cubic_scenario, CubicLimitConfig};
use cvgate::fock::{polynomial_operator, FockBasis, KetVector};
use cvgate::gridsim::{
    gaussian_state_to_grid, heisenberg_noise_audit, ideal_ancilla, protocol_scan, EnvelopeSpec, GridSpec,
    GridWavefunction, Policy, Scheme,
};
use cvgate::nlsq::{nonlinear_variance, two_mode_cubic, VarianceFunctional};
use cvgate::optimizer::{
    align, bfgs::central_gradient, check_invariants, minimize, start_point, AnsatzSpec, CoreState, LambdaBounds,
    OptimizationRecord, OptimizerConfig, Processing, Search,
};
use cvgate::quadpoly::{shift_polynomial, QuadraturePolynomial, SymplecticTransform};
use cvgate_cli::appendix_b::{check_entry, entries, EntryCheck};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STARTS: usize = 200;
const SWEEP_STARTS: usize = 48;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn config(starts: usize) -> OptimizerConfig {
    OptimizerConfig::default().with_starts(starts).with_seed(0)
}

struct Table {
    checks: Vec<(EntryCheck, OptimizationRecord)>,
    seconds: f64,
}

fn appendix_table() -> cvgate::Result<Table> {
    let started = Instant::now();
    let cfg = config(STARTS);
    let checks = entries().iter().map(|e| check_entry(e, &cfg)).collect::<cvgate::Result<Vec<_>>>()?;
    Ok(Table { checks, seconds: started.elapsed().as_secs_f64() })
}

fn criterion1(t: &Table) -> Outcome {
    let (c, _) = &t.checks[0];
    let rel = (c.found_variance - c.tabulated_variance).abs() / c.tabulated_variance;
    let ok = rel <= 0.01 && (c.r_v - 0.94).abs() <= 0.02 && c.seconds <= 120.0;
    outcome(ok, format!("V_found/V_table-1 = {rel:.2e}, R_V = {:.4} (0.94 +- 0.02), {:.1}s", c.r_v, c.seconds))
}

fn criterion2(t: &Table) -> Outcome {
    let (c, rec) = &t.checks[2];
    let al = align(
        (&entries()[2].core.canonical(), &entries()[2].gaussian),
        (&rec.core_state(), &rec.gaussian),
        Processing::Passive,
    );
    let coeffs: Vec<String> = match &al.core {
        CoreState::Factorized(a, _) => a.iter().map(|z| format!("{:.3}", z.norm())).collect(),
        CoreState::Entangled { .. } => vec![],
    };
    let theta_ok =
        (rec.gaussian.theta1.abs() - FRAC_PI_4).abs() <= 0.02 || (al.gaussian.theta1 - FRAC_PI_4).abs() <= 0.02;
    let ok = al.core_distance <= 0.02 && theta_ok && (c.r_v - 0.84).abs() <= 0.02 && c.seconds <= 300.0;
    outcome(
        ok,
        format!(
            "theta = {:.4}, |coefficients| = ({}), d_core = {:.4}, R_V = {:.4} (0.84 +- 0.02), {:.1}s",
            al.gaussian.theta1,
            coeffs.join(", "),
            al.core_distance,
            c.r_v,
            c.seconds
        ),
    )
}

fn criterion3(t: &Table) -> Outcome {
    let failed: Vec<String> = t
        .checks
        .iter()
        .filter(|(c, _)| !c.passed())
        .map(|(c, _)| {
            format!(
                "{} (V_table {:.5} vs V_found {:.5}, d_core {:.3}, d_param {:.3})",
                c.label, c.tabulated_variance, c.found_variance, c.core_distance, c.param_distance
            )
        })
        .collect();
    let ok = failed.is_empty() && t.seconds <= 1800.0;
    let detail = if failed.is_empty() {
        format!("8/8 entries within tolerance, {:.1}s", t.seconds)
    } else {
        format!("{}/8 within tolerance, {:.1}s; outside: {}", 8 - failed.len(), t.seconds, failed.join("; "))
    };
    outcome(ok, detail)
}

fn criterion4() -> cvgate::Result<Outcome> {
    let spec = AnsatzSpec::entangled(1, 1, Processing::Full);
    let cfg = config(STARTS);
    let records = [0.2, 0.3, 0.4].iter().map(|&k| minimize(&spec, k, &cfg)).collect::<cvgate::Result<Vec<_>>>()?;
    let report = check_invariants(&records)?;
    let primary: Vec<_> = report.violations.iter().filter(|v| v.quantity == "I1" || v.quantity == "I2").collect();
    let values: Vec<String> = records.iter().map(|r| format!("({:.4}, {:.4})", r.i1, r.i2)).collect();
    Ok(outcome(
        primary.is_empty(),
        format!(
            "(I1, I2) at kappa 0.2/0.3/0.4: {}; {} other invariant flags",
            values.join(" "),
            report.violations.len() - primary.len()
        ),
    ))
}

fn criterion5() -> cvgate::Result<Outcome> {
    // geometric scan of the cubic strength of |gamma_10>, 0.02 to about 0.5
    let strengths: Vec<f64> = (0..24).map(|i| 0.02 * 1.15f64.powi(i)).collect();
    let r = single_cubic_scenario(10, 0.5, &strengths, &config(24))?;
    Ok(outcome((0.70..=0.72).contains(&r.r_v), format!("N=10: R_V = {:.4} (target [0.70, 0.72])", r.r_v)))
}

fn criterion6() -> cvgate::Result<Outcome> {
    let (t, l1, l2): (f64, f64, f64) = (0.37, 0.61, 1.3);
    let tp = reduced_strength(t);
    let x1 = QuadraturePolynomial::x(2, 0);
    let x2 = QuadraturePolynomial::x(2, 1);
    let expected = &x1.pow(3).scale(2.0 * tp * l1.powi(3)) + &(&x1 * &x2.pow(2)).scale(6.0 * tp * l1 * l2 * l2);
    let identity = pair_exponent(t, l1, l2)?.approx_eq(&expected, 1e-12);

    let lambda1: Vec<f64> = (0..=36).map(|i| 2.0 - 0.05 * i as f64).collect();
    let cfg = CubicLimitConfig { t: 0.1, n: 10, lambda1, constrained: true };
    let points = cubic_pair_limit(&cfg, &config(SWEEP_STARTS))?;
    // longest strictly decreasing run from the first point, before the floor
    let mut end = 0;
    while end + 1 < points.len() && !points[end + 1].floor && points[end + 1].variance < points[end].variance {
        end += 1;
    }
    let span = points[0].lambda1 / points[end].lambda1;
    let from_one =
        points.iter().position(|p| (p.lambda1 - 1.0).abs() < 1e-9).map(|i| points[i].lambda1 / points[end].lambda1);
    Ok(outcome(
        identity && span >= 4.0,
        format!(
            "exponent identity {}; variance decreases from lambda1 = {:.2} to {:.2} ({:.2}x; {:.2}x counted from lambda1 = 1), floor {:.4}",
            if identity { "exact" } else { "violated" },
            points[0].lambda1,
            points[end].lambda1,
            span,
            from_one.unwrap_or(f64::NAN),
            points[end].variance
        ),
    ))
}

fn coherent(grid: GridSpec, modes: usize, q: f64, p: f64) -> cvgate::Result<GridWavefunction> {
    GridWavefunction::from_fn(grid, modes, |x| {
        x.iter().map(|&t| C64::from_polar((-(t - q).powi(2) / 2.0).exp(), p * t)).product()
    })?
    .normalized()
}

fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse::<f64>().ok().map(|kb| kb / 1024.0)
}

fn criterion7() -> cvgate::Result<Outcome> {
    let started = Instant::now();
    let grid = GridSpec::new(64, 32.0)?;
    let v = QuadraturePolynomial::x(2, 0).scale(0.3) * QuadraturePolynomial::x(2, 1).pow(2);
    let input = coherent(grid, 2, 0.5, 0.3)?;
    let mut fid = Vec::new();
    for std in [2.0, 4.0, 8.0] {
        let ancilla = ideal_ancilla(grid, &v, EnvelopeSpec::new(std))?;
        fid.push(protocol_scan(&input, &ancilla, &v, Policy::Feedforward, Scheme::Qsg)?.fidelity);
    }
    let secs = started.elapsed().as_secs_f64();
    let rss = peak_rss_mb();
    let ok = fid[1] > 0.99 && fid[0] < fid[1] && fid[1] < fid[2] && secs <= 600.0 && rss.is_none_or(|m| m <= 1024.0);
    Ok(outcome(
        ok,
        format!(
            "fidelity at std 2/4/8: {:.5} {:.5} {:.5} (need > 0.99 at 4; coherent-input bound 4s^2/(4s^2+1) = {:.5}), {:.0}s, peak RSS {} MB",
            fid[0],
            fid[1],
            fid[2],
            64.0 / 65.0,
            secs,
            rss.map_or("?".into(), |m| format!("{m:.0}"))
        ),
    ))
}

fn criterion8(t: &Table) -> cvgate::Result<Outcome> {
    let (_, rec) = &t.checks[0];
    let basis = rec.ansatz.core_basis();
    let amps = rec.core.iter().map(|p| C64::new(p[0], p[1])).collect();
    let ket = KetVector::new(basis, amps)?;
    let transform = rec.gaussian.transform()?;
    let gate = two_mode_cubic(rec.kappa);
    let nlsq = nonlinear_variance(&ket, &gate, &transform)?.total;
    let grid = GridSpec::new(64, 12.0)?;
    let ancilla = gaussian_state_to_grid(&ket, &transform, grid)?;
    Ok(match heisenberg_noise_audit(&ancilla, &gate) {
        Ok(a) => outcome(
            (a.value - nlsq).abs() <= 1e-3,
            format!(
                "{}: grid audit {:.6}, protocol excess {:.6}, Fock-space variance {:.6}",
                t.checks[0].0.label, a.value, a.protocol_excess, nlsq
            ),
        ),
        Err(e) => outcome(false, format!("audit error: {e}")),
    })
}

fn criterion9() -> cvgate::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = [0.0f64; 4];

    // truncation exactness: guard +5 leaves declared matrix elements unchanged
    for k in [0.3, 1.1] {
        let gate = two_mode_cubic(k);
        for g in
            [QuadraturePolynomial::p(2, 0) + gate.derivative_x(0), QuadraturePolynomial::p(2, 1) + gate.derivative_x(1)]
        {
            let sq = g.pow(2);
            let a = polynomial_operator(&sq, &FockBasis::new(vec![3, 3], 4)?)?;
            let b = polynomial_operator(&sq, &FockBasis::new(vec![3, 3], 9)?)?;
            for r in 0..a.dim() {
                for c in 0..a.dim() {
                    worst[0] = worst[0].max((a.get(r, c) - b.get(r, c)).norm());
                }
            }
        }
    }

    // analytic-free gradient check against Richardson extrapolation
    let spec = AnsatzSpec::entangled(1, 1, Processing::Full);
    let functional = Arc::new(VarianceFunctional::new(&two_mode_cubic(0.5), &spec.core_basis())?);
    let search = Search::for_ansatz(functional, &spec, LambdaBounds::default())?;
    for k in 0..4 {
        let x = start_point(&search, 9, k);
        let mut cache = None;
        let mut f = |y: &[f64]| search.value(&mut cache, y);
        let g1 = central_gradient(&mut f, &x, 1e-3)?;
        let g2 = central_gradient(&mut f, &x, 5e-4)?;
        let g0 = central_gradient(&mut f, &x, 1e-5)?;
        let scale = g0.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            let rich = (4.0 * g2[i] - g1[i]) / 3.0;
            worst[1] = worst[1].max((g0[i] - rich).abs() / scale);
        }
    }

    // symplectic form
    for _ in 0..20 {
        let s = SymplecticTransform::gaussian_chain(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(0.3..3.0),
            rng.gen_range(0.3..3.0),
            rng.gen_range(-3.0..3.0),
        )?;
        worst[2] = worst[2].max(s.symplectic_residual()).max(s.compose(&s.inverse()).symplectic_residual());
    }

    // F(q1 + q2)(x) = F(q1)(x + q2) + F(q2)(x)
    let v = &two_mode_cubic(0.7) + &QuadraturePolynomial::x(2, 0).pow(3).scale(0.2);
    for _ in 0..20 {
        let q1 = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let q2 = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let xs = [x[0] + q2[0], x[1] + q2[1]];
        let lhs = shift_polynomial(&v, &[q1[0] + q2[0], q1[1] + q2[1]])?.evaluate_x(&x);
        let rhs = shift_polynomial(&v, &q1)?.evaluate_x(&xs) + shift_polynomial(&v, &q2)?.evaluate_x(&x);
        worst[3] = worst[3].max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }

    let ok = worst[0] <= 1e-12 && worst[1] <= 1e-5 && worst[2] <= 1e-10 && worst[3] <= 1e-10;
    Ok(outcome(
        ok,
        format!(
            "exactness {:.1e} (1e-12), gradient {:.1e} (1e-5), symplectic {:.1e} (1e-10), cocycle {:.1e} (1e-10); randomized suite in cvgate tests",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn criterion10() -> cvgate::Result<Outcome> {
    let kappas = [0.1, 0.3, 0.5, 0.8, 1.2];
    let cfg = config(SWEEP_STARTS);
    let ansatzes = [
        AnsatzSpec::simplified(1, 0),
        AnsatzSpec::simplified(2, 0),
        AnsatzSpec::simplified(1, 1),
        AnsatzSpec::simplified(2, 2),
        AnsatzSpec::factorized(1, 0, Processing::Full),
        AnsatzSpec::factorized(2, 0, Processing::Full),
        AnsatzSpec::factorized(1, 1, Processing::Full),
        AnsatzSpec::factorized(2, 2, Processing::Full),
        AnsatzSpec::entangled(1, 1, Processing::Full),
        AnsatzSpec::entangled(2, 2, Processing::Full),
    ];
    let mut table = Vec::new();
    let mut no_dip = Vec::new();
    for spec in &ansatzes {
        let r: Vec<f64> =
            kappas.iter().map(|&k| minimize(spec, k, &cfg).map(|r| r.r_v)).collect::<cvgate::Result<_>>()?;
        if !r.iter().any(|&v| v < 1.0) {
            no_dip.push(spec.to_string());
        }
        table.push(r);
    }
    // entangled <= factorized <= single mode with vacuum, full processing
    let mut order_bad = Vec::new();
    for (n, (single, fact, ent)) in [(1, (4, 6, 8)), (2, (5, 7, 9))] {
        for (i, k) in kappas.iter().enumerate() {
            let (s, f, e) = (table[single][i], table[fact][i], table[ent][i]);
            if !(e <= f + 1e-6 && f <= s + 1e-6) {
                order_bad.push(format!("dims {n}: kappa {k} ({e:.4}, {f:.4}, {s:.4})"));
            }
        }
    }
    let min_r: Vec<String> = ansatzes
        .iter()
        .zip(&table)
        .map(|(a, r)| format!("{a} {:.3}", r.iter().cloned().fold(f64::INFINITY, f64::min)))
        .collect();
    Ok(outcome(
        no_dip.is_empty() && order_bad.is_empty(),
        format!(
            "min R_V: {}; no dip: [{}]; ordering violations: [{}]",
            min_r.join(", "),
            no_dip.join(", "),
            order_bad.join("; ")
        ),
    ))
}

fn report<E: std::fmt::Display>(n: usize, result: Result<Outcome, E>, failures: &mut usize) {
    let o = result.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    if !o.passed {
        *failures += 1;
    }
    println!("criterion {n:>2}: {}  {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failures = 0;
    let table = appendix_table().map_err(|e| e.to_string());
    let with_table = |f: &dyn Fn(&Table) -> Outcome| table.as_ref().map(f).map_err(String::clone);
    report(1, with_table(&criterion1), &mut failures);
    report(2, with_table(&criterion2), &mut failures);
    report(3, with_table(&criterion3), &mut failures);
    report(4, criterion4(), &mut failures);
    report(5, criterion5(), &mut failures);
    report(6, criterion6(), &mut failures);
    report(7, criterion7(), &mut failures);
    report(
        8,
        table.as_ref().map_err(String::clone).and_then(|t| criterion8(t).map_err(|e| e.to_string())),
        &mut failures,
    );
    report(9, criterion9(), &mut failures);
    report(10, criterion10(), &mut failures);
    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
