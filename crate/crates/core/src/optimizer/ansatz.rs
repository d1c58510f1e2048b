use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Product core behind a single beam splitter.
    Simplified,
    Factorized,
    Entangled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Processing {
    /// One beam splitter `U_BS(theta)`.
    Passive,
    /// `U_BS(theta2) S1(lambda1) S2(lambda2) U_BS(theta1)`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub family: Family,
    /// Highest Fock level on each mode of the core.
    pub dims: (usize, usize),
    pub processing: Processing,
    /// Restrict coefficients to `i^(n1+n2)` times a real number.
    #[serde(default)]
    pub real_up_to_phase: bool,
    /// Restrict to cores symmetric under mode exchange.
    #[serde(default)]
    pub exchange_symmetric: bool,
}

impl AnsatzSpec {
    pub fn simplified(m: usize, n: usize) -> Self {
        Self::build(Family::Simplified, m, n, Processing::Passive)
    }

    pub fn factorized(m: usize, n: usize, processing: Processing) -> Self {
        Self::build(Family::Factorized, m, n, processing)
    }

    pub fn entangled(m: usize, n: usize, processing: Processing) -> Self {
        Self::build(Family::Entangled, m, n, processing)
    }

    fn build(family: Family, m: usize, n: usize, processing: Processing) -> Self {
        Self { family, dims: (m, n), processing, real_up_to_phase: false, exchange_symmetric: false }
    }

    pub fn with_real_up_to_phase(mut self, on: bool) -> Self {
        self.real_up_to_phase = on;
        self
    }

    pub fn with_exchange_symmetry(mut self, on: bool) -> Self {
        self.exchange_symmetric = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == Family::Simplified && self.processing != Processing::Passive {
            return Err(Error::InvalidParameter("simplified ansatz admits passive processing only".into()));
        }
        if self.exchange_symmetric && self.dims.0 != self.dims.1 {
            return Err(Error::InvalidParameter("exchange symmetry needs equal core dimensions".into()));
        }
        Ok(())
    }

    pub fn is_factorized(&self) -> bool {
        self.family != Family::Entangled
    }

    /// Core basis with levels `0..=M` and `0..=N`.
    pub fn core_basis(&self) -> FockBasis {
        FockBasis::new(vec![self.dims.0 + 1, self.dims.1 + 1], 0).expect("nonzero dims")
    }

    pub fn gaussian_len(&self) -> usize {
        match self.processing {
            Processing::Passive => 1,
            Processing::Full => 4,
        }
    }
}

impl fmt::Display for AnsatzSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::Simplified => "simplified",
            Family::Factorized => "factorized",
            Family::Entangled => "entangled",
        };
        let proc = match self.processing {
            Processing::Passive => "passive",
            Processing::Full => "full",
        };
        write!(f, "{fam}({},{})/{proc}", self.dims.0, self.dims.1)?;
        if self.real_up_to_phase {
            write!(f, "+real")?;
        }
        if self.exchange_symmetric {
            write!(f, "+sym")?;
        }
        Ok(())
    }
}

/// Non-Gaussian core, either a product of two single-mode states or a
/// general two-mode superposition (mode 1 index slowest).
#[derive(Debug, Clone, PartialEq)]
pub enum CoreState {
    Factorized(Vec<C64>, Vec<C64>),
    Entangled { dims: (usize, usize), amps: Vec<C64> },
}

fn normalize(v: &mut [C64]) {
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c /= n);
    }
}

/// Rotates the first non-negligible coefficient onto the nonnegative real axis.
pub fn canonical_phase(v: &mut [C64]) {
    let max = v.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if let Some(first) = v.iter().find(|c| c.norm() > 1e-6 * max) {
        let rot = first.conj() / first.norm();
        v.iter_mut().for_each(|c| *c *= rot);
    }
}

impl CoreState {
    /// Level counts `(M+1, N+1)`.
    pub fn level_counts(&self) -> (usize, usize) {
        match self {
            CoreState::Factorized(a, b) => (a.len(), b.len()),
            CoreState::Entangled { dims, .. } => *dims,
        }
    }

    pub fn tensor(&self) -> Vec<C64> {
        match self {
            CoreState::Factorized(a, b) => a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect(),
            CoreState::Entangled { amps, .. } => amps.clone(),
        }
    }

    pub fn basis(&self) -> FockBasis {
        let (a, b) = self.level_counts();
        FockBasis::new(vec![a, b], 0).expect("nonzero dims")
    }

    /// Normalized (per factor) with the canonical gauge applied.
    pub fn canonical(&self) -> Self {
        let mut s = self.clone();
        s.for_each_factor(|v| {
            normalize(v);
            canonical_phase(v);
        });
        s
    }

    pub(crate) fn for_each_factor(&mut self, mut f: impl FnMut(&mut Vec<C64>)) {
        match self {
            CoreState::Factorized(a, b) => {
                f(a);
                f(b);
            }
            CoreState::Entangled { amps, .. } => f(amps),
        }
    }

    /// Applies `(-1)^(s1 n1 + s2 n2)`.
    pub fn parity(&self, s1: bool, s2: bool) -> Self {
        let sign = |n: usize, on: bool| if on && n % 2 == 1 { -1.0 } else { 1.0 };
        match self {
            CoreState::Factorized(a, b) => CoreState::Factorized(
                a.iter().enumerate().map(|(n, c)| c * sign(n, s1)).collect(),
                b.iter().enumerate().map(|(n, c)| c * sign(n, s2)).collect(),
            ),
            CoreState::Entangled { dims, amps } => CoreState::Entangled {
                dims: *dims,
                amps: amps.iter().enumerate().map(|(k, c)| c * sign(k / dims.1, s1) * sign(k % dims.1, s2)).collect(),
            },
        }
    }

    pub fn conj(&self) -> Self {
        let mut s = self.clone();
        s.for_each_factor(|v| v.iter_mut().for_each(|c| *c = c.conj()));
        s
    }

    /// Flat list of coefficients; factors are concatenated.
    pub fn coefficients(&self) -> Vec<C64> {
        match self {
            CoreState::Factorized(a, b) => a.iter().chain(b).copied().collect(),
            CoreState::Entangled { amps, .. } => amps.clone(),
        }
    }

    /// Largest deviation of the coefficients from `i^n` times a real number.
    pub fn phase_pattern_residual(&self) -> f64 {
        let c = self.canonical();
        let dev = |n: usize, z: &C64| {
            let rot = match n % 4 {
                0 => *z,
                1 => z * C64::new(0.0, -1.0),
                2 => -z,
                _ => z * C64::new(0.0, 1.0),
            };
            rot.im.abs()
        };
        match &c {
            CoreState::Factorized(a, b) => {
                a.iter().enumerate().chain(b.iter().enumerate()).fold(0.0f64, |m, (n, z)| m.max(dev(n, z)))
            }
            CoreState::Entangled { dims, amps } => {
                amps.iter().enumerate().fold(0.0f64, |m, (k, z)| m.max(dev(k / dims.1 + k % dims.1, z)))
            }
        }
    }

    /// Largest difference between the core and its mode-swapped image.
    pub fn exchange_residual(&self) -> f64 {
        let (a, b) = self.level_counts();
        if a != b {
            return f64::INFINITY;
        }
        let mut t = self.tensor();
        normalize(&mut t);
        let mut worst = 0.0f64;
        for i in 0..a {
            for j in 0..b {
                worst = worst.max((t[i * b + j] - t[j * b + i]).norm());
            }
        }
        worst
    }
}
