//! Finite-key extractable length.

use super::entropy::h;
use crate::error::{Error, Result};

pub const DEFAULT_EPS_COR: f64 = 1e-15;
pub const DEFAULT_EPS_SEC: f64 = 1e-10;

/// Security parameters. `ε_sec = ε' + ε̂ + ε_PA + ε_PE`; `ε_PE` is shared by
/// the statistical estimates in the decoy analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSet {
    pub cor: f64,
    pub prime: f64,
    pub hat: f64,
    pub pa: f64,
    pub pe: f64,
}

impl Default for EpsilonSet {
    fn default() -> Self {
        Self::split_equally(DEFAULT_EPS_SEC, DEFAULT_EPS_COR)
    }
}

impl EpsilonSet {
    pub fn split_equally(eps_sec: f64, eps_cor: f64) -> Self {
        Self::split(eps_sec, eps_cor, [0.25; 4])
    }

    /// Splits `eps_sec` by the given weights (normalised) over ε', ε̂, ε_PA, ε_PE.
    pub fn split(eps_sec: f64, eps_cor: f64, weights: [f64; 4]) -> Self {
        let total: f64 = weights.iter().sum();
        let w = weights.map(|x| eps_sec * x / total);
        Self {
            cor: eps_cor,
            prime: w[0],
            hat: w[1],
            pa: w[2],
            pe: w[3],
        }
    }

    pub fn sec(&self) -> f64 {
        self.prime + self.hat + self.pa + self.pe
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ε_cor", self.cor),
            ("ε'", self.prime),
            ("ε̂", self.hat),
            ("ε_PA", self.pa),
            ("ε_PE", self.pe),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!("{name} = {v} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Total penalty `log2(8/ε_cor) + 2·log2(2/(ε'ε̂)) + 2·log2(1/(2ε_PA))`.
    pub fn penalty_bits(&self) -> f64 {
        (8.0 / self.cor).log2() + 2.0 * (2.0 / (self.prime * self.hat)).log2() + 2.0 * (1.0 / (2.0 * self.pa)).log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteKeyResult {
    pub n0_lower: f64,
    pub n1_lower: f64,
    pub e1_upper: f64,
    pub leak_ec: f64,
    /// Extractable key length in bits.
    pub l: u64,
}

impl FiniteKeyResult {
    pub fn zero() -> Self {
        Self {
            n0_lower: 0.0,
            n1_lower: 0.0,
            e1_upper: 0.5,
            leak_ec: 0.0,
            l: 0,
        }
    }
}

/// Unclamped right-hand side of the key-length bound.
pub fn key_length_bound(n0: f64, n1: f64, e1: f64, leak_ec: f64, eps: &EpsilonSet) -> f64 {
    n0 + n1 * (1.0 - h(e1)) - leak_ec - eps.penalty_bits()
}

/// `l = max(0, ⌊n0 + n1(1 − h(e1)) − leak_EC − log2(8/ε_cor) − 2log2(2/(ε'ε̂)) − 2log2(1/(2ε_PA))⌋)`.
pub fn finite_key_length(n0: f64, n1: f64, e1: f64, leak_ec: f64, eps: &EpsilonSet) -> Result<u64> {
    if !(n0 >= 0.0 && n1 >= 0.0 && n0.is_finite() && n1.is_finite()) {
        return Err(Error::Domain(format!("event counts n0 = {n0}, n1 = {n1}")));
    }
    if !(0.0..=0.5).contains(&e1) {
        return Err(Error::Domain(format!("phase error e1 = {e1} outside [0, 0.5]")));
    }
    if !(leak_ec >= 0.0 && leak_ec.is_finite()) {
        return Err(Error::Domain(format!("leak_EC = {leak_ec}")));
    }
    eps.validate().map_err(|e| Error::Domain(e.to_string()))?;
    let rhs = key_length_bound(n0, n1, e1, leak_ec, eps);
    Ok(if rhs <= 0.0 { 0 } else { rhs.floor() as u64 })
}
