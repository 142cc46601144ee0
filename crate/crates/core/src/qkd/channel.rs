//! Channel and source model, and expected-value coincidence tallies.
//!
//! Gains follow the standard MDI expected-value model with phase-randomised
//! weak coherent sources, threshold detectors, per-gate dark counts and a
//! misalignment error, evaluated per (intensity, intensity, basis) setting.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use super::finite_key::EpsilonSet;
use crate::error::{Error, Result};

pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_DETECTOR_EFFICIENCY: f64 = 0.7073;
pub const DEFAULT_DARK_COUNT: f64 = 1e-7;
/// Calibrated so the Z-basis QBER at 25 km per arm is 0.83%.
pub const DEFAULT_MISALIGNMENT: f64 = 0.008_124_026;
/// Calibrated detector saturation threshold, counts per second.
pub const DEFAULT_SATURATION_CAP: f64 = 3.0e5;
pub const DEFAULT_REPETITION_RATE_HZ: f64 = 125.0e6;
/// Signal intensity at which the misalignment is calibrated.
pub const CALIBRATION_INTENSITY: f64 = 0.01;
pub const TARGET_QBER_Z: f64 = 0.0083;
pub const DEFAULT_PE_FRACTION: f64 = 0.1034;
pub const DEFAULT_F_EC: f64 = 1.41;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    fn index(self) -> usize {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// Fibre length of each arm to the relay, km.
    pub arm_km: [f64; 2],
    pub loss_db_per_km: f64,
    pub detector_efficiency: f64,
    /// Dark-count probability per gate.
    pub dark_count: f64,
    pub misalignment: f64,
    /// Detector saturation threshold in counts per second.
    pub saturation_cap: Option<f64>,
    pub repetition_rate_hz: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::symmetric(50.0)
    }
}

impl ChannelModel {
    /// Default constants with the total distance split evenly over both arms.
    pub fn symmetric(total_km: f64) -> Self {
        Self {
            arm_km: [total_km / 2.0; 2],
            loss_db_per_km: DEFAULT_LOSS_DB_PER_KM,
            detector_efficiency: DEFAULT_DETECTOR_EFFICIENCY,
            dark_count: DEFAULT_DARK_COUNT,
            misalignment: DEFAULT_MISALIGNMENT,
            saturation_cap: None,
            repetition_rate_hz: DEFAULT_REPETITION_RATE_HZ,
        }
    }

    pub fn with_total_distance(&self, total_km: f64) -> Self {
        Self {
            arm_km: [total_km / 2.0; 2],
            ..self.clone()
        }
    }

    pub fn total_km(&self) -> f64 {
        self.arm_km[0] + self.arm_km[1]
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} = {v} is not a fraction")))
            }
        };
        frac("detector efficiency", self.detector_efficiency)?;
        frac("dark count probability", self.dark_count)?;
        frac("misalignment", self.misalignment)?;
        for d in self.arm_km {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Validation(format!("arm distance {d} km")));
            }
        }
        if !(self.loss_db_per_km >= 0.0) {
            return Err(Error::Validation(format!("fibre loss {} dB/km", self.loss_db_per_km)));
        }
        if !(self.repetition_rate_hz > 0.0) {
            return Err(Error::Validation("repetition rate must be positive".into()));
        }
        if let Some(c) = self.saturation_cap {
            if !(c > 0.0) {
                return Err(Error::Validation(format!("saturation cap {c}")));
            }
        }
        Ok(())
    }

    /// Overall transmittance of one arm including detector efficiency.
    pub fn transmittance(&self, arm: usize) -> f64 {
        self.detector_efficiency * 10f64.powf(-self.loss_db_per_km * self.arm_km[arm] / 10.0)
    }

    /// Largest signal intensity the saturation cap admits, if a cap is set.
    pub fn max_signal_intensity(&self) -> Option<f64> {
        let cap = self.saturation_cap?;
        let frac = cap / self.repetition_rate_hz;
        if frac >= 1.0 {
            return None;
        }
        let eta = self.transmittance(0).max(self.transmittance(1));
        // rate · (1 − (1 − p_d) e^{−ημ}) ≤ cap
        let arg = (1.0 - frac) / (1.0 - self.dark_count);
        if arg >= 1.0 {
            return Some(0.0);
        }
        if eta <= 0.0 {
            return None;
        }
        Some(-arg.ln() / eta)
    }

    /// Coincidence gains and error gains for intensities `(mu_a, mu_b)`.
    pub fn gains(&self, mu_a: f64, mu_b: f64) -> Gains {
        let pd = self.dark_count;
        let ed = self.misalignment;
        let ta = self.transmittance(0) * mu_a;
        let tb = self.transmittance(1) * mu_b;
        let mp = ta + tb;
        let x = (ta * tb).sqrt() / 2.0;
        let one_minus = |t: f64| -(-t).exp_m1() + pd * (-t).exp();
        let q_c = 2.0 * (1.0 - pd).powi(2) * (-mp / 2.0).exp() * one_minus(ta / 2.0) * one_minus(tb / 2.0);
        // I0(2x) − (1 − p_d) e^{−μ'/2}
        let q_e_term = i0_minus_one(2.0 * x) + one_minus(mp / 2.0);
        let q_e = 2.0 * pd * (1.0 - pd).powi(2) * (-mp / 2.0).exp() * q_e_term;

        let y = (1.0 - pd) * (-mp / 4.0).exp();
        let u = one_minus(mp / 4.0);
        let a = i0_minus_one(x);
        let b = i0_minus_one(2.0 * x);
        // 1 + 2y² − 4y·I0(x) + I0(2x) = 2(1 − y)² + (I0(2x) − 1) − 4y(I0(x) − 1)
        let bracket = (2.0 * u * u + b - 4.0 * y * a).max(0.0);
        let q_x = 2.0 * y * y * bracket;
        let q_x_err = (0.5 * q_x - 2.0 * (0.5 - ed) * y * y * b).max(0.0);
        Gains {
            z: q_c + q_e,
            z_err: ed * q_c + (1.0 - ed) * q_e,
            x: q_x,
            x_err: q_x_err.min(q_x),
        }
    }

    /// Z-basis QBER of signal/signal events at intensity `mu`.
    pub fn qber_z(&self, mu: f64) -> f64 {
        let g = self.gains(mu, mu);
        if g.z > 0.0 {
            g.z_err / g.z
        } else {
            0.0
        }
    }
}

/// Misalignment that gives `target` Z-basis QBER at intensity `mu` on `channel`.
pub fn calibrate_misalignment(channel: &ChannelModel, mu: f64, target: f64) -> Result<f64> {
    let qber = |ed: f64| {
        let c = ChannelModel {
            misalignment: ed,
            ..channel.clone()
        };
        c.qber_z(mu)
    };
    let (mut lo, mut hi) = (0.0, 0.5);
    if !(qber(lo) <= target && target <= qber(hi)) {
        return Err(Error::Domain(format!("QBER {target} not reachable on this channel")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if qber(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `I0(t) − 1` by its power series.
fn i0_minus_one(t: f64) -> f64 {
    let q = t * t / 4.0;
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..500 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub z: f64,
    pub z_err: f64,
    pub x: f64,
    pub x_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    /// `μ1 > μ2 > μ3 ≥ 0`.
    pub intensities: [f64; 3],
    /// Emission probability of each (basis, intensity) setting, rows Z then X.
    pub probabilities: [[f64; 3]; 2],
    /// Total number of signal pulses.
    pub n_pulses: f64,
    pub eps: EpsilonSet,
    /// Fraction of sifted bits disclosed for parameter estimation.
    pub pe_fraction: f64,
    pub f_ec: f64,
}

impl ProtocolParams {
    pub fn new(intensities: [f64; 3], probabilities: [[f64; 3]; 2], n_pulses: f64) -> Self {
        Self {
            intensities,
            probabilities,
            n_pulses,
            eps: EpsilonSet::default(),
            pe_fraction: DEFAULT_PE_FRACTION,
            f_ec: DEFAULT_F_EC,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [m1, m2, m3] = self.intensities;
        if !(m1 > m2 && m2 > m3 && m3 >= 0.0 && m1.is_finite()) {
            return Err(Error::Validation(format!(
                "intensities must satisfy μ1 > μ2 > μ3 ≥ 0, got {:?}",
                self.intensities
            )));
        }
        let mut sum = 0.0;
        for p in self.probabilities.iter().flatten() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Validation(format!("probability {p} outside [0, 1]")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("setting probabilities sum to {sum}")));
        }
        if !(self.n_pulses > 0.0 && self.n_pulses.is_finite()) {
            return Err(Error::Validation(format!("N = {}", self.n_pulses)));
        }
        if !(0.0..1.0).contains(&self.pe_fraction) {
            return Err(Error::Validation(format!(
                "parameter-estimation fraction {}",
                self.pe_fraction
            )));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::Validation(format!("error-correction efficiency {}", self.f_ec)));
        }
        self.eps.validate()
    }

    pub fn probability(&self, basis: Basis, intensity: usize) -> f64 {
        self.probabilities[basis.index()][intensity]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tally {
    pub sent: f64,
    pub coincidences: f64,
    pub errors: f64,
}

/// Tallies for every (basis, intensity pair) setting. Index order is
/// `[basis][alice intensity][bob intensity]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TallySet {
    pub intensities: [f64; 3],
    pub tallies: [[[Tally; 3]; 3]; 2],
}

impl TallySet {
    pub fn get(&self, basis: Basis, a: usize, b: usize) -> &Tally {
        &self.tallies[basis.index()][a][b]
    }

    pub fn total_coincidences(&self, basis: Basis) -> f64 {
        self.tallies[basis.index()]
            .iter()
            .flatten()
            .map(|t| t.coincidences)
            .sum()
    }

    pub fn total_errors(&self, basis: Basis) -> f64 {
        self.tallies[basis.index()].iter().flatten().map(|t| t.errors).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for t in self.tallies.iter().flatten().flatten() {
            if !(0.0 <= t.errors && t.errors <= t.coincidences && t.coincidences <= t.sent) {
                return Err(Error::Validation(format!("inconsistent tally {t:?}")));
            }
        }
        Ok(())
    }
}

/// Expected-value tallies.
pub fn simulate_tallies(channel: &ChannelModel, params: &ProtocolParams) -> TallySet {
    let mut out = TallySet {
        intensities: params.intensities,
        tallies: Default::default(),
    };
    for i in 0..3 {
        for j in 0..3 {
            let g = channel.gains(params.intensities[i], params.intensities[j]);
            for basis in Basis::ALL {
                let sent = params.n_pulses * params.probability(basis, i) * params.probability(basis, j);
                let (q, e) = match basis {
                    Basis::Z => (g.z, g.z_err),
                    Basis::X => (g.x, g.x_err),
                };
                out.tallies[basis.index()][i][j] = Tally {
                    sent,
                    coincidences: sent * q,
                    errors: sent * e,
                };
            }
        }
    }
    out
}

/// Tallies with Poisson coincidence counts and binomial error counts.
pub fn simulate_tallies_sampled(channel: &ChannelModel, params: &ProtocolParams, seed: u64) -> Result<TallySet> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = simulate_tallies(channel, params);
    for t in out.tallies.iter_mut().flatten().flatten() {
        let p_err = if t.coincidences > 0.0 {
            t.errors / t.coincidences
        } else {
            0.0
        };
        let c = if t.coincidences > 0.0 {
            Poisson::new(t.coincidences)
                .map_err(|e| Error::Domain(format!("poisson mean {}: {e}", t.coincidences)))?
                .sample(&mut rng)
                .min(t.sent.floor())
        } else {
            0.0
        };
        let e = Binomial::new(c as u64, p_err.clamp(0.0, 1.0))
            .map_err(|e| Error::Domain(format!("binomial error draw: {e}")))?
            .sample(&mut rng) as f64;
        t.coincidences = c;
        t.errors = e;
    }
    Ok(out)
}
