//! Three-intensity decoy-state bounds with finite-sample corrections.
//!
//! The key is drawn from Z-basis events where both parties sent `μ1`.
//! Yields are lower-bounded with the analytic three-intensity inequalities;
//! each bound is a fixed linear combination of observed counts, and its
//! statistical fluctuation is bounded with one Hoeffding inequality over
//! the detected events of that basis.

use super::channel::{Basis, ProtocolParams, TallySet};

/// Number of estimates sharing `ε_PE`.
pub const ESTIMATES: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyBounds {
    /// Lower bound on kept key bits where one party sent vacuum.
    pub n0_lower: f64,
    /// Lower bound on kept key bits from single-photon pairs.
    pub n1_lower: f64,
    /// Upper bound on the single-photon phase error of the kept key.
    pub e1_upper: f64,
    /// Uncorrected single-photon error rate estimated in the X basis.
    pub e11_x_upper: f64,
    /// Raw single-photon-pair yield bounds; non-positive means no bound.
    pub y11_z_lower: f64,
    pub y11_x_lower: f64,
    pub sifted_bits: f64,
    pub kept_bits: f64,
    /// Observed Z-basis QBER of signal/signal events.
    pub qber_z: f64,
    pub degenerate: bool,
}

impl DecoyBounds {
    fn degenerate(sifted: f64, kept: f64, qber: f64, y11_z: f64, y11_x: f64) -> Self {
        Self {
            n0_lower: 0.0,
            n1_lower: 0.0,
            e1_upper: 0.5,
            e11_x_upper: 0.5,
            y11_z_lower: y11_z,
            y11_x_lower: y11_x,
            sifted_bits: sifted,
            kept_bits: kept,
            qber_z: qber,
            degenerate: true,
        }
    }
}

type Weights = Vec<((usize, usize), f64)>;

struct Combination<'a> {
    tallies: &'a TallySet,
    basis: Basis,
    errors: bool,
}

impl Combination<'_> {
    fn count(&self, a: usize, b: usize) -> f64 {
        let t = self.tallies.get(self.basis, a, b);
        if self.errors {
            t.errors
        } else {
            t.coincidences
        }
    }

    fn population(&self) -> f64 {
        if self.errors {
            self.tallies.total_errors(self.basis)
        } else {
            self.tallies.total_coincidences(self.basis)
        }
    }

    /// `Σ w·n` shifted by the Hoeffding deviation in direction `sign`.
    fn bound(&self, w: &Weights, ln_inv_eps: f64, sign: f64) -> f64 {
        let value: f64 = w.iter().map(|&((a, b), x)| x * self.count(a, b)).sum();
        let mut acc = [0.0f64; 9];
        for &((a, b), x) in w {
            acc[a * 3 + b] += x;
        }
        let hi = acc.iter().cloned().fold(0.0, f64::max);
        let lo = acc.iter().cloned().fold(0.0, f64::min);
        value + sign * (hi - lo) * (self.population() / 2.0 * ln_inv_eps).sqrt()
    }
}

fn sent(t: &TallySet, basis: Basis, a: usize, b: usize) -> f64 {
    t.get(basis, a, b).sent
}

/// Weights of `G(a) = e^{2a}Q_aa − e^{a+c}(Q_ac + Q_ca) + e^{2c}Q_cc`, scaled.
fn g_weights(t: &TallySet, basis: Basis, a: usize, scale: f64, out: &mut Weights) {
    let mu = t.intensities;
    let (x, c) = (mu[a], mu[2]);
    out.push(((a, a), scale * (2.0 * x).exp() / sent(t, basis, a, a)));
    out.push(((a, 2), -scale * (x + c).exp() / sent(t, basis, a, 2)));
    out.push(((2, a), -scale * (x + c).exp() / sent(t, basis, 2, a)));
    out.push(((2, 2), scale * (2.0 * c).exp() / sent(t, basis, 2, 2)));
}

fn y11_weights(t: &TallySet, basis: Basis) -> Weights {
    let [m, v, c] = t.intensities;
    let lambda = (v - c) * (v * v - c * c) / ((m - c) * (m * m - c * c));
    let denom = (v - c).powi(2) - lambda * (m - c).powi(2);
    let mut w = Vec::new();
    g_weights(t, basis, 1, 1.0 / denom, &mut w);
    g_weights(t, basis, 0, -lambda / denom, &mut w);
    w
}

/// Sampling correction for estimating the kept-key phase error from `k`
/// X-basis single-photon events.
fn sampling_correction(n: f64, k: f64, ln_inv_eps: f64) -> f64 {
    if n <= 0.0 || k <= 0.0 {
        return 0.5;
    }
    ((n + k) * (k + 1.0) * ln_inv_eps / (2.0 * n * k * k)).sqrt()
}

pub fn decoy_bounds(tallies: &TallySet, params: &ProtocolParams) -> DecoyBounds {
    let [m, v, c] = tallies.intensities;
    let ss = tallies.get(Basis::Z, 0, 0);
    let sifted = ss.coincidences;
    let qber = if sifted > 0.0 { ss.errors / sifted } else { 0.0 };
    let keep = 1.0 - params.pe_fraction;
    let kept = sifted * keep;

    let needs_sent = (0..3).all(|a| (0..3).all(|b| Basis::ALL.iter().all(|&bs| sent(tallies, bs, a, b) > 0.0)));
    if !(m > v && v > c && c >= 0.0) || !needs_sent || sifted <= 0.0 {
        return DecoyBounds::degenerate(sifted, kept, qber, 0.0, 0.0);
    }
    let ln_inv_eps = (ESTIMATES / params.eps.pe).ln();

    let z = Combination {
        tallies,
        basis: Basis::Z,
        errors: false,
    };
    let x = Combination {
        tallies,
        basis: Basis::X,
        errors: false,
    };
    let x_err = Combination {
        tallies,
        basis: Basis::X,
        errors: true,
    };

    let y11_z = z.bound(&y11_weights(tallies, Basis::Z), ln_inv_eps, -1.0);
    let y11_x = x.bound(&y11_weights(tallies, Basis::X), ln_inv_eps, -1.0);
    if !(y11_z > 0.0 && y11_x > 0.0 && y11_z.is_finite() && y11_x.is_finite()) {
        return DecoyBounds::degenerate(sifted, kept, qber, y11_z, y11_x);
    }

    let mut we = Vec::new();
    g_weights(tallies, Basis::X, 1, 1.0 / (v - c).powi(2), &mut we);
    let ey11_x = x_err.bound(&we, ln_inv_eps, 1.0).max(0.0);
    let e11_x = (ey11_x / y11_x).min(0.5);

    // Alice-vacuum and Bob-vacuum yields at signal intensity on the other
    // side, minus the double-vacuum overlap.
    let mut w0: Weights = Vec::new();
    for (vac, weak) in [((2, 0), (1, 0)), ((0, 2), (0, 1))] {
        w0.push((
            vac,
            (-m).exp() * v * c.exp() / (v - c) / sent(tallies, Basis::Z, vac.0, vac.1),
        ));
        w0.push((
            weak,
            -(-m).exp() * c * v.exp() / (v - c) / sent(tallies, Basis::Z, weak.0, weak.1),
        ));
    }
    w0.push((
        (2, 2),
        -(-2.0 * m).exp() * (2.0 * c).exp() / sent(tallies, Basis::Z, 2, 2),
    ));
    let n0_per_pulse = z.bound(&w0, ln_inv_eps, -1.0).max(0.0);

    let n_ss = ss.sent;
    let n1 = (keep * n_ss * m * m * (-2.0 * m).exp() * y11_z).min(kept);
    let n0 = (keep * n_ss * n0_per_pulse).min(kept - n1).max(0.0);

    let mut single_x = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let (pa, pb) = (tallies.intensities[a], tallies.intensities[b]);
            single_x += sent(tallies, Basis::X, a, b) * pa * pb * (-pa - pb).exp();
        }
    }
    let k = single_x * y11_x;
    let e1 = (e11_x + sampling_correction(n1, k, ln_inv_eps)).min(0.5);

    DecoyBounds {
        n0_lower: n0,
        n1_lower: n1,
        e1_upper: e1,
        e11_x_upper: e11_x,
        y11_z_lower: y11_z,
        y11_x_lower: y11_x,
        sifted_bits: sifted,
        kept_bits: kept,
        qber_z: qber,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkd::channel::{simulate_tallies, ChannelModel, Tally};

    fn params(n: f64) -> ProtocolParams {
        ProtocolParams::new([0.33, 0.1, 0.0], [[0.4, 0.15, 0.15], [0.03, 0.13, 0.14]], n)
    }

    /// Tallies in which only single-photon pairs ever click, without errors.
    fn single_photon_only(n: f64, y11: f64) -> TallySet {
        let p = params(n);
        let mut t = simulate_tallies(&ChannelModel::default(), &p);
        for (bi, basis) in Basis::ALL.into_iter().enumerate() {
            for a in 0..3 {
                for b in 0..3 {
                    let (ma, mb) = (p.intensities[a], p.intensities[b]);
                    let sent = n * p.probability(basis, a) * p.probability(basis, b);
                    t.tallies[bi][a][b] = Tally {
                        sent,
                        coincidences: sent * ma * (-ma).exp() * mb * (-mb).exp() * y11,
                        errors: 0.0,
                    };
                }
            }
        }
        t
    }

    #[test]
    fn noiseless_single_photon_error_vanishes() {
        let mut last = 1.0;
        for n in [1e9, 1e11, 1e13, 1e15] {
            let b = decoy_bounds(&single_photon_only(n, 0.05), &params(n));
            assert!(!b.degenerate);
            assert!(b.e1_upper < last, "{n}: {}", b.e1_upper);
            last = b.e1_upper;
        }
        assert!(last < 1e-3, "{last}");
    }

    #[test]
    fn all_error_tallies_clamp_at_half() {
        let n = 1e12;
        let p = params(n);
        let mut t = simulate_tallies(&ChannelModel::symmetric(30.0), &p);
        for tl in t.tallies.iter_mut().flatten().flatten() {
            tl.errors = tl.coincidences;
        }
        let b = decoy_bounds(&t, &p);
        assert_eq!(b.e1_upper, 0.5);
    }

    #[test]
    fn empty_tallies_are_degenerate() {
        let p = params(1e10);
        let mut t = simulate_tallies(&ChannelModel::default(), &p);
        for tl in t.tallies.iter_mut().flatten().flatten() {
            tl.coincidences = 0.0;
            tl.errors = 0.0;
        }
        let b = decoy_bounds(&t, &p);
        assert!(b.degenerate);
        assert_eq!(b.n1_lower, 0.0);
    }

    #[test]
    fn bounds_are_consistent_with_counts() {
        for d in [0.0, 40.0, 80.0] {
            let p = params(1e11);
            let t = simulate_tallies(&ChannelModel::symmetric(d), &p);
            let b = decoy_bounds(&t, &p);
            assert!(b.n0_lower >= 0.0 && b.n1_lower >= 0.0);
            assert!(b.n0_lower + b.n1_lower <= b.kept_bits + 1e-6);
            assert!((0.0..=0.5).contains(&b.e1_upper));
            let asym = ChannelModel::symmetric(d);
            let eta = asym.transmittance(0);
            // single-photon-pair yield is about η²/2 for these losses
            assert!(b.y11_z_lower <= eta * eta / 2.0 * 1.05);
        }
    }

    #[test]
    fn unordered_intensities_degenerate() {
        let mut p = params(1e10);
        let t = simulate_tallies(&ChannelModel::default(), &p);
        p.intensities = [0.1, 0.33, 0.0];
        let mut t2 = t.clone();
        t2.intensities = p.intensities;
        assert!(decoy_bounds(&t2, &p).degenerate);
    }
}
