//! Key-length optimisation over intensities, setting probabilities and,
//! optionally, the ε split; distance sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::channel::{simulate_tallies, ChannelModel, ProtocolParams};
use super::decoy::{decoy_bounds, DecoyBounds};
use super::entropy::h;
use super::finite_key::{
    finite_key_length, key_length_bound, EpsilonSet, FiniteKeyResult, DEFAULT_EPS_COR, DEFAULT_EPS_SEC,
};
use super::search::{differential_evolution, nelder_mead};
use crate::error::{Error, Result};

/// Upper end of the signal-intensity search range.
pub const MU1_CEILING: f64 = 1.5;
const DEGENERATE_FLOOR: f64 = 1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConstraints {
    /// Apply the channel's detector saturation cap to `μ1`.
    pub saturation: bool,
    pub eps_sec: f64,
    pub eps_cor: f64,
    /// Let the optimiser choose the ε_sec split instead of an equal split.
    pub optimize_eps_split: bool,
    pub pe_fraction: f64,
    pub f_ec: f64,
    pub seed: u64,
    pub population: usize,
    pub generations: usize,
}

impl Default for SearchConstraints {
    fn default() -> Self {
        Self {
            saturation: false,
            eps_sec: DEFAULT_EPS_SEC,
            eps_cor: DEFAULT_EPS_COR,
            optimize_eps_split: false,
            pe_fraction: super::channel::DEFAULT_PE_FRACTION,
            f_ec: super::channel::DEFAULT_F_EC,
            seed: 1,
            population: 64,
            generations: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedParams {
    pub params: ProtocolParams,
    pub result: FiniteKeyResult,
    pub bounds: DecoyBounds,
    /// Largest admissible `μ1` in the search.
    pub mu1_limit: f64,
    pub diagnostics: Vec<String>,
}

/// Key length obtained with `params` on `channel`.
pub fn evaluate(channel: &ChannelModel, params: &ProtocolParams) -> Result<(FiniteKeyResult, DecoyBounds)> {
    params.validate()?;
    channel.validate()?;
    let tallies = simulate_tallies(channel, params);
    let b = decoy_bounds(&tallies, params);
    let leak = (params.f_ec * b.kept_bits * h(b.qber_z)).ceil();
    let l = finite_key_length(b.n0_lower, b.n1_lower, b.e1_upper, leak, &params.eps)?;
    Ok((
        FiniteKeyResult {
            n0_lower: b.n0_lower,
            n1_lower: b.n1_lower,
            e1_upper: b.e1_upper,
            leak_ec: leak,
            l,
        },
        b,
    ))
}

/// Smooth surrogate for the key length, negative when no key is possible.
fn surrogate(channel: &ChannelModel, params: &ProtocolParams) -> f64 {
    let tallies = simulate_tallies(channel, params);
    let b = decoy_bounds(&tallies, params);
    let leak = params.f_ec * b.kept_bits * h(b.qber_z);
    let v = if b.degenerate {
        // Below any non-degenerate value, and decreasing with the size of
        // the violated yield bound.
        let shortfall = b.y11_z_lower.min(b.y11_x_lower).min(0.0).abs();
        -DEGENERATE_FLOOR * (1.0 + shortfall.ln_1p())
    } else {
        key_length_bound(b.n0_lower, b.n1_lower, b.e1_upper, leak, &params.eps)
    };
    if v.is_finite() {
        v
    } else {
        f64::MIN / 4.0
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softmax<const K: usize>(z: &[f64]) -> [f64; K] {
    let mut out = [0.0; K];
    let mx = z.iter().cloned().fold(0.0, f64::max);
    for (o, v) in out.iter_mut().zip(z.iter().chain(std::iter::once(&0.0))) {
        *o = (v - mx).exp();
    }
    let s: f64 = out.iter().sum();
    out.map(|v| v / s)
}

struct Space<'a> {
    mu1_limit: f64,
    n_pulses: f64,
    c: &'a SearchConstraints,
}

impl Space<'_> {
    fn dim(&self) -> usize {
        if self.c.optimize_eps_split {
            11
        } else {
            8
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(-8.0, 8.0), (-8.0, 8.0), (-16.0, 2.0)];
        b.extend([(-8.0, 8.0); 5]);
        if self.c.optimize_eps_split {
            b.extend([(-6.0, 6.0); 3]);
        }
        b
    }

    fn decode(&self, z: &[f64]) -> ProtocolParams {
        let mu1 = self.mu1_limit * sigmoid(z[0]);
        let mu2 = mu1 * sigmoid(z[1]);
        let mu3 = mu2 * sigmoid(z[2]);
        let p: [f64; 6] = softmax(&z[3..8]);
        let eps = if self.c.optimize_eps_split {
            let w: [f64; 4] = softmax(&z[8..11]);
            EpsilonSet::split(self.c.eps_sec, self.c.eps_cor, w)
        } else {
            EpsilonSet::split_equally(self.c.eps_sec, self.c.eps_cor)
        };
        ProtocolParams {
            intensities: [mu1, mu2, mu3],
            probabilities: [[p[0], p[1], p[2]], [p[3], p[4], p[5]]],
            n_pulses: self.n_pulses,
            eps,
            pe_fraction: self.c.pe_fraction,
            f_ec: self.c.f_ec,
        }
    }
}

/// Maximises the key length over the documented search space.
pub fn optimize_params(
    channel: &ChannelModel,
    n_pulses: f64,
    constraints: &SearchConstraints,
) -> Result<OptimizedParams> {
    if !(n_pulses > 0.0 && n_pulses.is_finite()) {
        return Err(Error::Validation(format!("N = {n_pulses} must be positive")));
    }
    channel.validate()?;
    let mut diagnostics = Vec::new();
    let mu1_limit = match (constraints.saturation, channel.max_signal_intensity()) {
        (true, Some(limit)) => {
            diagnostics.push(format!("saturation limits μ1 to {limit:.6}"));
            limit.min(MU1_CEILING)
        }
        (true, None) => {
            diagnostics.push("no saturation cap configured; μ1 unconstrained".into());
            MU1_CEILING
        }
        (false, _) => MU1_CEILING,
    };
    let space = Space {
        mu1_limit,
        n_pulses,
        c: constraints,
    };
    let fallback = space.decode(&vec![0.0; space.dim()]);
    if !(mu1_limit > 0.0) {
        diagnostics.push("empty feasible set: saturation admits no signal intensity".into());
        return Ok(OptimizedParams {
            result: FiniteKeyResult::zero(),
            bounds: decoy_bounds(&simulate_tallies(channel, &fallback), &fallback),
            params: fallback,
            mu1_limit,
            diagnostics,
        });
    }

    let objective = |z: &[f64]| -surrogate(channel, &space.decode(z));
    let mut rng = ChaCha20Rng::seed_from_u64(constraints.seed);
    let (mut z, mut fz) = differential_evolution(
        &objective,
        &space.bounds(),
        constraints.population.max(8),
        constraints.generations,
        &mut rng,
    );
    for _ in 0..8 {
        let (z2, f2) = nelder_mead(&objective, &z, 0.25, 20_000, 1e-13);
        let improved = f2 < fz - 1e-9 * fz.abs().max(1.0);
        if f2 <= fz {
            z = z2;
            fz = f2;
        }
        if !improved {
            break;
        }
    }
    let params = space.decode(&z);
    let (result, bounds) = evaluate(channel, &params)?;
    if result.l == 0 {
        diagnostics.push("no positive key length found".into());
    }
    Ok(OptimizedParams {
        params,
        result,
        bounds,
        mu1_limit,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// Total relay distance, km.
    pub distance_km: f64,
    pub l: u64,
    pub intensities: [f64; 3],
}

/// Optimised key length at each total distance. Distances are evaluated in
/// parallel; each point is independent of the others.
pub fn sweep_distance(
    template: &ChannelModel,
    n_pulses: f64,
    distances: &[f64],
    constraints: &SearchConstraints,
) -> Result<Vec<CurvePoint>> {
    if distances.is_empty() {
        return Err(Error::Validation("distance sweep needs at least one distance".into()));
    }
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(distances.len());
    let results: Vec<Result<CurvePoint>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    distances
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i % workers == w)
                        .map(|(i, &d)| {
                            let ch = template.with_total_distance(d);
                            optimize_params(&ch, n_pulses, constraints).map(|o| {
                                (
                                    i,
                                    CurvePoint {
                                        distance_km: d,
                                        l: o.result.l,
                                        intensities: o.params.intensities,
                                    },
                                )
                            })
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<(usize, Result<CurvePoint>)> = Vec::new();
        for h in handles {
            for r in h.join().expect("sweep worker panicked") {
                match r {
                    Ok((i, p)) => all.push((i, Ok(p))),
                    Err(e) => all.push((usize::MAX, Err(e))),
                }
            }
        }
        all.sort_by_key(|(i, _)| *i);
        all.into_iter().map(|(_, r)| r).collect()
    });
    results.into_iter().collect()
}
