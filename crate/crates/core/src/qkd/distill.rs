//! Simulated post-processing: sifting, parameter estimation, leak-accounted
//! error correction, verification and Toeplitz privacy amplification.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::channel::{simulate_tallies, ChannelModel, ProtocolParams};
use super::decoy::decoy_bounds;
use super::entropy::h;
use super::finite_key::{finite_key_length, FiniteKeyResult};
use super::toeplitz::toeplitz_hash;
use crate::bits::BitString;
use crate::error::{Error, Result};

/// Largest sifted key the simulation will materialise.
pub const MAX_SIFTED_BITS: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct DistillReport {
    pub sifted_bits: usize,
    pub pe_bits: usize,
    pub kept_bits: usize,
    /// QBER measured on the parameter-estimation sample.
    pub observed_qber: f64,
    /// QBER of the channel model.
    pub model_qber: f64,
    pub corrected_errors: usize,
    pub verification_bits: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistilledKeys {
    pub user_key: BitString,
    pub peer_key: BitString,
    pub result: FiniteKeyResult,
    pub report: DistillReport,
}

fn random_bits(rng: &mut ChaCha20Rng, len: usize) -> BitString {
    let mut words = vec![0u64; len.div_ceil(64)];
    for w in words.iter_mut() {
        *w = rng.next_u64();
    }
    BitString::from_words(words, len)
}

pub fn distill_session(channel: &ChannelModel, params: &ProtocolParams, seed: u64) -> Result<DistilledKeys> {
    channel.validate()?;
    params.validate()?;
    let tallies = simulate_tallies(channel, params);
    let bounds = decoy_bounds(&tallies, params);
    let sifted = bounds.sifted_bits.round();
    if !(sifted <= MAX_SIFTED_BITS as f64) {
        return Err(Error::Validation(format!(
            "{sifted} sifted bits exceed the simulation limit"
        )));
    }
    let sifted = sifted as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let user_raw = random_bits(&mut rng, sifted);
    let mut peer_raw = user_raw.clone();
    let q = bounds.qber_z.clamp(0.0, 1.0);
    for i in 0..sifted {
        if rng.gen_bool(q) {
            peer_raw.toggle(i);
        }
    }

    let pe_bits = (params.pe_fraction * sifted as f64).round() as usize;
    let mut in_pe = vec![false; sifted];
    for i in index::sample(&mut rng, sifted, pe_bits) {
        in_pe[i] = true;
    }
    let mut pe_errors = 0usize;
    let mut user_kept = Vec::with_capacity(sifted - pe_bits);
    let mut peer_kept = Vec::with_capacity(sifted - pe_bits);
    for (i, pe) in in_pe.iter().enumerate() {
        let (u, p) = (user_raw.get(i), peer_raw.get(i));
        if *pe {
            pe_errors += usize::from(u != p);
        } else {
            user_kept.push(u);
            peer_kept.push(p);
        }
    }
    let user_kept = BitString::from_bools(&user_kept);
    let mut peer_kept = BitString::from_bools(&peer_kept);
    let kept = user_kept.len();
    let observed_qber = if pe_bits > 0 {
        pe_errors as f64 / pe_bits as f64
    } else {
        bounds.qber_z
    };

    let leak = (params.f_ec * kept as f64 * h(observed_qber)).ceil();
    let n1 = bounds.n1_lower.min(kept as f64);
    let n0 = bounds.n0_lower.min(kept as f64 - n1).max(0.0);
    let l = finite_key_length(n0, n1, bounds.e1_upper, leak, &params.eps)?;
    let result = FiniteKeyResult {
        n0_lower: n0,
        n1_lower: n1,
        e1_upper: bounds.e1_upper,
        leak_ec: leak,
        l,
    };

    // The reconciliation oracle hands the peer the user's kept string; both
    // sides then compare a short universal-hash tag.
    let corrected_errors = peer_kept.xor(&user_kept).count_ones();
    peer_kept = user_kept.clone();
    let tag_len = (1.0 / params.eps.cor).log2().ceil() as usize;
    let tag_seed = random_bits(&mut rng, kept + tag_len - 1);
    if kept > 0 && toeplitz_hash(&user_kept, &tag_seed, tag_len)? != toeplitz_hash(&peer_kept, &tag_seed, tag_len)? {
        return Err(Error::Protocol("error-correction verification failed".into()));
    }

    let mut diagnostics = Vec::new();
    if bounds.degenerate {
        diagnostics.push("decoy bounds degenerate".into());
    }
    let (user_key, peer_key) = if l == 0 {
        diagnostics.push("finite-key length is zero; no key extracted".into());
        (BitString::zeros(0), BitString::zeros(0))
    } else {
        let pa_seed = random_bits(&mut rng, kept + l as usize - 1);
        (
            toeplitz_hash(&user_kept, &pa_seed, l as usize)?,
            toeplitz_hash(&peer_kept, &pa_seed, l as usize)?,
        )
    };
    Ok(DistilledKeys {
        user_key,
        peer_key,
        result,
        report: DistillReport {
            sifted_bits: sifted,
            pe_bits,
            kept_bits: kept,
            observed_qber,
            model_qber: bounds.qber_z,
            corrected_errors,
            verification_bits: tag_len,
            diagnostics,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::qkd::optimize::{optimize_params, SearchConstraints};

    fn params(ch: &ChannelModel, n: f64) -> ProtocolParams {
        let c = SearchConstraints {
            generations: 60,
            ..SearchConstraints::default()
        };
        optimize_params(ch, n, &c).unwrap().params
    }

    #[test]
    fn keys_agree_and_have_length_l() {
        let ch = ChannelModel::symmetric(30.0);
        let out = distill_session(&ch, &params(&ch, 2e9), 5).unwrap();
        assert!(out.result.l > 0);
        assert_eq!(out.user_key, out.peer_key);
        assert_eq!(out.user_key.len() as u64, out.result.l);
        assert!(out.report.corrected_errors > 0);
        assert!((out.report.observed_qber - 0.0083).abs() < 0.003);
    }

    #[test]
    fn zero_error_channel() {
        let ch = ChannelModel {
            misalignment: 0.0,
            dark_count: 0.0,
            ..ChannelModel::symmetric(20.0)
        };
        let out = distill_session(&ch, &params(&ch, 1e9), 1).unwrap();
        assert_eq!(out.result.leak_ec, 0.0);
        assert_eq!(out.report.corrected_errors, 0);
        assert_eq!(out.user_key, out.peer_key);
        assert_eq!(out.user_key.len() as u64, out.result.l);
    }

    #[test]
    fn reproducible_under_seed() {
        let ch = ChannelModel::symmetric(30.0);
        let p = params(&ch, 2e9);
        let a = distill_session(&ch, &p, 9).unwrap();
        let b = distill_session(&ch, &p, 9).unwrap();
        let c = distill_session(&ch, &p, 10).unwrap();
        assert!(a.result.l > 0);
        assert_eq!(a, b);
        assert_ne!(a.user_key, c.user_key);
    }

    #[test]
    fn no_key_gives_empty_strings() {
        let p = params(&ChannelModel::symmetric(20.0), 1e8);
        let out = distill_session(&ChannelModel::symmetric(300.0), &p, 2).unwrap();
        assert_eq!(out.result.l, 0);
        assert!(out.user_key.is_empty() && out.peer_key.is_empty());
        assert!(!out.report.diagnostics.is_empty());
    }
}
