//! Toeplitz hashing for privacy amplification.
//!
//! The `out_len × n` matrix is `T[i][j] = seed[out_len − 1 − i + j]`: its
//! first row is `seed[out_len − 1..]` and its first column, read from the
//! bottom up, is `seed[0..out_len)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Largest tile edge for the convolution path.
const MAX_TILE: usize = 1 << 19;
/// Below this many matrix entries the word-packed product is used.
const NAIVE_LIMIT: usize = 1 << 24;

fn check(input: &BitString, seed: &BitString, out_len: usize) -> Result<()> {
    let expected = (input.len() + out_len).saturating_sub(1);
    if seed.len() != expected {
        return Err(Error::Validation(format!(
            "Toeplitz seed has {} bits, expected {expected} for {} input and {out_len} output bits",
            seed.len(),
            input.len()
        )));
    }
    Ok(())
}

/// `T·input` over GF(2), choosing the faster of the two evaluation paths.
pub fn toeplitz_hash(input: &BitString, seed: &BitString, out_len: usize) -> Result<BitString> {
    if input.len().saturating_mul(out_len) <= NAIVE_LIMIT {
        toeplitz_hash_naive(input, seed, out_len)
    } else {
        toeplitz_hash_fft(input, seed, out_len)
    }
}

/// Row-by-row product with word-packed rows.
pub fn toeplitz_hash_naive(input: &BitString, seed: &BitString, out_len: usize) -> Result<BitString> {
    check(input, seed, out_len)?;
    let n = input.len();
    let mut out = BitString::zeros(out_len);
    if n == 0 {
        return Ok(out);
    }
    for i in 0..out_len {
        if seed.slice(out_len - 1 - i, n).dot(input) {
            out.set(i, true);
        }
    }
    Ok(out)
}

/// Product evaluated with tiled FFT convolutions over `f64`.
pub fn toeplitz_hash_fft(input: &BitString, seed: &BitString, out_len: usize) -> Result<BitString> {
    check(input, seed, out_len)?;
    let n = input.len();
    let mut out = BitString::zeros(out_len);
    if n == 0 || out_len == 0 {
        return Ok(out);
    }
    let tile = n.max(out_len).next_power_of_two().min(MAX_TILE);
    let (nb, lb) = (tile.min(n), tile.min(out_len));
    let size = (lb + nb - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let scale = 1.0 / size as f64;

    let mut xr = vec![Complex::new(0.0, 0.0); size];
    let mut sv = vec![Complex::new(0.0, 0.0); size];
    for j0 in (0..n).step_by(nb) {
        let nj = nb.min(n - j0);
        xr.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (k, c) in xr.iter_mut().take(nj).enumerate() {
            if input.get(j0 + nj - 1 - k) {
                c.re = 1.0;
            }
        }
        fwd.process(&mut xr);
        for i0 in (0..out_len).step_by(lb) {
            let li = lb.min(out_len - i0);
            // seed index for (i, j) is base + (li − 1 − i') + j'
            let base = out_len - i0 - li + j0;
            sv.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (k, c) in sv.iter_mut().enumerate().take(li + nj - 1) {
                if seed.get(base + k) {
                    c.re = 1.0;
                }
            }
            fwd.process(&mut sv);
            for (s, x) in sv.iter_mut().zip(&xr) {
                *s *= x;
            }
            inv.process(&mut sv);
            let mut exact = true;
            for ip in 0..li {
                let v = sv[li - 1 - ip + nj - 1].re * scale;
                let r = v.round();
                if (v - r).abs() > 0.25 || r < 0.0 {
                    exact = false;
                    break;
                }
                if (r as u64) & 1 == 1 {
                    out.toggle(i0 + ip);
                }
            }
            if !exact {
                return toeplitz_hash_naive(input, seed, out_len);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle(input: &[bool], seed: &[bool], out_len: usize) -> Vec<bool> {
        (0..out_len)
            .map(|i| (0..input.len()).fold(false, |acc, j| acc ^ (seed[out_len - 1 - i + j] & input[j])))
            .collect()
    }

    #[test]
    fn hand_built_matrix() {
        // 2×3 matrix from seed s0..s3: rows [s1 s2 s3], [s0 s1 s2]
        let seed = BitString::from_bools(&[true, false, true, true]);
        let x = BitString::from_bools(&[true, true, false]);
        let y = toeplitz_hash_naive(&x, &seed, 2).unwrap();
        assert_eq!(y, BitString::from_bools(&[true, true]));
        assert_eq!(toeplitz_hash_fft(&x, &seed, 2).unwrap(), y);
    }

    #[test]
    fn edge_cases() {
        let seed = BitString::from_bools(&[true; 9]);
        assert_eq!(
            toeplitz_hash(&BitString::zeros(5), &seed, 5).unwrap(),
            BitString::zeros(5)
        );
        let x = BitString::from_bools(&[true; 5]);
        assert!(toeplitz_hash(&x, &BitString::zeros(4), 0).unwrap().is_empty());
        assert!(matches!(toeplitz_hash(&x, &seed, 4), Err(Error::Validation(_))));
    }

    #[test]
    fn multi_tile_fft_matches_naive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let (n, l) = (MAX_TILE + 777, 300);
        let x = BitString::from_bools(&(0..n).map(|_| rng.gen()).collect::<Vec<bool>>());
        let s = BitString::from_bools(&(0..n + l - 1).map(|_| rng.gen()).collect::<Vec<bool>>());
        assert_eq!(
            toeplitz_hash_fft(&x, &s, l).unwrap(),
            toeplitz_hash_naive(&x, &s, l).unwrap()
        );
    }

    proptest! {
        #[test]
        fn paths_agree_with_oracle(
            input in prop::collection::vec(any::<bool>(), 1..300),
            out_len in 0usize..200,
            seed_bits in prop::collection::vec(any::<bool>(), 500),
        ) {
            let seed: Vec<bool> = seed_bits[..input.len() + out_len - 1].to_vec();
            let want = BitString::from_bools(&oracle(&input, &seed, out_len));
            let (x, s) = (BitString::from_bools(&input), BitString::from_bools(&seed));
            prop_assert_eq!(&toeplitz_hash_naive(&x, &s, out_len).unwrap(), &want);
            prop_assert_eq!(&toeplitz_hash_fft(&x, &s, out_len).unwrap(), &want);
        }

        #[test]
        fn linear(a in prop::collection::vec(any::<bool>(), 64), b in prop::collection::vec(any::<bool>(), 64),
                  seed in prop::collection::vec(any::<bool>(), 64 + 31)) {
            let (a, b, s) = (BitString::from_bools(&a), BitString::from_bools(&b), BitString::from_bools(&seed));
            let lhs = toeplitz_hash(&a.xor(&b), &s, 32).unwrap();
            prop_assert_eq!(lhs, toeplitz_hash(&a, &s, 32).unwrap().xor(&toeplitz_hash(&b, &s, 32).unwrap()));
        }
    }
}
