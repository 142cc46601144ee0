//! Database-privacy layer.
//!
//! The data centres share a mask segment per session, drawn from the
//! DC↔DC pool. Each flip component is masked at a *local* position
//! `(p − h) mod m`, where `h` is the shift the centre received; the other
//! centre's tag reveals the one table row sitting at the target position.
//! Data centre 1 additionally binds its flips to `G(Q1_d Δ {p})`, a linear
//! form cancelled only by data centre 2's `G(Q2_d)` tag. Every other mask
//! term is part of an additive sharing of zero, so the user can only form
//! the single combination that telescopes to `w_x`, and only when
//! `Q2_d = Q1_d Δ {h1_d + h2_d}` in every dimension.

use crate::bits::{BitReader, BitString, BitWriter};
use crate::cube::{index_to_coords, side_length};
use crate::error::{Error, Result};
use crate::pir::{shift_width, AnswerBundle, QueryTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Dc1,
    Dc2,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Dc1 => Role::Dc2,
            Role::Dc2 => Role::Dc1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Dc1 => "dc1",
            Role::Dc2 => "dc2",
        }
    }
}

/// Key bits a session needs on each link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyBudget {
    /// `7L + 3⌈log₂ m⌉ + (3 + 3L)m`, per user↔DC link.
    pub user_dc_bits: u64,
    /// `9Lm + 10L`, DC↔DC shared randomness.
    pub dc_dc_bits: u64,
}

pub fn required_key_budget(n: usize, entry_bits: usize) -> KeyBudget {
    let m = side_length(n.max(1)) as u64;
    let l = entry_bits as u64;
    let lg = shift_width(m as usize) as u64;
    KeyBudget {
        user_dc_bits: 7 * l + 3 * lg + (3 + 3 * l) * m,
        dc_dc_bits: 9 * l * m + 10 * l,
    }
}

/// Per-session layout of key use on one user↔DC link and on the DC↔DC link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionKeyPlan {
    pub m: usize,
    pub entry_bits: usize,
    /// Reserved in the user→DC half; all of it is consumed by the query.
    pub query_bits: u64,
    /// Reserved in the DC→user half.
    pub answer_reserve_bits: u64,
    /// Actually spent on the answer: `(1 + 3m)L + 3L`.
    pub answer_bits: u64,
    /// Reserved on the DC↔DC link per session.
    pub mask_reserve_bits: u64,
    /// Actually drawn for the mask set: `9mL + 7L`.
    pub mask_bits: u64,
}

impl SessionKeyPlan {
    pub fn new(n: usize, entry_bits: usize) -> Self {
        let m = side_length(n.max(1));
        let budget = required_key_budget(n, entry_bits);
        let query_bits = QueryTriple::wire_bits(m) as u64;
        Self {
            m,
            entry_bits,
            query_bits,
            answer_reserve_bits: budget.user_dc_bits - query_bits,
            answer_bits: MaskedAnswerBundle::wire_bits(m, entry_bits) as u64,
            mask_reserve_bits: budget.dc_dc_bits,
            mask_bits: MaskSet::key_bits(m, entry_bits) as u64,
        }
    }
}

/// Shared-randomness masks for one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    /// Position masks for data centre 1's flips, indexed `[d][(p − h1) mod m]`.
    pub position_dc1: [Vec<BitString>; 3],
    /// Position masks for data centre 2's flips, indexed `[d][(p − h2) mod m]`.
    pub position_dc2: [Vec<BitString>; 3],
    /// Linear query-binding table `g[d][i]`.
    pub binding: [Vec<BitString>; 3],
    pub share_dc1: [BitString; 3],
    pub share_dc2: [BitString; 3],
    pub pad_dc1: BitString,
    /// `pad_dc1 ⊕ ⊕ share_dc1 ⊕ ⊕ share_dc2`; costs no key.
    pub pad_dc2: BitString,
}

impl MaskSet {
    /// Fresh key bits consumed: `9mL + 7L`.
    pub fn key_bits(m: usize, entry_bits: usize) -> usize {
        (9 * m + 7) * entry_bits
    }

    pub fn zero(m: usize, entry_bits: usize) -> Self {
        derive_mask_set(&BitString::zeros(Self::key_bits(m, entry_bits)), m, entry_bits).expect("exact-size segment")
    }

    pub fn side(&self) -> usize {
        self.binding[0].len()
    }

    pub fn entry_bits(&self) -> usize {
        self.pad_dc1.len()
    }
}

/// Reads masks from `segment` in the fixed order
/// `position_dc1[1..3][0..m)`, `position_dc2[..]`, `binding[..]`,
/// `share_dc1[1..3]`, `share_dc2[1..3]`, `pad_dc1`.
pub fn derive_mask_set(segment: &BitString, m: usize, entry_bits: usize) -> Result<MaskSet> {
    let need = MaskSet::key_bits(m, entry_bits);
    if segment.len() < need {
        return Err(Error::BudgetExhausted {
            needed: need as u64,
            available: segment.len() as u64,
        });
    }
    let mut r = BitReader::new(segment);
    let mut next = || r.take(entry_bits).expect("segment length checked");
    let mut table = || [(); 3].map(|_| (0..m).map(|_| next()).collect::<Vec<_>>());
    let position_dc1 = table();
    let position_dc2 = table();
    let binding = table();
    let share_dc1 = [(); 3].map(|_| next());
    let share_dc2 = [(); 3].map(|_| next());
    let pad_dc1 = next();
    let mut pad_dc2 = pad_dc1.clone();
    for s in share_dc1.iter().chain(&share_dc2) {
        pad_dc2.xor_assign(s);
    }
    Ok(MaskSet {
        position_dc1,
        position_dc2,
        binding,
        share_dc1,
        share_dc2,
        pad_dc1,
        pad_dc2,
    })
}

/// `G_d(T; table) = ⊕_{i ∈ T} table[i]`.
fn linear_form(set: &BitString, table: &[BitString], entry_bits: usize) -> BitString {
    let mut acc = BitString::zeros(entry_bits);
    for i in set.iter_ones() {
        acc.xor_assign(&table[i]);
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedAnswerBundle {
    pub base: BitString,
    pub flips: [Vec<BitString>; 3],
    pub tags: [BitString; 3],
}

impl MaskedAnswerBundle {
    /// `(1 + 3m)L + 3L`.
    pub fn wire_bits(m: usize, entry_bits: usize) -> usize {
        (1 + 3 * m) * entry_bits + 3 * entry_bits
    }

    /// `base, flips d-major p-minor, tags 1..3`, packed little-endian.
    pub fn to_bits(&self) -> BitString {
        let mut w = BitWriter::new();
        w.push(&self.base);
        for f in self.flips.iter().flatten() {
            w.push(f);
        }
        for t in &self.tags {
            w.push(t);
        }
        w.finish()
    }

    pub fn from_bits(bits: &BitString, m: usize, entry_bits: usize) -> Result<Self> {
        let want = Self::wire_bits(m, entry_bits);
        if bits.len() < want {
            return Err(Error::Validation(format!(
                "answer has {} bits, expected {want}",
                bits.len()
            )));
        }
        let mut r = BitReader::new(bits);
        let mut next = || r.take(entry_bits).expect("length checked");
        let base = next();
        let flips = [(); 3].map(|_| (0..m).map(|_| next()).collect());
        let tags = [(); 3].map(|_| next());
        Ok(Self { base, flips, tags })
    }
}

pub fn mask_bundle(
    bundle: &AnswerBundle,
    role: Role,
    own_query: &QueryTriple,
    masks: &MaskSet,
) -> Result<MaskedAnswerBundle> {
    let m = masks.side();
    let l = masks.entry_bits();
    own_query.check(m)?;
    if bundle.base.len() != l || bundle.flips.iter().any(|f| f.len() != m) {
        return Err(Error::Validation("answer bundle does not match mask dimensions".into()));
    }
    let (pad, own_positions, other_positions, shares) = match role {
        Role::Dc1 => (
            &masks.pad_dc1,
            &masks.position_dc1,
            &masks.position_dc2,
            &masks.share_dc1,
        ),
        Role::Dc2 => (
            &masks.pad_dc2,
            &masks.position_dc2,
            &masks.position_dc1,
            &masks.share_dc2,
        ),
    };
    let base = bundle.base.xor(pad);
    let flips = [0, 1, 2].map(|d| {
        let h = own_query.shift[d];
        let set = &own_query.sets[d];
        let g_set = (role == Role::Dc1).then(|| linear_form(set, &masks.binding[d], l));
        (0..m)
            .map(|p| {
                let mut v = bundle.flips[d][p].xor(&own_positions[d][(p + m - h) % m]);
                if let Some(g) = &g_set {
                    // G(T Δ {p}) = G(T) ⊕ g[p]
                    v.xor_assign(g);
                    v.xor_assign(&masks.binding[d][p]);
                }
                v
            })
            .collect()
    });
    let tags = [0, 1, 2].map(|d| {
        let mut t = other_positions[d][own_query.shift[d]].xor(&shares[d]);
        if role == Role::Dc2 {
            t.xor_assign(&linear_form(&own_query.sets[d], &masks.binding[d], l));
        }
        t
    });
    Ok(MaskedAnswerBundle { base, flips, tags })
}

/// `f_dec` on masked bundles.
pub fn unmask_reconstruct(mb1: &MaskedAnswerBundle, mb2: &MaskedAnswerBundle, x: usize, m: usize) -> Result<BitString> {
    let c = index_to_coords(x, m)?;
    if mb1.flips.iter().chain(&mb2.flips).any(|f| f.len() != m) {
        return Err(Error::Validation("masked bundle side does not match m".into()));
    }
    let mut out = mb1.base.xor(&mb2.base);
    for d in 0..3 {
        out.xor_assign(&mb1.flips[d][c.get(d)]);
        out.xor_assign(&mb2.flips[d][c.get(d)]);
        out.xor_assign(&mb1.tags[d]);
        out.xor_assign(&mb2.tags[d]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{build_cube, DatabaseCube};
    use crate::pir::{compute_answer_bundle, gen_queries, reconstruct_plain, sample_user_randomness};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_bits(len: usize, rng: &mut impl Rng) -> BitString {
        BitString::from_bools(&(0..len).map(|_| rng.gen()).collect::<Vec<_>>())
    }

    fn random_cube(n: usize, l: usize, rng: &mut impl Rng) -> DatabaseCube {
        build_cube((0..n).map(|_| random_bits(l, rng)).collect(), n, l).unwrap()
    }

    #[test]
    fn budget_examples() {
        assert_eq!(
            required_key_budget(800, 4656),
            KeyBudget {
                user_dc_bits: 172_314,
                dc_dc_bits: 465_600
            }
        );
        assert_eq!(
            required_key_budget(1, 1),
            KeyBudget {
                user_dc_bits: 13,
                dc_dc_bits: 19
            }
        );
        assert_eq!(
            required_key_budget(8, 1),
            KeyBudget {
                user_dc_bits: 22,
                dc_dc_bits: 28
            }
        );
    }

    #[test]
    fn consumption_fits_budget_on_grid() {
        for n in [1usize, 2, 8, 9, 27, 64, 100, 800, 1000, 5000, 100_000] {
            for l in [1usize, 2, 7, 8, 64, 4656] {
                let plan = SessionKeyPlan::new(n, l);
                let b = required_key_budget(n, l);
                assert!(plan.mask_bits <= b.dc_dc_bits);
                assert_eq!(plan.mask_reserve_bits, b.dc_dc_bits);
                assert_eq!(plan.query_bits + plan.answer_reserve_bits, b.user_dc_bits);
                assert!(plan.answer_bits <= plan.answer_reserve_bits);
            }
        }
    }

    #[test]
    fn paper_scale_mask_consumption() {
        assert_eq!(MaskSet::key_bits(10, 4656), 9 * 10 * 4656 + 7 * 4656);
        assert_eq!(MaskSet::key_bits(10, 4656), 451_632);
        assert!(MaskSet::key_bits(10, 4656) as u64 <= required_key_budget(800, 4656).dc_dc_bits);
    }

    #[test]
    fn zero_stream_gives_zero_masks() {
        let ms = MaskSet::zero(3, 5);
        assert!(ms.pad_dc2.is_zero());
        assert!(ms.binding.iter().flatten().all(BitString::is_zero));
    }

    #[test]
    fn pads_and_shares_sum_to_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let seg = random_bits(MaskSet::key_bits(4, 9), &mut rng);
        let ms = derive_mask_set(&seg, 4, 9).unwrap();
        let mut acc = ms.pad_dc1.xor(&ms.pad_dc2);
        for s in ms.share_dc1.iter().chain(&ms.share_dc2) {
            acc.xor_assign(s);
        }
        assert!(acc.is_zero());
        // fixed read order: first position mask is the first L bits
        assert_eq!(ms.position_dc1[0][0], seg.slice(0, 9));
        assert_eq!(ms.pad_dc1, seg.slice(MaskSet::key_bits(4, 9) - 9, 9));
    }

    #[test]
    fn short_segment_is_budget_error() {
        let err = derive_mask_set(&BitString::zeros(10), 2, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::BudgetExhausted {
                needed: 25,
                available: 10
            }
        ));
    }

    #[test]
    fn disjoint_segments_give_different_masks() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let k = MaskSet::key_bits(3, 16);
        let stream = random_bits(2 * k, &mut rng);
        let a = derive_mask_set(&stream.slice(0, k), 3, 16).unwrap();
        let b = derive_mask_set(&stream.slice(k, k), 3, 16).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_masks_leave_bundle_untouched() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let cube = random_cube(27, 8, &mut rng);
        let r = sample_user_randomness(3, &mut rng).unwrap();
        let (q1, q2) = gen_queries(13, &r, 3).unwrap();
        let ms = MaskSet::zero(3, 8);
        let a1 = compute_answer_bundle(&cube, &q1).unwrap();
        let a2 = compute_answer_bundle(&cube, &q2).unwrap();
        let m1 = mask_bundle(&a1, Role::Dc1, &q1, &ms).unwrap();
        let m2 = mask_bundle(&a2, Role::Dc2, &q2, &ms).unwrap();
        assert_eq!(m1.base, a1.base);
        assert_eq!(m1.flips, a1.flips);
        assert!(m1.tags.iter().chain(&m2.tags).all(BitString::is_zero));
        assert_eq!(
            unmask_reconstruct(&m1, &m2, 13, 3).unwrap(),
            reconstruct_plain(&a1, &a2, 13, 3).unwrap()
        );
    }

    #[test]
    fn masked_components_match_gf2_expressions_m2() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..200 {
            let cube = random_cube(8, 1, &mut rng);
            let ms = derive_mask_set(&random_bits(MaskSet::key_bits(2, 1), &mut rng), 2, 1).unwrap();
            let r = sample_user_randomness(2, &mut rng).unwrap();
            let x = rng.gen_range(0..8);
            let (q1, q2) = gen_queries(x, &r, 2).unwrap();
            let a1 = compute_answer_bundle(&cube, &q1).unwrap();
            let a2 = compute_answer_bundle(&cube, &q2).unwrap();
            let m1 = mask_bundle(&a1, Role::Dc1, &q1, &ms).unwrap();
            let m2 = mask_bundle(&a2, Role::Dc2, &q2, &ms).unwrap();
            let bit = |b: &BitString| b.get(0);
            let g = |d: usize, set: &BitString| {
                (0..2)
                    .filter(|&i| set.get(i))
                    .fold(false, |acc, i| acc ^ bit(&ms.binding[d][i]))
            };
            assert_eq!(bit(&m1.base), bit(&a1.base) ^ bit(&ms.pad_dc1));
            assert_eq!(bit(&m2.base), bit(&a2.base) ^ bit(&ms.pad_dc2));
            for d in 0..3 {
                for p in 0..2 {
                    let j1 = (p + 2 - q1.shift[d]) % 2;
                    let j2 = (p + 2 - q2.shift[d]) % 2;
                    let e1 = bit(&a1.flips[d][p]) ^ bit(&ms.position_dc1[d][j1]) ^ g(d, &q1.sets[d].toggled(p));
                    let e2 = bit(&a2.flips[d][p]) ^ bit(&ms.position_dc2[d][j2]);
                    assert_eq!(bit(&m1.flips[d][p]), e1);
                    assert_eq!(bit(&m2.flips[d][p]), e2);
                }
                assert_eq!(
                    bit(&m1.tags[d]),
                    bit(&ms.position_dc2[d][q1.shift[d]]) ^ bit(&ms.share_dc1[d])
                );
                assert_eq!(
                    bit(&m2.tags[d]),
                    bit(&ms.position_dc1[d][q2.shift[d]]) ^ bit(&ms.share_dc2[d]) ^ g(d, &q2.sets[d])
                );
            }
            assert_eq!(unmask_reconstruct(&m1, &m2, x, 2).unwrap(), *cube.cell(x));
        }
    }

    #[test]
    fn honest_binding_terms_line_up() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let m = 5;
        let ms = derive_mask_set(&random_bits(MaskSet::key_bits(m, 4), &mut rng), m, 4).unwrap();
        let r = sample_user_randomness(m, &mut rng).unwrap();
        let x = 77;
        let c = index_to_coords(x, m).unwrap();
        let (q1, q2) = gen_queries(x, &r, m).unwrap();
        for d in 0..3 {
            let lhs = linear_form(&q1.sets[d].toggled(c.get(d)), &ms.binding[d], 4);
            assert_eq!(lhs, linear_form(&q2.sets[d], &ms.binding[d], 4));
            assert_eq!((q1.shift[d] + q2.shift[d]) % m, c.get(d));
        }
    }

    #[test]
    fn masked_reconstruction_randomized() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let m = rng.gen_range(2..=4);
            let l = if rng.gen() { 1 } else { 8 };
            let cube = random_cube(m * m * m, l, &mut rng);
            let ms = derive_mask_set(&random_bits(MaskSet::key_bits(m, l), &mut rng), m, l).unwrap();
            let x = rng.gen_range(0..m * m * m);
            let r = sample_user_randomness(m, &mut rng).unwrap();
            let (q1, q2) = gen_queries(x, &r, m).unwrap();
            let m1 = mask_bundle(&compute_answer_bundle(&cube, &q1).unwrap(), Role::Dc1, &q1, &ms).unwrap();
            let m2 = mask_bundle(&compute_answer_bundle(&cube, &q2).unwrap(), Role::Dc2, &q2, &ms).unwrap();
            assert_eq!(&unmask_reconstruct(&m1, &m2, x, m).unwrap(), cube.cell(x));
        }
    }

    #[test]
    fn bundle_serialization_layout() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let m = 3;
        let l = 5;
        let mb = MaskedAnswerBundle {
            base: random_bits(l, &mut rng),
            flips: [(); 3].map(|_| (0..m).map(|_| random_bits(l, &mut rng)).collect()),
            tags: [(); 3].map(|_| random_bits(l, &mut rng)),
        };
        let bits = mb.to_bits();
        assert_eq!(bits.len(), MaskedAnswerBundle::wire_bits(m, l));
        assert_eq!(bits.slice(0, l), mb.base);
        assert_eq!(bits.slice(l * (1 + 3 + 1), l), mb.flips[1][1]);
        assert_eq!(bits.slice(l * (1 + 9), l), mb.tags[0]);
        assert_eq!(MaskedAnswerBundle::from_bits(&bits, m, l).unwrap(), mb);
        let padded = BitString::from_bytes(&bits.to_bytes(), bits.to_bytes().len() * 8);
        assert_eq!(MaskedAnswerBundle::from_bits(&padded, m, l).unwrap(), mb);
    }

    #[test]
    fn wrong_query_dimensions_rejected() {
        let ms = MaskSet::zero(2, 1);
        let a = AnswerBundle {
            base: BitString::zeros(1),
            flips: [(); 3].map(|_| vec![BitString::zeros(1); 2]),
        };
        let q = QueryTriple {
            sets: [BitString::zeros(3), BitString::zeros(3), BitString::zeros(3)],
            shift: [0; 3],
        };
        assert!(mask_bundle(&a, Role::Dc1, &q, &ms).is_err());
    }
}
