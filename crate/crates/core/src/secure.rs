//! Private set union and pairwise-masked secure aggregation.
//!
//! The set union is a simulated ideal functionality: the caller playing the
//! server only ever sees a [`PsuResult`], which carries the union and the
//! per-client set sizes. Secure aggregation follows the pairwise additive
//! masking construction: client `u` adds `mask(u,v)` for every `v > u` and
//! subtracts `mask(v,u)` for every `v < u`, all modulo a prime, so the
//! masks cancel in the sum over the full cohort.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// The Mersenne prime 2^61 - 1.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsuResult {
    /// Union of all inputs in ascending order.
    pub union_ids: Vec<u32>,
    /// Cardinality each client contributed, indexed like the input.
    pub transcript: Vec<usize>,
}

pub fn psu_union(local_sets: &[BTreeSet<u32>], seed: u64) -> Result<PsuResult> {
    if local_sets.is_empty() {
        return Err(Error::validation("psu", "at least one client is required"));
    }
    // Parties contribute in a random order; the output must not depend on it.
    let mut order: Vec<usize> = (0..local_sets.len()).collect();
    order.shuffle(&mut rng::substream(seed, "psu"));
    let mut union = BTreeSet::new();
    for i in order {
        union.extend(local_sets[i].iter().copied());
    }
    Ok(PsuResult {
        union_ids: union.into_iter().collect(),
        transcript: local_sets.iter().map(BTreeSet::len).collect(),
    })
}

/// Fixed-point encoding of reals into `Z_l`: `v -> round(v * 2^k) mod l`,
/// with negatives mapped to the upper half of the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    pub scale_bits: u32,
    pub modulus: u64,
    pub max_clients: usize,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self {
            scale_bits: 24,
            modulus: MERSENNE_61,
            max_clients: 64,
        }
    }
}

impl FixedPointCodec {
    pub fn new(scale_bits: u32, modulus: u64, max_clients: usize) -> Result<Self> {
        if !is_prime(modulus) {
            return Err(Error::validation("secure.modulus", format!("{modulus} is not prime")));
        }
        if modulus >= 1 << 62 {
            return Err(Error::validation("secure.modulus", "must be below 2^62"));
        }
        if max_clients == 0 {
            return Err(Error::validation("secure.max_clients", "must be at least 1"));
        }
        let codec = Self {
            scale_bits,
            modulus,
            max_clients,
        };
        if codec.max_abs() < 1.0 {
            return Err(Error::validation(
                "secure.scale_bits",
                format!("no headroom: 2 * {max_clients} * 2^{scale_bits} exceeds the modulus"),
            ));
        }
        Ok(codec)
    }

    fn scale(&self) -> f64 {
        (self.scale_bits as f64).exp2()
    }

    /// Largest magnitude a single secret element may have so that the sum
    /// over `max_clients` parties still decodes without wrap-around.
    pub fn max_abs(&self) -> f64 {
        ((self.modulus - 1) / 2) as f64 / (self.max_clients as f64 * self.scale())
    }

    /// Decoding resolution.
    pub fn resolution(&self) -> f64 {
        1.0 / self.scale()
    }

    pub fn encode(&self, v: f64) -> Result<u64> {
        if !v.is_finite() || v.abs() > self.max_abs() {
            return Err(Error::Encoding(format!(
                "{v} is outside the codec range ±{}",
                self.max_abs()
            )));
        }
        Ok(self.from_signed((v * self.scale()).round() as i64))
    }

    pub fn decode(&self, x: u64) -> f64 {
        self.to_signed(x) as f64 / self.scale()
    }

    pub fn from_signed(&self, v: i64) -> u64 {
        v.rem_euclid(self.modulus as i64) as u64
    }

    /// Centered representative in `(-l/2, l/2]`.
    pub fn to_signed(&self, x: u64) -> i64 {
        let x = x % self.modulus;
        if x > self.modulus / 2 {
            x as i64 - self.modulus as i64
        } else {
            x as i64
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }
}

/// Deterministic Miller-Rabin, exact for all `u64`.
fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let (mut d, mut s) = (n - 1, 0);
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        r
    };
    'bases: for a in BASES {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// Symmetric pairwise seeds for one aggregation cohort.
///
/// Stands in for a Diffie-Hellman key agreement: the seed of `{u, v}` is
/// derived from the run seed, a session label and the unordered pair.
#[derive(Debug, Clone)]
pub struct PairwiseSeeds {
    participants: Vec<usize>,
    seeds: BTreeMap<(usize, usize), [u8; 32]>,
}

impl PairwiseSeeds {
    pub fn agree(participants: &[usize], run_seed: u64, session: &str) -> Result<Self> {
        let mut sorted = participants.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("participants", "duplicate client id"));
        }
        let mut seeds = BTreeMap::new();
        for (i, &u) in sorted.iter().enumerate() {
            for &v in &sorted[i + 1..] {
                seeds.insert((u, v), rng::derive_key(run_seed, &format!("secagg/{session}/{u}-{v}")));
            }
        }
        Ok(Self {
            participants: sorted,
            seeds,
        })
    }

    pub fn participants(&self) -> &[usize] {
        &self.participants
    }

    /// Seed shared by `u` and `v`; identical for `(u, v)` and `(v, u)`.
    pub fn get(&self, u: usize, v: usize) -> Option<&[u8; 32]> {
        self.seeds.get(&(u.min(v), u.max(v)))
    }
}

/// Expands a pairwise seed into `len` uniform field elements.
pub fn mask_stream(seed: &[u8; 32], len: usize, modulus: u64) -> Vec<u64> {
    let mut prg = ChaCha20Rng::from_seed(*seed);
    let bits = 64 - modulus.leading_zeros();
    let shift = 64 - bits;
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let x = prg.next_u64() >> shift;
        if x < modulus {
            out.push(x);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedShare {
    pub client_id: usize,
    pub values: Vec<u64>,
}

/// Encodes `secret` and applies the pairwise masks of client `u`.
pub fn secagg_share(
    secret: &[f64],
    u: usize,
    seeds: &PairwiseSeeds,
    codec: &FixedPointCodec,
) -> Result<MaskedShare> {
    if !seeds.participants().contains(&u) {
        return Err(Error::validation("client_id", format!("{u} is not in the cohort")));
    }
    let mut values = secret.iter().map(|&v| codec.encode(v)).collect::<Result<Vec<u64>>>()?;
    for &v in seeds.participants() {
        if v == u {
            continue;
        }
        let seed = seeds.get(u, v).expect("cohort pairs have seeds");
        let mask = mask_stream(seed, values.len(), codec.modulus);
        if u < v {
            values.iter_mut().zip(&mask).for_each(|(x, m)| *x = codec.add(*x, *m));
        } else {
            values.iter_mut().zip(&mask).for_each(|(x, m)| *x = codec.sub(*x, *m));
        }
    }
    Ok(MaskedShare { client_id: u, values })
}

/// Field sum of the shares of the whole cohort.
pub fn secagg_sum_field(shares: &[MaskedShare], seeds: &PairwiseSeeds, codec: &FixedPointCodec) -> Result<Vec<u64>> {
    let present: BTreeSet<usize> = shares.iter().map(|s| s.client_id).collect();
    if present.len() != shares.len() {
        return Err(Error::validation("shares", "duplicate share from one client"));
    }
    if let Some(stranger) = present.iter().find(|id| !seeds.participants().contains(id)) {
        return Err(Error::validation("shares", format!("client {stranger} is not in the cohort")));
    }
    let missing: Vec<usize> = seeds
        .participants()
        .iter()
        .copied()
        .filter(|id| !present.contains(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnresolvedMask { missing });
    }
    let len = shares.first().map_or(0, |s| s.values.len());
    if shares.iter().any(|s| s.values.len() != len) {
        return Err(Error::Shape("shares have different lengths".into()));
    }
    let mut acc = vec![0u64; len];
    for s in shares {
        acc.iter_mut().zip(&s.values).for_each(|(a, x)| *a = codec.add(*a, *x));
    }
    Ok(acc)
}

/// Decoded sum of the cohort's secrets.
pub fn secagg_sum(shares: &[MaskedShare], seeds: &PairwiseSeeds, codec: &FixedPointCodec) -> Result<Vec<f64>> {
    Ok(secagg_sum_field(shares, seeds, codec)?
        .into_iter()
        .map(|x| codec.decode(x))
        .collect())
}

/// SHA-256 fingerprint of a cohort, used to label key-agreement sessions.
pub fn cohort_label(round: usize, participants: &[usize]) -> String {
    let mut h = Sha256::new();
    for p in participants {
        h.update((*p as u64).to_le_bytes());
    }
    let digest = h.finalize();
    format!("round{round}/{:02x}{:02x}{:02x}{:02x}", digest[0], digest[1], digest[2], digest[3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn union_examples() {
        let s = |v: &[u32]| v.iter().copied().collect::<BTreeSet<u32>>();
        let r = psu_union(&[s(&[1, 2]), s(&[2, 3])], 0).unwrap();
        assert_eq!(r.union_ids, vec![1, 2, 3]);
        assert_eq!(r.transcript, vec![2, 2]);
        assert_eq!(psu_union(&[s(&[5])], 0).unwrap().union_ids, vec![5]);
        assert!(psu_union(&[], 0).is_err());
    }

    #[test]
    fn union_matches_fold_on_random_sets() {
        let mut r = rng::substream(3, "psu-test");
        let sets: Vec<BTreeSet<u32>> = (0..20)
            .map(|_| (0..r.gen_range(0..15)).map(|_| r.gen_range(0..50)).collect())
            .collect();
        let fold = sets.iter().fold(BTreeSet::new(), |acc, s| acc.union(s).copied().collect());
        assert_eq!(psu_union(&sets, 11).unwrap().union_ids, fold.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn mersenne_is_prime() {
        assert!(is_prime(MERSENNE_61));
        assert!(!is_prime(MERSENNE_61 - 2));
        assert!(is_prime(2) && is_prime(97) && !is_prime(1) && !is_prime(91));
        assert!(FixedPointCodec::new(24, 1 << 40, 4).is_err());
    }

    #[test]
    fn two_clients_masks_hide_and_cancel() {
        let codec = FixedPointCodec::default();
        let seeds = PairwiseSeeds::agree(&[0, 1], 5, "t").unwrap();
        let a = secagg_share(&[1.0], 0, &seeds, &codec).unwrap();
        let b = secagg_share(&[2.0], 1, &seeds, &codec).unwrap();
        assert_ne!(a.values[0], codec.encode(1.0).unwrap());
        assert_ne!(b.values[0], codec.encode(2.0).unwrap());
        assert_eq!(secagg_sum(&[a, b], &seeds, &codec).unwrap(), vec![3.0]);
    }

    #[test]
    fn single_client_share_is_plain_encoding() {
        let codec = FixedPointCodec::default();
        let seeds = PairwiseSeeds::agree(&[4], 5, "t").unwrap();
        let s = secagg_share(&[0.5, -1.25], 4, &seeds, &codec).unwrap();
        assert_eq!(s.values, vec![codec.encode(0.5).unwrap(), codec.encode(-1.25).unwrap()]);
    }

    #[test]
    fn three_clients_random_vectors() {
        let codec = FixedPointCodec::default();
        let mut r = rng::substream(8, "secagg-test");
        for trial in 0..100 {
            let seeds = PairwiseSeeds::agree(&[0, 1, 2], trial, "t").unwrap();
            let secrets: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..16).map(|_| r.gen_range(-10.0..10.0)).collect())
                .collect();
            let shares: Vec<MaskedShare> = secrets
                .iter()
                .enumerate()
                .map(|(u, s)| secagg_share(s, u, &seeds, &codec).unwrap())
                .collect();
            let got = secagg_sum(&shares, &seeds, &codec).unwrap();
            for j in 0..16 {
                let plain: f64 = secrets.iter().map(|s| s[j]).sum();
                assert!((got[j] - plain).abs() <= 3.0 * codec.resolution());
            }
        }
    }

    #[test]
    fn opposite_secrets_sum_to_zero() {
        let codec = FixedPointCodec::default();
        let seeds = PairwiseSeeds::agree(&[0, 1], 1, "t").unwrap();
        let x = [0.123456789, -3.5, 7.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let shares = [
            secagg_share(&x, 0, &seeds, &codec).unwrap(),
            secagg_share(&neg, 1, &seeds, &codec).unwrap(),
        ];
        for v in secagg_sum(&shares, &seeds, &codec).unwrap() {
            assert!(v.abs() <= 2.0 * codec.resolution());
        }
    }

    #[test]
    fn all_zero_secrets() {
        let codec = FixedPointCodec::default();
        let seeds = PairwiseSeeds::agree(&[0, 1, 2, 3], 1, "t").unwrap();
        let shares: Vec<_> = (0..4).map(|u| secagg_share(&[0.0; 5], u, &seeds, &codec).unwrap()).collect();
        assert_eq!(secagg_sum(&shares, &seeds, &codec).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn missing_participant_aborts() {
        let codec = FixedPointCodec::default();
        let seeds = PairwiseSeeds::agree(&[0, 1, 2], 1, "t").unwrap();
        let shares: Vec<_> = [0, 2].iter().map(|&u| secagg_share(&[1.0], u, &seeds, &codec).unwrap()).collect();
        match secagg_sum(&shares, &seeds, &codec) {
            Err(Error::UnresolvedMask { missing }) => assert_eq!(missing, vec![1]),
            other => panic!("expected unresolved mask, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_secret() {
        let codec = FixedPointCodec::default();
        let seeds = PairwiseSeeds::agree(&[0], 1, "t").unwrap();
        assert!(matches!(
            secagg_share(&[f64::NAN], 0, &seeds, &codec),
            Err(Error::Encoding(_))
        ));
        assert!(secagg_share(&[codec.max_abs() * 2.0], 0, &seeds, &codec).is_err());
    }

    #[test]
    fn pairwise_masks_cancel_for_any_cohort() {
        let codec = FixedPointCodec::default();
        for n in 2..8usize {
            let ids: Vec<usize> = (0..n).map(|i| i * 3 + 1).collect();
            let seeds = PairwiseSeeds::agree(&ids, n as u64, "cancel").unwrap();
            // Zero secrets: each share is the mask component alone.
            let total = secagg_sum_field(
                &ids.iter()
                    .map(|&u| secagg_share(&[0.0; 8], u, &seeds, &codec).unwrap())
                    .collect::<Vec<_>>(),
                &seeds,
                &codec,
            )
            .unwrap();
            assert_eq!(total, vec![0; 8]);
        }
    }

    #[test]
    fn single_share_looks_uniform() {
        // Chi-square smoke test over 16 equal-width bins of the field.
        let codec = FixedPointCodec::default();
        let bins = 16u64;
        let width = codec.modulus / bins + 1;
        let mut counts = [0usize; 16];
        let trials = 10_000;
        for s in 0..trials {
            let seeds = PairwiseSeeds::agree(&[0, 1, 2], s, "uniform").unwrap();
            let share = secagg_share(&[1.0], 1, &seeds, &codec).unwrap();
            counts[(share.values[0] / width) as usize] += 1;
        }
        let expected = trials as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 15 degrees of freedom, p = 0.001 critical value.
        assert!(chi2 < 37.7, "chi2 = {chi2}, counts = {counts:?}");
    }

    proptest! {
        #[test]
        fn codec_round_trips(v in -64.0f64..64.0) {
            let codec = FixedPointCodec::default();
            let x = codec.encode(v).unwrap();
            prop_assert!(x < codec.modulus);
            prop_assert!((codec.decode(x) - v).abs() <= codec.resolution());
            prop_assert_eq!(codec.encode(codec.decode(x)).unwrap(), x);
        }

        #[test]
        fn field_elements_round_trip(signed in -(1i64 << 50)..(1i64 << 50)) {
            let codec = FixedPointCodec::default();
            let x = codec.from_signed(signed);
            prop_assert_eq!(codec.encode(codec.decode(x)).unwrap(), x);
        }

        #[test]
        fn union_ignores_input_order(sets in proptest::collection::vec(
            proptest::collection::btree_set(0u32..40, 0..10), 1..8), seed in any::<u64>()) {
            let mut reversed = sets.clone();
            reversed.reverse();
            prop_assert_eq!(
                psu_union(&sets, seed).unwrap().union_ids,
                psu_union(&reversed, seed ^ 1).unwrap().union_ids
            );
        }
    }
}
