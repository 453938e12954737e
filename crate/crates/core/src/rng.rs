//! Deterministic, index-addressable randomness.
//!
//! A [`SeedContext`] names a logical stream by a master seed and a label path.
//! Uniforms attached to finite subsets of the positive integers are obtained
//! by a keyed hash of the stream key and the canonical subset encoding, so any
//! `U_e` can be read in O(1) and in any order. Hash outputs are treated as
//! exactly i.i.d. uniforms for all statistical purposes.
//!
//! Canonical subset encoding: the element count followed by each element, all
//! written as big-endian base-128 varints (most significant group first, high
//! bit set on every byte except the last of each number).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation, Result};

/// A named random stream.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeedContext {
    master_seed: u64,
    path: Vec<Vec<u8>>,
    key: [u64; 4],
}

impl SeedContext {
    pub fn new(master_seed: u64, label: impl AsRef<[u8]>) -> Self {
        let root = Self::root(master_seed);
        root.substream(label)
    }

    /// The unlabelled root stream for a seed.
    pub fn root(master_seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"exlab/seed");
        h.update(master_seed.to_be_bytes());
        Self {
            master_seed,
            path: Vec::new(),
            key: digest_words(h),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[Vec<u8>] {
        &self.path
    }

    /// Child stream; distinct labels give independent streams.
    pub fn substream(&self, label: impl AsRef<[u8]>) -> Self {
        let label = label.as_ref();
        let mut h = Sha256::new();
        h.update(b"exlab/sub");
        for w in self.key {
            h.update(w.to_be_bytes());
        }
        h.update((label.len() as u64).to_be_bytes());
        h.update(label);
        let mut path = self.path.clone();
        path.push(label.to_vec());
        Self {
            master_seed: self.master_seed,
            path,
            key: digest_words(h),
        }
    }

    /// Child stream labelled by an integer index.
    pub fn index(&self, i: u64) -> Self {
        let mut label = b"#".to_vec();
        label.extend_from_slice(&i.to_be_bytes());
        self.substream(label)
    }

    /// Sequential generator for bulk draws within this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(self.key) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// Raw 64-bit keyed hash of an arbitrary byte string.
    pub fn hash_bytes(&self, bytes: &[u8]) -> u64 {
        keyed_hash(&self.key, bytes)
    }

    /// Raw 64-bit keyed hash of a single integer.
    pub fn hash_u64(&self, x: u64) -> u64 {
        let mut h = mix64(self.key[0] ^ x.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        h = mix64(h ^ self.key[1]);
        mix64(h.wrapping_add(self.key[2]))
    }
}

fn digest_words(h: Sha256) -> [u64; 4] {
    let out = h.finalize();
    let mut words = [0u64; 4];
    for (w, chunk) in words.iter_mut().zip(out.chunks_exact(8)) {
        *w = u64::from_be_bytes(chunk.try_into().expect("8-byte chunk"));
    }
    words
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn keyed_hash(key: &[u64; 4], bytes: &[u8]) -> u64 {
    let mut h = key[0] ^ (bytes.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for chunk in bytes.chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        h = mix64(h ^ u64::from_le_bytes(buf)).wrapping_add(key[1]);
    }
    h = mix64(h ^ key[2]);
    mix64(h.wrapping_add(key[3]))
}

/// Top 53 bits of a hash as a uniform in [0,1).
#[inline]
pub fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A finite subset of the positive integers, stored strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct SubsetKey(Vec<u32>);

impl SubsetKey {
    /// Validates that elements are positive and strictly increasing.
    pub fn new(elements: Vec<u32>) -> Result<Self> {
        if elements.first() == Some(&0) {
            return validation("subset elements must be positive integers");
        }
        if elements.windows(2).any(|w| w[0] >= w[1]) {
            return validation(format!(
                "subset elements must be strictly increasing, got {elements:?}"
            ));
        }
        Ok(Self(elements))
    }

    /// Sorts and deduplicates; rejects zero.
    pub fn from_unsorted(mut elements: Vec<u32>) -> Result<Self> {
        elements.sort_unstable();
        elements.dedup();
        Self::new(elements)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn singleton(i: u32) -> Self {
        assert!(i > 0, "ground elements are 1-based");
        Self(vec![i])
    }

    pub fn elements(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Subset selected by a bitmask over positions of `self`.
    pub fn sub_by_mask(&self, mask: usize) -> SubsetKey {
        SubsetKey(
            self.0
                .iter()
                .enumerate()
                .filter(|(j, _)| mask >> j & 1 == 1)
                .map(|(_, &x)| x)
                .collect(),
        )
    }

    /// All subsets of `self`, ordered by bitmask over positions.
    pub fn subsets(&self) -> impl Iterator<Item = SubsetKey> + '_ {
        (0..1usize << self.0.len()).map(move |m| self.sub_by_mask(m))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 5 * self.0.len());
        put_varint(&mut out, self.0.len() as u64);
        for &x in &self.0 {
            put_varint(&mut out, x as u64);
        }
        out
    }

    /// Every subset of `{1..n}` with at most `k` elements, in canonical order.
    pub fn all_up_to(n: u32, k: usize) -> Vec<SubsetKey> {
        let mut out = vec![SubsetKey::empty()];
        let mut layer = vec![SubsetKey::empty()];
        for _ in 0..k {
            let mut next = Vec::new();
            for s in &layer {
                let start = s.0.last().map_or(1, |&x| x + 1);
                for x in start..=n {
                    let mut e = s.0.clone();
                    e.push(x);
                    next.push(SubsetKey(e));
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

impl Ord for SubsetKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for SubsetKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl TryFrom<Vec<u32>> for SubsetKey {
    type Error = crate::error::Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        SubsetKey::new(v)
    }
}

impl From<SubsetKey> for Vec<u32> {
    fn from(k: SubsetKey) -> Self {
        k.0
    }
}

impl std::fmt::Display for SubsetKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (j, x) in self.0.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

fn put_varint(out: &mut Vec<u8>, x: u64) {
    let mut groups = [0u8; 10];
    let mut n = 0;
    let mut v = x;
    loop {
        groups[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for j in (0..n).rev() {
        out.push(if j > 0 { groups[j] | 0x80 } else { groups[j] });
    }
}

/// The uniform `U_e` attached to subset `key` in stream `ctx`.
pub fn uniform_at(ctx: &SeedContext, key: &SubsetKey) -> f64 {
    to_unit(ctx.hash_bytes(&key.encode()))
}

/// Like [`uniform_at`] for raw element lists, rejecting non-canonical input.
pub fn uniform_at_elements(ctx: &SeedContext, elements: &[u32]) -> Result<f64> {
    let key = SubsetKey::new(elements.to_vec())?;
    Ok(uniform_at(ctx, &key))
}

pub fn substream(ctx: &SeedContext, label: impl AsRef<[u8]>) -> SeedContext {
    ctx.substream(label)
}

/// A uniform point of [0,1) with an unbounded supply of binary digits.
///
/// The first 64 digits are stored; further independent digit blocks are read
/// from a keyed hash by block id. Grid functions read leading digits and
/// block functions read numbered blocks, so both see the same point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnitPoint {
    head: u64,
    key: u64,
}

impl UnitPoint {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            head: rng.random(),
            key: rng.random(),
        }
    }

    pub fn from_parts(head: u64, key: u64) -> Self {
        Self { head, key }
    }

    pub fn value(&self) -> f64 {
        to_unit(self.head)
    }

    /// Index of the dyadic cell of width `2^-depth` containing the point.
    #[inline]
    pub fn cell(&self, depth: u32) -> usize {
        if depth == 0 {
            0
        } else {
            (self.head >> (64 - depth)) as usize
        }
    }

    /// Value of the digit block `id`, `bits` wide.
    #[inline]
    pub fn block(&self, id: u64, bits: u32) -> usize {
        let h = mix64(self.key ^ mix64(id.wrapping_add(0x632b_e59b_d9b4_e019)));
        if bits == 0 {
            0
        } else {
            (h >> (64 - bits)) as usize
        }
    }
}
