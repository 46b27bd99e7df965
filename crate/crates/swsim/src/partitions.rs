//! Partitions as sliding-block codes over orbit windows.
//!
//! A [`SlidingBlockPartition`] maps each orbit position to one of `k` parts
//! by applying a total window code to the scoped coordinate track. Keeping
//! the code intensional makes coordinate measurability a structural
//! property: an x-only partition cannot read y symbols at all.
//!
//! Evaluating a partition along an orbit yields a [`SymbolTrack`], which is
//! what all downstream machinery (towers, names, painting, the codec)
//! consumes. Positions within the window radius of either orbit end use a
//! fill symbol; statistics that need exactness skip those edges.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sources::Orbit;

/// Symbols are small nonnegative integers.
pub type Symbol = u16;
/// A word of symbols, e.g. a name read up a tower block.
pub type Word = Vec<Symbol>;

/// Default cap on distinct blocks held by the block-entropy estimator.
pub const DEFAULT_BLOCK_TABLE_CAP: usize = 1 << 23;

const TRACK_MAGIC: [u8; 4] = *b"SWT1";
const TRACK_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("track lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("window table has {got} entries, expected alphabet^width = {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("window table is too large to materialize ({alphabet}^{width})")]
    TableTooLarge { alphabet: usize, width: usize },
    #[error("table entry {value} out of range for {parts} parts")]
    EntryOutOfRange { value: Symbol, parts: usize },
    #[error("partition expects input alphabet {expected}, orbit provides {got}")]
    AlphabetMismatch { expected: usize, got: usize },
    #[error("parts must be at least 1")]
    NoParts,
    #[error("run length must be at least 1")]
    ZeroRunLength,
    #[error("block shape too wide: {bits} bits per block exceeds the 127-bit encoder")]
    BlockTooWide { bits: usize },
    #[error("block table exceeded the cap of {cap} distinct blocks")]
    MemoryCap { cap: usize },
    #[error("track has {parts} parts; byte serialization supports at most 256")]
    PartsTooLarge { parts: usize },
    #[error("bad track file header: {0}")]
    BadHeader(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PartitionError>;

/// Which coordinate track a partition or tower may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    XOnly,
    YOnly,
    Joint,
}

/// A symbol track aligned to orbit positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTrack {
    pub values: Vec<Symbol>,
    pub parts: usize,
}

impl SymbolTrack {
    pub fn new(values: Vec<Symbol>, parts: usize) -> Self {
        debug_assert!(values.iter().all(|&v| (v as usize) < parts));
        Self { values, parts }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The word of length `m` starting at `base`.
    pub fn word_at(&self, base: usize, m: usize) -> Word {
        self.values[base..base + m].to_vec()
    }

    /// Serialize: 16-byte header (magic, version, parts, length), then one
    /// byte per symbol. Errors for more than 256 parts.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.parts > 256 {
            return Err(PartitionError::PartsTooLarge { parts: self.parts });
        }
        let mut out = Vec::with_capacity(16 + self.len());
        out.extend_from_slice(&TRACK_MAGIC);
        out.push(TRACK_VERSION);
        out.push((self.parts - 1) as u8);
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend(self.values.iter().map(|&v| v as u8));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(PartitionError::BadHeader("shorter than header".into()));
        }
        if bytes[0..4] != TRACK_MAGIC {
            return Err(PartitionError::BadHeader("bad magic".into()));
        }
        if bytes[4] != TRACK_VERSION {
            return Err(PartitionError::BadHeader(format!("version {}", bytes[4])));
        }
        let parts = bytes[5] as usize + 1;
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() != 16 + n {
            return Err(PartitionError::BadHeader(format!(
                "expected {} payload bytes, got {}",
                n,
                bytes.len() - 16
            )));
        }
        let values: Vec<Symbol> = bytes[16..].iter().map(|&b| b as Symbol).collect();
        if let Some(&v) = values.iter().find(|&&v| v as usize >= parts) {
            return Err(PartitionError::BadHeader(format!(
                "symbol {v} out of range for {parts} parts"
            )));
        }
        Ok(Self { values, parts })
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// A finite-window code from scoped orbit windows to `{0..k-1}`.
///
/// The table is indexed in row-major window order: the leftmost window cell
/// is the most significant digit base `input_alphabet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlidingBlockPartition {
    pub parts: usize,
    pub radius: usize,
    pub scope: Scope,
    pub input_alphabet: usize,
    pub fill: Symbol,
    pub table: Vec<Symbol>,
}

impl SlidingBlockPartition {
    pub fn new(
        parts: usize,
        radius: usize,
        scope: Scope,
        input_alphabet: usize,
        fill: Symbol,
        table: Vec<Symbol>,
    ) -> Result<Self> {
        if parts == 0 {
            return Err(PartitionError::NoParts);
        }
        let width = 2 * radius + 1;
        let expected = checked_table_len(input_alphabet, width)?;
        if table.len() != expected {
            return Err(PartitionError::TableSize {
                expected,
                got: table.len(),
            });
        }
        if let Some(&v) = table.iter().find(|&&v| v as usize >= parts) {
            return Err(PartitionError::EntryOutOfRange { value: v, parts });
        }
        Ok(Self {
            parts,
            radius,
            scope,
            input_alphabet,
            fill,
            table,
        })
    }

    /// The coordinate partition: radius 0, identity on the scoped symbol.
    pub fn coordinate(scope: Scope, alphabet: usize) -> Self {
        Self::new(
            alphabet,
            0,
            scope,
            alphabet,
            0,
            (0..alphabet as Symbol).collect(),
        )
        .unwrap()
    }

    /// The constant partition with `parts` parts, always emitting 0.
    pub fn constant(scope: Scope, alphabet: usize, parts: usize) -> Self {
        Self::new(parts, 0, scope, alphabet, 0, vec![0; alphabet]).unwrap()
    }

    /// Evaluate along an orbit, producing one symbol per position.
    pub fn evaluate(&self, orbit: &Orbit) -> Result<SymbolTrack> {
        let scoped: Vec<Symbol> = match self.scope {
            Scope::XOnly => orbit.xs.clone(),
            Scope::YOnly => orbit.ys.clone(),
            Scope::Joint => orbit
                .xs
                .iter()
                .zip(&orbit.ys)
                .map(|(&x, &y)| x * orbit.y_alpha as u16 + y)
                .collect(),
        };
        let provided = match self.scope {
            Scope::XOnly => orbit.x_alpha,
            Scope::YOnly => orbit.y_alpha,
            Scope::Joint => orbit.x_alpha * orbit.y_alpha,
        };
        if provided != self.input_alphabet {
            return Err(PartitionError::AlphabetMismatch {
                expected: self.input_alphabet,
                got: provided,
            });
        }
        Ok(self.evaluate_symbols(&scoped))
    }

    /// Evaluate over a raw scoped symbol sequence.
    pub fn evaluate_symbols(&self, scoped: &[Symbol]) -> SymbolTrack {
        let n = scoped.len();
        let a = self.input_alphabet;
        let r = self.radius as isize;
        let mut values = Vec::with_capacity(n);
        for i in 0..n as isize {
            let mut idx = 0usize;
            for j in (i - r)..=(i + r) {
                let s = if j < 0 || j >= n as isize {
                    self.fill
                } else {
                    scoped[j as usize]
                };
                idx = idx * a + s as usize;
            }
            values.push(self.table[idx]);
        }
        SymbolTrack {
            values,
            parts: self.parts,
        }
    }

    /// Apply the window code to one word, filling where the window would
    /// reach past the word ends. This is how block-local codes are lifted
    /// to whole names.
    pub fn apply_to_word(&self, word: &[Symbol]) -> Word {
        self.evaluate_symbols(word).values
    }
}

fn checked_table_len(alphabet: usize, width: usize) -> Result<usize> {
    let mut len: usize = 1;
    for _ in 0..width {
        len = len
            .checked_mul(alphabet)
            .filter(|&l| l <= (1 << 28))
            .ok_or(PartitionError::TableTooLarge { alphabet, width })?;
    }
    Ok(len)
}

/// Fraction of positions where two equal-length tracks disagree.
pub fn partition_distance(p: &SymbolTrack, q: &SymbolTrack) -> Result<f64> {
    if p.len() != q.len() {
        return Err(PartitionError::LengthMismatch(p.len(), q.len()));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let mismatches = p
        .values
        .iter()
        .zip(&q.values)
        .filter(|(a, b)| a != b)
        .count();
    Ok(mismatches as f64 / p.len() as f64)
}

/// Empirical conditional block entropy `H(blocks k+1) - H(blocks k)` in bits,
/// from sliding-window frequencies. `k = 0` gives the single-symbol entropy.
pub fn empirical_block_entropy(track: &SymbolTrack, k: usize) -> Result<f64> {
    empirical_block_entropy_with_cap(track, k, DEFAULT_BLOCK_TABLE_CAP)
}

/// As [`empirical_block_entropy`] with an explicit cap on distinct blocks.
pub fn empirical_block_entropy_with_cap(track: &SymbolTrack, k: usize, cap: usize) -> Result<f64> {
    let bits = sym_bits(track.parts);
    let width = k + 1;
    if bits * width > 127 {
        return Err(PartitionError::BlockTooWide { bits: bits * width });
    }
    let long = block_table(track, width, bits, cap)?;
    let h_long = table_entropy(&long);
    if k == 0 {
        return Ok(h_long);
    }
    let short = block_table(track, k, bits, cap)?;
    Ok(h_long - table_entropy(&short))
}

fn sym_bits(parts: usize) -> usize {
    let mut bits = 1;
    while (1usize << bits) < parts {
        bits += 1;
    }
    bits
}

fn block_table(track: &SymbolTrack, width: usize, bits: usize, cap: usize) -> Result<Vec<u64>> {
    let n = track.len();
    if n < width {
        return Ok(Vec::new());
    }
    let mask: u128 = (1u128 << (bits * width)) - 1;
    let mut counts: HashMap<u128, u64> = HashMap::new();
    let mut code: u128 = 0;
    for (i, &v) in track.values.iter().enumerate() {
        code = ((code << bits) | v as u128) & mask;
        if i + 1 >= width {
            *counts.entry(code).or_insert(0) += 1;
            if counts.len() > cap {
                return Err(PartitionError::MemoryCap { cap });
            }
        }
    }
    Ok(counts.into_values().collect())
}

fn table_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// True iff the track contains no run of `ell` consecutive zeros.
pub fn is_admissible(track: &SymbolTrack, ell: usize) -> Result<bool> {
    if ell == 0 {
        return Err(PartitionError::ZeroRunLength);
    }
    let mut run = 0usize;
    for &v in &track.values {
        if v == 0 {
            run += 1;
            if run >= ell {
                return Ok(false);
            }
        } else {
            run = 0;
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::JointSource;
    use proptest::prelude::*;
    use rand::Rng;

    fn track(vals: &[u16], parts: usize) -> SymbolTrack {
        SymbolTrack::new(vals.to_vec(), parts)
    }

    #[test]
    fn coordinate_partition_reproduces_x_track() {
        let orbit = JointSource::dsbs(0.3).sample_orbit(500, 1).unwrap();
        let p = SlidingBlockPartition::coordinate(Scope::XOnly, 2);
        let t = p.evaluate(&orbit).unwrap();
        assert_eq!(t.values, orbit.xs);
    }

    #[test]
    fn constant_partition_is_all_zero() {
        let orbit = JointSource::dsbs(0.3).sample_orbit(100, 2).unwrap();
        let p = SlidingBlockPartition::constant(Scope::Joint, 4, 3);
        let t = p.evaluate(&orbit).unwrap();
        assert!(t.values.iter().all(|&v| v == 0));
        assert_eq!(t.parts, 3);
    }

    #[test]
    fn majority_of_three_hand_case() {
        // Window (l, c, r) -> majority bit; fill 0 at the ends.
        let table = vec![0, 0, 0, 1, 0, 1, 1, 1];
        let p = SlidingBlockPartition::new(2, 1, Scope::XOnly, 2, 0, table).unwrap();
        let out = p.evaluate_symbols(&[0, 1, 1, 0, 1]);
        assert_eq!(out.values, vec![0, 1, 1, 1, 0]);
    }

    #[test]
    fn evaluation_reads_only_its_window() {
        let table = vec![0, 0, 0, 1, 0, 1, 1, 1];
        let p = SlidingBlockPartition::new(2, 1, Scope::XOnly, 2, 0, table).unwrap();
        let mut a = vec![0u16, 1, 1, 0, 1, 0, 0, 1];
        let before = p.evaluate_symbols(&a);
        a[6] = 1; // outside the window of position 3
        let after = p.evaluate_symbols(&a);
        assert_eq!(before.values[3], after.values[3]);
    }

    #[test]
    fn distance_basics() {
        let a = track(&[0, 1, 0, 1], 2);
        assert_eq!(partition_distance(&a, &a).unwrap(), 0.0);
        let b = track(&[1, 0, 1, 0], 2);
        assert_eq!(partition_distance(&a, &b).unwrap(), 1.0);
        let c = track(&[0, 1], 2);
        assert!(partition_distance(&a, &c).is_err());
    }

    #[test]
    fn distance_counts_planted_flips_exactly() {
        let n = 10_000;
        let base: Vec<u16> = (0..n).map(|i| (i % 2) as u16).collect();
        let mut flipped = base.clone();
        for i in (0..n).step_by(10) {
            flipped[i] ^= 1;
        }
        let d = partition_distance(&track(&base, 2), &track(&flipped, 2)).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn block_entropy_constant_and_periodic() {
        let c = track(&vec![0u16; 1000], 1);
        assert_eq!(empirical_block_entropy(&c, 3).unwrap(), 0.0);
        let p: Vec<u16> = (0..1000).map(|i| (i % 2) as u16).collect();
        let h = empirical_block_entropy(&track(&p, 2), 2).unwrap();
        assert!(
            h.abs() < 1e-5,
            "period-2 track must have zero rate, got {h}"
        );
    }

    #[test]
    fn block_entropy_fair_coin() {
        let mut rng = crate::seeding::rng_from(17);
        let vals: Vec<u16> = (0..1_000_000).map(|_| rng.gen_range(0..2u16)).collect();
        let h = empirical_block_entropy(&track(&vals, 2), 8).unwrap();
        assert!((h - 1.0).abs() < 0.01, "fair-coin rate {h}");
    }

    #[test]
    fn block_entropy_uniform_three_parts() {
        let mut rng = crate::seeding::rng_from(23);
        let vals: Vec<u16> = (0..1_000_000).map(|_| rng.gen_range(0..3u16)).collect();
        let h = empirical_block_entropy(&track(&vals, 3), 6).unwrap();
        assert!((h - 3f64.log2()).abs() < 0.02, "uniform-3 rate {h}");
    }

    #[test]
    fn block_entropy_memory_cap() {
        let mut rng = crate::seeding::rng_from(29);
        let vals: Vec<u16> = (0..100_000).map(|_| rng.gen_range(0..2u16)).collect();
        let err = empirical_block_entropy_with_cap(&track(&vals, 2), 12, 16).unwrap_err();
        assert!(matches!(err, PartitionError::MemoryCap { .. }));
    }

    #[test]
    fn admissibility_cases() {
        assert!(is_admissible(&track(&[1, 1, 1, 1], 2), 2).unwrap());
        assert!(!is_admissible(&track(&[1, 0, 0, 1], 2), 2).unwrap());
        let t = track(&[1, 0, 1, 0, 0, 1], 2);
        assert!(is_admissible(&t, 3).unwrap());
        assert!(!is_admissible(&t, 2).unwrap());
        assert!(is_admissible(&track(&[], 2), 1).unwrap());
        assert!(is_admissible(&SymbolTrack::new(vec![], 2), 1).unwrap());
    }

    #[test]
    fn track_bytes_roundtrip_and_validation() {
        let t = track(&[0, 1, 2, 1, 0], 3);
        let bytes = t.to_bytes().unwrap();
        assert_eq!(SymbolTrack::from_bytes(&bytes).unwrap(), t);
        let mut bad = bytes.clone();
        bad[16] = 7; // symbol out of range
        assert!(SymbolTrack::from_bytes(&bad).is_err());
        let wide = SymbolTrack::new(vec![300], 301);
        assert!(wide.to_bytes().is_err());
    }

    #[test]
    fn partition_config_roundtrip() {
        let p = SlidingBlockPartition::new(2, 1, Scope::XOnly, 2, 0, vec![0, 0, 0, 1, 0, 1, 1, 1])
            .unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: SlidingBlockPartition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        // Unknown fields are rejected.
        let bad = json.replace('}', ",\"extra\":1}");
        assert!(serde_json::from_str::<SlidingBlockPartition>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_triangular(
            a in prop::collection::vec(0u16..3, 50),
            b in prop::collection::vec(0u16..3, 50),
            c in prop::collection::vec(0u16..3, 50),
        ) {
            let (ta, tb, tc) = (track(&a, 3), track(&b, 3), track(&c, 3));
            let dab = partition_distance(&ta, &tb).unwrap();
            let dba = partition_distance(&tb, &ta).unwrap();
            let dac = partition_distance(&ta, &tc).unwrap();
            let dcb = partition_distance(&tc, &tb).unwrap();
            prop_assert!((dab - dba).abs() < 1e-15);
            prop_assert!(dab <= dac + dcb + 1e-15);
        }

        #[test]
        fn x_only_partitions_ignore_y_rewrites(
            table in prop::collection::vec(0u16..2, 8),
            seed in 0u64..1000,
        ) {
            let p = SlidingBlockPartition::new(2, 1, Scope::XOnly, 2, 0, table).unwrap();
            let src = JointSource::dsbs(0.25);
            let orbit = src.sample_orbit(300, seed).unwrap();
            let base = p.evaluate(&orbit).unwrap();
            let mut rewritten = orbit.clone();
            let mut rng = crate::seeding::rng_from(seed ^ 0xdead);
            for y in rewritten.ys.iter_mut() {
                *y = rng.gen_range(0..2);
            }
            let after = p.evaluate(&rewritten).unwrap();
            prop_assert_eq!(base.values, after.values);
        }
    }
}
