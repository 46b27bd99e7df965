//! Run-length-constrained codebooks and seeded painting data.
//!
//! `Codebook(n, ell, a)` holds the words of length `n` over `{0..a-1}` that
//! start with symbol 1 and contain no run of `ell` consecutive zeros. The
//! count is exact (arbitrary precision), and rank/unrank give the
//! lexicographic bijection with `[0, count)`. The leading 1 and the absence
//! of long zero runs are what let a decoder resynchronize block starts from
//! the painted track alone.
//!
//! [`PaintingData`] realizes a random function from names to codewords as a
//! seeded hash: the domain is astronomically large, but the constructions
//! only ever evaluate it on names that occur along an orbit. Inverse lookups
//! are done by filtering an explicit candidate set by image, never by
//! inverting the hash.

use num_bigint::BigUint;
use thiserror::Error;

use crate::partitions::{Symbol, Word};
use crate::seeding::{rng_from, stable_hash64, uniform_biguint_below, word_hash64};

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("word length must be at least 1")]
    ZeroLength,
    #[error("zero-run bound must be at least 1")]
    ZeroRun,
    #[error("alphabet must have at least 2 symbols (got {0})")]
    AlphabetTooSmall(usize),
    #[error("codebook is empty")]
    Empty,
    #[error("word has length {got}, codebook expects {expected}")]
    WordLength { expected: usize, got: usize },
    #[error("word is not in the codebook: {0}")]
    Inadmissible(String),
    #[error("rank {0} out of range")]
    RankOutOfRange(BigUint),
}

pub type Result<T> = std::result::Result<T, CodebookError>;

/// The set of admissible words with exact count and ranking tables.
#[derive(Debug, Clone)]
pub struct Codebook {
    n: usize,
    ell: usize,
    alphabet: usize,
    /// `suffix[m][r]` = admissible completions of length `m` when the
    /// current trailing zero run has length `r`.
    suffix: Vec<Vec<BigUint>>,
    count: BigUint,
}

impl Codebook {
    pub fn new(n: usize, ell: usize, alphabet: usize) -> Result<Self> {
        if n == 0 {
            return Err(CodebookError::ZeroLength);
        }
        if ell == 0 {
            return Err(CodebookError::ZeroRun);
        }
        if alphabet < 2 {
            return Err(CodebookError::AlphabetTooSmall(alphabet));
        }
        let nonzero = BigUint::from(alphabet - 1);
        let mut suffix = vec![vec![BigUint::from(0u32); ell]; n];
        for cell in suffix[0].iter_mut() {
            *cell = BigUint::from(1u32);
        }
        for m in 1..n {
            for r in 0..ell {
                let mut v = &nonzero * &suffix[m - 1][0];
                if r + 1 < ell {
                    v += &suffix[m - 1][r + 1];
                }
                suffix[m][r] = v;
            }
        }
        // First symbol is forced to 1, so the count is the number of
        // completions of length n - 1 with a fresh (empty) zero run.
        let count = suffix[n - 1][0].clone();
        Ok(Self {
            n,
            ell,
            alphabet,
            suffix,
            count,
        })
    }

    pub fn word_len(&self) -> usize {
        self.n
    }

    pub fn run_bound(&self) -> usize {
        self.ell
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn count(&self) -> &BigUint {
        &self.count
    }

    /// log2 of the count, accurate to f64 precision.
    pub fn log2_count(&self) -> f64 {
        log2_biguint(&self.count)
    }

    /// Words per symbol: `(1/n) log2 count`.
    pub fn growth_rate(&self) -> f64 {
        self.log2_count() / self.n as f64
    }

    fn check_word(&self, word: &[Symbol]) -> Result<()> {
        if word.len() != self.n {
            return Err(CodebookError::WordLength {
                expected: self.n,
                got: word.len(),
            });
        }
        if word[0] != 1 {
            return Err(CodebookError::Inadmissible("first symbol must be 1".into()));
        }
        let mut run = 0usize;
        for &s in word {
            if s as usize >= self.alphabet {
                return Err(CodebookError::Inadmissible(format!(
                    "symbol {s} outside alphabet {}",
                    self.alphabet
                )));
            }
            if s == 0 {
                run += 1;
                if run >= self.ell {
                    return Err(CodebookError::Inadmissible(format!(
                        "contains a zero run of length {}",
                        self.ell
                    )));
                }
            } else {
                run = 0;
            }
        }
        Ok(())
    }

    /// Lexicographic index of an admissible word.
    pub fn rank(&self, word: &[Symbol]) -> Result<BigUint> {
        self.check_word(word)?;
        let mut rank = BigUint::from(0u32);
        let mut run = 0usize;
        for (i, &s) in word.iter().enumerate().skip(1) {
            let remaining = self.n - 1 - i;
            for smaller in 0..s {
                if smaller == 0 {
                    if run + 1 < self.ell {
                        rank += &self.suffix[remaining][run + 1];
                    }
                } else {
                    rank += &self.suffix[remaining][0];
                }
            }
            run = if s == 0 { run + 1 } else { 0 };
        }
        Ok(rank)
    }

    /// The admissible word at lexicographic index `rank`.
    pub fn unrank(&self, rank: &BigUint) -> Result<Word> {
        if rank >= &self.count {
            return Err(CodebookError::RankOutOfRange(rank.clone()));
        }
        let mut rest = rank.clone();
        let mut word = Vec::with_capacity(self.n);
        word.push(1);
        let mut run = 0usize;
        for i in 1..self.n {
            let remaining = self.n - 1 - i;
            let mut chosen = None;
            for s in 0..self.alphabet as Symbol {
                let block = if s == 0 {
                    if run + 1 < self.ell {
                        self.suffix[remaining][run + 1].clone()
                    } else {
                        BigUint::from(0u32)
                    }
                } else {
                    self.suffix[remaining][0].clone()
                };
                if rest < block {
                    chosen = Some(s);
                    break;
                }
                rest -= block;
            }
            let s = chosen.expect("rank below count always resolves a symbol");
            run = if s == 0 { run + 1 } else { 0 };
            word.push(s);
        }
        Ok(word)
    }

    /// All words in lexicographic order, by repeated unranking. Intended for
    /// small `n` in tests and verification suites.
    pub fn enumerate(&self) -> Vec<Word> {
        let mut out = Vec::new();
        let mut i = BigUint::from(0u32);
        while i < self.count {
            out.push(self.unrank(&i).unwrap());
            i += 1u32;
        }
        out
    }
}

/// Exact size of the codebook.
pub fn count_admissible(n: usize, ell: usize, alphabet: usize) -> Result<BigUint> {
    Ok(Codebook::new(n, ell, alphabet)?.count().clone())
}

/// `(1/n) log2 |codebook|`.
pub fn growth_rate(n: usize, ell: usize, alphabet: usize) -> Result<f64> {
    Ok(Codebook::new(n, ell, alphabet)?.growth_rate())
}

fn log2_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 64 {
        let words = v.to_u64_digits();
        return (words[0] as f64).log2();
    }
    // Top 64 bits as mantissa, rest as exponent.
    let shift = bits - 64;
    let top = v >> shift;
    let words = top.to_u64_digits();
    (words[0] as f64).log2() + shift as f64
}

/// A seeded total assignment of names to codewords.
///
/// `apply(name)` draws a uniform index below the count from a ChaCha stream
/// keyed by `(seed, name)` and unranks it, so the map is deterministic per
/// seed and marginally near-uniform over the codebook.
#[derive(Debug, Clone)]
pub struct PaintingData {
    codebook: Codebook,
    seed: u64,
}

impl PaintingData {
    pub fn new(codebook: Codebook, seed: u64) -> Result<Self> {
        if codebook.count() == &BigUint::from(0u32) {
            return Err(CodebookError::Empty);
        }
        Ok(Self { codebook, seed })
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index assigned to the name, uniform below the count.
    pub fn index_for(&self, name: &[Symbol]) -> BigUint {
        let mut rng = rng_from(word_hash64(self.seed, name));
        uniform_biguint_below(&mut rng, self.codebook.count())
    }

    /// Codeword assigned to the name.
    pub fn apply(&self, name: &[Symbol]) -> Word {
        self.codebook
            .unrank(&self.index_for(name))
            .expect("index drawn below count")
    }

    /// Members of `candidates` whose codeword equals `image`. This is the
    /// only inverse lookup the constructions need: the candidate set is
    /// always a small explicit set of observed names.
    pub fn preimage_in<'a>(&self, image: &[Symbol], candidates: &'a [Word]) -> Vec<&'a Word> {
        candidates
            .iter()
            .filter(|name| self.apply(name) == image)
            .collect()
    }
}

/// Chi-square statistic of assigned indices against a uniform binning of
/// the codebook index range.
pub fn painting_uniformity_chi2(pd: &PaintingData, names: &[Word], bins: usize) -> f64 {
    let mut counts = vec![0u64; bins];
    let total = pd.codebook().count().clone();
    for name in names {
        let idx = pd.index_for(name);
        // bin = floor(idx * bins / count)
        let bin_big = idx * BigUint::from(bins) / &total;
        let bin = bin_big.to_u64_digits().first().copied().unwrap_or(0) as usize;
        counts[bin.min(bins - 1)] += 1;
    }
    let expected = names.len() as f64 / bins as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Outcome of the random-binning balance experiment.
#[derive(Debug, Clone, Copy)]
pub struct BinningReport {
    pub success_fraction: f64,
    pub predicted_lower: f64,
    pub trials: usize,
}

/// Monte Carlo check of the random-binning balance bound.
///
/// Per trial: a fresh point set `Z` of `universe` points, each with a random
/// candidate set of size `fiber_a` containing its own image point, and a
/// fresh uniform binning of the universe into `bins_b` bins. A point is good
/// when its bin meets its candidate set in fewer than `1 + (a/b)/eps`
/// elements; a trial succeeds when the good fraction exceeds `1 - sqrt(eps)`.
/// The prediction is that at least a `1 - sqrt(eps)` fraction of trials
/// succeed.
pub fn verify_binning_lemma(
    universe: usize,
    fiber_a: usize,
    bins_b: usize,
    eps: f64,
    trials: usize,
    seed: u64,
) -> BinningReport {
    verify_binning_lemma_parallel(universe, fiber_a, bins_b, eps, trials, seed, 1)
}

/// As [`verify_binning_lemma`], with trials split across `threads` workers.
/// Each trial derives its own seed from its index, so the outcome does not
/// depend on the split.
pub fn verify_binning_lemma_parallel(
    universe: usize,
    fiber_a: usize,
    bins_b: usize,
    eps: f64,
    trials: usize,
    seed: u64,
    threads: usize,
) -> BinningReport {
    let measure_floor = 1.0 - eps.sqrt();
    let threads = threads.clamp(1, trials.max(1));
    let mut successes = 0usize;
    if threads == 1 {
        for trial in 0..trials {
            if binning_trial(universe, fiber_a, bins_b, eps, trial, seed) {
                successes += 1;
            }
        }
    } else {
        let chunk = trials.div_ceil(threads);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for t in 0..threads {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(trials);
                handles.push(scope.spawn(move || {
                    (lo..hi)
                        .filter(|&trial| binning_trial(universe, fiber_a, bins_b, eps, trial, seed))
                        .count()
                }));
            }
            for h in handles {
                successes += h.join().expect("binning worker panicked");
            }
        });
    }
    BinningReport {
        success_fraction: successes as f64 / trials as f64,
        predicted_lower: measure_floor,
        trials,
    }
}

fn binning_trial(
    universe: usize,
    fiber_a: usize,
    bins_b: usize,
    eps: f64,
    trial: usize,
    seed: u64,
) -> bool {
    let threshold = 1.0 + (fiber_a as f64 / bins_b as f64) / eps;
    let measure_floor = 1.0 - eps.sqrt();
    let mut rng = rng_from(stable_hash64(seed, trial.to_le_bytes()));
    let psi: Vec<u32> = (0..universe)
        .map(|_| rand::Rng::gen_range(&mut rng, 0..bins_b as u32))
        .collect();
    let mut good = 0usize;
    for _ in 0..universe {
        let phi_z = rand::Rng::gen_range(&mut rng, 0..universe);
        let bin = psi[phi_z];
        // Candidate-set members sharing the bin; the image point itself
        // always does.
        let mut hits = 1usize;
        let mut drawn = 1usize;
        while drawn < fiber_a {
            let w = rand::Rng::gen_range(&mut rng, 0..universe);
            if w == phi_z {
                continue;
            }
            drawn += 1;
            if psi[w] == bin {
                hits += 1;
            }
        }
        if (hits as f64) < threshold {
            good += 1;
        }
    }
    good as f64 / universe as f64 > measure_floor
}
