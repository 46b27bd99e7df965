//! Verification suites: executable checks of the library's counting,
//! ranking, recovery, distance, and binning claims against independent
//! oracles. The CLI `verify` verb runs these and the acceptance tests pin
//! their thresholds.
//!
//! The admissible-count oracle enumerates words directly and shares no code
//! with the dynamic-programming counter it checks.

use num_bigint::BigUint;
use rand::Rng;

use crate::codebooks::{
    count_admissible, growth_rate, verify_binning_lemma_parallel, Codebook, PaintingData,
};
use crate::painting::{paint, recover_bases, recover_bases_repaint, repaint};
use crate::partitions::{partition_distance, Symbol, SymbolTrack, Word};
use crate::seeding::{rng_from, sub_seed, uniform_biguint_below};
use crate::towers::Tower;

/// Brute-force enumeration of admissible words in lexicographic order.
/// Independent oracle for the codebook counter and ranker.
pub fn brute_force_admissible(n: usize, ell: usize, alphabet: usize) -> Vec<Word> {
    fn rec(
        word: &mut Word,
        i: usize,
        run: usize,
        ell: usize,
        alphabet: usize,
        out: &mut Vec<Word>,
    ) {
        if i == word.len() {
            out.push(word.clone());
            return;
        }
        for s in 0..alphabet as Symbol {
            if i == 0 && s != 1 {
                continue;
            }
            let next_run = if s == 0 { run + 1 } else { 0 };
            if next_run >= ell {
                continue;
            }
            word[i] = s;
            rec(word, i + 1, next_run, ell, alphabet, out);
        }
    }
    let mut out = Vec::new();
    let mut word = vec![0 as Symbol; n];
    rec(&mut word, 0, 0, ell, alphabet, &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct AdmissibleCase {
    pub n: usize,
    pub ell: usize,
    pub alphabet: usize,
    pub dp_count: BigUint,
    pub oracle_count: usize,
    pub pass: bool,
}

/// Exact-count oracle over the full grid `n <= max_n`, `ell in ells`,
/// `alphabet in alphabets`.
pub fn admissible_suite(max_n: usize, ells: &[usize], alphabets: &[usize]) -> Vec<AdmissibleCase> {
    let mut out = Vec::new();
    for &alphabet in alphabets {
        for &ell in ells {
            for n in 1..=max_n {
                let words = brute_force_admissible(n, ell, alphabet);
                let dp = count_admissible(n, ell, alphabet).expect("valid grid");
                out.push(AdmissibleCase {
                    n,
                    ell,
                    alphabet,
                    pass: dp == BigUint::from(words.len()),
                    dp_count: dp,
                    oracle_count: words.len(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct GrowthCase {
    pub n: usize,
    pub ell: usize,
    pub alphabet: usize,
    pub rate: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// The two pinned growth-rate thresholds.
pub fn growth_suite() -> Vec<GrowthCase> {
    let cases = [
        (1000usize, 10usize, 2usize, 0.99),
        (500, 4, 3, 3f64.log2() - 0.05),
    ];
    cases
        .iter()
        .map(|&(n, ell, alphabet, threshold)| {
            let rate = growth_rate(n, ell, alphabet).expect("valid case");
            GrowthCase {
                n,
                ell,
                alphabet,
                rate,
                threshold,
                pass: rate >= threshold,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RankCase {
    pub n: usize,
    pub ell: usize,
    pub alphabet: usize,
    pub words_checked: usize,
    pub pass: bool,
}

/// Rank/unrank bijection: exhaustive against the oracle enumeration for
/// `n <= max_n`, then random round-trips at length 200.
pub fn rank_suite(max_n: usize, random_trips: usize, seed: u64) -> Vec<RankCase> {
    let mut out = Vec::new();
    for alphabet in [2usize, 3] {
        for ell in 1..=4usize {
            for n in (2..=max_n).step_by(3) {
                let cb = Codebook::new(n, ell, alphabet).expect("valid");
                let words = brute_force_admissible(n, ell, alphabet);
                let mut pass = BigUint::from(words.len()) == *cb.count();
                for (i, w) in words.iter().enumerate() {
                    let i_big = BigUint::from(i);
                    if cb.rank(w).map(|r| r != i_big).unwrap_or(true)
                        || cb.unrank(&i_big).map(|u| &u != w).unwrap_or(true)
                    {
                        pass = false;
                        break;
                    }
                }
                out.push(RankCase {
                    n,
                    ell,
                    alphabet,
                    words_checked: words.len(),
                    pass,
                });
            }
        }
    }
    // Long-word round trips.
    let cb = Codebook::new(200, 4, 2).expect("valid");
    let mut rng = rng_from(sub_seed(seed, "rank.long"));
    let mut pass = true;
    for _ in 0..random_trips {
        let idx = uniform_biguint_below(&mut rng, cb.count());
        let word = cb.unrank(&idx).expect("below count");
        if cb.rank(&word).expect("admissible by construction") != idx {
            pass = false;
            break;
        }
    }
    out.push(RankCase {
        n: 200,
        ell: 4,
        alphabet: 2,
        words_checked: random_trips,
        pass,
    });
    out
}

#[derive(Debug, Clone)]
pub struct RecoveryInstance {
    pub idx: usize,
    pub m: usize,
    pub ell: usize,
    pub alphabet: usize,
    pub eps: f64,
    pub blocks: usize,
    pub paint_recovery_exact: bool,
    pub repaint_recovery_exact: bool,
    pub repaint_distance: f64,
    pub distance_bound: f64,
    pub distance_ok: bool,
}

impl RecoveryInstance {
    pub fn pass(&self) -> bool {
        self.paint_recovery_exact && self.repaint_recovery_exact && self.distance_ok
    }
}

/// Seeded grid of paint/repaint instances with planted towers: base
/// recovery must be exact and the repaint distance bound must hold with
/// zero tolerance.
pub fn recovery_suite(instances: usize, seed: u64) -> Vec<RecoveryInstance> {
    let mut out = Vec::with_capacity(instances);
    for idx in 0..instances {
        let mut rng = rng_from(sub_seed(seed, &format!("recovery.{idx}")));
        let m = rng.gen_range(50..=5000usize);
        let ell = rng.gen_range(2..=12usize);
        let alphabet = if rng.gen_bool(0.5) { 2usize } else { 3 };
        let eps = rng.gen_range(0.05..=0.3f64);

        // Plant a tower with slack gaps and a partial block at the end.
        let blocks_target = 40usize;
        let n = m * blocks_target + m / 2;
        let mut bases = Vec::new();
        let mut pos = rng.gen_range(0..m.min(64));
        while pos + m <= n {
            bases.push(pos);
            pos += m + rng.gen_range(0..m / 8 + 1);
        }
        let tower = Tower::from_bases(bases.clone(), m, crate::partitions::Scope::Joint, n)
            .expect("planted tower is valid");
        let names: Vec<(usize, Word)> = bases
            .iter()
            .map(|&b| (b, vec![(b % 251) as Symbol, (idx % 97) as Symbol]))
            .collect();

        let pd = PaintingData::new(
            Codebook::new(m - ell, ell, alphabet).expect("valid"),
            sub_seed(seed, &format!("recovery.paint.{idx}")),
        )
        .expect("nonempty");
        let painted = paint(n, &tower, &names, &pd, ell).expect("layout fits");
        let paint_recovery_exact = recover_bases(&painted, ell) == bases;

        // Admissible current track for the repaint side.
        let mut vals = Vec::with_capacity(n);
        let mut run = 0usize;
        for _ in 0..n {
            let v: Symbol = if run + 1 >= ell {
                1 + rng.gen_range(0..(alphabet - 1) as Symbol)
            } else {
                rng.gen_range(0..alphabet as Symbol)
            };
            run = if v == 0 { run + 1 } else { 0 };
            vals.push(v);
        }
        let current = SymbolTrack::new(vals, alphabet);
        let head = (eps * m as f64).floor() as usize;
        let rpd = PaintingData::new(
            Codebook::new(head, ell, alphabet).expect("valid"),
            sub_seed(seed, &format!("recovery.repaint.{idx}")),
        )
        .expect("nonempty");
        let repainted = repaint(&current, &tower, &names, Some(&rpd), eps, ell)
            .expect("zones fit by construction");
        let repaint_recovery_exact = recover_bases_repaint(&repainted, ell) == bases;
        let repaint_distance = partition_distance(&current, &repainted).expect("same length");
        let distance_bound = eps + 2.0 * ell as f64 / m as f64 + (1.0 - tower.coverage);

        out.push(RecoveryInstance {
            idx,
            m,
            ell,
            alphabet,
            eps,
            blocks: bases.len(),
            paint_recovery_exact,
            repaint_recovery_exact,
            repaint_distance,
            distance_bound,
            distance_ok: repaint_distance <= distance_bound,
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct BinningCase {
    pub universe: usize,
    pub fiber_a: usize,
    pub bins_b: usize,
    pub eps: f64,
    pub trials: usize,
    pub success_fraction: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// The pinned binning grid: per cell, the success fraction must reach
/// `1 - sqrt(eps) - 3 sqrt(sqrt(eps) (1 - sqrt(eps)) / trials)`.
pub fn binning_suite(
    universe: usize,
    trials: usize,
    seed: u64,
    threads: usize,
) -> Vec<BinningCase> {
    let mut out = Vec::new();
    for &eps in &[0.04f64, 0.25] {
        for &(fiber_a, bins_b) in &[(10usize, 1000usize), (100, 1000)] {
            let rep = verify_binning_lemma_parallel(
                universe,
                fiber_a,
                bins_b,
                eps,
                trials,
                sub_seed(seed, &format!("binning.{eps}.{fiber_a}.{bins_b}")),
                threads,
            );
            let s = eps.sqrt();
            let threshold = 1.0 - s - 3.0 * (s * (1.0 - s) / trials as f64).sqrt();
            out.push(BinningCase {
                universe,
                fiber_a,
                bins_b,
                eps,
                trials,
                success_fraction: rep.success_fraction,
                threshold,
                pass: rep.success_fraction >= threshold,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_matches_known_anchors() {
        assert_eq!(brute_force_admissible(1, 2, 2).len(), 1);
        let w3 = brute_force_admissible(3, 2, 2);
        assert_eq!(w3, vec![vec![1, 0, 1], vec![1, 1, 0], vec![1, 1, 1]]);
        assert_eq!(brute_force_admissible(3, 2, 3).len(), 8);
    }

    #[test]
    fn small_suites_pass() {
        assert!(admissible_suite(8, &[1, 2, 3], &[2, 3])
            .iter()
            .all(|c| c.pass));
        assert!(growth_suite().iter().all(|c| c.pass));
        assert!(rank_suite(8, 200, 5).iter().all(|c| c.pass));
        assert!(recovery_suite(6, 11).iter().all(|c| c.pass()));
    }

    #[test]
    fn binning_smoke() {
        let cases = binning_suite(1000, 30, 3, 2);
        assert_eq!(cases.len(), 4);
        assert!(cases.iter().all(|c| c.pass), "{cases:?}");
    }
}
