//! Typical name sets and name maps over towers.
//!
//! A name of a tower block is the word a track spells from the base up. The
//! machinery here filters observed names into a probability band around
//! `2^{-h M}` ([`typical_names`]), associates the names of one track with
//! the names of another observed on the same blocks ([`conditional_name_map`])
//! with fibers capped by a conditional-entropy budget, and bounds how much a
//! small candidate list can inflate entropy ([`reverse_sm_bound`]).
//!
//! Probabilities are exact where a model is available (iid or Markov
//! tracks) and empirical frequencies otherwise; every `2^{c M}` quantity is
//! handled in log2 space because the exponents routinely exceed f64 range.

use std::collections::HashMap;

use thiserror::Error;

use crate::partitions::{SlidingBlockPartition, Symbol, SymbolTrack, Word};
use crate::towers::{names_along_tower, Tower};

#[derive(Debug, Error)]
pub enum TypicalityError {
    #[error("argument {0} outside [0, 1]")]
    UnitInterval(f64),
    #[error("ball radius fraction {0} must lie in [0, 1/2]")]
    RadiusRange(f64),
}

pub type Result<T> = std::result::Result<T, TypicalityError>;

/// Binary entropy in bits; `H(0) = H(1) = 0`, maximum 1 at 1/2.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(TypicalityError::UnitInterval(x));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Entropy tolerance for a candidate-list decoder: `h + H(eps) + 2 eps log2 k`.
///
/// This is the budget a k-part process can pay when a fraction `eps` of
/// blocks falls outside a candidate list of log2-size `h` per symbol.
pub fn reverse_sm_bound(h: f64, eps: f64, parts: usize) -> f64 {
    h + binary_entropy(eps).unwrap_or(0.0) + 2.0 * eps * (parts as f64).log2()
}

/// How per-name probabilities are computed.
#[derive(Debug, Clone)]
pub enum NameModel {
    /// Independent symbols with the given distribution.
    IidExact(Vec<f64>),
    /// Markov chain over track symbols: initial distribution and transitions.
    MarkovExact {
        init: Vec<f64>,
        trans: Vec<Vec<f64>>,
    },
    /// Empirical frequencies of observed names; the rate is the empirical
    /// name entropy divided by the height.
    Empirical,
}

impl NameModel {
    /// log2 probability of a name, or `None` in empirical mode.
    fn log2_prob(&self, name: &[Symbol]) -> Option<f64> {
        match self {
            NameModel::IidExact(dist) => {
                let mut lp = 0.0;
                for &s in name {
                    let p = dist[s as usize];
                    if p <= 0.0 {
                        return Some(f64::NEG_INFINITY);
                    }
                    lp += p.log2();
                }
                Some(lp)
            }
            NameModel::MarkovExact { init, trans } => {
                let mut lp = match init[name[0] as usize] {
                    p if p > 0.0 => p.log2(),
                    _ => return Some(f64::NEG_INFINITY),
                };
                for w in name.windows(2) {
                    let p = trans[w[0] as usize][w[1] as usize];
                    if p <= 0.0 {
                        return Some(f64::NEG_INFINITY);
                    }
                    lp += p.log2();
                }
                Some(lp)
            }
            NameModel::Empirical => None,
        }
    }

    /// Entropy rate of the modeled process in bits per symbol, or `None`
    /// in empirical mode.
    fn entropy_rate(&self) -> Option<f64> {
        match self {
            NameModel::IidExact(dist) => Some(
                dist.iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| -p * p.log2())
                    .sum(),
            ),
            NameModel::MarkovExact { init, trans } => {
                let mut h = 0.0;
                for (i, row) in trans.iter().enumerate() {
                    let row_h: f64 = row
                        .iter()
                        .filter(|&&p| p > 0.0)
                        .map(|&p| -p * p.log2())
                        .sum();
                    h += init[i] * row_h;
                }
                Some(h)
            }
            NameModel::Empirical => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, NameModel::Empirical)
    }
}

/// Observed names filtered to the probability band around `2^{-h M}`.
#[derive(Debug, Clone)]
pub struct NameSet {
    pub height: usize,
    pub parts: usize,
    /// Member names with their log2 probability (exact or empirical).
    pub members: HashMap<Word, f64>,
    /// Fraction of observed blocks whose name is in the set.
    pub captured_fraction: f64,
    /// Entropy rate used for the band, bits per symbol.
    pub rate: f64,
    /// Whether probabilities came from an exact model.
    pub exact: bool,
    /// When exact, whether `log2 |members| <= (h + eps) M` held.
    pub size_bound_ok: bool,
}

impl NameSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, name: &[Symbol]) -> bool {
        self.members.contains_key(name)
    }

    /// Member names in sorted order, for iteration-order-stable output.
    pub fn sorted_names(&self) -> Vec<Word> {
        let mut names: Vec<Word> = self.members.keys().cloned().collect();
        names.sort();
        names
    }
}

/// Collect the names of `track` on the tower's complete blocks and keep
/// those whose probability lies within `2^{-(h ± eps) M}`.
pub fn typical_names(tower: &Tower, track: &SymbolTrack, model: &NameModel, eps: f64) -> NameSet {
    let m = tower.height;
    let observed = names_along_tower(tower, track);
    let total = observed.len();
    let mut counts: HashMap<Word, u64> = HashMap::new();
    for (_, name) in &observed {
        *counts.entry(name.clone()).or_insert(0) += 1;
    }

    let (rate, exact) = match model.entropy_rate() {
        Some(h) => (h, true),
        None => {
            // Empirical rate: name-distribution entropy per symbol.
            let t = total as f64;
            let h_names: f64 = counts
                .values()
                .map(|&c| {
                    let p = c as f64 / t;
                    -p * p.log2()
                })
                .sum();
            (h_names / m as f64, false)
        }
    };

    let lo = -(rate + eps) * m as f64;
    let hi = -(rate - eps) * m as f64;
    let mut members = HashMap::new();
    let mut captured: u64 = 0;
    for (name, &c) in &counts {
        let lp = model
            .log2_prob(name)
            .unwrap_or_else(|| (c as f64 / total as f64).log2());
        debug_assert!(lp <= 0.0, "name log-probability above zero");
        if lp >= lo && lp <= hi {
            members.insert(name.clone(), lp);
            captured += c;
        }
    }
    let captured_fraction = if total == 0 {
        0.0
    } else {
        captured as f64 / total as f64
    };
    let size_bound_ok = !exact
        || members.is_empty()
        || (members.len() as f64).log2() <= (rate + eps) * m as f64 + 1e-9;
    debug_assert!(size_bound_ok, "typical set larger than its budget");
    NameSet {
        height: m,
        parts: track.parts,
        members,
        captured_fraction,
        rate,
        exact,
        size_bound_ok,
    }
}

/// A finite map from names to small sets of names. Unknown keys map to the
/// empty set.
#[derive(Debug, Clone)]
pub struct NameMap {
    map: HashMap<Word, Vec<Word>>,
    pub height: usize,
    /// Declared log2 bound on fiber sizes.
    pub fiber_bound_log2: f64,
    /// Fibers emptied for exceeding the bound.
    pub truncated_fibers: usize,
    /// Fraction of observed blocks whose value-name survived in the fiber
    /// of its key-name.
    pub coverage: f64,
}

impl NameMap {
    /// Fiber of `key`; empty for unknown keys.
    pub fn get(&self, key: &[Symbol]) -> &[Word] {
        self.map.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, key: &[Symbol], value: &[Symbol]) -> bool {
        self.get(key).iter().any(|w| w == value)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Largest fiber size, in log2.
    pub fn max_fiber_log2(&self) -> f64 {
        self.map
            .values()
            .map(|v| (v.len().max(1) as f64).log2())
            .fold(0.0, f64::max)
    }

    /// Histogram of fiber sizes as sorted `(size, how_many)` pairs.
    pub fn fiber_histogram(&self) -> Vec<(usize, usize)> {
        let mut h: HashMap<usize, usize> = HashMap::new();
        for v in self.map.values() {
            *h.entry(v.len()).or_insert(0) += 1;
        }
        let mut out: Vec<(usize, usize)> = h.into_iter().collect();
        out.sort();
        out
    }

    /// Compose: fibers of `self` looked up through `other`, unioned, with a
    /// fresh bound. Coverage is not recomputed here; callers measure it
    /// against their own blocks.
    pub fn compose(&self, other: &NameMap, fiber_bound_log2: f64) -> NameMap {
        let mut map: HashMap<Word, Vec<Word>> = HashMap::new();
        let mut truncated = 0usize;
        for (key, mids) in &self.map {
            let mut out: Vec<Word> = Vec::new();
            for mid in mids {
                for w in other.get(mid) {
                    if !out.contains(w) {
                        out.push(w.clone());
                    }
                }
            }
            out.sort();
            if !out.is_empty() && (out.len() as f64).log2() > fiber_bound_log2 {
                truncated += 1;
                out.clear();
            }
            map.insert(key.clone(), out);
        }
        NameMap {
            map,
            height: self.height,
            fiber_bound_log2,
            truncated_fibers: truncated,
            coverage: f64::NAN,
        }
    }
}

/// Associate the names of `p_track` with the names of `q_track` over the
/// same tower blocks: the fiber of a p-name is the set of q-names observed
/// jointly with it, emptied (and counted) when its size exceeds
/// `2^{M (h_cond + 2 eps)}`.
///
/// Coverage reports the fraction of blocks whose q-name survived in the
/// fiber of its p-name; the construction targets at least `1 - eps`.
pub fn conditional_name_map(
    tower: &Tower,
    p_track: &SymbolTrack,
    q_track: &SymbolTrack,
    eps: f64,
    h_cond: f64,
) -> NameMap {
    let m = tower.height;
    let p_names = names_along_tower(tower, p_track);
    let q_names = names_along_tower(tower, q_track);
    debug_assert_eq!(p_names.len(), q_names.len());
    let total = p_names.len();

    let mut map: HashMap<Word, Vec<Word>> = HashMap::new();
    for ((_, p), (_, q)) in p_names.iter().zip(&q_names) {
        let fiber = map.entry(p.clone()).or_default();
        if !fiber.contains(q) {
            fiber.push(q.clone());
        }
    }
    for fiber in map.values_mut() {
        fiber.sort();
    }

    let fiber_bound_log2 = m as f64 * (h_cond + 2.0 * eps);
    let mut truncated = 0usize;
    for fiber in map.values_mut() {
        if !fiber.is_empty() && (fiber.len() as f64).log2() > fiber_bound_log2 {
            truncated += 1;
            fiber.clear();
        }
    }

    let mut survived: usize = 0;
    for ((_, p), (_, q)) in p_names.iter().zip(&q_names) {
        if map
            .get(p)
            .map(|f| f.binary_search(q).is_ok())
            .unwrap_or(false)
        {
            survived += 1;
        }
    }
    let coverage = if total == 0 {
        0.0
    } else {
        survived as f64 / total as f64
    };

    NameMap {
        map,
        height: m,
        fiber_bound_log2,
        truncated_fibers: truncated,
        coverage,
    }
}

/// Hamming distance between equal-length words.
pub fn hamming_distance(a: &[Symbol], b: &[Symbol]) -> usize {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// The ball map of a windowed predictor: a q-word is sent to the set of
/// p-words within Hamming radius `radius_frac * M` of the predictor's
/// output, represented implicitly by a membership test plus a size bound.
#[derive(Debug, Clone)]
pub struct HammingBallMap {
    /// Window code from q-symbols to p-symbols, applied on block interiors.
    pub center_code: SlidingBlockPartition,
    pub radius_frac: f64,
    /// Parts count of the p-alphabet.
    pub parts: usize,
}

impl HammingBallMap {
    pub fn new(center_code: SlidingBlockPartition, radius_frac: f64, parts: usize) -> Result<Self> {
        if !(0.0..=0.5).contains(&radius_frac) {
            return Err(TypicalityError::RadiusRange(radius_frac));
        }
        Ok(Self {
            center_code,
            radius_frac,
            parts,
        })
    }

    /// Ball center: the window code applied across the q-word, with the
    /// fill symbol where the window would reach past the word ends.
    pub fn center(&self, q_word: &[Symbol]) -> Word {
        self.center_code.apply_to_word(q_word)
    }

    /// Membership: within strict radius of the center, or equal to it.
    pub fn contains(&self, q_word: &[Symbol], candidate: &[Symbol]) -> bool {
        let d = hamming_distance(candidate, &self.center(q_word));
        d == 0 || (d as f64) < self.radius_frac * q_word.len() as f64
    }

    /// log2 of the ball-size bound `2^{M (H(r) + r log2 k)}`.
    pub fn log2_size_bound(&self, m: usize) -> f64 {
        let r = self.radius_frac;
        let h = binary_entropy(r).expect("radius validated at construction");
        m as f64 * (h + r * (self.parts as f64).log2())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::Scope;
    use crate::seeding::rng_from;
    use crate::sources::JointSource;
    use crate::towers::{build_tower, Tower};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn binary_entropy_anchors() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < 1e-12);
        // Direct evaluation: H(0.11) = 0.4999160.
        assert!((binary_entropy(0.11).unwrap() - 0.4999160).abs() < 1e-6);
        assert!(binary_entropy(1.2).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn reverse_bound_anchors() {
        assert_eq!(reverse_sm_bound(0.7, 0.0, 2), 0.7);
        // 0.5 + H(0.1) + 0.2 with H(0.1) = 0.4689956.
        assert!((reverse_sm_bound(0.5, 0.1, 2) - 1.1689956).abs() < 1e-6);
        assert!((reverse_sm_bound(1.0, 0.5, 2) - 3.0).abs() < 1e-12);
    }

    fn fair_coin_track(n: usize, seed: u64) -> SymbolTrack {
        let mut rng = rng_from(seed);
        SymbolTrack::new((0..n).map(|_| rng.gen_range(0..2u16)).collect(), 2)
    }

    #[test]
    fn deterministic_track_has_one_typical_name() {
        let track = SymbolTrack::new(vec![1; 1000], 2);
        let tower =
            Tower::from_bases((0..90).map(|i| i * 11).collect(), 10, Scope::Joint, 1000).unwrap();
        let model = NameModel::IidExact(vec![0.0, 1.0]);
        let set = typical_names(&tower, &track, &model, 0.05);
        assert_eq!(set.len(), 1);
        assert_eq!(set.captured_fraction, 1.0);
    }

    #[test]
    fn fair_coin_names_sit_in_the_band() {
        let n = 100_000;
        let track = fair_coin_track(n, 5);
        let tower =
            Tower::from_bases((0..4000).map(|i| i * 25).collect(), 20, Scope::Joint, n).unwrap();
        let model = NameModel::IidExact(vec![0.5, 0.5]);
        let set = typical_names(&tower, &track, &model, 0.1);
        assert!(set.captured_fraction >= 0.9);
        for lp in set.members.values() {
            assert!(
                (lp + 20.0).abs() < 1e-9,
                "every fair-coin name has prob 2^-20"
            );
        }
        assert!(set.size_bound_ok);
    }

    #[test]
    fn markov_track_names_respect_size_budget() {
        // Two-state sticky chain sampled directly. The per-symbol
        // log-likelihood deviation is ~0.95, so at M = 1000 a band of
        // eps = 0.08 sits at ~2.7 sigma and captures nearly everything.
        let n = 400_000;
        let m = 1000;
        let eps = 0.08;
        let mut rng = rng_from(11);
        let mut vals = Vec::with_capacity(n);
        let mut s = 0u16;
        for _ in 0..n {
            vals.push(s);
            let stay: f64 = rng.gen();
            if stay > 0.9 {
                s ^= 1;
            }
        }
        let track = SymbolTrack::new(vals, 2);
        let tower = Tower::from_bases(
            (0..(n / m - 1)).map(|i| i * m).collect(),
            m,
            Scope::Joint,
            n,
        )
        .unwrap();
        let model = NameModel::MarkovExact {
            init: vec![0.5, 0.5],
            trans: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        };
        let set = typical_names(&tower, &track, &model, eps);
        assert!(set.captured_fraction >= 0.9, "{}", set.captured_fraction);
        let budget = (binary_entropy(0.1).unwrap() + eps) * m as f64;
        assert!((set.len() as f64).log2() <= budget);
    }

    #[test]
    fn widening_the_band_never_loses_names() {
        let n = 50_000;
        let track = fair_coin_track(n, 9);
        let tower =
            Tower::from_bases((0..1000).map(|i| i * 40).collect(), 32, Scope::Joint, n).unwrap();
        let model = NameModel::IidExact(vec![0.5, 0.5]);
        let mut prev = 0.0;
        for eps in [0.01, 0.05, 0.1, 0.2] {
            let set = typical_names(&tower, &track, &model, eps);
            assert!(set.captured_fraction >= prev);
            prev = set.captured_fraction;
        }
    }

    #[test]
    fn empirical_mode_keeps_observed_names() {
        let n = 60_000;
        let track = fair_coin_track(n, 13);
        let tower =
            Tower::from_bases((0..500).map(|i| i * 100).collect(), 64, Scope::Joint, n).unwrap();
        let set = typical_names(&tower, &track, &NameModel::Empirical, 0.05);
        assert!(!set.exact);
        assert!(set.captured_fraction > 0.99);
    }

    #[test]
    fn identical_tracks_give_singleton_fibers() {
        let n = 20_000;
        let track = fair_coin_track(n, 21);
        let tower =
            Tower::from_bases((0..600).map(|i| i * 32).collect(), 16, Scope::Joint, n).unwrap();
        let map = conditional_name_map(&tower, &track, &track, 0.05, 1.0);
        for (_, name) in crate::towers::names_along_tower(&tower, &track) {
            let fiber = map.get(&name);
            assert_eq!(fiber.len(), 1);
            assert_eq!(fiber[0], name);
        }
        assert_eq!(map.coverage, 1.0);
    }

    #[test]
    fn constant_key_collects_all_value_names() {
        let n = 40_000;
        let m = 16;
        let constant = SymbolTrack::new(vec![0; n], 1);
        let coin = fair_coin_track(n, 31);
        let tower = Tower::from_bases(
            (0..(n / m - 1)).map(|i| i * m).collect(),
            m,
            Scope::Joint,
            n,
        )
        .unwrap();
        let map = conditional_name_map(&tower, &constant, &coin, 0.05, 1.0);
        assert_eq!(map.len(), 1);
        let fiber = map.get(&vec![0; m]);
        let distinct: std::collections::HashSet<Word> =
            crate::towers::names_along_tower(&tower, &coin)
                .into_iter()
                .map(|(_, w)| w)
                .collect();
        assert_eq!(fiber.len(), distinct.len());
        assert!(map.truncated_fibers == 0);
    }

    #[test]
    fn oversized_fibers_are_emptied() {
        let n = 40_000;
        let m = 16;
        let constant = SymbolTrack::new(vec![0; n], 1);
        let coin = fair_coin_track(n, 37);
        let tower = Tower::from_bases(
            (0..(n / m - 1)).map(|i| i * m).collect(),
            m,
            Scope::Joint,
            n,
        )
        .unwrap();
        // h_cond = 0 forces the bound to 2^{2 eps m}, far below the fiber.
        let map = conditional_name_map(&tower, &constant, &coin, 0.05, 0.0);
        assert_eq!(map.truncated_fibers, 1);
        assert!(map.get(&vec![0; m]).is_empty());
        assert_eq!(map.coverage, 0.0);
        // Unknown keys still come back empty rather than erroring.
        assert!(map.get(&vec![1; m]).is_empty());
    }

    #[test]
    fn dsbs_conditional_map_coverage() {
        let src = JointSource::dsbs(0.11);
        let orbit = src.sample_orbit(400_000, 51).unwrap();
        let tower = build_tower(&orbit, Scope::Joint, 200, 8, 0.95, 3).unwrap();
        let region = src.rate_region();
        let map = conditional_name_map(
            &tower,
            &orbit.x_track(),
            &orbit.y_track(),
            0.05,
            region.h_given_x,
        );
        assert!(map.coverage >= 0.9);
        assert!(map.max_fiber_log2() <= 200.0 * (0.5 + 0.1));
    }

    #[test]
    fn ball_of_radius_zero_is_the_center() {
        let code = SlidingBlockPartition::coordinate(Scope::Joint, 2);
        let ball = HammingBallMap::new(code, 0.0, 2).unwrap();
        let q = vec![1, 0, 1, 1];
        assert!(ball.contains(&q, &[1, 0, 1, 1]));
        assert!(!ball.contains(&q, &[1, 0, 1, 0]));
        assert_eq!(ball.log2_size_bound(4), 0.0);
    }

    #[test]
    fn half_radius_ball_enumeration() {
        // M = 4, binary, r = 1/2: members are the words within distance 1.
        let code = SlidingBlockPartition::coordinate(Scope::Joint, 2);
        let ball = HammingBallMap::new(code, 0.5, 2).unwrap();
        let q = vec![1, 0, 1, 1];
        let mut members = 0;
        for bits in 0..16u16 {
            let w: Word = (0..4).map(|i| (bits >> i) & 1).collect();
            if ball.contains(&q, &w) {
                members += 1;
            }
        }
        assert_eq!(members, 5);
        assert!((ball.log2_size_bound(4) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn ball_bound_at_low_radius() {
        let code = SlidingBlockPartition::coordinate(Scope::Joint, 2);
        let ball = HammingBallMap::new(code, 0.11, 2).unwrap();
        let bound = ball.log2_size_bound(100);
        assert!((bound - 100.0 * (0.4999160 + 0.11)).abs() < 1e-3);
        assert!(
            HammingBallMap::new(SlidingBlockPartition::coordinate(Scope::Joint, 2), 0.6, 2)
                .is_err()
        );
    }

    proptest! {
        #[test]
        fn hamming_distance_matches_naive(
            a in prop::collection::vec(0u16..3, 24),
            b in prop::collection::vec(0u16..3, 24),
        ) {
            let mut naive = 0;
            for i in 0..24 {
                if a[i] != b[i] {
                    naive += 1;
                }
            }
            prop_assert_eq!(hamming_distance(&a, &b), naive);
            prop_assert_eq!(hamming_distance(&a, &b), hamming_distance(&b, &a));
        }
    }
}
