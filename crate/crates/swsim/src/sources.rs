//! Stationary correlated symbolic sources and their entropy rate region.
//!
//! A [`JointSource`] is either an iid pair process (a joint probability
//! table over `(x, y)` symbols) or a joint Markov chain over the pair-state
//! space. The measure space is realized as one long sampled [`Orbit`]; all
//! set measures downstream become empirical frequencies along it.
//!
//! The rate region holds the three threshold quantities `h`, `h(.|F_X)`,
//! and `h(.|F_Y)` in bits per symbol. For iid pairs all three are closed
//! forms. For joint Markov chains the joint rate is exact while marginal
//! process rates (hidden-Markov in general) are estimated by block-entropy
//! differences up to a configured block length and flagged as such.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partitions::SymbolTrack;
use crate::seeding::rng_from;

/// Row sums of probability tables must match 1 this tightly.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// The stationary distribution must satisfy its fixed-point equation this tightly.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Default block-length cap for marginal entropy estimation.
pub const DEFAULT_BLOCK_CAP: usize = 12;
/// Work guard for exact block enumeration: alphabet^(k+1) * states.
const BLOCK_WORK_CAP: f64 = 2e8;

const ORBIT_MAGIC: [u8; 4] = *b"SWO1";
const ORBIT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("alphabet sizes must be at least 2 (got {0}x{1})")]
    AlphabetTooSmall(usize, usize),
    #[error("alphabet sizes above 256 are not supported by the byte format (got {0})")]
    AlphabetTooLarge(usize),
    #[error(
        "probability table has wrong shape: expected {expected} entries in row {row}, got {got}"
    )]
    TableShape {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {row} sums to {sum}, not 1")]
    RowSum { row: usize, sum: f64 },
    #[error("negative entry {value} at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("no unique stationary distribution: transition graph is not irreducible")]
    Reducible,
    #[error("operation requires a joint Markov source")]
    NotMarkov,
    #[error("chain is periodic (period {0}); aperiodicity required")]
    Periodic(usize),
    #[error("stationary solve failed: residual {0}")]
    StationarySolve(f64),
    #[error("orbit length must be at least 1")]
    EmptyOrbit,
    #[error("bad orbit file header: {0}")]
    BadHeader(String),
    #[error("orbit symbol {value} out of range for alphabet {alphabet}")]
    SymbolOutOfRange { value: u16, alphabet: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SourceError>;

/// How the rate region entries were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateMethod {
    /// Closed forms from the model.
    Exact,
    /// Joint rate exact; marginal rates by block-entropy differences at the
    /// recorded block lengths.
    Estimated {
        x_block_len: usize,
        y_block_len: usize,
    },
}

/// Entropy rate region of a joint source, bits per symbol.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateRegion {
    /// Joint process rate h.
    pub h: f64,
    /// Conditional rate given the x coordinate process, h(.|F_X).
    pub h_given_x: f64,
    /// Conditional rate given the y coordinate process, h(.|F_Y).
    pub h_given_y: f64,
    /// Marginal x process rate.
    pub h_marginal_x: f64,
    /// Marginal y process rate.
    pub h_marginal_y: f64,
    pub method: RateMethod,
}

/// The two supported source kinds.
#[derive(Debug, Clone)]
enum SourceKind {
    /// Independent draws of an `(x, y)` pair from a joint table, row `x`.
    IidPair { joint: Vec<Vec<f64>> },
    /// Markov chain on pair states `s = x * y_alphabet + y`.
    JointMarkov {
        trans: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
}

/// A stationary correlated pair process over finite alphabets.
#[derive(Debug, Clone)]
pub struct JointSource {
    x_alpha: usize,
    y_alpha: usize,
    kind: SourceKind,
}

fn validate_table(rows: usize, cols: usize, table: &[Vec<f64>]) -> Result<()> {
    if table.len() != rows {
        return Err(SourceError::TableShape {
            row: 0,
            expected: rows,
            got: table.len(),
        });
    }
    for (r, row) in table.iter().enumerate() {
        if row.len() != cols {
            return Err(SourceError::TableShape {
                row: r,
                expected: cols,
                got: row.len(),
            });
        }
        let mut sum = 0.0;
        for (c, &v) in row.iter().enumerate() {
            if v < 0.0 {
                return Err(SourceError::NegativeEntry {
                    row: r,
                    col: c,
                    value: v,
                });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(SourceError::RowSum { row: r, sum });
        }
    }
    Ok(())
}

fn entropy_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    let mut h = 0.0;
    for p in probs {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Solve `pi P = pi`, `sum pi = 1` by Gaussian elimination on `(P^T - I)`.
///
/// Errors when the support graph of `trans` is not strongly connected.
pub fn stationary_distribution(trans: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = trans.len();
    check_irreducible(trans)?;
    // Build (P^T - I) with the last equation replaced by sum pi = 1.
    let mut a = vec![vec![0.0f64; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = trans[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for cell in a[n - 1].iter_mut() {
        *cell = 1.0;
    }
    // Partial-pivot elimination.
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(SourceError::Reducible);
        }
        a.swap(col, pivot);
        let d = a[col][col];
        for cell in a[col].iter_mut().skip(col) {
            *cell /= d;
        }
        let pivot_row = a[col].clone();
        for (row, r) in a.iter_mut().enumerate() {
            if row != col && r[col].abs() > 0.0 {
                let f = r[col];
                for (cell, p) in r.iter_mut().zip(&pivot_row).skip(col) {
                    *cell -= f * p;
                }
            }
        }
    }
    let pi: Vec<f64> = (0..n).map(|i| a[i][n].max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.iter().map(|p| p / total).collect();
    // Residual check against the fixed-point equation.
    let mut residual = 0.0f64;
    for j in 0..n {
        let mut v = 0.0;
        for i in 0..n {
            v += pi[i] * trans[i][j];
        }
        residual = residual.max((v - pi[j]).abs());
    }
    if residual > STATIONARY_TOL {
        return Err(SourceError::StationarySolve(residual));
    }
    Ok(pi)
}

fn check_irreducible(trans: &[Vec<f64>]) -> Result<()> {
    let n = trans.len();
    let reach = |forward: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let edge = if forward {
                    trans[u][v] > 0.0
                } else {
                    trans[v][u] > 0.0
                };
                if edge && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    if reach(true).iter().any(|&s| !s) || reach(false).iter().any(|&s| !s) {
        return Err(SourceError::Reducible);
    }
    Ok(())
}

fn check_aperiodic(trans: &[Vec<f64>]) -> Result<()> {
    // Period = gcd over edges (u -> v) of level[u] + 1 - level[v], levels from a BFS.
    let n = trans.len();
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if trans[u][v] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g: i64 = 0;
    for u in 0..n {
        for v in 0..n {
            if trans[u][v] > 0.0 {
                let d = level[u] as i64 + 1 - level[v] as i64;
                g = gcd(g, d.abs());
            }
        }
    }
    if g != 1 {
        return Err(SourceError::Periodic(g as usize));
    }
    Ok(())
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl JointSource {
    /// An iid pair source from a joint table indexed `joint[x][y]`.
    pub fn new_iid_pair(x_alpha: usize, y_alpha: usize, joint: Vec<Vec<f64>>) -> Result<Self> {
        if x_alpha < 2 || y_alpha < 2 {
            return Err(SourceError::AlphabetTooSmall(x_alpha, y_alpha));
        }
        // The table is one distribution over all pairs; validate as one row.
        let flat: Vec<f64> = joint.iter().flatten().copied().collect();
        if joint.len() != x_alpha || joint.iter().any(|r| r.len() != y_alpha) {
            return Err(SourceError::TableShape {
                row: 0,
                expected: x_alpha * y_alpha,
                got: flat.len(),
            });
        }
        validate_table(1, x_alpha * y_alpha, &[flat])?;
        Ok(Self {
            x_alpha,
            y_alpha,
            kind: SourceKind::IidPair { joint },
        })
    }

    /// A joint Markov source from a transition matrix over pair states
    /// `s = x * y_alphabet + y`. Must be irreducible and aperiodic.
    pub fn new_joint_markov(x_alpha: usize, y_alpha: usize, trans: Vec<Vec<f64>>) -> Result<Self> {
        if x_alpha < 2 || y_alpha < 2 {
            return Err(SourceError::AlphabetTooSmall(x_alpha, y_alpha));
        }
        let states = x_alpha * y_alpha;
        validate_table(states, states, &trans)?;
        check_irreducible(&trans)?;
        check_aperiodic(&trans)?;
        let stationary = stationary_distribution(&trans)?;
        Ok(Self {
            x_alpha,
            y_alpha,
            kind: SourceKind::JointMarkov { trans, stationary },
        })
    }

    /// Doubly symmetric binary source: X uniform bit, Y = X xor Bernoulli(p).
    pub fn dsbs(p: f64) -> Self {
        let q = 1.0 - p;
        Self::new_iid_pair(2, 2, vec![vec![q / 2.0, p / 2.0], vec![p / 2.0, q / 2.0]]).unwrap()
    }

    /// Independent uniform bits on both coordinates.
    pub fn independent_uniform_bits() -> Self {
        Self::new_iid_pair(2, 2, vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap()
    }

    /// Perfectly correlated uniform bit: Y = X.
    pub fn perfectly_correlated_bit() -> Self {
        Self::new_iid_pair(2, 2, vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap()
    }

    pub fn x_alphabet(&self) -> usize {
        self.x_alpha
    }

    pub fn y_alphabet(&self) -> usize {
        self.y_alpha
    }

    pub fn is_iid_pair(&self) -> bool {
        matches!(self.kind, SourceKind::IidPair { .. })
    }

    /// Joint table for iid-pair sources.
    pub fn joint_table(&self) -> Option<&Vec<Vec<f64>>> {
        match &self.kind {
            SourceKind::IidPair { joint } => Some(joint),
            _ => None,
        }
    }

    /// Stationary distribution over pair states for joint Markov sources.
    pub fn stationary(&self) -> Option<&[f64]> {
        match &self.kind {
            SourceKind::JointMarkov { stationary, .. } => Some(stationary),
            _ => None,
        }
    }

    /// The stationary distribution of a joint Markov source; errors for
    /// sources without chain structure.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        match &self.kind {
            SourceKind::JointMarkov { stationary, .. } => Ok(stationary.clone()),
            SourceKind::IidPair { .. } => Err(SourceError::NotMarkov),
        }
    }

    /// Marginal distribution of the x symbol (single-letter).
    pub fn x_marginal(&self) -> Vec<f64> {
        match &self.kind {
            SourceKind::IidPair { joint } => joint.iter().map(|row| row.iter().sum()).collect(),
            SourceKind::JointMarkov { stationary, .. } => {
                let mut m = vec![0.0; self.x_alpha];
                for (s, &p) in stationary.iter().enumerate() {
                    m[s / self.y_alpha] += p;
                }
                m
            }
        }
    }

    /// Marginal distribution of the y symbol (single-letter).
    pub fn y_marginal(&self) -> Vec<f64> {
        match &self.kind {
            SourceKind::IidPair { joint } => {
                let mut m = vec![0.0; self.y_alpha];
                for row in joint {
                    for (y, &p) in row.iter().enumerate() {
                        m[y] += p;
                    }
                }
                m
            }
            SourceKind::JointMarkov { stationary, .. } => {
                let mut m = vec![0.0; self.y_alpha];
                for (s, &p) in stationary.iter().enumerate() {
                    m[s % self.y_alpha] += p;
                }
                m
            }
        }
    }

    /// Short human tag used in CSV rows.
    pub fn tag(&self) -> String {
        match &self.kind {
            SourceKind::IidPair { .. } => format!("iid-pair({}x{})", self.x_alpha, self.y_alpha),
            SourceKind::JointMarkov { .. } => {
                format!("joint-markov({}x{})", self.x_alpha, self.y_alpha)
            }
        }
    }

    /// The entropy rate region with the default block cap for estimates.
    pub fn rate_region(&self) -> RateRegion {
        self.rate_region_with_cap(DEFAULT_BLOCK_CAP)
    }

    /// As [`Self::rate_region`] with an explicit block-length cap for the
    /// marginal estimates of joint Markov sources.
    pub fn rate_region_with_cap(&self, block_cap: usize) -> RateRegion {
        match &self.kind {
            SourceKind::IidPair { joint } => {
                let h = entropy_bits(joint.iter().flatten().copied());
                let hx = entropy_bits(self.x_marginal());
                let hy = entropy_bits(self.y_marginal());
                RateRegion {
                    h,
                    h_given_x: (h - hx).max(0.0),
                    h_given_y: (h - hy).max(0.0),
                    h_marginal_x: hx,
                    h_marginal_y: hy,
                    method: RateMethod::Exact,
                }
            }
            SourceKind::JointMarkov { trans, stationary } => {
                let mut h = 0.0;
                for (i, row) in trans.iter().enumerate() {
                    h += stationary[i] * entropy_bits(row.iter().copied());
                }
                let (hx, kx) = self.marginal_rate_estimate(trans, stationary, true, block_cap);
                let (hy, ky) = self.marginal_rate_estimate(trans, stationary, false, block_cap);
                RateRegion {
                    h,
                    h_given_x: (h - hx).max(0.0),
                    h_given_y: (h - hy).max(0.0),
                    h_marginal_x: hx,
                    h_marginal_y: hy,
                    method: RateMethod::Estimated {
                        x_block_len: kx,
                        y_block_len: ky,
                    },
                }
            }
        }
    }

    /// Exact block entropies H(1), ..., H(cap+1) of a coordinate process of a
    /// joint Markov chain, by forward-vector enumeration over blocks.
    ///
    /// Returns total block entropies in bits (not normalized per symbol).
    pub fn marginal_block_entropies(&self, x_coord: bool, cap: usize) -> Option<Vec<f64>> {
        match &self.kind {
            SourceKind::JointMarkov { trans, stationary } => {
                let alpha = if x_coord { self.x_alpha } else { self.y_alpha };
                let cap = fit_block_cap(alpha, trans.len(), cap);
                let mut out = Vec::with_capacity(cap + 1);
                for k in 1..=(cap + 1) {
                    out.push(self.block_entropy_exact(trans, stationary, x_coord, k));
                }
                Some(out)
            }
            SourceKind::IidPair { .. } => None,
        }
    }

    fn marginal_rate_estimate(
        &self,
        trans: &[Vec<f64>],
        stationary: &[f64],
        x_coord: bool,
        cap: usize,
    ) -> (f64, usize) {
        let alpha = if x_coord { self.x_alpha } else { self.y_alpha };
        let cap = fit_block_cap(alpha, trans.len(), cap).max(1);
        let h_k = self.block_entropy_exact(trans, stationary, x_coord, cap);
        let h_k1 = self.block_entropy_exact(trans, stationary, x_coord, cap + 1);
        (h_k1 - h_k, cap)
    }

    fn block_entropy_exact(
        &self,
        trans: &[Vec<f64>],
        stationary: &[f64],
        x_coord: bool,
        k: usize,
    ) -> f64 {
        let alpha = if x_coord { self.x_alpha } else { self.y_alpha };
        let coord = |s: usize| {
            if x_coord {
                s / self.y_alpha
            } else {
                s % self.y_alpha
            }
        };
        let states = trans.len();
        // DFS over blocks carrying the forward probability vector.
        let mut h = 0.0;
        let mut stack: Vec<(usize, Vec<f64>)> = Vec::new();
        for sym in 0..alpha {
            let alpha0: Vec<f64> = (0..states)
                .map(|s| if coord(s) == sym { stationary[s] } else { 0.0 })
                .collect();
            stack.push((1, alpha0));
        }
        while let Some((depth, fwd)) = stack.pop() {
            let p: f64 = fwd.iter().sum();
            if p <= 0.0 {
                continue;
            }
            if depth == k {
                h -= p * p.log2();
                continue;
            }
            for sym in 0..alpha {
                let mut next = vec![0.0; states];
                for s in 0..states {
                    if fwd[s] > 0.0 {
                        for (s2, item) in next.iter_mut().enumerate() {
                            if coord(s2) == sym {
                                *item += fwd[s] * trans[s][s2];
                            }
                        }
                    }
                }
                stack.push((depth + 1, next));
            }
        }
        h
    }

    /// Sample one orbit of length `n`; deterministic in `(self, n, seed)`.
    pub fn sample_orbit(&self, n: usize, seed: u64) -> Result<Orbit> {
        if n == 0 {
            return Err(SourceError::EmptyOrbit);
        }
        let mut rng = rng_from(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        match &self.kind {
            SourceKind::IidPair { joint } => {
                let flat: Vec<f64> = joint.iter().flatten().copied().collect();
                for _ in 0..n {
                    let s = sample_index(&mut rng, &flat);
                    xs.push((s / self.y_alpha) as u16);
                    ys.push((s % self.y_alpha) as u16);
                }
            }
            SourceKind::JointMarkov { trans, stationary } => {
                let mut s = sample_index(&mut rng, stationary);
                for _ in 0..n {
                    xs.push((s / self.y_alpha) as u16);
                    ys.push((s % self.y_alpha) as u16);
                    s = sample_index(&mut rng, &trans[s]);
                }
            }
        }
        Ok(Orbit {
            xs,
            ys,
            seed,
            x_alpha: self.x_alpha,
            y_alpha: self.y_alpha,
        })
    }
}

fn fit_block_cap(alpha: usize, states: usize, cap: usize) -> usize {
    let mut k = cap;
    while k > 1 && (alpha as f64).powi(k as i32 + 1) * states as f64 > BLOCK_WORK_CAP {
        k -= 1;
    }
    k
}

fn sample_index(rng: &mut rand_chacha::ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One sampled trajectory of joint symbols; the finite stand-in for the space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orbit {
    pub xs: Vec<u16>,
    pub ys: Vec<u16>,
    pub seed: u64,
    pub x_alpha: usize,
    pub y_alpha: usize,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// The x coordinate process as a track.
    pub fn x_track(&self) -> SymbolTrack {
        SymbolTrack {
            values: self.xs.clone(),
            parts: self.x_alpha,
        }
    }

    /// The y coordinate process as a track.
    pub fn y_track(&self) -> SymbolTrack {
        SymbolTrack {
            values: self.ys.clone(),
            parts: self.y_alpha,
        }
    }

    /// Pair symbols `x * y_alphabet + y` as a track.
    pub fn joint_track(&self) -> SymbolTrack {
        let values = self
            .xs
            .iter()
            .zip(&self.ys)
            .map(|(&x, &y)| x * self.y_alpha as u16 + y)
            .collect();
        SymbolTrack {
            values,
            parts: self.x_alpha * self.y_alpha,
        }
    }

    /// Serialize: 16-byte header (magic, version, alphabets, length), then
    /// one byte per coordinate symbol, x before y at each position.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.x_alpha > 256 {
            return Err(SourceError::AlphabetTooLarge(self.x_alpha));
        }
        if self.y_alpha > 256 {
            return Err(SourceError::AlphabetTooLarge(self.y_alpha));
        }
        let n = self.len();
        let mut out = Vec::with_capacity(16 + 2 * n);
        out.extend_from_slice(&ORBIT_MAGIC);
        out.push(ORBIT_VERSION);
        out.push((self.x_alpha - 1) as u8);
        out.push((self.y_alpha - 1) as u8);
        out.push(0);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for i in 0..n {
            out.push(self.xs[i] as u8);
            out.push(self.ys[i] as u8);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(SourceError::BadHeader("shorter than header".into()));
        }
        if bytes[0..4] != ORBIT_MAGIC {
            return Err(SourceError::BadHeader("bad magic".into()));
        }
        if bytes[4] != ORBIT_VERSION {
            return Err(SourceError::BadHeader(format!("version {}", bytes[4])));
        }
        let x_alpha = bytes[5] as usize + 1;
        let y_alpha = bytes[6] as usize + 1;
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() != 16 + 2 * n {
            return Err(SourceError::BadHeader(format!(
                "expected {} payload bytes, got {}",
                2 * n,
                bytes.len() - 16
            )));
        }
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let x = bytes[16 + 2 * i] as u16;
            let y = bytes[16 + 2 * i + 1] as u16;
            if x as usize >= x_alpha {
                return Err(SourceError::SymbolOutOfRange {
                    value: x,
                    alphabet: x_alpha,
                });
            }
            if y as usize >= y_alpha {
                return Err(SourceError::SymbolOutOfRange {
                    value: y,
                    alphabet: y_alpha,
                });
            }
            xs.push(x);
            ys.push(y);
        }
        Ok(Orbit {
            xs,
            ys,
            seed: 0,
            x_alpha,
            y_alpha,
        })
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_symmetric_two_state() {
        let pi = stationary_distribution(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-10);
        assert!((pi[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn stationary_reducible_is_error() {
        let err = stationary_distribution(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, SourceError::Reducible));
    }

    #[test]
    fn stationary_asymmetric_chain() {
        // pi = (1/3, 2/3), solved by hand from pi P = pi.
        let pi = stationary_distribution(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-10);
        assert!((pi[1] - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn periodic_chain_rejected() {
        let err = JointSource::new_joint_markov(
            2,
            2,
            vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0, 0.0],
            ],
        )
        .unwrap_err();
        assert!(matches!(err, SourceError::Periodic(_)));
    }

    #[test]
    fn region_perfectly_correlated() {
        let r = JointSource::perfectly_correlated_bit().rate_region();
        assert!((r.h - 1.0).abs() < 1e-12);
        assert!(r.h_given_x.abs() < 1e-12);
        assert!(r.h_given_y.abs() < 1e-12);
    }

    #[test]
    fn region_independent_uniform() {
        let r = JointSource::independent_uniform_bits().rate_region();
        assert!((r.h - 2.0).abs() < 1e-12);
        assert!((r.h_given_x - 1.0).abs() < 1e-12);
        assert!((r.h_given_y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn region_dsbs() {
        // h = 1 + H2(0.11); H2(0.11) = 0.4999160 by direct evaluation.
        let r = JointSource::dsbs(0.11).rate_region();
        assert!((r.h - 1.4999160).abs() < 1e-6);
        assert!((r.h_given_x - 0.4999160).abs() < 1e-6);
        assert!((r.h_given_y - 0.4999160).abs() < 1e-6);
        assert!(matches!(r.method, RateMethod::Exact));
    }

    #[test]
    fn iid_chain_rule_is_exact() {
        for src in [
            JointSource::dsbs(0.11),
            JointSource::independent_uniform_bits(),
            JointSource::new_iid_pair(2, 3, vec![vec![0.1, 0.2, 0.15], vec![0.05, 0.3, 0.2]])
                .unwrap(),
        ] {
            let r = src.rate_region();
            assert!((r.h - (r.h_marginal_x + r.h_given_x)).abs() < 1e-12);
            assert!((r.h - (r.h_marginal_y + r.h_given_y)).abs() < 1e-12);
        }
    }

    #[test]
    fn markov_region_is_estimated_and_sane() {
        // A pair chain with genuinely hidden marginals.
        let src = JointSource::new_joint_markov(
            2,
            2,
            vec![
                vec![0.70, 0.10, 0.10, 0.10],
                vec![0.10, 0.70, 0.10, 0.10],
                vec![0.10, 0.10, 0.70, 0.10],
                vec![0.10, 0.10, 0.10, 0.70],
            ],
        )
        .unwrap();
        let r = src.rate_region_with_cap(8);
        assert!(matches!(r.method, RateMethod::Estimated { .. }));
        assert!(r.h > 0.0 && r.h_given_x >= 0.0 && r.h_given_y >= 0.0);
        assert!(r.h_given_x <= r.h + 1e-12);
        // Chain-rule sanity: h <= h_given_x + log2(x alphabet).
        assert!(r.h <= r.h_given_x + (src.x_alphabet() as f64).log2() + 1e-9);
    }

    #[test]
    fn markov_block_entropy_differences_are_monotone() {
        let src = JointSource::new_joint_markov(
            2,
            2,
            vec![
                vec![0.80, 0.10, 0.05, 0.05],
                vec![0.10, 0.60, 0.20, 0.10],
                vec![0.05, 0.15, 0.70, 0.10],
                vec![0.10, 0.10, 0.10, 0.70],
            ],
        )
        .unwrap();
        let blocks = src.marginal_block_entropies(true, 8).unwrap();
        let diffs: Vec<f64> = blocks.windows(2).map(|w| w[1] - w[0]).collect();
        for w in diffs.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "h_k must be nonincreasing: {:?}",
                diffs
            );
        }
    }

    #[test]
    fn orbit_is_reproducible_and_short_orbits_work() {
        let src = JointSource::dsbs(0.11);
        let a = src.sample_orbit(1, 5).unwrap();
        assert_eq!(a.len(), 1);
        let b = src.sample_orbit(1000, 99).unwrap();
        let c = src.sample_orbit(1000, 99).unwrap();
        assert_eq!(b, c);
        let d = src.sample_orbit(1000, 100).unwrap();
        assert_ne!(b, d);
    }

    #[test]
    fn deterministic_coupling_tracks_match() {
        let orbit = JointSource::perfectly_correlated_bit()
            .sample_orbit(5000, 3)
            .unwrap();
        assert_eq!(orbit.xs, orbit.ys);
    }

    #[test]
    fn dsbs_crossover_statistics() {
        let orbit = JointSource::dsbs(0.11).sample_orbit(1_000_000, 7).unwrap();
        let crossings = orbit
            .xs
            .iter()
            .zip(&orbit.ys)
            .filter(|(x, y)| x != y)
            .count();
        let frac = crossings as f64 / orbit.len() as f64;
        assert!(
            (frac - 0.11).abs() < 0.002,
            "crossover fraction {frac} out of band"
        );
    }

    #[test]
    fn orbit_bytes_roundtrip() {
        let src = JointSource::dsbs(0.2);
        let orbit = src.sample_orbit(257, 11).unwrap();
        let bytes = orbit.to_bytes().unwrap();
        assert_eq!(&bytes[0..4], b"SWO1");
        let back = Orbit::from_bytes(&bytes).unwrap();
        assert_eq!(back.xs, orbit.xs);
        assert_eq!(back.ys, orbit.ys);
    }

    #[test]
    fn orbit_bad_header_rejected() {
        let src = JointSource::dsbs(0.2);
        let mut bytes = src.sample_orbit(10, 1).unwrap().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(Orbit::from_bytes(&bytes).is_err());
        let short = vec![0u8; 8];
        assert!(Orbit::from_bytes(&short).is_err());
    }
}
