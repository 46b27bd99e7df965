//! Painting codewords along towers and recovering bases from the result.
//!
//! Painting writes, in each complete tower block, the codeword assigned to
//! the block's generator name over positions `[0, M - ell)` and zeros over
//! the tail `[M - ell, M)`; everything off-tower is zero. Since codewords
//! start with 1 and never contain `ell` consecutive zeros, a base is exactly
//! a position holding 1 preceded by `ell` zeros, which is what
//! [`recover_bases`] scans for. Positions before the orbit start count as
//! zeros, so recovery needs no special case at the left edge.
//!
//! Repainting rewrites only the first `floor(eps M)` positions of each
//! block with a short codeword, copies the current track over the middle,
//! and zeroes a tail of `2 ell`. Head and middle each contain no `ell`-run
//! of zeros, so runs crossing their boundary stay under `2 ell`, and
//! [`recover_bases_repaint`] detects bases with the doubled run length.

use thiserror::Error;

use crate::codebooks::PaintingData;
use crate::partitions::{Symbol, SymbolTrack, Word};
use crate::towers::Tower;

#[derive(Debug, Error)]
pub enum PaintError {
    #[error("painting codebook has word length {got}, block layout needs {expected}")]
    CodewordLength { expected: usize, got: usize },
    #[error("zones overflow the block: head {head} + tail {tail} > height {height}")]
    ZoneOverflow {
        head: usize,
        tail: usize,
        height: usize,
    },
    #[error("current track contains a zero run of length {0}; repainting requires admissibility")]
    InadmissibleTrack(usize),
    #[error("track length {track} does not match the expected orbit length {expected}")]
    TrackLength { expected: usize, track: usize },
}

pub type Result<T> = std::result::Result<T, PaintError>;

/// Paint the codewords of the per-base generator names along the tower.
///
/// `names` are `(base, name)` pairs as produced by
/// [`crate::towers::names_along_tower`]; the codebook's word length must be
/// `height - ell`. Output symbols live in the codebook alphabet.
pub fn paint(
    n: usize,
    tower: &Tower,
    names: &[(usize, Word)],
    pd: &PaintingData,
    ell: usize,
) -> Result<SymbolTrack> {
    let m = tower.height;
    if ell >= m {
        return Err(PaintError::ZoneOverflow {
            head: m.saturating_sub(ell),
            tail: ell,
            height: m,
        });
    }
    let expected = m - ell;
    if pd.codebook().word_len() != expected {
        return Err(PaintError::CodewordLength {
            expected,
            got: pd.codebook().word_len(),
        });
    }
    let mut values = vec![0 as Symbol; n];
    for (base, name) in names {
        if base + m > n {
            continue;
        }
        let codeword = pd.apply(name);
        values[*base..*base + expected].copy_from_slice(&codeword);
        // Tail positions stay zero.
    }
    Ok(SymbolTrack {
        values,
        parts: pd.codebook().alphabet(),
    })
}

/// Bases of a painted track: positions holding 1 whose `ell` predecessors
/// (or all existing ones near the left edge) are zero.
pub fn recover_bases(painted: &SymbolTrack, ell: usize) -> Vec<usize> {
    recover_with_run(painted, ell)
}

/// Bases of a repainted track, which uses the doubled run length.
pub fn recover_bases_repaint(track: &SymbolTrack, ell: usize) -> Vec<usize> {
    recover_with_run(track, 2 * ell)
}

fn recover_with_run(track: &SymbolTrack, run: usize) -> Vec<usize> {
    let mut out = Vec::new();
    // Positions before the orbit start count as zeros.
    let mut zeros = run;
    for (i, &v) in track.values.iter().enumerate() {
        if v == 1 && zeros >= run {
            out.push(i);
        }
        zeros = if v == 0 { zeros.saturating_add(1) } else { 0 };
    }
    out
}

/// Rewrite the head of each complete block with a fresh short codeword,
/// copy `current` over the middle, zero a `2 ell` tail, and zero everything
/// off-tower.
///
/// `eps` is the head fraction; the head length is `floor(eps * height)` and
/// the painting codebook must carry words of exactly that length (it is
/// ignored when the head is empty). With `ell = 0` the tail is disabled,
/// which turns the operation into pure off-tower masking for diagnostics.
/// The output differs from `current` on at most
/// `eps + 2 ell / height + (1 - coverage)` of positions.
pub fn repaint(
    current: &SymbolTrack,
    tower: &Tower,
    names: &[(usize, Word)],
    pd: Option<&PaintingData>,
    eps: f64,
    ell: usize,
) -> Result<SymbolTrack> {
    if ell > 0 {
        if let Some(run) = max_zero_run(current) {
            if run >= ell {
                return Err(PaintError::InadmissibleTrack(run));
            }
        }
    }
    repaint_relaxed(current, tower, names, pd, eps, ell)
}

/// As [`repaint`] without the admissibility precondition on `current`.
///
/// Painted tracks are admissible within blocks but carry zero tails and
/// off-tower gaps; the doubled-run detector tolerates those, so improvement
/// rounds use this entry point directly.
pub fn repaint_relaxed(
    current: &SymbolTrack,
    tower: &Tower,
    names: &[(usize, Word)],
    pd: Option<&PaintingData>,
    eps: f64,
    ell: usize,
) -> Result<SymbolTrack> {
    let n = current.len();
    let m = tower.height;
    let head = (eps * m as f64).floor() as usize;
    let tail = 2 * ell;
    if head + tail > m {
        return Err(PaintError::ZoneOverflow {
            head,
            tail,
            height: m,
        });
    }
    if head > 0 {
        let pd = pd.ok_or(PaintError::CodewordLength {
            expected: head,
            got: 0,
        })?;
        if pd.codebook().word_len() != head {
            return Err(PaintError::CodewordLength {
                expected: head,
                got: pd.codebook().word_len(),
            });
        }
    }
    let copy_to = m - tail;
    let mut values = vec![0 as Symbol; n];
    let parts = pd
        .map(|p| p.codebook().alphabet())
        .unwrap_or(current.parts)
        .max(current.parts);
    for (base, name) in names {
        let b = *base;
        if b + m > n {
            continue;
        }
        if head > 0 {
            let codeword = pd.expect("validated above").apply(name);
            values[b..b + head].copy_from_slice(&codeword);
        }
        values[b + head..b + copy_to].copy_from_slice(&current.values[b + head..b + copy_to]);
        // Tail and off-tower positions stay zero.
    }
    Ok(SymbolTrack { values, parts })
}

fn max_zero_run(track: &SymbolTrack) -> Option<usize> {
    let mut best = 0usize;
    let mut run = 0usize;
    for &v in &track.values {
        if v == 0 {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    (best > 0).then_some(best)
}
