//! Tile-pattern KL divergence between levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LevelGrid;
use crate::tile::TILE_COUNT;

pub const DEFAULT_PATTERN_SIZE: usize = 3;
pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Patterns are keyed by base-7 codes in a `u64`, which holds 16 cells.
pub const MAX_PATTERN_SIZE: usize = 4;

/// Counts of every `k x k` window of one level, sorted by pattern code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternDistribution {
    pattern_size: usize,
    counts: Vec<(u64, u32)>,
    total: u64,
}

impl PatternDistribution {
    pub fn from_level(level: &LevelGrid, pattern_size: usize) -> Result<Self> {
        if pattern_size == 0 || pattern_size > MAX_PATTERN_SIZE {
            return Err(Error::invalid(format!(
                "pattern size must be in 1..={MAX_PATTERN_SIZE}, got {pattern_size}"
            )));
        }
        if level.width() < pattern_size || level.height() < pattern_size {
            return Err(Error::shape(format!(
                "a {}x{} level has no {pattern_size}x{pattern_size} patterns",
                level.width(),
                level.height()
            )));
        }
        let mut codes = Vec::with_capacity(
            (level.width() - pattern_size + 1) * (level.height() - pattern_size + 1),
        );
        for y in 0..=level.height() - pattern_size {
            for x in 0..=level.width() - pattern_size {
                codes.push(pattern_code(level, x, y, pattern_size));
            }
        }
        codes.sort_unstable();
        let total = codes.len() as u64;
        let mut counts: Vec<(u64, u32)> = Vec::new();
        for code in codes {
            match counts.last_mut() {
                Some((c, n)) if *c == code => *n += 1,
                _ => counts.push((code, 1)),
            }
        }
        Ok(PatternDistribution {
            pattern_size,
            counts,
            total,
        })
    }

    pub fn pattern_size(&self) -> usize {
        self.pattern_size
    }

    /// `(pattern code, count)` in ascending code order.
    pub fn counts(&self) -> &[(u64, u32)] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, code: u64) -> u32 {
        self.counts
            .binary_search_by_key(&code, |&(c, _)| c)
            .map_or(0, |i| self.counts[i].1)
    }
}

/// Row-major base-7 code of the window at `(x, y)`.
pub fn pattern_code(level: &LevelGrid, x: usize, y: usize, size: usize) -> u64 {
    let mut code = 0u64;
    for dy in 0..size {
        for dx in 0..size {
            code = code * TILE_COUNT as u64 + u64::from(level.get(x + dx, y + dy).id());
        }
    }
    code
}

/// Smoothed `KL(P || Q)` over the union of both supports.
pub fn kl_divergence(
    p: &PatternDistribution,
    q: &PatternDistribution,
    epsilon: f64,
) -> Result<f64> {
    if p.pattern_size != q.pattern_size {
        return Err(Error::invalid("distributions use different pattern sizes"));
    }
    let union = merge(p, q).count();
    let p_norm = p.total as f64 + epsilon * union as f64;
    let q_norm = q.total as f64 + epsilon * union as f64;
    let kl = merge(p, q)
        .map(|(cp, cq)| {
            let pi = (f64::from(cp) + epsilon) / p_norm;
            let qi = (f64::from(cq) + epsilon) / q_norm;
            pi * (pi / qi).ln()
        })
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Counts of both distributions over the union support, in code order.
fn merge<'a>(
    p: &'a PatternDistribution,
    q: &'a PatternDistribution,
) -> impl Iterator<Item = (u32, u32)> + 'a {
    let (a, b) = (&p.counts, &q.counts);
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || match (a.get(i), b.get(j)) {
        (Some(&(ca, na)), Some(&(cb, nb))) => Some(if ca == cb {
            i += 1;
            j += 1;
            (na, nb)
        } else if ca < cb {
            i += 1;
            (na, 0)
        } else {
            j += 1;
            (0, nb)
        }),
        (Some(&(_, na)), None) => {
            i += 1;
            Some((na, 0))
        }
        (None, Some(&(_, nb))) => {
            j += 1;
            Some((0, nb))
        }
        (None, None) => None,
    })
}

/// Divergence of a generated level from a training level.
pub fn tpkl_div(
    generated: &LevelGrid,
    training: &LevelGrid,
    pattern_size: usize,
    epsilon: f64,
) -> Result<f64> {
    kl_divergence(
        &PatternDistribution::from_level(generated, pattern_size)?,
        &PatternDistribution::from_level(training, pattern_size)?,
        epsilon,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosestMatch {
    pub divergence: f64,
    pub training_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTpklSummary {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub matches: Vec<ClosestMatch>,
}

/// Closest training level (lowest divergence, first on ties) for one
/// generated distribution.
pub fn closest_match(
    generated: &PatternDistribution,
    training: &[PatternDistribution],
    epsilon: f64,
) -> Result<ClosestMatch> {
    if training.is_empty() {
        return Err(Error::Empty("no training levels to compare against".into()));
    }
    let mut best = ClosestMatch {
        divergence: f64::INFINITY,
        training_index: 0,
    };
    for (i, t) in training.iter().enumerate() {
        let d = kl_divergence(generated, t, epsilon)?;
        if d < best.divergence {
            best = ClosestMatch {
                divergence: d,
                training_index: i,
            };
        }
    }
    Ok(best)
}

/// Mean and 95% interval of each generated level's closest divergence.
pub fn min_tpkldiv(
    generated: &[LevelGrid],
    training: &[LevelGrid],
    pattern_size: usize,
    epsilon: f64,
) -> Result<MinTpklSummary> {
    if generated.is_empty() || training.is_empty() {
        return Err(Error::Empty(
            "min-TPKLDiv needs generated and training levels".into(),
        ));
    }
    let train: Vec<_> = training
        .iter()
        .map(|l| PatternDistribution::from_level(l, pattern_size))
        .collect::<Result<_>>()?;
    let matches = generated
        .iter()
        .map(|g| {
            closest_match(
                &PatternDistribution::from_level(g, pattern_size)?,
                &train,
                epsilon,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, ci95) = mean_ci95(&matches.iter().map(|m| m.divergence).collect::<Vec<_>>());
    Ok(MinTpklSummary {
        mean,
        ci95,
        matches,
    })
}

/// Mean and `1.96 * s / sqrt(n)` with the sample standard deviation; a
/// single value has a zero-width interval.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}
