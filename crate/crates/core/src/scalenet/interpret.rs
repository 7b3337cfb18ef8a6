//! Turning network outputs into tile grids.

use crate::dataset::tile_counts;
use crate::error::{Error, Result};
use crate::grid::LevelGrid;
use crate::tile::{Tile, TILE_COUNT};

/// Probability a layer assigns to its tile, per output cell.
pub const DEFAULT_THRESHOLD: f32 = 0.5;

/// Per-cell sigmoid output of one scale layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Self {
        assert_eq!(
            values.len(),
            width * height,
            "map values must fill the grid"
        );
        ProbabilityMap {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// Protection for an existing cell: it keeps `tile` unless a layer's
/// probability beats `confidence`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOverride {
    pub tile: Tile,
    pub confidence: f32,
}

/// Reads layer maps in order, starting from an all-empty grid: a cell takes
/// layer `k`'s tile when its probability exceeds the threshold, so later
/// (rarer) layers win. Cells with an override start from the override tile
/// and need to exceed `max(threshold, confidence)`.
pub fn interpret(
    maps: &[ProbabilityMap],
    tile_order: &[Tile],
    threshold: f32,
    overrides: Option<&[Option<CellOverride>]>,
) -> Result<LevelGrid> {
    if maps.len() != tile_order.len() {
        return Err(Error::shape(format!(
            "{} maps for {} layer tiles",
            maps.len(),
            tile_order.len()
        )));
    }
    let (w, h) = match maps.first() {
        Some(m) => (m.width, m.height),
        None => return Err(Error::Empty("no probability maps".into())),
    };
    if maps.iter().any(|m| (m.width, m.height) != (w, h)) {
        return Err(Error::shape("probability maps differ in extents"));
    }
    if let Some(o) = overrides {
        if o.len() != w * h {
            return Err(Error::shape("override table does not cover the grid"));
        }
    }
    let cells = (0..w * h)
        .map(|i| {
            let guard = overrides.and_then(|o| o[i]);
            let (mut tile, bar) = match guard {
                Some(g) => (g.tile, threshold.max(g.confidence)),
                None => (Tile::Empty, threshold),
            };
            for (map, &layer_tile) in maps.iter().zip(tile_order) {
                if map.values[i] > bar {
                    tile = layer_tile;
                }
            }
            tile
        })
        .collect();
    LevelGrid::from_cells(w, h, cells)
}

/// Per-cell argmax of a `7 x h x w` softmax sample. An overridden cell keeps
/// its tile unless the winning probability exceeds its confidence.
pub fn argmax_interpret(
    probs: &[f32],
    width: usize,
    height: usize,
    overrides: Option<&[Option<CellOverride>]>,
) -> Result<LevelGrid> {
    let plane = width * height;
    if probs.len() != TILE_COUNT * plane {
        return Err(Error::shape("softmax sample does not match the grid"));
    }
    let cells = (0..plane)
        .map(|i| {
            let mut best = 0;
            for c in 1..TILE_COUNT {
                if probs[c * plane + i] > probs[best * plane + i] {
                    best = c;
                }
            }
            match overrides.and_then(|o| o[i]) {
                Some(g) if probs[best * plane + i] <= g.confidence => g.tile,
                _ => Tile::ALL[best],
            }
        })
        .collect();
    LevelGrid::from_cells(width, height, cells)
}

/// Non-empty tiles by descending frequency, ties by ascending id.
pub fn tile_rarity_order(segments: &[LevelGrid]) -> Result<Vec<Tile>> {
    if segments.is_empty() {
        return Err(Error::Empty("no segments to rank tiles by".into()));
    }
    let counts = tile_counts(segments);
    let mut order: Vec<Tile> = Tile::ALL[1..].to_vec();
    order.sort_by_key(|t| (std::cmp::Reverse(counts[t.index()]), t.id()));
    Ok(order)
}
