//! Expressive-range metrics: reachable tiles for a breadth-first playing
//! agent, and empty tiles.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grid::LevelGrid;
use crate::tile::Tile;

/// Movement rules of the playing agent. Outside the level is solid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachabilityRules {
    /// Lets a standing agent dig into the brick diagonally below a passable
    /// side cell.
    pub dig_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpressiveMetrics {
    pub reachable_tiles: usize,
    pub empty_tiles: usize,
}

pub fn expressive_metrics(level: &LevelGrid, rules: &ReachabilityRules) -> ExpressiveMetrics {
    ExpressiveMetrics {
        reachable_tiles: reachable_tiles(level, rules),
        empty_tiles: empty_tiles(level),
    }
}

pub fn empty_tiles(level: &LevelGrid) -> usize {
    level.count(Tile::Empty)
}

fn passable(level: &LevelGrid, x: isize, y: isize) -> bool {
    level.tile_at(x, y).is_some_and(Tile::is_passable)
}

/// Whether the agent at `(x, y)` can stand rather than fall.
pub fn is_supported(level: &LevelGrid, x: usize, y: usize) -> bool {
    if matches!(level.get(x, y), Tile::Ladder | Tile::Rope) || y + 1 == level.height() {
        return true;
    }
    matches!(
        level.get(x, y + 1),
        Tile::Brick | Tile::Solid | Tile::Ladder
    )
}

/// Cells the agent can move to from `(x, y)` in one step.
pub fn moves(
    level: &LevelGrid,
    rules: &ReachabilityRules,
    x: usize,
    y: usize,
) -> Vec<(usize, usize)> {
    let (xi, yi) = (x as isize, y as isize);
    if !is_supported(level, x, y) {
        return vec![(x, y + 1)];
    }
    let mut out = Vec::with_capacity(4);
    for dx in [-1isize, 1] {
        if passable(level, xi + dx, yi) {
            out.push(((xi + dx) as usize, y));
        }
    }
    if level.get(x, y) == Tile::Ladder && passable(level, xi, yi - 1) {
        out.push((x, y - 1));
    }
    if passable(level, xi, yi + 1) {
        out.push((x, y + 1));
    }
    if rules.dig_enabled {
        for dx in [-1isize, 1] {
            if passable(level, xi + dx, yi) && level.tile_at(xi + dx, yi + 1) == Some(Tile::Brick) {
                out.push(((xi + dx) as usize, y + 1));
            }
        }
    }
    out
}

/// Cells visited by a breadth-first search from `(x, y)`.
pub fn reachable_from(level: &LevelGrid, rules: &ReachabilityRules, x: usize, y: usize) -> usize {
    let w = level.width();
    let mut seen = vec![false; level.area()];
    let mut queue = VecDeque::from([(x, y)]);
    seen[y * w + x] = true;
    let mut count = 1;
    while let Some((cx, cy)) = queue.pop_front() {
        for (nx, ny) in moves(level, rules, cx, cy) {
            if !seen[ny * w + nx] {
                seen[ny * w + nx] = true;
                count += 1;
                queue.push_back((nx, ny));
            }
        }
    }
    count
}

/// Largest number of cells reached from any passable starting cell.
pub fn reachable_tiles(level: &LevelGrid, rules: &ReachabilityRules) -> usize {
    let mut best = 0;
    for y in 0..level.height() {
        for x in 0..level.width() {
            if level.get(x, y).is_passable() {
                best = best.max(reachable_from(level, rules, x, y));
            }
        }
    }
    best
}
