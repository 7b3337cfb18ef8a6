//! VGLC text ingestion and corpus loading.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::LevelGrid;
use crate::tile::{Tile, PLAYER_GLYPH};

/// Width of a VGLC Lode Runner level in tiles.
pub const VGLC_WIDTH: usize = 32;
/// Height of a VGLC Lode Runner level in tiles.
pub const VGLC_HEIGHT: usize = 22;
/// Levels in the VGLC Lode Runner set.
pub const VGLC_LEVEL_COUNT: usize = 150;

/// Parses one level in VGLC text form. The player glyph becomes empty.
pub fn parse_vglc_level(text: &str) -> Result<LevelGrid> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::shape("level text has no rows"));
    }
    let width = lines[0].chars().count();
    let mut cells = Vec::with_capacity(width * lines.len());
    for (row, line) in lines.iter().enumerate() {
        let mut count = 0;
        for (column, glyph) in line.chars().enumerate() {
            let tile = Tile::from_glyph(glyph).ok_or(Error::Parse { row, column, glyph })?;
            cells.push(tile);
            count += 1;
        }
        if count != width {
            return Err(Error::shape(format!(
                "row {row} has {count} tiles, expected {width}"
            )));
        }
    }
    LevelGrid::from_cells(width, lines.len(), cells)
}

/// Renders a grid as VGLC text, optionally marking a player start.
pub fn to_vglc_text(grid: &LevelGrid, player: Option<(usize, usize)>) -> String {
    let mut out = String::with_capacity((grid.width() + 1) * grid.height());
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            if player == Some((x, y)) {
                out.push(PLAYER_GLYPH);
            } else {
                out.push(grid.get(x, y).glyph());
            }
        }
        out.push('\n');
    }
    out
}

/// Loads every `*.txt` level under `dir`, ordered by the number embedded in
/// the file name (`Level 2.txt` before `Level 10.txt`), then by name.
pub fn load_corpus(dir: &Path) -> Result<Vec<LevelGrid>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort_by_key(|p| {
        let name = p
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let number: u64 = name
            .chars()
            .filter(|c| c.is_ascii_digit())
            .collect::<String>()
            .parse()
            .unwrap_or(u64::MAX);
        (number, name)
    });
    if files.is_empty() {
        return Err(Error::Empty(format!("no .txt levels in {}", dir.display())));
    }
    files
        .iter()
        .map(|p| parse_vglc_level(&fs::read_to_string(p)?))
        .collect()
}

/// Writes levels as `Level <n>.txt` files, the layout [`load_corpus`] reads.
pub fn write_corpus(dir: &Path, levels: &[LevelGrid]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, level) in levels.iter().enumerate() {
        fs::write(
            dir.join(format!("Level {}.txt", i + 1)),
            to_vglc_text(level, None),
        )?;
    }
    Ok(())
}

/// Generates a seeded corpus of 32x22 levels in the Lode Runner idiom:
/// brick platforms over a solid floor, ladders between platforms, ropes,
/// gold and a few enemies. Used when the VGLC files are not at hand; the
/// dataset window counts depend only on level dimensions.
pub fn synthetic_corpus(levels: usize, seed: u64) -> Vec<LevelGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..levels)
        .map(|_| {
            let text = synthetic_level_text(&mut rng);
            parse_vglc_level(&text).expect("generator emits valid glyphs")
        })
        .collect()
}

fn synthetic_level_text(rng: &mut ChaCha8Rng) -> String {
    let (w, h) = (VGLC_WIDTH, VGLC_HEIGHT);
    let mut g = vec![vec!['.'; w]; h];
    for cell in g[h - 1].iter_mut() {
        *cell = 'B';
    }

    // Platform rows from the top down, 3 to 4 rows apart.
    let mut rows = Vec::new();
    let mut y = rng.random_range(2..5);
    while y < h - 3 {
        rows.push(y);
        y += rng.random_range(3..5);
    }

    for &py in &rows {
        let mut x = rng.random_range(0..4);
        while x < w {
            let len = rng.random_range(4..15).min(w - x);
            let glyph = if rng.random_bool(0.15) { 'B' } else { 'b' };
            for cell in &mut g[py][x..x + len] {
                *cell = glyph;
            }
            x += len + rng.random_range(2..6);
        }
    }

    // Ladders join each platform row to the one below it (or the floor).
    let mut floors = rows.clone();
    floors.push(h - 1);
    for pair in floors.windows(2) {
        let (top, bottom) = (pair[0], pair[1]);
        for _ in 0..rng.random_range(1..4) {
            let lx = rng.random_range(0..w);
            for row in g.iter_mut().take(bottom).skip(top) {
                row[lx] = '#';
            }
        }
    }

    // Ropes hang in the open row just under a platform.
    for &py in &rows {
        if py + 1 < h - 1 && rng.random_bool(0.6) {
            let len = rng.random_range(3..10);
            let start = rng.random_range(0..w - len);
            for cell in &mut g[py + 1][start..start + len] {
                if *cell == '.' {
                    *cell = '-';
                }
            }
        }
    }

    let standing_spots = |g: &Vec<Vec<char>>| -> Vec<(usize, usize)> {
        let mut spots = Vec::new();
        for yy in 0..h - 1 {
            for (xx, &c) in g[yy].iter().enumerate() {
                if c == '.' && matches!(g[yy + 1][xx], 'b' | 'B') {
                    spots.push((xx, yy));
                }
            }
        }
        spots
    };

    let place = |g: &mut Vec<Vec<char>>, glyph: char, count: usize, rng: &mut ChaCha8Rng| {
        for _ in 0..count {
            let spots = standing_spots(g);
            if spots.is_empty() {
                return;
            }
            let (xx, yy) = spots[rng.random_range(0..spots.len())];
            g[yy][xx] = glyph;
        }
    };
    let gold = rng.random_range(5..10);
    place(&mut g, 'G', gold, rng);
    let enemies = rng.random_range(1..4);
    place(&mut g, 'E', enemies, rng);
    place(&mut g, PLAYER_GLYPH, 1, rng);

    let mut text = String::with_capacity((w + 1) * h);
    for row in g {
        text.extend(row);
        text.push('\n');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_size_level() {
        let text = synthetic_level_text(&mut ChaCha8Rng::seed_from_u64(3));
        let grid = parse_vglc_level(&text).unwrap();
        assert_eq!((grid.width(), grid.height()), (32, 22));
    }

    #[test]
    fn player_becomes_empty() {
        let grid = parse_vglc_level("bMb\nBBB\n").unwrap();
        assert_eq!(grid.get(1, 0), Tile::Empty);
        assert_eq!(grid.get(0, 0), Tile::Brick);
    }

    #[test]
    fn unknown_glyph_reports_coordinates() {
        match parse_vglc_level("...\n.Z.\n") {
            Err(Error::Parse { row, column, glyph }) => {
                assert_eq!((row, column, glyph), (1, 1, 'Z'));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_lines_are_shape_errors() {
        assert!(matches!(
            parse_vglc_level("...\n..\n"),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn crlf_line_endings() {
        let grid = parse_vglc_level("b.\r\n.#\r\n").unwrap();
        assert_eq!(grid.rows(), vec!["b.", ".#"]);
    }

    #[test]
    fn synthetic_corpus_is_deterministic_and_rarity_ordered() {
        let a = synthetic_corpus(20, 11);
        assert_eq!(a, synthetic_corpus(20, 11));
        let mut counts = [0usize; 7];
        for level in &a {
            for t in level.cells() {
                counts[t.index()] += 1;
            }
        }
        let nonempty = &counts[1..];
        let max = nonempty.iter().max().unwrap();
        let min = nonempty.iter().min().unwrap();
        assert_eq!(counts[Tile::Brick.index()], *max);
        assert_eq!(counts[Tile::Enemy.index()], *min);
    }

    #[test]
    fn corpus_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let levels = synthetic_corpus(12, 5);
        write_corpus(dir.path(), &levels).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), levels);
    }
}
