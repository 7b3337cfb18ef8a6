use std::fmt;

use crate::error::{Error, Result};
use crate::tile::{Tile, TILE_COUNT};

/// Rectangular, row-major grid of tiles. Used at every scale.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LevelGrid {
    width: usize,
    height: usize,
    cells: Vec<Tile>,
}

impl LevelGrid {
    pub fn filled(width: usize, height: usize, tile: Tile) -> Self {
        LevelGrid {
            width,
            height,
            cells: vec![tile; width * height],
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::filled(width, height, Tile::Empty)
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<Tile>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::shape(format!(
                "{} cells do not fill a {width}x{height} grid",
                cells.len()
            )));
        }
        Ok(LevelGrid {
            width,
            height,
            cells,
        })
    }

    pub fn from_ids(width: usize, height: usize, ids: &[u8]) -> Result<Self> {
        let cells = ids
            .iter()
            .map(|&id| {
                Tile::from_id(id)
                    .ok_or_else(|| Error::invalid(format!("tile id {id} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_cells(width, height, cells)
    }

    /// Builds a grid from glyph rows. The player glyph is not accepted here;
    /// use [`crate::vglc::parse_vglc_level`] for raw corpus text.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let height = rows.len();
        if height == 0 {
            return Err(Error::shape("grid has no rows"));
        }
        let width = rows[0].as_ref().chars().count();
        let mut cells = Vec::with_capacity(width * height);
        for (row, line) in rows.iter().enumerate() {
            let line = line.as_ref();
            if line.chars().count() != width {
                return Err(Error::shape(format!(
                    "row {row} has {} tiles, expected {width}",
                    line.chars().count()
                )));
            }
            for (column, glyph) in line.chars().enumerate() {
                match Tile::from_glyph(glyph) {
                    Some(tile) if glyph != crate::tile::PLAYER_GLYPH => cells.push(tile),
                    _ => return Err(Error::Parse { row, column, glyph }),
                }
            }
        }
        Self::from_cells(width, height, cells)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn cells(&self) -> &[Tile] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Tile {
        self.cells[y * self.width + x]
    }

    /// Bounds-checked lookup with signed coordinates.
    #[inline]
    pub fn tile_at(&self, x: isize, y: isize) -> Option<Tile> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, tile: Tile) {
        self.cells[y * self.width + x] = tile;
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height
    }

    pub fn ids(&self) -> Vec<u8> {
        self.cells.iter().map(|t| t.id()).collect()
    }

    pub fn count(&self, tile: Tile) -> usize {
        self.cells.iter().filter(|&&t| t == tile).count()
    }

    pub fn rows(&self) -> Vec<String> {
        self.cells
            .chunks(self.width)
            .map(|row| row.iter().map(|t| t.glyph()).collect())
            .collect()
    }

    /// Copies the `size`x`size` block whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> LevelGrid {
        debug_assert!(x + width <= self.width && y + height <= self.height);
        let mut cells = Vec::with_capacity(width * height);
        for row in y..y + height {
            let start = row * self.width + x;
            cells.extend_from_slice(&self.cells[start..start + width]);
        }
        LevelGrid {
            width,
            height,
            cells,
        }
    }

    pub fn one_hot(&self) -> OneHotLevel {
        OneHotLevel::encode(self)
    }
}

impl fmt::Display for LevelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

/// Channel-major one-hot encoding (`7 x height x width`), matching the
/// `NCHW` layout of the tensor engine.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotLevel {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl OneHotLevel {
    pub fn encode(grid: &LevelGrid) -> Self {
        let plane = grid.area();
        let mut data = vec![0.0f32; TILE_COUNT * plane];
        for (i, tile) in grid.cells().iter().enumerate() {
            data[tile.index() * plane + i] = 1.0;
        }
        OneHotLevel {
            width: grid.width(),
            height: grid.height(),
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        TILE_COUNT
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Per-cell argmax back to a grid; ties resolve to the lower tile id.
    pub fn decode(&self) -> LevelGrid {
        let plane = self.width * self.height;
        let cells = (0..plane)
            .map(|i| {
                let mut best = 0;
                for c in 1..TILE_COUNT {
                    if self.data[c * plane + i] > self.data[best * plane + i] {
                        best = c;
                    }
                }
                Tile::ALL[best]
            })
            .collect();
        LevelGrid {
            width: self.width,
            height: self.height,
            cells,
        }
    }
}
