//! The seven-tile Lode Runner alphabet.
//!
//! Glyphs follow the VGLC text encoding. The player glyph `M` is accepted on
//! ingestion but never becomes part of a grid; see [`Tile::from_glyph`].

use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of tiles in the alphabet (and channels in a one-hot level).
pub const TILE_COUNT: usize = 7;

/// Glyph used by VGLC for the player start position.
pub const PLAYER_GLYPH: char = 'M';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tile {
    Empty = 0,
    Brick = 1,
    Solid = 2,
    Ladder = 3,
    Rope = 4,
    Gold = 5,
    Enemy = 6,
}

impl Tile {
    pub const ALL: [Tile; TILE_COUNT] = [
        Tile::Empty,
        Tile::Brick,
        Tile::Solid,
        Tile::Ladder,
        Tile::Rope,
        Tile::Gold,
        Tile::Enemy,
    ];

    #[inline]
    pub fn id(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_id(id: u8) -> Option<Tile> {
        Tile::ALL.get(id as usize).copied()
    }

    pub fn glyph(self) -> char {
        match self {
            Tile::Empty => '.',
            Tile::Brick => 'b',
            Tile::Solid => 'B',
            Tile::Ladder => '#',
            Tile::Rope => '-',
            Tile::Gold => 'G',
            Tile::Enemy => 'E',
        }
    }

    /// Maps a glyph to its tile. The player glyph maps to [`Tile::Empty`].
    pub fn from_glyph(glyph: char) -> Option<Tile> {
        match glyph {
            '.' | PLAYER_GLYPH => Some(Tile::Empty),
            'b' => Some(Tile::Brick),
            'B' => Some(Tile::Solid),
            '#' => Some(Tile::Ladder),
            '-' => Some(Tile::Rope),
            'G' => Some(Tile::Gold),
            'E' => Some(Tile::Enemy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tile::Empty => "empty",
            Tile::Brick => "brick",
            Tile::Solid => "solid",
            Tile::Ladder => "ladder",
            Tile::Rope => "rope",
            Tile::Gold => "gold",
            Tile::Enemy => "enemy",
        }
    }

    /// Brick and solid block movement; everything else can be occupied.
    #[inline]
    pub fn is_passable(self) -> bool {
        !matches!(self, Tile::Brick | Tile::Solid)
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphabetEntry {
    pub id: u8,
    pub name: String,
    pub glyph: char,
}

/// Ordered tile table, as recorded in model and dataset headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileAlphabet {
    pub tiles: Vec<AlphabetEntry>,
}

impl TileAlphabet {
    pub fn lode_runner() -> Self {
        TileAlphabet {
            tiles: Tile::ALL
                .iter()
                .map(|t| AlphabetEntry {
                    id: t.id(),
                    name: t.name().to_string(),
                    glyph: t.glyph(),
                })
                .collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.tiles.len()
    }

    /// Glyphs in id order, e.g. `".bB#-GE"`.
    pub fn glyphs(&self) -> String {
        self.tiles.iter().map(|e| e.glyph).collect()
    }
}

impl Default for TileAlphabet {
    fn default() -> Self {
        Self::lode_runner()
    }
}
