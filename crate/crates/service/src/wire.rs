//! JSON request and response bodies.

use serde::{Deserialize, Serialize};

use lode_core::scalenet::ModelInfo;
use lode_core::session::SessionSnapshot;
use lode_core::LevelGrid;

/// A grid as VGLC glyph rows, one character per tile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridWire {
    pub rows: Vec<String>,
}

impl From<&LevelGrid> for GridWire {
    fn from(grid: &LevelGrid) -> Self {
        GridWire { rows: grid.rows() }
    }
}

impl GridWire {
    pub fn to_grid(&self) -> lode_core::Result<LevelGrid> {
        LevelGrid::from_rows(&self.rows)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub created_at: u64,
    pub last_modified: u64,
    pub state: SessionSnapshot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditRequest {
    pub canvas: usize,
    pub x: usize,
    pub y: usize,
    /// Single VGLC glyph; `M` places the player marker.
    pub tile: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistenceRequest {
    pub tick: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleRequest {
    pub grid: GridWire,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleResponse {
    pub grid: GridWire,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSlot {
    /// `4to8` or `8to16`.
    pub role: String,
    pub path: Option<String>,
    pub info: Option<ModelInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInfoResponse {
    pub models: Vec<ModelSlot>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub models_loaded: bool,
    pub sessions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
