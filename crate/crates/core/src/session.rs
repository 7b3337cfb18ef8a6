//! Three synchronized canvases (4x4, 8x8, 16x16) edited together, with
//! age-based persistence of user-drawn tiles.

use serde::{Deserialize, Serialize};

use crate::dataset::downscale_nearest;
use crate::error::{Error, Result};
use crate::grid::LevelGrid;
use crate::scalenet::{CellOverride, Model};
use crate::tile::{Tile, PLAYER_GLYPH};

/// Slider positions run from 0 to `MAX_TICK` inclusive.
pub const MAX_TICK: u8 = 10;
pub const SLIDER_TICKS: usize = MAX_TICK as usize + 1;
pub const CANVAS_SIZES: [usize; 3] = [4, 8, 16];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceParams {
    pub a_min: f64,
    pub a_max: f64,
    pub c_max: f64,
}

impl PersistenceParams {
    pub const LOWEST: PersistenceParams = PersistenceParams {
        a_min: 0.0,
        a_max: 1.0,
        c_max: 0.5,
    };
    pub const HIGHEST: PersistenceParams = PersistenceParams {
        a_min: 20.0,
        a_max: 100.0,
        c_max: 1.0,
    };
}

/// Confidence protecting a user tile of the given age.
pub fn confidence(age: f64, params: &PersistenceParams) -> f64 {
    let PersistenceParams {
        a_min,
        a_max,
        c_max,
    } = *params;
    if age <= a_min {
        c_max
    } else if age <= a_max {
        (c_max - 0.5) / (a_max - a_min) * (a_max - age) + 0.5
    } else {
        0.5
    }
}

/// Linear interpolation between the lowest and highest persistence.
pub fn slider_to_params(tick: u8) -> Result<PersistenceParams> {
    if tick > MAX_TICK {
        return Err(Error::invalid(format!(
            "slider tick {tick} is outside 0..={MAX_TICK}"
        )));
    }
    let t = f64::from(tick) / f64::from(MAX_TICK);
    let (lo, hi) = (PersistenceParams::LOWEST, PersistenceParams::HIGHEST);
    let lerp = |a: f64, b: f64| a + (b - a) * t;
    Ok(PersistenceParams {
        a_min: lerp(lo.a_min, hi.a_min),
        a_max: lerp(lo.a_max, hi.a_max),
        c_max: lerp(lo.c_max, hi.c_max),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellProvenance {
    pub user_drawn: bool,
    /// Propagation events since the cell was drawn.
    pub age: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerMarker {
    pub canvas: usize,
    pub x: usize,
    pub y: usize,
}

/// The two upscalers linking neighbouring canvases.
#[derive(Debug, Clone, Default)]
pub struct Scaler {
    pub small_to_medium: Option<Model>,
    pub medium_to_large: Option<Model>,
}

impl Scaler {
    pub fn new(small_to_medium: Model, medium_to_large: Model) -> Result<Self> {
        if small_to_medium.input_size() != CANVAS_SIZES[0]
            || medium_to_large.input_size() != CANVAS_SIZES[1]
        {
            return Err(Error::Model(format!(
                "scaler needs {}->{} and {}->{} models",
                CANVAS_SIZES[0], CANVAS_SIZES[1], CANVAS_SIZES[1], CANVAS_SIZES[2]
            )));
        }
        Ok(Scaler {
            small_to_medium: Some(small_to_medium),
            medium_to_large: Some(medium_to_large),
        })
    }

    /// Model producing canvas `target` from canvas `target - 1`.
    pub fn model_for(&self, target: usize) -> Result<&Model> {
        let slot = match target {
            1 => &self.small_to_medium,
            2 => &self.medium_to_large,
            _ => {
                return Err(Error::invalid(format!(
                    "no canvas upscales into canvas {target}"
                )))
            }
        };
        slot.as_ref().ok_or_else(|| {
            Error::Model(format!(
                "the {}->{} model is not loaded",
                CANVAS_SIZES[target - 1],
                CANVAS_SIZES[target]
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanvasStack {
    grids: [LevelGrid; 3],
    provenance: [Vec<CellProvenance>; 3],
    slider_tick: u8,
    player: Option<PlayerMarker>,
}

impl Default for CanvasStack {
    fn default() -> Self {
        Self::new()
    }
}

/// One recorded user action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditCommand {
    /// Draw `glyph` at `(x, y)`; the player glyph moves the start marker.
    Draw {
        canvas: usize,
        x: usize,
        y: usize,
        glyph: char,
    },
    Persistence {
        tick: u8,
    },
}

impl CanvasStack {
    /// All canvases empty, persistence at its highest tick.
    pub fn new() -> Self {
        CanvasStack {
            grids: CANVAS_SIZES.map(|s| LevelGrid::empty(s, s)),
            provenance: CANVAS_SIZES.map(|s| vec![CellProvenance::default(); s * s]),
            slider_tick: MAX_TICK,
            player: None,
        }
    }

    /// Starts from a 16x16 level; the smaller canvases are its downscales.
    pub fn from_level(level: &LevelGrid) -> Result<Self> {
        if level.width() != CANVAS_SIZES[2] || level.height() != CANVAS_SIZES[2] {
            return Err(Error::shape("a session level must be 16x16"));
        }
        let mut stack = Self::new();
        stack.grids[2] = level.clone();
        stack.grids[1] = downscale_nearest(&stack.grids[2])?;
        stack.grids[0] = downscale_nearest(&stack.grids[1])?;
        Ok(stack)
    }

    pub fn grid(&self, canvas: usize) -> &LevelGrid {
        &self.grids[canvas]
    }

    pub fn grids(&self) -> &[LevelGrid; 3] {
        &self.grids
    }

    pub fn provenance(&self, canvas: usize) -> &[CellProvenance] {
        &self.provenance[canvas]
    }

    pub fn slider_tick(&self) -> u8 {
        self.slider_tick
    }

    pub fn persistence(&self) -> PersistenceParams {
        slider_to_params(self.slider_tick).expect("tick kept in range")
    }

    pub fn player(&self) -> Option<PlayerMarker> {
        self.player
    }

    pub fn set_slider_tick(&mut self, tick: u8) -> Result<()> {
        slider_to_params(tick)?;
        self.slider_tick = tick;
        Ok(())
    }

    fn check_cell(canvas: usize, x: usize, y: usize) -> Result<()> {
        let size = *CANVAS_SIZES
            .get(canvas)
            .ok_or_else(|| Error::invalid(format!("canvas {canvas} does not exist")))?;
        if x >= size || y >= size {
            return Err(Error::invalid(format!(
                "({x}, {y}) is outside the {size}x{size} canvas"
            )));
        }
        Ok(())
    }

    pub fn set_player(&mut self, canvas: usize, x: usize, y: usize) -> Result<()> {
        Self::check_cell(canvas, x, y)?;
        self.player = Some(PlayerMarker { canvas, x, y });
        Ok(())
    }

    /// Draws a tile and propagates. On error the stack is unchanged.
    pub fn apply_edit(
        &mut self,
        scaler: &Scaler,
        canvas: usize,
        x: usize,
        y: usize,
        tile: Tile,
    ) -> Result<()> {
        Self::check_cell(canvas, x, y)?;
        let mut next = self.clone();
        let size = CANVAS_SIZES[canvas];
        next.grids[canvas].set(x, y, tile);
        next.provenance[canvas][y * size + x] = CellProvenance {
            user_drawn: true,
            age: 0,
        };
        next.propagate(scaler, canvas)?;
        *self = next;
        Ok(())
    }

    /// Downscales every canvas below `edited`, re-upscales every canvas
    /// above it, then ages all user-drawn cells by one event.
    pub fn propagate(&mut self, scaler: &Scaler, edited: usize) -> Result<()> {
        if edited >= CANVAS_SIZES.len() {
            return Err(Error::invalid(format!("canvas {edited} does not exist")));
        }
        for c in (0..edited).rev() {
            let fresh = downscale_nearest(&self.grids[c + 1])?;
            self.replace(c, fresh);
        }
        let params = self.persistence();
        for c in edited + 1..CANVAS_SIZES.len() {
            let model = scaler.model_for(c)?;
            let overrides: Vec<Option<CellOverride>> = self.provenance[c]
                .iter()
                .zip(self.grids[c].cells())
                .map(|(p, &tile)| {
                    let conf = confidence(f64::from(p.age), &params);
                    (p.user_drawn && conf > 0.5).then_some(CellOverride {
                        tile,
                        confidence: conf as f32,
                    })
                })
                .collect();
            let fresh = model.upscale_with_overrides(&self.grids[c - 1], Some(&overrides))?;
            self.replace(c, fresh);
        }
        for prov in self.provenance.iter_mut() {
            for p in prov.iter_mut().filter(|p| p.user_drawn) {
                p.age = p.age.saturating_add(1);
            }
        }
        Ok(())
    }

    /// Installs a recomputed canvas; user cells whose tile changed lose
    /// their user flag.
    fn replace(&mut self, canvas: usize, fresh: LevelGrid) {
        for ((p, old), new) in self.provenance[canvas]
            .iter_mut()
            .zip(self.grids[canvas].cells())
            .zip(fresh.cells())
        {
            if p.user_drawn && old != new {
                *p = CellProvenance::default();
            }
        }
        self.grids[canvas] = fresh;
    }

    pub fn apply(&mut self, scaler: &Scaler, command: &EditCommand) -> Result<()> {
        match *command {
            EditCommand::Draw {
                canvas,
                x,
                y,
                glyph,
            } if glyph == PLAYER_GLYPH => self.set_player(canvas, x, y),
            EditCommand::Draw {
                canvas,
                x,
                y,
                glyph,
            } => {
                let tile = Tile::from_glyph(glyph)
                    .ok_or_else(|| Error::invalid(format!("unknown tile glyph {glyph:?}")))?;
                self.apply_edit(scaler, canvas, x, y, tile)
            }
            EditCommand::Persistence { tick } => self.set_slider_tick(tick),
        }
    }

    /// Applies a recorded log to a copy of `self`.
    pub fn replay(&self, scaler: &Scaler, log: &[EditCommand]) -> Result<CanvasStack> {
        let mut stack = self.clone();
        for command in log {
            stack.apply(scaler, command)?;
        }
        Ok(stack)
    }

    /// Each smaller canvas equals the nearest-neighbour downscale of its
    /// larger neighbour.
    pub fn is_downscale_consistent(&self) -> bool {
        (0..2).all(|c| downscale_nearest(&self.grids[c + 1]).is_ok_and(|d| d == self.grids[c]))
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            canvases: (0..3)
                .map(|c| CanvasSnapshot {
                    size: CANVAS_SIZES[c],
                    rows: self.grids[c].rows(),
                    user_drawn: self.provenance[c].iter().map(|p| p.user_drawn).collect(),
                    age: self.provenance[c].iter().map(|p| p.age).collect(),
                })
                .collect(),
            slider_tick: self.slider_tick,
            persistence: self.persistence(),
            player: self.player,
        }
    }

    pub fn from_snapshot(snapshot: &SessionSnapshot) -> Result<Self> {
        if snapshot.canvases.len() != 3 {
            return Err(Error::Format(
                "a snapshot holds exactly three canvases".into(),
            ));
        }
        let mut stack = Self::new();
        for (c, canvas) in snapshot.canvases.iter().enumerate() {
            let size = CANVAS_SIZES[c];
            let grid = LevelGrid::from_rows(&canvas.rows)?;
            if grid.width() != size || grid.height() != size || canvas.size != size {
                return Err(Error::Format(format!("canvas {c} must be {size}x{size}")));
            }
            if canvas.user_drawn.len() != size * size || canvas.age.len() != size * size {
                return Err(Error::Format(format!(
                    "canvas {c} provenance has the wrong length"
                )));
            }
            stack.grids[c] = grid;
            stack.provenance[c] = canvas
                .user_drawn
                .iter()
                .zip(&canvas.age)
                .map(|(&user_drawn, &age)| CellProvenance { user_drawn, age })
                .collect();
        }
        stack.set_slider_tick(snapshot.slider_tick)?;
        if let Some(p) = snapshot.player {
            stack.set_player(p.canvas, p.x, p.y)?;
        }
        Ok(stack)
    }
}

/// Serializable view of a stack: glyph rows plus row-major provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub canvases: Vec<CanvasSnapshot>,
    pub slider_tick: u8,
    pub persistence: PersistenceParams,
    pub player: Option<PlayerMarker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanvasSnapshot {
    pub size: usize,
    pub rows: Vec<String>,
    pub user_drawn: Vec<bool>,
    pub age: Vec<u32>,
}
