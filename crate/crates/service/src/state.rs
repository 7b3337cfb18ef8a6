//! Shared service state: the loaded models and the in-memory sessions.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use tokio::sync::{Mutex, RwLock};

use lode_core::scalenet::Model;
use lode_core::session::{CanvasStack, Scaler};

use crate::wire::{ModelSlot, SessionResponse};

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub model_4to8: Option<PathBuf>,
    pub model_8to16: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    /// Sessions are written here as JSON on shutdown.
    pub snapshot_path: Option<PathBuf>,
}

#[derive(Debug)]
pub struct SessionRecord {
    pub stack: CanvasStack,
    pub created_at: u64,
    pub last_modified: u64,
}

impl SessionRecord {
    pub fn response(&self, id: &str) -> SessionResponse {
        SessionResponse {
            session_id: id.to_string(),
            created_at: self.created_at,
            last_modified: self.last_modified,
            state: self.stack.snapshot(),
        }
    }
}

pub struct AppState {
    pub scaler: Scaler,
    /// Why the scaler is incomplete, if it is.
    pub model_error: Option<String>,
    pub model_slots: Vec<ModelSlot>,
    pub sessions: RwLock<HashMap<String, Arc<Mutex<SessionRecord>>>>,
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl AppState {
    /// State over already-loaded models; either may be absent.
    pub fn new(small_to_medium: Option<Model>, medium_to_large: Option<Model>) -> Self {
        let slot = |role: &str, model: &Option<Model>| ModelSlot {
            role: role.to_string(),
            path: None,
            info: model.as_ref().and_then(|m| m.info().ok()),
        };
        let model_slots = vec![
            slot("4to8", &small_to_medium),
            slot("8to16", &medium_to_large),
        ];
        let (scaler, model_error) = match (small_to_medium, medium_to_large) {
            (Some(a), Some(b)) => match Scaler::new(a, b) {
                Ok(s) => (s, None),
                Err(e) => (Scaler::default(), Some(e.to_string())),
            },
            (a, b) => {
                let missing: Vec<&str> = [("4to8", a.is_none()), ("8to16", b.is_none())]
                    .into_iter()
                    .filter_map(|(name, gone)| gone.then_some(name))
                    .collect();
                let error = format!("model {} not loaded", missing.join(" and "));
                (
                    Scaler {
                        small_to_medium: a,
                        medium_to_large: b,
                    },
                    Some(error),
                )
            }
        };
        AppState {
            scaler,
            model_error,
            model_slots,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Loads the configured model files. A missing or unreadable file leaves
    /// its slot empty and is reported through `model_error`.
    pub fn from_config(config: &ServiceConfig) -> Self {
        let mut problems = Vec::new();
        let mut load = |role: &str, path: &Option<PathBuf>| match path {
            None => {
                problems.push(format!("no {role} model path given"));
                None
            }
            Some(p) => match Model::load(p) {
                Ok(m) => Some(m),
                Err(e) => {
                    problems.push(format!("cannot load {role} model {}: {e}", p.display()));
                    None
                }
            },
        };
        let a = load("4to8", &config.model_4to8);
        let b = load("8to16", &config.model_8to16);
        let mut state = AppState::new(a, b);
        state.model_slots[0].path = config.model_4to8.as_ref().map(|p| p.display().to_string());
        state.model_slots[1].path = config.model_8to16.as_ref().map(|p| p.display().to_string());
        if !problems.is_empty() {
            state.model_error = Some(problems.join("; "));
        }
        state
    }

    pub fn models_loaded(&self) -> bool {
        self.model_error.is_none()
    }
}
