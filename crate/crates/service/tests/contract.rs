use std::sync::{Arc, OnceLock};

use lode_core::scalenet::{train_architecture, Architecture, Model, TrainingConfig};
use lode_core::session::{CanvasStack, EditCommand, Scaler, SessionSnapshot};
use lode_core::{build_dataset, downscale_nearest, vglc, LevelGrid, Tile};
use lode_service::wire::{GridWire, ModelInfoResponse, ScaleResponse, SessionResponse};
use lode_service::{run, AppState, ServiceConfig};
use reqwest::StatusCode;
use serde_json::json;

fn smoke_models() -> &'static (Model, Model) {
    static MODELS: OnceLock<(Model, Model)> = OnceLock::new();
    MODELS.get_or_init(|| {
        let corpus = vglc::synthetic_corpus(4, 21);
        let cfg = TrainingConfig {
            base_epochs: 3,
            greedy_epochs: 2,
            batch_size: 16,
            ..TrainingConfig::default()
        };
        let train = |window| {
            let pairs = build_dataset(&corpus, window).unwrap().subset(120, 5).pairs;
            train_architecture(Architecture::LayerScaling, &pairs, &cfg, &mut |_| {})
                .unwrap()
                .model
        };
        (train(8), train(16))
    })
}

fn scaler() -> Scaler {
    let (a, b) = smoke_models().clone();
    Scaler::new(a, b).unwrap()
}

struct Server {
    base: String,
    client: reqwest::Client,
    _stop: tokio::sync::oneshot::Sender<()>,
}

async fn start(state: AppState) -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(run(
        listener,
        Arc::new(state),
        ServiceConfig::default(),
        async {
            let _ = stopped.await;
        },
    ));
    Server {
        base: format!("http://{addr}"),
        client: reqwest::Client::new(),
        _stop: stop,
    }
}

async fn loaded() -> Server {
    let (a, b) = smoke_models().clone();
    start(AppState::new(Some(a), Some(b))).await
}

impl Server {
    async fn post(&self, path: &str, body: serde_json::Value) -> reqwest::Response {
        self.client
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    async fn get(&self, path: &str) -> reqwest::Response {
        self.client
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap()
    }

    async fn create(&self) -> SessionResponse {
        let r = self.post("/session", json!({})).await;
        assert_eq!(r.status(), StatusCode::CREATED);
        r.json().await.unwrap()
    }

    async fn edit(
        &self,
        id: &str,
        canvas: usize,
        x: usize,
        y: usize,
        tile: &str,
    ) -> reqwest::Response {
        self.post(
            &format!("/session/{id}/edit"),
            json!({"canvas": canvas, "x": x, "y": y, "tile": tile}),
        )
        .await
    }
}

/// Structural checks every session response must pass.
fn check_snapshot(s: &SessionSnapshot) {
    assert_eq!(s.canvases.len(), 3);
    for (c, size) in [4usize, 8, 16].into_iter().enumerate() {
        let canvas = &s.canvases[c];
        let grid = LevelGrid::from_rows(&canvas.rows).unwrap();
        assert_eq!((grid.width(), grid.height()), (size, size));
        assert_eq!(canvas.user_drawn.len(), size * size);
        assert_eq!(canvas.age.len(), size * size);
    }
    assert!(s.slider_tick <= 10);
}

#[tokio::test]
async fn health_and_model_info() {
    let server = loaded().await;
    let health: serde_json::Value = server.get("/health").await.json().await.unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["models_loaded"], true);
    let info: ModelInfoResponse = server.get("/model/info").await.json().await.unwrap();
    assert_eq!(info.models.len(), 2);
    let (a, b) = smoke_models();
    assert_eq!(
        info.models[0].info.as_ref().unwrap().sha256,
        a.checksum().unwrap()
    );
    assert_eq!(
        info.models[1].info.as_ref().unwrap().sha256,
        b.checksum().unwrap()
    );
}

#[tokio::test]
async fn create_gives_empty_canvases_and_distinct_ids() {
    let server = loaded().await;
    let a = server.create().await;
    let b = server.create().await;
    assert_ne!(a.session_id, b.session_id);
    assert_eq!(a.state, CanvasStack::new().snapshot());
    assert_eq!(a.state.slider_tick, 10);
    check_snapshot(&a.state);
    let fetched: SessionResponse = server
        .get(&format!("/session/{}", a.session_id))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(fetched.state, a.state);
}

#[tokio::test]
async fn create_without_models_is_unavailable() {
    let server = start(AppState::new(None, None)).await;
    let r = server.post("/session", json!({})).await;
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
    let body: serde_json::Value = r.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("not loaded"));
    let r = server
        .post(
            "/scale/up",
            json!({"grid": {"rows": ["....", "....", "....", "...."]}}),
        )
        .await;
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn edit_propagates_like_the_local_stack() {
    let server = loaded().await;
    let id = server.create().await.session_id;
    let r = server.edit(&id, 1, 0, 0, "b").await;
    assert_eq!(r.status(), StatusCode::OK);
    let resp: SessionResponse = r.json().await.unwrap();
    check_snapshot(&resp.state);
    let small = LevelGrid::from_rows(&resp.state.canvases[0].rows).unwrap();
    let medium = LevelGrid::from_rows(&resp.state.canvases[1].rows).unwrap();
    let large = LevelGrid::from_rows(&resp.state.canvases[2].rows).unwrap();
    assert_eq!(medium.get(0, 0), Tile::Brick);
    assert_eq!(small, downscale_nearest(&medium).unwrap());
    assert_eq!(large, smoke_models().1.upscale(&medium).unwrap());

    let mut mirror = CanvasStack::new();
    mirror
        .apply(
            &scaler(),
            &EditCommand::Draw {
                canvas: 1,
                x: 0,
                y: 0,
                glyph: 'b',
            },
        )
        .unwrap();
    assert_eq!(resp.state, mirror.snapshot());
}

#[tokio::test]
async fn large_canvas_edits_keep_the_downscale_chain() {
    let server = loaded().await;
    let id = server.create().await.session_id;
    for (x, y, t) in [(3, 4, "#"), (15, 15, "B"), (0, 7, "G"), (8, 8, "-")] {
        let resp: SessionResponse = server.edit(&id, 2, x, y, t).await.json().await.unwrap();
        let stack = CanvasStack::from_snapshot(&resp.state).unwrap();
        assert!(stack.is_downscale_consistent());
    }
}

#[tokio::test]
async fn bad_edits_are_rejected_and_leave_the_session() {
    let server = loaded().await;
    let id = server.create().await.session_id;
    server.edit(&id, 2, 1, 1, "E").await;
    let before: SessionResponse = server
        .get(&format!("/session/{id}"))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(
        server.edit(&id, 0, 4, 0, "b").await.status(),
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        server.edit(&id, 3, 0, 0, "b").await.status(),
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        server.edit(&id, 1, 0, 0, "z").await.status(),
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        server.edit(&id, 1, 0, 0, "bb").await.status(),
        StatusCode::BAD_REQUEST
    );
    let r = server
        .post(&format!("/session/{id}/edit"), json!({"canvas": 1}))
        .await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let after: SessionResponse = server
        .get(&format!("/session/{id}"))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(before.state, after.state);
    assert_eq!(
        server.edit("nope", 0, 0, 0, "b").await.status(),
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        server.get("/session/nope").await.status(),
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn player_glyph_only_moves_the_marker() {
    let server = loaded().await;
    let id = server.create().await.session_id;
    let before = server
        .edit(&id, 1, 2, 2, "#")
        .await
        .json::<SessionResponse>()
        .await
        .unwrap();
    let after: SessionResponse = server.edit(&id, 2, 5, 9, "M").await.json().await.unwrap();
    for c in 0..3 {
        assert_eq!(before.state.canvases[c].rows, after.state.canvases[c].rows);
    }
    let p = after.state.player.unwrap();
    assert_eq!((p.canvas, p.x, p.y), (2, 5, 9));
}

#[tokio::test]
async fn persistence_updates_the_slider() {
    let server = loaded().await;
    let id = server.create().await.session_id;
    let r: SessionResponse = server
        .post(&format!("/session/{id}/persistence"), json!({"tick": 5}))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(r.state.slider_tick, 5);
    assert!((r.state.persistence.a_max - 50.5).abs() < 1e-12);
    let bad = server
        .post(&format!("/session/{id}/persistence"), json!({"tick": 11}))
        .await;
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);
    let fetched: SessionResponse = server
        .get(&format!("/session/{id}"))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(fetched.state.slider_tick, 5);
}

#[tokio::test]
async fn stateless_scaling() {
    let server = loaded().await;
    let brick16 = GridWire::from(&LevelGrid::filled(16, 16, Tile::Brick));
    let r: ScaleResponse = server
        .post("/scale/down", json!({"grid": brick16}))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(
        r.grid.to_grid().unwrap(),
        LevelGrid::filled(8, 8, Tile::Brick)
    );

    let medium = vglc::synthetic_corpus(1, 3)[0].crop(4, 6, 8, 8);
    let r: ScaleResponse = server
        .post("/scale/up", json!({"grid": GridWire::from(&medium)}))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(
        r.grid.to_grid().unwrap(),
        smoke_models().1.upscale(&medium).unwrap()
    );
    let small = LevelGrid::empty(4, 4);
    let r: ScaleResponse = server
        .post("/scale/up", json!({"grid": GridWire::from(&small)}))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(r.grid.rows.len(), 8);

    let five = GridWire::from(&LevelGrid::empty(5, 5));
    let r = server.post("/scale/up", json!({"grid": five})).await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let body: serde_json::Value = r.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("4x4, 8x8"));
    let r = server
        .post("/scale/down", json!({"grid": GridWire::from(&small)}))
        .await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let r = server
        .post("/scale/down", json!({"grid": {"rows": ["..", "."]}}))
        .await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn scale_down_is_byte_deterministic() {
    let server = loaded().await;
    let level = vglc::synthetic_corpus(1, 8)[0].crop(10, 3, 16, 16);
    let body = json!({"grid": GridWire::from(&level)});
    let a = server
        .post("/scale/down", body.clone())
        .await
        .bytes()
        .await
        .unwrap();
    let b = server
        .post("/scale/down", body)
        .await
        .bytes()
        .await
        .unwrap();
    assert_eq!(a, b);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_do_not_interfere() {
    let server = Arc::new(loaded().await);
    let mut tasks = Vec::new();
    for s in 0..4u64 {
        let server = server.clone();
        tasks.push(tokio::spawn(async move {
            let id = server.create().await.session_id;
            let mut mirror = CanvasStack::new();
            let glyphs = ['b', 'B', '#', '-', 'G', 'E', '.'];
            for i in 0..8u64 {
                let k = (s * 31 + i * 7) as usize;
                let canvas = k % 3;
                let size = [4, 8, 16][canvas];
                let (x, y, g) = (k % size, (k / 3) % size, glyphs[k % glyphs.len()]);
                let resp: SessionResponse = server
                    .edit(&id, canvas, x, y, &g.to_string())
                    .await
                    .json()
                    .await
                    .unwrap();
                mirror
                    .apply(
                        &scaler(),
                        &EditCommand::Draw {
                            canvas,
                            x,
                            y,
                            glyph: g,
                        },
                    )
                    .unwrap();
                assert_eq!(resp.state, mirror.snapshot());
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
}
