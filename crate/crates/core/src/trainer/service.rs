//! HTTP API with a background training loop and prediction worker.

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::image::ImageSet;
use crate::nn::load_checkpoint;
use crate::sampling::{AnnotationStore, NewStroke, SamplingError};
use crate::segmetrics::io::encode_probability_png;

use super::config::ProjectConfig;
use super::predict::predict_image;
use super::publish::{ModelSlot, Publisher, BEST_CHECKPOINT};
use super::train::{Trainer, TrainerSettings, TrainingStatus};
use super::TrainError;

const IDLE_WAIT: Duration = Duration::from_millis(200);

/// Latest rendered probability map of one image.
struct CachedPrediction {
    png: Bytes,
    model_revision: u64,
    trained_through_seq: u64,
    stride: usize,
}

#[derive(Default)]
struct PredictionQueue {
    /// Images a client has asked about; kept fresh from then on.
    requested: Mutex<HashSet<String>>,
    cache: RwLock<HashMap<String, Arc<CachedPrediction>>>,
    wake: Condvar,
    wake_lock: Mutex<bool>,
}

impl PredictionQueue {
    fn notify(&self) {
        *self.wake_lock.lock() = true;
        self.wake.notify_all();
    }

    fn wait(&self, timeout: Duration) {
        let mut woken = self.wake_lock.lock();
        if !*woken {
            self.wake.wait_for(&mut woken, timeout);
        }
        *woken = false;
    }
}

struct Shared {
    config: ProjectConfig,
    images: Arc<ImageSet>,
    store: Arc<AnnotationStore>,
    slot: Arc<ModelSlot>,
    status: RwLock<TrainingStatus>,
    predictions: PredictionQueue,
    stop: AtomicBool,
    training_wake: (Mutex<bool>, Condvar),
}

/// A running service. Dropping it without calling [`ServiceHandle::shutdown`]
/// leaves the background threads running until the process exits.
pub struct ServiceHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    runtime: Option<tokio::runtime::Runtime>,
    server: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
    stop_server: Option<tokio::sync::oneshot::Sender<()>>,
    threads: Vec<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn status(&self) -> TrainingStatus {
        self.shared.status.read().clone()
    }

    /// Blocks until the HTTP server exits.
    pub fn wait(mut self) -> Result<(), TrainError> {
        let result = match (self.runtime.as_ref(), self.server.take()) {
            (Some(rt), Some(server)) => rt.block_on(server).map_err(|e| TrainError::Server(e.to_string()))?,
            _ => Ok(()),
        };
        self.stop_background();
        result.map_err(TrainError::from)
    }

    /// Stops the server and the background threads and waits for them.
    pub fn shutdown(mut self) {
        if let Some(tx) = self.stop_server.take() {
            let _ = tx.send(());
        }
        if let (Some(rt), Some(server)) = (self.runtime.as_ref(), self.server.take()) {
            let _ = rt.block_on(server);
        }
        self.stop_background();
    }

    fn stop_background(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.predictions.notify();
        self.shared.training_wake.1.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

/// Loads the images and annotation log, binds the listen address and starts
/// the API, the training loop and the prediction worker.
pub fn serve(config: ProjectConfig) -> Result<ServiceHandle, TrainError> {
    config.validate()?;
    let images = ImageSet::load_dir(&config.image_dir)
        .map_err(|e| TrainError::Config(format!("image directory {}: {e}", config.image_dir.display())))?;
    if images.is_empty() {
        return Err(TrainError::Config(format!("no PNG images in {}", config.image_dir.display())));
    }
    let images = Arc::new(images);
    std::fs::create_dir_all(&config.work_dir)?;
    let dims = images.iter().map(|(id, img)| (id.to_string(), (img.width(), img.height()))).collect();
    let store = Arc::new(AnnotationStore::open(&config.annotation_log(), dims)?);

    let slot = Arc::new(ModelSlot::new());
    let mut trainer = Trainer::new(
        TrainerSettings::from(&config),
        images.clone(),
        store.clone(),
        Publisher::new(Some(config.checkpoint_dir()), slot.clone()),
    )?;
    let best = config.checkpoint_dir().join(BEST_CHECKPOINT);
    if best.exists() {
        let model = load_checkpoint(&best)?;
        log::info!("resuming from {} (revision {})", best.display(), model.revision);
        trainer.resume_from(model)?;
    }

    let listener = std::net::TcpListener::bind(&config.listen)
        .map_err(|e| TrainError::Server(format!("cannot listen on {}: {e}", config.listen)))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let shared = Arc::new(Shared {
        status: RwLock::new(trainer.status().clone()),
        config,
        images,
        store,
        slot,
        predictions: PredictionQueue::default(),
        stop: AtomicBool::new(false),
        training_wake: (Mutex::new(false), Condvar::new()),
    });

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(shared.clone());
    let server = runtime.spawn(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });

    let threads = vec![
        spawn_named("trainer", {
            let shared = shared.clone();
            move || training_loop(&shared, trainer)
        })?,
        spawn_named("predictor", {
            let shared = shared.clone();
            move || prediction_loop(&shared)
        })?,
    ];
    log::info!("listening on http://{addr}");
    Ok(ServiceHandle {
        addr,
        shared,
        runtime: Some(runtime),
        server: Some(server),
        stop_server: Some(stop_tx),
        threads,
    })
}

fn spawn_named(name: &str, f: impl FnOnce() + Send + 'static) -> Result<JoinHandle<()>, TrainError> {
    Ok(std::thread::Builder::new().name(name.into()).spawn(f)?)
}

fn training_loop(shared: &Shared, mut trainer: Trainer) {
    while !shared.stop.load(Ordering::SeqCst) {
        let result = trainer.train_iteration();
        *shared.status.write() = trainer.status().clone();
        match result {
            Ok(status) => {
                log::info!(
                    "iteration {} loss {:.4} validation {:.4} ({} px) revision {}",
                    status.iteration,
                    status.mean_loss,
                    status.validation_accuracy,
                    status.validation_pixels,
                    status.model_revision
                );
                if status.published_revision == Some(status.model_revision) {
                    shared.predictions.notify();
                }
            }
            Err(e) => {
                if e.insufficient_class().is_none() {
                    log::error!("training iteration failed: {e}");
                }
                let (lock, cv) = &shared.training_wake;
                let mut woken = lock.lock();
                if !*woken {
                    cv.wait_for(&mut woken, IDLE_WAIT);
                }
                *woken = false;
            }
        }
    }
}

/// Next image whose map is missing or older than the published model,
/// most recently annotated first, then other requested images by id.
fn next_stale(shared: &Shared, revision: u64) -> Option<String> {
    let cache = shared.predictions.cache.read();
    let stale = |id: &str| cache.get(id).is_none_or(|c| c.model_revision < revision);
    let by_recency = shared.store.images_by_recency();
    if let Some((id, _)) = by_recency.iter().find(|(id, _)| stale(id)) {
        return Some(id.clone());
    }
    let requested = shared.predictions.requested.lock();
    let mut pending: Vec<&String> = requested.iter().filter(|id| stale(id)).collect();
    pending.sort();
    pending.first().map(|s| s.to_string())
}

fn prediction_loop(shared: &Shared) {
    while !shared.stop.load(Ordering::SeqCst) {
        let Some(published) = shared.slot.latest() else {
            shared.predictions.wait(IDLE_WAIT);
            continue;
        };
        let Some(id) = next_stale(shared, published.revision()) else {
            shared.predictions.wait(IDLE_WAIT);
            continue;
        };
        let Some(image) = shared.images.get(&id) else { continue };
        let stride = shared.config.preview_stride;
        let map = predict_image(&published.model, image, &id, stride);
        let entry = CachedPrediction {
            png: Bytes::from(encode_probability_png(&map)),
            model_revision: published.revision(),
            trained_through_seq: published.trained_through_seq,
            stride,
        };
        shared.predictions.cache.write().insert(id, Arc::new(entry));
    }
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/images", get(list_images))
        .route("/images/{id}", get(get_image))
        .route("/annotations", get(list_annotations).post(post_annotation))
        .route("/predictions/{id}", get(get_prediction))
        .route("/status", get(get_status))
        .with_state(shared)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Serialize)]
struct ImageInfo<'a> {
    id: &'a str,
    width: usize,
    height: usize,
}

async fn list_images(State(shared): State<Arc<Shared>>) -> Response {
    let list: Vec<ImageInfo> =
        shared.images.iter().map(|(id, img)| ImageInfo { id, width: img.width(), height: img.height() }).collect();
    Json(list).into_response()
}

async fn get_image(State(shared): State<Arc<Shared>>, Path(id): Path<String>) -> Response {
    match shared.images.get(&id) {
        Some(img) => ([(header::CONTENT_TYPE, "image/png")], img.encode_png()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown image {id}")),
    }
}

#[derive(Deserialize)]
struct AnnotationQuery {
    image_id: Option<String>,
}

async fn list_annotations(State(shared): State<Arc<Shared>>, Query(q): Query<AnnotationQuery>) -> Response {
    if let Some(id) = &q.image_id {
        if shared.images.get(id).is_none() {
            return error(StatusCode::NOT_FOUND, format!("unknown image {id}"));
        }
    }
    Json(shared.store.strokes(q.image_id.as_deref())).into_response()
}

async fn post_annotation(State(shared): State<Arc<Shared>>, Json(stroke): Json<NewStroke>) -> Response {
    let image_id = stroke.image_id.clone();
    let store = shared.store.clone();
    let result = tokio::task::spawn_blocking(move || store.record_stroke(stroke)).await;
    match result {
        Ok(Ok(seq)) => {
            shared.predictions.requested.lock().insert(image_id);
            *shared.training_wake.0.lock() = true;
            shared.training_wake.1.notify_all();
            shared.predictions.notify();
            Json(json!({ "seq": seq })).into_response()
        }
        Ok(Err(e @ SamplingError::UnknownImage(_))) => error(StatusCode::NOT_FOUND, e.to_string()),
        Ok(Err(e @ (SamplingError::OutOfBounds { .. } | SamplingError::EmptyStroke))) => {
            error(StatusCode::BAD_REQUEST, e.to_string())
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn get_prediction(State(shared): State<Arc<Shared>>, Path(id): Path<String>) -> Response {
    if shared.images.get(&id).is_none() {
        return error(StatusCode::NOT_FOUND, format!("unknown image {id}"));
    }
    if shared.slot.latest().is_none() {
        let status = shared.status.read().clone();
        return (
            StatusCode::CONFLICT,
            Json(json!({ "error": "no model published yet", "warmup_remaining": status.warmup_remaining })),
        )
            .into_response();
    }
    let cached = shared.predictions.cache.read().get(&id).cloned();
    let newly_requested = shared.predictions.requested.lock().insert(id.clone());
    if newly_requested {
        shared.predictions.notify();
    }
    match cached {
        Some(c) => {
            let mut resp = ([(header::CONTENT_TYPE, "image/png")], c.png.clone()).into_response();
            let headers = resp.headers_mut();
            headers.insert("X-Model-Revision", HeaderValue::from(c.model_revision));
            headers.insert("X-Stride", HeaderValue::from(c.stride));
            headers.insert("X-Trained-Through-Seq", HeaderValue::from(c.trained_through_seq));
            resp
        }
        None => (
            StatusCode::ACCEPTED,
            [(header::RETRY_AFTER, "1")],
            Json(json!({ "status": "prediction pending" })),
        )
            .into_response(),
    }
}

async fn get_status(State(shared): State<Arc<Shared>>) -> Response {
    Json(shared.status.read().clone()).into_response()
}
