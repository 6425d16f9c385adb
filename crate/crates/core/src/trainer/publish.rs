use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;

use crate::nn::{save_checkpoint, CnnModel};

use super::TrainError;

/// A model made visible to the prediction side.
#[derive(Debug)]
pub struct PublishedModel {
    pub model: CnnModel,
    /// Newest annotation sequence number included in its training data.
    pub trained_through_seq: u64,
}

impl PublishedModel {
    pub fn revision(&self) -> u64 {
        self.model.revision
    }
}

/// Latest published model. Readers clone the `Arc` and keep using one
/// revision for as long as they need it.
#[derive(Debug, Default)]
pub struct ModelSlot {
    current: RwLock<Option<Arc<PublishedModel>>>,
}

impl ModelSlot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn latest(&self) -> Option<Arc<PublishedModel>> {
        self.current.read().clone()
    }

    pub fn revision(&self) -> Option<u64> {
        self.current.read().as_ref().map(|m| m.revision())
    }

    /// Swaps in `model` unless it is not newer than the current one.
    pub fn publish(&self, model: Arc<PublishedModel>) -> bool {
        let mut cur = self.current.write();
        if cur.as_ref().is_some_and(|c| c.revision() >= model.revision()) {
            return false;
        }
        *cur = Some(model);
        true
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PublishedCheckpoint {
    pub revision: u64,
    pub validation_accuracy: f64,
    pub path: Option<PathBuf>,
}

/// Publishes a model only when its validation accuracy strictly beats every
/// earlier publication.
#[derive(Debug)]
pub struct Publisher {
    best: Option<f64>,
    dir: Option<PathBuf>,
    slot: Arc<ModelSlot>,
    history: Vec<PublishedCheckpoint>,
}

pub fn checkpoint_file(dir: &Path, revision: u64) -> PathBuf {
    dir.join(format!("model-{revision:010}.ckpt"))
}

pub const BEST_CHECKPOINT: &str = "best.ckpt";

impl Publisher {
    /// `dir = None` publishes in memory only.
    pub fn new(dir: Option<PathBuf>, slot: Arc<ModelSlot>) -> Self {
        Publisher { best: None, dir, slot, history: Vec::new() }
    }

    /// Continue from an already published model.
    pub fn resume(&mut self, model: Arc<PublishedModel>) {
        self.best = Some(model.model.validation_accuracy);
        self.slot.publish(model);
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn history(&self) -> &[PublishedCheckpoint] {
        &self.history
    }

    pub fn slot(&self) -> &Arc<ModelSlot> {
        &self.slot
    }

    /// Writes the checkpoint and swaps the model in when
    /// `model.validation_accuracy > best`. On a write failure nothing is
    /// published and the best score is left unchanged, so the next
    /// improvement retries.
    pub fn checkpoint_if_improved(
        &mut self,
        model: &CnnModel,
        trained_through_seq: u64,
    ) -> Result<Option<u64>, TrainError> {
        let acc = model.validation_accuracy;
        if self.best.is_some_and(|b| acc <= b) {
            return Ok(None);
        }
        let path = match &self.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = checkpoint_file(dir, model.revision);
                save_checkpoint(model, &path)?;
                save_checkpoint(model, &dir.join(BEST_CHECKPOINT))?;
                Some(path)
            }
            None => None,
        };
        self.best = Some(acc);
        self.slot.publish(Arc::new(PublishedModel { model: model.clone(), trained_through_seq }));
        self.history.push(PublishedCheckpoint { revision: model.revision, validation_accuracy: acc, path });
        Ok(Some(model.revision))
    }
}
