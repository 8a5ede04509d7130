//! Built models keyed by content id: an LRU map in memory, optionally
//! backed by one JSON file per model.

use std::collections::HashMap;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use lru::LruCache;
use tokio::sync::OnceCell;

use crate::error::ApiError;
use crate::model::{BuildInput, ModelSession};

type BuildCell = Arc<OnceCell<Result<Arc<ModelSession>, ApiError>>>;

pub struct ModelStore {
    sessions: Mutex<LruCache<String, Arc<ModelSession>>>,
    inflight: Mutex<HashMap<String, BuildCell>>,
    dir: Option<PathBuf>,
    builds: AtomicUsize,
}

/// Ids are hex digests; anything else never names a file.
fn is_model_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl ModelStore {
    pub fn new(max_models: NonZeroUsize, dir: Option<PathBuf>) -> std::io::Result<Self> {
        if let Some(dir) = &dir {
            fs::create_dir_all(dir)?;
        }
        Ok(ModelStore {
            sessions: Mutex::new(LruCache::new(max_models)),
            inflight: Mutex::new(HashMap::new()),
            dir,
            builds: AtomicUsize::new(0),
        })
    }

    /// Builds started since the store was created.
    pub fn builds_started(&self) -> usize {
        self.builds.load(Ordering::SeqCst)
    }

    /// Models currently held in memory.
    pub fn resident(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    fn path_for(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().filter(|_| is_model_id(id)).map(|d| d.join(format!("{id}.json")))
    }

    fn insert(&self, session: Arc<ModelSession>) {
        let id = session.model_id.clone();
        // `push` also returns the old entry when the key was already present
        let displaced = self.sessions.lock().expect("store lock").push(id.clone(), session);
        if let Some((evicted, _)) = displaced.filter(|(k, _)| *k != id) {
            log::info!("evicted model {evicted} from memory");
        }
    }

    /// In memory, else from the store directory.
    pub async fn get(&self, id: &str) -> Result<Arc<ModelSession>, ApiError> {
        if let Some(session) = self.sessions.lock().expect("store lock").get(id) {
            return Ok(session.clone());
        }
        let path = self.path_for(id).ok_or_else(|| ApiError::unknown_model(id))?;
        let expected = id.to_string();
        let loaded = tokio::task::spawn_blocking(move || load(&path, &expected))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let session = Arc::new(loaded.ok_or_else(|| ApiError::unknown_model(id))?);
        self.insert(session.clone());
        Ok(session)
    }

    /// Return the model for `input`, building it unless it exists. Concurrent
    /// calls for one id share a single build. The flag is true for the call
    /// that ran the build.
    pub async fn get_or_build(&self, input: BuildInput) -> Result<(Arc<ModelSession>, bool), ApiError> {
        let id = input.model_id.clone();
        if let Ok(session) = self.get(&id).await {
            return Ok((session, false));
        }
        let cell = self.inflight.lock().expect("inflight lock").entry(id.clone()).or_default().clone();
        let mut built = false;
        let result = cell
            .get_or_init(|| async {
                built = true;
                self.builds.fetch_add(1, Ordering::SeqCst);
                let session = tokio::task::spawn_blocking(move || ModelSession::build(input))
                    .await
                    .map_err(|e| ApiError::internal(e.to_string()))??;
                let session = Arc::new(session);
                self.persist(&session).await;
                self.insert(session.clone());
                Ok(session)
            })
            .await
            .clone();
        {
            let mut inflight = self.inflight.lock().expect("inflight lock");
            if inflight.get(&id).is_some_and(|c| Arc::ptr_eq(c, &cell)) {
                inflight.remove(&id);
            }
        }
        result.map(|s| (s, built))
    }

    async fn persist(&self, session: &Arc<ModelSession>) {
        let Some(path) = self.path_for(&session.model_id) else {
            return;
        };
        let session = session.clone();
        let written = tokio::task::spawn_blocking(move || save(&path, &session)).await;
        if let Ok(Err(e)) | Err(e) = written.map_err(std::io::Error::other) {
            log::warn!("could not persist model: {e}");
        }
    }

    /// Drop a model from memory and disk. False when it was in neither.
    pub fn remove(&self, id: &str) -> bool {
        let in_memory = self.sessions.lock().expect("store lock").pop(id).is_some();
        let on_disk = self.path_for(id).is_some_and(|p| fs::remove_file(p).is_ok());
        in_memory || on_disk
    }
}

fn save(path: &Path, session: &ModelSession) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(session)?)?;
    fs::rename(tmp, path)
}

fn load(path: &Path, expected_id: &str) -> Option<ModelSession> {
    let bytes = fs::read(path).ok()?;
    match serde_json::from_slice::<ModelSession>(&bytes) {
        Ok(session) if session.model_id == expected_id && session.verify() => Some(session),
        Ok(_) => {
            log::warn!("{} does not match its model id; ignored", path.display());
            None
        }
        Err(e) => {
            log::warn!("{} is unreadable: {e}", path.display());
            None
        }
    }
}
