use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use sha2::{Digest, Sha256};
use sparsescene::condkernel::{TokenEmbeddings, ToyConfig, ToyWeights};
use sparsescene::stylekit::StyleDistribution;
use sparsescene::{SceneGraph, Vocabulary};
use tokio::sync::{Mutex, Semaphore};

use crate::error::{ApiError, ApiResult};
use crate::store::{SceneFile, Store};

pub const DEFAULT_MAX_RES: u32 = 512;

/// Everything the server is started with.
#[derive(Debug, Clone)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub vocab: Vocabulary,
    pub weights: Option<ToyWeights>,
    pub dist: Option<StyleDistribution>,
    pub max_res: u32,
    /// Blocking render jobs allowed at once.
    pub workers: usize,
}

impl Settings {
    pub fn new(data_dir: impl Into<PathBuf>, vocab: Vocabulary) -> Self {
        Self {
            data_dir: data_dir.into(),
            vocab,
            weights: None,
            dist: None,
            max_res: DEFAULT_MAX_RES,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneEntry {
    pub revision: u64,
    pub scene: SceneGraph,
    /// The scene as it was when the background was frozen; background
    /// renders come from here until it is thawed.
    pub frozen_snapshot: Option<SceneGraph>,
}

impl SceneEntry {
    /// The scene whose background layer is shown.
    pub fn background_source(&self) -> &SceneGraph {
        self.frozen_snapshot.as_ref().unwrap_or(&self.scene)
    }
}

pub struct Inner {
    pub vocab: Vocabulary,
    pub weights: Option<Arc<ToyWeights>>,
    pub dist: RwLock<Option<StyleDistribution>>,
    pub max_res: u32,
    scenes: RwLock<BTreeMap<u64, Arc<Mutex<SceneEntry>>>>,
    next_id: AtomicU64,
    tokens: RwLock<BTreeMap<String, Arc<TokenEmbeddings>>>,
    store: Store,
    pool: Semaphore,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

fn token_id(t: &TokenEmbeddings) -> String {
    Sha256::digest(t.to_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl std::ops::Deref for AppState {
    type Target = Inner;
    fn deref(&self) -> &Inner {
        &self.0
    }
}

impl AppState {
    /// Open the data directory and load whatever it already holds.
    pub fn open(settings: Settings) -> anyhow::Result<Self> {
        let store = Store::open(&settings.data_dir)?;
        let v = &settings.vocab;
        let mut scenes = BTreeMap::new();
        for (id, file) in store.load_scenes()? {
            let scene = SceneGraph::from_doc(&file.scene, &v.classes, &v.attributes)
                .map_err(|e| anyhow::anyhow!("stored scene {id}: {e}"))?;
            let frozen_snapshot = file
                .frozen_snapshot
                .map(|d| SceneGraph::from_doc(&d, &v.classes, &v.attributes))
                .transpose()
                .map_err(|e| anyhow::anyhow!("stored scene {id} snapshot: {e}"))?;
            let entry = SceneEntry {
                revision: file.revision,
                scene,
                frozen_snapshot,
            };
            scenes.insert(id, Arc::new(Mutex::new(entry)));
        }
        let mut tokens = BTreeMap::new();
        for (id, bytes) in store.load_tokens()? {
            let t = TokenEmbeddings::load(&bytes).map_err(|e| anyhow::anyhow!("stored tokens {id}: {e}"))?;
            tokens.insert(id, Arc::new(t));
        }
        let dist = match settings.dist {
            Some(d) => Some(d),
            None => store
                .load_distribution()
                ?
                .map(|text| StyleDistribution::from_json(&text, &v.classes, &v.attributes))
                .transpose()
                .map_err(|e| anyhow::anyhow!("stored distribution: {e}"))?,
        };
        if let Some(w) = &settings.weights {
            w.validate().map_err(|e| anyhow::anyhow!("weights: {e}"))?;
            if w.rows() <= v.classes.len() {
                anyhow::bail!("weights have {} class rows, vocabulary needs {}", w.rows(), v.classes.len() + 1);
            }
        }
        let next = scenes.keys().next_back().map_or(1, |k| k + 1);
        Ok(Self(Arc::new(Inner {
            vocab: settings.vocab,
            weights: settings.weights.map(Arc::new),
            dist: RwLock::new(dist),
            max_res: settings.max_res,
            scenes: RwLock::new(scenes),
            next_id: AtomicU64::new(next),
            tokens: RwLock::new(tokens),
            store,
            pool: Semaphore::new(settings.workers.max(1)),
        })))
    }

    pub fn scene(&self, id: &str) -> ApiResult<Arc<Mutex<SceneEntry>>> {
        let n: u64 = id.parse().map_err(|_| ApiError::not_found("scene", id))?;
        self.scenes
            .read()
            .expect("scene table lock")
            .get(&n)
            .cloned()
            .ok_or_else(|| ApiError::not_found("scene", id))
    }

    pub fn scene_ids(&self) -> Vec<(u64, Arc<Mutex<SceneEntry>>)> {
        self.scenes
            .read()
            .expect("scene table lock")
            .iter()
            .map(|(k, v)| (*k, v.clone()))
            .collect()
    }

    /// Store a new scene at revision 1 and return its id.
    pub fn insert_scene(&self, scene: SceneGraph) -> ApiResult<u64> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let entry = SceneEntry {
            revision: 1,
            scene,
            frozen_snapshot: None,
        };
        self.persist(id, &entry)?;
        self.scenes
            .write()
            .expect("scene table lock")
            .insert(id, Arc::new(Mutex::new(entry)));
        Ok(id)
    }

    /// Write an entry to disk. Callers hold the scene lock.
    pub fn persist(&self, id: u64, entry: &SceneEntry) -> ApiResult<()> {
        let (c, a) = (&self.vocab.classes, &self.vocab.attributes);
        let file = SceneFile {
            revision: entry.revision,
            scene: entry.scene.to_doc(c, a)?,
            frozen_snapshot: entry.frozen_snapshot.as_ref().map(|s| s.to_doc(c, a)).transpose()?,
        };
        self.store
            .save_scene(id, &file)
            .map_err(|e| ApiError::internal(format!("saving scene {id}: {e}")))
    }

    pub fn tokens(&self, id: &str) -> ApiResult<Arc<TokenEmbeddings>> {
        self.tokens
            .read()
            .expect("token table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("tokens", id))
    }

    /// Register a token file under a content hash of its bytes.
    pub fn insert_tokens(&self, bytes: &[u8]) -> ApiResult<(String, Arc<TokenEmbeddings>)> {
        let t = TokenEmbeddings::load(bytes).map_err(|e| ApiError::bad_request("invalid_tokens", e.to_string()))?;
        let id = token_id(&t);
        self.store
            .save_tokens(&id, &t.to_bytes())
            .map_err(|e| ApiError::internal(format!("saving tokens: {e}")))?;
        Ok((id.clone(), self.remember_tokens(id, t)))
    }

    /// Register in-memory embeddings without writing them to disk. Unlike
    /// uploads these may lack delimiter rows.
    pub fn register_tokens(&self, t: TokenEmbeddings) -> String {
        let id = token_id(&t);
        self.remember_tokens(id.clone(), t);
        id
    }

    fn remember_tokens(&self, id: String, t: TokenEmbeddings) -> Arc<TokenEmbeddings> {
        let t = Arc::new(t);
        self.tokens
            .write()
            .expect("token table lock")
            .insert(id, t.clone());
        t
    }

    pub fn set_distribution(&self, dist: StyleDistribution) -> ApiResult<String> {
        let text = dist.to_json(&self.vocab.classes, &self.vocab.attributes);
        self.store
            .save_distribution(&text)
            .map_err(|e| ApiError::internal(format!("saving distribution: {e}")))?;
        *self.dist.write().expect("distribution lock") = Some(dist);
        Ok(text)
    }

    /// Loaded weights, or a fresh initialization from `seed` sized to the
    /// vocabulary.
    pub fn preview_weights(&self, seed: u64) -> Arc<ToyWeights> {
        match &self.weights {
            Some(w) => w.clone(),
            None => Arc::new(ToyWeights::init(self.default_config(), seed)),
        }
    }

    pub fn default_config(&self) -> ToyConfig {
        ToyConfig {
            classes: self.vocab.classes.len(),
            attributes: self.vocab.attributes.len().max(1),
            ..ToyConfig::default()
        }
    }

    /// Check an explicit resolution against the configured limit.
    pub fn check_res(&self, res: Option<u32>) -> ApiResult<()> {
        match res {
            Some(0) => Err(ApiError::bad_request("invalid_res", "res must be positive")),
            Some(r) if r > self.max_res => Err(ApiError::bad_request(
                "res_too_large",
                format!("res {r} exceeds the limit of {}", self.max_res),
            )),
            _ => Ok(()),
        }
    }

    /// Run CPU-heavy work on the blocking pool, at most `workers` at a time.
    pub async fn run_blocking<T, F>(&self, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce() -> ApiResult<T> + Send + 'static,
    {
        let _permit = self.pool.acquire().await.map_err(|e| ApiError::internal(e.to_string()))?;
        tokio::task::spawn_blocking(f)
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
    }
}
