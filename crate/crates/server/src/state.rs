use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use disentangle_core::direction::{compute_average_vector, AverageCache};
use disentangle_core::generator::load_model_package;
use disentangle_core::session::LogWriter;
use disentangle_core::{DirectionStore, Error, FilterVector, GeneratorAdapter, MaskedTreeGenerator, Result, Session, SessionConfig};
use parking_lot::{Mutex, RwLock};

use crate::config::{PluginPaths, ServerConfig, BUILTIN_TOY};

pub type SharedSession = Arc<Mutex<Session<f64>>>;

/// Everything the handlers share. Each session has its own lock, so requests
/// to one session are serialized while different sessions run in parallel.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    adapter: Arc<dyn GeneratorAdapter<f64>>,
    average: Option<Arc<FilterVector<f64>>>,
    store: Arc<DirectionStore>,
    session_config: SessionConfig,
    log_dir: Option<PathBuf>,
    plugins: PluginPaths,
    sessions: RwLock<HashMap<String, SharedSession>>,
}

pub fn load_adapter(model: &str) -> Result<Arc<dyn GeneratorAdapter<f64>>> {
    if model == BUILTIN_TOY {
        Ok(Arc::new(MaskedTreeGenerator::<f64>::toy()))
    } else {
        Ok(Arc::from(load_model_package::<f64>(Path::new(model))?))
    }
}

impl AppState {
    /// Loads the model, the average vector and the direction store named in `config`.
    pub fn from_config(config: &ServerConfig) -> Result<Self> {
        let adapter = load_adapter(&config.model)?;
        let average = if config.average_samples == 0 {
            None
        } else {
            let v = match &config.cache_dir {
                Some(dir) => AverageCache::new(dir).get_or_compute(
                    adapter.model_hash(),
                    adapter.as_ref(),
                    config.average_samples,
                    config.average_seed,
                )?,
                None => compute_average_vector(adapter.as_ref(), config.average_samples, config.average_seed)?,
            };
            Some(Arc::new(v))
        };
        if let Some(dir) = &config.log_dir {
            std::fs::create_dir_all(dir)?;
        }
        let store = Arc::new(DirectionStore::open(&config.store_dir)?);
        Ok(Self::new(adapter, average, store, config.session.clone(), config.log_dir.clone())
            .with_plugins(config.plugins.clone()))
    }

    pub fn new(
        adapter: Arc<dyn GeneratorAdapter<f64>>,
        average: Option<Arc<FilterVector<f64>>>,
        store: Arc<DirectionStore>,
        session_config: SessionConfig,
        log_dir: Option<PathBuf>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                adapter,
                average,
                store,
                session_config,
                log_dir,
                plugins: PluginPaths::default(),
                sessions: RwLock::new(HashMap::new()),
            }),
        }
    }

    /// Plugin paths reported by `/v1/model`. Call before the state is shared.
    pub fn with_plugins(self, plugins: PluginPaths) -> Self {
        let mut inner = Arc::try_unwrap(self.inner).unwrap_or_else(|_| panic!("with_plugins on a shared state"));
        inner.plugins = plugins;
        Self { inner: Arc::new(inner) }
    }

    pub fn adapter(&self) -> &Arc<dyn GeneratorAdapter<f64>> {
        &self.inner.adapter
    }

    pub fn average(&self) -> Option<&Arc<FilterVector<f64>>> {
        self.inner.average.as_ref()
    }

    pub fn store(&self) -> &Arc<DirectionStore> {
        &self.inner.store
    }

    pub fn plugins(&self) -> &PluginPaths {
        &self.inner.plugins
    }

    pub fn create_session(&self, id: Option<String>) -> Result<SharedSession> {
        let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        if id.is_empty() || id.len() > 64 || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::Argument("session id must be 1-64 characters of [A-Za-z0-9_-]".into()));
        }
        let mut sessions = self.inner.sessions.write();
        if sessions.contains_key(&id) {
            return Err(Error::Conflict(format!("session `{id}` already exists")));
        }
        let mut session = Session::new(id.clone(), self.inner.adapter.clone(), self.inner.session_config.clone())?
            .with_store(self.inner.store.clone());
        if let Some(avg) = &self.inner.average {
            session = session.with_average(avg.clone());
        }
        if let Some(dir) = &self.inner.log_dir {
            session.attach_writer(LogWriter::create(&dir.join(format!("{id}.jsonl")), &session.header())?);
        }
        let shared = Arc::new(Mutex::new(session));
        sessions.insert(id, shared.clone());
        Ok(shared)
    }

    pub fn session(&self, id: &str) -> Option<SharedSession> {
        self.inner.sessions.read().get(id).cloned()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.inner.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }
}
