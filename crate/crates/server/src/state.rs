use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use fairscope_core::config::Config;
use fairscope_core::session::{Role, SessionState, Settings};
use fairscope_core::Error;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock as AsyncRwLock;

use crate::error::{ApiError, ApiResult, ErrorBody};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Graph,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobInfo {
    pub id: u64,
    pub kind: JobKind,
    pub status: JobStatus,
    /// Session version after a successful training job.
    pub version: Option<u64>,
    pub error: Option<ErrorBody>,
}

#[derive(Default)]
struct JobTable {
    next: u64,
    jobs: BTreeMap<u64, JobInfo>,
}

/// One live session: the state behind a single-writer lock, plus its jobs.
pub struct SessionHandle {
    pub state: AsyncRwLock<SessionState>,
    jobs: Mutex<JobTable>,
    deleted: AtomicBool,
}

impl SessionHandle {
    fn new(state: SessionState) -> Self {
        Self {
            state: AsyncRwLock::new(state),
            jobs: Mutex::new(JobTable::default()),
            deleted: AtomicBool::new(false),
        }
    }

    pub fn start_job(&self, kind: JobKind) -> JobInfo {
        let mut t = self.jobs.lock().expect("job table poisoned");
        t.next += 1;
        let info = JobInfo {
            id: t.next,
            kind,
            status: JobStatus::Running,
            version: None,
            error: None,
        };
        t.jobs.insert(info.id, info.clone());
        info
    }

    pub fn finish_job(&self, id: u64, outcome: ApiResult<Option<u64>>) {
        let mut t = self.jobs.lock().expect("job table poisoned");
        if let Some(job) = t.jobs.get_mut(&id) {
            match outcome {
                Ok(version) => {
                    job.status = JobStatus::Succeeded;
                    job.version = version;
                }
                Err(e) => {
                    job.status = JobStatus::Failed;
                    job.error = Some(e.body);
                }
            }
        }
    }

    pub fn job(&self, id: u64) -> Option<JobInfo> {
        self.jobs.lock().expect("job table poisoned").jobs.get(&id).cloned()
    }
}

pub struct AppState {
    pub config: Config,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl AppState {
    pub fn new(config: Config) -> Self {
        Self {
            config,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Restore every snapshot found in the data directory.
    pub fn load_persisted(&self) -> fairscope_core::Result<usize> {
        let dir = &self.config.data_dir;
        if !dir.exists() {
            return Ok(0);
        }
        let mut loaded = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if !(name.starts_with("session-") && name.ends_with(".json")) {
                continue;
            }
            let state = SessionState::load(&path)?;
            self.insert(state);
            loaded += 1;
        }
        Ok(loaded)
    }

    fn insert(&self, state: SessionState) -> Arc<SessionHandle> {
        let id = state.id.clone();
        let handle = Arc::new(SessionHandle::new(state));
        self.sessions
            .write()
            .expect("session table poisoned")
            .insert(id, handle.clone());
        handle
    }

    pub fn create(&self, role: Role) -> ApiResult<Arc<SessionHandle>> {
        let mut state = SessionState::new(SessionState::generate_id(), role, Settings::from(&self.config));
        while self.sessions.read().expect("session table poisoned").contains_key(&state.id) {
            state.id = SessionState::generate_id();
        }
        self.persist_state(&state)?;
        Ok(self.insert(state))
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<SessionHandle>> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session `{id}`")))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session table poisoned")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn remove(&self, id: &str) -> ApiResult<()> {
        let handle = self
            .sessions
            .write()
            .expect("session table poisoned")
            .remove(id)
            .ok_or_else(|| ApiError::not_found(format!("session `{id}`")))?;
        handle.deleted.store(true, Ordering::SeqCst);
        let path = SessionState::snapshot_path(&self.config.data_dir, id);
        match std::fs::remove_file(path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(Error::from(e).into()),
        }
    }

    fn persist_state(&self, state: &SessionState) -> ApiResult<()> {
        state.save(Path::new(&self.config.data_dir))?;
        Ok(())
    }

    /// Write the session's snapshot unless it has been deleted.
    pub fn persist(&self, handle: &SessionHandle, state: &SessionState) -> ApiResult<()> {
        if handle.deleted.load(Ordering::SeqCst) {
            return Ok(());
        }
        self.persist_state(state)
    }
}
