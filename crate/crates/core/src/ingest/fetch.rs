//! Byte fetchers. The pipeline only sees the [`Fetcher`] trait, so tests and
//! offline runs can swap the network for a directory or a map.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use url::Url;

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("{url}: HTTP status {status}")]
    Status { url: String, status: u16 },
    #[error("{url}: {reason}")]
    Transport { url: String, reason: String },
    #[error("{url}: not found")]
    NotFound { url: String },
    #[error("{url}: unsupported scheme")]
    UnsupportedScheme { url: String },
}

pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &Url) -> Result<Vec<u8>, FetchError>;
}

fn read_file(url: &Url, path: &Path) -> Result<Vec<u8>, FetchError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => FetchError::NotFound { url: url.to_string() },
        _ => FetchError::Transport { url: url.to_string(), reason: e.to_string() },
    })
}

const MAX_BODY: u64 = 16 * 1024 * 1024;

/// HTTP(S) via ureq, plus `file://` URLs. Requests to one host are spaced
/// at least `min_interval` apart.
pub struct HttpFetcher {
    agent: ureq::Agent,
    min_interval: Duration,
    last_request: Mutex<HashMap<String, Instant>>,
}

impl std::fmt::Debug for HttpFetcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpFetcher").field("min_interval", &self.min_interval).finish()
    }
}

impl HttpFetcher {
    pub fn new(user_agent: &str, timeout: Duration, min_interval: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .user_agent(user_agent)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpFetcher { agent, min_interval, last_request: Mutex::new(HashMap::new()) }
    }

    fn wait_turn(&self, host: &str) {
        if self.min_interval.is_zero() {
            return;
        }
        let wait = {
            let mut last = self.last_request.lock().unwrap();
            let now = Instant::now();
            let slot = last.get(host).map_or(now, |t| (*t + self.min_interval).max(now));
            last.insert(host.to_string(), slot);
            slot - now
        };
        std::thread::sleep(wait);
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &Url) -> Result<Vec<u8>, FetchError> {
        match url.scheme() {
            "file" => {
                let path = url.to_file_path().map_err(|_| FetchError::NotFound { url: url.to_string() })?;
                read_file(url, &path)
            }
            "http" | "https" => {
                self.wait_turn(url.host_str().unwrap_or_default());
                let mut resp = self.agent.get(url.as_str()).call().map_err(|e| match e {
                    ureq::Error::StatusCode(status) => FetchError::Status { url: url.to_string(), status },
                    other => FetchError::Transport { url: url.to_string(), reason: other.to_string() },
                })?;
                resp.body_mut()
                    .with_config()
                    .limit(MAX_BODY)
                    .read_to_vec()
                    .map_err(|e| FetchError::Transport { url: url.to_string(), reason: e.to_string() })
            }
            _ => Err(FetchError::UnsupportedScheme { url: url.to_string() }),
        }
    }
}

/// Serves `https://host/path` from `<root>/host/path`; an empty path or a
/// trailing slash maps to `index.html`. Queries and fragments are ignored.
#[derive(Debug, Clone)]
pub struct MirrorFetcher {
    root: PathBuf,
}

impl MirrorFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        MirrorFetcher { root: root.into() }
    }

    pub fn path_for(&self, url: &Url) -> Option<PathBuf> {
        let host = url.host_str()?;
        let mut path = self.root.join(host);
        for seg in url.path_segments()? {
            if seg == ".." {
                return None;
            }
            if !seg.is_empty() {
                path.push(seg);
            }
        }
        if url.path().ends_with('/') {
            path.push("index.html");
        }
        Some(path)
    }
}

impl Fetcher for MirrorFetcher {
    fn fetch(&self, url: &Url) -> Result<Vec<u8>, FetchError> {
        let path = self.path_for(url).ok_or_else(|| FetchError::NotFound { url: url.to_string() })?;
        read_file(url, &path)
    }
}

/// In-memory responses keyed by URL, replaceable at run time.
#[derive(Debug, Default)]
pub struct StaticFetcher {
    pages: RwLock<HashMap<String, Result<Vec<u8>, u16>>>,
}

impl StaticFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self, url: &str, body: impl Into<Vec<u8>>) {
        self.pages.write().unwrap().insert(url.to_string(), Ok(body.into()));
    }

    /// Makes `url` answer with an HTTP error status.
    pub fn fail(&self, url: &str, status: u16) {
        self.pages.write().unwrap().insert(url.to_string(), Err(status));
    }

    pub fn remove(&self, url: &str) {
        self.pages.write().unwrap().remove(url);
    }
}

impl Fetcher for StaticFetcher {
    fn fetch(&self, url: &Url) -> Result<Vec<u8>, FetchError> {
        match self.pages.read().unwrap().get(url.as_str()) {
            Some(Ok(body)) => Ok(body.clone()),
            Some(Err(status)) => Err(FetchError::Status { url: url.to_string(), status: *status }),
            None => Err(FetchError::NotFound { url: url.to_string() }),
        }
    }
}
