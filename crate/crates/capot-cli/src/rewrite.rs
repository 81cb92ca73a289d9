//! Rewrite backends for back-translation and paraphrase: the offline
//! stub from the core crate, an HTTP client speaking a two-field JSON
//! protocol, and a disk cache keyed by (mode, text) that makes live
//! backends replayable offline.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use capot_core::resources::Resources;
use capot_core::rewrite::{RewriteMode, Rewriter, StubRewriter};
use capot_core::CoreError;

use crate::config::RunConfig;
use crate::error::CliError;

/// Overrides `rewrite.endpoint` when set.
pub const ENDPOINT_ENV: &str = "CAPOT_REWRITE_ENDPOINT";
/// Overrides `rewrite.cache_dir` when set.
pub const CACHE_DIR_ENV: &str = "CAPOT_REWRITE_CACHE_DIR";

pub struct RewriteRequest {
    pub text: String,
    pub mode: RewriteMode,
}

pub struct RewriteResponse {
    pub text: String,
    /// Which backend produced the text; recorded in run provenance.
    pub backend: String,
}

/// One rewrite through any backend, tagged with its provenance label.
/// Response text is guaranteed non-empty.
pub fn rewrite(
    backend: &mut dyn Rewriter,
    label: &str,
    request: &RewriteRequest,
) -> Result<RewriteResponse, CoreError> {
    let text = backend.rewrite(&request.text, request.mode)?;
    if text.trim().is_empty() {
        return Err(CoreError::Rewrite("backend returned empty text".to_string()));
    }
    Ok(RewriteResponse { text, backend: label.to_string() })
}

#[derive(Serialize)]
struct WireRequest<'a> {
    text: &'a str,
    mode: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

/// POSTs {"text", "mode"} to the endpoint and expects {"text"} back.
pub struct HttpRewriter {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpRewriter {
    pub fn new(endpoint: &str) -> Result<HttpRewriter, CliError> {
        if endpoint.is_empty() {
            return Err(CliError::Usage(format!(
                "http rewrite backend needs rewrite.endpoint (or {ENDPOINT_ENV})"
            )));
        }
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        Ok(HttpRewriter { agent: config.new_agent(), endpoint: endpoint.to_string() })
    }
}

impl Rewriter for HttpRewriter {
    fn rewrite(&mut self, text: &str, mode: RewriteMode) -> Result<String, CoreError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(WireRequest { text, mode: mode.label() })
            .map_err(|e| {
                CoreError::Rewrite(format!("endpoint {} failed: {e}", self.endpoint))
            })?;
        let body: WireResponse = response.body_mut().read_json().map_err(|e| {
            CoreError::Rewrite(format!("bad response from {}: {e}", self.endpoint))
        })?;
        if body.text.trim().is_empty() {
            return Err(CoreError::Rewrite(format!(
                "empty response from {}",
                self.endpoint
            )));
        }
        Ok(body.text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheRow {
    mode: String,
    text: String,
    rewritten: String,
}

/// Disk-backed rewrite cache. Hits never touch the inner backend, so a
/// populated cache replays a recorded session offline; misses append to
/// the cache file under an exclusive lock so concurrent runs cannot
/// interleave half-written lines.
pub struct CachedRewriter<R> {
    inner: R,
    path: PathBuf,
    entries: BTreeMap<(String, String), String>,
}

impl<R: Rewriter> CachedRewriter<R> {
    pub fn open(dir: &Path, inner: R) -> Result<CachedRewriter<R>, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::Data(format!("cannot create cache dir {}: {e}", dir.display()))
        })?;
        let path = dir.join("rewrites.jsonl");
        let mut entries = BTreeMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| {
                CliError::Data(format!("cannot read {}: {e}", path.display()))
            })?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let row: CacheRow = serde_json::from_str(line).map_err(|e| {
                    CliError::Data(format!("{}:{}: {e}", path.display(), i + 1))
                })?;
                entries.insert((row.mode, row.text), row.rewritten);
            }
        }
        Ok(CachedRewriter { inner, path, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<R: Rewriter> Rewriter for CachedRewriter<R> {
    fn rewrite(&mut self, text: &str, mode: RewriteMode) -> Result<String, CoreError> {
        let key = (mode.label().to_string(), text.to_string());
        if let Some(hit) = self.entries.get(&key) {
            return Ok(hit.clone());
        }
        let out = self.inner.rewrite(text, mode)?;
        let row = CacheRow { mode: key.0.clone(), text: key.1.clone(), rewritten: out.clone() };
        let mut line = serde_json::to_string(&row).expect("cache row serializes");
        line.push('\n');
        let cache_io =
            |e: std::io::Error| CoreError::Rewrite(format!("cache {}: {e}", self.path.display()));
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(cache_io)?;
        file.lock().map_err(cache_io)?;
        (&file).write_all(line.as_bytes()).map_err(cache_io)?;
        // closing the file releases the lock
        drop(file);
        self.entries.insert(key, out.clone());
        Ok(out)
    }
}

pub enum AnyRewriter<'a> {
    Stub(StubRewriter<'a>),
    Http(CachedRewriter<HttpRewriter>),
}

impl Rewriter for AnyRewriter<'_> {
    fn rewrite(&mut self, text: &str, mode: RewriteMode) -> Result<String, CoreError> {
        match self {
            AnyRewriter::Stub(s) => s.rewrite(text, mode),
            AnyRewriter::Http(h) => h.rewrite(text, mode),
        }
    }
}

/// Builds the configured backend plus its provenance label. Environment
/// variables override the endpoint and cache dir from the config.
pub fn make_rewriter<'a>(
    config: &RunConfig,
    resources: &'a Resources,
) -> Result<(AnyRewriter<'a>, String), CliError> {
    match config.str_or("rewrite.backend", "stub") {
        "stub" => Ok((AnyRewriter::Stub(StubRewriter::new(resources)), "stub".to_string())),
        "http" => {
            let endpoint = std::env::var(ENDPOINT_ENV)
                .ok()
                .or_else(|| config.get("rewrite.endpoint").map(str::to_string))
                .unwrap_or_default();
            let cache_dir = std::env::var(CACHE_DIR_ENV)
                .ok()
                .or_else(|| config.get("rewrite.cache_dir").map(str::to_string))
                .unwrap_or_else(|| ".capot-rewrite-cache".to_string());
            let http = HttpRewriter::new(&endpoint)?;
            let cached = CachedRewriter::open(Path::new(&cache_dir), http)?;
            Ok((AnyRewriter::Http(cached), format!("http {endpoint}")))
        }
        other => Err(CliError::Usage(format!(
            "unknown rewrite.backend {other:?} (expected stub or http)"
        ))),
    }
}
