use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatRequest, GatewayError};

/// Something that turns a request into model text.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError>;
    /// Short identifier recorded in run manifests.
    fn id(&self) -> String;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        (**self).complete(req)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}

/// A backend backed by a closure. Used for scripted responders in tests and
/// for recording fixtures.
pub struct FnBackend<F> {
    name: String,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnBackend { name: name.into(), f }
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        (self.f)(req)
    }

    fn id(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Fixture {
    key: String,
    request: ChatRequest,
    completion: String,
}

pub fn fixture_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.json"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayMode {
    /// A missing fixture is an error.
    Strict,
    /// A missing fixture yields this text.
    Lenient(String),
}

/// Serves recorded completions keyed by request hash.
pub struct ReplayBackend {
    dir: PathBuf,
    mode: ReplayMode,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>, mode: ReplayMode) -> Self {
        ReplayBackend { dir: dir.into(), mode }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let key = req.key();
        let path = fixture_path(&self.dir, &key);
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                let fx: Fixture = serde_json::from_str(&text)
                    .map_err(|e| GatewayError::Malformed(format!("{}: {e}", path.display())))?;
                Ok(fx.completion)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => match &self.mode {
                ReplayMode::Strict => Err(GatewayError::ReplayMiss { hash: key }),
                ReplayMode::Lenient(default) => Ok(default.clone()),
            },
            Err(e) => Err(e.into()),
        }
    }

    fn id(&self) -> String {
        format!("replay:{}", self.dir.display())
    }
}

/// Forwards to another backend and writes every exchange as a fixture.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(RecordingBackend { inner, dir })
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let completion = self.inner.complete(req)?;
        let key = req.key();
        let fx = Fixture { key: key.clone(), request: req.clone(), completion: completion.clone() };
        let text = serde_json::to_string_pretty(&fx).expect("fixtures serialize");
        let path = fixture_path(&self.dir, &key);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text + "\n")?;
        std::fs::rename(&tmp, &path)?;
        Ok(completion)
    }

    fn id(&self) -> String {
        format!("record:{}", self.inner.id())
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            api_key,
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Chat-completion style JSON API.
pub struct HttpBackend {
    cfg: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        HttpBackend { cfg, agent }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.base_url.trim_end_matches('/'))
    }

    /// POST with retry on 429 and 5xx, doubling the delay each time.
    fn post(&self, path: &str, body: serde_json::Value) -> Result<serde_json::Value, GatewayError> {
        let url = self.url(path);
        let mut delay = self.cfg.base_delay;
        let mut last_status = 0;
        for attempt in 1..=self.cfg.max_attempts {
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(key) = &self.cfg.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req.send_json(&body).map_err(|e| GatewayError::Network(e.to_string()))?;
            let status = resp.status().as_u16();
            if (200..300).contains(&status) {
                return resp.body_mut().read_json().map_err(|e| GatewayError::Malformed(e.to_string()));
            }
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            if status != 429 && status < 500 {
                return Err(GatewayError::Http { status, body: text });
            }
            last_status = status;
            log::warn!("{url}: HTTP {status} (attempt {attempt}/{})", self.cfg.max_attempts);
            if attempt < self.cfg.max_attempts {
                thread::sleep(delay);
                delay = (delay * 2).min(Duration::from_secs(30));
            }
        }
        if last_status == 429 {
            Err(GatewayError::RateLimited { attempts: self.cfg.max_attempts })
        } else {
            Err(GatewayError::Http { status: last_status, body: "server error persisted".into() })
        }
    }

    /// Embedding vectors for `texts`, one per text, in order.
    pub fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let v = self.post("embeddings", json!({ "model": model, "input": texts }))?;
        let data = v["data"].as_array().ok_or_else(|| GatewayError::Malformed("no data array".into()))?;
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let idx = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
            let vec = item["embedding"]
                .as_array()
                .ok_or_else(|| GatewayError::Malformed("embedding is not an array".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| GatewayError::Malformed("non-numeric embedding".into())))
                .collect::<Result<Vec<_>, _>>()?;
            *out.get_mut(idx).ok_or_else(|| GatewayError::Malformed(format!("index {idx} out of range")))? = vec;
        }
        if out.iter().any(Vec::is_empty) {
            return Err(GatewayError::Malformed("missing embeddings in response".into()));
        }
        Ok(out)
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let body = serde_json::to_value(req).expect("requests always serialize");
        let v = self.post("chat/completions", body)?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Malformed("no choices[0].message.content".into()))
    }

    fn id(&self) -> String {
        format!("http:{}", self.cfg.base_url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves one canned response per connection, in order.
    fn stub_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for (status, body) in responses {
                let Ok((stream, _)) = listener.accept() else { return };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0u8; len];
                let _ = reader.read_exact(&mut buf);
                let mut stream = reader.into_inner();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        (format!("http://{addr}"), hits)
    }

    fn fast(base: String) -> HttpBackend {
        let mut cfg = HttpConfig::new(base, Some("k".into()));
        cfg.base_delay = Duration::from_millis(1);
        HttpBackend::new(cfg)
    }

    #[test]
    fn retries_429_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#.to_string();
        let (base, hits) = stub_server(vec![(429, "{}".into()), (429, "{}".into()), (200, ok)]);
        let out = fast(base).complete(&ChatRequest::new("s", "p".into())).unwrap();
        assert_eq!(out, "hi");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_five_attempts() {
        let (base, hits) = stub_server(vec![(429, "{}".into()); 6]);
        let err = fast(base).complete(&ChatRequest::new("s", "p".into())).unwrap_err();
        assert!(matches!(err, GatewayError::RateLimited { attempts: 5 }), "{err}");
        assert_eq!(hits.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (base, hits) = stub_server(vec![(401, "denied".into()), (200, "{}".into())]);
        let err = fast(base).complete(&ChatRequest::new("s", "p".into())).unwrap_err();
        assert!(matches!(err, GatewayError::Http { status: 401, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingBackend::new(FnBackend::new("echo", |r: &ChatRequest| Ok(r.prompt().to_uppercase())), dir.path())
            .unwrap();
        let req = ChatRequest::new("s", "abc".into());
        assert_eq!(rec.complete(&req).unwrap(), "ABC");
        let replay = ReplayBackend::new(dir.path(), ReplayMode::Strict);
        assert_eq!(replay.complete(&req).unwrap(), "ABC");
        let miss = ChatRequest::new("s", "zzz".into());
        match replay.complete(&miss) {
            Err(GatewayError::ReplayMiss { hash }) => assert_eq!(hash, miss.key()),
            other => panic!("{other:?}"),
        }
        let lenient = ReplayBackend::new(dir.path(), ReplayMode::Lenient("dflt".into()));
        assert_eq!(lenient.complete(&miss).unwrap(), "dflt");
    }
}
