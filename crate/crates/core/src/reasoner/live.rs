//! HTTP client for a locally hosted language model.
//!
//! Default dialect: `POST {endpoint}/api/generate` with
//! `{"model", "prompt", "stream": false, "format": "json"}`, reply text in the
//! `response` field. Everything about the request and response shape comes
//! from [`AdapterConfig`].

use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};

use super::{AdapterConfig, Query, Reasoner, ReasonerBackendConfig, Reply, RequestStyle};
use crate::error::BackendError;

/// Counting semaphore shared by every live backend of a batch.
#[derive(Debug, Clone)]
pub struct InFlightLimiter {
    inner: Arc<(Mutex<usize>, Condvar)>,
    max: usize,
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            inner: Arc::new((Mutex::new(0), Condvar::new())),
            max: max.max(1),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let (lock, cvar) = &*self.inner;
        let mut n = lock.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = cvar.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a InFlightLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let (lock, cvar) = &*self.0.inner;
        let mut n = lock.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        cvar.notify_one();
    }
}

pub struct LiveBackend {
    agent: ureq::Agent,
    endpoint: String,
    url: String,
    model_tag: String,
    adapter: AdapterConfig,
    timeout_ms: u64,
    max_retries: u32,
    limiter: InFlightLimiter,
}

impl LiveBackend {
    pub fn new(cfg: &ReasonerBackendConfig, model: &str, limiter: InFlightLimiter) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(true)
            .build()
            .into();
        let base = cfg.endpoint.trim_end_matches('/');
        Self {
            agent,
            endpoint: cfg.endpoint.clone(),
            url: format!("{base}{}", cfg.adapter.path),
            model_tag: cfg.adapter.model_tag(model).to_string(),
            adapter: cfg.adapter.clone(),
            timeout_ms: cfg.timeout_ms,
            max_retries: cfg.max_retries,
            limiter,
        }
    }

    /// The JSON body sent for `prompt`.
    pub fn request_body(&self, prompt: &str) -> Value {
        request_body(&self.adapter, &self.model_tag, prompt)
    }

    /// Checks that something accepts TCP connections at `endpoint`.
    pub fn probe(endpoint: &str, timeout: Duration) -> Result<(), BackendError> {
        let unavailable = |reason: String| BackendError::Unavailable {
            endpoint: endpoint.to_string(),
            reason,
        };
        let rest = endpoint
            .strip_prefix("http://")
            .ok_or_else(|| unavailable("only http:// endpoints are supported".into()))?;
        let authority = rest.split('/').next().unwrap_or_default();
        let host_port = if authority.rsplit_once(':').is_some_and(|(_, p)| p.parse::<u16>().is_ok()) {
            authority.to_string()
        } else {
            format!("{authority}:80")
        };
        let addrs = host_port
            .to_socket_addrs()
            .map_err(|e| unavailable(format!("cannot resolve {host_port}: {e}")))?;
        let mut last = String::from("no addresses");
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(_) => return Ok(()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(unavailable(last))
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let _permit = self.limiter.acquire();
        let result = self.agent.post(&self.url).send_json(body);
        let mut response = result.map_err(|e| self.map_error(e))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| self.map_error(e))?;
        Ok(extract_reply(&self.adapter, text))
    }

    fn map_error(&self, e: ureq::Error) -> BackendError {
        match e {
            ureq::Error::Timeout(_) => BackendError::Timeout {
                endpoint: self.endpoint.clone(),
                timeout_ms: self.timeout_ms,
            },
            other => BackendError::Unavailable {
                endpoint: self.endpoint.clone(),
                reason: other.to_string(),
            },
        }
    }
}

pub(crate) fn request_body(adapter: &AdapterConfig, model_tag: &str, prompt: &str) -> Value {
    let mut body = Map::new();
    body.insert(adapter.model_field.clone(), Value::from(model_tag));
    let payload = match adapter.style {
        RequestStyle::Generate => Value::from(prompt),
        RequestStyle::Chat => json!([{ "role": "user", "content": prompt }]),
    };
    body.insert(adapter.prompt_field.clone(), payload);
    for (k, v) in &adapter.extra {
        body.insert(k.clone(), v.clone());
    }
    Value::Object(body)
}

/// The reply text at the adapter's pointer, or the whole body when the body
/// is not JSON or the pointer does not resolve to a string. A body that
/// cannot be read as a reply becomes a parse failure downstream rather than
/// a backend error.
pub(crate) fn extract_reply(adapter: &AdapterConfig, body: String) -> String {
    match serde_json::from_str::<Value>(&body) {
        Ok(v) => match v.pointer(&adapter.response_pointer) {
            Some(Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => body,
        },
        Err(_) => body,
    }
}

impl Reasoner for LiveBackend {
    fn query(&mut self, q: &Query<'_>) -> Result<Reply, BackendError> {
        let body = self.request_body(q.prompt);
        let start = Instant::now();
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(Reply {
                        text,
                        latency_ms: start.elapsed().as_secs_f64() * 1e3,
                    })
                }
                Err(e) if attempt >= self.max_retries => return Err(e),
                Err(_) => attempt += 1,
            }
        }
    }

    fn is_live(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_body_shape() {
        let a = AdapterConfig::default();
        let body = request_body(&a, "mistral", "hi");
        assert_eq!(
            body,
            json!({"model": "mistral", "prompt": "hi", "stream": false, "format": "json"})
        );
    }

    #[test]
    fn chat_body_and_reply_shape() {
        let a = AdapterConfig::chat_completions();
        let body = request_body(&a, "phi", "hi");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["model"], "phi");
        let reply = r#"{"choices":[{"message":{"role":"assistant","content":"{\"relation\": 1}"}}]}"#;
        assert_eq!(extract_reply(&a, reply.into()), r#"{"relation": 1}"#);
    }

    #[test]
    fn reply_extraction_falls_back_to_body() {
        let a = AdapterConfig::default();
        assert_eq!(extract_reply(&a, r#"{"response":"ok"}"#.into()), "ok");
        assert_eq!(extract_reply(&a, "plain".into()), "plain");
        assert_eq!(extract_reply(&a, r#"{"other":1}"#.into()), r#"{"other":1}"#);
    }

    #[test]
    fn limiter_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let limiter = InFlightLimiter::new(2);
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let (l, a, p) = (limiter.clone(), active.clone(), peak.clone());
                s.spawn(move || {
                    let _g = l.acquire();
                    let now = a.fetch_add(1, Ordering::SeqCst) + 1;
                    p.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    a.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn probe_rejects_closed_port() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        assert!(LiveBackend::probe(&format!("http://127.0.0.1:{port}"), Duration::from_millis(500)).is_ok());
        drop(listener);
        assert!(LiveBackend::probe(&format!("http://127.0.0.1:{port}/x"), Duration::from_millis(500)).is_err());
        assert!(LiveBackend::probe("https://example", Duration::from_millis(10)).is_err());
    }
}
