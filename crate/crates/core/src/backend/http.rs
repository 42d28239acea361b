//! Chat-completions client over HTTP with retry and backoff.

use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::{BackendConfig, BackendError, ChatBackend, ChatRequest, InFlight};

/// A raw HTTP response, as far as the backend cares.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
    /// Seconds from a `Retry-After` header.
    pub retry_after: Option<u64>,
}

/// Sends one POST. `Err` means no response was received at all.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &Value,
    ) -> Result<HttpReply, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &Value,
    ) -> Result<HttpReply, String> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(k) = api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpReply {
            status,
            body,
            retry_after,
        })
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    api_key: Option<String>,
    transport: Box<dyn Transport>,
    slots: InFlight,
}

impl HttpBackend {
    /// Reads the API key from the environment variable named in the config.
    pub fn from_config(config: BackendConfig) -> Result<Self, BackendError> {
        let transport = UreqTransport::new(Duration::from_secs(config.timeout_secs));
        Self::with_transport(config, Box::new(transport))
    }

    pub fn with_transport(
        config: BackendConfig,
        transport: Box<dyn Transport>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        Ok(HttpBackend {
            slots: InFlight::new(config.max_in_flight),
            config,
            api_key,
            transport,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32, retry_after: Option<u64>) -> Duration {
        let exp = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.config.backoff_cap_ms);
        let jitter: f64 = rand::rng().random_range(0.5..=1.0);
        let ms = (exp as f64 * jitter) as u64;
        match retry_after {
            Some(s) => Duration::from_millis(ms.max(s.saturating_mul(1000))),
            None => Duration::from_millis(ms),
        }
    }
}

fn extract_content(body: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| BackendError::BadResponse(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError::BadResponse("no choices[0].message.content".into()))
}

fn snippet(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        let body = json!({
            "model": self.config.model,
            "temperature": request.temperature.unwrap_or(self.config.temperature),
            "messages": request.messages,
        });
        let _slot = self.slots.acquire();
        let mut last = BackendError::Transport("no attempt made".into());
        let mut retry_after = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1, retry_after.take()));
            }
            let reply = match self.transport.post_json(
                &self.config.endpoint_url,
                self.api_key.as_deref(),
                &body,
            ) {
                Ok(r) => r,
                Err(e) => {
                    last = BackendError::Transport(e);
                    continue;
                }
            };
            match reply.status {
                200..=299 => return extract_content(&reply.body),
                429 => {
                    last = BackendError::RateLimited(snippet(&reply.body).to_owned());
                    retry_after = reply.retry_after;
                }
                408 | 500..=599 => {
                    last = BackendError::Transport(format!(
                        "HTTP {}: {}",
                        reply.status,
                        snippet(&reply.body)
                    ));
                }
                s => {
                    return Err(BackendError::BadResponse(format!(
                        "HTTP {s}: {}",
                        snippet(&reply.body)
                    )))
                }
            }
        }
        Err(last)
    }

    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn default_temperature(&self) -> f64 {
        self.config.temperature
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::backend::ChatMessage;

    struct Scripted {
        replies: Mutex<Vec<Result<HttpReply, String>>>,
        calls: Arc<AtomicUsize>,
    }

    impl Transport for Scripted {
        fn post_json(&self, _: &str, _: Option<&str>, _: &Value) -> Result<HttpReply, String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut r = self.replies.lock().unwrap();
            if r.len() > 1 {
                r.remove(0)
            } else {
                r[0].clone()
            }
        }
    }

    fn fast_config(retries: u32) -> BackendConfig {
        BackendConfig {
            endpoint_url: "http://unused".into(),
            max_retries: retries,
            backoff_base_ms: 1,
            backoff_cap_ms: 2,
            api_key_env: "JATS_TRANSLATE_TEST_NO_SUCH_KEY".into(),
            ..Default::default()
        }
    }

    fn backend(
        replies: Vec<Result<HttpReply, String>>,
        retries: u32,
    ) -> (HttpBackend, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let t = Scripted {
            replies: Mutex::new(replies),
            calls: calls.clone(),
        };
        (
            HttpBackend::with_transport(fast_config(retries), Box::new(t)).unwrap(),
            calls,
        )
    }

    fn ok(content: &str) -> Result<HttpReply, String> {
        Ok(HttpReply {
            status: 200,
            body: json!({"choices":[{"message":{"role":"assistant","content":content}}]})
                .to_string(),
            retry_after: None,
        })
    }

    fn status(s: u16) -> Result<HttpReply, String> {
        Ok(HttpReply {
            status: s,
            body: "nope".into(),
            retry_after: None,
        })
    }

    fn req() -> ChatRequest {
        ChatRequest::new("t", vec![ChatMessage::user("hi")])
    }

    #[test]
    fn transport_failures_exhaust_retries() {
        let (b, calls) = backend(vec![Err("connection refused".into())], 3);
        assert!(matches!(
            b.complete(&req()),
            Err(BackendError::Transport(_))
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn rate_limit_then_success() {
        let (b, calls) = backend(vec![status(429), status(503), ok("done")], 3);
        assert_eq!(b.complete(&req()).unwrap(), "done");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn persistent_rate_limit_is_reported() {
        let (b, _) = backend(vec![status(429)], 1);
        assert!(matches!(
            b.complete(&req()),
            Err(BackendError::RateLimited(_))
        ));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (b, calls) = backend(vec![status(401)], 3);
        assert!(matches!(
            b.complete(&req()),
            Err(BackendError::BadResponse(_))
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn missing_content_is_bad_response() {
        let (b, _) = backend(
            vec![Ok(HttpReply {
                status: 200,
                body: "{\"choices\":[]}".into(),
                retry_after: None,
            })],
            0,
        );
        assert!(matches!(
            b.complete(&req()),
            Err(BackendError::BadResponse(_))
        ));
    }

    #[test]
    fn invalid_request_never_reaches_transport() {
        let (b, calls) = backend(vec![ok("x")], 0);
        let r = ChatRequest::new("t", vec![ChatMessage::user("")]);
        assert!(b.complete(&r).is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn backoff_is_capped() {
        let (b, _) = backend(vec![ok("x")], 0);
        for a in 0..30 {
            assert!(b.backoff(a, None) <= Duration::from_millis(2));
        }
        assert!(b.backoff(0, Some(1)) >= Duration::from_secs(1));
    }

    #[test]
    fn talks_to_a_local_server() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let server = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(sock.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.to_ascii_lowercase();
                if let Some(v) = l.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let sent: Value = serde_json::from_slice(&body).unwrap();
            let echo = sent["messages"][0]["content"]
                .as_str()
                .unwrap()
                .to_uppercase();
            let reply = json!({"choices":[{"message":{"content":echo}}]}).to_string();
            write!(
                sock,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.len(),
                reply
            )
            .unwrap();
        });
        let cfg = BackendConfig {
            endpoint_url: format!("http://127.0.0.1:{port}/v1/chat/completions"),
            timeout_secs: 10,
            ..fast_config(0)
        };
        let b = HttpBackend::from_config(cfg).unwrap();
        assert_eq!(b.complete(&req()).unwrap(), "HI");
        server.join().unwrap();
    }
}
