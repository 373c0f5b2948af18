//! Minimal blocking JSON-over-HTTP client shared by the remote scorer and
//! the external rewriter.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub(crate) enum HttpError {
    #[error("endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    url: String,
    headers: Vec<(String, String)>,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // header values may carry API keys
        f.debug_struct("JsonClient")
            .field("url", &self.url)
            .finish_non_exhaustive()
    }
}

impl JsonClient {
    pub(crate) fn new(url: &str, timeout: Duration, headers: Vec<(String, String)>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        JsonClient {
            agent,
            url: url.to_string(),
            headers,
        }
    }

    pub(crate) fn url(&self) -> &str {
        &self.url
    }

    pub(crate) fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        body: &Req,
    ) -> Result<Resp, HttpError> {
        let mut request = self.agent.post(&self.url);
        for (name, value) in &self.headers {
            request = request.header(name.as_str(), value.as_str());
        }
        let mut response = request.send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => HttpError::Unavailable(format!("HTTP status {code}")),
            other => HttpError::Unavailable(other.to_string()),
        })?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| HttpError::Unavailable(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| HttpError::Malformed(e.to_string()))
    }
}

/// Tiny single-purpose HTTP server for exercising the clients in tests.
#[cfg(test)]
pub(crate) mod testserver {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;
    use std::time::Duration;

    /// Serve `body` with `status` to every request after `delay`. Returns the
    /// base URL.
    pub(crate) fn serve(status: u16, body: &'static str, delay: Duration) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut len = 0usize;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            return;
                        }
                        let lower = line.to_ascii_lowercase();
                        if let Some(v) = lower.strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                        if line == "\r\n" {
                            break;
                        }
                    }
                    let mut buf = vec![0; len];
                    let _ = reader.read_exact(&mut buf);
                    thread::sleep(delay);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                        body.len()
                    );
                });
            }
        });
        format!("http://{addr}/")
    }
}
