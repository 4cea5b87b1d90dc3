use std::time::Duration;

use reqwest::StatusCode;
use tracing::warn;

use super::{MmsError, CONTENT_TYPE};

/// HTTP leg to the MMSC. Each request is attempted at most twice.
#[derive(Clone)]
pub struct MmsClient {
    http: reqwest::Client,
}

#[derive(Debug)]
enum Attempt {
    Retry(String),
    Fatal(MmsError),
}

impl MmsClient {
    pub fn new(timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("reqwest client");
        MmsClient { http }
    }

    pub async fn post(&self, url: &str, pdu: Vec<u8>) -> Result<Vec<u8>, MmsError> {
        self.with_retry(url, || {
            self.http
                .post(url)
                .header(reqwest::header::CONTENT_TYPE, CONTENT_TYPE)
                .body(pdu.clone())
        })
        .await
    }

    pub async fn get(&self, url: &str) -> Result<Vec<u8>, MmsError> {
        self.with_retry(url, || self.http.get(url)).await
    }

    async fn with_retry<F>(&self, url: &str, build: F) -> Result<Vec<u8>, MmsError>
    where
        F: Fn() -> reqwest::RequestBuilder,
    {
        let mut last = String::new();
        for attempt in 0..2 {
            match Self::once(build()).await {
                Ok(body) => return Ok(body),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    warn!(url, attempt, "MMSC request failed: {msg}");
                    last = msg;
                }
            }
        }
        Err(MmsError::Http(last))
    }

    async fn once(req: reqwest::RequestBuilder) -> Result<Vec<u8>, Attempt> {
        let resp = req
            .send()
            .await
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::NOT_FOUND || status == StatusCode::GONE {
            return Err(Attempt::Fatal(MmsError::ContentLocationGone));
        }
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(MmsError::Http(format!("status {status}"))));
        }
        resp.bytes()
            .await
            .map(|b| b.to_vec())
            .map_err(|e| Attempt::Retry(e.to_string()))
    }
}
