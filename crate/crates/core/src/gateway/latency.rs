//! Request latency harness: n warm requests over one kept-alive connection.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Historical per-call means (ms) of the SOAP middleware this harness
/// replaces. Printed for context only.
pub const HISTORICAL_MEANS_MS: [(&str, f64); 4] = [
    ("historical row 1", 10.10),
    ("historical row 2", 28.11),
    ("historical row 3", 12.22),
    ("historical row 4", 1.02),
];

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("request {index} failed: {message}")]
    Request { index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub endpoint: String,
    pub n: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

impl LatencyReport {
    pub fn from_samples(endpoint: &str, samples: &[Duration]) -> Result<Self, LatencyError> {
        if samples.is_empty() {
            return Err(LatencyError::InvalidArgument("n must be positive".into()));
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1000.0).collect();
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let median = if n % 2 == 1 {
            ms[n / 2]
        } else {
            (ms[n / 2 - 1] + ms[n / 2]) / 2.0
        };
        // Nearest-rank percentile.
        let p95 = ms[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
        Ok(LatencyReport {
            endpoint: endpoint.to_owned(),
            n,
            min_ms: ms[0],
            median_ms: median,
            p95_ms: p95,
            mean_ms: ms.iter().sum::<f64>() / n as f64,
            max_ms: ms[n - 1],
        })
    }

    /// Plain-text table: this run's distribution, then historical means.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<28}{:>10}\n", "metric", "ms"));
        s.push_str(&format!(
            "{:<28}{:>10}\n",
            format!("endpoint {}", self.endpoint),
            ""
        ));
        s.push_str(&format!("{:<28}{:>10}\n", "n", self.n));
        for (k, v) in [
            ("min", self.min_ms),
            ("median", self.median_ms),
            ("p95", self.p95_ms),
            ("mean", self.mean_ms),
            ("max", self.max_ms),
        ] {
            s.push_str(&format!("{k:<28}{v:>10.3}\n"));
        }
        s.push_str("historical mean per call (context only)\n");
        for (k, v) in HISTORICAL_MEANS_MS {
            s.push_str(&format!("{k:<28}{v:>10.2}\n"));
        }
        s
    }
}

/// Times `n` GETs of `url` after `warmup` untimed ones. The client keeps one
/// pooled connection, so connection setup falls into the warm-up.
pub async fn measure(
    url: &str,
    token: Option<&str>,
    n: usize,
    warmup: usize,
) -> Result<LatencyReport, LatencyError> {
    if n == 0 {
        return Err(LatencyError::InvalidArgument("n must be positive".into()));
    }
    let client = reqwest::Client::builder()
        .pool_max_idle_per_host(1)
        .tcp_nodelay(true)
        .build()
        .map_err(|e| LatencyError::InvalidArgument(e.to_string()))?;
    let one = |i: usize| {
        let mut req = client.get(url);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        async move {
            let resp = req.send().await.map_err(|e| LatencyError::Request {
                index: i,
                message: e.to_string(),
            })?;
            let status = resp.status();
            resp.bytes().await.map_err(|e| LatencyError::Request {
                index: i,
                message: e.to_string(),
            })?;
            if !status.is_success() {
                return Err(LatencyError::Request {
                    index: i,
                    message: format!("HTTP {status}"),
                });
            }
            Ok(())
        }
    };
    for i in 0..warmup.max(1) {
        one(i).await?;
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = Instant::now();
        one(i).await?;
        samples.push(t.elapsed());
    }
    LatencyReport::from_samples(url, &samples)
}
