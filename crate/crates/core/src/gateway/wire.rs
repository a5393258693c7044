//! HTTP backend speaking to a completion-style endpoint that can echo the
//! prompt with per-token log-probabilities.
//!
//! Scoring sends `{model, prompt, max_tokens: 0, temperature: 0,
//! logprobs: true, echo: true}` and sums the returned `token_logprobs`
//! for tokens whose text offset falls inside the continuation, locating
//! the split by the byte length of the rendered prefix. Endpoints that do
//! not return per-token log-probabilities produce a capability error.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{ModelGateway, ScoreRequest, SequenceScore};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct WireConfig {
    /// Full URL of the completion route.
    pub endpoint: String,
    pub model: String,
    /// Bearer token, usually sourced from the environment.
    pub auth_token: Option<String>,
    pub timeout: Duration,
    /// Cap on concurrent requests in flight.
    pub max_in_flight: usize,
    /// Retries on transport-level failures (connect errors, timeouts,
    /// 429 and 5xx responses), with exponential backoff.
    pub max_retries: u32,
}

impl WireConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        WireConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            auth_token: None,
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            max_retries: 3,
        }
    }
}

/// Counting semaphore guarding the in-flight request budget.
struct Slots {
    available: Mutex<usize>,
    signal: Condvar,
}

impl Slots {
    fn new(count: usize) -> Self {
        Slots {
            available: Mutex::new(count.max(1)),
            signal: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.signal.wait(available).unwrap();
        }
        *available -= 1;
        SlotGuard { slots: self }
    }
}

struct SlotGuard<'a> {
    slots: &'a Slots,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut available = self.slots.available.lock().unwrap();
        *available += 1;
        self.slots.signal.notify_one();
    }
}

pub struct WireGateway {
    config: WireConfig,
    client: reqwest::blocking::Client,
    slots: Slots,
}

impl WireGateway {
    pub fn new(config: WireConfig) -> Result<Self> {
        if config.endpoint.trim().is_empty() {
            return Err(Error::Config("wire endpoint is empty".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Config(format!("failed to build http client: {e}")))?;
        let slots = Slots::new(config.max_in_flight);
        Ok(WireGateway {
            config,
            client,
            slots,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }

    fn post_with_retry(&self, body: &Value) -> Result<Value> {
        let _slot = self.slots.acquire();
        let endpoint = &self.config.endpoint;
        let mut last_transport: Option<Error> = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * (1 << (attempt - 1))));
            }
            let mut request = self.client.post(endpoint).json(body);
            if let Some(token) = &self.config.auth_token {
                request = request.bearer_auth(token);
            }
            match request.send() {
                Err(e) => {
                    last_transport = Some(Error::Transport {
                        endpoint: endpoint.clone(),
                        message: e.to_string(),
                    });
                }
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response.json::<Value>().map_err(|e| Error::Transport {
                            endpoint: endpoint.clone(),
                            message: format!("invalid response body: {e}"),
                        });
                    }
                    let body_text = response.text().unwrap_or_default();
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_transport = Some(Error::Transport {
                            endpoint: endpoint.clone(),
                            message: format!("http {status}: {}", truncate(&body_text, 200)),
                        });
                    } else {
                        return Err(Error::Config(format!(
                            "endpoint {endpoint} rejected the request with http {status}: {}",
                            truncate(&body_text, 200)
                        )));
                    }
                }
            }
        }
        Err(last_transport.unwrap_or_else(|| Error::Transport {
            endpoint: endpoint.clone(),
            message: "request failed with no recorded cause".into(),
        }))
    }
}

fn truncate(text: &str, limit: usize) -> &str {
    match text.char_indices().nth(limit) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

impl ModelGateway for WireGateway {
    fn score_continuation(&self, request: &ScoreRequest) -> Result<SequenceScore> {
        if request.continuation.trim().is_empty() {
            return Err(Error::Precondition(
                "score_continuation requires a non-empty continuation".into(),
            ));
        }
        let prompt = format!("{}{}", request.prefix, request.continuation);
        let body = json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": 0,
            "temperature": 0,
            "logprobs": true,
            "echo": true,
        });
        let response = self.post_with_retry(&body)?;
        extract_echoed_score(&response, request.prefix.len(), &self.config.endpoint)
    }

    fn generate_greedy(
        &self,
        prefix: &str,
        max_tokens: usize,
        stop: Option<&str>,
    ) -> Result<String> {
        if max_tokens == 0 {
            return Err(Error::Precondition("generation requires max_tokens >= 1".into()));
        }
        let mut body = json!({
            "model": self.config.model,
            "prompt": prefix,
            "max_tokens": max_tokens,
            "temperature": 0,
        });
        if let Some(stop) = stop {
            body["stop"] = json!([stop]);
        }
        let response = self.post_with_retry(&body)?;
        let text = response
            .pointer("/choices/0/text")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Capability {
                endpoint: self.config.endpoint.clone(),
                message: "completion response has no choices[0].text".into(),
            })?;
        Ok(text.to_string())
    }
}

/// Pull the continuation score out of an echoed completion response.
///
/// `boundary` is the byte offset in the prompt where the continuation
/// begins. Exposed for tests; the over-the-wire layout is the classic
/// completions shape with `logprobs.tokens`, `logprobs.token_logprobs`
/// and optionally `logprobs.text_offset`.
pub fn extract_echoed_score(
    response: &Value,
    boundary: usize,
    endpoint: &str,
) -> Result<SequenceScore> {
    let capability = |message: &str| Error::Capability {
        endpoint: endpoint.to_string(),
        message: message.to_string(),
    };
    let logprobs = response
        .pointer("/choices/0/logprobs")
        .filter(|v| !v.is_null())
        .ok_or_else(|| capability("response carries no per-token log-probabilities"))?;
    let tokens: Vec<&str> = logprobs
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| capability("logprobs.tokens missing"))?
        .iter()
        .map(|v| v.as_str().unwrap_or_default())
        .collect();
    let token_logprobs = logprobs
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| capability("logprobs.token_logprobs missing"))?;
    if token_logprobs.len() != tokens.len() {
        return Err(capability("logprobs arrays disagree in length"));
    }

    let offsets: Vec<usize> = match logprobs.get("text_offset").and_then(Value::as_array) {
        Some(raw) => raw
            .iter()
            .map(|v| v.as_u64().map(|n| n as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| capability("logprobs.text_offset holds non-integers"))?,
        // No explicit offsets: accumulate token byte lengths.
        None => {
            let mut acc = 0usize;
            tokens
                .iter()
                .map(|t| {
                    let here = acc;
                    acc += t.len();
                    here
                })
                .collect()
        }
    };
    if offsets.len() != tokens.len() {
        return Err(capability("logprobs.text_offset disagrees in length"));
    }

    let mut total_logprob = 0.0;
    let mut token_count = 0usize;
    for (idx, value) in token_logprobs.iter().enumerate() {
        if offsets[idx] < boundary {
            continue;
        }
        match value.as_f64() {
            Some(lp) if lp.is_finite() => {
                total_logprob += lp;
                token_count += 1;
            }
            // Endpoints leave the very first prompt token unscored; that
            // token can only fall in the continuation when the prefix is
            // empty, and is then skipped.
            None if idx == 0 && value.is_null() => continue,
            _ => return Err(capability("continuation token lacks a log-probability")),
        }
    }
    if token_count == 0 {
        return Err(capability("no scored tokens fall inside the continuation"));
    }
    Ok(SequenceScore {
        total_logprob,
        token_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echoed_response() -> Value {
        json!({
            "choices": [{
                "text": "Hello world again",
                "logprobs": {
                    "tokens": ["Hello", " world", " again"],
                    "token_logprobs": [null, -1.5, -0.5],
                    "text_offset": [0, 5, 11]
                }
            }]
        })
    }

    #[test]
    fn splits_at_prefix_boundary() {
        // Prefix "Hello" is 5 bytes; " world" and " again" are continuation.
        let score = extract_echoed_score(&echoed_response(), 5, "http://t").unwrap();
        assert_eq!(score.token_count, 2);
        assert!((score.total_logprob - -2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_prefix_skips_unscored_first_token() {
        let score = extract_echoed_score(&echoed_response(), 0, "http://t").unwrap();
        assert_eq!(score.token_count, 2);
    }

    #[test]
    fn derives_offsets_when_absent() {
        let response = json!({
            "choices": [{
                "logprobs": {
                    "tokens": ["ab", "cd", "ef"],
                    "token_logprobs": [-1.0, -2.0, -3.0]
                }
            }]
        });
        let score = extract_echoed_score(&response, 2, "http://t").unwrap();
        assert_eq!(score.token_count, 2);
        assert!((score.total_logprob - -5.0).abs() < 1e-12);
    }

    #[test]
    fn missing_logprobs_is_capability_error() {
        let response = json!({"choices": [{"text": "hi"}]});
        match extract_echoed_score(&response, 0, "http://t") {
            Err(Error::Capability { endpoint, .. }) => assert_eq!(endpoint, "http://t"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn null_logprob_inside_continuation_is_capability_error() {
        let response = json!({
            "choices": [{
                "logprobs": {
                    "tokens": ["a", "b"],
                    "token_logprobs": [-1.0, null],
                    "text_offset": [0, 1]
                }
            }]
        });
        assert!(matches!(
            extract_echoed_score(&response, 0, "http://t"),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn unreachable_endpoint_reports_transport_error_naming_it() {
        let config = WireConfig {
            max_retries: 0,
            timeout: Duration::from_millis(300),
            ..WireConfig::new("http://127.0.0.1:9/v1/completions", "m")
        };
        let gw = WireGateway::new(config).unwrap();
        let err = gw
            .score_continuation(&ScoreRequest::new("a", "b"))
            .unwrap_err();
        match err {
            Error::Transport { endpoint, .. } => {
                assert!(endpoint.contains("127.0.0.1:9"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
