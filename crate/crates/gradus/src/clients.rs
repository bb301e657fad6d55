//! HTTP backends for docstring generation, similarity annotation, and
//! preference judging, plus a small bounded-concurrency map helper.
//!
//! All three clients speak a minimal JSON-over-POST protocol, retry failed
//! requests a configurable number of times, and read bearer tokens from the
//! environment (`GRADUS_GENERATOR_TOKEN`, `GRADUS_ANNOTATOR_TOKEN`,
//! `GRADUS_JUDGE_TOKEN`) so credentials never live in config files.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use crate::corpus::{DocstringGenerator, FunctionUnit};
use crate::error::{Error, Result};
use crate::refine::PreferenceJudge;
use crate::synth::SimilarityAnnotator;

/// Apply `f` to every item with at most `max_in_flight` invocations running
/// at once. Results come back in input order regardless of scheduling.
pub fn map_bounded<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    let workers = max_in_flight.max(1).min(n);
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|o| o.expect("slot filled")).collect()
}

/// Connection settings shared by the HTTP clients.
#[derive(Debug, Clone)]
pub struct HttpClientConfig {
    pub endpoint: String,
    /// Bearer token; `None` sends no Authorization header.
    pub token: Option<String>,
    /// Number of retries after the first attempt.
    pub retries: u32,
    pub timeout_secs: u64,
}

impl HttpClientConfig {
    pub fn new(endpoint: impl Into<String>, token_env: &str, retries: u32) -> Self {
        HttpClientConfig {
            endpoint: endpoint.into(),
            token: std::env::var(token_env).ok(),
            retries,
            timeout_secs: 30,
        }
    }
}

fn post_json<B: serde::Serialize, R: for<'de> Deserialize<'de>>(
    cfg: &HttpClientConfig,
    body: &B,
) -> Result<R> {
    let mut last_err = String::new();
    for attempt in 0..=cfg.retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(50 * attempt as u64));
        }
        let mut req = ureq::post(&cfg.endpoint)
            .config()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build();
        if let Some(token) = &cfg.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => match resp.body_mut().read_json::<R>() {
                Ok(parsed) => return Ok(parsed),
                Err(err) => last_err = format!("bad response body: {err}"),
            },
            Err(err) => last_err = err.to_string(),
        }
        log::warn!("request to {} failed (attempt {}/{}): {last_err}", cfg.endpoint, attempt + 1, cfg.retries + 1);
    }
    Err(Error::Backend(format!("{} after {} attempts: {last_err}", cfg.endpoint, cfg.retries + 1)))
}

/// Docstring generator backed by an HTTP service.
///
/// Request: `{"prompt": "..."}` — response: `{"text": "..."}`.
pub struct HttpDocGen {
    pub cfg: HttpClientConfig,
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

impl DocstringGenerator for HttpDocGen {
    fn generate(&self, _unit: &FunctionUnit, prompt: &str) -> Result<String> {
        let resp: TextResponse = post_json(&self.cfg, &serde_json::json!({ "prompt": prompt }))?;
        if resp.text.trim().is_empty() {
            return Err(Error::Backend("generator returned an empty docstring".into()));
        }
        Ok(resp.text)
    }
}

/// Similarity annotator backed by an HTTP embedding service.
///
/// Request: `{"texts": ["...", ...]}` — response: `{"vectors": [[...], ...]}`.
pub struct HttpAnnotator {
    pub cfg: HttpClientConfig,
    /// Texts per request.
    pub batch_size: usize,
}

#[derive(Deserialize)]
struct VectorsResponse {
    vectors: Vec<Vec<f64>>,
}

impl SimilarityAnnotator for HttpAnnotator {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size.max(1)) {
            let resp: VectorsResponse = post_json(&self.cfg, &serde_json::json!({ "texts": chunk }))?;
            if resp.vectors.len() != chunk.len() {
                return Err(Error::Backend(format!(
                    "annotator returned {} vectors for {} texts",
                    resp.vectors.len(),
                    chunk.len()
                )));
            }
            out.extend(resp.vectors);
        }
        if let Some(first) = out.first() {
            let dim = first.len();
            if dim == 0 || out.iter().any(|v| v.len() != dim) {
                return Err(Error::Backend("annotator returned inconsistent vector dimensions".into()));
            }
        }
        Ok(out)
    }
}

/// Preference judge backed by an HTTP service.
///
/// Request: `{"docstring": "...", "code_a": "...", "code_b": "..."}` where
/// `code_a` is the group's positive and `code_b` the candidate — response:
/// `{"choice": "a" | "b" | "both"}`. The candidate satisfies the docstring
/// when the choice is `"b"` or `"both"`.
pub struct HttpJudge {
    pub cfg: HttpClientConfig,
}

#[derive(Deserialize)]
struct ChoiceResponse {
    choice: String,
}

impl PreferenceJudge for HttpJudge {
    fn candidate_satisfies(&self, docstring: &str, positive_code: &str, candidate_code: &str) -> Result<bool> {
        let resp: ChoiceResponse = post_json(
            &self.cfg,
            &serde_json::json!({
                "docstring": docstring,
                "code_a": positive_code,
                "code_b": candidate_code,
            }),
        )?;
        match resp.choice.as_str() {
            "a" => Ok(false),
            "b" | "both" => Ok(true),
            other => Err(Error::Backend(format!("judge returned unknown choice {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_bounded_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let doubled = map_bounded(&items, 8, |&x| x * 2);
        assert_eq!(doubled, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn map_bounded_serial_and_empty() {
        let empty: Vec<u8> = Vec::new();
        assert!(map_bounded(&empty, 4, |&x| x).is_empty());
        let items = vec![1, 2, 3];
        assert_eq!(map_bounded(&items, 1, |&x| x + 1), vec![2, 3, 4]);
    }

    #[test]
    fn map_bounded_caps_workers_at_item_count() {
        let items = vec![5];
        assert_eq!(map_bounded(&items, 64, |&x| x), vec![5]);
    }
}
