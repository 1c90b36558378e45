use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::text::{slice_chars, CharSpan};

use super::wire::{BatchRequest, BatchResponse, ScoreRequest, ScoreResponse};
use super::{BatchScores, QaScore, QaScorer, ScorerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8700`.
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    /// Items per `/score_batch` request.
    pub batch_size: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8700".into(),
            timeout_ms: 10_000,
            max_in_flight: 4,
            batch_size: 32,
            max_retries: 3,
            backoff_ms: 100,
            max_backoff_ms: 2_000,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self
                .freed
                .wait(available)
                .unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// HTTP client for a remote extractive-QA scoring service.
pub struct RemoteScorer {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    permits: Permits,
}

impl RemoteScorer {
    pub fn new(config: RemoteConfig) -> Result<Self, ScorerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        Ok(Self {
            permits: Permits::new(config.max_in_flight),
            config,
            client,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn post_once<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, ScorerError> {
        let _permit = self.permits.acquire();
        let response = self
            .client
            .post(self.url(path))
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ScorerError::Timeout(self.config.timeout_ms)
                } else {
                    ScorerError::Transport(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(ScorerError::Status {
                status: status.as_u16(),
                body,
            });
        }
        response
            .json::<R>()
            .map_err(|e| ScorerError::Protocol(e.to_string()))
    }

    /// Requests are idempotent, so transport failures, timeouts and 5xx
    /// responses are retried with capped exponential backoff.
    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, ScorerError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body) {
                Ok(r) => return Ok(r),
                Err(e) => {
                    let retryable = match &e {
                        ScorerError::Transport(_) | ScorerError::Timeout(_) => true,
                        ScorerError::Status { status, .. } => *status >= 500,
                        _ => false,
                    };
                    if !retryable || attempt >= self.config.max_retries {
                        return Err(e);
                    }
                    let delay = self
                        .config
                        .backoff_ms
                        .saturating_mul(1 << attempt.min(16))
                        .min(self.config.max_backoff_ms);
                    log::warn!("scorer request to {path} failed ({e}); retrying in {delay} ms");
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }
}

/// Validate a wire response against the context it scored.
pub(crate) fn from_wire(response: ScoreResponse, context: &str) -> Result<QaScore, ScorerError> {
    if !response.probability.is_finite() || !(0.0..=1.0).contains(&response.probability) {
        return Err(ScorerError::Protocol(format!(
            "probability {} outside [0, 1]",
            response.probability
        )));
    }
    if response.answer.is_empty() {
        return Ok(QaScore {
            probability: response.probability,
            answer_text: String::new(),
            answer_span: None,
        });
    }
    if response.start < 0 || response.end < response.start {
        return Err(ScorerError::Protocol(format!(
            "invalid span {}..{}",
            response.start, response.end
        )));
    }
    let span = CharSpan::new(response.start as usize, response.end as usize);
    match slice_chars(context, span) {
        Some(slice) if slice == response.answer => Ok(QaScore {
            probability: response.probability,
            answer_text: response.answer,
            answer_span: Some(span),
        }),
        _ => Err(ScorerError::Protocol(format!(
            "span {}..{} does not slice the context to {:?}",
            span.start, span.end, response.answer
        ))),
    }
}

pub(crate) fn to_wire(score: &QaScore) -> ScoreResponse {
    let (start, end) = score
        .answer_span
        .map(|s| (s.start as i64, s.end as i64))
        .unwrap_or((0, 0));
    ScoreResponse {
        probability: score.probability,
        answer: score.answer_text.clone(),
        start,
        end,
    }
}

impl QaScorer for RemoteScorer {
    fn score(&self, question: &str, context: &str) -> Result<QaScore, ScorerError> {
        if question.trim().is_empty() {
            return Err(ScorerError::EmptyQuestion);
        }
        if context.trim().is_empty() {
            return Ok(QaScore::no_answer());
        }
        let response: ScoreResponse = self.post(
            "/score",
            &ScoreRequest {
                question: question.to_string(),
                context: context.to_string(),
            },
        )?;
        from_wire(response, context)
    }

    fn score_batch(&self, items: &[(String, String)]) -> Result<BatchScores, ScorerError> {
        if items.is_empty() {
            return Err(ScorerError::EmptyBatch);
        }
        let mut results: Vec<Option<Result<QaScore, ScorerError>>> = vec![None; items.len()];
        // Local verdicts; everything else goes over the wire.
        let mut remote: Vec<usize> = Vec::new();
        for (i, (q, c)) in items.iter().enumerate() {
            if q.trim().is_empty() {
                results[i] = Some(Err(ScorerError::EmptyQuestion));
            } else if c.trim().is_empty() {
                results[i] = Some(Ok(QaScore::no_answer()));
            } else {
                remote.push(i);
            }
        }
        let chunks: Vec<&[usize]> = remote.chunks(self.config.batch_size.max(1)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.max(1).min(chunks.len());
        let chunk_results: Vec<Vec<(usize, Result<QaScore, ScorerError>)>> =
            thread::scope(|scope| {
                let handles: Vec<_> = (0..workers)
                    .map(|_| {
                        scope.spawn(|| {
                            let mut out = Vec::new();
                            loop {
                                let c = next.fetch_add(1, Ordering::SeqCst);
                                let Some(chunk) = chunks.get(c) else { break };
                                let request = BatchRequest {
                                    items: chunk
                                        .iter()
                                        .map(|&i| ScoreRequest {
                                            question: items[i].0.clone(),
                                            context: items[i].1.clone(),
                                        })
                                        .collect(),
                                };
                                match self.post::<_, BatchResponse>("/score_batch", &request) {
                                    Ok(resp) if resp.results.len() == chunk.len() => {
                                        for (&i, r) in chunk.iter().zip(resp.results) {
                                            out.push((i, from_wire(r, &items[i].1)));
                                        }
                                    }
                                    Ok(resp) => {
                                        let e = ScorerError::Protocol(format!(
                                            "expected {} results, got {}",
                                            chunk.len(),
                                            resp.results.len()
                                        ));
                                        out.extend(chunk.iter().map(|&i| (i, Err(e.clone()))));
                                    }
                                    Err(e) => {
                                        out.extend(chunk.iter().map(|&i| (i, Err(e.clone()))))
                                    }
                                }
                            }
                            out
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("scorer worker panicked"))
                    .collect()
            });
        for (i, r) in chunk_results.into_iter().flatten() {
            results[i] = Some(r);
        }
        Ok(results
            .into_iter()
            .map(|r| r.expect("every item is scored exactly once"))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_validation() {
        let ok = ScoreResponse {
            probability: 0.3,
            answer: "cat".into(),
            start: 4,
            end: 7,
        };
        let s = from_wire(ok.clone(), "the cat sat").unwrap();
        assert_eq!(s.answer_span, Some(CharSpan::new(4, 7)));
        assert_eq!(to_wire(&s), ok);
        assert!(from_wire(
            ScoreResponse {
                probability: 1.5,
                ..ok.clone()
            },
            "the cat sat"
        )
        .is_err());
        assert!(from_wire(ScoreResponse { start: 0, ..ok }, "the cat sat").is_err());
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let scorer = RemoteScorer::new(RemoteConfig {
            endpoint: "http://127.0.0.1:9".into(),
            timeout_ms: 500,
            max_retries: 1,
            backoff_ms: 1,
            ..Default::default()
        })
        .unwrap();
        let err = scorer
            .score("who is there", "someone is there")
            .unwrap_err();
        assert!(
            matches!(err, ScorerError::Transport(_) | ScorerError::Timeout(_)),
            "{err:?}"
        );
        let batch = scorer
            .score_batch(&[("q one".into(), "ctx".into()), ("q two".into(), "".into())])
            .unwrap();
        assert!(batch[0].is_err());
        assert_eq!(batch[1].as_ref().unwrap().probability, 0.0);
    }
}
