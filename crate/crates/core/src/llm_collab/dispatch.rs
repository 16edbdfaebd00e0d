//! Confidence-gated query dispatch with a bounded number of requests in
//! flight.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

use super::client::{LlmClient, LlmRequest};
use super::store::{PseudoLabelRecord, PseudoLabelStore};
use super::{parse_llm_response, should_query};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryItem {
    pub window_id: String,
    pub prompt: String,
    pub local_label: String,
    pub local_confidence: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DispatchOutcome {
    /// Queries issued; one per gated window regardless of retries.
    pub queries: usize,
    /// Responses that parsed to a category.
    pub accepted: usize,
    /// Rejected answers and failed requests.
    pub rejected: usize,
    /// Final label per window: the accepted answer, else the local label.
    pub labels: HashMap<String, String>,
}

/// Queries every item with `local_confidence < threshold`, at most
/// `max_in_flight` at once. Each response is appended to `store` as it
/// arrives; failed or unparseable answers keep the local label.
pub fn dispatch_queries(
    items: &[QueryItem],
    client: &dyn LlmClient,
    categories: &[String],
    store: &PseudoLabelStore,
    threshold: f64,
    max_in_flight: usize,
) -> Result<DispatchOutcome> {
    if categories.is_empty() {
        return Err(Error::Empty("category list"));
    }
    let mut out = DispatchOutcome::default();
    let mut gated = Vec::new();
    for it in items {
        if should_query(it.local_confidence, threshold)? {
            gated.push(it);
        } else {
            out.labels.insert(it.window_id.clone(), it.local_label.clone());
        }
    }
    out.queries = gated.len();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<String>)>();
    let err: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..max_in_flight.max(1).min(gated.len()) {
            let tx = tx.clone();
            let (next, gated) = (&next, &gated);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(it) = gated.get(i) else { break };
                let req = LlmRequest {
                    window_id: it.window_id.clone(),
                    prompt: it.prompt.clone(),
                    categories: categories.to_vec(),
                };
                if tx.send((i, client.complete(&req))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, resp) in rx {
            let it = gated[i];
            let (response, label) = match resp {
                Ok(text) => {
                    let label = parse_llm_response(&text, categories).ok();
                    (text, label)
                }
                Err(e) => (format!("error: {e}"), None),
            };
            if label.is_some() {
                out.accepted += 1;
            } else {
                out.rejected += 1;
            }
            out.labels
                .insert(it.window_id.clone(), label.clone().unwrap_or_else(|| it.local_label.clone()));
            let record = PseudoLabelRecord {
                window_id: it.window_id.clone(),
                prompt: it.prompt.clone(),
                response,
                llm_label: label,
                local_label: it.local_label.clone(),
                local_confidence: it.local_confidence,
                timestamp: it.timestamp,
            };
            if let Err(e) = store.append(record) {
                err.lock().expect("lock").get_or_insert(e);
            }
        }
    });
    if let Some(e) = err.into_inner().expect("lock") {
        return Err(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_collab::MockLlm;
    use std::sync::atomic::AtomicUsize;

    struct Counting {
        inner: MockLlm,
        calls: AtomicUsize,
        live: AtomicUsize,
        peak: AtomicUsize,
    }

    impl LlmClient for Counting {
        fn complete(&self, r: &LlmRequest) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(2));
            self.live.fetch_sub(1, Ordering::SeqCst);
            self.inner.complete(r)
        }
    }

    #[test]
    fn gate_count_and_in_flight_bound() {
        let cats: Vec<String> = vec!["a".into(), "b".into()];
        let items: Vec<QueryItem> = (0..60)
            .map(|i| QueryItem {
                window_id: format!("w{i}"),
                prompt: String::new(),
                local_label: "a".into(),
                local_confidence: (i % 10) as f64 / 10.0,
                timestamp: i as f64,
            })
            .collect();
        let c = Counting {
            inner: MockLlm::random(1),
            calls: AtomicUsize::new(0),
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        };
        let store = PseudoLabelStore::in_memory();
        let out = dispatch_queries(&items, &c, &cats, &store, 0.5, 4).unwrap();
        assert_eq!(out.queries, 30);
        assert_eq!(c.calls.load(Ordering::SeqCst), 30);
        assert!(c.peak.load(Ordering::SeqCst) <= 4);
        assert_eq!(store.len(), 30);
        assert_eq!(out.labels.len(), 60);
        store.verify().unwrap();
    }
}
