//! Minimal JSON-over-HTTP client shared by the remote embedding and LLM backends.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    count: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut count = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *count >= self.limit {
            count = self.freed.wait(count).unwrap_or_else(|e| e.into_inner());
        }
        *count += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut count = self.0.count.lock().unwrap_or_else(|e| e.into_inner());
        *count -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub(crate) struct JsonClient {
    base_url: String,
    agent: ureq::Agent,
    retries: u32,
    in_flight: InFlight,
}

impl JsonClient {
    pub(crate) fn new(base_url: &str, timeout_ms: u64, max_in_flight: usize, retries: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
            retries,
            in_flight: InFlight { limit: max_in_flight.max(1), count: Mutex::new(0), freed: Condvar::new() },
        }
    }

    pub(crate) fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp> {
        let endpoint = format!("{}{}", self.base_url, path);
        let _permit = self.in_flight.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let (message, retryable) = match self.agent.post(&endpoint).send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp.body_mut().read_json::<Resp>().map_err(|e| Error::Transport {
                            endpoint: endpoint.clone(),
                            attempts,
                            retryable: false,
                            message: format!("malformed response: {e}"),
                        });
                    }
                    (format!("HTTP status {status}"), status >= 500)
                }
                Err(e) => (e.to_string(), true),
            };
            if !retryable || attempts > self.retries {
                return Err(Error::Transport { endpoint, attempts, retryable, message });
            }
            std::thread::sleep(Duration::from_millis(25 * u64::from(attempts)));
        }
    }
}
