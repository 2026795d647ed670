use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

use super::wire::{WireRequest, WireResponse};
use super::{RefineRequest, Refiner};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq)]
pub struct RemoteConfig {
    /// Server base URL; `/v1/refine` is appended unless already present.
    pub url: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(url: &str) -> Self {
        RemoteConfig {
            url: url.to_string(),
            timeout: DEFAULT_TIMEOUT,
            max_in_flight: 4,
        }
    }

    pub fn endpoint(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/v1/refine") {
            base.to_string()
        } else {
            format!("{base}/v1/refine")
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Client for an external model served over the JSON wire format.
pub struct RemoteRefiner {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    slots: Semaphore,
}

impl RemoteRefiner {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.max_in_flight == 0 {
            return Err(Error::InvalidArgument("max_in_flight must be >= 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        Ok(RemoteRefiner {
            slots: Semaphore {
                free: Mutex::new(config.max_in_flight),
                cv: Condvar::new(),
            },
            config,
            client,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn classify(&self, e: reqwest::Error) -> Error {
        if e.is_timeout() {
            Error::Timeout(self.config.timeout)
        } else if e.is_connect() {
            Error::BackendUnavailable(format!("{}: {e}", self.config.endpoint()))
        } else {
            Error::Protocol(e.to_string())
        }
    }
}

impl Refiner for RemoteRefiner {
    fn name(&self) -> String {
        format!("remote:{}", self.config.url)
    }

    fn refine_raw(&self, request: &RefineRequest) -> Result<BinaryMask> {
        let _permit = self.slots.acquire();
        let body = WireRequest::encode(request);
        let response = self
            .client
            .post(self.config.endpoint())
            .json(&body)
            .send()
            .map_err(|e| self.classify(e))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(Error::Protocol(format!("status {status}: {text}")));
        }
        let text = response.text().map_err(|e| self.classify(e))?;
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("bad response body: {e}")))?;
        parsed.decode(request.dims())
    }
}

/// One-shot call; builds a client per call.
pub fn remote_refine(request: &RefineRequest, endpoint: &str) -> Result<BinaryMask> {
    RemoteRefiner::new(RemoteConfig::new(endpoint))?.refine(request)
}
