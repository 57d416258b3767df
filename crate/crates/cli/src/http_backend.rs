//! Clients for out-of-process models speaking the JSON tile protocol.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use hct_core::backend::wire::{DetectResponse, RoiResponse, TileRequest};
use hct_core::backend::{BackendError, BackendInfo, DetectorBackend, RawDetection, TileClassifier};
use hct_core::pipeline::{synthetic_classifier, synthetic_detector, BackendSpec, PipelineConfig, PipelineError};
use hct_core::wsi::Tile;

pub const ROI_URL_ENV: &str = "HCT_ROI_URL";
pub const DETECTOR_URL_ENV: &str = "HCT_DETECTOR_URL";
const DEFAULT_TIMEOUT_MS: u64 = 30_000;

struct Endpoint {
    url: String,
    agent: ureq::Agent,
    timeout: Duration,
}

impl Endpoint {
    fn new(url: &str, timeout_ms: Option<u64>) -> Self {
        let timeout = Duration::from_millis(timeout_ms.unwrap_or(DEFAULT_TIMEOUT_MS));
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Endpoint { url: url.to_string(), agent, timeout }
    }

    /// TCP connect to the endpoint's host; no request is sent.
    fn probe(&self) -> Result<(), BackendError> {
        let unavailable = |m: String| BackendError::Unavailable(format!("{}: {m}", self.url));
        let parsed = url::Url::parse(&self.url).map_err(|e| unavailable(e.to_string()))?;
        let host = parsed.host_str().ok_or_else(|| unavailable("no host".into()))?;
        let port = parsed.port_or_known_default().ok_or_else(|| unavailable("no port".into()))?;
        let addrs: Vec<_> = (host, port).to_socket_addrs().map_err(|e| unavailable(e.to_string()))?.collect();
        let mut last = String::from("no address");
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, self.timeout.min(Duration::from_secs(5))) {
                Ok(_) => return Ok(()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(unavailable(last))
    }

    fn call<T: serde::de::DeserializeOwned>(&self, tile: &Tile) -> Result<T, BackendError> {
        let request = TileRequest::from_tile(tile);
        let mut response = self.agent.post(&self.url).send_json(&request).map_err(|e| match e {
            ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::Io(_) => {
                BackendError::Unavailable(format!("{}: {e}", self.url))
            }
            other => BackendError::Inference(format!("{}: {other}", self.url)),
        })?;
        response.body_mut().read_json().map_err(|e| BackendError::Inference(format!("{}: bad response: {e}", self.url)))
    }
}

pub struct HttpClassifier(Endpoint);

impl HttpClassifier {
    pub fn new(url: &str, timeout_ms: Option<u64>) -> Self {
        HttpClassifier(Endpoint::new(url, timeout_ms))
    }
}

impl TileClassifier for HttpClassifier {
    fn info(&self) -> BackendInfo {
        BackendInfo::new("http", self.0.url.clone())
    }

    fn check_available(&self) -> Result<(), BackendError> {
        self.0.probe()
    }

    fn score(&self, tile: &Tile) -> Result<f64, BackendError> {
        Ok(self.0.call::<RoiResponse>(tile)?.p_appropriate)
    }
}

pub struct HttpDetector(Endpoint);

impl HttpDetector {
    pub fn new(url: &str, timeout_ms: Option<u64>) -> Self {
        HttpDetector(Endpoint::new(url, timeout_ms))
    }
}

impl DetectorBackend for HttpDetector {
    fn info(&self) -> BackendInfo {
        BackendInfo::new("http", self.0.url.clone())
    }

    fn check_available(&self) -> Result<(), BackendError> {
        self.0.probe()
    }

    fn detect(&self, tile: &Tile) -> Result<Vec<RawDetection>, BackendError> {
        Ok(self.0.call::<DetectResponse>(tile)?.detections)
    }
}

/// Point a backend at a URL taken from the environment, if set.
pub fn apply_env_overrides(config: &mut PipelineConfig, lookup: impl Fn(&str) -> Option<String>) {
    let timeout = |spec: &BackendSpec| match spec {
        BackendSpec::Http { timeout_ms, .. } => *timeout_ms,
        _ => None,
    };
    if let Some(url) = lookup(ROI_URL_ENV).filter(|u| !u.is_empty()) {
        config.backends.roi = BackendSpec::Http { timeout_ms: timeout(&config.backends.roi), url };
    }
    if let Some(url) = lookup(DETECTOR_URL_ENV).filter(|u| !u.is_empty()) {
        config.backends.detector = BackendSpec::Http { timeout_ms: timeout(&config.backends.detector), url };
    }
}

pub fn build_backends(config: &PipelineConfig) -> Result<(Box<dyn TileClassifier>, Box<dyn DetectorBackend>), PipelineError> {
    let roi: Box<dyn TileClassifier> = match &config.backends.roi {
        BackendSpec::Http { url, timeout_ms } => Box::new(HttpClassifier::new(url, *timeout_ms)),
        spec => synthetic_classifier(spec)?.expect("non-http spec builds in-tree"),
    };
    let detector: Box<dyn DetectorBackend> = match &config.backends.detector {
        BackendSpec::Http { url, timeout_ms } => Box::new(HttpDetector::new(url, *timeout_ms)),
        spec => synthetic_detector(spec)?.expect("non-http spec builds in-tree"),
    };
    Ok((roi, detector))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_replace_specs() {
        let mut c = PipelineConfig::default();
        apply_env_overrides(&mut c, |k| (k == DETECTOR_URL_ENV).then(|| "http://127.0.0.1:9/detect".to_string()));
        assert_eq!(c.backends.detector, BackendSpec::Http { url: "http://127.0.0.1:9/detect".into(), timeout_ms: None });
        assert_eq!(c.backends.roi, PipelineConfig::default().backends.roi);
    }

    #[test]
    fn closed_port_is_unavailable() {
        // bind then drop to find a port nobody listens on
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let d = HttpDetector::new(&format!("http://127.0.0.1:{port}/detect"), Some(500));
        assert!(matches!(d.check_available(), Err(BackendError::Unavailable(_))));
    }
}
