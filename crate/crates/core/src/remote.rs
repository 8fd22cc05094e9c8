//! HTTP adapters for an external vision-language model, plus a stub server
//! used by contract tests.
//!
//! Estimation: `POST {endpoint}/estimate`
//!
//! ```json
//! {"goal": "find a chair",
//!  "snapshot": {"objects": [{"id": 3, "category": "chair", "attributes": ["red"]}],
//!               "unknown_ray_fraction": 0.4,
//!               "viewpoint": {"x": 1.1, "y": 2.3, "heading": 0.0}},
//!  "dimensions": ["semantic_richness", "explorability", "goal_relevance"]}
//! ```
//!
//! answered by `{"scores": {"semantic_richness": .., "explorability": .., "goal_relevance": ..},
//! "aggregate": ..}` with every value in `[0, 1]`.
//!
//! Validation: `POST {endpoint}/validate` with `{"goal", "snapshot", "object"}`,
//! answered by `{"verdict": "CONFIRM" | "REJECT", "confidence": .., "rationale": ".."}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::estimator::{
    aggregate, EstimateRequest, EstimateSource, EstimatorError, PotentialEstimate,
    PotentialEstimator, PotentialVector,
};
use crate::scene::{ObjectInstance, ResolvedGoal};
use crate::sim::Pose;

pub const ENV_ENDPOINT: &str = "SCOPE_VLM_ENDPOINT";
pub const ENV_TOKEN: &str = "SCOPE_VLM_TOKEN";
pub const DIMENSIONS: [&str; 3] = ["semantic_richness", "explorability", "goal_relevance"];
/// A remote aggregate further than this from the component mean is replaced.
pub const AGGREGATE_TOLERANCE: f64 = 0.2;

/// What to do when the remote model fails or answers out of schema.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Fail the current subtask.
    FailEpisode,
    /// Substitute a neutral answer and log a warning.
    #[default]
    Neutral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base URL; `/estimate` and `/validate` are appended.
    pub endpoint: String,
    #[serde(default, skip_serializing)]
    pub token: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub fallback: Fallback,
}

fn default_timeout_ms() -> u64 {
    10_000
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    4
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: None,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            max_in_flight: default_in_flight(),
            fallback: Fallback::default(),
        }
    }

    /// Reads `SCOPE_VLM_ENDPOINT` / `SCOPE_VLM_TOKEN`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENV_ENDPOINT).ok()?;
        let mut cfg = Self::new(endpoint);
        cfg.token = std::env::var(ENV_TOKEN).ok();
        Some(cfg)
    }

    /// Fills a missing token from the environment.
    pub fn with_env_token(mut self) -> Self {
        if self.token.is_none() {
            self.token = std::env::var(ENV_TOKEN).ok();
        }
        self
    }
}

struct HttpClient {
    agent: ureq::Agent,
    cfg: RemoteConfig,
}

impl HttpClient {
    fn new(cfg: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, cfg }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.endpoint.trim_end_matches('/'), path)
    }

    fn post_once(&self, url: &str, body: &str) -> Result<Value, (EstimatorError, bool)> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.cfg.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let resp = req
            .send(body.as_bytes())
            .map_err(|e| (EstimatorError::RemoteUnavailable(e.to_string()), true))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let retryable = status == 429 || status >= 500;
            return Err((
                EstimatorError::RemoteUnavailable(format!("HTTP status {status}")),
                retryable,
            ));
        }
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| (EstimatorError::RemoteUnavailable(e.to_string()), true))?;
        serde_json::from_str(&text).map_err(|e| {
            (
                EstimatorError::MalformedResponse(format!("invalid JSON: {e}")),
                false,
            )
        })
    }

    /// POSTs with retries on transport errors, 429 and 5xx.
    fn post(&self, path: &str, body: &Value) -> Result<Value, EstimatorError> {
        let url = self.url(path);
        let body = body.to_string();
        let mut attempt = 0;
        loop {
            match self.post_once(&url, &body) {
                Ok(v) => return Ok(v),
                Err((err, retryable)) => {
                    if !retryable || attempt >= self.cfg.retries {
                        return Err(err);
                    }
                    log::debug!("retrying {url} after: {err}");
                    std::thread::sleep(Duration::from_millis(25 << attempt.min(5)));
                    attempt += 1;
                }
            }
        }
    }
}

fn object_json(o: &ObjectInstance) -> Value {
    json!({"id": o.id, "category": o.category, "attributes": o.attributes})
}

fn snapshot_json(objects: &[ObjectInstance], viewpoint: &Pose, unknown_ray_fraction: Option<f64>) -> Value {
    let mut v = json!({
        "objects": objects.iter().map(object_json).collect::<Vec<_>>(),
        "viewpoint": {"x": viewpoint.position.x, "y": viewpoint.position.y, "heading": viewpoint.heading},
    });
    if let Some(f) = unknown_ray_fraction {
        v["unknown_ray_fraction"] = json!(f);
    }
    v
}

pub fn estimate_body(goal: &ResolvedGoal, req: &EstimateRequest<'_>) -> Value {
    json!({
        "goal": goal.render(),
        "snapshot": snapshot_json(&req.snapshot.visible_objects, &req.snapshot.viewpoint, Some(req.snapshot.unknown_ray_fraction)),
        "dimensions": DIMENSIONS,
    })
}

fn unit_score(v: &Value, path: &str) -> Result<f64, EstimatorError> {
    let x = v
        .as_f64()
        .ok_or_else(|| EstimatorError::MalformedResponse(format!("`{path}` missing or not a number")))?;
    if !(0.0..=1.0).contains(&x) {
        return Err(EstimatorError::MalformedResponse(format!(
            "`{path}` = {x} outside [0, 1]"
        )));
    }
    Ok(x)
}

/// Validates a remote estimation response. An aggregate that strays more than
/// [`AGGREGATE_TOLERANCE`] from the component mean is replaced by the mean.
pub fn parse_estimate(v: &Value) -> Result<PotentialEstimate, EstimatorError> {
    let scores = v
        .get("scores")
        .filter(|s| s.is_object())
        .ok_or_else(|| EstimatorError::MalformedResponse("`scores` object missing".into()))?;
    let get = |k: &str| unit_score(&scores[k], &format!("scores.{k}"));
    let vector = PotentialVector::new(get(DIMENSIONS[0])?, get(DIMENSIONS[1])?, get(DIMENSIONS[2])?);
    let remote_agg = unit_score(&v["aggregate"], "aggregate")?;
    let mean = aggregate(&vector);
    let agg = if (remote_agg - mean).abs() > AGGREGATE_TOLERANCE {
        log::warn!("remote aggregate {remote_agg:.3} disagrees with component mean {mean:.3}; using the mean");
        mean
    } else {
        remote_agg
    };
    Ok(PotentialEstimate {
        vector,
        aggregate: agg,
        source: EstimateSource::Remote,
    })
}

pub struct RemoteEstimator {
    client: HttpClient,
}

impl RemoteEstimator {
    pub fn new(cfg: RemoteConfig) -> Self {
        Self {
            client: HttpClient::new(cfg),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.client.cfg
    }

    fn send(&self, body: &Value) -> Result<PotentialEstimate, EstimatorError> {
        parse_estimate(&self.client.post("estimate", body)?)
    }
}

impl PotentialEstimator for RemoteEstimator {
    fn estimate(&self, req: &EstimateRequest<'_>) -> Result<PotentialEstimate, EstimatorError> {
        self.send(&estimate_body(req.goal, req))
    }

    /// Runs at most `max_in_flight` requests concurrently; output order
    /// matches input order regardless of completion order.
    fn estimate_batch(
        &self,
        reqs: &[EstimateRequest<'_>],
    ) -> Vec<Result<PotentialEstimate, EstimatorError>> {
        let bodies: Vec<Value> = reqs.iter().map(|r| estimate_body(r.goal, r)).collect();
        let results: Vec<Mutex<Option<Result<PotentialEstimate, EstimatorError>>>> =
            bodies.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.client.cfg.max_in_flight.max(1).min(bodies.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= bodies.len() {
                        break;
                    }
                    let r = self.send(&bodies[i]);
                    *results[i].lock().unwrap() = Some(r);
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every slot filled"))
            .collect()
    }
}

/// Raw verdict returned by a remote validator.
#[derive(Clone, Debug, PartialEq)]
pub struct RemoteVerdict {
    pub confirm: bool,
    pub confidence: f64,
    pub rationale: String,
}

pub fn parse_verdict(v: &Value) -> Result<RemoteVerdict, EstimatorError> {
    let confirm = match v.get("verdict").and_then(Value::as_str) {
        Some("CONFIRM") => true,
        Some("REJECT") => false,
        Some(other) => {
            return Err(EstimatorError::MalformedResponse(format!(
                "unknown verdict `{other}`"
            )))
        }
        None => return Err(EstimatorError::MalformedResponse("`verdict` missing".into())),
    };
    let confidence = unit_score(&v["confidence"], "confidence")?;
    let rationale = match v.get("rationale") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(EstimatorError::MalformedResponse("`rationale` not a string".into())),
    };
    Ok(RemoteVerdict {
        confirm,
        confidence,
        rationale,
    })
}

pub struct RemoteValidatorClient {
    client: HttpClient,
}

impl RemoteValidatorClient {
    pub fn new(cfg: RemoteConfig) -> Self {
        Self {
            client: HttpClient::new(cfg),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.client.cfg
    }

    pub fn validate(
        &self,
        goal: &ResolvedGoal,
        objects: &[ObjectInstance],
        viewpoint: &Pose,
        object: &ObjectInstance,
    ) -> Result<RemoteVerdict, EstimatorError> {
        let body = json!({
            "goal": goal.render(),
            "snapshot": snapshot_json(objects, viewpoint, None),
            "object": object_json(object),
        });
        parse_verdict(&self.client.post("validate", &body)?)
    }
}

/// Minimal HTTP/1.1 stand-in for a remote model.
pub mod stub {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{SocketAddr, TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;
    use std::time::Duration;

    use serde_json::{json, Value};

    /// How the stub answers.
    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum StubMode {
        /// Schema-conforming answers derived from the request.
        Valid,
        /// Aggregate far from the component mean.
        DisagreeingAggregate,
        /// Body is not JSON.
        Malformed,
        /// A score outside `[0, 1]`.
        OutOfRange,
        /// A required field missing.
        MissingField,
        /// HTTP 503 on every request.
        ServerError,
        /// HTTP 503 for the first `n` requests, then `Valid`.
        FlakyThenValid(usize),
        /// Sleeps before answering validly.
        Slow(u64),
    }

    pub struct StubServer {
        addr: SocketAddr,
        shutdown: Arc<AtomicBool>,
        requests: Arc<AtomicUsize>,
        in_flight: Arc<AtomicUsize>,
        peak_in_flight: Arc<AtomicUsize>,
        last_authorization: Arc<Mutex<Option<String>>>,
        handle: Option<JoinHandle<()>>,
    }

    impl StubServer {
        pub fn start(mode: StubMode) -> std::io::Result<Self> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let shutdown = Arc::new(AtomicBool::new(false));
            let requests = Arc::new(AtomicUsize::new(0));
            let in_flight = Arc::new(AtomicUsize::new(0));
            let peak_in_flight = Arc::new(AtomicUsize::new(0));
            let last_authorization = Arc::new(Mutex::new(None));
            let handle = {
                let shutdown = shutdown.clone();
                let requests = requests.clone();
                let in_flight = in_flight.clone();
                let peak = peak_in_flight.clone();
                let auth = last_authorization.clone();
                std::thread::spawn(move || {
                    for stream in listener.incoming() {
                        if shutdown.load(Ordering::SeqCst) {
                            break;
                        }
                        let Ok(stream) = stream else { continue };
                        let n = requests.fetch_add(1, Ordering::SeqCst);
                        let (in_flight, peak, auth) = (in_flight.clone(), peak.clone(), auth.clone());
                        std::thread::spawn(move || {
                            let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                            peak.fetch_max(now, Ordering::SeqCst);
                            let _ = serve(stream, mode, n, &auth);
                            in_flight.fetch_sub(1, Ordering::SeqCst);
                        });
                    }
                })
            };
            Ok(Self {
                addr,
                shutdown,
                requests,
                in_flight,
                peak_in_flight,
                last_authorization,
                handle: Some(handle),
            })
        }

        pub fn url(&self) -> String {
            format!("http://{}", self.addr)
        }

        pub fn request_count(&self) -> usize {
            self.requests.load(Ordering::SeqCst)
        }

        pub fn peak_in_flight(&self) -> usize {
            self.peak_in_flight.load(Ordering::SeqCst)
        }

        pub fn last_authorization(&self) -> Option<String> {
            self.last_authorization.lock().unwrap().clone()
        }
    }

    impl Drop for StubServer {
        fn drop(&mut self) {
            self.shutdown.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
            let _ = self.in_flight.load(Ordering::SeqCst);
        }
    }

    fn serve(
        stream: TcpStream,
        mode: StubMode,
        index: usize,
        auth: &Mutex<Option<String>>,
    ) -> std::io::Result<()> {
        stream.set_read_timeout(Some(Duration::from_secs(5)))?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut request_line = String::new();
        reader.read_line(&mut request_line)?;
        let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
        let mut content_length = 0usize;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
                break;
            }
            if let Some((name, value)) = line.split_once(':') {
                let value = value.trim();
                match name.trim().to_ascii_lowercase().as_str() {
                    "content-length" => content_length = value.parse().unwrap_or(0),
                    "authorization" => *auth.lock().unwrap() = Some(value.to_string()),
                    _ => {}
                }
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body)?;
        let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);

        let (status, payload) = respond(mode, index, &path, &request);
        let reason = if status == 200 { "OK" } else { "Service Unavailable" };
        let mut out = stream;
        write!(
            out,
            "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
            payload.len()
        )?;
        out.flush()
    }

    fn respond(mode: StubMode, index: usize, path: &str, req: &Value) -> (u16, String) {
        match mode {
            StubMode::ServerError => return (503, "{}".into()),
            StubMode::FlakyThenValid(n) if index < n => return (503, "{}".into()),
            StubMode::Malformed => return (200, "this is not json {".into()),
            StubMode::Slow(ms) => std::thread::sleep(Duration::from_millis(ms)),
            _ => {}
        }
        let goal = req["goal"].as_str().unwrap_or("").to_string();
        let mentions = |o: &Value| o["category"].as_str().is_some_and(|c| goal.contains(c));
        let body = if path.ends_with("/validate") {
            let confirm = mentions(&req["object"]);
            let mut v = json!({
                "verdict": if confirm { "CONFIRM" } else { "REJECT" },
                "confidence": if confirm { 0.9 } else { 0.8 },
                "rationale": "stub",
            });
            match mode {
                StubMode::OutOfRange => v["confidence"] = json!(1.7),
                StubMode::MissingField => {
                    v.as_object_mut().unwrap().remove("verdict");
                }
                _ => {}
            }
            v
        } else {
            let objects = req["snapshot"]["objects"].as_array().cloned().unwrap_or_default();
            let sem = (objects.len() as f64 / 6.0).min(1.0);
            let explore = req["snapshot"]["unknown_ray_fraction"].as_f64().unwrap_or(0.0).clamp(0.0, 1.0);
            let goal_rel = if objects.iter().any(mentions) { 1.0 } else { 0.1 };
            let mean = (sem + explore + goal_rel) / 3.0;
            let mut v = json!({
                "scores": {"semantic_richness": sem, "explorability": explore, "goal_relevance": goal_rel},
                "aggregate": mean,
            });
            match mode {
                StubMode::DisagreeingAggregate => v["aggregate"] = json!(if mean > 0.5 { 0.0 } else { 1.0 }),
                StubMode::OutOfRange => v["scores"]["explorability"] = json!(-0.3),
                StubMode::MissingField => {
                    v["scores"].as_object_mut().unwrap().remove("goal_relevance");
                }
                _ => {}
            }
            v
        };
        (200, body.to_string())
    }
}
