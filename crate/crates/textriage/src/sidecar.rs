//! Client for the model bridge process.
//!
//! The bridge speaks newline-delimited JSON over stdio. Each request is
//! `{"id":N,"method":M,"params":{..}}`; each reply carries the same id and
//! either `result` or `error: {code, message}`. Images travel as base64
//! PNG, score maps as base64 little-endian `f32` rows with `shape: [H, W]`.
//!
//! This module also contains an echo-mode server built from the reference
//! backends, which answers the protocol without model weights.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde_json::{json, Value};
use textriage_core::{
    BBox, BackendError, DetectorBackend, ImageBuffer, KeywordScorer, NearestScaler, NliScore,
    NliScorer, RecognizerBackend, ScalerBackend, ScoreMaps, StencilDetector,
};

use crate::io::{decode_image, encode_png};

const NAME: &str = "sidecar";

/// Moves request lines to the bridge and reply lines back.
pub trait Transport: Send {
    fn send(&mut self, line: &str) -> std::io::Result<()>;
    /// Next reply line, or `None` when nothing arrived within `timeout`.
    fn recv(&mut self, timeout: Duration) -> std::io::Result<Option<String>>;
    /// Restarts a dead transport. Returns whether it is usable.
    fn revive(&mut self) -> bool {
        true
    }
}

/// A child process started through `sh -c`.
pub struct ChildTransport {
    command: String,
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Option<Receiver<String>>,
}

impl ChildTransport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            child: None,
            stdin: None,
            lines: None,
        }
    }

    fn spawn(&mut self) -> std::io::Result<()> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        self.stdin = child.stdin.take();
        self.lines = Some(rx);
        self.child = Some(child);
        Ok(())
    }

    fn alive(&mut self) -> bool {
        match self.child.as_mut() {
            Some(c) => matches!(c.try_wait(), Ok(None)),
            None => false,
        }
    }

    fn kill(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
        self.stdin = None;
        self.lines = None;
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        self.kill();
    }
}

fn broken(msg: &str) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::BrokenPipe, msg.to_string())
}

impl Transport for ChildTransport {
    fn send(&mut self, line: &str) -> std::io::Result<()> {
        if !self.alive() {
            return Err(broken("bridge process is not running"));
        }
        let stdin = self.stdin.as_mut().ok_or_else(|| broken("no stdin"))?;
        let sent = stdin
            .write_all(line.as_bytes())
            .and_then(|()| stdin.write_all(b"\n"))
            .and_then(|()| stdin.flush());
        if sent.is_err() {
            self.kill();
        }
        sent
    }

    fn recv(&mut self, timeout: Duration) -> std::io::Result<Option<String>> {
        let rx = self.lines.as_ref().ok_or_else(|| broken("no stdout"))?;
        match rx.recv_timeout(timeout) {
            Ok(line) => Ok(Some(line)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                // The process may close its output a moment before it exits.
                self.kill();
                Err(broken("bridge closed its output"))
            }
        }
    }

    fn revive(&mut self) -> bool {
        if self.alive() {
            return true;
        }
        self.kill();
        match self.spawn() {
            Ok(()) => true,
            Err(e) => {
                tracing::warn!(command = %self.command, error = %e, "cannot start bridge");
                false
            }
        }
    }
}

/// Request/response bookkeeping over a [`Transport`].
pub struct SidecarClient {
    transport: Box<dyn Transport>,
    next_id: u64,
    timeout: Duration,
}

impl SidecarClient {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        Self {
            transport,
            next_id: 1,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn spawn(command: &str) -> Self {
        Self::new(Box::new(ChildTransport::new(command)))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn shared(self) -> SharedSidecar {
        Arc::new(Mutex::new(self))
    }

    /// Sends one request and waits for the reply with the same id.
    pub fn call(&mut self, method: &str, params: Value) -> Result<Value, BackendError> {
        self.call_with_timeout(method, params, self.timeout)
    }

    fn call_with_timeout(
        &mut self,
        method: &str,
        params: Value,
        timeout: Duration,
    ) -> Result<Value, BackendError> {
        if !self.transport.revive() {
            return Err(BackendError::unavailable(
                NAME,
                "bridge process cannot be started",
            ));
        }
        let id = self.next_id;
        self.next_id += 1;
        let line = json!({"id": id, "method": method, "params": params}).to_string();
        self.transport
            .send(&line)
            .map_err(|e| BackendError::unavailable(NAME, e.to_string()))?;
        loop {
            let reply = self
                .transport
                .recv(timeout)
                .map_err(|e| BackendError::unavailable(NAME, e.to_string()))?
                .ok_or_else(|| {
                    BackendError::unavailable(
                        NAME,
                        format!("no reply to {method} within {timeout:?}"),
                    )
                })?;
            let reply: Value = serde_json::from_str(&reply)
                .map_err(|e| BackendError::protocol(NAME, format!("unparseable reply: {e}")))?;
            if reply.get("id").and_then(Value::as_u64) != Some(id) {
                tracing::debug!(%reply, "skipping reply for another request");
                continue;
            }
            if let Some(err) = reply.get("error") {
                let code = err.get("code").and_then(Value::as_i64).unwrap_or(0);
                let msg = err.get("message").and_then(Value::as_str).unwrap_or("");
                return Err(BackendError::failed(
                    NAME,
                    format!("{method}: error {code}: {msg}"),
                ));
            }
            return reply
                .get("result")
                .cloned()
                .ok_or_else(|| BackendError::protocol(NAME, "reply has neither result nor error"));
        }
    }

    /// Liveness: any well-formed reply (an error for the unknown `ping`
    /// method included) proves the bridge is serving.
    pub fn probe(&mut self) -> bool {
        match self.call_with_timeout("ping", json!({}), Duration::from_secs(2)) {
            Ok(_) => true,
            Err(e) => e.kind == textriage_core::BackendErrorKind::Failed,
        }
    }
}

pub type SharedSidecar = Arc<Mutex<SidecarClient>>;

fn lock(client: &SharedSidecar) -> std::sync::MutexGuard<'_, SidecarClient> {
    client.lock().unwrap_or_else(|p| p.into_inner())
}

pub fn image_to_b64(img: &ImageBuffer) -> Result<String, BackendError> {
    encode_png(img)
        .map(|png| B64.encode(png))
        .map_err(|e| BackendError::failed(NAME, e.to_string()))
}

pub fn image_from_b64(text: &str) -> Result<ImageBuffer, BackendError> {
    let bytes = B64
        .decode(text)
        .map_err(|e| BackendError::protocol(NAME, format!("image payload: {e}")))?;
    decode_image(&bytes).map_err(|e| BackendError::protocol(NAME, e.to_string()))
}

pub fn map_to_b64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    B64.encode(bytes)
}

pub fn map_from_b64(text: &str, len: usize) -> Result<Vec<f64>, BackendError> {
    let bytes = B64
        .decode(text)
        .map_err(|e| BackendError::protocol(NAME, format!("map payload: {e}")))?;
    if bytes.len() != len * 4 {
        return Err(BackendError::protocol(
            NAME,
            format!("map has {} bytes, shape needs {}", bytes.len(), len * 4),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, BackendError> {
    v.get(key)
        .ok_or_else(|| BackendError::protocol(NAME, format!("result lacks {key:?}")))
}

fn str_field<'a>(v: &'a Value, key: &str) -> Result<&'a str, BackendError> {
    field(v, key)?
        .as_str()
        .ok_or_else(|| BackendError::protocol(NAME, format!("{key:?} is not a string")))
}

fn shape(v: &Value) -> Result<(usize, usize), BackendError> {
    let s = field(v, "shape")?;
    match s
        .as_array()
        .map(|a| a.iter().map(Value::as_u64).collect::<Vec<_>>())
    {
        Some(dims) if dims.len() == 2 && dims.iter().all(Option::is_some) => {
            Ok((dims[0].unwrap() as usize, dims[1].unwrap() as usize))
        }
        _ => Err(BackendError::protocol(NAME, format!("bad shape {s}"))),
    }
}

/// 2x super-resolution through the bridge.
pub struct SidecarScaler(pub SharedSidecar);

impl ScalerBackend for SidecarScaler {
    fn name(&self) -> &str {
        NAME
    }

    fn scale(&self) -> usize {
        2
    }

    fn upscale(&mut self, tile: &ImageBuffer) -> Result<ImageBuffer, BackendError> {
        let result = lock(&self.0).call("upscale2x", json!({"image": image_to_b64(tile)?}))?;
        image_from_b64(str_field(&result, "image")?)
    }
}

pub struct SidecarDetector(pub SharedSidecar);

impl DetectorBackend for SidecarDetector {
    fn name(&self) -> &str {
        NAME
    }

    fn score(&mut self, img: &ImageBuffer) -> Result<ScoreMaps, BackendError> {
        let result = lock(&self.0).call("detect_maps", json!({"image": image_to_b64(img)?}))?;
        let (h, w) = shape(&result)?;
        if (w, h) != img.dims() {
            return Err(BackendError::protocol(
                NAME,
                format!(
                    "maps are {w}x{h} for a {}x{} image",
                    img.width(),
                    img.height()
                ),
            ));
        }
        let prob = map_from_b64(str_field(&result, "prob")?, w * h)?;
        let thresh = map_from_b64(str_field(&result, "thresh")?, w * h)?;
        let shrunk = result
            .get("shrunk")
            .and_then(Value::as_bool)
            .unwrap_or(true);
        ScoreMaps::new(w, h, prob, thresh, shrunk)
            .map_err(|e| BackendError::protocol(NAME, e.to_string()))
    }
}

pub struct SidecarRecognizer(pub SharedSidecar);

impl RecognizerBackend for SidecarRecognizer {
    fn name(&self) -> &str {
        NAME
    }

    fn recognize(&mut self, crop: &ImageBuffer, _region: &BBox) -> Result<String, BackendError> {
        let result = lock(&self.0).call("recognize", json!({"image": image_to_b64(crop)?}))?;
        Ok(str_field(&result, "text")?.to_string())
    }
}

pub struct SidecarScorer(pub SharedSidecar);

impl NliScorer for SidecarScorer {
    fn name(&self) -> &str {
        NAME
    }

    fn score(&mut self, premise: &str, hypothesis: &str) -> Result<NliScore, BackendError> {
        let mut all = self.score_all(premise, &[hypothesis.to_string()])?;
        Ok(all.remove(0))
    }

    fn score_all(
        &mut self,
        premise: &str,
        hypotheses: &[String],
    ) -> Result<Vec<NliScore>, BackendError> {
        let result = lock(&self.0).call(
            "nli_score",
            json!({"premise": premise, "hypotheses": hypotheses}),
        )?;
        let rows = field(&result, "logits")?
            .as_array()
            .ok_or_else(|| BackendError::protocol(NAME, "logits is not a list"))?;
        if rows.len() != hypotheses.len() {
            return Err(BackendError::protocol(
                NAME,
                format!(
                    "{} logit rows for {} hypotheses",
                    rows.len(),
                    hypotheses.len()
                ),
            ));
        }
        rows.iter()
            .map(|row| {
                let v: Vec<f64> = row
                    .as_array()
                    .map(|a| a.iter().filter_map(Value::as_f64).collect())
                    .unwrap_or_default();
                match v[..] {
                    [e, n, c] if v.iter().all(|x| x.is_finite()) => Ok(NliScore::new(e, n, c)),
                    _ => Err(BackendError::protocol(NAME, format!("bad logit row {row}"))),
                }
            })
            .collect()
    }
}

/// Summarization pass-through.
pub fn summarize(client: &SharedSidecar, text: &str) -> Result<String, BackendError> {
    let result = lock(client).call("summarize", json!({"text": text}))?;
    Ok(str_field(&result, "summary")?.to_string())
}

fn error_reply(id: i64, code: i64, message: impl Into<String>) -> Value {
    json!({"id": id, "error": {"code": code, "message": message.into()}})
}

/// Answers one request line in echo mode: pixel-replication upscale,
/// stencil maps (`shrunk: false`), keyword logits, empty recognition and
/// a truncating summary.
pub fn echo_reply(line: &str) -> Value {
    let Ok(req) = serde_json::from_str::<Value>(line) else {
        return error_reply(-1, 400, "malformed request line");
    };
    let Some(id) = req.get("id").and_then(Value::as_i64) else {
        return error_reply(-1, 400, "request lacks an integer id");
    };
    let method = req.get("method").and_then(Value::as_str).unwrap_or("");
    let params = req.get("params").cloned().unwrap_or(Value::Null);
    let image =
        || -> Result<ImageBuffer, BackendError> { image_from_b64(str_field(&params, "image")?) };
    let result: Result<Value, BackendError> = match method {
        "upscale2x" => image().and_then(|img| {
            let out = NearestScaler::new(2).apply(&img);
            Ok(json!({"image": image_to_b64(&out)?, "shape": [out.height(), out.width()]}))
        }),
        "detect_maps" => image().and_then(|img| {
            let gray = textriage_core::imaging::to_grayscale(&img).unwrap_or(img);
            let maps = StencilDetector::default().score(&gray)?;
            Ok(json!({
                "prob": map_to_b64(maps.prob()),
                "thresh": map_to_b64(maps.thresh()),
                "shape": [maps.height(), maps.width()],
                "shrunk": false,
            }))
        }),
        "nli_score" => (|| {
            let premise = str_field(&params, "premise")?;
            let hyps: Vec<String> = field(&params, "hypotheses")?
                .as_array()
                .map(|a| {
                    a.iter()
                        .filter_map(|h| h.as_str().map(String::from))
                        .collect()
                })
                .unwrap_or_default();
            let scores = KeywordScorer::default().score_all(premise, &hyps)?;
            let logits: Vec<[f64; 3]> = scores
                .iter()
                .map(|s| [s.entail, s.neutral, s.contradict])
                .collect();
            Ok(json!({"logits": logits}))
        })(),
        "recognize" => image().map(|_| json!({"text": ""})),
        "summarize" => str_field(&params, "text").map(|t| {
            let summary: String = t.chars().take(200).collect();
            json!({"summary": summary})
        }),
        other => {
            return error_reply(id, 404, format!("unknown method {other:?}"));
        }
    };
    match result {
        Ok(r) => json!({"id": id, "result": r}),
        Err(e) => error_reply(id, 422, e.message),
    }
}

/// Serves echo mode until `input` closes.
pub fn serve_echo(input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", echo_reply(&line))?;
        output.flush()?;
    }
    Ok(())
}
