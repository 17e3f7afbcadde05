//! Live mode: frames arrive at camera pace, one worker processes them, and
//! a single-slot queue keeps only the newest waiting frame.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Instant;

use serde::Serialize;
use textriage_core::ImageBuffer;

use crate::backends::{BackendFactory, Backends};
use crate::config::{BackendSelection, ConfigError, PipelineConfig};
use crate::pipeline::{process_image, DocumentResult, RunOptions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub received: u64,
    pub processed: u64,
    pub dropped: u64,
    /// Processed frames whose pipeline run failed.
    pub failed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Submitted {
    pub seq: u64,
    /// `false` when this frame replaced one that was still waiting.
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct FrameResult {
    pub seq: u64,
    pub outcome: Result<DocumentResult, String>,
    /// From submission to result.
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SessionSummary {
    #[serde(flatten)]
    pub counters: Counters,
    pub mean_latency_ms: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("session is closed")]
pub struct SessionClosed;

struct Frame {
    seq: u64,
    image: ImageBuffer,
    at: Instant,
}

#[derive(Default)]
struct State {
    pending: Option<Frame>,
    closed: bool,
    next_seq: u64,
    counters: Counters,
    latency_sum: f64,
    last: Option<FrameResult>,
}

struct Shared {
    state: Mutex<State>,
    wake: Condvar,
    config: Mutex<PipelineConfig>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

pub type Sink = Box<dyn FnMut(&FrameResult) + Send>;

pub struct LiveSession {
    shared: Arc<Shared>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl LiveSession {
    /// Starts the worker. `sink` sees every result in sequence order.
    pub fn start(
        config: PipelineConfig,
        factory: Arc<BackendFactory>,
        mut sink: Option<Sink>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        let shared = Arc::new(Shared {
            state: Mutex::new(State::default()),
            wake: Condvar::new(),
            config: Mutex::new(config),
        });
        let worker_shared = shared.clone();
        let worker = std::thread::spawn(move || {
            let mut built: Option<(BackendSelection, usize, Backends)> = None;
            while let Some(frame) = next_frame(&worker_shared) {
                let cfg = lock(&worker_shared.config).clone();
                let outcome = run_frame(&frame, &cfg, &factory, &mut built);
                let result = FrameResult {
                    seq: frame.seq,
                    outcome,
                    latency_ms: frame.at.elapsed().as_secs_f64() * 1e3,
                };
                if let Some(sink) = sink.as_mut() {
                    sink(&result);
                }
                let mut st = lock(&worker_shared.state);
                st.counters.processed += 1;
                if result.outcome.is_err() {
                    st.counters.failed += 1;
                }
                st.latency_sum += result.latency_ms;
                st.last = Some(result);
                worker_shared.wake.notify_all();
            }
        });
        Ok(Self {
            shared,
            worker: Mutex::new(Some(worker)),
        })
    }

    /// Queues a frame, replacing any frame that is still waiting.
    pub fn submit(&self, image: ImageBuffer) -> Result<Submitted, SessionClosed> {
        let mut st = lock(&self.shared.state);
        if st.closed {
            return Err(SessionClosed);
        }
        st.next_seq += 1;
        let seq = st.next_seq;
        st.counters.received += 1;
        let replaced = st
            .pending
            .replace(Frame {
                seq,
                image,
                at: Instant::now(),
            })
            .is_some();
        if replaced {
            st.counters.dropped += 1;
        }
        self.shared.wake.notify_all();
        Ok(Submitted {
            seq,
            accepted: !replaced,
        })
    }

    pub fn config(&self) -> PipelineConfig {
        lock(&self.shared.config).clone()
    }

    /// Applies dotted-key overrides; takes effect from the next frame the
    /// worker picks up.
    pub fn update_config(
        &self,
        overrides: &serde_json::Value,
    ) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = lock(&self.shared.config);
        cfg.apply_json(overrides)?;
        Ok(cfg.clone())
    }

    pub fn counters(&self) -> Counters {
        lock(&self.shared.state).counters
    }

    pub fn is_closed(&self) -> bool {
        lock(&self.shared.state).closed
    }

    pub fn last_result(&self) -> Option<FrameResult> {
        lock(&self.shared.state).last.clone()
    }

    pub fn summary(&self) -> SessionSummary {
        let st = lock(&self.shared.state);
        summarize(&st)
    }

    /// Blocks until nothing is queued or processing.
    pub fn wait_idle(&self) {
        let mut st = lock(&self.shared.state);
        while st.pending.is_some()
            || st.counters.processed + st.counters.dropped < st.counters.received
        {
            st = self.shared.wake.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    /// Stops accepting frames, finishes the queued one and joins the worker.
    pub fn close(&self) -> SessionSummary {
        {
            let mut st = lock(&self.shared.state);
            st.closed = true;
            self.shared.wake.notify_all();
        }
        if let Some(w) = lock(&self.worker).take() {
            let _ = w.join();
        }
        self.summary()
    }
}

impl Drop for LiveSession {
    fn drop(&mut self) {
        self.close();
    }
}

fn summarize(st: &State) -> SessionSummary {
    let n = st.counters.processed;
    SessionSummary {
        counters: st.counters,
        mean_latency_ms: if n == 0 {
            0.0
        } else {
            st.latency_sum / n as f64
        },
    }
}

fn next_frame(shared: &Shared) -> Option<Frame> {
    let mut st = lock(&shared.state);
    loop {
        if let Some(f) = st.pending.take() {
            return Some(f);
        }
        if st.closed {
            return None;
        }
        st = shared.wake.wait(st).unwrap_or_else(|p| p.into_inner());
    }
}

fn run_frame(
    frame: &Frame,
    cfg: &PipelineConfig,
    factory: &BackendFactory,
    built: &mut Option<(BackendSelection, usize, Backends)>,
) -> Result<DocumentResult, String> {
    let scale = cfg.tiles.scale;
    let stale = built
        .as_ref()
        .is_none_or(|(sel, s, _)| *sel != cfg.backends || *s != scale);
    if stale {
        let b = factory
            .build(&cfg.backends, scale)
            .map_err(|e| e.to_string())?;
        *built = Some((cfg.backends.clone(), scale, b));
    }
    let backends = &mut built.as_mut().expect("backends were just built").2;
    let source = format!("frame-{}", frame.seq);
    process_image(&frame.image, &source, cfg, backends, RunOptions::FULL).map_err(|e| {
        tracing::warn!(seq = frame.seq, error = %e, "frame failed");
        e.to_string()
    })
}

/// Feeds every frame from `frames` into a live session at the pace the
/// iterator yields them, then drains and returns the summary.
pub fn process_stream(
    frames: impl IntoIterator<Item = ImageBuffer>,
    config: PipelineConfig,
    factory: Arc<BackendFactory>,
    sink: Sink,
) -> Result<SessionSummary, ConfigError> {
    let session = LiveSession::start(config, factory, Some(sink))?;
    for frame in frames {
        session
            .submit(frame)
            .expect("session stays open while the source runs");
    }
    Ok(session.close())
}
