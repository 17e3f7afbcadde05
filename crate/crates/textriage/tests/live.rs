mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use common::slow_factory;
use serde_json::json;
use textriage::backends::{BackendFactory, Backends};
use textriage::config::PipelineConfig;
use textriage::live::{process_stream, FrameResult, LiveSession};
use textriage::synth::fixtures;
use textriage_core::{BackendError, DetectorBackend, ImageBuffer, ScoreMaps, StencilDetector};

fn collect() -> (Arc<Mutex<Vec<FrameResult>>>, textriage::live::Sink) {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let sink_seen = seen.clone();
    (
        seen,
        Box::new(move |r: &FrameResult| sink_seen.lock().unwrap().push(r.clone())),
    )
}

fn count(r: &FrameResult) -> usize {
    r.outcome.as_ref().unwrap().instances.len()
}

#[test]
fn slow_source_loses_nothing() {
    let img = fixtures()[0].image.clone();
    let frames = (0..10).map(move |_| {
        std::thread::sleep(Duration::from_millis(80));
        img.clone()
    });
    let (seen, sink) = collect();
    let summary = process_stream(
        frames,
        PipelineConfig::default(),
        Arc::new(BackendFactory::new()),
        sink,
    )
    .unwrap();
    assert_eq!(
        (
            summary.counters.received,
            summary.counters.processed,
            summary.counters.dropped
        ),
        (10, 10, 0)
    );
    let seqs: Vec<u64> = seen.lock().unwrap().iter().map(|r| r.seq).collect();
    assert_eq!(seqs, (1..=10).collect::<Vec<_>>());
    assert!(summary.mean_latency_ms > 0.0);
}

#[test]
fn fast_source_drops_but_stays_ordered() {
    let img = fixtures()[1].image.clone();
    let frames = std::iter::repeat_n(img, 25);
    let (seen, sink) = collect();
    let summary = process_stream(
        frames,
        PipelineConfig::default(),
        slow_factory(Duration::from_millis(30)),
        sink,
    )
    .unwrap();
    let c = summary.counters;
    assert_eq!(c.received, 25);
    assert_eq!(c.received, c.processed + c.dropped);
    assert!(c.dropped > 0);
    let seqs: Vec<u64> = seen.lock().unwrap().iter().map(|r| r.seq).collect();
    assert_eq!(seqs.len() as u64, c.processed);
    assert!(seqs.windows(2).all(|w| w[0] < w[1]), "{seqs:?}");
    // The newest frame always survives.
    assert_eq!(*seqs.last().unwrap(), 25);
}

#[test]
fn config_changes_apply_from_the_next_frame() {
    let img = fixtures()[0].image.clone();
    let (seen, sink) = collect();
    let session = LiveSession::start(
        PipelineConfig::default(),
        slow_factory(Duration::from_millis(200)),
        Some(sink),
    )
    .unwrap();
    session.submit(img.clone()).unwrap();
    std::thread::sleep(Duration::from_millis(50));
    // Frame 1 is in flight; the change must not reach it.
    let cfg = session
        .update_config(&json!({"detect.global_thresh": 0.9}))
        .unwrap();
    assert_eq!(cfg.detect.global_thresh, 0.9);
    session.wait_idle();
    session.submit(img.clone()).unwrap();
    session.wait_idle();
    session
        .update_config(&json!({"detect": {"global_thresh": 0.25}}))
        .unwrap();
    session.submit(img).unwrap();
    session.close();
    let seen = seen.lock().unwrap();
    let counts: Vec<usize> = seen.iter().map(count).collect();
    assert_eq!(counts.len(), 3);
    assert!(counts[1] < counts[0], "{counts:?}");
    assert_eq!(counts[2], counts[0]);
    assert!(session
        .update_config(&json!({"detect.global_thresh": 2}))
        .is_err());
}

struct Picky {
    active: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

impl DetectorBackend for Picky {
    fn name(&self) -> &str {
        "picky"
    }
    fn score(&mut self, img: &ImageBuffer) -> Result<ScoreMaps, BackendError> {
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(5));
        self.active.fetch_sub(1, Ordering::SeqCst);
        if img.width() % 2 == 1 {
            return Err(BackendError::failed("picky", "odd width"));
        }
        StencilDetector::default().score(img)
    }
}

#[test]
fn failures_are_reported_and_frames_never_overlap() {
    let active = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (a, p) = (active.clone(), peak.clone());
    let plain = BackendFactory::new();
    let factory = Arc::new(BackendFactory::custom(move |sel, scale| {
        let b: Backends = plain.build(sel, scale)?;
        Ok(Backends {
            detector: Box::new(Picky {
                active: a.clone(),
                peak: p.clone(),
            }),
            ..b
        })
    }));
    let (seen, sink) = collect();
    let session = LiveSession::start(
        PipelineConfig {
            stage_order: vec![textriage::config::Stage::Grayscale],
            ..Default::default()
        },
        factory,
        Some(sink),
    )
    .unwrap();
    let good = ImageBuffer::filled(40, 20, 255).unwrap();
    let bad = ImageBuffer::filled(41, 20, 255).unwrap();
    for img in [&good, &bad, &good] {
        session.submit(img.clone()).unwrap();
        session.wait_idle();
    }
    for _ in 0..30 {
        session.submit(good.clone()).unwrap();
    }
    let summary = session.close();
    assert!(session.submit(good).is_err());
    assert_eq!(summary.counters.failed, 1);
    assert_eq!(
        summary.counters.received,
        summary.counters.processed + summary.counters.dropped
    );
    let seen = seen.lock().unwrap();
    assert!(seen[1]
        .outcome
        .as_ref()
        .unwrap_err()
        .contains("detect stage failed"));
    assert!(seen[2].outcome.is_ok());
    assert_eq!(peak.load(Ordering::SeqCst), 1);
}
