//! Runs every acceptance criterion and prints one PASS/FAIL line each.
// NaN has to fail the checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use common::{fixture_bytes, fixture_path, slow_factory, validator};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use textriage::backends::BackendFactory;
use textriage::config::PipelineConfig;
use textriage::eval::{run_eval, DatasetManifest, ManifestEntry};
use textriage::io::save_image;
use textriage::live::{process_stream, FrameResult, LiveSession};
use textriage::pipeline::{process_image, RunOptions};
use textriage::service::{router, AppState};
use textriage::synth::{fixtures, generate_corpus, render, DEFAULT_SEED};
use textriage_core::classify::{zero_shot_classify, DEFAULT_HYPOTHESIS_TEMPLATE};
use textriage_core::detect::{extract_instances, hard_mask, soft_binarize};
use textriage_core::eval::polygon_iou;
use textriage_core::imaging::{clahe, upscale_tiled};
use textriage_core::{
    BackendError, ClaheConfig, DetectConfig, ImageBuffer, KeywordScorer, LabelSet, NearestScaler,
    NliScore, NliScorer, Point, ScoreMaps, TileConfig,
};
use tower::ServiceExt;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn backends(cfg: &PipelineConfig) -> textriage::backends::Backends {
    BackendFactory::new()
        .build(&cfg.backends, cfg.tiles.scale)
        .unwrap()
}

fn synthetic_corpus() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let mut manifest = DatasetManifest::default();
    for (i, doc) in generate_corpus(DEFAULT_SEED, 50).iter().enumerate() {
        let name = format!("doc_{i:03}.png");
        save_image(&doc.image, &dir.path().join(&name)).map_err(|e| e.to_string())?;
        manifest.images.push(ManifestEntry {
            path: name.into(),
            gt_polygons: doc.gt_polygons(),
            gt_label: None,
        });
    }
    let cfg = PipelineConfig::default();
    let r = run_eval(&manifest, dir.path(), &cfg, &mut backends(&cfg), 0.5)
        .map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    ensure!(
        r.images.len() == 50 && r.failures == 0,
        "{} images, {} failures",
        r.images.len(),
        r.failures
    );
    ensure!(
        r.detection_rate >= 95.0,
        "detection_rate {:.2}",
        r.detection_rate
    );
    ensure!(r.precision >= 90.0, "precision {:.2}", r.precision);
    ensure!(secs < 60.0, "took {secs:.1}s");
    println!(
        "      detection_rate {:.2} precision {:.2} boxes {} in {secs:.1}s",
        r.detection_rate,
        r.precision,
        r.tp + r.fn_
    );
    Ok(())
}

/// round(255 * cdf(v) / N) over the whole image.
fn global_he(img: &ImageBuffer) -> Vec<u8> {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for v in 0..256 {
        acc += hist[v];
        cdf[v] = acc;
    }
    let n = img.data().len() as f64;
    img.data()
        .iter()
        .map(|&v| (255.0 * cdf[v as usize] as f64 / n).round() as u8)
        .collect()
}

fn random_gray(rng: &mut ChaCha8Rng, max: usize) -> ImageBuffer {
    let (w, h) = (rng.random_range(1..=max), rng.random_range(1..=max));
    // mix of smooth ramps and noise so histograms are not uniform
    let a = rng.random_range(0..4u32);
    let data = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            match a {
                0 => rng.random(),
                1 => ((x * 255) / w.max(1)) as u8,
                2 => ((x + 3 * y) % 97) as u8 + 80,
                _ => (rng.random_range(0..16u8)) * 4 + if y < h / 2 { 0 } else { 150 },
            }
        })
        .collect();
    ImageBuffer::gray(w, h, data).unwrap()
}

fn clahe_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = ClaheConfig {
        clip_factor: f64::INFINITY,
        grid_cols: 1,
        grid_rows: 1,
    };
    for n in 0..20 {
        let img = random_gray(&mut rng, 256);
        let out = clahe(&img, &cfg).map_err(|e| e.to_string())?;
        let oracle = global_he(&img);
        let worst = out
            .data()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (*a as i16 - *b as i16).abs())
            .max()
            .unwrap();
        ensure!(
            worst <= 1,
            "image {n} ({}x{}) differs by {worst}",
            img.width(),
            img.height()
        );
    }
    Ok(())
}

fn tiling_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = TileConfig::default();
    let mut small = 0;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..=200), rng.random_range(1..=200));
        let data = (0..w * h).map(|_| rng.random()).collect();
        let img = ImageBuffer::gray(w, h, data).unwrap();
        small += usize::from(w < cfg.tile || h < cfg.tile);
        let whole = NearestScaler::new(2).apply(&img);
        let tiled =
            upscale_tiled(&img, &cfg, &mut NearestScaler::new(2)).map_err(|e| e.to_string())?;
        ensure!(tiled == whole, "{w}x{h} differs");
    }
    ensure!(small > 0, "no size below the tile size was drawn");
    Ok(())
}

fn db_binarization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let one = |p: f64, t: f64, k: f64| {
        soft_binarize(&ScoreMaps::new(1, 1, vec![p], vec![t], false).unwrap(), k)[0]
    };
    for _ in 0..1000 {
        let t: f64 = rng.random();
        let k = rng.random_range(1.0..1e4);
        let mid = one(t, t, k);
        ensure!((mid - 0.5).abs() <= 1e-9, "B({t},{t}) = {mid}");
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        ensure!(
            one(lo, t, k) <= one(hi, t, k),
            "not monotone at p={lo},{hi} t={t} k={k}"
        );
    }
    let (w, h) = (128, 128);
    let prob: Vec<f64> = (0..w * h).map(|_| rng.random()).collect();
    let thresh: Vec<f64> = (0..w * h).map(|_| rng.random()).collect();
    let maps = ScoreMaps::new(w, h, prob.clone(), thresh.clone(), false).unwrap();
    let soft = soft_binarize(&maps, 1e4);
    let hard = hard_mask(&maps, 0.0);
    let mut checked = 0;
    for i in 0..w * h {
        if (prob[i] - thresh[i]).abs() >= 1e-3 {
            checked += 1;
            ensure!(
                (soft[i] > 0.5) == hard[i],
                "pixel {i}: P={} T={}",
                prob[i],
                thresh[i]
            );
            ensure!(
                hard[i] == (prob[i] > thresh[i]),
                "hard mask disagrees with P > T at {i}"
            );
        }
    }
    ensure!(checked > w * h / 2, "only {checked} pixels compared");
    Ok(())
}

fn height_filter() -> Check {
    let cfg = PipelineConfig::default();
    let det = DetectConfig::default();
    for (height, keep) in [(4, false), (5, true), (1024, true), (1025, false)] {
        // on a score map directly
        let (w, h) = (24, height + 8);
        let prob = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if (4..20).contains(&x) && (4..4 + height).contains(&y) {
                    0.9
                } else {
                    0.0
                }
            })
            .collect();
        let maps = ScoreMaps::with_uniform_thresh(w, h, prob, 0.3).unwrap();
        let n = extract_instances(&maps, &det)
            .map_err(|e| e.to_string())?
            .len();
        ensure!(
            n == usize::from(keep),
            "map blob of height {height}: {n} instances"
        );
        // through the pipeline, measured in source pixels
        let img = render(40, height + 16, &[(8, 8, 24, height, 0)]);
        let r = process_image(
            &img,
            "blob",
            &cfg,
            &mut backends(&cfg),
            RunOptions::DETECT_ONLY,
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            r.instances.len() == usize::from(keep),
            "image blob of height {height}: {} instances",
            r.instances.len()
        );
    }
    Ok(())
}

struct Table(Vec<NliScore>, Vec<f64>);

impl NliScorer for Table {
    fn name(&self) -> &str {
        "table"
    }
    fn score(&mut self, _: &str, _: &str) -> Result<NliScore, BackendError> {
        unreachable!()
    }
    fn score_all(&mut self, _: &str, hyps: &[String]) -> Result<Vec<NliScore>, BackendError> {
        Ok(hyps
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let (s, c) = (self.0[i], self.1[i]);
                NliScore::new(s.entail + c, s.neutral + c, s.contradict + c)
            })
            .collect())
    }
}

fn zero_shot() -> Check {
    let labels = LabelSet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let scores: Vec<NliScore> = (0..labels.len())
            .map(|_| {
                NliScore::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                )
            })
            .collect();
        let shifts: Vec<f64> = (0..labels.len())
            .map(|_| rng.random_range(-50.0..50.0))
            .collect();
        let base = zero_shot_classify(
            "p",
            &labels,
            DEFAULT_HYPOTHESIS_TEMPLATE,
            &mut Table(scores.clone(), vec![0.0; labels.len()]),
        )
        .map_err(|e| e.to_string())?;
        let shifted = zero_shot_classify(
            "p",
            &labels,
            DEFAULT_HYPOTHESIS_TEMPLATE,
            &mut Table(scores, shifts),
        )
        .map_err(|e| e.to_string())?;
        let sum: f64 = base.probs.iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-9, "probabilities sum to {sum}");
        ensure!(
            base.label == shifted.label,
            "shift changed {} to {}",
            base.label,
            shifted.label
        );
        for (a, b) in base.probs.iter().zip(&shifted.probs) {
            ensure!(
                (a - b).abs() <= 1e-9,
                "shift changed probabilities {:?} vs {:?}",
                base.probs,
                shifted.probs
            );
        }
    }
    let cfg = PipelineConfig::default();
    for f in fixtures() {
        let r = process_image(
            &f.image,
            f.name,
            &cfg,
            &mut backends(&cfg),
            RunOptions::FULL,
        )
        .map_err(|e| e.to_string())?;
        let got = &r.decision.as_ref().unwrap().label;
        ensure!(got == f.label, "{} classified as {got}", f.name);
    }
    let tie = zero_shot_classify(
        "",
        &labels,
        DEFAULT_HYPOTHESIS_TEMPLATE,
        &mut KeywordScorer::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        tie.probs.windows(2).all(|w| w[0] == w[1]),
        "not a tie: {:?}",
        tie.probs
    );
    ensure!(tie.label == "Invoice", "tie went to {}", tie.label);
    Ok(())
}

fn unit(x: f64, y: f64) -> Vec<Point> {
    vec![
        Point::new(x, y),
        Point::new(x + 1.0, y),
        Point::new(x + 1.0, y + 1.0),
        Point::new(x, y + 1.0),
    ]
}

fn iou_oracle() -> Check {
    let a = unit(0.0, 0.0);
    let same = polygon_iou(&a, &a, 512).iou;
    ensure!(same == 1.0, "identical squares give {same}");
    let off = polygon_iou(&a, &unit(0.5, 0.0), 512).iou;
    ensure!((off - 1.0 / 3.0).abs() <= 0.02, "offset squares give {off}");
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let poly = |rng: &mut ChaCha8Rng| -> Vec<Point> {
        let (cx, cy) = (rng.random_range(0.0..40.0), rng.random_range(0.0..40.0));
        let n = rng.random_range(3..10);
        (0..n)
            .map(|i| {
                let ang = std::f64::consts::TAU * i as f64 / n as f64;
                let r = rng.random_range(1.0..20.0);
                Point::new(cx + r * ang.cos(), cy + r * ang.sin())
            })
            .collect()
    };
    for _ in 0..100 {
        let (p, q) = (poly(&mut rng), poly(&mut rng));
        let (pq, qp) = (polygon_iou(&p, &q, 512).iou, polygon_iou(&q, &p, 512).iou);
        ensure!(pq == qp, "asymmetric: {pq} vs {qp}");
        let same = polygon_iou(&p, &p, 512).iou;
        ensure!(same == 1.0, "self IoU {same}");
    }
    Ok(())
}

async fn request(
    app: &axum::Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

fn end_to_end() -> Check {
    let out = Command::new(env!("CARGO_BIN_EXE_textriage"))
        .arg("classify")
        .arg(fixture_path("invoice.png"))
        .env_remove("TEXTRIAGE_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure!(
        out.status.success(),
        "classify exited {:?}",
        out.status.code()
    );
    ensure!(
        stdout.lines().next() == Some("Invoice"),
        "classify printed {stdout:?}"
    );

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    // no bridge command configured, no static bundle
    let app = router(
        AppState::new(PipelineConfig::default(), Arc::new(BackendFactory::new())),
        None,
    );
    let (status, body) = rt.block_on(request(
        &app,
        Method::POST,
        "/v1/documents",
        Some(json!({"image_b64": B64.encode(fixture_bytes("invoice.png"))})),
    ));
    ensure!(
        status == StatusCode::OK,
        "POST /v1/documents returned {status}: {body}"
    );
    ensure!(
        body["label"] == "Invoice",
        "service label {}",
        body["label"]
    );
    let v = validator("document.schema.json");
    let errors: Vec<String> = v.iter_errors(&body).map(|e| e.to_string()).collect();
    ensure!(errors.is_empty(), "schema: {errors:?}");
    Ok(())
}

fn live_session() -> Check {
    // frames arrive every ~2 ms, each takes >= 25 ms to process
    let img = fixtures()[0].image.clone();
    let frames = (0..40).map(move |_| {
        std::thread::sleep(Duration::from_millis(2));
        img.clone()
    });
    let seqs = Arc::new(Mutex::new(Vec::new()));
    let sink_seqs = seqs.clone();
    let sink = Box::new(move |r: &FrameResult| sink_seqs.lock().unwrap().push(r.seq));
    let s = process_stream(
        frames,
        PipelineConfig::default(),
        slow_factory(Duration::from_millis(25)),
        sink,
    )
    .map_err(|e| e.to_string())?;
    let c = s.counters;
    ensure!(c.received == 40, "received {}", c.received);
    ensure!(c.received == c.processed + c.dropped, "{c:?}");
    ensure!(c.dropped > 0, "producer never outran the worker: {c:?}");
    let seqs = seqs.lock().unwrap();
    ensure!(seqs.windows(2).all(|w| w[0] < w[1]), "sequence {seqs:?}");

    // threshold change while frame 1 is in flight
    let img = fixtures()[0].image.clone();
    let counts = Arc::new(Mutex::new(Vec::new()));
    let sink_counts = counts.clone();
    let sink = Box::new(move |r: &FrameResult| {
        sink_counts.lock().unwrap().push(
            r.outcome
                .as_ref()
                .map(|d| d.instances.len())
                .unwrap_or(usize::MAX),
        )
    });
    let session = LiveSession::start(
        PipelineConfig::default(),
        slow_factory(Duration::from_millis(150)),
        Some(sink),
    )
    .map_err(|e| e.to_string())?;
    session.submit(img.clone()).map_err(|e| e.to_string())?;
    std::thread::sleep(Duration::from_millis(40));
    session
        .update_config(&json!({"detect.global_thresh": 0.9}))
        .map_err(|e| e.to_string())?;
    session.wait_idle();
    session.submit(img.clone()).map_err(|e| e.to_string())?;
    session.wait_idle();
    session.submit(img).map_err(|e| e.to_string())?;
    session.close();
    let counts = counts.lock().unwrap();
    ensure!(counts.len() == 3, "results {counts:?}");
    ensure!(
        counts[1] < counts[0] && counts[2] == counts[1],
        "instance counts {counts:?}"
    );

    // same contract over HTTP
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(http_session())
}

async fn http_session() -> Check {
    let app = router(
        AppState::new(
            PipelineConfig::default(),
            slow_factory(Duration::from_millis(20)),
        ),
        None,
    );
    let (status, created) = request(&app, Method::POST, "/v1/sessions", None).await;
    ensure!(status == StatusCode::CREATED, "create returned {status}");
    let id = created["session_id"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    let frame = json!({"image_b64": B64.encode(fixture_bytes("invoice.png"))});
    let mut seen = Vec::new();
    let poll = |app: axum::Router, id: String| async move {
        request(
            &app,
            Method::GET,
            &format!("/v1/sessions/{id}/result"),
            None,
        )
        .await
    };
    for _ in 0..15 {
        let (status, _) = request(
            &app,
            Method::POST,
            &format!("/v1/sessions/{id}/frames"),
            Some(frame.clone()),
        )
        .await;
        ensure!(
            status == StatusCode::ACCEPTED,
            "frame post returned {status}"
        );
        let (status, r) = poll(app.clone(), id.clone()).await;
        if status == StatusCode::OK {
            seen.push((
                r["seq"].as_u64().unwrap(),
                r["result"]["instances"].as_array().map_or(0, Vec::len),
            ));
        }
    }
    let before = wait_for(&app, &id, 15).await?;
    let (status, cfg) = request(
        &app,
        Method::PATCH,
        &format!("/v1/sessions/{id}/config"),
        Some(json!({"detect.global_thresh": 0.9})),
    )
    .await;
    ensure!(
        status == StatusCode::OK && cfg["detect"]["global_thresh"] == 0.9,
        "patch returned {status}: {cfg}"
    );
    request(
        &app,
        Method::POST,
        &format!("/v1/sessions/{id}/frames"),
        Some(frame),
    )
    .await;
    let after = wait_for(&app, &id, 16).await?;
    ensure!(
        after < before,
        "instances {before} -> {after} after raising the threshold"
    );
    let (status, summary) =
        request(&app, Method::DELETE, &format!("/v1/sessions/{id}"), None).await;
    ensure!(status == StatusCode::OK, "delete returned {status}");
    let (r, p, d) = (
        summary["received"].as_u64(),
        summary["processed"].as_u64(),
        summary["dropped"].as_u64(),
    );
    ensure!(
        r == Some(16) && r.unwrap() == p.unwrap() + d.unwrap(),
        "summary {summary}"
    );
    ensure!(
        seen.windows(2).all(|w| w[0].0 <= w[1].0),
        "polled sequence went backwards: {seen:?}"
    );
    Ok(())
}

/// Polls until the result for `seq` shows up; returns its instance count.
async fn wait_for(app: &axum::Router, id: &str, seq: u64) -> Result<usize, String> {
    for _ in 0..500 {
        let (status, r) =
            request(app, Method::GET, &format!("/v1/sessions/{id}/result"), None).await;
        if status == StatusCode::OK && r["seq"] == seq {
            return Ok(r["result"]["instances"].as_array().map_or(0, Vec::len));
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    Err(format!("no result for frame {seq}"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        (
            "synthetic corpus: detection >= 95%, precision >= 90%, < 60 s",
            synthetic_corpus,
        ),
        (
            "CLAHE 1x1 unbounded clip matches global HE within 1",
            clahe_oracle,
        ),
        ("tiled 2x equals untiled 2x on 200 sizes", tiling_exactness),
        (
            "soft binarization midpoint, monotonicity, steep limit",
            db_binarization,
        ),
        ("height filter 4/5/1024/1025", height_filter),
        (
            "zero-shot normalization, shift invariance, fixtures, tie-break",
            zero_shot,
        ),
        ("polygon IoU identity, offset squares, symmetry", iou_oracle),
        ("end-to-end CLI and HTTP classify the invoice", end_to_end),
        (
            "live session counters, ordering, threshold patch",
            live_session,
        ),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let started = Instant::now();
        match check() {
            Ok(()) => println!("PASS  {name} ({:.1}s)", started.elapsed().as_secs_f64()),
            Err(why) => {
                println!("FAIL  {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
