//! Dataset evaluation: run the pipeline over a manifest, match detections
//! against ground truth and aggregate rates and timings.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use textriage_core::eval::{match_detections, Counts, DEFAULT_IOU_RESOLUTION};
use textriage_core::Point;

use crate::backends::Backends;
use crate::config::PipelineConfig;
use crate::io::load_image;
use crate::pipeline::{process_image, RunOptions, Timings};

pub const METRIC_DEFINITION: &str = "detection_rate is recall: 100 * tp / (tp + fn), where a prediction \
and a ground-truth polygon match when their rasterized polygon IoU is at least iou_thresh under greedy \
one-to-one matching in descending IoU order; precision = 100 * tp / (tp + fp); f_measure = 2PR / (P + R); \
a failed entry counts all of its ground truth as fn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub gt_polygons: Vec<Vec<Point>>,
    #[serde(default)]
    pub gt_label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub images: Vec<ManifestEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Manifest { path: String, message: String },
    #[error("iou threshold must be in (0, 1], got {0}")]
    Threshold(f64),
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), String> {
        for (i, e) in self.images.iter().enumerate() {
            if e.path.as_os_str().is_empty() {
                return Err(format!("entry {i} has an empty path"));
            }
            if let Some(p) = e.gt_polygons.iter().find(|p| p.len() < 3) {
                return Err(format!("entry {i} has a polygon with {} vertices", p.len()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let m: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let err = |message: String| EvalError::Manifest {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_json(&text).map_err(err)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryReport {
    pub path: PathBuf,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub predicted_label: Option<String>,
    pub gt_label: Option<String>,
    /// Why the entry could not be evaluated.
    pub failed: Option<String>,
    pub timings_ms: Timings,
}

impl EntryReport {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric_definition: &'static str,
    pub iou_thresh: f64,
    pub images: Vec<EntryReport>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub detection_rate: f64,
    pub precision: f64,
    pub f_measure: f64,
    /// Over entries that carry a ground-truth label; absent when none do.
    pub classification_accuracy: Option<f64>,
    pub failures: usize,
    /// Mean per-stage milliseconds over entries that ran.
    pub mean_timings_ms: Timings,
    pub wall_time: f64,
}

impl EvalReport {
    /// Aggregates from per-entry results only.
    pub fn from_entries(images: Vec<EntryReport>, iou_thresh: f64, wall_time: f64) -> Self {
        let counts: Counts = images.iter().map(EntryReport::counts).sum();
        let rates = counts.rates();
        let labeled: Vec<&EntryReport> = images.iter().filter(|e| e.gt_label.is_some()).collect();
        let classification_accuracy = (!labeled.is_empty()).then(|| {
            let correct = labeled
                .iter()
                .filter(|e| e.predicted_label.is_some() && e.predicted_label == e.gt_label)
                .count();
            100.0 * correct as f64 / labeled.len() as f64
        });
        let ran: Vec<&Timings> = images
            .iter()
            .filter(|e| e.failed.is_none())
            .map(|e| &e.timings_ms)
            .collect();
        let mean = |f: fn(&Timings) -> f64| {
            if ran.is_empty() {
                0.0
            } else {
                ran.iter().map(|t| f(t)).sum::<f64>() / ran.len() as f64
            }
        };
        let mean_timings_ms = Timings {
            preprocess: mean(|t| t.preprocess),
            detect: mean(|t| t.detect),
            recognize: mean(|t| t.recognize),
            classify: mean(|t| t.classify),
            total: mean(|t| t.total),
        };
        Self {
            metric_definition: METRIC_DEFINITION,
            iou_thresh,
            failures: images.iter().filter(|e| e.failed.is_some()).count(),
            tp: counts.tp,
            fp: counts.fp,
            fn_: counts.fn_,
            detection_rate: rates.detection_rate,
            precision: rates.precision,
            f_measure: rates.f_measure,
            classification_accuracy,
            mean_timings_ms,
            wall_time,
            images,
        }
    }
}

/// Evaluates every entry; relative paths resolve against `base`.
/// Classification runs only for entries with a ground-truth label.
pub fn run_eval(
    manifest: &DatasetManifest,
    base: &Path,
    cfg: &PipelineConfig,
    backends: &mut Backends,
    iou_thresh: f64,
) -> Result<EvalReport, EvalError> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(EvalError::Threshold(iou_thresh));
    }
    let start = Instant::now();
    let images = manifest
        .images
        .iter()
        .map(|entry| evaluate_entry(entry, base, cfg, backends, iou_thresh))
        .collect();
    Ok(EvalReport::from_entries(
        images,
        iou_thresh,
        start.elapsed().as_secs_f64(),
    ))
}

fn evaluate_entry(
    entry: &ManifestEntry,
    base: &Path,
    cfg: &PipelineConfig,
    backends: &mut Backends,
    iou_thresh: f64,
) -> EntryReport {
    let failed = |message: String| {
        tracing::warn!(path = %entry.path.display(), %message, "entry failed");
        EntryReport {
            path: entry.path.clone(),
            tp: 0,
            fp: 0,
            fn_: entry.gt_polygons.len(),
            predicted_label: None,
            gt_label: entry.gt_label.clone(),
            failed: Some(message),
            timings_ms: Timings::default(),
        }
    };
    let path = base.join(&entry.path);
    let img = match load_image(&path) {
        Ok(img) => img,
        Err(e) => return failed(e.to_string()),
    };
    let opts = if entry.gt_label.is_some() {
        RunOptions::FULL
    } else {
        RunOptions::DETECT_ONLY
    };
    let source = entry.path.display().to_string();
    let result = match process_image(&img, &source, cfg, backends, opts) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string()),
    };
    let preds: Vec<&[Point]> = result
        .instances
        .iter()
        .map(|i| i.polygon.as_slice())
        .collect();
    let m = match match_detections(
        &preds,
        &entry.gt_polygons,
        iou_thresh,
        DEFAULT_IOU_RESOLUTION,
    ) {
        Ok(m) => m,
        Err(e) => return failed(e.to_string()),
    };
    EntryReport {
        path: entry.path.clone(),
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        predicted_label: result.decision.map(|d| d.label),
        gt_label: entry.gt_label.clone(),
        failed: None,
        timings_ms: result.timings,
    }
}

fn number_list(line: &str, key: &str) -> Option<Vec<f64>> {
    let start = line.find(key)? + key.len();
    let rest = &line[start..];
    let open = rest.find('[')?;
    let close = rest.find(']')?;
    let inner = rest[open..close].trim_start_matches('[');
    inner
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect()
}

/// Parses one Total-Text ground-truth line: either the
/// `x: [[..]], y: [[..]], ...` form or a flat `x1,y1,x2,y2,...[,text]` list.
pub fn parse_totaltext_line(line: &str) -> Option<Vec<Point>> {
    let line = line.trim();
    if line.is_empty() {
        return None;
    }
    let (xs, ys) = if line.starts_with("x:") {
        (number_list(line, "x:")?, number_list(line, "y:")?)
    } else {
        let nums: Vec<f64> = line
            .split(',')
            .map_while(|t| t.trim().parse::<f64>().ok())
            .collect();
        let pairs = nums.len() / 2;
        (
            nums.iter().step_by(2).take(pairs).copied().collect(),
            nums.iter()
                .skip(1)
                .step_by(2)
                .take(pairs)
                .copied()
                .collect(),
        )
    };
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    Some(
        xs.into_iter()
            .zip(ys)
            .map(|(x, y)| Point::new(x, y))
            .collect(),
    )
}

const GT_NAMES: [&str; 3] = ["poly_gt_{}.txt", "gt_{}.txt", "{}.txt"];

/// Builds a manifest from a Total-Text image directory and its ground-truth
/// directory. Image paths in the manifest are relative to `images`.
pub fn convert_totaltext(images: &Path, gt: &Path) -> Result<DatasetManifest, EvalError> {
    let err = |p: &Path, e: std::io::Error| EvalError::Manifest {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(images)
        .map_err(|e| err(images, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
        })
        .collect();
    files.sort();
    let mut manifest = DatasetManifest::default();
    for file in files {
        let stem = file
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let Some(gt_file) = GT_NAMES
            .iter()
            .map(|pat| gt.join(pat.replace("{}", &stem)))
            .find(|p| p.is_file())
        else {
            tracing::warn!(image = %file.display(), "no ground truth, skipped");
            continue;
        };
        let text = std::fs::read_to_string(&gt_file).map_err(|e| err(&gt_file, e))?;
        let mut polygons = Vec::new();
        for (n, line) in text.lines().enumerate() {
            match parse_totaltext_line(line) {
                Some(p) => polygons.push(p),
                None if line.trim().is_empty() => {}
                None => tracing::warn!(file = %gt_file.display(), line = n + 1, "unparsed line"),
            }
        }
        manifest.images.push(ManifestEntry {
            path: file.file_name().map(PathBuf::from).unwrap_or_default(),
            gt_polygons: polygons,
            gt_label: None,
        });
    }
    Ok(manifest)
}
