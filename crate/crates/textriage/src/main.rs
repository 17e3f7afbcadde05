use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use textriage::annotations::{sibling_annotations, ANNOTATION_SUFFIX};
use textriage::backends::BackendFactory;
use textriage::config::{parse_stages, PipelineConfig, CONFIG_ENV};
use textriage::eval::{convert_totaltext, run_eval, DatasetManifest, ManifestEntry};
use textriage::io::{load_image, save_image};
use textriage::pipeline::{preprocess, process_image, RunOptions};
use textriage::service::{serve, AppState};
use textriage::{sidecar, synth};

#[derive(Parser)]
#[command(
    name = "textriage",
    version,
    about = "Document image enhancement, text detection and zero-shot classification"
)]
struct Cli {
    /// Pipeline config file (TOML, dotted keys). Defaults to $TEXTRIAGE_CONFIG.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Extra `key=value` config overrides, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grayscale, upscale and CLAHE an image.
    Enhance(EnhanceArgs),
    /// List detected text instances.
    Detect(DetectArgs),
    /// Detect, recognize and classify a document.
    Classify(ClassifyArgs),
    /// Evaluate detection against a dataset manifest.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Build a dataset manifest from Total-Text ground truth.
    ConvertTotaltext(ConvertArgs),
    /// Write the synthetic benchmark corpus or the canned fixtures.
    Synth(SynthArgs),
    /// Answer the model bridge protocol with reference backends on stdio.
    #[command(hide = true)]
    SidecarEcho,
}

#[derive(Args)]
struct EnhanceArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long)]
    clahe_clip: Option<f64>,
    /// Tile grid as COLSxROWS.
    #[arg(long, value_parser = parse_grid)]
    clahe_grid: Option<(usize, usize)>,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    /// Comma-separated stage order, e.g. grayscale,upscale,clahe.
    #[arg(long)]
    stages: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorChoice {
    Stencil,
    Sidecar,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerChoice {
    Keyword,
    Sidecar,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecognizerChoice {
    Fixture,
    None,
    Sidecar,
}

#[derive(Args)]
struct DetectArgs {
    input: PathBuf,
    #[arg(long)]
    thresh: Option<f64>,
    #[arg(long)]
    min_h: Option<usize>,
    #[arg(long)]
    max_h: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<DetectorChoice>,
    /// Command that starts the model bridge.
    #[arg(long)]
    sidecar: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    input: PathBuf,
    /// Comma-separated candidate labels.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long, value_enum)]
    scorer: Option<ScorerChoice>,
    #[arg(long, value_enum)]
    recognizer: Option<RecognizerChoice>,
    /// Region annotation file or directory for the fixture recognizer.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Unreadable or failing entries tolerated before exiting with status 1.
    #[arg(long, default_value_t = 0)]
    max_failures: usize,
    /// Print the full report instead of the rate summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Start the model bridge with this command and route every backend to it.
    #[arg(long)]
    sidecar: Option<String>,
    /// Static UI bundle served under `/`.
    #[arg(long, default_value = "ui/dist")]
    ui: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Manifest path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = synth::DEFAULT_SEED)]
    seed: u64,
    /// Write the four canned documents with annotations instead.
    #[arg(long)]
    fixtures: bool,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (c, r) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected COLSxROWS, got {s:?}"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((n(c)?, n(r)?))
}

/// Bad flag values exit with 2, everything else with 1.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_config(cli: &Cli, flags: Vec<(&str, Value)>) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::resolve(cli.config.as_deref())?;
    let mut overrides: Vec<(String, Value)> = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        let mut probe = cfg.clone();
        probe
            .set_str(k.trim(), v.trim())
            .map_err(|e| Usage(e.to_string()))?;
        let flat = serde_json::to_value(&probe)?;
        overrides.push((k.trim().to_string(), pointer(&flat, k.trim())));
    }
    overrides.extend(flags.into_iter().map(|(k, v)| (k.to_string(), v)));
    cfg.apply(overrides).map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

fn pointer(doc: &Value, dotted: &str) -> Value {
    doc.pointer(&format!("/{}", dotted.replace('.', "/")))
        .cloned()
        .unwrap_or(Value::Null)
}

fn flag<T: serde::Serialize>(
    out: &mut Vec<(&'static str, Value)>,
    key: &'static str,
    v: Option<T>,
) {
    if let Some(v) = v {
        out.push((key, json!(v)));
    }
}

/// Uses the annotation file stored next to the input unless one is configured.
fn default_annotations(cfg: &mut PipelineConfig, input: &Path) {
    if cfg.backends.annotations.is_none() {
        cfg.backends.annotations = sibling_annotations(input);
    }
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn enhance(cli: &Cli, a: &EnhanceArgs) -> anyhow::Result<()> {
    let mut flags = Vec::new();
    flag(&mut flags, "clahe.clip_factor", a.clahe_clip);
    if let Some((c, r)) = a.clahe_grid {
        flags.push(("clahe.grid_cols", json!(c)));
        flags.push(("clahe.grid_rows", json!(r)));
    }
    flag(&mut flags, "tiles.scale", a.scale);
    flag(&mut flags, "tiles.tile", a.tile);
    flag(&mut flags, "tiles.overlap", a.overlap);
    if let Some(s) = &a.stages {
        let stages = parse_stages(s).map_err(|e| Usage(e.to_string()))?;
        flags.push(("stage_order", json!(stages)));
    }
    let cfg = load_config(cli, flags)?;
    let img = load_image(&a.input)?;
    let mut backends = BackendFactory::new().build(&cfg.backends, cfg.tiles.scale)?;
    let out = preprocess(&img, &cfg, &mut backends)?;
    save_image(&out, &a.output)?;
    tracing::info!(
        width = out.width(),
        height = out.height(),
        "wrote {}",
        a.output.display()
    );
    Ok(())
}

fn detect(cli: &Cli, a: &DetectArgs) -> anyhow::Result<()> {
    let mut flags = Vec::new();
    flag(&mut flags, "detect.global_thresh", a.thresh);
    flag(&mut flags, "detect.min_height", a.min_h);
    flag(&mut flags, "detect.max_height", a.max_h);
    flag(&mut flags, "backends.sidecar", a.sidecar.as_ref());
    if let Some(b) = a.backend {
        let name = match b {
            DetectorChoice::Stencil => "stencil",
            DetectorChoice::Sidecar => "sidecar",
        };
        flags.push(("backends.detector", json!(name)));
    }
    let cfg = load_config(cli, flags)?;
    let img = load_image(&a.input)?;
    let mut backends = BackendFactory::new().build(&cfg.backends, cfg.tiles.scale)?;
    let source = a.input.display().to_string();
    let r = process_image(&img, &source, &cfg, &mut backends, RunOptions::DETECT_ONLY)?;
    if a.json {
        return print_json(&r.instances);
    }
    let mut out = std::io::stdout().lock();
    for i in &r.instances {
        let b = i.bbox;
        writeln!(out, "{} {} {} {} {:.4}", b.x, b.y, b.w, b.h, i.score)?;
    }
    Ok(())
}

fn classify(cli: &Cli, a: &ClassifyArgs) -> anyhow::Result<()> {
    let mut flags = Vec::new();
    if let Some(l) = &a.labels {
        let labels: Vec<&str> = l.split(',').map(str::trim).collect();
        flags.push(("labels", json!(labels)));
    }
    flag(&mut flags, "backends.sidecar", a.sidecar.as_ref());
    flag(&mut flags, "backends.annotations", a.annotations.as_ref());
    if let Some(s) = a.scorer {
        let name = match s {
            ScorerChoice::Keyword => "keyword",
            ScorerChoice::Sidecar => "sidecar",
        };
        flags.push(("backends.nli", json!(name)));
    }
    if let Some(r) = a.recognizer {
        let name = match r {
            RecognizerChoice::Fixture => "fixture",
            RecognizerChoice::None => "none",
            RecognizerChoice::Sidecar => "sidecar",
        };
        flags.push(("backends.recognizer", json!(name)));
    }
    let mut cfg = load_config(cli, flags)?;
    default_annotations(&mut cfg, &a.input);
    let img = load_image(&a.input)?;
    let mut backends = BackendFactory::new().build(&cfg.backends, cfg.tiles.scale)?;
    let source = a.input.display().to_string();
    let r = process_image(&img, &source, &cfg, &mut backends, RunOptions::FULL)?;
    if a.json {
        let mut body = r.to_json();
        body["id"] = json!(source);
        return print_json(&body);
    }
    let d = r.decision.as_ref().expect("classification ran");
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", d.label)?;
    for (l, p) in d.labels.iter().zip(&d.probs) {
        writeln!(out, "  {l:<12} {p:.4}")?;
    }
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> anyhow::Result<bool> {
    let cfg = load_config(cli, Vec::new())?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let mut backends = BackendFactory::new().build(&cfg.backends, cfg.tiles.scale)?;
    let report =
        run_eval(&manifest, base, &cfg, &mut backends, a.iou).map_err(|e| Usage(e.to_string()))?;
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(out, text + "\n").with_context(|| out.display().to_string())?;
    }
    if a.json {
        print_json(&report)?;
    } else {
        let mut out = std::io::stdout().lock();
        writeln!(out, "detection_rate {:.2}", report.detection_rate)?;
        writeln!(out, "precision {:.2}", report.precision)?;
        writeln!(out, "f_measure {:.2}", report.f_measure)?;
        if let Some(acc) = report.classification_accuracy {
            writeln!(out, "classification_accuracy {acc:.2}")?;
        }
        writeln!(out, "failures {}", report.failures)?;
        writeln!(out, "wall_time {:.3}", report.wall_time)?;
    }
    if report.failures > a.max_failures {
        tracing::error!(
            failures = report.failures,
            allowed = a.max_failures,
            "too many failed entries"
        );
        return Ok(false);
    }
    Ok(true)
}

fn serve_cmd(cli: &Cli, a: &ServeArgs) -> anyhow::Result<()> {
    let mut flags = Vec::new();
    if let Some(cmd) = &a.sidecar {
        flags.push(("backends.sidecar", json!(cmd)));
        for slot in [
            "backends.scaler",
            "backends.detector",
            "backends.recognizer",
            "backends.nli",
        ] {
            flags.push((slot, json!("sidecar")));
        }
    }
    let cfg = load_config(cli, flags)?;
    let state = AppState::new(cfg, Arc::new(BackendFactory::new()));
    let rt = tokio::runtime::Runtime::new()?;
    let addr = SocketAddr::new(a.host, a.port);
    rt.block_on(serve(addr, state, Some(a.ui.clone()), async {
        let _ = tokio::signal::ctrl_c().await;
    }))
    .with_context(|| format!("serving on {addr}"))
}

fn convert(a: &ConvertArgs) -> anyhow::Result<()> {
    let manifest = convert_totaltext(&a.images, &a.gt)?;
    match &a.out {
        Some(out) => {
            let text = serde_json::to_string_pretty(&manifest)?;
            std::fs::write(out, text + "\n").with_context(|| out.display().to_string())?;
            tracing::info!(entries = manifest.images.len(), "wrote {}", out.display());
            Ok(())
        }
        None => print_json(&manifest),
    }
}

fn synth_cmd(a: &SynthArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    if a.fixtures {
        for f in synth::fixtures() {
            let image = format!("{}.png", f.name);
            save_image(&f.image, &a.out.join(&image))?;
            let ann = json!({"image": image, "regions": f.regions, "label": f.label});
            let path = a.out.join(format!("{}{ANNOTATION_SUFFIX}", f.name));
            std::fs::write(&path, serde_json::to_string_pretty(&ann)? + "\n")?;
        }
        return Ok(());
    }
    let mut manifest = DatasetManifest::default();
    for (i, doc) in synth::generate_corpus(a.seed, a.count).iter().enumerate() {
        let name = format!("doc_{i:03}.png");
        save_image(&doc.image, &a.out.join(&name))?;
        manifest.images.push(ManifestEntry {
            path: name.into(),
            gt_polygons: doc.gt_polygons(),
            gt_label: None,
        });
    }
    let path = a.out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Enhance(a) => enhance(cli, a)?,
        Command::Detect(a) => detect(cli, a)?,
        Command::Classify(a) => classify(cli, a)?,
        Command::Eval(a) => return eval(cli, a),
        Command::Serve(a) => serve_cmd(cli, a)?,
        Command::ConvertTotaltext(a) => convert(a)?,
        Command::Synth(a) => synth_cmd(a)?,
        Command::SidecarEcho => {
            sidecar::serve_echo(std::io::stdin().lock(), std::io::stdout().lock())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve(_)) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
