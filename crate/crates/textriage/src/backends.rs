//! Turns a [`BackendSelection`] into boxed backend instances.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use textriage_core::{
    DetectorBackend, KeywordScorer, KeywordTable, NearestScaler, NliScorer, RecognizerBackend,
    ScalerBackend, StencilDetector,
};

use textriage_core::classify::NullRecognizer;

use crate::annotations::{AnnotationStore, FixtureRecognizer};
use crate::config::BackendSelection;
use crate::sidecar::{
    SharedSidecar, SidecarClient, SidecarDetector, SidecarRecognizer, SidecarScaler, SidecarScorer,
};
use crate::synth::fixture_annotations;

/// One complete set of backends, owned by a single pipeline worker.
pub struct Backends {
    pub scaler: Box<dyn ScalerBackend + Send>,
    pub detector: Box<dyn DetectorBackend + Send>,
    pub recognizer: Box<dyn RecognizerBackend + Send>,
    pub scorer: Box<dyn NliScorer + Send>,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot set up backends: {0}")]
pub struct BackendSetupError(pub String);

type CustomBuild =
    dyn Fn(&BackendSelection, usize) -> Result<Backends, BackendSetupError> + Send + Sync;

/// Builds backends and caches what they load: annotation stores, keyword
/// tables and bridge processes are shared between the sets it hands out.
#[derive(Default)]
pub struct BackendFactory {
    annotations: Mutex<HashMap<Option<PathBuf>, Arc<AnnotationStore>>>,
    keywords: Mutex<HashMap<PathBuf, KeywordTable>>,
    sidecars: Mutex<HashMap<String, SharedSidecar>>,
    custom: Option<Box<CustomBuild>>,
}

fn locked<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl BackendFactory {
    pub fn new() -> Self {
        Self::default()
    }

    /// A factory whose sets come from `build` instead of the selection.
    pub fn custom(
        build: impl Fn(&BackendSelection, usize) -> Result<Backends, BackendSetupError>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        Self {
            custom: Some(Box::new(build)),
            ..Self::default()
        }
    }

    /// Registers an already connected bridge under its command string.
    pub fn with_sidecar(self, command: &str, client: SharedSidecar) -> Self {
        locked(&self.sidecars).insert(command.to_string(), client);
        self
    }

    fn sidecar(&self, sel: &BackendSelection) -> Result<SharedSidecar, BackendSetupError> {
        let command = sel
            .sidecar
            .as_deref()
            .ok_or_else(|| BackendSetupError("backends.sidecar is not set".into()))?;
        Ok(locked(&self.sidecars)
            .entry(command.to_string())
            .or_insert_with(|| SidecarClient::spawn(command).shared())
            .clone())
    }

    fn annotations(
        &self,
        path: Option<&PathBuf>,
    ) -> Result<Arc<AnnotationStore>, BackendSetupError> {
        let key = path.cloned();
        if let Some(store) = locked(&self.annotations).get(&key) {
            return Ok(store.clone());
        }
        let store = match path {
            Some(p) => AnnotationStore::load(p).map_err(|e| BackendSetupError(e.to_string()))?,
            None => fixture_annotations(),
        };
        let store = Arc::new(store);
        locked(&self.annotations).insert(key, store.clone());
        Ok(store)
    }

    fn keyword_table(&self, path: Option<&PathBuf>) -> Result<KeywordTable, BackendSetupError> {
        let Some(path) = path else {
            return Ok(KeywordTable::default());
        };
        if let Some(t) = locked(&self.keywords).get(path) {
            return Ok(t.clone());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendSetupError(format!("{}: {e}", path.display())))?;
        let table = KeywordTable::parse(&text)
            .map_err(|e| BackendSetupError(format!("{}: {e}", path.display())))?;
        locked(&self.keywords).insert(path.clone(), table.clone());
        Ok(table)
    }

    /// `scale` is the configured upscale factor, used by the local scaler.
    pub fn build(
        &self,
        sel: &BackendSelection,
        scale: usize,
    ) -> Result<Backends, BackendSetupError> {
        if let Some(custom) = &self.custom {
            return custom(sel, scale);
        }
        let scaler: Box<dyn ScalerBackend + Send> = match sel.scaler.as_str() {
            "sidecar" => Box::new(SidecarScaler(self.sidecar(sel)?)),
            _ => Box::new(NearestScaler::new(scale)),
        };
        let detector: Box<dyn DetectorBackend + Send> = match sel.detector.as_str() {
            "sidecar" => Box::new(SidecarDetector(self.sidecar(sel)?)),
            _ => Box::new(StencilDetector::default()),
        };
        let recognizer: Box<dyn RecognizerBackend + Send> = match sel.recognizer.as_str() {
            "sidecar" => Box::new(SidecarRecognizer(self.sidecar(sel)?)),
            "none" => Box::new(NullRecognizer),
            _ => Box::new(FixtureRecognizer::new(
                self.annotations(sel.annotations.as_ref())?,
            )),
        };
        let scorer: Box<dyn NliScorer + Send> = match sel.nli.as_str() {
            "sidecar" => Box::new(SidecarScorer(self.sidecar(sel)?)),
            _ => Box::new(KeywordScorer::new(
                self.keyword_table(sel.keywords.as_ref())?,
            )),
        };
        Ok(Backends {
            scaler,
            detector,
            recognizer,
            scorer,
        })
    }

    /// `ok` or `unavailable` for each backend slot. Local backends are
    /// always `ok`; bridge-backed slots report whether the bridge answers.
    pub fn probe(&self, sel: &BackendSelection) -> BTreeMap<String, String> {
        let bridge = if sel.uses_sidecar() {
            match self.sidecar(sel) {
                Ok(client) => client.lock().unwrap_or_else(|p| p.into_inner()).probe(),
                Err(_) => false,
            }
        } else {
            true
        };
        [
            ("scaler", &sel.scaler),
            ("detector", &sel.detector),
            ("recognizer", &sel.recognizer),
            ("nli", &sel.nli),
        ]
        .into_iter()
        .map(|(slot, choice)| {
            let ok = choice != "sidecar" || bridge;
            (
                slot.to_string(),
                if ok { "ok" } else { "unavailable" }.to_string(),
            )
        })
        .collect()
    }
}
