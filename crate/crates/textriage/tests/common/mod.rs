#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use textriage::backends::{BackendFactory, Backends};
use textriage_core::{BackendError, DetectorBackend, ImageBuffer, ScoreMaps, StencilDetector};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_path(name: &str) -> PathBuf {
    crate_dir().join("../../fixtures").join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap()
}

pub fn validator(schema: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(crate_dir().join("schemas").join(schema)).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

pub fn assert_schema(schema: &str, value: &Value) {
    let v = validator(schema);
    let errors: Vec<String> = v
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}\n{value:#}");
}

/// Stencil detection that takes at least `delay`.
pub struct SlowStencil(pub Duration);

impl DetectorBackend for SlowStencil {
    fn name(&self) -> &str {
        "slow-stencil"
    }

    fn score(&mut self, img: &ImageBuffer) -> Result<ScoreMaps, BackendError> {
        std::thread::sleep(self.0);
        StencilDetector::default().score(img)
    }
}

pub fn slow_factory(delay: Duration) -> Arc<BackendFactory> {
    let plain = BackendFactory::new();
    Arc::new(BackendFactory::custom(move |sel, scale| {
        let b: Backends = plain.build(sel, scale)?;
        Ok(Backends {
            detector: Box::new(SlowStencil(delay)),
            ..b
        })
    }))
}
