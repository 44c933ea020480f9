//! The JSON envelope every command prints.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 of the command's canonical JSON configuration.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub pass: Option<bool>,
    pub outputs: Value,
    /// Wall-clock milliseconds per phase. The only non-deterministic field;
    /// omitted entirely under `--no-timings`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

pub fn config_digest<C: Serialize>(config: &C) -> String {
    let canonical = serde_json::to_vec(config).expect("configs serialize");
    hex::encode(Sha256::digest(&canonical))
}

/// Named wall-clock phases, in milliseconds.
#[derive(Debug, Default)]
pub struct Timings(BTreeMap<String, f64>);

impl Timings {
    pub fn time<R>(&mut self, phase: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        self.record(phase, start.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn record(&mut self, phase: &str, ms: f64) {
        self.0.insert(phase.to_string(), ms);
    }

    pub fn finish(self, enabled: bool) -> Option<BTreeMap<String, f64>> {
        enabled.then_some(self.0)
    }
}
