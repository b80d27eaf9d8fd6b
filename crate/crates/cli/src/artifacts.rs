//! Artifact collection. Files are buffered in memory and written in one pass
//! once a command has finished, so a failed run leaves only its diagnostic.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use aubrykit::io::to_fixed_json;

use crate::scenario::Scenario;

/// Hex SHA-256 of the canonical JSON of the resolved scenario.
pub fn scenario_hash(s: &Scenario) -> String {
    let text = to_fixed_json(s).expect("scenario serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Artifacts {
    hash: String,
    command: String,
    scenario: Value,
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn new(s: &Scenario) -> Self {
        Artifacts {
            hash: scenario_hash(s),
            command: s.command.clone(),
            scenario: serde_json::to_value(s).expect("scenario serializes"),
            files: Vec::new(),
        }
    }

    fn envelope(&self, result: Value) -> Value {
        json!({
            "aubrykit_version": aubrykit::VERSION,
            "scenario_hash": self.hash,
            "command": self.command,
            "scenario": self.scenario,
            "result": result,
        })
    }

    pub fn json(&mut self, name: &str, result: impl Serialize) {
        let v = self.envelope(serde_json::to_value(result).expect("result serializes"));
        self.files.push((name.into(), to_fixed_json(&v).expect("JSON output")));
    }

    /// CSV body with a leading comment line carrying version and hash.
    pub fn csv(&mut self, name: &str, body: Vec<u8>) {
        let head = format!("# aubrykit {} scenario {}\n", aubrykit::VERSION, self.hash);
        self.files.push((name.into(), head + &String::from_utf8(body).expect("CSV is UTF-8")));
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (name, body) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            out.push(path);
        }
        Ok(out)
    }

    /// Writes only `diagnostic.json` describing a numerical failure.
    pub fn write_diagnostic(&self, dir: &Path, error: &str, detail: Value) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let v = self.envelope(json!({ "status": "numerical_failure", "error": error, "detail": detail }));
        let path = dir.join("diagnostic.json");
        std::fs::write(&path, to_fixed_json(&v).expect("JSON output"))?;
        Ok(path)
    }
}
