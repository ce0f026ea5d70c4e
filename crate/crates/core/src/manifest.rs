//! Run manifests: what was run, with which seed and config, and where the
//! outputs went.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::store::Clock;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub subcommand: String,
    pub root_seed: u64,
    pub config_digest: String,
    pub started_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        command: Vec<String>,
        root_seed: u64,
        config_digest: String,
        clock: &dyn Clock,
    ) -> Self {
        Self {
            tool: "lcmis".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            subcommand: subcommand.into(),
            root_seed,
            config_digest,
            started_at: clock.now(),
            finished_at: None,
            outputs: Vec::new(),
        }
    }

    /// File name used inside a run directory.
    pub fn file_name(&self) -> String {
        format!("manifest.{}.json", self.subcommand.replace(' ', "-"))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn finish(&mut self, outputs: Vec<PathBuf>, clock: &dyn Clock) {
        self.outputs = outputs;
        self.finished_at = Some(clock.now());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::FixedClock;

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let clock = FixedClock("t0".into());
        let mut m = RunManifest::new("mine phase2", vec!["lcmis".into()], 7, "abc".into(), &clock);
        let path = m.write(dir.path()).unwrap();
        assert!(path.ends_with("manifest.mine-phase2.json"));
        m.finish(vec![dir.path().join("store.jsonl")], &clock);
        m.write(dir.path()).unwrap();
        let back: RunManifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
