//! Run manifests: one flat text file per command invocation recording
//! everything needed to replay it (settings, seeds, input hashes, output
//! paths, tool version, wall time).

use std::fmt::Display;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::training::TrainConfig;

/// Streaming SHA-256 of a file, as lowercase hex.
pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let mut hex = String::with_capacity(64);
    for byte in hasher.finalize() {
        write!(hex, "{byte:02x}").expect("write to string");
    }
    Ok(hex)
}

/// Accumulates a command's replay record; `render` emits `key value`
/// lines in a fixed order so reruns differ only in wall time.
pub struct RunManifest {
    command: String,
    seed: u64,
    settings: Vec<(String, String)>,
    config: Vec<(String, String)>,
    inputs: Vec<(String, String)>,
    outputs: Vec<String>,
    started: Instant,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            seed,
            settings: Vec::new(),
            config: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn setting(&mut self, key: &str, value: impl Display) {
        self.settings.push((key.to_string(), value.to_string()));
    }

    /// Snapshots the effective training config as `config <key> <value>`
    /// lines, reusing the config file serialization.
    pub fn config_snapshot(&mut self, config: &TrainConfig) {
        for line in crate::training::format_config(config).lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once(char::is_whitespace) {
                self.config.push((key.to_string(), value.trim().to_string()));
            }
        }
    }

    /// Records an input file with its content hash.
    pub fn input_file(&mut self, path: &Path) -> std::io::Result<()> {
        let hash = file_sha256(path)?;
        self.inputs.push((hash, path.display().to_string()));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# gridfill run manifest\n");
        let _ = writeln!(out, "command {}", self.command);
        let _ = writeln!(out, "version {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "seed {}", self.seed);
        for (key, value) in &self.settings {
            let _ = writeln!(out, "setting {key} {value}");
        }
        for (key, value) in &self.config {
            let _ = writeln!(out, "config {key} {value}");
        }
        // Hash first: it is a fixed-width token, so paths with spaces
        // still parse unambiguously.
        for (hash, path) in &self.inputs {
            let _ = writeln!(out, "input {hash} {path}");
        }
        for path in &self.outputs {
            let _ = writeln!(out, "output {path}");
        }
        let _ = writeln!(out, "wall_seconds {:.3}", self.started.elapsed().as_secs_f64());
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        super::write_atomic(path, self.render().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lines_are_ordered_and_complete() {
        let mut m = RunManifest::new("synth", 42);
        m.setting("sites", 10);
        m.config_snapshot(&TrainConfig::default());
        m.outputs.push("out/fleet.csv".to_string());
        let text = m.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# gridfill run manifest");
        assert_eq!(lines[1], "command synth");
        assert_eq!(lines[2], format!("version {}", env!("CARGO_PKG_VERSION")));
        assert_eq!(lines[3], "seed 42");
        assert_eq!(lines[4], "setting sites 10");
        assert!(lines.iter().any(|l| *l == "config learning_rate 0.001"));
        assert!(lines.iter().any(|l| *l == "config max_epochs 50"));
        assert!(lines.iter().any(|l| *l == "output out/fleet.csv"));
        assert!(lines.last().unwrap().starts_with("wall_seconds "));
    }

    #[test]
    fn file_hash_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        std::fs::write(&path, b"abc").unwrap();
        // SHA-256("abc"), a published test vector.
        assert_eq!(
            file_sha256(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
