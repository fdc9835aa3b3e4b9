use crate::error::CliError;
use crate::state::sha256_hex;
use serde::Serialize;
use serde_json::value::RawValue;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// A JSON number printed with exactly `places` decimals.
pub fn fixed(x: f64, places: usize) -> Box<RawValue> {
    let text = if x.is_finite() { format!("{x:.places$}") } else { "null".into() };
    RawValue::from_string(text).expect("decimal literal is valid JSON")
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

pub fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Everything needed to repeat a run exactly.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: Vec<String>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub state_checksum: Option<String>,
    pub artifacts: Vec<Artifact>,
}

/// Collects a command's artifacts: the first goes to stdout, all of them go
/// to the output directory when one was given.
pub struct Sink {
    out: Option<PathBuf>,
    artifacts: Vec<(String, Vec<u8>)>,
}

impl Sink {
    pub fn new(out: Option<&Path>) -> Sink {
        Sink {
            out: out.map(Path::to_path_buf),
            artifacts: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.to_string(), bytes));
    }

    pub fn finish(
        self,
        command: Vec<String>,
        config: Option<PathBuf>,
        seed: Option<u64>,
        state_checksum: Option<String>,
    ) -> Result<(), CliError> {
        if let Some((_, first)) = self.artifacts.first() {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(first)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("writing stdout", e))?;
        }
        let Some(dir) = self.out else {
            return Ok(());
        };
        fs::create_dir_all(&dir).map_err(|e| CliError::io("creating output directory", e))?;
        let mut artifacts = Vec::new();
        for (name, bytes) in &self.artifacts {
            fs::write(dir.join(name), bytes).map_err(|e| CliError::io(&format!("writing {name}"), e))?;
            artifacts.push(Artifact {
                file: name.clone(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = RunManifest {
            version: 1,
            command,
            config,
            seed,
            out: dir.clone(),
            state_checksum,
            artifacts,
        };
        fs::write(dir.join("manifest.json"), to_json(&manifest)?).map_err(|e| CliError::io("writing manifest", e))
    }
}
