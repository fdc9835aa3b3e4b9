//! On-disk system state: a directory of checksummed records.
//!
//! `config.toml` holds every parameter including the seed, `material.json`
//! the provisioned key material and `index.json` the format version and a
//! SHA-256 digest of each record. Loading re-provisions from the
//! configuration and insists the result equals the stored material.

use crate::error::CliError;
use epic_core::crypto::{GroupBackend, MockBackend};
use epic_core::node::NodeId;
use epic_core::protocol::System;
use epic_netsim::{SimConfig, Simulation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const STATE_VERSION: u32 = 1;
pub const STATE_ENV: &str = "EPIC_STATE_DIR";
const DEFAULT_STATE_DIR: &str = "epic-state";
const CONFIG_FILE: &str = "config.toml";
const MATERIAL_FILE: &str = "material.json";
const INDEX_FILE: &str = "index.json";

pub fn state_dir() -> PathBuf {
    std::env::var_os(STATE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_STATE_DIR))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub public: String,
    pub certificate: String,
    pub proxies: Vec<NodeId>,
    pub selected_by: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairKeyRecord {
    pub a: NodeId,
    pub b: NodeId,
    pub epoch: u32,
    pub key: String,
}

/// Everything provisioning produced that later commands depend on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Material {
    pub authority_public: String,
    pub nodes: Vec<NodeRecord>,
    pub utility_proxies: Vec<NodeId>,
    pub utility_selected_by: Vec<NodeId>,
    pub pair_keys: Vec<PairKeyRecord>,
}

impl Material {
    pub fn of(sys: &System<MockBackend>) -> Material {
        let b = sys.backend();
        let graph = sys.proxy_graph();
        let assignment = |id: NodeId| {
            graph
                .get(id)
                .map(|a| (a.proxies.iter().copied().collect(), a.selected_by.iter().copied().collect()))
                .unwrap_or_default()
        };
        let nodes = sys
            .meters()
            .into_iter()
            .chain([NodeId::GATEWAY])
            .filter_map(|id| sys.node(id))
            .map(|n| {
                let (proxies, selected_by) = assignment(n.id());
                NodeRecord {
                    id: n.id(),
                    public: hex::encode(b.encode_g1(n.public())),
                    certificate: hex::encode(n.identity().cert.encode(b)),
                    proxies,
                    selected_by,
                }
            })
            .collect();
        let (utility_proxies, utility_selected_by) = assignment(NodeId::UTILITY);
        let pair_keys = sys
            .pair_keys()
            .iter()
            .map(|(&(a, c), k)| PairKeyRecord {
                a,
                b: c,
                epoch: k.epoch,
                key: hex::encode(k.key_bytes(b)),
            })
            .collect();
        Material {
            authority_public: hex::encode(b.encode_g1(sys.authority().public())),
            nodes,
            utility_proxies,
            utility_selected_by,
            pair_keys,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateIndex {
    pub version: u32,
    pub records: BTreeMap<String, String>,
}

/// A loaded, verified state directory.
pub struct State {
    pub dir: PathBuf,
    pub config: SimConfig,
    pub material: Material,
    pub checksum: String,
}

impl State {
    pub fn simulation(&self) -> Result<Simulation, CliError> {
        Ok(Simulation::new(self.config.clone())?)
    }
}

fn write_record(dir: &Path, name: &str, bytes: &[u8]) -> Result<String, CliError> {
    fs::write(dir.join(name), bytes).map_err(|e| CliError::io(&format!("writing {name}"), e))?;
    Ok(sha256_hex(bytes))
}

/// Provisions a system for `config` and persists it. Returns the digest of
/// the index, which identifies the state.
pub fn setup(dir: &Path, config: &SimConfig) -> Result<State, CliError> {
    config.validate()?;
    let sim = Simulation::new(config.clone())?;
    let material = Material::of(sim.system());
    fs::create_dir_all(dir).map_err(|e| CliError::io("creating state directory", e))?;
    let mut records = BTreeMap::new();
    records.insert(CONFIG_FILE.to_string(), write_record(dir, CONFIG_FILE, config.to_toml().as_bytes())?);
    let material_json = serde_json::to_vec_pretty(&material).map_err(|e| CliError::Internal(e.to_string()))?;
    records.insert(MATERIAL_FILE.to_string(), write_record(dir, MATERIAL_FILE, &material_json)?);
    let index = StateIndex {
        version: STATE_VERSION,
        records,
    };
    let index_json = serde_json::to_vec_pretty(&index).map_err(|e| CliError::Internal(e.to_string()))?;
    let checksum = write_record(dir, INDEX_FILE, &index_json)?;
    Ok(State {
        dir: dir.to_path_buf(),
        config: config.clone(),
        material,
        checksum,
    })
}

fn read_record(dir: &Path, name: &str) -> Result<Vec<u8>, CliError> {
    fs::read(dir.join(name)).map_err(|e| CliError::State(format!("cannot read {}: {e}", dir.join(name).display())))
}

pub fn load(dir: &Path) -> Result<State, CliError> {
    let index_bytes = read_record(dir, INDEX_FILE)?;
    let index: StateIndex =
        serde_json::from_slice(&index_bytes).map_err(|e| CliError::State(format!("corrupt {INDEX_FILE}: {e}")))?;
    if index.version != STATE_VERSION {
        return Err(CliError::State(format!(
            "unsupported state version {} (expected {STATE_VERSION})",
            index.version
        )));
    }
    let mut verified = BTreeMap::new();
    for name in [CONFIG_FILE, MATERIAL_FILE] {
        let want = index
            .records
            .get(name)
            .ok_or_else(|| CliError::State(format!("{INDEX_FILE} lists no {name}")))?;
        let bytes = read_record(dir, name)?;
        if &sha256_hex(&bytes) != want {
            return Err(CliError::State(format!("{name} does not match its checksum")));
        }
        verified.insert(name, bytes);
    }
    let text = String::from_utf8(verified.remove(CONFIG_FILE).expect("read above"))
        .map_err(|_| CliError::State(format!("{CONFIG_FILE} is not UTF-8")))?;
    let config = SimConfig::from_toml(&text).map_err(|e| CliError::State(format!("{CONFIG_FILE}: {e}")))?;
    let material: Material = serde_json::from_slice(&verified[MATERIAL_FILE])
        .map_err(|e| CliError::State(format!("corrupt {MATERIAL_FILE}: {e}")))?;
    let sim = Simulation::new(config.clone()).map_err(|e| CliError::State(e.to_string()))?;
    if Material::of(sim.system()) != material {
        return Err(CliError::State(
            "stored key material does not match its configuration".into(),
        ));
    }
    Ok(State {
        dir: dir.to_path_buf(),
        config,
        material,
        checksum: sha256_hex(&index_bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            nodes: 9,
            lambda: 3,
            seed: 4,
            ..SimConfig::default()
        }
    }

    #[test]
    fn setup_then_load_round_trips() {
        let dir = std::env::temp_dir().join(format!("epic-state-test-{}", std::process::id()));
        let made = setup(&dir, &small()).unwrap();
        let loaded = load(&dir).unwrap();
        assert_eq!(loaded.config, made.config);
        assert_eq!(loaded.material, made.material);
        assert_eq!(loaded.checksum, made.checksum);
        assert_eq!(made.material.nodes.len(), 9);

        let path = dir.join(MATERIAL_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[10] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load(&dir), Err(CliError::State(_))));

        let mut forged = made.material.clone();
        forged.pair_keys[0].epoch += 1;
        let bytes = serde_json::to_vec_pretty(&forged).unwrap();
        fs::write(&path, &bytes).unwrap();
        let index_path = dir.join(INDEX_FILE);
        let mut index: StateIndex = serde_json::from_slice(&fs::read(&index_path).unwrap()).unwrap();
        index.records.insert(MATERIAL_FILE.into(), sha256_hex(&bytes));
        fs::write(&index_path, serde_json::to_vec(&index).unwrap()).unwrap();
        match load(&dir) {
            Err(CliError::State(msg)) => assert!(msg.contains("does not match its configuration")),
            other => panic!("forged material accepted: {:?}", other.map(|s| s.checksum)),
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn material_is_deterministic() {
        let a = Material::of(Simulation::new(small()).unwrap().system());
        let b = Material::of(Simulation::new(small()).unwrap().system());
        assert_eq!(a, b);
        let other = Material::of(Simulation::new(SimConfig { seed: 5, ..small() }).unwrap().system());
        assert_ne!(a, other);
    }
}
