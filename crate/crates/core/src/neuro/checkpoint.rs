use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{Dense, QNetwork};
use super::NeuroError;

pub const CHECKPOINT_FORMAT: &str = "sidelink-qnet";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredNetwork {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    format: String,
    version: u32,
    networks: Vec<StoredNetwork>,
    checksum: String,
}

fn digest(networks: &[StoredNetwork]) -> String {
    let mut h = Sha256::new();
    h.update((networks.len() as u64).to_le_bytes());
    for n in networks {
        h.update((n.layer_sizes.len() as u64).to_le_bytes());
        for &s in &n.layer_sizes {
            h.update((s as u64).to_le_bytes());
        }
        for p in &n.params {
            h.update(p.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn rebuild(n: &StoredNetwork) -> Result<QNetwork, NeuroError> {
    let sizes = &n.layer_sizes;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(NeuroError::Checkpoint(format!("bad layer sizes {sizes:?}")));
    }
    let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if n.params.len() != expected {
        return Err(NeuroError::Checkpoint(format!("{} parameters for sizes {sizes:?}", n.params.len())));
    }
    if n.params.iter().any(|p| !p.is_finite()) {
        return Err(NeuroError::Checkpoint("non-finite parameter".into()));
    }
    let mut rest = &n.params[..];
    let mut layers = Vec::new();
    for w in sizes.windows(2) {
        let (wt, tail) = rest.split_at(w[0] * w[1]);
        let (b, tail) = tail.split_at(w[1]);
        rest = tail;
        layers.push(Dense {
            weights: Array2::from_shape_vec((w[0], w[1]), wt.to_vec()).map_err(|e| NeuroError::Checkpoint(e.to_string()))?,
            bias: Array1::from(b.to_vec()),
        });
    }
    QNetwork::from_layers(layers)
}

/// Serializes networks to the JSON container.
pub fn write_checkpoint<W: Write>(mut writer: W, networks: &[QNetwork]) -> Result<(), NeuroError> {
    let stored: Vec<StoredNetwork> = networks
        .iter()
        .map(|n| StoredNetwork { layer_sizes: n.layer_sizes(), params: n.params_flat() })
        .collect();
    let container = Container {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        checksum: digest(&stored),
        networks: stored,
    };
    serde_json::to_writer(&mut writer, &container).map_err(|e| NeuroError::Checkpoint(e.to_string()))?;
    writer.write_all(b"\n").map_err(|e| NeuroError::Io("<writer>".into(), e))
}

pub fn read_checkpoint(text: &str) -> Result<Vec<QNetwork>, NeuroError> {
    let c: Container = serde_json::from_str(text).map_err(|e| NeuroError::Checkpoint(e.to_string()))?;
    if c.format != CHECKPOINT_FORMAT {
        return Err(NeuroError::Checkpoint(format!("unknown format {:?}", c.format)));
    }
    if c.version != CHECKPOINT_VERSION {
        return Err(NeuroError::Checkpoint(format!("unsupported version {}", c.version)));
    }
    if digest(&c.networks) != c.checksum {
        return Err(NeuroError::Checkpoint("checksum mismatch".into()));
    }
    c.networks.iter().map(rebuild).collect()
}

/// Writes atomically: a sibling temp file is renamed over `path`.
pub fn save_checkpoint(path: &Path, networks: &[QNetwork]) -> Result<(), NeuroError> {
    let io = |e| NeuroError::Io(path.display().to_string(), e);
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp).map_err(io)?);
        write_checkpoint(&mut file, networks)?;
        let file = file.into_inner().map_err(|e| io(e.into_error()))?;
        file.sync_all().map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<QNetwork>, NeuroError> {
    let text = std::fs::read_to_string(path).map_err(|e| NeuroError::Io(path.display().to_string(), e))?;
    read_checkpoint(&text)
}
