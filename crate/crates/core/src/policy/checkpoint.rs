//! Versioned JSON checkpoints of the policy weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::PolicyNet;
use crate::error::CheckpointError;

pub const FORMAT: &str = "gfra-policy";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Column-major values.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub n_obs: usize,
    pub hidden: usize,
    pub n_pilots: usize,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_net(net: &PolicyNet) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            n_obs: net.n_obs(),
            hidden: net.hidden(),
            n_pilots: net.n_pilots(),
            tensors: net
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| TensorRecord {
                    name: name.to_string(),
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the network, checking every tensor's name and shape.
    pub fn to_net(&self) -> Result<PolicyNet, CheckpointError> {
        if self.format != FORMAT {
            return Err(CheckpointError::Format(format!("unknown format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(CheckpointError::Format(format!(
                "unsupported version {} (expected {VERSION})",
                self.version
            )));
        }
        let mut net = PolicyNet::zeros(self.n_obs, self.hidden, self.n_pilots);
        let expected = net.tensors();
        if expected.len() != self.tensors.len() {
            return Err(CheckpointError::Format(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape, _), rec) in expected.iter().zip(&self.tensors) {
            if *name != rec.name || *shape != rec.shape {
                return Err(CheckpointError::Format(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    rec.name, rec.shape, name, shape
                )));
            }
            if rec.data.len() != shape.iter().product::<usize>() {
                return Err(CheckpointError::Format(format!("tensor {} has wrong length", rec.name)));
            }
            if rec.data.iter().any(|v| !v.is_finite()) {
                return Err(CheckpointError::Format(format!(
                    "tensor {} has non-finite values",
                    rec.name
                )));
            }
        }
        let flat: Vec<f64> = self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect();
        net.set_flat(&flat);
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let text = serde_json::to_string(self).map_err(|e| CheckpointError::Format(e.to_string()))?;
        fs::write(path, text).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CheckpointError::Format(e.to_string()))
    }
}

/// Loads a checkpoint and checks it against the expected network dimensions.
pub fn load_net(path: &Path, n_obs: usize, n_pilots: usize) -> Result<PolicyNet, CheckpointError> {
    let net = Checkpoint::load(path)?.to_net()?;
    if net.n_obs() != n_obs || net.n_pilots() != n_pilots {
        return Err(CheckpointError::Mismatch(format!(
            "checkpoint has {} inputs and {} pilots, run needs {n_obs} inputs and {n_pilots} pilots",
            net.n_obs(),
            net.n_pilots()
        )));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = PolicyNet::random(7, 5, 3, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        Checkpoint::from_net(&net).save(&path).unwrap();
        assert_eq!(load_net(&path, 7, 3).unwrap(), net);
        assert!(matches!(load_net(&path, 8, 3), Err(CheckpointError::Mismatch(_))));
    }

    #[test]
    fn missing_and_corrupt_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("none.json");
        assert!(matches!(Checkpoint::load(&missing), Err(CheckpointError::Io { .. })));
        let bad = dir.path().join("bad.json");
        fs::write(&bad, "{\"format\": 1}").unwrap();
        assert!(matches!(Checkpoint::load(&bad), Err(CheckpointError::Format(_))));
        let mut ck = Checkpoint::from_net(&PolicyNet::zeros(2, 2, 1));
        ck.tensors[3].shape = vec![1];
        assert!(matches!(ck.to_net(), Err(CheckpointError::Format(_))));
    }
}
