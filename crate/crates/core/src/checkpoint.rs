//! Versioned binary container for both models.
//!
//! Layout: 8-byte magic, little-endian `u32` version, little-endian `u64`
//! header length, a JSON header, then the SDF parameters followed by the
//! angle parameters as little-endian `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::angle::{AngleMode, AngleModel};
use crate::diff::{LayerSpec, SineNet};
use crate::error::{Error, Result};
use crate::sdf::SdfModel;

const MAGIC: &[u8; 8] = b"NCROSS\0\x01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Header {
    iteration: usize,
    stage: String,
    sdf_layers: Vec<LayerSpec>,
    sdf_input_scale: f64,
    sdf_len: usize,
    angle_mode: AngleMode,
    angle_len: usize,
    constrained: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Optimizer steps taken when the checkpoint was written.
    pub iteration: usize,
    pub stage: String,
    pub sdf: SdfModel,
    pub angle: AngleModel,
    /// Prescribed angles on feature-line faces; empty when there are none.
    pub constrained: Vec<Option<f64>>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            iteration: self.iteration,
            stage: self.stage.clone(),
            sdf_layers: self.sdf.net.layers().to_vec(),
            sdf_input_scale: self.sdf.net.input_scale(),
            sdf_len: self.sdf.net.param_count(),
            angle_mode: self.angle.mode(),
            angle_len: self.angle.param_count(),
            constrained: self.constrained.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 8 * (header.sdf_len + header.angle_len));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.sdf.net.params().iter().chain(self.angle.params()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let data = &body[hlen..];
        if data.len() != 8 * (header.sdf_len + header.angle_len) {
            return Err(bad("parameter block has the wrong size"));
        }
        let mut values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut net = SineNet::new(header.sdf_layers, header.sdf_input_scale)?;
        if net.param_count() != header.sdf_len {
            return Err(bad("sdf parameter count does not match its layers"));
        }
        for p in net.params_mut() {
            *p = values.next().unwrap();
        }
        let angle = AngleModel::from_params(header.angle_mode, values.collect())?;
        Ok(Self {
            iteration: header.iteration,
            stage: header.stage,
            sdf: SdfModel { net },
            angle,
            constrained: header.constrained,
        })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint behind.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::init_sdf;

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = Checkpoint {
            iteration: 12,
            stage: "joint".into(),
            sdf: init_sdf(4),
            angle: AngleModel::init_direct(7, 2),
            constrained: vec![None, Some(0.25), None],
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.sdf, ck.sdf);
        assert_eq!(back.angle.params(), ck.angle.params());
        assert_eq!(back.constrained, ck.constrained);
        assert_eq!(back.iteration, 12);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn network_mode_round_trip_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = Checkpoint {
            iteration: 0,
            stage: "joint".into(),
            sdf: init_sdf(1),
            angle: AngleModel::init_network(1),
            constrained: Vec::new(),
        };
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.angle.params(), ck.angle.params());
        assert_eq!(back.angle.mode(), AngleMode::Network);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(Checkpoint::from_bytes(b"hello world, not a checkpoint").is_err());
        let ck = Checkpoint {
            iteration: 0,
            stage: "joint".into(),
            sdf: init_sdf(1),
            angle: AngleModel::init_direct(3, 0),
            constrained: Vec::new(),
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }
}
