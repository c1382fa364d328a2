//! Versioned binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SRPN" | u32 version | u32 len + architecture hash (hex)
//! u32 len + architecture JSON | u32 len + model info JSON
//! u32 block count | per block: u16 len + name, u8 rank, u32 extents...
//! u32 epochs completed | f32 params...
//! u8 has optimizer | [u64 step, f32 m..., f32 v...]
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamParams};
use super::def::NetworkDef;
use super::network::Network;
use super::train::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::image::ReprKind;
use crate::noise::NoiseParams;
use crate::sim::CameraIntrinsics;

pub const MAGIC: &[u8; 4] = b"SRPN";
pub const VERSION: u32 = 1;

/// How observations for this model are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: ReprKind,
    pub noise: NoiseParams,
    /// Render camera; observations are resized to the network input.
    pub camera: CameraIntrinsics,
    pub train: TrainConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub info: ModelInfo,
    pub network: Network<f32>,
    pub adam: Option<Adam<f32>>,
    pub epochs_completed: usize,
}

impl Checkpoint {
    pub fn from_state(info: ModelInfo, state: &TrainState<f32>) -> Self {
        Self { info, network: state.network.clone(), adam: Some(state.adam.clone()), epochs_completed: state.epochs_completed }
    }

    /// Training state to continue from; a checkpoint without optimizer
    /// moments restarts them at zero.
    pub fn into_state(self, adam: AdamParams) -> TrainState<f32> {
        let n = self.network.num_params();
        let adam = self.adam.map(|a| Adam { params: adam, ..a }).unwrap_or_else(|| Adam::new(adam, n));
        TrainState { network: self.network, adam, epochs_completed: self.epochs_completed }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        let def = self.network.def();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut b, &def.hash());
        put_str(&mut b, &serde_json::to_string(def).expect("architecture serializes"));
        put_str(&mut b, &serde_json::to_string(&self.info).expect("info serializes"));
        b.extend_from_slice(&(self.network.blocks().len() as u32).to_le_bytes());
        for blk in self.network.blocks() {
            b.extend_from_slice(&(blk.name.len() as u16).to_le_bytes());
            b.extend_from_slice(blk.name.as_bytes());
            b.push(blk.shape.len() as u8);
            for &e in &blk.shape {
                b.extend_from_slice(&(e as u32).to_le_bytes());
            }
        }
        b.extend_from_slice(&(self.epochs_completed as u32).to_le_bytes());
        put_f32s(&mut b, self.network.params());
        match &self.adam {
            Some(a) => {
                b.push(1);
                b.extend_from_slice(&a.step.to_le_bytes());
                put_f32s(&mut b, &a.m);
                put_f32s(&mut b, &a.v);
            }
            None => b.push(0),
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.err(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version { found: version, expected: VERSION });
        }
        let hash = r.string()?;
        let at = r.pos;
        let def: NetworkDef = serde_json::from_str(&r.string()?).map_err(|e| r.err(at, &e.to_string()))?;
        if def.hash() != hash {
            return Err(r.err(at, "architecture hash does not match the stored architecture"));
        }
        def.validate()?;
        let at = r.pos;
        let info: ModelInfo = serde_json::from_str(&r.string()?).map_err(|e| r.err(at, &e.to_string()))?;
        let reference = Network::<f32>::zeros(&def)?;
        let at = r.pos;
        let count = r.u32()? as usize;
        if count != reference.blocks().len() {
            return Err(r.err(at, "block count does not match the architecture"));
        }
        for blk in reference.blocks() {
            let at = r.pos;
            let n = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(n)?).map_err(|_| r.err(at, "block name is not UTF-8"))?.to_string();
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            if name != blk.name || shape != blk.shape {
                return Err(r.err(at, &format!("shape table entry `{name}` does not match the architecture")));
            }
        }
        let epochs_completed = r.u32()? as usize;
        let params = r.f32s(reference.num_params())?;
        let network = Network::from_params(&def, params)?;
        let adam = match r.take(1)?[0] {
            0 => None,
            1 => {
                let step = r.u64()?;
                let m = r.f32s(network.num_params())?;
                let v = r.f32s(network.num_params())?;
                Some(Adam { params: info.train.adam, step, m, v })
            }
            _ => return Err(r.err(r.pos - 1, "bad optimizer flag")),
        };
        if r.pos != bytes.len() {
            return Err(r.err(r.pos, "trailing bytes"));
        }
        if !network.is_finite() {
            return Err(Error::InvalidValue("checkpoint holds non-finite parameters".into()));
        }
        Ok(Self { info, network, adam, epochs_completed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    b.extend_from_slice(&(s.len() as u32).to_le_bytes());
    b.extend_from_slice(s.as_bytes());
}

fn put_f32s(b: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: usize, message: &str) -> Error {
        Error::Malformed { format: "checkpoint", offset, message: message.to_string() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(self.pos, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let at = self.pos;
        let n = self.u32()? as usize;
        let s = self.take(n)?;
        String::from_utf8(s.to_vec()).map_err(|_| self.err(at, "string is not UTF-8"))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let s = self.take(n.checked_mul(4).ok_or_else(|| self.err(self.pos, "length overflow"))?)?;
        Ok(s.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
