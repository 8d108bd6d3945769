//! Binary parameter snapshots.
//!
//! Layout (little endian): magic `MRCP1`, `u32` metadata length, metadata
//! JSON, `u32` entry count, then per entry `u16` name length, name, `u8`
//! trainable flag, `u8` rank, `u32` dims, `f32` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Param, Real, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"MRCP1";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn from_params<T: Real>(params: &[&Param<T>], meta: serde_json::Value) -> Self {
        let entries = params
            .iter()
            .map(|p| Entry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                trainable: p.trainable,
                values: p.value.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect();
        Self { meta, entries }
    }

    /// Copies stored values into `params`, matched by name.
    pub fn restore<T: Real>(&self, params: &mut [&mut Param<T>]) -> Result<()> {
        for p in params.iter_mut() {
            let e = self
                .entries
                .iter()
                .find(|e| e.name == p.name)
                .ok_or_else(|| Error::Format(format!("checkpoint has no parameter {}", p.name)))?;
            if e.shape != p.value.shape() {
                return Err(Error::Shape(format!(
                    "{}: checkpoint shape {:?}, model shape {:?}",
                    p.name,
                    e.shape,
                    p.value.shape()
                )));
            }
            p.value = Tensor::from_vec(&e.shape, e.values.iter().map(|&v| T::lit(v as f64)).collect())?;
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        let meta = self.meta.to_string();
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta.as_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&(e.name.len() as u16).to_le_bytes())?;
            w.write_all(e.name.as_bytes())?;
            w.write_all(&[e.trainable as u8, e.shape.len() as u8])?;
            for &d in &e.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in &e.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let fmt = |e: std::io::Error| Error::Format(format!("truncated checkpoint: {e}"));
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let meta_len = read_u32(r).map_err(fmt)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta).map_err(fmt)?;
        let meta = serde_json::from_slice(&meta).map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
        let count = read_u32(r).map_err(fmt)?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut b2 = [0u8; 2];
            r.read_exact(&mut b2).map_err(fmt)?;
            let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
            r.read_exact(&mut name).map_err(fmt)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            r.read_exact(&mut b2).map_err(fmt)?;
            let shape = (0..b2[1])
                .map(|_| read_u32(r).map(|d| d as usize))
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(fmt)?;
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; 4 * n];
            r.read_exact(&mut raw).map_err(fmt)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push(Entry {
                name,
                shape,
                trainable: b2[0] != 0,
                values,
            });
        }
        Ok(Self { meta, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Vec<Param<f32>> {
        vec![
            Param::new("a/kernel", Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.5, 0.25]).unwrap()),
            Param::buffer("a/moving_mean", Tensor::from_vec(&[2], vec![0.5, 1.5]).unwrap()),
        ]
    }

    #[test]
    fn roundtrip_through_file() {
        let ps = params();
        let refs: Vec<&Param<f32>> = ps.iter().collect();
        let ck = Checkpoint::from_params(&refs, serde_json::json!({"epoch": 2}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);

        let mut fresh = vec![
            Param::new("a/kernel", Tensor::<f32>::zeros(&[2, 2])),
            Param::buffer("a/moving_mean", Tensor::<f32>::zeros(&[2])),
        ];
        let mut refs: Vec<&mut Param<f32>> = fresh.iter_mut().collect();
        back.restore(&mut refs).unwrap();
        assert_eq!(fresh[0].value, ps[0].value);
        assert_eq!(fresh[1].value, ps[1].value);
        assert!(!fresh[1].trainable);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Checkpoint::read_from(&mut &b"XXXXX"[..]).is_err());
        let ps = params();
        let refs: Vec<&Param<f32>> = ps.iter().collect();
        let ck = Checkpoint::from_params(&refs, serde_json::Value::Null);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&mut &buf[..buf.len() - 3]).is_err());
        let mut wrong = [Param::new("a/kernel", Tensor::<f32>::zeros(&[4]))];
        let mut refs: Vec<&mut Param<f32>> = wrong.iter_mut().collect();
        assert!(ck.restore(&mut refs).is_err());
    }
}
