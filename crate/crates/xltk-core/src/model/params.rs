//! Flat named-parameter registry and the binary checkpoint format.

use super::ModelError;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"XLCK";
const VERSION: u16 = 1;

/// One named tensor of trainable or frozen weights.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// All model parameters in a fixed, deterministic order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    pub params: Vec<Param>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>, trainable: bool) {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
        debug_assert!(self.index_of(&name).is_none(), "duplicate param {name}");
        self.params.push(Param {
            name,
            shape,
            data,
            trainable,
        });
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> &Param {
        self.params
            .iter()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Param {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    /// (trainable, total) element counts.
    pub fn count(&self) -> (usize, usize) {
        let total: usize = self.params.iter().map(Param::len).sum();
        let trainable: usize = self
            .params
            .iter()
            .filter(|p| p.trainable)
            .map(Param::len)
            .sum();
        (trainable, total)
    }
}

/// Write a checkpoint: magic, version, string metadata pairs, then every
/// parameter with its name, shape and raw f64 data (little endian).
pub fn save_checkpoint(
    path: &Path,
    set: &ParamSet,
    meta: &[(String, String)],
) -> Result<(), ModelError> {
    let io = |e: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let f = std::fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(f);
    let mut out = |bytes: &[u8]| w.write_all(bytes).map_err(io);

    out(MAGIC)?;
    out(&VERSION.to_le_bytes())?;
    out(&(meta.len() as u16).to_le_bytes())?;
    for (k, v) in meta {
        for s in [k, v] {
            out(&(s.len() as u16).to_le_bytes())?;
            out(s.as_bytes())?;
        }
    }
    out(&(set.params.len() as u32).to_le_bytes())?;
    for p in &set.params {
        out(&(p.name.len() as u16).to_le_bytes())?;
        out(p.name.as_bytes())?;
        out(&[p.trainable as u8, p.shape.len() as u8])?;
        for &d in &p.shape {
            out(&(d as u32).to_le_bytes())?;
        }
        for &v in &p.data {
            out(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamSet, Vec<(String, String)>), ModelError> {
    let io = |e: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let f = std::fs::File::open(path).map_err(io)?;
    let mut r = BufReader::new(f);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(ModelError::BadCheckpoint {
            path: path.display().to_string(),
            reason: "bad magic".into(),
        });
    }
    let version = read_u16(&mut r, path)?;
    if version != VERSION {
        return Err(ModelError::BadCheckpoint {
            path: path.display().to_string(),
            reason: format!("unsupported version {version}"),
        });
    }

    let n_meta = read_u16(&mut r, path)? as usize;
    let mut meta = Vec::with_capacity(n_meta);
    for _ in 0..n_meta {
        let k = read_string(&mut r, path)?;
        let v = read_string(&mut r, path)?;
        meta.push((k, v));
    }

    let n_params = read_u32(&mut r, path)? as usize;
    let mut set = ParamSet::default();
    for _ in 0..n_params {
        let name = read_string(&mut r, path)?;
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags).map_err(io)?;
        let (trainable, rank) = (flags[0] != 0, flags[1] as usize);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, path)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = vec![0.0; len];
        let mut buf = [0u8; 8];
        for slot in &mut data {
            r.read_exact(&mut buf).map_err(io)?;
            *slot = f64::from_le_bytes(buf);
        }
        set.params.push(Param {
            name,
            shape,
            data,
            trainable,
        });
    }
    Ok((set, meta))
}

fn read_u16(r: &mut impl Read, path: &Path) -> Result<u16, ModelError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut impl Read, path: &Path) -> Result<String, ModelError> {
    let len = read_u16(r, path)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    String::from_utf8(buf).map_err(|_| ModelError::BadCheckpoint {
        path: path.display().to_string(),
        reason: "non-utf8 string".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip() {
        let mut set = ParamSet::default();
        set.push("a.w", vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, 1e-9, 7.0], true);
        set.push("a.b", vec![3], vec![0.5, 0.25, 0.125], false);
        let meta = vec![("proj_dim".to_string(), "512".to_string())];

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.xlck");
        save_checkpoint(&path, &set, &meta).unwrap();
        let (back, meta2) = load_checkpoint(&path).unwrap();

        assert_eq!(meta2, meta);
        assert_eq!(back.params.len(), 2);
        assert_eq!(back.params[0].name, "a.w");
        assert_eq!(back.params[0].shape, vec![2, 3]);
        assert_eq!(back.params[0].data, set.params[0].data);
        assert!(back.params[0].trainable);
        assert!(!back.params[1].trainable);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.xlck");
        std::fs::write(&path, b"NOPE0000").unwrap();
        match load_checkpoint(&path) {
            Err(ModelError::BadCheckpoint { reason, .. }) => assert!(reason.contains("magic")),
            other => panic!("expected BadCheckpoint, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncated_file() {
        let mut set = ParamSet::default();
        set.push("w", vec![4], vec![1.0, 2.0, 3.0, 4.0], true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.xlck");
        save_checkpoint(&path, &set, &[]).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 5]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
