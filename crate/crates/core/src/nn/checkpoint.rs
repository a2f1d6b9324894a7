//! Binary checkpoint: magic, format version, JSON header length, JSON header
//! (architecture, partition table, tags), then the parameters as 64-bit
//! little-endian floats.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::arch::ArchSpec;
use super::params::{LayerPartition, ParamVector};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"EVFLCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchSpec,
    pub params: ParamVector,
    /// Free-form labels such as `round` and `algorithm`.
    pub tags: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchSpec,
    segments: Vec<(String, Vec<usize>)>,
    tags: BTreeMap<String, String>,
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    let header = Header {
        arch: ckpt.arch.clone(),
        segments: ckpt
            .params
            .partition()
            .segments()
            .iter()
            .map(|s| (s.name.clone(), s.shape.clone()))
            .collect(),
        tags: ckpt.tags.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::io("writing checkpoint", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&json).map_err(io)?;
    let mut payload = Vec::with_capacity(ckpt.params.len() * 8);
    for v in ckpt.params.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload).map_err(io)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let io = |e| Error::io("reading checkpoint", e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word).map_err(io)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json)?;
    let partition = Arc::new(LayerPartition::from_shapes(header.segments));
    if *partition != LayerPartition::for_arch(&header.arch) {
        return Err(Error::Checkpoint(
            "partition table does not match the architecture".into(),
        ));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(io)?;
    if payload.len() != partition.total() * 8 {
        return Err(Error::Checkpoint(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            partition.total() * 8
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Checkpoint {
        arch: header.arch,
        params: ParamVector::from_values(partition, values)?,
        tags: header.tags,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, ckpt)?;
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, ArchKind};

    fn sample() -> Checkpoint {
        let arch = ArchSpec::new(ArchKind::Gru, 6).with_hidden(vec![4, 3, 2]);
        let mut params = init_model(&arch, 8).unwrap();
        params.values_mut()[0] = -0.0;
        params.values_mut()[1] = f64::MIN_POSITIVE / 3.0;
        let tags = BTreeMap::from([("round".to_string(), "3".to_string())]);
        Checkpoint { arch, params, tags }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ckpt).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.params.values()[0].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_checkpoint(bad.as_slice()),
            Err(Error::Checkpoint(_))
        ));
        let short = &buf[..buf.len() - 3];
        assert!(matches!(read_checkpoint(short), Err(Error::Checkpoint(_))));
        let mut wrong_version = buf;
        wrong_version[8] = 9;
        assert!(matches!(
            read_checkpoint(wrong_version.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ckpt = sample();
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }
}
