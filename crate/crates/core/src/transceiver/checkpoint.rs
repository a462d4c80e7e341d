//! Binary parameter checkpoints.
//!
//! ```text
//! "DSC1" | version u8 | count u32
//! per parameter: name_len u32 | name (UTF-8) | rank u32 | dims u32×rank | data f32×numel
//! ```
//! All integers and floats little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{DeepSc, ModelError, Result, TransceiverConfig};
use crate::tensor::{ParamStore, Tensor};
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DSC1";
pub const CHECKPOINT_VERSION: u8 = 1;

fn put_u32<W: Write>(w: &mut W, x: usize) -> Result<()> {
    let x = u32::try_from(x).map_err(|_| ModelError::Checkpoint(format!("{x} does not fit in u32")))?;
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn write_checkpoint<T: Scalar, W: Write>(store: &ParamStore<T>, w: &mut W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[CHECKPOINT_VERSION])?;
    put_u32(w, store.len())?;
    for (_, p) in store.iter() {
        put_u32(w, p.name.len())?;
        w.write_all(p.name.as_bytes())?;
        put_u32(w, p.value.rank())?;
        for &d in p.value.shape() {
            put_u32(w, d)?;
        }
        let mut buf = Vec::with_capacity(4 * p.value.numel());
        for &x in p.value.data() {
            buf.extend_from_slice(&x.as_f32().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Named tensors in file order.
pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let mut v = [0u8; 1];
    r.read_exact(&mut v)?;
    if v[0] != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {}", v[0])));
    }
    let count = get_u32(r)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n = get_u32(r)?;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| ModelError::Checkpoint(format!("parameter name: {e}")))?;
        let rank = get_u32(r)?;
        let shape = (0..rank).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; 4 * numel];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

impl<T: Scalar> DeepSc<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_checkpoint(&self.params, &mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Overwrite parameters from checkpoint entries; names and shapes must match exactly.
    pub fn load_entries(&mut self, entries: Vec<(String, Tensor<f32>)>) -> Result<()> {
        if entries.len() != self.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "checkpoint holds {} parameters, model expects {}",
                entries.len(),
                self.params.len()
            )));
        }
        for (name, t) in entries {
            let id = self
                .params
                .id_of(&name)
                .ok_or_else(|| ModelError::Checkpoint(format!("unknown parameter `{name}`")))?;
            self.params
                .set(id, t.cast())
                .map_err(|e| ModelError::Checkpoint(format!("parameter `{name}`: {e}")))?;
        }
        Ok(())
    }

    /// Build the architecture from `config` and fill it from a checkpoint file.
    pub fn load(path: impl AsRef<Path>, config: TransceiverConfig) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, config)
    }

    pub fn from_bytes(bytes: &[u8], config: TransceiverConfig) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.load_entries(read_checkpoint(&mut &bytes[..])?)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TransceiverConfig {
        TransceiverConfig {
            num_enc_layers: 1,
            num_dec_layers: 1,
            model_dim: 8,
            heads: 2,
            ffn_dim: 16,
            channel_hidden: 8,
            channel_units: 4,
            vocab_size: 9,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = DeepSc::<f32>::new(cfg(), 5).unwrap();
        let bytes = m.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"DSC1");
        assert_eq!(bytes[4], 1);
        let back = DeepSc::<f32>::from_bytes(&bytes, cfg()).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        for ((_, a), (_, b)) in m.params.iter().zip(back.params.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let m = DeepSc::<f32>::new(cfg(), 5).unwrap();
        let mut bytes = m.to_bytes().unwrap();
        assert!(DeepSc::<f32>::from_bytes(&bytes[..bytes.len() - 1], cfg()).is_err());
        let mut other = cfg();
        other.vocab_size = 10;
        assert!(DeepSc::<f32>::from_bytes(&bytes, other).is_err());
        bytes[0] = b'X';
        assert!(matches!(DeepSc::<f32>::from_bytes(&bytes, cfg()), Err(ModelError::Checkpoint(_))));
    }
}
