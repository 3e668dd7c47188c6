//! Versioned binary checkpoint.
//!
//! ```text
//! magic     8 bytes  "BRSCLSTM"
//! version   u32 LE
//! config    u32 LE length + JSON-encoded LstmConfig
//! scaler    u32 LE feature count n, then n means and n stds (f64 LE)
//! params    u64 LE count, then that many f64 LE
//! checksum  u32 LE CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::config::LstmConfig;
use super::params::LstmParams;
use super::train::Classifier;
use super::LstmError;
use crate::dataset::Scaler;

pub const MAGIC: &[u8; 8] = b"BRSCLSTM";
pub const VERSION: u32 = 1;

pub fn encode(classifier: &Classifier) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&classifier.params.config).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    let sc = &classifier.scaler;
    out.extend_from_slice(&(sc.mean.len() as u32).to_le_bytes());
    for v in sc.mean.iter().chain(&sc.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(classifier.params.values.len() as u64).to_le_bytes());
    for v in &classifier.params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LstmError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| LstmError::Corrupt("payload ends early".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LstmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LstmError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, LstmError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| LstmError::Corrupt("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Classifier, LstmError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(LstmError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + 4 {
        return Err(LstmError::Corrupt("file too short".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(LstmError::Version(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(LstmError::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let cfg_len = r.u32()? as usize;
    let config: LstmConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| LstmError::Corrupt(format!("config block: {e}")))?;
    let n_scale = r.u32()? as usize;
    let mean = r.f64s(n_scale)?;
    let std = r.f64s(n_scale)?;
    let n_params = r.u64()? as usize;
    let values = r.f64s(n_params)?;
    if r.pos != body.len() {
        return Err(LstmError::Corrupt("trailing bytes".into()));
    }
    let params = LstmParams::from_values(&config, values)?;
    if n_scale != config.input_size {
        return Err(LstmError::Shape(format!(
            "scaler covers {} features, network expects {}",
            n_scale, config.input_size
        )));
    }
    Ok(Classifier {
        params,
        scaler: Scaler { mean, std },
    })
}

pub fn save_checkpoint(classifier: &Classifier, path: &Path) -> Result<(), LstmError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode(classifier))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Classifier, LstmError> {
    decode(&fs::read(path)?)
}

/// Loads a checkpoint and insists it matches `expected`.
pub fn load_checkpoint_as(path: &Path, expected: &LstmConfig) -> Result<Classifier, LstmError> {
    let c = load_checkpoint(path)?;
    if &c.params.config != expected {
        return Err(LstmError::Shape(format!(
            "checkpoint architecture {:?}/{:?} differs from expected {:?}/{:?}",
            c.params.config.lstm_units, c.params.config.dense_units, expected.lstm_units, expected.dense_units
        )));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Classifier {
        let cfg = LstmConfig {
            input_size: 3,
            lstm_units: vec![4, 3],
            dropout: vec![0.1, 0.2],
            dense_units: vec![3],
            sequence_length: 6,
        };
        Classifier {
            params: LstmParams::init(&cfg, 5).unwrap(),
            scaler: Scaler {
                mean: vec![0.1, -2.0, 3.5],
                std: vec![1.0, 0.25, 7.0],
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = decode(&encode(&c)).unwrap();
        assert_eq!(back, c);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params.values), bits(&c.params.values));
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode(&sample());
        for cut in [13, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(LstmError::Corrupt(_))), "cut {cut}");
        }
    }

    #[test]
    fn flipped_bit_is_detected() {
        let mut bytes = encode(&sample());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(matches!(decode(&bytes), Err(LstmError::Corrupt(_))));
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut bytes = encode(&sample());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(LstmError::BadMagic)));
        let mut bytes = encode(&sample());
        bytes[8] = 9;
        assert!(matches!(decode(&bytes), Err(LstmError::Version(9))));
    }

    #[test]
    fn loading_into_other_architecture_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&sample(), &p).unwrap();
        let other = LstmConfig {
            lstm_units: vec![5, 3],
            ..sample().params.config
        };
        assert!(matches!(load_checkpoint_as(&p, &other), Err(LstmError::Shape(_))));
        assert!(load_checkpoint_as(&p, &sample().params.config).is_ok());
    }
}
