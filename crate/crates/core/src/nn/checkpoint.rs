//! Versioned binary checkpoint of a [`ModelState`].
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic            8 bytes  "EVOTOPCK"
//! version          u32      1
//! key length       u32
//! key              ASCII canonical genome key
//! height, width, channels, classes   u32 each
//! epochs_completed u32
//! rng seed         32 bytes
//! rng stream       u64
//! rng word pos     u128
//! array count      u32
//! weights          per array: u64 length, then f64 values
//! momentum         per array: u64 length, then f64 values
//! ```

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::model::{Architecture, ModelState};
use super::NnError;
use crate::genome::{parse_key, ShapeSpec};

pub const MAGIC: &[u8; 8] = b"EVOTOPCK";
pub const FORMAT_VERSION: u32 = 1;

impl ModelState {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        let key = self.arch.genome().canonical_key();
        let input = self.arch.input();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(key.len() as u32).to_le_bytes())?;
        w.write_all(key.as_bytes())?;
        for v in [input.height, input.width, input.channels, self.arch.num_classes()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.epochs_completed.to_le_bytes())?;
        w.write_all(&self.rng.get_seed())?;
        w.write_all(&self.rng.get_stream().to_le_bytes())?;
        w.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for arrays in [&self.params, &self.velocity] {
            for a in arrays.iter() {
                w.write_all(&(a.len() as u64).to_le_bytes())?;
                for v in a {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported format version {version}")));
        }
        let key_len = read_u32(&mut r)? as usize;
        let mut key = vec![0u8; key_len];
        r.read_exact(&mut key)?;
        let key = String::from_utf8(key).map_err(|_| NnError::Checkpoint("key is not ASCII".into()))?;
        let genome = parse_key(&key)?;
        let height = read_u32(&mut r)? as usize;
        let width = read_u32(&mut r)? as usize;
        let channels = read_u32(&mut r)? as usize;
        let classes = read_u32(&mut r)? as usize;
        let arch = Architecture::new(&genome, ShapeSpec::new(height, width, channels), classes)?;
        let epochs_completed = read_u32(&mut r)?;

        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let stream = u64::from_le_bytes(b8);
        let mut b16 = [0u8; 16];
        r.read_exact(&mut b16)?;
        let word_pos = u128::from_le_bytes(b16);
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        let count = read_u32(&mut r)? as usize;
        if count != arch.param_lengths().len() {
            return Err(NnError::Checkpoint(format!(
                "{count} arrays stored, architecture needs {}",
                arch.param_lengths().len()
            )));
        }
        let mut read_arrays = |r: &mut R| -> Result<Vec<Vec<f64>>, NnError> {
            let mut out = Vec::with_capacity(count);
            for &expected in arch.param_lengths() {
                r.read_exact(&mut b8)?;
                let len = u64::from_le_bytes(b8) as usize;
                if len != expected {
                    return Err(NnError::Checkpoint(format!("array of {len} values, expected {expected}")));
                }
                let mut a = Vec::with_capacity(len);
                for _ in 0..len {
                    r.read_exact(&mut b8)?;
                    a.push(f64::from_le_bytes(b8));
                }
                out.push(a);
            }
            Ok(out)
        };
        let params = read_arrays(&mut r)?;
        let velocity = read_arrays(&mut r)?;
        Ok(ModelState {
            arch,
            params,
            velocity,
            epochs_completed,
            rng,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        Self::read_from(bytes)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
