//! Model files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content                                          |
//! |-------|--------------------------------------------------|
//! | 8     | magic `FSMODEL\0`                                |
//! | 4     | format version, currently 1                      |
//! | 8     | parameter count M                                |
//! | 32    | SHA-256 of the layout description                |
//! | 8·M   | parameters as IEEE-754 binary64                  |

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::param::{Layout, ParameterVector};

pub const MODEL_MAGIC: &[u8; 8] = b"FSMODEL\0";
pub const MODEL_VERSION: u32 = 1;

pub fn layout_digest(layout: &Layout) -> [u8; 32] {
    Sha256::digest(layout.describe().as_bytes()).into()
}

pub fn write_model<W: Write>(model: &ParameterVector, mut w: W) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(model.len() as u64).to_le_bytes())?;
    w.write_all(&layout_digest(model.layout()))?;
    for v in model.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a model and checks it against the expected layout.
pub fn read_model<R: Read>(mut r: R, layout: &Layout) -> Result<ParameterVector> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("not a model file".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model file version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let m = u64::from_le_bytes(u64buf) as usize;
    if m != layout.total_len() {
        return Err(Error::Dimension {
            expected: layout.total_len(),
            got: m,
        });
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    if digest != layout_digest(layout) {
        return Err(Error::LayoutMismatch);
    }
    let mut values = Vec::with_capacity(m);
    for _ in 0..m {
        r.read_exact(&mut u64buf)?;
        values.push(f64::from_le_bytes(u64buf));
    }
    ParameterVector::new(values, layout.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{Loss, ModelSpec};

    #[test]
    fn roundtrip_and_layout_check() {
        let spec = ModelSpec::mlp(3, 2, Loss::MeanSquaredError);
        let values: Vec<f64> = (0..spec.parameter_count()).map(|i| i as f64 * 0.1 - 0.3).collect();
        let model = ParameterVector::new(values, spec.layout()).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 32 + 8 * model.len());
        assert_eq!(read_model(buf.as_slice(), &spec.layout()).unwrap(), model);

        let other = ModelSpec::linear(10, Loss::MeanSquaredError);
        assert_eq!(other.parameter_count(), spec.parameter_count());
        assert!(matches!(read_model(buf.as_slice(), &other.layout()), Err(Error::LayoutMismatch)));
        buf[0] = b'X';
        assert!(read_model(buf.as_slice(), &spec.layout()).is_err());
    }
}
