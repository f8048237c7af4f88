//! Binary checkpoint: magic `GCRN`, a little-endian `u16` format version,
//! the dimensions (N, d_in, h, H, F) as little-endian `u32`, then every
//! parameter as a little-endian `f64` in [`GCRNModel::blocks`] order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gcrn::model::{GCRNModel, ModelDims};

pub const MAGIC: &[u8; 4] = b"GCRN";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 5 * 4;

pub fn encode_checkpoint(model: &GCRNModel) -> Vec<u8> {
    let d = model.dims;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [d.n_nodes, d.d_in, d.hidden, d.history, d.horizon] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for x in model.flatten() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<GCRNModel> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not a model checkpoint"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let dim = |k: usize| {
        let o = 6 + 4 * k;
        u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
    };
    let dims = ModelDims {
        n_nodes: dim(0),
        d_in: dim(1),
        hidden: dim(2),
        history: dim(3),
        horizon: dim(4),
    };
    let mut model = GCRNModel::zeros(dims).map_err(|e| Error::format(path, e.to_string()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * model.param_count() {
        return Err(Error::format(
            path,
            format!(
                "expected {} parameters, found {} bytes",
                model.param_count(),
                body.len()
            ),
        ));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    model.set_flat(&flat)?;
    Ok(model)
}

pub fn write_checkpoint(path: &Path, model: &GCRNModel) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<GCRNModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn model() -> GCRNModel {
        let dims = ModelDims {
            n_nodes: 4,
            d_in: 3,
            hidden: 5,
            history: 6,
            horizon: 2,
        };
        GCRNModel::new(dims, &mut SeededRng::new(0)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = model();
        write_checkpoint(&path, &m).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), m);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"GCRN");
        assert_eq!(bytes.len(), HEADER_LEN + 8 * m.param_count());
    }

    #[test]
    fn header_layout() {
        let b = encode_checkpoint(&model());
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes([b[6], b[7], b[8], b[9]]), 4);
        assert_eq!(u32::from_le_bytes([b[22], b[23], b[24], b[25]]), 2);
        // first parameter is encoder r.W[0,0]
        let first = f64::from_le_bytes(b[26..34].try_into().unwrap());
        assert_eq!(first, model().encoder.r.w[(0, 0)]);
    }

    #[test]
    fn corrupt_files_rejected() {
        let p = Path::new("x.ckpt");
        let mut b = encode_checkpoint(&model());
        assert!(decode_checkpoint(&b[..10], p).is_err());
        b.pop();
        assert!(matches!(
            decode_checkpoint(&b, p),
            Err(Error::Format { .. })
        ));
        b[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&b, p),
            Err(Error::Format { .. })
        ));
    }
}
