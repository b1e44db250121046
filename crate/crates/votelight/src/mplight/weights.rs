//! Versioned binary weight container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   4 bytes  "VLQW"
//! version u32      1
//! layers  u32      layer count L
//! shapes  L x (in_dim u32, out_dim u32)
//! params  per layer: weights (out*in f32, row-major), then bias (out f32)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::net::{Dense, QNetwork};

const MAGIC: &[u8; 4] = b"VLQW";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    BadVersion(u32),
    #[error("weight file is truncated")]
    Truncated,
    #[error("layer shapes {got:?} do not match the expected {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
}

pub fn save(net: &QNetwork, path: impl AsRef<Path>) -> Result<(), WeightsError> {
    let path = path.as_ref();
    let io = |source| WeightsError::Io { path: path.display().to_string(), source };
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        buf.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
    }
    for layer in net.layers() {
        for v in layer.w.iter().chain(layer.b.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    // Atomic write: temp file in the same directory, then rename.
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

/// Load a network, verifying it has exactly the layer widths in `expected_dims`.
pub fn load(path: impl AsRef<Path>, expected_dims: &[usize]) -> Result<QNetwork, WeightsError> {
    let path = path.as_ref();
    let io = |source| WeightsError::Io { path: path.display().to_string(), source };
    let mut f = std::fs::File::open(path).map_err(io)?;
    let mut data = Vec::new();
    f.read_to_end(&mut data).map_err(io)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], WeightsError> {
        let slice = data.get(*cursor..*cursor + n).ok_or(WeightsError::Truncated)?;
        *cursor += n;
        Ok(slice)
    };
    if take(&mut cursor, 4)? != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(WeightsError::BadVersion(version));
    }
    let layer_count = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let mut shapes = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let in_dim = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let out_dim = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        shapes.push((in_dim, out_dim));
    }
    let mut got_dims = Vec::with_capacity(layer_count + 1);
    if let Some(&(first_in, _)) = shapes.first() {
        got_dims.push(first_in);
    }
    got_dims.extend(shapes.iter().map(|&(_, o)| o));
    if got_dims != expected_dims {
        return Err(WeightsError::ShapeMismatch {
            expected: expected_dims.to_vec(),
            got: got_dims,
        });
    }
    let mut layers = Vec::with_capacity(layer_count);
    for &(in_dim, out_dim) in &shapes {
        let read_f32s = |n: usize, cursor: &mut usize| -> Result<Vec<f32>, WeightsError> {
            let bytes = take(cursor, n * 4)?;
            Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let w = read_f32s(in_dim * out_dim, &mut cursor)?;
        let b = read_f32s(out_dim, &mut cursor)?;
        layers.push(Dense { in_dim, out_dim, w, b });
    }
    if cursor != data.len() {
        return Err(WeightsError::Truncated);
    }
    Ok(QNetwork::from_layers(layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_restores_bit_identical_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = QNetwork::new(&[12, 32, 32, 4], &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.bin");
        save(&net, &path).unwrap();
        let loaded = load(&path, &[12, 32, 32, 4]).unwrap();
        assert_eq!(loaded, net);
        // Identical Q outputs on random states.
        for _ in 0..100 {
            let state: Vec<f64> = (0..12).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            assert_eq!(net.forward(&state), loaded.forward(&state));
        }
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = QNetwork::new(&[12, 8, 4], &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.bin");
        save(&net, &path).unwrap();
        match load(&path, &[12, 32, 32, 4]) {
            Err(WeightsError::ShapeMismatch { got, .. }) => assert_eq!(got, vec![12, 8, 4]),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPE and then some").unwrap();
        assert!(matches!(load(&path, &[12, 4]), Err(WeightsError::BadMagic)));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = QNetwork::new(&[12, 4], &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.bin");
        save(&net, &path).unwrap();
        let data = std::fs::read(&path).unwrap();
        std::fs::write(&path, &data[..data.len() - 2]).unwrap();
        assert!(matches!(load(&path, &[12, 4]), Err(WeightsError::Truncated)));
    }
}
