//! Params serialization.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes   "TANGPRM\0"
//! version    u32       1
//! use_bias   u8        0 or 1
//! n_sizes    u32       k + 1
//! sizes      u64 x n_sizes
//! weights    f64 blocks, one per layer, row-major N_{i-1} x N_i
//! biases     f64 blocks, one per layer, N_i each
//! ```
//!
//! Bias blocks are written for biasless networks too (all zero) so the layout
//! depends only on the layer sizes. The JSON form carries the same fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::network::{NetworkSpec, Params};
use crate::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 8] = b"TANGPRM\0";
pub const PARAMS_VERSION: u32 = 1;
const JSON_FORMAT: &str = "tangent-params";

pub fn write_params<W: Write>(params: &Params, mut w: W) -> Result<()> {
    let spec = params.spec();
    w.write_all(PARAMS_MAGIC)?;
    w.write_all(&PARAMS_VERSION.to_le_bytes())?;
    w.write_all(&[u8::from(spec.use_bias())])?;
    w.write_all(&(spec.layer_sizes().len() as u32).to_le_bytes())?;
    for &n in spec.layer_sizes() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for m in params.weights() {
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for b in params.biases() {
        for v in b {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> std::result::Result<[u8; N], (u64, String)> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| (self.offset, format!("truncated checkpoint: {e}")))?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, (u64, String)> {
        (0..n).map(|_| self.bytes::<8>().map(f64::from_le_bytes)).collect()
    }
}

fn decode<R: Read>(r: R) -> std::result::Result<Params, (u64, String)> {
    let mut c = Cursor { inner: r, offset: 0 };
    let magic = c.bytes::<8>()?;
    if &magic != PARAMS_MAGIC {
        return Err((0, "bad magic; not a params checkpoint".into()));
    }
    let version = u32::from_le_bytes(c.bytes::<4>()?);
    if version != PARAMS_VERSION {
        return Err((8, format!("unsupported checkpoint version {version}")));
    }
    let use_bias = match c.bytes::<1>()?[0] {
        0 => false,
        1 => true,
        other => return Err((12, format!("invalid use_bias flag {other}"))),
    };
    let n_sizes = u32::from_le_bytes(c.bytes::<4>()?) as usize;
    if n_sizes > 4096 {
        return Err((13, format!("implausible layer count {n_sizes}")));
    }
    let sizes = (0..n_sizes)
        .map(|_| c.bytes::<8>().map(|b| u64::from_le_bytes(b) as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let spec = NetworkSpec::new(sizes.clone(), use_bias).map_err(|e| (17, e.to_string()))?;
    let mut weights = Vec::with_capacity(spec.depth());
    for w in sizes.windows(2) {
        let data = c.f64s(w[0] * w[1])?;
        weights.push(Matrix::from_vec(w[0], w[1], data).unwrap());
    }
    let mut biases = Vec::with_capacity(spec.depth());
    for &n in &sizes[1..] {
        biases.push(c.f64s(n)?);
    }
    let offset = c.offset;
    Params::from_parts(spec, weights, biases).map_err(|e| (offset, e.to_string()))
}

pub fn read_params<R: Read>(r: R) -> Result<Params> {
    decode(r).map_err(|(offset, message)| Error::Format {
        path: "<stream>".into(),
        offset,
        message,
    })
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    use_bias: bool,
    /// Row-major source x target blocks.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

pub fn params_to_json(params: &Params) -> Result<String> {
    let spec = params.spec();
    let doc = ParamsJson {
        format: JSON_FORMAT.into(),
        version: PARAMS_VERSION,
        layer_sizes: spec.layer_sizes().to_vec(),
        use_bias: spec.use_bias(),
        weights: params.weights().iter().map(|m| m.as_slice().to_vec()).collect(),
        biases: params.biases().to_vec(),
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn params_from_json(text: &str) -> Result<Params> {
    let doc: ParamsJson = serde_json::from_str(text)?;
    if doc.format != JSON_FORMAT || doc.version != PARAMS_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported params document {:?} version {}",
            doc.format, doc.version
        )));
    }
    let spec = NetworkSpec::new(doc.layer_sizes.clone(), doc.use_bias)?;
    if doc.weights.len() != spec.depth() {
        return Err(Error::shape("weight block count does not match layer sizes"));
    }
    let weights = doc
        .layer_sizes
        .windows(2)
        .zip(doc.weights)
        .enumerate()
        .map(|(i, (w, data))| {
            Matrix::from_vec(w[0], w[1], data)
                .ok_or_else(|| Error::shape(format!("layer {} weight block has wrong length", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Params::from_parts(spec, weights, doc.biases)
}

/// Saves as JSON when the extension is `.json`, binary otherwise.
pub fn save_params(params: &Params, path: &Path) -> Result<()> {
    let io_err = |source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    };
    if is_json(path) {
        std::fs::write(path, params_to_json(params)?).map_err(io_err)
    } else {
        let f = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(f);
        write_params(params, &mut w)?;
        w.flush().map_err(io_err)
    }
}

pub fn load_params(path: &Path) -> Result<Params> {
    let io_err = |source| Error::FileIo {
        path: path.to_path_buf(),
        source,
    };
    if is_json(path) {
        params_from_json(&std::fs::read_to_string(path).map_err(io_err)?)
    } else {
        let f = File::open(path).map_err(io_err)?;
        decode(BufReader::new(f)).map_err(|(offset, message)| Error::Format {
            path: path.to_path_buf(),
            offset,
            message,
        })
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::random_params;

    #[test]
    fn binary_header_layout() {
        let spec = NetworkSpec::new(vec![2, 3, 1], true).unwrap();
        let p = random_params(&spec, 3, 1.0);
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        assert_eq!(&buf[..8], PARAMS_MAGIC);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(buf[12], 1);
        assert_eq!(u32::from_le_bytes(buf[13..17].try_into().unwrap()), 3);
        let header = 17 + 3 * 8;
        assert_eq!(buf.len(), header + (6 + 3 + 3 + 1) * 8);
        let first_weight = f64::from_le_bytes(buf[header..header + 8].try_into().unwrap());
        assert_eq!(first_weight, p.weights()[0].get(0, 0));
        assert_eq!(read_params(&buf[..]).unwrap(), p);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let spec = NetworkSpec::new(vec![2, 3, 1], false).unwrap();
        let p = random_params(&spec, 1, 1.0);
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        let err = read_params(&buf[..buf.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_params(&bad[..]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn json_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = NetworkSpec::new(vec![4, 5, 2], true).unwrap();
        let p = random_params(&spec, 9, 0.5);
        for name in ["p.json", "p.bin"] {
            let path = dir.path().join(name);
            save_params(&p, &path).unwrap();
            assert_eq!(load_params(&path).unwrap(), p);
        }
        let missing = load_params(&dir.path().join("nope.bin")).unwrap_err();
        assert!(missing.to_string().contains("nope.bin"));
    }
}
