//! Binary checkpoints.
//!
//! Layout (little-endian): magic `SBTC`, `u32` version, `u32`-length-prefixed
//! kind tag, `u32` tensor count, then per tensor a `u32`-length-prefixed name,
//! `u32` rank, `u64` dims and `f64` data in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{io_err, Error, Result};
use crate::neural::{Dense, MlpTransform};

use super::code::{ScaledOrthonormal, Transform, TransformCode};
use super::entropy_model::FactorizedEntropyModel;
use super::fixed::FixedKind;

const MAGIC: &[u8; 4] = b"SBTC";
pub const CHECKPOINT_VERSION: u32 = 1;
const MLP_TAG: &str = "mlp";

#[derive(Debug, Clone, PartialEq)]
struct Tensor {
    name: String,
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn matrix(name: impl Into<String>, m: &Array2<f64>) -> Self {
        Self {
            name: name.into(),
            dims: m.shape().to_vec(),
            data: m.iter().copied().collect(),
        }
    }

    fn vector(name: impl Into<String>, v: &Array1<f64>) -> Self {
        Self {
            name: name.into(),
            dims: vec![v.len()],
            data: v.to_vec(),
        }
    }

    fn into_matrix(self) -> Result<Array2<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::Checkpoint(format!("`{}` is not a matrix", self.name)));
        }
        Array2::from_shape_vec((self.dims[0], self.dims[1]), self.data).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn into_vector(self) -> Result<Array1<f64>> {
        if self.dims.len() != 1 {
            return Err(Error::Checkpoint(format!("`{}` is not a vector", self.name)));
        }
        Ok(Array1::from(self.data))
    }
}

fn encode(kind: &str, tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let put_str = |out: &mut Vec<u8>, s: &str| {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    };
    put_str(&mut out, kind);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        put_str(&mut out, &t.name);
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.buf.len() < len {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, tail) = self.buf.split_at(len);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("non-UTF-8 name".into()))
    }
}

fn decode(bytes: &[u8]) -> Result<(String, Vec<Tensor>)> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = r.string()?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= r.buf.len()))
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` overruns the file")))?;
        let raw = r.take(len * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(Tensor { name, dims, data });
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((kind, tensors))
}

fn mlp_tensors(prefix: &str, net: &MlpTransform, out: &mut Vec<Tensor>) {
    for (i, layer) in net.layers.iter().enumerate() {
        out.push(Tensor::matrix(format!("{prefix}.{i}.weight"), &layer.weight));
        out.push(Tensor::vector(format!("{prefix}.{i}.bias"), &layer.bias));
    }
}

pub fn checkpoint_bytes(code: &TransformCode) -> Vec<u8> {
    let mut tensors = Vec::new();
    let kind = match &code.transform {
        Transform::Fixed(f) => {
            tensors.push(Tensor::matrix("basis", &f.basis));
            tensors.push(Tensor::vector("analysis_scale", &f.analysis_scale));
            tensors.push(Tensor::vector("synthesis_scale", &f.synthesis_scale));
            f.kind.as_str()
        }
        Transform::Mlp { analysis, synthesis } => {
            tensors.push(Tensor::vector("slope", &Array1::from(vec![analysis.slope, synthesis.slope])));
            mlp_tensors("analysis", analysis, &mut tensors);
            mlp_tensors("synthesis", synthesis, &mut tensors);
            MLP_TAG
        }
    };
    tensors.push(Tensor::matrix("entropy.logits", code.entropy.logits()));
    encode(kind, &tensors)
}

fn take_tensor(tensors: &mut Vec<Tensor>, name: &str) -> Result<Tensor> {
    let pos = tensors
        .iter()
        .position(|t| t.name == name)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
    Ok(tensors.remove(pos))
}

fn take_mlp(tensors: &mut Vec<Tensor>, prefix: &str, slope: f64) -> Result<MlpTransform> {
    let mut layers = Vec::new();
    while tensors.iter().any(|t| t.name == format!("{prefix}.{}.weight", layers.len())) {
        let i = layers.len();
        let weight = take_tensor(tensors, &format!("{prefix}.{i}.weight"))?.into_matrix()?;
        let bias = take_tensor(tensors, &format!("{prefix}.{i}.bias"))?.into_vector()?;
        layers.push(Dense { weight, bias });
    }
    Ok(MlpTransform { layers, slope })
}

pub fn code_from_bytes(bytes: &[u8]) -> Result<TransformCode> {
    let (kind, mut tensors) = decode(bytes)?;
    let logits = take_tensor(&mut tensors, "entropy.logits")?.into_matrix()?;
    if logits.ncols() % 2 == 0 {
        return Err(Error::Checkpoint("entropy table must have an odd bin count".into()));
    }
    let entropy = FactorizedEntropyModel::from_logits(logits.ncols() / 2, logits)?;
    let transform = if kind == MLP_TAG {
        let slope = take_tensor(&mut tensors, "slope")?.into_vector()?;
        if slope.len() != 2 {
            return Err(Error::Checkpoint("slope tensor must hold two values".into()));
        }
        let analysis = take_mlp(&mut tensors, "analysis", slope[0])?;
        let synthesis = take_mlp(&mut tensors, "synthesis", slope[1])?;
        Transform::Mlp { analysis, synthesis }
    } else {
        let kind: FixedKind = kind.parse().map_err(|_| Error::Checkpoint(format!("unknown kind tag `{kind}`")))?;
        Transform::Fixed(ScaledOrthonormal {
            kind,
            basis: take_tensor(&mut tensors, "basis")?.into_matrix()?,
            analysis_scale: take_tensor(&mut tensors, "analysis_scale")?.into_vector()?,
            synthesis_scale: take_tensor(&mut tensors, "synthesis_scale")?.into_vector()?,
        })
    };
    if let Some(extra) = tensors.first() {
        return Err(Error::Checkpoint(format!("unexpected tensor `{}`", extra.name)));
    }
    TransformCode::new(transform, entropy).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_checkpoint(code: &TransformCode, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&checkpoint_bytes(code)).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<TransformCode> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err(path))?;
    code_from_bytes(&bytes)
}
