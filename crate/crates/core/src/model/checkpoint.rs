//! Little-endian binary checkpoint format.
//!
//! ```text
//! magic "HOFS" | u32 version
//! u32 n | u32 dims[n]            mapping layer widths, 3 ... 6
//! u32 n | u32 encoder[n]         0 = none, 1 = learned code, 2 = conv
//! u64 iteration | u32 flags      bit 0 params, bit 1 adam, bit 2 theta
//! [u64 n | f64 params[n]]
//! [u64 step | u64 n | f64 m[n] | f64 v[n]]
//! [u64 n | f64 theta[n]]
//! ```

use std::io::Write;
use std::path::Path;

use super::encoder::{ConvTrunkSpec, EncoderMode, EncoderSpec, HofModel};
use super::mapping::{MappingNetSpec, WeightVector};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HOFS";
pub const CHECKPOINT_VERSION: u32 = 1;

const FLAG_PARAMS: u32 = 1;
const FLAG_ADAM: u32 = 2;
const FLAG_THETA: u32 = 4;

/// Adam moment estimates stored alongside the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSnapshot {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub mapping: MappingNetSpec,
    pub encoder: Option<EncoderSpec>,
    pub iteration: u64,
    pub params: Option<Vec<f64>>,
    pub optimizer: Option<OptimizerSnapshot>,
    /// Mapping weights on their own, for checkpoints without an encoder.
    pub theta: Option<Vec<f64>>,
}

impl Checkpoint {
    pub fn from_model(model: &HofModel, iteration: u64, optimizer: Option<OptimizerSnapshot>) -> Self {
        Self {
            mapping: model.mapping.clone(),
            encoder: Some(model.encoder.clone()),
            iteration,
            params: Some(model.flat_params()),
            optimizer,
            theta: None,
        }
    }

    pub fn from_theta(mapping: &MappingNetSpec, theta: &WeightVector) -> Self {
        Self {
            mapping: mapping.clone(),
            encoder: None,
            iteration: 0,
            params: None,
            optimizer: None,
            theta: Some(theta.values.clone()),
        }
    }

    pub fn model(&self) -> Result<HofModel> {
        let (Some(enc), Some(params)) = (&self.encoder, &self.params) else {
            return Err(Error::contract("checkpoint has no encoder parameters"));
        };
        HofModel::from_flat(self.mapping.clone(), enc.clone(), params)
    }

    pub fn theta(&self) -> Result<WeightVector> {
        let Some(theta) = &self.theta else {
            return Err(Error::contract("checkpoint has no stored mapping weights"));
        };
        let need = self.mapping.param_count();
        if theta.len() != need {
            return Err(Error::contract(format!(
                "checkpoint holds {} mapping weights but the spec needs {need}",
                theta.len()
            )));
        }
        WeightVector::new(&self.mapping, theta.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut b, CHECKPOINT_VERSION);
        let dims = self.mapping.layer_dims();
        put_u32(&mut b, dims.len() as u32);
        dims.iter().for_each(|&d| put_u32(&mut b, d as u32));
        let enc = encode_encoder(self.encoder.as_ref());
        put_u32(&mut b, enc.len() as u32);
        enc.iter().for_each(|&d| put_u32(&mut b, d));
        b.extend_from_slice(&self.iteration.to_le_bytes());
        let flags = ((self.params.is_some() as u32) * FLAG_PARAMS) | ((self.optimizer.is_some() as u32) * FLAG_ADAM) | ((self.theta.is_some() as u32) * FLAG_THETA);
        put_u32(&mut b, flags);
        if let Some(p) = &self.params {
            put_f64s(&mut b, p);
        }
        if let Some(o) = &self.optimizer {
            b.extend_from_slice(&o.step.to_le_bytes());
            put_f64s(&mut b, &o.m);
            b.extend_from_slice(&o.v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<_>>());
        }
        if let Some(t) = &self.theta {
            put_f64s(&mut b, t);
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(r.fail("bad magic, not a checkpoint"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Unsupported(format!("checkpoint version {version}")));
        }
        let n = r.u32()? as usize;
        let dims = (0..n).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims.len() < 2 || dims[0] != 3 || dims[dims.len() - 1] != 6 {
            return Err(r.fail(&format!("invalid mapping layer widths {dims:?}")));
        }
        let mapping = MappingNetSpec::new(dims[1..dims.len() - 1].to_vec())?;
        let n = r.u32()? as usize;
        let enc = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let encoder = decode_encoder(&enc).map_err(|m| r.fail(&m))?;
        let iteration = r.u64()?;
        let flags = r.u32()?;
        let params = if flags & FLAG_PARAMS != 0 { Some(r.f64s()?) } else { None };
        let optimizer = if flags & FLAG_ADAM != 0 {
            let step = r.u64()?;
            let m = r.f64s()?;
            let v = (0..m.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            Some(OptimizerSnapshot { step, m, v })
        } else {
            None
        };
        let theta = if flags & FLAG_THETA != 0 { Some(r.f64s()?) } else { None };
        if r.pos != bytes.len() {
            return Err(r.fail("trailing bytes"));
        }
        let ck = Self {
            mapping,
            encoder,
            iteration,
            params,
            optimizer,
            theta,
        };
        if let (Some(enc), Some(p)) = (&ck.encoder, &ck.params) {
            let need = HofModel::param_count(&ck.mapping, enc);
            if need != p.len() {
                return Err(Error::contract(format!(
                    "checkpoint holds {} parameters but the model spec needs {need}",
                    p.len()
                )));
            }
        }
        Ok(ck)
    }

    /// Writes atomically: a temporary file in the target directory is
    /// renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Parse { location, message, .. } => Error::Parse {
                path: path.display().to_string(),
                location,
                message,
            },
            other => other,
        })
    }
}

/// Writes `bytes` beside `path` in a temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn encode_encoder(enc: Option<&EncoderSpec>) -> Vec<u32> {
    match enc {
        None => vec![0],
        Some(e) => match &e.mode {
            EncoderMode::LearnedCode { code_dim, num_codes } => {
                vec![1, e.head_hidden as u32, *code_dim as u32, *num_codes as u32]
            }
            EncoderMode::Conv(t) => {
                let mut v = vec![
                    2,
                    e.head_hidden as u32,
                    t.input_size[0] as u32,
                    t.input_size[1] as u32,
                    t.input_size[2] as u32,
                    t.dense_depth as u32,
                    t.growth as u32,
                ];
                v.extend(t.widths.iter().map(|&w| w as u32));
                v
            }
        },
    }
}

fn decode_encoder(d: &[u32]) -> std::result::Result<Option<EncoderSpec>, String> {
    let u = |i: usize| d[i] as usize;
    match d.first() {
        Some(0) if d.len() == 1 => Ok(None),
        Some(1) if d.len() == 4 => Ok(Some(EncoderSpec::learned_code(u(2), u(3)).with_head_hidden(u(1)))),
        Some(2) if d.len() > 7 => {
            let trunk = ConvTrunkSpec {
                input_size: [u(2), u(3), u(4)],
                widths: d[7..].iter().map(|&w| w as usize).collect(),
                dense_depth: u(5),
                growth: u(6),
            };
            Ok(Some(EncoderSpec::conv(trunk).with_head_hidden(u(1))))
        }
        _ => Err(format!("invalid encoder descriptor {d:?}")),
    }
}

fn put_u32(b: &mut Vec<u8>, x: u32) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_f64s(b: &mut Vec<u8>, xs: &[f64]) {
    b.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn fail(&self, message: &str) -> Error {
        Error::Parse {
            path: "<checkpoint>".into(),
            location: format!("byte {}", self.pos),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail("unexpected end of file"));
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if (self.bytes.len() - self.pos) / 8 < n {
            return Err(self.fail("array length exceeds file size"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}
