//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "TPNETCKP"
//! version    u32      1
//! metadata   u32 length + UTF-8 text, one `key=value` per line
//! count      u32      number of records
//! record     u32 name length + UTF-8 name
//!            u8 dtype (0 = f32, 1 = f64)
//!            u32 rank, then rank x u64 dims
//!            product(dims) raw little-endian values
//! ```
//!
//! Record names: `param/<parameter name>`, `momentum/<parameter name>`,
//! `bn/<slot>/mean`, `bn/<slot>/var`. Metadata carries `variant`, `epoch`
//! and `best_acc` (the latter as exact f64 bits in hex).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{Model, VariantSpec};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;
use crate::train::Sgd;

pub const MAGIC: &[u8; 8] = b"TPNETCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Raw little-endian element bytes.
    pub bytes: Vec<u8>,
}

impl Record {
    pub fn from_tensor<T: Scalar>(name: impl Into<String>, t: &Tensor<T>) -> Self {
        Self::from_slice(name, t.shape(), t.data())
    }

    pub fn from_slice<T: Scalar>(name: impl Into<String>, shape: &[usize], data: &[T]) -> Self {
        let mut bytes = Vec::with_capacity(data.len() * T::DTYPE.size());
        for v in data {
            v.write_le(&mut bytes);
        }
        Record { name: name.into(), dtype: T::DTYPE, shape: shape.to_vec(), bytes }
    }

    pub fn values<T: Scalar>(&self) -> Result<Vec<T>> {
        if self.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!(
                "record {} holds {:?}, requested {:?}",
                self.name,
                self.dtype,
                T::DTYPE
            )));
        }
        Ok(self.bytes.chunks_exact(self.dtype.size()).map(T::read_le).collect())
    }

    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        Tensor::from_vec(&self.shape, self.values()?)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<Record>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta: String = self.metadata.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        put_str(&mut out, &meta);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            put_str(&mut out, &r.name);
            out.push(r.dtype as u8);
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for &d in &r.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&r.bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(8, "magic")? != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = rd.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut metadata = BTreeMap::new();
        for line in rd.string("metadata")?.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad metadata line '{line}'")))?;
            metadata.insert(k.to_string(), v.to_string());
        }
        let count = rd.u32("record count")? as usize;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let name = rd.string("record name")?;
            let tag = rd.take(1, "dtype")?[0];
            let dtype = DType::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("{name}: unknown dtype {tag}")))?;
            let rank = rd.u32("rank")? as usize;
            let shape = (0..rank).map(|_| rd.u64("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let bytes = rd.take(n * dtype.size(), &name)?.to_vec();
            records.push(Record { name, dtype, shape, bytes });
        }
        if rd.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - rd.pos)));
        }
        Ok(Checkpoint { metadata, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn record(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing record {name}")))
    }

    fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata '{key}'")))
    }

    pub fn variant(&self) -> Result<VariantSpec> {
        self.meta("variant")?.parse()
    }

    pub fn epoch(&self) -> Result<usize> {
        self.meta("epoch")?.parse().map_err(|_| Error::Checkpoint("bad epoch".into()))
    }

    pub fn best_acc(&self) -> Result<f64> {
        let bits = u64::from_str_radix(self.meta("best_acc")?, 16).map_err(|_| Error::Checkpoint("bad best_acc".into()))?;
        Ok(f64::from_bits(bits))
    }

    /// Captures parameters, BN running stats and (optionally) momentum buffers.
    pub fn capture<T: Scalar>(model: &Model<T>, opt: Option<&Sgd<T>>, epoch: usize, best_acc: f64) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert("variant".into(), model.spec().name());
        metadata.insert("epoch".into(), epoch.to_string());
        metadata.insert("best_acc".into(), format!("{:016x}", best_acc.to_bits()));
        metadata.insert("dtype".into(), format!("{:?}", T::DTYPE).to_lowercase());
        let mut records = Vec::new();
        for (_, p) in model.store().iter() {
            records.push(Record::from_tensor(format!("param/{}", p.name), &p.value));
        }
        for (slot, s) in model.running_stats().iter().enumerate() {
            records.push(Record::from_slice(format!("bn/{slot}/mean"), &[s.mean.len()], &s.mean));
            records.push(Record::from_slice(format!("bn/{slot}/var"), &[s.var.len()], &s.var));
        }
        if let Some(opt) = opt {
            for ((_, p), buf) in model.store().iter().zip(opt.buffers()) {
                if let Some(b) = buf {
                    records.push(Record::from_tensor(format!("momentum/{}", p.name), b));
                }
            }
        }
        Checkpoint { metadata, records }
    }

    /// Writes stored values into an existing model (and optimizer).
    pub fn restore_into<T: Scalar>(&self, model: &mut Model<T>, opt: Option<&mut Sgd<T>>) -> Result<()> {
        let ids: Vec<_> = model.store().iter().map(|(id, p)| (id, p.name.clone())).collect();
        for (id, name) in &ids {
            let t = self.record(&format!("param/{name}"))?.to_tensor::<T>()?;
            model.store_mut().set_value(*id, t).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        for (slot, s) in model.running_stats_mut().iter_mut().enumerate() {
            let mean = self.record(&format!("bn/{slot}/mean"))?.values::<T>()?;
            let var = self.record(&format!("bn/{slot}/var"))?.values::<T>()?;
            if mean.len() != s.mean.len() || var.len() != s.var.len() {
                return Err(Error::Checkpoint(format!("bn slot {slot}: channel count differs")));
            }
            s.mean = mean;
            s.var = var;
        }
        if let Some(opt) = opt {
            let mut bufs = Vec::with_capacity(ids.len());
            for (id, name) in &ids {
                let rec = self.records.iter().find(|r| r.name == format!("momentum/{name}"));
                let buf = match rec {
                    Some(r) => {
                        let t = r.to_tensor::<T>()?;
                        if t.shape() != model.store().value(*id).shape() {
                            return Err(Error::Checkpoint(format!("momentum/{name}: shape differs")));
                        }
                        Some(t)
                    }
                    None => None,
                };
                bufs.push(buf);
            }
            opt.set_buffers(bufs);
        }
        Ok(())
    }

    /// Builds the recorded variant and loads every tensor into it.
    pub fn restore_model<T: Scalar>(&self) -> Result<Model<T>> {
        let mut model = Model::new(self.variant()?, 0)?;
        self.restore_into(&mut model, None)?;
        Ok(model)
    }
}
