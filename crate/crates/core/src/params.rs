//! Named parameter storage and the `TNWT` weight file format.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic "TNWT" | version u16 | count u32 |
//! count x { name_len u16 | name bytes | dtype u8 | rank u8 | extents u32 x rank | payload }
//! ```
//!
//! Text metadata (such as the network configuration) travels as extra
//! rank-1 `f32` entries named `meta.<key>`, one element per UTF-8 byte.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Element, Tensor};

pub const MAGIC: &[u8; 4] = b"TNWT";
pub const FORMAT_VERSION: u16 = 1;
const META_PREFIX: &str = "meta.";

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<E: Element = f32> {
    params: BTreeMap<String, Tensor<E>>,
    metadata: BTreeMap<String, String>,
    version: u16,
}

impl<E: Element> Default for ParamStore<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            metadata: BTreeMap::new(),
            version: FORMAT_VERSION,
        }
    }

    pub fn dtype(&self) -> DType {
        E::DTYPE
    }

    pub fn version(&self) -> u16 {
        self.version
    }

    /// Adds a parameter. Names are unique and may not use the metadata prefix.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<E>) -> Result<()> {
        let name = name.into();
        if name.starts_with(META_PREFIX) {
            return Err(Error::InvalidArgument(format!("parameter name {name} uses the reserved prefix {META_PREFIX}")));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument("parameter name too long".into()));
        }
        if self.params.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        self.params.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<E>> {
        self.params.get(name).ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<E>> {
        self.params.get_mut(name).ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<E>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn metadata(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn cast<F: Element>(&self) -> ParamStore<F> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            metadata: self.metadata.clone(),
            version: self.version,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        let count = (self.params.len() + self.metadata.len()) as u32;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.params {
            write_header(&mut out, name, E::DTYPE, t.shape());
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        for (key, text) in &self.metadata {
            let name = format!("{META_PREFIX}{key}");
            let bytes = text.as_bytes();
            write_header(&mut out, &name, DType::F32, &[bytes.len()]);
            for &b in bytes {
                (b as f32).write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("TNWT", "bad magic"));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::format("TNWT", format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut store = ParamStore::new();
        store.version = version;
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::format("TNWT", "entry name is not UTF-8"))?;
            let dtype = DType::from_code(r.u8()?).ok_or_else(|| Error::format("TNWT", format!("entry {name}: unknown dtype")))?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let payload = r.take(numel.checked_mul(dtype.size()).ok_or_else(|| Error::format("TNWT", "payload too large"))?)?;
            if let Some(key) = name.strip_prefix(META_PREFIX) {
                if dtype != DType::F32 || rank != 1 {
                    return Err(Error::format("TNWT", format!("metadata entry {name} must be rank-1 f32")));
                }
                let text: Vec<u8> = payload.chunks_exact(4).map(|c| f32::read_le(c) as u8).collect();
                let text = String::from_utf8(text).map_err(|_| Error::format("TNWT", format!("metadata {key} is not UTF-8")))?;
                store.metadata.insert(key.to_string(), text);
                continue;
            }
            let data: Vec<E> = match dtype {
                d if d == E::DTYPE => payload.chunks_exact(d.size()).map(E::read_le).collect(),
                DType::F32 => payload.chunks_exact(4).map(|c| E::from_f64_lossy(f32::read_le(c) as f64)).collect(),
                DType::F64 => payload.chunks_exact(8).map(|c| E::from_f64_lossy(f64::read_le(c))).collect(),
            };
            let tensor = Tensor::new(shape, data).map_err(|e| Error::format("TNWT", format!("entry {name}: {e}")))?;
            if store.params.insert(name.clone(), tensor).is_some() {
                return Err(Error::format("TNWT", format!("duplicate entry {name}")));
            }
        }
        if r.at != bytes.len() {
            return Err(Error::format("TNWT", "trailing bytes"));
        }
        Ok(store)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io("<reader>", e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_header(out: &mut Vec<u8>, name: &str, dtype: DType, shape: &[usize]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dtype.code());
    out.push(shape.len() as u8);
    for &n in shape {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub at: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::format("binary", "unexpected end of data"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
