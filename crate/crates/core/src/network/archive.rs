//! Flat binary archive of named 32-bit tensors with string metadata.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "DSEGARC\0"
//! version      u32      = 1
//! meta_count   u32
//!   key_len u32, key (UTF-8), value_len u32, value (UTF-8)     × meta_count
//! tensor_count u32
//!   name_len u32, name (UTF-8), ndim u32, extents u64 × ndim,
//!   data f32 × product(extents)                                × tensor_count
//! ```

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSEGARC\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<ArchiveTensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn bad(field: &'static str, detail: impl Into<String>) -> Error {
    Error::Format {
        format: "archive",
        field,
        detail: detail.into(),
    }
}

impl Archive {
    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.push(ArchiveTensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| bad("meta", format!("missing key `{key}`")))
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| bad("meta", format!("key `{key}` has unparsable value `{raw}`")))
    }

    pub fn tensor(&self, name: &str) -> Option<&ArchiveTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.write_u32::<LittleEndian>(s.len() as u32).unwrap();
            out.extend_from_slice(s.as_bytes());
        };
        out.write_u32::<LittleEndian>(self.meta.len() as u32).unwrap();
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.write_u32::<LittleEndian>(self.tensors.len() as u32).unwrap();
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.write_u32::<LittleEndian>(t.shape.len() as u32).unwrap();
            for &e in &t.shape {
                out.write_u64::<LittleEndian>(e as u64).unwrap();
            }
            for &v in &t.data {
                out.write_f32::<LittleEndian>(v).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| bad("magic", "file too short"))?;
        if &magic != MAGIC {
            return Err(bad("magic", format!("expected {MAGIC:?}, found {magic:?}")));
        }
        let eof = |field: &'static str| move |_| bad(field, "unexpected end of archive");
        let version = cur.read_u32::<LittleEndian>().map_err(eof("version"))?;
        if version != VERSION {
            return Err(bad("version", format!("unsupported version {version}")));
        }
        let get_str = |cur: &mut Cursor<&[u8]>, field: &'static str| -> Result<String> {
            let n = cur.read_u32::<LittleEndian>().map_err(eof(field))? as usize;
            let remaining = bytes.len() - cur.position() as usize;
            if n > remaining {
                return Err(bad(field, format!("length {n} exceeds remaining {remaining} bytes")));
            }
            let mut buf = vec![0u8; n];
            cur.read_exact(&mut buf).map_err(eof(field))?;
            String::from_utf8(buf).map_err(|_| bad(field, "invalid UTF-8"))
        };
        let mut archive = Archive::default();
        let meta_count = cur.read_u32::<LittleEndian>().map_err(eof("meta_count"))?;
        for _ in 0..meta_count {
            let k = get_str(&mut cur, "meta key")?;
            let v = get_str(&mut cur, "meta value")?;
            archive.meta.push((k, v));
        }
        let tensor_count = cur.read_u32::<LittleEndian>().map_err(eof("tensor_count"))?;
        for _ in 0..tensor_count {
            let name = get_str(&mut cur, "tensor name")?;
            let ndim = cur.read_u32::<LittleEndian>().map_err(eof("ndim"))? as usize;
            if ndim > 8 {
                return Err(bad("ndim", format!("{ndim} dimensions for `{name}`")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.read_u64::<LittleEndian>().map_err(eof("extents"))? as usize);
            }
            let n: usize = shape.iter().product();
            let remaining = bytes.len() - cur.position() as usize;
            if n.checked_mul(4).is_none_or(|b| b > remaining) {
                return Err(bad("data", format!("`{name}` needs {n} floats, {remaining} bytes remain")));
            }
            let mut data = vec![0f32; n];
            cur.read_f32_into::<LittleEndian>(&mut data).map_err(eof("data"))?;
            archive.tensors.push(ArchiveTensor { name, shape, data });
        }
        if (cur.position() as usize) != bytes.len() {
            return Err(bad("trailer", "trailing bytes after last tensor"));
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
