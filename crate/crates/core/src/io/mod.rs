//! Volume file formats: the canonical raw layout with a text sidecar, and
//! single-file NIfTI-1.

pub mod nifti;
pub mod raw;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{LabelMap, LabelVolume, Volume};

pub use nifti::{
    read_nifti1, read_nifti1_labels, read_nifti1_volume, write_nifti1_labels, write_nifti1_volume, Nifti1Header, NiftiImage,
};
pub use raw::{read_raw, read_raw_labels, read_raw_volume, write_raw_labels, write_raw_volume, RawHeader};

/// Stored element type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementType {
    U8,
    I16,
    F32,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::I16 => 2,
            ElementType::F32 => 4,
        }
    }
}

/// Decoded voxel data, channel-major with W fastest.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

impl Payload {
    pub fn element_type(&self) -> ElementType {
        match self {
            Payload::U8(_) => ElementType::U8,
            Payload::I16(_) => ElementType::I16,
            Payload::F32(_) => ElementType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::U8(v) => v.len(),
            Payload::I16(v) => v.len(),
            Payload::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            Payload::U8(v) => v.iter().map(|&x| x as f32).collect(),
            Payload::I16(v) => v.iter().map(|&x| x as f32).collect(),
            Payload::F32(v) => v.clone(),
        }
    }

    /// Integer codes; float payloads must hold non-negative integers.
    pub fn to_codes(&self) -> Result<Vec<u32>> {
        match self {
            Payload::U8(v) => Ok(v.iter().map(|&x| x as u32).collect()),
            Payload::I16(v) => v
                .iter()
                .map(|&x| u32::try_from(x).map_err(|_| Error::Invalid(format!("negative label code {x}"))))
                .collect(),
            Payload::F32(v) => v
                .iter()
                .map(|&x| {
                    if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f32 {
                        Ok(x as u32)
                    } else {
                        Err(Error::Invalid(format!("label value {x} is not a non-negative integer")))
                    }
                })
                .collect(),
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

fn raw_codes(labels: &LabelVolume, map: &LabelMap) -> Result<Vec<u8>> {
    map.unmap_labels(labels)?
        .into_iter()
        .map(|c| u8::try_from(c).map_err(|_| Error::Invalid(format!("raw label code {c} does not fit in u8"))))
        .collect()
}

fn is_raw(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("vhdr" | "vraw"))
}

/// Reads an intensity volume from either format, chosen by extension
/// (`.vhdr`/`.vraw` raw, anything else NIfTI-1).
pub fn read_volume(path: &Path) -> Result<Volume> {
    if is_raw(path) {
        raw::read_raw_volume(path)
    } else {
        nifti::read_nifti1_volume(path)
    }
}

pub fn read_labels(path: &Path, map: &LabelMap) -> Result<LabelVolume> {
    if is_raw(path) {
        raw::read_raw_labels(path, map)
    } else {
        nifti::read_nifti1_labels(path, map)
    }
}

pub fn write_volume(path: &Path, v: &Volume) -> Result<()> {
    if is_raw(path) {
        write_raw_volume(path, v)
    } else {
        write_nifti1_volume(path, v)
    }
}

pub fn write_labels(path: &Path, l: &LabelVolume, map: &LabelMap) -> Result<()> {
    if is_raw(path) {
        write_raw_labels(path, l, map)
    } else {
        write_nifti1_labels(path, l, map)
    }
}
