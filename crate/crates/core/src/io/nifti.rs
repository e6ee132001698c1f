//! Single-file NIfTI-1 (`n+1`), uncompressed.
//!
//! Axis mapping: `dim[1]` (x, fastest in storage) is our W, `dim[2]` is H,
//! `dim[3]` is D, and `dim[4]` counts modalities. Spacing follows the same
//! mapping from `pixdim[1..=3]`. Voxels are taken in stored order;
//! qform/sform orientation is ignored.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use super::{is_gzip, raw_codes, read_bytes, write_bytes, ElementType, Payload};
use crate::error::{Error, Result};
use crate::volume::{voxel_count, Extents, LabelMap, LabelVolume, Volume};

pub const HEADER_SIZE: usize = 348;
pub const WRITE_VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

fn bad(field: &'static str, detail: impl Into<String>) -> Error {
    Error::Format {
        format: "NIfTI-1",
        field,
        detail: detail.into(),
    }
}

/// The fields this reader interprets.
#[derive(Clone, Debug, PartialEq)]
pub struct Nifti1Header {
    pub big_endian: bool,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
}

impl Nifti1Header {
    pub fn element(&self) -> Result<ElementType> {
        let (ty, bits) = match self.datatype {
            DT_UINT8 => (ElementType::U8, 8),
            DT_INT16 => (ElementType::I16, 16),
            DT_FLOAT32 => (ElementType::F32, 32),
            other => return Err(bad("datatype", format!("unsupported datatype {other}; expected 2 (u8), 4 (i16) or 16 (f32)"))),
        };
        if self.bitpix != bits {
            return Err(bad("bitpix", format!("{} does not match datatype {}", self.bitpix, self.datatype)));
        }
        Ok(ty)
    }

    /// `[D, H, W]` from `dim[3], dim[2], dim[1]`.
    pub fn extents(&self) -> Extents {
        [self.dim[3] as usize, self.dim[2] as usize, self.dim[1] as usize]
    }

    pub fn channels(&self) -> usize {
        self.dim[4].max(1) as usize
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.pixdim[3] as f64, self.pixdim[2] as f64, self.pixdim[1] as f64]
    }

    fn parse(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_SIZE {
            return Err(Error::TruncatedPayload {
                expected: HEADER_SIZE as u64,
                actual: b.len() as u64,
            });
        }
        let big_endian = if LittleEndian::read_i32(&b[0..4]) == HEADER_SIZE as i32 {
            false
        } else if BigEndian::read_i32(&b[0..4]) == HEADER_SIZE as i32 {
            true
        } else {
            return Err(bad("sizeof_hdr", format!("expected 348 in either byte order, found bytes {:02x?}", &b[0..4])));
        };
        let i16_at = |o: usize| if big_endian { BigEndian::read_i16(&b[o..]) } else { LittleEndian::read_i16(&b[o..]) };
        let f32_at = |o: usize| if big_endian { BigEndian::read_f32(&b[o..]) } else { LittleEndian::read_f32(&b[o..]) };
        let mut dim = [0i16; 8];
        let mut pixdim = [0f32; 8];
        for i in 0..8 {
            dim[i] = i16_at(40 + 2 * i);
            pixdim[i] = f32_at(76 + 4 * i);
        }
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&b[344..348]);
        let h = Nifti1Header {
            big_endian,
            dim,
            datatype: i16_at(70),
            bitpix: i16_at(72),
            pixdim,
            vox_offset: f32_at(108),
            scl_slope: f32_at(112),
            scl_inter: f32_at(116),
            magic,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if &self.magic == b"ni1\0" {
            return Err(bad("magic", "two-file form (ni1) is not supported; convert to single-file .nii"));
        }
        if &self.magic != b"n+1\0" {
            return Err(bad("magic", format!("expected \"n+1\\0\", found {:02x?}", self.magic)));
        }
        let nd = self.dim[0];
        if !(1..=7).contains(&nd) {
            return Err(bad("dim", format!("dim[0] = {nd} is outside 1..=7")));
        }
        if nd < 3 {
            return Err(bad("dim", format!("need a 3-D image, dim[0] = {nd}")));
        }
        for i in 1..=nd as usize {
            if self.dim[i] < 1 {
                return Err(bad("dim", format!("dim[{i}] = {} must be positive", self.dim[i])));
            }
            if i > 4 && self.dim[i] != 1 {
                return Err(bad("dim", format!("dim[{i}] = {}: only up to 4 dimensions are read", self.dim[i])));
            }
        }
        for i in 1..=3 {
            if !(self.pixdim[i] > 0.0) || !self.pixdim[i].is_finite() {
                return Err(bad("pixdim", format!("pixdim[{i}] = {} must be positive", self.pixdim[i])));
            }
        }
        if !(self.vox_offset >= HEADER_SIZE as f32) || self.vox_offset.fract() != 0.0 {
            return Err(bad("vox_offset", format!("{} must be an integer ≥ 348", self.vox_offset)));
        }
        self.element()?;
        Ok(())
    }

    fn payload_bytes(&self) -> usize {
        let base = voxel_count(self.extents()) * if self.dim[0] >= 4 { self.channels() } else { 1 };
        base * self.element().map_or(0, ElementType::size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiImage {
    pub header: Nifti1Header,
    pub payload: Payload,
}

fn decode(element: ElementType, big_endian: bool, bytes: &[u8]) -> Payload {
    macro_rules! read_into {
        ($f:ident, $ty:ty) => {{
            let mut v = vec![<$ty>::default(); bytes.len() / std::mem::size_of::<$ty>()];
            if big_endian {
                BigEndian::$f(bytes, &mut v);
            } else {
                LittleEndian::$f(bytes, &mut v);
            }
            v
        }};
    }
    match element {
        ElementType::U8 => Payload::U8(bytes.to_vec()),
        ElementType::I16 => Payload::I16(read_into!(read_i16_into, i16)),
        ElementType::F32 => Payload::F32(read_into!(read_f32_into, f32)),
    }
}

/// Reads the header and exactly the declared payload.
pub fn read_nifti1(path: &Path) -> Result<NiftiImage> {
    let bytes = read_bytes(path)?;
    if is_gzip(&bytes) {
        return Err(Error::CompressedInput(path.to_path_buf()));
    }
    parse_nifti1(&bytes)
}

pub fn parse_nifti1(bytes: &[u8]) -> Result<NiftiImage> {
    let header = Nifti1Header::parse(bytes)?;
    let start = header.vox_offset as usize;
    let len = header.payload_bytes();
    let available = bytes.len().saturating_sub(start);
    if available < len {
        return Err(Error::TruncatedPayload {
            expected: len as u64,
            actual: available as u64,
        });
    }
    let payload = decode(header.element()?, header.big_endian, &bytes[start..start + len]);
    Ok(NiftiImage { header, payload })
}

/// Intensity volume; a non-trivial `scl_slope`/`scl_inter` is applied.
pub fn read_nifti1_volume(path: &Path) -> Result<Volume> {
    let img = read_nifti1(path)?;
    let h = &img.header;
    let mut flat = img.payload.to_f32();
    if h.scl_slope != 0.0 && (h.scl_slope != 1.0 || h.scl_inter != 0.0) {
        flat.iter_mut().for_each(|v| *v = *v * h.scl_slope + h.scl_inter);
    }
    let n = voxel_count(h.extents());
    Volume::new(h.extents(), h.spacing(), flat.chunks(n).map(<[f32]>::to_vec).collect())
}

/// Label volume from raw integer codes, without intensity scaling.
pub fn read_nifti1_labels(path: &Path, map: &LabelMap) -> Result<LabelVolume> {
    let img = read_nifti1(path)?;
    let h = &img.header;
    if h.dim[0] >= 4 && h.channels() != 1 {
        return Err(bad("dim", format!("label volume has {} channels", h.channels())));
    }
    map.map_labels(h.extents(), h.spacing(), &img.payload.to_codes()?)
}

/// Serializes a little-endian `n+1` file with `vox_offset` 352.
pub fn encode_nifti1(extents: Extents, spacing: [f64; 3], channels: usize, payload: &Payload) -> Vec<u8> {
    let mut b = vec![0u8; WRITE_VOX_OFFSET];
    LittleEndian::write_i32(&mut b[0..4], HEADER_SIZE as i32);
    let ndim: i16 = if channels > 1 { 4 } else { 3 };
    let dim = [ndim, extents[2] as i16, extents[1] as i16, extents[0] as i16, channels as i16, 1, 1, 1];
    let (datatype, bitpix) = match payload.element_type() {
        ElementType::U8 => (DT_UINT8, 8),
        ElementType::I16 => (DT_INT16, 16),
        ElementType::F32 => (DT_FLOAT32, 32),
    };
    for (i, &d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut b[40 + 2 * i..], d);
    }
    LittleEndian::write_i16(&mut b[70..72], datatype);
    LittleEndian::write_i16(&mut b[72..74], bitpix);
    let pixdim = [1.0, spacing[2] as f32, spacing[1] as f32, spacing[0] as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, &p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut b[76 + 4 * i..], p);
    }
    LittleEndian::write_f32(&mut b[108..112], WRITE_VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut b[112..116], 1.0);
    // xyzt_units: millimetres
    b[123] = 2;
    b[344..348].copy_from_slice(b"n+1\0");
    match payload {
        Payload::U8(v) => b.extend_from_slice(v),
        Payload::I16(v) => {
            let start = b.len();
            b.resize(start + 2 * v.len(), 0);
            LittleEndian::write_i16_into(v, &mut b[start..]);
        }
        Payload::F32(v) => {
            let start = b.len();
            b.resize(start + 4 * v.len(), 0);
            LittleEndian::write_f32_into(v, &mut b[start..]);
        }
    }
    b
}

fn check_dims(extents: Extents, channels: usize) -> Result<()> {
    if extents.iter().chain([&channels]).any(|&e| e > i16::MAX as usize) {
        return Err(Error::Invalid(format!("extents {extents:?} × {channels} exceed the NIfTI-1 limit of 32767")));
    }
    Ok(())
}

/// f32 intensities, one `dim[4]` entry per modality.
pub fn write_nifti1_volume(path: &Path, v: &Volume) -> Result<()> {
    check_dims(v.extents, v.modalities())?;
    let bytes = encode_nifti1(v.extents, v.spacing, v.modalities(), &Payload::F32(v.channels.concat()));
    write_bytes(path, &bytes)
}

/// u8 raw label codes under `map`.
pub fn write_nifti1_labels(path: &Path, l: &LabelVolume, map: &LabelMap) -> Result<()> {
    check_dims(l.extents, 1)?;
    let bytes = encode_nifti1(l.extents, l.spacing, 1, &Payload::U8(raw_codes(l, map)?));
    write_bytes(path, &bytes)
}
