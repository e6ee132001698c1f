//! `VSEG1`: a text header `<stem>.vhdr` beside a little-endian payload
//! `<stem>.vraw`.
//!
//! ```text
//! VSEG1
//! type f32
//! extents 64 64 64
//! channels 2
//! spacing 1 1 1
//! byteorder little
//! ```
//!
//! The payload holds `channels` grids back to back, each `D·H·W` elements
//! with W varying fastest.

use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};

use super::{raw_codes, read_bytes, write_bytes, ElementType, Payload};
use crate::error::{Error, Result};
use crate::volume::{voxel_count, Extents, LabelMap, LabelVolume, Volume};

const MAGIC: &str = "VSEG1";

#[derive(Clone, Debug, PartialEq)]
pub struct RawHeader {
    pub element: ElementType,
    pub extents: Extents,
    pub channels: usize,
    pub spacing: [f64; 3],
}

impl RawHeader {
    pub fn payload_bytes(&self) -> u64 {
        (voxel_count(self.extents) * self.channels * self.element.size()) as u64
    }

    pub fn to_text(&self) -> String {
        let ty = match self.element {
            ElementType::U8 => "u8",
            ElementType::I16 => "i16",
            ElementType::F32 => "f32",
        };
        let [d, h, w] = self.extents;
        let [sd, sh, sw] = self.spacing;
        format!("{MAGIC}\ntype {ty}\nextents {d} {h} {w}\nchannels {}\nspacing {sd:?} {sh:?} {sw:?}\nbyteorder little\n", self.channels)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |field: &'static str, detail: String| Error::Format {
            format: MAGIC,
            field,
            detail,
        };
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some(MAGIC) => {}
            other => return Err(bad("magic", format!("expected `{MAGIC}`, found {other:?}"))),
        }
        let (mut element, mut extents, mut channels, mut spacing, mut order) = (None, None, None, None, None);
        for line in lines {
            let (key, value) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let value = value.trim();
            match key {
                "type" => {
                    element = Some(match value {
                        "u8" => ElementType::U8,
                        "i16" => ElementType::I16,
                        "f32" => ElementType::F32,
                        _ => return Err(bad("type", format!("unknown element type `{value}`"))),
                    })
                }
                "extents" => {
                    let v: Vec<usize> = value
                        .split_whitespace()
                        .map(|x| x.parse().map_err(|_| bad("extents", format!("`{x}` is not an integer"))))
                        .collect::<Result<_>>()?;
                    if v.len() != 3 || v.contains(&0) {
                        return Err(bad("extents", format!("need three positive extents, got `{value}`")));
                    }
                    extents = Some([v[0], v[1], v[2]]);
                }
                "channels" => {
                    let c: usize = value
                        .parse()
                        .map_err(|_| bad("channels", format!("`{value}` is not an integer")))?;
                    if c == 0 {
                        return Err(bad("channels", "must be positive".into()));
                    }
                    channels = Some(c);
                }
                "spacing" => {
                    let v: Vec<f64> = value
                        .split_whitespace()
                        .map(|x| x.parse().map_err(|_| bad("spacing", format!("`{x}` is not a number"))))
                        .collect::<Result<_>>()?;
                    if v.len() != 3 || v.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
                        return Err(bad("spacing", format!("need three positive spacings, got `{value}`")));
                    }
                    spacing = Some([v[0], v[1], v[2]]);
                }
                "byteorder" => {
                    if value != "little" {
                        return Err(bad("byteorder", format!("only `little` is supported, got `{value}`")));
                    }
                    order = Some(());
                }
                _ => return Err(bad("header", format!("unknown key `{key}`"))),
            }
        }
        let missing = |field: &'static str| bad(field, "missing".into());
        order.ok_or_else(|| missing("byteorder"))?;
        Ok(RawHeader {
            element: element.ok_or_else(|| missing("type"))?,
            extents: extents.ok_or_else(|| missing("extents"))?,
            channels: channels.ok_or_else(|| missing("channels"))?,
            spacing: spacing.ok_or_else(|| missing("spacing"))?,
        })
    }
}

/// `(header, payload)` paths for a stem or either member of the pair.
pub fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("vhdr"), path.with_extension("vraw"))
}

fn encode(payload: &Payload) -> Vec<u8> {
    match payload {
        Payload::U8(v) => v.clone(),
        Payload::I16(v) => {
            let mut out = vec![0; v.len() * 2];
            LittleEndian::write_i16_into(v, &mut out);
            out
        }
        Payload::F32(v) => {
            let mut out = vec![0; v.len() * 4];
            LittleEndian::write_f32_into(v, &mut out);
            out
        }
    }
}

fn decode(element: ElementType, bytes: &[u8]) -> Payload {
    match element {
        ElementType::U8 => Payload::U8(bytes.to_vec()),
        ElementType::I16 => {
            let mut v = vec![0; bytes.len() / 2];
            LittleEndian::read_i16_into(bytes, &mut v);
            Payload::I16(v)
        }
        ElementType::F32 => {
            let mut v = vec![0.0; bytes.len() / 4];
            LittleEndian::read_f32_into(bytes, &mut v);
            Payload::F32(v)
        }
    }
}

pub fn write_raw(path: &Path, header: &RawHeader, payload: &Payload) -> Result<()> {
    let expected = voxel_count(header.extents) * header.channels;
    if payload.element_type() != header.element || payload.len() != expected {
        return Err(Error::shape(
            "write_raw",
            format!("payload of {} {:?} elements for a header needing {expected} {:?}", payload.len(), payload.element_type(), header.element),
        ));
    }
    let (hdr, data) = paths(path);
    write_bytes(&hdr, header.to_text().as_bytes())?;
    write_bytes(&data, &encode(payload))
}

pub fn read_raw(path: &Path) -> Result<(RawHeader, Payload)> {
    let (hdr, data) = paths(path);
    let text = String::from_utf8(read_bytes(&hdr)?).map_err(|_| Error::Format {
        format: MAGIC,
        field: "header",
        detail: "not UTF-8 text".into(),
    })?;
    let header = RawHeader::parse(&text)?;
    let bytes = read_bytes(&data)?;
    let expected = header.payload_bytes();
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::TruncatedPayload { expected, actual });
    }
    if actual > expected {
        return Err(Error::PayloadLength { expected, actual });
    }
    let payload = decode(header.element, &bytes);
    Ok((header, payload))
}

pub fn write_raw_volume(path: &Path, v: &Volume) -> Result<()> {
    let header = RawHeader {
        element: ElementType::F32,
        extents: v.extents,
        channels: v.modalities(),
        spacing: v.spacing,
    };
    write_raw(path, &header, &Payload::F32(v.channels.concat()))
}

/// Labels are stored as u8 raw codes under `map`.
pub fn write_raw_labels(path: &Path, l: &LabelVolume, map: &LabelMap) -> Result<()> {
    let header = RawHeader {
        element: ElementType::U8,
        extents: l.extents,
        channels: 1,
        spacing: l.spacing,
    };
    write_raw(path, &header, &Payload::U8(raw_codes(l, map)?))
}

pub fn read_raw_volume(path: &Path) -> Result<Volume> {
    let (h, payload) = read_raw(path)?;
    let n = voxel_count(h.extents);
    let flat = payload.to_f32();
    Volume::new(h.extents, h.spacing, flat.chunks(n).map(<[f32]>::to_vec).collect())
}

pub fn read_raw_labels(path: &Path, map: &LabelMap) -> Result<LabelVolume> {
    let (h, payload) = read_raw(path)?;
    if h.channels != 1 {
        return Err(Error::Format {
            format: MAGIC,
            field: "channels",
            detail: format!("label volumes have one channel, found {}", h.channels),
        });
    }
    map.map_labels(h.extents, h.spacing, &payload.to_codes()?)
}
