use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{voxel_count, Extents};
use crate::error::{Error, Result};

/// Class-index grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    pub extents: Extents,
    pub spacing: [f64; 3],
    pub classes: Vec<u8>,
}

impl LabelVolume {
    pub fn new(extents: Extents, spacing: [f64; 3], classes: Vec<u8>) -> Result<Self> {
        if classes.len() != voxel_count(extents) {
            return Err(Error::shape(
                "label_volume",
                format!("{} labels for extents {extents:?}", classes.len()),
            ));
        }
        Ok(LabelVolume {
            extents,
            spacing,
            classes,
        })
    }

    pub fn mask(&self, class: u8) -> Vec<bool> {
        self.classes.iter().map(|&c| c == class).collect()
    }

    pub fn count(&self, class: u8) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }
}

/// Bijection between external raw label codes and class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    /// `codes[class]` is the raw code of that class.
    codes: Vec<u32>,
    names: Vec<String>,
}

impl Default for LabelMap {
    /// Background 0, CSF 10, GM 150, WM 250.
    fn default() -> Self {
        LabelMap {
            codes: vec![0, 10, 150, 250],
            names: ["background", "CSF", "GM", "WM"].map(String::from).to_vec(),
        }
    }
}

impl LabelMap {
    pub fn new(entries: Vec<(u32, String)>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, (code, _)) in entries.iter().enumerate() {
            if seen.insert(*code, i).is_some() {
                return Err(Error::Invalid(format!("label map repeats raw code {code}")));
            }
        }
        if entries.is_empty() || entries.len() > 256 {
            return Err(Error::Invalid(format!("label map needs 1..=256 classes, got {}", entries.len())));
        }
        let (codes, names) = entries.into_iter().unzip();
        Ok(LabelMap { codes, names })
    }

    pub fn classes(&self) -> usize {
        self.codes.len()
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn code(&self, class: u8) -> Result<u32> {
        self.codes
            .get(class as usize)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("class {class} has no raw code")))
    }

    pub fn class_of(&self, code: u32) -> Result<u8> {
        self.codes
            .iter()
            .position(|&c| c == code)
            .map(|i| i as u8)
            .ok_or(Error::UnknownLabelCode(code))
    }

    pub fn map_labels(&self, extents: Extents, spacing: [f64; 3], raw: &[u32]) -> Result<LabelVolume> {
        let classes = raw.iter().map(|&c| self.class_of(c)).collect::<Result<Vec<_>>>()?;
        LabelVolume::new(extents, spacing, classes)
    }

    pub fn unmap_labels(&self, labels: &LabelVolume) -> Result<Vec<u32>> {
        labels.classes.iter().map(|&c| self.code(c)).collect()
    }
}

/// `code:name` pairs separated by commas, listed in class order,
/// e.g. `0:background,10:CSF,150:GM,250:WM`.
impl FromStr for LabelMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|item| {
                let (code, name) = item
                    .split_once(':')
                    .ok_or_else(|| Error::Invalid(format!("label map entry `{item}` is not code:name")))?;
                let code = code
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Invalid(format!("label map code `{code}` is not an integer")))?;
                Ok((code, name.trim().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        LabelMap::new(entries)
    }
}

impl fmt::Display for LabelMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .codes
            .iter()
            .zip(&self.names)
            .map(|(c, n)| format!("{c}:{n}"))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}
