use std::path::{Path, PathBuf};

use dualseg::io::{read_labels, read_volume};
use dualseg::volume::{LabelMap, LabelVolume, Volume};

use crate::error::{io_error, CliError, CliResult};

pub const IMAGE_SUFFIX: &str = "_image";
pub const LABEL_SUFFIX: &str = "_labels";
const EXTENSIONS: [&str; 2] = ["nii", "vhdr"];

/// A subject on disk: `<id>_image.<ext>` and `<id>_labels.<ext>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubjectFiles {
    pub id: String,
    pub image: PathBuf,
    pub labels: PathBuf,
}

impl SubjectFiles {
    pub fn load(&self, map: &LabelMap) -> CliResult<(Volume, LabelVolume)> {
        Ok((read_volume(&self.image)?, read_labels(&self.labels, map)?))
    }
}

/// Subjects of a dataset directory in sorted id order.
pub fn scan(dir: &Path) -> CliResult<Vec<SubjectFiles>> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let Some(id) = stem.strip_suffix(IMAGE_SUFFIX) else {
            continue;
        };
        if !EXTENSIONS.contains(&ext) {
            continue;
        }
        let labels = dir.join(format!("{id}{LABEL_SUFFIX}.{ext}"));
        if !labels.exists() {
            return Err(CliError::Data(format!("subject `{id}` has no label file {}", labels.display())));
        }
        out.push(SubjectFiles {
            id: id.to_string(),
            image: path,
            labels,
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = out.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(CliError::Data(format!("subject `{}` appears in more than one format", w[0].id)));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("no `*{IMAGE_SUFFIX}.nii` or `*{IMAGE_SUFFIX}.vhdr` files in {}", dir.display())));
    }
    Ok(out)
}

pub fn image_path(dir: &Path, id: &str, ext: &str) -> PathBuf {
    dir.join(format!("{id}{IMAGE_SUFFIX}.{ext}"))
}

pub fn label_path(dir: &Path, id: &str, ext: &str) -> PathBuf {
    dir.join(format!("{id}{LABEL_SUFFIX}.{ext}"))
}
