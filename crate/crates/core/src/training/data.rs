use rand::Rng;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::volume::{crop, normalize, LabelVolume, Volume};

/// A training or evaluation subject. The intensities are stored normalized.
#[derive(Clone, Debug)]
pub struct Subject {
    pub id: String,
    pub volume: Volume,
    pub labels: LabelVolume,
    foreground: Vec<usize>,
}

impl Subject {
    /// Normalizes `volume` and indexes the labelled foreground.
    pub fn new(id: impl Into<String>, volume: &Volume, labels: LabelVolume) -> Result<Self> {
        if volume.extents != labels.extents {
            return Err(Error::shape(
                "Subject",
                format!("volume {:?} and labels {:?} differ", volume.extents, labels.extents),
            ));
        }
        let foreground = labels
            .classes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, _)| i)
            .collect();
        Ok(Subject {
            id: id.into(),
            volume: normalize(volume),
            labels,
            foreground,
        })
    }

    pub fn foreground_voxels(&self) -> usize {
        self.foreground.len()
    }
}

/// Inputs `[B, M, P, P, P]` and flattened class targets `[B, P, P, P]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub input: Tensor<f32>,
    pub targets: Vec<usize>,
    /// Patches that contain at least one foreground voxel.
    pub foreground_patches: usize,
}

impl Batch {
    /// The patch of `subject` at `origin` as a batch of one.
    pub fn single(subject: &Subject, origin: [usize; 3], size: usize) -> Result<Self> {
        check_fits(subject, size)?;
        let mut b = Assembler::new(subject.volume.modalities(), size, 1);
        b.push(subject, origin);
        b.finish()
    }
}

fn check_fits(subject: &Subject, size: usize) -> Result<()> {
    if subject.volume.extents.iter().any(|&e| e < size) {
        return Err(Error::shape(
            "sample_batch",
            format!("subject `{}` extents {:?} smaller than patch {size}", subject.id, subject.volume.extents),
        ));
    }
    Ok(())
}

struct Assembler {
    size: usize,
    modalities: usize,
    input: Vec<f32>,
    labels: Vec<u8>,
    foreground_patches: usize,
    count: usize,
}

impl Assembler {
    fn new(modalities: usize, size: usize, capacity: usize) -> Self {
        let cube = size * size * size;
        Assembler {
            size,
            modalities,
            input: Vec::with_capacity(capacity * modalities * cube),
            labels: Vec::with_capacity(capacity * cube),
            foreground_patches: 0,
            count: 0,
        }
    }

    fn push(&mut self, s: &Subject, origin: [usize; 3]) {
        let cube = self.size.pow(3);
        let start = self.input.len();
        self.input.resize(start + self.modalities * cube, 0.0);
        for (m, chan) in s.volume.channels.iter().enumerate() {
            let dst = &mut self.input[start + m * cube..start + (m + 1) * cube];
            crop(chan, s.volume.extents, origin, self.size, dst);
        }
        let lstart = self.labels.len();
        self.labels.resize(lstart + cube, 0);
        crop(&s.labels.classes, s.labels.extents, origin, self.size, &mut self.labels[lstart..]);
        if self.labels[lstart..].iter().any(|&c| c != 0) {
            self.foreground_patches += 1;
        }
        self.count += 1;
    }

    fn finish(self) -> Result<Batch> {
        let p = self.size;
        Ok(Batch {
            input: Tensor::new(vec![self.count, self.modalities, p, p, p], self.input)?,
            targets: self.labels.into_iter().map(usize::from).collect(),
            foreground_patches: self.foreground_patches,
        })
    }
}

fn uniform_origin<R: Rng>(extents: [usize; 3], p: usize, rng: &mut R) -> [usize; 3] {
    extents.map(|e| rng.gen_range(0..=e - p))
}

/// An origin whose patch contains voxel `v`.
fn origin_around<R: Rng>(extents: [usize; 3], p: usize, v: usize, rng: &mut R) -> [usize; 3] {
    let [_, eh, ew] = extents;
    let coord = [v / (eh * ew), v / ew % eh, v % ew];
    let mut o = [0; 3];
    for a in 0..3 {
        let lo = (coord[a] + 1).saturating_sub(p);
        let hi = coord[a].min(extents[a] - p);
        o[a] = rng.gen_range(lo..=hi);
    }
    o
}

/// Draws `batch_size` patches from uniformly chosen subjects. The first
/// `foreground_quota` patches are centred on a random foreground voxel so
/// they are guaranteed to contain foreground; the rest have uniform origins.
pub fn sample_batch<R: Rng>(subjects: &[Subject], cfg: &TrainConfig, rng: &mut R) -> Result<Batch> {
    if subjects.is_empty() {
        return Err(Error::EmptyDataset("no training subjects".into()));
    }
    let p = cfg.patch_size;
    for s in subjects {
        check_fits(s, p)?;
        if s.volume.modalities() != subjects[0].volume.modalities() {
            return Err(Error::shape("sample_batch", "subjects disagree on modality count"));
        }
    }
    let quota = cfg.foreground_quota();
    let mut asm = Assembler::new(subjects[0].volume.modalities(), p, cfg.batch_size);
    for j in 0..cfg.batch_size {
        let s = &subjects[rng.gen_range(0..subjects.len())];
        let origin = if j < quota && !s.foreground.is_empty() {
            let v = s.foreground[rng.gen_range(0..s.foreground.len())];
            origin_around(s.volume.extents, p, v, rng)
        } else {
            uniform_origin(s.volume.extents, p, rng)
        };
        asm.push(s, origin);
    }
    asm.finish()
}
