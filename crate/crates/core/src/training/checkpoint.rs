use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::trainer::Trainer;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::network::archive::Archive;
use crate::network::{layout, SegNetConfig, SegNetParams};
use crate::tensor::Tensor;

const ADAM_M: &str = "adam.m/";
const ADAM_V: &str = "adam.v/";

/// SHA-256 over the canonical model description and the training identity
/// (every training field except the iteration budget).
pub fn config_hash(model: &SegNetConfig, train: &TrainConfig) -> String {
    let mut h = Sha256::new();
    h.update(model.describe().as_bytes());
    h.update(b"\n");
    h.update(train.identity().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    let bad = || Error::Invalid(format!("malformed rng seed `{s}`"));
    if s.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

/// Writes parameters, running statistics, optimizer moments, sampler state
/// and the loss trace of `t`.
pub fn save_checkpoint(t: &Trainer, path: &Path) -> Result<()> {
    let mut a = Archive::default();
    a.push_meta("kind", "checkpoint");
    a.push_meta("config_hash", config_hash(&t.model, &t.train));
    a.push_meta("model", t.model.describe());
    a.push_meta("train", t.train.describe());
    a.push_meta("iteration", t.iteration);
    a.push_meta("adam_t", t.adam.t);
    a.push_meta("rng_seed", hex(&t.rng.get_seed()));
    a.push_meta("rng_stream", t.rng.get_stream());
    a.push_meta("rng_word_pos", t.rng.get_word_pos());
    let losses: Vec<String> = t.losses.iter().map(|l| format!("{l:?}")).collect();
    a.push_meta("losses", losses.join(","));
    t.params.write_into(&mut a);
    for (prefix, map) in [(ADAM_M, &t.adam.m), (ADAM_V, &t.adam.v)] {
        for (name, m) in map {
            a.push_tensor(format!("{prefix}{name}"), m.shape().to_vec(), m.data().to_vec());
        }
    }
    a.save(path)
}

fn restore(a: &Archive, model: SegNetConfig, train: TrainConfig) -> Result<Trainer> {
    let lay = layout(&model);
    let params = SegNetParams::read_from(a, &lay)?;
    let moments = |prefix: &str| -> Result<BTreeMap<String, Tensor<f32>>> {
        lay.params
            .iter()
            .map(|spec| {
                let key = format!("{prefix}{}", spec.name);
                let t = a
                    .tensor(&key)
                    .ok_or_else(|| Error::Invalid(format!("checkpoint lacks `{key}`")))?;
                if t.shape != spec.shape {
                    return Err(Error::shape("load_checkpoint", format!("`{key}` has shape {:?}", t.shape)));
                }
                Ok((spec.name.clone(), Tensor::new(t.shape.clone(), t.data.clone())?))
            })
            .collect()
    };
    let adam = AdamState {
        m: moments(ADAM_M)?,
        v: moments(ADAM_V)?,
        t: a.meta_parse("adam_t")?,
        beta1: train.beta1,
        beta2: train.beta2,
        epsilon: train.epsilon,
    };
    let mut rng = ChaCha8Rng::from_seed(unhex(a.meta("rng_seed")?)?);
    rng.set_stream(a.meta_parse("rng_stream")?);
    rng.set_word_pos(a.meta_parse("rng_word_pos")?);
    let losses = a
        .meta("losses")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Invalid(format!("malformed loss `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let iteration: u64 = a.meta_parse("iteration")?;
    if losses.len() as u64 != iteration {
        return Err(Error::Invalid(format!(
            "checkpoint records {} losses for {iteration} iterations",
            losses.len()
        )));
    }
    Ok(Trainer {
        model,
        train,
        params,
        adam,
        rng,
        iteration,
        losses,
    })
}

fn open(path: &Path) -> Result<Archive> {
    let a = Archive::load(path)?;
    if a.meta("kind")? != "checkpoint" {
        return Err(Error::Invalid(format!("{} is not a training checkpoint", path.display())));
    }
    Ok(a)
}

/// Loads a checkpoint using the configurations recorded inside it.
pub fn read_checkpoint(path: &Path) -> Result<Trainer> {
    let a = open(path)?;
    let model = SegNetConfig::from_description(a.meta("model")?)?;
    let train = TrainConfig::from_description(a.meta("train")?)?;
    let stored = a.meta("config_hash")?;
    let hash = config_hash(&model, &train);
    if stored != hash {
        return Err(Error::ConfigMismatch {
            expected: hash,
            found: stored.to_string(),
        });
    }
    restore(&a, model, train)
}

/// Loads a checkpoint to continue training under `model` and `train`, which
/// must hash identically to the run that wrote it. The iteration budget may
/// differ.
pub fn resume_checkpoint(path: &Path, model: &SegNetConfig, train: &TrainConfig) -> Result<Trainer> {
    let a = open(path)?;
    let expected = config_hash(model, train);
    let found = a.meta("config_hash")?;
    if found != expected {
        return Err(Error::ConfigMismatch {
            expected,
            found: found.to_string(),
        });
    }
    restore(&a, model.clone(), train.clone())
}
