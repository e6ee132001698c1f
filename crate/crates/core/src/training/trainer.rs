use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::config::{lr_schedule, weight_decay_at, TrainConfig};
use super::data::{sample_batch, Batch, Subject};
use crate::error::{Error, Result};
use crate::network::{apply_running_updates, init_params, model_forward, Forward, Mode, SegNetConfig, SegNetParams};

/// The complete state of a training run. Saving and restoring it resumes
/// the run bit-exactly.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: SegNetConfig,
    pub train: TrainConfig,
    pub params: SegNetParams<f32>,
    pub adam: AdamState<f32>,
    pub rng: ChaCha8Rng,
    /// Completed optimizer steps.
    pub iteration: u64,
    /// Loss of every completed step, before its update.
    pub losses: Vec<f64>,
}

impl Trainer {
    /// Fresh parameters from `model.seed`; batch sampling from `train.seed`.
    pub fn new(model: SegNetConfig, train: TrainConfig) -> Result<Self> {
        model.validate()?;
        train.validate()?;
        model.check_extents(&[train.patch_size; 3])?;
        let params = init_params(&model, model.seed);
        let adam = AdamState::for_config(&params, &train);
        let rng = ChaCha8Rng::seed_from_u64(train.seed);
        Ok(Trainer {
            model,
            train,
            params,
            adam,
            rng,
            iteration: 0,
            losses: Vec::new(),
        })
    }

    /// Cross-entropy of `batch` under the current parameters, without
    /// updating anything.
    pub fn loss(&self, batch: &Batch, mode: Mode) -> Result<f64> {
        let mut f = Forward::inference(&self.params, mode, self.model.bn_eps, self.model.bn_momentum);
        let x = f.input(batch.input.clone());
        let y = model_forward(&mut f, &self.model, x)?;
        let l = f.tape.cross_entropy(y, &batch.targets)?;
        Ok(f.tape.value(l).data()[0] as f64)
    }

    /// One optimizer step on `batch`. Returns the loss before the update.
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grads, updates) = {
            let mut f = Forward::new(&self.params, Mode::Train, self.model.bn_eps, self.model.bn_momentum);
            let x = f.input(batch.input.clone());
            let y = model_forward(&mut f, &self.model, x)?;
            let l = f.tape.cross_entropy(y, &batch.targets)?;
            let loss = f.tape.value(l).data()[0] as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration: self.iteration,
                    loss,
                });
            }
            f.tape.backward(l)?;
            (loss, f.param_grads(), f.running_updates())
        };
        apply_running_updates(&mut self.params, updates);
        let lr = lr_schedule(self.iteration, &self.train);
        let decay = weight_decay_at(self.iteration, &self.train);
        adam_step(&mut self.params, &grads, &mut self.adam, lr, decay)?;
        self.iteration += 1;
        self.losses.push(loss);
        Ok(loss)
    }

    /// One step on a freshly sampled batch.
    pub fn step_sampled(&mut self, subjects: &[Subject]) -> Result<f64> {
        let batch = sample_batch(subjects, &self.train, &mut self.rng)?;
        self.step(&batch)
    }

    /// Sampled steps until `iteration == until`.
    pub fn run_until(
        &mut self,
        subjects: &[Subject],
        until: u64,
        mut progress: impl FnMut(u64, f64),
    ) -> Result<()> {
        while self.iteration < until {
            let loss = self.step_sampled(subjects)?;
            progress(self.iteration, loss);
        }
        Ok(())
    }

    /// Two-column `iteration loss` text, one line per completed step.
    pub fn loss_trace_text(&self) -> String {
        self.losses
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{i} {l:.9}\n"))
            .collect()
    }
}

/// Trains from scratch for `train.iterations` sampled steps.
pub fn train_loop(subjects: &[Subject], model: SegNetConfig, train: TrainConfig) -> Result<Trainer> {
    if subjects.is_empty() {
        return Err(Error::EmptyDataset("no training subjects".into()));
    }
    let mut t = Trainer::new(model, train)?;
    let until = t.train.iterations;
    t.run_until(subjects, until, |_, _| {})?;
    Ok(t)
}
