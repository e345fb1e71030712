//! Mini-batch training loop shared by the recurrent surrogate and the FFN
//! baseline. Updates are strictly sequential; determinism comes from the
//! seeded shuffle and dropout streams.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{OutputMode, TrainingConfig};
use crate::domain::{expand_inputs, FeatureLayout, Normalizer, OUTPUT_CHANNELS};
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::sampler::Dataset;

use super::adam::AdamState;
use super::ffn::FfnWeights;
use super::metamodel::{batch_loss_and_dpred, MetamodelWeights};

/// Anything the driver below can train: flat parameter access plus batch
/// loss/gradient evaluation.
pub trait TrainableNet {
    fn n_params(&self) -> usize;
    fn to_flat(&self) -> Vec<f64>;
    fn from_flat(&mut self, flat: &[f64]) -> Result<()>;
    /// Training-mode loss and flat gradient on one batch.
    fn loss_and_grad_flat(
        &self,
        xs: &[ArrayView2<f64>],
        ys: &[ArrayView2<f64>],
        beta: f64,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>)>;
    /// Eval-mode loss on one batch.
    fn eval_loss(&self, xs: &[ArrayView2<f64>], ys: &[ArrayView2<f64>], beta: f64) -> Result<f64>;
}

impl TrainableNet for MetamodelWeights {
    fn n_params(&self) -> usize {
        MetamodelWeights::n_params(self)
    }

    fn to_flat(&self) -> Vec<f64> {
        MetamodelWeights::to_flat(self)
    }

    fn from_flat(&mut self, flat: &[f64]) -> Result<()> {
        MetamodelWeights::from_flat(self, flat)
    }

    fn loss_and_grad_flat(
        &self,
        xs: &[ArrayView2<f64>],
        ys: &[ArrayView2<f64>],
        beta: f64,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>)> {
        let pass = self.forward_train(xs, dropout, rng)?;
        let target_steps = gather_target_steps(ys);
        let (loss, dpreds) = batch_loss_and_dpred(&pass.preds, &target_steps, beta);
        let grads = self.backward(&pass, &dpreds)?;
        Ok((loss, grads.to_flat()))
    }

    fn eval_loss(&self, xs: &[ArrayView2<f64>], ys: &[ArrayView2<f64>], beta: f64) -> Result<f64> {
        let preds = self.forward_batch(xs)?;
        let mut total = 0.0;
        for (pred, target) in preds.iter().zip(ys) {
            total += super::metamodel::loss(pred, &target.to_owned(), beta)?;
        }
        Ok(total / xs.len() as f64)
    }
}

impl TrainableNet for FfnWeights {
    fn n_params(&self) -> usize {
        FfnWeights::n_params(self)
    }

    fn to_flat(&self) -> Vec<f64> {
        FfnWeights::to_flat(self)
    }

    fn from_flat(&mut self, flat: &[f64]) -> Result<()> {
        FfnWeights::from_flat(self, flat)
    }

    fn loss_and_grad_flat(
        &self,
        xs: &[ArrayView2<f64>],
        ys: &[ArrayView2<f64>],
        beta: f64,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<f64>)> {
        let (loss, grads) = self.loss_and_grad(xs, ys, beta, dropout, rng)?;
        Ok((loss, grads.to_flat()))
    }

    fn eval_loss(&self, xs: &[ArrayView2<f64>], ys: &[ArrayView2<f64>], beta: f64) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let pred = self.forward(x)?;
            total += super::metamodel::loss(&pred, &y.to_owned(), beta)?;
        }
        Ok(total / xs.len() as f64)
    }
}

fn gather_target_steps(ys: &[ArrayView2<f64>]) -> Vec<Array2<f64>> {
    let n = ys[0].nrows();
    let c = ys[0].ncols();
    (0..n)
        .map(|k| {
            let mut step = Array2::zeros((ys.len(), c));
            for (b, y) in ys.iter().enumerate() {
                step.row_mut(b).assign(&y.row(k));
            }
            step
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{}", e.train_loss),
                e.val_loss.map_or(String::new(), |v| format!("{v}")),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Expands every episode of a dataset into normalized feature and target
/// matrices.
pub fn prepare_tensors(
    dataset: &Dataset,
    layout: &FeatureLayout,
    output_mode: OutputMode,
) -> Result<(Vec<Array2<f64>>, Vec<Array2<f64>>)> {
    let normalizer = &dataset.meta.normalizer;
    let mut features = Vec::with_capacity(dataset.episodes.len());
    let mut targets = Vec::with_capacity(dataset.episodes.len());
    for ep in &dataset.episodes {
        features.push(expand_inputs(
            &ep.params,
            &ep.usage,
            &ep.occupancy,
            &ep.weather,
            ep.anchor,
            normalizer,
            layout,
        )?);
        targets.push(normalized_targets(ep, normalizer, output_mode)?);
    }
    Ok((features, targets))
}

/// Normalized target matrix for one episode, matching the network's output
/// channel layout.
pub fn normalized_targets(
    ep: &crate::domain::Episode,
    normalizer: &Normalizer,
    output_mode: OutputMode,
) -> Result<Array2<f64>> {
    let n = ep.horizon();
    match output_mode {
        OutputMode::Full => {
            let mut t = Array2::zeros((n, OUTPUT_CHANNELS.len()));
            for (j, ch) in OUTPUT_CHANNELS.iter().enumerate() {
                let series = ep.outputs.channel(*ch);
                for k in 0..n {
                    t[[k, j]] = normalizer.normalize(ch.name(), series[k])?;
                }
            }
            Ok(t)
        }
        OutputMode::Reduced => {
            let totals = ep.outputs.total_consumption();
            let mut t = Array2::zeros((n, 2));
            for k in 0..n {
                t[[k, 0]] = normalizer.normalize("T_INT_OFFICE", ep.outputs.t_int[k])?;
                t[[k, 1]] = normalizer.normalize("Q_TOTAL", totals[k])?;
            }
            Ok(t)
        }
    }
}

/// Number of output channels for a mode.
pub fn output_channels(mode: OutputMode) -> usize {
    match mode {
        OutputMode::Full => OUTPUT_CHANNELS.len(),
        OutputMode::Reduced => 2,
    }
}

/// Trains `net` in place and returns the per-epoch history. The weights
/// left in `net` are those of the best validation epoch (best training
/// epoch when the validation set is empty).
pub fn train<M: TrainableNet>(
    net: &mut M,
    features: &[Array2<f64>],
    targets: &[Array2<f64>],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::Dimension("empty training split".into()));
    }
    let mut adam = AdamState::new(net.n_params());
    let mut flat = net.to_flat();
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, flat.clone(), 0usize);

    let mut order: Vec<usize> = train_idx.to_vec();
    for epoch in 0..cfg.epochs {
        let mut rng = substream(seed, Stream::Training, epoch as u64);
        // Fisher-Yates shuffle from the epoch substream.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<ArrayView2<f64>> = chunk.iter().map(|i| features[*i].view()).collect();
            let ys: Vec<ArrayView2<f64>> = chunk.iter().map(|i| targets[*i].view()).collect();
            let (loss, grad) = net.loss_and_grad_flat(&xs, &ys, cfg.beta, cfg.dropout, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "training loss non-finite at epoch {epoch}"
                )));
            }
            adam.step(
                &mut flat,
                &grad,
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            )?;
            net.from_flat(&flat)?;
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = epoch_loss / seen as f64;

        let val_loss = if val_idx.is_empty() {
            None
        } else {
            let mut total = 0.0;
            for chunk in val_idx.chunks(cfg.batch_size) {
                let xs: Vec<ArrayView2<f64>> = chunk.iter().map(|i| features[*i].view()).collect();
                let ys: Vec<ArrayView2<f64>> = chunk.iter().map(|i| targets[*i].view()).collect();
                total += net.eval_loss(&xs, &ys, cfg.beta)? * chunk.len() as f64;
            }
            Some(total / val_idx.len() as f64)
        };
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::Diverged(format!(
                    "validation loss non-finite at epoch {epoch} (train loss {train_loss})"
                )));
            }
        }

        let selection = val_loss.unwrap_or(train_loss);
        if selection < best.0 {
            best = (selection, flat.clone(), epoch);
        }
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }

    history.best_epoch = best.2;
    net.from_flat(&best.1)?;
    Ok(history)
}
