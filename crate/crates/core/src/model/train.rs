use std::io::Write;

use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::evaluate;
use super::{
    seeded_rng, Adam, AnyModel, Batch, CycleArch, CycleVae, Evaluator, InvexArch, InvexModel,
    LabelledDataset, LossOptions, ModelError, ModelKind, TargetScale, TrainConfig, VaeModel,
    TRAIN_STREAM,
};

/// Sample-weighted means of the loss terms over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub total: f64,
    pub nll_x: f64,
    pub nll_y: f64,
    pub kl: f64,
    pub cycle: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    /// Property mean-squared error on the training set, data units.
    pub initial_mse: f64,
    pub final_mse: f64,
    pub steps: usize,
}

impl TrainReport {
    /// `epoch,total,nll_x,nll_y,kl,cycle,beta`, one line per epoch.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)
                .map_err(|e| ModelError::Dataset(e.to_string()))?;
        }
        out.flush().map_err(|e| ModelError::Dataset(e.to_string()))
    }
}

/// Property MSE of `model` on `data` in data units.
pub fn property_mse<M: VaeModel>(model: &M, data: &LabelledDataset) -> Result<f64, ModelError> {
    let pred = Evaluator::new(model).property(data.x().view())?;
    Ok((&pred - data.y()).mapv(|e| e * e).mean().unwrap_or(0.0))
}

pub fn train<M: VaeModel>(
    model: &mut M,
    data: &LabelledDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    train_observed(model, data, cfg, |_| {})
}

/// Trains in place, calling `on_epoch` after every epoch.
pub fn train_observed<M, F>(
    model: &mut M,
    data: &LabelledDataset,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport, ModelError>
where
    M: VaeModel,
    F: FnMut(&EpochRow),
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::Dataset("training set is empty".into()));
    }
    if data.dim() != model.input_dim() {
        return Err(ModelError::Dataset(format!(
            "data has {} columns, model expects {}",
            data.dim(),
            model.input_dim()
        )));
    }
    model.set_target_scale(TargetScale::fit(
        data.y().as_slice().expect("contiguous targets"),
    ));
    let initial_mse = property_mse(model, data)?;

    let mut rng = seeded_rng(cfg.seed, TRAIN_STREAM);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rows = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        let opts = LossOptions {
            beta: cfg.beta_at(epoch),
            gamma: cfg.cycle_weight,
            cycle: cfg.invex_cycle || !model.exact_inverse(),
            reencode: cfg.cycle_reencode,
        };
        order.shuffle(&mut rng);
        let mut sums = [0.0; 5];
        for idx in order.chunks(cfg.batch_size) {
            let batch = Batch::draw(
                data.x().select(Axis(0), idx),
                data.y().select(Axis(0), idx),
                model.latent_dim(),
                cfg.latent_box,
                cfg.cycle_reencode,
                &mut rng,
            );
            let (loss, grads) = evaluate(model, &batch, &opts, true).map_err(|e| match e {
                ModelError::Divergence { term, .. } => ModelError::Divergence { epoch, term },
                other => other,
            })?;
            let grads = grads.expect("gradients requested");
            if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(ModelError::Divergence {
                    epoch,
                    term: "gradient",
                });
            }
            adam.step(model.params_mut(), &grads);
            steps += 1;
            let w = idx.len() as f64;
            for (s, v) in sums
                .iter_mut()
                .zip([loss.total, loss.nll_x, loss.nll_y, loss.kl, loss.cycle])
            {
                *s += w * v;
            }
        }
        let n = data.len() as f64;
        let row = EpochRow {
            epoch,
            total: sums[0] / n,
            nll_x: sums[1] / n,
            nll_y: sums[2] / n,
            kl: sums[3] / n,
            cycle: sums[4] / n,
            beta: opts.beta,
        };
        on_epoch(&row);
        rows.push(row);
    }
    let final_mse = property_mse(model, data)?;
    Ok(TrainReport {
        rows,
        initial_mse,
        final_mse,
        steps,
    })
}

/// Builds the default architecture of `kind` for the data and trains it.
pub fn train_kind(
    kind: ModelKind,
    data: &LabelledDataset,
    cfg: &TrainConfig,
) -> Result<(AnyModel, TrainReport), ModelError> {
    let d = data.dim();
    match kind {
        ModelKind::Invex => {
            let mut m = InvexModel::new(InvexArch::new(d), cfg.seed);
            let r = train(&mut m, data, cfg)?;
            Ok((AnyModel::Invex(m), r))
        }
        ModelKind::CycleBaseline | ModelKind::CycleInvex => {
            let arch = if kind == ModelKind::CycleBaseline {
                CycleArch::baseline(d)
            } else {
                CycleArch::convex(d)
            };
            let mut m = CycleVae::new(arch, cfg.seed);
            let r = train(&mut m, data, cfg)?;
            Ok((AnyModel::Cycle(m), r))
        }
    }
}
