use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{at_step, check_batchable, data_rng, epoch_batches, init_model, LogRow, TrainConfig, TrainingLog};
use crate::autodiff::{ParamRef, SgdMomentum, Tape, Var};
use crate::error::{Error, Result};
use crate::eval::{argmax_rows, linear_logits, top1_accuracy};
use crate::losses::xent_on_tape;
use crate::model::{encode, Linear, ModelParams, Trainable};
use crate::synth::MultiSimDataset;

/// Trains an encoder with linear classifiers on the embedding using
/// cross-entropy on one jittered view per sample. Returns the encoder from
/// the epoch with the best mean validation accuracy; the classifiers are
/// discarded.
pub fn train_xent(dataset: &MultiSimDataset, cfg: &TrainConfig) -> Result<(ModelParams, TrainingLog)> {
    train_xent_with(dataset, cfg, &mut |_, _| Ok(()))
}

pub(super) fn train_xent_with(
    dataset: &MultiSimDataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &ModelParams) -> Result<()>,
) -> Result<(ModelParams, TrainingLog)> {
    if cfg.method.is_contrastive() {
        return Err(Error::contract("train_xent", format!("{} is not a cross-entropy method", cfg.method)));
    }
    let mut params = init_model(dataset, cfg)?;
    check_batchable(dataset, cfg)?;
    let tasks = cfg.method.supervised_tasks(dataset.spec.num_training_tasks());
    if dataset.split.val.is_empty() {
        return Err(Error::contract("train_xent", "model selection needs a non-empty validation split"));
    }
    let columns: Vec<&[u32]> = tasks.iter().map(|&c| dataset.labels(c)).collect();

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(2);
    let emb = params.config.embedding_dim;
    let mut classifiers: Vec<Linear> =
        tasks.iter().map(|&c| Linear::init(emb, dataset.num_classes(c), &mut init_rng)).collect();

    let val_x = dataset.inputs.select_rows(&dataset.split.val);
    let mut best: Option<(f64, ModelParams)> = None;
    let mut rng = data_rng(cfg.seed);
    let mut opt = SgdMomentum::new(cfg.xent_lr, cfg.momentum)?;
    let mut log = TrainingLog::default();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        for batch in epoch_batches(&dataset.split.train, cfg.batch_size, &mut rng) {
            let mut x = dataset.inputs.select_rows(&batch);
            for v in x.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += cfg.jitter_sigma * z;
            }
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, Trainable::NETWORK);
            let bound_cls: Vec<_> = classifiers.iter().map(|l| l.bind(&mut tape, true)).collect();
            let xv = tape.constant(x);
            let h = bound.encode(&mut tape, xv)?;
            let mut losses: Vec<Var> = Vec::with_capacity(tasks.len());
            for (t, cls) in bound_cls.iter().enumerate() {
                let logits = cls.forward(&mut tape, h)?;
                let labels: Vec<u32> = batch.iter().map(|&i| columns[t][i]).collect();
                losses.push(xent_on_tape(&mut tape, logits, &labels)?);
            }
            let mut total = losses[0];
            for &l in &losses[1..] {
                total = tape.add(total, l)?;
            }
            let total_value = tape.value(total).item();
            if !total_value.is_finite() {
                return Err(Error::Divergence(format!("step {step}: objective is {total_value}")));
            }
            for (t, &l) in losses.iter().enumerate() {
                log.rows.push(LogRow {
                    step,
                    epoch,
                    task: dataset.task_name(tasks[t]).to_string(),
                    loss: tape.value(l).item(),
                    sigma_sq: 1.0,
                    weight: 1.0,
                    total: total_value,
                });
            }
            let mut grads = tape.backward(total)?;
            let g = bound.collect_grads(&mut grads);
            let cls_grads: Vec<[Option<Vec<f64>>; 2]> =
                bound_cls.iter().map(|b| [grads.take(b.weight), grads.take(b.bias)]).collect();
            let mut refs = params.param_refs(&g);
            for (t, (layer, [gw, gb])) in classifiers.iter_mut().zip(&cls_grads).enumerate() {
                refs.push(ParamRef { name: format!("classifier.{t}.weight"), value: layer.weight.data_mut(), grad: gw.as_deref() });
                refs.push(ParamRef { name: format!("classifier.{t}.bias"), value: layer.bias.data_mut(), grad: gb.as_deref() });
            }
            opt.step(&mut refs).map_err(|e| at_step(e, step))?;
            step += 1;
        }

        let h_val = encode(&params, &val_x)?;
        let mut acc = 0.0;
        for (t, layer) in classifiers.iter().enumerate() {
            let pred = argmax_rows(&linear_logits(layer, &h_val)?);
            let truth: Vec<u32> = dataset.split.val.iter().map(|&i| columns[t][i]).collect();
            acc += top1_accuracy(&pred, &truth)?;
        }
        acc /= classifiers.len() as f64;
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, params.clone()));
        }
        on_epoch(epoch, &params)?;
    }
    let (_, best_params) = best.expect("at least one epoch");
    Ok((best_params, log))
}
