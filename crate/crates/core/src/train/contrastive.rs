use super::{at_step, augmented_batch, check_batchable, data_rng, epoch_batches, LogRow, Method, TrainConfig, TrainingLog};
use crate::autodiff::{SgdMomentum, Tape};
use crate::error::{Error, Result};
use crate::losses::{build_positive_mask, mscon_condition_on_tape, mscon_total_on_tape, simclr_mask, LossConfig, Reduction};
use crate::model::{ModelParams, Trainable};
use crate::synth::MultiSimDataset;

/// Trains encoder and heads (and the log-variances when weighted) with a
/// contrastive objective. The final-epoch parameters are returned.
pub fn train_contrastive(dataset: &MultiSimDataset, params: ModelParams, cfg: &TrainConfig) -> Result<(ModelParams, TrainingLog)> {
    train_contrastive_with(dataset, params, cfg, &mut |_, _| Ok(()))
}

/// [`train_contrastive`] with a hook called after every epoch (1-based).
pub fn train_contrastive_with(
    dataset: &MultiSimDataset,
    mut params: ModelParams,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &ModelParams) -> Result<()>,
) -> Result<(ModelParams, TrainingLog)> {
    let num_training = dataset.spec.num_training_tasks();
    cfg.validate(num_training)?;
    if !cfg.method.is_contrastive() {
        return Err(Error::contract("train_contrastive", format!("{} is not a contrastive method", cfg.method)));
    }
    let heads = cfg.method.num_heads(num_training);
    if params.num_tasks() != heads || params.config.input_dim != dataset.input_dim() {
        return Err(Error::contract(
            "train_contrastive",
            format!(
                "{} needs {heads} heads on {}-dim inputs; model has {} heads on {}-dim inputs",
                cfg.method,
                dataset.input_dim(),
                params.num_tasks(),
                params.config.input_dim
            ),
        ));
    }
    check_batchable(dataset, cfg)?;

    let tasks = cfg.method.supervised_tasks(num_training);
    let columns: Vec<&[u32]> = tasks.iter().map(|&c| dataset.labels(c)).collect();
    let names: Vec<String> = match cfg.method {
        Method::Simclr => vec!["instance".to_string()],
        _ => tasks.iter().map(|&c| dataset.task_name(c).to_string()).collect(),
    };
    let n = cfg.batch_size;
    let sources: Vec<usize> = (0..n).chain(0..n).collect();
    let instance_mask = (cfg.method == Method::Simclr).then(|| simclr_mask(&sources));
    let loss_cfg = LossConfig { temperature: cfg.temperature, reduction: Reduction::MeanOverAnchors };
    let weighted = cfg.method.is_weighted();
    let trainable = Trainable { encoder: true, heads: true, log_var: weighted };

    let mut rng = data_rng(cfg.seed);
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum)?;
    let mut log = TrainingLog::default();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        for batch in epoch_batches(&dataset.split.train, n, &mut rng) {
            let x = augmented_batch(&dataset.inputs, &batch, cfg.jitter_sigma, &mut rng)?;
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, trainable);
            let xv = tape.constant(x);
            let h = bound.encode(&mut tape, xv)?;
            let mut losses = Vec::with_capacity(heads);
            for head in 0..heads {
                let v = bound.project(&mut tape, h, head)?;
                let mask = match &instance_mask {
                    Some(m) => m.clone(),
                    None => {
                        let labels: Vec<u32> = batch.iter().chain(&batch).map(|&i| columns[head][i]).collect();
                        build_positive_mask(&labels)
                    }
                };
                losses.push(mscon_condition_on_tape(&mut tape, v, &mask, &loss_cfg)?);
            }
            let total = mscon_total_on_tape(&mut tape, &losses, &bound.log_var, weighted)?;
            let total_value = tape.value(total).item();
            if !total_value.is_finite() {
                return Err(Error::Divergence(format!("step {step}: objective is {total_value}")));
            }
            for (c, &l) in losses.iter().enumerate() {
                let s = params.log_var[c];
                log.rows.push(LogRow {
                    step,
                    epoch,
                    task: names[c].clone(),
                    loss: tape.value(l).item(),
                    sigma_sq: s.exp(),
                    weight: (-s).exp(),
                    total: total_value,
                });
            }
            let mut grads = tape.backward(total)?;
            let g = bound.collect_grads(&mut grads);
            opt.step(&mut params.param_refs(&g)).map_err(|e| at_step(e, step))?;
            step += 1;
        }
        on_epoch(epoch, &params)?;
    }
    Ok((params, log))
}
