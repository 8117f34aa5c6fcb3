//! Step-count pretraining of the trace classifier: cross-entropy over
//! card classes, with a second half of the run on 180°-rotated cards.

use rand::seq::SliceRandom;

use citysim::rot180;
use citysim::trace::PathTrace;
use numerics::optim::{clip_global_norm, AdamW};
use numerics::rng::stream;
use numerics::{ParamSet, Tape};
use pmvln::{estimate_step_count, tracenet_logits, TraceNetCfg};

use crate::error::{Result, TaskError};
use crate::runlog::{EpochLog, TrainRun};

#[derive(Debug, Clone)]
pub struct Phi1Cfg {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub clip: f32,
    pub seed: u64,
}

impl Default for Phi1Cfg {
    fn default() -> Self {
        Phi1Cfg { epochs: 10, batch: 60, lr: 2.5e-3, weight_decay: 0.01, clip: 5.0, seed: 0 }
    }
}

/// True for epochs in the rotated phase; the standard phase gets the
/// extra epoch when the count is odd.
pub fn rotated_phase(epoch: usize, epochs: usize) -> bool {
    epoch >= (epochs + 1) / 2
}

fn check_labels(cfg: &TraceNetCfg, data: &[PathTrace]) -> Result<()> {
    for t in data {
        if t.label < 1 || t.label > cfg.m_classes {
            return Err(TaskError::Data(format!(
                "trace label {} outside 1..={}",
                t.label, cfg.m_classes
            )));
        }
    }
    Ok(())
}

/// Mean classification loss over a pool, without updates.
pub fn eval_phi1_loss(ps: &ParamSet, cfg: &TraceNetCfg, data: &[PathTrace]) -> Result<f64> {
    if data.is_empty() {
        return Err(TaskError::Data("no traces to evaluate".into()));
    }
    let mut total = 0.0;
    for chunk in data.chunks(64) {
        let mut t: Tape<f32> = Tape::new();
        let mut rows = Vec::with_capacity(chunk.len());
        let mut labels = Vec::with_capacity(chunk.len());
        for card in chunk {
            let img = t.constant(card.image.clone())?;
            rows.push(tracenet_logits(&mut t, ps, cfg, img)?);
            labels.push(card.label - 1);
        }
        let stacked = t.stack_vecs(&rows)?;
        let loss = t.cross_entropy_rows(stacked, &labels)?;
        total += t.value(loss).item() as f64 * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Held-out accuracy as a fraction, standard orientation.
pub fn eval_phi1(ps: &ParamSet, cfg: &TraceNetCfg, data: &[PathTrace]) -> Result<f64> {
    if data.is_empty() {
        return Err(TaskError::Data("no traces to evaluate".into()));
    }
    let mut hit = 0usize;
    for card in data {
        if estimate_step_count(ps, cfg, &card.image)? == card.label {
            hit += 1;
        }
    }
    Ok(hit as f64 / data.len() as f64)
}

/// Trains the classifier section in place and returns the run record.
pub fn train_phi1(
    ps: &mut ParamSet,
    cfg: &TraceNetCfg,
    pcfg: &Phi1Cfg,
    train: &[PathTrace],
    held: &[PathTrace],
) -> Result<TrainRun> {
    if pcfg.batch == 0 {
        return Err(TaskError::Config("batch size must be positive".into()));
    }
    if train.is_empty() {
        return Err(TaskError::Data("empty training pool".into()));
    }
    check_labels(cfg, train)?;
    check_labels(cfg, held)?;
    let mut run = TrainRun::new("phi1", pcfg.epochs, pcfg.batch, pcfg.lr as f64, pcfg.seed);
    run.selection = "final epoch".into();
    let mut opt = AdamW::new(pcfg.lr, pcfg.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..pcfg.epochs {
        let rotated = rotated_phase(epoch, pcfg.epochs);
        let mut rng = stream(pcfg.seed, "phi1-shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(pcfg.batch) {
            let mut t: Tape<f32> = Tape::new();
            let mut rows = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let card = &train[i];
                let img = if rotated { rot180(&card.image) } else { card.image.clone() };
                let v = t.constant(img)?;
                rows.push(tracenet_logits(&mut t, ps, cfg, v)?);
                labels.push(card.label - 1);
            }
            let stacked = t.stack_vecs(&rows)?;
            let loss = t.cross_entropy_rows(stacked, &labels)?;
            loss_sum += t.value(loss).item() as f64 * batch.len() as f64;
            t.backward(loss)?;
            let mut grads = t.param_grads()?;
            clip_global_norm(&mut grads, pcfg.clip);
            opt.step(ps, &grads)?;
        }
        let acc = if held.is_empty() { None } else { Some(eval_phi1(ps, cfg, held)?) };
        run.log.push(EpochLog {
            epoch,
            loss: loss_sum / train.len() as f64,
            acc,
            tc: None,
            spd: None,
            sed: None,
        });
    }
    run.best_epoch = pcfg.epochs.checked_sub(1);
    Ok(run)
}
