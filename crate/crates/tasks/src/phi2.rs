//! Landmark pretraining: binary matching of glyph against summary with
//! an in-batch negative, plus weighted cell-classification geolocation.

use rand::seq::SliceRandom;
use rand::Rng;

use numerics::optim::{clip_global_norm, AdamW};
use numerics::rng::stream;
use numerics::{Array, ParamSet, Tape, VarId};
use pmvln::{geo_logits, glyph_embed, match_logit, mean_token_embed, PmCfg};

use crate::data::LandmarkPair;
use crate::error::{Result, TaskError};
use crate::runlog::{EpochLog, TrainRun};

#[derive(Debug, Clone)]
pub struct Phi2Cfg {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub clip: f32,
    /// Weight of the geolocation term in the total loss.
    pub w_geo: f64,
    pub seed: u64,
}

impl Default for Phi2Cfg {
    fn default() -> Self {
        Phi2Cfg {
            epochs: 22,
            batch: 30,
            lr: 1.0e-2,
            weight_decay: 0.01,
            clip: 5.0,
            w_geo: 1.0,
            seed: 0,
        }
    }
}

fn check_pairs(cfg: &PmCfg, data: &[LandmarkPair]) -> Result<()> {
    for p in data {
        if p.tokens.is_empty() {
            return Err(TaskError::Data("landmark pair with an empty summary".into()));
        }
        if p.cell >= cfg.glyph.n_cells {
            return Err(TaskError::Data(format!(
                "cell {} outside the {}-cell grid",
                p.cell, cfg.glyph.n_cells
            )));
        }
    }
    Ok(())
}

/// Other index in [0, n) drawn uniformly, never `i`.
fn negative_index(rng: &mut rand_chacha::ChaCha8Rng, i: usize, n: usize) -> usize {
    let j = rng.gen_range(0..n - 1);
    j + usize::from(j >= i)
}

/// Matching and geolocation accuracy over a pool, negatives drawn from
/// the same pool under a fixed stream.
#[derive(Debug, Clone, Copy)]
pub struct Phi2Eval {
    /// Fraction of matched/mismatched pairs classified by logit sign.
    pub matching: f64,
    /// Fraction of glyphs whose argmax cell is the true cell.
    pub cell: f64,
}

pub fn eval_phi2(ps: &ParamSet, cfg: &PmCfg, data: &[LandmarkPair], seed: u64) -> Result<Phi2Eval> {
    if data.len() < 2 {
        return Err(TaskError::Data("evaluation needs at least two pairs".into()));
    }
    check_pairs(cfg, data)?;
    let mut match_hits = 0usize;
    let mut cell_hits = 0usize;
    for (i, p) in data.iter().enumerate() {
        let mut rng = stream(seed, "phi2-eval-neg", i as u64);
        let j = negative_index(&mut rng, i, data.len());
        let mut t: Tape<f32> = Tape::new();
        let img = t.constant(p.glyph.clone())?;
        let e_g = glyph_embed(&mut t, ps, &cfg.glyph, img)?;
        let e_t = mean_token_embed(&mut t, ps, &p.tokens)?;
        let e_n = mean_token_embed(&mut t, ps, &data[j].tokens)?;
        let pos = match_logit(&mut t, ps, e_g, e_t)?;
        let neg = match_logit(&mut t, ps, e_g, e_n)?;
        let geo = geo_logits(&mut t, ps, e_g)?;
        match_hits += usize::from(t.value(pos).item() > 0.0);
        match_hits += usize::from(t.value(neg).item() < 0.0);
        let gv = t.value(geo);
        let best = (0..gv.numel()).max_by(|&a, &b| gv.data()[a].total_cmp(&gv.data()[b]));
        cell_hits += usize::from(best == Some(p.cell));
    }
    Ok(Phi2Eval {
        matching: match_hits as f64 / (2 * data.len()) as f64,
        cell: cell_hits as f64 / data.len() as f64,
    })
}

/// Trains the landmark sections in place and returns the run record.
/// Batches are drawn whole; a trailing remainder of one is dropped since
/// it cannot supply an in-batch negative.
pub fn train_phi2(
    ps: &mut ParamSet,
    cfg: &PmCfg,
    pcfg: &Phi2Cfg,
    train: &[LandmarkPair],
    held: &[LandmarkPair],
) -> Result<TrainRun> {
    if pcfg.batch < 2 {
        return Err(TaskError::Config(format!(
            "batch {} leaves no in-batch negative",
            pcfg.batch
        )));
    }
    if train.len() < 2 {
        return Err(TaskError::Data("training pool needs at least two pairs".into()));
    }
    check_pairs(cfg, train)?;
    check_pairs(cfg, held)?;
    let mut run = TrainRun::new("phi2", pcfg.epochs, pcfg.batch, pcfg.lr as f64, pcfg.seed);
    run.selection = "final epoch".into();
    let mut opt = AdamW::new(pcfg.lr, pcfg.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..pcfg.epochs {
        let mut rng = stream(pcfg.seed, "phi2-shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (bi, batch) in order.chunks(pcfg.batch).enumerate() {
            if batch.len() < 2 {
                continue;
            }
            let mut nrng = stream(pcfg.seed, "phi2-neg", (epoch * 100_000 + bi) as u64);
            let mut t: Tape<f32> = Tape::new();
            let mut pos_neg: Vec<VarId> = Vec::with_capacity(2 * batch.len());
            let mut negs: Vec<VarId> = Vec::with_capacity(batch.len());
            let mut geo_rows = Vec::with_capacity(batch.len());
            let mut cells = Vec::with_capacity(batch.len());
            let mut texts = Vec::with_capacity(batch.len());
            for &i in batch {
                texts.push(mean_token_embed(&mut t, ps, &train[i].tokens)?);
            }
            for (k, &i) in batch.iter().enumerate() {
                let p = &train[i];
                let img = t.constant(p.glyph.clone())?;
                let e_g = glyph_embed(&mut t, ps, &cfg.glyph, img)?;
                pos_neg.push(match_logit(&mut t, ps, e_g, texts[k])?);
                let j = negative_index(&mut nrng, k, batch.len());
                negs.push(match_logit(&mut t, ps, e_g, texts[j])?);
                geo_rows.push(geo_logits(&mut t, ps, e_g)?);
                cells.push(p.cell);
            }
            pos_neg.extend_from_slice(&negs);
            let logits = t.concat_vecs(&pos_neg)?;
            let mut targets = vec![1.0; batch.len()];
            targets.extend(std::iter::repeat(0.0).take(batch.len()));
            let match_loss = t.bce_with_logits(logits, &targets)?;
            let geo = t.stack_vecs(&geo_rows)?;
            let geo_loss = t.cross_entropy_rows(geo, &cells)?;
            let w = t.constant(Array::scalar(pcfg.w_geo as f32))?;
            let weighted = t.mul_scalar_var(geo_loss, w)?;
            let total = t.add(match_loss, weighted)?;
            loss_sum += t.value(total).item() as f64 * batch.len() as f64;
            seen += batch.len();
            t.backward(total)?;
            let mut grads = t.param_grads()?;
            clip_global_norm(&mut grads, pcfg.clip);
            opt.step(ps, &grads)?;
        }
        if seen == 0 {
            return Err(TaskError::Data("no usable batches".into()));
        }
        let acc = if held.len() >= 2 {
            Some(eval_phi2(ps, cfg, held, pcfg.seed)?.matching)
        } else {
            None
        };
        run.log.push(EpochLog {
            epoch,
            loss: loss_sum / seen as f64,
            acc,
            tc: None,
            spd: None,
            sed: None,
        });
    }
    run.best_epoch = pcfg.epochs.checked_sub(1);
    Ok(run)
}
