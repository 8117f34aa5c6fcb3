//! Teacher-forced navigation training with greedy rollout evaluation.
//! The priority-map branch is optional; without it the same encoder and
//! head train as the standalone baseline on identical inputs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use citysim::route::ACTION_COUNT;
use citysim::Action;
use flpm::{persp_feature_map, step_logits, FlpmCfg};
use numerics::optim::{clip_global_norm, AdamW};
use numerics::rng::stream;
use numerics::{Array, ParamSet, Tape, VarId};
use pmvln::{build_trajectory_plan, estimate_cnt, pm_step, TrajectoryPlan};

use crate::data::{DeskEnv, NavSample};
use crate::error::{Result, TaskError};
use crate::metrics::{compute_metrics, rollout, MetricsReport};
use crate::par::{par_map, thread_count};
use crate::runlog::{EpochLog, TrainRun};

#[derive(Debug, Clone)]
pub struct VlnCfg {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub clip: f32,
    pub budget_factor: f64,
    pub seed: u64,
    /// Off runs the standalone baseline: the priority branch is zeroed
    /// and no plan is built.
    pub use_pm: bool,
    /// Explicit consent to train with an unpretrained section.
    pub skip_pmtp_pretrain: bool,
    pub skip_pmf_pretrain: bool,
}

impl Default for VlnCfg {
    fn default() -> Self {
        VlnCfg {
            epochs: 15,
            batch: 30,
            lr: 2.5e-3,
            weight_decay: 0.01,
            clip: 5.0,
            budget_factor: 2.0,
            seed: 0,
            use_pm: true,
            skip_pmtp_pretrain: false,
            skip_pmf_pretrain: false,
        }
    }
}

/// Which sections arrived from pretraining checkpoints.
#[derive(Debug, Clone, Copy, Default)]
pub struct PretrainState {
    pub pmtp_loaded: bool,
    pub pmf_loaded: bool,
}

/// Step counts are estimated once per route, before any update touches
/// the classifier, so every epoch plans against the pretrained estimate.
fn cnt_cache(ps: &ParamSet, cfg: &FlpmCfg, samples: &[&NavSample]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| Ok(estimate_cnt(ps, &cfg.pm, &s.trace.image)?))
        .collect()
}

/// Teacher-forced mean action cross-entropy for one route, built on the
/// caller's tape.
fn route_loss(
    t: &mut Tape<f32>,
    ps: &ParamSet,
    cfg: &FlpmCfg,
    sample: &NavSample,
    plan: Option<&TrajectoryPlan>,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<VarId> {
    let mut feats = Vec::with_capacity(sample.rasters.len());
    for r in &sample.rasters {
        let c = t.constant(r.clone())?;
        feats.push(persp_feature_map(t, ps, &cfg.persp, c)?);
    }
    let mut prev = None;
    let mut rows = Vec::with_capacity(sample.actions.len());
    for (step, &gold) in sample.actions.iter().enumerate() {
        if gold >= ACTION_COUNT {
            return Err(TaskError::Data(format!("action index {} out of range", gold)));
        }
        let pm_out = match plan {
            Some(p) => {
                let out = pm_step(t, ps, &cfg.pm, p, step, prev, &sample.tokens, feats[step])?;
                prev = Some(out.span);
                Some(out)
            }
            None => None,
        };
        let history = &feats[..=step];
        rows.push(step_logits(t, ps, cfg, &sample.tokens, history, pm_out.as_ref(), train, rng)?);
    }
    let stacked = t.stack_vecs(&rows)?;
    Ok(t.cross_entropy_rows(stacked, &sample.actions)?)
}

/// Teacher-forced loss of one route on a fresh tape, no updates.
pub fn nav_sample_loss(
    ps: &ParamSet,
    cfg: &FlpmCfg,
    sample: &NavSample,
    cnt: Option<usize>,
    seed: u64,
) -> Result<f64> {
    let plan = match cnt {
        Some(c) => Some(build_trajectory_plan(sample.tokens.len(), c)?),
        None => None,
    };
    let mut t: Tape<f32> = Tape::new();
    let mut rng = stream(seed, "nav-loss", 0);
    let loss = route_loss(&mut t, ps, cfg, sample, plan.as_ref(), false, &mut rng)?;
    Ok(t.value(loss).item() as f64)
}

fn argmax_action(v: &[f32]) -> Action {
    let mut best = 0usize;
    for i in 1..v.len().min(ACTION_COUNT) {
        if v[i] > v[best] {
            best = i;
        }
    }
    Action::from_index(best).unwrap_or(Action::Stop)
}

/// Greedy rollout of one route under the current parameters.
fn navigate(
    ps: &ParamSet,
    cfg: &FlpmCfg,
    env: &DeskEnv,
    sample: &NavSample,
    cnt: Option<usize>,
    budget_factor: f64,
) -> Result<Vec<usize>> {
    let plan = match cnt {
        Some(c) => Some(build_trajectory_plan(sample.tokens.len(), c)?),
        None => None,
    };
    let mut t: Tape<f32> = Tape::new();
    let mut rng = stream(0, "nav-eval", 0);
    let mut feats: Vec<VarId> = Vec::new();
    let mut prev = None;
    rollout(&env.graph, &sample.route, budget_factor, &mut |step, node, heading| {
        let raster =
            citysim::render::render_perspective(&env.graph, node, heading, &env.landmarks, &env.persp);
        let c = t.constant(raster)?;
        feats.push(persp_feature_map(&mut t, ps, &cfg.persp, c)?);
        let pm_out = match &plan {
            Some(p) => {
                let out = pm_step(&mut t, ps, &cfg.pm, p, step, prev, &sample.tokens, feats[feats.len() - 1])?;
                prev = Some(out.span);
                Some(out)
            }
            None => None,
        };
        let logits =
            step_logits(&mut t, ps, cfg, &sample.tokens, &feats, pm_out.as_ref(), false, &mut rng)?;
        Ok(argmax_action(t.value(logits).data()))
    })
}

/// Rolls out every sample and scores the predicted paths. Rollouts fan
/// out over `PMNAV_THREADS` workers; results are identical at any width.
pub fn eval_nav(
    ps: &ParamSet,
    cfg: &FlpmCfg,
    vcfg: &VlnCfg,
    env: &DeskEnv,
    samples: &[NavSample],
) -> Result<MetricsReport> {
    eval_nav_with(ps, cfg, vcfg, env, samples, thread_count())
}

pub fn eval_nav_with(
    ps: &ParamSet,
    cfg: &FlpmCfg,
    vcfg: &VlnCfg,
    env: &DeskEnv,
    samples: &[NavSample],
    threads: usize,
) -> Result<MetricsReport> {
    let refs: Vec<&NavSample> = samples.iter().collect();
    let cnts: Option<Vec<usize>> =
        if vcfg.use_pm { Some(cnt_cache(ps, cfg, &refs)?) } else { None };
    let indexed: Vec<usize> = (0..samples.len()).collect();
    let paths = par_map(&indexed, threads, |&i| {
        let cnt = cnts.as_ref().map(|c| c[i]);
        navigate(ps, cfg, env, &samples[i], cnt, vcfg.budget_factor)
    });
    let mut pairs = Vec::with_capacity(samples.len());
    for (i, p) in paths.into_iter().enumerate() {
        pairs.push((p?, samples[i].route.nodes.clone()));
    }
    compute_metrics(&env.graph, &pairs)
}

/// Trains in place, evaluates on dev each epoch, and leaves the
/// parameters at the epoch with the lowest dev SPD.
pub fn train_vln(
    ps: &mut ParamSet,
    cfg: &FlpmCfg,
    vcfg: &VlnCfg,
    env: &DeskEnv,
    train: &[NavSample],
    dev: &[NavSample],
    pre: &PretrainState,
) -> Result<TrainRun> {
    if vcfg.batch == 0 {
        return Err(TaskError::Config("batch size must be positive".into()));
    }
    if train.is_empty() || dev.is_empty() {
        return Err(TaskError::Data("train and dev sets must be non-empty".into()));
    }
    if vcfg.use_pm {
        if !pre.pmtp_loaded && !vcfg.skip_pmtp_pretrain {
            return Err(TaskError::Config(
                "step-count section is not pretrained; set the skip flag to train it cold".into(),
            ));
        }
        if !pre.pmf_loaded && !vcfg.skip_pmf_pretrain {
            return Err(TaskError::Config(
                "landmark section is not pretrained; set the skip flag to train it cold".into(),
            ));
        }
    }
    // Caller order must not matter: fix a canonical order first, then
    // shuffle under the run seed.
    let mut refs: Vec<&NavSample> = train.iter().collect();
    refs.sort_by(|a, b| a.id.cmp(&b.id));
    let cnts: Option<Vec<usize>> =
        if vcfg.use_pm { Some(cnt_cache(ps, cfg, &refs)?) } else { None };
    let plans: Vec<Option<TrajectoryPlan>> = match &cnts {
        Some(cs) => refs
            .iter()
            .zip(cs)
            .map(|(s, &c)| build_trajectory_plan(s.tokens.len(), c).map(Some))
            .collect::<std::result::Result<_, _>>()?,
        None => vec![None; refs.len()],
    };
    let mut run = TrainRun::new("vln", vcfg.epochs, vcfg.batch, vcfg.lr as f64, vcfg.seed);
    run.selection = "lowest dev SPD".into();
    let mut opt = AdamW::new(vcfg.lr, vcfg.weight_decay);
    let mut order: Vec<usize> = (0..refs.len()).collect();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    for epoch in 0..vcfg.epochs {
        let mut rng = stream(vcfg.seed, "vln-shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(vcfg.batch) {
            let mut acc: BTreeMap<String, Array<f32>> = BTreeMap::new();
            for &i in batch {
                let mut t: Tape<f32> = Tape::new();
                let mut drop_rng =
                    stream(vcfg.seed, "vln-drop", (epoch * 1_000_000 + i) as u64);
                let loss =
                    route_loss(&mut t, ps, cfg, refs[i], plans[i].as_ref(), true, &mut drop_rng)?;
                loss_sum += t.value(loss).item() as f64;
                t.backward(loss)?;
                for (name, g) in t.param_grads()? {
                    match acc.get_mut(&name) {
                        Some(a) => {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += *y;
                            }
                        }
                        None => {
                            acc.insert(name, g);
                        }
                    }
                }
            }
            let inv = 1.0 / batch.len() as f32;
            for g in acc.values_mut() {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            clip_global_norm(&mut acc, vcfg.clip);
            opt.step(ps, &acc)?;
        }
        let report = eval_nav(ps, cfg, vcfg, env, dev)?;
        run.log.push(EpochLog {
            epoch,
            loss: loss_sum / refs.len() as f64,
            acc: None,
            tc: Some(report.tc),
            spd: Some(report.spd),
            sed: Some(report.sed),
        });
        let better = best.as_ref().map_or(true, |(b, _, _)| report.spd < *b);
        if better {
            best = Some((report.spd, epoch, ps.clone()));
        }
    }
    if let Some((_, epoch, snapshot)) = best {
        run.best_epoch = Some(epoch);
        *ps = snapshot;
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_env, gen_nav_sets, DeskSpec};
    use citysim::{PerspectiveSpec, TraceSpec, Vocab};
    use flpm::{register_model, EmbedCfg, EncoderConfig, PerspCfg};
    use pmvln::{GlyphCfg, LocaliseCfg, PmCfg, TraceNetCfg};

    fn tiny_model() -> FlpmCfg {
        FlpmCfg {
            enc: EncoderConfig { layers: 2, heads: 2, hidden: 8, dropout: 0.1 },
            embed: EmbedCfg {
                vocab: Vocab::shared().len(),
                hidden: 8,
                max_tokens: 120,
                window: 3,
            },
            persp: PerspCfg { in_hw: 16, channels: [2, 3, 4], hidden: 8 },
            pm: PmCfg {
                trace: TraceNetCfg { in_h: 16, in_w: 16, channels: [2, 3, 4], m_classes: 6 },
                glyph: GlyphCfg {
                    in_h: 16,
                    in_w: 16,
                    channels: [2, 3, 4],
                    embed: 6,
                    n_cells: 4,
                },
                localise: LocaliseCfg { embed: 6, lstm_hidden: 5, vis_channels: 4, span_cap: 8 },
                ..PmCfg::default()
            },
            ..FlpmCfg::default()
        }
    }

    fn tiny_world() -> (DeskEnv, Vec<NavSample>, Vec<NavSample>) {
        let spec = DeskSpec {
            route_counts: (6, 3, 0),
            route_len: (4, 6),
            persp: PerspectiveSpec { h: 16, w: 16, ..PerspectiveSpec::default() },
            trace: TraceSpec { h: 16, w: 16, m_classes: 6, ..TraceSpec::default() },
            ..DeskSpec::default()
        };
        let env = build_env(&spec, 31).unwrap();
        let (train, dev, _) = gen_nav_sets(&env, &spec, 31).unwrap();
        (env, train, dev)
    }

    fn fresh(cfg: &FlpmCfg, seed: u64) -> ParamSet {
        let mut ps = ParamSet::new();
        register_model(&mut ps, cfg, Vocab::shared().len(), seed).unwrap();
        ps
    }

    fn skip_all() -> VlnCfg {
        VlnCfg {
            skip_pmtp_pretrain: true,
            skip_pmf_pretrain: true,
            ..VlnCfg::default()
        }
    }

    #[test]
    fn untrained_step_loss_sits_near_the_four_way_ceiling() {
        let cfg = tiny_model();
        let (_, train, _) = tiny_world();
        let ps = fresh(&cfg, 3);
        let loss = nav_sample_loss(&ps, &cfg, &train[0], Some(3), 0).unwrap();
        let uniform = (ACTION_COUNT as f64).ln();
        assert!((loss - uniform).abs() < 0.1 * uniform, "loss {} vs ln4 {}", loss, uniform);
    }

    #[test]
    fn unpretrained_sections_need_the_explicit_skip() {
        let cfg = tiny_model();
        let (env, train, dev) = tiny_world();
        let mut ps = fresh(&cfg, 5);
        let bare = VlnCfg { epochs: 1, ..VlnCfg::default() };
        let err = train_vln(&mut ps, &cfg, &bare, &env, &train, &dev, &PretrainState::default());
        assert!(matches!(err, Err(TaskError::Config(_))));
        let half = VlnCfg { epochs: 1, skip_pmtp_pretrain: true, ..VlnCfg::default() };
        assert!(matches!(
            train_vln(&mut ps, &cfg, &half, &env, &train, &dev, &PretrainState::default()),
            Err(TaskError::Config(_))
        ));
        let loaded = PretrainState { pmtp_loaded: true, pmf_loaded: true };
        let short = VlnCfg { epochs: 1, batch: 3, ..VlnCfg::default() };
        assert!(train_vln(&mut ps, &cfg, &short, &env, &train, &dev, &loaded).is_ok());
    }

    #[test]
    fn standalone_mode_needs_no_pretraining_gate() {
        let cfg = tiny_model();
        let (env, train, dev) = tiny_world();
        let mut ps = fresh(&cfg, 7);
        let vcfg = VlnCfg { epochs: 1, batch: 3, use_pm: false, ..VlnCfg::default() };
        let run =
            train_vln(&mut ps, &cfg, &vcfg, &env, &train, &dev, &PretrainState::default()).unwrap();
        assert_eq!(run.log.len(), 1);
        assert!(run.log[0].tc.is_some() && run.log[0].spd.is_some());
        assert_eq!(run.best_epoch, Some(0));
    }

    #[test]
    fn sample_order_does_not_change_the_trained_parameters() {
        let cfg = tiny_model();
        let (env, train, dev) = tiny_world();
        let vcfg = VlnCfg { epochs: 1, batch: 3, ..skip_all() };
        let mut forward = fresh(&cfg, 11);
        let mut reversed = fresh(&cfg, 11);
        let mut flipped: Vec<NavSample> = train.to_vec();
        flipped.reverse();
        train_vln(&mut forward, &cfg, &vcfg, &env, &train, &dev, &PretrainState::default())
            .unwrap();
        train_vln(&mut reversed, &cfg, &vcfg, &env, &flipped, &dev, &PretrainState::default())
            .unwrap();
        for (name, arr) in forward.iter() {
            assert_eq!(arr.data(), reversed.get(name).unwrap().data(), "{} diverged", name);
        }
    }

    #[test]
    fn training_lowers_the_teacher_forced_loss() {
        let cfg = tiny_model();
        let (env, train, dev) = tiny_world();
        let mut ps = fresh(&cfg, 13);
        let before: f64 = train
            .iter()
            .map(|s| nav_sample_loss(&ps, &cfg, s, None, 0).unwrap())
            .sum::<f64>()
            / train.len() as f64;
        let vcfg = VlnCfg { epochs: 3, batch: 3, use_pm: false, ..VlnCfg::default() };
        let run =
            train_vln(&mut ps, &cfg, &vcfg, &env, &train, &dev, &PretrainState::default()).unwrap();
        assert!(run.log[2].loss < before, "loss {} -> {}", before, run.log[2].loss);
    }

    #[test]
    fn rollouts_are_identical_at_any_thread_width() {
        let cfg = tiny_model();
        let (env, _, dev) = tiny_world();
        let ps = fresh(&cfg, 17);
        let vcfg = skip_all();
        let one = eval_nav_with(&ps, &cfg, &vcfg, &env, &dev, 1).unwrap();
        let four = eval_nav_with(&ps, &cfg, &vcfg, &env, &dev, 4).unwrap();
        assert_eq!(one.tc, four.tc);
        assert_eq!(one.spd, four.spd);
        for (a, b) in one.routes.iter().zip(&four.routes) {
            assert_eq!(a.predicted, b.predicted);
        }
    }
}
