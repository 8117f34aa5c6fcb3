//! Ablation variants of the navigation pipeline and the benchmark
//! harness that trains arms under shared data and budget.

use citysim::{NavGraph, TraceSpec, Vocab};
use flpm::{register_model, FlpmCfg, FusionMode, HeadMode};
use numerics::ParamSet;

use crate::copy_section;
use crate::data::{
    build_env, gen_landmark_pools, gen_nav_sets, gen_trace_pools, DeskEnv, DeskSpec, LandmarkPair,
    NavSample,
};
use crate::error::{Result, TaskError};
use crate::metrics::MetricsReport;
use crate::phi1::{train_phi1, Phi1Cfg};
use crate::phi2::{train_phi2, Phi2Cfg};
use crate::runlog::TrainRun;
use crate::vln::{eval_nav, train_vln, PretrainState, VlnCfg};
use citysim::trace::PathTrace;

/// The eleven single-change variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Fixed step count instead of the trace estimate.
    A,
    /// Visual boost filtering off.
    B,
    /// No carried span between steps.
    C,
    /// Concatenation fusion instead of cross-modal attention.
    D,
    /// Plain linear classifier instead of maxout.
    E,
    /// Step-count pretraining on traces from a different city.
    F,
    /// Step-count pretraining on rescaled traces.
    G,
    /// No step-count pretraining.
    H,
    /// Landmark pretraining on a small mismatched pool, no geolocation.
    I,
    /// Landmark pretraining on a full-size mismatched pool, no geolocation.
    J,
    /// No landmark pretraining.
    K,
}

pub const ALL_VARIANTS: [Variant; 11] = [
    Variant::A,
    Variant::B,
    Variant::C,
    Variant::D,
    Variant::E,
    Variant::F,
    Variant::G,
    Variant::H,
    Variant::I,
    Variant::J,
    Variant::K,
];

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            "c" => Ok(Variant::C),
            "d" => Ok(Variant::D),
            "e" => Ok(Variant::E),
            "f" => Ok(Variant::F),
            "g" => Ok(Variant::G),
            "h" => Ok(Variant::H),
            "i" => Ok(Variant::I),
            "j" => Ok(Variant::J),
            "k" => Ok(Variant::K),
            other => Err(TaskError::Config(format!("unknown variant '{}'", other))),
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Variant::A => "a",
            Variant::B => "b",
            Variant::C => "c",
            Variant::D => "d",
            Variant::E => "e",
            Variant::F => "f",
            Variant::G => "g",
            Variant::H => "h",
            Variant::I => "i",
            Variant::J => "j",
            Variant::K => "k",
        }
    }
}

/// Where the φ1 trace pool comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi1Mode {
    Standard,
    AlternateCity,
    Rescaled,
    Skip,
}

/// Where the φ2 landmark pool comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi2Mode {
    Standard,
    MismatchedSmall,
    MismatchedFull,
    Skip,
}

/// One fully resolved training arm.
#[derive(Debug, Clone)]
pub struct ArmSpec {
    pub label: String,
    pub model: FlpmCfg,
    pub vln: VlnCfg,
    pub phi1: Phi1Mode,
    pub phi2: Phi2Mode,
}

/// Shared sizing and defaults for every arm of a benchmark.
#[derive(Debug, Clone)]
pub struct BenchCfg {
    pub desk: DeskSpec,
    pub model: FlpmCfg,
    pub vln: VlnCfg,
    pub phi1: Phi1Cfg,
    pub phi2: Phi2Cfg,
    /// Step count used by variant (a).
    pub fixed_cnt: usize,
    /// World and dataset seed, fixed across arms and training seeds.
    pub seed: u64,
}

/// Model sized for the desk city: 64-wide encoder over the shared
/// vocabulary, 16-class trace cards, 16-cell landmark grid.
pub fn desk_model_cfg() -> FlpmCfg {
    let mut cfg = FlpmCfg::default();
    cfg.embed.vocab = Vocab::shared().len();
    cfg
}

impl BenchCfg {
    /// Desk benchmark: full budget for the CLI default, a shorter
    /// schedule here so three-seed comparisons stay inside minutes.
    pub fn desk() -> Self {
        BenchCfg {
            desk: DeskSpec::default(),
            model: desk_model_cfg(),
            vln: VlnCfg { epochs: 4, batch: 10, ..VlnCfg::default() },
            phi1: Phi1Cfg::default(),
            phi2: Phi2Cfg::default(),
            fixed_cnt: 9,
            seed: 0,
        }
    }
}

/// The unmodified pipeline.
pub fn full_arm(bench: &BenchCfg, train_seed: u64) -> ArmSpec {
    ArmSpec {
        label: "full".into(),
        model: bench.model.clone(),
        vln: VlnCfg { seed: train_seed, use_pm: true, ..bench.vln.clone() },
        phi1: Phi1Mode::Standard,
        phi2: Phi2Mode::Standard,
    }
}

/// Same encoder, head, data, and budget with the priority branch zeroed.
pub fn standalone_arm(bench: &BenchCfg, train_seed: u64) -> ArmSpec {
    ArmSpec {
        label: "standalone".into(),
        model: bench.model.clone(),
        vln: VlnCfg { seed: train_seed, use_pm: false, ..bench.vln.clone() },
        phi1: Phi1Mode::Skip,
        phi2: Phi2Mode::Skip,
    }
}

/// Applies exactly one modification to the full pipeline.
pub fn variant_arm(v: Variant, bench: &BenchCfg, train_seed: u64) -> ArmSpec {
    let mut arm = full_arm(bench, train_seed);
    arm.label = format!("variant-{}", v.letter());
    match v {
        Variant::A => arm.model.pm.fixed_cnt = Some(bench.fixed_cnt),
        Variant::B => arm.model.pm.vbf_enabled = false,
        Variant::C => arm.model.pm.carry_spans = false,
        Variant::D => arm.model.fusion = FusionMode::Concat,
        Variant::E => arm.model.head = HeadMode::Plain,
        Variant::F => arm.phi1 = Phi1Mode::AlternateCity,
        Variant::G => arm.phi1 = Phi1Mode::Rescaled,
        Variant::H => {
            arm.phi1 = Phi1Mode::Skip;
            arm.vln.skip_pmtp_pretrain = true;
        }
        Variant::I => arm.phi2 = Phi2Mode::MismatchedSmall,
        Variant::J => arm.phi2 = Phi2Mode::MismatchedFull,
        Variant::K => {
            arm.phi2 = Phi2Mode::Skip;
            arm.vln.skip_pmf_pretrain = true;
        }
    }
    arm
}

/// Everything generated once and shared by every arm and seed.
#[derive(Debug, Clone)]
pub struct BenchData {
    pub env: DeskEnv,
    pub train: Vec<NavSample>,
    pub dev: Vec<NavSample>,
    pub test: Vec<NavSample>,
    pub phi1_train: Vec<PathTrace>,
    pub phi1_held: Vec<PathTrace>,
    pub phi2_train: Vec<LandmarkPair>,
    pub phi2_held: Vec<LandmarkPair>,
}

pub fn prepare_bench_data(bench: &BenchCfg) -> Result<BenchData> {
    let env = build_env(&bench.desk, bench.seed)?;
    let (train, dev, test) = gen_nav_sets(&env, &bench.desk, bench.seed)?;
    let (phi1_train, phi1_held) =
        gen_trace_pools(&env.graph, &bench.desk.trace, bench.desk.traces_per_class, bench.seed)?;
    let (phi2_train, phi2_held) = gen_landmark_pools(&bench.desk, bench.seed)?;
    Ok(BenchData { env, train, dev, test, phi1_train, phi1_held, phi2_train, phi2_held })
}

/// Rotates summaries across the pool so each glyph pairs with another
/// record's text: a pool with the texture of the real one but without
/// the matching signal.
fn rotate_tokens(pairs: &mut [LandmarkPair]) {
    let n = pairs.len();
    if n < 2 {
        return;
    }
    let k = match 7 % n {
        0 => 1,
        k => k,
    };
    let shifted: Vec<Vec<usize>> = (0..n).map(|i| pairs[(i + k) % n].tokens.clone()).collect();
    for (p, t) in pairs.iter_mut().zip(shifted) {
        p.tokens = t;
    }
}

/// Trains the φ1 section for an arm on its own parameter set and
/// returns it with the run record. `None` when the arm skips φ1.
fn pretrain_phi1_arm(
    arm: &ArmSpec,
    bench: &BenchCfg,
    data: &BenchData,
    seed: u64,
) -> Result<Option<(ParamSet, TrainRun)>> {
    let (pool_train, pool_held);
    match arm.phi1 {
        Phi1Mode::Skip => return Ok(None),
        Phi1Mode::Standard => {
            return train_phi1_on(arm, bench, seed, &data.phi1_train, &data.phi1_held).map(Some)
        }
        Phi1Mode::AlternateCity => {
            let alt_seed = bench.seed.wrapping_add(0x0a17);
            let graph = NavGraph::build(
                bench.desk.grid_rows,
                bench.desk.grid_cols,
                bench.desk.spacing,
                bench.desk.perturb,
                alt_seed,
            )?;
            let (t, h) = gen_trace_pools(
                &graph,
                &bench.desk.trace,
                bench.desk.traces_per_class,
                bench.seed,
            )?;
            pool_train = t;
            pool_held = h;
        }
        Phi1Mode::Rescaled => {
            let spec = TraceSpec { margin: bench.desk.trace.margin + 16.0, ..bench.desk.trace };
            let (t, h) =
                gen_trace_pools(&data.env.graph, &spec, bench.desk.traces_per_class, bench.seed)?;
            pool_train = t;
            pool_held = h;
        }
    }
    train_phi1_on(arm, bench, seed, &pool_train, &pool_held).map(Some)
}

fn train_phi1_on(
    arm: &ArmSpec,
    bench: &BenchCfg,
    seed: u64,
    train: &[PathTrace],
    held: &[PathTrace],
) -> Result<(ParamSet, TrainRun)> {
    let mut ps = ParamSet::new();
    pmvln::register_pm(&mut ps, &arm.model.pm, Vocab::shared().len(), seed)?;
    let cfg = Phi1Cfg { seed, ..bench.phi1.clone() };
    let run = train_phi1(&mut ps, &arm.model.pm.trace, &cfg, train, held)?;
    Ok((ps, run))
}

/// Trains the φ2 sections for an arm on its own parameter set.
fn pretrain_phi2_arm(
    arm: &ArmSpec,
    bench: &BenchCfg,
    data: &BenchData,
    seed: u64,
) -> Result<Option<(ParamSet, TrainRun)>> {
    let (pool_train, pool_held, cfg);
    match arm.phi2 {
        Phi2Mode::Skip => return Ok(None),
        Phi2Mode::Standard => {
            pool_train = data.phi2_train.clone();
            pool_held = data.phi2_held.clone();
            cfg = Phi2Cfg { seed, ..bench.phi2.clone() };
        }
        Phi2Mode::MismatchedSmall | Phi2Mode::MismatchedFull => {
            let count = if arm.phi2 == Phi2Mode::MismatchedSmall {
                bench.desk.lm_count / 2
            } else {
                bench.desk.lm_count
            };
            let spec = DeskSpec {
                lm_count: count,
                lm_per_cell: (1, count),
                ..bench.desk.clone()
            };
            let (mut t, mut h) = gen_landmark_pools(&spec, bench.seed.wrapping_add(0x9e2b))?;
            rotate_tokens(&mut t);
            rotate_tokens(&mut h);
            pool_train = t;
            pool_held = h;
            cfg = Phi2Cfg { seed, w_geo: 0.0, ..bench.phi2.clone() };
        }
    }
    let mut ps = ParamSet::new();
    pmvln::register_pm(&mut ps, &arm.model.pm, Vocab::shared().len(), seed)?;
    let run = train_phi2(&mut ps, &arm.model.pm, &cfg, &pool_train, &pool_held)?;
    Ok(Some((ps, run)))
}

/// Outcome of one arm at one training seed.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub label: String,
    pub seed: u64,
    pub report: MetricsReport,
    pub run: TrainRun,
    pub phi1: Option<TrainRun>,
    pub phi2: Option<TrainRun>,
}

/// Runs pretraining, navigation training, and the dev evaluation for
/// one arm. Pretrained section sources can be supplied to reuse a
/// standard pretraining done once per seed.
pub fn run_arm(
    bench: &BenchCfg,
    data: &BenchData,
    arm: &ArmSpec,
    seed: u64,
    std_phi1: Option<&(ParamSet, TrainRun)>,
    std_phi2: Option<&(ParamSet, TrainRun)>,
) -> Result<ArmResult> {
    let phi1 = match (arm.phi1, std_phi1) {
        (Phi1Mode::Skip, _) => None,
        (Phi1Mode::Standard, Some(done)) => Some(done.clone()),
        _ => pretrain_phi1_arm(arm, bench, data, seed)?,
    };
    let phi2 = match (arm.phi2, std_phi2) {
        (Phi2Mode::Skip, _) => None,
        (Phi2Mode::Standard, Some(done)) => Some(done.clone()),
        _ => pretrain_phi2_arm(arm, bench, data, seed)?,
    };
    let mut ps = ParamSet::new();
    register_model(&mut ps, &arm.model, Vocab::shared().len(), seed)?;
    if let Some((src, _)) = &phi1 {
        copy_section(src, &mut ps, pmvln::SECTION_PMTP)?;
    }
    if let Some((src, _)) = &phi2 {
        copy_section(src, &mut ps, pmvln::SECTION_PMF)?;
    }
    let pre = PretrainState { pmtp_loaded: phi1.is_some(), pmf_loaded: phi2.is_some() };
    let vcfg = VlnCfg { seed, ..arm.vln.clone() };
    let run = train_vln(&mut ps, &arm.model, &vcfg, &data.env, &data.train, &data.dev, &pre)?;
    let report = eval_nav(&ps, &arm.model, &vcfg, &data.env, &data.dev)?;
    Ok(ArmResult {
        label: arm.label.clone(),
        seed,
        report,
        run,
        phi1: phi1.map(|(_, r)| r),
        phi2: phi2.map(|(_, r)| r),
    })
}

/// Runs one variant end to end at the benchmark's base seed and returns
/// the dev metrics, per the single-variant entry point.
pub fn run_ablation(variant: Variant, bench: &BenchCfg) -> Result<MetricsReport> {
    let data = prepare_bench_data(bench)?;
    let arm = variant_arm(variant, bench, bench.seed);
    Ok(run_arm(bench, &data, &arm, bench.seed, None, None)?.report)
}

/// Which pipelines a benchmark compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmKind {
    Full,
    Standalone,
    Variant(Variant),
}

impl ArmKind {
    fn spec(self, bench: &BenchCfg, seed: u64) -> ArmSpec {
        match self {
            ArmKind::Full => full_arm(bench, seed),
            ArmKind::Standalone => standalone_arm(bench, seed),
            ArmKind::Variant(v) => variant_arm(v, bench, seed),
        }
    }
}

/// One arm's scores across training seeds.
#[derive(Debug, Clone)]
pub struct BenchArm {
    pub label: String,
    pub per_seed: Vec<ArmResult>,
    pub median_tc: f64,
    pub median_spd: f64,
    pub median_sed: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub arms: Vec<BenchArm>,
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl BenchReport {
    pub fn arm(&self, label: &str) -> Option<&BenchArm> {
        self.arms.iter().find(|a| a.label == label)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("arm, median TC, median SPD, median SED, seeds\n");
        for a in &self.arms {
            s.push_str(&format!(
                "{} TC {:.4} SPD {:.4} SED {:.4} over {} seeds\n",
                a.label,
                a.median_tc,
                a.median_spd,
                a.median_sed,
                a.per_seed.len()
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("arm,seed,tc,spd,sed,best_epoch\n");
        for a in &self.arms {
            for r in &a.per_seed {
                s.push_str(&format!(
                    "{},{},{:.4},{:.4},{:.4},{}\n",
                    r.label,
                    r.seed,
                    r.report.tc,
                    r.report.spd,
                    r.report.sed,
                    r.run.best_epoch.map(|e| e.to_string()).unwrap_or_default()
                ));
            }
            s.push_str(&format!(
                "{},median,{:.4},{:.4},{:.4},\n",
                a.label, a.median_tc, a.median_spd, a.median_sed
            ));
        }
        s
    }
}

/// Trains every arm at every seed over shared data. Standard φ1/φ2
/// pretraining runs once per seed and is reused by every arm that wants
/// the standard pools.
pub fn run_benchmark(
    bench: &BenchCfg,
    arms: &[ArmKind],
    seeds: &[u64],
) -> Result<BenchReport> {
    if arms.is_empty() || seeds.is_empty() {
        return Err(TaskError::Config("benchmark needs arms and seeds".into()));
    }
    let data = prepare_bench_data(bench)?;
    let mut out: Vec<BenchArm> = arms
        .iter()
        .map(|k| BenchArm {
            label: k.spec(bench, 0).label,
            per_seed: Vec::new(),
            median_tc: 0.0,
            median_spd: 0.0,
            median_sed: 0.0,
        })
        .collect();
    for &seed in seeds {
        let needs_std_phi1 = arms
            .iter()
            .any(|k| k.spec(bench, seed).phi1 == Phi1Mode::Standard);
        let needs_std_phi2 = arms
            .iter()
            .any(|k| k.spec(bench, seed).phi2 == Phi2Mode::Standard);
        let std_phi1 = if needs_std_phi1 {
            let arm = full_arm(bench, seed);
            pretrain_phi1_arm(&arm, bench, &data, seed)?
        } else {
            None
        };
        let std_phi2 = if needs_std_phi2 {
            let arm = full_arm(bench, seed);
            pretrain_phi2_arm(&arm, bench, &data, seed)?
        } else {
            None
        };
        for (slot, kind) in out.iter_mut().zip(arms) {
            let arm = kind.spec(bench, seed);
            let res = run_arm(bench, &data, &arm, seed, std_phi1.as_ref(), std_phi2.as_ref())?;
            slot.per_seed.push(res);
        }
    }
    for a in &mut out {
        let mut tc: Vec<f64> = a.per_seed.iter().map(|r| r.report.tc).collect();
        let mut spd: Vec<f64> = a.per_seed.iter().map(|r| r.report.spd).collect();
        let mut sed: Vec<f64> = a.per_seed.iter().map(|r| r.report.sed).collect();
        a.median_tc = median(&mut tc);
        a.median_spd = median(&mut spd);
        a.median_sed = median(&mut sed);
    }
    Ok(BenchReport { arms: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use citysim::PerspectiveSpec;
    use flpm::{EmbedCfg, EncoderConfig, PerspCfg};
    use pmvln::{GlyphCfg, LocaliseCfg, PmCfg, TraceNetCfg};

    fn tiny_bench() -> BenchCfg {
        let model = FlpmCfg {
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
        };
        BenchCfg {
            desk: DeskSpec {
                route_counts: (6, 3, 0),
                route_len: (4, 6),
                persp: PerspectiveSpec { h: 16, w: 16, ..PerspectiveSpec::default() },
                trace: TraceSpec { h: 16, w: 16, m_classes: 6, ..TraceSpec::default() },
                traces_per_class: 5,
                lm_cells: 4,
                lm_count: 24,
                lm_per_cell: (1, 24),
                glyph_size: 16,
                ..DeskSpec::default()
            },
            model,
            vln: VlnCfg { epochs: 1, batch: 3, ..VlnCfg::default() },
            phi1: Phi1Cfg { epochs: 2, batch: 10, ..Phi1Cfg::default() },
            phi2: Phi2Cfg { epochs: 2, batch: 8, ..Phi2Cfg::default() },
            fixed_cnt: 3,
            seed: 31,
        }
    }

    #[test]
    fn the_variant_list_is_exactly_eleven() {
        assert_eq!(ALL_VARIANTS.len(), 11);
        for v in ALL_VARIANTS {
            assert_eq!(Variant::parse(v.letter()).unwrap(), v);
        }
        assert!(Variant::parse("l").is_err());
        assert!(Variant::parse("").is_err());
    }

    #[test]
    fn each_variant_changes_exactly_its_own_knob() {
        let bench = tiny_bench();
        let base = full_arm(&bench, 1);
        let a = variant_arm(Variant::A, &bench, 1);
        assert_eq!(a.model.pm.fixed_cnt, Some(3));
        assert!(base.model.pm.fixed_cnt.is_none());
        let b = variant_arm(Variant::B, &bench, 1);
        assert!(!b.model.pm.vbf_enabled && base.model.pm.vbf_enabled);
        let c = variant_arm(Variant::C, &bench, 1);
        assert!(!c.model.pm.carry_spans);
        let d = variant_arm(Variant::D, &bench, 1);
        assert_eq!(d.model.fusion, FusionMode::Concat);
        let e = variant_arm(Variant::E, &bench, 1);
        assert_eq!(e.model.head, HeadMode::Plain);
        for (v, mode) in [(Variant::F, Phi1Mode::AlternateCity), (Variant::G, Phi1Mode::Rescaled)] {
            assert_eq!(variant_arm(v, &bench, 1).phi1, mode);
        }
        let h = variant_arm(Variant::H, &bench, 1);
        assert_eq!(h.phi1, Phi1Mode::Skip);
        assert!(h.vln.skip_pmtp_pretrain);
        assert_eq!(variant_arm(Variant::I, &bench, 1).phi2, Phi2Mode::MismatchedSmall);
        assert_eq!(variant_arm(Variant::J, &bench, 1).phi2, Phi2Mode::MismatchedFull);
        let k = variant_arm(Variant::K, &bench, 1);
        assert_eq!(k.phi2, Phi2Mode::Skip);
        assert!(k.vln.skip_pmf_pretrain);
    }

    #[test]
    fn a_tiny_benchmark_is_reproducible_byte_for_byte() {
        let bench = tiny_bench();
        let arms = [ArmKind::Full, ArmKind::Standalone];
        let one = run_benchmark(&bench, &arms, &[5]).unwrap();
        let two = run_benchmark(&bench, &arms, &[5]).unwrap();
        assert_eq!(one.to_text(), two.to_text());
        assert_eq!(one.to_csv(), two.to_csv());
        assert_eq!(one.arms[0].label, "full");
        assert_eq!(one.arms[1].label, "standalone");
        assert!(one.arm("full").unwrap().per_seed[0].phi1.is_some());
        assert!(one.arm("standalone").unwrap().per_seed[0].phi1.is_none());
    }

    #[test]
    fn a_variant_pipeline_runs_end_to_end() {
        let bench = tiny_bench();
        let report = run_ablation(Variant::H, &bench).unwrap();
        assert_eq!(report.routes.len(), 3);
        assert!(report.tc >= 0.0 && report.tc <= 100.0);
    }
}
