//! Training and evaluation drivers: step-count and landmark pretraining,
//! teacher-forced navigation training, rollout metrics, and the ablation
//! benchmark.

pub mod ablate;
pub mod data;
pub mod error;
pub mod metrics;
pub mod par;
pub mod phi1;
pub mod phi2;
pub mod runlog;
pub mod vln;

pub use ablate::{
    desk_model_cfg, full_arm, prepare_bench_data, run_ablation, run_arm, run_benchmark,
    standalone_arm, variant_arm, ArmKind, ArmResult, ArmSpec, BenchArm, BenchCfg, BenchData,
    BenchReport, Phi1Mode, Phi2Mode, Variant, ALL_VARIANTS,
};
pub use data::{
    build_env, first_sentence, gen_landmark_pools, gen_nav_sets, gen_trace_pools,
    prepare_nav_sample, DeskEnv, DeskSpec, LandmarkPair, NavSample,
};
pub use error::{Result, TaskError};
pub use metrics::{compute_metrics, levenshtein, rollout, MetricsReport, RouteRecord};
pub use par::{par_map, thread_count};
pub use phi1::{eval_phi1, eval_phi1_loss, rotated_phase, train_phi1, Phi1Cfg};
pub use phi2::{eval_phi2, train_phi2, Phi2Cfg, Phi2Eval};
pub use runlog::{EpochLog, TrainRun};
pub use vln::{eval_nav, eval_nav_with, nav_sample_loss, train_vln, PretrainState, VlnCfg};

use numerics::ParamSet;

/// Copies every parameter in one named section between sets. Shapes
/// must agree and the section must exist on both sides.
pub fn copy_section(src: &ParamSet, dst: &mut ParamSet, prefix: &str) -> Result<usize> {
    let names = pmvln::section_names(src, prefix);
    if names.is_empty() {
        return Err(TaskError::Data(format!("source has no '{}' parameters", prefix)));
    }
    for name in &names {
        let arr = src.get(name)?;
        if !dst.contains(name) {
            return Err(TaskError::Data(format!("destination lacks {}", name)));
        }
        if dst.get(name)?.shape() != arr.shape() {
            return Err(TaskError::Data(format!(
                "shape mismatch for {}: {:?} vs {:?}",
                name,
                arr.shape(),
                dst.get(name)?.shape()
            )));
        }
        dst.insert_array(name, arr.clone());
    }
    Ok(names.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use numerics::rng::stream;
    use numerics::Init;

    fn set_with(names: &[(&str, Vec<usize>)], seed: u64) -> ParamSet {
        let mut ps = ParamSet::new();
        let mut rng = stream(seed, "copy-test", 0);
        for (n, shape) in names {
            ps.register(n, shape.clone(), Init::Normal { std: 1.0 }, &mut rng).unwrap();
        }
        ps
    }

    #[test]
    fn section_copy_moves_only_the_named_prefix() {
        let src = set_with(&[("pmtp.a", vec![2, 3]), ("pmf.b", vec![4])], 1);
        let mut dst = set_with(&[("pmtp.a", vec![2, 3]), ("pmf.b", vec![4])], 2);
        let before = dst.get("pmf.b").unwrap().data().to_vec();
        let n = copy_section(&src, &mut dst, "pmtp.").unwrap();
        assert_eq!(n, 1);
        assert_eq!(dst.get("pmtp.a").unwrap().data(), src.get("pmtp.a").unwrap().data());
        assert_eq!(dst.get("pmf.b").unwrap().data(), &before[..]);
    }

    #[test]
    fn missing_or_mismatched_targets_are_rejected() {
        let src = set_with(&[("pmtp.a", vec![2])], 3);
        let mut empty = set_with(&[("pmf.b", vec![2])], 4);
        assert!(copy_section(&src, &mut empty, "pmtp.").is_err());
        assert!(copy_section(&src, &mut empty, "head.").is_err());
        let mut wrong = set_with(&[("pmtp.a", vec![3])], 5);
        assert!(copy_section(&src, &mut wrong, "pmtp.").is_err());
    }
}
