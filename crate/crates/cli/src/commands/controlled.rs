//! `controlled`: build the synthetic dataset, pretrain on per-sample label
//! sets, then finetune by reward and/or by supervised targets, exporting
//! traces and per-input scatter files.

use anyhow::Result;
use rftlab_core::fmt::JsonObject;
use rftlab_core::policy::SoftmaxPolicy;
use rftlab_core::reward::RewardSpec;
use rftlab_core::trainlab::{
    build_controlled_dataset, finetune_reward, mean_reward, pretrain, rft_train, sft_train,
    ControlledDataset, Group, TrainOptions, TrainingTrace,
};

use crate::config::Config;
use crate::manifest::RunContext;

use super::{exact_input_stats, scatter_csv, Outcome};

/// Everything the finetuning stages share; `mitigate` and `diagnose` reuse
/// this to stay consistent with `controlled`.
pub struct BaseRun {
    pub dataset: ControlledDataset,
    pub reward: RewardSpec,
    pub pretrained: SoftmaxPolicy,
    pub pretrain_trace: TrainingTrace,
}

/// Dataset + pretraining under the `[controlled]` section.
pub fn prepare(config: &Config) -> Result<BaseRun> {
    let section = &config.controlled;
    let spec = section.to_spec(config.seed);
    let dataset = build_controlled_dataset(&spec)?;
    let reward = finetune_reward(&dataset, section.incorrect_reward_flipped)?;
    let (pretrained, pretrain_trace) =
        pretrain(&spec, &dataset, &section.pretrain.to_optimizer())?;
    Ok(BaseRun { dataset, reward, pretrained, pretrain_trace })
}

pub fn run(config: &Config, ctx: &mut RunContext) -> Result<Outcome> {
    let section = &config.controlled;
    let base = prepare(config)?;

    if section.export_dataset {
        let path = ctx.path("dataset.csv");
        rftlab_core::trainlab::save_dataset_csv(&base.dataset, &path)?;
        ctx.record("dataset.csv");
    }
    ctx.write_file("pretrain_trace.csv", &base.pretrain_trace.to_csv_string())?;
    let pre_stats = exact_input_stats(&base.pretrained, &base.dataset, &base.reward)?;
    ctx.write_file("scatter_pretrain.csv", &scatter_csv(&pre_stats))?;

    let opt = section.finetune.to_optimizer();
    let options = TrainOptions { log_every: section.log_every, ..TrainOptions::default() };
    let mut summary = JsonObject::new()
        .string("objective", match section.objective {
            crate::config::Objective::Rft => "rft",
            crate::config::Objective::Sft => "sft",
            crate::config::Objective::Both => "both",
        })
        .string("finetune_algo", &section.finetune.algo.to_string());

    if section.objective.wants_rft() {
        let (policy, trace) = rft_train(&base.pretrained, &base.dataset, &base.reward, &opt, &options)?;
        ctx.write_file("rft_trace.csv", &trace.to_csv_string())?;
        let stats = exact_input_stats(&policy, &base.dataset, &base.reward)?;
        ctx.write_file("scatter_rft.csv", &scatter_csv(&stats))?;
        summary = summary
            .float("rft_final_reward", mean_reward(&policy, &base.dataset, &base.reward)?)
            .float(
                "rft_final_reward_small_std",
                trace.last_row(Group::SmallStd).map_or(f64::NAN, |r| r.reward_mean),
            )
            .float(
                "rft_final_reward_large_std",
                trace.last_row(Group::LargeStd).map_or(f64::NAN, |r| r.reward_mean),
            );
    }
    if section.objective.wants_sft() {
        let (policy, trace) =
            sft_train(&base.pretrained, &base.dataset, &base.reward, None, &opt, section.log_every)?;
        ctx.write_file("sft_trace.csv", &trace.to_csv_string())?;
        let stats = exact_input_stats(&policy, &base.dataset, &base.reward)?;
        ctx.write_file("scatter_sft.csv", &scatter_csv(&stats))?;
        summary = summary
            .float("sft_final_reward", mean_reward(&policy, &base.dataset, &base.reward)?)
            .float(
                "sft_final_accuracy_small_std",
                trace.last_row(Group::SmallStd).map_or(f64::NAN, |r| r.accuracy),
            )
            .float(
                "sft_final_accuracy_large_std",
                trace.last_row(Group::LargeStd).map_or(f64::NAN, |r| r.accuracy),
            );
    }

    ctx.write_file("summary.json", &(summary.render() + "\n"))?;
    Ok(Outcome::Clean)
}
