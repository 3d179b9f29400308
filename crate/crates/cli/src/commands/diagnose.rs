//! `diagnose`: per-input reward statistics around the controlled run —
//! scatter exports, reward-std percentiles after pretraining, and the
//! correlation between pre-finetuning reward std and how much each input's
//! reward moves under each finetuning objective.

use anyhow::Result;
use rftlab_core::diagnostics::{correlation_report, std_percentile};
use rftlab_core::fmt::{json_array, JsonObject};
use rftlab_core::trainlab::{rft_train, sft_train, TrainOptions};

use crate::config::Config;
use crate::manifest::RunContext;

use super::{controlled, exact_input_stats, scatter_csv, Outcome};

pub fn run(config: &Config, ctx: &mut RunContext) -> Result<Outcome> {
    let section = &config.diagnose;
    let controlled_section = &config.controlled;
    let base = controlled::prepare(config)?;

    let pre_stats = exact_input_stats(&base.pretrained, &base.dataset, &base.reward)?;
    ctx.write_file("scatter_pretrain.csv", &scatter_csv(&pre_stats))?;

    let percentile_rows: Result<Vec<String>> = section
        .percentiles
        .iter()
        .map(|&q| {
            let value = std_percentile(&pre_stats, q, section.mean_cutoff)?;
            Ok(JsonObject::new().float("q", q).float("reward_std", value).render())
        })
        .collect();
    let percentiles_json = JsonObject::new()
        .float("mean_cutoff", section.mean_cutoff)
        .raw("percentiles", json_array(percentile_rows?))
        .render()
        + "\n";
    ctx.write_file("percentiles.json", &percentiles_json)?;

    let opt = controlled_section.finetune.to_optimizer();
    let options =
        TrainOptions { log_every: controlled_section.log_every, ..TrainOptions::default() };
    let (rft_policy, _) = rft_train(&base.pretrained, &base.dataset, &base.reward, &opt, &options)?;
    let (sft_policy, _) = sft_train(
        &base.pretrained,
        &base.dataset,
        &base.reward,
        None,
        &opt,
        controlled_section.log_every,
    )?;

    let rft_stats = exact_input_stats(&rft_policy, &base.dataset, &base.reward)?;
    ctx.write_file("scatter_rft.csv", &scatter_csv(&rft_stats))?;
    let sft_stats = exact_input_stats(&sft_policy, &base.dataset, &base.reward)?;
    ctx.write_file("scatter_sft.csv", &scatter_csv(&sft_stats))?;

    let rft_correlation = correlation_report(&pre_stats, &rft_stats)?;
    let sft_correlation = correlation_report(&pre_stats, &sft_stats)?;
    let correlations_json = JsonObject::new()
        .float("rft_correlation", rft_correlation)
        .float("sft_correlation", sft_correlation)
        .bool("rft_greater", rft_correlation > sft_correlation)
        .render()
        + "\n";
    ctx.write_file("correlations.json", &correlations_json)?;

    Ok(Outcome::Clean)
}
