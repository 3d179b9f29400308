//! `mitigate`: after the shared pretraining, run a grid of partial
//! supervised phases (fractions of steps × fractions of samples) each
//! followed by reward finetuning, and export per-cell reports plus a grid
//! table. Every cell also carries the no-supervision baseline at the same
//! reward budget, so the comparison the report makes is self-contained.

use anyhow::Result;
use rftlab_core::fmt::fmt_f64;
use rftlab_core::trainlab::{partial_sft_then_rft, MitigationConfig};

use crate::config::Config;
use crate::manifest::RunContext;

use super::{controlled, Outcome};

pub fn run(config: &Config, ctx: &mut RunContext) -> Result<Outcome> {
    let section = &config.mitigate;
    let controlled_section = &config.controlled;
    let base = controlled::prepare(config)?;
    ctx.write_file("pretrain_trace.csv", &base.pretrain_trace.to_csv_string())?;

    let mut grid = String::from(
        "step_fraction,sample_fraction,sft_steps_run,sft_subset_size,count_before,count_after,final_reward,baseline_final_reward\n",
    );
    for (si, &step_fraction) in section.step_fractions.iter().enumerate() {
        for (pi, &sample_fraction) in section.sample_fractions.iter().enumerate() {
            let cell_config = MitigationConfig {
                sft_step_fraction: step_fraction,
                sft_sample_fraction: sample_fraction,
                subset_seed: section.subset_seed,
                std_threshold: section.std_threshold,
                mean_cutoff: section.mean_cutoff,
                log_every: controlled_section.log_every,
                ..MitigationConfig::new(
                    controlled_section.finetune.to_optimizer(),
                    controlled_section.finetune.to_optimizer(),
                )
            };
            let (trace, report) =
                partial_sft_then_rft(&base.pretrained, &base.dataset, &base.reward, &cell_config)?;
            let trace_name = format!("trace_{si}_{pi}.csv");
            ctx.write_file(&trace_name, &trace.to_csv_string())?;
            let report_name = format!("report_{si}_{pi}.json");
            ctx.write_file(&report_name, &(report.to_json() + "\n"))?;
            grid.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt_f64(report.sft_step_fraction),
                fmt_f64(report.sft_sample_fraction),
                report.sft_steps_run,
                report.sft_subset_size,
                report.count_before,
                report.count_after,
                fmt_f64(report.final_reward),
                fmt_f64(report.baseline_final_reward),
            ));
        }
    }
    ctx.write_file("grid.csv", &grid)?;
    Ok(Outcome::Clean)
}
