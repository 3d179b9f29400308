//! `gradflow`: run the crossing-time separation sweep, write the per-point
//! table and fit summary, and gate on the declared fit windows.

use anyhow::Result;
use rftlab_core::fmt::{fmt_f64, JsonObject};
use rftlab_core::gradflow::{mu0_grid, separation_sweep, LineFit, SeparationConfig, SeparationReport};

use crate::config::{Config, GradflowSection};
use crate::manifest::RunContext;

use super::Outcome;

pub fn run(config: &Config, ctx: &mut RunContext) -> Result<Outcome> {
    let section = &config.gradflow;
    if !(section.mu0_step < 0.0 && section.mu0_end < section.mu0_start) {
        anyhow::bail!(
            "gradflow grid must descend: start {}, end {}, step {}",
            section.mu0_start,
            section.mu0_end,
            section.mu0_step
        );
    }
    let sweep_config = SeparationConfig {
        k: section.k,
        n: section.n,
        mu0_grid: mu0_grid(section.mu0_start, section.mu0_end, section.mu0_step),
        tail_sigma_max: section.tail_sigma_max,
    };
    let report = separation_sweep(&sweep_config)?;

    ctx.write_file("sweep.csv", &sweep_csv(&report))?;

    let ratios = report.ratios();
    let tail_ratios = &ratios[ratios.len() - report.tail_rows..];
    let ratios_increasing = tail_ratios.windows(2).all(|pair| pair[1] > pair[0]);
    let slope_ok =
        report.reward_fit.slope >= section.slope_min && report.reward_fit.slope <= section.slope_max;
    let r2_ok = report.ce_fit.r2 >= section.min_r2;

    ctx.write_file("fits.json", &fits_json(section, &report, ratios_increasing))?;

    let mut failures = Vec::new();
    if !slope_ok {
        failures.push(format!(
            "reward-time slope {} outside [{}, {}]",
            report.reward_fit.slope, section.slope_min, section.slope_max
        ));
    }
    if !r2_ok {
        failures.push(format!("cross-entropy fit r2 {} below {}", report.ce_fit.r2, section.min_r2));
    }
    if !ratios_increasing {
        failures.push("crossing-time ratio not strictly increasing on the tail".into());
    }
    if failures.is_empty() {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::GateFailed(failures.join("; ")))
    }
}

fn sweep_csv(report: &SeparationReport) -> String {
    let mut out = String::from(
        "mu0,sigma0,t_reward_closed,t_reward_numeric,t_ce_closed,t_ce_numeric\n",
    );
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(row.mu0),
            fmt_f64(row.sigma0),
            fmt_f64(row.t_reward_closed),
            fmt_f64(row.t_reward_numeric),
            fmt_f64(row.t_ce_closed),
            fmt_f64(row.t_ce_numeric),
        ));
    }
    out
}

fn fit_json(fit: &LineFit) -> String {
    JsonObject::new()
        .float("slope", fit.slope)
        .float("intercept", fit.intercept)
        .float("r2", fit.r2)
        .uint("points", fit.n as u64)
        .render()
}

fn fits_json(section: &GradflowSection, report: &SeparationReport, ratios_increasing: bool) -> String {
    JsonObject::new()
        .uint("k", section.k as u64)
        .uint("n", section.n as u64)
        .float("tail_sigma_max", section.tail_sigma_max)
        .uint("rows", report.rows.len() as u64)
        .uint("tail_rows", report.tail_rows as u64)
        .raw("reward_time_fit", fit_json(&report.reward_fit))
        .raw("ce_time_fit", fit_json(&report.ce_fit))
        .bool("tail_ratio_strictly_increasing", ratios_increasing)
        .float("slope_min", section.slope_min)
        .float("slope_max", section.slope_max)
        .float("min_r2", section.min_r2)
        .render()
        + "\n"
}
