//! `verify-bounds`: sweep randomized instances through every gradient-norm
//! inequality, write one JSONL row per check plus a summary, and gate on
//! zero violations.

use anyhow::Result;
use rftlab_core::bounds::{
    exponent_probe, run_sweep, BoundReport, ExponentProbeReport, SweepConfig, SweepSummary,
};
use rftlab_core::fmt::{fmt_f64, json_array, JsonObject};
use rftlab_core::instances::GeneratorConfig;

use crate::config::Config;
use crate::manifest::RunContext;

use super::Outcome;

pub fn run(config: &Config, ctx: &mut RunContext) -> Result<Outcome> {
    let section = &config.bounds;
    let generator = GeneratorConfig {
        size_range: (section.min_vocab, section.max_vocab),
        l_out_range: (1, section.max_l_out),
        ..GeneratorConfig::default()
    };
    let sweep_config = SweepConfig {
        count: section.instances,
        seed: config.seed,
        generator,
        deltas: section.deltas.clone(),
        lambdas: section.lambdas.clone(),
    };

    let summary = run_sweep(&sweep_config)?;
    let probe_config = SweepConfig { count: section.probe_instances, ..sweep_config.clone() };
    let probe = exponent_probe(&probe_config)?;

    ctx.write_file("checks.jsonl", &checks_jsonl(&summary.reports))?;
    ctx.write_file("probe.jsonl", &probe_jsonl(&probe))?;
    ctx.write_file("summary.json", &summary_json(&sweep_config, &summary, &probe))?;

    let violations = summary.total_violations();
    if violations == 0 {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::GateFailed(format!("{violations} bound violations")))
    }
}

fn report_json(report: &BoundReport) -> String {
    let mut object = JsonObject::new()
        .string("bound", report.kind.name())
        .uint("instance", report.instance as u64)
        .uint("l_out", report.components.l_out as u64)
        .float("gamma", report.components.gamma)
        .float("sigma", report.components.sigma);
    if let Some(tv) = report.components.tv {
        object = object.float("tv", tv);
    }
    if let Some(hyper) = report.components.hyper {
        object = object.float("hyper", hyper);
    }
    object
        .float("lhs", report.components.lhs)
        .float("rhs", report.components.rhs)
        .bool("holds", report.holds)
        .float("slack_ratio", report.slack_ratio)
        .render()
}

fn checks_jsonl(reports: &[BoundReport]) -> String {
    let mut out = String::new();
    for report in reports {
        out.push_str(&report_json(report));
        out.push('\n');
    }
    out
}

fn probe_jsonl(probe: &ExponentProbeReport) -> String {
    let mut out = String::new();
    for case in &probe.cases {
        out.push_str(
            &JsonObject::new()
                .uint("instance", case.instance as u64)
                .float("sigma", case.sigma)
                .float("lhs", case.lhs)
                .float("rhs_two_thirds", case.rhs_two_thirds)
                .float("rhs_linear", case.rhs_linear)
                .bool("two_thirds_holds", case.two_thirds_holds)
                .bool("linear_holds", case.linear_holds)
                .render(),
        );
        out.push('\n');
    }
    out
}

fn summary_json(
    config: &SweepConfig,
    summary: &SweepSummary,
    probe: &ExponentProbeReport,
) -> String {
    let kinds = summary.kinds.iter().map(|kind| {
        JsonObject::new()
            .string("bound", kind.kind.name())
            .uint("checked", kind.checked as u64)
            .uint("violations", kind.violations as u64)
            .float("max_slack", kind.max_slack)
            .float("median_slack", kind.median_slack)
            .render()
    });
    JsonObject::new()
        .uint("instances", config.count as u64)
        .uint("seed", config.seed)
        .raw("deltas", json_array(config.deltas.iter().map(|&d| fmt_f64(d))))
        .raw("lambdas", json_array(config.lambdas.iter().map(|&l| fmt_f64(l))))
        .uint("total_checks", summary.reports.len() as u64)
        .uint("total_violations", summary.total_violations() as u64)
        .raw("bounds", json_array(kinds))
        .raw(
            "exponent_probe",
            JsonObject::new()
                .uint("cases", probe.cases.len() as u64)
                .uint("two_thirds_violations", probe.two_thirds_violations as u64)
                .uint("linear_violations", probe.linear_violations as u64)
                .render(),
        )
        .render()
        + "\n"
}
